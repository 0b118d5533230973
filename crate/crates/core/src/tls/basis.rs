//! Low-dimensional interpolator basis for the joint solver.
//!
//! The solver searches for interpolation weights `w = C * alpha` instead of
//! letting all patch positions vary freely. The basis matrix `C` is built per
//! (CFA phase, center parity, target color) and encodes two structural rules:
//!
//! * the target-color sites contribute through a single lowpass column (a
//!   unit-sum indicator), so the constant image is always reproducible;
//! * every other color class contributes only zero-sum columns (de-meaned
//!   monomials in patch coordinates), so cross-channel intensity offsets
//!   cannot leak into the estimate, only local gradient structure can.
//!
//! Any weight vector in the column span therefore sums to zero over each
//! non-target color class by construction, which is the invariant the rest of
//! the solver leans on.

use nalgebra::{DMatrix, DVector};

use crate::raster::{BayerPhase, CfaColor};

/// Columns with post-orthogonalization norm below this fraction of their
/// original norm are treated as linearly dependent and dropped.
const DROP_TOL: f64 = 1e-10;

/// Interpolator basis for one (phase, center parity, target color) combination.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    c: DMatrix<f64>,
    target: CfaColor,
    site_colors: Vec<CfaColor>,
    side: usize,
}

impl BasisMatrix {
    /// Patch length `N` (number of rows of `C`).
    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    /// Basis dimension `L` (number of columns of `C`).
    pub fn l(&self) -> usize {
        self.c.ncols()
    }

    /// Patch side length.
    pub fn side(&self) -> usize {
        self.side
    }

    /// The color this basis estimates.
    pub fn target(&self) -> CfaColor {
        self.target
    }

    /// CFA color pattern of the patch positions, row major.
    pub fn site_colors(&self) -> &[CfaColor] {
        &self.site_colors
    }

    /// The basis matrix itself, `N x L`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Spectral norm of the basis matrix.
    ///
    /// Columns of different classes have disjoint support and columns within
    /// a class are orthogonalized, so the singular values are the column
    /// norms and the spectral norm is the largest of them.
    pub fn norm2(&self) -> f64 {
        (0..self.c.ncols())
            .map(|k| self.c.column(k).norm())
            .fold(0.0, f64::max)
    }

    /// Expands basis coefficients into patch-position weights `w = C * alpha`.
    pub fn weights(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.c * alpha
    }

    /// Sum of `w` over the sites of `class`, one diagnostic per color.
    ///
    /// For any `w` in the column span the non-target sums are zero up to
    /// rounding; the driver tracks the worst case as a solver health check.
    pub fn class_sums(&self, w: &DVector<f64>) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for (idx, color) in self.site_colors.iter().enumerate() {
            sums[color.index()] += w[idx];
        }
        sums
    }
}

/// CFA color at each position of a `side x side` window centered at `center`.
///
/// Positions are labeled by the phase pattern extended over all of Z^2, i.e.
/// purely by coordinate parity. Near image borders the mirror rule makes a
/// window position read a pixel whose physical color can differ from this
/// label; the solver accepts that mismatch on the outermost rows rather than
/// switching to a different geometry per border pixel.
pub fn window_site_colors(
    phase: BayerPhase,
    center: (usize, usize),
    side: usize,
) -> Vec<CfaColor> {
    assert!(side % 2 == 1 && side >= 3, "patch side must be odd and >= 3");
    let half = (side / 2) as i64;
    let (ci, cj) = (center.0 as i64, center.1 as i64);
    let mut colors = Vec::with_capacity(side * side);
    for m in -half..=half {
        for n in -half..=half {
            let pi = (ci + m).rem_euclid(2) as usize;
            let pj = (cj + n).rem_euclid(2) as usize;
            colors.push(phase.color_at(pi, pj));
        }
    }
    colors
}

/// Builds the basis for estimating `target` on a window with the given color
/// pattern. `site_colors` must have odd-square length and contain at least one
/// `target` site.
pub fn build_basis(site_colors: Vec<CfaColor>, target: CfaColor) -> BasisMatrix {
    let n = site_colors.len();
    let side = (n as f64).sqrt().round() as usize;
    assert_eq!(side * side, n, "site_colors length must be a square");
    assert!(side % 2 == 1, "patch side must be odd");
    let half = side as i64 / 2;

    let mut columns: Vec<DVector<f64>> = Vec::new();

    // Lowpass column: unit-sum indicator of the target sites.
    let target_count = site_colors.iter().filter(|&&c| c == target).count();
    assert!(target_count > 0, "window contains no target-color site");
    let mut c1 = DVector::zeros(n);
    for (idx, &color) in site_colors.iter().enumerate() {
        if color == target {
            c1[idx] = 1.0 / target_count as f64;
        }
    }
    columns.push(c1);

    // Per-class zero-sum columns from de-meaned coordinate monomials. The
    // constant monomial de-means to zero, so degree starts at 1.
    let monomials: [fn(f64, f64) -> f64; 5] = [
        |m, _| m,
        |_, n| n,
        |m, _| m * m,
        |m, n| m * n,
        |_, n| n * n,
    ];
    for &class in CfaColor::ALL.iter() {
        if class == target {
            continue;
        }
        let sites: Vec<usize> = site_colors
            .iter()
            .enumerate()
            .filter_map(|(idx, &c)| (c == class).then_some(idx))
            .collect();
        if sites.len() < 2 {
            // A single site (or none) admits no zero-sum column.
            continue;
        }
        let class_start = columns.len();
        for mono in monomials.iter() {
            let mut v = DVector::zeros(n);
            for &idx in &sites {
                let m = (idx / side) as i64 - half;
                let nn = (idx % side) as i64 - half;
                v[idx] = mono(m as f64, nn as f64);
            }
            let mean = sites.iter().map(|&idx| v[idx]).sum::<f64>() / sites.len() as f64;
            for &idx in &sites {
                v[idx] -= mean;
            }
            let initial_norm = v.norm();
            // Orthogonalize against this class's accepted columns. Other
            // classes have disjoint support, so they are orthogonal already.
            for prev in &columns[class_start..] {
                let proj = prev.dot(&v);
                v.axpy(-proj, prev, 1.0);
            }
            let norm = v.norm();
            if norm < DROP_TOL * initial_norm.max(1.0) {
                continue;
            }
            v /= norm;
            // Re-center to pin the zero-sum invariant against rounding drift.
            let residual = sites.iter().map(|&idx| v[idx]).sum::<f64>() / sites.len() as f64;
            for &idx in &sites {
                v[idx] -= residual;
            }
            columns.push(v);
        }
    }

    let l = columns.len();
    let mut c = DMatrix::zeros(n, l);
    for (k, col) in columns.into_iter().enumerate() {
        c.set_column(k, &col);
    }
    BasisMatrix {
        c,
        target,
        site_colors,
        side,
    }
}
