//! Covariance assembly, fog correction, and the constrained TLS eigensolve.
//!
//! The pipeline per output pixel is: weighted patch covariance, correction of
//! the covariances from foggy to fog-free units (undoing the transmission
//! scaling and the sensor noise floor), composition of the reduced quadratic
//! form `Q` in basis coordinates, and extraction of the regression
//! coefficients from the eigenvector of the smallest eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::tls::basis::BasisMatrix;
use crate::tls::patches::PatchSystem;

/// Fog-free covariance estimates recovered from foggy patch statistics.
#[derive(Debug, Clone)]
pub struct CorrectedCovariances {
    /// Estimated fog-free patch covariance, positive semidefinite.
    pub sigma_x: DMatrix<f64>,
    /// Weighted mean transmission of the training patches, floored at the
    /// defog epsilon. Scales `sigma_x` back into cross terms.
    pub t_bar: f64,
}

impl CorrectedCovariances {
    /// Cross-covariance column between the foggy patches and the fog-free
    /// center value: `t_bar` times the corresponding column of `sigma_x`.
    pub fn cross_column(&self, center_idx: usize) -> DVector<f64> {
        let mut col = DVector::from_column_slice(self.sigma_x.column(center_idx).as_slice());
        col *= self.t_bar;
        col
    }

    /// Variance estimate of the fog-free center value.
    pub fn center_variance(&self, center_idx: usize) -> f64 {
        self.sigma_x[(center_idx, center_idx)]
    }
}

/// Weighted scatter matrix `(S - beta' 1^T) A^2 (S - beta' 1^T)^T`.
///
/// Unnormalized: entries scale with the effective patch count, and the
/// correction and composition steps stay in the same convention throughout.
pub fn covariance_s(
    patches: &DMatrix<f64>,
    beta_prime: &DVector<f64>,
    a: &DVector<f64>,
) -> DMatrix<f64> {
    let mut z = patches.clone();
    for (m, mut col) in z.column_iter_mut().enumerate() {
        col -= beta_prime;
        col *= a[m];
    }
    &z * z.transpose()
}

/// Recovers fog-free covariance estimates from the foggy scatter matrix.
///
/// Model: each training patch was scaled by its transmission and offset by
/// airlight, then hit by sensor noise with per-sample variance
/// `sensor_floor`. De-meaning removed the offsets, so the scatter decomposes
/// as `t^2 * scatter_x + noise`. The noise contributes `sensor_floor` per
/// unit of squared weight on the diagonal; subtracting it and dividing by the
/// squared weighted mean transmission undoes the fog damping. Eigenvalue
/// clipping restores positive semidefiniteness lost to the subtraction.
///
/// At low transmission the division amplifies the sampling error of the
/// scatter itself, which can claim per-site variances far beyond what values
/// in [0, 1] admit. A diagonal congruence scales those sites back to
/// `var_cap` (in normalized units; a quarter-range default). The congruence
/// keeps the matrix positive semidefinite and leaves physically plausible
/// reconstructions untouched.
pub fn correct_covariances(
    sigma_s: &DMatrix<f64>,
    t_values: &[f64],
    a: &DVector<f64>,
    sensor_floor: f64,
    epsilon: f64,
    var_cap: f64,
) -> CorrectedCovariances {
    let mass: f64 = a.iter().map(|&w| w * w).sum();
    let t_bar_raw = a
        .iter()
        .zip(t_values.iter())
        .map(|(&w, &t)| w * w * t)
        .sum::<f64>()
        / mass;
    let t_bar = t_bar_raw.max(epsilon);

    let n = sigma_s.nrows();
    let mut m = sigma_s.clone();
    for d in 0..n {
        m[(d, d)] -= mass * sensor_floor;
    }
    m /= t_bar * t_bar;
    let mut sigma_x = clip_psd(&m);

    // The scatter is unnormalized, so the physical bound scales with the
    // weight mass.
    let cap = mass * var_cap;
    let shrink = DVector::from_fn(n, |p, _| {
        let d = sigma_x[(p, p)];
        if d > cap {
            (cap / d).sqrt()
        } else {
            1.0
        }
    });
    for r in 0..n {
        for c in 0..n {
            sigma_x[(r, c)] *= shrink[r] * shrink[c];
        }
    }

    CorrectedCovariances { sigma_x, t_bar }
}

/// Nearest positive semidefinite matrix under eigenvalue clipping: negative
/// eigenvalues of the symmetrized input are set to zero.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Composes the reduced quadratic form `Q` in basis coordinates.
///
/// `Q = B^T blockdiag(C^T, 1) J blockdiag(C, 1) B` where `J` stacks the
/// foggy scatter with the cross column and center variance, and
/// `B = diag(1, ..., 1, b_last)` down-weights the equation balancing the
/// foggy evidence against the estimated fog-free center.
pub fn compose_q(
    sigma_s: &DMatrix<f64>,
    sigma_sxc: &DVector<f64>,
    sigma_xc: f64,
    basis: &BasisMatrix,
    b_last: f64,
) -> DMatrix<f64> {
    let c = basis.matrix();
    let g_top = c.transpose() * sigma_s * c;
    let g_vec = c.transpose() * sigma_sxc;
    let l = basis.l();
    let mut q = DMatrix::zeros(l + 1, l + 1);
    q.view_mut((0, 0), (l, l)).copy_from(&g_top);
    for k in 0..l {
        let v = b_last * g_vec[k];
        q[(k, l)] = v;
        q[(l, k)] = v;
    }
    q[(l, l)] = b_last * b_last * sigma_xc;
    // Symmetrize: g_top carries rounding asymmetry from the two gemms.
    let qt = q.transpose();
    (q + qt) * 0.5
}

/// Eigenvalue window inside which directions of `Q` count as statistically
/// tied, in `Q` units.
///
/// The covariance correction subtracts the expected sensor-noise scatter, but
/// its sampling fluctuation survives and is amplified by `1 / t_bar` in the
/// cross column and `1 / t_bar^2` in the center variance. Eigenvalues of `Q`
/// that differ by less than this fluctuation carry no evidence about which
/// direction fits better, so the solver is free to prefer the bounded one.
/// The three terms bound the spectral perturbation of the patch block, the
/// cross column, and the center corner; `c_norm` is the spectral norm of the
/// basis matrix and `n` the patch length. Zero noise gives a zero window,
/// which makes the eigensolve classical.
pub fn noise_tie_window(
    a: &DVector<f64>,
    sensor_floor: f64,
    t_bar: f64,
    n: usize,
    b_last: f64,
    c_norm: f64,
) -> f64 {
    let quart: f64 = a.iter().map(|&w| w * w * w * w).sum();
    let u = sensor_floor * (2.0 * quart).sqrt();
    let s = (n as f64).sqrt();
    let t = t_bar.max(f64::MIN_POSITIVE);
    u * (2.0 * s * c_norm * c_norm + 2.0 * b_last * c_norm * s / t + b_last * b_last / (t * t))
}

/// Why an eigensolve produced no usable coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum DegenerateReason {
    /// The minimizing eigenvector has (numerically) zero weight on the
    /// fog-free center equation, so the coefficient ratio is undefined.
    NullLastComponent,
}

/// Result of the constrained TLS eigensolve.
#[derive(Debug, Clone)]
pub enum AlphaOutcome {
    Solved {
        alpha: DVector<f64>,
        /// Smallest eigenvalue of `Q`; the TLS residual energy.
        min_eigenvalue: f64,
    },
    Degenerate(DegenerateReason),
}

/// Extracts basis coefficients from the minimizing eigenvector of `Q`:
/// `alpha_l = -b_l v_l / (b_last v_last)`.
///
/// Eigenvalues within `tie_window` of the smallest (never less than a `1e-12`
/// relative band for exact ties) span a subspace of statistically equivalent
/// fits. Within that span the solver takes the unit vector with the largest
/// absolute last component, which is the normalized projection of the last
/// coordinate axis onto the span. That choice minimizes the coefficient norm
/// over the tied directions, reduces to the classical smallest eigenvector
/// when the minimum is simple, and is invariant to how the backend orients or
/// orders degenerate eigenpairs.
pub fn solve_alpha(
    q: &DMatrix<f64>,
    b_last: f64,
    null_tol: f64,
    tie_window: f64,
) -> AlphaOutcome {
    let dim = q.nrows();
    debug_assert_eq!(dim, q.ncols());
    let sym = (q + q.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    let mut min_val = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for &l in eig.eigenvalues.iter() {
        min_val = min_val.min(l);
        max_abs = max_abs.max(l.abs());
    }
    let tie_band = tie_window.max(1e-12 * max_abs.max(1e-300));

    // Projection of the last axis onto the tied span: v* = sum v_k[last] v_k.
    // Each term is quadratic in v_k, so backend sign flips cancel.
    let last = dim - 1;
    let mut v_star = DVector::zeros(dim);
    let mut rayleigh = 0.0;
    for k in 0..dim {
        if eig.eigenvalues[k] <= min_val + tie_band {
            let c = eig.eigenvectors[(last, k)];
            v_star.axpy(c, &eig.eigenvectors.column(k).clone_owned(), 1.0);
            rayleigh += c * c * eig.eigenvalues[k];
        }
    }
    let p_norm = v_star.norm();
    if p_norm < null_tol {
        return AlphaOutcome::Degenerate(DegenerateReason::NullLastComponent);
    }
    v_star /= p_norm;
    rayleigh /= p_norm * p_norm;

    let denom = b_last * v_star[last];
    let alpha = DVector::from_fn(last, |l, _| -v_star[l] / denom);
    AlphaOutcome::Solved {
        alpha,
        min_eigenvalue: rayleigh,
    }
}

/// Applies solved coefficients at the output pixel.
///
/// The AC part regresses the de-meaned application window onto the fog-free
/// center; the DC part defogs the patch-center mean explicitly.
pub fn estimate_pixel(
    system: &PatchSystem,
    basis: &BasisMatrix,
    alpha: &DVector<f64>,
    airlight: f64,
    t_bar: f64,
    epsilon: f64,
) -> f64 {
    let w = basis.weights(alpha);
    let residual = (&system.s0 - &system.beta_prime).dot(&w);
    let gamma_defogged = (system.gamma - airlight) / t_bar.max(epsilon) + airlight;
    residual + gamma_defogged
}

/// Bounds an estimate by the defogged range of the observed anchor values.
///
/// A reconstructed value outside the span of every adjacent same-color
/// observation is extrapolation; the regression can produce it when its
/// training mix straddles a radiometric boundary. `slack` absorbs noise and
/// texture variation between the anchor sites and the output pixel.
pub fn plausibility_clamp(
    estimate: f64,
    anchors: &[f64],
    airlight: f64,
    t_bar: f64,
    epsilon: f64,
    slack: f64,
) -> f64 {
    let t = t_bar.max(epsilon);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &a in anchors {
        let defogged = (a - airlight) / t + airlight;
        lo = lo.min(defogged);
        hi = hi.max(defogged);
    }
    if lo > hi {
        return estimate;
    }
    estimate.clamp(lo - slack, hi + slack)
}
