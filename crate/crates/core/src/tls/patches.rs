//! Training patch collection for the joint solver.
//!
//! For each output pixel and target color the solver learns interpolation
//! weights from nearby patches of the same CFA color class. Candidates are the
//! same-color sites whose surrounding patch stays inside the search window;
//! they are ranked nearest first, filtered to a transmission band around the
//! output pixel (so fog depth discontinuities do not mix training data from
//! different defog regimes), gated on radiometric similarity to the output
//! pixel, and truncated to a patch budget.

use nalgebra::{DMatrix, DVector};

use crate::cfa::Sublattice;
use crate::raster::{CfaImage, TransmissionMap};
use crate::tls::SolverConfig;

/// One assembled regression system: training patches plus the application
/// window at the output pixel.
#[derive(Debug, Clone)]
pub struct PatchSystem {
    /// `N x M` matrix whose columns are same-color training patches, read
    /// with stride 1 on the sublattice plane (stride 2 in image coordinates).
    pub patches: DMatrix<f64>,
    /// Stride-1 full-CFA window centered at the output pixel, row major.
    pub s0: DVector<f64>,
    /// Observed same-color values at the minimal-offset sites around the
    /// output pixel: its own value when it lies on the target sublattice,
    /// otherwise the two or four nearest sites of the target color. The gate
    /// and similarity weights compare candidate centers against the nearest
    /// of these.
    pub anchors: Vec<f64>,
    /// Per-position mean over the training patches.
    pub beta_prime: DVector<f64>,
    /// Mean of the training patch centers (`beta_prime` at the center index).
    pub gamma: f64,
    /// Transmission at each training patch's center site.
    pub t_values: Vec<f64>,
    /// Transmission at the output pixel.
    pub t_center: f64,
    /// Whether the transmission tolerance had to be doubled to reach the
    /// minimum patch count.
    pub widened: bool,
}

impl PatchSystem {
    /// Number of patch positions `N`.
    pub fn n(&self) -> usize {
        self.patches.nrows()
    }

    /// Number of training patches `M`.
    pub fn m(&self) -> usize {
        self.patches.ncols()
    }

    /// Row-major index of the patch center position.
    pub fn center_index(&self) -> usize {
        (self.n() - 1) / 2
    }

    /// Similarity weights `a_m = exp(-d_m^2 / kappa)` where `d_m` is the
    /// distance from each training patch center to its nearest anchor.
    pub fn weights(&self, kappa: f64) -> DVector<f64> {
        let c = self.center_index();
        DVector::from_fn(self.m(), |m, _| {
            let d2 = nearest_sq(&self.anchors, self.patches[(c, m)]);
            (-d2 / kappa).exp()
        })
    }
}

/// Smallest squared distance from `value` to any anchor.
fn nearest_sq(anchors: &[f64], value: f64) -> f64 {
    anchors
        .iter()
        .map(|&a| (a - value) * (a - value))
        .fold(f64::INFINITY, f64::min)
}

/// Reflects `x` into `[0, n)` about the boundary samples, preserving lattice
/// parity; the plain mirror fold would land odd offsets on the wrong CFA
/// color at image borders.
fn reflect_parity(x: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as i64;
    let mut x = x;
    loop {
        if x < 0 {
            x = -x;
        } else if x >= n {
            x = 2 * (n - 1) - x;
        } else {
            return x as usize;
        }
    }
}

/// Outcome of candidate collection at one output pixel.
#[derive(Debug)]
pub enum Collected {
    /// Enough same-transmission patches were found.
    System(PatchSystem),
    /// Fewer than `needed` candidates survived the transmission band (after
    /// one widening) or the radiometric gate; the caller should fall back.
    TooFew { found: usize, needed: usize },
}

/// Gathers the regression system for estimating `sub.color` at `center`.
///
/// Candidate sites are the sublattice sites within Chebyshev distance
/// `(search_side - patch_side) / 2` of the output pixel (so their patches fit
/// in the search window), in image bounds, sorted by squared Euclidean
/// distance with row-then-column tie-breaks. The transmission filter keeps
/// sites within `t_tolerance` of the output pixel's transmission, doubling
/// the tolerance once if fewer than `2 N` survive. Survivors then pass a
/// radiometric gate against the output pixel before the budget is applied;
/// fewer than `min_patches` gated survivors is a fallback.
pub fn collect_patches(
    h: &CfaImage,
    sub: &Sublattice,
    center: (usize, usize),
    t: &TransmissionMap,
    cfg: &SolverConfig,
) -> Collected {
    let (i, j) = center;
    let patch_half = cfg.patch_half();
    let reach = cfg.candidate_reach() as i64;
    let n = cfg.patch_side * cfg.patch_side;
    let needed = 2 * n;

    let (oi, oj) = (sub.origin.0 as i64, sub.origin.1 as i64);
    let lo_i = (i as i64 - reach).max(0);
    let hi_i = (i as i64 + reach).min(sub.image_height() as i64 - 1);
    let lo_j = (j as i64 - reach).max(0);
    let hi_j = (j as i64 + reach).min(sub.image_width() as i64 - 1);
    let u_min = (lo_i - oi + 1).div_euclid(2).max(0);
    let u_max = (hi_i - oi).div_euclid(2);
    let v_min = (lo_j - oj + 1).div_euclid(2).max(0);
    let v_max = (hi_j - oj).div_euclid(2);

    // (d^2, site_i, site_j, u, v) per candidate.
    let mut candidates: Vec<(i64, i64, i64, usize, usize)> = Vec::new();
    for u in u_min..=u_max {
        let si = oi + 2 * u;
        for v in v_min..=v_max {
            let sj = oj + 2 * v;
            let di = si - i as i64;
            let dj = sj - j as i64;
            candidates.push((di * di + dj * dj, si, sj, u as usize, v as usize));
        }
    }
    candidates.sort_unstable();

    let t_center = t.get(i, j);
    let mut tolerance = cfg.t_tolerance;
    let within = |tol: f64| {
        candidates
            .iter()
            .filter(|&&(_, si, sj, _, _)| (t.get(si as usize, sj as usize) - t_center).abs() <= tol)
            .count()
    };
    let mut widened = false;
    if within(tolerance) < needed {
        tolerance *= 2.0;
        widened = true;
        if within(tolerance) < needed {
            return Collected::TooFew {
                found: within(tolerance),
                needed,
            };
        }
    }

    // Anchors are the observed target-color values nearest the output pixel:
    // the pixel itself when it lies on the target sublattice, otherwise the
    // flanking sites along each misaligned axis. Every anchor is a real
    // observation, so a candidate agreeing with any of them belongs to a
    // population that is locally present; committing to a single anchor
    // would instead pick a side at every radiometric boundary and poison the
    // training set for the pixels on the other side.
    let di_set: &[i64] = if (i as i64 - oi).rem_euclid(2) == 0 {
        &[0]
    } else {
        &[-1, 1]
    };
    let dj_set: &[i64] = if (j as i64 - oj).rem_euclid(2) == 0 {
        &[0]
    } else {
        &[-1, 1]
    };
    let mut anchors = Vec::with_capacity(di_set.len() * dj_set.len());
    let mut offsets = Vec::with_capacity(di_set.len() * dj_set.len());
    for &di in di_set {
        for &dj in dj_set {
            let ai = reflect_parity(i as i64 + di, h.plane.height());
            let aj = reflect_parity(j as i64 + dj, h.plane.width());
            anchors.push(h.plane.get(ai, aj));
            offsets.push((di, dj));
        }
    }
    let radius = cfg.similarity_cut * cfg.kappa;

    // Conflicting anchors mean the pixel sits on a target-channel boundary
    // and only the anchors on its own side describe its population. Strips
    // read the side from every channel at once: the three samples through
    // the pixel along the boundary direction are compared against the
    // same-parity strips two sites to either flank, which lines the
    // comparison up channel for channel. A decisively closer flank keeps
    // only that side's anchors, so the side is found even where the pixel's
    // own channel is flat. Conflicts the strips cannot settle fall to the
    // pixel's own value, which covers near-achromatic boundaries; failing
    // that too, the conflict stands and both populations stay in.
    let spread = |anchors: &[f64]| {
        anchors.iter().fold(0.0f64, |acc, &a| {
            anchors.iter().fold(acc, |m, &b| m.max((a - b) * (a - b)))
        })
    };
    if spread(&anchors) > radius {
        let sample = |r: i64, c: i64| {
            h.plane.get(
                reflect_parity(r, h.plane.height()),
                reflect_parity(c, h.plane.width()),
            )
        };
        let row_strip = |r: i64| [-1i64, 0, 1].map(|d| sample(r, j as i64 + d));
        let col_strip = |c: i64| [-1i64, 0, 1].map(|d| sample(i as i64 + d, c));
        let ssd = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let side = |d_lo: f64, d_hi: f64| -> Option<i64> {
            if d_lo + radius < d_hi {
                Some(-1)
            } else if d_hi + radius < d_lo {
                Some(1)
            } else {
                None
            }
        };
        let row_side = (di_set.len() == 2).then(|| {
            let own = row_strip(i as i64);
            side(
                ssd(&own, &row_strip(i as i64 - 2)),
                ssd(&own, &row_strip(i as i64 + 2)),
            )
        }).flatten();
        let col_side = (dj_set.len() == 2).then(|| {
            let own = col_strip(j as i64);
            side(
                ssd(&own, &col_strip(j as i64 - 2)),
                ssd(&own, &col_strip(j as i64 + 2)),
            )
        }).flatten();
        let kept: Vec<f64> = anchors
            .iter()
            .copied()
            .zip(offsets.iter())
            .filter(|&(_, &(di, dj))| {
                row_side.map_or(true, |s| di == s) && col_side.map_or(true, |s| dj == s)
            })
            .map(|(a, _)| a)
            .collect();
        if !kept.is_empty() {
            anchors = kept;
        }
        if spread(&anchors) > radius {
            let v0 = h.plane.get(i, j);
            let matching: Vec<f64> = anchors
                .iter()
                .copied()
                .filter(|&a| (a - v0) * (a - v0) <= radius)
                .collect();
            if !matching.is_empty() {
                anchors = matching;
            }
        }
    }

    // Radiometric gate in the target channel: candidates whose center sits
    // far from every anchor would receive negligible similarity weight yet
    // still bias the unweighted patch means, so they are dropped outright.
    // Centers alone are compared because the training patches are single
    // color; populations that agree in this channel pool harmlessly. The cut
    // is in units of kappa so one scale governs both gate and weights.
    let mut selected: Vec<(usize, usize, usize, usize)> = Vec::new();
    for &(_, si, sj, u, v) in candidates.iter() {
        if (t.get(si as usize, sj as usize) - t_center).abs() > tolerance {
            continue;
        }
        if nearest_sq(&anchors, h.plane.get(si as usize, sj as usize)) > radius {
            continue;
        }
        selected.push((si as usize, sj as usize, u, v));
        if selected.len() == cfg.max_patches {
            break;
        }
    }
    if selected.len() < cfg.min_patches {
        return Collected::TooFew {
            found: selected.len(),
            needed: cfg.min_patches,
        };
    }

    let m_count = selected.len();
    let mut patches = DMatrix::zeros(n, m_count);
    let mut t_values = Vec::with_capacity(m_count);
    for (col, &(si, sj, u, v)) in selected.iter().enumerate() {
        let values = sub.plane.patch((u, v), patch_half, 1);
        patches.set_column(col, &DVector::from_vec(values));
        t_values.push(t.get(si, sj));
    }

    let center_idx = (n - 1) / 2;
    let beta_prime = DVector::from_fn(n, |p, _| patches.row(p).sum() / m_count as f64);
    let gamma = beta_prime[center_idx];

    let s0 = DVector::from_vec(h.plane.patch((i, j), patch_half, 1));

    Collected::System(PatchSystem {
        patches,
        s0,
        anchors,
        beta_prime,
        gamma,
        t_values,
        t_center,
        widened,
    })
}
