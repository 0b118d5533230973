//! Joint defogging and demosaicking by patch-based constrained total least
//! squares.
//!
//! Each output value is regressed from the raw mosaic window around the
//! pixel. The regression weights live in a color-structured basis (module
//! [`basis`]), are trained on nearby same-color patches filtered to a common
//! transmission band (module [`patches`]), and come out of an eigensolve on
//! fog-corrected covariances (module [`solve`]). Estimating all three colors
//! this way defogs and demosaicks in one pass, in sensor units, before any
//! display processing.
//!
//! Pixels whose regression cannot be trusted (too few same-transmission
//! patches, a degenerate eigenvector, or an estimate far outside the signal
//! range) fall back to bilinear demosaicking plus per-pixel defogging and are
//! counted; the fallback rate is part of the result.

pub mod basis;
pub mod patches;
pub mod reference;
pub mod solve;

use rayon::prelude::*;

use crate::cfa::{bilinear_demosaick, sublattices, Sublattice};
use crate::error::{Error, Result};
use crate::fog::defog_sample;
use crate::raster::{CfaColor, CfaImage, ColorImage, TransmissionMap};
use crate::tls::basis::{build_basis, window_site_colors, BasisMatrix};
use crate::tls::patches::{collect_patches, Collected};
use crate::tls::solve::{
    compose_q, correct_covariances, covariance_s, estimate_pixel, noise_tie_window,
    plausibility_clamp, solve_alpha,
    AlphaOutcome,
};

/// Tuning knobs of the joint solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Side length of the square patches, odd.
    pub patch_side: usize,
    /// Side length of the search window around each output pixel, odd.
    pub search_side: usize,
    /// Upper bound on the number of training patches per system.
    pub max_patches: usize,
    /// Transmission band half-width for candidate filtering.
    pub t_tolerance: f64,
    /// Length scale of the patch similarity weights.
    pub kappa: f64,
    /// Radiometric gate: candidates whose squared center distance from the
    /// window-matched anchor exceeds `similarity_cut * kappa` are dropped
    /// before the means are formed.
    pub similarity_cut: f64,
    /// Minimum surviving patches after the radiometric gate; below this the
    /// pixel falls back.
    pub min_patches: usize,
    /// Physical ceiling on reconstructed per-site variance, in normalized
    /// units; quarter-range for values in [0, 1].
    pub var_cap: f64,
    /// Scale on the statistical eigenvalue tie window. Directions of `Q`
    /// whose eigenvalues differ by less than the sampling fluctuation of the
    /// noise correction are treated as tied and resolved toward the smallest
    /// coefficient norm. Zero restores exact-tie behavior.
    pub tie_scale: f64,
    /// Weight of the fog-free center equation relative to the foggy
    /// evidence.
    pub b_last: f64,
    /// Transmission floor shared with the defog formula.
    pub epsilon: f64,
    /// Estimates below this bound are rejected as outliers.
    pub outlier_low: f64,
    /// Estimates above this bound are rejected as outliers.
    pub outlier_high: f64,
    /// Threshold on the eigenvector's last component below which the system
    /// counts as degenerate.
    pub null_tol: f64,
    /// Whether to track worst-case basis constraint sums while solving.
    pub collect_constraint_stats: bool,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            patch_side: 5,
            search_side: 25,
            max_patches: 121,
            t_tolerance: 0.1,
            kappa: 0.01,
            similarity_cut: 2.0,
            min_patches: 12,
            var_cap: 0.25,
            tie_scale: 1.0,
            b_last: 1.0,
            epsilon: 0.01,
            outlier_low: -0.25,
            outlier_high: 1.25,
            null_tol: 1e-8,
            collect_constraint_stats: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side % 2 == 0 || self.patch_side < 3 {
            return Err(Error::parameter(format!(
                "patch side must be odd and at least 3, got {}",
                self.patch_side
            )));
        }
        if self.search_side % 2 == 0 || self.search_side < self.patch_side {
            return Err(Error::parameter(format!(
                "search side must be odd and at least the patch side, got {}",
                self.search_side
            )));
        }
        if self.max_patches == 0 {
            return Err(Error::parameter("patch budget must be positive"));
        }
        if self.min_patches < 2 || self.min_patches > self.max_patches {
            return Err(Error::parameter(format!(
                "min patches must lie in [2, max_patches], got {}",
                self.min_patches
            )));
        }
        for (name, v) in [
            ("t_tolerance", self.t_tolerance),
            ("kappa", self.kappa),
            ("similarity_cut", self.similarity_cut),
            ("var_cap", self.var_cap),
            ("b_last", self.b_last),
            ("null_tol", self.null_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.tie_scale.is_finite() || self.tie_scale < 0.0 {
            return Err(Error::parameter(format!(
                "tie scale must be finite and nonnegative, got {}",
                self.tie_scale
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon > 1.0 {
            return Err(Error::parameter(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.outlier_low < self.outlier_high) {
            return Err(Error::parameter(format!(
                "outlier bounds must be ordered, got [{}, {}]",
                self.outlier_low, self.outlier_high
            )));
        }
        Ok(())
    }

    /// Patch half-width.
    pub fn patch_half(&self) -> usize {
        (self.patch_side - 1) / 2
    }

    /// Search half-width.
    pub fn search_half(&self) -> usize {
        (self.search_side - 1) / 2
    }

    /// Chebyshev reach for candidate centers: their patches must fit inside
    /// the search window.
    pub fn candidate_reach(&self) -> usize {
        self.search_half() - self.patch_half()
    }

    /// Patch length `N`.
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }
}

/// Worst-case deviation of solved weight vectors from the basis class-sum
/// structure, across all systems of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstraintStats {
    /// Largest absolute sum of weights over a non-target color class.
    pub max_abs_class_sum: f64,
    /// Number of solved systems inspected.
    pub systems_checked: usize,
}

impl ConstraintStats {
    fn merge(&mut self, other: &ConstraintStats) {
        self.max_abs_class_sum = self.max_abs_class_sum.max(other.max_abs_class_sum);
        self.systems_checked += other.systems_checked;
    }
}

/// Output of the joint solver.
#[derive(Debug, Clone)]
pub struct JointResult {
    /// Restored fog-free image in linear sensor units.
    pub image: ColorImage,
    /// Estimates that had to fall back to bilinear plus defog.
    pub fallback_count: usize,
    /// Total estimates attempted: three per pixel.
    pub estimate_count: usize,
    /// Systems whose transmission tolerance was doubled.
    pub widened_count: usize,
    /// Present when the run collected constraint diagnostics.
    pub constraint_stats: Option<ConstraintStats>,
}

impl JointResult {
    /// Fraction of estimates served by the fallback path.
    pub fn fallback_rate(&self) -> f64 {
        self.fallback_count as f64 / self.estimate_count as f64
    }
}

enum SystemOutcome {
    Estimate { value: f64, widened: bool },
    Rejected,
}

#[allow(clippy::too_many_arguments)]
fn solve_system(
    h: &CfaImage,
    sub: &Sublattice,
    center: (usize, usize),
    t: &TransmissionMap,
    basis: &BasisMatrix,
    airlight: f64,
    sensor_floor: f64,
    cfg: &SolverConfig,
    stats: &mut ConstraintStats,
) -> SystemOutcome {
    let sys = match collect_patches(h, sub, center, t, cfg) {
        Collected::System(sys) => sys,
        Collected::TooFew { .. } => return SystemOutcome::Rejected,
    };
    let a = sys.weights(cfg.kappa);
    let sigma_s = covariance_s(&sys.patches, &sys.beta_prime, &a);
    let corr = correct_covariances(&sigma_s, &sys.t_values, &a, sensor_floor, cfg.epsilon, cfg.var_cap);
    let c_idx = sys.center_index();
    let sigma_sxc = corr.cross_column(c_idx);
    let sigma_xc = corr.center_variance(c_idx);
    let q = compose_q(&sigma_s, &sigma_sxc, sigma_xc, basis, cfg.b_last);
    let tie_window = cfg.tie_scale
        * noise_tie_window(
            &a,
            sensor_floor,
            corr.t_bar,
            sys.patches.nrows(),
            cfg.b_last,
            basis.norm2(),
        );
    let alpha = match solve_alpha(&q, cfg.b_last, cfg.null_tol, tie_window) {
        AlphaOutcome::Solved { alpha, .. } => alpha,
        AlphaOutcome::Degenerate(_) => return SystemOutcome::Rejected,
    };
    let value = estimate_pixel(&sys, basis, &alpha, airlight, corr.t_bar, cfg.epsilon);
    // Slack maps the gate tolerance through the same defog scaling as the
    // anchors themselves.
    let slack = (cfg.similarity_cut * cfg.kappa).sqrt() / corr.t_bar.max(cfg.epsilon);
    let value = plausibility_clamp(
        value,
        &sys.anchors,
        airlight,
        corr.t_bar,
        cfg.epsilon,
        slack,
    );
    if !value.is_finite() || value < cfg.outlier_low || value > cfg.outlier_high {
        return SystemOutcome::Rejected;
    }
    if cfg.collect_constraint_stats {
        let w = basis.weights(&alpha);
        let sums = basis.class_sums(&w);
        for color in CfaColor::ALL {
            if color != basis.target() {
                stats.max_abs_class_sum = stats.max_abs_class_sum.max(sums[color.index()].abs());
            }
        }
        stats.systems_checked += 1;
    }
    SystemOutcome::Estimate {
        value,
        widened: sys.widened,
    }
}

/// Restores a fog-free color image from a foggy raw mosaic in one pass.
///
/// `t` is the per-pixel transmission estimate, `airlight` the scalar
/// atmospheric light in sensor units, and `sensor_floor` the per-sample
/// noise variance used by the covariance correction. Green pixels on green
/// sites use the sublattice that contains them; elsewhere both green origins
/// are solved and their estimates averaged. Rejected systems fall back to
/// bilinear demosaicking plus per-pixel defogging.
pub fn joint_defog_demosaick(
    h: &CfaImage,
    t: &TransmissionMap,
    airlight: f64,
    sensor_floor: f64,
    cfg: &SolverConfig,
) -> Result<JointResult> {
    cfg.validate()?;
    let (width, height) = (h.width(), h.height());
    if t.plane().width() != width || t.plane().height() != height {
        return Err(Error::dimension(format!(
            "transmission map {}x{} does not match mosaic {}x{}",
            t.plane().width(),
            t.plane().height(),
            width,
            height
        )));
    }
    if !airlight.is_finite() || airlight <= 0.0 {
        return Err(Error::parameter(format!(
            "airlight must be positive, got {airlight}"
        )));
    }
    if !sensor_floor.is_finite() || sensor_floor < 0.0 {
        return Err(Error::parameter(format!(
            "sensor noise floor must be nonnegative, got {sensor_floor}"
        )));
    }

    let fallback = bilinear_demosaick(h);
    let subs = [
        sublattices(h, CfaColor::R)?,
        sublattices(h, CfaColor::G)?,
        sublattices(h, CfaColor::B)?,
    ];
    let mut g_by_parity = [[usize::MAX; 2]; 2];
    for (idx, sub) in subs[CfaColor::G.index()].iter().enumerate() {
        g_by_parity[sub.origin.0][sub.origin.1] = idx;
    }
    let bases: Vec<BasisMatrix> = CfaColor::ALL
        .iter()
        .flat_map(|&color| {
            (0..4).map(move |p| (color, (p / 2, p % 2)))
        })
        .map(|(color, parity)| {
            build_basis(window_site_colors(h.phase, parity, cfg.patch_side), color)
        })
        .collect();
    let basis_at =
        |c: usize, i: usize, j: usize| &bases[c * 4 + (i % 2) * 2 + (j % 2)];

    struct RowOut {
        pixels: Vec<[f64; 3]>,
        fallbacks: usize,
        widened: usize,
        stats: ConstraintStats,
    }

    let rows: Vec<RowOut> = (0..height)
        .into_par_iter()
        .map(|i| {
            let mut row = RowOut {
                pixels: Vec::with_capacity(width),
                fallbacks: 0,
                widened: 0,
                stats: ConstraintStats::default(),
            };
            for j in 0..width {
                let mut px = [0.0f64; 3];
                for color in CfaColor::ALL {
                    let c = color.index();
                    let basis = basis_at(c, i, j);
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    let own_green = color == CfaColor::G && h.color_at(i, j) == CfaColor::G;
                    let chosen: &[Sublattice] = if own_green {
                        let idx = g_by_parity[i % 2][j % 2];
                        std::slice::from_ref(&subs[c][idx])
                    } else {
                        &subs[c]
                    };
                    for sub in chosen {
                        match solve_system(
                            h,
                            sub,
                            (i, j),
                            t,
                            basis,
                            airlight,
                            sensor_floor,
                            cfg,
                            &mut row.stats,
                        ) {
                            SystemOutcome::Estimate { value, widened } => {
                                sum += value;
                                count += 1;
                                if widened {
                                    row.widened += 1;
                                }
                            }
                            SystemOutcome::Rejected => {}
                        }
                    }
                    px[c] = if count > 0 {
                        sum / count as f64
                    } else {
                        row.fallbacks += 1;
                        defog_sample(fallback.get(i, j)[c], t.get(i, j), airlight, cfg.epsilon)
                    };
                }
                row.pixels.push(px);
            }
            row
        })
        .collect();

    let mut data = Vec::with_capacity(width * height);
    let mut fallback_count = 0;
    let mut widened_count = 0;
    let mut stats = ConstraintStats::default();
    for row in rows {
        data.extend_from_slice(&row.pixels);
        fallback_count += row.fallbacks;
        widened_count += row.widened;
        stats.merge(&row.stats);
    }
    let image = ColorImage::from_vec(width, height, data)?;
    Ok(JointResult {
        image,
        fallback_count,
        estimate_count: 3 * width * height,
        widened_count,
        constraint_stats: cfg.collect_constraint_stats.then_some(stats),
    })
}
