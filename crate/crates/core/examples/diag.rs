//! Throwaway diagnostic: classify solver rejections on a foggy scene.

use rawfog_core::cfa::sublattices;
use rawfog_core::fog::{FogParams, NoiseParams, DEFAULT_EPSILON};
use rawfog_core::raster::{BayerPhase, CfaColor};
use rawfog_core::scene::{builtin_layouts, synthesize, SceneSpec};
use rawfog_core::tls::basis::{build_basis, window_site_colors};
use rawfog_core::tls::patches::{collect_patches, Collected};
use rawfog_core::tls::solve::{
    compose_q, correct_covariances, covariance_s, estimate_pixel, noise_tie_window, solve_alpha,
    AlphaOutcome,
};
use rawfog_core::tls::SolverConfig;

fn main() {
    let beta: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.02);
    let (layout, depth) = builtin_layouts("textured-blocks").unwrap();
    let spec = SceneSpec {
        width: 96,
        height: 96,
        layout,
        depth,
        fog: FogParams::new(beta, [0.8; 3], DEFAULT_EPSILON).unwrap(),
        noise: NoiseParams::new(0.01, 1).unwrap(),
        gain: 1000.0,
        phase: BayerPhase::Rggb,
    };
    let noiseless = std::env::args().nth(2).as_deref() == Some("noiseless".into());
    let bundle = synthesize(&spec).unwrap();
    let floor = if noiseless {
        1e-12
    } else {
        0.8 / 1000.0 + 0.01 * 0.01
    };
    let kappa: f64 = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.01);
    let cfg = SolverConfig {
        b_last: 0.5,
        kappa,
        ..SolverConfig::default()
    };

    let clean_mosaic;
    let h = if noiseless {
        clean_mosaic = rawfog_core::cfa::mosaic(&bundle.y, spec.phase);
        &clean_mosaic
    } else {
        &bundle.h
    };
    let t = &bundle.t;
    let mut too_few = 0usize;
    let mut degenerate = 0usize;
    let mut outlier = 0usize;
    let mut ok = 0usize;
    let mut outlier_samples: Vec<(usize, usize, CfaColor, f64, f64)> = Vec::new();
    let mut est_min = f64::INFINITY;
    let mut est_max = f64::NEG_INFINITY;
    // Outlier counts split by border ring depth and magnitude class.
    let mut out_border = 0usize; // within 2 of an edge
    let mut out_near = 0usize; // within 3..6 of an edge
    let mut out_interior = 0usize;
    let mut out_mild = 0usize; // |est| <= 3
    let mut out_wild = 0usize; // |est| > 3
    let mut interior_rows = std::collections::BTreeMap::<usize, usize>::new();
    let mut interior_cols = std::collections::BTreeMap::<usize, usize>::new();
    let mut interior_samples: Vec<(usize, usize, CfaColor, f64, f64)> = Vec::new();
    let mut outlier_spectra = 0usize;
    let mut deep_dump = 20usize;

    for color in CfaColor::ALL {
        let subs = sublattices(h, color).unwrap();
        for i in 0..h.height() {
            for j in 0..h.width() {
                let own_green = color == CfaColor::G && h.color_at(i, j) == CfaColor::G;
                let basis = build_basis(window_site_colors(h.phase, (i % 2, j % 2), 5), color);
                for sub in &subs {
                    if own_green && sub.origin != (i % 2, j % 2) {
                        continue;
                    }
                    let sys = match collect_patches(h, sub, (i, j), t, &cfg) {
                        Collected::System(s) => s,
                        Collected::TooFew { .. } => {
                            too_few += 1;
                            continue;
                        }
                    };
                    let a = sys.weights(cfg.kappa);
                    let sigma_s = covariance_s(&sys.patches, &sys.beta_prime, &a);
                    let corr = correct_covariances(&sigma_s, &sys.t_values, &a, floor, cfg.epsilon, cfg.var_cap);
                    let c_idx = sys.center_index();
                    let q = compose_q(
                        &sigma_s,
                        &corr.cross_column(c_idx),
                        corr.center_variance(c_idx),
                        &basis,
                        cfg.b_last,
                    );
                    let tie_window = cfg.tie_scale
                        * noise_tie_window(
                            &a,
                            floor,
                            corr.t_bar,
                            sys.patches.nrows(),
                            cfg.b_last,
                            basis.norm2(),
                        );
                    let alpha = match solve_alpha(&q, cfg.b_last, cfg.null_tol, tie_window) {
                        AlphaOutcome::Solved { alpha, .. } => alpha,
                        AlphaOutcome::Degenerate(_) => {
                            degenerate += 1;
                            continue;
                        }
                    };
                    let est = estimate_pixel(&sys, &basis, &alpha, 0.8, corr.t_bar, cfg.epsilon);
                    if deep_dump > 0
                        && i > 30
                        && i < 66
                        && j > 9
                        && j < 22
                        && est > 0.5
                        && color == CfaColor::R
                        && bundle.x.get(i, j)[0] < 0.01
                    {
                        deep_dump -= 1;
                        let w = basis.weights(&alpha);
                        let ac = (&sys.s0 - &sys.beta_prime).dot(&w);
                        let dc = (sys.gamma - 0.8) / corr.t_bar.max(cfg.epsilon) + 0.8;
                        let mass: f64 = a.iter().map(|&x| x * x).sum();
                        println!(
                            "    deep ({i:2},{j:2}) {color}: est {est:9.3} ac {ac:9.3} dc {dc:7.3} anchors {:?} gamma {:.4} t_bar {:.4} M {} mass {:.1} |alpha| {:.2} |w| {:.2} widened {}",
                            sys.anchors,
                            sys.gamma,
                            corr.t_bar,
                            sys.m(),
                            mass,
                            alpha.norm(),
                            w.norm(),
                            sys.widened,
                        );
                    }
                    est_min = est_min.min(est);
                    est_max = est_max.max(est);
                    if !est.is_finite() || est < cfg.outlier_low || est > cfg.outlier_high {
                        outlier += 1;
                        // Spectrum at the failure: how far up must the
                        // eigenvalue band stretch to find a direction with a
                        // healthy last component?
                        if outlier_spectra < 14 {
                            let eig = nalgebra::SymmetricEigen::new(q.clone());
                            let mut pairs: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
                                .map(|k| {
                                    (
                                        eig.eigenvalues[k],
                                        eig.eigenvectors[(eig.eigenvalues.len() - 1, k)].abs(),
                                    )
                                })
                                .collect();
                            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
                            let lam_min = pairs[0].0;
                            let healthy = pairs.iter().find(|&&(_, vl)| vl >= 0.05);
                            println!(
                                "    spectrum ({i:2},{j:2}) {color} est {est:>12.3e}: lam_min {lam_min:.3e} vlast {:.3e}; first healthy lam {:?}; lam_max {:.3e}",
                                pairs[0].1,
                                healthy.map(|&(l, v)| (l, v)),
                                pairs.last().unwrap().0
                            );
                            outlier_spectra += 1;
                        }
                        let edge = i.min(j).min(h.height() - 1 - i).min(h.width() - 1 - j);
                        if edge < 2 {
                            out_border += 1;
                        } else if edge < 6 {
                            out_near += 1;
                        } else {
                            out_interior += 1;
                            *interior_rows.entry(i).or_default() += 1;
                            *interior_cols.entry(j).or_default() += 1;
                            if interior_samples.len() < 16 {
                                interior_samples.push((i, j, color, est, corr.t_bar));
                            }
                        }
                        if est.abs() <= 3.0 {
                            out_mild += 1;
                        } else {
                            out_wild += 1;
                        }
                        if outlier_samples.len() < 12 {
                            outlier_samples.push((i, j, color, est, corr.t_bar));
                        }
                    } else {
                        ok += 1;
                    }
                }
            }
        }
    }
    let total = too_few + degenerate + outlier + ok;
    println!("beta {beta}: systems {total}");
    println!("  ok         {ok} ({:.2}%)", 100.0 * ok as f64 / total as f64);
    println!(
        "  too_few    {too_few} ({:.2}%)",
        100.0 * too_few as f64 / total as f64
    );
    println!(
        "  degenerate {degenerate} ({:.2}%)",
        100.0 * degenerate as f64 / total as f64
    );
    println!(
        "  outlier    {outlier} ({:.2}%)",
        100.0 * outlier as f64 / total as f64
    );
    println!("  estimate range [{est_min:.3}, {est_max:.3}]");
    println!(
        "  outlier split: border(<2) {out_border}, near(2..6) {out_near}, interior {out_interior}"
    );
    println!("  outlier magnitude: |est|<=3 {out_mild}, |est|>3 {out_wild}");
    let _ = outlier_samples;
    println!("  interior outlier rows (top 10 by count):");
    let mut rows: Vec<_> = interior_rows.into_iter().collect();
    rows.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    for (r, c) in rows.iter().take(10) {
        println!("    row {r}: {c}");
    }
    let mut cols: Vec<_> = interior_cols.into_iter().collect();
    cols.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    println!("  interior outlier cols (top 10 by count):");
    for (cl, c) in cols.iter().take(10) {
        println!("    col {cl}: {c}");
    }
    println!("  interior samples:");
    for (i, j, c, est, tb) in interior_samples {
        println!("    ({i:2},{j:2}) {c} est {est:10.3} t_bar {tb:.3}");
    }
}
