//! Throwaway PSNR sweep for solver parameter experiments.

use rawfog_core::fog::{FogParams, NoiseParams, DEFAULT_EPSILON};
use rawfog_core::metrics::psnr;
use rawfog_core::pipeline::{separate_pipeline, PipelineConfig, SeparateOptions};
use rawfog_core::raster::BayerPhase;
use rawfog_core::scene::{builtin_layouts, synthesize, SceneSpec};
use rawfog_core::tls::{joint_defog_demosaick, SolverConfig};
use rawfog_core::transmission::DcpConfig;

const AIRLIGHT: f64 = 0.8;
const SIGMA: f64 = 0.01;
const GAIN: f64 = 1000.0;

fn main() {
    let mut args = std::env::args().skip(1);
    let beta: f64 = args.next().unwrap().parse().unwrap();
    let seed: u64 = args.next().unwrap().parse().unwrap();
    let size: usize = args.next().unwrap().parse().unwrap();
    let tie_scale: f64 = args.next().unwrap().parse().unwrap();
    let kappa: f64 = args.next().unwrap().parse().unwrap();
    let cut: f64 = args.next().map(|a| a.parse().unwrap()).unwrap_or(2.0);

    let (layout, depth) = builtin_layouts("textured-blocks").unwrap();
    let spec = SceneSpec {
        width: size,
        height: size,
        layout,
        depth,
        fog: FogParams::new(beta, [AIRLIGHT; 3], DEFAULT_EPSILON).unwrap(),
        noise: NoiseParams::new(SIGMA, seed).unwrap(),
        gain: GAIN,
        phase: BayerPhase::Rggb,
    };
    let bundle = synthesize(&spec).unwrap();

    let floor = AIRLIGHT / GAIN + SIGMA * SIGMA;
    let cfg = SolverConfig {
        b_last: 0.5,
        tie_scale,
        kappa,
        similarity_cut: cut,
        ..SolverConfig::default()
    };
    let result = joint_defog_demosaick(&bundle.h, &bundle.t, AIRLIGHT, floor, &cfg).unwrap();
    let psnr_joint = psnr(&result.image, &bundle.x).unwrap();

    let opts = SeparateOptions {
        oracle_t: Some(&bundle.t),
        oracle_airlight: Some([AIRLIGHT; 3]),
    };
    let sep = separate_pipeline(
        &bundle.h,
        &PipelineConfig::default(),
        &DcpConfig::default(),
        DEFAULT_EPSILON,
        &opts,
    )
    .unwrap();
    let psnr_sep = psnr(&sep.output, &bundle.x).unwrap();

    println!(
        "beta {beta} seed {seed} size {size} tie {tie_scale} kappa {kappa} cut {cut}: joint {:.2} dB (fallback {:.2}%), separate {:.2} dB",
        psnr_joint,
        100.0 * result.fallback_rate(),
        psnr_sep,
    );

    // Localize the error: per channel, per region, both arms.
    let mse_region = |img: &rawfog_core::raster::ColorImage,
                      ch: usize,
                      rows: std::ops::Range<usize>,
                      cols: std::ops::Range<usize>|
     -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for i in rows.clone() {
            for j in cols.clone() {
                let d = img.get(i, j)[ch] - bundle.x.get(i, j)[ch];
                acc += d * d;
                n += 1;
            }
        }
        acc / n as f64
    };
    let db = |m: f64| -10.0 * m.log10();
    for (name, img) in [("joint", &result.image), ("sep  ", &sep.output)] {
        for ch in 0..3 {
            let full = mse_region(img, ch, 0..size, 0..size);
            let near = mse_region(img, ch, 8..size / 3, 8..size - 8);
            let mid = mse_region(img, ch, size / 3..2 * size / 3, 8..size - 8);
            let far = mse_region(img, ch, 2 * size / 3..size - 8, 8..size - 8);
            println!(
                "  {name} ch{ch}: full {:.2} near {:.2} mid {:.2} far {:.2}",
                db(full),
                db(near),
                db(mid),
                db(far)
            );
        }
    }
    // Worst joint pixels.
    let mut worst: Vec<(f64, usize, usize, usize)> = Vec::new();
    for i in 0..size {
        for j in 0..size {
            for ch in 0..3 {
                let d = (result.image.get(i, j)[ch] - bundle.x.get(i, j)[ch]).abs();
                worst.push((d, i, j, ch));
            }
        }
    }
    worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("  worst joint pixels:");
    for (d, i, j, ch) in worst.iter().take(16) {
        println!(
            "    ({i:2},{j:2},c{ch}) err {d:.3} truth {:.3} joint {:.3} sep {:.3} t {:.3} block ({},{})",
            bundle.x.get(*i, *j)[*ch],
            result.image.get(*i, *j)[*ch],
            sep.output.get(*i, *j)[*ch],
            bundle.t.get(*i, *j),
            i % 16,
            j % 16,
        );
    }
    // Histogram of red errors > 0.3 by block-relative position.
    let mut by_pos = std::collections::BTreeMap::<(usize, usize), usize>::new();
    let mut n_big = 0usize;
    for i in 0..size {
        for j in 0..size {
            let d = (result.image.get(i, j)[0] - bundle.x.get(i, j)[0]).abs();
            if d > 0.3 {
                *by_pos.entry((i % 2, j % 2)).or_default() += 1;
                n_big += 1;
            }
        }
    }
    println!("  red errors > 0.3: {n_big} by parity {:?}", by_pos);
    let mut by_rel = std::collections::BTreeMap::<usize, usize>::new();
    for i in 0..size {
        for j in 0..size {
            let d = (result.image.get(i, j)[0] - bundle.x.get(i, j)[0]).abs();
            if d > 0.3 {
                *by_rel.entry(j % 16).or_default() += 1;
            }
        }
    }
    println!("  red errors > 0.3 by j%16: {:?}", by_rel);
}
