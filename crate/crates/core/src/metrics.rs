//! Full-reference PSNR and blind contrast descriptors.
//!
//! PSNR needs synthesis ground truth and is the primary simulation score.
//! For real captures with no reference, two blind descriptors compare an
//! image before and after restoration on luminance (channel mean):
//!
//! * `e` — relative change in the count of visible edges, where a pixel is
//!   a visible edge when its 3x3 Michelson contrast `(max-min)/(max+min)`
//!   exceeds a threshold (5% for daytime fog).
//! * `r_bar` — geometric mean, over the after-image's visible edges, of the
//!   gradient-magnitude ratio after/before.
//!
//! The blind descriptors follow a fixed operationalization chosen here
//! (count ratio for e, geometric-mean gradient ratio for r_bar); published
//! scores computed with other edge segmentations are comparable in trend,
//! not in absolute value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ColorImage, Plane};

/// Contrast threshold for daytime fog.
pub const DEFAULT_CONTRAST_THRESHOLD: f64 = 0.05;

/// Floor for gradient magnitudes entering the r_bar ratio; flat pixels
/// contribute a ratio of flat/flat = 1 instead of a division blow-up.
const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    /// Relative gain of visible edges, `(n_after - n_before) / n_before`.
    pub e: f64,
    /// Geometric mean of gradient ratios at the after-image's visible edges.
    pub r_bar: f64,
    pub n_before: usize,
    pub n_after: usize,
    /// True when n_before = 0 made `e` a raw count instead of a ratio.
    pub degenerate: bool,
}

/// `10 log10(1 / MSE)` over all pixels and channels, peak 1.0. Returns
/// infinity for identical images; serialize with [`psnr_to_json`].
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::dimension(format!(
            "psnr inputs {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let n = (a.pixels().len() * 3) as f64;
    let mse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(pa, pb)| {
            (0..3)
                .map(|k| {
                    let d = pa[k] - pb[k];
                    d * d
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// JSON value for a PSNR: finite values as numbers, infinity as the string
/// sentinel "inf".
pub fn psnr_to_json(value: f64) -> serde_json::Value {
    if value.is_finite() {
        serde_json::json!(value)
    } else {
        serde_json::json!("inf")
    }
}

/// Luminance as the plain channel mean.
pub fn luminance(img: &ColorImage) -> Plane {
    Plane::from_fn(img.width(), img.height(), |i, j| {
        let p = img.get(i, j);
        (p[0] + p[1] + p[2]) / 3.0
    })
}

/// Visible-edge mask: 3x3 Michelson contrast on luminance above `threshold`.
pub fn visible_edges(img: &ColorImage, threshold: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&threshold) || threshold <= 0.0 {
        return Err(Error::parameter(format!(
            "contrast threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let lum = luminance(img);
    let (w, h) = (img.width(), img.height());
    let mut mask = vec![false; w * h];
    for i in 0..h {
        for j in 0..w {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let v = lum.get_mirror(i as i64 + di, j as i64 + dj);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let denom = hi + lo;
            let contrast = if denom > 0.0 { (hi - lo) / denom } else { 0.0 };
            mask[i * w + j] = contrast > threshold;
        }
    }
    Ok(mask)
}

/// 3x3 central-difference gradient magnitude of luminance.
fn gradient_magnitude(lum: &Plane) -> Plane {
    Plane::from_fn(lum.width(), lum.height(), |i, j| {
        let (ii, jj) = (i as i64, j as i64);
        let gx = 0.5 * (lum.get_mirror(ii, jj + 1) - lum.get_mirror(ii, jj - 1));
        let gy = 0.5 * (lum.get_mirror(ii + 1, jj) - lum.get_mirror(ii - 1, jj));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Blind before/after comparison; see module docs for the definitions.
pub fn blind_contrast(
    before: &ColorImage,
    after: &ColorImage,
    threshold: f64,
) -> Result<ContrastReport> {
    if !before.same_size(after) {
        return Err(Error::dimension(format!(
            "blind_contrast inputs {}x{} vs {}x{}",
            before.width(),
            before.height(),
            after.width(),
            after.height()
        )));
    }
    let mask_before = visible_edges(before, threshold)?;
    let mask_after = visible_edges(after, threshold)?;
    let n_before = mask_before.iter().filter(|&&m| m).count();
    let n_after = mask_after.iter().filter(|&&m| m).count();

    let (e, degenerate) = if n_before > 0 {
        ((n_after as f64 - n_before as f64) / n_before as f64, false)
    } else {
        (n_after as f64, true)
    };

    let grad_before = gradient_magnitude(&luminance(before));
    let grad_after = gradient_magnitude(&luminance(after));
    // Both magnitudes are floored before the ratio so that identical images
    // score exactly r_bar = 1 even where they are flat.
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for (idx, &m) in mask_after.iter().enumerate() {
        if m {
            let gb = grad_before.data()[idx].max(GRADIENT_FLOOR);
            let ga = grad_after.data()[idx].max(GRADIENT_FLOOR);
            log_sum += (ga / gb).ln();
            count += 1;
        }
    }
    let r_bar = if count > 0 {
        (log_sum / count as f64).exp()
    } else {
        1.0
    };

    Ok(ContrastReport {
        e,
        r_bar,
        n_before,
        n_after,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: f64) -> ColorImage {
        ColorImage::from_fn(w, h, |_, _| [v; 3])
    }

    #[test]
    fn psnr_oracle_values() {
        let a = gray(8, 8, 0.5);
        assert!(psnr(&a, &a).unwrap().is_infinite());

        // Uniform offset 0.1: MSE = 0.01, 10 log10(100) = 20 dB.
        let b = gray(8, 8, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);

        // Full-scale difference: MSE = 1, 0 dB.
        let z = gray(8, 8, 0.0);
        let o = gray(8, 8, 1.0);
        assert!((psnr(&z, &o).unwrap() - 0.0).abs() < 1e-12);

        assert!(psnr(&a, &gray(4, 4, 0.5)).is_err());
    }

    #[test]
    fn psnr_json_sentinel() {
        assert_eq!(psnr_to_json(f64::INFINITY), serde_json::json!("inf"));
        assert_eq!(psnr_to_json(20.0), serde_json::json!(20.0));
    }

    #[test]
    fn visible_edges_on_steps() {
        // Constant image: nothing visible.
        let c = gray(8, 8, 0.4);
        assert!(visible_edges(&c, 0.05).unwrap().iter().all(|&m| !m));

        // Hard step 0.2 -> 0.8: contrast 0.6/1.0 = 0.6 at the boundary.
        let s = ColorImage::from_fn(8, 8, |_, j| if j < 4 { [0.2; 3] } else { [0.8; 3] });
        let mask = visible_edges(&s, 0.05).unwrap();
        assert!(mask[3] && mask[4], "boundary columns visible");
        assert!(!mask[0] && !mask[7], "far columns flat");

        // Soft step 0.5 -> 0.51: contrast 0.01/1.01 < 0.05.
        let soft = ColorImage::from_fn(8, 8, |_, j| if j < 4 { [0.5; 3] } else { [0.51; 3] });
        assert!(visible_edges(&soft, 0.05).unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn blind_contrast_identity() {
        let img = ColorImage::from_fn(16, 16, |i, j| {
            let v = 0.2 + 0.6 * (((i / 4) + (j / 4)) % 2) as f64;
            [v; 3]
        });
        let r = blind_contrast(&img, &img, 0.05).unwrap();
        assert_eq!(r.e, 0.0);
        assert_eq!(r.r_bar, 1.0);
        assert_eq!(r.n_before, r.n_after);
        assert!(!r.degenerate);
    }

    #[test]
    fn blind_contrast_stretch_doubles_r_bar() {
        // Smooth sinusoidal pattern stretched by 2 about its mean: every
        // gradient doubles, masks stay identical because contrast only
        // grows. All edges already visible before.
        let img = ColorImage::from_fn(24, 24, |i, j| {
            let v = 0.5 + 0.1 * ((i as f64) * 0.7).sin() * ((j as f64) * 0.9).cos();
            [v; 3]
        });
        let mean = 0.5;
        let stretched = img.map_pixels(|p| p.map(|v| mean + 2.0 * (v - mean)));
        let r = blind_contrast(&img, &stretched, 0.01).unwrap();
        assert!((r.r_bar - 2.0).abs() / 2.0 < 0.01, "r_bar = {}", r.r_bar);
        assert!(r.e >= 0.0);
    }

    #[test]
    fn blind_contrast_degenerate_flagged() {
        let flat = gray(8, 8, 0.5);
        let s = ColorImage::from_fn(8, 8, |_, j| if j < 4 { [0.2; 3] } else { [0.8; 3] });
        let r = blind_contrast(&flat, &s, 0.05).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.e, r.n_after as f64);
    }

    #[test]
    fn metrics_are_traversal_order_free() {
        // Determinism: two evaluations agree bit for bit.
        let a = ColorImage::from_fn(12, 12, |i, j| {
            [
                ((i * 31 + j) % 17) as f64 / 17.0,
                ((i + j * 5) % 13) as f64 / 13.0,
                ((i * 7 + j * 3) % 11) as f64 / 11.0,
            ]
        });
        let b = a.map_pixels(|p| p.map(|v| (v * 0.9 + 0.05).min(1.0)));
        let r1 = blind_contrast(&a, &b, 0.05).unwrap();
        let r2 = blind_contrast(&a, &b, 0.05).unwrap();
        assert_eq!(r1, r2);
    }
}
