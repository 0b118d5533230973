//! Dark-channel airlight and transmission estimation, on RGB and directly
//! on the mosaic.
//!
//! In fog-free outdoor images some channel is near zero somewhere in every
//! large-enough window (the dark channel prior), so after fogging the
//! windowed minimum reads the veil: `min_window(h) / l_a ~ (1 - t)`. The
//! estimate
//!
//! ```text
//! t_hat = 1 - rho * min_window(h / l_a)
//! ```
//!
//! works on the raw mosaic because a window of side >= 3 mixes all three
//! colors, which is what lets transmission be estimated before
//! demosaicking. `rho < 1` retains a little veil for depth perception and
//! floors the estimate at `1 - rho`.
//!
//! Estimates are smoothed with a box filter of the same window (standing in
//! for the halo-suppressing refinement of the wider literature) and clamped
//! to `[1 - rho, 1]`.
//!
//! Airlight comes from the brightest fraction of dark-channel pixels,
//! averaged per color class over the raw samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{CfaImage, ColorImage, Plane, TransmissionMap};

/// Window, aerial-perspective weight, and airlight selection fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcpConfig {
    /// Odd side length of the minimum window; the useful range for scene
    /// scale is roughly 21 to 31.
    pub window: usize,
    /// Weight rho in (0, 1]; keeps a `1 - rho` floor of veil.
    pub rho: f64,
    /// Fraction of brightest dark-channel pixels feeding the airlight mean.
    pub airlight_quantile: f64,
}

impl Default for DcpConfig {
    fn default() -> Self {
        DcpConfig {
            window: 25,
            rho: 0.95,
            airlight_quantile: 0.001,
        }
    }
}

impl DcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::parameter(format!(
                "DCP window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::parameter(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.airlight_quantile > 0.0 && self.airlight_quantile <= 0.05) {
            return Err(Error::parameter(format!(
                "airlight_quantile must lie in (0, 0.05], got {}",
                self.airlight_quantile
            )));
        }
        Ok(())
    }
}

/// Separable windowed minimum with mirror extension.
pub fn min_filter(plane: &Plane, window: usize) -> Plane {
    assert!(window % 2 == 1, "window must be odd");
    let half = (window / 2) as i64;
    let horiz = Plane::from_fn(plane.width(), plane.height(), |i, j| {
        let mut m = f64::INFINITY;
        for dj in -half..=half {
            m = m.min(plane.get_mirror(i as i64, j as i64 + dj));
        }
        m
    });
    Plane::from_fn(plane.width(), plane.height(), |i, j| {
        let mut m = f64::INFINITY;
        for di in -half..=half {
            m = m.min(horiz.get_mirror(i as i64 + di, j as i64));
        }
        m
    })
}

/// Separable windowed mean with mirror extension.
pub fn box_filter(plane: &Plane, window: usize) -> Plane {
    assert!(window % 2 == 1, "window must be odd");
    let half = (window / 2) as i64;
    let inv = 1.0 / window as f64;
    let horiz = Plane::from_fn(plane.width(), plane.height(), |i, j| {
        let mut s = 0.0;
        for dj in -half..=half {
            s += plane.get_mirror(i as i64, j as i64 + dj);
        }
        s * inv
    });
    Plane::from_fn(plane.width(), plane.height(), |i, j| {
        let mut s = 0.0;
        for di in -half..=half {
            s += horiz.get_mirror(i as i64 + di, j as i64);
        }
        s * inv
    })
}

/// Windowed minimum of the channel-wise minimum.
pub fn dark_channel_rgb(img: &ColorImage, window: usize) -> Plane {
    let m = Plane::from_fn(img.width(), img.height(), |i, j| {
        let p = img.get(i, j);
        p[0].min(p[1]).min(p[2])
    });
    min_filter(&m, window)
}

/// Windowed minimum of raw mosaic values; a window of side >= 3 sees all
/// three colors, so the dark channel prior applies without demosaicking.
pub fn dark_channel_cfa(h: &CfaImage, window: usize) -> Plane {
    assert!(window >= 3, "CFA dark channel needs a window covering all colors");
    min_filter(&h.plane, window)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AirlightEstimate {
    /// Mean raw value per color class over the selected pixels.
    pub per_channel: [f64; 3],
    /// Mean of the three channel estimates, for white-balanced processing.
    pub scalar: f64,
    /// (max - min) / scalar across channels.
    pub channel_spread: f64,
    /// True when the spread exceeds 5%, suggesting the image is not white
    /// balanced or the fog region is colored.
    pub spread_flagged: bool,
}

/// Airlight from the most fog-opaque pixels: take the top
/// `airlight_quantile` fraction by CFA dark channel, then average raw
/// values per color class. Selection widens just enough to represent every
/// class at least once.
pub fn estimate_airlight(h: &CfaImage, cfg: &DcpConfig) -> Result<AirlightEstimate> {
    cfg.validate()?;
    let dc = dark_channel_cfa(h, cfg.window);
    let n = dc.len();
    let want = ((n as f64 * cfg.airlight_quantile).ceil() as usize).max(1);

    // Deterministic bright-first order: value descending, index ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        dc.data()[b]
            .partial_cmp(&dc.data()[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let width = h.width();
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for (rank, &idx) in order.iter().enumerate() {
        if rank >= want && counts.iter().all(|&c| c > 0) {
            break;
        }
        let (i, j) = (idx / width, idx % width);
        let k = h.color_at(i, j).index();
        sums[k] += h.plane.get(i, j);
        counts[k] += 1;
    }

    let mut per_channel = [0.0; 3];
    let represented: Vec<f64> = (0..3)
        .filter(|&k| counts[k] > 0)
        .map(|k| sums[k] / counts[k] as f64)
        .collect();
    // A class can stay empty only on degenerate tiny images; fill it with
    // the mean of what exists rather than failing.
    let fill = represented.iter().sum::<f64>() / represented.len() as f64;
    for k in 0..3 {
        per_channel[k] = if counts[k] > 0 {
            sums[k] / counts[k] as f64
        } else {
            fill
        };
    }

    let scalar = (per_channel[0] + per_channel[1] + per_channel[2]) / 3.0;
    let spread_abs = per_channel.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - per_channel.iter().cloned().fold(f64::INFINITY, f64::min);
    let channel_spread = if scalar > 0.0 { spread_abs / scalar } else { 0.0 };
    Ok(AirlightEstimate {
        per_channel,
        scalar,
        channel_spread,
        spread_flagged: channel_spread > 0.05,
    })
}

fn finish_transmission(raw: Plane, cfg: &DcpConfig) -> Result<TransmissionMap> {
    let smoothed = box_filter(&raw, cfg.window);
    let lo = 1.0 - cfg.rho;
    // rho = 1 would allow t = 0; keep the map strictly positive.
    let lo = lo.max(1e-6);
    TransmissionMap::new(smoothed.map(|t| t.clamp(lo, 1.0)))
}

/// Transmission from the raw mosaic: `1 - rho * min_window(h) / l_a`,
/// box-smoothed and clamped to `[1 - rho, 1]`.
pub fn estimate_transmission_cfa(
    h: &CfaImage,
    airlight: f64,
    cfg: &DcpConfig,
) -> Result<TransmissionMap> {
    cfg.validate()?;
    if !(airlight > 0.0) || !airlight.is_finite() {
        return Err(Error::parameter(format!(
            "airlight must be positive, got {airlight}"
        )));
    }
    let dc = dark_channel_cfa(h, cfg.window);
    let raw = dc.map(|v| 1.0 - cfg.rho * v / airlight);
    finish_transmission(raw, cfg)
}

/// RGB-domain estimate used by the baseline: channel-normalized windowed
/// minimum, then the same smoothing and clamping.
pub fn estimate_transmission_rgb(
    y: &ColorImage,
    airlight: [f64; 3],
    cfg: &DcpConfig,
) -> Result<TransmissionMap> {
    cfg.validate()?;
    for (k, &a) in airlight.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::parameter(format!(
                "airlight channel {k} must be positive, got {a}"
            )));
        }
    }
    let normalized = Plane::from_fn(y.width(), y.height(), |i, j| {
        let p = y.get(i, j);
        (p[0] / airlight[0])
            .min(p[1] / airlight[1])
            .min(p[2] / airlight[2])
    });
    let mf = min_filter(&normalized, cfg.window);
    let raw = mf.map(|v| 1.0 - cfg.rho * v);
    finish_transmission(raw, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::mosaic;
    use crate::fog::{apply_fog, FogParams, DEFAULT_EPSILON};
    use crate::raster::BayerPhase;

    fn dark_scene(w: usize, h: usize) -> ColorImage {
        // Every pixel has one zero channel: the prior holds exactly.
        ColorImage::from_fn(w, h, |i, j| match (i + j) % 3 {
            0 => [0.0, 0.6, 0.8],
            1 => [0.7, 0.0, 0.5],
            _ => [0.9, 0.4, 0.0],
        })
    }

    #[test]
    fn dark_channel_rgb_oracles() {
        let x = dark_scene(12, 12);
        let dc = dark_channel_rgb(&x, 3);
        assert!(dc.data().iter().all(|&v| v == 0.0));

        let gray = ColorImage::from_fn(8, 8, |_, _| [0.37; 3]);
        let dcg = dark_channel_rgb(&gray, 5);
        assert!(dcg.data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn foggy_dark_channel_reads_the_veil() {
        // dark_channel(x) = 0, constant t, l_a = 1: dc(y) = 1 - t exactly.
        let x = dark_scene(16, 16);
        let p = FogParams::new(0.02, [1.0; 3], DEFAULT_EPSILON).unwrap();
        let t = TransmissionMap::constant(16, 16, 0.35).unwrap();
        let y = apply_fog(&x, &t, &p).unwrap();
        let dc = dark_channel_rgb(&y, 3);
        for &v in dc.data() {
            assert!((v - 0.65).abs() < 1e-12);
        }
    }

    #[test]
    fn cfa_dark_channel_brackets_rgb() {
        // The mosaic only sees one channel per site, so its windowed min can
        // only miss minima upward, and never by more than the window's full
        // value range.
        let y = ColorImage::from_fn(16, 16, |i, j| {
            [
                0.2 + 0.6 * (((i * 7 + j * 3) % 13) as f64 / 13.0),
                0.1 + 0.7 * (((i * 5 + j * 11) % 17) as f64 / 17.0),
                0.15 + 0.6 * (((i * 3 + j * 13) % 19) as f64 / 19.0),
            ]
        });
        let h = mosaic(&y, BayerPhase::Rggb);
        let window = 5;
        let dc_rgb = dark_channel_rgb(&y, window);
        let dc_cfa = dark_channel_cfa(&h, window);
        let half = (window / 2) as i64;
        for i in 0..16usize {
            for j in 0..16usize {
                let lo = dc_rgb.get(i, j);
                let hi_cfa = dc_cfa.get(i, j);
                assert!(hi_cfa >= lo - 1e-15);
                // Local full range across channels and window.
                let mut hi = f64::NEG_INFINITY;
                for di in -half..=half {
                    for dj in -half..=half {
                        let mut px = [0.0; 3];
                        for k in 0..3 {
                            px[k] = y.plane(k).get_mirror(i as i64 + di, j as i64 + dj);
                        }
                        hi = hi.max(px[0].max(px[1]).max(px[2]));
                    }
                }
                assert!(hi_cfa - lo <= hi - lo + 1e-15);
            }
        }
    }

    #[test]
    fn cfa_dark_channel_exact_when_minimizing_site_covered() {
        // Wherever some site inside the window observes the exact RGB
        // dark-channel value, the two estimates must coincide; elsewhere the
        // bracket of the previous test is all that holds.
        let y = ColorImage::from_fn(16, 16, |i, j| {
            let b = ((i / 4) + (j / 4)) % 3;
            match b {
                0 => [0.1, 0.6, 0.8],
                1 => [0.7, 0.2, 0.5],
                _ => [0.9, 0.4, 0.3],
            }
        });
        let h = mosaic(&y, BayerPhase::Rggb);
        let window = 9usize;
        let half = (window / 2) as i64;
        let dc_rgb = dark_channel_rgb(&y, window);
        let dc_cfa = dark_channel_cfa(&h, window);
        let mut covered = 0usize;
        for i in 0..16usize {
            for j in 0..16usize {
                let v = dc_rgb.get(i, j);
                let mut site_sees_min = false;
                for di in -half..=half {
                    for dj in -half..=half {
                        if h.plane.get_mirror(i as i64 + di, j as i64 + dj) == v {
                            site_sees_min = true;
                        }
                    }
                }
                if site_sees_min {
                    covered += 1;
                    assert!(
                        (dc_cfa.get(i, j) - v).abs() < 1e-15,
                        "pixel ({i},{j}): cfa {} vs rgb {v}",
                        dc_cfa.get(i, j)
                    );
                }
            }
        }
        // The condition holds over most of the image, so the equality branch
        // is actually exercised.
        assert!(covered > 128, "only {covered} covered pixels");
    }

    fn layered_fog_bundle(la: f64) -> (CfaImage, TransmissionMap) {
        // Three depth bands, the far one essentially opaque (t = 0.01).
        let x = dark_scene(48, 48);
        let t = TransmissionMap::new(Plane::from_fn(48, 48, |i, _| {
            if i < 16 {
                0.9
            } else if i < 32 {
                0.4
            } else {
                0.01
            }
        }))
        .unwrap();
        let p = FogParams::new(0.02, [la; 3], DEFAULT_EPSILON).unwrap();
        let y = apply_fog(&x, &t, &p).unwrap();
        (mosaic(&y, BayerPhase::Rggb), t)
    }

    #[test]
    fn airlight_recovered_from_opaque_band() {
        let la = 0.8;
        let (h, _) = layered_fog_bundle(la);
        let est = estimate_airlight(&h, &DcpConfig::default()).unwrap();
        assert!(
            (est.scalar - la).abs() / la < 0.02,
            "scalar {} vs {la}",
            est.scalar
        );
        assert!(est.scalar >= 0.78 && est.scalar <= 0.82);
        assert!(!est.spread_flagged, "spread {}", est.channel_spread);
    }

    #[test]
    fn airlight_on_constant_mosaic_is_that_constant() {
        let h = mosaic(
            &ColorImage::from_fn(40, 40, |_, _| [0.61; 3]),
            BayerPhase::Gbrg,
        );
        let est = estimate_airlight(&h, &DcpConfig::default()).unwrap();
        for k in 0..3 {
            assert!((est.per_channel[k] - 0.61).abs() < 1e-12);
        }
        assert!((est.scalar - 0.61).abs() < 1e-12);
    }

    #[test]
    fn transmission_cfa_oracles() {
        let cfg = DcpConfig {
            window: 3,
            ..DcpConfig::default()
        };
        // Pure airlight: t_hat = 1 - rho.
        let la = 0.8;
        let h = mosaic(&ColorImage::from_fn(12, 12, |_, _| [la; 3]), BayerPhase::Rggb);
        let t = estimate_transmission_cfa(&h, la, &cfg).unwrap();
        for &v in t.plane().data() {
            assert!((v - 0.05).abs() < 1e-12);
        }

        // All-zero mosaic: no veil, t_hat = 1.
        let h0 = CfaImage::new(Plane::new(12, 12), BayerPhase::Rggb);
        let t0 = estimate_transmission_cfa(&h0, la, &cfg).unwrap();
        assert!(t0.plane().data().iter().all(|&v| v == 1.0));

        assert!(estimate_transmission_cfa(&h, 0.0, &cfg).is_err());
    }

    #[test]
    fn transmission_tracks_constant_fog() {
        // Zero-radiance sites in every window, constant t = 0.4, l_a = 1:
        // t_hat = 1 - rho (1 - t), so 0.43 at rho = 0.95 and exactly t at
        // rho = 1.
        let x = ColorImage::from_fn(24, 24, |_, _| [1.0, 0.0, 0.0]);
        let p = FogParams::new(0.02, [1.0; 3], DEFAULT_EPSILON).unwrap();
        let t = TransmissionMap::constant(24, 24, 0.4).unwrap();
        let h = mosaic(&apply_fog(&x, &t, &p).unwrap(), BayerPhase::Rggb);

        let cfg95 = DcpConfig {
            window: 3,
            ..DcpConfig::default()
        };
        let est95 = estimate_transmission_cfa(&h, 1.0, &cfg95).unwrap();
        for &v in est95.plane().data() {
            assert!((v - 0.43).abs() < 1e-12, "rho 0.95: {v}");
        }

        let cfg1 = DcpConfig {
            window: 3,
            rho: 1.0,
            ..DcpConfig::default()
        };
        let est1 = estimate_transmission_cfa(&h, 1.0, &cfg1).unwrap();
        for &v in est1.plane().data() {
            assert!((v - 0.4).abs() < 1e-12, "rho 1: {v}");
        }
    }

    #[test]
    fn transmission_monotone_and_in_range() {
        let (h, _) = layered_fog_bundle(0.8);
        let cfg = DcpConfig::default();
        let t1 = estimate_transmission_cfa(&h, 0.8, &cfg).unwrap();
        for &v in t1.plane().data() {
            assert!((0.05..=1.0).contains(&v));
        }
        // More veil everywhere must not raise the estimate anywhere.
        let brighter = CfaImage::new(h.plane.map(|v| (v + 0.1).min(1.2)), h.phase);
        let t2 = estimate_transmission_cfa(&brighter, 0.8, &cfg).unwrap();
        for (a, b) in t1.plane().data().iter().zip(t2.plane().data()) {
            assert!(*b <= a + 1e-12);
        }
    }

    #[test]
    fn cfa_and_rgb_estimates_agree_on_mosaicked_scenes() {
        let x = dark_scene(48, 48);
        let t = TransmissionMap::new(Plane::from_fn(48, 48, |i, _| {
            0.15 + 0.7 * (i as f64 / 48.0)
        }))
        .unwrap();
        let la = 0.85;
        let p = FogParams::new(0.02, [la; 3], DEFAULT_EPSILON).unwrap();
        let y = apply_fog(&x, &t, &p).unwrap();
        let h = mosaic(&y, BayerPhase::Rggb);
        let cfg = DcpConfig {
            window: 21,
            ..DcpConfig::default()
        };
        let t_cfa = estimate_transmission_cfa(&h, la, &cfg).unwrap();
        let t_rgb = estimate_transmission_rgb(&y, [la; 3], &cfg).unwrap();
        let mean_diff: f64 = t_cfa
            .plane()
            .data()
            .iter()
            .zip(t_rgb.plane().data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / t_cfa.plane().len() as f64;
        assert!(mean_diff <= 0.05, "mean |t_cfa - t_rgb| = {mean_diff}");
    }

    #[test]
    fn config_validation() {
        assert!(DcpConfig::default().validate().is_ok());
        assert!(DcpConfig { window: 4, ..DcpConfig::default() }.validate().is_err());
        assert!(DcpConfig { window: 1, ..DcpConfig::default() }.validate().is_err());
        assert!(DcpConfig { rho: 0.0, ..DcpConfig::default() }.validate().is_err());
        assert!(DcpConfig { rho: 1.1, ..DcpConfig::default() }.validate().is_err());
        assert!(
            DcpConfig { airlight_quantile: 0.2, ..DcpConfig::default() }
                .validate()
                .is_err()
        );
    }
}
