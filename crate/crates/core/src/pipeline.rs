//! Conventional separate restoration pipeline.
//!
//! The comparison baseline runs the classic stage chain on the mosaic:
//! optional gray-world white balance, bilinear demosaicking, dark-channel
//! defogging in the demosaicked domain, optional display gamma. Each stage
//! exists on its own so tests can pin individual behaviors, and the driver
//! records every intermediate for inspection.

use serde::{Deserialize, Serialize};

use crate::cfa::bilinear_demosaick;
use crate::error::{Error, Result};
use crate::fog::defog_sample;
use crate::raster::{CfaColor, CfaImage, ColorImage, TransmissionMap};
use crate::transmission::{estimate_airlight, estimate_transmission_rgb, AirlightEstimate, DcpConfig};

/// One stage of the separate pipeline, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    WhiteBalance,
    Demosaick,
    Defog,
    Gamma,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::WhiteBalance => "white_balance",
            Stage::Demosaick => "demosaick",
            Stage::Defog => "defog",
            Stage::Gamma => "gamma",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        match s {
            "white_balance" => Ok(Stage::WhiteBalance),
            "demosaick" => Ok(Stage::Demosaick),
            "defog" => Ok(Stage::Defog),
            "gamma" => Ok(Stage::Gamma),
            other => Err(Error::parameter(format!(
                "unknown stage {other:?} (expected white_balance, demosaick, defog or gamma)"
            ))),
        }
    }
}

/// Stage list and display gamma of the separate pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub gamma: f64,
    pub stages: Vec<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            gamma: 1.25,
            stages: vec![Stage::Demosaick, Stage::Defog],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::parameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        for pair in self.stages.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::parameter(format!(
                    "stage {} cannot follow {}; order is white_balance, demosaick, defog, gamma, \
                     each at most once",
                    pair[1], pair[0]
                )));
            }
        }
        if !self.stages.contains(&Stage::Demosaick) {
            return Err(Error::parameter(
                "the separate pipeline needs the demosaick stage",
            ));
        }
        Ok(())
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

/// Equalizes per-class mosaic means to the green mean.
///
/// Returns the balanced mosaic and the gains that were applied per color
/// class. A class with zero mean keeps unit gain; the caller can spot that
/// from the returned gains.
pub fn gray_world_white_balance(h: &CfaImage) -> (CfaImage, [f64; 3]) {
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for i in 0..h.height() {
        for j in 0..h.width() {
            let c = h.color_at(i, j).index();
            sums[c] += h.plane.get(i, j);
            counts[c] += 1;
        }
    }
    let mean = |c: usize| {
        if counts[c] > 0 {
            sums[c] / counts[c] as f64
        } else {
            0.0
        }
    };
    let green = mean(CfaColor::G.index());
    let mut gains = [1.0f64; 3];
    for c in 0..3 {
        let m = mean(c);
        if m > 0.0 && green > 0.0 {
            gains[c] = green / m;
        }
    }
    let plane = crate::raster::Plane::from_fn(h.width(), h.height(), |i, j| {
        h.plane.get(i, j) * gains[h.color_at(i, j).index()]
    });
    (
        CfaImage {
            plane,
            phase: h.phase,
        },
        gains,
    )
}

/// Display encoding `v^(1/gamma)`, negatives clamped to zero first.
pub fn gamma_encode(img: &ColorImage, gamma: f64) -> ColorImage {
    let inv = 1.0 / gamma;
    img.map_pixels(|p| p.map(|v| v.max(0.0).powf(inv)))
}

/// Inverse of [`gamma_encode`]: `v^gamma` with the same clamp.
pub fn gamma_decode(img: &ColorImage, gamma: f64) -> ColorImage {
    img.map_pixels(|p| p.map(|v| v.max(0.0).powf(gamma)))
}

/// Inputs the defog stage can take from outside instead of estimating.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeparateOptions<'a> {
    /// Ground-truth transmission, when the caller has it.
    pub oracle_t: Option<&'a TransmissionMap>,
    /// Known per-channel airlight, when the caller has it.
    pub oracle_airlight: Option<[f64; 3]>,
}

/// The separate pipeline's output with every intermediate retained.
#[derive(Clone, Debug)]
pub struct SeparateOutcome {
    /// Final image after all configured stages.
    pub output: ColorImage,
    /// Image before the gamma stage (equal to `output` when gamma is off).
    pub linear: ColorImage,
    /// Result of the demosaick stage.
    pub demosaicked: ColorImage,
    /// White balance gains, when that stage ran.
    pub gains: Option<[f64; 3]>,
    /// Airlight estimate, when the defog stage ran without an oracle value.
    pub airlight: Option<AirlightEstimate>,
    /// Per-channel airlight the defog stage actually used.
    pub airlight_used: Option<[f64; 3]>,
    /// Transmission the defog stage actually used.
    pub transmission: Option<TransmissionMap>,
}

/// Runs the configured stages over a raw mosaic.
///
/// The defog stage estimates airlight from the (possibly balanced) mosaic
/// and transmission from the demosaicked image, unless oracles are supplied.
pub fn separate_pipeline(
    h: &CfaImage,
    cfg: &PipelineConfig,
    dcp: &DcpConfig,
    epsilon: f64,
    opts: &SeparateOptions,
) -> Result<SeparateOutcome> {
    cfg.validate()?;
    dcp.validate()?;
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > 1.0 {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }

    let mut gains = None;
    let balanced;
    let mosaic_in = if cfg.has(Stage::WhiteBalance) {
        let (b, g) = gray_world_white_balance(h);
        gains = Some(g);
        balanced = b;
        &balanced
    } else {
        h
    };

    let demosaicked = bilinear_demosaick(mosaic_in);
    let mut current = demosaicked.clone();

    let mut airlight = None;
    let mut airlight_used = None;
    let mut transmission = None;
    if cfg.has(Stage::Defog) {
        let la = match opts.oracle_airlight {
            Some(la) => la,
            None => {
                let est = estimate_airlight(mosaic_in, dcp)?;
                let per_channel = est.per_channel;
                airlight = Some(est);
                per_channel
            }
        };
        let t = match opts.oracle_t {
            Some(t) => {
                if t.plane().width() != h.width() || t.plane().height() != h.height() {
                    return Err(Error::dimension(format!(
                        "oracle transmission {}x{} does not match mosaic {}x{}",
                        t.plane().width(),
                        t.plane().height(),
                        h.width(),
                        h.height()
                    )));
                }
                t.clone()
            }
            None => estimate_transmission_rgb(&current, la, dcp)?,
        };
        let mut defogged = current.clone();
        for i in 0..defogged.height() {
            for j in 0..defogged.width() {
                let tv = t.get(i, j);
                let mut px = defogged.get(i, j);
                for c in 0..3 {
                    px[c] = defog_sample(px[c], tv, la[c], epsilon);
                }
                defogged.set(i, j, px);
            }
        }
        airlight_used = Some(la);
        transmission = Some(t);
        current = defogged;
    }

    let linear = current.clone();
    if cfg.has(Stage::Gamma) {
        current = gamma_encode(&current, cfg.gamma);
    }

    Ok(SeparateOutcome {
        output: current,
        linear,
        demosaicked,
        gains,
        airlight,
        airlight_used,
        transmission,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::mosaic;
    use crate::fog::{apply_fog, FogParams, DEFAULT_EPSILON};
    use crate::raster::{BayerPhase, Plane};
    use crate::scene::builtin_scene;

    fn opts<'a>() -> SeparateOptions<'a> {
        SeparateOptions::default()
    }

    #[test]
    fn gamma_encode_matches_frozen_value() {
        let img = ColorImage::from_fn(1, 1, |_, _| [0.5, 0.25, 1.0]);
        let enc = gamma_encode(&img, 1.25);
        // 0.5^0.8 and 0.25^0.8.
        assert!((enc.get(0, 0)[0] - 0.574_349_177_498_517_6).abs() < 1e-12);
        assert!((enc.get(0, 0)[1] - 0.329_876_977_693_224_16).abs() < 1e-12);
        assert_eq!(enc.get(0, 0)[2], 1.0);
    }

    #[test]
    fn gamma_round_trip_is_identity() {
        let img = ColorImage::from_fn(8, 8, |i, j| {
            let v = (i * 8 + j) as f64 / 63.0;
            [v, 1.0 - v, v * v]
        });
        for gamma in [0.8, 1.25, 2.2] {
            let back = gamma_decode(&gamma_encode(&img, gamma), gamma);
            for (a, b) in back.pixels().iter().zip(img.pixels()) {
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gamma_clamps_negatives_to_zero() {
        let img = ColorImage::from_fn(1, 1, |_, _| [-0.5, 0.0, 0.5]);
        let enc = gamma_encode(&img, 1.25);
        assert_eq!(enc.get(0, 0)[0], 0.0);
        assert_eq!(enc.get(0, 0)[1], 0.0);
    }

    #[test]
    fn balanced_mosaic_keeps_unit_gains() {
        let h = CfaImage {
            plane: Plane::from_fn(16, 16, |_, _| 0.5),
            phase: BayerPhase::Rggb,
        };
        let (out, gains) = gray_world_white_balance(&h);
        assert_eq!(gains, [1.0; 3]);
        assert_eq!(out.plane, h.plane);
    }

    #[test]
    fn doubled_red_class_gets_half_gain() {
        let h = CfaImage {
            plane: Plane::from_fn(32, 32, |i, j| {
                if BayerPhase::Rggb.color_at(i, j) == CfaColor::R {
                    0.8
                } else {
                    0.4
                }
            }),
            phase: BayerPhase::Rggb,
        };
        let (out, gains) = gray_world_white_balance(&h);
        assert!((gains[0] - 0.5).abs() < 1e-12);
        assert_eq!(gains[1], 1.0);
        assert!((gains[2] - 1.0).abs() < 1e-12);
        // Post-balance class means all equal the green mean.
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for i in 0..32 {
            for j in 0..32 {
                let c = out.color_at(i, j).index();
                sums[c] += out.plane.get(i, j);
                counts[c] += 1;
            }
        }
        for c in 0..3 {
            assert!((sums[c] / counts[c] as f64 - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mean_class_keeps_unit_gain() {
        let h = CfaImage {
            plane: Plane::from_fn(16, 16, |i, j| {
                if BayerPhase::Rggb.color_at(i, j) == CfaColor::B {
                    0.0
                } else {
                    0.5
                }
            }),
            phase: BayerPhase::Rggb,
        };
        let (_, gains) = gray_world_white_balance(&h);
        assert_eq!(gains[2], 1.0);
    }

    #[test]
    fn stage_order_and_duplicates_are_rejected() {
        let bad_order = PipelineConfig {
            gamma: 1.25,
            stages: vec![Stage::Defog, Stage::Demosaick],
        };
        assert!(bad_order.validate().is_err());
        let duplicate = PipelineConfig {
            gamma: 1.25,
            stages: vec![Stage::Demosaick, Stage::Demosaick],
        };
        assert!(duplicate.validate().is_err());
        let missing = PipelineConfig {
            gamma: 1.25,
            stages: vec![Stage::WhiteBalance, Stage::Defog],
        };
        assert!(missing.validate().is_err());
        let full = PipelineConfig {
            gamma: 1.25,
            stages: vec![
                Stage::WhiteBalance,
                Stage::Demosaick,
                Stage::Defog,
                Stage::Gamma,
            ],
        };
        assert!(full.validate().is_ok());
    }

    #[test]
    fn stage_parsing_round_trips() {
        for s in [Stage::WhiteBalance, Stage::Demosaick, Stage::Defog, Stage::Gamma] {
            assert_eq!(s.to_string().parse::<Stage>().unwrap(), s);
        }
        assert!("sharpen".parse::<Stage>().is_err());
    }

    #[test]
    fn fog_free_blocks_pass_through_defog_unchanged() {
        // Fog-free textured blocks: the estimated dark channel is zero, the
        // transmission saturates at one, and defog becomes the identity.
        let (x, _) = builtin_scene("textured-blocks", 64, 64, 4).unwrap();
        let h = mosaic(&x, BayerPhase::Rggb);
        let cfg = PipelineConfig::default();
        let out = separate_pipeline(&h, &cfg, &DcpConfig::default(), DEFAULT_EPSILON, &opts())
            .unwrap();
        let t = out.transmission.as_ref().unwrap();
        assert!(t.plane().data().iter().all(|&v| v == 1.0));
        for (a, b) in out.output.pixels().iter().zip(out.demosaicked.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_airlight_scene_returns_airlight() {
        let h = CfaImage {
            plane: Plane::from_fn(64, 64, |_, _| 0.7),
            phase: BayerPhase::Rggb,
        };
        let cfg = PipelineConfig::default();
        let out = separate_pipeline(&h, &cfg, &DcpConfig::default(), DEFAULT_EPSILON, &opts())
            .unwrap();
        let est = out.airlight.as_ref().unwrap();
        assert!((est.scalar - 0.7).abs() < 1e-9);
        for px in out.output.pixels() {
            for c in 0..3 {
                assert!((px[c] - 0.7).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_transmission_inverts_synthetic_fog() {
        let x = ColorImage::from_fn(48, 48, |_, _| [0.55, 0.4, 0.3]);
        let t = TransmissionMap::constant(48, 48, 0.5).unwrap();
        let params = FogParams::new(0.02, [0.8; 3], DEFAULT_EPSILON).unwrap();
        let y = apply_fog(&x, &t, &params).unwrap();
        let h = mosaic(&y, BayerPhase::Grbg);
        let cfg = PipelineConfig::default();
        let options = SeparateOptions {
            oracle_t: Some(&t),
            oracle_airlight: Some([0.8; 3]),
        };
        let out =
            separate_pipeline(&h, &cfg, &DcpConfig::default(), DEFAULT_EPSILON, &options).unwrap();
        // Per-channel-constant image: bilinear is exact away from the border
        // (mirrored border reads cross color classes), and defog inverts the
        // blend.
        for i in 1..47 {
            for j in 1..47 {
                let px = out.output.get(i, j);
                assert!((px[0] - 0.55).abs() < 1e-12);
                assert!((px[1] - 0.4).abs() < 1e-12);
                assert!((px[2] - 0.3).abs() < 1e-12);
            }
        }
        assert!(out.airlight.is_none());
        assert_eq!(out.airlight_used, Some([0.8; 3]));
        assert!(out.gains.is_none());
    }

    #[test]
    fn white_balance_stage_is_recorded() {
        let (x, _) = builtin_scene("textured-blocks", 48, 48, 7).unwrap();
        let h = mosaic(&x, BayerPhase::Rggb);
        let cfg = PipelineConfig {
            gamma: 1.25,
            stages: vec![Stage::WhiteBalance, Stage::Demosaick, Stage::Gamma],
        };
        let out = separate_pipeline(&h, &cfg, &DcpConfig::default(), DEFAULT_EPSILON, &opts())
            .unwrap();
        assert!(out.gains.is_some());
        assert!(out.transmission.is_none());
        // Gamma ran: output differs from linear but decodes back to it.
        let back = gamma_decode(&out.output, 1.25);
        for (a, b) in back.pixels().iter().zip(out.linear.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }
}
