//! Fog forward model, its inverse, and the sensor noise model.
//!
//! Fog at distance d transmits the fraction `t = exp(-beta * d)` of scene
//! radiance and fills the rest with airlight:
//!
//! ```text
//! y = t * x + (1 - t) * l_a
//! ```
//!
//! With t and l_a known the model inverts as
//! `x = (y - l_a) / max(t, eps) + l_a`; the floor `eps` bounds the noise
//! amplification that division by small t would otherwise make unbounded.
//!
//! The sensor sees `s = p + n` with `p ~ Poisson(gain * y) / gain` (photon
//! shot noise at `gain` photons per unit radiance) and `n ~ N(0, sigma^2)`
//! readout noise, giving `var(s) = y / gain + sigma^2`. As t tends to 0 the
//! variance tends to `l_a / gain + sigma^2`: fog does not reduce sensor
//! noise even though it erases scene contrast, and defogging then multiplies
//! the variance by `1 / max(t, eps)^2`.

use crate::error::{Error, Result};
use crate::raster::{ColorImage, DepthMap, TransmissionMap};
use crate::rng::pixel_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

/// Photons per unit radiance used when no other value is configured. On
/// [0, 1] data the Poisson rate needs a count scale to be meaningful.
pub const DEFAULT_GAIN: f64 = 1000.0;

/// Default transmission floor; bounds defog amplification at 1e4 on the
/// variance.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Scattering coefficient, airlight, and the defog stability floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FogParams {
    /// Scattering coefficient in 1/m, spatially and spectrally constant.
    pub beta: f64,
    /// Airlight radiance per channel, each in (0, 1].
    pub airlight: [f64; 3],
    /// Transmission floor for the inverse model.
    pub epsilon: f64,
}

impl FogParams {
    pub fn new(beta: f64, airlight: [f64; 3], epsilon: f64) -> Result<FogParams> {
        let p = FogParams {
            beta,
            airlight,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::parameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        for (k, &a) in self.airlight.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 || a > 1.0 {
                return Err(Error::parameter(format!(
                    "airlight channel {k} must lie in (0, 1], got {a}"
                )));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon >= 1.0 {
            return Err(Error::parameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Scalar airlight for a white-balanced image, where all three channels
    /// agree; falls back to the mean when they do not.
    pub fn airlight_scalar(&self) -> f64 {
        (self.airlight[0] + self.airlight[1] + self.airlight[2]) / 3.0
    }
}

/// Readout noise level and the seed of the deterministic noise field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Readout standard deviation in linear radiance units.
    pub sigma: f64,
    /// Seed of the per-pixel stream family.
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(sigma: f64, seed: u64) -> Result<NoiseParams> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::parameter(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseParams { sigma, seed })
    }
}

/// `t(i,j) = exp(-beta * d(i,j))`, always in (0, 1] for finite depth.
pub fn transmission_from_depth(depth: &DepthMap, beta: f64) -> Result<TransmissionMap> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::parameter(format!("beta must be >= 0, got {beta}")));
    }
    TransmissionMap::new(depth.plane().map(|d| (-beta * d).exp()))
}

/// Forward fog blend `y = t * x + (1 - t) * l_a`, per channel.
pub fn apply_fog(x: &ColorImage, t: &TransmissionMap, params: &FogParams) -> Result<ColorImage> {
    params.validate()?;
    check_dims(x, t)?;
    let la = params.airlight;
    let tp = t.plane();
    let mut out = x.clone();
    for (idx, px) in out.pixels_mut().iter_mut().enumerate() {
        let tv = tp.data()[idx];
        for k in 0..3 {
            px[k] = tv * px[k] + (1.0 - tv) * la[k];
        }
    }
    Ok(out)
}

/// Inverse model `x = (y - l_a) / max(t, eps) + l_a`. Exact inverse of
/// [`apply_fog`] wherever `t >= eps`; no clamping here.
pub fn defog(y: &ColorImage, t: &TransmissionMap, params: &FogParams) -> Result<ColorImage> {
    params.validate()?;
    check_dims(y, t)?;
    let la = params.airlight;
    let eps = params.epsilon;
    let tp = t.plane();
    let mut out = y.clone();
    for (idx, px) in out.pixels_mut().iter_mut().enumerate() {
        let tv = tp.data()[idx].max(eps);
        for k in 0..3 {
            px[k] = (px[k] - la[k]) / tv + la[k];
        }
    }
    Ok(out)
}

/// Scalar form of the inverse model, for CFA-domain and fallback use.
#[inline]
pub fn defog_sample(y: f64, t: f64, la: f64, epsilon: f64) -> f64 {
    (y - la) / t.max(epsilon) + la
}

/// Poisson-Gaussian sensor: per pixel and channel, `s = Poisson(gain*y)/gain
/// + N(0, sigma^2)`. Deterministic given the seed; pixel streams are
/// independent of visit order.
pub fn add_sensor_noise(y: &ColorImage, params: &NoiseParams, gain: f64) -> ColorImage {
    assert!(gain > 0.0, "gain must be positive");
    let width = y.width();
    let sigma = params.sigma;
    let mut out = y.clone();
    for (idx, px) in out.pixels_mut().iter_mut().enumerate() {
        let (i, j) = (idx / width, idx % width);
        for k in 0..3 {
            px[k] = noisy_sample(px[k], params.seed, i, j, k, sigma, gain);
        }
    }
    out
}

/// One noisy draw for a single sample site. Exposed so CFA-domain synthesis
/// can key channel streams by the mosaic's color index.
pub fn noisy_sample(
    y: f64,
    seed: u64,
    i: usize,
    j: usize,
    channel: usize,
    sigma: f64,
    gain: f64,
) -> f64 {
    let mut rng = pixel_rng(seed, i, j, channel);
    let lambda = (gain * y).max(0.0);
    // Poisson(0) is identically 0; rand_distr rejects lambda = 0, so skip
    // the draw but keep the stream position by discarding one value.
    let p = if lambda > 0.0 {
        Poisson::new(lambda).expect("lambda is positive and finite").sample(&mut rng) / gain
    } else {
        let _ = rng.gen::<u64>();
        0.0
    };
    let n = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma is positive and finite").sample(&mut rng)
    } else {
        0.0
    };
    p + n
}

/// Per-channel variance of the noisy observation of a scene pixel seen
/// through fog: `var = (t*x + (1-t)*l_a)/gain + sigma^2`.
pub fn predicted_noise_variance(
    t: f64,
    x: [f64; 3],
    fog: &FogParams,
    noise: &NoiseParams,
    gain: f64,
) -> [f64; 3] {
    debug_assert!((0.0..=1.0).contains(&t));
    let mut out = [0.0; 3];
    for k in 0..3 {
        let y = t * x[k] + (1.0 - t) * fog.airlight[k];
        out[k] = y / gain + noise.sigma * noise.sigma;
    }
    out
}

/// Variance after defogging: division by `max(t, eps)` squares in variance.
pub fn amplified_noise_variance(t: f64, base_variance: [f64; 3], epsilon: f64) -> [f64; 3] {
    let d = t.max(epsilon);
    base_variance.map(|v| v / (d * d))
}

fn check_dims(img: &ColorImage, t: &TransmissionMap) -> Result<()> {
    if img.width() != t.plane().width() || img.height() != t.plane().height() {
        return Err(Error::dimension(format!(
            "image {}x{} vs transmission {}x{}",
            img.width(),
            img.height(),
            t.plane().width(),
            t.plane().height()
        )));
    }
    Ok(())
}
