//! Raw-domain joint defogging and demosaicking.
//!
//! Fog attenuates scene radiance toward the airlight before the sensor
//! samples it through a Bayer mosaic, so by the time a raw frame exists the
//! two degradations are entangled: inverting the fog amplifies sensor noise
//! wherever transmission is low, and demosaicking smears that amplified
//! noise across channels. This crate restores in the raw domain jointly
//! instead of running the two steps back to back.
//!
//! Pipeline, by module:
//!
//! * [`raster`] / [`io`] — containers and 16-bit file formats with JSON sidecars.
//! * [`fog`] — Koschmieder forward model `y = t*x + (1-t)*l_a`, its inverse,
//!   and the Poisson-Gaussian sensor noise model with amplification analysis.
//! * [`cfa`] — Bayer mosaicking, single-color sublattices, bilinear baseline.
//! * [`transmission`] — dark-channel transmission and airlight estimation,
//!   working directly on the mosaic as well as on RGB.
//! * [`tls`] — the joint solver: per pixel, a constrained total least squares
//!   regression learned from same-color patches whose covariances are
//!   corrected for fog attenuation and sensor noise.
//! * [`pipeline`] — the separate baseline (demosaick, then defog) plus white
//!   balance and gamma stages.
//! * [`metrics`] — PSNR and the blind contrast scores (e, r-bar).
//! * [`scene`] — synthetic scenes with ground-truth radiance, depth, and all
//!   intermediate observations.

pub mod cfa;
pub mod error;
pub mod fog;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod tls;
pub mod transmission;

pub use error::{Error, Result};
