//! Raster containers and indexing primitives shared by every other module.
//!
//! Three storage shapes cover the whole pipeline: a scalar [`Plane`], a
//! three-channel [`ColorImage`], and a [`CfaImage`] pairing a plane with the
//! Bayer phase that says which color each photosite sees. [`DepthMap`] and
//! [`TransmissionMap`] are validated newtypes over [`Plane`].
//!
//! Values are linear radiance, nominally in [0, 1]; sensor noise may push
//! them slightly outside and nothing here clamps. Quantization and clamping
//! happen only at file boundaries (see the `io` module).
//!
//! Indexing is `(i, j)` = (row, column), row-major storage. Out-of-bounds
//! reads used by patch extraction and windowed filters are resolved by
//! symmetric mirror extension with edge repeat, so every patch center is
//! valid on every image size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three CFA color classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CfaColor {
    R,
    G,
    B,
}

impl CfaColor {
    /// Channel index into a `[f64; 3]` pixel.
    pub fn index(self) -> usize {
        match self {
            CfaColor::R => 0,
            CfaColor::G => 1,
            CfaColor::B => 2,
        }
    }

    pub const ALL: [CfaColor; 3] = [CfaColor::R, CfaColor::G, CfaColor::B];
}

impl std::fmt::Display for CfaColor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CfaColor::R => "R",
            CfaColor::G => "G",
            CfaColor::B => "B",
        };
        f.write_str(s)
    }
}

/// Bayer arrangement of the top-left 2x2 tile, named row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPhase {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPhase {
    pub const ALL: [BayerPhase; 4] = [
        BayerPhase::Rggb,
        BayerPhase::Grbg,
        BayerPhase::Gbrg,
        BayerPhase::Bggr,
    ];

    /// Color seen by the photosite at row `i`, column `j`.
    pub fn color_at(self, i: usize, j: usize) -> CfaColor {
        use CfaColor::*;
        match (self, i % 2, j % 2) {
            (BayerPhase::Rggb, 0, 0) => R,
            (BayerPhase::Rggb, 0, 1) => G,
            (BayerPhase::Rggb, 1, 0) => G,
            (BayerPhase::Rggb, 1, 1) => B,
            (BayerPhase::Grbg, 0, 0) => G,
            (BayerPhase::Grbg, 0, 1) => R,
            (BayerPhase::Grbg, 1, 0) => B,
            (BayerPhase::Grbg, 1, 1) => G,
            (BayerPhase::Gbrg, 0, 0) => G,
            (BayerPhase::Gbrg, 0, 1) => B,
            (BayerPhase::Gbrg, 1, 0) => R,
            (BayerPhase::Gbrg, 1, 1) => G,
            (BayerPhase::Bggr, 0, 0) => B,
            (BayerPhase::Bggr, 0, 1) => G,
            (BayerPhase::Bggr, 1, 0) => G,
            (BayerPhase::Bggr, 1, 1) => R,
            _ => unreachable!("i % 2 and j % 2 are in {{0, 1}}"),
        }
    }

    /// In-tile offsets `(i0, j0)` at which `color` sits: one for R and B,
    /// two for G.
    pub fn origins(self, color: CfaColor) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2);
        for i0 in 0..2 {
            for j0 in 0..2 {
                if self.color_at(i0, j0) == color {
                    out.push((i0, j0));
                }
            }
        }
        out
    }
}

impl std::str::FromStr for BayerPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPhase::Rggb),
            "GRBG" => Ok(BayerPhase::Grbg),
            "GBRG" => Ok(BayerPhase::Gbrg),
            "BGGR" => Ok(BayerPhase::Bggr),
            other => Err(Error::Parameter(format!("unknown Bayer phase {other:?}"))),
        }
    }
}

impl std::fmt::Display for BayerPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BayerPhase::Rggb => "RGGB",
            BayerPhase::Grbg => "GRBG",
            BayerPhase::Gbrg => "GBRG",
            BayerPhase::Bggr => "BGGR",
        };
        f.write_str(s)
    }
}

/// Fold an unbounded index into `[0, n)` by symmetric mirror reflection with
/// edge repeat: `..., 1, 0, 0, 1, ..., n-1, n-1, n-2, ...` The period is
/// `2n`, so a 1-wide axis maps every index to 0.
pub fn mirror_fold(x: i64, n: usize) -> usize {
    debug_assert!(n > 0);
    let period = 2 * n as i64;
    let m = x.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Single-channel raster, row-major `f64` storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    /// Zero-filled plane. Panics on zero dimensions: a raster with no pixels
    /// is a programming error, not a recoverable condition.
    pub fn new(width: usize, height: usize) -> Plane {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Plane> {
        if width == 0 || height == 0 {
            return Err(Error::parameter("plane dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::dimension(format!(
                "plane data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Plane {
        let mut p = Plane::new(width, height);
        for i in 0..height {
            for j in 0..width {
                p.data[i * width + j] = f(i, j);
            }
        }
        p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j] = v;
    }

    /// Read with symmetric mirror extension on both axes.
    #[inline]
    pub fn get_mirror(&self, i: i64, j: i64) -> f64 {
        let ii = if i >= 0 && (i as usize) < self.height {
            i as usize
        } else {
            mirror_fold(i, self.height)
        };
        let jj = if j >= 0 && (j as usize) < self.width {
            j as usize
        } else {
            mirror_fold(j, self.width)
        };
        self.data[ii * self.width + jj]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Row-major vectorization of the `(2*half+1)^2` window centered at
    /// `center`, sampling every `stride` pixels, mirror-extended at borders.
    pub fn patch(&self, center: (usize, usize), half: usize, stride: usize) -> Vec<f64> {
        let side = 2 * half + 1;
        let mut out = Vec::with_capacity(side * side);
        let (ci, cj) = (center.0 as i64, center.1 as i64);
        let s = stride as i64;
        for ki in -(half as i64)..=(half as i64) {
            for kj in -(half as i64)..=(half as i64) {
                out.push(self.get_mirror(ci + ki * s, cj + kj * s));
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Three-channel raster; pixels stored as `[r, g, b]` triples, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> ColorImage {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        ColorImage {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<ColorImage> {
        if width == 0 || height == 0 {
            return Err(Error::parameter("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::dimension(format!(
                "image data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(ColorImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> ColorImage {
        let mut img = ColorImage::new(width, height);
        for i in 0..height {
            for j in 0..width {
                img.data[i * width + j] = f(i, j);
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: [f64; 3]) {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j] = v;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    /// Copy of channel `k` as a standalone plane.
    pub fn plane(&self, k: usize) -> Plane {
        assert!(k < 3);
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|px| px[k]).collect(),
        }
    }

    pub fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> ColorImage {
        ColorImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&px| f(px)).collect(),
        }
    }

    pub fn same_size(&self, other: &ColorImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Bayer mosaic raster: one sample per pixel plus the phase that names it.
#[derive(Clone, Debug, PartialEq)]
pub struct CfaImage {
    pub plane: Plane,
    pub phase: BayerPhase,
}

impl CfaImage {
    pub fn new(plane: Plane, phase: BayerPhase) -> CfaImage {
        CfaImage { plane, phase }
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn color_at(&self, i: usize, j: usize) -> CfaColor {
        self.phase.color_at(i, j)
    }
}

/// Per-pixel scene distance in meters. Finite and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    plane: Plane,
}

impl DepthMap {
    pub fn new(plane: Plane) -> Result<DepthMap> {
        for &d in plane.data() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::parameter(format!("depth must be finite and >= 0, got {d}")));
            }
        }
        Ok(DepthMap { plane })
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn into_plane(self) -> Plane {
        self.plane
    }
}

/// Per-pixel transmission t in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMap {
    plane: Plane,
}

impl TransmissionMap {
    pub fn new(plane: Plane) -> Result<TransmissionMap> {
        for &t in plane.data() {
            if !t.is_finite() || t <= 0.0 || t > 1.0 {
                return Err(Error::parameter(format!(
                    "transmission must lie in (0, 1], got {t}"
                )));
            }
        }
        Ok(TransmissionMap { plane })
    }

    /// Constant transmission map, e.g. for fog-free processing (t = 1).
    pub fn constant(width: usize, height: usize, t: f64) -> Result<TransmissionMap> {
        TransmissionMap::new(Plane::from_fn(width, height, |_, _| t))
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<TransmissionMap> {
        TransmissionMap::new(Plane::from_fn(width, height, f))
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plane.get(i, j)
    }

    pub fn into_plane(self) -> Plane {
        self.plane
    }
}
