//! 16-bit image file I/O with JSON metadata sidecars.
//!
//! Three on-disk shapes:
//!
//! * CFA mosaics: `P5`-style binary gray, 16-bit big-endian samples, maxval
//!   65535, with a mandatory sidecar carrying at least the Bayer phase.
//!   A mosaic without a phase is meaningless, so there is no default.
//! * Color images: `P6`-style binary RGB in the same sample format, or
//!   16-bit RGB PNG; chosen by extension (`.ppm` / `.png`).
//! * Scalar planes (depth, transmission): raw 32-bit little-endian floats,
//!   dimensions carried by the sidecar.
//!
//! The sidecar for `foo.pgm` lives at `foo.meta.json`. Values clamp to
//! [0, 1] and quantize by `round(v * 65535)` on save; loads divide by 65535.
//! Saves are deterministic: identical rasters produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BayerPhase, CfaImage, ColorImage, Plane};

/// Everything a raster file may need to carry beside its samples. All
/// fields optional at the serialization level; loaders enforce what they
/// require (phase for CFA, dimensions for raw planes).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sidecar {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<BayerPhase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub airlight: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Sidecar {
    /// Sidecar path for an image path: extension replaced by `meta.json`.
    pub fn path_for(image: &Path) -> PathBuf {
        image.with_extension("meta.json")
    }

    pub fn save(&self, image_path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("sidecar serialization: {e}")))?;
        fs::write(Sidecar::path_for(image_path), text + "\n")?;
        Ok(())
    }

    /// Load the sidecar next to `image_path`; `Ok(None)` if absent.
    pub fn load(image_path: &Path) -> Result<Option<Sidecar>> {
        let p = Sidecar::path_for(image_path);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p)?;
        let sc = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("sidecar {}: {e}", p.display())))?;
        Ok(Some(sc))
    }

    fn check_dims(&self, width: usize, height: usize, what: &str) -> Result<()> {
        if let (Some(w), Some(h)) = (self.width, self.height) {
            if w != width || h != height {
                return Err(Error::dimension(format!(
                    "{what} is {width}x{height} but sidecar says {w}x{h}"
                )));
            }
        }
        Ok(())
    }
}

#[inline]
pub fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[inline]
pub fn dequantize16(q: u16) -> f64 {
    q as f64 / 65535.0
}

// ---- P5 / P6 -----------------------------------------------------------

fn write_pnm_header(out: &mut Vec<u8>, magic: &str, width: usize, height: usize) {
    out.extend_from_slice(format!("{magic}\n{width} {height}\n65535\n").as_bytes());
}

/// Token scanner over a PNM header: skips whitespace and `#` comments.
struct PnmReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        PnmReader { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("truncated header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("bad header token {:?}", String::from_utf8_lossy(tok))))
    }

    /// Consume the single whitespace byte separating maxval from samples.
    fn payload(mut self) -> Result<&'a [u8]> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(Error::format("missing separator before pixel data"));
        }
        self.pos += 1;
        Ok(&self.bytes[self.pos..])
    }
}

fn parse_pnm(bytes: &[u8], magic: &str, samples_per_pixel: usize) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = PnmReader::new(bytes);
    let got = r.token()?;
    if got != magic.as_bytes() {
        return Err(Error::format(format!(
            "expected {magic} header, got {:?}",
            String::from_utf8_lossy(got)
        )));
    }
    let width = r.number()?;
    let height = r.number()?;
    let maxval = r.number()?;
    if maxval != 65535 {
        return Err(Error::format(format!(
            "only 16-bit files supported (maxval 65535), got {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero image dimension"));
    }
    let payload = r.payload()?;
    let need = width * height * samples_per_pixel * 2;
    if payload.len() < need {
        return Err(Error::format(format!(
            "truncated pixel data: need {need} bytes, have {}",
            payload.len()
        )));
    }
    let vals = payload[..need]
        .chunks_exact(2)
        .map(|b| dequantize16(u16::from_be_bytes([b[0], b[1]])))
        .collect();
    Ok((width, height, vals))
}

// ---- CFA ---------------------------------------------------------------

/// Write the mosaic as 16-bit `P5` plus its sidecar. The sidecar's phase
/// and dimensions are taken from the image, not the caller.
pub fn save_cfa(h: &CfaImage, path: &Path, meta: &Sidecar) -> Result<()> {
    let mut out = Vec::with_capacity(h.plane.len() * 2 + 32);
    write_pnm_header(&mut out, "P5", h.width(), h.height());
    for &v in h.plane.data() {
        out.extend_from_slice(&quantize16(v).to_be_bytes());
    }
    fs::write(path, &out)?;
    let mut sc = meta.clone();
    sc.phase = Some(h.phase);
    sc.width = Some(h.width());
    sc.height = Some(h.height());
    sc.save(path)
}

pub fn load_cfa(path: &Path) -> Result<(CfaImage, Sidecar)> {
    let bytes = fs::read(path)?;
    let (width, height, vals) = parse_pnm(&bytes, "P5", 1)?;
    let sc = Sidecar::load(path)?.ok_or_else(|| {
        Error::Metadata(format!(
            "missing phase metadata: no sidecar at {}",
            Sidecar::path_for(path).display()
        ))
    })?;
    let phase = sc
        .phase
        .ok_or_else(|| Error::Metadata("missing phase metadata in sidecar".into()))?;
    sc.check_dims(width, height, "CFA file")?;
    let plane = Plane::from_vec(width, height, vals)?;
    Ok((CfaImage::new(plane, phase), sc))
}

// ---- Color -------------------------------------------------------------

pub fn save_color_ppm(img: &ColorImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.pixels().len() * 6 + 32);
    write_pnm_header(&mut out, "P6", img.width(), img.height());
    for px in img.pixels() {
        for &v in px {
            out.extend_from_slice(&quantize16(v).to_be_bytes());
        }
    }
    fs::write(path, &out)?;
    Ok(())
}

pub fn load_color_ppm(path: &Path) -> Result<ColorImage> {
    let bytes = fs::read(path)?;
    let (width, height, vals) = parse_pnm(&bytes, "P6", 3)?;
    let data = vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    ColorImage::from_vec(width, height, data)
}

pub fn save_color_png(img: &ColorImage, path: &Path) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(
        img.width() as u32,
        img.height() as u32,
    );
    for (i, row) in buf.rows_mut().enumerate() {
        for (j, px) in row.enumerate() {
            let v = img.get(i, j);
            *px = image::Rgb([quantize16(v[0]), quantize16(v[1]), quantize16(v[2])]);
        }
    }
    image::DynamicImage::ImageRgb16(buf)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(format!("png encode {}: {e}", path.display())))
}

pub fn load_color_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path)
        .map_err(|e| Error::format(format!("png decode {}: {e}", path.display())))?
        .into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| [dequantize16(p[0]), dequantize16(p[1]), dequantize16(p[2])])
        .collect();
    ColorImage::from_vec(w, h, data)
}

/// Save a color image in the format named by the extension (.ppm or .png).
pub fn save_color(img: &ColorImage, path: &Path) -> Result<()> {
    match extension(path)?.as_str() {
        "ppm" => save_color_ppm(img, path),
        "png" => save_color_png(img, path),
        other => Err(Error::parameter(format!(
            "unsupported color image extension {other:?} (use .ppm or .png)"
        ))),
    }
}

pub fn load_color(path: &Path) -> Result<ColorImage> {
    match extension(path)?.as_str() {
        "ppm" => load_color_ppm(path),
        "png" => load_color_png(path),
        other => Err(Error::parameter(format!(
            "unsupported color image extension {other:?} (use .ppm or .png)"
        ))),
    }
}

// ---- Raw float planes --------------------------------------------------

/// Raw little-endian f32 dump of a plane (depth, transmission); dimensions
/// go into the sidecar because the payload has no header.
pub fn save_plane_f32(plane: &Plane, path: &Path, meta: &Sidecar) -> Result<()> {
    let mut out = Vec::with_capacity(plane.len() * 4);
    for &v in plane.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, &out)?;
    let mut sc = meta.clone();
    sc.width = Some(plane.width());
    sc.height = Some(plane.height());
    sc.save(path)
}

pub fn load_plane_f32(path: &Path) -> Result<(Plane, Sidecar)> {
    let sc = Sidecar::load(path)?.ok_or_else(|| {
        Error::Metadata(format!(
            "raw float plane needs a sidecar with width/height at {}",
            Sidecar::path_for(path).display()
        ))
    })?;
    let (width, height) = match (sc.width, sc.height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => {
            return Err(Error::Metadata(
                "sidecar missing width/height for raw float plane".into(),
            ))
        }
    };
    let bytes = fs::read(path)?;
    let need = width * height * 4;
    if bytes.len() < need {
        return Err(Error::format(format!(
            "truncated float plane: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    let vals = bytes[..need]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let plane = Plane::from_vec(width, height, vals)?;
    Ok((plane, sc))
}

// ---- Generic entry point ----------------------------------------------

pub enum LoadedImage {
    Color(ColorImage),
    Cfa(CfaImage, Sidecar),
}

/// Load whatever the extension says the file is: `.pgm` is a CFA mosaic
/// (sidecar mandatory), `.ppm`/`.png` are color images.
pub fn load_image(path: &Path) -> Result<LoadedImage> {
    match extension(path)?.as_str() {
        "pgm" => {
            let (h, sc) = load_cfa(path)?;
            Ok(LoadedImage::Cfa(h, sc))
        }
        "ppm" | "png" => Ok(LoadedImage::Color(load_color(path)?)),
        other => Err(Error::parameter(format!(
            "unsupported image extension {other:?} (use .pgm, .ppm or .png)"
        ))),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::parameter(format!("path {} has no extension", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::CfaColor;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn quantize_clamps_and_rounds() {
        assert_eq!(quantize16(1.0), 65535);
        assert_eq!(quantize16(1.25), 65535);
        assert_eq!(quantize16(-0.01), 0);
        assert_eq!(quantize16(0.0), 0);
        assert_eq!(quantize16(0.5), 32768);
    }

    #[test]
    fn load_cfa_handwritten_file() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        let mut bytes: Vec<u8> = b"P5\n2 2\n65535\n".to_vec();
        for q in [0u16, 65535, 32768, 0] {
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        fs::write(&p, &bytes).unwrap();
        fs::write(
            Sidecar::path_for(&p),
            r#"{"phase": "RGGB", "beta": 0.02}"#,
        )
        .unwrap();

        let (h, sc) = load_cfa(&p).unwrap();
        assert_eq!(h.phase, BayerPhase::Rggb);
        assert_eq!(sc.beta, Some(0.02));
        assert_eq!(h.plane.get(0, 0), 0.0);
        assert_eq!(h.plane.get(0, 1), 1.0);
        assert!((h.plane.get(1, 0) - 0.5000076).abs() < 1e-7);
        assert_eq!(h.plane.get(1, 1), 0.0);
        assert_eq!(h.color_at(0, 0), CfaColor::R);
    }

    #[test]
    fn cfa_without_sidecar_is_an_error() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        let mut bytes: Vec<u8> = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&0u16.to_be_bytes());
        fs::write(&p, &bytes).unwrap();
        let err = load_cfa(&p).unwrap_err();
        assert!(matches!(err, Error::Metadata(_)), "{err}");
        assert!(err.to_string().contains("phase"));
    }

    #[test]
    fn cfa_sidecar_without_phase_is_an_error() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        let mut bytes: Vec<u8> = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&0u16.to_be_bytes());
        fs::write(&p, &bytes).unwrap();
        fs::write(Sidecar::path_for(&p), "{}").unwrap();
        assert!(matches!(load_cfa(&p).unwrap_err(), Error::Metadata(_)));
    }

    #[test]
    fn eight_bit_files_rejected() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        fs::write(&p, b"P5\n1 1\n255\n\x00").unwrap();
        fs::write(Sidecar::path_for(&p), r#"{"phase": "RGGB"}"#).unwrap();
        let err = load_cfa(&p).unwrap_err();
        assert!(err.to_string().contains("65535"), "{err}");
    }

    #[test]
    fn cfa_round_trip_bytes() {
        let dir = tmp();
        let p1 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        let plane = Plane::from_fn(6, 4, |i, j| ((i * 7 + j * 13) % 97) as f64 / 97.0);
        let h = CfaImage::new(plane, BayerPhase::Gbrg);
        save_cfa(&h, &p1, &Sidecar::default()).unwrap();
        let (h2, _) = load_cfa(&p1).unwrap();
        save_cfa(&h2, &p2, &Sidecar::default()).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read_to_string(Sidecar::path_for(&p1)).unwrap(),
            fs::read_to_string(Sidecar::path_for(&p2)).unwrap()
        );
    }

    #[test]
    fn color_round_trip_quantized_values_stable() {
        let dir = tmp();
        let img = ColorImage::from_fn(8, 8, |i, j| {
            [
                ((i * 31 + j) % 53) as f64 / 53.0,
                ((i + j * 17) % 41) as f64 / 41.0,
                ((i * 3 + j * 7) % 29) as f64 / 29.0,
            ]
        });
        for name in ["x.ppm", "x.png"] {
            let p1 = dir.path().join(name);
            let p2 = dir.path().join(format!("again_{name}"));
            save_color(&img, &p1).unwrap();
            let once = load_color(&p1).unwrap();
            save_color(&once, &p2).unwrap();
            let twice = load_color(&p2).unwrap();
            // One quantization is lossy; a second is the identity.
            assert_eq!(once, twice, "{name}");
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap(), "{name}");
            let max_err = img
                .pixels()
                .iter()
                .zip(once.pixels())
                .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
                .fold(0.0, f64::max);
            assert!(max_err <= 0.5 / 65535.0 + 1e-12, "{name}: {max_err}");
        }
    }

    #[test]
    fn float_plane_round_trip() {
        let dir = tmp();
        let p = dir.path().join("d.f32");
        let plane = Plane::from_fn(5, 3, |i, j| (i as f64 * 10.0 + j as f64) * 1.5);
        save_plane_f32(&plane, &p, &Sidecar::default()).unwrap();
        let (back, sc) = load_plane_f32(&p).unwrap();
        assert_eq!(sc.width, Some(5));
        assert_eq!(sc.height, Some(3));
        assert_eq!(back.width(), 5);
        assert_eq!(back.height(), 3);
        for (a, b) in plane.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6, "f32 precision: {a} vs {b}");
        }
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        fs::write(&p, b"P5\n4 4\n65535\n\x00\x01").unwrap();
        fs::write(Sidecar::path_for(&p), r#"{"phase": "RGGB"}"#).unwrap();
        assert!(matches!(load_cfa(&p).unwrap_err(), Error::Format(_)));
    }

    #[test]
    fn dimension_mismatch_with_sidecar_detected() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        let mut bytes: Vec<u8> = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        fs::write(&p, &bytes).unwrap();
        fs::write(
            Sidecar::path_for(&p),
            r#"{"phase": "RGGB", "width": 4, "height": 4}"#,
        )
        .unwrap();
        assert!(matches!(load_cfa(&p).unwrap_err(), Error::Dimension(_)));
    }

    proptest::proptest! {
        #[test]
        fn quantization_round_trip_stays_within_half_step(v in -0.5f64..1.5) {
            let back = dequantize16(quantize16(v));
            let clamped = v.clamp(0.0, 1.0);
            proptest::prop_assert!((back - clamped).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}
