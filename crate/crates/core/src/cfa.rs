//! Bayer mosaicking, single-color sublattices, and the bilinear baseline.
//!
//! A mosaic keeps one color sample per pixel, `g(i,j) = phi(i,j)^T x(i,j)`.
//! Downsampling the mosaic by 2 in both directions from an origin that
//! addresses color k yields a plane containing only k samples; those
//! sublattices are where the joint solver learns its per-pixel regressions,
//! because on them the sampling structure disappears and ordinary
//! autoregression applies.
//!
//! Fogging commutes with mosaicking for a white-balanced airlight:
//! `mosaic(t*x + (1-t)*l_a) = t*mosaic(x) + (1-t)*l_a` holds exactly when
//! all airlight channels agree, which is the observation model the solver
//! inverts.
//!
//! [`bilinear_demosaick`] is the deliberately plain baseline: 2- and
//! 4-neighbor averages per site class. It is linear, so it commutes with
//! adding a constant, and it exhibits the zipper artifacts near edges that
//! the joint method is designed to avoid.

use crate::error::{Error, Result};
use crate::raster::{BayerPhase, CfaColor, CfaImage, ColorImage, Plane};

/// Keep the channel selected by the phase at each pixel.
pub fn mosaic(x: &ColorImage, phase: BayerPhase) -> CfaImage {
    let plane = Plane::from_fn(x.width(), x.height(), |i, j| {
        x.get(i, j)[phase.color_at(i, j).index()]
    });
    CfaImage::new(plane, phase)
}

/// One single-color stride-2 view of a mosaic, materialized as a plane
/// together with the mapping back to image coordinates.
#[derive(Clone, Debug)]
pub struct Sublattice {
    pub color: CfaColor,
    /// In-tile offset (i0, j0) of the sites this view addresses.
    pub origin: (usize, usize),
    /// ceil((height - i0) / 2) x ceil((width - j0) / 2) plane of samples.
    pub plane: Plane,
    image_width: usize,
    image_height: usize,
}

impl Sublattice {
    /// Extract the sublattice at `origin`; errors if the origin does not
    /// address `color` under the mosaic's phase.
    pub fn from_cfa(h: &CfaImage, color: CfaColor, origin: (usize, usize)) -> Result<Sublattice> {
        let (i0, j0) = origin;
        if i0 > 1 || j0 > 1 {
            return Err(Error::parameter(format!(
                "sublattice origin must lie in the 2x2 tile, got ({i0}, {j0})"
            )));
        }
        if h.phase.color_at(i0, j0) != color {
            return Err(Error::parameter(format!(
                "origin ({i0}, {j0}) addresses {} under phase {}, not {}",
                h.phase.color_at(i0, j0),
                h.phase,
                color
            )));
        }
        if h.height() <= i0 || h.width() <= j0 {
            return Err(Error::dimension(format!(
                "image {}x{} has no site at origin ({i0}, {j0})",
                h.width(),
                h.height()
            )));
        }
        let ph = (h.height() - i0).div_ceil(2);
        let pw = (h.width() - j0).div_ceil(2);
        let plane = Plane::from_fn(pw, ph, |u, v| h.plane.get(i0 + 2 * u, j0 + 2 * v));
        Ok(Sublattice {
            color,
            origin,
            plane,
            image_width: h.width(),
            image_height: h.height(),
        })
    }

    /// Image coordinates of the site at plane coordinates (u, v).
    #[inline]
    pub fn site(&self, u: usize, v: usize) -> (usize, usize) {
        (self.origin.0 + 2 * u, self.origin.1 + 2 * v)
    }

    /// Plane coordinates of the site nearest to image pixel (i, j), ties
    /// resolved toward the larger index. Always a valid in-image site.
    pub fn nearest_site(&self, i: usize, j: usize) -> (usize, usize) {
        let fold = |x: usize, o: usize, n: usize| -> usize {
            let d = x as i64 - o as i64;
            let u = (d + 1).div_euclid(2);
            u.clamp(0, n as i64 - 1) as usize
        };
        (
            fold(i, self.origin.0, self.plane.height()),
            fold(j, self.origin.1, self.plane.width()),
        )
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }
}

/// All sublattices of a mosaic: R, B, and both G origins, in the order
/// the phase enumerates them.
pub fn sublattices(h: &CfaImage, color: CfaColor) -> Result<Vec<Sublattice>> {
    h.phase
        .origins(color)
        .into_iter()
        .map(|origin| Sublattice::from_cfa(h, color, origin))
        .collect()
}

/// Plain bilinear demosaicking: observed samples pass through, missing
/// colors are filled by the average of the nearest same-color neighbors
/// (2 along a row or column, or 4 across / diagonal), mirror-extended at
/// borders.
pub fn bilinear_demosaick(h: &CfaImage) -> ColorImage {
    let (w, ht) = (h.width(), h.height());
    let phase = h.phase;
    let p = &h.plane;
    ColorImage::from_fn(w, ht, |i, j| {
        let own = phase.color_at(i, j);
        let (ii, jj) = (i as i64, j as i64);
        let mut px = [0.0; 3];
        for color in CfaColor::ALL {
            let k = color.index();
            px[k] = if color == own {
                p.get(i, j)
            } else if color == CfaColor::G {
                // G is absent only at R/B sites, where all 4-neighbors are G.
                0.25 * (p.get_mirror(ii - 1, jj)
                    + p.get_mirror(ii + 1, jj)
                    + p.get_mirror(ii, jj - 1)
                    + p.get_mirror(ii, jj + 1))
            } else if phase.color_at(i, j + 1) == color {
                // Same row holds this color: horizontal neighbors.
                0.5 * (p.get_mirror(ii, jj - 1) + p.get_mirror(ii, jj + 1))
            } else if phase.color_at(i + 1, j) == color {
                // Same column holds this color: vertical neighbors.
                0.5 * (p.get_mirror(ii - 1, jj) + p.get_mirror(ii + 1, jj))
            } else {
                // Opposite parity in both axes: diagonal neighbors.
                0.25 * (p.get_mirror(ii - 1, jj - 1)
                    + p.get_mirror(ii - 1, jj + 1)
                    + p.get_mirror(ii + 1, jj - 1)
                    + p.get_mirror(ii + 1, jj + 1))
            };
        }
        px
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fog::{apply_fog, FogParams, DEFAULT_EPSILON};
    use crate::raster::TransmissionMap;

    fn test_image(w: usize, h: usize) -> ColorImage {
        ColorImage::from_fn(w, h, |i, j| {
            [
                ((i * 13 + j * 7) % 17) as f64 / 17.0,
                ((i * 5 + j * 11) % 19) as f64 / 19.0,
                ((i * 3 + j) % 23) as f64 / 23.0,
            ]
        })
    }

    #[test]
    fn mosaic_selects_by_phase() {
        let x = test_image(6, 6);
        for phase in BayerPhase::ALL {
            let h = mosaic(&x, phase);
            for i in 0..6 {
                for j in 0..6 {
                    let k = phase.color_at(i, j).index();
                    assert_eq!(h.plane.get(i, j), x.get(i, j)[k]);
                }
            }
        }
    }

    #[test]
    fn mosaic_of_pure_red_under_rggb() {
        let x = ColorImage::from_fn(4, 4, |_, _| [1.0, 0.0, 0.0]);
        let h = mosaic(&x, BayerPhase::Rggb);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i % 2 == 0 && j % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(h.plane.get(i, j), expect);
            }
        }
    }

    #[test]
    fn fog_commutes_with_mosaic_for_white_balanced_airlight() {
        let x = test_image(8, 8);
        let p = FogParams::new(0.02, [0.9, 0.9, 0.9], DEFAULT_EPSILON).unwrap();
        let t = TransmissionMap::new(crate::raster::Plane::from_fn(8, 8, |i, j| {
            0.1 + 0.8 * ((i * 8 + j) as f64 / 64.0)
        }))
        .unwrap();
        let lhs = mosaic(&apply_fog(&x, &t, &p).unwrap(), BayerPhase::Grbg);
        let g = mosaic(&x, BayerPhase::Grbg);
        for i in 0..8 {
            for j in 0..8 {
                let tv = t.get(i, j);
                let rhs = tv * g.plane.get(i, j) + (1.0 - tv) * 0.9;
                assert!((lhs.plane.get(i, j) - rhs).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sublattice_extraction_and_mapping() {
        let x = test_image(5, 4);
        let h = mosaic(&x, BayerPhase::Rggb);
        let r = Sublattice::from_cfa(&h, CfaColor::R, (0, 0)).unwrap();
        assert_eq!(r.plane.height(), 2);
        assert_eq!(r.plane.width(), 3);
        for u in 0..2 {
            for v in 0..3 {
                let (i, j) = r.site(u, v);
                assert_eq!(h.color_at(i, j), CfaColor::R);
                assert_eq!(r.plane.get(u, v), h.plane.get(i, j));
                assert_eq!(r.plane.get(u, v), x.get(i, j)[0]);
            }
        }
        // Wrong origin for the color is rejected.
        assert!(Sublattice::from_cfa(&h, CfaColor::R, (0, 1)).is_err());
        // G has two origins, both valid.
        assert_eq!(sublattices(&h, CfaColor::G).unwrap().len(), 2);
    }

    #[test]
    fn every_downsampling_origin_is_single_color() {
        let x = test_image(7, 7);
        for phase in BayerPhase::ALL {
            let h = mosaic(&x, phase);
            for i0 in 0..2 {
                for j0 in 0..2 {
                    let color = phase.color_at(i0, j0);
                    let s = Sublattice::from_cfa(&h, color, (i0, j0)).unwrap();
                    for u in 0..s.plane.height() {
                        for v in 0..s.plane.width() {
                            let (i, j) = s.site(u, v);
                            assert_eq!(phase.color_at(i, j), color);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_site_is_nearest() {
        let x = test_image(9, 9);
        let h = mosaic(&x, BayerPhase::Rggb);
        for color in CfaColor::ALL {
            for sub in sublattices(&h, color).unwrap() {
                for i in 0..9 {
                    for j in 0..9 {
                        let (u, v) = sub.nearest_site(i, j);
                        let (si, sj) = sub.site(u, v);
                        let d = (si as i64 - i as i64).abs().max((sj as i64 - j as i64).abs());
                        assert!(d <= 1, "site ({si},{sj}) for pixel ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn bilinear_constant_is_constant() {
        let x = ColorImage::from_fn(6, 6, |_, _| [0.37; 3]);
        for phase in BayerPhase::ALL {
            let out = bilinear_demosaick(&mosaic(&x, phase));
            for px in out.pixels() {
                for k in 0..3 {
                    assert!((px[k] - 0.37).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn bilinear_passes_observed_samples_through() {
        let x = test_image(8, 8);
        let h = mosaic(&x, BayerPhase::Bggr);
        let out = bilinear_demosaick(&h);
        for i in 0..8 {
            for j in 0..8 {
                let k = h.color_at(i, j).index();
                assert_eq!(out.get(i, j)[k], h.plane.get(i, j));
            }
        }
    }

    #[test]
    fn bilinear_offset_invariance() {
        let x = test_image(10, 10);
        let h = mosaic(&x, BayerPhase::Grbg);
        let k = 0.137;
        let shifted = CfaImage::new(h.plane.map(|v| v + k), h.phase);
        let a = bilinear_demosaick(&h);
        let b = bilinear_demosaick(&shifted);
        for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
            for c in 0..3 {
                assert!((pb[c] - pa[c] - k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_exact_on_linear_gray_away_from_border() {
        // Equal channels varying linearly: every interpolation kernel is a
        // symmetric average of a linear signal, hence exact in the interior.
        let x = ColorImage::from_fn(10, 10, |i, j| {
            let v = 0.05 * i as f64 + 0.03 * j as f64;
            [v; 3]
        });
        for phase in BayerPhase::ALL {
            let out = bilinear_demosaick(&mosaic(&x, phase));
            for i in 1..9 {
                for j in 1..9 {
                    for k in 0..3 {
                        assert!(
                            (out.get(i, j)[k] - x.get(i, j)[k]).abs() < 1e-12,
                            "phase {phase} pixel ({i},{j}) channel {k}"
                        );
                    }
                }
            }
        }
    }
}
