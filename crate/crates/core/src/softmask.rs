//! Dataset refinement: clip annotations to an object mask and turn binary
//! masks into sigmoid soft masks over a signed distance field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{distance_transform, BinaryMask, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftMaskParams {
    /// Pixels of signed distance per unit of sigmoid input.
    pub temperature: f64,
    /// Foreground maps above 0.5 when true.
    pub inside_positive: bool,
}

impl Default for SoftMaskParams {
    fn default() -> Self {
        Self {
            temperature: 3.0,
            inside_positive: true,
        }
    }
}

impl SoftMaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Distance to the nearest background pixel inside the mask, negative
/// distance to the nearest foreground pixel outside it.
pub fn signed_distance(m: &BinaryMask) -> Result<ScalarField> {
    let ones = m.count_ones();
    if ones == 0 || ones == m.len() {
        return Err(Error::DegenerateMask);
    }
    let d = distance_transform(m);
    let data = d
        .data()
        .iter()
        .zip(m.data())
        .map(|(&dist, &v)| if v == 1 { dist } else { -dist })
        .collect();
    ScalarField::new(m.width(), m.height(), data)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn soft_mask(m: &BinaryMask, p: &SoftMaskParams) -> Result<ScalarField> {
    p.validate()?;
    let sign = if p.inside_positive { 1.0 } else { -1.0 };
    let t = p.temperature;
    Ok(signed_distance(m)?.map(|d| sigmoid(sign * d / t)))
}

/// Zeroes annotation mass that falls outside the object mask.
pub fn intersect_annotation(gt: &ScalarField, object_mask: &BinaryMask) -> Result<ScalarField> {
    if gt.dims() != object_mask.dims() {
        return Err(Error::dims(gt.dims(), object_mask.dims()));
    }
    let data = gt
        .data()
        .iter()
        .zip(object_mask.data())
        .map(|(&g, &m)| if m == 1 { g } else { 0.0 })
        .collect();
    ScalarField::new(gt.width(), gt.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn rng(seed: u64) -> rand::rngs::Xoshiro256PlusPlus {
        rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    #[test]
    fn signed_distance_1d() {
        let m = BinaryMask::new(5, 1, vec![0, 0, 1, 1, 0]).unwrap();
        assert_eq!(signed_distance(&m).unwrap().data(), &[-2.0, -1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn degenerate() {
        let ones = BinaryMask::from_fn(3, 3, |_, _| true);
        assert!(matches!(signed_distance(&ones), Err(Error::DegenerateMask)));
        assert!(matches!(
            soft_mask(&BinaryMask::zeros(3, 3), &SoftMaskParams::default()),
            Err(Error::DegenerateMask)
        ));
    }

    #[test]
    fn signed_distance_matches_brute_force() {
        let mut r = rng(3);
        let m = BinaryMask::from_fn(10, 10, |_, _| r.random_bool(0.5));
        let sd = signed_distance(&m).unwrap();
        for y in 0..10usize {
            for x in 0..10usize {
                let inside = m.get(x, y);
                let mut best = f64::INFINITY;
                for qy in 0..10usize {
                    for qx in 0..10usize {
                        if m.get(qx, qy) != inside {
                            let d2 = (qx as f64 - x as f64).powi(2) + (qy as f64 - y as f64).powi(2);
                            best = best.min(d2.sqrt());
                        }
                    }
                }
                let expected = if inside { best } else { -best };
                assert_eq!(sd.get(x, y), expected);
            }
        }
    }

    #[test]
    fn sigmoid_values() {
        let unit = SoftMaskParams {
            temperature: 1.0,
            inside_positive: true,
        };
        // 1-pixel-wide foreground: every foreground pixel has d = 1
        let m = BinaryMask::new(3, 1, vec![0, 1, 0]).unwrap();
        let s = soft_mask(&m, &unit).unwrap();
        assert!((s.get(1, 0) - 0.7311).abs() < 1e-4);
        assert!((s.get(0, 0) - (1.0 - 0.7311)).abs() < 1e-4);

        // deep interior pixel at distance 10 from the background
        let big = BinaryMask::from_fn(21, 1, |x, _| x > 0);
        let s = soft_mask(&big, &unit).unwrap();
        assert!((s.get(10, 0) - 0.99995).abs() < 1e-4);

        let flat = SoftMaskParams {
            temperature: 1e6,
            inside_positive: true,
        };
        let s = soft_mask(&big, &flat).unwrap();
        assert!(s.data().iter().all(|v| (v - 0.5).abs() < 1e-5));
    }

    #[test]
    fn sign_convention_flag() {
        let m = BinaryMask::new(3, 1, vec![0, 1, 0]).unwrap();
        let p = SoftMaskParams {
            temperature: 1.0,
            inside_positive: false,
        };
        assert!(soft_mask(&m, &p).unwrap().get(1, 0) < 0.5);
    }

    #[test]
    fn rejects_bad_temperature() {
        let m = BinaryMask::new(2, 1, vec![0, 1]).unwrap();
        let p = SoftMaskParams {
            temperature: 0.0,
            inside_positive: true,
        };
        assert!(matches!(soft_mask(&m, &p), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn intersect_examples() {
        let gt = ScalarField::filled(3, 3, 1.0);
        let m = BinaryMask::from_fn(3, 3, |x, y| x == 0 && y == 0);
        let out = intersect_annotation(&gt, &m).unwrap();
        assert_eq!(out.sum(), 1.0);
        assert_eq!(out.get(0, 0), 1.0);

        let mut r = rng(9);
        let gt = ScalarField::from_fn(6, 5, |_, _| r.random::<f64>());
        let all = BinaryMask::from_fn(6, 5, |_, _| true);
        assert_eq!(intersect_annotation(&gt, &all).unwrap(), gt);

        let m = BinaryMask::from_fn(6, 5, |_, _| r.random_bool(0.5));
        let out = intersect_annotation(&gt, &m).unwrap();
        for i in 0..30 {
            assert_eq!(out.data()[i], gt.data()[i] * f64::from(m.data()[i]));
        }
        assert_eq!(intersect_annotation(&out, &m).unwrap(), out);

        assert!(matches!(
            intersect_annotation(&gt, &BinaryMask::zeros(5, 6)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn complement_symmetry_monotonicity_and_threshold(seed: u64, t in 0.2f64..10.0) {
            let mut r = rng(seed);
            let m = BinaryMask::from_fn(9, 7, |_, _| r.random_bool(0.5));
            proptest::prop_assume!(m.count_ones() > 0 && m.count_ones() < m.len());
            let p = SoftMaskParams { temperature: t, inside_positive: true };
            let s = soft_mask(&m, &p).unwrap();
            let sc = soft_mask(&m.invert(), &p).unwrap();
            let d = signed_distance(&m).unwrap();
            for i in 0..m.len() {
                proptest::prop_assert!((s.data()[i] + sc.data()[i] - 1.0).abs() < 1e-9);
                proptest::prop_assert_eq!(s.data()[i] > 0.5, m.data()[i] == 1);
                for j in 0..m.len() {
                    if d.data()[i] > d.data()[j] {
                        proptest::prop_assert!(s.data()[i] > s.data()[j]);
                    }
                }
            }
        }
    }
}
