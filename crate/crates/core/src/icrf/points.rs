use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{connected_components, BinaryMask, Connectivity, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipulationPoint {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Intensity-weighted centroids of the 8-connected components above the
/// `quantile` of the positive values, heaviest first.
pub fn extract_points(f: &ScalarField, k: usize, quantile: f64) -> Result<Vec<ManipulationPoint>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile must be in (0,1), got {quantile}")));
    }
    let mut positive: Vec<f64> = f.data().iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::AllZeroField);
    }
    positive.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&positive, quantile);
    // A positive threshold keeps non-positive pixels out of every component.
    let mask = BinaryMask::from_fn(f.width(), f.height(), |x, y| {
        let v = f.get(x, y);
        v > 0.0 && v >= threshold
    });
    let labels = connected_components(&mask, Connectivity::Eight);

    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64); labels.count()];
    for y in 0..f.height() {
        for x in 0..f.width() {
            let l = labels.get(x, y);
            if l == 0 {
                continue;
            }
            let v = f.get(x, y);
            let a = &mut acc[l as usize - 1];
            a.0 += v;
            a.1 += v * x as f64;
            a.2 += v * y as f64;
        }
    }
    let mut points: Vec<ManipulationPoint> = acc
        .into_iter()
        .map(|(m, sx, sy)| ManipulationPoint {
            x: sx / m,
            y: sy / m,
            mass: m,
        })
        .collect();
    // Labels are numbered in raster order, so a stable sort breaks ties correctly.
    points.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    points.truncate(k);
    Ok(points)
}
