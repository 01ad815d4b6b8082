use super::{distance_transform, BinaryMask, ScalarField};
use crate::error::{Error, Result};

/// Horizontal and vertical Sobel responses of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: ScalarField,
    pub gy: ScalarField,
}

// (dx, dy, weight) taps of the horizontal kernel [[-1,0,1],[-2,0,2],[-1,0,1]];
// the vertical kernel is its transpose.
const SOBEL_X: [(isize, isize, f64); 6] = [
    (-1, -1, -1.0),
    (1, -1, 1.0),
    (-1, 0, -2.0),
    (1, 0, 2.0),
    (-1, 1, -1.0),
    (1, 1, 1.0),
];

fn check_size(width: usize, height: usize) -> Result<()> {
    if width < 3 || height < 3 {
        return Err(Error::FieldTooSmall { width, height });
    }
    Ok(())
}

/// Sobel gradients with edge-replicate padding.
pub fn sobel_gradients(f: &ScalarField) -> Result<GradientPair> {
    let (w, h) = f.dims();
    check_size(w, h)?;
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut sx = 0.0;
            let mut sy = 0.0;
            for &(dx, dy, k) in &SOBEL_X {
                sx += k * f.get_clamped(x + dx, y + dy);
                sy += k * f.get_clamped(x + dy, y + dx);
            }
            gx.push(sx);
            gy.push(sy);
        }
    }
    Ok(GradientPair {
        gx: ScalarField::new(w, h, gx)?,
        gy: ScalarField::new(w, h, gy)?,
    })
}

/// Adjoint of [`sobel_gradients`]: returns `Sxᵀ ux + Syᵀ uy`, including the
/// scatter back through the replicate padding.
pub(crate) fn sobel_adjoint(ux: &ScalarField, uy: &ScalarField) -> Result<ScalarField> {
    ux.ensure_same_dims(uy)?;
    let (w, h) = ux.dims();
    check_size(w, h)?;
    let clamp = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        yc * w + xc
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let (a, b) = (ux.data()[i], uy.data()[i]);
            for &(dx, dy, k) in &SOBEL_X {
                out[clamp(x + dx, y + dy)] += k * a;
                out[clamp(x + dy, y + dx)] += k * b;
            }
        }
    }
    ScalarField::new(w, h, out)
}

/// Band of pixels within `width_px` (Euclidean) of the boundary of the
/// super-threshold region `{g >= threshold}`.
///
/// A boundary pixel is a region pixel with at least one in-grid 4-neighbour
/// below the threshold, so the grid edge itself never counts as boundary.
pub fn boundary_mask(g: &ScalarField, threshold: f64, width_px: usize) -> Result<BinaryMask> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "boundary threshold must be positive, got {threshold}"
        )));
    }
    if !(g.max() > threshold) {
        return Err(Error::EmptyRegion { threshold });
    }
    let (w, h) = g.dims();
    let inside = |x: usize, y: usize| g.get(x, y) >= threshold;
    let boundary = BinaryMask::from_fn(w, h, |x, y| {
        if !inside(x, y) {
            return false;
        }
        (x > 0 && !inside(x - 1, y))
            || (x + 1 < w && !inside(x + 1, y))
            || (y > 0 && !inside(x, y - 1))
            || (y + 1 < h && !inside(x, y + 1))
    });
    if boundary.count_ones() == 0 {
        return Ok(boundary);
    }
    let dist = distance_transform(&boundary);
    let limit = width_px as f64;
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        boundary.get(x, y) || dist.get(x, y) <= limit
    }))
}

/// Boundary band with the default settings: GT min-max normalized,
/// threshold 0.5, band width 2 px.
pub fn boundary_mask_default(gt: &ScalarField) -> Result<BinaryMask> {
    boundary_mask(&gt.minmax_normalize()?, 0.5, 2)
}
