use rand::{Rng, RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Fragmented/compact heatmap pair generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPairConfig {
    pub width: usize,
    pub height: usize,
    pub n_targets: usize,
    pub blob_sigma: f64,
    pub n_fragments: usize,
    pub fragment_scatter: f64,
    pub noise_texture_scale: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticPairConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            n_targets: 1,
            blob_sigma: 2.5,
            n_fragments: 4,
            fragment_scatter: 4.0,
            noise_texture_scale: 4.0,
            noise_amplitude: 0.15,
            seed: 0,
        }
    }
}

impl SyntheticPairConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        if !(1..=2).contains(&self.n_targets) {
            return bad(format!("n_targets must be 1 or 2, got {}", self.n_targets));
        }
        if self.n_fragments == 0 {
            return bad("n_fragments must be >= 1".into());
        }
        for (name, v) in [("blob_sigma", self.blob_sigma), ("noise_texture_scale", self.noise_texture_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("fragment_scatter", self.fragment_scatter), ("noise_amplitude", self.noise_amplitude)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Distance kept between a target centre and the grid edge.
    fn margin(&self) -> f64 {
        3.0 * self.blob_sigma + self.fragment_scatter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub x0: ScalarField,
    pub x1: ScalarField,
    /// `x0` before texture noise and clamping.
    pub x0_clean: ScalarField,
    pub gt_points: Vec<(f64, f64)>,
}

fn gaussian_sum(w: usize, h: usize, blobs: &[(f64, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(w, h, |x, y| {
        blobs
            .iter()
            .map(|&(cx, cy, s)| {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                (-d2 / (2.0 * s * s)).exp()
            })
            .sum()
    })
}

/// Smooth texture: a coarse grid of U[0,1) values, one per `scale` pixels,
/// bilinearly upsampled.
fn texture<R: Rng + ?Sized>(w: usize, h: usize, scale: f64, rng: &mut R) -> ScalarField {
    let gw = (w as f64 / scale).ceil() as usize + 2;
    let gh = (h as f64 / scale).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    ScalarField::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / scale, y as f64 / scale);
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let (fu, fv) = (u - i as f64, v - j as f64);
        let g = |a: usize, b: usize| grid[b * gw + a];
        (1.0 - fv) * ((1.0 - fu) * g(i, j) + fu * g(i + 1, j)) + fv * ((1.0 - fu) * g(i, j + 1) + fu * g(i + 1, j + 1))
    })
}

pub fn gen_pair(c: &SyntheticPairConfig) -> Result<SyntheticPair> {
    c.validate()?;
    let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(c.seed);
    let (w, h) = (c.width as f64, c.height as f64);
    let m = c.margin();
    if w - 1.0 - 2.0 * m < 0.0 || h - 1.0 - 2.0 * m < 0.0 {
        return Err(Error::PlacementFailure { n_targets: c.n_targets, attempts: 0 });
    }
    let min_sep = 4.0 * c.blob_sigma;
    let mut centers = None;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let cand: Vec<(f64, f64)> = (0..c.n_targets)
            .map(|_| (rng.random_range(m..=w - 1.0 - m), rng.random_range(m..=h - 1.0 - m)))
            .collect();
        let ok = cand.iter().enumerate().all(|(i, a)| {
            cand[i + 1..].iter().all(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() >= min_sep)
        });
        if ok {
            centers = Some(cand);
            break;
        }
    }
    let centers = centers.ok_or(Error::PlacementFailure {
        n_targets: c.n_targets,
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })?;

    let targets: Vec<(f64, f64, f64)> = centers.iter().map(|&(x, y)| (x, y, c.blob_sigma)).collect();
    let raw_x1 = gaussian_sum(c.width, c.height, &targets);
    let peak = raw_x1.max();

    // n sub-blobs of width σ/√n and unit amplitude carry the same mass as the
    // parent blob.
    let frag_sigma = c.blob_sigma / (c.n_fragments as f64).sqrt();
    let mut fragments = Vec::with_capacity(c.n_targets * c.n_fragments);
    for &(cx, cy) in &centers {
        for _ in 0..c.n_fragments {
            let r = c.fragment_scatter * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            fragments.push((cx + r * theta.cos(), cy + r * theta.sin(), frag_sigma));
        }
    }
    let x1 = raw_x1.scale(1.0 / peak);
    let x0_clean = gaussian_sum(c.width, c.height, &fragments).scale(1.0 / peak);
    let noise = texture(c.width, c.height, c.noise_texture_scale, &mut rng).scale(c.noise_amplitude);
    let x0 = x0_clean.add(&noise)?.clamp(0.0, 1.0);
    Ok(SyntheticPair { x0, x1, x0_clean, gt_points: centers })
}
