//! Second-order flow matching for heatmap refinement.
//!
//! Training pairs `(x0, x1)` define two straight paths: the state path
//! `x_t = (1-t)·x0 + t·x1` and the velocity path
//! `v_τ = (1-τ)·v0 + τ·(x1-x0)`, whose τ-derivative `(x1-x0) - v0` is the
//! regression target for a learned acceleration field. At inference a double
//! Euler loop integrates the acceleration over τ to get a corrected velocity,
//! then integrates that velocity over t to move the heatmap.

mod model;
mod points;
mod refine;
mod train;

pub use model::{model_backward, model_forward, Activation, AccelerationModel};
pub use points::{extract_points, ManipulationPoint};
pub use refine::{refine, refine_unclamped, AccelerationField, RefineConfig};
pub use train::{train, LrSchedule, TrainConfig, TrainOutput};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

fn check_time(value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::TimeOutOfRange { value });
    }
    Ok(())
}

/// `(1-t)·x0 + t·x1`
pub fn interpolate_state(x0: &ScalarField, x1: &ScalarField, t: f64) -> Result<ScalarField> {
    check_time(t)?;
    x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b)
}

/// `(1-τ)·v0 + τ·(x1-x0)`
pub fn interpolate_velocity(
    v0: &ScalarField,
    x0: &ScalarField,
    x1: &ScalarField,
    tau: f64,
) -> Result<ScalarField> {
    check_time(tau)?;
    v0.ensure_same_dims(x0)?;
    x0.ensure_same_dims(x1)?;
    let data = v0
        .data()
        .iter()
        .zip(x0.data().iter().zip(x1.data()))
        .map(|(&v, (&a, &b))| (1.0 - tau) * v + tau * (b - a))
        .collect();
    ScalarField::new(v0.width(), v0.height(), data)
}

/// `(x1-x0) - v0`, the constant τ-derivative of the velocity path.
pub fn acceleration_target(
    x0: &ScalarField,
    x1: &ScalarField,
    v0: &ScalarField,
) -> Result<ScalarField> {
    x0.ensure_same_dims(x1)?;
    x0.ensure_same_dims(v0)?;
    let data = x0
        .data()
        .iter()
        .zip(x1.data().iter().zip(v0.data()))
        .map(|(&a, (&b, &v))| (b - a) - v)
        .collect();
    ScalarField::new(x0.width(), x0.height(), data)
}

/// One training tuple for the acceleration objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x0: ScalarField,
    pub x1: ScalarField,
    pub t: f64,
    pub tau: f64,
    pub v0: ScalarField,
    pub x_t: ScalarField,
    pub v_tau: ScalarField,
    pub a_gt: ScalarField,
}

impl FlowSample {
    pub fn new(x0: ScalarField, x1: ScalarField, t: f64, tau: f64, v0: ScalarField) -> Result<Self> {
        let x_t = interpolate_state(&x0, &x1, t)?;
        let v_tau = interpolate_velocity(&v0, &x0, &x1, tau)?;
        let a_gt = acceleration_target(&x0, &x1, &v0)?;
        Ok(Self {
            x0,
            x1,
            t,
            tau,
            v0,
            x_t,
            v_tau,
            a_gt,
        })
    }
}

/// Initial residual velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum V0Policy {
    Zero,
    /// Independent N(0, σ²) per pixel.
    Gaussian { sigma: f64 },
}

impl V0Policy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            V0Policy::Zero => Ok(()),
            V0Policy::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            V0Policy::Gaussian { sigma } => {
                Err(Error::InvalidConfig(format!("v0 sigma must be >= 0, got {sigma}")))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, width: usize, height: usize, rng: &mut R) -> ScalarField {
        match *self {
            V0Policy::Zero => ScalarField::zeros(width, height),
            V0Policy::Gaussian { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                ScalarField::from_fn(width, height, |_, _| normal.sample(rng))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn row(v: &[f64]) -> ScalarField {
        ScalarField::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn random(r: &mut impl rand::Rng, w: usize, h: usize) -> ScalarField {
        ScalarField::from_fn(w, h, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn state_endpoints() {
        let x0 = row(&[0.1, 0.7, 0.3]);
        let x1 = row(&[0.9, 0.2, 0.3]);
        assert_eq!(interpolate_state(&x0, &x1, 0.0).unwrap(), x0);
        assert_eq!(interpolate_state(&x0, &x1, 1.0).unwrap(), x1);
        assert_eq!(interpolate_state(&row(&[0.0]), &row(&[2.0]), 0.25).unwrap().data(), &[0.5]);
        assert!(matches!(
            interpolate_state(&x0, &x1, 1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            interpolate_state(&x0, &row(&[1.0]), 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn velocity_endpoints() {
        let x0 = row(&[0.1, 0.7]);
        let x1 = row(&[0.9, 0.2]);
        let v0 = row(&[0.3, -0.4]);
        assert_eq!(
            interpolate_velocity(&v0, &x0, &x1, 1.0).unwrap(),
            x1.sub(&x0).unwrap()
        );
        assert_eq!(interpolate_velocity(&v0, &x0, &x1, 0.0).unwrap(), v0);
        let v = interpolate_velocity(&row(&[0.0]), &row(&[0.0]), &row(&[4.0]), 0.5).unwrap();
        assert_eq!(v.data(), &[2.0]);
        assert!(interpolate_velocity(&v0, &x0, &x1, -0.1).is_err());
    }

    #[test]
    fn acceleration_examples() {
        let mut r = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(41);
        let x0 = random(&mut r, 5, 4);
        let x1 = random(&mut r, 5, 4);
        let d = x1.sub(&x0).unwrap();
        assert!(acceleration_target(&x0, &x1, &d).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(
            acceleration_target(&x0, &x1, &ScalarField::zeros(5, 4)).unwrap(),
            d
        );

        let v0 = random(&mut r, 5, 4);
        let a = acceleration_target(&x0, &x1, &v0).unwrap();
        let h = 1e-4;
        for tau in [0.1, 0.5, 0.9] {
            let vp = interpolate_velocity(&v0, &x0, &x1, tau + h).unwrap();
            let vm = interpolate_velocity(&v0, &x0, &x1, tau - h).unwrap();
            for i in 0..a.len() {
                let fd = (vp.data()[i] - vm.data()[i]) / (2.0 * h);
                assert!((fd - a.data()[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn v0_policies() {
        let mut r = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(5);
        assert_eq!(V0Policy::Zero.sample(3, 2, &mut r), ScalarField::zeros(3, 2));
        let g = V0Policy::Gaussian { sigma: 0.5 }.sample(64, 64, &mut r);
        let sd = (g.data().iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
        assert!((sd - 0.5).abs() < 0.05);
        assert!(V0Policy::Gaussian { sigma: -1.0 }.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn flow_sample_identities(seed: u64, t in 0.0f64..=1.0, tau in 0.0f64..=1.0) {
            let mut r = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
            let x0 = random(&mut r, 4, 3);
            let x1 = random(&mut r, 4, 3);
            let v0 = random(&mut r, 4, 3);
            let s = FlowSample::new(x0.clone(), x1.clone(), t, tau, v0.clone()).unwrap();
            for i in 0..x0.len() {
                let (a, b, v) = (x0.data()[i], x1.data()[i], v0.data()[i]);
                proptest::prop_assert!((s.x_t.data()[i] - ((1.0 - t) * a + t * b)).abs() <= 1e-12);
                proptest::prop_assert!((s.v_tau.data()[i] - ((1.0 - tau) * v + tau * (b - a))).abs() <= 1e-12);
                proptest::prop_assert!((s.a_gt.data()[i] - ((b - a) - v)).abs() <= 1e-12);
            }
        }
    }
}
