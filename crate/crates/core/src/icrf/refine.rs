use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{model_forward, AccelerationModel, V0Policy};
use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Anything that can play the role of `a(v_τ, τ, x_t, t)` during refinement.
pub trait AccelerationField {
    fn acceleration(&self, v_tau: &ScalarField, x_t: &ScalarField, t: f64, tau: f64)
        -> Result<ScalarField>;
}

impl AccelerationField for AccelerationModel {
    fn acceleration(&self, v_tau: &ScalarField, x_t: &ScalarField, t: f64, tau: f64) -> Result<ScalarField> {
        model_forward(self, v_tau, x_t, t, tau)
    }
}

impl<F> AccelerationField for F
where
    F: Fn(&ScalarField, &ScalarField, f64, f64) -> Result<ScalarField>,
{
    fn acceleration(&self, v_tau: &ScalarField, x_t: &ScalarField, t: f64, tau: f64) -> Result<ScalarField> {
        self(v_tau, x_t, t, tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub n_t: usize,
    pub n_tau: usize,
    pub v0_policy: V0Policy,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            n_t: 10,
            n_tau: 10,
            v0_policy: V0Policy::Zero,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_tau == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_t and n_tau must be >= 1, got {} and {}",
                self.n_t, self.n_tau
            )));
        }
        self.v0_policy.validate()
    }
}

/// Double explicit-Euler integration without the final clamp.
///
/// Every outer step restarts the velocity from the v0 policy and integrates
/// it over τ ∈ [0, 1] before moving the state by `v/n_t`.
pub fn refine_unclamped<A: AccelerationField + ?Sized>(
    a: &A,
    x0: &ScalarField,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<ScalarField> {
    cfg.validate()?;
    let (w, h) = x0.dims();
    let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut x = x0.clone();
    let dt = 1.0 / cfg.n_t as f64;
    let dtau = 1.0 / cfg.n_tau as f64;
    for i in 0..cfg.n_t {
        let t = i as f64 * dt;
        let mut v = cfg.v0_policy.sample(w, h, &mut rng);
        for j in 0..cfg.n_tau {
            let tau = j as f64 * dtau;
            let acc = a.acceleration(&v, &x, t, tau)?;
            v = v.zip_map(&acc, |v, a| v + a * dtau).map_err(|e| match e {
                Error::NonFiniteValue { .. } => Error::NonFiniteState { t_step: i, tau_step: j },
                other => other,
            })?;
        }
        x = x.zip_map(&v, |x, v| x + v * dt).map_err(|e| match e {
            Error::NonFiniteValue { .. } => Error::NonFiniteState {
                t_step: i,
                tau_step: cfg.n_tau,
            },
            other => other,
        })?;
    }
    Ok(x)
}

/// [`refine_unclamped`] followed by a clamp to `[0, 1]`.
pub fn refine<A: AccelerationField + ?Sized>(
    a: &A,
    x0: &ScalarField,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<ScalarField> {
    Ok(refine_unclamped(a, x0, cfg, seed)?.clamp(0.0, 1.0))
}
