use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{model_backward, Activation, AccelerationModel, FlowSample, V0Policy};
use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear warmup to the base rate, then cosine decay to `min_lr`.
    WarmupCosine { warmup_steps: usize, min_lr: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::WarmupCosine { warmup_steps, min_lr } => {
                if step < warmup_steps {
                    return base * (step + 1) as f64 / warmup_steps as f64;
                }
                let span = total.saturating_sub(warmup_steps).max(1) as f64;
                let progress = ((step - warmup_steps) as f64 / span).min(1.0);
                min_lr + 0.5 * (base - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub v0_policy: V0Policy,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub patch_radius: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            batch_size: 8,
            learning_rate: 1e-3,
            schedule: LrSchedule::WarmupCosine {
                warmup_steps: 100,
                min_lr: 1e-5,
            },
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            v0_policy: V0Policy::Gaussian { sigma: 0.5 },
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            patch_radius: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("adam moments must lie in [0,1) and eps > 0".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if let LrSchedule::WarmupCosine { min_lr, .. } = self.schedule {
            if !(min_lr >= 0.0 && min_lr <= self.learning_rate) {
                return bad(format!("min_lr must be in [0, learning_rate], got {min_lr}"));
            }
        }
        self.v0_policy.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: AccelerationModel,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

/// Adam on the flow-matching objective. Each step draws `batch_size`
/// independent (pair, t, τ, v0) tuples from a single seeded stream.
pub fn train(pairs: &[(ScalarField, ScalarField)], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one pair".into()));
    }
    for (x0, x1) in pairs {
        x0.ensure_same_dims(x1)?;
    }
    let mut model = AccelerationModel::new(cfg.hidden.clone(), cfg.activation, cfg.patch_radius, cfg.seed);
    let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ 0x5eed_0f_f10e);
    let n = model.params().len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let (x0, x1) = &pairs[rng.random_range(0..pairs.len())];
            let t = rng.random::<f64>();
            let tau = rng.random::<f64>();
            let v0 = cfg.v0_policy.sample(x0.width(), x0.height(), &mut rng);
            batch.push(FlowSample::new(x0.clone(), x1.clone(), t, tau, v0)?);
        }
        let (loss, grad) = model_backward(&model, &batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        losses.push(loss);

        let lr = cfg.schedule.rate(cfg.learning_rate, step, cfg.steps);
        let k = (step + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(k);
        let c2 = 1.0 - cfg.beta2.powi(k);
        for (i, p) in model.params_mut().iter_mut().enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
        }
        if step % 500 == 0 {
            log::debug!("icrf step {step} loss {loss:.6} lr {lr:.2e}");
        }
    }
    Ok(TrainOutput { model, losses })
}
