//! Spatially-constrained boundary refinement loss.
//!
//! `L_total = L_sup + λ_con·L_con + λ_grad·L_grad` where
//!
//! * `L_sup`  – BCE of both prediction branches against the GT heatmap,
//! * `L_con`  – symmetric KL between the two (sum-normalized) branches,
//! * `L_grad` – mean squared Sobel response inside the GT boundary band,
//!
//! and both λ are inversely proportional to the current `L_sup`. Every term
//! returns its gradient with respect to the predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sobel_gradients, BinaryMask, ScalarField};

/// Clamp applied to probabilities before taking logs.
pub const EPS_CLAMP: f64 = 1e-6;
/// Additive smoothing before sum-normalizing inside the KL term.
pub const EPS_KL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    pub p_img: ScalarField,
    pub p_sem: ScalarField,
    pub gt: ScalarField,
    pub m_bound: BinaryMask,
}

impl LossInputs {
    pub fn new(
        p_img: ScalarField,
        p_sem: ScalarField,
        gt: ScalarField,
        m_bound: BinaryMask,
    ) -> Result<Self> {
        p_img.ensure_same_dims(&p_sem)?;
        p_img.ensure_same_dims(&gt)?;
        if m_bound.dims() != gt.dims() {
            return Err(Error::dims(gt.dims(), m_bound.dims()));
        }
        Ok(Self {
            p_img,
            p_sem,
            gt,
            m_bound,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightSchedule {
    pub lambda_base_con: f64,
    pub lambda_base_grad: f64,
    pub epsilon: f64,
    pub lambda_max: f64,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self {
            lambda_base_con: 0.1,
            lambda_base_grad: 0.1,
            epsilon: 1e-2,
            lambda_max: 1.0,
        }
    }
}

impl WeightSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.lambda_base_con >= 0.0
            && self.lambda_base_grad >= 0.0
            && self.lambda_max > 0.0
            && self.lambda_max >= self.lambda_base_con
            && self.lambda_max >= self.lambda_base_grad;
        if !ok {
            return Err(Error::InvalidConfig(format!("bad weight schedule {self:?}")));
        }
        Ok(())
    }
}

/// Gradients with respect to the two prediction branches.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrads {
    pub p_img: ScalarField,
    pub p_sem: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_sup: f64,
    pub l_con: f64,
    pub l_grad: f64,
    pub l_total: f64,
    pub lambda_con: f64,
    pub lambda_grad: f64,
    pub grad_p_img: ScalarField,
    pub grad_p_sem: ScalarField,
}

/// Mean binary cross-entropy and its gradient with respect to `p`.
///
/// `p` is clamped to `[EPS_CLAMP, 1 - EPS_CLAMP]`; the gradient is evaluated
/// at the clamped value.
pub fn bce_loss(p: &ScalarField, g: &ScalarField) -> Result<(f64, ScalarField)> {
    p.ensure_same_dims(g)?;
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &gi) in p.data().iter().zip(g.data()) {
        let pc = pi.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
        loss -= gi * pc.ln() + (1.0 - gi) * (1.0 - pc).ln();
        grad.push((pc - gi) / (pc * (1.0 - pc)) / n);
    }
    Ok((loss / n, ScalarField::new(p.width(), p.height(), grad)?))
}

pub fn dual_stream_sup(inputs: &LossInputs) -> Result<(f64, BranchGrads)> {
    let (l_img, g_img) = bce_loss(&inputs.p_img, &inputs.gt)?;
    let (l_sem, g_sem) = bce_loss(&inputs.p_sem, &inputs.gt)?;
    Ok((
        l_img + l_sem,
        BranchGrads {
            p_img: g_img,
            p_sem: g_sem,
        },
    ))
}

fn smoothed_distribution(p: &ScalarField) -> Result<(Vec<f64>, f64)> {
    if !(p.sum() > 0.0) {
        return Err(Error::AllZeroField);
    }
    let q: Vec<f64> = p.data().iter().map(|&v| v.max(0.0) + EPS_KL).collect();
    let total: f64 = q.iter().sum();
    Ok((q.into_iter().map(|v| v / total).collect(), total))
}

/// `½[KL(â‖b̂) + KL(b̂‖â)]` over the sum-normalized branches.
///
/// Computed as `½ Σ (a−b)(ln a − ln b)`, which is bit-for-bit symmetric in its
/// arguments.
pub fn sym_kl_consistency(p_img: &ScalarField, p_sem: &ScalarField) -> Result<(f64, BranchGrads)> {
    p_img.ensure_same_dims(p_sem)?;
    let (a, sa) = smoothed_distribution(p_img)?;
    let (b, sb) = smoothed_distribution(p_sem)?;

    let mut loss = 0.0;
    // dL/da_i and dL/db_i before the normalization chain rule
    let mut da = Vec::with_capacity(a.len());
    let mut db = Vec::with_capacity(a.len());
    for (&ai, &bi) in a.iter().zip(&b) {
        let log_ratio = ai.ln() - bi.ln();
        loss += (ai - bi) * log_ratio;
        da.push(0.5 * (log_ratio + 1.0 - bi / ai));
        db.push(0.5 * (-log_ratio + 1.0 - ai / bi));
    }
    // a = q / S  =>  dL/dq_j = (dL/da_j - Σ_i a_i dL/da_i) / S
    let through_norm = |d: Vec<f64>, dist: &[f64], total: f64, p: &ScalarField, raw: &ScalarField| {
        let mean: f64 = d.iter().zip(dist).map(|(g, x)| g * x).sum();
        let data = d
            .iter()
            .zip(raw.data())
            .map(|(g, &v)| if v < 0.0 { 0.0 } else { (g - mean) / total })
            .collect();
        ScalarField::new(p.width(), p.height(), data)
    };
    let g_img = through_norm(da, &a, sa, p_img, p_img)?;
    let g_sem = through_norm(db, &b, sb, p_sem, p_sem)?;
    Ok((
        0.5 * loss,
        BranchGrads {
            p_img: g_img,
            p_sem: g_sem,
        },
    ))
}

/// Mean over all pixels of `(|∇x p|·m)² + (|∇y p|·m)²` with Sobel gradients.
pub fn boundary_grad_penalty(p: &ScalarField, m_bound: &BinaryMask) -> Result<(f64, ScalarField)> {
    if p.dims() != m_bound.dims() {
        return Err(Error::dims(p.dims(), m_bound.dims()));
    }
    let g = sobel_gradients(p)?;
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut ux = Vec::with_capacity(p.len());
    let mut uy = Vec::with_capacity(p.len());
    for ((&gx, &gy), &m) in g.gx.data().iter().zip(g.gy.data()).zip(m_bound.data()) {
        let m = f64::from(m);
        let (mx, my) = (gx.abs() * m, gy.abs() * m);
        loss += mx * mx + my * my;
        // d/dgx (|gx| m)^2 = 2 m^2 gx
        ux.push(2.0 * m * m * gx / n);
        uy.push(2.0 * m * m * gy / n);
    }
    let (w, h) = p.dims();
    let grad = crate::field::sobel_adjoint(&ScalarField::new(w, h, ux)?, &ScalarField::new(w, h, uy)?)?;
    Ok((loss / n, grad))
}

/// `λ_k = min(base_k / (l_sup + ε), λ_max)` for the consistency and boundary
/// terms.
pub fn dynamic_weights(l_sup: f64, s: &WeightSchedule) -> (f64, f64) {
    let denom = l_sup.max(0.0) + s.epsilon;
    (
        (s.lambda_base_con / denom).min(s.lambda_max),
        (s.lambda_base_grad / denom).min(s.lambda_max),
    )
}

/// Full loss. The boundary penalty is applied to both branches and summed.
/// Weights are constants in the backward pass.
pub fn total_loss(inputs: &LossInputs, s: &WeightSchedule) -> Result<LossReport> {
    let (l_sup, sup) = dual_stream_sup(inputs)?;
    let (l_con, con) = sym_kl_consistency(&inputs.p_img, &inputs.p_sem)?;
    let (lg_img, gg_img) = boundary_grad_penalty(&inputs.p_img, &inputs.m_bound)?;
    let (lg_sem, gg_sem) = boundary_grad_penalty(&inputs.p_sem, &inputs.m_bound)?;
    let l_grad = lg_img + lg_sem;
    let (lambda_con, lambda_grad) = dynamic_weights(l_sup, s);

    let combine = |sup: &ScalarField, con: &ScalarField, grad: &ScalarField| -> Result<ScalarField> {
        let data = sup
            .data()
            .iter()
            .zip(con.data())
            .zip(grad.data())
            .map(|((a, b), c)| a + lambda_con * b + lambda_grad * c)
            .collect();
        ScalarField::new(sup.width(), sup.height(), data)
    };
    Ok(LossReport {
        l_sup,
        l_con,
        l_grad,
        l_total: l_sup + lambda_con * l_con + lambda_grad * l_grad,
        lambda_con,
        lambda_grad,
        grad_p_img: combine(&sup.p_img, &con.p_img, &gg_img)?,
        grad_p_sem: combine(&sup.p_sem, &con.p_sem, &gg_sem)?,
    })
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// `trajectory[k]` is the report after `k` updates (`steps + 1` entries).
    pub trajectory: Vec<LossReport>,
    pub p_img: ScalarField,
    pub p_sem: ScalarField,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient descent on the logits of both branches.
///
/// The step is taken on `N·L` (N = pixel count), so `step_size` is a per-pixel
/// rate that does not shrink with the grid size.
pub fn optimize_heatmap(
    init: &LossInputs,
    s: &WeightSchedule,
    steps: usize,
    step_size: f64,
) -> Result<OptimizeResult> {
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    s.validate()?;
    let (w, h) = init.gt.dims();
    let n = (w * h) as f64;
    let mut z_img: Vec<f64> = init.p_img.data().iter().map(|&p| logit(p)).collect();
    let mut z_sem: Vec<f64> = init.p_sem.data().iter().map(|&p| logit(p)).collect();
    let mut inputs = init.clone();
    let mut trajectory = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        let to_field = |z: &[f64]| ScalarField::new(w, h, z.iter().map(|&v| sigmoid(v)).collect());
        inputs.p_img = to_field(&z_img).map_err(|_| Error::NonFiniteLoss { step })?;
        inputs.p_sem = to_field(&z_sem).map_err(|_| Error::NonFiniteLoss { step })?;
        let report = total_loss(&inputs, s)?;
        if !report.l_total.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        if step < steps {
            for (z, (g, p)) in z_img
                .iter_mut()
                .zip(report.grad_p_img.data().iter().zip(inputs.p_img.data()))
            {
                *z -= step_size * n * g * p * (1.0 - p);
            }
            for (z, (g, p)) in z_sem
                .iter_mut()
                .zip(report.grad_p_sem.data().iter().zip(inputs.p_sem.data()))
            {
                *z -= step_size * n * g * p * (1.0 - p);
            }
        }
        trajectory.push(report);
    }
    Ok(OptimizeResult {
        trajectory,
        p_img: inputs.p_img,
        p_sem: inputs.p_sem,
    })
}

/// Fraction of prediction mass lying where the GT is zero.
pub fn overflow_fraction(p: &ScalarField, gt: &ScalarField) -> Result<f64> {
    p.ensure_same_dims(gt)?;
    let total = p.sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroField);
    }
    let outside: f64 = p
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g <= 0.0)
        .map(|(&v, _)| v)
        .sum();
    Ok(outside / total)
}

/// Moving average with a trailing window (shorter at the start).
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}
