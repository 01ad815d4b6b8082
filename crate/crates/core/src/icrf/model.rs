//! Per-pixel MLP acceleration field with hand-written backprop.
//!
//! Each pixel gets a feature vector
//!
//! ```text
//! [ x_t patch (2r+1)², v_τ patch (2r+1)², (x+½)/w, (y+½)/h, t, τ ]
//! ```
//!
//! with replicate padding at the borders. Hidden layers are affine + activation,
//! the output layer is linear without bias. Parameters live in one flat vector,
//! layer by layer: weights (out × in, row-major) then biases.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{check_time, FlowSample};
use crate::error::{Error, Result};
use crate::field::ScalarField;

const MAGIC: &str = "ICRF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::MalformedHeader(format!("unknown activation {other:?}"))),
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelerationModel {
    hidden: Vec<usize>,
    activation: Activation,
    patch_radius: usize,
    seed: u64,
    params: Vec<f64>,
}

struct LayerRef {
    w_offset: usize,
    inputs: usize,
    outputs: usize,
    bias_offset: Option<usize>,
}

impl AccelerationModel {
    /// Glorot-uniform weights drawn from `seed`, zero biases.
    pub fn new(hidden: Vec<usize>, activation: Activation, patch_radius: usize, seed: u64) -> Self {
        let mut model = Self::zeros(hidden, activation, patch_radius, seed);
        let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
        for layer in model.layers() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for p in &mut model.params[layer.w_offset..layer.w_offset + layer.inputs * layer.outputs] {
                *p = rng.random_range(-limit..limit);
            }
        }
        model
    }

    pub fn zeros(hidden: Vec<usize>, activation: Activation, patch_radius: usize, seed: u64) -> Self {
        let n = Self::param_count(&hidden, patch_radius);
        Self {
            hidden,
            activation,
            patch_radius,
            seed,
            params: vec![0.0; n],
        }
    }

    pub fn from_parts(
        hidden: Vec<usize>,
        activation: Activation,
        patch_radius: usize,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::param_count(&hidden, patch_radius);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} parameters"),
                actual: format!("{} parameters", params.len()),
            });
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self {
            hidden,
            activation,
            patch_radius,
            seed,
            params,
        })
    }

    pub fn input_dim_for(patch_radius: usize) -> usize {
        let side = 2 * patch_radius + 1;
        2 * side * side + 4
    }

    pub fn param_count(hidden: &[usize], patch_radius: usize) -> usize {
        let mut prev = Self::input_dim_for(patch_radius);
        let mut n = 0;
        for &h in hidden {
            n += prev * h + h;
            prev = h;
        }
        n + prev
    }

    pub fn input_dim(&self) -> usize {
        Self::input_dim_for(self.patch_radius)
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn patch_radius(&self) -> usize {
        self.patch_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> Vec<LayerRef> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        let mut offset = 0;
        for &h in &self.hidden {
            out.push(LayerRef {
                w_offset: offset,
                inputs: prev,
                outputs: h,
                bias_offset: Some(offset + prev * h),
            });
            offset += prev * h + h;
            prev = h;
        }
        out.push(LayerRef {
            w_offset: offset,
            inputs: prev,
            outputs: 1,
            bias_offset: None,
        });
        out
    }

    fn weights(&self, l: &LayerRef) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (l.outputs, l.inputs),
            &self.params[l.w_offset..l.w_offset + l.outputs * l.inputs],
        )
        .expect("layer layout")
    }

    fn bias(&self, l: &LayerRef) -> Option<ArrayView1<'_, f64>> {
        l.bias_offset
            .map(|o| ArrayView1::from(&self.params[o..o + l.outputs]))
    }

    /// Feature matrix, one row per pixel in raster order.
    pub fn features(
        &self,
        v_tau: &ScalarField,
        x_t: &ScalarField,
        t: f64,
        tau: f64,
    ) -> Result<Array2<f64>> {
        v_tau.ensure_same_dims(x_t)?;
        check_time(t)?;
        check_time(tau)?;
        let (w, h) = x_t.dims();
        let r = self.patch_radius as isize;
        let mut feats = Array2::zeros((w * h, self.input_dim()));
        for y in 0..h {
            for x in 0..w {
                let mut row = feats.row_mut(y * w + x);
                let mut k = 0;
                for field in [x_t, v_tau] {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            row[k] = field.get_clamped(x as isize + dx, y as isize + dy);
                            k += 1;
                        }
                    }
                }
                row[k] = (x as f64 + 0.5) / w as f64;
                row[k + 1] = (y as f64 + 0.5) / h as f64;
                row[k + 2] = t;
                row[k + 3] = tau;
            }
        }
        Ok(feats)
    }

    /// Activations of every layer; the last entry is the `(n, 1)` output.
    fn forward_all(&self, feats: Array2<f64>) -> Vec<Array2<f64>> {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(feats);
        for (i, l) in layers.iter().enumerate() {
            let mut z = acts[i].dot(&self.weights(l).t());
            if let Some(b) = self.bias(l) {
                z += &b;
            }
            if i + 1 < layers.len() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict(&self, feats: Array2<f64>) -> Array1<f64> {
        let mut acts = self.forward_all(feats);
        acts.pop().expect("output layer").column(0).to_owned()
    }

    /// Loss `mean((out - target)²)` and its gradient for a stacked feature
    /// matrix.
    pub fn loss_and_grad(&self, feats: Array2<f64>, targets: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let n = feats.nrows() as f64;
        let layers = self.layers();
        let acts = self.forward_all(feats);
        let out = acts.last().expect("output").column(0);
        let resid = &out - &targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;

        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = resid.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
        for (i, l) in layers.iter().enumerate().rev() {
            let input = &acts[i];
            let dw = delta.t().dot(input);
            grad[l.w_offset..l.w_offset + l.outputs * l.inputs]
                .copy_from_slice(dw.as_slice().expect("contiguous"));
            if let Some(bo) = l.bias_offset {
                let db = delta.sum_axis(Axis(0));
                grad[bo..bo + l.outputs].copy_from_slice(db.as_slice().expect("contiguous"));
            }
            if i == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.weights(l));
            let act = self.activation;
            upstream.zip_mut_with(input, |d, &a| *d *= act.derivative_from_output(a));
            delta = upstream;
        }
        (loss, grad)
    }

    pub fn to_text(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let mut out = format!(
            "{MAGIC}\nmlp hidden={} activation={} patch_radius={} seed={} params={}\n",
            hidden.join(","),
            self.activation.name(),
            self.patch_radius,
            self.seed,
            self.params.len()
        );
        for chunk in self.params.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).expect("write to String");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::MalformedHeader(format!("expected magic {MAGIC:?}")));
        }
        let desc = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader("missing architecture line".into()))?;
        let mut words = desc.split_whitespace();
        if words.next() != Some("mlp") {
            return Err(Error::MalformedHeader(format!("unknown architecture {desc:?}")));
        }
        let (mut hidden, mut activation, mut radius, mut seed, mut count) = (None, None, None, None, None);
        let bad = |what: &str| Error::MalformedHeader(format!("bad {what} in {desc:?}"));
        for word in words {
            let (key, value) = word.split_once('=').ok_or_else(|| bad("field"))?;
            match key {
                "hidden" => {
                    let widths: std::result::Result<Vec<usize>, _> =
                        value.split(',').filter(|s| !s.is_empty()).map(str::parse).collect();
                    hidden = Some(widths.map_err(|_| bad("hidden"))?);
                }
                "activation" => activation = Some(Activation::parse(value)?),
                "patch_radius" => radius = Some(value.parse().map_err(|_| bad("patch_radius"))?),
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "params" => count = Some(value.parse::<usize>().map_err(|_| bad("params"))?),
                _ => return Err(bad(key)),
            }
        }
        let hidden = hidden.ok_or_else(|| bad("hidden"))?;
        let activation = activation.ok_or_else(|| bad("activation"))?;
        let radius = radius.ok_or_else(|| bad("patch_radius"))?;
        let seed = seed.ok_or_else(|| bad("seed"))?;
        let params = lines
            .flat_map(str::split_whitespace)
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::MalformedToken {
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(count) = count {
            if count != params.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{count} parameters"),
                    actual: format!("{} parameters", params.len()),
                });
            }
        }
        Self::from_parts(hidden, activation, radius, seed, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Predicted acceleration field `a_θ(v_τ, τ, x_t, t)`.
pub fn model_forward(
    m: &AccelerationModel,
    v_tau: &ScalarField,
    x_t: &ScalarField,
    t: f64,
    tau: f64,
) -> Result<ScalarField> {
    let feats = m.features(v_tau, x_t, t, tau)?;
    let out = m.predict(feats);
    ScalarField::new(x_t.width(), x_t.height(), out.to_vec())
}

/// Mean squared error of the predicted acceleration over every pixel of the
/// batch, with its parameter gradient.
pub fn model_backward(m: &AccelerationModel, batch: &[FlowSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let total: usize = batch.iter().map(|s| s.x_t.len()).sum();
    let mut feats = Array2::zeros((total, m.input_dim()));
    let mut targets = Array1::zeros(total);
    let mut row = 0;
    for s in batch {
        let f = m.features(&s.v_tau, &s.x_t, s.t, s.tau)?;
        let n = f.nrows();
        feats.slice_mut(s![row..row + n, ..]).assign(&f);
        targets
            .slice_mut(s![row..row + n])
            .assign(&ArrayView1::from(s.a_gt.data()));
        row += n;
    }
    Ok(m.loss_and_grad(feats, targets.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand::rngs::Xoshiro256PlusPlus {
        rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    fn random_field(r: &mut impl rand::Rng, w: usize, h: usize) -> ScalarField {
        ScalarField::from_fn(w, h, |_, _| r.random_range(-1.0..1.0))
    }

    fn random_sample(r: &mut impl rand::Rng, w: usize, h: usize) -> FlowSample {
        let x0 = random_field(r, w, h);
        let x1 = random_field(r, w, h);
        let v0 = random_field(r, w, h);
        FlowSample::new(x0, x1, r.random::<f64>(), r.random::<f64>(), v0).unwrap()
    }

    #[test]
    fn parameter_layout() {
        assert_eq!(AccelerationModel::input_dim_for(1), 22);
        assert_eq!(AccelerationModel::input_dim_for(0), 6);
        // 22*64+64 + 64*64+64 + 64
        assert_eq!(AccelerationModel::param_count(&[64, 64], 1), 5696);
        let m = AccelerationModel::new(vec![64, 64], Activation::Tanh, 1, 3);
        assert_eq!(m.params().len(), 5696);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let m = AccelerationModel::zeros(vec![8, 8], Activation::Tanh, 1, 0);
        let mut r = rng(1);
        let out = model_forward(&m, &random_field(&mut r, 5, 4), &random_field(&mut r, 5, 4), 0.3, 0.6)
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.dims(), (5, 4));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = AccelerationModel::new(vec![16, 16], Activation::Tanh, 1, 43);
        let mut r = rng(43);
        let (v, x) = (random_field(&mut r, 6, 6), random_field(&mut r, 6, 6));
        let a = model_forward(&m, &v, &x, 0.2, 0.7).unwrap();
        let b = model_forward(&m, &v, &x, 0.2, 0.7).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn hand_computed_single_pixel() {
        // features [x, v, cx, cy, t, tau] = [0.5, -0.25, 0.5, 0.5, 0.3, 0.8]
        #[rustfmt::skip]
        let params = vec![
            // hidden unit 0 weights, unit 1 weights
            0.1, -0.2, 0.3, 0.0, 0.5, -0.4,
            -0.3, 0.2, 0.1, 0.4, -0.1, 0.6,
            // hidden biases
            0.05, -0.05,
            // output weights
            1.5, -2.0,
        ];
        let m = AccelerationModel::from_parts(vec![2], Activation::Tanh, 0, 0, params).unwrap();
        let z0: f64 = 0.1 * 0.5 - 0.2 * -0.25 + 0.3 * 0.5 + 0.0 * 0.5 + 0.5 * 0.3 - 0.4 * 0.8 + 0.05;
        let z1: f64 = -0.3 * 0.5 + 0.2 * -0.25 + 0.1 * 0.5 + 0.4 * 0.5 - 0.1 * 0.3 + 0.6 * 0.8 - 0.05;
        let expected = 1.5 * z0.tanh() - 2.0 * z1.tanh();
        let one = |v: f64| ScalarField::new(1, 1, vec![v]).unwrap();
        let out = model_forward(&m, &one(-0.25), &one(0.5), 0.3, 0.8).unwrap();
        assert!((out.data()[0] - expected).abs() < 1e-12);
        // z0 = 0.13, z1 = 0.45
        assert!((z0 - 0.13).abs() < 1e-12 && (z1 - 0.45).abs() < 1e-12);
    }

    fn fd_max_rel_error(m: &AccelerationModel, batch: &[FlowSample]) -> f64 {
        let (_, grad) = model_backward(m, batch).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m.params().len() {
            let mut plus = m.clone();
            plus.params_mut()[i] += h;
            let mut minus = m.clone();
            minus.params_mut()[i] -= h;
            let numeric = (model_backward(&plus, batch).unwrap().0
                - model_backward(&minus, batch).unwrap().0)
                / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn backward_matches_fd_on_tiny_model() {
        let mut r = rng(7);
        let m = AccelerationModel::new(vec![2], Activation::Tanh, 0, 7);
        let batch: Vec<FlowSample> = (0..3).map(|_| random_sample(&mut r, 1, 1)).collect();
        assert!(fd_max_rel_error(&m, &batch) < 1e-4);
    }

    #[test]
    fn backward_matches_fd_with_patches() {
        let mut r = rng(8);
        let m = AccelerationModel::new(vec![4, 3], Activation::Tanh, 1, 8);
        let batch: Vec<FlowSample> = (0..2).map(|_| random_sample(&mut r, 3, 3)).collect();
        assert!(fd_max_rel_error(&m, &batch) < 1e-4);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut r = rng(9);
        let m = AccelerationModel::new(vec![4], Activation::Tanh, 1, 9);
        let mut s = random_sample(&mut r, 4, 4);
        s.a_gt = model_forward(&m, &s.v_tau, &s.x_t, s.t, s.tau).unwrap();
        let (loss, grad) = model_backward(&m, &[s]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn output_gradient_is_linear_in_residual() {
        let mut r = rng(10);
        let m = AccelerationModel::new(vec![4], Activation::Tanh, 1, 10);
        let s = random_sample(&mut r, 4, 4);
        let pred = model_forward(&m, &s.v_tau, &s.x_t, s.t, s.tau).unwrap();
        let resid = pred.sub(&s.a_gt).unwrap();
        let mut doubled = s.clone();
        doubled.a_gt = pred.sub(&resid.scale(2.0)).unwrap();
        let (_, g1) = model_backward(&m, &[s]).unwrap();
        let (_, g2) = model_backward(&m, &[doubled]).unwrap();
        let out_start = m.params().len() - 4;
        for i in out_start..m.params().len() {
            assert!((g2[i] - 2.0 * g1[i]).abs() <= 1e-12 * g1[i].abs().max(1.0));
        }
    }

    #[test]
    fn text_round_trip() {
        let m = AccelerationModel::new(vec![5, 3], Activation::Relu, 2, 99);
        let back = AccelerationModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(AccelerationModel::from_text("ICRF2\n").is_err());
        let truncated: String = m.to_text().lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            AccelerationModel::from_text(&truncated),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let m = AccelerationModel::new(vec![2], Activation::Tanh, 0, 1);
        assert!(model_backward(&m, &[]).is_err());
    }
}
