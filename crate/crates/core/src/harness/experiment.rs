use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::{gen_corpus, sample_name};
use super::rng::{substream, substream_seed};
use super::synth::SyntheticPairConfig;
use crate::error::{Error, Result};
use crate::field::{boundary_mask, field_to_string, parse_mask, BinaryMask, ScalarField};
use crate::icrf::{extract_points, refine, train, AccelerationModel, RefineConfig, TrainConfig};
use crate::metrics::{evaluate_corpus, kld, MetricsReport, SampleFailure, DEFAULT_FIX_FRAC};
use crate::scbr::{optimize_heatmap, overflow_fraction, smooth, LossInputs, LossReport, WeightSchedule};
use crate::softmask::{signed_distance, soft_mask, SoftMaskParams};
use crate::tacot::{evaluate_routing, CategoryRegistry, RoutingCase, RoutingReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scbr,
    Icrf,
    Tacot,
    Eval,
    Softmask,
}

/// Stream index reserved for the trainer; sample streams count up from 0.
const TRAIN_STREAM: u64 = u64::MAX;
const REFINE_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcrfStudy {
    /// `seed` is ignored; each pair uses its own substream.
    pub synthetic: SyntheticPairConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// `seed` is ignored; the trainer gets a substream of the run seed.
    pub train: TrainConfig,
    pub refine: RefineConfig,
    pub point_quantile: f64,
    pub point_tolerance: f64,
    /// Number of held-out samples whose fields are written out.
    pub save_fields: usize,
}

impl Default for IcrfStudy {
    fn default() -> Self {
        Self {
            synthetic: SyntheticPairConfig::default(),
            n_train: 200,
            n_test: 50,
            train: TrainConfig {
                steps: 4000,
                ..TrainConfig::default()
            },
            refine: RefineConfig::default(),
            point_quantile: 0.95,
            point_tolerance: 2.0,
            save_fields: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScbrStudy {
    pub width: usize,
    pub height: usize,
    /// Synthetic GT: Gaussian of this width, cut to zero outside `gt_radius`.
    pub gt_sigma: f64,
    pub gt_radius: f64,
    /// Optional AFG1 inputs replacing the synthetic GT / random init.
    pub gt: Option<PathBuf>,
    pub init_img: Option<PathBuf>,
    pub init_sem: Option<PathBuf>,
    pub boundary_threshold: f64,
    pub boundary_width: usize,
    pub steps: usize,
    pub step_size: f64,
    pub smooth_window: usize,
    pub weights: WeightSchedule,
}

impl Default for ScbrStudy {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            gt_sigma: 6.0,
            gt_radius: 10.0,
            gt: None,
            init_img: None,
            init_sem: None,
            boundary_threshold: 0.5,
            boundary_width: 2,
            steps: 200,
            step_size: 0.5,
            smooth_window: 10,
            weights: WeightSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaskStudy {
    pub params: SoftMaskParams,
    /// Directory of AFG1 masks; random masks are generated when absent.
    pub masks: Option<PathBuf>,
    pub n_masks: usize,
    pub width: usize,
    pub height: usize,
    pub density: f64,
}

impl Default for SoftmaskStudy {
    fn default() -> Self {
        Self {
            params: SoftMaskParams::default(),
            masks: None,
            n_masks: 20,
            width: 16,
            height: 16,
            density: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TacotStudy {
    /// JSON list of routing cases; the bundled table when absent.
    pub cases: Option<PathBuf>,
    /// Registry document merged over the bundled registry.
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalStudy {
    pub pred_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub fix_frac: f64,
}

impl Default for EvalStudy {
    fn default() -> Self {
        Self {
            pred_dir: None,
            gt_dir: None,
            fix_frac: DEFAULT_FIX_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub icrf: IcrfStudy,
    #[serde(default)]
    pub scbr: ScbrStudy,
    #[serde(default)]
    pub softmask: SoftmaskStudy,
    #[serde(default)]
    pub tacot: TacotStudy,
    #[serde(default)]
    pub eval: EvalStudy,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            icrf: IcrfStudy::default(),
            scbr: ScbrStudy::default(),
            softmask: SoftmaskStudy::default(),
            tacot: TacotStudy::default(),
            eval: EvalStudy::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match self.mode {
            Mode::Icrf => {
                let s = &self.icrf;
                s.synthetic.validate()?;
                s.train.validate()?;
                s.refine.validate()?;
                if s.n_train == 0 || s.n_test == 0 {
                    return bad("icrf needs n_train >= 1 and n_test >= 1".into());
                }
                if !(s.point_quantile > 0.0 && s.point_quantile < 1.0) {
                    return bad(format!("point_quantile must be in (0,1), got {}", s.point_quantile));
                }
                if !(s.point_tolerance >= 0.0) {
                    return bad("point_tolerance must be >= 0".into());
                }
            }
            Mode::Scbr => {
                let s = &self.scbr;
                s.weights.validate()?;
                if s.steps == 0 || !(s.step_size > 0.0) || s.smooth_window == 0 {
                    return bad("scbr needs steps >= 1, step_size > 0, smooth_window >= 1".into());
                }
                if s.gt.is_none() && (s.width < 3 || s.height < 3 || !(s.gt_sigma > 0.0) || !(s.gt_radius > 0.0)) {
                    return bad("synthetic scbr GT needs >= 3x3 and positive sigma/radius".into());
                }
                for p in [&s.gt, &s.init_img, &s.init_sem].into_iter().flatten() {
                    require_exists(p)?;
                }
            }
            Mode::Softmask => {
                let s = &self.softmask;
                s.params.validate()?;
                match &s.masks {
                    Some(dir) => require_exists(dir)?,
                    None => {
                        if s.n_masks == 0 || s.width * s.height < 2 || !(s.density > 0.0 && s.density < 1.0) {
                            return bad("random masks need n_masks >= 1, >= 2 pixels and density in (0,1)".into());
                        }
                    }
                }
            }
            Mode::Tacot => {
                for p in [&self.tacot.cases, &self.tacot.registry].into_iter().flatten() {
                    require_exists(p)?;
                }
            }
            Mode::Eval => {
                let e = &self.eval;
                match (&e.pred_dir, &e.gt_dir) {
                    (Some(p), Some(g)) => {
                        require_exists(p)?;
                        require_exists(g)?;
                    }
                    _ => return bad("eval needs pred_dir and gt_dir".into()),
                }
                if !(e.fix_frac > 0.0 && e.fix_frac <= 1.0) {
                    return bad(format!("fix_frac must be in (0,1], got {}", e.fix_frac));
                }
            }
        }
        Ok(())
    }
}

fn require_exists(p: &Path) -> Result<()> {
    if !p.exists() {
        return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
    }
    Ok(())
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcrfSample {
    pub name: String,
    pub kld_x0: f64,
    pub kld_refined: f64,
    /// Largest distance from a true centre to its nearest extracted point.
    pub point_error: Option<f64>,
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcrfReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train_steps: usize,
    pub loss_initial_smoothed: f64,
    pub loss_final_smoothed: f64,
    pub mean_kld_x0: f64,
    pub mean_kld_refined: f64,
    pub kld_ratio: f64,
    pub frac_improved: f64,
    pub point_recovery_rate: f64,
    pub point_quantile: f64,
    pub point_tolerance: f64,
    pub samples: Vec<IcrfSample>,
    pub failures: Vec<SampleFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermSnapshot {
    pub l_sup: f64,
    pub l_con: f64,
    pub l_grad: f64,
    pub l_total: f64,
    pub lambda_con: f64,
    pub lambda_grad: f64,
}

impl From<&LossReport> for TermSnapshot {
    fn from(r: &LossReport) -> Self {
        Self {
            l_sup: r.l_sup,
            l_con: r.l_con,
            l_grad: r.l_grad,
            l_total: r.l_total,
            lambda_con: r.lambda_con,
            lambda_grad: r.lambda_grad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPair {
    pub p_img: f64,
    pub p_sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbrReport {
    pub steps: usize,
    pub step_size: f64,
    pub smooth_window: usize,
    pub band_pixels: usize,
    pub initial: TermSnapshot,
    #[serde(rename = "final")]
    pub last: TermSnapshot,
    /// Steps where the smoothed total loss went up.
    pub smoothed_increases: usize,
    pub overflow_initial: BranchPair,
    pub overflow_final: BranchPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaskSample {
    pub name: String,
    pub foreground: usize,
    pub roundtrip_exact: bool,
    pub complement_max_error: f64,
    pub strictly_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaskReport {
    pub temperature: f64,
    pub inside_positive: bool,
    pub n_masks: usize,
    pub all_roundtrip_exact: bool,
    pub max_complement_error: f64,
    pub all_strictly_monotone: bool,
    pub samples: Vec<SoftmaskSample>,
    pub failures: Vec<SampleFailure>,
}

// ---------------------------------------------------------------- artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub seed: u64,
    pub config_sha256: String,
    pub crate_version: String,
    pub timestamp_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

/// In-memory outputs of one run, written out by [`run_experiment`].
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, b)| b.as_slice())
    }

    fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, path: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        self.add(path, s.into_bytes());
    }

    fn field(&mut self, path: impl Into<String>, f: &ScalarField) {
        self.add(path, field_to_string(f).into_bytes());
    }

    fn csv(&mut self, path: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(&r).expect("in-memory csv");
        }
        self.add(path, w.into_inner().expect("in-memory csv"));
    }
}

// ---------------------------------------------------------------- studies

fn nearest_errors(points: &[(f64, f64)], found: &[crate::icrf::ManipulationPoint]) -> f64 {
    points
        .iter()
        .map(|&(gx, gy)| {
            found
                .iter()
                .map(|q| ((q.x - gx).powi(2) + (q.y - gy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Train on synthetic pairs, refine the held-out ones and score them.
pub fn icrf_study(s: &IcrfStudy, seed: u64) -> Result<(IcrfReport, AccelerationModel, Vec<f64>, Artifacts)> {
    let train_pairs: Vec<(ScalarField, ScalarField)> = gen_corpus(&s.synthetic, seed, 0, s.n_train)?
        .into_iter()
        .map(|p| (p.x0, p.x1))
        .collect();
    let test = gen_corpus(&s.synthetic, seed, s.n_train as u64, s.n_test)?;
    let cfg = TrainConfig {
        seed: substream_seed(seed, TRAIN_STREAM),
        ..s.train.clone()
    };
    let out = train(&train_pairs, &cfg)?;
    let model = out.model;
    let refine_seed = substream_seed(seed, REFINE_STREAM);

    let scored: Vec<(usize, Result<(IcrfSample, ScalarField)>)> = test
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let run = || -> Result<(IcrfSample, ScalarField)> {
                let refined = refine(&model, &p.x0, &s.refine, refine_seed)?;
                let kld_x0 = kld(&p.x0, &p.x1)?;
                let kld_refined = kld(&refined, &p.x1)?;
                let point_error = extract_points(&refined, p.gt_points.len(), s.point_quantile)
                    .ok()
                    .map(|found| nearest_errors(&p.gt_points, &found));
                Ok((
                    IcrfSample {
                        name: sample_name(i),
                        kld_x0,
                        kld_refined,
                        point_error,
                        recovered: point_error.is_some_and(|e| e <= s.point_tolerance),
                    },
                    refined,
                ))
            };
            (i, run())
        })
        .collect();

    let mut artifacts = Artifacts::default();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in scored {
        match r {
            Ok((sample, refined)) => {
                if i < s.save_fields {
                    let p = &test[i];
                    artifacts.field(format!("fields/{}_x0.afg", i), &p.x0);
                    artifacts.field(format!("fields/{}_x1.afg", i), &p.x1);
                    artifacts.field(format!("fields/{}_refined.afg", i), &refined);
                }
                samples.push(sample);
            }
            Err(e) => {
                log::warn!("held-out sample {i} failed: {e}");
                failures.push(SampleFailure {
                    name: sample_name(i),
                    error: e.to_string(),
                });
            }
        }
    }
    let n = samples.len().max(1) as f64;
    let mean_kld_x0 = samples.iter().map(|s| s.kld_x0).sum::<f64>() / n;
    let mean_kld_refined = samples.iter().map(|s| s.kld_refined).sum::<f64>() / n;
    let window = (out.losses.len() / 20).clamp(1, 100);
    let smoothed = smooth(&out.losses, window);
    let report = IcrfReport {
        n_train: s.n_train,
        n_test: s.n_test,
        train_steps: cfg.steps,
        loss_initial_smoothed: smoothed[window - 1],
        loss_final_smoothed: *smoothed.last().expect("steps >= 1"),
        mean_kld_x0,
        mean_kld_refined,
        kld_ratio: mean_kld_refined / mean_kld_x0,
        frac_improved: samples.iter().filter(|s| s.kld_refined < s.kld_x0).count() as f64 / n,
        point_recovery_rate: samples.iter().filter(|s| s.recovered).count() as f64 / n,
        point_quantile: s.point_quantile,
        point_tolerance: s.point_tolerance,
        samples,
        failures,
    };
    artifacts.csv(
        "loss.csv",
        &["step", "loss"],
        out.losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()]),
    );
    artifacts.csv(
        "samples.csv",
        &["sample", "kld_x0", "kld_refined", "point_error", "recovered"],
        report.samples.iter().map(|s| {
            vec![
                s.name.clone(),
                s.kld_x0.to_string(),
                s.kld_refined.to_string(),
                s.point_error.map(|e| e.to_string()).unwrap_or_default(),
                s.recovered.to_string(),
            ]
        }),
    );
    artifacts.add("model.icrf", model.to_text().into_bytes());
    Ok((report, model, out.losses, artifacts))
}

fn scbr_gt(s: &ScbrStudy) -> Result<ScalarField> {
    if let Some(p) = &s.gt {
        return crate::field::read_field(p);
    }
    let (cx, cy) = ((s.width as f64 - 1.0) / 2.0, (s.height as f64 - 1.0) / 2.0);
    Ok(ScalarField::from_fn(s.width, s.height, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        if d2.sqrt() <= s.gt_radius {
            (-d2 / (2.0 * s.gt_sigma * s.gt_sigma)).exp()
        } else {
            0.0
        }
    }))
}

/// Direct heatmap optimization under the boundary-refinement loss from a
/// random (or given) start.
pub fn scbr_study(s: &ScbrStudy, seed: u64) -> Result<(ScbrReport, Artifacts)> {
    let gt = scbr_gt(s)?;
    let m_bound = boundary_mask(&gt.minmax_normalize()?, s.boundary_threshold, s.boundary_width)?;
    let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
    let (w, h) = gt.dims();
    let mut random = || ScalarField::from_fn(w, h, |_, _| rng.random::<f64>());
    let p_img = match &s.init_img {
        Some(p) => crate::field::read_field(p)?,
        None => random(),
    };
    let p_sem = match &s.init_sem {
        Some(p) => crate::field::read_field(p)?,
        None => random(),
    };
    let inputs = LossInputs::new(p_img, p_sem, gt.clone(), m_bound.clone())?;
    let res = optimize_heatmap(&inputs, &s.weights, s.steps, s.step_size)?;
    let totals: Vec<f64> = res.trajectory.iter().map(|r| r.l_total).collect();
    let smoothed = smooth(&totals, s.smooth_window);
    let report = ScbrReport {
        steps: s.steps,
        step_size: s.step_size,
        smooth_window: s.smooth_window,
        band_pixels: m_bound.count_ones(),
        initial: (&res.trajectory[0]).into(),
        last: res.trajectory.last().expect("steps + 1 reports").into(),
        smoothed_increases: smoothed.windows(2).filter(|w| w[1] > w[0]).count(),
        overflow_initial: BranchPair {
            p_img: overflow_fraction(&inputs.p_img, &gt)?,
            p_sem: overflow_fraction(&inputs.p_sem, &gt)?,
        },
        overflow_final: BranchPair {
            p_img: overflow_fraction(&res.p_img, &gt)?,
            p_sem: overflow_fraction(&res.p_sem, &gt)?,
        },
    };
    let mut artifacts = Artifacts::default();
    artifacts.csv(
        "trajectory.csv",
        &["step", "l_sup", "l_con", "l_grad", "l_total", "lambda_con", "lambda_grad"],
        res.trajectory.iter().enumerate().map(|(i, r)| {
            [i as f64, r.l_sup, r.l_con, r.l_grad, r.l_total, r.lambda_con, r.lambda_grad]
                .iter()
                .enumerate()
                .map(|(k, v)| if k == 0 { i.to_string() } else { v.to_string() })
                .collect()
        }),
    );
    artifacts.field("gt.afg", &gt);
    artifacts.field("p_img_final.afg", &res.p_img);
    artifacts.field("p_sem_final.afg", &res.p_sem);
    artifacts.field("boundary_band.afg", &m_bound.to_field());
    Ok((report, artifacts))
}

fn random_mask(s: &SoftmaskStudy, seed: u64, i: u64) -> BinaryMask {
    let mut rng = substream(seed, i);
    loop {
        let m = BinaryMask::from_fn(s.width, s.height, |_, _| rng.random_bool(s.density));
        let ones = m.count_ones();
        if ones > 0 && ones < m.len() {
            return m;
        }
    }
}

fn softmask_checks(name: String, m: &BinaryMask, params: &SoftMaskParams) -> Result<(SoftmaskSample, ScalarField)> {
    let soft = soft_mask(m, params)?;
    let flipped = soft_mask(&m.invert(), params)?;
    let complement_max_error = soft
        .data()
        .iter()
        .zip(flipped.data())
        .map(|(a, b)| (a + b - 1.0).abs())
        .fold(0.0, f64::max);
    let back = BinaryMask::threshold(&soft, 0.5);
    let expected = if params.inside_positive { m.clone() } else { m.invert() };
    let sd = signed_distance(m)?;
    let sign = if params.inside_positive { 1.0 } else { -1.0 };
    let mut order: Vec<(f64, f64)> = sd.data().iter().map(|d| sign * d).zip(soft.data().iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let strictly_monotone = order
        .windows(2)
        .all(|w| if w[1].0 > w[0].0 { w[1].1 > w[0].1 } else { w[1].1 == w[0].1 });
    Ok((
        SoftmaskSample {
            name,
            foreground: m.count_ones(),
            roundtrip_exact: back == expected,
            complement_max_error,
            strictly_monotone,
        },
        soft,
    ))
}

/// Soft masks for a directory of masks (or seeded random ones) with the
/// symmetry, monotonicity and round-trip checks.
pub fn softmask_study(s: &SoftmaskStudy, seed: u64) -> Result<(SoftmaskReport, Artifacts)> {
    let masks: Vec<(String, Result<BinaryMask>)> = match &s.masks {
        Some(dir) => {
            let mut names: Vec<String> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".afg"))
                .collect();
            names.sort();
            names
                .into_iter()
                .map(|n| {
                    let path = dir.join(&n);
                    let m = std::fs::read_to_string(&path)
                        .map_err(|e| Error::io(&path, e))
                        .and_then(|t| parse_mask(&t));
                    (n, m)
                })
                .collect()
        }
        None => (0..s.n_masks)
            .map(|i| (sample_name(i), Ok(random_mask(s, seed, i as u64))))
            .collect(),
    };
    let mut artifacts = Artifacts::default();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (name, m) in masks {
        match m.and_then(|m| softmask_checks(name.clone(), &m, &s.params)) {
            Ok((sample, soft)) => {
                artifacts.field(format!("soft/{name}"), &soft);
                samples.push(sample);
            }
            Err(e) => {
                log::warn!("mask {name} skipped: {e}");
                failures.push(SampleFailure {
                    name,
                    error: e.to_string(),
                });
            }
        }
    }
    let report = SoftmaskReport {
        temperature: s.params.temperature,
        inside_positive: s.params.inside_positive,
        n_masks: samples.len(),
        all_roundtrip_exact: samples.iter().all(|x| x.roundtrip_exact),
        max_complement_error: samples.iter().map(|x| x.complement_max_error).fold(0.0, f64::max),
        all_strictly_monotone: samples.iter().all(|x| x.strictly_monotone),
        samples,
        failures,
    };
    Ok((report, artifacts))
}

pub fn tacot_study(s: &TacotStudy) -> Result<RoutingReport> {
    let mut registry = CategoryRegistry::default();
    if let Some(p) = &s.registry {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        registry.extend_from_json(&text)?;
    }
    let cases = match &s.cases {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<Vec<RoutingCase>>(&text)?
        }
        None => RoutingCase::bundled(),
    };
    Ok(evaluate_routing(&registry, &cases))
}

pub fn eval_study(s: &EvalStudy) -> Result<MetricsReport> {
    let (Some(pred), Some(gt)) = (&s.pred_dir, &s.gt_dir) else {
        return Err(Error::InvalidConfig("eval needs pred_dir and gt_dir".into()));
    };
    evaluate_corpus(pred, gt, s.fix_frac)
}

// ---------------------------------------------------------------- driver

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub report: serde_json::Value,
    pub manifest: Manifest,
}

/// Runs the configured study and writes `report.json`, its side artifacts
/// and `manifest.json` into `out_dir`. The config is validated before
/// anything touches the disk.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let (report, mut artifacts) = match cfg.mode {
        Mode::Icrf => {
            let (r, _, _, a) = icrf_study(&cfg.icrf, cfg.seed)?;
            (serde_json::to_value(r)?, a)
        }
        Mode::Scbr => {
            let (r, a) = scbr_study(&cfg.scbr, cfg.seed)?;
            (serde_json::to_value(r)?, a)
        }
        Mode::Softmask => {
            let (r, a) = softmask_study(&cfg.softmask, cfg.seed)?;
            (serde_json::to_value(r)?, a)
        }
        Mode::Tacot => (serde_json::to_value(tacot_study(&cfg.tacot)?)?, Artifacts::default()),
        Mode::Eval => (serde_json::to_value(eval_study(&cfg.eval)?)?, Artifacts::default()),
    };
    artifacts.json("report.json", &report);
    artifacts.json("config.json", cfg);

    let mut entries = Vec::new();
    for (rel, bytes) in artifacts.files() {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ArtifactEntry {
            path: rel.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        mode: cfg.mode,
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        artifacts: entries,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        report,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_fields() {
        let c = ExperimentConfig::from_json(r#"{"mode": "tacot", "seed": 4}"#).unwrap();
        assert_eq!(c, ExperimentConfig::new(Mode::Tacot, 4));
        assert!(ExperimentConfig::from_json(r#"{"mode": "tacot", "sed": 4}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"mode": "dance"}"#).is_err());
        assert_ne!(c.hash(), ExperimentConfig::new(Mode::Tacot, 5).hash());
    }

    #[test]
    fn validation_happens_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = ExperimentConfig::new(Mode::Eval, 0);
        let err = run_experiment(&cfg, &out).unwrap_err();
        assert!(err.is_validation());
        assert!(!out.exists());
    }

    #[test]
    fn tacot_run_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&ExperimentConfig::new(Mode::Tacot, 1), dir.path()).unwrap();
        assert_eq!(s.report["accuracy"], 1.0);
        let names: Vec<&str> = s.manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(names, ["report.json", "config.json"]);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn softmask_study_passes_checks() {
        let (r, a) = softmask_study(&SoftmaskStudy::default(), 8).unwrap();
        assert_eq!(r.n_masks, 20);
        assert!(r.all_roundtrip_exact && r.all_strictly_monotone);
        assert!(r.max_complement_error < 1e-9);
        assert_eq!(a.files().len(), 20);
    }

    #[test]
    fn scbr_study_small() {
        let s = ScbrStudy { width: 16, height: 16, gt_sigma: 3.0, gt_radius: 5.0, steps: 40, ..Default::default() };
        let (r, a) = scbr_study(&s, 3).unwrap();
        assert!(r.last.l_total < r.initial.l_total);
        let csv = std::str::from_utf8(a.get("trajectory.csv").unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 42);
        assert!(csv.starts_with("step,l_sup,l_con,l_grad,l_total,lambda_con,lambda_grad"));
    }

    #[test]
    fn icrf_study_tiny() {
        let s = IcrfStudy {
            synthetic: SyntheticPairConfig { width: 20, height: 20, blob_sigma: 1.5, fragment_scatter: 2.0, ..Default::default() },
            n_train: 4,
            n_test: 3,
            train: TrainConfig { steps: 20, hidden: vec![8], batch_size: 2, ..Default::default() },
            save_fields: 1,
            ..Default::default()
        };
        let (r, _, losses, a) = icrf_study(&s, 9).unwrap();
        assert_eq!(r.samples.len(), 3);
        assert_eq!(losses.len(), 20);
        assert!(a.get("fields/0_refined.afg").is_some());
        assert!(a.get("model.icrf").is_some());
        let (r2, ..) = icrf_study(&s, 9).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&r2).unwrap());
    }
}
