//! Saliency-style evaluation metrics for predicted heatmaps.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{read_field, ScalarField};

/// Smoothing inside the KLD logarithm.
pub const KLD_EPS: f64 = 1e-12;
pub const DEFAULT_FIX_FRAC: f64 = 0.5;

/// `Σ ĝ · ln(ĝ / (p̂ + ε) + ε)` over sum-normalized maps, floored at zero.
pub fn kld(pred: &ScalarField, gt: &ScalarField) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let p = pred.sum_normalize()?;
    let g = gt.sum_normalize()?;
    let total: f64 = p
        .data()
        .iter()
        .zip(g.data())
        .map(|(&pi, &gi)| gi * (gi / (pi + KLD_EPS) + KLD_EPS).ln())
        .sum();
    // the ε terms can push identical maps a hair below zero
    Ok(total.max(0.0))
}

/// Histogram intersection of the sum-normalized maps.
pub fn sim(pred: &ScalarField, gt: &ScalarField) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let p = pred.sum_normalize()?;
    let g = gt.sum_normalize()?;
    let total: f64 = p.data().iter().zip(g.data()).map(|(&a, &b)| a.min(b)).sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Mean z-scored prediction over fixations `{gt >= fix_frac * max(gt)}`.
pub fn nss(pred: &ScalarField, gt: &ScalarField, fix_frac: f64) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let z = pred.zscore_normalize()?;
    let peak = gt.max();
    if !(peak > 0.0) {
        return Err(Error::EmptyFixationSet);
    }
    let cut = fix_frac * peak;
    let (sum, count) = z
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g >= cut)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::EmptyFixationSet);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub name: String,
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
    pub fix_frac: f64,
    pub normalization: String,
    pub n_scored: usize,
    pub per_sample: Vec<SampleMetrics>,
    pub missing: Vec<String>,
    pub failures: Vec<SampleFailure>,
}

pub fn score(name: &str, pred: &ScalarField, gt: &ScalarField, fix_frac: f64) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        name: name.to_string(),
        kld: kld(pred, gt)?,
        sim: sim(pred, gt)?,
        nss: nss(pred, gt, fix_frac)?,
    })
}

/// Unweighted means over the scored samples, in their given order.
pub fn summarize(
    per_sample: Vec<SampleMetrics>,
    missing: Vec<String>,
    failures: Vec<SampleFailure>,
    fix_frac: f64,
) -> MetricsReport {
    let n = per_sample.len();
    let mean = |f: fn(&SampleMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_sample.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MetricsReport {
        kld: mean(|s| s.kld),
        sim: mean(|s| s.sim),
        nss: mean(|s| s.nss),
        fix_frac,
        normalization: "sum".into(),
        n_scored: n,
        per_sample,
        missing,
        failures,
    }
}

fn afg_names(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".afg") {
            names.insert(name);
        }
    }
    Ok(names)
}

/// Scores every `*.afg` in `pred_dir` against the same-named file in `gt_dir`.
///
/// Unmatched names on either side are reported as missing; unreadable or
/// degenerate samples are recorded as failures and skipped.
pub fn evaluate_corpus(pred_dir: &Path, gt_dir: &Path, fix_frac: f64) -> Result<MetricsReport> {
    let preds = afg_names(pred_dir)?;
    let gts = afg_names(gt_dir)?;
    let missing: Vec<String> = preds.symmetric_difference(&gts).cloned().collect();
    let matched: Vec<&String> = preds.intersection(&gts).collect();

    let results: Vec<std::result::Result<SampleMetrics, SampleFailure>> = matched
        .par_iter()
        .map(|name| {
            let run = || -> Result<SampleMetrics> {
                let pred = read_field(pred_dir.join(name))?;
                let gt = read_field(gt_dir.join(name))?;
                score(name, &pred, &gt, fix_frac)
            };
            run().map_err(|e| SampleFailure {
                name: (*name).clone(),
                error: e.to_string(),
            })
        })
        .collect();

    let mut per_sample = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => per_sample.push(s),
            Err(f) => failures.push(f),
        }
    }
    for name in &missing {
        log::warn!("unpaired sample {name}");
    }
    Ok(summarize(per_sample, missing, failures, fix_frac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::write_field;
    use rand::{RngExt, SeedableRng};

    fn row(v: &[f64]) -> ScalarField {
        ScalarField::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn random_field(seed: u64) -> ScalarField {
        let mut r = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
        ScalarField::from_fn(8, 8, |_, _| r.random::<f64>())
    }

    #[test]
    fn kld_examples() {
        let p = random_field(59);
        assert!(kld(&p, &p).unwrap().abs() < 1e-9);
        let v = kld(&row(&[0.5, 0.5]), &row(&[1.0, 0.0])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-6);
        let q = random_field(60);
        assert_ne!(kld(&p, &q).unwrap(), kld(&q, &p).unwrap());
        assert!(matches!(kld(&ScalarField::zeros(8, 8), &p), Err(Error::AllZeroField)));
    }

    #[test]
    fn sim_examples() {
        let p = random_field(61);
        assert!((sim(&p, &p).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(sim(&row(&[1.0, 0.0]), &row(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((sim(&row(&[0.3, 0.7]), &row(&[0.7, 0.3])).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn nss_single_fixation() {
        // 5x5 zeros with a single peak of 1 at the only fixation pixel
        let pred = ScalarField::from_fn(5, 5, |x, y| if x == 2 && y == 3 { 1.0 } else { 0.0 });
        let gt = pred.clone();
        // mean 1/25, population variance 1/25 - 1/625 = 24/625
        let expected = (1.0 - 1.0 / 25.0) / (24.0f64 / 625.0).sqrt();
        assert!((nss(&pred, &gt, 0.5).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 4.898979485566356).abs() < 1e-12);
    }

    #[test]
    fn nss_errors_and_affine_invariance() {
        let gt = random_field(62);
        assert!(matches!(
            nss(&ScalarField::filled(8, 8, 0.3), &gt, 0.5),
            Err(Error::ZeroVariance)
        ));
        assert!(matches!(
            nss(&gt, &ScalarField::zeros(8, 8), 0.5),
            Err(Error::EmptyFixationSet)
        ));
        let p = random_field(63);
        let base = nss(&p, &gt, 0.5).unwrap();
        let moved = nss(&p.map(|v| 3.7 * v + 11.0), &gt, 0.5).unwrap();
        assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn corpus_with_missing_pair() {
        let dir = tempfile::tempdir().unwrap();
        let pred_dir = dir.path().join("pred");
        let gt_dir = dir.path().join("gt");
        std::fs::create_dir_all(&pred_dir).unwrap();
        std::fs::create_dir_all(&gt_dir).unwrap();
        for (i, seed) in [70u64, 71].iter().enumerate() {
            let f = random_field(*seed);
            write_field(&f, pred_dir.join(format!("s{i}.afg"))).unwrap();
            write_field(&f, gt_dir.join(format!("s{i}.afg"))).unwrap();
        }
        write_field(&random_field(72), pred_dir.join("orphan.afg")).unwrap();
        let report = evaluate_corpus(&pred_dir, &gt_dir, 0.5).unwrap();
        assert_eq!(report.missing, vec!["orphan.afg".to_string()]);
        assert_eq!(report.n_scored, 2);
        assert!(report.kld.abs() < 1e-9);
        assert!((report.sim - 1.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_mean_is_arithmetic_average() {
        let dir = tempfile::tempdir().unwrap();
        let (pd, gd) = (dir.path().join("p"), dir.path().join("g"));
        std::fs::create_dir_all(&pd).unwrap();
        std::fs::create_dir_all(&gd).unwrap();
        // sample a: kld = 0.75 ln3 + 0.25 ln(1/3) = 0.5 ln3, sim 0.5, nss -1
        // sample b: identical maps, kld 0, sim 1, nss 1
        write_field(&row(&[0.25, 0.75]), pd.join("a.afg")).unwrap();
        write_field(&row(&[0.75, 0.25]), gd.join("a.afg")).unwrap();
        write_field(&row(&[0.3, 0.7]), pd.join("b.afg")).unwrap();
        write_field(&row(&[0.3, 0.7]), gd.join("b.afg")).unwrap();
        let r = evaluate_corpus(&pd, &gd, 0.5).unwrap();
        assert_eq!(r.n_scored, 2);
        assert!((r.kld - 0.25 * 3f64.ln()).abs() < 1e-9);
        assert!((r.sim - 0.75).abs() < 1e-9);
        assert!(r.nss.abs() < 1e-9);
    }

    #[test]
    fn corpus_records_sample_failures() {
        let dir = tempfile::tempdir().unwrap();
        let (pd, gd) = (dir.path().join("p"), dir.path().join("g"));
        std::fs::create_dir_all(&pd).unwrap();
        std::fs::create_dir_all(&gd).unwrap();
        // uniform prediction has no variance for NSS
        write_field(&row(&[0.5, 0.5]), pd.join("flat.afg")).unwrap();
        write_field(&row(&[1.0, 0.0]), gd.join("flat.afg")).unwrap();
        write_field(&row(&[0.3, 0.7]), pd.join("ok.afg")).unwrap();
        write_field(&row(&[0.3, 0.7]), gd.join("ok.afg")).unwrap();
        let r = evaluate_corpus(&pd, &gd, 0.5).unwrap();
        assert_eq!(r.n_scored, 1);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].name, "flat.afg");
    }

    proptest::proptest! {
        #[test]
        fn metric_properties(seed: u64) {
            let mut r = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
            let p = ScalarField::from_fn(6, 6, |_, _| r.random_range(0.01..1.0));
            let g = ScalarField::from_fn(6, 6, |_, _| r.random_range(0.01..1.0));
            proptest::prop_assert!(kld(&p, &p).unwrap().abs() < 1e-9);
            proptest::prop_assert!((sim(&p, &p).unwrap() - 1.0).abs() < 1e-9);
            proptest::prop_assert_eq!(sim(&p, &g).unwrap(), sim(&g, &p).unwrap());
            let mut prev = f64::INFINITY;
            for k in 0..=10 {
                let a = k as f64 / 10.0;
                let mix = p.zip_map(&g, |x, y| (1.0 - a) * x + a * y).unwrap();
                let v = kld(&mix, &g).unwrap();
                proptest::prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
}
