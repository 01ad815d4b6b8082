use std::path::Path;

use rayon::prelude::*;

use super::rng::substream_seed;
use super::synth::{gen_pair, SyntheticPair, SyntheticPairConfig};
use crate::error::{Error, Result};
use crate::field::{read_field, write_field, ScalarField};

/// Pairs `start..start + n`, each generated from `substream_seed(seed, i)`.
pub fn gen_corpus(base: &SyntheticPairConfig, seed: u64, start: u64, n: usize) -> Result<Vec<SyntheticPair>> {
    base.validate()?;
    (start..start + n as u64)
        .into_par_iter()
        .map(|i| {
            gen_pair(&SyntheticPairConfig {
                seed: substream_seed(seed, i),
                ..base.clone()
            })
        })
        .collect()
}

pub fn sample_name(i: usize) -> String {
    format!("{i:05}.afg")
}

/// Writes `x0/NAME.afg`, `x1/NAME.afg` and `points.csv` under `dir`.
pub fn write_corpus(dir: &Path, pairs: &[SyntheticPair]) -> Result<()> {
    for sub in ["x0", "x1"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let points_path = dir.join("points.csv");
    let mut points = csv::Writer::from_path(&points_path).map_err(|e| csv_err(&points_path, e))?;
    points
        .write_record(["sample", "target", "x", "y"])
        .map_err(|e| csv_err(&points_path, e))?;
    for (i, p) in pairs.iter().enumerate() {
        let name = sample_name(i);
        write_field(&p.x0, dir.join("x0").join(&name))?;
        write_field(&p.x1, dir.join("x1").join(&name))?;
        for (k, (x, y)) in p.gt_points.iter().enumerate() {
            points
                .write_record([name.clone(), k.to_string(), x.to_string(), y.to_string()])
                .map_err(|e| csv_err(&points_path, e))?;
        }
    }
    points.flush().map_err(|e| Error::io(&points_path, e))?;
    Ok(())
}

/// Reads every `x0/*.afg` with its same-named `x1` partner, in name order.
pub fn read_corpus(dir: &Path) -> Result<Vec<(String, ScalarField, ScalarField)>> {
    let x0_dir = dir.join("x0");
    let mut names: Vec<String> = std::fs::read_dir(&x0_dir)
        .map_err(|e| Error::io(&x0_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".afg"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidConfig(format!("no .afg files in {}", x0_dir.display())));
    }
    names
        .into_iter()
        .map(|n| {
            let x0 = read_field(x0_dir.join(&n))?;
            let x1_path = dir.join("x1").join(&n);
            if !x1_path.exists() {
                return Err(Error::MissingPair { name: n });
            }
            let x1 = read_field(x1_path)?;
            x0.ensure_same_dims(&x1)?;
            Ok((n, x0, x1))
        })
        .collect()
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = SyntheticPairConfig { width: 24, height: 24, fragment_scatter: 2.0, ..Default::default() };
        let pairs = gen_corpus(&base, 5, 0, 3).unwrap();
        assert_eq!(pairs, gen_corpus(&base, 5, 0, 3).unwrap());
        assert_eq!(pairs[1], gen_corpus(&base, 5, 1, 1).unwrap()[0]);
        write_corpus(dir.path(), &pairs).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].0, "00002.afg");
        assert_eq!(back[2].1, pairs[2].x0);
        assert_eq!(back[2].2, pairs[2].x1);
        let csv = std::fs::read_to_string(dir.path().join("points.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn missing_partner() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = gen_corpus(&SyntheticPairConfig::default(), 1, 0, 1).unwrap();
        write_corpus(dir.path(), &pairs).unwrap();
        std::fs::remove_file(dir.path().join("x1").join("00000.afg")).unwrap();
        assert!(matches!(read_corpus(dir.path()), Err(Error::MissingPair { .. })));
    }
}
