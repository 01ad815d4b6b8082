//! `AFG1` grid files.
//!
//! ```text
//! AFG1
//! <width> <height>
//! v v v ...        (width*height whitespace-separated decimals, row-major)
//! ```
//!
//! Values are written in the shortest decimal form that parses back to the
//! same `f64`, so `read(write(f)) == f` holds bit for bit. Each row of the
//! grid goes on its own line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BinaryMask, ScalarField};
use crate::error::{Error, Result};

const MAGIC: &str = "AFG1";

pub(crate) fn format_value(out: &mut String, v: f64) {
    // `{}` on f64 is shortest round-trip; it also never emits exponents that
    // a plain float parser would reject.
    write!(out, "{v}").expect("write to String");
}

fn format_grid(width: usize, height: usize, values: impl Iterator<Item = f64>) -> String {
    let mut out = format!("{MAGIC}\n{width} {height}\n");
    for (i, v) in values.enumerate() {
        if i % width != 0 {
            out.push(' ');
        }
        format_value(&mut out, v);
        if i % width == width - 1 {
            out.push('\n');
        }
    }
    out
}

pub fn field_to_string(f: &ScalarField) -> String {
    format_grid(f.width(), f.height(), f.data().iter().copied())
}

pub fn write_field(f: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, field_to_string(f)).map_err(|e| Error::io(path, e))
}

pub fn write_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_grid(m.width(), m.height(), m.data().iter().map(|&v| f64::from(v)));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_field(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(MAGIC) => {}
        other => {
            return Err(Error::MalformedHeader(format!(
                "expected magic {MAGIC:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let dims_line = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing dimensions line".into()))?;
    let dims: Vec<&str> = dims_line.split_whitespace().collect();
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad dimension {s:?}")))
    };
    let (width, height) = match dims.as_slice() {
        [w, h] => (parse_dim(w)?, parse_dim(h)?),
        _ => {
            return Err(Error::MalformedHeader(format!(
                "expected \"<width> <height>\", found {dims_line:?}"
            )))
        }
    };

    let mut data = Vec::with_capacity(width * height);
    for token in lines.flat_map(str::split_whitespace) {
        let v: f64 = token.parse().map_err(|_| Error::MalformedToken {
            token: token.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { index: data.len() });
        }
        data.push(v);
    }
    if data.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values for {width}x{height}", width * height),
            actual: format!("{} values", data.len()),
        });
    }
    ScalarField::new(width, height, data)
}

pub fn parse_mask(text: &str) -> Result<BinaryMask> {
    let f = parse_field(text)?;
    let data = f
        .data()
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::NotBinary { index })
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    BinaryMask::new(f.width(), f.height(), data)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn round_trip_random_field() {
        let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(1);
        let f = ScalarField::from_fn(4, 3, |_, _| rng.random_range(-10.0..10.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.afg");
        write_field(&f, &path).unwrap();
        assert_eq!(read_field(&path).unwrap(), f);
    }

    #[test]
    fn header_dimension_mismatch() {
        assert!(matches!(
            parse_field("AFG1\n2 2\n1 2 3\n"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nan_token() {
        assert!(matches!(
            parse_field("AFG1\n2 1\n1 nan\n"),
            Err(Error::NonFiniteValue { index: 1 })
        ));
        assert!(matches!(
            parse_field("AFG1\n1 1\ninf\n"),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn malformed() {
        assert!(matches!(parse_field("AFG2\n1 1\n0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_field("AFG1\n1\n0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_field("AFG1\n0 1\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            parse_field("AFG1\n1 1\nabc\n"),
            Err(Error::MalformedToken { .. })
        ));
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let m = BinaryMask::new(3, 2, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.afg");
        write_mask(&m, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
        assert!(matches!(
            parse_mask("AFG1\n2 1\n0 0.5\n"),
            Err(Error::NotBinary { index: 1 })
        ));
    }

    proptest::proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            w in 1usize..6,
            h in 1usize..6,
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 36),
        ) {
            let f = ScalarField::new(w, h, values[..w * h].to_vec()).unwrap();
            let back = parse_field(&field_to_string(&f)).unwrap();
            for (a, b) in f.data().iter().zip(back.data()) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
