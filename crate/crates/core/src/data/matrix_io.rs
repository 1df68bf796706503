//! Plain-text matrix files.
//!
//! ```text
//! <rows> <cols>
//! v00 v01 ... v0(cols-1)
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20 + 16);
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<DenseMatrix> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    let (rows, cols) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(err(1, "missing header".into()));
        };
        if line.trim().is_empty() {
            continue;
        }
        let dims: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<Vec<usize>> = dims.iter().map(|t| t.parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[r, c]) => break (r, c),
            _ => {
                return Err(err(
                    i + 1,
                    format!("malformed header {line:?}, expected \"<rows> <cols>\""),
                ))
            }
        }
    };

    let expected = rows * cols;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 1;
    for (i, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        last_line = i + 1;
        if tokens.len() != cols {
            return Err(err(
                i + 1,
                format!("expected {cols} values on row, found {}", tokens.len()),
            ));
        }
        for t in tokens {
            let v: f64 = t
                .parse()
                .map_err(|_| err(i + 1, format!("non-numeric token {t:?}")))?;
            if !v.is_finite() {
                return Err(err(i + 1, format!("non-finite value {t:?}")));
            }
            values.push(v);
        }
        if values.len() > expected {
            break;
        }
    }
    if values.len() != expected {
        return Err(err(
            last_line,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    DenseMatrix::new(rows, cols, values)
}

pub fn save_matrix(m: &DenseMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn parses_identity() {
        let m = parse_matrix("2 2\n1 0\n0 1\n", "t").unwrap();
        assert_eq!(m, DenseMatrix::identity(2));
    }

    #[test]
    fn short_file_is_rejected() {
        let e = parse_matrix("2 2\n1 0\n", "t").unwrap_err();
        assert!(e.to_string().contains("expected 4 values, found 2"), "{e}");
        assert!(e.to_string().contains("t:2"), "{e}");
    }

    #[test]
    fn bad_tokens_report_line() {
        let e = parse_matrix("2 2\n1 0\n0 x\n", "m.txt").unwrap_err();
        assert!(e.to_string().starts_with("m.txt:3:"), "{e}");
        assert!(parse_matrix("2\n1\n", "t").is_err());
        assert!(parse_matrix("", "t").is_err());
        assert!(parse_matrix("1 2\n1 2 3\n", "t").is_err());
        assert!(parse_matrix("1 1\nNaN\n", "t").is_err());
    }

    #[test]
    fn random_round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(3);
        let m = DenseMatrix::from_fn(17, 9, |_, _| {
            rng.gaussian() * 10f64.powf(rng.uniform(-8.0, 8.0))
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        save_matrix(&m, &p).unwrap();
        let back = load_matrix(&p).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn text_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 12)) {
            let m = DenseMatrix::new(3, 4, values).unwrap();
            let back = parse_matrix(&format_matrix(&m), "p").unwrap();
            for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
