use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Alphabet, AlphabetError, AlphabetFlags};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphabetFile {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    flags: AlphabetFlags,
}

/// Formats a float with 17 significant digits, which round-trips exactly.
pub(crate) fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

pub(crate) fn write_vector(out: &mut String, v: &[f64]) {
    out.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        fmt_f64(out, *x);
    }
    out.push(']');
}

/// Serializes an alphabet to its JSON file format.
pub fn write_alphabet_json(a: &Alphabet) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"dim\": {},", a.dim());
    out.push_str("  \"atoms\": [\n");
    for (i, atom) in a.atoms().iter().enumerate() {
        out.push_str("    ");
        write_vector(&mut out, atom);
        out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
    }
    out.push_str("  ],\n");
    if let Some(labels) = a.labels() {
        let labels = serde_json::to_string(labels).expect("strings serialize");
        let _ = writeln!(out, "  \"labels\": {labels},");
    }
    let flags = a.flags();
    let _ = writeln!(
        out,
        "  \"flags\": {{\"contains_origin_closure\": {}, \"symmetric_closure\": {}, \"unit_norm\": {}}}",
        flags.contains_origin_closure, flags.symmetric_closure, flags.unit_norm
    );
    out.push_str("}\n");
    out
}

/// Parses and validates an alphabet from JSON text.
pub fn parse_alphabet(text: &str) -> Result<Alphabet, AlphabetError> {
    let file: AlphabetFile = serde_json::from_str(text).map_err(|e| AlphabetError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Alphabet::new(file.dim, file.atoms, file.labels, file.flags)
}

pub fn load_alphabet(path: impl AsRef<Path>) -> Result<Alphabet, AlphabetError> {
    parse_alphabet(&fs::read_to_string(path)?)
}

pub fn save_alphabet(a: &Alphabet, path: impl AsRef<Path>) -> Result<(), AlphabetError> {
    fs::write(path, write_alphabet_json(a))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_canonical, build_sparse_pca, build_spiral};

    #[test]
    fn round_trip_is_exact() {
        for a in [build_canonical(3).unwrap(), build_spiral(17).unwrap(), build_sparse_pca(4, 2, 10, 3).unwrap()] {
            let b = parse_alphabet(&write_alphabet_json(&a)).unwrap();
            assert_eq!(a, b);
            for (x, y) in a.atoms().iter().flatten().zip(b.atoms().iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let a = build_canonical(3).unwrap();
        save_alphabet(&a, &path).unwrap();
        assert_eq!(load_alphabet(&path).unwrap(), a);
    }

    #[test]
    fn rejects_invalid_files() {
        let wrong_len = r#"{"dim": 2, "atoms": [[1.0, 0.0], [1.0]]}"#;
        assert!(matches!(parse_alphabet(wrong_len), Err(AlphabetError::DimensionMismatch { index: 1, .. })));
        let zero = r#"{"dim": 2, "atoms": [[0.0, 0.0]]}"#;
        assert!(matches!(parse_alphabet(zero), Err(AlphabetError::ZeroAtom { index: 0 })));
        let broken = "{\"dim\": 2,\n \"atoms\": [[1.0, oops]]}";
        match parse_alphabet(broken) {
            Err(AlphabetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let missing = r#"{"atoms": [[1.0]]}"#;
        assert!(matches!(parse_alphabet(missing), Err(AlphabetError::Parse { .. })));
    }

    #[test]
    fn flags_default_to_false() {
        let a = parse_alphabet(r#"{"dim": 1, "atoms": [[2.0]]}"#).unwrap();
        assert_eq!(a.flags(), AlphabetFlags::default());
    }
}
