//! Parsing of alphabet shorthands, number lists and sensing operators.

use std::path::Path;

use nalgebra::DMatrix;

use gaugeopt::alphabet::{build_canonical, build_gaussian_waves, build_sparse_pca, build_spiral, load_alphabet};
use gaugeopt::linops::matrix_from_rows;
use gaugeopt::{Alphabet, LinOp};

use crate::CliError;

/// Sample points per wave for the `waves:n,width` shorthand.
const WAVE_SAMPLES_PER_CENTER: usize = 2;

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn fields<T: std::str::FromStr>(flag: &str, kind: &str, args: &str, names: &[&str]) -> Result<Vec<T>, CliError> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    let expected = || usage(format!("{flag}: {kind} takes {}, got {args:?}", names.join(",")));
    if parts.len() != names.len() {
        return Err(expected());
    }
    parts.iter().map(|p| p.parse().map_err(|_| expected())).collect()
}

/// Resolves `canonical:d`, `spiral:n`, `spca:d,k,count,seed`,
/// `waves:n,width`, or a path to an alphabet JSON file.
pub fn alphabet(flag: &str, arg: &str) -> Result<Alphabet, CliError> {
    let built = match arg.split_once(':') {
        Some(("canonical", rest)) => {
            let [d] = fields::<usize>(flag, "canonical", rest, &["d"])?[..] else { unreachable!() };
            build_canonical(d)
        }
        Some(("spiral", rest)) => {
            let [n] = fields::<usize>(flag, "spiral", rest, &["n"])?[..] else { unreachable!() };
            build_spiral(n)
        }
        Some(("spca", rest)) => {
            let v = fields::<u64>(flag, "spca", rest, &["d", "k", "count", "seed"])?;
            build_sparse_pca(v[0] as usize, v[1] as usize, v[2] as usize, v[3])
        }
        Some(("waves", rest)) => {
            let v = fields::<f64>(flag, "waves", rest, &["n", "width"])?;
            if v[0].fract() != 0.0 || v[0] < 1.0 {
                return Err(usage(format!("{flag}: waves needs a positive integer count, got {}", v[0])));
            }
            let n = v[0] as usize;
            let samples = WAVE_SAMPLES_PER_CENTER * n;
            let grid: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1).max(1) as f64).collect();
            build_gaussian_waves(n, v[1], 0.0, 1.0).and_then(|w| w.on_grid(&grid))
        }
        _ => {
            return load_alphabet(arg).map_err(|e| CliError::Domain(format!("{flag} {arg}: {e}")));
        }
    };
    built.map_err(|e| usage(format!("{flag} {arg}: {e}")))
}

/// Comma-separated reals.
pub fn numbers(flag: &str, arg: &str) -> Result<Vec<f64>, CliError> {
    arg.split(',')
        .map(|s| match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(usage(format!("{flag}: expected comma-separated finite numbers, got {s:?}"))),
        })
        .collect()
}

/// `identity`, `gaussian:m` (seeded by `seed`), or a JSON file holding an
/// array of rows.
pub fn sensing(flag: &str, arg: &str, d: usize, seed: u64) -> Result<DMatrix<f64>, CliError> {
    if arg == "identity" {
        return Ok(DMatrix::identity(d, d));
    }
    if let Some(rest) = arg.strip_prefix("gaussian:") {
        let m: usize = rest.trim().parse().map_err(|_| usage(format!("{flag}: gaussian takes m, got {arg:?}")))?;
        if m == 0 {
            return Err(usage(format!("{flag}: gaussian needs m >= 1")));
        }
        return LinOp::gaussian(m, d, seed).to_dense().map_err(CliError::domain);
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{flag} {arg}: {e}")))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{flag} {arg}: {e}")))?;
    matrix_from_rows(&rows).map_err(|e| CliError::Domain(format!("{flag} {arg}: {e}")))
}

/// Prints a value rounded to 12 decimals, `inf` when infinite.
pub fn number(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

pub fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| number(x)).collect();
    format!("[{}]", parts.join(", "))
}
