//! Seeded experiments over the learning machines, with CSV output and SVG
//! rendering of median error curves.

mod experiments;
mod render;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::AlphabetError;
use crate::certify::CertifyError;
use crate::gauge::GaugeError;
use crate::linops::LinOpError;
use crate::machine::MachineError;

pub use experiments::{
    phase_transition_summary, run_phase_transition, run_sparse_pca, run_spiral_gauges, run_superres, PhaseCell, PhaseRecord,
    SpiralRow,
};
pub use render::{render_curves, render_svg};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("CSV schema mismatch: {0}")]
    Schema(String),
    #[error("no records in {0}")]
    Empty(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    SparsePca,
    Superres,
    PhaseTransition,
    SpiralGauges,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::SparsePca => "sparse_pca",
            ExperimentName::Superres => "superres",
            ExperimentName::PhaseTransition => "phase_transition",
            ExperimentName::SpiralGauges => "spiral_gauges",
        }
    }
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            HarnessError::Config(format!(
                "unknown experiment {s:?}; expected sparse_pca, superres, phase_transition or spiral_gauges"
            ))
        })
    }
}

/// A sparsity level: a number of atoms, or `"full"` for the convex machine
/// over the whole alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Atoms(usize),
    Full(FullTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullTag {
    Full,
}

impl PValue {
    pub const FULL: PValue = PValue::Full(FullTag::Full);

    pub fn resolve(self, n_atoms: usize) -> usize {
        match self {
            PValue::Atoms(p) => p.min(n_atoms),
            PValue::Full(_) => n_atoms,
        }
    }
}

/// `"auto"`: 25 log-spaced points over `[0.1 psi#, 4 psi#]` together with
/// `0.9 psi#`, `psi#` and `1.1 psi#`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiGrid {
    Auto(AutoTag),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl PsiGrid {
    pub const AUTO: PsiGrid = PsiGrid::Auto(AutoTag::Auto);

    pub fn values(&self, psi_sharp: f64) -> Vec<f64> {
        let mut v = match self {
            PsiGrid::List(v) => v.clone(),
            PsiGrid::Auto(_) => {
                let (lo, hi) = ((0.1 * psi_sharp).ln(), (4.0 * psi_sharp).ln());
                let mut v: Vec<f64> = (0..25).map(|k| (lo + (hi - lo) * k as f64 / 24.0).exp()).collect();
                v.extend([0.9 * psi_sharp, psi_sharp, 1.1 * psi_sharp]);
                v
            }
        };
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Dual alternating warm starts followed by branch-and-bound.
    Ladder,
    Oracle,
    Bnb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub trials: usize,
    pub noise_levels: Vec<f64>,
    pub p_values: Vec<PValue>,
    pub psi_grid: PsiGrid,
    pub seed: u64,
    pub solver: SolverChoice,
    pub output: Option<PathBuf>,
    pub svg_dir: Option<PathBuf>,
    /// Store measured wall time; off by default so that output is
    /// reproducible byte for byte.
    pub record_runtime: bool,
    pub time_limit_s: Option<f64>,
    /// Super-resolution: also run the convex machine on the 20 unsigned waves.
    pub raw_convex: bool,
    /// Phase transition: ambient dimensions.
    pub dims: Vec<usize>,
    /// Phase transition: sparsity levels, with `p = r`.
    pub r_values: Vec<usize>,
    /// Phase transition: measurement counts; defaults to `1..=d`.
    pub m_values: Option<Vec<usize>>,
    /// Spiral: grid size (t = 0.25, 0.5 and 2 are always added).
    pub spiral_atoms: usize,
    pub budget: u64,
}

/// Partial config as read from JSON; missing fields take the experiment's
/// defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<ExperimentName>,
    trials: Option<usize>,
    noise_levels: Option<Vec<f64>>,
    p_values: Option<Vec<PValue>>,
    psi_grid: Option<PsiGrid>,
    seed: Option<u64>,
    solver: Option<SolverChoice>,
    output: Option<PathBuf>,
    svg_dir: Option<PathBuf>,
    record_runtime: Option<bool>,
    time_limit_s: Option<f64>,
    raw_convex: Option<bool>,
    dims: Option<Vec<usize>>,
    r_values: Option<Vec<usize>>,
    m_values: Option<Vec<usize>>,
    spiral_atoms: Option<usize>,
    budget: Option<u64>,
}

impl ExperimentConfig {
    pub fn default_for(name: ExperimentName) -> Self {
        let base = ExperimentConfig {
            name,
            trials: 1,
            noise_levels: vec![0.0],
            p_values: vec![PValue::Atoms(1)],
            psi_grid: PsiGrid::AUTO,
            seed: 0,
            solver: SolverChoice::Ladder,
            output: None,
            svg_dir: None,
            record_runtime: false,
            time_limit_s: None,
            raw_convex: false,
            dims: vec![16],
            r_values: vec![1, 2, 3],
            m_values: None,
            spiral_atoms: 101,
            budget: 10_000_000,
        };
        let sparse = vec![PValue::Atoms(1), PValue::Atoms(2), PValue::Atoms(3), PValue::FULL];
        match name {
            ExperimentName::SparsePca => {
                ExperimentConfig { trials: 100, noise_levels: vec![0.01, 0.05, 0.1], p_values: sparse, ..base }
            }
            ExperimentName::Superres => {
                ExperimentConfig { trials: 200, noise_levels: vec![1e-3, 1e-2, 1e-1], p_values: sparse, ..base }
            }
            ExperimentName::PhaseTransition => ExperimentConfig { trials: 100, solver: SolverChoice::Oracle, ..base },
            ExperimentName::SpiralGauges => base,
        }
    }

    /// Reads a JSON config; `name` may be omitted when `fallback` is given.
    pub fn from_json(text: &str, fallback: Option<ExperimentName>) -> Result<Self, HarnessError> {
        let f: ConfigFile = serde_json::from_str(text)?;
        let name = f.name.or(fallback).ok_or_else(|| HarnessError::Config("missing experiment name".into()))?;
        let d = Self::default_for(name);
        let cfg = ExperimentConfig {
            name,
            trials: f.trials.unwrap_or(d.trials),
            noise_levels: f.noise_levels.unwrap_or(d.noise_levels),
            p_values: f.p_values.unwrap_or(d.p_values),
            psi_grid: f.psi_grid.unwrap_or(d.psi_grid),
            seed: f.seed.unwrap_or(d.seed),
            solver: f.solver.unwrap_or(d.solver),
            output: f.output.or(d.output),
            svg_dir: f.svg_dir.or(d.svg_dir),
            record_runtime: f.record_runtime.unwrap_or(d.record_runtime),
            time_limit_s: f.time_limit_s.or(d.time_limit_s),
            raw_convex: f.raw_convex.unwrap_or(d.raw_convex),
            dims: f.dims.unwrap_or(d.dims),
            r_values: f.r_values.unwrap_or(d.r_values),
            m_values: f.m_values.or(d.m_values),
            spiral_atoms: f.spiral_atoms.unwrap_or(d.spiral_atoms),
            budget: f.budget.unwrap_or(d.budget),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, None)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise_levels must be a nonempty list of finite nonnegative numbers");
        }
        if self.p_values.is_empty() || self.p_values.contains(&PValue::Atoms(0)) {
            return bad("p_values must be a nonempty list of positive integers or \"full\"");
        }
        if let PsiGrid::List(v) = &self.psi_grid {
            if v.is_empty() || v.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return bad("psi_grid must be \"auto\" or a nonempty list of finite nonnegative numbers");
            }
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a nonempty list of positive integers");
        }
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return bad("r_values must be a nonempty list of positive integers");
        }
        if let Some(ms) = &self.m_values {
            if ms.is_empty() || ms.contains(&0) {
                return bad("m_values must be a nonempty list of positive integers");
            }
        }
        if self.time_limit_s.is_some_and(|t| !(t > 0.0)) {
            return bad("time_limit_s must be positive");
        }
        if self.spiral_atoms < 2 {
            return bad("spiral_atoms must be at least 2");
        }
        Ok(())
    }

    pub(crate) fn time_limit(&self) -> Option<std::time::Duration> {
        self.time_limit_s.map(std::time::Duration::from_secs_f64)
    }
}

/// One solve of one trial. Failed solves carry NaN errors and a status
/// starting with `failed:`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub p: usize,
    pub psi: f64,
    pub sigma: f64,
    #[serde(rename = "trial")]
    pub trial_index: usize,
    pub coeff_error: f64,
    pub model_error: f64,
    pub objective: f64,
    pub runtime_ms: f64,
    pub status: String,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        !self.status.starts_with("failed")
    }
}

pub const TRIAL_HEADER: [&str; 10] =
    ["experiment", "p", "psi", "sigma", "trial", "coeff_error", "model_error", "objective", "runtime_ms", "status"];

/// Writes records with any serializable schema.
pub fn write_csv<T: Serialize, W: Write>(records: &[T], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(records: &[T], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file))
}

/// Parses a trial CSV, rejecting any other header.
pub fn read_trials<R: Read>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRIAL_HEADER.iter().copied()) {
        return Err(HarnessError::Schema(format!(
            "expected header {}, found {}",
            TRIAL_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in r.deserialize().enumerate() {
        let rec: TrialRecord = row.map_err(|e| HarnessError::Schema(format!("row {}: {e}", line + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trials_file(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_trials(file)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Medians over the successful trials of one `(experiment, sigma, p, psi)`
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub experiment: String,
    pub sigma: f64,
    pub p: usize,
    pub psi: f64,
    pub median_model_error: f64,
    pub median_coeff_error: f64,
    pub median_objective: f64,
    pub trials: usize,
    pub failures: usize,
}

/// Cells in order of experiment, sigma, p and psi.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.p.cmp(&b.p))
            .then(a.psi.total_cmp(&b.psi))
    });
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let head = sorted[i];
        let mut j = i;
        while j < sorted.len()
            && sorted[j].experiment == head.experiment
            && sorted[j].sigma == head.sigma
            && sorted[j].p == head.p
            && sorted[j].psi == head.psi
        {
            j += 1;
        }
        let cell: Vec<&TrialRecord> = sorted[i..j].iter().copied().filter(|r| r.succeeded()).collect();
        let med = |f: fn(&TrialRecord) -> f64| median(&mut cell.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        out.push(CellSummary {
            experiment: head.experiment.clone(),
            sigma: head.sigma,
            p: head.p,
            psi: head.psi,
            median_model_error: med(|r| r.model_error),
            median_coeff_error: med(|r| r.coeff_error),
            median_objective: med(|r| r.objective),
            trials: cell.len(),
            failures: j - i - cell.len(),
        });
        i = j;
    }
    out
}

/// What [`run_experiment`] produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Trials(Vec<TrialRecord>),
    Phase(Vec<PhaseRecord>),
    Spiral(Vec<SpiralRow>),
}

impl ExperimentOutput {
    pub fn len(&self) -> usize {
        match self {
            ExperimentOutput::Trials(v) => v.len(),
            ExperimentOutput::Phase(v) => v.len(),
            ExperimentOutput::Spiral(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        match self {
            ExperimentOutput::Trials(v) => write_csv(v, out),
            ExperimentOutput::Phase(v) => write_csv(v, out),
            ExperimentOutput::Spiral(v) => write_csv(v, out),
        }
    }
}

/// Runs the configured experiment and writes its CSV (and, for trial
/// experiments with `svg_dir` set, its curves).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let out = match cfg.name {
        ExperimentName::SparsePca => ExperimentOutput::Trials(run_sparse_pca(cfg)?),
        ExperimentName::Superres => ExperimentOutput::Trials(run_superres(cfg)?),
        ExperimentName::PhaseTransition => ExperimentOutput::Phase(run_phase_transition(cfg)?),
        ExperimentName::SpiralGauges => ExperimentOutput::Spiral(run_spiral_gauges(cfg)?),
    };
    if let Some(path) = &cfg.output {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        out.write(std::io::BufWriter::new(file))?;
        if let (Some(dir), ExperimentOutput::Trials(_)) = (&cfg.svg_dir, &out) {
            render_curves(path, dir)?;
        }
    }
    Ok(out)
}
