use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentName, HarnessError, SolverChoice, TrialRecord};
use crate::alphabet::{build_canonical, build_gaussian_waves, build_sparse_pca, build_spiral_with, Alphabet};
use crate::certify::{critical_angle, theta_prime};
use crate::gauge::{gauge, gauge_p};
use crate::linops::{materialize_sensing, LinOp};
use crate::machine::{model_from, solve_bnb, solve_convex, solve_machine, solve_oracle, MachineProblem, SolveResult};
use crate::rng::{seeded, standard_normals, trial_stream};

/// Relative coefficient error counted as exact recovery.
const SUCCESS_TOL: f64 = 1e-6;

/// One family of solves sharing a sensing matrix and a model space.
struct Variant {
    sensing: DMatrix<f64>,
    /// Atoms in model space, one per sensing column.
    alphabet: Alphabet,
    c_sharp: Option<Vec<f64>>,
    ps: Vec<usize>,
}

struct Setup {
    experiment: &'static str,
    x_sharp: Vec<f64>,
    y0: Vec<f64>,
    psi_sharp: f64,
    variants: Vec<Variant>,
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = crate::alphabet::distance(a, b);
    let den = crate::alphabet::norm(b);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn solve_one(cfg: &ExperimentConfig, prob: &MachineProblem) -> Result<SolveResult, HarnessError> {
    if prob.is_convex() {
        return Ok(solve_convex(prob)?);
    }
    Ok(match cfg.solver {
        SolverChoice::Ladder => solve_machine(prob, None, cfg.time_limit())?,
        SolverChoice::Oracle => solve_oracle(prob, cfg.budget)?,
        SolverChoice::Bnb => solve_bnb(prob, &[], cfg.time_limit())?,
    })
}

fn run_trials(cfg: &ExperimentConfig, setup: &Setup) -> Vec<TrialRecord> {
    let psis = cfg.psi_grid.values(setup.psi_sharp);
    let m = setup.y0.len();
    let per_trial: Vec<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let z = standard_normals(&mut trial_stream(cfg.seed, trial as u64), m);
            let mut out = Vec::new();
            for &sigma in &cfg.noise_levels {
                let y: Vec<f64> = setup.y0.iter().zip(&z).map(|(a, e)| a + sigma * e).collect();
                for v in &setup.variants {
                    for &p in &v.ps {
                        for &psi in &psis {
                            out.push(one_record(cfg, setup, v, &y, p, psi, sigma, trial));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.p.cmp(&b.p))
            .then(a.psi.total_cmp(&b.psi))
            .then(a.trial_index.cmp(&b.trial_index))
    });
    records
}

#[allow(clippy::too_many_arguments)]
fn one_record(
    cfg: &ExperimentConfig,
    setup: &Setup,
    v: &Variant,
    y: &[f64],
    p: usize,
    psi: f64,
    sigma: f64,
    trial: usize,
) -> TrialRecord {
    let started = Instant::now();
    let solved = MachineProblem::new(v.sensing.clone(), y.to_vec(), psi, p)
        .map_err(HarnessError::from)
        .and_then(|prob| solve_one(cfg, &prob))
        .and_then(|r| Ok((model_from(&r, &v.alphabet)?, r)));
    let runtime_ms = if cfg.record_runtime { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let base = TrialRecord {
        experiment: setup.experiment.to_string(),
        p,
        psi,
        sigma,
        trial_index: trial,
        coeff_error: f64::NAN,
        model_error: f64::NAN,
        objective: f64::NAN,
        runtime_ms,
        status: String::new(),
    };
    match solved {
        Ok((model, r)) => {
            let model_error = relative_error(&model, &setup.x_sharp);
            let coeff_error = match &v.c_sharp {
                Some(cs) => relative_error(&r.coefficients(v.alphabet.len()), cs),
                None => model_error,
            };
            TrialRecord { coeff_error, model_error, objective: r.objective, status: r.status.status.to_string(), ..base }
        }
        Err(e) => TrialRecord { status: format!("failed: {e}"), ..base },
    }
}

fn resolve_ps(cfg: &ExperimentConfig, n: usize) -> Vec<usize> {
    let mut ps: Vec<usize> = cfg.p_values.iter().map(|p| p.resolve(n)).collect();
    ps.sort_unstable();
    ps.dedup();
    ps
}

fn expect_name(cfg: &ExperimentConfig, name: ExperimentName) -> Result<(), HarnessError> {
    if cfg.name != name {
        return Err(HarnessError::Config(format!("config is for {}, not {name}", cfg.name)));
    }
    cfg.validate()
}

/// Sparse PCA in R^{4x4}: 35 random rank-one atoms with at most 2 nonzeros
/// per factor, `x#` the mean of 3 of them, identity sensing.
pub fn run_sparse_pca(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    expect_name(cfg, ExperimentName::SparsePca)?;
    let a = build_sparse_pca(4, 2, 35, cfg.seed)?;
    let mut rng = seeded(cfg.seed ^ 0x5A5A_5A5A);
    let mut chosen = sample(&mut rng, a.len(), 3).into_vec();
    chosen.sort_unstable();
    let mut c_sharp = vec![0.0; a.len()];
    for &i in &chosen {
        c_sharp[i] = 1.0 / 3.0;
    }
    let x_sharp: Vec<f64> = (0..a.dim()).map(|k| chosen.iter().map(|&i| a.atom(i)[k]).sum::<f64>() / 3.0).collect();
    let setup = Setup {
        experiment: "sparse_pca",
        y0: x_sharp.clone(),
        x_sharp,
        psi_sharp: 1.0,
        variants: vec![Variant { sensing: a.matrix(), ps: resolve_ps(cfg, a.len()), alphabet: a, c_sharp: Some(c_sharp) }],
    };
    Ok(run_trials(cfg, &setup))
}

/// Super-resolution with 20 Gaussian waves (width 0.35 on [0, 1]) sampled at
/// 40 seeded uniform locations. The alphabet adjoins the negated waves, so
/// `x# = A_10 - A_11` has coefficients (1, 1) and `psi# = 2`. Errors are
/// measured in spike space, where wave `i` is `e_i`.
pub fn run_superres(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    expect_name(cfg, ExperimentName::Superres)?;
    let waves = build_gaussian_waves(20, 0.35, 0.0, 1.0)?;
    let n = waves.len();
    let op = LinOp::uniform_point_sampler(40, 0.0, 1.0, cfg.seed);
    let w = materialize_sensing(&op, &waves)?;
    let sensing = DMatrix::from_fn(w.nrows(), 2 * n, |r, c| if c < n { w[(r, c)] } else { -w[(r, c - n)] });
    let spikes = build_canonical(n)?;
    let (plus, minus) = (9, 10);
    let mut c_sharp = vec![0.0; 2 * n];
    c_sharp[plus] = 1.0;
    c_sharp[n + minus] = 1.0;
    let mut x_sharp = vec![0.0; n];
    x_sharp[plus] = 1.0;
    x_sharp[minus] = -1.0;
    let y0: Vec<f64> = (w.column(plus) - w.column(minus)).iter().copied().collect();
    let mut variants =
        vec![Variant { sensing, alphabet: spikes.clone(), c_sharp: Some(c_sharp), ps: resolve_ps(cfg, 2 * n) }];
    if cfg.raw_convex {
        let unsigned = Alphabet::from_atoms(n, spikes.atoms()[..n].to_vec())?;
        variants.push(Variant { sensing: w, alphabet: unsigned, c_sharp: None, ps: vec![n] });
    }
    let setup = Setup { experiment: "superres", x_sharp, y0, psi_sharp: 2.0, variants };
    Ok(run_trials(cfg, &setup))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub experiment: String,
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub trial: usize,
    pub success: bool,
    pub coeff_error: f64,
    pub model_error: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub probability: f64,
}

/// Exact recovery of `r`-sparse unit-coefficient models over the signed
/// canonical alphabet from `m` Gaussian measurements, with `p = r` and
/// `psi = r`.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<Vec<PhaseRecord>, HarnessError> {
    expect_name(cfg, ExperimentName::PhaseTransition)?;
    let mut jobs = Vec::new();
    for &d in &cfg.dims {
        let ms: Vec<usize> = match &cfg.m_values {
            Some(ms) => ms.clone(),
            None => (1..=d).collect(),
        };
        for &r in &cfg.r_values {
            if r > d {
                return Err(HarnessError::Config(format!("r = {r} exceeds d = {d}")));
            }
            for &m in &ms {
                for trial in 0..cfg.trials {
                    jobs.push((d, r, m, trial));
                }
            }
        }
    }
    let alphabets: Vec<(usize, Alphabet)> =
        cfg.dims.iter().map(|&d| Ok((d, build_canonical(d)?))).collect::<Result<_, HarnessError>>()?;
    let records = jobs
        .par_iter()
        .map(|&(d, r, m, trial)| {
            let a = &alphabets.iter().find(|(dd, _)| *dd == d).expect("built above").1;
            phase_trial(cfg, a, r, m, trial)
        })
        .collect();
    Ok(records)
}

fn phase_trial(cfg: &ExperimentConfig, a: &Alphabet, r: usize, m: usize, trial: usize) -> PhaseRecord {
    let d = a.dim();
    let cell = ((d as u64) << 40) ^ ((r as u64) << 20) ^ m as u64;
    let mut rng = trial_stream(cfg.seed ^ cell.wrapping_mul(0xD1B5_4A32_D192_ED03), trial as u64);
    let mut support: Vec<usize> = sample(&mut rng, d, r).into_iter().map(|i| if rng.random::<bool>() { i } else { i + d }).collect();
    support.sort_unstable();
    let mut c_sharp = vec![0.0; a.len()];
    for &i in &support {
        c_sharp[i] = 1.0;
    }
    let x_sharp: Vec<f64> = (0..d).map(|k| support.iter().map(|&i| a.atom(i)[k]).sum()).collect();
    let op = LinOp::gaussian(m, d, rng.random());
    let base = PhaseRecord {
        experiment: "phase_transition".into(),
        d,
        r,
        m,
        trial,
        success: false,
        coeff_error: f64::NAN,
        model_error: f64::NAN,
        status: String::new(),
    };
    let run = || -> Result<SolveResult, HarnessError> {
        let y = op.apply(&x_sharp)?;
        let prob = MachineProblem::from_alphabet(&op, a, y, r as f64, r)?;
        solve_one(cfg, &prob)
    };
    match run() {
        Ok(res) => {
            let coeff_error = relative_error(&res.coefficients(a.len()), &c_sharp);
            let model_error = relative_error(&res.decomposition.reconstruct(a), &x_sharp);
            PhaseRecord {
                success: res.support() == support.as_slice() && coeff_error <= SUCCESS_TOL,
                coeff_error,
                model_error,
                status: res.status.status.to_string(),
                ..base
            }
        }
        Err(e) => PhaseRecord { status: format!("failed: {e}"), ..base },
    }
}

/// Success probability per `(d, r, m)`, sorted.
pub fn phase_transition_summary(records: &[PhaseRecord]) -> Vec<PhaseCell> {
    let mut keys: Vec<(usize, usize, usize)> = records.iter().map(|r| (r.d, r.r, r.m)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(d, r, m)| {
            let cell: Vec<&PhaseRecord> = records.iter().filter(|x| (x.d, x.r, x.m) == (d, r, m)).collect();
            let successes = cell.iter().filter(|x| x.success).count();
            PhaseCell { d, r, m, trials: cell.len(), successes, probability: successes as f64 / cell.len() as f64 }
        })
        .collect()
}

impl PhaseCell {
    /// Smallest `m` whose success probability reaches one half.
    pub fn m50(cells: &[PhaseCell], d: usize, r: usize) -> Option<usize> {
        cells.iter().filter(|c| c.d == d && c.r == r && c.probability >= 0.5).map(|c| c.m).min()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralRow {
    pub index: usize,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub gauge: f64,
    pub gauge_1: f64,
    pub theta_prime_deg: f64,
    pub critical_angle_deg: f64,
}

/// Gauge, gauge_1, theta' and the p = 1 critical angle at every atom of the
/// spiral.
pub fn run_spiral_gauges(cfg: &ExperimentConfig) -> Result<Vec<SpiralRow>, HarnessError> {
    expect_name(cfg, ExperimentName::SpiralGauges)?;
    let a = build_spiral_with(cfg.spiral_atoms, &[0.25, 0.5, 2.0])?;
    let ts: Vec<f64> = a
        .labels()
        .expect("spiral atoms are labelled")
        .iter()
        .map(|l| l.trim_start_matches("t=").parse().expect("label holds t"))
        .collect();
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.atom(i);
            let crit = critical_angle(&a, x, 1, cfg.budget, None)?;
            Ok(SpiralRow {
                index: i,
                t: ts[i],
                x1: x[0],
                x2: x[1],
                gauge: gauge(&a, x)?.value(),
                gauge_1: gauge_p(&a, x, 1, cfg.budget)?.value(),
                theta_prime_deg: theta_prime(&a, i)?.to_degrees(),
                critical_angle_deg: crit.angle.to_degrees(),
            })
        })
        .collect()
}

/// `|B c - y|^2` recomputed from a record's model, used by tests.
#[cfg(test)]
pub(crate) fn objective_of(sensing: &DMatrix<f64>, c: &[f64], y: &[f64]) -> f64 {
    use nalgebra::DVector;
    (sensing * DVector::from_column_slice(c) - DVector::from_column_slice(y)).norm_squared()
}
