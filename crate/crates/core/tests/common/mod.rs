//! Randomized invariants shared by the property suite and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};

use gaugeopt::alphabet::Alphabet;
use gaugeopt::gauge::{dual_norm, gauge, gauge_p};
use gaugeopt::machine::{default_gamma, dual_objective, recover_dual, solve_bnb, solve_dual_alternating, solve_oracle, DUALITY_TOL};
use gaugeopt::rng::{seeded, standard_normals, SeededRng};
use gaugeopt::MachineProblem;
use rand::Rng;

pub struct Property {
    pub name: &'static str,
    pub cases: u32,
    pub check: fn(u64) -> Result<(), String>,
}

/// The suite: 1000 cases in total.
pub const PROPERTIES: [Property; 7] = [
    Property { name: "gauge_p nestedness in p", cases: 150, check: nestedness },
    Property { name: "gauge and gauge_p homogeneity", cases: 150, check: homogeneity },
    Property { name: "gauge/dual-norm polarity", cases: 150, check: polarity },
    Property { name: "machine feasibility", cases: 150, check: feasibility },
    Property { name: "machine monotonicity in psi and p", cases: 150, check: monotonicity },
    Property { name: "dual alternating weak and strong duality", cases: 150, check: duality },
    Property { name: "branch-and-bound equals oracle", cases: 100, check: bnb_equals_oracle },
];

/// Runs one property over deterministic seeds.
pub fn run(prop: &Property) -> Result<(), String> {
    let config = Config { cases: prop.cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&any::<u64>(), |seed| (prop.check)(seed).map_err(TestCaseError::fail))
        .map_err(|e| match e {
            TestError::Fail(msg, seed) => format!("{}: seed {seed}: {msg}", prop.name),
            TestError::Abort(msg) => format!("{}: aborted: {msg}", prop.name),
        })
}

fn random_alphabet(seed: u64) -> (Alphabet, SeededRng) {
    let mut rng = seeded(seed);
    let d = rng.random_range(2..=4);
    let n = rng.random_range(3..=7);
    let atoms = (0..n).map(|_| standard_normals(&mut rng, d)).collect();
    (Alphabet::from_atoms(d, atoms).unwrap(), rng)
}

fn random_problem(seed: u64) -> MachineProblem {
    let mut rng = seeded(seed);
    let n = rng.random_range(3..=8);
    let p = rng.random_range(1..=3.min(n));
    let m = rng.random_range(p..=5);
    let psi = rng.random_range(0.0..3.0);
    let b = DMatrix::from_vec(m, n, standard_normals(&mut rng, m * n));
    let y = standard_normals(&mut rng, m);
    MachineProblem::new(b, y, psi, p).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn nestedness(seed: u64) -> Result<(), String> {
    let (a, mut rng) = random_alphabet(seed);
    let x = standard_normals(&mut rng, a.dim());
    let g = gauge(&a, &x).map_err(e)?.value();
    let mut prev = f64::INFINITY;
    for p in 1..=a.len() {
        let gp = gauge_p(&a, &x, p, 10_000).map_err(e)?.value();
        ensure(gp <= prev * (1.0 + 1e-9) + 1e-9, || format!("gauge_{p} = {gp} above gauge_{} = {prev}", p - 1))?;
        ensure(g <= gp * (1.0 + 1e-9) + 1e-9, || format!("gauge {g} above gauge_{p} = {gp}"))?;
        prev = gp;
    }
    ensure(prev == g || (prev - g).abs() <= 1e-8 * (1.0 + g), || format!("gauge_|A| = {prev} differs from gauge {g}"))
}

fn homogeneity(seed: u64) -> Result<(), String> {
    let (a, mut rng) = random_alphabet(seed);
    let x = standard_normals(&mut rng, a.dim());
    let t: f64 = rng.random_range(0.1..10.0);
    let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
    let pairs = [
        (gauge(&a, &x).map_err(e)?.value(), gauge(&a, &tx).map_err(e)?.value()),
        (gauge_p(&a, &x, 1, 100).map_err(e)?.value(), gauge_p(&a, &tx, 1, 100).map_err(e)?.value()),
    ];
    for (g, gt) in pairs {
        if g.is_infinite() {
            ensure(gt.is_infinite(), || format!("gauge(tx) = {gt} finite while gauge(x) is not"))?;
        } else {
            ensure((gt - t * g).abs() <= 1e-8 * (1.0 + t * g), || format!("gauge(tx) = {gt}, t gauge(x) = {}", t * g))?;
        }
    }
    Ok(())
}

fn polarity(seed: u64) -> Result<(), String> {
    let (a, mut rng) = random_alphabet(seed);
    let x = standard_normals(&mut rng, a.dim());
    let z = standard_normals(&mut rng, a.dim());
    let g = gauge(&a, &x).map_err(e)?.value();
    if g.is_infinite() {
        return Ok(());
    }
    let inner: f64 = x.iter().zip(&z).map(|(p, q)| p * q).sum();
    let dn = dual_norm(&a, &z).map_err(e)?;
    ensure(inner <= g * dn + 1e-8 * (1.0 + (g * dn).abs()), || format!("<z, x> = {inner} above gauge * dual = {}", g * dn))
}

fn feasibility(seed: u64) -> Result<(), String> {
    let prob = random_problem(seed);
    for r in [solve_oracle(&prob, 10_000).map_err(e)?, solve_bnb(&prob, &[], None).map_err(e)?] {
        r.check_feasible(&prob)?;
        ensure(r.lower_bound <= r.objective + 1e-8 * (1.0 + r.objective), || {
            format!("{} lower bound {} above objective {}", r.solver, r.lower_bound, r.objective)
        })?;
    }
    Ok(())
}

fn monotonicity(seed: u64) -> Result<(), String> {
    let prob = random_problem(seed);
    let base = solve_oracle(&prob, 10_000).map_err(e)?.objective;
    let more_psi = solve_oracle(&prob.with_psi(prob.psi() * 1.5 + 0.1).map_err(e)?, 10_000).map_err(e)?.objective;
    ensure(more_psi <= base + 1e-9 * (1.0 + base), || format!("objective rose with psi: {base} -> {more_psi}"))?;
    if prob.p() < prob.n_atoms() {
        let more_p = solve_oracle(&prob.with_p(prob.p() + 1).map_err(e)?, 10_000).map_err(e)?.objective;
        ensure(more_p <= base + 1e-9 * (1.0 + base), || format!("objective rose with p: {base} -> {more_p}"))?;
    }
    Ok(())
}

fn duality(seed: u64) -> Result<(), String> {
    let prob = random_problem(seed);
    let gamma = default_gamma(&prob);
    let out = solve_dual_alternating(&prob, gamma, 100).map_err(e)?;
    ensure(out.max_weak_duality_excess <= DUALITY_TOL, || format!("weak duality excess {}", out.max_weak_duality_excess))?;
    for t in &out.result.trace {
        let gap = (t.primal - t.bound).abs();
        ensure(gap <= DUALITY_TOL * (1.0 + t.primal.abs()), || format!("gap {gap:.3e} on support {:?}", t.support))?;
    }
    // the dual point recovered at c = 0 is feasible, so it bounds the
    // restricted problem on the returned support from below
    let oracle = solve_oracle(&prob, 10_000).map_err(e)?.objective;
    let zero = recover_dual(&prob, &out.result.support().to_vec(), &vec![0.0; prob.n_atoms()], gamma);
    let d0 = dual_objective(&prob, &zero);
    let restricted = gaugeopt::machine::solve_convex(
        &MachineProblem::new(
            DMatrix::from_fn(prob.m(), out.result.support().len().max(1), |r, c| {
                out.result.support().get(c).map_or(0.0, |&i| prob.sensing()[(r, i)])
            }),
            prob.y().iter().copied().collect(),
            prob.psi(),
            out.result.support().len().max(1),
        )
        .map_err(e)?,
    )
    .map_err(e)?
    .objective;
    ensure(d0 <= restricted + DUALITY_TOL, || format!("dual {d0} above restricted primal {restricted}"))?;
    ensure(oracle <= out.result.objective + 1e-9 * (1.0 + oracle), || format!("oracle {oracle} above dual alternating {}", out.result.objective))
}

fn bnb_equals_oracle(seed: u64) -> Result<(), String> {
    let prob = random_problem(seed);
    let o = solve_oracle(&prob, 10_000).map_err(e)?;
    let b = solve_bnb(&prob, &[], None).map_err(e)?;
    ensure((o.objective - b.objective).abs() <= 1e-6, || format!("objectives {} vs {}", o.objective, b.objective))?;
    ensure(o.support() == b.support(), || format!("supports {:?} vs {:?}", o.support(), b.support()))
}
