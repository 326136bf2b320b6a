use std::time::Duration;

use log::info;
use serde_json::json;

use gaugeopt::certify::{certify_solution, critical_angle};
use gaugeopt::gauge::{gauge, gauge_p, spark};
use gaugeopt::harness::{render_curves, run_experiment, ExperimentConfig};
use gaugeopt::machine::{
    default_gamma, model_from, solve_bnb, solve_convex, solve_dual_alternating, solve_machine, solve_oracle,
};
use gaugeopt::{GaugeValue, LinOp, MachineError, MachineProblem, Spark};

use crate::inputs::{self, number, vector};
use crate::{
    CertifyArgs, Cli, CliError, Command, ExperimentArgs, GaugeArgs, Method, RenderArgs, SolveArgs, SparkArgs, DEFAULT_BUDGET,
};

/// Iteration cap for dual alternating when run on its own.
const DUAL_ALT_ITERATIONS: usize = 200;

/// Sizes the global worker pool. `GAUGEOPT_THREADS` takes precedence over
/// `--threads`.
pub fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match std::env::var("GAUGEOPT_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!("GAUGEOPT_THREADS must be a positive integer, got {v:?}"))
        })?),
        Err(_) => flag,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::domain)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gauge(a) => run_gauge(a, cli.json),
        Command::Solve(a) => run_solve(a, cli.json),
        Command::Certify(a) => run_certify(a, cli.json, cli.seed.unwrap_or(0)),
        Command::Spark(a) => run_spark(a, cli.json),
        Command::Experiment(a) => run_experiment_cmd(a, cli.json, cli.seed),
        Command::Render(a) => run_render(a, cli.json),
    }
}

fn check_dim(flag: &str, got: usize, want: usize) -> Result<(), CliError> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} has {got} entries but the alphabet lives in dimension {want}")))
    }
}

fn run_gauge(args: &GaugeArgs, json: bool) -> Result<(), CliError> {
    let x = inputs::numbers("--x", &args.x)?;
    if args.p == Some(0) {
        return Err(CliError::Usage("--p must be at least 1".into()));
    }
    let a = inputs::alphabet("--alphabet", &args.alphabet)?;
    check_dim("--x", x.len(), a.dim())?;
    let g = match args.p {
        Some(p) => gauge_p(&a, &x, p, args.budget),
        None => gauge(&a, &x),
    }
    .map_err(CliError::domain)?;
    if json {
        let decomposition = g.decomposition().map(|d| json!({ "support": d.support(), "coeffs": d.coeffs() }));
        let value = if g.is_finite() { json!(g.value()) } else { json!("inf") };
        println!("{}", json!({ "value": value, "p": args.p, "decomposition": decomposition }));
    } else {
        println!("{}", number(g.value()));
    }
    match g {
        GaugeValue::Infinite => Err(CliError::Domain("x is not a nonnegative combination of at most p atoms".into())),
        GaugeValue::Finite { .. } => Ok(()),
    }
}

fn solve_problem(args: &SolveArgs) -> Result<(MachineProblem, Option<gaugeopt::Alphabet>), CliError> {
    if let Some(path) = &args.problem {
        let prob = MachineProblem::load(path).map_err(|e| match e {
            MachineError::SparsityOutOfRange { .. } => {
                println!("inf");
                CliError::Domain(format!("--problem {}: {e}; the machine is infeasible", path.display()))
            }
            e => CliError::Domain(format!("--problem {}: {e}", path.display())),
        })?;
        return Ok((prob, None));
    }
    let (Some(alphabet), Some(y), Some(psi), Some(p)) = (&args.alphabet, &args.y, args.psi, args.p) else {
        return Err(CliError::Usage("give either --problem, or --alphabet with --y, --psi and --p".into()));
    };
    let y = inputs::numbers("--y", y)?;
    let a = inputs::alphabet("--alphabet", alphabet)?;
    check_dim("--y", y.len(), a.dim())?;
    let prob = MachineProblem::from_alphabet(&LinOp::identity(a.dim()), &a, y, psi, p).map_err(|e| match e {
        MachineError::SparsityOutOfRange { .. } => {
            println!("inf");
            CliError::Domain(format!("--p: {e}; the machine is infeasible"))
        }
        e => CliError::domain(e),
    })?;
    Ok((prob, Some(a)))
}

fn run_solve(args: &SolveArgs, json: bool) -> Result<(), CliError> {
    if let Some(psi) = args.psi {
        if !(psi.is_finite() && psi >= 0.0) {
            return Err(CliError::Usage(format!("--psi must be finite and nonnegative, got {psi}")));
        }
    }
    if let Some(g) = args.gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(CliError::Usage(format!("--gamma must be positive and finite, got {g}")));
        }
    }
    let time_limit = match args.time_limit {
        Some(t) if t.is_finite() && t > 0.0 => Some(Duration::from_secs_f64(t)),
        Some(t) => return Err(CliError::Usage(format!("--time-limit must be a positive number of seconds, got {t}"))),
        None => None,
    };
    let (prob, alphabet) = solve_problem(args)?;
    info!("solving: m = {}, atoms = {}, psi = {}, p = {}", prob.m(), prob.n_atoms(), prob.psi(), prob.p());
    let result = match args.method {
        Method::Auto => solve_machine(&prob, args.gamma, time_limit),
        Method::Oracle => solve_oracle(&prob, DEFAULT_BUDGET),
        Method::DualAlt => {
            solve_dual_alternating(&prob, args.gamma.unwrap_or_else(|| default_gamma(&prob)), DUAL_ALT_ITERATIONS).map(|o| o.result)
        }
        Method::Bnb => solve_bnb(&prob, &[], time_limit),
        Method::Convex => solve_convex(&prob),
    }
    .map_err(CliError::domain)?;
    let model = alphabet.as_ref().map(|a| model_from(&result, a)).transpose().map_err(CliError::domain)?;
    if json {
        let mut v: serde_json::Value = serde_json::from_str(&result.to_json()).map_err(CliError::domain)?;
        v["coefficients"] = json!(result.coefficients(prob.n_atoms()));
        if let Some(x) = &model {
            v["model"] = json!(x);
        }
        println!("{}", serde_json::to_string_pretty(&v).map_err(CliError::domain)?);
    } else {
        println!("objective: {}", number(result.objective));
        println!("lower bound: {}", number(result.lower_bound));
        println!("solver: {}", result.solver);
        println!("status: {:?} after {} iterations", result.status.status, result.status.iterations);
        println!("support: {:?}", result.support());
        println!("coefficients: {}", vector(result.decomposition.coeffs()));
        if let Some(x) = &model {
            println!("model: {}", vector(x));
        }
    }
    Ok(())
}

fn run_certify(args: &CertifyArgs, json: bool, seed: u64) -> Result<(), CliError> {
    let x = inputs::numbers("--xsharp", &args.xsharp)?;
    if args.p == 0 {
        return Err(CliError::Usage("--p must be at least 1".into()));
    }
    if args.grid_res.is_some_and(|r| r < 2) {
        return Err(CliError::Usage("--grid-res must be at least 2".into()));
    }
    let a = inputs::alphabet("--alphabet", &args.alphabet)?;
    check_dim("--xsharp", x.len(), a.dim())?;
    let l = inputs::sensing("--sensing", &args.sensing, a.dim(), seed)?;
    let report = certify_solution(&l, &a, &x, args.p, DEFAULT_BUDGET).map_err(CliError::domain)?;
    let angle = args
        .grid_res
        .map(|res| critical_angle(&a, &x, args.p, DEFAULT_BUDGET, Some(res)))
        .transpose()
        .map_err(CliError::domain)?;
    if json {
        let mut v: serde_json::Value = serde_json::from_str(&report.to_json()).map_err(CliError::domain)?;
        if let Some(c) = &angle {
            v["critical_angle_deg"] = json!(c.angle.to_degrees());
        }
        println!("{}", serde_json::to_string_pretty(&v).map_err(CliError::domain)?);
        return Ok(());
    }
    println!("gauge_p: {}", number(report.gauge_p));
    println!("x~: {}", vector(&report.x_tilde));
    let failing: Vec<_> = report.slices.iter().filter(|s| !s.pass).collect();
    println!("slices checked: {}, failing: {}", report.slices.len(), failing.len());
    for s in &failing {
        println!("  {:?} {:?} {}", s.indices, s.kind, number(s.value));
    }
    if let Some(s) = report.sigma {
        println!("sigma: {}", number(s));
    }
    if let Some(g) = report.gamma {
        println!("gamma: {}", number(g));
    }
    if let Some(c) = &angle {
        println!("critical angle: {} deg", number(c.angle.to_degrees()));
    }
    println!("all conditions hold: {}", if report.all_hold { "yes" } else { "no" });
    Ok(())
}

fn run_spark(args: &SparkArgs, json: bool) -> Result<(), CliError> {
    let a = inputs::alphabet("--alphabet", &args.alphabet)?;
    let s = spark(&a, DEFAULT_BUDGET).map_err(CliError::domain)?;
    let text = match s {
        Spark::Finite(k) => k.to_string(),
        Spark::Infinite => "inf".into(),
    };
    if json {
        println!("{}", json!({ "spark": s }));
    } else {
        println!("{text}");
    }
    Ok(())
}

fn run_experiment_cmd(args: &ExperimentArgs, json: bool, seed: Option<u64>) -> Result<(), CliError> {
    if args.trials == Some(0) {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut cfg = match (&args.config, args.name) {
        (Some(path), name) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Domain(format!("--config {}: {e}", path.display())))?;
            let cfg = ExperimentConfig::from_json(&text, name)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
            if let Some(n) = name.filter(|&n| n != cfg.name) {
                return Err(CliError::Usage(format!("--name {n} disagrees with the config's {}", cfg.name)));
            }
            cfg
        }
        (None, Some(name)) => ExperimentConfig::default_for(name),
        (None, None) => return Err(CliError::Usage("give --name or --config".into())),
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    info!("running {} with {} trials, seed {}", cfg.name, cfg.trials, cfg.seed);
    let out = run_experiment(&cfg).map_err(CliError::domain)?;
    match &cfg.output {
        Some(path) if json => println!("{}", json!({ "experiment": cfg.name.as_str(), "rows": out.len(), "output": path })),
        Some(path) => println!("wrote {} rows to {}", out.len(), path.display()),
        None => out.write(std::io::stdout().lock()).map_err(CliError::domain)?,
    }
    Ok(())
}

fn run_render(args: &RenderArgs, json: bool) -> Result<(), CliError> {
    let written = render_curves(&args.csv, &args.out).map_err(CliError::domain)?;
    if json {
        println!("{}", json!({ "written": written }));
    } else {
        for p in &written {
            println!("{}", p.display());
        }
    }
    Ok(())
}
