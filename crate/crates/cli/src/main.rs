//! `fedlqr` — command-line driver for the federated LQR experiments.
//!
//! Subcommands map one-to-one onto the experiment drivers:
//! `solve` (optimal controller), `train` (single trace), `curve`
//! (learning curves), `sweep-eta` (max stable step size), `sweep-h`
//! (convergence probability vs communication interval), `iters`
//! (iterations to tolerance vs agent count), and `cartpole-train`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedlqr::cartpole::{CartpoleEnv, CartpoleParams};
use fedlqr::harness::{
    self, curve_rows, emit_csv, format_value, load_config, Algorithm, ExperimentConfig,
};
use fedlqr::lqr::InitSampler;
use fedlqr::trainers::{Estimator, LinearEnv, TrainConfig};
use fedlqr::{Error, Vector};

#[derive(Parser)]
#[command(name = "fedlqr", about = "Federated zeroth-order LQR tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment subcommands; every flag overrides the
/// corresponding config-file field.
#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment config (see README for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Agent count(s); comma-separated for grids.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<usize>>,
    /// Step size(s); comma-separated for grids.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Geometric-grid step-size search bounds, as low,high.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    eta_bounds: Option<Vec<f64>>,
    /// Communication interval(s); comma-separated for grids.
    #[arg(long = "interval", value_delimiter = ',')]
    h: Option<Vec<usize>>,
    /// Smoothing radius.
    #[arg(long)]
    r: Option<f64>,
    /// Iterations per run.
    #[arg(long)]
    iterations: Option<usize>,
    /// Seeded runs per grid point.
    #[arg(long)]
    runs: Option<usize>,
    /// Success threshold on the optimality gap.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Estimator: one_point, two_point, or exact.
    #[arg(long)]
    estimator: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithm: federated or independent.
    #[arg(long)]
    algorithm: Option<String>,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal controller (K*, g*) and cost J* per agent.
    Solve(CommonArgs),
    /// Run a single seeded training run and emit its gap trace.
    Train(CommonArgs),
    /// Learning curve: per-iteration mean/std of the gap over N runs.
    Curve(CommonArgs),
    /// Max stable step size per agent count (geometric grid search).
    SweepEta(CommonArgs),
    /// Convergence probability as a function of the communication interval.
    SweepH(CommonArgs),
    /// Median iterations to reach the tolerance, per agent count.
    Iters(CommonArgs),
    /// Federated training on the nonlinear cartpole environment.
    CartpoleTrain(CommonArgs),
}

fn parse_estimator(s: &str) -> Result<Estimator, Error> {
    match s {
        "one_point" => Ok(Estimator::OnePoint),
        "two_point" => Ok(Estimator::TwoPoint),
        "exact" => Ok(Estimator::Exact),
        other => Err(Error::ConfigError(format!(
            "unknown estimator '{other}' (expected one_point, two_point, exact)"
        ))),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, Error> {
    match s {
        "federated" => Ok(Algorithm::Federated),
        "independent" => Ok(Algorithm::Independent),
        other => Err(Error::ConfigError(format!(
            "unknown algorithm '{other}' (expected federated, independent)"
        ))),
    }
}

/// Default experiment: the paper3x3 preset with the benchmark settings.
fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        problem: harness::ProblemSpec::Preset { preset: "paper3x3".into() },
        agents: vec![8],
        target_scale: 0.1,
        runs: 20,
        epsilon: 0.05,
        p_min: 0.7,
        eta: vec![],
        eta_bounds: Some((3e-5, 5.2e-4)),
        h_list: vec![1],
        r: 0.01,
        t: 6000,
        estimator: Estimator::TwoPoint,
        master_seed: 0,
        algorithm: Algorithm::Federated,
        output: None,
    }
}

/// Defaults for the nonlinear cartpole experiment: shorter runs, larger
/// smoothing radius, fixed tuned step size.
fn default_cartpole_config() -> ExperimentConfig {
    ExperimentConfig {
        eta: vec![1e-3],
        eta_bounds: None,
        r: 0.05,
        t: 1000,
        runs: 10,
        agents: vec![5],
        ..default_config()
    }
}

/// Merge config file (if any) with flag overrides.
fn resolve_config(args: &CommonArgs, cartpole: bool) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None if cartpole => default_cartpole_config(),
        None => default_config(),
    };
    if let Some(a) = &args.agents {
        cfg.agents = a.clone();
    }
    if let Some(e) = &args.eta {
        cfg.eta = e.clone();
        cfg.eta_bounds = None;
    }
    if let Some(b) = &args.eta_bounds {
        cfg.eta_bounds = Some((b[0], b[1]));
        cfg.eta = vec![];
    }
    if let Some(h) = &args.h {
        cfg.h_list = h.clone();
    }
    if let Some(r) = args.r {
        cfg.r = r;
    }
    if let Some(t) = args.iterations {
        cfg.t = t;
    }
    if let Some(n) = args.runs {
        cfg.runs = n;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(s) = &args.estimator {
        cfg.estimator = parse_estimator(s)?;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(a) = &args.algorithm {
        cfg.algorithm = parse_algorithm(a)?;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes rows to the configured output path, or stdout when none is set.
fn deliver(cfg: &ExperimentConfig, header: &[&str], rows: &[Vec<String>]) -> Result<(), Error> {
    match &cfg.output {
        Some(path) => emit_csv(Path::new(path), header, rows),
        None => {
            println!("{}", header.join(","));
            for row in rows {
                println!("{}", row.join(","));
            }
            Ok(())
        }
    }
}

fn single_eta(cfg: &ExperimentConfig) -> Result<f64, Error> {
    let grid = cfg.eta_grid();
    grid.first()
        .copied()
        .ok_or_else(|| Error::ConfigError("an eta value is required".into()))
}

fn cmd_solve(cfg: &ExperimentConfig) -> Result<(), Error> {
    let m = *cfg.agents.first().unwrap();
    let prob = cfg.build_problem(m)?;
    let mut rows = Vec::new();
    for agent in 0..m {
        let (pol, _) = fedlqr::analytic::solve_optimal(&prob, agent)?;
        let j = fedlqr::analytic::expected_cost(&prob, agent, &pol)?;
        let mut row = vec![agent.to_string()];
        row.extend(pol.k.entries().iter().map(|&v| format_value(v)));
        row.extend(pol.g.entries().iter().map(|&v| format_value(v)));
        row.push(format_value(j));
        rows.push(row);
    }
    let n = prob.n();
    let k_dim = prob.k();
    let mut header: Vec<String> = vec!["agent".into()];
    for i in 0..k_dim {
        for j in 0..n {
            header.push(format!("K{i}{j}"));
        }
    }
    for i in 0..k_dim {
        header.push(format!("g{i}"));
    }
    header.push("J_star".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    deliver(cfg, &header_refs, &rows)
}

fn cmd_train(cfg: &ExperimentConfig) -> Result<(), Error> {
    let m = *cfg.agents.first().unwrap();
    let prob = cfg.build_problem(m)?;
    let env = LinearEnv::new(prob)?;
    let tc = cfg.train_config(&env.prob, single_eta(cfg)?, cfg.h_list[0])?;
    let data = harness::run_learning_curve(&env, &tc, 1, cfg.master_seed, cfg.algorithm)?;
    deliver(cfg, &["iteration", "gap", "std", "count"], &curve_rows(&data))
}

fn cmd_curve(cfg: &ExperimentConfig) -> Result<(), Error> {
    let eta = single_eta(cfg)?;
    let mut rows = Vec::new();
    for &m in &cfg.agents {
        let prob = cfg.build_problem(m)?;
        let env = LinearEnv::new(prob)?;
        let tc = cfg.train_config(&env.prob, eta, cfg.h_list[0])?;
        let data = harness::run_learning_curve(&env, &tc, cfg.runs, cfg.master_seed, cfg.algorithm)?;
        for p in &data.points {
            rows.push(vec![
                m.to_string(),
                p.iteration.to_string(),
                format_value(p.mean),
                format_value(p.std),
                p.count.to_string(),
            ]);
        }
        for (run, iter) in &data.diverged {
            eprintln!("m={m}: run {run} diverged at iteration {iter}");
        }
    }
    deliver(cfg, &["m", "iteration", "mean_gap", "std_gap", "count"], &rows)
}

/// Federated runs are scored per run (averaging couples the agents);
/// independent runs are scored per agent.
fn success_mode(algorithm: harness::Algorithm) -> harness::SuccessMode {
    match algorithm {
        harness::Algorithm::Federated => harness::SuccessMode::Run,
        harness::Algorithm::Independent => harness::SuccessMode::PerAgent,
    }
}

fn cmd_sweep_eta(cfg: &ExperimentConfig) -> Result<(), Error> {
    let etas = cfg.eta_grid();
    let mut rows = Vec::new();
    for &m in &cfg.agents {
        for &h in &cfg.h_list {
            let prob = cfg.build_problem(m)?;
            let env = LinearEnv::new(prob)?;
            let tc = cfg.train_config(&env.prob, etas[0], h)?;
            let res = harness::sweep_max_stepsize(
                &env,
                &tc,
                &etas,
                cfg.runs,
                cfg.epsilon,
                cfg.p_min,
                cfg.master_seed,
                cfg.algorithm,
                success_mode(cfg.algorithm),
            )?;
            rows.push(vec![
                m.to_string(),
                h.to_string(),
                format_value(res.max_eta),
                format_value(res.success_rate),
                res.median_iters.map(|i| i.to_string()).unwrap_or_default(),
            ]);
        }
    }
    deliver(cfg, &["m", "H", "max_eta", "success_rate", "median_iters"], &rows)
}

fn cmd_sweep_h(cfg: &ExperimentConfig) -> Result<(), Error> {
    let m = *cfg.agents.first().unwrap();
    let prob = cfg.build_problem(m)?;
    let env = LinearEnv::new(prob)?;
    let tc = cfg.train_config(&env.prob, single_eta(cfg)?, cfg.h_list[0])?;
    let rows: Vec<Vec<String>> = harness::convergence_probability_vs_h(
        &env,
        &tc,
        &cfg.h_list,
        cfg.runs,
        cfg.epsilon,
        cfg.master_seed,
    )?
    .into_iter()
    .map(|(h, rate)| vec![h.to_string(), format_value(rate)])
    .collect();
    deliver(cfg, &["H", "success_rate"], &rows)
}

fn cmd_iters(cfg: &ExperimentConfig) -> Result<(), Error> {
    let etas = cfg.eta_grid();
    let mut rows = Vec::new();
    for &m in &cfg.agents {
        let prob = cfg.build_problem(m)?;
        let env = LinearEnv::new(prob)?;
        let tc = cfg.train_config(&env.prob, etas[0], cfg.h_list[0])?;
        let res = harness::sweep_max_stepsize(
            &env,
            &tc,
            &etas,
            cfg.runs,
            cfg.epsilon,
            cfg.p_min,
            cfg.master_seed,
            cfg.algorithm,
            success_mode(cfg.algorithm),
        )?;
        rows.push(vec![
            m.to_string(),
            format_value(res.max_eta),
            res.median_iters.map(|i| i.to_string()).unwrap_or_default(),
        ]);
    }
    deliver(cfg, &["m", "max_eta", "median_iters"], &rows)
}

fn cmd_cartpole(cfg: &ExperimentConfig) -> Result<(), Error> {
    let env = CartpoleEnv::new(CartpoleParams::default(), CartpoleParams::standard_targets())?;
    let tc = TrainConfig {
        t: cfg.t,
        h: cfg.h_list[0],
        eta: single_eta(cfg)?,
        r: cfg.r,
        estimator: cfg.estimator,
        seed: 0,
        init_k: env.default_init_k()?,
        init_g: vec![Vector::zeros(1); 5],
        sampler: InitSampler::Gaussian, // ignored: cartpole has its own init box
        epsilon: None,
        equalize_g_step: false,
    };
    let data = harness::run_learning_curve(&env, &tc, cfg.runs, cfg.master_seed, cfg.algorithm)?;
    deliver(cfg, &["iteration", "mean_cost", "std_cost", "count"], &curve_rows(&data))
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    let (args, f): (&CommonArgs, fn(&ExperimentConfig) -> Result<(), Error>) = match &cli.command {
        Command::Solve(a) => (a, cmd_solve),
        Command::Train(a) => (a, cmd_train),
        Command::Curve(a) => (a, cmd_curve),
        Command::SweepEta(a) => (a, cmd_sweep_eta),
        Command::SweepH(a) => (a, cmd_sweep_h),
        Command::Iters(a) => (a, cmd_iters),
        Command::CartpoleTrain(a) => (a, cmd_cartpole),
    };
    let cfg = resolve_config(args, matches!(cli.command, Command::CartpoleTrain(_)))?;
    f(&cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
