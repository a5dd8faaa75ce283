//! Experiment drivers: named problem presets, seeded multi-run execution,
//! step-size sweeps, iteration counts, communication-interval scans, and
//! deterministic CSV emission.
//!
//! Every driver is a pure function of `(configuration, master seed)`:
//! per-run seeds are derived by hashing, runs execute in parallel but are
//! collected in grid order, and CSV output is byte-identical across
//! re-runs.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lqr::{InitSampler, LqrProblem};
use crate::numerics::{Matrix, Vector};
use crate::rng::{stream_key, substream};
use crate::trainers::{
    run_federated, run_independent, Env, Estimator, TrainConfig, TrainTrace,
};
use crate::{Error, Result};

/// Environment variable limiting the worker thread count.
pub const WORKERS_ENV: &str = "FEDLQR_WORKERS";

/// Stream tags (first element of the rng substream key) carving the master
/// seed into independent purposes.
const TAG_TARGETS: u64 = 0xA11CE;
const TAG_RUN: u64 = 0x5EED;
const TAG_FAMILY: u64 = 0xFA11;

/// Ratio of the geometric step-size grid used by the sweeps.
pub const GRID_RATIO: f64 = 1.189207115002721; // 2^(1/4)

// ---------------------------------------------------------------------------
// Presets and configuration
// ---------------------------------------------------------------------------

/// The 3x3 benchmark system (gamma = 0.9, Sigma = I); per-agent targets
/// are drawn once from `N(0, target_scale * I)` keyed by the master seed,
/// so every sweep over m shares a common task family (agent i keeps the
/// same target for every m).
pub fn paper3x3_problem(num_agents: usize, target_scale: f64, master_seed: u64) -> LqrProblem {
    let a = Matrix::from_rows(&[&[1.0, 0.0, -10.0], &[-1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
    let b = Matrix::from_rows(&[&[1.0, -10.0, 0.0], &[0.0, 1.0, 0.0], &[-1.0, 0.0, 1.0]]);
    let q = Matrix::from_rows(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]]);
    let r = Matrix::from_rows(&[&[5.0, -3.0, 0.0], &[-3.0, 5.0, -2.0], &[0.0, -2.0, 5.0]]);
    let targets = sample_targets(3, num_agents, target_scale, master_seed);
    LqrProblem { a, b, q, r, gamma: 0.9, sigma: Matrix::identity(3), targets }
}

/// Draws `num_agents` targets from `N(0, scale * I)`, deterministically in
/// the master seed and independent of how many agents are requested for
/// the shared prefix.
pub fn sample_targets(dim: usize, num_agents: usize, scale: f64, master_seed: u64) -> Vec<Vector> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let std = scale.sqrt();
    (0..num_agents)
        .map(|i| {
            let mut rng = substream(master_seed, &[TAG_TARGETS, i as u64]);
            Vector::new((0..dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect())
        })
        .collect()
}

/// Stabilizing default gain: the Riccati-optimal K* contracted by 0.9.
pub fn default_init_k(prob: &LqrProblem) -> Result<Matrix> {
    let (opt, _) = crate::analytic::solve_optimal(prob, 0)?;
    let k0 = opt.k.scale(0.9);
    if !crate::lqr::is_stable(prob, &k0) {
        return Err(Error::UnstablePolicy);
    }
    Ok(k0)
}

/// Which algorithm a driver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Federated,
    Independent,
}

/// A problem given either by preset name or by inline row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Preset { preset: String },
    Inline {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        gamma: f64,
        sigma: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
    },
}

fn matrix_from_nested(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::ConfigError(format!("{name}: empty matrix")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::ConfigError(format!("{name}: ragged rows")));
    }
    Matrix::from_vec(rows.len(), cols, rows.iter().flatten().copied().collect())
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// Agent-count grid; a single entry for curve/train runs.
    pub agents: Vec<usize>,
    /// Variance scale of the per-agent target distribution (presets only).
    #[serde(default = "default_target_scale")]
    pub target_scale: f64,
    /// Seeded runs per grid point.
    pub runs: usize,
    /// Success threshold on the optimality gap.
    pub epsilon: f64,
    /// Required success probability for sweep acceptance.
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    /// Explicit step-size grid; if empty, generated from `eta_bounds`.
    #[serde(default)]
    pub eta: Vec<f64>,
    /// Geometric-grid search bounds (low, high), ratio 2^(1/4).
    #[serde(default)]
    pub eta_bounds: Option<(f64, f64)>,
    /// Communication-interval grid.
    #[serde(default = "default_h_list")]
    pub h_list: Vec<usize>,
    /// Smoothing radius.
    pub r: f64,
    /// Iterations per run.
    pub t: usize,
    pub estimator: Estimator,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// CSV output path; stdout if absent.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_target_scale() -> f64 {
    0.1
}
fn default_p_min() -> f64 {
    0.7
}
fn default_h_list() -> Vec<usize> {
    vec![1]
}
fn default_algorithm() -> Algorithm {
    Algorithm::Federated
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::ConfigError("runs must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::ConfigError("epsilon must be positive".into()));
        }
        if self.agents.is_empty() || self.h_list.is_empty() {
            return Err(Error::ConfigError("agent and H grids must be nonempty".into()));
        }
        if self.eta.is_empty() && self.eta_bounds.is_none() {
            return Err(Error::ConfigError("provide an eta grid or eta_bounds".into()));
        }
        if let Some((lo, hi)) = self.eta_bounds {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::ConfigError("eta_bounds require 0 < low < high".into()));
            }
        }
        Ok(())
    }

    /// The step-size grid: explicit list, or the geometric grid spanning
    /// the configured bounds.
    pub fn eta_grid(&self) -> Vec<f64> {
        if !self.eta.is_empty() {
            return self.eta.clone();
        }
        let (lo, hi) = self.eta_bounds.expect("validated: bounds present when grid empty");
        geometric_grid(lo, hi)
    }

    /// Instantiates the linear problem for `num_agents` agents.
    pub fn build_problem(&self, num_agents: usize) -> Result<LqrProblem> {
        let prob = match &self.problem {
            ProblemSpec::Preset { preset } => match preset.as_str() {
                "paper3x3" => paper3x3_problem(num_agents, self.target_scale, self.master_seed),
                other => {
                    return Err(Error::ConfigError(format!(
                        "unknown preset '{other}' (expected 'paper3x3'; the cartpole \
                         experiment has its own driver)"
                    )))
                }
            },
            ProblemSpec::Inline { a, b, q, r, gamma, sigma, targets } => {
                let targets = targets
                    .iter()
                    .map(|t| Vector::new(t.clone()))
                    .collect::<Vec<_>>();
                if targets.len() < num_agents {
                    return Err(Error::ConfigError(format!(
                        "{num_agents} agents requested but only {} targets given",
                        targets.len()
                    )));
                }
                LqrProblem {
                    a: matrix_from_nested("A", a)?,
                    b: matrix_from_nested("B", b)?,
                    q: matrix_from_nested("Q", q)?,
                    r: matrix_from_nested("R", r)?,
                    gamma: *gamma,
                    sigma: matrix_from_nested("Sigma", sigma)?,
                    targets: targets[..num_agents].to_vec(),
                }
            }
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Base trainer configuration for one `(eta, H)` grid point.
    pub fn train_config(&self, prob: &LqrProblem, eta: f64, h: usize) -> Result<TrainConfig> {
        Ok(TrainConfig {
            t: self.t,
            h,
            eta,
            r: self.r,
            estimator: self.estimator,
            seed: 0, // overwritten per run
            init_k: default_init_k(prob)?,
            init_g: vec![],
            // the benchmark protocol draws x0 uniformly from the canonical
            // basis vectors
            sampler: InitSampler::CanonicalBasis,
            epsilon: Some(self.epsilon),
            equalize_g_step: false,
        })
    }
}

/// Loads an [`ExperimentConfig`] from a JSON file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Geometric grid from `lo` up to (at most) `hi` with ratio 2^(1/4),
/// always including `lo` and ending at the last point <= `hi * (1+1e-12)`.
pub fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo > 0.0 && lo <= hi);
    let mut grid = Vec::new();
    let mut x = lo;
    while x <= hi * (1.0 + 1e-12) {
        grid.push(x);
        x *= GRID_RATIO;
    }
    grid
}

// ---------------------------------------------------------------------------
// Multi-run execution
// ---------------------------------------------------------------------------

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::ConfigError(format!("{WORKERS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(Error::ConfigError(format!("{WORKERS_ENV} must be a positive integer")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::ConfigError(format!("thread pool: {e}")))
}

/// Executes `runs` seeded training runs in parallel, collected in run-index
/// order. Run `i` uses seed `hash(master_seed, i)`.
pub fn run_many<E: Env>(
    env: &E,
    base: &TrainConfig,
    runs: usize,
    master_seed: u64,
    algorithm: Algorithm,
) -> Result<Vec<TrainTrace>> {
    use rayon::prelude::*;
    pool()?.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut cfg = base.clone();
                cfg.seed = stream_key(master_seed, &[TAG_RUN, i as u64]);
                match algorithm {
                    Algorithm::Federated => run_federated(env, &cfg),
                    Algorithm::Independent => run_independent(env, &cfg),
                }
            })
            .collect()
    })
}

/// Per-iteration mean/std over completed runs of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
    /// Completed (non-diverged, finite-metric) runs entering the stats.
    pub count: usize,
}

/// Aggregated result of one learning-curve batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    pub points: Vec<CurvePoint>,
    /// `(run index, divergence iteration)` for each diverged run.
    pub diverged: Vec<(usize, usize)>,
    pub traces: Vec<TrainTrace>,
}

/// Learning curve: mean and standard deviation of the per-iteration metric
/// over `cfg.runs` seeded runs. Diverged runs are excluded from the
/// statistics and reported separately with their divergence iteration.
pub fn run_learning_curve<E: Env>(
    env: &E,
    base: &TrainConfig,
    runs: usize,
    master_seed: u64,
    algorithm: Algorithm,
) -> Result<CurveData> {
    let traces = run_many(env, base, runs, master_seed, algorithm)?;
    let mut diverged = Vec::new();
    for (i, tr) in traces.iter().enumerate() {
        if let crate::trainers::Outcome::Diverged(t) = tr.outcome {
            diverged.push((i, t));
        }
    }
    let mut points = Vec::with_capacity(base.t);
    for it in 0..base.t {
        let vals: Vec<f64> = traces
            .iter()
            .filter(|tr| !matches!(tr.outcome, crate::trainers::Outcome::Diverged(_)))
            .filter_map(|tr| tr.gaps.get(it).copied())
            .filter(|g| g.is_finite())
            .collect();
        let count = vals.len();
        let (mean, std) = if count == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = vals.iter().sum::<f64>() / count as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            (mean, var.sqrt())
        };
        points.push(CurvePoint { iteration: it, mean, std, count });
    }
    Ok(CurveData { points, diverged, traces })
}

/// How sweep success is counted over a batch of runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuccessMode {
    /// A run succeeds when the averaged metric reaches epsilon. Natural
    /// for the federated algorithm, where averaging couples the agents.
    Run,
    /// Each `(run, agent)` pair counts separately. Natural for the
    /// independent benchmark, where agents never interact and one agent's
    /// divergence says nothing about the others.
    PerAgent,
}

/// Fraction of runs whose metric reaches `eps` within the horizon.
pub fn success_rate(traces: &[TrainTrace], eps: f64) -> f64 {
    let hits = traces.iter().filter(|tr| tr.first_hit(eps).is_some()).count();
    hits as f64 / traces.len() as f64
}

/// Fraction of `(run, agent)` pairs whose own metric reaches `eps`.
pub fn agent_success_rate(traces: &[TrainTrace], eps: f64) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for tr in traces {
        let m = tr.agent_gaps.first().map_or(0, Vec::len);
        for agent in 0..m {
            total += 1;
            if tr.agent_first_hit(agent, eps).is_some() {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn batch_success_rate(traces: &[TrainTrace], eps: f64, mode: SuccessMode) -> f64 {
    match mode {
        SuccessMode::Run => success_rate(traces, eps),
        SuccessMode::PerAgent => agent_success_rate(traces, eps),
    }
}

/// Median first iteration at which successful runs reach `eps`.
pub fn median_iterations(traces: &[TrainTrace], eps: f64) -> Option<usize> {
    let mut hits: Vec<usize> = traces.iter().filter_map(|tr| tr.first_hit(eps)).collect();
    if hits.is_empty() {
        return None;
    }
    hits.sort_unstable();
    Some(hits[hits.len() / 2])
}

/// Sweep outcome for one `(m, H)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Largest grid step size meeting the success-probability bar.
    pub max_eta: f64,
    /// Success rate at that step size.
    pub success_rate: f64,
    /// Median iterations-to-epsilon among its successful runs.
    pub median_iters: Option<usize>,
    /// `(eta, success rate)` for every grid point, in grid order.
    pub per_eta: Vec<(f64, f64)>,
}

/// Largest step size on a geometric grid for which at least `p_min` of the
/// runs reach `eps` within the horizon. Full grid search (success is not
/// monotone in the step size near the stability boundary).
pub fn sweep_max_stepsize<E: Env>(
    env: &E,
    base: &TrainConfig,
    etas: &[f64],
    runs: usize,
    eps: f64,
    p_min: f64,
    master_seed: u64,
    algorithm: Algorithm,
    mode: SuccessMode,
) -> Result<SweepResult> {
    let mut per_eta = Vec::with_capacity(etas.len());
    let mut best: Option<(f64, f64)> = None;
    for &eta in etas {
        let mut cfg = base.clone();
        cfg.eta = eta;
        let traces = run_many(env, &cfg, runs, master_seed, algorithm)?;
        let rate = batch_success_rate(&traces, eps, mode);
        per_eta.push((eta, rate));
        if meets_bar(rate, runs, mode, &traces, p_min) {
            best = Some((eta, rate));
        }
    }
    let (max_eta, rate) = best.ok_or(Error::NoConvergentStepsize)?;
    let mut cfg = base.clone();
    cfg.eta = max_eta;
    let traces = run_many(env, &cfg, runs, master_seed, algorithm)?;
    Ok(SweepResult {
        max_eta,
        success_rate: rate,
        median_iters: median_iterations(&traces, eps),
        per_eta,
    })
}

/// Exact count comparison against the success bar: at least
/// `ceil(p_min * total)` of the counted units must succeed.
fn meets_bar(rate: f64, runs: usize, mode: SuccessMode, traces: &[TrainTrace], p_min: f64) -> bool {
    let total = match mode {
        SuccessMode::Run => runs,
        SuccessMode::PerAgent => {
            runs * traces.first().and_then(|tr| tr.agent_gaps.first()).map_or(1, Vec::len)
        }
    };
    (rate * total as f64).round() >= (p_min * total as f64).ceil() - 0.5
}

/// Single-agent baseline over a task family: for each target of `prob`,
/// trains one agent on that target alone (decorrelated seed streams per
/// target) and counts every `(target, run)` pair toward the success rate.
/// Returns the largest grid step size at which the family-average rate
/// meets the bar.
pub fn sweep_family_baseline(
    prob: &LqrProblem,
    base: &TrainConfig,
    etas: &[f64],
    runs: usize,
    eps: f64,
    p_min: f64,
    master_seed: u64,
) -> Result<SweepResult> {
    let m = prob.num_agents();
    let total = m * runs;
    let envs: Vec<crate::trainers::LinearEnv> = (0..m)
        .map(|i| {
            let mut single = prob.clone();
            single.targets = vec![prob.targets[i].clone()];
            crate::trainers::LinearEnv::new(single)
        })
        .collect::<Result<_>>()?;
    let mut per_eta = Vec::with_capacity(etas.len());
    let mut best: Option<(f64, f64)> = None;
    let mut best_hits: Vec<usize> = Vec::new();
    for &eta in etas {
        let mut cfg = base.clone();
        cfg.eta = eta;
        let mut hits_here: Vec<usize> = Vec::new();
        for (i, env) in envs.iter().enumerate() {
            let seed = stream_key(master_seed, &[TAG_FAMILY, i as u64]);
            let traces = run_many(env, &cfg, runs, seed, Algorithm::Federated)?;
            hits_here.extend(traces.iter().filter_map(|tr| tr.first_hit(eps)));
        }
        let rate = hits_here.len() as f64 / total as f64;
        per_eta.push((eta, rate));
        if hits_here.len() as f64 >= (p_min * total as f64).ceil() - 0.5 {
            best = Some((eta, rate));
            best_hits = hits_here;
        }
    }
    let (max_eta, rate) = best.ok_or(Error::NoConvergentStepsize)?;
    let median_iters = if best_hits.is_empty() {
        None
    } else {
        best_hits.sort_unstable();
        Some(best_hits[best_hits.len() / 2])
    };
    Ok(SweepResult { max_eta, success_rate: rate, median_iters, per_eta })
}

/// Success rate as a function of the communication interval at fixed eta.
pub fn convergence_probability_vs_h<E: Env>(
    env: &E,
    base: &TrainConfig,
    h_list: &[usize],
    runs: usize,
    eps: f64,
    master_seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mut cfg = base.clone();
        cfg.h = h;
        if cfg.t % h != 0 {
            return Err(Error::ConfigError(format!("T ({}) not a multiple of H ({h})", cfg.t)));
        }
        let traces = run_many(env, &cfg, runs, master_seed, Algorithm::Federated)?;
        rows.push((h, success_rate(&traces, eps)));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Formats with 12 significant digits in plain decimal notation.
pub fn format_value(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    // decimals so that total significant digits = 12
    let decimals = (11 - magnitude).clamp(0, 30) as usize;
    let s = format!("{x:.decimals$}");
    // trim trailing zeros (and a trailing dot) for canonical output
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Writes a CSV (header then rows), UTF-8, `\n`-terminated lines.
pub fn emit_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::ConfigError(format!(
                "CSV row has {} cells for {} columns",
                row.len(),
                header.len()
            )));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// CSV rows for a learning curve: `iteration, mean, std, count`.
pub fn curve_rows(data: &CurveData) -> Vec<Vec<String>> {
    data.points
        .iter()
        .map(|p| {
            vec![
                p.iteration.to_string(),
                format_value(p.mean),
                format_value(p.std),
                p.count.to_string(),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::LinearEnv;

    #[test]
    fn paper3x3_preset_is_self_consistent() {
        let prob = paper3x3_problem(4, 0.1, 0);
        prob.validate().unwrap();
        assert_eq!(prob.targets.len(), 4);
        // Riccati-optimal gain is stable, and the contracted default too
        let (opt, _) = crate::analytic::solve_optimal(&prob, 0).unwrap();
        assert!(crate::lqr::is_stable(&prob, &opt.k));
        assert!(crate::lqr::is_stable(&prob, &default_init_k(&prob).unwrap()));
    }

    #[test]
    fn targets_share_prefix_across_agent_counts() {
        let small = paper3x3_problem(2, 0.1, 7);
        let large = paper3x3_problem(8, 0.1, 7);
        assert_eq!(&small.targets[..], &large.targets[..2]);
    }

    #[test]
    fn geometric_grid_ratio() {
        let g = geometric_grid(0.001, 0.01);
        assert!((g[0] - 0.001).abs() < 1e-15);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - GRID_RATIO).abs() < 1e-12);
        }
        assert!(*g.last().unwrap() <= 0.01 * (1.0 + 1e-9));
        assert_eq!(geometric_grid(0.5, 0.5), vec![0.5]);
    }

    #[test]
    fn format_value_examples() {
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(1.0), "1");
        assert_eq!(format_value(-2.5), "-2.5");
        assert_eq!(format_value(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_value(12345.678), "12345.678");
        assert_eq!(format_value(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_round_trip_bytes() {
        let dir = std::env::temp_dir();
        let p1 = dir.join("fedlqr_csv_test_1.csv");
        let p2 = dir.join("fedlqr_csv_test_2.csv");
        let rows = vec![vec!["1".to_string(), format_value(0.5)], vec!["2".to_string(), format_value(0.25)]];
        emit_csv(&p1, &["iter", "gap"], &rows).unwrap();
        emit_csv(&p2, &["iter", "gap"], &rows).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(String::from_utf8(b1).unwrap(), "iter,gap\n1,0.5\n2,0.25\n");
        let _ = std::fs::remove_file(p1);
        let _ = std::fs::remove_file(p2);
    }

    fn small_env() -> LinearEnv {
        let prob = crate::lqr::LqrProblem {
            a: Matrix::from_rows(&[&[0.0]]),
            b: Matrix::from_rows(&[&[1.0]]),
            q: Matrix::from_rows(&[&[1.0]]),
            r: Matrix::from_rows(&[&[1.0]]),
            gamma: 0.5,
            sigma: Matrix::from_rows(&[&[1.0]]),
            targets: vec![Vector::new(vec![1.0]), Vector::new(vec![-1.0])],
        };
        LinearEnv::new(prob).unwrap()
    }

    fn base_cfg(t: usize, eta: f64) -> TrainConfig {
        TrainConfig {
            t,
            h: 1,
            eta,
            r: 0.05,
            estimator: Estimator::TwoPoint,
            seed: 0,
            init_k: Matrix::from_rows(&[&[0.0]]),
            init_g: vec![],
            sampler: InitSampler::Gaussian,
            epsilon: Some(0.05),
            equalize_g_step: false,
        }
    }

    #[test]
    fn run_many_is_deterministic_and_ordered() {
        let env = small_env();
        let cfg = base_cfg(10, 0.002);
        let a = run_many(&env, &cfg, 4, 0, Algorithm::Federated).unwrap();
        let b = run_many(&env, &cfg, 4, 0, Algorithm::Federated).unwrap();
        assert_eq!(a, b);
        // different run seeds produce different traces
        assert_ne!(a[0].gaps, a[1].gaps);
    }

    #[test]
    fn curve_with_zero_step_is_constant_at_initial_gap() {
        let env = small_env();
        let cfg = base_cfg(5, 0.0);
        let data = run_learning_curve(&env, &cfg, 1, 0, Algorithm::Federated).unwrap();
        assert_eq!(data.points.len(), 5);
        let first = data.points[0].mean;
        assert!(data.points.iter().all(|p| (p.mean - first).abs() < 1e-12));
        assert!(data.diverged.is_empty());
    }

    #[test]
    fn sweep_single_point_grid() {
        let env = small_env();
        let cfg = base_cfg(400, 0.0);
        let res = sweep_max_stepsize(
            &env,
            &cfg,
            &[2e-3],
            4,
            0.05,
            0.7,
            0,
            Algorithm::Federated,
            SuccessMode::Run,
        );
        // either succeeds at the single point or reports no convergent size
        match res {
            Ok(r) => {
                assert_eq!(r.max_eta, 2e-3);
                assert_eq!(r.per_eta.len(), 1);
            }
            Err(e) => assert_eq!(e, Error::NoConvergentStepsize),
        }
    }

    #[test]
    fn zero_step_never_succeeds() {
        let env = small_env();
        let cfg = base_cfg(20, 0.0);
        let res =
            sweep_max_stepsize(&env, &cfg, &[0.0_f64.max(1e-300)], 3, 0.05, 0.7, 0, Algorithm::Federated, SuccessMode::Run);
        assert_eq!(res.unwrap_err(), Error::NoConvergentStepsize);
    }

    #[test]
    fn h_must_divide_t() {
        let env = small_env();
        let cfg = base_cfg(10, 0.001);
        assert!(convergence_probability_vs_h(&env, &cfg, &[3], 2, 0.05, 0).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig {
            problem: ProblemSpec::Preset { preset: "paper3x3".into() },
            agents: vec![1, 8],
            target_scale: 0.1,
            runs: 20,
            epsilon: 0.05,
            p_min: 0.7,
            eta: vec![],
            eta_bounds: Some((1e-4, 1e-2)),
            h_list: vec![1, 5, 25],
            r: 0.05,
            t: 1000,
            estimator: Estimator::TwoPoint,
            master_seed: 0,
            algorithm: Algorithm::Federated,
            output: None,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let prob = back.build_problem(8).unwrap();
        assert_eq!(prob.num_agents(), 8);
        assert!(!back.eta_grid().is_empty());
    }

    #[test]
    fn malformed_config_is_config_error() {
        let dir = std::env::temp_dir();
        let p = dir.join("fedlqr_bad_config.json");
        std::fs::write(&p, "{ \"agents\": \"oops\" }").unwrap();
        match load_config(&p) {
            Err(Error::ConfigError(msg)) => {
                assert!(msg.contains("fedlqr_bad_config.json"), "diagnostic names the file: {msg}");
                assert!(msg.contains("line"), "diagnostic has a location: {msg}");
            }
            other => panic!("expected ConfigError, got {other:?}"),
        }
        let _ = std::fs::remove_file(p);
    }

    #[test]
    fn unknown_preset_rejected() {
        let cfg = ExperimentConfig {
            problem: ProblemSpec::Preset { preset: "nope".into() },
            agents: vec![1],
            target_scale: 0.1,
            runs: 1,
            epsilon: 0.05,
            p_min: 0.7,
            eta: vec![1e-3],
            eta_bounds: None,
            h_list: vec![1],
            r: 0.05,
            t: 10,
            estimator: Estimator::TwoPoint,
            master_seed: 0,
            algorithm: Algorithm::Federated,
            output: None,
        };
        assert!(matches!(cfg.build_problem(1), Err(Error::ConfigError(_))));
    }
}
