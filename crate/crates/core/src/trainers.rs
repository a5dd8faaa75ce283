//! Federated (Algorithm 1) and independent (Algorithm 2) zeroth-order
//! policy-gradient trainers.
//!
//! Both trainers are generic over an [`Env`], which supplies per-agent
//! cost evaluations and (where possible) an analytic optimality gap for
//! instrumentation. All randomness flows through keyed rng substreams, so
//! a `(env, config)` pair maps to a bitwise-identical trace regardless of
//! evaluation order.

use serde::{Deserialize, Serialize};

use crate::analytic::GradPair;
use crate::lqr::{is_stable, sample_initial_state, InitSampler, LqrProblem, Policy};
use crate::numerics::{Matrix, Vector};
use crate::rng::substream;
use crate::zeroth_order::{one_point_estimate, two_point_estimate, GradEstimate};
use crate::{Error, Result};

/// Which gradient estimator drives the updates. `Exact` uses the analytic
/// oracle (not part of the algorithms under study; debugging/ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    OnePoint,
    TwoPoint,
    Exact,
}

/// Trainer hyperparameters and initial conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total iterations; must be a multiple of `h`.
    pub t: usize,
    /// Communication interval (local steps between averaging rounds).
    pub h: usize,
    /// Step size for the K update.
    pub eta: f64,
    /// Smoothing radius of the sphere perturbation.
    pub r: f64,
    pub estimator: Estimator,
    pub seed: u64,
    /// Common initial gain; must be stabilizing.
    pub init_k: Matrix,
    /// Per-agent initial offsets (defaults to zeros if empty).
    pub init_g: Vec<Vector>,
    pub sampler: InitSampler,
    /// Declare `Converged` when the final metric is at or below this.
    pub epsilon: Option<f64>,
    /// Ablation: use step `eta` (not `eta/m`) for the federated g update,
    /// making the g step match the independent algorithm. Default off.
    #[serde(default)]
    pub equalize_g_step: bool,
}

/// Run termination status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Final metric at or below the configured epsilon.
    Converged(f64),
    /// Ran all T iterations without meeting (or without configuring) epsilon.
    Completed,
    /// An unstable gain was produced at this iteration (two-point / exact).
    Diverged(usize),
}

/// Full record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Per-iteration instrumentation metric, averaged over agents: the
    /// analytic optimality gap where the environment provides one,
    /// otherwise the measured cost. `INFINITY` marks iterates the metric
    /// could not score (an unstable gain).
    pub gaps: Vec<f64>,
    /// Per-iteration, per-agent metric (same convention as `gaps`).
    pub agent_gaps: Vec<Vec<f64>>,
    /// Per-iteration, per-agent stability of the post-update gain.
    pub stable_flags: Vec<Vec<bool>>,
    pub final_policies: Vec<Policy>,
    pub outcome: Outcome,
}

impl TrainTrace {
    /// First iteration (0-based) whose average metric is at or below `eps`.
    pub fn first_hit(&self, eps: f64) -> Option<usize> {
        self.gaps.iter().position(|&g| g <= eps)
    }

    /// First iteration at which one agent's metric is at or below `eps`.
    pub fn agent_first_hit(&self, agent: usize, eps: f64) -> Option<usize> {
        self.agent_gaps.iter().position(|row| row[agent] <= eps)
    }

    pub fn final_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// A training environment: per-agent cost oracle plus instrumentation.
pub trait Env: Sync {
    /// Opaque per-evaluation initial condition (shared by the two cost
    /// evaluations of the two-point estimator).
    type Init;

    fn num_agents(&self) -> usize;
    /// `(rows, cols)` of the gain matrix K.
    fn k_shape(&self) -> (usize, usize);
    fn sample_init(
        &self,
        agent: usize,
        sampler: InitSampler,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self::Init>;
    /// Cost of one evaluation of `policy` for `agent` from `x0`. May fail
    /// on destabilizing policies.
    fn cost(&self, agent: usize, policy: &Policy, x0: &Self::Init) -> Result<f64>;
    /// Stability of a gain (used for divergence accounting).
    fn is_k_stable(&self, k: &Matrix) -> bool;
    /// Baseline cost of a policy, used to fix the one-point truncation cap
    /// at training start.
    fn nominal_cost(&self, agent: usize, policy: &Policy) -> Result<f64>;
    /// Analytic oracle gradient, where the environment has one.
    fn exact_gradient(&self, _agent: usize, _policy: &Policy) -> Result<GradPair> {
        Err(Error::ConfigError("environment has no exact gradient oracle".into()))
    }
    /// Per-agent instrumentation metric for the current policies: the
    /// analytic optimality gap if available, else a measured cost;
    /// `INFINITY` for an iterate that cannot be scored (unstable gain).
    fn agent_metrics(&self, policies: &[Policy]) -> Vec<f64>;
}

/// LQR environment backed by the analytic oracles. Cost evaluations use
/// the exact infinite-horizon `sample_cost` by default (identical in
/// expectation to an untruncated rollout, minus truncation noise);
/// `use_rollouts` switches to truncated simulation for validation.
pub struct LinearEnv {
    pub prob: LqrProblem,
    pub use_rollouts: bool,
    pub horizon: usize,
    /// Per-agent optimal costs `J^i(K*, g^{i*})`, the gap references.
    pub j_star: Vec<f64>,
}

impl LinearEnv {
    pub fn new(prob: LqrProblem) -> Result<Self> {
        prob.validate()?;
        let j_star = (0..prob.num_agents())
            .map(|agent| {
                let (opt, _) = crate::analytic::solve_optimal(&prob, agent)?;
                crate::analytic::expected_cost(&prob, agent, &opt)
            })
            .collect::<Result<Vec<_>>>()?;
        let horizon = crate::lqr::default_horizon(prob.gamma);
        Ok(LinearEnv { prob, use_rollouts: false, horizon, j_star })
    }

    /// `(1/m) sum_i J^i(K*, g^{i*})`, the average-gap reference.
    pub fn j_avg_star(&self) -> f64 {
        self.j_star.iter().sum::<f64>() / self.j_star.len() as f64
    }
}

impl Env for LinearEnv {
    type Init = Vector;

    fn num_agents(&self) -> usize {
        self.prob.num_agents()
    }

    fn k_shape(&self) -> (usize, usize) {
        (self.prob.k(), self.prob.n())
    }

    fn sample_init(
        &self,
        _agent: usize,
        sampler: InitSampler,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vector> {
        sample_initial_state(&self.prob, sampler, rng)
    }

    fn cost(&self, agent: usize, policy: &Policy, x0: &Vector) -> Result<f64> {
        if self.use_rollouts {
            crate::lqr::rollout_cost(&self.prob, agent, policy, x0, self.horizon)
        } else {
            crate::analytic::sample_cost(&self.prob, agent, policy, x0)
        }
    }

    fn is_k_stable(&self, k: &Matrix) -> bool {
        is_stable(&self.prob, k)
    }

    fn nominal_cost(&self, agent: usize, policy: &Policy) -> Result<f64> {
        crate::analytic::expected_cost(&self.prob, agent, policy)
    }

    fn exact_gradient(&self, agent: usize, policy: &Policy) -> Result<GradPair> {
        crate::analytic::exact_gradient(&self.prob, agent, policy)
    }

    fn agent_metrics(&self, policies: &[Policy]) -> Vec<f64> {
        policies
            .iter()
            .enumerate()
            .map(|(agent, pol)| match crate::analytic::expected_cost(&self.prob, agent, pol) {
                Ok(j) => j - self.j_star[agent],
                Err(_) => f64::INFINITY,
            })
            .collect()
    }
}

/// Entrywise mean of the gains, computed as `first + mean(k - first)` so
/// that averaging identical gains is exactly a no-op.
pub fn average_policies(ks: &[Matrix]) -> Result<Matrix> {
    let first = ks.first().ok_or_else(|| Error::ConfigError("no gains to average".into()))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for k in ks {
        if k.rows() != first.rows() || k.cols() != first.cols() {
            return Err(Error::DimensionMismatch("gain shapes differ in averaging".into()));
        }
        acc = acc.add(&k.sub(first));
    }
    Ok(first.add(&acc.scale(1.0 / ks.len() as f64)))
}

fn validate_config<E: Env>(env: &E, cfg: &TrainConfig) -> Result<()> {
    if cfg.t == 0 || cfg.h == 0 || cfg.t % cfg.h != 0 {
        return Err(Error::ConfigError(format!(
            "T ({}) must be a positive multiple of H ({})",
            cfg.t, cfg.h
        )));
    }
    if !(cfg.eta >= 0.0) {
        return Err(Error::ConfigError("eta must be nonnegative".into()));
    }
    if !(cfg.r > 0.0) {
        return Err(Error::ConfigError("smoothing radius must be positive".into()));
    }
    let (rows, cols) = env.k_shape();
    if cfg.init_k.rows() != rows || cfg.init_k.cols() != cols {
        return Err(Error::DimensionMismatch(format!(
            "init K is {}x{}, expected {}x{}",
            cfg.init_k.rows(),
            cfg.init_k.cols(),
            rows,
            cols
        )));
    }
    if !env.is_k_stable(&cfg.init_k) {
        return Err(Error::UnstablePolicy);
    }
    if !cfg.init_g.is_empty() && cfg.init_g.len() != env.num_agents() {
        return Err(Error::ConfigError(format!(
            "init g list has {} entries for {} agents",
            cfg.init_g.len(),
            env.num_agents()
        )));
    }
    Ok(())
}

fn initial_policies<E: Env>(env: &E, cfg: &TrainConfig) -> Vec<Policy> {
    let (rows, _) = env.k_shape();
    (0..env.num_agents())
        .map(|i| {
            let g = cfg.init_g.get(i).cloned().unwrap_or_else(|| Vector::zeros(rows));
            Policy::new(cfg.init_k.clone(), g)
        })
        .collect()
}

/// One agent's gradient estimate at iteration `t`. Randomness is keyed by
/// `(seed, agent, t)` so results do not depend on evaluation order.
fn estimate<E: Env>(
    env: &E,
    cfg: &TrainConfig,
    caps: &[f64],
    agent: usize,
    t: usize,
    policy: &Policy,
) -> Result<GradEstimate> {
    let mut rng = substream(cfg.seed, &[agent as u64, t as u64]);
    match cfg.estimator {
        Estimator::TwoPoint => {
            let x0 = env.sample_init(agent, cfg.sampler, &mut rng)?;
            two_point_estimate(policy, cfg.r, &x0, |p, x| env.cost(agent, p, x), &mut rng)
        }
        Estimator::OnePoint => {
            let x0 = env.sample_init(agent, cfg.sampler, &mut rng)?;
            one_point_estimate(
                policy,
                cfg.r,
                caps[agent],
                &x0,
                |p, x| env.cost(agent, p, x),
                &mut rng,
            )
        }
        Estimator::Exact => {
            let g = env.exact_gradient(agent, policy)?;
            Ok(GradEstimate { zk: g.dk, zg: g.dg })
        }
    }
}

fn record_iteration<E: Env>(env: &E, policies: &[Policy], dead: &[Option<usize>], trace: &mut TrainTrace) {
    trace
        .stable_flags
        .push(policies.iter().map(|p| env.is_k_stable(&p.k)).collect());
    let mut metrics = env.agent_metrics(policies);
    for (m, d) in metrics.iter_mut().zip(dead) {
        if d.is_some() {
            *m = f64::INFINITY;
        }
    }
    let avg = metrics.iter().sum::<f64>() / metrics.len() as f64;
    trace.gaps.push(avg);
    trace.agent_gaps.push(metrics);
}

fn finish(cfg: &TrainConfig, policies: Vec<Policy>, mut trace: TrainTrace) -> TrainTrace {
    if let Some(eps) = cfg.epsilon {
        if trace.outcome == Outcome::Completed && trace.final_gap() <= eps {
            trace.outcome = Outcome::Converged(eps);
        }
    }
    trace.final_policies = policies;
    trace
}

/// Whether an estimator failure aborts the run. The one-point cap absorbs
/// instability, so only the two-point and exact modes can diverge.
fn hard_failure(cfg: &TrainConfig) -> bool {
    !matches!(cfg.estimator, Estimator::OnePoint)
}

fn run(env: &impl Env, cfg: &TrainConfig, federated: bool) -> Result<TrainTrace> {
    validate_config(env, cfg)?;
    let m = env.num_agents();
    let mut policies = initial_policies(env, cfg);
    // one-point truncation caps, fixed at training start
    let caps: Vec<f64> = if cfg.estimator == Estimator::OnePoint {
        policies
            .iter()
            .enumerate()
            .map(|(i, p)| env.nominal_cost(i, p).map(|j| 10.0 * j))
            .collect::<Result<_>>()?
    } else {
        vec![0.0; m]
    };
    let g_step = if federated && !cfg.equalize_g_step { cfg.eta / m as f64 } else { cfg.eta };

    let mut trace = TrainTrace {
        gaps: Vec::with_capacity(cfg.t),
        agent_gaps: Vec::with_capacity(cfg.t),
        stable_flags: Vec::with_capacity(cfg.t),
        final_policies: Vec::new(),
        outcome: Outcome::Completed,
    };
    // Iteration at which each agent diverged, if it did. In federated mode
    // one divergence ends the run (the next averaging step would poison
    // the shared gain); independent agents are uncoupled, so the others
    // keep training and only the diverged agent is frozen.
    let mut dead: Vec<Option<usize>> = vec![None; m];

    for t in 0..cfg.t {
        for agent in 0..m {
            if dead[agent].is_some() {
                continue;
            }
            let z = match estimate(env, cfg, &caps, agent, t, &policies[agent]) {
                Ok(z) => z,
                Err(_) if hard_failure(cfg) => {
                    if federated {
                        trace.outcome = Outcome::Diverged(t);
                        record_iteration(env, &policies, &dead, &mut trace);
                        return Ok(finish(cfg, policies, trace));
                    }
                    dead[agent] = Some(t);
                    continue;
                }
                Err(e) => return Err(e),
            };
            policies[agent].k = policies[agent].k.sub(&z.zk.scale(cfg.eta));
            policies[agent].g = policies[agent].g.sub(&z.zg.scale(g_step));
        }
        if federated && (t + 1) % cfg.h == 0 {
            let ks: Vec<Matrix> = policies.iter().map(|p| p.k.clone()).collect();
            let kbar = average_policies(&ks)?;
            for p in &mut policies {
                p.k = kbar.clone();
            }
        }
        // Stability is judged on the post-averaging iterate: a gain that
        // drifts unstable between averaging rounds is recovered by the
        // round itself, which is precisely the variance reduction the
        // federated scheme buys. In independent mode each agent is judged
        // on its own, and a dead agent does not end the run.
        if hard_failure(cfg) {
            for agent in 0..m {
                if dead[agent].is_none() && !env.is_k_stable(&policies[agent].k) {
                    if federated {
                        trace.outcome = Outcome::Diverged(t);
                        record_iteration(env, &policies, &dead, &mut trace);
                        return Ok(finish(cfg, policies, trace));
                    }
                    dead[agent] = Some(t);
                }
            }
        }
        if !federated {
            if let Some(t0) = dead.iter().flatten().min().copied() {
                trace.outcome = Outcome::Diverged(t0);
            }
        }
        record_iteration(env, &policies, &dead, &mut trace);
    }
    Ok(finish(cfg, policies, trace))
}

/// Algorithm 1: H local zeroth-order steps per epoch, K averaged across
/// agents at epoch end, per-agent g updated with step `eta / m` and never
/// averaged.
pub fn run_federated(env: &impl Env, cfg: &TrainConfig) -> Result<TrainTrace> {
    run(env, cfg, true)
}

/// Algorithm 2: the independent benchmark. No averaging; every agent keeps
/// its own gain, and the g step uses `eta`.
pub fn run_independent(env: &impl Env, cfg: &TrainConfig) -> Result<TrainTrace> {
    run(env, cfg, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(gamma: f64, targets: &[f64]) -> LqrProblem {
        LqrProblem {
            a: Matrix::from_rows(&[&[0.0]]),
            b: Matrix::from_rows(&[&[1.0]]),
            q: Matrix::from_rows(&[&[1.0]]),
            r: Matrix::from_rows(&[&[1.0]]),
            gamma,
            sigma: Matrix::from_rows(&[&[1.0]]),
            targets: targets.iter().map(|&t| Vector::new(vec![t])).collect(),
        }
    }

    fn base_cfg(estimator: Estimator) -> TrainConfig {
        TrainConfig {
            t: 20,
            h: 1,
            eta: 0.01,
            r: 0.05,
            estimator,
            seed: 42,
            init_k: Matrix::from_rows(&[&[0.0]]),
            init_g: vec![],
            sampler: InitSampler::Gaussian,
            epsilon: None,
            equalize_g_step: false,
        }
    }

    #[test]
    fn zero_stepsize_is_constant() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0, -1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.eta = 0.0;
        let trace = run_federated(&env, &cfg).unwrap();
        assert!(trace.gaps.windows(2).all(|w| w[0] == w[1]));
        for p in &trace.final_policies {
            assert_eq!(p.k, cfg.init_k);
            assert!(p.g.max_abs() == 0.0);
        }
        assert_eq!(trace.outcome, Outcome::Completed);
    }

    #[test]
    fn single_agent_federated_equals_independent() {
        // m = 1: averaging is the identity and eta/m = eta
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0])).unwrap();
        let cfg = base_cfg(Estimator::TwoPoint);
        let fed = run_federated(&env, &cfg).unwrap();
        let ind = run_independent(&env, &cfg).unwrap();
        assert_eq!(fed, ind);
    }

    #[test]
    fn equalize_flag_matches_independent_pre_averaging() {
        // H = T: federated with the ablation flag does exactly the
        // independent trajectories until the single final averaging step.
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0, -0.5])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.h = cfg.t;
        cfg.equalize_g_step = true;
        let fed = run_federated(&env, &cfg).unwrap();
        let ind = run_independent(&env, &cfg).unwrap();
        assert_eq!(&fed.gaps[..cfg.t - 1], &ind.gaps[..cfg.t - 1]);
        for (f, i) in fed.final_policies.iter().zip(&ind.final_policies) {
            assert_eq!(f.g, i.g);
        }
    }

    #[test]
    fn averaging_identical_gains_is_noop() {
        let k = Matrix::from_rows(&[&[0.1, -0.2], &[0.3, 0.4]]);
        let avg = average_policies(&[k.clone(), k.clone(), k.clone()]).unwrap();
        assert_eq!(avg, k);
    }

    #[test]
    fn averaging_examples() {
        let k = Matrix::from_rows(&[&[1.0]]);
        let k3 = Matrix::from_rows(&[&[3.0]]);
        let avg = average_policies(&[k.clone(), k3]).unwrap();
        assert_eq!(avg, Matrix::from_rows(&[&[2.0]]));
        let neg = k.scale(-1.0);
        let zero = average_policies(&[k, neg]).unwrap();
        assert_eq!(zero, Matrix::from_rows(&[&[0.0]]));
        assert!(average_policies(&[]).is_err());
        assert!(average_policies(&[Matrix::identity(1), Matrix::identity(2)]).is_err());
    }

    #[test]
    fn traces_are_deterministic() {
        let env = LinearEnv::new(scalar_problem(0.6, &[1.0, 2.0, -1.0])).unwrap();
        let cfg = base_cfg(Estimator::TwoPoint);
        let a = run_federated(&env, &cfg).unwrap();
        let b = run_federated(&env, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaps_are_nonnegative() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0, -1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.t = 100;
        cfg.eta = 0.005;
        let trace = run_federated(&env, &cfg).unwrap();
        assert!(trace.gaps.iter().all(|&g| g >= -1e-9));
    }

    #[test]
    fn exact_gradient_descent_converges() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0, -2.0])).unwrap();
        let mut cfg = base_cfg(Estimator::Exact);
        cfg.t = 4000;
        cfg.eta = 0.02;
        cfg.epsilon = Some(1e-6);
        let trace = run_federated(&env, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::Converged(1e-6));
        // gaps monotone non-increasing under small-step oracle descent
        assert!(trace.gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn independent_exact_descent_decreases_each_cost() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.5])).unwrap();
        let mut cfg = base_cfg(Estimator::Exact);
        cfg.t = 50;
        cfg.eta = 0.02;
        let trace = run_independent(&env, &cfg).unwrap();
        assert!(trace.gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn unstable_init_rejected() {
        let env = LinearEnv::new(scalar_problem(0.9, &[0.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.init_k = Matrix::from_rows(&[&[5.0]]);
        assert_eq!(run_federated(&env, &cfg).unwrap_err(), Error::UnstablePolicy);
    }

    #[test]
    fn t_not_multiple_of_h_rejected() {
        let env = LinearEnv::new(scalar_problem(0.5, &[0.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.t = 10;
        cfg.h = 3;
        assert!(matches!(run_federated(&env, &cfg), Err(Error::ConfigError(_))));
    }

    #[test]
    fn huge_step_two_point_diverges() {
        let env = LinearEnv::new(scalar_problem(0.9, &[1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.eta = 100.0;
        cfg.t = 50;
        let trace = run_federated(&env, &cfg).unwrap();
        assert!(matches!(trace.outcome, Outcome::Diverged(_)));
    }

    #[test]
    fn one_point_never_hard_fails() {
        let env = LinearEnv::new(scalar_problem(0.9, &[1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::OnePoint);
        cfg.eta = 100.0;
        cfg.t = 30;
        let trace = run_federated(&env, &cfg).unwrap();
        assert!(!matches!(trace.outcome, Outcome::Diverged(_)));
        assert_eq!(trace.gaps.len(), 30);
    }

    #[test]
    fn one_point_descends_on_easy_problem() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::OnePoint);
        cfg.t = 4000;
        cfg.eta = 2e-4;
        cfg.r = 0.1;
        let trace = run_federated(&env, &cfg).unwrap();
        let head: f64 = trace.gaps[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = trace.gaps[trace.gaps.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(tail < head, "one-point made no progress: head {head}, tail {tail}");
    }

    #[test]
    fn two_point_descends_on_easy_problem() {
        let env = LinearEnv::new(scalar_problem(0.5, &[1.0, -1.0])).unwrap();
        let mut cfg = base_cfg(Estimator::TwoPoint);
        cfg.t = 1500;
        cfg.eta = 2e-3;
        cfg.r = 0.05;
        let trace = run_federated(&env, &cfg).unwrap();
        let head: f64 = trace.gaps[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = trace.gaps[trace.gaps.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(tail < 0.5 * head, "two-point made no progress: head {head}, tail {tail}");
    }

    #[test]
    fn rollout_mode_tracks_exact_mode() {
        let mut env = LinearEnv::new(scalar_problem(0.5, &[1.0])).unwrap();
        let cfg = base_cfg(Estimator::TwoPoint);
        let exact_trace = run_federated(&env, &cfg).unwrap();
        env.use_rollouts = true;
        let rollout_trace = run_federated(&env, &cfg).unwrap();
        // same random draws; costs differ only by the 1e-12 truncation tail
        for (a, b) in exact_trace.gaps.iter().zip(&rollout_trace.gaps) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
