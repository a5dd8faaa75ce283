//! Cart-inverted-pendulum environment.
//!
//! Continuous dynamics (upright pole, angle measured from vertical):
//!
//! ```text
//! (M + m) p'' - mL cos(th) th'' + c p' + mL sin(th) th'^2 = F
//! -mL cos(th) p'' + (I + mL^2) th'' + v th' - m g L sin(th) = 0
//! ```
//!
//! Each step solves the 2x2 linear system in the accelerations exactly,
//! then integrates with semi-implicit Euler (velocities first, then
//! positions with the updated velocities). Cost is a discounted quadratic
//! tracking objective over a fixed-length episode with a scalar force
//! `F = K x + g`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lqr::{InitSampler, Policy};
use crate::numerics::{Matrix, Vector};
use crate::trainers::Env;
use crate::{Error, Result};

/// Any state coordinate beyond this magnitude aborts the episode.
const DIVERGENCE_GUARD: f64 = 1e6;

/// Physical and cost parameters of the cartpole problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartpoleParams {
    /// Cart mass.
    pub cart_mass: f64,
    /// Pole mass.
    pub pole_mass: f64,
    /// Pole length.
    pub length: f64,
    pub gravity: f64,
    /// Pole moment of inertia about its center of gravity.
    pub inertia: f64,
    /// Cart friction coefficient.
    pub cart_friction: f64,
    /// Hinge friction coefficient.
    pub hinge_friction: f64,
    /// Integration step.
    pub dt: f64,
    /// 4x4 state cost.
    pub q: Matrix,
    /// Scalar input cost.
    pub r_scalar: f64,
    pub gamma: f64,
    pub episode_len: usize,
    /// Half-width of the uniform initial-state box.
    pub init_range: f64,
}

impl Default for CartpoleParams {
    /// Benchmark defaults: unit cart, 0.1 pole, frictionless, uniform-rod
    /// inertia, dt = 0.02, Q = diag(1, 100, 1, 1) x 0.1, R = 0.1,
    /// gamma = 0.95, 300-step episodes, initial box [-0.05, 0.05]^4.
    fn default() -> Self {
        let pole_mass = 0.1;
        let length = 1.0;
        CartpoleParams {
            cart_mass: 1.0,
            pole_mass,
            length,
            gravity: 9.8,
            inertia: pole_mass * length * length / 12.0,
            cart_friction: 0.0,
            hinge_friction: 0.0,
            dt: 0.02,
            q: Matrix::diag(&[0.1, 10.0, 0.1, 0.1]),
            r_scalar: 0.1,
            gamma: 0.95,
            episode_len: 300,
            init_range: 0.05,
        }
    }
}

impl CartpoleParams {
    pub fn validate(&self) -> Result<()> {
        if self.cart_mass <= 0.0
            || self.pole_mass <= 0.0
            || self.length <= 0.0
            || self.inertia <= 0.0
            || self.dt <= 0.0
        {
            return Err(Error::ConfigError("masses, length, inertia, dt must be positive".into()));
        }
        if self.r_scalar <= 0.0 {
            return Err(Error::ConfigError("input cost must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::ConfigError("gamma must be in (0,1)".into()));
        }
        if self.q.rows() != 4 || self.q.cols() != 4 || !self.q.is_symmetric(1e-10) {
            return Err(Error::ConfigError("Q must be symmetric 4x4".into()));
        }
        Ok(())
    }

    /// The benchmark's five position targets `[(-2+i) * 0.5, 0, 0, 0]`.
    pub fn standard_targets() -> Vec<Vector> {
        (0..5)
            .map(|i| Vector::new(vec![(-2.0 + i as f64) * 0.5, 0.0, 0.0, 0.0]))
            .collect()
    }
}

/// Cart position/velocity and pole angle/rate; angle 0 is upright.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleState {
    pub p: f64,
    pub theta: f64,
    pub p_dot: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub fn zero() -> Self {
        CartpoleState { p: 0.0, theta: 0.0, p_dot: 0.0, theta_dot: 0.0 }
    }

    /// Fixed evaluation state for learning-curve metrics. The zero state
    /// is an equilibrium, so every stabilizing gain scores identically
    /// there; a deliberately tilted pole makes the metric discriminate
    /// between gains by their recovery cost.
    pub fn probe() -> Self {
        CartpoleState { p: 0.0, theta: 0.2, p_dot: 0.0, theta_dot: 0.0 }
    }

    /// State as the vector `[p, theta, p_dot, theta_dot]`.
    pub fn to_vector(&self) -> Vector {
        Vector::new(vec![self.p, self.theta, self.p_dot, self.theta_dot])
    }

    pub fn max_abs(&self) -> f64 {
        self.p
            .abs()
            .max(self.theta.abs())
            .max(self.p_dot.abs())
            .max(self.theta_dot.abs())
    }
}

/// Solves the coupled equations of motion for `(p'', theta'')` and takes
/// one semi-implicit Euler step under force `F`.
pub fn cartpole_step(params: &CartpoleParams, state: &CartpoleState, force: f64) -> Result<CartpoleState> {
    let (m_c, m_p, l) = (params.cart_mass, params.pole_mass, params.length);
    let (sin_t, cos_t) = state.theta.sin_cos();

    // [ M+m        -mL cos ] [p'']   [ F - c p' - mL sin th'^2 ]
    // [ -mL cos    I+mL^2  ] [th'']  [ mgL sin - v th'         ]
    let a11 = m_c + m_p;
    let a12 = -m_p * l * cos_t;
    let a22 = params.inertia + m_p * l * l;
    let b1 = force - params.cart_friction * state.p_dot - m_p * l * sin_t * state.theta_dot.powi(2);
    let b2 = m_p * params.gravity * l * sin_t - params.hinge_friction * state.theta_dot;

    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-12 {
        return Err(Error::SingularMassMatrix);
    }
    let p_ddot = (b1 * a22 - a12 * b2) / det;
    let theta_ddot = (a11 * b2 - a12 * b1) / det;

    let p_dot = state.p_dot + params.dt * p_ddot;
    let theta_dot = state.theta_dot + params.dt * theta_ddot;
    Ok(CartpoleState {
        p: state.p + params.dt * p_dot,
        theta: state.theta + params.dt * theta_dot,
        p_dot,
        theta_dot,
    })
}

/// Discounted tracking cost of one fixed-length episode under the affine
/// policy `F = K x + g` (K is 1x4, g scalar).
pub fn episode_cost(
    params: &CartpoleParams,
    target: &Vector,
    policy: &Policy,
    x0: &CartpoleState,
) -> Result<f64> {
    assert_eq!(policy.k.rows(), 1, "cartpole force is scalar");
    assert_eq!(policy.k.cols(), 4, "cartpole state is 4-dimensional");
    assert_eq!(target.dim(), 4, "cartpole target is 4-dimensional");
    let mut state = *x0;
    let mut total = 0.0;
    let mut disc = 1.0;
    for t in 0..params.episode_len {
        if state.max_abs() > DIVERGENCE_GUARD {
            return Err(Error::Diverged(t));
        }
        let x = state.to_vector();
        let force = policy.act(&x)[0];
        let dev = x.sub(target);
        total += disc * (dev.dot(&params.q.matvec(&dev)) + params.r_scalar * force * force);
        disc *= params.gamma;
        state = cartpole_step(params, &state, force)?;
    }
    if !total.is_finite() {
        return Err(Error::Diverged(params.episode_len));
    }
    Ok(total)
}

/// Finite-difference linearization of one step around the upright
/// equilibrium, returning discrete-time `(A, B)` with `x' = A x + B F`.
pub fn linearize(params: &CartpoleParams) -> Result<(Matrix, Matrix)> {
    let h = 1e-6;
    let base = CartpoleState::zero();
    let step_vec = |s: &CartpoleState, f: f64| -> Result<Vector> {
        Ok(cartpole_step(params, s, f)?.to_vector())
    };
    let mut a = Matrix::zeros(4, 4);
    for j in 0..4 {
        let mut plus = base;
        let mut minus = base;
        match j {
            0 => {
                plus.p += h;
                minus.p -= h;
            }
            1 => {
                plus.theta += h;
                minus.theta -= h;
            }
            2 => {
                plus.p_dot += h;
                minus.p_dot -= h;
            }
            _ => {
                plus.theta_dot += h;
                minus.theta_dot -= h;
            }
        }
        let col = step_vec(&plus, 0.0)?.sub(&step_vec(&minus, 0.0)?).scale(1.0 / (2.0 * h));
        for i in 0..4 {
            a[(i, j)] = col[i];
        }
    }
    let bcol = step_vec(&base, h)?.sub(&step_vec(&base, -h)?).scale(1.0 / (2.0 * h));
    let mut b = Matrix::zeros(4, 1);
    for i in 0..4 {
        b[(i, 0)] = bcol[i];
    }
    Ok((a, b))
}

/// Rank of the controllability matrix `[B, AB, A^2 B, A^3 B]` (by Gaussian
/// elimination with a tolerance).
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> usize {
    let n = a.rows();
    let mut cols: Vec<Vector> = Vec::new();
    let mut power = b.clone();
    for _ in 0..n {
        for j in 0..power.cols() {
            cols.push(power.column(j));
        }
        power = a.matmul(&power);
    }
    // Gram-Schmidt with tolerance
    let mut basis: Vec<Vector> = Vec::new();
    for mut v in cols {
        for u in &basis {
            v = v.sub(&u.scale(v.dot(u)));
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.push(v.scale(1.0 / nv));
        }
    }
    basis.len()
}

/// Training environment wrapping episodes for multiple tracking targets.
/// There is no analytic oracle here, so the [`Env::metric`] reports the
/// measured average episode cost from the zero state (raw cost, not a
/// gap), and stability checks use the finite-difference linearization.
pub struct CartpoleEnv {
    pub params: CartpoleParams,
    pub targets: Vec<Vector>,
    /// Linearized discrete dynamics at the upright equilibrium, used only
    /// for instrumentation-level stability flags.
    lin: (Matrix, Matrix),
}

impl CartpoleEnv {
    pub fn new(params: CartpoleParams, targets: Vec<Vector>) -> Result<Self> {
        params.validate()?;
        if targets.is_empty() {
            return Err(Error::ConfigError("at least one target required".into()));
        }
        for t in &targets {
            if t.dim() != 4 {
                return Err(Error::DimensionMismatch("cartpole targets must have dim 4".into()));
            }
        }
        let lin = linearize(&params)?;
        Ok(CartpoleEnv { params, targets, lin })
    }

    /// Riccati gain for the linearized dynamics, contracted toward zero;
    /// the default stabilizing initial gain. The strong contraction makes
    /// the starting controller stabilizing but visibly suboptimal, so the
    /// training curve has room to descend.
    pub fn default_init_k(&self) -> Result<Matrix> {
        let prob = self.as_linear_problem();
        let (opt, _) = crate::analytic::solve_optimal(&prob, 0)?;
        let k0 = opt.k.scale(0.45);
        if !crate::lqr::is_stable(&prob, &k0) {
            return Err(Error::UnstablePolicy);
        }
        Ok(k0)
    }

    /// The linearized problem used for gain synthesis and stability flags.
    fn as_linear_problem(&self) -> crate::lqr::LqrProblem {
        crate::lqr::LqrProblem {
            a: self.lin.0.clone(),
            b: self.lin.1.clone(),
            q: self.params.q.clone(),
            r: Matrix::from_rows(&[&[self.params.r_scalar]]),
            gamma: self.params.gamma,
            sigma: Matrix::identity(4),
            targets: vec![Vector::zeros(4)],
        }
    }
}

impl Env for CartpoleEnv {
    type Init = CartpoleState;

    fn num_agents(&self) -> usize {
        self.targets.len()
    }

    fn k_shape(&self) -> (usize, usize) {
        (1, 4)
    }

    fn sample_init(
        &self,
        _agent: usize,
        _sampler: InitSampler,
        rng: &mut ChaCha8Rng,
    ) -> Result<CartpoleState> {
        let r = self.params.init_range;
        Ok(CartpoleState {
            p: rng.gen_range(-r..=r),
            theta: rng.gen_range(-r..=r),
            p_dot: rng.gen_range(-r..=r),
            theta_dot: rng.gen_range(-r..=r),
        })
    }

    fn cost(&self, agent: usize, policy: &Policy, x0: &CartpoleState) -> Result<f64> {
        episode_cost(&self.params, &self.targets[agent], policy, x0)
    }

    fn is_k_stable(&self, k: &Matrix) -> bool {
        crate::lqr::is_stable(&self.as_linear_problem(), k)
    }

    fn nominal_cost(&self, agent: usize, policy: &Policy) -> Result<f64> {
        episode_cost(&self.params, &self.targets[agent], policy, &CartpoleState::probe())
    }

    fn agent_metrics(&self, policies: &[Policy]) -> Vec<f64> {
        policies
            .iter()
            .enumerate()
            .map(|(agent, pol)| {
                episode_cost(&self.params, &self.targets[agent], pol, &CartpoleState::probe())
                    .unwrap_or(f64::INFINITY)
            })
            .collect()
    }
}
