//! Exact oracles for the discounted LQR tracking cost.
//!
//! For a stable policy `(K, g)` the cost-to-go from state `z` is the
//! quadratic `V(z) = z' P z + 2 z' q + r`. This module computes those
//! coefficients, the expected cost `tr(P Sigma) + r`, the discounted state
//! moments, exact gradients with respect to `K` and `g`, the optimal
//! controller via the discounted Riccati fixed point, and the
//! gradient-domination certificate.
//!
//! All of this assumes the Gaussian initial sampler semantics
//! (`E[x_0] = 0`, `E[x_0 x_0'] = Sigma`).

use crate::lqr::{is_stable, LqrProblem, Policy};
use crate::numerics::{
    smallest_eigenvalue_sym, solve_linear_vec, spectral_radius, Matrix, Vector,
};
use crate::{Error, Result};

/// Convergence threshold on the increment of fixed-point iterations.
const FIXED_POINT_TOL: f64 = 1e-13;
/// Iteration cap for the plain (non-doubling) fixed-point loops.
const FIXED_POINT_CAP: usize = 100_000;
/// Doubling steps for discounted Lyapunov sums (covers 2^k series terms).
const DOUBLING_CAP: usize = 96;

/// Quadratic value-function coefficients `(P, q, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    /// Quadratic part, n x n symmetric PSD.
    pub p: Matrix,
    /// Linear part, dimension n.
    pub q: Vector,
    /// Constant part; the value at the origin, nonnegative.
    pub r: f64,
}

/// Discounted state moments under a stable policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedMoments {
    /// `E[sum_t gamma^t x_t x_t']`, symmetric PSD.
    pub second_moment: Matrix,
    /// `E[sum_t gamma^t x_t]`.
    pub mean: Vector,
    /// `sum_t gamma^t = 1 / (1 - gamma)`.
    pub beta: f64,
}

/// Exact gradient of the cost with respect to `(K, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    /// Gradient with respect to K, k x n.
    pub dk: Matrix,
    /// Gradient with respect to g, dimension k.
    pub dg: Vector,
}

impl GradPair {
    /// Frobenius norm of the stacked `(dK, dg)` gradient.
    pub fn norm(&self) -> f64 {
        let fk = self.dk.frobenius_norm();
        let fg = self.dg.norm();
        (fk * fk + fg * fg).sqrt()
    }
}

/// Sums the series `X = sum_j A^j C (A')^j`, the unique solution of
/// `X = C + A X A'`, by squaring: each step doubles the number of series
/// terms covered, so convergence is fast even when `rho(A)` is close to 1.
fn lyapunov_sum(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    let mut x = c.clone();
    let mut m = a.clone();
    for _ in 0..DOUBLING_CAP {
        let delta = m.matmul(&x).matmul(&m.transpose());
        x = x.add(&delta);
        if !x.is_finite() {
            return Err(Error::NonConvergence);
        }
        if delta.max_abs() <= FIXED_POINT_TOL * (1.0 + x.max_abs()) {
            return Ok(x);
        }
        m = m.matmul(&m);
    }
    Err(Error::NonConvergence)
}

/// Symmetrizes a nearly-symmetric matrix (kills round-off drift).
fn symmetrize(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).scale(0.5)
}

/// Value-function coefficients for a stable policy.
///
/// `P` solves the discounted Lyapunov equation
/// `P = Q + K'RK + gamma (A+BK)' P (A+BK)`; `q` and `r` follow from their
/// closed forms.
pub fn solve_policy_value(prob: &LqrProblem, agent: usize, policy: &Policy) -> Result<ValueParams> {
    if !is_stable(prob, &policy.k) {
        return Err(Error::UnstablePolicy);
    }
    let target = &prob.targets[agent];
    let gamma = prob.gamma;
    let closed = prob.a.add(&prob.b.matmul(&policy.k)); // A + BK
    let cost = prob.q.add(&policy.k.transpose().matmul(&prob.r).matmul(&policy.k));
    // P = (Q + K'RK) + gamma M' P M  =>  lyapunov_sum with A := sqrt(gamma) M'
    let p = symmetrize(&lyapunov_sum(&closed.transpose().scale(gamma.sqrt()), &cost)?);

    let bg = prob.b.matvec(&policy.g);
    // q = (I - gamma M')^{-1} (-Q x* + K'Rg + gamma M' P Bg)
    let rhs = prob
        .q
        .matvec(target)
        .scale(-1.0)
        .add(&policy.k.transpose().matvec(&prob.r.matvec(&policy.g)))
        .add(&closed.transpose().matvec(&p.matvec(&bg)).scale(gamma));
    let lhs = Matrix::identity(prob.n()).sub(&closed.transpose().scale(gamma));
    let q = solve_linear_vec(&lhs, &rhs)?;

    let r = (target.dot(&prob.q.matvec(target))
        + policy.g.dot(&prob.r.matvec(&policy.g))
        + gamma * (bg.dot(&p.matvec(&bg)) + 2.0 * bg.dot(&q)))
        / (1.0 - gamma);
    Ok(ValueParams { p, q, r })
}

/// Expected cost `tr(P Sigma) + r` under the Gaussian initial sampler.
pub fn expected_cost(prob: &LqrProblem, agent: usize, policy: &Policy) -> Result<f64> {
    let vp = solve_policy_value(prob, agent, policy)?;
    Ok(vp.p.matmul(&prob.sigma).trace() + vp.r)
}

/// Exact infinite-horizon cost from a specific initial state.
pub fn sample_cost(prob: &LqrProblem, agent: usize, policy: &Policy, x0: &Vector) -> Result<f64> {
    let vp = solve_policy_value(prob, agent, policy)?;
    Ok(value_at(&vp, x0))
}

/// Evaluates `x' P x + 2 x' q + r` for already-computed coefficients.
pub fn value_at(vp: &ValueParams, x: &Vector) -> f64 {
    x.dot(&vp.p.matvec(x)) + 2.0 * x.dot(&vp.q) + vp.r
}

/// Discounted state moments under a stable policy.
///
/// The covariance part solves `S = Sigma + gamma M S M'`. The mean part is
/// `gamma/(1-gamma) (I - gamma M)^{-1} B g` (the discounted sum of the
/// deterministic mean recursion `mu_{t+1} = M mu_t + Bg`, `mu_0 = 0`), and
/// the mean-outer-product contribution to the second moment solves its
/// own discounted Lyapunov equation. Both are cross-checked against
/// brute-force truncated series in the tests.
pub fn discounted_moments(
    prob: &LqrProblem,
    _agent: usize,
    policy: &Policy,
) -> Result<DiscountedMoments> {
    if !is_stable(prob, &policy.k) {
        return Err(Error::UnstablePolicy);
    }
    let gamma = prob.gamma;
    let beta = 1.0 / (1.0 - gamma);
    let closed = prob.a.add(&prob.b.matmul(&policy.k));
    let bg = prob.b.matvec(&policy.g);

    // covariance part: Sigma_K = Sigma + gamma M Sigma_K M'
    let cov = lyapunov_sum(&closed.scale(gamma.sqrt()), &prob.sigma)?;

    // mean = sum_t gamma^t mu_t = gamma beta (I - gamma M)^{-1} Bg
    let lhs = Matrix::identity(prob.n()).sub(&closed.scale(gamma));
    let mean = solve_linear_vec(&lhs, &bg)?.scale(gamma * beta);

    // mean-squared part W = sum_t gamma^t mu_t mu_t' solves
    // W = D + gamma M W M' with
    // D = gamma (M mean (Bg)' + Bg mean' M') + gamma beta (Bg)(Bg)'
    let m_mean = closed.matvec(&mean);
    let d = Matrix::outer(&m_mean, &bg)
        .add(&Matrix::outer(&bg, &m_mean))
        .scale(gamma)
        .add(&Matrix::outer(&bg, &bg).scale(gamma * beta));
    let w = lyapunov_sum(&closed.scale(gamma.sqrt()), &d)?;

    Ok(DiscountedMoments { second_moment: symmetrize(&cov.add(&w)), mean, beta })
}

/// Exact gradient of the expected cost with respect to `(K, g)`:
/// `dK = 2 C_K S + 2 d mu'` and `dg = 2 C_K mu + 2 beta d`, where
/// `C_K = RK + gamma B'P(BK + A)`, `d = Rg + gamma B'PBg + gamma B'q`,
/// `S` is the discounted second moment and `mu` the discounted mean.
pub fn exact_gradient(prob: &LqrProblem, agent: usize, policy: &Policy) -> Result<GradPair> {
    let vp = solve_policy_value(prob, agent, policy)?;
    let moments = discounted_moments(prob, agent, policy)?;
    let gamma = prob.gamma;
    let bt = prob.b.transpose();
    let closed = prob.a.add(&prob.b.matmul(&policy.k));
    let c_k = prob
        .r
        .matmul(&policy.k)
        .add(&bt.matmul(&vp.p).matmul(&closed).scale(gamma));
    let bg = prob.b.matvec(&policy.g);
    let d = prob
        .r
        .matvec(&policy.g)
        .add(&bt.matvec(&vp.p.matvec(&bg)).scale(gamma))
        .add(&bt.matvec(&vp.q).scale(gamma));

    let dk = c_k
        .matmul(&moments.second_moment)
        .scale(2.0)
        .add(&Matrix::outer(&d, &moments.mean).scale(2.0));
    let dg = c_k.matvec(&moments.mean).scale(2.0).add(&d.scale(2.0 * moments.beta));
    Ok(GradPair { dk, dg })
}

/// Optimal controller and value function via discounted Riccati recursion.
///
/// Iterates `P <- Q - (gamma B'PA)'(R + gamma B'PB)^{-1}(gamma B'PA)
/// + gamma A'PA` from `P_0 = Q`; then `K* = -(R + gamma B'PB)^{-1} gamma
/// B'PA`; then the linear part by its own fixed point
/// `q <- -Q x* + gamma (A + BK*)' q` (contraction once P has converged);
/// then the constant part in closed form. `K*` does not depend on the
/// agent's target — only `g*` does.
pub fn solve_optimal(prob: &LqrProblem, agent: usize) -> Result<(Policy, ValueParams)> {
    let gamma = prob.gamma;
    let (at, bt) = (prob.a.transpose(), prob.b.transpose());
    let mut p = prob.q.clone();
    let mut converged = false;
    for _ in 0..FIXED_POINT_CAP {
        // gamma B'PA and R + gamma B'PB
        let bpa = bt.matmul(&p).matmul(&prob.a).scale(gamma);
        let rbpb = prob.r.add(&bt.matmul(&p).matmul(&prob.b).scale(gamma));
        let sol = crate::numerics::solve_linear(&rbpb, &bpa)?;
        let next = prob
            .q
            .sub(&bpa.transpose().matmul(&sol))
            .add(&at.matmul(&p).matmul(&prob.a).scale(gamma));
        let next = symmetrize(&next);
        let delta = next.sub(&p).max_abs();
        p = next;
        if !p.is_finite() {
            return Err(Error::NonConvergence);
        }
        if delta <= FIXED_POINT_TOL * (1.0 + p.max_abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence);
    }

    let bpa = bt.matmul(&p).matmul(&prob.a).scale(gamma);
    let rbpb = prob.r.add(&bt.matmul(&p).matmul(&prob.b).scale(gamma));
    let k_star = crate::numerics::solve_linear(&rbpb, &bpa)?.scale(-1.0);
    if !is_stable(prob, &k_star) {
        return Err(Error::NonConvergence);
    }

    // q = -Q x* + gamma (A + BK*)' q, a contraction since
    // gamma rho(A+BK*) < sqrt(gamma) < 1.
    let target = &prob.targets[agent];
    let closed_t = prob.a.add(&prob.b.matmul(&k_star)).transpose().scale(gamma);
    let neg_qx = prob.q.matvec(target).scale(-1.0);
    let mut q = neg_qx.clone();
    let mut q_converged = false;
    for _ in 0..FIXED_POINT_CAP {
        let next = neg_qx.add(&closed_t.matvec(&q));
        let delta = next.sub(&q).max_abs();
        q = next;
        if delta <= FIXED_POINT_TOL * (1.0 + q.max_abs()) {
            q_converged = true;
            break;
        }
    }
    if !q_converged {
        return Err(Error::NonConvergence);
    }

    let bq = bt.matvec(&q).scale(gamma);
    let g_star = crate::numerics::solve_linear_vec(&rbpb, &bq)?.scale(-1.0);
    let r_star =
        (target.dot(&prob.q.matvec(target)) - bq.dot(&crate::numerics::solve_linear_vec(&rbpb, &bq)?))
            / (1.0 - gamma);

    Ok((Policy::new(k_star, g_star), ValueParams { p, q, r: r_star }))
}

/// Checks the gradient-domination inequality
/// `J(K,g) - J* <= C* / (4 min(alpha,1)^2 sigma_min(R)) ||grad J||_F^2`
/// with `C* = max(||Sigma*||_2 + ||rho*||, beta + ||rho*||)` computed from
/// the optimal policy's discounted moments. Returns `(lhs, rhs, holds)`.
pub fn check_gradient_domination(
    prob: &LqrProblem,
    agent: usize,
    policy: &Policy,
) -> Result<(f64, f64, bool)> {
    let (opt_policy, _) = solve_optimal(prob, agent)?;
    let j_star = expected_cost(prob, agent, &opt_policy)?;
    let j = expected_cost(prob, agent, policy)?;
    let lhs = j - j_star;

    let opt_moments = discounted_moments(prob, agent, &opt_policy)?;
    let sigma_star_norm = spectral_radius(&opt_moments.second_moment)?;
    let rho_star_norm = opt_moments.mean.norm();
    let c_star = (sigma_star_norm + rho_star_norm).max(opt_moments.beta + rho_star_norm);

    let alpha = smallest_eigenvalue_sym(&prob.sigma)?;
    let sigma_min_r = smallest_eigenvalue_sym(&prob.r)?;
    let mu = c_star / (4.0 * alpha.min(1.0).powi(2) * sigma_min_r);

    let grad = exact_gradient(prob, agent, policy)?;
    let rhs = mu * grad.norm().powi(2);
    Ok((lhs, rhs, lhs <= rhs + 1e-9))
}
