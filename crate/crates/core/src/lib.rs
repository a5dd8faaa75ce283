//! Federated model-free LQR tracking.
//!
//! A library for learning affine tracking controllers `u = Kx + g` for
//! discounted LQR problems without access to the system matrices. Multiple
//! agents share the same dynamics and cost structure but track different
//! targets; they learn with zeroth-order policy gradient and periodically
//! average their `K` matrices.
//!
//! Module layout:
//! - [`numerics`]: dense matrix/vector kernel (solves, spectral radius)
//! - [`lqr`]: problem definition, trajectory simulation, rollout costs
//! - [`analytic`]: exact value functions, gradients, moments, and the
//!   discounted Riccati solution (used as ground-truth oracles)
//! - [`zeroth_order`]: one-point and two-point gradient estimators
//! - [`trainers`]: the federated algorithm and the independent benchmark
//! - [`cartpole`]: nonlinear cart-inverted-pendulum environment
//! - [`harness`]: experiment drivers, config/CSV plumbing

pub mod analytic;
pub mod cartpole;
mod error;
pub mod harness;
pub mod lqr;
pub mod numerics;
pub mod rng;
pub mod trainers;
pub mod zeroth_order;

pub use error::{Error, Result};
pub use lqr::{InitSampler, LqrProblem, Policy};
pub use numerics::{Matrix, Vector};
