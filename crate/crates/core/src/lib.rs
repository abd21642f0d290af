//! Multi-stage noisy screening under a capacity constraint.
//!
//! An element with latent impact `v` survives stage `i` when its noisy score
//! `v + n_i` clears the threshold `t_i`. This crate computes the law of the
//! impact among survivors exactly (factored densities plus quadrature) and
//! empirically (Monte Carlo), solves stationary threshold strategies, and
//! compares screening designs by first-order stochastic dominance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod screening;

pub use distributions::{make_piecewise_linear, make_uniform, sum_survivor, BoundedDistribution, NoiseSpec};
pub use error::{Result, ScreenError};
pub use screening::{FactorizedPosterior, ScreeningProblem, StrategyKind, ThresholdStrategy};
