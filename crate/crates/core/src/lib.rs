//! Optimal dividend payout for an insurer whose claims arrive as a Cox
//! process with Poisson shot-noise intensity.
//!
//! The crate solves the discretized HJB equation on the grid of surplus
//! levels `n p delta` and intensity levels `lambda_floor + m Delta`, extracts
//! the action / non-action partition, and checks the result against an
//! exact Monte-Carlo simulation of the controlled process.

// Negated comparisons reject NaN inputs along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod simulator;
pub mod solver;

pub use baseline::{compare_surfaces, solve_cl, CLConfig, CLSolution, Comparison, ExpectedOrder, PremiumMode};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use grid::{Crossing, IntensityGrid, Projection, StateGrid, SurplusGrid};
pub use model::{DistributionSpec, ModelParams, RiskDynamics};
pub use simulator::{evaluate_policy_mc, MCEstimate};
pub use solver::{
    build_kernel, refine_check, solve, truncation_check, Action, HjbSolver, KernelRow, PolicyPartition, RefineReport,
    Resolution, RowShape, Solution, SolverConfig, TruncationReport, ValueSurface,
};
