//! Classical constant-intensity (Cramér-Lundberg) dividend problem, solved
//! as the degenerate case of the main solver: no catastrophes and a single
//! intensity level.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::grid::{IntensityGrid, StateGrid, SurplusGrid};
use crate::model::{DistributionSpec, RiskDynamics};
use crate::solver::{solve, Action, Band, RowShape, Solution, SolverConfig, ValueSurface};

/// How the constant-intensity premium is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PremiumMode {
    /// Reuse a premium computed elsewhere, usually the shot-noise one.
    SameP { premium: f64 },
    /// `(1 + loading) E(U) lambda_const`.
    Reloaded { loading: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CLConfig {
    pub lambda_const: f64,
    pub premium_mode: PremiumMode,
    pub claim_law: DistributionSpec,
    pub discount: f64,
    pub delta: f64,
}

impl CLConfig {
    pub fn premium(&self) -> f64 {
        match self.premium_mode {
            PremiumMode::SameP { premium } => premium,
            PremiumMode::Reloaded { loading } => (1.0 + loading) * self.claim_law.mean() * self.lambda_const,
        }
    }

    pub fn dynamics(&self) -> Result<RiskDynamics> {
        if let PremiumMode::Reloaded { loading } = self.premium_mode {
            ensure_non_negative("loading", loading)?;
        }
        ensure_positive("lambda_const", self.lambda_const)?;
        RiskDynamics::constant_intensity(self.lambda_const, self.premium(), self.discount, self.claim_law)
    }

    pub fn grid(&self) -> Result<StateGrid> {
        let premium = self.premium();
        Ok(StateGrid::new(
            SurplusGrid::new(premium, self.discount, self.delta)?,
            // One level only; the spacing is never used.
            IntensityGrid::new(self.lambda_const, 1.0, 0)?,
        ))
    }

    /// Same model with `delta` chosen so the surplus step equals `step`.
    pub fn aligned_to(mut self, step: f64) -> Result<Self> {
        ensure_positive("step", step)?;
        self.delta = step / self.premium();
        Ok(self)
    }
}

/// `v(x)` on the surplus grid together with its action set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CLSolution {
    pub config: CLConfig,
    pub premium: f64,
    pub solution: Solution,
}

impl CLSolution {
    pub fn surplus(&self) -> &SurplusGrid {
        &self.solution.surface.grid().surplus
    }

    pub fn values(&self) -> &[f64] {
        self.solution.surface.row(0)
    }

    /// `v(x_n)`, extended linearly above the grid.
    pub fn value(&self, n: usize) -> f64 {
        self.solution.surface.value_ext(n, 0)
    }

    pub fn action(&self, n: usize) -> Action {
        self.solution.partition.label(n, 0)
    }

    pub fn pay_bands(&self) -> Vec<Band> {
        self.solution.partition.pay_bands(0)
    }

    pub fn shape(&self) -> RowShape {
        self.solution.partition.row_shape(0)
    }

    /// `max_n (v(x_n) - x_n)` on the grid.
    pub fn max_gain(&self) -> f64 {
        let sg = self.surplus();
        self.values()
            .iter()
            .enumerate()
            .map(|(n, v)| v - sg.x(n))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn solve_cl(config: &CLConfig, solver: &SolverConfig) -> Result<CLSolution> {
    let dynamics = config.dynamics()?;
    let grid = config.grid()?;
    let solution = solve(&dynamics, &grid, solver)?;
    Ok(CLSolution {
        config: *config,
        premium: dynamics.premium,
        solution,
    })
}

/// Sign the difference `V - V_CL` is expected to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOrder {
    /// `V >= V_CL`.
    AtLeast,
    /// `V <= V_CL`.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub x: f64,
    pub value: f64,
    pub value_cl: f64,
    pub difference: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub lambda: f64,
    pub expected: ExpectedOrder,
    pub slack: f64,
    pub rows: Vec<ComparisonRow>,
    pub violations: usize,
    /// Largest amount by which the expected order is broken (0 if never).
    pub worst_violation: f64,
}

/// `V(x_n, lambda) - V_CL(x_n)` on every surplus point of `v`.
///
/// A row is a violation when the difference has the wrong sign by more than
/// `slack`. Off-grid intensities take the value of the next grid level up.
pub fn compare_surfaces(
    v: &ValueSurface,
    cl: &CLSolution,
    lambda: f64,
    expected: ExpectedOrder,
    slack: f64,
) -> Result<Comparison> {
    let sg = &v.grid().surplus;
    let cl_step = cl.surplus().step();
    if (sg.step() - cl_step).abs() > 1e-12 * sg.step() {
        return Err(Error::GridMismatch(format!(
            "surplus steps differ: {} versus {cl_step}",
            sg.step()
        )));
    }
    let mut rows = Vec::with_capacity(sg.len());
    let mut worst: f64 = 0.0;
    for n in 0..sg.len() {
        let x = sg.x(n);
        let value = v.evaluate(x, lambda)?;
        let value_cl = cl.value(n);
        let difference = value - value_cl;
        let signed = match expected {
            ExpectedOrder::AtLeast => -difference,
            ExpectedOrder::AtMost => difference,
        };
        let violation = signed > slack;
        worst = worst.max(signed);
        rows.push(ComparisonRow {
            n,
            x,
            value,
            value_cl,
            difference,
            violation,
        });
    }
    let violations = rows.iter().filter(|r| r.violation).count();
    Ok(Comparison {
        lambda,
        expected,
        slack,
        rows,
        violations,
        worst_violation: worst,
    })
}
