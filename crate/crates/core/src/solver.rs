//! Discrete HJB operators on the product grid and the value iteration that
//! solves `max{hold, pay, finish}(W) = W`.
//!
//! The hold operator integrates one no-dividend window of length `delta`
//! exactly in the claim and jump sizes (cdf differences and partial
//! expectations) and by Gauss-Legendre quadrature in time. The claim
//! intensity during the window is the ceiling projection of the decaying
//! intensity, which is piecewise constant, so the survival factor is an
//! exact exponential on every quadrature piece.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::grid::StateGrid;
use crate::model::RiskDynamics;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once the sup-norm change of a sweep is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss-Legendre nodes per smooth piece of the hold window.
    pub quadrature_order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1_000_000,
            quadrature_order: 16,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("tol", self.tol)?;
        if self.max_iter == 0 || self.quadrature_order == 0 {
            return Err(Error::InvalidParameter {
                name: "solver",
                reason: "max_iter and quadrature_order must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Local control action of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Pay nothing for one window.
    Hold,
    /// Pay a lump `p delta` immediately.
    Pay,
    /// Pay the whole surplus and close.
    Finish,
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hold" => Ok(Action::Hold),
            "pay" => Ok(Action::Pay),
            "finish" => Ok(Action::Finish),
            other => Err(Error::Domain(format!("unknown action `{other}`"))),
        }
    }
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Hold => "hold",
            Action::Pay => "pay",
            Action::Finish => "finish",
        }
    }
}

/// Value function on the grid plus its off-grid extension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSurface {
    grid: StateGrid,
    /// Row-major in `m`: `values[m * (n_max + 1) + n]`.
    values: Vec<f64>,
}

impl ValueSurface {
    pub fn from_fn(grid: StateGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let nx = grid.surplus.len();
        let values = (0..grid.cells()).map(|i| f(i % nx, i / nx)).collect();
        Self { grid, values }
    }

    /// `W(n, m) = x_n`, the value of closing at once.
    pub fn finish_everywhere(grid: StateGrid) -> Self {
        Self::from_fn(grid, |n, _| grid.surplus.x(n))
    }

    pub fn from_values(grid: StateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[m * self.grid.surplus.len() + n]
    }

    /// Row `W(., m)`.
    pub fn row(&self, m: usize) -> &[f64] {
        let nx = self.grid.surplus.len();
        &self.values[m * nx..(m + 1) * nx]
    }

    /// Grid value with the boundary rules: linear in `x` above `n_max`,
    /// `W = x` above `m_max`.
    pub fn value_ext(&self, n: usize, m: usize) -> f64 {
        let s = &self.grid.surplus;
        if m > self.grid.intensity.m_max() {
            return s.x(n);
        }
        if n > s.n_max() {
            return self.get(s.n_max(), m) + s.x(n) - s.x(s.n_max());
        }
        self.get(n, m)
    }

    /// Value at an arbitrary state: floor projection in surplus (the
    /// remainder is paid out), ceiling projection in intensity.
    pub fn evaluate(&self, x: f64, lam: f64) -> Result<f64> {
        let s = &self.grid.surplus;
        let n = s.rho(x)?.index.min(s.n_max());
        let m = self.grid.intensity.sigma(lam)?;
        if m.overflow {
            return Ok(x);
        }
        Ok(self.get(n, m.index) + x - s.x(n))
    }

    pub fn sup_distance(&self, other: &ValueSurface) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Maximal run `start..=end` of `Pay` cells in one intensity row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
}

/// Shape of the action set in one intensity row.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowShape {
    /// Upward-closed action set `{n >= first_pay}`; surplus is paid down to
    /// `level = x_{first_pay - 1}`.
    Barrier { first_pay: usize, level: f64 },
    /// Any other action set, as maximal runs of `Pay`.
    Bands { bands: Vec<Band> },
}

/// One action label per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyPartition {
    grid: StateGrid,
    labels: Vec<Action>,
}

impl PolicyPartition {
    pub fn uniform(grid: StateGrid, action: Action) -> Self {
        let labels = (0..grid.cells())
            .map(|i| {
                if action == Action::Pay && i % grid.surplus.len() == 0 {
                    Action::Hold
                } else {
                    action
                }
            })
            .collect();
        Self { grid, labels }
    }

    pub fn from_fn(grid: StateGrid, f: impl Fn(usize, usize) -> Action) -> Result<Self> {
        let nx = grid.surplus.len();
        let labels: Vec<Action> = (0..grid.cells()).map(|i| f(i % nx, i / nx)).collect();
        if labels.iter().step_by(nx).any(|a| *a == Action::Pay) {
            return Err(Error::Domain("the pay action is not available at zero surplus".into()));
        }
        Ok(Self { grid, labels })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[Action] {
        &self.labels
    }

    pub fn label(&self, n: usize, m: usize) -> Action {
        self.labels[m * self.grid.surplus.len() + n]
    }

    /// Label at an off-grid intensity: `(lambda_{m-1}, lambda_m]` shares the
    /// label of `lambda_m`; beyond the grid the business is closed.
    pub fn label_at(&self, n: usize, lam: f64) -> Result<Action> {
        let m = self.grid.intensity.sigma(lam)?;
        if m.overflow {
            return Ok(Action::Finish);
        }
        if n > self.grid.surplus.n_max() {
            return Ok(Action::Pay);
        }
        Ok(self.label(n, m.index))
    }

    pub fn pay_bands(&self, m: usize) -> Vec<Band> {
        let nx = self.grid.surplus.len();
        let row = &self.labels[m * nx..(m + 1) * nx];
        let mut bands = Vec::new();
        let mut start = None;
        for (n, a) in row.iter().enumerate() {
            match (a, start) {
                (Action::Pay, None) => start = Some(n),
                (Action::Pay, Some(_)) => {}
                (_, Some(s)) => {
                    bands.push(Band { start: s, end: n - 1 });
                    start = None;
                }
                (_, None) => {}
            }
        }
        if let Some(s) = start {
            bands.push(Band { start: s, end: nx - 1 });
        }
        bands
    }

    pub fn row_shape(&self, m: usize) -> RowShape {
        let bands = self.pay_bands(m);
        match bands.as_slice() {
            [only] if only.end == self.grid.surplus.n_max() => RowShape::Barrier {
                first_pay: only.start,
                level: self.grid.surplus.x(only.start - 1),
            },
            _ => RowShape::Bands { bands },
        }
    }

    pub fn count(&self, action: Action) -> usize {
        self.labels.iter().filter(|a| **a == action).count()
    }
}

/// Claim-arrival part of a kernel row for one constant-intensity segment:
/// weight onto `(j, m)` for `j = 0..weights.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimBlock {
    pub m: usize,
    pub weights: Vec<f64>,
}

/// Discount-weighted transition law of one hold window started at `(n, m)`.
///
/// `hold(W) = survival_weight * W(n+1, survival_m) + sum claim weights * W
/// + sum jump weights * W(n, .) + overflow_weight * x_n + dividends`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRow {
    pub n: usize,
    pub m: usize,
    pub survival_weight: f64,
    pub survival_m: usize,
    pub claim_blocks: Vec<ClaimBlock>,
    /// Intensity index of `jump_weights[0]`; targets stay at surplus `n`.
    pub jump_start: usize,
    pub jump_weights: Vec<f64>,
    /// Weight of catastrophes that push the intensity beyond the grid.
    pub overflow_weight: f64,
    /// Expected discounted lump dividends paid inside the window.
    pub dividends: f64,
}

impl KernelRow {
    pub fn total_weight(&self) -> f64 {
        self.survival_weight
            + self.claim_blocks.iter().flat_map(|b| b.weights.iter()).sum::<f64>()
            + self.jump_weights.iter().sum::<f64>()
            + self.overflow_weight
    }

    /// The part of the hold value that does not depend on `W`.
    pub fn constant(&self, x_n: f64) -> f64 {
        self.dividends + self.overflow_weight * x_n
    }
}

/// Exact decomposition of the hold value at `(n, m)`.
pub fn build_kernel(dynamics: &RiskDynamics, grid: &StateGrid, n: usize, m: usize, quad: &GaussLegendre) -> KernelRow {
    let sg = &grid.surplus;
    let hg = &grid.intensity;
    let delta = sg.delta();
    let step = sg.step();
    let p = dynamics.premium;
    let q = dynamics.discount;
    let beta = dynamics.beta;
    let decay = dynamics.decay;
    let floor = hg.floor();
    let lambda_start = hg.lambda(m);
    let m_max = hg.m_max();

    let crossings = hg.decay_crossings(m, decay, delta);
    let survival_m = crossings.last().map_or(m, |c| c.index);

    // Piece boundaries: level crossings plus every time where a cdf argument
    // hits an atom of the claim or jump law.
    let mut cuts: Vec<f64> = crossings.iter().map(|c| c.time).collect();
    for c in dynamics.claim_law.atoms() {
        // x_n + p t - x_k = c  <=>  t = (c - i step) / p with i = n - k.
        let base = (c / step).floor() as i64;
        for i in (base - 1)..=(base + 1) {
            if i < -1 || i > n as i64 {
                continue;
            }
            cuts.push((c - i as f64 * step) / p);
        }
    }
    if beta > 0.0 && m > 0 {
        let excess = lambda_start - floor;
        for c in dynamics.jump_law.atoms() {
            for target in 0..=m_max {
                let gap = (hg.lambda(target) - floor) - c;
                if gap > 0.0 && gap < excess {
                    cuts.push((excess / gap).ln() / decay);
                }
            }
        }
    }
    cuts.retain(|t| *t > 0.0 && *t < delta);
    cuts.push(0.0);
    cuts.push(delta);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * delta);

    let mut claim_blocks: Vec<ClaimBlock> = Vec::new();
    let mut jump_weights = vec![0.0; m_max + 1];
    let mut overflow_weight = 0.0;
    let mut dividends = 0.0;

    let mut cdf_at = vec![0.0; n + 2];
    let mut partial_at = vec![0.0; n + 2];

    // Survival factor e^{-(q+beta) t - int_0^t lambda_hat} at the start of the piece.
    let mut survival = 1.0;
    let mut segment = 0usize;
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        while segment < crossings.len() && crossings[segment].time <= a {
            segment += 1;
        }
        let seg_m = if segment == 0 { m } else { crossings[segment - 1].index };
        let intensity = hg.lambda(seg_m);
        let killing = q + beta + intensity;

        if intensity > 0.0 {
            let block = match claim_blocks.last_mut() {
                Some(blk) if blk.m == seg_m => blk,
                _ => {
                    claim_blocks.push(ClaimBlock {
                        m: seg_m,
                        weights: vec![0.0; n + 1],
                    });
                    claim_blocks.last_mut().unwrap()
                }
            };
            for (t, w) in quad.mapped(a, b) {
                let weight = w * intensity * survival * (-killing * (t - a)).exp();
                let z = sg.x(n) + p * t;
                for k in 0..=n + 1 {
                    let arg = z - sg.x(k);
                    cdf_at[k] = dynamics.claim_law.cdf_clamped(arg);
                    partial_at[k] = dynamics.claim_law.lower_partial_clamped(arg);
                }
                let mut paid = 0.0;
                for j in 0..=n {
                    // surplus after the claim lands in [x_j, x_{j+1})
                    let prob = cdf_at[j] - cdf_at[j + 1];
                    let partial = partial_at[j] - partial_at[j + 1];
                    block.weights[j] += weight * prob;
                    paid += (z - sg.x(j)) * prob - partial;
                }
                dividends += weight * paid.max(0.0);
            }
        }

        if beta > 0.0 {
            for (t, w) in quad.mapped(a, b) {
                let weight = w * beta * survival * (-killing * (t - a)).exp();
                let lam_c = floor + (-decay * t).exp() * (lambda_start - floor);
                let lo = hg.ceil_index(lam_c).min(m_max + 1);
                let mut prev = dynamics.jump_law.cdf_clamped(hg.lambda(lo) - lam_c);
                if lo <= m_max {
                    jump_weights[lo] += weight * prev;
                }
                for (target, slot) in jump_weights.iter_mut().enumerate().skip(lo + 1) {
                    let cur = dynamics.jump_law.cdf_clamped(hg.lambda(target) - lam_c);
                    *slot += weight * (cur - prev);
                    prev = cur;
                }
                let below_top = if lo <= m_max { prev } else { 0.0 };
                overflow_weight += weight * (1.0 - below_top);
                dividends += weight * p * t;
            }
        }

        survival *= (-killing * (b - a)).exp();
    }

    let jump_start = jump_weights.iter().position(|w| *w != 0.0).unwrap_or(0);
    let jump_end = jump_weights.iter().rposition(|w| *w != 0.0).map_or(0, |e| e + 1);
    let jump_weights = if jump_end > jump_start {
        jump_weights[jump_start..jump_end].to_vec()
    } else {
        Vec::new()
    };

    KernelRow {
        n,
        m,
        survival_weight: survival,
        survival_m,
        claim_blocks,
        jump_start,
        jump_weights,
        overflow_weight,
        dividends,
    }
}

/// Per-sweep diagnostics of the value iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iterations: usize,
    pub final_change: f64,
    pub sup_changes: Vec<f64>,
    /// Largest decrease `W_l - W_{l+1}` seen in any sweep; the iteration
    /// is monotone so this is rounding noise only.
    pub max_decrease: f64,
    /// Sweeps at which the argmax partition changed.
    pub partition_changes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub surface: ValueSurface,
    pub partition: PolicyPartition,
    pub log: IterationLog,
}

/// Precomputed hold kernels plus the three operators on one grid.
#[derive(Debug, Clone)]
pub struct HjbSolver {
    dynamics: RiskDynamics,
    grid: StateGrid,
    config: SolverConfig,
    kernel: Vec<KernelRow>,
}

impl HjbSolver {
    pub fn new(dynamics: RiskDynamics, grid: StateGrid, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        check_consistency(&dynamics, &grid)?;
        let quad = GaussLegendre::new(config.quadrature_order);
        let nx = grid.surplus.len();
        let kernel = (0..grid.cells())
            .into_par_iter()
            .map(|i| build_kernel(&dynamics, &grid, i % nx, i / nx, &quad))
            .collect();
        Ok(Self {
            dynamics,
            grid,
            config,
            kernel,
        })
    }

    pub fn dynamics(&self) -> &RiskDynamics {
        &self.dynamics
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn kernel_row(&self, n: usize, m: usize) -> &KernelRow {
        &self.kernel[m * self.grid.surplus.len() + n]
    }

    /// Value of holding for one window and then continuing with `w`.
    pub fn op_hold(&self, w: &ValueSurface, n: usize, m: usize) -> f64 {
        let row = self.kernel_row(n, m);
        let x_n = self.grid.surplus.x(n);
        let mut total = row.constant(x_n);
        total += row.survival_weight * w.value_ext(n + 1, row.survival_m);
        for block in &row.claim_blocks {
            let target = w.row(block.m);
            total += block.weights.iter().zip(target).map(|(a, b)| a * b).sum::<f64>();
        }
        for (k, weight) in row.jump_weights.iter().enumerate() {
            total += weight * w.get(n, row.jump_start + k);
        }
        total
    }

    /// `W(n-1, m) + p delta`; unavailable at `n = 0`.
    pub fn op_pay(&self, w: &ValueSurface, n: usize, m: usize) -> Option<f64> {
        (n >= 1).then(|| w.get(n - 1, m) + self.grid.surplus.step())
    }

    pub fn op_finish(&self, n: usize) -> f64 {
        self.grid.surplus.x(n)
    }

    /// `max{hold, pay, finish}` at one cell with tie order pay, hold, finish.
    pub fn best_action(&self, w: &ValueSurface, n: usize, m: usize) -> (f64, Action) {
        let hold = self.op_hold(w, n, m);
        let finish = self.op_finish(n);
        if let Some(pay) = self.op_pay(w, n, m) {
            if pay >= hold && pay >= finish {
                return (pay, Action::Pay);
            }
        }
        if hold >= finish {
            (hold, Action::Hold)
        } else {
            (finish, Action::Finish)
        }
    }

    /// One Jacobi sweep of the full operator.
    pub fn apply(&self, w: &ValueSurface) -> (ValueSurface, PolicyPartition) {
        let nx = self.grid.surplus.len();
        let (values, labels): (Vec<f64>, Vec<Action>) = (0..self.grid.cells())
            .into_par_iter()
            .map(|i| self.best_action(w, i % nx, i / nx))
            .unzip();
        (
            ValueSurface {
                grid: self.grid,
                values,
            },
            PolicyPartition {
                grid: self.grid,
                labels,
            },
        )
    }

    /// `sup |T(W) - W|` over the grid.
    pub fn residual(&self, w: &ValueSurface) -> f64 {
        self.apply(w).0.sup_distance(w)
    }

    /// Value iteration from `W = x` until the sweep change is below `tol`
    /// and the partition is stable.
    pub fn solve(&self) -> Result<Solution> {
        let mut current = ValueSurface::finish_everywhere(self.grid);
        let mut previous_labels: Option<PolicyPartition> = None;
        let mut log = IterationLog {
            iterations: 0,
            final_change: f64::INFINITY,
            sup_changes: Vec::new(),
            max_decrease: 0.0,
            partition_changes: Vec::new(),
        };
        for sweep in 1..=self.config.max_iter {
            let (next, labels) = self.apply(&current);
            let mut change: f64 = 0.0;
            let mut decrease: f64 = 0.0;
            for (new, old) in next.values.iter().zip(&current.values) {
                change = change.max((new - old).abs());
                decrease = decrease.max(old - new);
            }
            log.iterations = sweep;
            log.final_change = change;
            log.sup_changes.push(change);
            log.max_decrease = log.max_decrease.max(decrease);
            let stable = previous_labels.as_ref() == Some(&labels);
            if !stable {
                log.partition_changes.push(sweep);
            }
            current = next;
            if change < self.config.tol && stable {
                return Ok(Solution {
                    surface: current,
                    partition: labels,
                    log,
                });
            }
            previous_labels = Some(labels);
        }
        Err(Error::NonConvergence {
            iterations: log.iterations,
            last_change: log.final_change,
        })
    }
}

fn check_consistency(dynamics: &RiskDynamics, grid: &StateGrid) -> Result<()> {
    let sg = &grid.surplus;
    let expected_step = dynamics.premium * sg.delta();
    if (sg.step() - expected_step).abs() > 1e-12 * expected_step {
        return Err(Error::GridMismatch(format!(
            "surplus step {} differs from premium * delta = {expected_step}",
            sg.step()
        )));
    }
    if sg.x(sg.n_max()) < dynamics.payout_threshold() {
        return Err(Error::GridMismatch(format!(
            "surplus grid stops at {} below premium / discount = {}",
            sg.x(sg.n_max()),
            dynamics.payout_threshold()
        )));
    }
    if (grid.intensity.floor() - dynamics.lambda_floor).abs() > 1e-12 * (1.0 + dynamics.lambda_floor) {
        return Err(Error::GridMismatch(format!(
            "intensity grid floor {} differs from the model floor {}",
            grid.intensity.floor(),
            dynamics.lambda_floor
        )));
    }
    if grid.intensity.floor() == 0.0 && grid.intensity.m_max() == 0 {
        return Err(Error::InvalidParameter {
            name: "m_max",
            reason: "a zero intensity floor needs at least one positive intensity level".into(),
        });
    }
    Ok(())
}

/// Build the kernel and run value iteration.
pub fn solve(dynamics: &RiskDynamics, grid: &StateGrid, config: &SolverConfig) -> Result<Solution> {
    HjbSolver::new(*dynamics, *grid, *config)?.solve()
}

/// Grid resolution of one solve in a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolution {
    pub delta: f64,
    pub delta_lambda: f64,
    pub m_max: usize,
}

impl Resolution {
    pub fn grid(&self, dynamics: &RiskDynamics) -> Result<StateGrid> {
        Ok(StateGrid::new(
            crate::grid::SurplusGrid::new(dynamics.premium, dynamics.discount, self.delta)?,
            crate::grid::IntensityGrid::new(dynamics.lambda_floor, self.delta_lambda, self.m_max)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub coarse: Resolution,
    pub fine: Resolution,
    /// `sup |W_fine - W_coarse|` on the coarse cells.
    pub sup_diff: f64,
    /// `min (W_fine - W_coarse)` on the coarse cells.
    pub min_gain: f64,
    /// `W_coarse(n_max, 0)`, the scale differences are judged against.
    pub scale: f64,
    pub rel_tol: f64,
    /// Allowed numerical undershoot of the fine solve below the coarse one.
    pub slack: f64,
    pub passed: bool,
}

/// Solve at `(delta, Delta, m1)` and at `(delta/2, Delta/2, 2 m1)`, which
/// covers the same intensity range with finer cells, and compare on the
/// coarse cells (all of which are fine cells too).
///
/// Passes when `sup |W_fine - W_coarse| <= rel_tol * scale` and the fine
/// surface is nowhere below the coarse one by more than `slack`.
pub fn refine_check(
    dynamics: &RiskDynamics,
    coarse: Resolution,
    config: &SolverConfig,
    rel_tol: f64,
    slack: f64,
) -> Result<RefineReport> {
    let fine = Resolution {
        delta: coarse.delta / 2.0,
        delta_lambda: coarse.delta_lambda / 2.0,
        m_max: coarse.m_max * 2,
    };
    let coarse_sol = solve(dynamics, &coarse.grid(dynamics)?, config)?;
    let fine_sol = solve(dynamics, &fine.grid(dynamics)?, config)?;
    let cg = coarse_sol.surface.grid();

    let mut sup_diff: f64 = 0.0;
    let mut min_gain = f64::INFINITY;
    for m in 0..cg.intensity.len() {
        for n in 0..cg.surplus.len() {
            let gain = fine_sol.surface.value_ext(2 * n, 2 * m) - coarse_sol.surface.get(n, m);
            sup_diff = sup_diff.max(gain.abs());
            min_gain = min_gain.min(gain);
        }
    }
    let scale = coarse_sol.surface.get(cg.surplus.n_max(), 0);
    Ok(RefineReport {
        coarse,
        fine,
        sup_diff,
        min_gain,
        scale,
        rel_tol,
        slack,
        passed: sup_diff <= rel_tol * scale && min_gain >= -slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub base: Resolution,
    pub extended: Resolution,
    /// `sup |W_extended - W_base|` on the base cells.
    pub sup_diff: f64,
    pub scale: f64,
    pub rel_tol: f64,
    pub passed: bool,
    pub base_solution: Solution,
}

/// Re-solve with the intensity grid extended to `m_extended` levels and
/// compare on the cells of the base grid.
pub fn truncation_check(
    dynamics: &RiskDynamics,
    base: Resolution,
    m_extended: usize,
    config: &SolverConfig,
    rel_tol: f64,
) -> Result<TruncationReport> {
    let extended = Resolution {
        m_max: m_extended,
        ..base
    };
    let base_solution = solve(dynamics, &base.grid(dynamics)?, config)?;
    let ext = solve(dynamics, &extended.grid(dynamics)?, config)?;
    let bg = *base_solution.surface.grid();
    let mut sup_diff: f64 = 0.0;
    for m in 0..bg.intensity.len().min(m_extended + 1) {
        for n in 0..bg.surplus.len() {
            sup_diff = sup_diff.max((ext.surface.get(n, m) - base_solution.surface.get(n, m)).abs());
        }
    }
    let scale = base_solution.surface.get(bg.surplus.n_max(), 0);
    Ok(TruncationReport {
        base,
        extended,
        sup_diff,
        scale,
        rel_tol,
        passed: sup_diff <= rel_tol * scale,
        base_solution,
    })
}
