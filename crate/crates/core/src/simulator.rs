//! Exact path simulation of the shot-noise intensity and the controlled
//! surplus, used as an independent oracle for the solver.
//!
//! Two processes are simulated:
//! * the exact shot-noise model (moment checks), where claims are drawn by
//!   thinning against the intensity at the start of each inter-catastrophe
//!   segment, which is an upper bound because the intensity only decays
//!   between catastrophes;
//! * the grid model the solver is exact for, in which claims arrive with the
//!   intensity rounded up to the intensity grid and every decision epoch
//!   restarts the deterministic decay from the grid level of the current cell.
//!
//! Every path owns a ChaCha stream selected by its index, so estimates are
//! bit-identical for a given seed whatever the thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::StateGrid;
use crate::model::{ModelParams, RiskDynamics};
use crate::solver::{Action, PolicyPartition, ValueSurface};

/// Stream for path `index` under master `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A realised shot-noise intensity on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityPath {
    floor: f64,
    decay: f64,
    lambda0: f64,
    horizon: f64,
    /// Catastrophe times and intensity jumps, time-ordered.
    events: Vec<(f64, f64)>,
}

impl IntensityPath {
    pub fn new(floor: f64, decay: f64, lambda0: f64, horizon: f64, events: Vec<(f64, f64)>) -> Self {
        Self {
            floor,
            decay,
            lambda0,
            horizon,
            events,
        }
    }

    pub fn events(&self) -> &[(f64, f64)] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Right-continuous `lambda_t`.
    pub fn intensity(&self, t: f64) -> f64 {
        let mut excess = (self.lambda0 - self.floor) * (-self.decay * t).exp();
        for &(tk, y) in self.events.iter().take_while(|(tk, _)| *tk <= t) {
            excess += y * (-self.decay * (t - tk)).exp();
        }
        self.floor + excess
    }

    /// `int_a^b lambda_s ds`, closed form on each inter-jump segment.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut start = a;
        let mut excess = self.intensity(a) - self.floor;
        for &(tk, y) in self.events.iter().filter(|(tk, _)| *tk > a && *tk <= b) {
            total += segment_integral(self.floor, self.decay, excess, tk - start);
            excess = excess * (-self.decay * (tk - start)).exp() + y;
            start = tk;
        }
        total + segment_integral(self.floor, self.decay, excess, b - start)
    }

    /// Inter-catastrophe segments `(start, end, excess at start)`.
    fn segments(&self, horizon: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut start = 0.0;
        let mut excess = self.lambda0 - self.floor;
        for &(tk, y) in self.events.iter().take_while(|(tk, _)| *tk < horizon) {
            out.push((start, tk, excess));
            excess = excess * (-self.decay * (tk - start)).exp() + y;
            start = tk;
        }
        out.push((start, horizon, excess));
        out
    }
}

fn segment_integral(floor: f64, decay: f64, excess: f64, len: f64) -> f64 {
    floor * len - excess * (-decay * len).exp_m1() / decay
}

/// Catastrophes form a Poisson(beta) stream with jumps from the jump law.
pub fn simulate_intensity<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    lambda0: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<IntensityPath> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    if !(lambda0 >= dynamics.lambda_floor) {
        return Err(Error::Domain(format!(
            "initial intensity {lambda0} is below the floor {}",
            dynamics.lambda_floor
        )));
    }
    let mut events = Vec::new();
    if dynamics.beta > 0.0 {
        let gap = Exp::new(dynamics.beta).expect("beta > 0");
        let mut t = gap.sample(rng);
        while t <= horizon {
            events.push((t, dynamics.jump_law.sample(rng)));
            t += gap.sample(rng);
        }
    }
    Ok(IntensityPath::new(
        dynamics.lambda_floor,
        dynamics.decay,
        lambda0,
        horizon,
        events,
    ))
}

/// Claim times of the Cox process driven by `path`, by thinning.
pub fn simulate_claims<R: Rng + ?Sized>(path: &IntensityPath, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut claims = Vec::new();
    for (start, end, excess) in path.segments(horizon.min(path.horizon)) {
        let bound = path.floor + excess;
        if bound <= 0.0 {
            continue;
        }
        let gap = Exp::new(bound).expect("positive bound");
        let mut t = start + gap.sample(rng);
        while t < end {
            let lam = path.floor + excess * (-path.decay * (t - start)).exp();
            if rng.random::<f64>() * bound <= lam {
                claims.push(t);
            }
            t += gap.sample(rng);
        }
    }
    claims
}

/// Mean and standard error of a batch of independent samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Bound on discounted value ignored beyond the horizon (0 when the
    /// estimate has no horizon).
    pub truncation_bound: f64,
    pub horizon: f64,
    pub warning: Option<String>,
}

impl MCEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            truncation_bound: 0.0,
            horizon: f64::INFINITY,
            warning: None,
        }
    }

    /// `|mean - target| <= k * SE + truncation_bound`.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + self.truncation_bound
    }
}

/// Draws `n` samples with per-index streams and returns them in index order.
fn sample_in_parallel(n: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Vec<f64> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut path_rng(seed, i)))
        .collect()
}

/// Empirical versus closed-form moments of the intensity at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub t: f64,
    pub lambda0: f64,
    pub intensity: MCEstimate,
    pub intensity_exact: f64,
    pub cumulative: MCEstimate,
    pub cumulative_exact: f64,
}

/// MC averages of `lambda_t` and `Lambda_t` for the exact shot-noise model.
pub fn intensity_moments_mc(
    params: &ModelParams,
    lambda0: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    if n_paths < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    let dynamics = params.dynamics();
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let paths: Vec<IntensityPath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            simulate_intensity(
                &dynamics,
                lambda0,
                horizon.max(f64::MIN_POSITIVE),
                &mut path_rng(seed, i),
            )
        })
        .collect::<Result<_>>()?;
    times
        .iter()
        .map(|&t| {
            let lam: Vec<f64> = paths.iter().map(|p| p.intensity(t)).collect();
            let cum: Vec<f64> = paths.iter().map(|p| p.integral(0.0, t)).collect();
            Ok(MomentEstimate {
                t,
                lambda0,
                intensity: MCEstimate::from_samples(&lam),
                intensity_exact: params.mean_intensity(lambda0, t)?,
                cumulative: MCEstimate::from_samples(&cum),
                cumulative_exact: params.mean_cumulative_intensity(lambda0, t)?,
            })
        })
        .collect()
}

/// MC estimate of `E(N_t)`, the expected number of claims up to `t`.
pub fn claim_count_mc(params: &ModelParams, lambda0: f64, t: f64, n_paths: usize, seed: u64) -> Result<MCEstimate> {
    let dynamics = params.dynamics();
    let counts = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let path = simulate_intensity(&dynamics, lambda0, t, &mut rng)?;
            Ok(simulate_claims(&path, t, &mut rng).len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MCEstimate::from_samples(&counts))
}

/// How one hold window ended.
#[derive(Debug, Clone, Copy, PartialEq)]
enum WindowEnd {
    Elapsed { m_end: usize },
    Claim { time: f64, m_at: usize, size: f64 },
    Catastrophe { time: f64, intensity_after: f64 },
}

/// Samples one hold window started at intensity level `m` of the grid model.
fn sample_window<R: Rng + ?Sized>(dynamics: &RiskDynamics, grid: &StateGrid, m: usize, rng: &mut R) -> WindowEnd {
    let hg = &grid.intensity;
    let delta = grid.surplus.delta();
    let lambda_start = hg.lambda(m);
    let decayed = |t: f64| dynamics.decayed_intensity(lambda_start, t);
    let hat = |t: f64| hg.lambda(hg.ceil_index(decayed(t)));

    let catastrophe = if dynamics.beta > 0.0 {
        Exp::new(dynamics.beta).expect("beta > 0").sample(rng)
    } else {
        f64::INFINITY
    };
    let window = delta.min(catastrophe);

    // The rounded-up intensity is non-increasing inside the window, so its
    // starting value bounds it.
    let mut claim = None;
    if lambda_start > 0.0 {
        let gap = Exp::new(lambda_start).expect("positive intensity");
        let mut t = gap.sample(rng);
        while t < window {
            if rng.random::<f64>() * lambda_start <= hat(t) {
                claim = Some(t);
                break;
            }
            t += gap.sample(rng);
        }
    }
    match claim {
        Some(time) => WindowEnd::Claim {
            time,
            m_at: hg.ceil_index(decayed(time)),
            size: dynamics.claim_law.sample(rng),
        },
        None if catastrophe < delta => WindowEnd::Catastrophe {
            time: catastrophe,
            intensity_after: decayed(catastrophe) + dynamics.jump_law.sample(rng),
        },
        None => WindowEnd::Elapsed {
            m_end: hg.ceil_index(decayed(delta)),
        },
    }
}

/// Discounted payoff of one hold window at `(n, m)` followed by `w`.
///
/// Averaging this over many draws estimates the hold operator without any
/// of the solver's quadrature or exact expectations.
pub fn one_window_payoff<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    w: &ValueSurface,
    n: usize,
    m: usize,
    rng: &mut R,
) -> f64 {
    let grid = w.grid();
    let sg = &grid.surplus;
    let q = dynamics.discount;
    let x_n = sg.x(n);
    match sample_window(dynamics, grid, m, rng) {
        WindowEnd::Elapsed { m_end } => (-q * sg.delta()).exp() * w.value_ext(n + 1, m_end),
        WindowEnd::Claim { time, m_at, size } => {
            let y = x_n + dynamics.premium * time - size;
            if y < 0.0 {
                return 0.0;
            }
            let j = sg.floor_index(y);
            (-q * time).exp() * (w.value_ext(j, m_at) + y - sg.x(j))
        }
        WindowEnd::Catastrophe { time, intensity_after } => {
            let m_new = grid.intensity.ceil_index(intensity_after);
            (-q * time).exp() * (dynamics.premium * time + w.value_ext(n, m_new))
        }
    }
}

/// MC estimate of the hold operator at `(n, m)` against `w`.
pub fn one_window_mc(
    dynamics: &RiskDynamics,
    w: &ValueSurface,
    n: usize,
    m: usize,
    samples: usize,
    seed: u64,
) -> MCEstimate {
    let values = sample_in_parallel(samples, seed, |rng| one_window_payoff(dynamics, w, n, m, rng));
    MCEstimate::from_samples(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    Ruin,
    Finish,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Pay,
    Finish,
    WindowElapsed,
    Claim,
    Ruin,
    Catastrophe,
}

/// One step of a simulated controlled path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: TraceKind,
    /// Surplus and intensity indices after the event.
    pub n: usize,
    pub m: usize,
    /// Undiscounted dividend paid at this event.
    pub dividend: f64,
    /// Underlying decayed (or jumped) intensity at the event and its ceiling
    /// projection, when the event happens inside a hold window.
    pub intensity: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub discounted_dividends: f64,
    pub end: PathEnd,
    pub end_time: f64,
    /// Surplus when the path stopped.
    pub end_surplus: f64,
}

/// Plays the stationary grid strategy of `partition` from `(x0, m0)` until
/// ruin, closure or the horizon.
pub fn run_policy<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    x0_index: usize,
    m0_index: usize,
    horizon: f64,
    rng: &mut R,
) -> PathOutcome {
    run_policy_inner(dynamics, partition, x0_index, m0_index, horizon, rng, None)
}

/// [`run_policy`] that also records every event.
pub fn run_policy_traced<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    x0_index: usize,
    m0_index: usize,
    horizon: f64,
    rng: &mut R,
) -> (PathOutcome, Vec<TraceEvent>) {
    let mut trace = Vec::new();
    let out = run_policy_inner(dynamics, partition, x0_index, m0_index, horizon, rng, Some(&mut trace));
    (out, trace)
}

fn run_policy_inner<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    x0_index: usize,
    m0_index: usize,
    horizon: f64,
    rng: &mut R,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> PathOutcome {
    let grid = *partition.grid();
    let sg = grid.surplus;
    let hg = grid.intensity;
    let q = dynamics.discount;
    let p = dynamics.premium;
    let step = sg.step();
    let delta = sg.delta();

    let mut record = |e: TraceEvent| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(e);
        }
    };

    let mut t = 0.0;
    let mut n = x0_index;
    let mut m = m0_index;
    let mut total = 0.0;

    let stop = |total: f64, end: PathEnd, t: f64, n: usize| PathOutcome {
        discounted_dividends: total,
        end,
        end_time: t,
        end_surplus: sg.x(n),
    };

    loop {
        // Above the grid the excess is paid at once.
        while n > sg.n_max() {
            total += (-q * t).exp() * step;
            n -= 1;
            record(TraceEvent {
                time: t,
                kind: TraceKind::Pay,
                n,
                m,
                dividend: step,
                intensity: None,
            });
        }
        if m > hg.m_max() {
            let x = sg.x(n);
            total += (-q * t).exp() * x;
            record(TraceEvent {
                time: t,
                kind: TraceKind::Finish,
                n: 0,
                m,
                dividend: x,
                intensity: None,
            });
            return stop(total, PathEnd::Finish, t, 0);
        }
        if t >= horizon {
            return stop(total, PathEnd::Horizon, t, n);
        }
        match partition.label(n, m) {
            Action::Pay => {
                total += (-q * t).exp() * step;
                n -= 1;
                record(TraceEvent {
                    time: t,
                    kind: TraceKind::Pay,
                    n,
                    m,
                    dividend: step,
                    intensity: None,
                });
            }
            Action::Finish => {
                let x = sg.x(n);
                total += (-q * t).exp() * x;
                record(TraceEvent {
                    time: t,
                    kind: TraceKind::Finish,
                    n: 0,
                    m,
                    dividend: x,
                    intensity: None,
                });
                return stop(total, PathEnd::Finish, t, 0);
            }
            Action::Hold => match sample_window(dynamics, &grid, m, rng) {
                WindowEnd::Elapsed { m_end } => {
                    let lam = dynamics.decayed_intensity(hg.lambda(m), delta);
                    t += delta;
                    n += 1;
                    m = m_end;
                    record(TraceEvent {
                        time: t,
                        kind: TraceKind::WindowElapsed,
                        n,
                        m,
                        dividend: 0.0,
                        intensity: Some((lam, hg.lambda(m_end))),
                    });
                }
                WindowEnd::Claim { time, m_at, size } => {
                    let lam = dynamics.decayed_intensity(hg.lambda(m), time);
                    let y = sg.x(n) + p * time - size;
                    t += time;
                    if y < 0.0 {
                        record(TraceEvent {
                            time: t,
                            kind: TraceKind::Ruin,
                            n: 0,
                            m: m_at,
                            dividend: 0.0,
                            intensity: Some((lam, hg.lambda(m_at))),
                        });
                        return stop(total, PathEnd::Ruin, t, 0);
                    }
                    let j = sg.floor_index(y);
                    let paid = y - sg.x(j);
                    total += (-q * t).exp() * paid;
                    n = j;
                    m = m_at;
                    record(TraceEvent {
                        time: t,
                        kind: TraceKind::Claim,
                        n,
                        m,
                        dividend: paid,
                        intensity: Some((lam, hg.lambda(m_at))),
                    });
                }
                WindowEnd::Catastrophe { time, intensity_after } => {
                    t += time;
                    let paid = p * time;
                    total += (-q * t).exp() * paid;
                    m = hg.ceil_index(intensity_after);
                    let hat = if m <= hg.m_max() { hg.lambda(m) } else { f64::INFINITY };
                    record(TraceEvent {
                        time: t,
                        kind: TraceKind::Catastrophe,
                        n,
                        m,
                        dividend: paid,
                        intensity: Some((intensity_after, hat)),
                    });
                }
            },
        }
    }
}

/// Plays the grid strategy of `partition` on the exact shot-noise model:
/// the intensity is tracked continuously and only read through its ceiling
/// projection when a label is looked up.
///
/// This is an admissible strategy of the original problem, so its value is
/// a lower bound for the true optimal value at `(x_{x0_index}, lambda0)`.
pub fn run_policy_exact<R: Rng + ?Sized>(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    x0_index: usize,
    lambda0: f64,
    horizon: f64,
    rng: &mut R,
) -> PathOutcome {
    let grid = *partition.grid();
    let sg = grid.surplus;
    let q = dynamics.discount;
    let p = dynamics.premium;
    let step = sg.step();
    let delta = sg.delta();
    let catastrophe_gap = (dynamics.beta > 0.0).then(|| Exp::new(dynamics.beta).expect("beta > 0"));

    let mut t = 0.0;
    let mut n = x0_index;
    let mut lam = lambda0;
    let mut total = 0.0;
    let stop = |total: f64, end: PathEnd, t: f64, n: usize| PathOutcome {
        discounted_dividends: total,
        end,
        end_time: t,
        end_surplus: sg.x(n),
    };
    loop {
        while n > sg.n_max() {
            total += (-q * t).exp() * step;
            n -= 1;
        }
        if t >= horizon {
            return stop(total, PathEnd::Horizon, t, n);
        }
        let action = partition.label_at(n, lam).unwrap_or(Action::Finish);
        match action {
            Action::Pay => {
                total += (-q * t).exp() * step;
                n -= 1;
            }
            Action::Finish => {
                total += (-q * t).exp() * sg.x(n);
                return stop(total, PathEnd::Finish, t, 0);
            }
            Action::Hold => {
                let catastrophe = catastrophe_gap.map_or(f64::INFINITY, |g| g.sample(rng));
                let window = delta.min(catastrophe);
                // The intensity only decays inside the window.
                let mut claim = None;
                if lam > 0.0 {
                    let gap = Exp::new(lam).expect("positive intensity");
                    let mut s = gap.sample(rng);
                    while s < window {
                        if rng.random::<f64>() * lam <= dynamics.decayed_intensity(lam, s) {
                            claim = Some(s);
                            break;
                        }
                        s += gap.sample(rng);
                    }
                }
                match claim {
                    Some(s) => {
                        t += s;
                        lam = dynamics.decayed_intensity(lam, s);
                        let y = sg.x(n) + p * s - dynamics.claim_law.sample(rng);
                        if y < 0.0 {
                            return stop(total, PathEnd::Ruin, t, 0);
                        }
                        let j = sg.floor_index(y);
                        total += (-q * t).exp() * (y - sg.x(j));
                        n = j;
                    }
                    None if catastrophe < delta => {
                        t += catastrophe;
                        total += (-q * t).exp() * p * catastrophe;
                        lam = dynamics.decayed_intensity(lam, catastrophe) + dynamics.jump_law.sample(rng);
                    }
                    None => {
                        t += delta;
                        lam = dynamics.decayed_intensity(lam, delta);
                        n += 1;
                    }
                }
            }
        }
    }
}

/// MC value of the grid strategy of `partition` on the exact model, started
/// at surplus `x_{x0_index}` and intensity `lambda0`.
pub fn evaluate_policy_exact_mc(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    x0_index: usize,
    lambda0: f64,
    n_paths: usize,
    horizon: f64,
    seed: u64,
) -> Result<MCEstimate> {
    if n_paths < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    if !(lambda0 >= dynamics.lambda_floor) {
        return Err(Error::Domain(format!("initial intensity {lambda0} is below the floor")));
    }
    let grid = partition.grid();
    let values = sample_in_parallel(n_paths, seed, |rng| {
        run_policy_exact(dynamics, partition, x0_index, lambda0, horizon, rng).discounted_dividends
    });
    let mut est = MCEstimate::from_samples(&values);
    est.horizon = horizon;
    est.truncation_bound = truncation_bound(dynamics, grid, horizon);
    Ok(est)
}

/// Dividends ignored beyond `horizon`: the surplus never exceeds the top of
/// the grid and future premiums are worth at most `p / q`.
pub fn truncation_bound(dynamics: &RiskDynamics, grid: &StateGrid, horizon: f64) -> f64 {
    (-dynamics.discount * horizon).exp() * (grid.surplus.x(grid.surplus.n_max()) + dynamics.payout_threshold())
}

/// Smallest horizon whose truncation bound is below `rel_tol * probe_value`.
pub fn default_horizon(dynamics: &RiskDynamics, grid: &StateGrid, probe_value: f64, rel_tol: f64) -> f64 {
    let cap = grid.surplus.x(grid.surplus.n_max()) + dynamics.payout_threshold();
    let target = (rel_tol * probe_value).max(f64::MIN_POSITIVE);
    ((cap / target).ln() / dynamics.discount).max(grid.surplus.delta())
}

/// Relative truncation level above which an estimate carries a warning.
pub const TRUNCATION_WARNING_LEVEL: f64 = 1e-3;

/// MC value of the grid strategy of `partition` started at `cell`.
pub fn evaluate_policy_mc(
    dynamics: &RiskDynamics,
    partition: &PolicyPartition,
    cell: (usize, usize),
    n_paths: usize,
    horizon: f64,
    seed: u64,
) -> Result<MCEstimate> {
    if n_paths < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    let grid = partition.grid();
    if cell.0 > grid.surplus.n_max() || cell.1 > grid.intensity.m_max() {
        return Err(Error::Domain(format!("cell {cell:?} is outside the grid")));
    }
    let values = sample_in_parallel(n_paths, seed, |rng| {
        run_policy(dynamics, partition, cell.0, cell.1, horizon, rng).discounted_dividends
    });
    let mut est = MCEstimate::from_samples(&values);
    est.horizon = horizon;
    est.truncation_bound = truncation_bound(dynamics, grid, horizon);
    if est.truncation_bound > TRUNCATION_WARNING_LEVEL * est.mean.abs().max(f64::MIN_POSITIVE) {
        est.warning = Some(format!(
            "horizon {horizon} leaves a truncation bound of {:.3e} (mean {:.6})",
            est.truncation_bound, est.mean
        ));
    }
    Ok(est)
}
