//! Plot-ready tables and machine-readable reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always produce byte-identical files.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::baseline::Comparison;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::grid::StateGrid;
use crate::model::ModelParams;
use crate::simulator::{MCEstimate, MomentEstimate};
use crate::solver::{Action, PolicyPartition, RowShape, Solution, ValueSurface};

pub const VALUE_SURFACE_HEADER: &str = "n,m,x,lambda,value,action";
pub const MOMENTS_HEADER: &str =
    "lambda0,t,intensity_exact,intensity_mc,intensity_se,cumulative_exact,cumulative_mc,cumulative_se";
pub const COMPARISON_HEADER: &str = "n,x,value,value_cl,difference,violation";

pub fn write_value_surface_csv<W: Write>(mut out: W, solution: &Solution) -> Result<()> {
    let grid = solution.surface.grid();
    writeln!(out, "{VALUE_SURFACE_HEADER}")?;
    for m in 0..grid.intensity.len() {
        for n in 0..grid.surplus.len() {
            writeln!(
                out,
                "{n},{m},{},{},{},{}",
                grid.surplus.x(n),
                grid.intensity.lambda(m),
                solution.surface.get(n, m),
                solution.partition.label(n, m).as_str()
            )?;
        }
    }
    Ok(())
}

/// Reads back a table written by [`write_value_surface_csv`] for `grid`.
pub fn read_value_surface_csv<R: BufRead>(input: R, grid: StateGrid) -> Result<(ValueSurface, PolicyPartition)> {
    let mismatch = |msg: String| Error::GridMismatch(msg);
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != VALUE_SURFACE_HEADER {
        return Err(mismatch(format!("unexpected header `{header}`")));
    }
    let nx = grid.surplus.len();
    let mut values = vec![f64::NAN; grid.cells()];
    let mut labels = vec![Action::Hold; grid.cells()];
    let mut seen = 0usize;
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || mismatch(format!("malformed row {}: `{line}`", k + 2));
        if fields.len() != 6 {
            return Err(bad());
        }
        let n: usize = fields[0].parse().map_err(|_| bad())?;
        let m: usize = fields[1].parse().map_err(|_| bad())?;
        if n >= nx || m >= grid.intensity.len() {
            return Err(mismatch(format!("cell ({n}, {m}) is outside the configured grid")));
        }
        let x: f64 = fields[2].parse().map_err(|_| bad())?;
        let lambda: f64 = fields[3].parse().map_err(|_| bad())?;
        if x != grid.surplus.x(n) || lambda != grid.intensity.lambda(m) {
            return Err(mismatch(format!("row {} does not match the configured grid", k + 2)));
        }
        values[m * nx + n] = fields[4].parse().map_err(|_| bad())?;
        labels[m * nx + n] = fields[5].parse()?;
        seen += 1;
    }
    if seen != grid.cells() || values.iter().any(|v| v.is_nan()) {
        return Err(mismatch(format!("expected {} cells, found {seen}", grid.cells())));
    }
    let surface = ValueSurface::from_values(grid, values)?;
    let partition = PolicyPartition::from_fn(grid, |n, m| labels[m * nx + n])?;
    Ok((surface, partition))
}

pub fn write_moments_csv<W: Write>(mut out: W, rows: &[MomentEstimate]) -> Result<()> {
    writeln!(out, "{MOMENTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.lambda0,
            r.t,
            r.intensity_exact,
            r.intensity.mean,
            r.intensity.std_error,
            r.cumulative_exact,
            r.cumulative.mean,
            r.cumulative.std_error
        )?;
    }
    Ok(())
}

pub fn write_comparison_csv<W: Write>(mut out: W, cmp: &Comparison) -> Result<()> {
    writeln!(out, "{COMPARISON_HEADER}")?;
    for r in &cmp.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n, r.x, r.value, r.value_cl, r.difference, r.violation
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionSummary {
    pub hold: usize,
    pub pay: usize,
    pub finish: usize,
    /// Rows whose action set is a single upward-closed run.
    pub barrier_rows: usize,
    /// Largest number of maximal pay runs in any row.
    pub max_bands: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowReport {
    pub m: usize,
    pub lambda: f64,
    #[serde(flatten)]
    pub shape: RowShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierPoint {
    pub m: usize,
    pub lambda: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub name: String,
    pub premium: f64,
    /// The premium as an exact fraction.
    pub premium_exact: String,
    pub lambda_av: f64,
    pub n_max: usize,
    pub m_max: usize,
    pub iterations: usize,
    pub final_change: f64,
    pub max_decrease: f64,
    pub partition: PartitionSummary,
    /// `b(lambda_m)` when every row is a barrier.
    pub barrier_curve: Option<Vec<BarrierPoint>>,
    pub rows: Vec<RowReport>,
    pub config: ExperimentConfig,
}

impl SolveReport {
    pub fn new(config: &ExperimentConfig, params: &ModelParams, solution: &Solution) -> Result<Self> {
        let grid = solution.surface.grid();
        let part = &solution.partition;
        let rows: Vec<RowReport> = (0..grid.intensity.len())
            .map(|m| RowReport {
                m,
                lambda: grid.intensity.lambda(m),
                shape: part.row_shape(m),
            })
            .collect();
        let barrier_curve = rows
            .iter()
            .map(|r| match r.shape {
                RowShape::Barrier { level, .. } => Some(BarrierPoint {
                    m: r.m,
                    lambda: r.lambda,
                    level,
                }),
                RowShape::Bands { .. } => None,
            })
            .collect::<Option<Vec<_>>>();
        let partition = PartitionSummary {
            hold: part.count(Action::Hold),
            pay: part.count(Action::Pay),
            finish: part.count(Action::Finish),
            barrier_rows: rows
                .iter()
                .filter(|r| matches!(r.shape, RowShape::Barrier { .. }))
                .count(),
            max_bands: (0..grid.intensity.len())
                .map(|m| part.pay_bands(m).len())
                .max()
                .unwrap_or(0),
        };
        Ok(Self {
            name: config.display_name().to_string(),
            premium: params.premium(),
            premium_exact: config.exact_premium()?.to_string(),
            lambda_av: params.lambda_av(),
            n_max: grid.surplus.n_max(),
            m_max: grid.intensity.m_max(),
            iterations: solution.log.iterations,
            final_change: solution.log.final_change,
            max_decrease: solution.log.max_decrease,
            partition,
            barrier_curve,
            rows,
            config: config.clone(),
        })
    }
}

/// One simulated probe cell against the solver value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub n: usize,
    pub m: usize,
    pub x: f64,
    pub lambda: f64,
    pub solver_value: f64,
    pub estimate: MCEstimate,
    /// `|mean - solver| <= 3 SE + truncation bound`.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub name: String,
    pub seed: u64,
    pub probes: Vec<ProbeReport>,
    pub passed: bool,
    pub config: ExperimentConfig,
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{IntensityGrid, StateGrid, SurplusGrid};
    use crate::solver::solve;

    #[test]
    fn value_surface_csv_layout() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{
            "name": "tiny",
            "model": {"lambda_floor": "1/4", "beta": "1/2", "decay": "7/10", "discount": "2/10",
                      "loading": "2/10", "claim_law": {"kind": "exponential", "rate": 10},
                      "jump_law": {"kind": "exponential", "rate": "1/2"}},
            "grid": {"delta": "28/423", "delta_lambda": "23/240", "m_max": 2}
        }"#,
        )
        .unwrap();
        let params = cfg.params().unwrap();
        let grid = cfg.grid(&params).unwrap();
        assert_eq!(
            grid,
            StateGrid::new(
                SurplusGrid::new(params.premium(), 0.2, 28.0 / 423.0).unwrap(),
                IntensityGrid::new(0.25, 23.0 / 240.0, 2).unwrap()
            )
        );
        let sol = solve(&params.dynamics(), &grid, &cfg.solver).unwrap();
        let mut buf = Vec::new();
        write_value_surface_csv(&mut buf, &sol).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], VALUE_SURFACE_HEADER);
        assert_eq!(lines.len(), 1 + grid.cells());
        assert!(lines[1].starts_with("0,0,0,0.25,"));
        assert!(lines[1].ends_with(",hold"));

        let (surface, partition) = read_value_surface_csv(text.as_bytes(), grid).unwrap();
        assert_eq!(surface, sol.surface);
        assert_eq!(partition, sol.partition);
        let other = StateGrid::new(grid.surplus, IntensityGrid::new(0.25, 23.0 / 240.0, 3).unwrap());
        assert!(read_value_surface_csv(text.as_bytes(), other).is_err());

        let report = SolveReport::new(&cfg, &params, &sol).unwrap();
        assert_eq!(report.premium_exact, "141/700");
        assert_eq!(report.rows.len(), 3);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["rows"][0]["kind"], "barrier");
        assert_eq!(json["config"]["model"]["lambda_floor"], "1/4");
    }
}
