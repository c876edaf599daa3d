//! `catdiv`: solve, simulate and compare dividend experiments from JSON
//! configs.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 the value
//! iteration did not converge, 4 an oracle check failed.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catdiv_core::baseline::{compare_surfaces, solve_cl, CLConfig, ExpectedOrder, PremiumMode};
use catdiv_core::config::ExperimentConfig;
use catdiv_core::report::{
    read_value_surface_csv, write_comparison_csv, write_json, write_moments_csv, write_value_surface_csv, ProbeReport,
    SimulationReport, SolveReport,
};
use catdiv_core::simulator::{default_horizon, evaluate_policy_mc, intensity_moments_mc};
use catdiv_core::solver::{refine_check, solve, Resolution};
use catdiv_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "CATDIV_THREADS";

/// Probe and moment checks accept `|mc - exact| <= 3 SE` (+ truncation).
const SE_BAND: f64 = 3.0;
/// Ordering checks tolerate this much of the wrong sign.
const ORDER_SLACK: f64 = 1e-6;
/// `--refine` passes below 2% of `W(n_max, 0)` with this undershoot allowed.
const REFINE_REL_TOL: f64 = 0.02;
const REFINE_SLACK: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "catdiv",
    version,
    about = "Optimal dividends under shot-noise claim intensity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the HJB fixed point and write the value surface and report.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also solve at half the grid spacing and check the difference.
        #[arg(long)]
        refine: bool,
    },
    /// Compare simulated intensity moments with their closed forms.
    Moments {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the solved strategy at the configured probe cells.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Value surface CSV from `solve`; defaults to `<out>/value_surface.csv`.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Compare the solved surface with the constant-intensity model.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "same-p-average")]
        mode: CompareMode,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CompareMode {
    /// `V(x, lambda_floor) >= V_CL(x)` with the premium reloaded at the floor.
    ReloadedFloor,
    /// `V(x, lambda) <= V_CL(x)` at the floor intensity with the same premium.
    SamePFloor,
    /// `V(x, lambda_av) >= V_CL(x)` at the mean intensity with the same premium.
    SamePAverage,
}

impl CompareMode {
    fn slug(self) -> &'static str {
        match self {
            CompareMode::ReloadedFloor => "reloaded_floor",
            CompareMode::SamePFloor => "same_p_floor",
            CompareMode::SamePAverage => "same_p_average",
        }
    }
}

enum Failure {
    Input(String),
    NonConvergence(String),
    Oracle(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } => Failure::NonConvergence(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Solve { common, refine } => cmd_solve(&common, refine),
        Command::Moments { common } => cmd_moments(&common),
        Command::Simulate { common, surface } => cmd_simulate(&common, surface),
        Command::Compare { common, mode } => cmd_compare(&common, mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NonConvergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Oracle(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

struct Loaded {
    config: ExperimentConfig,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let mut config = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.mc.seed = seed;
    }
    let out = match (&common.out, &config.outputs.directory) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => PathBuf::from("out").join(config.display_name()),
    };
    std::fs::create_dir_all(&out)?;
    Ok(Loaded { config, out })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_solve(common: &Common, refine: bool) -> Outcome {
    let Loaded { config, out } = load(common)?;
    let params = config.params()?;
    let grid = config.grid(&params)?;
    let solution = solve(&params.dynamics(), &grid, &config.solver)?;
    write_value_surface_csv(create(&out, "value_surface.csv")?, &solution)?;
    let report = SolveReport::new(&config, &params, &solution)?;
    write_json(create(&out, "solve_report.json")?, &report)?;
    eprintln!(
        "{}: {} sweeps, final change {:.3e}, premium {}",
        report.name, report.iterations, report.final_change, report.premium_exact
    );
    if refine {
        let coarse = Resolution {
            delta: grid.surplus.delta(),
            delta_lambda: grid.intensity.delta_lambda(),
            m_max: grid.intensity.m_max(),
        };
        let check = refine_check(&params.dynamics(), coarse, &config.solver, REFINE_REL_TOL, REFINE_SLACK)?;
        write_json(create(&out, "refine_report.json")?, &check)?;
        if !check.passed {
            return Err(Failure::Oracle(format!(
                "refinement changed the surface by {:.3e} (limit {:.3e}), min gain {:.3e}",
                check.sup_diff,
                check.rel_tol * check.scale,
                check.min_gain
            )));
        }
    }
    Ok(())
}

fn cmd_moments(common: &Common) -> Outcome {
    let Loaded { config, out } = load(common)?;
    let params = config.params()?;
    let mut rows = Vec::new();
    for (k, lambda0) in config.moment_lambda0(&params).into_iter().enumerate() {
        rows.extend(intensity_moments_mc(
            &params,
            lambda0,
            &config.moments.times,
            config.moments.n_paths,
            config.mc.seed.wrapping_add(k as u64),
        )?);
    }
    write_moments_csv(create(&out, "moments.csv")?, &rows)?;
    let misses = rows
        .iter()
        .filter(|r| {
            !r.intensity.agrees_with(r.intensity_exact, SE_BAND)
                || !r.cumulative.agrees_with(r.cumulative_exact, SE_BAND)
        })
        .count();
    if misses > 0 {
        return Err(Failure::Oracle(format!("{misses} moment rows outside {SE_BAND} SE")));
    }
    Ok(())
}

fn cmd_simulate(common: &Common, surface: Option<PathBuf>) -> Outcome {
    let Loaded { config, out } = load(common)?;
    let params = config.params()?;
    let dynamics = params.dynamics();
    let grid = config.grid(&params)?;
    let path = surface.unwrap_or_else(|| out.join("value_surface.csv"));
    let file = File::open(&path).map_err(|e| {
        Failure::Input(format!(
            "cannot open value surface {}: {e}; run `solve` first",
            path.display()
        ))
    })?;
    let (values, partition) = read_value_surface_csv(BufReader::new(file), grid)?;
    if config.mc.probe_cells.is_empty() {
        return Err(Failure::Input("config lists no mc.probe_cells".into()));
    }
    let mut probes = Vec::new();
    for (k, &[n, m]) in config.mc.probe_cells.iter().enumerate() {
        let solver_value = values.get(n, m);
        let horizon = config
            .mc
            .horizon
            .unwrap_or_else(|| default_horizon(&dynamics, &grid, solver_value, config.mc.horizon_rel_tol));
        let estimate = evaluate_policy_mc(
            &dynamics,
            &partition,
            (n, m),
            config.mc.n_paths,
            horizon,
            config.mc.seed.wrapping_add(k as u64),
        )?;
        let passed = estimate.agrees_with(solver_value, SE_BAND);
        probes.push(ProbeReport {
            n,
            m,
            x: grid.surplus.x(n),
            lambda: grid.intensity.lambda(m),
            solver_value,
            estimate,
            passed,
        });
    }
    let report = SimulationReport {
        name: config.display_name().to_string(),
        seed: config.mc.seed,
        passed: probes.iter().all(|p| p.passed),
        probes,
        config: config.clone(),
    };
    write_json(create(&out, "simulate_report.json")?, &report)?;
    if !report.passed {
        let failed = report.probes.iter().filter(|p| !p.passed).count();
        return Err(Failure::Oracle(format!("{failed} probe cells outside the MC band")));
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    mode: CompareMode,
    lambda: f64,
    premium: f64,
    premium_cl: f64,
    violations: usize,
    worst_violation: f64,
    slack: f64,
}

fn cmd_compare(common: &Common, mode: CompareMode) -> Outcome {
    let Loaded { config, out } = load(common)?;
    let params = config.params()?;
    let grid = config.grid(&params)?;
    let solution = solve(&params.dynamics(), &grid, &config.solver)?;
    let (lambda, premium_mode, expected) = match mode {
        CompareMode::ReloadedFloor => (
            params.lambda_floor(),
            PremiumMode::Reloaded {
                loading: params.loading(),
            },
            ExpectedOrder::AtLeast,
        ),
        CompareMode::SamePFloor => (
            params.lambda_floor(),
            PremiumMode::SameP {
                premium: params.premium(),
            },
            ExpectedOrder::AtMost,
        ),
        CompareMode::SamePAverage => (
            params.lambda_av(),
            PremiumMode::SameP {
                premium: params.premium(),
            },
            ExpectedOrder::AtLeast,
        ),
    };
    let cl_config = CLConfig {
        lambda_const: lambda,
        premium_mode,
        claim_law: params.claim_law(),
        discount: params.discount(),
        delta: grid.surplus.delta(),
    }
    .aligned_to(grid.surplus.step())?;
    let cl = solve_cl(&cl_config, &config.solver)?;
    let cmp = compare_surfaces(&solution.surface, &cl, lambda, expected, ORDER_SLACK)?;
    write_comparison_csv(create(&out, &format!("compare_{}.csv", mode.slug()))?, &cmp)?;
    let summary = CompareSummary {
        mode,
        lambda,
        premium: params.premium(),
        premium_cl: cl.premium,
        violations: cmp.violations,
        worst_violation: cmp.worst_violation,
        slack: ORDER_SLACK,
    };
    write_json(create(&out, &format!("compare_{}.json", mode.slug()))?, &summary)?;
    if cmp.violations > 0 {
        return Err(Failure::Oracle(format!(
            "{} grid points break the expected ordering (worst {:.3e})",
            cmp.violations, cmp.worst_violation
        )));
    }
    Ok(())
}
