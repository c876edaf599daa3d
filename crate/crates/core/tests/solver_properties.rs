use catdiv_core::baseline::{solve_cl, CLConfig, PremiumMode};
use catdiv_core::grid::{IntensityGrid, StateGrid, SurplusGrid};
use catdiv_core::model::{DistributionSpec, ModelParams, RiskDynamics};
use catdiv_core::simulator::evaluate_policy_mc;
use catdiv_core::{ExperimentConfig, HjbSolver, SolverConfig, ValueSurface};
use proptest::prelude::*;

fn config(name: &str) -> ExperimentConfig {
    let path = format!("{}/../../configs/{name}.json", env!("CARGO_MANIFEST_DIR"));
    ExperimentConfig::from_path(path).unwrap()
}

fn example1() -> ModelParams {
    ModelParams::new(
        0.25,
        0.5,
        0.7,
        0.2,
        0.2,
        DistributionSpec::exponential(10.0).unwrap(),
        DistributionSpec::exponential(0.5).unwrap(),
    )
    .unwrap()
}

fn small_solver() -> HjbSolver {
    let d = example1().dynamics();
    let grid = StateGrid::new(
        SurplusGrid::new(d.premium, d.discount, 28.0 / 423.0).unwrap(),
        IntensityGrid::new(d.lambda_floor, 23.0 / 240.0, 6).unwrap(),
    );
    HjbSolver::new(d, grid, SolverConfig::default()).unwrap()
}

#[test]
fn solve_is_deterministic_across_thread_counts() {
    let solver = small_solver();
    let a = solver.solve().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| solver.solve().unwrap());
    assert_eq!(a, b);

    let d = *solver.dynamics();
    let mc_a = evaluate_policy_mc(&d, &a.partition, (5, 2), 2000, 40.0, 9).unwrap();
    let mc_b = pool.install(|| evaluate_policy_mc(&d, &a.partition, (5, 2), 2000, 40.0, 9).unwrap());
    assert_eq!(mc_a, mc_b);
}

#[test]
fn degenerate_config_matches_classical_solver() {
    let cfg = config("classical_degenerate");
    let params = cfg.params().unwrap();
    let grid = cfg.grid(&params).unwrap();
    let sol = catdiv_core::solve(&params.dynamics(), &grid, &cfg.solver).unwrap();

    let cl = solve_cl(
        &CLConfig {
            lambda_const: params.lambda_floor(),
            premium_mode: PremiumMode::Reloaded {
                loading: params.loading(),
            },
            claim_law: params.claim_law(),
            discount: params.discount(),
            delta: grid.surplus.delta(),
        },
        &cfg.solver,
    )
    .unwrap();
    assert_eq!(cl.premium, params.premium());
    assert_eq!(cl.values(), sol.surface.row(0));
    assert_eq!(cl.solution.partition.labels(), sol.partition.labels());
}

/// Holding one window on `W = x` with constant intensity and exponential
/// claims, integrated by composite Simpson on the claim time.
fn hold_on_identity(lambda: f64, p: f64, q: f64, rate: f64, delta: f64, x: f64) -> f64 {
    let payoff = |s: f64| {
        let y = x + p * s;
        // E[(y - U) 1{U <= y}]
        lambda * (-(lambda + q) * s).exp() * (y - (1.0 - (-rate * y).exp()) / rate)
    };
    let k = 20_000;
    let h = delta / k as f64;
    let mut sum = payoff(0.0) + payoff(delta);
    for i in 1..k {
        sum += payoff(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (-(lambda + q) * delta).exp() * (x + p * delta) + sum * h / 3.0
}

#[test]
fn hold_operator_matches_closed_form_for_constant_intensity() {
    let params = example1();
    let (lambda, p, q, delta) = (params.lambda_floor(), params.premium(), params.discount(), 28.0 / 423.0);
    let d = RiskDynamics::constant_intensity(lambda, p, q, params.claim_law()).unwrap();
    let grid = StateGrid::new(
        SurplusGrid::new(p, q, delta).unwrap(),
        IntensityGrid::new(lambda, 1.0, 0).unwrap(),
    );
    let solver = HjbSolver::new(d, grid, SolverConfig::default()).unwrap();
    let w = ValueSurface::finish_everywhere(grid);
    for n in [0, 1, 7, 30, grid.surplus.n_max()] {
        let exact = hold_on_identity(lambda, p, q, 10.0, delta, grid.surplus.x(n));
        let got = solver.op_hold(&w, n, 0);
        assert!((got - exact).abs() < 1e-12, "n={n}: {got} vs {exact}");
    }
}

#[test]
fn kernel_rows_are_sub_stochastic() {
    let solver = small_solver();
    let g = *solver.grid();
    for m in 0..g.intensity.len() {
        for n in 0..g.surplus.len() {
            let total = solver.kernel_row(n, m).total_weight();
            assert!(total > 0.0 && total < 1.0, "({n},{m}) total {total}");
        }
    }
}

fn surface_from(grid: StateGrid, noise: &[f64]) -> ValueSurface {
    let nx = grid.surplus.len();
    ValueSurface::from_fn(grid, |n, m| grid.surplus.x(n) + noise[(m * nx + n) % noise.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bellman_operator_is_monotone_and_non_expansive(
        a in prop::collection::vec(0.0f64..2.0, 16..64),
        b in prop::collection::vec(0.0f64..2.0, 16..64),
    ) {
        let solver = small_solver();
        let g = *solver.grid();
        let lo = surface_from(g, &a);
        let hi = ValueSurface::from_fn(g, |n, m| lo.get(n, m) + b[(m * 7 + n) % b.len()]);
        let (tlo, _) = solver.apply(&lo);
        let (thi, _) = solver.apply(&hi);
        for m in 0..g.intensity.len() {
            for n in 0..g.surplus.len() {
                prop_assert!(tlo.get(n, m) <= thi.get(n, m) + 1e-12);
            }
        }
        prop_assert!(tlo.sup_distance(&thi) <= lo.sup_distance(&hi) + 1e-12);
    }

    #[test]
    fn sweeps_from_identity_never_decrease(steps in 1usize..6) {
        let solver = small_solver();
        let mut w = ValueSurface::finish_everywhere(*solver.grid());
        for _ in 0..steps {
            let (next, _) = solver.apply(&w);
            for (new, old) in next.values().iter().zip(w.values()) {
                prop_assert!(new >= old);
            }
            w = next;
        }
    }
}
