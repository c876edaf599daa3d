"""Smoke test for the `catdiv` extension module.

Build and install with `maturin develop --release -m crates/py/Cargo.toml`,
or copy `target/release/libcatdiv.so` to `catdiv.so` on `PYTHONPATH`.
"""

import math
from pathlib import Path

import catdiv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def example1(m_max=4):
    params = catdiv.ModelParams(
        0.25, 0.5, 0.7, 0.2, 0.2, catdiv.Law.exponential(10.0), catdiv.Law.exponential(0.5)
    )
    grid = catdiv.Grid(params, 28 / 423, 23 / 240, m_max)
    return params, grid


def test_premium_and_mean_intensity():
    params, _ = example1()
    assert math.isclose(params.premium, 141 / 700, rel_tol=1e-12)
    assert math.isclose(params.lambda_av, 0.25 + 1 / 0.7, rel_tol=1e-12)
    assert math.isclose(params.mean_intensity(params.lambda_av, 3.0), params.lambda_av, rel_tol=1e-12)


def test_solve_and_partition():
    params, grid = example1()
    sol = catdiv.solve(params, grid)
    assert sol.final_change <= 1e-9
    values = sol.values()
    assert len(values) == grid.m_max + 1
    assert len(values[0]) == grid.n_max + 1
    for m, row in enumerate(values):
        for n, v in enumerate(row):
            assert v >= grid.x(n) - 1e-12
            assert sol.value(n, m) == v
    assert sol.action(grid.n_max, 0) == "pay"
    assert sol.barrier(0) is not None
    assert sol.pay_bands(0)[-1][1] == grid.n_max
    total = sol.count("hold") + sol.count("pay") + sol.count("finish")
    assert total == (grid.n_max + 1) * (grid.m_max + 1)


def test_simulate_matches_solver():
    params, grid = example1()
    sol = catdiv.solve(params, grid)
    est = catdiv.simulate(params, sol, 10, 0, n_paths=20_000, seed=3)
    band = 3 * est["std_error"] + est["truncation_bound"]
    assert abs(est["mean"] - est["solver_value"]) <= band


def test_compare_floor_bound():
    params, grid = example1()
    sol = catdiv.solve(params, grid)
    cmp = catdiv.compare(params, sol, mode="same-p-floor")
    assert cmp["violations"] == 0
    assert len(cmp["value"]) == grid.n_max + 1


def test_load_config():
    params, grid = catdiv.load_config(str(CONFIGS / "example1.json"))
    assert math.isclose(params.premium, 141 / 700, rel_tol=1e-12)
    assert grid.m_max == 60


def test_errors():
    try:
        catdiv.Law.exponential(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative rate accepted")
    params, grid = example1()
    try:
        catdiv.solve(params, grid, max_iter=2)
    except RuntimeError:
        pass
    else:
        raise AssertionError("expected non-convergence")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
