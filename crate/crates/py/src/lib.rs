//! Python bindings: model parameters, the HJB solve, the extracted strategy,
//! policy simulation and the constant-intensity comparison.

use catdiv_core::baseline::{compare_surfaces, solve_cl, CLConfig, ExpectedOrder, PremiumMode};
use catdiv_core::simulator::{default_horizon, evaluate_policy_mc};
use catdiv_core::{Action, DistributionSpec, Error, ExperimentConfig, IntensityGrid, RowShape, StateGrid, SurplusGrid};
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Claim-size or intensity-jump distribution.
#[pyclass(frozen, skip_from_py_object, name = "Law")]
#[derive(Clone)]
struct PyLaw {
    inner: DistributionSpec,
}

#[pymethods]
impl PyLaw {
    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionSpec::exponential(rate).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn erlang(shape: u32, rate: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionSpec::erlang(shape, rate).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn deterministic(value: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionSpec::deterministic(value).map_err(to_py)?,
        })
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        self.inner.cdf(x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Law({:?})", self.inner)
    }
}

#[pyclass(frozen, skip_from_py_object, name = "ModelParams")]
#[derive(Clone)]
struct PyModelParams {
    inner: catdiv_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(
        lambda_floor: f64,
        beta: f64,
        decay: f64,
        discount: f64,
        loading: f64,
        claim_law: PyRef<'_, PyLaw>,
        jump_law: PyRef<'_, PyLaw>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: catdiv_core::ModelParams::new(
                lambda_floor,
                beta,
                decay,
                discount,
                loading,
                claim_law.inner,
                jump_law.inner,
            )
            .map_err(to_py)?,
        })
    }

    #[getter]
    fn lambda_floor(&self) -> f64 {
        self.inner.lambda_floor()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn decay(&self) -> f64 {
        self.inner.decay()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    #[getter]
    fn loading(&self) -> f64 {
        self.inner.loading()
    }

    #[getter]
    fn lambda_av(&self) -> f64 {
        self.inner.lambda_av()
    }

    #[getter]
    fn premium(&self) -> f64 {
        self.inner.premium()
    }

    fn mean_intensity(&self, lambda0: f64, t: f64) -> PyResult<f64> {
        self.inner.mean_intensity(lambda0, t).map_err(to_py)
    }

    fn mean_cumulative_intensity(&self, lambda0: f64, t: f64) -> PyResult<f64> {
        self.inner.mean_cumulative_intensity(lambda0, t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(lambda_floor={}, beta={}, decay={}, discount={}, loading={}, premium={})",
            self.inner.lambda_floor(),
            self.inner.beta(),
            self.inner.decay(),
            self.inner.discount(),
            self.inner.loading(),
            self.inner.premium()
        )
    }
}

/// Surplus levels `n p delta` up to the first one at or above `p/q`, and
/// intensity levels `lambda_floor + m delta_lambda` for `m <= m_max`.
#[pyclass(frozen, skip_from_py_object, name = "Grid")]
#[derive(Clone)]
struct PyGrid {
    inner: StateGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(params: PyRef<'_, PyModelParams>, delta: f64, delta_lambda: f64, m_max: usize) -> PyResult<Self> {
        let p = &params.inner;
        Ok(Self {
            inner: StateGrid::new(
                SurplusGrid::new(p.premium(), p.discount(), delta).map_err(to_py)?,
                IntensityGrid::new(p.lambda_floor(), delta_lambda, m_max).map_err(to_py)?,
            ),
        })
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.surplus.n_max()
    }

    #[getter]
    fn m_max(&self) -> usize {
        self.inner.intensity.m_max()
    }

    #[getter]
    fn step(&self) -> f64 {
        self.inner.surplus.step()
    }

    fn x(&self, n: usize) -> f64 {
        self.inner.surplus.x(n)
    }

    fn intensity(&self, m: usize) -> f64 {
        self.inner.intensity.lambda(m)
    }

    fn __repr__(&self) -> String {
        format!("Grid(n_max={}, m_max={})", self.n_max(), self.m_max())
    }
}

/// Converged value surface with its action labels.
#[pyclass(frozen, name = "Solution")]
struct PySolution {
    inner: catdiv_core::Solution,
}

impl PySolution {
    fn check(&self, n: usize, m: usize) -> PyResult<()> {
        let g = self.inner.surface.grid();
        if n > g.surplus.n_max() || m > g.intensity.m_max() {
            return Err(PyIndexError::new_err(format!("cell ({n}, {m}) is outside the grid")));
        }
        Ok(())
    }
}

#[pymethods]
impl PySolution {
    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: *self.inner.surface.grid(),
        }
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.log.iterations
    }

    #[getter]
    fn final_change(&self) -> f64 {
        self.inner.log.final_change
    }

    fn value(&self, n: usize, m: usize) -> PyResult<f64> {
        self.check(n, m)?;
        Ok(self.inner.surface.get(n, m))
    }

    /// `V(x, lambda)` off the grid.
    fn evaluate(&self, x: f64, intensity: f64) -> PyResult<f64> {
        self.inner.surface.evaluate(x, intensity).map_err(to_py)
    }

    /// Values as a list of rows, one per intensity level.
    fn values(&self) -> Vec<Vec<f64>> {
        let g = self.inner.surface.grid();
        (0..g.intensity.len())
            .map(|m| self.inner.surface.row(m).to_vec())
            .collect()
    }

    /// `"hold"`, `"pay"` or `"finish"`.
    fn action(&self, n: usize, m: usize) -> PyResult<&'static str> {
        self.check(n, m)?;
        Ok(self.inner.partition.label(n, m).as_str())
    }

    /// Maximal runs of pay cells in row `m` as inclusive `(start, end)` pairs.
    fn pay_bands(&self, m: usize) -> PyResult<Vec<(usize, usize)>> {
        self.check(0, m)?;
        Ok(self
            .inner
            .partition
            .pay_bands(m)
            .iter()
            .map(|b| (b.start, b.end))
            .collect())
    }

    /// Barrier level of row `m`, or `None` when the row is not a barrier.
    fn barrier(&self, m: usize) -> PyResult<Option<f64>> {
        self.check(0, m)?;
        Ok(match self.inner.partition.row_shape(m) {
            RowShape::Barrier { level, .. } => Some(level),
            RowShape::Bands { .. } => None,
        })
    }

    fn count(&self, action: &str) -> PyResult<usize> {
        let action: Action = action.parse().map_err(to_py)?;
        Ok(self.inner.partition.count(action))
    }
}

#[pyfunction]
#[pyo3(signature = (params, grid, tol = 1e-9, max_iter = 1_000_000, quadrature_order = 16))]
fn solve(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    grid: PyRef<'_, PyGrid>,
    tol: f64,
    max_iter: usize,
    quadrature_order: usize,
) -> PyResult<PySolution> {
    let config = catdiv_core::SolverConfig {
        tol,
        max_iter,
        quadrature_order,
    };
    let dynamics = params.inner.dynamics();
    let grid = grid.inner;
    let inner = py
        .detach(|| catdiv_core::solve(&dynamics, &grid, &config))
        .map_err(to_py)?;
    Ok(PySolution { inner })
}

/// Reads a JSON experiment config and returns `(params, grid)`.
#[pyfunction]
fn load_config(path: &str) -> PyResult<(PyModelParams, PyGrid)> {
    let config = ExperimentConfig::from_path(path).map_err(to_py)?;
    let params = config.params().map_err(to_py)?;
    let grid = config.grid(&params).map_err(to_py)?;
    Ok((PyModelParams { inner: params }, PyGrid { inner: grid }))
}

/// Monte-Carlo value of the solved strategy started at cell `(n, m)`.
#[pyfunction]
#[pyo3(signature = (params, solution, n, m, n_paths = 100_000, seed = 0, horizon = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    solution: PyRef<'_, PySolution>,
    n: usize,
    m: usize,
    n_paths: usize,
    seed: u64,
    horizon: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    solution.check(n, m)?;
    let dynamics = params.inner.dynamics();
    let sol = &solution.inner;
    let grid = *sol.surface.grid();
    let target = sol.surface.get(n, m);
    let horizon = horizon.unwrap_or_else(|| default_horizon(&dynamics, &grid, target, 1e-3));
    let est = py
        .detach(|| evaluate_policy_mc(&dynamics, &sol.partition, (n, m), n_paths, horizon, seed))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("mean", est.mean)?;
    out.set_item("std_error", est.std_error)?;
    out.set_item("n_paths", est.n_paths)?;
    out.set_item("horizon", est.horizon)?;
    out.set_item("truncation_bound", est.truncation_bound)?;
    out.set_item("solver_value", target)?;
    Ok(out)
}

/// Compares the solved surface with the constant-intensity model.
///
/// `mode` is `"reloaded-floor"`, `"same-p-floor"` or `"same-p-average"`.
#[pyfunction]
#[pyo3(signature = (params, solution, mode = "same-p-average", slack = 1e-6))]
fn compare<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    solution: PyRef<'_, PySolution>,
    mode: &str,
    slack: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = &params.inner;
    let (lambda, premium_mode, expected) = match mode {
        "reloaded-floor" => (
            p.lambda_floor(),
            PremiumMode::Reloaded { loading: p.loading() },
            ExpectedOrder::AtLeast,
        ),
        "same-p-floor" => (
            p.lambda_floor(),
            PremiumMode::SameP { premium: p.premium() },
            ExpectedOrder::AtMost,
        ),
        "same-p-average" => (
            p.lambda_av(),
            PremiumMode::SameP { premium: p.premium() },
            ExpectedOrder::AtLeast,
        ),
        other => return Err(PyValueError::new_err(format!("unknown comparison mode `{other}`"))),
    };
    let grid = *solution.inner.surface.grid();
    let cl_config = CLConfig {
        lambda_const: lambda,
        premium_mode,
        claim_law: p.claim_law(),
        discount: p.discount(),
        delta: grid.surplus.delta(),
    }
    .aligned_to(grid.surplus.step())
    .map_err(to_py)?;
    let solver = catdiv_core::SolverConfig::default();
    let cl = py.detach(|| solve_cl(&cl_config, &solver)).map_err(to_py)?;
    let cmp = compare_surfaces(&solution.inner.surface, &cl, lambda, expected, slack).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("intensity", lambda)?;
    out.set_item("premium_cl", cl.premium)?;
    out.set_item("violations", cmp.violations)?;
    out.set_item("worst_violation", cmp.worst_violation)?;
    out.set_item("value", cmp.rows.iter().map(|r| r.value).collect::<Vec<_>>())?;
    out.set_item("value_cl", cmp.rows.iter().map(|r| r.value_cl).collect::<Vec<_>>())?;
    Ok(out)
}

#[pymodule]
fn catdiv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLaw>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
