//! Python bindings: scenarios, price profiles, dispatch, mediation,
//! certificates and the QP kernel.
//!
//! Structured reports cross the boundary as plain `dict`s (built through
//! the `json` module from the library's serde representation); the objects
//! worth keeping around — scenarios, price profiles, dispatch results — are
//! classes.

use fairtrade::dispatch::{self, AdmmConfig, DispatchResult, DispatchStatus, Solver};
use fairtrade::pricing::{self, Aggregation, FixedDispatch, MediationConfig, PriceProfile};
use fairtrade::qp::{self, QpProblem, QpStatus};
use fairtrade::scenario::{self, synth, Scenario};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Converts any serializable value into Python objects via JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated multi-hub scenario.
#[pyclass(name = "Scenario", module = "fairtrade_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    pub inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Reads a `.scenario` file. Raises `ValueError` on parse errors and,
    /// unless `validate=False`, on the first invariant violation; an
    /// unvalidated scenario can still be inspected with `validate()`.
    #[staticmethod]
    #[pyo3(signature = (path, validate = true))]
    fn load(path: &str, validate: bool) -> PyResult<Self> {
        if validate {
            return scenario::load_scenario(path).map(|inner| Self { inner }).map_err(value_err);
        }
        let text = std::fs::read_to_string(path).map_err(|e| value_err(format!("{path}: {e}")))?;
        scenario::parse_scenario(&text, std::path::Path::new(path).parent())
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Parses scenario JSON without validating it.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario::parse_scenario(text, None).map(|inner| Self { inner }).map_err(value_err)
    }

    /// One of the built-in synthetic scenarios: `threehub`, `two_hub_toy`,
    /// `self_sufficient` or `disconnected`. `seed` only affects `threehub`.
    #[staticmethod]
    #[pyo3(signature = (name, seed = synth::DEFAULT_SEED))]
    fn synth(name: &str, seed: u64) -> PyResult<Self> {
        let inner = match name {
            "threehub" => synth::threehub(seed),
            "two_hub_toy" => synth::two_hub_toy(),
            "self_sufficient" => synth::self_sufficient(),
            "disconnected" => synth::disconnected(),
            other => return Err(PyValueError::new_err(format!("unknown synthetic scenario `{other}`"))),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&scenario::scenario_to_json(&self.inner)).map_err(runtime_err)
    }

    /// `{"errors": [...], "warnings": [...]}`, each entry `{path, message}`.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scenario::validate_scenario(&self.inner))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn hub_ids(&self) -> Vec<String> {
        self.inner.hubs.iter().map(|h| h.id.clone()).collect()
    }

    #[getter]
    fn horizon_hours(&self) -> usize {
        self.inner.horizon_hours
    }

    /// Linked hub pairs as `(from_id, to_id)`.
    #[getter]
    fn links(&self) -> Vec<(String, String)> {
        self.inner
            .pairs()
            .iter()
            .map(|p| (self.inner.hubs[p.i].id.clone(), self.inner.hubs[p.j].id.clone()))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, hubs={}, links={}, hours={})",
            self.inner.name,
            self.inner.num_hubs(),
            self.inner.pairs().len(),
            self.inner.horizon_hours
        )
    }
}

/// Bilateral prices `c_ij(t)`, CHF/kWh: one price per linked pair and hour,
/// paid by whichever hub receives the energy.
#[pyclass(name = "Prices", module = "fairtrade_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPrices {
    pub inner: PriceProfile,
    hub_ids: Vec<String>,
}

impl PyPrices {
    fn wrap(s: &Scenario, inner: PriceProfile) -> Self {
        Self {
            inner,
            hub_ids: s.hubs.iter().map(|h| h.id.clone()).collect(),
        }
    }

    fn index(&self, id: &str) -> PyResult<usize> {
        self.hub_ids
            .iter()
            .position(|h| h == id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown hub `{id}`")))
    }
}

#[pymethods]
impl PyPrices {
    #[staticmethod]
    fn uniform(scenario: &PyScenario, price: f64) -> Self {
        Self::wrap(&scenario.inner, PriceProfile::uniform(&scenario.inner, price))
    }

    #[staticmethod]
    fn zero(scenario: &PyScenario) -> Self {
        Self::wrap(&scenario.inner, PriceProfile::zero(&scenario.inner))
    }

    /// Price of the pair's trades per hour (the order of the ids does not
    /// matter; unlinked pairs are zero).
    fn series(&self, a: &str, b: &str) -> PyResult<Vec<f64>> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        Ok((0..self.inner.horizon).map(|h| self.inner.get(i, j, h)).collect())
    }

    /// `{"hubA->hubB": [c(0), …]}` for every linked pair in canonical order.
    fn to_dict(&self) -> std::collections::BTreeMap<String, Vec<f64>> {
        self.inner
            .pairs
            .iter()
            .map(|p| (format!("{}->{}", self.hub_ids[p.i], self.hub_ids[p.j]), p.values.clone()))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Prices(pairs={}, hours={})", self.inner.pairs.len(), self.inner.horizon)
    }
}

/// Outcome of one dispatch solve.
#[pyclass(name = "DispatchResult", module = "fairtrade_py", frozen)]
pub struct PyDispatchResult {
    pub inner: DispatchResult,
}

#[pymethods]
impl PyDispatchResult {
    /// `W`, CHF.
    #[getter]
    fn social_cost(&self) -> f64 {
        self.inner.social_cost
    }

    #[getter]
    fn hub_costs(&self) -> Vec<f64> {
        self.inner.hub_costs()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.status == DispatchStatus::Converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn message_count(&self) -> usize {
        self.inner.message_count
    }

    /// Power hub `receiver` receives from hub `sender` per hour, kW
    /// (negative when it sends).
    fn trade(&self, receiver: &str, sender: &str) -> PyResult<Vec<f64>> {
        let idx = |id: &str| {
            self.inner
                .hub_ids
                .iter()
                .position(|h| h == id)
                .ok_or_else(|| PyValueError::new_err(format!("unknown hub `{id}`")))
        };
        let (i, j) = (idx(receiver)?, idx(sender)?);
        let t = &self.inner.profile.trades;
        Ok((0..t.horizon).map(|h| t.get(i, j, h)).collect())
    }

    /// Hub setpoints as `{hub_id: {series_name: [...]}}`.
    fn setpoints(&self) -> std::collections::BTreeMap<String, std::collections::BTreeMap<String, Vec<f64>>> {
        self.inner
            .hub_ids
            .iter()
            .zip(&self.inner.profile.hubs)
            .map(|(id, sp)| {
                let series = sp.named_series().into_iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect();
                (id.clone(), series)
            })
            .collect()
    }

    /// The full result as nested Python objects.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "DispatchResult(W={:.6}, status={:?}, iterations={})",
            self.inner.social_cost, self.inner.status, self.inner.iterations
        )
    }
}

/// Uniform price used when a call does not name one, CHF/kWh.
const DEFAULT_PRICE: f64 = 0.18;

/// A float means a uniform price; otherwise a `Prices` object.
fn price_arg(s: &Scenario, price: Option<&Bound<'_, PyAny>>) -> PyResult<PriceProfile> {
    let Some(price) = price else {
        return Ok(PriceProfile::uniform(s, DEFAULT_PRICE));
    };
    if let Ok(p) = price.cast::<PyPrices>() {
        let p = p.get();
        if p.inner.num_hubs != s.num_hubs() || p.inner.horizon != s.horizon_hours {
            return Err(PyValueError::new_err("price profile does not match the scenario"));
        }
        return Ok(p.inner.clone());
    }
    let value: f64 = price
        .extract()
        .map_err(|_| PyValueError::new_err("price must be a float or a Prices object"))?;
    Ok(PriceProfile::uniform(s, value))
}

fn solver_arg(s: &Scenario, mode: &str, rho: Option<f64>, tol: Option<f64>, max_iter: Option<usize>) -> PyResult<Solver> {
    match mode {
        "central" => Ok(Solver::Central(qp::QpSettings::default())),
        "admm" => {
            let mut cfg = AdmmConfig::for_scenario(s);
            if let Some(rho) = rho {
                cfg.rho = rho;
            }
            if let Some(tol) = tol {
                cfg.tol = tol;
            }
            if let Some(m) = max_iter {
                cfg.max_iter = m;
            }
            Ok(Solver::Admm(cfg))
        }
        other => Err(PyValueError::new_err(format!("mode must be `central` or `admm`, got `{other}`"))),
    }
}

/// Non-trading costs `J_i^nt` per hub, CHF.
#[pyfunction]
fn baselines(py: Python<'_>, scenario: &PyScenario) -> PyResult<Vec<f64>> {
    let s = scenario.inner.clone();
    py.detach(move || dispatch::baselines(&s, &qp::QpSettings::default()))
        .map_err(runtime_err)
}

/// Solves the trading game at fixed prices. `mode` is `central` (one joint
/// QP) or `admm` (distributed consensus between hubs).
#[pyfunction]
#[pyo3(signature = (scenario, price = None, mode = "central", rho = None, tol = None, max_iter = None))]
fn solve_dispatch(
    py: Python<'_>,
    scenario: &PyScenario,
    price: Option<&Bound<'_, PyAny>>,
    mode: &str,
    rho: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<PyDispatchResult> {
    let s = scenario.inner.clone();
    let prices = price_arg(&s, price)?;
    let solver = solver_arg(&s, mode, rho, tol, max_iter)?;
    py.detach(move || solver.solve(&s, &prices))
        .map(|inner| PyDispatchResult { inner })
        .map_err(runtime_err)
}

/// `{"W", "W_nt", "reduction_fraction", "j", "j_nt"}` at the given prices.
#[pyfunction]
#[pyo3(signature = (scenario, price = None, mode = "central"))]
fn social_cost_gap<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    price: Option<&Bound<'py, PyAny>>,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let s = scenario.inner.clone();
    let prices = price_arg(&s, price)?;
    let solver = solver_arg(&s, mode, None, None, None)?;
    let (gap, _) = py
        .detach(move || dispatch::social_cost_gap(&s, &prices, &solver))
        .map_err(runtime_err)?;
    to_py(py, &gap)
}

fn fixed_dispatch(s: &Scenario) -> PyResult<FixedDispatch> {
    let settings = qp::QpSettings::default();
    let r = dispatch::solve_centralized(s, &PriceProfile::zero(s), &settings).map_err(runtime_err)?;
    let j_nt = dispatch::baselines(s, &settings).map_err(runtime_err)?;
    Ok(FixedDispatch::from_result(&r, j_nt))
}

/// Runs the price mediator from `start` and returns `(prices, report)`.
/// Trades are fixed at the equilibrium, which prices do not move.
#[pyfunction]
#[pyo3(signature = (scenario, start = None, safeguard = false, beta = None, max_iter = 5000, tol = None))]
fn mediate<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    start: Option<&Bound<'py, PyAny>>,
    safeguard: bool,
    beta: Option<f64>,
    max_iter: usize,
    tol: Option<f64>,
) -> PyResult<(PyPrices, Bound<'py, PyAny>)> {
    let s = scenario.inner.clone();
    let start = price_arg(&s, start)?;
    let mut cfg = MediationConfig {
        step_beta: beta,
        safeguard,
        max_iter,
        ..Default::default()
    };
    if let Some(tol) = tol {
        cfg.tol = tol;
    }
    let model = py.detach(|| fixed_dispatch(&s))?;
    let (prices, report) = pricing::run_mediation(&model, &start, &cfg).map_err(value_err)?;
    Ok((PyPrices::wrap(&s, prices), to_py(py, &report)?))
}

/// Constructs prices leaving every hub no worse off than without trading
/// and returns `(prices, certificate)`.
#[pyfunction]
#[pyo3(signature = (scenario, hourly = false))]
fn certificate<'py>(py: Python<'py>, scenario: &PyScenario, hourly: bool) -> PyResult<(PyPrices, Bound<'py, PyAny>)> {
    let s = scenario.inner.clone();
    let model = py.detach(|| fixed_dispatch(&s))?;
    let agg = if hourly { Aggregation::Hourly } else { Aggregation::Horizon };
    let cert = pricing::construct_beneficial_prices(&model, agg).map_err(runtime_err)?;
    Ok((PyPrices::wrap(&s, cert.prices.clone()), to_py(py, &cert)?))
}

/// Population variance of the normalized cost reductions.
#[pyfunction]
fn fairness_metric(d: Vec<f64>) -> f64 {
    pricing::fairness_metric(&d)
}

/// `(J_nt − J) / J_nt`.
#[pyfunction]
fn cost_reduction(j_nt: f64, j: f64) -> PyResult<f64> {
    pricing::cost_reduction(j_nt, j).map_err(value_err)
}

fn matrix(rows: Option<Vec<Vec<f64>>>, cols: usize, what: &str) -> PyResult<DMatrix<f64>> {
    let rows = rows.unwrap_or_default();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: row {bad} has {} entries, expected {cols}", rows[bad].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

/// Solves `min ½xᵀPx + qᵀx  s.t.  A x = b,  G x ≤ h,  lb ≤ x ≤ ub` and
/// returns `{"x", "objective", "status", "iterations", "kkt"}`.
#[pyfunction]
#[pyo3(signature = (p, q, a = None, b = None, g = None, h = None, lb = None, ub = None, tol = 1e-8, max_iter = 50_000))]
#[allow(clippy::too_many_arguments)]
fn solve_qp<'py>(
    py: Python<'py>,
    p: Vec<Vec<f64>>,
    q: Vec<f64>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    g: Option<Vec<Vec<f64>>>,
    h: Option<Vec<f64>>,
    lb: Option<Vec<f64>>,
    ub: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let n = q.len();
    let quad = matrix(Some(p), n, "P")?;
    if quad.nrows() != n {
        return Err(PyValueError::new_err(format!("P has {} rows, expected {n}", quad.nrows())));
    }
    let mut problem = QpProblem::new(quad, DVector::from_vec(q));
    let eq = matrix(a, n, "A")?;
    let eq_rhs = DVector::from_vec(b.unwrap_or_default());
    if eq.nrows() != eq_rhs.len() {
        return Err(PyValueError::new_err("A and b disagree in length"));
    }
    problem = problem.with_equalities(eq, eq_rhs);
    let ineq = matrix(g, n, "G")?;
    let ineq_rhs = DVector::from_vec(h.unwrap_or_default());
    if ineq.nrows() != ineq_rhs.len() {
        return Err(PyValueError::new_err("G and h disagree in length"));
    }
    problem = problem.with_inequalities(ineq, ineq_rhs);
    if lb.is_some() || ub.is_some() {
        let lower = lb.unwrap_or_else(|| vec![f64::NEG_INFINITY; n]);
        let upper = ub.unwrap_or_else(|| vec![f64::INFINITY; n]);
        if lower.len() != n || upper.len() != n {
            return Err(PyValueError::new_err("bounds must have one entry per variable"));
        }
        problem = problem.with_bounds(DVector::from_vec(lower), DVector::from_vec(upper));
    }
    let sol = py
        .detach(|| qp::solve_qp(&problem, tol, max_iter))
        .map_err(value_err)?;
    let kkt = qp::check_kkt(&problem, &sol).map_err(runtime_err)?;
    let status = match sol.status {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
        QpStatus::MaxIter => "max_iter",
    };
    #[derive(Serialize)]
    struct Out<'a> {
        x: &'a [f64],
        objective: f64,
        status: &'a str,
        iterations: usize,
        kkt: f64,
    }
    to_py(
        py,
        &Out {
            x: sol.x.as_slice(),
            objective: sol.objective,
            status,
            iterations: sol.iterations,
            kkt: kkt.max(),
        },
    )
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyPrices>()?;
    m.add_class::<PyDispatchResult>()?;
    m.add_function(wrap_pyfunction!(baselines, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dispatch, m)?)?;
    m.add_function(wrap_pyfunction!(social_cost_gap, m)?)?;
    m.add_function(wrap_pyfunction!(mediate, m)?)?;
    m.add_function(wrap_pyfunction!(certificate, m)?)?;
    m.add_function(wrap_pyfunction!(fairness_metric, m)?)?;
    m.add_function(wrap_pyfunction!(cost_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
fn fairtrade_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
