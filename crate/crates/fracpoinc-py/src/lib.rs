//! Python bindings: special functions, domains and grids, operator assembly,
//! the eigensolver and the experiment reports.

use std::sync::Arc;

use fracpoinc::assembly::{self, AssemblyConfig, FarFieldRule, NonlocalOperator, SeminormKind};
use fracpoinc::domain::{self, DomainSpec, Grid, GridFunction, Interval};
use fracpoinc::eigensolver::{self, EigenResult, SolverConfig, SolverMethod};
use fracpoinc::experiments::{self, IdentityGrid, Numerics};
use fracpoinc::report::ExperimentReport;
use fracpoinc::special_fn::{self, FracParams};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for fracpoinc::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(|e| match e {
            fracpoinc::Error::Io(_) | fracpoinc::Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        })
    }
}

fn parse_kind(kind: &str) -> PyResult<SeminormKind> {
    match kind {
        "dirichlet" => Ok(SeminormKind::Dirichlet),
        "regional" => Ok(SeminormKind::Regional),
        _ => Err(PyValueError::new_err(format!("kind must be 'dirichlet' or 'regional', got '{kind}'"))),
    }
}

fn intervals(factors: &[(f64, f64)]) -> PyResult<Vec<Interval>> {
    factors.iter().map(|&(a, b)| Interval::new(a, b).or_raise()).collect()
}

#[pyfunction]
fn gamma(x: f64) -> PyResult<f64> {
    special_fn::gamma(x).or_raise()
}

#[pyfunction]
fn beta(x: f64, y: f64) -> PyResult<f64> {
    special_fn::beta(x, y).or_raise()
}

/// Surface area of the unit sphere in R^(k+1).
#[pyfunction]
fn sphere_area(k: usize) -> PyResult<f64> {
    special_fn::sphere_area(k).or_raise()
}

#[pyfunction]
fn c_flap(n: usize, s: f64, p: f64) -> PyResult<f64> {
    special_fn::c_flap(&FracParams::new(n, s, p).or_raise()?).or_raise()
}

#[pyfunction]
fn theta(m: usize, n: usize, s: f64, p: f64) -> PyResult<f64> {
    special_fn::theta(&FracParams::new(n, s, p).or_raise()?.with_free_dims(m).or_raise()?).or_raise()
}

#[pyfunction]
fn cos_power_integral(n: usize, s: f64, p: f64) -> PyResult<f64> {
    special_fn::cos_power_integral(n, s, p).or_raise()
}

/// Axis-aligned box given by `(a, b)` factors.
#[pyclass(name = "Domain", frozen)]
struct PyDomain(DomainSpec);

#[pymethods]
impl PyDomain {
    #[new]
    fn new(factors: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyDomain(DomainSpec::boxed(intervals(&factors)?).or_raise()?))
    }

    /// The cylinder (ell * omega1) x omega.
    #[staticmethod]
    fn cylinder(ell: f64, omega1: Vec<(f64, f64)>, omega: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyDomain(domain::cylinder(ell, &intervals(&omega1)?, &intervals(&omega)?).or_raise()?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    #[getter]
    fn factors(&self) -> Vec<(f64, f64)> {
        self.0.factors().iter().map(|f| (f.a, f.b)).collect()
    }

    fn dilate(&self, t: f64) -> PyResult<Self> {
        Ok(PyDomain(domain::dilate(&self.0, t).or_raise()?))
    }

    fn translate(&self, shift: Vec<f64>) -> PyResult<Self> {
        Ok(PyDomain(self.0.translate(&shift).or_raise()?))
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        self.0.contains(&x)
    }

    /// ∫ over the complement of |x − y|^(−n−sp) dy.
    fn exterior_kernel_weight(&self, x: Vec<f64>, s: f64, p: f64) -> PyResult<f64> {
        domain::exterior_kernel_weight(&x, &self.0, s, p).or_raise()
    }

    fn __repr__(&self) -> String {
        let f: Vec<String> = self.0.factors().iter().map(|f| format!("({}, {})", f.a, f.b)).collect();
        format!("Domain([{}])", f.join(", "))
    }
}

/// Cell-centred tensor grid.
#[pyclass(name = "Grid", frozen)]
struct PyGrid(Arc<Grid>);

#[pymethods]
impl PyGrid {
    /// `stretched` keeps the cell count of the free factors of a cylinder.
    #[new]
    #[pyo3(signature = (domain, h, stretched = false))]
    fn new(domain: &PyDomain, h: f64, stretched: bool) -> PyResult<Self> {
        let grid = if stretched { domain::build_cylinder_grid(&domain.0, h) } else { domain::build_grid(&domain.0, h) };
        Ok(PyGrid(Arc::new(grid.or_raise()?)))
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn counts(&self) -> Vec<usize> {
        self.0.counts().to_vec()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.0.spacing().to_vec()
    }

    #[getter]
    fn cell_volume(&self) -> f64 {
        self.0.cell_volume()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        self.0.nodes()
    }
}

/// Assembled pair and exterior weights.
#[pyclass(name = "Operator", frozen)]
struct PyOperator(Arc<NonlocalOperator>);

impl PyOperator {
    fn function(&self, values: Vec<f64>) -> PyResult<GridFunction> {
        GridFunction::new(self.0.grid().clone(), values).or_raise()
    }
}

#[pymethods]
impl PyOperator {
    #[new]
    #[pyo3(signature = (grid, s, p, kind = "dirichlet", exact_far_field = false))]
    fn new(grid: &PyGrid, s: f64, p: f64, kind: &str, exact_far_field: bool) -> PyResult<Self> {
        let cfg = AssemblyConfig {
            far_field_rule: if exact_far_field { FarFieldRule::Exact } else { FarFieldRule::Midpoint },
            ..AssemblyConfig::default()
        };
        let op = assembly::assemble(grid.0.clone(), s, p, parse_kind(kind)?, &cfg).or_raise()?;
        Ok(PyOperator(Arc::new(op)))
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    fn energy(&self, values: Vec<f64>) -> PyResult<f64> {
        assembly::energy(&self.0, &self.function(values)?).or_raise()
    }

    fn gradient(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(assembly::energy_gradient(&self.0, &self.function(values)?).or_raise()?.into_values())
    }

    fn rayleigh(&self, values: Vec<f64>) -> PyResult<f64> {
        assembly::rayleigh(&self.0, &self.function(values)?).or_raise()
    }

    fn pair_weight(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.0.node_count();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("node index out of range for {n} nodes")));
        }
        Ok(self.0.pair_weight(i, j))
    }

    fn exterior_weights(&self) -> Vec<f64> {
        self.0.exterior_weights().to_vec()
    }

    /// Writes the weights in the FPNL binary format.
    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.write_fpnl(&path).or_raise()
    }
}

#[pyclass(name = "Eigenpair", frozen, get_all)]
struct PyEigenpair {
    eigenvalue: f64,
    eigenfunction: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

impl From<EigenResult> for PyEigenpair {
    fn from(r: EigenResult) -> Self {
        PyEigenpair {
            eigenvalue: r.lambda,
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
            eigenfunction: r.eigenfunction.into_values(),
        }
    }
}

/// First eigenpair; `method` is "auto", "linear" or "descent".
#[pyfunction]
#[pyo3(signature = (operator, method = "auto", restarts = 1, seed = 7, max_iterations = 20_000))]
fn solve(py: Python<'_>, operator: &PyOperator, method: &str, restarts: usize, seed: u64, max_iterations: usize) -> PyResult<PyEigenpair> {
    let method = match method {
        "auto" => SolverMethod::Auto,
        "linear" => SolverMethod::Linear,
        "descent" => SolverMethod::Descent,
        _ => return Err(PyValueError::new_err(format!("unknown method '{method}'"))),
    };
    let cfg = SolverConfig { method, restarts, rng_seed: seed, max_iterations, ..SolverConfig::default() };
    let op = operator.0.clone();
    let result = py.detach(move || eigensolver::solve(&op, &cfg)).or_raise()?;
    Ok(result.into())
}

#[pyclass(name = "Report", frozen, get_all)]
struct PyReport {
    experiment_id: String,
    passed: bool,
    converged: bool,
    parameters: Vec<(String, String)>,
    measurements: Vec<(String, f64)>,
    /// (description, lhs, relation, rhs, pass)
    checks: Vec<(String, f64, String, f64, bool)>,
    notes: Vec<String>,
    wall_time: f64,
    summary_text: String,
    csv_text: String,
}

#[pymethods]
impl PyReport {
    fn summary(&self) -> String {
        self.summary_text.clone()
    }

    fn csv(&self) -> String {
        self.csv_text.clone()
    }

    fn __repr__(&self) -> String {
        format!("Report({}, {})", self.experiment_id, if self.passed { "PASS" } else { "FAIL" })
    }
}

impl TryFrom<ExperimentReport> for PyReport {
    type Error = PyErr;

    fn try_from(r: ExperimentReport) -> PyResult<Self> {
        let mut csv = Vec::new();
        r.write_csv(&mut csv).or_raise()?;
        Ok(PyReport {
            summary_text: r.summary(),
            csv_text: String::from_utf8_lossy(&csv).into_owned(),
            experiment_id: r.experiment_id,
            passed: r.pass,
            converged: r.converged,
            parameters: r.parameters,
            measurements: r.measurements,
            checks: r
                .bounds_checked
                .into_iter()
                .map(|b| (b.description, b.lhs, b.relation.symbol().to_string(), b.rhs, b.pass))
                .collect(),
            notes: r.notes,
            wall_time: r.wall_time,
        })
    }
}

fn report(py: Python<'_>, job: impl FnOnce() -> fracpoinc::Result<ExperimentReport> + Send) -> PyResult<PyReport> {
    py.detach(job).or_raise()?.try_into()
}

#[pyfunction]
fn run_identities(py: Python<'_>) -> PyResult<PyReport> {
    report(py, || experiments::run_identities(&IdentityGrid::default(), &Numerics::default()))
}

#[pyfunction]
#[pyo3(signature = (p, trials = 10_000, points = 32, seed = 7))]
fn run_picone(py: Python<'_>, p: f64, trials: usize, points: usize, seed: u64) -> PyResult<PyReport> {
    report(py, || experiments::run_picone(trials, points, p, seed, &Numerics::default()))
}

#[pyfunction]
#[pyo3(signature = (s, h = 1.0 / 128.0))]
fn run_oracle(py: Python<'_>, s: f64, h: f64) -> PyResult<PyReport> {
    report(py, || experiments::run_oracle(s, h, &Numerics::default()))
}

#[pyfunction]
#[pyo3(signature = (domain, t, s, p, h))]
fn run_dilation(py: Python<'_>, domain: &PyDomain, t: f64, s: f64, p: f64, h: f64) -> PyResult<PyReport> {
    let d = domain.0.clone();
    report(py, move || experiments::run_dilation(&d, t, s, p, h, &Numerics::default()))
}

#[pyfunction]
#[pyo3(signature = (trials = 50, seed = 7))]
fn run_gradient_check(py: Python<'_>, trials: usize, seed: u64) -> PyResult<PyReport> {
    report(py, || experiments::run_gradient_check(trials, seed, &Numerics::default()))
}

#[pyfunction]
#[pyo3(signature = (s = 0.5, p = 2.0, angular_nodes = 256, line_nodes = 256))]
fn run_loss_sloan(py: Python<'_>, s: f64, p: f64, angular_nodes: usize, line_nodes: usize) -> PyResult<PyReport> {
    report(py, || experiments::run_loss_sloan(s, p, angular_nodes, line_nodes, &Numerics::default()))
}

/// Monotonicity, sandwich and limit reports for cylinders ℓ·(−1,1) × (−1,1).
#[pyfunction]
#[pyo3(signature = (ells, s, p, h))]
fn run_cylinder_sweep(py: Python<'_>, ells: Vec<f64>, s: f64, p: f64, h: f64) -> PyResult<Vec<PyReport>> {
    let reports = py
        .detach(move || -> fracpoinc::Result<Vec<ExperimentReport>> {
            let num = Numerics::default();
            let unit = vec![Interval::new(-1.0, 1.0)?];
            let sweep = experiments::sweep_cylinders(&ells, &unit, &unit, s, p, h, &num)?;
            let mut out = vec![experiments::run_monotonicity(&sweep, &num)?, experiments::run_sandwich(&sweep, &num)?];
            if ells.len() >= 3 {
                out.push(experiments::run_cylinder_limit(&sweep, &num)?);
            }
            Ok(out)
        })
        .or_raise()?;
    reports.into_iter().map(PyReport::try_from).collect()
}

#[pymodule]
#[pyo3(name = "fracpoinc")]
fn fracpoinc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyEigenpair>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_area, m)?)?;
    m.add_function(wrap_pyfunction!(c_flap, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(cos_power_integral, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_identities, m)?)?;
    m.add_function(wrap_pyfunction!(run_picone, m)?)?;
    m.add_function(wrap_pyfunction!(run_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run_dilation, m)?)?;
    m.add_function(wrap_pyfunction!(run_gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_loss_sloan, m)?)?;
    m.add_function(wrap_pyfunction!(run_cylinder_sweep, m)?)?;
    Ok(())
}
