//! Python bindings: shapes, feeds, single runs, optimization and staged protocols.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use memsep::model::{self, ShapeCheck};
use memsep::multistage::{self, StagePlan, StageSpec};
use memsep::optim::{self, Fidelity, Method, ProblemSpec, SearchConfig};
use memsep::sim::{self, Termination};
use memsep::{ModelError, OptError, SimError, StageError};

fn model_err(e: ModelError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Model(m) => model_err(m),
        SimError::InvalidConfig(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn opt_err(e: OptError) -> PyErr {
    match e {
        OptError::Sim(s) => sim_err(s),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn stage_err(e: StageError) -> PyErr {
    match e {
        StageError::Sim(s) => sim_err(s),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Initial pore radius as a polynomial in depth.
#[pyclass(name = "ShapeFunction", module = "memsep", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyShape(model::ShapeFunction);

#[pymethods]
impl PyShape {
    #[new]
    fn new(coefficients: Vec<f64>) -> PyResult<Self> {
        model::ShapeFunction::new(coefficients)
            .map(Self)
            .map_err(model_err)
    }

    #[staticmethod]
    fn linear(intercept: f64, slope: f64) -> Self {
        Self(model::ShapeFunction::linear(intercept, slope))
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.0.coefficients().to_vec()
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    /// `(feasible, x, value)` of the first radius outside `(0, 1]`.
    #[pyo3(signature = (n_check = model::DEFAULT_NX))]
    fn check(&self, n_check: usize) -> PyResult<(bool, Option<f64>, Option<f64>)> {
        Ok(
            match model::validate_shape(&self.0, n_check).map_err(model_err)? {
                ShapeCheck::Feasible => (true, None, None),
                ShapeCheck::Violation { x, value } => (false, Some(x), Some(value)),
            },
        )
    }

    fn __repr__(&self) -> String {
        format!("ShapeFunction({:?})", self.0.coefficients())
    }
}

/// Feed composition.
#[pyclass(name = "FeedSpec", module = "memsep", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFeed(model::FeedSpec);

#[pymethods]
impl PyFeed {
    /// Species given as `(xi, lambda, beta)` triples.
    #[new]
    fn new(species: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        let species = species
            .into_iter()
            .map(|(xi, lambda, beta)| model::Species { xi, lambda, beta })
            .collect();
        model::FeedSpec::new(species).map(Self).map_err(model_err)
    }

    /// Deposition coefficients `beta_i * lambda1`.
    #[staticmethod]
    #[pyo3(signature = (xi, beta, lambda1 = 1.0))]
    fn coupled(xi: Vec<f64>, beta: Vec<f64>, lambda1: f64) -> PyResult<Self> {
        model::FeedSpec::coupled(&xi, &beta, lambda1)
            .map(Self)
            .map_err(model_err)
    }

    #[staticmethod]
    #[pyo3(signature = (xi, beta, lambda1 = 1.0))]
    fn two_species(xi: f64, beta: f64, lambda1: f64) -> PyResult<Self> {
        model::FeedSpec::two_species(xi, beta, lambda1)
            .map(Self)
            .map_err(model_err)
    }

    /// Adds screened deposition as `(lambda_clean, lambda_fouled, h0)` per species.
    fn with_screening(&self, screening: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        let params = screening
            .into_iter()
            .map(|(lambda_clean, lambda_fouled, h0)| model::ScreeningParams {
                lambda_clean,
                lambda_fouled,
                h0,
            })
            .collect();
        self.0
            .clone()
            .with_screening(params)
            .map(Self)
            .map_err(model_err)
    }

    #[getter]
    fn inlet(&self) -> Vec<f64> {
        self.0.inlet()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn sim_config(
    mode: &str,
    steps: Option<usize>,
    n_x: Option<usize>,
    dt: Option<f64>,
    flux_fraction: Option<f64>,
    screening: bool,
) -> PyResult<sim::SimConfig> {
    let mut cfg = match (mode, steps) {
        ("constant_pressure", None) => sim::SimConfig::constant_pressure(),
        ("constant_flux", Some(n)) => sim::SimConfig::constant_flux(n),
        ("constant_flux", None) => return Err(PyValueError::new_err("constant_flux needs steps")),
        ("constant_pressure", Some(_)) => {
            return Err(PyValueError::new_err("steps applies to constant_flux only"))
        }
        (other, _) => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    if let Some(v) = n_x {
        cfg.n_x = v;
    }
    if let Some(v) = dt {
        cfg.dt = v;
    }
    if let Some(f) = flux_fraction {
        cfg.termination = Termination::FluxFraction(f);
    }
    cfg.screening = screening;
    cfg.validate().map_err(sim_err)?;
    Ok(cfg)
}

/// Time series of one simulated filter.
#[pyclass(name = "SimRecord", module = "memsep", frozen)]
struct PyRecord(sim::SimRecord);

#[pymethods]
impl PyRecord {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.t.clone()
    }
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.0.u.clone()
    }
    #[getter]
    fn j(&self) -> Vec<f64> {
        self.0.j.clone()
    }
    #[getter]
    fn p0(&self) -> Vec<f64> {
        self.0.p0.clone()
    }
    #[getter]
    fn c_ins(&self) -> Vec<Vec<f64>> {
        self.0.c_ins.clone()
    }
    #[getter]
    fn c_acm(&self) -> Vec<Vec<f64>> {
        self.0.c_acm.clone()
    }
    #[getter]
    fn removal(&self) -> Vec<Vec<f64>> {
        self.0.removal.clone()
    }
    #[getter]
    fn cum_removal(&self) -> Vec<Vec<f64>> {
        self.0.cum_removal.clone()
    }
    #[getter]
    fn final_radii(&self) -> Vec<f64> {
        self.0.final_profile.radii().to_vec()
    }
    #[getter]
    fn stop(&self) -> String {
        format!("{:?}", self.0.stop)
    }
    #[getter]
    fn throughput(&self) -> f64 {
        self.0.throughput()
    }

    /// Final throughput, concentrations, removals, purity and product yield.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = sim::compute_metrics(&self.0, &self.0.inlet).map_err(sim_err)?;
        let d = PyDict::new(py);
        d.set_item("t_final", m.t_final)?;
        d.set_item("throughput", m.throughput)?;
        d.set_item("c_acm", m.c_acm)?;
        d.set_item("cum_removal", m.cum_removal)?;
        d.set_item("purity", m.purity)?;
        d.set_item("product_yield", m.product_yield)?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Runs one filter to termination.
#[pyfunction]
#[pyo3(signature = (shape, feed, mode = "constant_pressure", steps = None, n_x = None, dt = None, flux_fraction = None, screening = false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    shape: &PyShape,
    feed: &PyFeed,
    mode: &str,
    steps: Option<usize>,
    n_x: Option<usize>,
    dt: Option<f64>,
    flux_fraction: Option<f64>,
    screening: bool,
) -> PyResult<PyRecord> {
    let cfg = sim_config(mode, steps, n_x, dt, flux_fraction, screening)?;
    py.detach(|| sim::run(&shape.0, &feed.0, &cfg))
        .map(PyRecord)
        .map_err(sim_err)
}

/// Multistart shape search; returns a dict describing the best shape.
#[pyfunction]
#[pyo3(signature = (
    feed,
    problem = "weighted_throughput",
    weights = (1.0, 0.0),
    method = "slow",
    n_starts = 100,
    seed = 0,
    initial_removal = optim::DEFAULT_INITIAL_REMOVAL,
    cum_removal = optim::DEFAULT_CUM_REMOVAL,
    steps = None,
    degree = 1,
    survey = None,
))]
#[allow(clippy::too_many_arguments)]
fn optimize<'py>(
    py: Python<'py>,
    feed: &PyFeed,
    problem: &str,
    weights: (f64, f64),
    method: &str,
    n_starts: usize,
    seed: u64,
    initial_removal: f64,
    cum_removal: f64,
    steps: Option<usize>,
    degree: usize,
    survey: Option<(usize, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let feed = feed.0.clone();
    let mut spec = match (problem, steps) {
        ("weighted_throughput", None) => {
            ProblemSpec::weighted_throughput(weights.0, weights.1, feed)
        }
        ("yield", None) => ProblemSpec::product_yield(feed),
        ("constant_flux_yield", Some(n)) => ProblemSpec::constant_flux_yield(feed, n),
        ("constant_flux_yield", None) => {
            return Err(PyValueError::new_err("constant_flux_yield needs steps"))
        }
        (other, _) => {
            return Err(PyValueError::new_err(format!(
                "unknown problem {other:?} or steps given for a constant-pressure problem"
            )))
        }
    };
    spec.method = match method {
        "slow" => Method::Slow,
        "fast" => Method::Fast,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    spec.initial_removal_min = initial_removal;
    spec.cum_removal_min = cum_removal;
    let mut search = SearchConfig::polynomial(degree, n_starts, seed);
    search.survey = survey.map(|(n_x, dt)| Fidelity { n_x, dt });
    let result = py
        .detach(|| optim::multistart(&spec, &search))
        .map_err(opt_err)?;
    let d = PyDict::new(py);
    d.set_item("coefficients", result.best.coefficients.clone())?;
    d.set_item("objective", result.evaluation.objective)?;
    d.set_item("feasible", result.feasible)?;
    d.set_item("violation", result.evaluation.feasibility.violation)?;
    d.set_item(
        "initial_removal",
        result.evaluation.feasibility.initial_removal.clone(),
    )?;
    d.set_item("evaluations", result.evaluations)?;
    d.set_item("local_optima", result.local_optima.len())?;
    d.set_item("seed", result.seed)?;
    d.set_item("elapsed", result.elapsed.as_secs_f64())?;
    Ok(d)
}

fn protocol_dict<'py>(
    py: Python<'py>,
    r: &multistage::MultiStageResult,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("stage_filters", r.stage_filters.clone())?;
    d.set_item("stage_uses", r.stage_uses.clone())?;
    d.set_item("total_filters", r.total_filters)?;
    d.set_item("throughput", r.throughput())?;
    d.set_item("concentration", r.final_batch.conc.clone())?;
    d.set_item("cum_removal", r.cum_removal.clone())?;
    d.set_item("purity", r.purity.clone())?;
    d.set_item("product_yield", r.product_yield)?;
    d.set_item("yield_per_filter", r.yield_per_filter)?;
    d.set_item("discarded", r.discarded)?;
    d.set_item("target_met", r.target_met)?;
    Ok(d)
}

/// Staged protocol; `stages` lists filters per stage, `None` adds single filters until the target is met.
#[pyfunction]
#[pyo3(signature = (shape, feed, design_removal, stages = None, target = multistage::DEFAULT_TARGET_REMOVAL))]
fn run_protocol<'py>(
    py: Python<'py>,
    shape: &PyShape,
    feed: &PyFeed,
    design_removal: f64,
    stages: Option<Vec<usize>>,
    target: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut plan = match stages {
        Some(counts) => StagePlan::fixed(design_removal, StageSpec::chain(&counts)),
        None => StagePlan::adaptive(design_removal, 1),
    };
    plan.target = target;
    let cfg = sim::SimConfig::constant_pressure();
    let r = py
        .detach(|| multistage::run_protocol(&plan, &shape.0, &feed.0, &cfg))
        .map_err(stage_err)?;
    protocol_dict(py, &r)
}

/// Ranked stage-ratio sweep; each entry carries its input position and stage counts.
#[pyfunction]
fn sweep<'py>(
    py: Python<'py>,
    shape: &PyShape,
    feed: &PyFeed,
    design_removal: f64,
    candidates: Vec<Vec<usize>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let specs: Vec<Vec<StageSpec>> = candidates.iter().map(|c| StageSpec::chain(c)).collect();
    let cfg = sim::SimConfig::constant_pressure();
    let rows = py
        .detach(|| multistage::sweep_stage_ratios(&specs, design_removal, &shape.0, &feed.0, &cfg))
        .map_err(stage_err)?;
    rows.iter()
        .map(|row| {
            let d = protocol_dict(py, &row.result)?;
            d.set_item("candidate", row.candidate)?;
            d.set_item("stages", candidates[row.candidate].clone())?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "memsep")]
fn memsep_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyShape>()?;
    m.add_class::<PyFeed>()?;
    m.add_class::<PyRecord>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
