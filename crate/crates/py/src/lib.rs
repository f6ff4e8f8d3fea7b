//! Python bindings: the instance type plus the main solve, certify, and
//! ratio-evaluation entry points. Reports cross the boundary as JSON
//! strings so Python sees exactly what the CLI emits.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pdcluster::certifier::{self, CaseAux, GridConfig};
use pdcluster::gen;
use pdcluster::model::{self, Objective};
use pdcluster::nqis;
use pdcluster::solver::{self, SolverParams};

fn objective_of(name: &str) -> PyResult<Objective> {
    Objective::parse(name).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A discrete clustering instance.
#[pyclass(name = "Instance", skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: model::Instance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (objective, clients, facilities, label=None))]
    fn new(
        objective: &str,
        clients: Vec<Vec<f64>>,
        facilities: Vec<Vec<f64>>,
        label: Option<String>,
    ) -> PyResult<Self> {
        let inner = model::Instance::new(objective_of(objective)?, clients, facilities, label)
            .map_err(runtime)?;
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: model::Instance::from_json(text).map_err(runtime)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn objective(&self) -> &'static str {
        self.inner.objective.as_str()
    }

    #[getter]
    fn num_clients(&self) -> usize {
        self.inner.num_clients()
    }

    #[getter]
    fn num_facilities(&self) -> usize {
        self.inner.num_facilities()
    }

    /// Brute-force optimum: (sorted center indices, cost).
    fn brute_force_opt(&self, k: usize) -> PyResult<(Vec<usize>, f64)> {
        let opt = model::brute_force_opt(&self.inner, k).map_err(runtime)?;
        Ok((opt.indices, opt.cost))
    }

    /// Assignment cost of an explicit center set.
    fn assignment_cost(&self, centers: Vec<usize>) -> PyResult<f64> {
        model::assignment_cost(&self.inner, &centers).map_err(runtime)
    }

    /// Full pipeline solve: (center indices, cost).
    #[pyo3(signature = (k, seed=0, mc_samples=2000))]
    fn solve(&self, k: usize, seed: u64, mc_samples: usize) -> PyResult<(Vec<usize>, f64)> {
        let mut params = SolverParams::default_for(self.inner.objective);
        params.rng_seed = seed;
        params.mc_samples = mc_samples;
        let sol = solver::solve_k(&self.inner, k, &params).map_err(runtime)?;
        Ok((sol.indices, sol.cost))
    }

    /// Single-λ LMP diagnostics as a JSON string.
    #[pyo3(signature = (lambda_, seed=0, mc_samples=2000))]
    fn lmp(&self, lambda_: f64, seed: u64, mc_samples: usize) -> PyResult<String> {
        let mut params = SolverParams::default_for(self.inner.objective);
        params.rng_seed = seed;
        params.mc_samples = mc_samples;
        let outcome = solver::lmp_solve(&self.inner, lambda_, &params).map_err(runtime)?;
        serde_json::to_string(&outcome).map_err(runtime)
    }

    /// Dual growth at one λ: (alpha vector, tight facilities, t values).
    fn grow_duals(&self, lambda_: f64) -> PyResult<(Vec<f64>, Vec<usize>, Vec<f64>)> {
        let g = pdcluster::growth::grow_duals(&self.inner, lambda_).map_err(runtime)?;
        let t = g.tight.iter().map(|&i| g.t[i]).collect();
        Ok((g.alpha, g.tight.clone(), t))
    }

    /// Layer sizes (|I1|, |I2|, |I3|) of the pruning at one λ.
    fn nqis_sizes(&self, lambda_: f64) -> PyResult<(usize, usize, usize)> {
        let params = SolverParams::default_for(self.inner.objective);
        let g = pdcluster::growth::grow_duals(&self.inner, lambda_).map_err(runtime)?;
        let q = nqis::build_nqis(
            &g,
            &self.inner,
            params.deltas,
            solver::variant_for(self.inner.objective),
        )
        .map_err(runtime)?;
        Ok((q.i1.len(), q.i2.len(), q.i3.len()))
    }
}

/// Worst-case cost-to-dual envelope at inclusion probability p.
#[pyfunction]
fn rho(objective: &str, p: f64) -> PyResult<f64> {
    let obj = objective_of(objective)?;
    certifier::rho(obj, p, certifier::default_deltas(obj)).map_err(runtime)
}

/// Per-group envelope value.
#[pyfunction]
fn group_rho(objective: &str, group: usize, p: f64) -> PyResult<f64> {
    let obj = objective_of(objective)?;
    certifier::group_rho(obj, group, p, certifier::default_deltas(obj)).map_err(runtime)
}

/// Closed-form value of one tagged analysis case.
#[pyfunction]
#[pyo3(signature = (objective, case_id, p, a=None, b=None, c=None, c1=None, c2=None, h=None))]
#[allow(clippy::too_many_arguments)]
fn eval_case_bound(
    objective: &str,
    case_id: &str,
    p: f64,
    a: Option<u32>,
    b: Option<u32>,
    c: Option<u32>,
    c1: Option<u32>,
    c2: Option<u32>,
    h: Option<u32>,
) -> PyResult<f64> {
    let obj = objective_of(objective)?;
    let aux = CaseAux { a, b, c, c1, c2, h };
    certifier::eval_case_bound(obj, case_id, p, certifier::default_deltas(obj), aux)
        .map_err(runtime)
}

/// Coarse end-to-end max-min ratio bound.
#[pyfunction]
fn final_ratio_bound(objective: &str) -> PyResult<f64> {
    let obj = objective_of(objective)?;
    let p1 = certifier::default_p1(obj);
    let p0 = certifier::default_p0(obj);
    let hi = match obj {
        Objective::KMeans => 4.1875,
        Objective::KMedian => 6.8,
    };
    certifier::final_ratio_bound(obj, p1, p0, (1.0, hi)).map_err(runtime)
}

/// Grid certification; returns the full report as a JSON string.
#[pyfunction]
#[pyo3(signature = (objective, target, include_cells=false))]
fn certify(objective: &str, target: f64, include_cells: bool) -> PyResult<String> {
    let obj = objective_of(objective)?;
    let grid = GridConfig::default_for(obj);
    let mut report = certifier::grid_certify(obj, target, &grid).map_err(runtime)?;
    if !include_cells {
        report.cells.clear();
    }
    serde_json::to_string(&report).map_err(runtime)
}

/// Reproducible random instance.
#[pyfunction]
#[pyo3(signature = (n, m, d, kind="uniform", objective="kmeans", seed=0))]
fn gen_random_instance(
    n: usize,
    m: usize,
    d: usize,
    kind: &str,
    objective: &str,
    seed: u64,
) -> PyResult<PyInstance> {
    let inner = gen::gen_random_instance(
        n,
        m,
        d,
        gen::RandomKind::parse(kind).map_err(runtime)?,
        objective_of(objective)?,
        seed,
    )
    .map_err(runtime)?;
    Ok(PyInstance { inner })
}

/// Adversarial two-gadget instance; returns (instance, recommended lambda).
#[pyfunction]
fn gen_lower_bound_instance(
    t: f64,
    copies: usize,
    h: usize,
    eps: f64,
) -> PyResult<(PyInstance, f64)> {
    let lb = gen::gen_lower_bound_instance(t, copies, h, eps).map_err(runtime)?;
    Ok((PyInstance { inner: lb.instance }, lb.lambda))
}

#[pymodule]
fn pdcluster_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(rho, m)?)?;
    m.add_function(wrap_pyfunction!(group_rho, m)?)?;
    m.add_function(wrap_pyfunction!(eval_case_bound, m)?)?;
    m.add_function(wrap_pyfunction!(final_ratio_bound, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_instance, m)?)?;
    m.add_function(wrap_pyfunction!(gen_lower_bound_instance, m)?)?;
    Ok(())
}
