//! Python bindings for the `sdbc` boundary control solver.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sdbc::assembly::assemble;
use sdbc::control::{ControlOperator, Regularization};
use sdbc::experiment::{run_experiment as run, ExperimentConfig};
use sdbc::fem::{build_space, ElementFamily, ElementKind};
use sdbc::mesh::{build_mesh, Domain};
use sdbc::optimizer::{solve, CgOptions, SolveMethod};
use sdbc::stokes::StokesSolver;

fn err(e: sdbc::error::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_element(s: &str) -> PyResult<ElementKind> {
    match s {
        "mini" => Ok(ElementKind::Mini),
        "th2" => Ok(ElementKind::Th2),
        "th3" => Ok(ElementKind::Th3),
        _ => Err(PyValueError::new_err(format!("unknown element `{s}`"))),
    }
}

fn parse_reg(s: &str) -> PyResult<Regularization> {
    s.parse().map_err(PyValueError::new_err)
}

fn check_len(name: &str, v: &[f64], n: usize) -> PyResult<()> {
    if v.len() != n {
        return Err(PyValueError::new_err(format!("{name} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

fn json_to_py(py: Python<'_>, s: &str) -> PyResult<PyObject> {
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// Discretized control problem on one mesh level.
#[pyclass(module = "pysdbc")]
struct ControlProblem {
    op: ControlOperator,
}

#[pymethods]
impl ControlProblem {
    #[new]
    #[pyo3(signature = (domain = "square", level = 3, element = "mini", regularization = "h12", alpha = 1.0))]
    fn new(domain: &str, level: usize, element: &str, regularization: &str, alpha: f64) -> PyResult<Self> {
        let domain = match domain {
            "square" => Domain::unit_square(),
            "lshape" => Domain::l_shape(),
            _ => return Err(PyValueError::new_err(format!("unknown domain `{domain}`"))),
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PyValueError::new_err("alpha must be positive"));
        }
        let kind = parse_element(element)?;
        let reg = parse_reg(regularization)?;
        let mesh = Arc::new(build_mesh(&domain, level));
        let space = Arc::new(build_space(mesh, ElementFamily::new(kind)));
        let solver = StokesSolver::new(Arc::new(assemble(space))).map_err(err)?;
        Ok(ControlProblem {
            op: ControlOperator::new(Arc::new(solver), reg, alpha),
        })
    }

    #[getter]
    fn n_velocity(&self) -> usize {
        self.op.system().n()
    }

    #[getter]
    fn n_gamma(&self) -> usize {
        self.op.system().n_gamma()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.op.system().space.mesh.h()
    }

    #[getter]
    fn flux_vector(&self) -> Vec<f64> {
        self.op.system().c.clone()
    }

    /// Velocity node coordinates, `None` for bubble nodes.
    fn node_points(&self) -> Vec<Option<(f64, f64)>> {
        self.op.system().space.node_points.iter().map(|p| p.map(|p| (p[0], p[1]))).collect()
    }

    /// Nodal interpolant of `f(x, y) -> (u, v)` as a velocity coefficient vector.
    fn interpolate(&self, f: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        let space = &self.op.system().space;
        let mut out = vec![0.0; space.n];
        for (k, p) in space.node_points.iter().enumerate() {
            if let Some(p) = p {
                let (a, b): (f64, f64) = f.call1((p[0], p[1]))?.extract()?;
                out[space.node_dofs[k][0]] = a;
                out[space.node_dofs[k][1]] = b;
            }
        }
        Ok(out)
    }

    /// Discrete Stokes extension of a boundary vector; returns `(velocity, pressure)`.
    fn apply_e(&self, u: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        check_len("u", &u, self.n_gamma())?;
        let s = self.op.apply_e(&u).map_err(err)?;
        Ok((s.velocity, s.pressure))
    }

    fn apply_e_star(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("g", &g, self.n_velocity())?;
        self.op.apply_e_star(&g).map_err(err)
    }

    fn apply_d(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("u", &u, self.n_gamma())?;
        self.op.apply_d(&u).map_err(err)
    }

    fn apply_t(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("u", &u, self.n_gamma())?;
        self.op.apply_t(&u).map_err(err)
    }

    fn compute_w(&self, y_d: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("y_d", &y_d, self.n_velocity())?;
        self.op.compute_w(&y_d).map_err(err)
    }

    /// Optimal control for the target `y_d` (velocity coefficient vector).
    #[pyo3(signature = (y_d, method = "reduced", tolerance = 1e-10, max_iterations = 5000))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        y_d: Vec<f64>,
        method: &str,
        tolerance: f64,
        max_iterations: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        check_len("y_d", &y_d, self.n_velocity())?;
        let method = match method {
            "reduced" => SolveMethod::Reduced,
            "big" => SolveMethod::Big,
            _ => return Err(PyValueError::new_err(format!("unknown method `{method}`"))),
        };
        let opts = CgOptions {
            tolerance,
            max_iterations,
        };
        let s = py.allow_threads(|| solve(&self.op, &y_d, method, opts)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("control", s.control)?;
        d.set_item("state", s.state.velocity)?;
        d.set_item("adjoint", s.adjoint)?;
        d.set_item("lambda", s.lambda)?;
        d.set_item("lambda0", s.lambda0)?;
        d.set_item("J", s.j)?;
        d.set_item("F", s.f)?;
        d.set_item("first_order_residual", s.first_order_residual)?;
        d.set_item("iterations", s.diagnostics.iterations)?;
        Ok(d)
    }
}

/// Singular exponent of the Stokes corner problem for interior angle `omega`.
#[pyfunction]
fn singular_exponent(py: Python<'_>, omega: f64) -> PyResult<PyObject> {
    let s = sdbc::analysis::singular_exponent(omega).map_err(err)?;
    json_to_py(py, &serde_json::to_string(&s).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

/// Runs a convergence study and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (example, regularization = "h12", element = "mini", levels = None, reference = None, out_dir = None))]
fn run_experiment(
    py: Python<'_>,
    example: u8,
    regularization: &str,
    element: &str,
    levels: Option<(usize, usize)>,
    reference: Option<usize>,
    out_dir: Option<PathBuf>,
) -> PyResult<PyObject> {
    let mut config = ExperimentConfig::for_example(example, parse_reg(regularization)?).map_err(err)?;
    config.element = parse_element(element)?;
    if let Some(r) = reference {
        config.reference_level = r;
    }
    if let Some((a, b)) = levels {
        config.levels = [a, b];
    }
    config.out_dir = out_dir;
    config.validate().map_err(err)?;
    let out = py.allow_threads(|| run(&config)).map_err(err)?;
    json_to_py(py, &serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

#[pymodule]
fn pysdbc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ControlProblem>()?;
    m.add_function(wrap_pyfunction!(singular_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
