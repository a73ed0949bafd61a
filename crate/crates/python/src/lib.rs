//! Python bindings: the prox operators, synthetic data, and a `Problem`
//! class wrapping decoupling and the two solvers. Matrices cross the
//! boundary as lists of rows.

use ::gslope::bench::make_synthetic as synth;
use ::gslope::data::{oscar_lambdas, sparsity_factor, GroupPartition, GroupedDesign, LambdaSequence, WeightScheme};
use ::gslope::decouple::decouple;
use ::gslope::solvers::{solve, Algorithm, Screening, ScreeningGate};
use ::gslope::{sorted_l1, DecoupledProblem, GroupedProblem, GslopeError, SolverConfig, SolverRun};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: GslopeError) -> PyErr {
    match e {
        GslopeError::InvalidArgument(_) | GslopeError::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows of x have different lengths"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `argmin_u ½‖u − v‖² + step·J_λ(u)`.
#[pyfunction]
#[pyo3(signature = (v, lam, step = 1.0))]
fn prox_sorted_l1(v: Vec<f64>, lam: Vec<f64>, step: f64) -> PyResult<Vec<f64>> {
    sorted_l1::prox_sorted_l1(&v, &lam, step).map_err(err)
}

/// Group prox for a partition given as lists of indices.
#[pyfunction]
#[pyo3(signature = (b, groups, lam, step = 1.0))]
fn prox_group_slope(b: Vec<f64>, groups: Vec<Vec<usize>>, lam: Vec<f64>, step: f64) -> PyResult<Vec<f64>> {
    sorted_l1::prox_group_slope(&b, &groups, &lam, step).map_err(err)
}

#[pyfunction]
fn eval_sorted_l1(v: Vec<f64>, lam: Vec<f64>) -> PyResult<f64> {
    sorted_l1::eval_sorted_l1(&v, &lam).map_err(err)
}

/// Returns `(x, y, beta, support)` with `x` as a list of rows.
#[pyfunction]
#[pyo3(signature = (n, d0, k, sigma, seed = 0))]
#[allow(clippy::type_complexity)]
fn make_synthetic(
    n: usize,
    d0: usize,
    k: usize,
    sigma: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<usize>)> {
    let s = synth(n, d0, k, sigma, seed).map_err(err)?;
    Ok((rows(&s.dataset.x), s.dataset.y.as_slice().to_vec(), s.beta, s.support))
}

/// Outcome of one solve.
#[pyclass(name = "SolveResult", frozen, get_all)]
struct PySolveResult {
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    gap: f64,
    active_groups: Vec<usize>,
    screened_groups: Vec<usize>,
    gaps: Vec<f64>,
    wall_time_s: f64,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(iterations={}, converged={}, gap={:e}, active_groups={})",
            self.iterations,
            if self.converged { "True" } else { "False" },
            self.gap,
            self.active_groups.len()
        )
    }
}

impl From<SolverRun> for PySolveResult {
    fn from(run: SolverRun) -> Self {
        Self {
            gap: run.final_gap(),
            gaps: run.certificates.iter().map(|c| c.gap).collect(),
            active_groups: run.active.active().to_vec(),
            screened_groups: run.active.screened(),
            beta: run.beta_final,
            iterations: run.iterations,
            converged: run.converged,
            wall_time_s: run.wall_time_s,
        }
    }
}

/// A decoupled Group SLOPE problem over contiguous groups.
///
/// `lam` takes precedence; otherwise the OSCAR sequence at `p_i = i·e^{−τ}`
/// is used.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    grouped: GroupedProblem,
    decoupled: DecoupledProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (x, y, group_sizes, lam = None, sparsity_index = 1, tau = 3.0, weights = "unit"))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        group_sizes: Vec<usize>,
        lam: Option<Vec<f64>>,
        sparsity_index: u32,
        tau: f64,
        weights: &str,
    ) -> PyResult<Self> {
        let scheme = match weights {
            "unit" => WeightScheme::Unit,
            "sqrt" => WeightScheme::SqrtSize,
            other => return Err(PyValueError::new_err(format!("unknown weight scheme {other:?}"))),
        };
        let partition = GroupPartition::contiguous(&group_sizes, scheme).map_err(err)?;
        let design = GroupedDesign::new(matrix(&x)?, DVector::from_vec(y), partition).map_err(err)?;
        let lambda = match lam {
            Some(l) => LambdaSequence::new(l),
            None => oscar_lambdas(&design, sparsity_factor(sparsity_index, tau)),
        }
        .map_err(err)?;
        let grouped = design.with_lambda(lambda).map_err(err)?;
        let decoupled = decouple(&grouped).map_err(err)?;
        Ok(Self { grouped, decoupled })
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.grouped.lambda().values().to_vec()
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.decoupled.m()
    }

    /// Objective of the original problem at `beta`.
    fn objective(&self, beta: Vec<f64>) -> PyResult<f64> {
        self.grouped.objective(&beta).map_err(err)
    }

    /// Objective of the decoupled problem at the image of `beta`.
    fn decoupled_objective(&self, beta: Vec<f64>) -> PyResult<f64> {
        let b = self.decoupled.forward_map(&beta).map_err(err)?;
        self.decoupled.objective(&b).map_err(err)
    }

    #[pyo3(signature = (solver = "apgd", screening = true, gap_tol = 1e-6, max_iter = 100_000, batch_size = 30, inner_iters = 30, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        py: Python<'_>,
        solver: &str,
        screening: bool,
        gap_tol: f64,
        max_iter: usize,
        batch_size: usize,
        inner_iters: usize,
        seed: u64,
    ) -> PyResult<PySolveResult> {
        let algorithm = match solver {
            "apgd" => Algorithm::Apgd,
            "spgd" => Algorithm::Spgd,
            other => return Err(PyValueError::new_err(format!("unknown solver {other:?}"))),
        };
        let config = SolverConfig {
            max_iter,
            batch_size,
            inner_iters,
            screening: if screening { Screening::On(ScreeningGate::Always) } else { Screening::Off },
            ..SolverConfig::default().with_gap_tol(gap_tol).with_seed(seed)
        };
        let run = py.detach(|| solve(&self.decoupled, algorithm, &config)).map_err(err)?;
        Ok(run.into())
    }
}

#[pymodule]
fn gslope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(prox_sorted_l1, m)?)?;
    m.add_function(wrap_pyfunction!(prox_group_slope, m)?)?;
    m.add_function(wrap_pyfunction!(eval_sorted_l1, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    Ok(())
}
