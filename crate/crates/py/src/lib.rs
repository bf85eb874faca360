//! Python bindings: systems, synthesis, simulation and worst-case analysis.
//!
//! Matrices cross the boundary as lists of rows; sequences as lists of vectors.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sls::analysis::{regret_certificate, synth_h2, synth_hinf, worst_case_disturbance};
use sls::conic::SolveOptions;
use sls::sim::rollout_controller;
use sls::synth::{synthesize_with, SynthOptions, SynthesisContext, SynthesisMode, SynthesisSpec};
use sls::{CausalController, ConstraintSet, CostWeights, DisturbanceModel, LtvSystem, SystemResponse};

create_exception!(slsregret, SolverError, PyException);

fn py_err(e: sls::Error) -> PyErr {
    match e {
        sls::Error::Solver { .. } | sls::Error::InfeasibleConstraint(_) => SolverError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vectors(seq: &[Vec<f64>]) -> Vec<DVector<f64>> {
    seq.iter().map(|v| DVector::from_column_slice(v)).collect()
}

fn lists(seq: &[DVector<f64>]) -> Vec<Vec<f64>> {
    seq.iter().map(|v| v.iter().copied().collect()).collect()
}

/// Time-invariant linear system over a finite horizon.
#[pyclass(module = "slsregret", frozen)]
struct System {
    inner: LtvSystem,
}

#[pymethods]
impl System {
    #[new]
    #[pyo3(signature = (a, b, horizon, e=None))]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, horizon: usize, e: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let a = matrix(&a)?;
        let e = match e {
            Some(e) => matrix(&e)?,
            None => DMatrix::identity(a.nrows(), a.nrows()),
        };
        let inner = LtvSystem::time_invariant(a, matrix(&b)?, e, horizon).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Discretised mass-spring-damper with spring constant `c` and damping `d`.
    #[staticmethod]
    fn spring_damper(c: f64, d: f64, ts: f64, horizon: usize) -> PyResult<Self> {
        let (a, b, e) = sls::model::spring_damper(c, d, ts);
        let inner = LtvSystem::time_invariant(a, b, e, horizon).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn disturbance_dim(&self) -> usize {
        self.inner.disturbance_dim()
    }
}

/// A system with constant cost weights and its non-causal benchmark.
#[pyclass(module = "slsregret", frozen)]
struct Problem {
    costs: CostWeights,
    ctx: SynthesisContext,
}

#[pymethods]
impl Problem {
    #[new]
    fn new(system: &System, q: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<Self> {
        let costs = CostWeights::constant(matrix(&q)?, matrix(&r)?, system.inner.horizon()).map_err(py_err)?;
        let ctx = SynthesisContext::new(&system.inner, &costs).map_err(py_err)?;
        Ok(Self { costs, ctx })
    }

    /// Cost of the optimal non-causal input sequence.
    fn benchmark_cost(&self, x0: Vec<f64>, w: Vec<Vec<f64>>) -> PyResult<f64> {
        let delta = self.ctx.system.perturbation(&DVector::from_vec(x0), &vectors(&w)).map_err(py_err)?;
        Ok(self.ctx.oracle.benchmark_cost(&delta))
    }

    /// The benchmark cost matrix over the stacked perturbation `[x0; w]`.
    fn benchmark_matrix(&self) -> Vec<Vec<f64>> {
        rows(self.ctx.oracle.o())
    }

    /// Regret-optimal controller. `mode` is `energy_regret`, `pointwise_regret`
    /// or `adversarial_x0`; give `omega` for the energy ball or `p` for the
    /// pointwise ellipsoid.
    #[pyo3(signature = (mode, x0=None, omega=None, p=None, hx=None, hu=None, tol=1e-8))]
    #[allow(clippy::too_many_arguments)]
    fn synthesize(
        &self,
        py: Python<'_>,
        mode: &str,
        x0: Option<Vec<f64>>,
        omega: Option<f64>,
        p: Option<Vec<Vec<f64>>>,
        hx: Option<Vec<Vec<f64>>>,
        hu: Option<Vec<Vec<f64>>>,
        tol: f64,
    ) -> PyResult<Controller> {
        let mode = match mode {
            "energy_regret" => SynthesisMode::EnergyRegret,
            "pointwise_regret" => SynthesisMode::PointwiseRegret,
            "adversarial_x0" => SynthesisMode::AdversarialX0,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let disturbance = match (omega, p) {
            (Some(w), None) => DisturbanceModel::energy(w),
            (None, Some(p)) => DisturbanceModel::ellipsoid(matrix(&p)?),
            (None, None) if mode == SynthesisMode::AdversarialX0 => DisturbanceModel::energy(0.0),
            _ => return Err(PyValueError::new_err("give exactly one of omega and p")),
        }
        .map_err(py_err)?;
        let (n, m) = (self.ctx.system.state_dim(), self.ctx.system.input_dim());
        let constraints = match (hx, hu) {
            (None, None) => None,
            (hx, hu) => {
                let hx = hx.map_or_else(|| Ok(DMatrix::zeros(0, n)), |h| matrix(&h))?;
                let hu = hu.map_or_else(|| Ok(DMatrix::zeros(0, m)), |h| matrix(&h))?;
                Some(ConstraintSet::new(hx, hu).map_err(py_err)?)
            }
        };
        let spec = SynthesisSpec {
            system: self.ctx.system.clone(),
            costs: self.costs.clone(),
            disturbance,
            constraints,
            mode,
            x0: x0.map(DVector::from_vec),
            options: SynthOptions {
                solver: SolveOptions { tol, ..SolveOptions::default() },
                ..SynthOptions::default()
            },
        };
        let r = py.detach(|| synthesize_with(&self.ctx, &spec)).map_err(py_err)?;
        Ok(Controller {
            phi: r.phi,
            controller: r.controller,
            gamma_star: Some(r.gamma_star),
            multipliers: r.multipliers,
        })
    }

    /// Minimiser of `trace(ΦᵀCΦ)`.
    fn h2(&self) -> PyResult<Controller> {
        let r = synth_h2(&self.ctx).map_err(py_err)?;
        Ok(Controller { phi: r.phi, controller: r.controller, gamma_star: None, multipliers: Vec::new() })
    }

    /// Minimiser of the induced 2-norm of `ΦᵀCΦ`.
    #[pyo3(signature = (tol=1e-8))]
    fn hinf(&self, py: Python<'_>, tol: f64) -> PyResult<Controller> {
        let opts = SolveOptions { tol, ..SolveOptions::default() };
        let r = py.detach(|| synth_hinf(&self.ctx, &opts)).map_err(py_err)?;
        Ok(Controller { phi: r.phi, controller: r.controller, gamma_star: None, multipliers: Vec::new() })
    }
}

/// A causal controller with its closed-loop response.
#[pyclass(module = "slsregret", frozen)]
struct Controller {
    phi: SystemResponse,
    controller: CausalController,
    gamma_star: Option<f64>,
    multipliers: Vec<f64>,
}

#[pymethods]
impl Controller {
    /// Optimal value of the synthesis program; `None` for the baselines.
    #[getter]
    fn gamma_star(&self) -> Option<f64> {
        self.gamma_star
    }

    #[getter]
    fn multipliers(&self) -> Vec<f64> {
        self.multipliers.clone()
    }

    /// Stacked response `[Φx; Φu]`.
    #[getter]
    fn phi(&self) -> Vec<Vec<f64>> {
        rows(self.phi.matrix())
    }

    /// Block lower-triangular state-feedback gain, when one exists.
    #[getter]
    fn gain(&self) -> Option<Vec<Vec<f64>>> {
        self.controller.gain().map(rows)
    }

    /// Largest singular value of the regret matrix.
    fn sigma_max(&self, problem: &Problem) -> f64 {
        regret_certificate(&problem.ctx, &self.phi).sigma_max
    }

    /// Closed-loop rollout; returns cost, benchmark, regret and the trajectories.
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        problem: &Problem,
        x0: Vec<f64>,
        w: Vec<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let traj =
            rollout_controller(&problem.ctx, &self.controller, &DVector::from_vec(x0), &vectors(&w)).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("cost", traj.total_cost)?;
        out.set_item("benchmark", traj.benchmark)?;
        out.set_item("regret", traj.regret)?;
        out.set_item("stage_costs", traj.stage_costs)?;
        out.set_item("x", lists(&traj.x))?;
        out.set_item("u", lists(&traj.u))?;
        Ok(out)
    }

    /// Regret-maximising `w` with `‖w‖² ≤ omega`, and the attained regret.
    fn worst_case_disturbance(&self, problem: &Problem, x0: Vec<f64>, omega: f64) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let best = worst_case_disturbance(&problem.ctx, &self.phi, &DVector::from_vec(x0), omega).map_err(py_err)?;
        let r = problem.ctx.system.disturbance_dim();
        let w = (0..best.w.len() / r.max(1)).map(|k| best.w.rows(k * r, r).iter().copied().collect()).collect();
        Ok((w, best.value))
    }
}

#[pymodule]
fn slsregret(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Problem>()?;
    m.add_class::<Controller>()?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
