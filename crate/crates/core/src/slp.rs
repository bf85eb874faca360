//! Closed-loop system responses and their realisation as causal controllers.
//!
//! A response `Φ = [Φx; Φu]` maps `δ = [x0; w]` to the stacked states and
//! inputs. It is achievable by some causal controller iff it is block-causal
//! and satisfies `[I − 𝒵𝒜, −𝒵ℬ] Φ = ℰ`.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::model::{LtvSystem, StackedDynamics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn of(stk: &StackedDynamics) -> Self {
        Self { n: stk.n, m: stk.m, r: stk.r, horizon: stk.horizon }
    }
    pub fn of_system(sys: &LtvSystem) -> Self {
        Self { n: sys.state_dim(), m: sys.input_dim(), r: sys.disturbance_dim(), horizon: sys.horizon() }
    }
    pub fn rows(&self) -> usize {
        (self.n + self.m) * (self.horizon + 1)
    }
    pub fn cols(&self) -> usize {
        self.n + self.r * self.horizon
    }
    pub fn state_rows(&self) -> usize {
        self.n * (self.horizon + 1)
    }
    /// Time step of row `i` of Φ.
    pub fn row_step(&self, i: usize) -> usize {
        let nx = self.state_rows();
        if i < nx {
            i / self.n
        } else {
            (i - nx) / self.m
        }
    }
    /// Number of δ columns row block `k` may depend on: `x0` and `w_0..w_{k-1}`.
    pub fn causal_width(&self, k: usize) -> usize {
        self.n + self.r * k.min(self.horizon)
    }
}

/// Every `(row, col)` of Φ that must vanish for a causal response: the entry
/// from `w_j` into `x_k` or `u_k` whenever `k ≤ j`.
pub fn causality_mask(dims: Dims) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..dims.rows() {
        let width = dims.causal_width(dims.row_step(i));
        for j in width..dims.cols() {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemResponse {
    dims: Dims,
    phi: DMatrix<f64>,
}

impl SystemResponse {
    pub fn new(dims: Dims, phi: DMatrix<f64>) -> Result<Self> {
        if phi.shape() != (dims.rows(), dims.cols()) {
            return Err(Error::Dimension(format!(
                "response is {:?}, expected ({}, {})",
                phi.shape(),
                dims.rows(),
                dims.cols()
            )));
        }
        Ok(Self { dims, phi })
    }

    pub fn from_parts(dims: Dims, phi_x: &DMatrix<f64>, phi_u: &DMatrix<f64>) -> Result<Self> {
        if phi_x.ncols() != phi_u.ncols() {
            return Err(Error::Dimension("Phi_x and Phi_u column counts differ".into()));
        }
        let mut phi = DMatrix::zeros(phi_x.nrows() + phi_u.nrows(), phi_x.ncols());
        phi.rows_mut(0, phi_x.nrows()).copy_from(phi_x);
        phi.rows_mut(phi_x.nrows(), phi_u.nrows()).copy_from(phi_u);
        Self::new(dims, phi)
    }

    /// Closed loop of the causal state feedback `u = K x`, where `K` is block
    /// lower triangular (`u_k` uses `x_0..x_k`).
    pub fn from_gain(stk: &StackedDynamics, k: &DMatrix<f64>) -> Result<Self> {
        let dims = Dims::of(stk);
        if k.shape() != (stk.input_rows(), stk.state_rows()) {
            return Err(Error::Dimension(format!("gain is {:?}", k.shape())));
        }
        let nx = stk.state_rows();
        let lhs = DMatrix::identity(nx, nx) - &stk.z * (&stk.cal_a + &stk.cal_b * k);
        // unit lower triangular for a causal K; forward substitution keeps the structural zeros exact
        let lower = (0..nx).all(|j| (0..j).all(|i| lhs[(i, j)] == 0.0));
        let phi_x = if lower { lhs.solve_lower_triangular(&stk.cal_e) } else { lhs.lu().solve(&stk.cal_e) }
            .ok_or_else(|| Error::Singular("closed-loop map I - Z(A + BK)".into()))?;
        let phi_u = k * &phi_x;
        Self::from_parts(dims, &phi_x, &phi_u)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.phi
    }
    pub fn phi_x(&self) -> DMatrixView<'_, f64> {
        self.phi.rows(0, self.dims.state_rows())
    }
    pub fn phi_u(&self) -> DMatrixView<'_, f64> {
        let nx = self.dims.state_rows();
        self.phi.rows(nx, self.phi.nrows() - nx)
    }
    pub fn phi0(&self) -> DMatrixView<'_, f64> {
        self.phi.columns(0, self.dims.n)
    }
    pub fn phiw(&self) -> DMatrixView<'_, f64> {
        self.phi.columns(self.dims.n, self.dims.cols() - self.dims.n)
    }

    /// Largest magnitude among the entries that causality forces to zero.
    pub fn causality_violation(&self) -> f64 {
        causality_mask(self.dims).into_iter().map(|(i, j)| self.phi[(i, j)].abs()).fold(0.0, f64::max)
    }

    /// Stacked states and inputs `Φδ`.
    pub fn apply(&self, delta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let z = &self.phi * delta;
        let nx = self.dims.state_rows();
        (z.rows(0, nx).into_owned(), z.rows(nx, z.len() - nx).into_owned())
    }

    /// `ΦᵀCΦ`, the quadratic form pricing δ under this response.
    pub fn cost_matrix(&self, stk: &StackedDynamics) -> DMatrix<f64> {
        crate::linalg::symmetrize(&(self.phi.transpose() * &stk.c * &self.phi))
    }
}

/// Max-abs entry of `[I − 𝒵𝒜, −𝒵ℬ]Φ − ℰ`.
pub fn residual(stk: &StackedDynamics, phi: &SystemResponse) -> f64 {
    let nx = stk.state_rows();
    let px = phi.phi_x();
    let pu = phi.phi_u();
    let za = &stk.z * &stk.cal_a;
    let zb = &stk.z * &stk.cal_b;
    let res = px - za * px - zb * pu - &stk.cal_e;
    debug_assert_eq!(res.nrows(), nx);
    res.amax()
}

/// A causal feedback law realising a system response.
#[derive(Debug, Clone)]
pub enum CausalController {
    /// `u = K x` with block lower-triangular `K = Φu Φx⁻¹`.
    Explicit { gain: DMatrix<f64>, dims: Dims },
    /// Reconstructs past disturbances from measured states and applies
    /// `u_k = [Φu]_k [x0; w_0; ...; w_{k-1}]`.
    DisturbanceFeedback { phi_u: DMatrix<f64>, system: LtvSystem, e_pinv: Vec<DMatrix<f64>> },
}

pub fn recover_controller(sys: &LtvSystem, stk: &StackedDynamics, phi: &SystemResponse) -> Result<CausalController> {
    let dims = phi.dims();
    if dims != Dims::of(stk) {
        return Err(Error::Dimension("response does not match the system".into()));
    }
    if dims.r == dims.n {
        explicit_gain(phi).map(|gain| CausalController::Explicit { gain, dims })
    } else {
        Ok(disturbance_feedback(sys, phi))
    }
}

/// Disturbance-feedback realisation, valid for any full-column-rank `E_k`.
pub fn disturbance_feedback(sys: &LtvSystem, phi: &SystemResponse) -> CausalController {
    let e_pinv = (0..sys.horizon())
        .map(|k| {
            let e = sys.e(k);
            let gram = e.transpose() * e;
            gram.cholesky().expect("E_k has full column rank").solve(&e.transpose())
        })
        .collect();
    CausalController::DisturbanceFeedback { phi_u: phi.phi_u().into_owned(), system: sys.clone(), e_pinv }
}

/// `Φu Φx⁻¹` by block forward substitution on the block lower-triangular Φx.
fn explicit_gain(phi: &SystemResponse) -> Result<DMatrix<f64>> {
    let dims = phi.dims();
    let n = dims.n;
    let steps = dims.horizon + 1;
    let px = phi.phi_x();
    let block = |m: &DMatrixView<'_, f64>, i: usize, j: usize| m.view((i * n, j * n), (n, n)).into_owned();
    let mut diag_inv = Vec::with_capacity(steps);
    for k in 0..steps {
        let d = block(&px, k, k);
        let inv = d
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()) && d.norm() * inv.norm() < 1e12)
            .ok_or_else(|| Error::Singular(format!("diagonal block {k} of Phi_x")))?;
        diag_inv.push(inv);
    }
    let nx = dims.state_rows();
    let mut y = DMatrix::zeros(nx, nx);
    for j in 0..steps {
        y.view_mut((j * n, j * n), (n, n)).copy_from(&diag_inv[j]);
        for k in j + 1..steps {
            let mut acc = DMatrix::zeros(n, n);
            for l in j..k {
                acc += block(&px, k, l) * y.view((l * n, j * n), (n, n));
            }
            let val = -&diag_inv[k] * acc;
            y.view_mut((k * n, j * n), (n, n)).copy_from(&val);
        }
    }
    Ok(phi.phi_u() * y)
}

impl CausalController {
    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Explicit { gain, .. } => Some(gain),
            Self::DisturbanceFeedback { .. } => None,
        }
    }

    /// Fresh per-trajectory executor.
    pub fn executor(&self) -> Executor<'_> {
        Executor { ctrl: self, xs: Vec::new(), us: Vec::new(), delta: Vec::new() }
    }
}

/// Something that produces `u_k` from the measured `x_k`, one step at a time.
pub trait Policy {
    fn input(&mut self, k: usize, x: &DVector<f64>) -> DVector<f64>;
}

/// Stateful execution of a [`CausalController`] along one trajectory.
pub struct Executor<'a> {
    ctrl: &'a CausalController,
    xs: Vec<DVector<f64>>,
    us: Vec<DVector<f64>>,
    delta: Vec<f64>,
}

impl Policy for Executor<'_> {
    fn input(&mut self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(k, self.xs.len(), "executor must be driven one step at a time");
        let u = match self.ctrl {
            CausalController::Explicit { gain, dims } => {
                let (n, m) = (dims.n, dims.m);
                self.xs.push(x.clone());
                let mut u = DVector::zeros(m);
                for (j, xj) in self.xs.iter().enumerate() {
                    u += gain.view((k * m, j * n), (m, n)) * xj;
                }
                u
            }
            CausalController::DisturbanceFeedback { phi_u, system, e_pinv } => {
                if k == 0 {
                    self.delta.extend(x.iter());
                } else {
                    let prev = &self.xs[k - 1];
                    let resid = x - system.a(k - 1) * prev - system.b(k - 1) * &self.us[k - 1];
                    let w = &e_pinv[k - 1] * resid;
                    self.delta.extend(w.iter());
                }
                self.xs.push(x.clone());
                let m = system.input_dim();
                let width = self.delta.len();
                let d = DVector::from_column_slice(&self.delta);
                phi_u.view((k * m, 0), (m, width)) * d
            }
        };
        self.us.push(u.clone());
        u
    }
}

/// Replays a fixed input sequence, ignoring the state.
pub struct OpenLoop {
    pub inputs: Vec<DVector<f64>>,
}

impl OpenLoop {
    pub fn from_stacked(u: &DVector<f64>, m: usize) -> Self {
        Self { inputs: (0..u.len() / m).map(|k| u.rows(k * m, m).into_owned()).collect() }
    }
}

impl Policy for OpenLoop {
    fn input(&mut self, k: usize, _x: &DVector<f64>) -> DVector<f64> {
        self.inputs[k].clone()
    }
}
