//! LTV plant, quadratic costs, disturbance sets, constraints, and the stacked
//! block operators that every program is assembled from.
//!
//! Dynamics: `x_{k+1} = A_k x_k + B_k u_k + E_k w_k` for `k = 0..T-1`, with
//! inputs `u_0..u_T` (the last one affects no state but is still priced).
//! The perturbation vector is `δ = [x0; w_0; ...; w_{T-1}]` of length `n + rT`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, require_positive_definite};

#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    n: usize,
    m: usize,
    r: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    e: Vec<DMatrix<f64>>,
}

impl LtvSystem {
    /// Builds a system from per-step matrices. Dimensions are explicit so that
    /// an empty horizon is representable.
    pub fn new(
        n: usize,
        m: usize,
        r: usize,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        e: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if n == 0 || m == 0 || r == 0 {
            return Err(Error::Dimension("n, m and r must be positive".into()));
        }
        if r > n {
            return Err(Error::Dimension(format!("r = {r} exceeds n = {n}")));
        }
        let t = a.len();
        if b.len() != t || e.len() != t {
            return Err(Error::Dimension(format!(
                "sequence lengths differ: A has {}, B has {}, E has {}",
                t,
                b.len(),
                e.len()
            )));
        }
        for k in 0..t {
            if a[k].shape() != (n, n) {
                return Err(Error::Dimension(format!("A_{k} is {:?}, expected ({n}, {n})", a[k].shape())));
            }
            if b[k].shape() != (n, m) {
                return Err(Error::Dimension(format!("B_{k} is {:?}, expected ({n}, {m})", b[k].shape())));
            }
            if e[k].shape() != (n, r) {
                return Err(Error::Dimension(format!("E_{k} is {:?}, expected ({n}, {r})", e[k].shape())));
            }
            let all_finite = a[k].iter().chain(b[k].iter()).chain(e[k].iter()).all(|v| v.is_finite());
            if !all_finite {
                return Err(Error::InvalidArgument(format!("non-finite entry in step {k} matrices")));
            }
            if linalg::rank_ratio(&e[k]) <= 1e-12 {
                return Err(Error::RankDeficient(k));
            }
        }
        Ok(Self { n, m, r, a, b, e })
    }

    /// Replicates constant matrices across `horizon` steps.
    pub fn time_invariant(a: DMatrix<f64>, b: DMatrix<f64>, e: DMatrix<f64>, horizon: usize) -> Result<Self> {
        let (n, m, r) = (a.nrows(), b.ncols(), e.ncols());
        Self::new(n, m, r, vec![a; horizon], vec![b; horizon], vec![e; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }
    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn input_dim(&self) -> usize {
        self.m
    }
    pub fn disturbance_dim(&self) -> usize {
        self.r
    }
    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }
    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }
    pub fn e(&self, k: usize) -> &DMatrix<f64> {
        &self.e[k]
    }

    /// Length of `δ = [x0; w]`.
    pub fn perturbation_len(&self) -> usize {
        self.n + self.r * self.horizon()
    }

    pub fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a[k] * x + &self.b[k] * u + &self.e[k] * w
    }

    /// Stacks `x0` and the disturbance sequence into `δ`.
    pub fn perturbation(&self, x0: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        if x0.len() != self.n || w.len() != self.horizon() || w.iter().any(|wk| wk.len() != self.r) {
            return Err(Error::Dimension("perturbation does not match system dimensions".into()));
        }
        let mut d = DVector::zeros(self.perturbation_len());
        d.rows_mut(0, self.n).copy_from(x0);
        for (k, wk) in w.iter().enumerate() {
            d.rows_mut(self.n + k * self.r, self.r).copy_from(wk);
        }
        Ok(d)
    }

    /// Inverse of [`LtvSystem::perturbation`].
    pub fn split_perturbation(&self, delta: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let x0 = delta.rows(0, self.n).into_owned();
        let w = (0..self.horizon()).map(|k| delta.rows(self.n + k * self.r, self.r).into_owned()).collect();
        (x0, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
}

impl CostWeights {
    /// `q` and `r` hold `T + 1` weights each.
    pub fn new(q: Vec<DMatrix<f64>>, r: Vec<DMatrix<f64>>) -> Result<Self> {
        if q.len() != r.len() || q.is_empty() {
            return Err(Error::Dimension(format!(
                "need equally many (and at least one) Q and R weights, got {} and {}",
                q.len(),
                r.len()
            )));
        }
        for (k, qk) in q.iter().enumerate() {
            require_positive_definite(qk, &format!("Q_{k}"))?;
        }
        for (k, rk) in r.iter().enumerate() {
            require_positive_definite(rk, &format!("R_{k}"))?;
        }
        Ok(Self { q, r })
    }

    pub fn constant(q: DMatrix<f64>, r: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![q; horizon + 1], vec![r; horizon + 1])
    }

    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k]
    }
    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k]
    }
    pub fn len(&self) -> usize {
        self.q.len()
    }
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Stage cost `x'Q_k x + u'R_k u`.
    pub fn stage_cost(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.q[k] * x)) + u.dot(&(&self.r[k] * u))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    /// `‖w‖² ≤ ω` over the whole episode.
    EnergyBall { omega: f64 },
    /// `w_kᵀ P w_k ≤ 1` at every step.
    PointwiseEllipsoid { p: DMatrix<f64> },
}

impl DisturbanceModel {
    pub fn energy(omega: f64) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be finite and nonnegative, got {omega}")));
        }
        Ok(Self::EnergyBall { omega })
    }

    pub fn ellipsoid(p: DMatrix<f64>) -> Result<Self> {
        require_positive_definite(&p, "P")?;
        Ok(Self::PointwiseEllipsoid { p })
    }

    /// Energy budget implied by the model over `horizon` steps: the stored ω,
    /// or `T / λ_min(P)` for the pointwise ellipsoid.
    pub fn derived_omega(&self, horizon: usize) -> Result<f64> {
        match self {
            Self::EnergyBall { omega } => Ok(*omega),
            Self::PointwiseEllipsoid { p } => {
                require_positive_definite(p, "P")?;
                Ok(horizon as f64 / linalg::min_eigenvalue(p))
            }
        }
    }
}

/// Polyhedral constraints `Hx x_k ≤ 1`, `Hu u_k ≤ 1` at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn new(hx: DMatrix<f64>, hu: DMatrix<f64>) -> Result<Self> {
        if hx.iter().chain(hu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite constraint entry".into()));
        }
        Ok(Self { hx, hu })
    }

    /// Rows per step.
    pub fn rows_per_step(&self) -> usize {
        self.hx.nrows() + self.hu.nrows()
    }

    /// `blkdiag(I ⊗ Hx, I ⊗ Hu)`: all state rows for k = 0..T first, then all
    /// input rows, acting on `[x_0..x_T; u_0..u_T]`.
    pub fn stacked(&self, horizon: usize) -> DMatrix<f64> {
        let steps = horizon + 1;
        let xs = vec![self.hx.clone(); steps];
        let us = vec![self.hu.clone(); steps];
        block_diag(&[block_diag(&xs), block_diag(&us)])
    }
}

/// Stacked block operators of an LTV system over its horizon.
#[derive(Debug, Clone)]
pub struct StackedDynamics {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub horizon: usize,
    pub cal_a: DMatrix<f64>,
    pub cal_b: DMatrix<f64>,
    pub cal_e: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r_cost: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub q_inv: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
}

impl StackedDynamics {
    pub fn delta_len(&self) -> usize {
        self.n + self.r * self.horizon
    }
    pub fn state_rows(&self) -> usize {
        self.n * (self.horizon + 1)
    }
    pub fn input_rows(&self) -> usize {
        self.m * (self.horizon + 1)
    }
    pub fn response_rows(&self) -> usize {
        (self.n + self.m) * (self.horizon + 1)
    }

    /// Column index in δ where `w_j` starts.
    pub fn w_col(&self, j: usize) -> usize {
        self.n + self.r * j
    }

    /// Quadratic cost of stacked `x`, `u`.
    pub fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r_cost * u))
    }

    /// State sequence `x = F u + G δ`.
    pub fn states(&self, u: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        &self.f * u + &self.g * delta
    }
}

fn inverse_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(linalg::symmetrize(&chol.inverse()))
}

pub fn build_stacked(sys: &LtvSystem, costs: &CostWeights) -> Result<StackedDynamics> {
    let (n, m, r, t) = (sys.n, sys.m, sys.r, sys.horizon());
    if costs.len() != t + 1 {
        return Err(Error::Dimension(format!("costs have {} stages, horizon {} needs {}", costs.len(), t, t + 1)));
    }
    for k in 0..=t {
        if costs.q(k).nrows() != n {
            return Err(Error::Dimension(format!("Q_{k} is not {n}x{n}")));
        }
        if costs.r(k).nrows() != m {
            return Err(Error::Dimension(format!("R_{k} is not {m}x{m}")));
        }
    }
    let nx = n * (t + 1);
    let nu = m * (t + 1);
    let nd = n + r * t;

    let mut cal_a = DMatrix::zeros(nx, nx);
    let mut cal_b = DMatrix::zeros(nx, nu);
    let mut cal_e = DMatrix::zeros(nx, nd);
    cal_e.view_mut((0, 0), (n, n)).fill_with_identity();
    for k in 0..t {
        cal_a.view_mut((k * n, k * n), (n, n)).copy_from(sys.a(k));
        cal_b.view_mut((k * n, k * m), (n, m)).copy_from(sys.b(k));
        cal_e.view_mut(((k + 1) * n, n + k * r), (n, r)).copy_from(sys.e(k));
    }
    let mut z = DMatrix::zeros(nx, nx);
    for k in 0..t {
        z.view_mut(((k + 1) * n, k * n), (n, n)).fill_with_identity();
    }

    // Forward recursion: block row k+1 = A_k · (block row k) + the new input
    // or disturbance entering at step k.
    let mut f = DMatrix::zeros(nx, nu);
    let mut g = DMatrix::zeros(nx, nd);
    g.view_mut((0, 0), (n, n)).fill_with_identity();
    for k in 0..t {
        let prev_f = f.rows(k * n, n).into_owned();
        let mut next_f = sys.a(k) * prev_f;
        next_f.view_mut((0, k * m), (n, m)).add_assign_from(sys.b(k));
        f.rows_mut((k + 1) * n, n).copy_from(&next_f);

        let prev_g = g.rows(k * n, n).into_owned();
        let mut next_g = sys.a(k) * prev_g;
        next_g.view_mut((0, n + k * r), (n, r)).add_assign_from(sys.e(k));
        g.rows_mut((k + 1) * n, n).copy_from(&next_g);
    }

    let qs: Vec<_> = (0..=t).map(|k| costs.q(k).clone()).collect();
    let rs: Vec<_> = (0..=t).map(|k| costs.r(k).clone()).collect();
    let q_invs = (0..=t).map(|k| inverse_spd(costs.q(k), &format!("Q_{k}"))).collect::<Result<Vec<_>>>()?;
    let r_invs = (0..=t).map(|k| inverse_spd(costs.r(k), &format!("R_{k}"))).collect::<Result<Vec<_>>>()?;
    let q = block_diag(&qs);
    let r_cost = block_diag(&rs);
    let q_inv = block_diag(&q_invs);
    let r_inv = block_diag(&r_invs);
    let c = block_diag(&[q.clone(), r_cost.clone()]);
    let c_inv = block_diag(&[q_inv.clone(), r_inv.clone()]);

    Ok(StackedDynamics { n, m, r, horizon: t, cal_a, cal_b, cal_e, z, f, g, q, r_cost, c, c_inv, q_inv, r_inv })
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, other: &DMatrix<f64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, other: &DMatrix<f64>) {
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

/// Mass-spring-damper discretised by forward Euler: position and velocity
/// states, force input, disturbances entering both states directly.
pub fn spring_damper(c: f64, d: f64, ts: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, ts, -c * ts, 1.0 - d * ts]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, ts]);
    (a, b, DMatrix::identity(2, 2))
}
