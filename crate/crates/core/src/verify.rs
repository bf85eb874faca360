//! Independent oracles for cross-checking synthesis and analysis results.
//!
//! Nothing here uses the stacked operators or the non-causal factorisation:
//! state maps are rebuilt by simulating the recursion, and the benchmark is a
//! dense least-squares solve.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostWeights, LtvSystem};
use crate::slp::SystemResponse;

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub value: f64,
    pub oracle: f64,
    pub relative_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Compares `value` with `oracle` at relative tolerance `tol`
    /// (absolute when `|oracle| < 1`).
    pub fn compare(name: impl Into<String>, value: f64, oracle: f64, tol: f64) -> Self {
        let relative_gap = (value - oracle).abs() / oracle.abs().max(1.0);
        Self { name: name.into(), value, oracle, relative_gap, tolerance: tol, pass: relative_gap <= tol }
    }

    /// Passes when `value ≤ oracle + tol·max(1, |oracle|)`.
    pub fn upper_bound(name: impl Into<String>, value: f64, oracle: f64, tol: f64) -> Self {
        let relative_gap = (value - oracle).max(0.0) / oracle.abs().max(1.0);
        Self { name: name.into(), value, oracle, relative_gap, tolerance: tol, pass: relative_gap <= tol }
    }
}

/// Writes one JSON object per line.
pub fn write_json_lines<W: Write>(reports: &[OracleReport], mut out: W) -> Result<()> {
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Stacked states `x_0..x_T` as an affine map of the stacked inputs and `δ`,
/// obtained by simulating unit excitations.
fn simulated_maps(sys: &LtvSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m, r, t) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim(), sys.horizon());
    let nd = n + r * t;
    let run = |u: &dyn Fn(usize) -> DVector<f64>, x0: DVector<f64>, w: &dyn Fn(usize) -> DVector<f64>| {
        let mut out = DVector::zeros(n * (t + 1));
        let mut x = x0;
        for k in 0..=t {
            out.rows_mut(k * n, n).copy_from(&x);
            if k < t {
                x = sys.step(k, &x, &u(k), &w(k));
            }
        }
        out
    };
    let zu = |_: usize| DVector::zeros(m);
    let zw = |_: usize| DVector::zeros(r);
    let mut f = DMatrix::zeros(n * (t + 1), m * (t + 1));
    for j in 0..m * (t + 1) {
        let u = |k: usize| DVector::from_fn(m, |i, _| if k * m + i == j { 1.0 } else { 0.0 });
        f.set_column(j, &run(&u, DVector::zeros(n), &zw));
    }
    let mut g = DMatrix::zeros(n * (t + 1), nd);
    for j in 0..nd {
        let col = if j < n {
            run(&zu, DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }), &zw)
        } else {
            let w = |k: usize| DVector::from_fn(r, |i, _| if n + k * r + i == j { 1.0 } else { 0.0 });
            run(&zu, DVector::zeros(n), &w)
        };
        g.set_column(j, &col);
    }
    (f, g)
}

fn stacked_weights(costs: &CostWeights, t: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let blk = |ms: Vec<&DMatrix<f64>>| {
        let size: usize = ms.iter().map(|m| m.nrows()).sum();
        let mut out = DMatrix::zeros(size, size);
        let mut at = 0;
        for m in ms {
            out.view_mut((at, at), (m.nrows(), m.nrows())).copy_from(m);
            at += m.nrows();
        }
        out
    };
    (blk((0..=t).map(|k| costs.q(k)).collect()), blk((0..=t).map(|k| costs.r(k)).collect()))
}

/// Cost of the best input sequence chosen with knowledge of the whole `δ`,
/// by dense least squares over the simulated state map.
pub fn dense_benchmark(sys: &LtvSystem, costs: &CostWeights, delta: &DVector<f64>) -> Result<f64> {
    let t = sys.horizon();
    let (f, g) = simulated_maps(sys);
    let (q, r) = stacked_weights(costs, t);
    let h = &r + f.transpose() * &q * &f;
    let gd = &g * delta;
    let rhs = -(f.transpose() * &q * &gd);
    let u = h.cholesky().ok_or_else(|| Error::NotPositiveDefinite("R + FᵀQF".into()))?.solve(&rhs);
    let x = &f * &u + gd;
    Ok(x.dot(&(&q * &x)) + u.dot(&(&r * &u)))
}

/// Regret of `Φ` on `δ` against [`dense_benchmark`].
pub fn direct_regret(sys: &LtvSystem, costs: &CostWeights, phi: &SystemResponse, delta: &DVector<f64>) -> Result<f64> {
    let t = sys.horizon();
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let z = phi.matrix() * delta;
    let mut cost = 0.0;
    for k in 0..=t {
        let x = z.rows(k * n, n).into_owned();
        let u = z.rows(n * (t + 1) + k * m, m).into_owned();
        cost += costs.stage_cost(k, &x, &u);
    }
    Ok(cost - dense_benchmark(sys, costs, delta)?)
}

/// Grid lower bound on `max_{‖w‖² ≤ ω}` regret of `Φ` at fixed `x0`.
///
/// The regret is reconstructed as a quadratic in `w` by polarisation of
/// [`direct_regret`], then evaluated on a `grid_n`-per-axis lattice of the
/// cube clipped to the ball, plus every lattice direction pushed out to the
/// sphere. Refuses problems with more than four disturbance coordinates.
pub fn inner_max_oracle(
    sys: &LtvSystem,
    costs: &CostWeights,
    phi: &SystemResponse,
    x0: &DVector<f64>,
    omega: f64,
    grid_n: usize,
) -> Result<f64> {
    let (n, dim) = (sys.state_dim(), sys.disturbance_dim() * sys.horizon());
    if dim > 4 {
        return Err(Error::InvalidArgument(format!("grid oracle limited to r·T ≤ 4, got {dim}")));
    }
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points per axis".into()));
    }
    let delta = |w: &DVector<f64>| {
        let mut d = DVector::zeros(n + dim);
        d.rows_mut(0, n).copy_from(x0);
        d.rows_mut(n, dim).copy_from(w);
        d
    };
    let unit = |i: usize| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 });
    let f0 = direct_regret(sys, costs, phi, &delta(&DVector::zeros(dim)))?;
    let mut lin = DVector::zeros(dim);
    let mut quad = DMatrix::zeros(dim, dim);
    let mut diag = vec![0.0; dim];
    for i in 0..dim {
        let fp = direct_regret(sys, costs, phi, &delta(&unit(i)))?;
        let fm = direct_regret(sys, costs, phi, &delta(&(-unit(i))))?;
        lin[i] = 0.5 * (fp - fm);
        diag[i] = 0.5 * (fp + fm) - f0;
        quad[(i, i)] = diag[i];
    }
    for i in 0..dim {
        for j in 0..i {
            let fij = direct_regret(sys, costs, phi, &delta(&(unit(i) + unit(j))))?;
            let v = 0.5 * (fij - f0 - lin[i] - lin[j] - diag[i] - diag[j]);
            quad[(i, j)] = v;
            quad[(j, i)] = v;
        }
    }
    let eval = |w: &DVector<f64>| w.dot(&(&quad * w)) + lin.dot(w) + f0;
    let radius = omega.sqrt();
    let mut best = f0;
    let mut idx = vec![0usize; dim];
    loop {
        let w = DVector::from_fn(dim, |i, _| -radius + 2.0 * radius * idx[i] as f64 / (grid_n - 1) as f64);
        let nrm = w.norm();
        if nrm <= radius {
            best = best.max(eval(&w));
        }
        if nrm > 0.0 {
            best = best.max(eval(&(w * (radius / nrm))));
        }
        let mut pos = 0;
        while pos < dim {
            idx[pos] += 1;
            if idx[pos] < grid_n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == dim {
            break;
        }
    }
    Ok(best)
}

/// Finite-horizon LQR gains `K_k` (`u_k = −K_k x_k`) from the backward Riccati
/// recursion with terminal weight `Q_T`. `K_T = 0`.
pub fn lqr_oracle(sys: &LtvSystem, costs: &CostWeights) -> Result<Vec<DMatrix<f64>>> {
    let (n, m, t) = (sys.state_dim(), sys.input_dim(), sys.horizon());
    let mut gains = vec![DMatrix::zeros(m, n); t + 1];
    let mut p = costs.q(t).clone();
    for k in (0..t).rev() {
        let (a, b) = (sys.a(k), sys.b(k));
        let s = costs.r(k) + b.transpose() * &p * b;
        let kk = s
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("R_{k} + BᵀPB")))?
            .solve(&(b.transpose() * &p * a));
        p = costs.q(k) + a.transpose() * &p * (a - b * &kk);
        p = (&p + p.transpose()) * 0.5;
        gains[k] = kk;
    }
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn one_step_riccati_by_hand() {
        let sys = LtvSystem::time_invariant(scalar(1.0), scalar(1.0), scalar(1.0), 1).unwrap();
        let costs = CostWeights::constant(scalar(1.0), scalar(1.0), 1).unwrap();
        let k = lqr_oracle(&sys, &costs).unwrap();
        assert_relative_eq!(k[0][(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(k[1][(0, 0)], 0.0);
    }

    #[test]
    fn no_actuation_means_no_gain() {
        let sys = LtvSystem::time_invariant(scalar(1.2), scalar(0.0), scalar(1.0), 5).unwrap();
        let costs = CostWeights::constant(scalar(1.0), scalar(1.0), 5).unwrap();
        assert!(lqr_oracle(&sys, &costs).unwrap().iter().all(|k| k[(0, 0)] == 0.0));
    }

    #[test]
    fn scalar_benchmark_by_hand() {
        // J* = 1.5x0² + x0w0 + 0.5w0² for A=B=E=Q=R=1, T=1.
        let sys = LtvSystem::time_invariant(scalar(1.0), scalar(1.0), scalar(1.0), 1).unwrap();
        let costs = CostWeights::constant(scalar(1.0), scalar(1.0), 1).unwrap();
        let d = DVector::from_vec(vec![2.0, -1.0]);
        assert_relative_eq!(dense_benchmark(&sys, &costs, &d).unwrap(), 6.0 - 2.0 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reports_compare_relatively() {
        assert!(OracleReport::compare("a", 101.0, 100.0, 0.02).pass);
        assert!(!OracleReport::compare("a", 103.0, 100.0, 0.02).pass);
        assert!(OracleReport::upper_bound("b", 90.0, 100.0, 0.0).pass);
        let mut buf = Vec::new();
        write_json_lines(&[OracleReport::compare("x", 1.0, 1.0, 0.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\"name\":\"x\""));
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn grid_oracle_refuses_large_problems() {
        let sys = LtvSystem::time_invariant(scalar(1.0), scalar(1.0), scalar(1.0), 5).unwrap();
        let costs = CostWeights::constant(scalar(1.0), scalar(1.0), 5).unwrap();
        let phi = SystemResponse::new(crate::slp::Dims::of_system(&sys), DMatrix::zeros(12, 6)).unwrap();
        let x0 = DVector::zeros(1);
        assert!(matches!(inner_max_oracle(&sys, &costs, &phi, &x0, 1.0, 11), Err(Error::InvalidArgument(_))));
    }
}
