//! Solver-agnostic description of linear-objective conic programs with
//! semidefinite, second-order and nonnegative cones, plus the bundled
//! interior-point solver.
//!
//! Conventions:
//! * minimise `cᵀx + offset`;
//! * equalities `Σ coeff·x_var = rhs`;
//! * each PSD block requires `C0 + Σ_i x_i A_i ⪰ 0`, matrices given by their
//!   lower-triangle entries `(row ≥ col)`;
//! * each SOC requires `s = h + A x` with `s_0 ≥ ‖s_{1..}‖`; a one-dimensional
//!   SOC is a scalar inequality `s_0 ≥ 0`;
//! * `nonneg_vars` requires `x_i ≥ 0`.
//!
//! The scaled vectorisation used for inner products puts weight `√2` on
//! off-diagonal entries; see [`svec_index`] and [`PsdBlock::svec_terms`].

mod cones;
pub mod dump;
mod ipm;
mod schur;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;

pub use ipm::SolveOptions;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    /// Lower-triangle entries `(row, col, value)` of the constant matrix.
    pub constant: Vec<(usize, usize, f64)>,
    /// Lower-triangle entries `(var, row, col, value)` of the coefficient matrices.
    pub coeffs: Vec<(usize, usize, usize, f64)>,
}

impl PsdBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    /// Adds `value` at `(row, col)` and its mirror of the constant matrix.
    pub fn add_constant(&mut self, row: usize, col: usize, value: f64) {
        let (i, j) = if row >= col { (row, col) } else { (col, row) };
        if value != 0.0 {
            self.constant.push((i, j, value));
        }
    }

    /// Adds `value · x_var` at `(row, col)` and its mirror.
    pub fn add_coeff(&mut self, var: usize, row: usize, col: usize, value: f64) {
        let (i, j) = if row >= col { (row, col) } else { (col, row) };
        if value != 0.0 {
            self.coeffs.push((var, i, j, value));
        }
    }

    /// Dense value of the affine map at `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.constant {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        for &(var, i, j, v) in &self.coeffs {
            let val = v * x[var];
            m[(i, j)] += val;
            if i != j {
                m[(j, i)] += val;
            }
        }
        m
    }

    /// Coefficient triplets `(var, svec index, weighted value)`; constant
    /// entries carry `usize::MAX` as their var.
    pub fn svec_terms(&self) -> Vec<(usize, usize, f64)> {
        let w = |i: usize, j: usize, v: f64| if i == j { v } else { v * std::f64::consts::SQRT_2 };
        self.constant
            .iter()
            .map(|&(i, j, v)| (usize::MAX, svec_index(i, j, self.dim), w(i, j, v)))
            .chain(self.coeffs.iter().map(|&(var, i, j, v)| (var, svec_index(i, j, self.dim), w(i, j, v))))
            .collect()
    }
}

/// Position of lower-triangle entry `(row ≥ col)` in the column-wise packed
/// lower triangle of a `dim`-square matrix.
pub fn svec_index(row: usize, col: usize, dim: usize) -> usize {
    let (i, j) = if row >= col { (row, col) } else { (col, row) };
    j * dim - j * (j + 1) / 2 + i
}

/// Scaled vectorisation of a symmetric matrix (`√2` on off-diagonals).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(if i == j { m[(i, j)] } else { m[(i, j)] * std::f64::consts::SQRT_2 });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocConstraint {
    pub dim: usize,
    pub constant: Vec<f64>,
    /// `(row, var, coeff)`.
    pub coeffs: Vec<(usize, usize, f64)>,
}

impl SocConstraint {
    pub fn new(dim: usize) -> Self {
        Self { dim, constant: vec![0.0; dim], coeffs: Vec::new() }
    }

    pub fn add_coeff(&mut self, row: usize, var: usize, value: f64) {
        if value != 0.0 {
            self.coeffs.push((row, var, value));
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.constant.clone();
        for &(row, var, v) in &self.coeffs {
            s[row] += v * x[var];
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    /// `(row, var, coeff)` triplets of the equality matrix.
    pub equalities: Vec<(usize, usize, f64)>,
    pub eq_rhs: Vec<f64>,
    pub psd_blocks: Vec<PsdBlock>,
    pub soc_constraints: Vec<SocConstraint>,
    pub nonneg_vars: Vec<usize>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a variable with objective coefficient `cost`.
    pub fn add_var(&mut self, cost: f64) -> usize {
        self.num_vars += 1;
        self.objective.push(cost);
        self.num_vars - 1
    }

    pub fn add_equality(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.eq_rhs.len();
        for &(var, v) in terms {
            if v != 0.0 {
                self.equalities.push((row, var, v));
            }
        }
        self.eq_rhs.push(rhs);
        row
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_offset
    }

    /// Checks indices and symmetry storage; returns a description of the first problem.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.objective.len() != self.num_vars {
            return Err("objective length differs from num_vars".into());
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err("non-finite objective coefficient".into());
        }
        for &(row, var, v) in &self.equalities {
            if row >= self.eq_rhs.len() || var >= self.num_vars || !v.is_finite() {
                return Err(format!("bad equality triplet ({row}, {var}, {v})"));
            }
        }
        for (b, blk) in self.psd_blocks.iter().enumerate() {
            for &(i, j, v) in &blk.constant {
                if i >= blk.dim || j > i || !v.is_finite() {
                    return Err(format!("psd block {b}: bad constant entry ({i}, {j}, {v})"));
                }
            }
            for &(var, i, j, v) in &blk.coeffs {
                if var >= self.num_vars || i >= blk.dim || j > i || !v.is_finite() {
                    return Err(format!("psd block {b}: bad coefficient ({var}, {i}, {j}, {v})"));
                }
            }
        }
        for (k, soc) in self.soc_constraints.iter().enumerate() {
            if soc.dim == 0 || soc.constant.len() != soc.dim {
                return Err(format!("soc {k}: inconsistent dimension"));
            }
            for &(row, var, v) in &soc.coeffs {
                if row >= soc.dim || var >= self.num_vars || !v.is_finite() {
                    return Err(format!("soc {k}: bad coefficient ({row}, {var}, {v})"));
                }
            }
        }
        if self.nonneg_vars.iter().any(|&v| v >= self.num_vars) {
            return Err("nonnegative index out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub max_eq_violation: f64,
    /// Smallest eigenvalue of each PSD block.
    pub psd_min_eigenvalues: Vec<f64>,
    pub max_psd_violation: f64,
    /// `s_0 − ‖s_1‖` of each second-order cone.
    pub soc_slacks: Vec<f64>,
    pub max_soc_violation: f64,
    pub max_nonneg_violation: f64,
}

impl ViolationSummary {
    pub fn worst(&self) -> f64 {
        self.max_eq_violation.max(self.max_psd_violation).max(self.max_soc_violation).max(self.max_nonneg_violation)
    }
}

/// Recomputes every constraint residual at `primal`.
pub fn check_solution(p: &ConicProgram, primal: &[f64]) -> ViolationSummary {
    let mut eq = vec![0.0; p.eq_rhs.len()];
    for &(row, var, v) in &p.equalities {
        eq[row] += v * primal[var];
    }
    let max_eq_violation = eq.iter().zip(&p.eq_rhs).map(|(lhs, rhs)| (lhs - rhs).abs()).fold(0.0, f64::max);
    let psd_min_eigenvalues: Vec<f64> =
        p.psd_blocks.iter().map(|b| linalg::min_eigenvalue(&b.evaluate(primal))).collect();
    let max_psd_violation = psd_min_eigenvalues.iter().fold(0.0f64, |a, &e| a.max(-e));
    let soc_slacks: Vec<f64> = p
        .soc_constraints
        .iter()
        .map(|c| {
            let s = c.evaluate(primal);
            s[0] - s[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let max_soc_violation = soc_slacks.iter().fold(0.0f64, |a, &e| a.max(-e));
    let max_nonneg_violation = p.nonneg_vars.iter().fold(0.0f64, |a, &i| a.max(-primal[i]));
    ViolationSummary {
        max_eq_violation,
        psd_min_eigenvalues,
        max_psd_violation,
        soc_slacks,
        max_soc_violation,
        max_nonneg_violation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    /// Lower bound from the dual iterate (meaningful when optimal).
    pub dual_objective: f64,
    pub max_psd_violation: f64,
    pub max_eq_violation: f64,
    pub max_soc_violation: f64,
    pub solve_seconds: f64,
    pub iterations: usize,
    pub message: String,
}

/// Solves `p` to relative tolerance `tol` with default options.
pub fn solve(p: &ConicProgram, tol: f64) -> SolveReport {
    solve_with(p, &SolveOptions { tol, ..SolveOptions::default() })
}

pub fn solve_with(p: &ConicProgram, opts: &SolveOptions) -> SolveReport {
    let start = Instant::now();
    let out = match p.validate() {
        Ok(()) => ipm::solve(p, opts),
        Err(msg) => ipm::Outcome::failed(p.num_vars, format!("malformed program: {msg}")),
    };
    let checks = check_solution(p, &out.x);
    let mut status = out.status;
    let mut message = out.message;
    if status == SolveStatus::Optimal && checks.worst() > 10.0 * opts.tol {
        status = SolveStatus::NumericalTrouble;
        message = format!("converged point violates constraints by {:.3e}", checks.worst());
    }
    SolveReport {
        status,
        objective_value: p.objective_value(&out.x),
        dual_objective: out.dual_objective + p.objective_offset,
        primal: out.x,
        max_psd_violation: checks.max_psd_violation,
        max_eq_violation: checks.max_eq_violation,
        max_soc_violation: checks.max_soc_violation.max(checks.max_nonneg_violation),
        solve_seconds: start.elapsed().as_secs_f64(),
        iterations: out.iterations,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_two_by_two() -> ConicProgram {
        let mut p = ConicProgram::new();
        let g = p.add_var(1.0);
        let mut b = PsdBlock::new(2);
        b.add_coeff(g, 0, 0, 1.0);
        b.add_coeff(g, 1, 1, 1.0);
        b.add_constant(1, 0, 1.0);
        p.psd_blocks.push(b);
        p
    }

    #[test]
    fn svec_inner_product_is_trace() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let lhs: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - (&a * &b).trace()).abs() < 1e-12);
        assert_eq!(svec_index(2, 1, 3), 4);
        assert_eq!(svec_index(1, 2, 3), 4);
    }

    #[test]
    fn nonneg_minimum_is_zero() {
        let mut p = ConicProgram::new();
        let x = p.add_var(1.0);
        p.nonneg_vars.push(x);
        let rep = solve(&p, 1e-8);
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!(rep.objective_value.abs() < 1e-7);
    }

    #[test]
    fn two_by_two_lmi() {
        let p = gamma_two_by_two();
        let rep = solve(&p, 1e-8);
        assert_eq!(rep.status, SolveStatus::Optimal, "{}", rep.message);
        assert!((rep.objective_value - 1.0).abs() < 1e-7);
        let chk = check_solution(&p, &rep.primal);
        assert!(chk.psd_min_eigenvalues[0] >= -1e-7);
        assert!((chk.max_psd_violation - rep.max_psd_violation).abs() <= 1e-9);
        let zero = check_solution(&p, &[0.0]);
        assert!((zero.psd_min_eigenvalues[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_cone_norm() {
        let mut p = ConicProgram::new();
        let t = p.add_var(1.0);
        let mut c = SocConstraint::new(3);
        c.add_coeff(0, t, 1.0);
        c.constant[1] = 3.0;
        c.constant[2] = 4.0;
        p.soc_constraints.push(c);
        let rep = solve(&p, 1e-8);
        assert_eq!(rep.status, SolveStatus::Optimal, "{}", rep.message);
        assert!((rep.objective_value - 5.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        // x ≥ 0 and -1 - x ≥ 0.
        let mut p = ConicProgram::new();
        let x = p.add_var(1.0);
        p.nonneg_vars.push(x);
        let mut c = SocConstraint::new(1);
        c.constant[0] = -1.0;
        c.add_coeff(0, x, -1.0);
        p.soc_constraints.push(c);
        assert_eq!(solve(&p, 1e-8).status, SolveStatus::Infeasible);

        // minimise -x with x ≥ 0.
        let mut p = ConicProgram::new();
        let x = p.add_var(-1.0);
        p.nonneg_vars.push(x);
        assert_eq!(solve(&p, 1e-8).status, SolveStatus::Unbounded);
    }

    #[test]
    fn equalities_are_respected() {
        // minimise x + 2y s.t. x + y = 1, x, y ≥ 0.
        let mut p = ConicProgram::new();
        let x = p.add_var(1.0);
        let y = p.add_var(2.0);
        p.nonneg_vars.extend([x, y]);
        p.add_equality(&[(x, 1.0), (y, 1.0)], 1.0);
        let rep = solve(&p, 1e-8);
        assert_eq!(rep.status, SolveStatus::Optimal, "{}", rep.message);
        assert!((rep.objective_value - 1.0).abs() < 1e-7);
        assert!(rep.max_eq_violation < 1e-9);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let p = gamma_two_by_two();
        let a = solve(&p, 1e-8);
        let b = solve(&p, 1e-8);
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.iterations, b.iterations);
    }
}
