//! Synthesis programs in their original form: the causal entries of both `Φx`
//! and `Φu` are variables, achievability is imposed as
//! `(I − 𝒵𝒜)Φx − 𝒵ℬΦu = ℰ`, and the regret LMIs carry `C⁻¹` explicitly.
//!
//! The LMI side is `(n+m)(T+1) + n + rT`, so this is meant for small
//! horizons and for cross-checking the factored programs.

use nalgebra::DMatrix;

use super::{
    add_safety_rows, check_x0, pointwise_shape, solver_error, ProgramMap, SynthesisContext, SynthesisMode,
    SynthesisResult, SynthesisSpec,
};
use crate::conic::{self, ConicProgram, PsdBlock, SolveStatus};
use crate::error::{Error, Result};
use crate::slp::{recover_controller, SystemResponse};

/// Variable index of every causal entry of `Φ`, `None` elsewhere.
struct ResponseVars {
    idx: Vec<Vec<Option<usize>>>,
}

impl ResponseVars {
    fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.idx[row][col]
    }
}

/// Adds the achievable-response variables and equalities to `prog`.
fn response_vars(ctx: &SynthesisContext, prog: &mut ConicProgram) -> Result<ResponseVars> {
    let d = ctx.dims();
    let stk = &ctx.stk;
    let (rows, cols, nx) = (d.rows(), d.cols(), d.state_rows());
    let mut idx = vec![vec![None; cols]; rows];
    for (i, row) in idx.iter_mut().enumerate() {
        let width = d.causal_width(d.row_step(i));
        for slot in row.iter_mut().take(width) {
            *slot = Some(prog.add_var(0.0));
        }
    }
    let lhs_x = DMatrix::identity(nx, nx) - &stk.z * &stk.cal_a;
    let lhs_u = -(&stk.z * &stk.cal_b);
    for i in 0..nx {
        for c in 0..cols {
            let mut terms = Vec::new();
            for k in 0..nx {
                if let (v, Some(var)) = (lhs_x[(i, k)], idx[k][c]) {
                    if v != 0.0 {
                        terms.push((var, v));
                    }
                }
            }
            for k in 0..d.rows() - nx {
                if let (v, Some(var)) = (lhs_u[(i, k)], idx[nx + k][c]) {
                    if v != 0.0 {
                        terms.push((var, v));
                    }
                }
            }
            let rhs = stk.cal_e[(i, c)];
            if terms.is_empty() {
                if rhs != 0.0 {
                    return Err(Error::InvalidArgument(format!("achievability row ({i}, {c}) has no free entries")));
                }
                continue;
            }
            prog.add_equality(&terms, rhs);
        }
    }
    Ok(ResponseVars { idx })
}

/// Places the lower-left block `Φ·cols` into `blk` starting at `(row0, 0)`:
/// column `j` of the block is `Σ_c weights[j][c]·Φ[:, c]`.
fn add_response_block(blk: &mut PsdBlock, vars: &ResponseVars, row0: usize, weights: &[Vec<(usize, f64)>]) {
    for (j, w) in weights.iter().enumerate() {
        for (i, row) in vars.idx.iter().enumerate() {
            for &(c, coef) in w {
                if let Some(v) = row[c] {
                    blk.add_coeff(v, row0 + i, j, coef);
                }
            }
        }
    }
}

fn add_dense(blk: &mut PsdBlock, at: usize, m: &DMatrix<f64>) {
    for j in 0..m.ncols() {
        for i in j..m.nrows() {
            blk.add_constant(at + i, at + j, m[(i, j)]);
        }
    }
}

/// Solves `spec` in the original formulation.
pub fn synthesize(ctx: &SynthesisContext, spec: &SynthesisSpec) -> Result<SynthesisResult> {
    let d = ctx.dims();
    let (n, m, r, t) = (d.n, d.m, d.r, d.horizon);
    let (rows, cols) = (d.rows(), d.cols());
    let rt = r * t;
    let mut prog = ConicProgram::new();
    let vars = response_vars(ctx, &mut prog)?;
    let c_inv = &ctx.stk.c_inv;
    let mut multipliers = Vec::new();
    let x0 = match spec.mode {
        SynthesisMode::AdversarialX0 => None,
        _ => Some(check_x0(spec, n)?),
    };

    match (spec.mode, &x0) {
        (SynthesisMode::AdversarialX0, _) => {
            let g = prog.add_var(1.0);
            let mut blk = PsdBlock::new(cols + rows);
            add_dense(&mut blk, 0, ctx.oracle.o());
            for i in 0..cols {
                blk.add_coeff(g, i, i, 1.0);
            }
            let weights: Vec<Vec<(usize, f64)>> = (0..cols).map(|c| vec![(c, 1.0)]).collect();
            add_response_block(&mut blk, &vars, cols, &weights);
            add_dense(&mut blk, cols, c_inv);
            prog.psd_blocks.push(blk);
        }
        (mode, Some(x0)) => {
            let mut blk = PsdBlock::new(1 + rt + rows);
            blk.add_constant(0, 0, x0.dot(&(ctx.oracle.o1() * x0)));
            let o2x = ctx.oracle.o2() * x0;
            for i in 0..rt {
                blk.add_constant(1 + i, 0, o2x[i]);
            }
            add_dense(&mut blk, 1, &ctx.oracle.o3());
            let mut weights = vec![(0..n).map(|c| (c, x0[c])).filter(|e| e.1 != 0.0).collect::<Vec<_>>()];
            weights.extend((0..rt).map(|j| vec![(n + j, 1.0)]));
            add_response_block(&mut blk, &vars, 1 + rt, &weights);
            add_dense(&mut blk, 1 + rt, c_inv);
            if mode == SynthesisMode::EnergyRegret {
                let omega = spec.disturbance.derived_omega(t)?;
                let g = prog.add_var(1.0);
                let lam = prog.add_var(0.0);
                prog.nonneg_vars.push(lam);
                blk.add_coeff(g, 0, 0, 1.0);
                blk.add_coeff(lam, 0, 0, -omega);
                for i in 0..rt {
                    blk.add_coeff(lam, 1 + i, 1 + i, 1.0);
                }
                multipliers.push(lam);
            } else {
                let p = pointwise_shape(spec)?;
                let lams: Vec<usize> = (0..=t).map(|_| prog.add_var(1.0)).collect();
                prog.nonneg_vars.extend(&lams);
                blk.add_coeff(lams[t], 0, 0, 1.0);
                for (i, &lam) in lams[..t].iter().enumerate() {
                    let base = 1 + i * r;
                    for a in 0..r {
                        for b in 0..=a {
                            blk.add_coeff(lam, base + a, base + b, p[(a, b)]);
                        }
                    }
                }
                multipliers = lams;
            }
            prog.psd_blocks.push(blk);
        }
        (_, None) => unreachable!("fixed-x0 modes always carry x0"),
    }

    if let (Some(cs), Some(x0)) = (&spec.constraints, &x0) {
        // Expose Φu⁰x0 and the Φu columns in the layout the safety rows expect.
        let nx = d.state_rows();
        let mu = m * (t + 1);
        let mut map = ProgramMap::default();
        let y: Vec<usize> = (0..mu).map(|_| prog.add_var(0.0)).collect();
        for (l, &yv) in y.iter().enumerate() {
            let mut terms = vec![(yv, 1.0)];
            for c in 0..n {
                if let Some(v) = vars.get(nx + l, c) {
                    if x0[c] != 0.0 {
                        terms.push((v, -x0[c]));
                    }
                }
            }
            prog.add_equality(&terms, 0.0);
        }
        map.y = Some(y);
        map.columns = (0..cols)
            .map(|c| {
                let start = (0..mu).find(|&l| vars.get(nx + l, c).is_some())?;
                Some((start, (start..mu).map(|l| vars.get(nx + l, c).expect("causal suffix")).collect()))
            })
            .collect();
        add_safety_rows(ctx, &mut prog, &map, cs, x0, pointwise_shape(spec)?)?;
    } else if spec.constraints.is_some() {
        return Err(Error::InvalidArgument("constraints need a fixed x0".into()));
    }

    let report = conic::solve_with(&prog, &spec.options.solver);
    if report.status != SolveStatus::Optimal {
        return Err(solver_error(&report));
    }
    let mut phi = DMatrix::zeros(rows, cols);
    for (i, row) in vars.idx.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v {
                phi[(i, c)] = report.primal[*v];
            }
        }
    }
    let phi = SystemResponse::new(d, phi)?;
    let controller = recover_controller(&ctx.system, &ctx.stk, &phi)?;
    Ok(SynthesisResult {
        mode: spec.mode,
        phi,
        gamma_star: report.objective_value,
        multipliers: multipliers.iter().map(|&v| report.primal[v]).collect(),
        controller,
        report,
    })
}

/// `Φ` entries the literal program leaves free, as a check on its layout.
pub fn free_entries(ctx: &SynthesisContext) -> usize {
    let d = ctx.dims();
    (0..d.rows()).map(|i| d.causal_width(d.row_step(i))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostWeights, LtvSystem};

    #[test]
    fn free_entries_match_mask_complement() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let sys = LtvSystem::time_invariant(a, b, DMatrix::identity(2, 2), 3).unwrap();
        let costs = CostWeights::constant(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 3).unwrap();
        let ctx = SynthesisContext::new(&sys, &costs).unwrap();
        let d = ctx.dims();
        let masked = crate::slp::causality_mask(d).len();
        assert_eq!(free_entries(&ctx) + masked, d.rows() * d.cols());
    }
}
