//! Robust polyhedral state/input constraints under pointwise ellipsoidal
//! disturbances, as second-order-cone rows.
//!
//! A row `h` of `H_z` is met for every admissible `w` iff
//! `hᵀΦ⁰x0 + Σ_j ‖hᵀΦʷ_j P^{-1/2}‖ ≤ 1`, where `Φʷ_j` is the column block
//! of `w_j`. Each norm gets an epigraph variable `t_j` in its own cone.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{ProgramMap, SynthesisContext};
use crate::conic::{ConicProgram, SocConstraint};
use crate::error::{Error, Result};
use crate::linalg::inv_sqrt_spd;
use crate::model::ConstraintSet;

/// One row of `H_z Φ` written in terms of `Φu`: `gᵀΦu + c`.
struct Row {
    g: DVector<f64>,
    c: DVector<f64>,
    /// Earlier row that is exactly the negation of this one.
    mirror: Option<usize>,
}

fn mirror_of(h: &DMatrix<f64>, a: usize) -> Option<usize> {
    (0..a).find(|&b| (0..h.ncols()).all(|j| h[(b, j)] == -h[(a, j)]))
}

fn rows(ctx: &SynthesisContext, cs: &ConstraintSet) -> Result<Vec<Row>> {
    let d = ctx.dims();
    let (n, m, t) = (d.n, d.m, d.horizon);
    let mu = m * (t + 1);
    if cs.hx.nrows() > 0 && cs.hx.ncols() != n {
        return Err(Error::Dimension(format!("Hx has {} columns, expected {n}", cs.hx.ncols())));
    }
    if cs.hu.nrows() > 0 && cs.hu.ncols() != m {
        return Err(Error::Dimension(format!("Hu has {} columns, expected {m}", cs.hu.ncols())));
    }
    let (nx, nu) = (cs.hx.nrows(), cs.hu.nrows());
    let mut out = Vec::with_capacity((nx + nu) * (t + 1));
    for k in 0..=t {
        let f_k = ctx.stk.f.rows(k * n, n);
        let g_k = ctx.stk.g.rows(k * n, n);
        for a in 0..nx {
            let h = cs.hx.row(a);
            let mirror = mirror_of(&cs.hx, a).map(|b| out.len() - a + b);
            out.push(Row { g: (h * f_k).transpose(), c: (h * g_k).transpose(), mirror });
        }
    }
    for k in 0..=t {
        for a in 0..nu {
            let mut g = DVector::zeros(mu);
            for b in 0..m {
                g[k * m + b] = cs.hu[(a, b)];
            }
            let mirror = mirror_of(&cs.hu, a).map(|b| out.len() - a + b);
            out.push(Row { g, c: DVector::zeros(d.cols()), mirror });
        }
    }
    Ok(out)
}

/// Appends the robust constraint rows of `cs` to a fixed-`x0` program.
///
/// Rows whose nominal part cannot be influenced by the input and already
/// exceeds one are reported as [`Error::InfeasibleConstraint`] with their
/// index in `H_z`.
pub fn add_safety_rows(
    ctx: &SynthesisContext,
    prog: &mut ConicProgram,
    map: &ProgramMap,
    cs: &ConstraintSet,
    x0: &DVector<f64>,
    p: &DMatrix<f64>,
) -> Result<()> {
    let d = ctx.dims();
    let (n, r, t) = (d.n, d.r, d.horizon);
    let p_isqrt = inv_sqrt_spd(p, "P")?;
    let all = rows(ctx, cs)?;
    let mut epigraph: Vec<Vec<usize>> = Vec::with_capacity(all.len());

    for (i, row) in all.iter().enumerate() {
        let nominal = row.c.rows(0, n).dot(x0);
        let y_terms: Vec<(usize, f64)> = match &map.y {
            Some(y) => row.g.iter().zip(y).filter(|(g, _)| **g != 0.0).map(|(g, &v)| (v, *g)).collect(),
            None => Vec::new(),
        };
        let mut fixed_norms = 0.0;
        let ts: Vec<usize> = match row.mirror {
            Some(b) => epigraph[b].clone(),
            None => {
                let mut ts = Vec::new();
                for j in 0..t {
                    let mut cols: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
                    let mut cv = DVector::zeros(r);
                    for bcol in 0..r {
                        let col = n + j * r + bcol;
                        let pis = p_isqrt.row(bcol).transpose();
                        cv += &pis * row.c[col];
                        for (l, &gl) in row.g.iter().enumerate() {
                            if gl == 0.0 {
                                continue;
                            }
                            if let Some(v) = map.phi_u_var(l, col) {
                                *cols.entry(v).or_insert_with(|| DVector::zeros(r)) += &pis * gl;
                            }
                        }
                    }
                    if cols.is_empty() {
                        fixed_norms += cv.norm();
                        continue;
                    }
                    let tv = prog.add_var(0.0);
                    let mut soc = SocConstraint::new(1 + r);
                    soc.add_coeff(0, tv, 1.0);
                    for a in 0..r {
                        soc.constant[1 + a] = cv[a];
                    }
                    for (v, coef) in cols {
                        for a in 0..r {
                            soc.add_coeff(1 + a, v, coef[a]);
                        }
                    }
                    prog.soc_constraints.push(soc);
                    ts.push(tv);
                }
                ts
            }
        };
        if row.mirror.is_some() {
            // Same norms as the mirrored row; recompute the fixed part.
            for j in 0..t {
                let has_vars = (0..r).any(|bcol| {
                    let col = n + j * r + bcol;
                    row.g.iter().enumerate().any(|(l, &gl)| gl != 0.0 && map.phi_u_var(l, col).is_some())
                });
                if !has_vars {
                    let mut cv = DVector::zeros(r);
                    for bcol in 0..r {
                        cv += p_isqrt.row(bcol).transpose() * row.c[n + j * r + bcol];
                    }
                    fixed_norms += cv.norm();
                }
            }
        }
        if y_terms.is_empty() && nominal + fixed_norms > 1.0 + 1e-12 {
            return Err(Error::InfeasibleConstraint(i));
        }
        let mut lin = SocConstraint::new(1);
        lin.constant[0] = 1.0 - nominal - fixed_norms;
        for (v, g) in y_terms {
            lin.add_coeff(0, v, -g);
        }
        for &tv in &ts {
            lin.add_coeff(0, tv, -1.0);
        }
        prog.soc_constraints.push(lin);
        epigraph.push(ts);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrored_rows_are_detected() {
        let h = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 2.0]);
        assert_eq!(mirror_of(&h, 0), None);
        assert_eq!(mirror_of(&h, 1), Some(0));
        assert_eq!(mirror_of(&h, 2), None);
    }
}
