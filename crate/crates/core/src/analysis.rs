//! Baseline syntheses, worst-case disturbances and spectral regret bounds.

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, SolveOptions, SolveReport, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_eigenvalues, symmetrize};
use crate::slp::{recover_controller, CausalController, SystemResponse};
use crate::synth::{recover_response, regret_block, solver_error, ProgramMap, SynthesisContext};

/// `ΦᵀCΦ − O`: the regret of `Φ` is `δᵀ(ΦᵀCΦ − O)δ`.
pub fn regret_matrix(ctx: &SynthesisContext, phi: &SystemResponse) -> DMatrix<f64> {
    symmetrize(&(phi.cost_matrix(&ctx.stk) - ctx.oracle.o()))
}

/// Regret of `Φ` on one perturbation `δ = [x0; w]`.
pub fn regret_of(ctx: &SynthesisContext, phi: &SystemResponse, delta: &DVector<f64>) -> f64 {
    let (x, u) = phi.apply(delta);
    ctx.stk.cost(&x, &u) - ctx.oracle.benchmark_cost(delta)
}

/// Maximiser of `wᵀMw + 2bᵀw + c` over `‖w‖² ≤ ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallMaximum {
    pub w: DVector<f64>,
    pub value: f64,
}

fn quad(m: &DMatrix<f64>, b: &DVector<f64>, c: f64, w: &DVector<f64>) -> f64 {
    w.dot(&(m * w)) + 2.0 * b.dot(w) + c
}

/// Exact maximisation of a (possibly indefinite) quadratic over a ball.
///
/// The maximiser is `w(μ) = (μI − M)⁻¹b` with `μ ≥ max(0, λ_max(M))`; `μ` is
/// found by bisection on `‖w(μ)‖² = ω`. When `b` has no weight on the top
/// eigenspace and `‖w(λ_max)‖² < ω`, the remaining norm is put along a top
/// eigenvector.
pub fn maximize_on_ball(m: &DMatrix<f64>, b: &DVector<f64>, c: f64, omega: f64) -> BallMaximum {
    let dim = b.len();
    if omega <= 0.0 || dim == 0 {
        return BallMaximum { w: DVector::zeros(dim), value: c };
    }
    let (vals, vecs) = sym_eigen(m);
    let beta = vecs.transpose() * b;
    let (top, lmax) =
        vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let scale = vals.amax().max(b.norm()).max(1.0);
    let radius = omega.sqrt();
    let at = |mu: f64, skip_top: bool| -> DVector<f64> {
        let mut coef = DVector::zeros(dim);
        for i in 0..dim {
            let gap = mu - vals[i];
            if skip_top && gap <= 1e-12 * scale {
                continue;
            }
            coef[i] = beta[i] / gap;
        }
        &vecs * coef
    };
    let lo = lmax.max(0.0);
    let mut candidates = Vec::new();

    if lmax < 0.0 {
        let w = at(0.0, false);
        if w.norm_squared() <= omega {
            let value = quad(m, b, c, &w);
            return BallMaximum { w, value };
        }
    }
    let degenerate = (0..dim).filter(|&i| lo - vals[i] <= 1e-12 * scale).all(|i| beta[i].abs() <= 1e-14 * scale);
    if degenerate {
        let wp = at(lo, true);
        let rest = omega - wp.norm_squared();
        if rest >= 0.0 {
            let w = wp + vecs.column(top) * rest.sqrt();
            candidates.push(w);
        }
    }
    if b.norm() > 0.0 {
        let (mut a, mut z) = (lo, lo + b.norm() / radius + 1.0);
        for _ in 0..2000 {
            let mid = 0.5 * (a + z);
            if mid <= a || mid >= z || z - a <= 1e-15 * z.abs() {
                break;
            }
            let gaps_ok = (0..dim).all(|i| mid - vals[i] > 0.0);
            if !gaps_ok || at(mid, false).norm_squared() > omega {
                a = mid;
            } else {
                z = mid;
            }
        }
        let w = at(z, false);
        let nrm = w.norm();
        if nrm > 0.0 {
            candidates.push(w * (radius / nrm));
        }
    }
    if candidates.is_empty() {
        candidates.push(vecs.column(top) * radius);
    }
    candidates
        .into_iter()
        .map(|w| {
            let value = quad(m, b, c, &w);
            BallMaximum { w, value }
        })
        .max_by(|p, q| p.value.total_cmp(&q.value))
        .expect("at least one candidate")
}

/// The regret of `Φ` at fixed `x0` as a quadratic in `w`: `(M, b, c)`.
pub fn regret_quadratic(
    ctx: &SynthesisContext,
    phi: &SystemResponse,
    x0: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = ctx.dims().n;
    let r = regret_matrix(ctx, phi);
    let rt = r.nrows() - n;
    let m = r.view((n, n), (rt, rt)).into_owned();
    let b = r.view((n, 0), (rt, n)) * x0;
    let c = x0.dot(&(r.view((0, 0), (n, n)) * x0));
    (m, b, c)
}

/// Worst disturbance in the energy ball for `Φ` at a known `x0`, and its regret.
pub fn worst_case_disturbance(
    ctx: &SynthesisContext,
    phi: &SystemResponse,
    x0: &DVector<f64>,
    omega: f64,
) -> Result<BallMaximum> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("omega must be finite and nonnegative, got {omega}")));
    }
    if x0.len() != ctx.dims().n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), ctx.dims().n)));
    }
    let (m, b, c) = regret_quadratic(ctx, phi, x0);
    Ok(maximize_on_ball(&m, &b, c, omega))
}

/// Spectral bound `Regret ≤ σ_max(‖x0‖² + ‖w‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretCertificate {
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl RegretCertificate {
    pub fn bound(&self, x0: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.sigma_max * (x0.norm_squared() + w.norm_squared())
    }
}

pub fn regret_certificate(ctx: &SynthesisContext, phi: &SystemResponse) -> RegretCertificate {
    let ev = sym_eigenvalues(&regret_matrix(ctx, phi));
    let sigma_max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sigma_min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    RegretCertificate { sigma_max, sigma_min: if ev.is_empty() { 0.0 } else { sigma_min } }
}

/// A causal baseline controller.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub phi: SystemResponse,
    pub controller: CausalController,
    /// `trace(ΦᵀCΦ)` for H2, `‖ΦᵀCΦ‖₂` for H∞.
    pub objective: f64,
    /// Present when the baseline needed a conic solve.
    pub report: Option<SolveReport>,
}

/// Minimises `trace(ΦᵀCΦ)` over causal achievable responses.
///
/// The objective is `trace(O) + ‖L(Φu − K)‖²_F` and separates by column, so
/// each column is a triangular least-squares problem over its free rows.
pub fn synth_h2(ctx: &SynthesisContext) -> Result<BaselineResult> {
    let d = ctx.dims();
    let (n, m, r, t) = (d.n, d.m, d.r, d.horizon);
    let mu = m * (t + 1);
    let l = &ctx.factor.l;
    let k = &ctx.factor.gain;
    let mut phi_u = DMatrix::zeros(mu, d.cols());
    for c in 0..d.cols() {
        let start = if c < n { 0 } else { ((c - n) / r + 1) * m };
        let kc = k.column(c);
        let mut free = kc.rows(start, mu - start).into_owned();
        if start > 0 {
            let rhs = l.view((start, 0), (mu - start, start)) * kc.rows(0, start);
            let corr = l
                .view((start, start), (mu - start, mu - start))
                .solve_lower_triangular(&rhs)
                .ok_or_else(|| Error::Singular("input weight factor".into()))?;
            free += corr;
        }
        phi_u.view_mut((start, c), (mu - start, 1)).copy_from(&free);
    }
    let phi = ctx.response_from_inputs(&phi_u)?;
    let objective = phi.cost_matrix(&ctx.stk).trace();
    let controller = recover_controller(&ctx.system, &ctx.stk, &phi)?;
    Ok(BaselineResult { phi, controller, objective, report: None })
}

/// Minimises the induced 2-norm of `ΦᵀCΦ` over causal achievable responses.
pub fn synth_hinf(ctx: &SynthesisContext, opts: &SolveOptions) -> Result<BaselineResult> {
    let mut prog = ConicProgram::new();
    let mut map = ProgramMap::default();
    let gamma = prog.add_var(1.0);
    let (mut blk, p) = regret_block(ctx, &mut prog, None, &mut map);
    let o = ctx.oracle.o();
    for j in 0..p {
        blk.add_coeff(gamma, j, j, 1.0);
        for i in j..p {
            blk.add_constant(i, j, -o[(i, j)]);
        }
    }
    prog.psd_blocks.push(blk);
    map.gamma = Some(gamma);
    let report = conic::solve_with(&prog, opts);
    if report.status != SolveStatus::Optimal {
        return Err(solver_error(&report));
    }
    let phi = recover_response(ctx, &map, None, &report.primal)?;
    let controller = recover_controller(&ctx.system, &ctx.stk, &phi)?;
    Ok(BaselineResult { phi, controller, objective: report.objective_value, report: Some(report) })
}
