//! Regret-optimal synthesis programs over system responses.
//!
//! Every achievable response satisfies `Φx = FΦu + G`, and its regret matrix
//! factors as `ΦᵀCΦ − O = D̂ᵀD̂` with `D̂ = L(Φu − K)`, where `K` is the
//! non-causal gain and `L` the lower-triangular factor of `ℛ + Fᵀ𝒬F` (see
//! [`crate::noncausal::RegretFactor`]). Because `L` is lower triangular, `D̂`
//! inherits the causality pattern of `Φu`, so the programs below take the
//! causal entries of `Φu` as decision variables and impose
//!
//! ```text
//! ⎡ top  D̂ᵀ ⎤
//! ⎣ D̂    I  ⎦ ⪰ 0
//! ```
//!
//! which is the Schur complement of `top − (ΦᵀCΦ − O) ⪰ 0` restricted to the
//! relevant columns. With a fixed `x0` only `Φu⁰x0` matters, so the `x0`
//! columns collapse into one column `â = L(Φu⁰x0 − K⁰x0)`:
//!
//! * energy ball: `top = diag(γ − λω, λI)`;
//! * pointwise ellipsoid: `top = diag(λ̄_T, Σ_i λ̄_i 𝒫_{i+1})`;
//! * adversarial `x0`: `top = γI` over all columns.
//!
//! The SLP equality is thereby eliminated and every program has side
//! `1 + rT + m(T+1)` (or `n + rT + m(T+1)`). [`literal`] assembles the same
//! programs in their original `C⁻¹` form with explicit achievability
//! equalities, for cross-checking at small scale.

pub mod literal;
mod safety;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProgram, PsdBlock, SolveOptions, SolveReport, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{build_stacked, ConstraintSet, CostWeights, DisturbanceModel, LtvSystem, StackedDynamics};
use crate::noncausal::{NonCausalOracle, RegretFactor};
use crate::slp::{recover_controller, CausalController, Dims, SystemResponse};

pub use safety::add_safety_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    /// Theorem-1 program: worst case over `‖w‖² ≤ ω` for a known `x0`.
    EnergyRegret,
    /// Worst case over `δ` normalised by `‖δ‖²`.
    AdversarialX0,
    /// Worst case over `w_kᵀPw_k ≤ 1` for a known `x0`.
    PointwiseRegret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Reduced program over the causal entries of `Φu`.
    #[default]
    Factored,
    /// Original `C⁻¹` form with the achievability equality; desk scale only.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub solver: SolveOptions,
    pub formulation: Formulation,
    /// Congruence-scale each PSD block to unit constant diagonal.
    pub prescale: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { solver: SolveOptions::default(), formulation: Formulation::Factored, prescale: false }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisSpec {
    pub system: LtvSystem,
    pub costs: CostWeights,
    pub disturbance: DisturbanceModel,
    pub constraints: Option<ConstraintSet>,
    pub mode: SynthesisMode,
    /// Required by the fixed-`x0` modes.
    pub x0: Option<DVector<f64>>,
    pub options: SynthOptions,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub mode: SynthesisMode,
    pub phi: SystemResponse,
    pub gamma_star: f64,
    /// `[λ]` for the energy program, `[λ̄_0, ..., λ̄_T]` for the pointwise one.
    pub multipliers: Vec<f64>,
    pub controller: CausalController,
    pub report: SolveReport,
}

/// Operators shared by every program on one system.
#[derive(Debug, Clone)]
pub struct SynthesisContext {
    pub system: LtvSystem,
    pub stk: StackedDynamics,
    pub oracle: NonCausalOracle,
    pub factor: RegretFactor,
}

impl SynthesisContext {
    pub fn new(system: &LtvSystem, costs: &CostWeights) -> Result<Self> {
        let stk = build_stacked(system, costs)?;
        let oracle = NonCausalOracle::build(&stk)?;
        let factor = oracle.regret_factor()?;
        Ok(Self { system: system.clone(), stk, oracle, factor })
    }

    pub fn dims(&self) -> Dims {
        Dims::of(&self.stk)
    }

    /// Assembles `Φ` from `Φu` through `Φx = FΦu + G`.
    pub fn response_from_inputs(&self, phi_u: &DMatrix<f64>) -> Result<SystemResponse> {
        let phi_x = &self.stk.f * phi_u + &self.stk.g;
        SystemResponse::from_parts(self.dims(), &phi_x, phi_u)
    }
}

/// Variable bookkeeping of an assembled program.
#[derive(Debug, Clone, Default)]
pub struct ProgramMap {
    pub gamma: Option<usize>,
    pub multipliers: Vec<usize>,
    /// `Φu⁰x0` entries (fixed-`x0` modes).
    pub y: Option<Vec<usize>>,
    /// Per δ column: first free row of `Φu` and the variables of rows `start..`.
    pub columns: Vec<Option<(usize, Vec<usize>)>>,
}

impl ProgramMap {
    /// Variable of `Φu[row, col]`, if that entry is free.
    pub fn phi_u_var(&self, row: usize, col: usize) -> Option<usize> {
        let (start, vars) = self.columns.get(col)?.as_ref()?;
        row.checked_sub(*start).map(|i| vars[i])
    }
}

fn check_x0(spec: &SynthesisSpec, n: usize) -> Result<DVector<f64>> {
    let x0 = spec.x0.clone().ok_or_else(|| Error::InvalidArgument(format!("{:?} needs x0", spec.mode)))?;
    if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension(format!("x0 must be a finite vector of length {n}")));
    }
    Ok(x0)
}

fn pointwise_shape(spec: &SynthesisSpec) -> Result<&DMatrix<f64>> {
    match &spec.disturbance {
        DisturbanceModel::PointwiseEllipsoid { p } => Ok(p),
        DisturbanceModel::EnergyBall { .. } => {
            Err(Error::InvalidArgument("pointwise regret needs a pointwise ellipsoid model".into()))
        }
    }
}

/// Adds the regret LMI `[[top, D̂ᵀ], [D̂, I]]` to `prog`, creating variables for
/// the free entries of `Φu`. Returns the block and the column map; the caller
/// fills in `top`.
pub(crate) fn regret_block(
    ctx: &SynthesisContext,
    prog: &mut ConicProgram,
    x0: Option<&DVector<f64>>,
    map: &mut ProgramMap,
) -> (PsdBlock, usize) {
    let d = ctx.dims();
    let (n, m, r, t) = (d.n, d.m, d.r, d.horizon);
    let mu = m * (t + 1);
    let l = &ctx.factor.l;
    let k = &ctx.factor.gain;
    // One LMI column per x0 column (or one for Φu⁰x0), then one per w column.
    let x_cols = if x0.is_some() { 1 } else { n };
    let p = x_cols + r * t;
    let mut blk = PsdBlock::new(p + mu);
    for i in 0..mu {
        blk.add_constant(p + i, p + i, 1.0);
    }
    map.columns = vec![None; n + r * t];

    let column = |blk: &mut PsdBlock, lmi_col: usize, start: usize, target: DVector<f64>, vars: &[usize]| {
        let lt = l * target;
        for i in 0..mu {
            blk.add_constant(p + i, lmi_col, -lt[i]);
        }
        for (off, &v) in vars.iter().enumerate() {
            let row = start + off;
            for i in row..mu {
                blk.add_coeff(v, p + i, lmi_col, l[(i, row)]);
            }
        }
    };

    match x0 {
        Some(x0) => {
            let target = k.columns(0, n) * x0;
            if x0.iter().any(|v| *v != 0.0) {
                let y: Vec<usize> = (0..mu).map(|_| prog.add_var(0.0)).collect();
                column(&mut blk, 0, 0, target, &y);
                map.y = Some(y);
            } else {
                column(&mut blk, 0, 0, target, &[]);
            }
        }
        None => {
            for c in 0..n {
                let vars: Vec<usize> = (0..mu).map(|_| prog.add_var(0.0)).collect();
                column(&mut blk, c, 0, k.column(c).into_owned(), &vars);
                map.columns[c] = Some((0, vars));
            }
        }
    }
    for j in 0..t {
        let start = (j + 1) * m;
        for a in 0..r {
            let col = n + j * r + a;
            let vars: Vec<usize> = (start..mu).map(|_| prog.add_var(0.0)).collect();
            column(&mut blk, x_cols + j * r + a, start, k.column(col).into_owned(), &vars);
            map.columns[col] = Some((start, vars));
        }
    }
    (blk, p)
}

/// Assembles the factored program of `spec` without solving it.
pub fn build_program(ctx: &SynthesisContext, spec: &SynthesisSpec) -> Result<(ConicProgram, ProgramMap)> {
    let d = ctx.dims();
    let (n, r, t) = (d.n, d.r, d.horizon);
    let mut prog = ConicProgram::new();
    let mut map = ProgramMap::default();
    match spec.mode {
        SynthesisMode::EnergyRegret => {
            let x0 = check_x0(spec, n)?;
            let omega = spec.disturbance.derived_omega(t)?;
            let gamma = prog.add_var(1.0);
            let lambda = prog.add_var(0.0);
            prog.nonneg_vars.push(lambda);
            let (mut blk, p) = regret_block(ctx, &mut prog, Some(&x0), &mut map);
            blk.add_coeff(gamma, 0, 0, 1.0);
            blk.add_coeff(lambda, 0, 0, -omega);
            for i in 1..p {
                blk.add_coeff(lambda, i, i, 1.0);
            }
            prog.psd_blocks.push(blk);
            map.gamma = Some(gamma);
            map.multipliers = vec![lambda];
        }
        SynthesisMode::PointwiseRegret => {
            let x0 = check_x0(spec, n)?;
            let pm = pointwise_shape(spec)?.clone();
            let lambdas: Vec<usize> = (0..=t).map(|_| prog.add_var(1.0)).collect();
            prog.nonneg_vars.extend(&lambdas);
            let (mut blk, _) = regret_block(ctx, &mut prog, Some(&x0), &mut map);
            blk.add_coeff(lambdas[t], 0, 0, 1.0);
            for (i, &lam) in lambdas[..t].iter().enumerate() {
                let base = 1 + i * r;
                for a in 0..r {
                    for b in 0..=a {
                        blk.add_coeff(lam, base + a, base + b, pm[(a, b)]);
                    }
                }
            }
            prog.psd_blocks.push(blk);
            map.multipliers = lambdas;
        }
        SynthesisMode::AdversarialX0 => {
            let gamma = prog.add_var(1.0);
            let (mut blk, p) = regret_block(ctx, &mut prog, None, &mut map);
            for i in 0..p {
                blk.add_coeff(gamma, i, i, 1.0);
            }
            prog.psd_blocks.push(blk);
            map.gamma = Some(gamma);
        }
    }
    if let Some(cs) = &spec.constraints {
        let x0 = check_x0(spec, n)?;
        let pm = pointwise_shape(spec)?;
        add_safety_rows(ctx, &mut prog, &map, cs, &x0, pm)?;
    }
    if spec.options.prescale {
        prog.psd_blocks.iter_mut().for_each(prescale_block);
    }
    Ok((prog, map))
}

/// Congruence `S·M·S` with `S = diag(1/√c_ii)` on positive constant diagonals.
pub fn prescale_block(b: &mut PsdBlock) {
    let mut diag = vec![0.0; b.dim];
    for &(i, j, v) in &b.constant {
        if i == j {
            diag[i] += v;
        }
    }
    let s: Vec<f64> = diag.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
    b.constant.iter_mut().for_each(|e| e.2 *= s[e.0] * s[e.1]);
    b.coeffs.iter_mut().for_each(|e| e.3 *= s[e.1] * s[e.2]);
}

pub(crate) fn solver_error(rep: &SolveReport) -> Error {
    Error::Solver { status: rep.status, message: rep.message.clone() }
}

/// Rebuilds `Φ` from a solved factored program.
pub(crate) fn recover_response(
    ctx: &SynthesisContext,
    map: &ProgramMap,
    x0: Option<&DVector<f64>>,
    sol: &[f64],
) -> Result<SystemResponse> {
    let d = ctx.dims();
    let (n, m, t) = (d.n, d.m, d.horizon);
    let mu = m * (t + 1);
    let k = &ctx.factor.gain;
    let mut phi_u = DMatrix::zeros(mu, d.cols());
    for (c, col) in map.columns.iter().enumerate() {
        if let Some((start, vars)) = col {
            for (off, &v) in vars.iter().enumerate() {
                phi_u[(start + off, c)] = sol[v];
            }
        }
    }
    if let Some(x0) = x0 {
        // Minimum-norm update of K⁰ matching the optimised Φu⁰x0.
        let k0 = k.columns(0, n).into_owned();
        let mut phi0 = k0.clone();
        let nrm2 = x0.norm_squared();
        if let (Some(y), true) = (&map.y, nrm2 > 0.0) {
            let yv = DVector::from_iterator(mu, y.iter().map(|&v| sol[v]));
            phi0 += (yv - &k0 * x0) * x0.transpose() / nrm2;
        }
        phi_u.columns_mut(0, n).copy_from(&phi0);
    }
    ctx.response_from_inputs(&phi_u)
}

pub fn synthesize(spec: &SynthesisSpec) -> Result<SynthesisResult> {
    let ctx = SynthesisContext::new(&spec.system, &spec.costs)?;
    synthesize_with(&ctx, spec)
}

/// Solves `spec` reusing the operators in `ctx`.
pub fn synthesize_with(ctx: &SynthesisContext, spec: &SynthesisSpec) -> Result<SynthesisResult> {
    if spec.options.formulation == Formulation::Literal {
        return literal::synthesize(ctx, spec);
    }
    let (prog, map) = build_program(ctx, spec)?;
    let report = conic::solve_with(&prog, &spec.options.solver);
    match report.status {
        SolveStatus::Optimal => {}
        _ => return Err(solver_error(&report)),
    }
    let x0 = match spec.mode {
        SynthesisMode::AdversarialX0 => None,
        _ => Some(check_x0(spec, ctx.dims().n)?),
    };
    let phi = recover_response(ctx, &map, x0.as_ref(), &report.primal)?;
    let controller = recover_controller(&ctx.system, &ctx.stk, &phi)?;
    let multipliers = map.multipliers.iter().map(|&v| report.primal[v]).collect();
    Ok(SynthesisResult { mode: spec.mode, phi, gamma_star: report.objective_value, multipliers, controller, report })
}

fn with_mode(spec: &SynthesisSpec, mode: SynthesisMode) -> Result<SynthesisResult> {
    if spec.mode != mode {
        return Err(Error::InvalidArgument(format!("spec mode is {:?}, expected {mode:?}", spec.mode)));
    }
    synthesize(spec)
}

pub fn synth_energy_regret(spec: &SynthesisSpec) -> Result<SynthesisResult> {
    with_mode(spec, SynthesisMode::EnergyRegret)
}

pub fn synth_adversarial_x0(spec: &SynthesisSpec) -> Result<SynthesisResult> {
    with_mode(spec, SynthesisMode::AdversarialX0)
}

pub fn synth_pointwise_regret(spec: &SynthesisSpec) -> Result<SynthesisResult> {
    with_mode(spec, SynthesisMode::PointwiseRegret)
}

/// Worst-case regret of `phi` over `w` in the energy ball, evaluated
/// at the multiplier: `x0ᵀO1x0 − λω + γ`-block LMI in its original form.
///
/// Returns the smallest eigenvalue of
/// `[[x0ᵀO1x0 − λω + γ, x0ᵀO2ᵀ, x0ᵀΦ⁰ᵀ], [O2x0, O3 + λI, Φʷᵀ], [Φ⁰x0, Φʷ, C⁻¹]]`.
pub fn energy_lmi_min_eigenvalue(
    ctx: &SynthesisContext,
    phi: &SystemResponse,
    x0: &DVector<f64>,
    omega: f64,
    gamma: f64,
    lambda: f64,
) -> f64 {
    let rt = ctx.dims().cols() - ctx.dims().n;
    let top_left = x0.dot(&(ctx.oracle.o1() * x0)) - lambda * omega + gamma;
    let middle = ctx.oracle.o3() + DMatrix::identity(rt, rt) * lambda;
    original_lmi_min_eigenvalue(ctx, phi, x0, top_left, middle)
}

/// Same for the pointwise program with multipliers `λ̄_0..λ̄_T`.
pub fn pointwise_lmi_min_eigenvalue(
    ctx: &SynthesisContext,
    phi: &SystemResponse,
    x0: &DVector<f64>,
    p: &DMatrix<f64>,
    multipliers: &[f64],
) -> f64 {
    let d = ctx.dims();
    let (r, t) = (d.r, d.horizon);
    let top_left = x0.dot(&(ctx.oracle.o1() * x0)) + multipliers[t];
    let mut middle = ctx.oracle.o3();
    for (i, &lam) in multipliers[..t].iter().enumerate() {
        let mut blk = middle.view_mut((i * r, i * r), (r, r));
        blk += p * lam;
    }
    original_lmi_min_eigenvalue(ctx, phi, x0, top_left, middle)
}

fn original_lmi_min_eigenvalue(
    ctx: &SynthesisContext,
    phi: &SystemResponse,
    x0: &DVector<f64>,
    top_left: f64,
    middle: DMatrix<f64>,
) -> f64 {
    let rt = middle.nrows();
    let rows = ctx.stk.response_rows();
    let side = 1 + rt + rows;
    let mut lmi = DMatrix::zeros(side, side);
    let o2x = ctx.oracle.o2() * x0;
    let phi0x = phi.phi0() * x0;
    lmi[(0, 0)] = top_left;
    lmi.view_mut((1, 0), (rt, 1)).copy_from(&o2x);
    lmi.view_mut((0, 1), (1, rt)).copy_from(&o2x.transpose());
    lmi.view_mut((1, 1), (rt, rt)).copy_from(&middle);
    lmi.view_mut((1 + rt, 0), (rows, 1)).copy_from(&phi0x);
    lmi.view_mut((0, 1 + rt), (1, rows)).copy_from(&phi0x.transpose());
    let phiw = phi.phiw();
    lmi.view_mut((1 + rt, 1), (rows, rt)).copy_from(&phiw);
    lmi.view_mut((1, 1 + rt), (rt, rows)).copy_from(&phiw.transpose());
    lmi.view_mut((1 + rt, 1 + rt), (rows, rows)).copy_from(&ctx.stk.c_inv);
    crate::linalg::min_eigenvalue(&lmi)
}
