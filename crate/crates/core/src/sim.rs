//! Closed-loop rollouts, disturbance scenarios and cost/constraint accounting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::analysis::worst_case_disturbance;
use crate::error::{Error, Result};
use crate::linalg::inv_sqrt_spd;
use crate::model::ConstraintSet;
use crate::slp::{CausalController, Policy, SystemResponse};
use crate::synth::SynthesisContext;

/// One closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_T`.
    pub x: Vec<DVector<f64>>,
    /// `u_0..u_T`.
    pub u: Vec<DVector<f64>>,
    /// `w_0..w_{T-1}`.
    pub w: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
    /// Cost of the non-causal benchmark on the same perturbation.
    pub benchmark: f64,
    pub regret: f64,
}

/// Runs `policy` on the system of `ctx` from `x0` under `w`.
pub fn rollout(
    ctx: &SynthesisContext,
    policy: &mut dyn Policy,
    x0: &DVector<f64>,
    w: &[DVector<f64>],
) -> Result<Trajectory> {
    let sys = &ctx.system;
    let t = sys.horizon();
    let delta = sys.perturbation(x0, w)?;
    let mut x = Vec::with_capacity(t + 1);
    let mut u = Vec::with_capacity(t + 1);
    let mut stage_costs = Vec::with_capacity(t + 1);
    let mut xk = x0.clone();
    for k in 0..=t {
        if xk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        let uk = policy.input(k, &xk);
        if uk.len() != sys.input_dim() {
            return Err(Error::Dimension(format!("policy returned {} inputs at step {k}", uk.len())));
        }
        if uk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        stage_costs.push(ctx_stage_cost(ctx, k, &xk, &uk));
        let next = (k < t).then(|| sys.step(k, &xk, &uk, &w[k]));
        x.push(xk);
        u.push(uk);
        match next {
            Some(n) => xk = n,
            None => break,
        }
    }
    let total_cost: f64 = stage_costs.iter().sum();
    let benchmark = ctx.oracle.benchmark_cost(&delta);
    Ok(Trajectory { x, u, w: w.to_vec(), stage_costs, total_cost, benchmark, regret: total_cost - benchmark })
}

fn ctx_stage_cost(ctx: &SynthesisContext, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let (n, m) = (ctx.stk.n, ctx.stk.m);
    let q = ctx.stk.q.view((k * n, k * n), (n, n));
    let r = ctx.stk.r_cost.view((k * m, k * m), (m, m));
    x.dot(&(q * x)) + u.dot(&(r * u))
}

/// Runs a fresh executor of `ctrl`.
pub fn rollout_controller(
    ctx: &SynthesisContext,
    ctrl: &CausalController,
    x0: &DVector<f64>,
    w: &[DVector<f64>],
) -> Result<Trajectory> {
    let mut exec = ctrl.executor();
    rollout(ctx, &mut exec, x0, w)
}

/// Prefix sums of the stage costs; the last entry is the total cost.
pub fn cumulative_cost_series(traj: &Trajectory) -> Vec<f64> {
    traj.stage_costs
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect()
}

/// Per-step `max(Hx x_k − 1, Hu u_k − 1)`; negative means strictly inside.
pub fn check_constraints(traj: &Trajectory, cs: &ConstraintSet) -> Vec<f64> {
    traj.x
        .iter()
        .zip(&traj.u)
        .map(|(x, u)| {
            let hx = (&cs.hx * x).iter().map(|v| v - 1.0).fold(f64::NEG_INFINITY, f64::max);
            let hu = (&cs.hu * u).iter().map(|v| v - 1.0).fold(f64::NEG_INFINITY, f64::max);
            hx.max(hu)
        })
        .collect()
}

/// Largest entry of [`check_constraints`].
pub fn max_violation(traj: &Trajectory, cs: &ConstraintSet) -> f64 {
    check_constraints(traj, cs).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// How a disturbance sequence is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceScenario {
    /// The same `w_k` at every step.
    Constant(DVector<f64>),
    /// Uniform in `{w : wᵀPw ≤ 1}` at every step.
    RandomInEllipsoid { p: DMatrix<f64>, seed: u64 },
    /// Uniform on the boundary `wᵀPw = 1` at every step.
    BoundaryEllipsoid { p: DMatrix<f64>, seed: u64 },
    /// Maximiser of the regret of a response over `‖w‖² ≤ ω`.
    WorstCaseEnergy { omega: f64 },
    /// An explicit sequence.
    Custom(Vec<DVector<f64>>),
}

impl DisturbanceScenario {
    /// Produces `w_0..w_{T-1}`. `WorstCaseEnergy` needs the response and `x0`.
    pub fn generate(
        &self,
        ctx: &SynthesisContext,
        target: Option<(&SystemResponse, &DVector<f64>)>,
    ) -> Result<Vec<DVector<f64>>> {
        let (r, t) = (ctx.stk.r, ctx.stk.horizon);
        let out = match self {
            Self::Constant(v) => vec![v.clone(); t],
            Self::RandomInEllipsoid { p, seed } => sample_ellipsoid(p, t, *seed, false)?,
            Self::BoundaryEllipsoid { p, seed } => sample_ellipsoid(p, t, *seed, true)?,
            Self::WorstCaseEnergy { omega } => {
                let (phi, x0) = target
                    .ok_or_else(|| Error::InvalidArgument("worst-case scenario needs a response and x0".into()))?;
                let best = worst_case_disturbance(ctx, phi, x0, *omega)?;
                (0..t).map(|k| best.w.rows(k * r, r).into_owned()).collect()
            }
            Self::Custom(w) => w.clone(),
        };
        if out.len() != t || out.iter().any(|wk| wk.len() != r) {
            return Err(Error::Dimension(format!("scenario must give {t} disturbances of length {r}")));
        }
        Ok(out)
    }
}

/// `horizon` draws from the ellipsoid `wᵀPw ≤ 1`, reproducible from `seed`.
pub fn sample_ellipsoid(p: &DMatrix<f64>, horizon: usize, seed: u64, boundary: bool) -> Result<Vec<DVector<f64>>> {
    let map = inv_sqrt_spd(p, "P")?;
    let r = p.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..horizon)
        .map(|_| {
            let mut z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            while z.norm() == 0.0 {
                z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            }
            let radius = if boundary { 1.0 } else { rng.random::<f64>().powf(1.0 / r as f64) };
            &map * (z.normalize() * radius)
        })
        .collect())
}

/// Writes `step, x.., u.., w.., stage_cost, cum_cost`; `w` is blank at the last step.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let (n, m) = (traj.x[0].len(), traj.u[0].len());
    let r = traj.w.first().map_or(0, |w| w.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..r).map(|i| format!("w{i}")));
    header.push("stage_cost".into());
    header.push("cum_cost".into());
    wtr.write_record(&header).map_err(csv_err)?;
    for (k, cum) in cumulative_cost_series(traj).into_iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(traj.x[k].iter().map(fmt));
        rec.extend(traj.u[k].iter().map(fmt));
        match traj.w.get(k) {
            Some(w) => rec.extend(w.iter().map(fmt)),
            None => rec.extend((0..r).map(|_| String::new())),
        }
        rec.push(fmt(&traj.stage_costs[k]));
        rec.push(fmt(&cum));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn fmt(v: &f64) -> String {
    format!("{v:.17e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
