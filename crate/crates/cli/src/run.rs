//! Synthesis, simulation and comparison pipelines behind the subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde_json::{json, Value};
use slsregret::analysis::{regret_certificate, regret_of, synth_h2, synth_hinf};
use slsregret::conic::{SolveReport, SolveStatus};
use slsregret::noncausal::optimal_sequence;
use slsregret::sim::{
    max_violation, rollout, rollout_controller, write_trajectory_csv, DisturbanceScenario, Trajectory,
};
use slsregret::slp::OpenLoop;
use slsregret::synth::{synthesize_with, SynthesisContext, SynthesisMode, SynthesisSpec};
use slsregret::{CausalController, DisturbanceModel, SystemResponse};

use crate::config::{ConfigError, Experiment, Mode};

/// Failure of a pipeline, carrying its process exit code.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(String),
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Other(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Solver(s) | RunError::Other(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<slsregret::Error> for RunError {
    fn from(e: slsregret::Error) -> Self {
        match e {
            slsregret::Error::Solver { .. } | slsregret::Error::InfeasibleConstraint(_) => {
                RunError::Solver(e.to_string())
            }
            other => RunError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(e.to_string())
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::Other(format!("{}: {e}", path.display()))
}

/// A controller to synthesise: a mode, optionally with the robust constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerKey {
    pub mode: Mode,
    pub constrained: bool,
}

impl ControllerKey {
    /// Directory and file-name stem.
    pub fn name(self) -> String {
        if self.constrained {
            format!("{}_constrained", self.mode.name())
        } else {
            self.mode.name().to_string()
        }
    }

    pub fn label(self) -> String {
        if self.constrained {
            format!("{}, constrained", self.mode.label())
        } else {
            self.mode.label().to_string()
        }
    }
}

/// Every controller of an experiment: the listed modes, then the constrained variants.
pub fn controllers(exp: &Experiment) -> Vec<ControllerKey> {
    let mut keys: Vec<ControllerKey> =
        exp.modes.iter().map(|&mode| ControllerKey { mode, constrained: false }).collect();
    if exp.constraints.is_some() {
        keys.extend(exp.constrained_modes.iter().map(|&mode| ControllerKey { mode, constrained: true }));
    }
    keys
}

/// A synthesised controller and its certificate data.
#[derive(Debug, Clone)]
pub struct Synthesised {
    pub key: ControllerKey,
    /// Absent for the non-causal benchmark.
    pub phi: Option<SystemResponse>,
    pub controller: Option<CausalController>,
    pub gamma_star: Option<f64>,
    pub lambda: Vec<f64>,
    pub objective: Option<f64>,
    pub report: Option<SolveReport>,
    pub seconds: f64,
}

/// Solves every controller of `exp` in order.
pub fn synthesize_all(exp: &Experiment, ctx: &SynthesisContext) -> Result<Vec<Synthesised>, RunError> {
    controllers(exp).into_iter().map(|key| synthesize_one(exp, ctx, key)).collect()
}

fn synthesize_one(exp: &Experiment, ctx: &SynthesisContext, key: ControllerKey) -> Result<Synthesised, RunError> {
    log::info!("synthesising {}", key.name());
    let start = Instant::now();
    let base = Synthesised {
        key,
        phi: None,
        controller: None,
        gamma_star: None,
        lambda: Vec::new(),
        objective: None,
        report: None,
        seconds: 0.0,
    };
    let regret_mode = match key.mode {
        Mode::EnergyRegret => Some(SynthesisMode::EnergyRegret),
        Mode::PointwiseRegret => Some(SynthesisMode::PointwiseRegret),
        Mode::AdversarialX0 => Some(SynthesisMode::AdversarialX0),
        Mode::H2 | Mode::Hinf | Mode::Noncausal => None,
    };
    let mut out = match (key.mode, regret_mode) {
        (_, Some(mode)) => {
            let spec = SynthesisSpec {
                system: exp.system.clone(),
                costs: exp.costs.clone(),
                disturbance: exp.disturbance.clone(),
                constraints: if key.constrained { exp.constraints.clone() } else { None },
                mode,
                x0: (mode != SynthesisMode::AdversarialX0).then(|| exp.x0.clone()),
                options: exp.synth.clone(),
            };
            let r = synthesize_with(ctx, &spec)?;
            Synthesised {
                phi: Some(r.phi),
                controller: Some(r.controller),
                gamma_star: Some(r.gamma_star),
                lambda: r.multipliers,
                objective: Some(r.report.objective_value),
                report: Some(r.report),
                ..base
            }
        }
        (Mode::H2, None) => {
            let r = synth_h2(ctx)?;
            Synthesised { phi: Some(r.phi), controller: Some(r.controller), objective: Some(r.objective), ..base }
        }
        (Mode::Hinf, None) => {
            let r = synth_hinf(ctx, &exp.synth.solver)?;
            Synthesised {
                phi: Some(r.phi),
                controller: Some(r.controller),
                objective: Some(r.objective),
                report: r.report,
                ..base
            }
        }
        _ => base,
    };
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::NumericalTrouble => "numerical_trouble",
    }
}

/// Certificate JSON of one controller. `j_star` is the benchmark cost on the first
/// scenario that does not depend on a controller.
pub fn certificate(ctx: &SynthesisContext, s: &Synthesised, j_star: Option<(&str, f64)>) -> Value {
    let sigma = s.phi.as_ref().map(|phi| regret_certificate(ctx, phi));
    let mut v = json!({
        "mode": s.key.name(),
        "gamma_star": s.gamma_star,
        "lambda": s.lambda,
        "objective": s.objective,
        "sigma_max": sigma.map(|c| c.sigma_max),
        "sigma_min": sigma.map(|c| c.sigma_min),
        "solve_seconds": s.report.as_ref().map_or(s.seconds, |r| r.solve_seconds),
        "max_psd_violation": s.report.as_ref().map(|r| r.max_psd_violation),
        "solver_status": s.report.as_ref().map_or("closed_form", |r| status_name(r.status)),
        "iterations": s.report.as_ref().map(|r| r.iterations),
    });
    if s.key.mode == Mode::Noncausal {
        v["j_star"] = json!(j_star.map(|(_, j)| j));
        v["scenario"] = json!(j_star.map(|(n, _)| n));
    }
    v
}

fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| RunError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_at(path))
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(io_at(path))
}

/// Writes `phi.txt`, `gain.txt` and `certificate.json` per controller.
pub fn write_synth(
    exp: &Experiment,
    ctx: &SynthesisContext,
    results: &[Synthesised],
    out: &Path,
) -> Result<(), RunError> {
    let j_star = first_fixed_benchmark(exp, ctx)?;
    for s in results {
        let dir = out.join(s.key.name());
        create_dir(&dir)?;
        if let Some(phi) = &s.phi {
            slsregret::io::write_matrix(dir.join("phi.txt"), phi.matrix())?;
        }
        let gain = match (&s.controller, s.key.mode) {
            (Some(c), _) => c.gain().cloned(),
            (None, Mode::Noncausal) => Some(ctx.oracle.gain().clone()),
            _ => None,
        };
        if let Some(k) = gain {
            slsregret::io::write_matrix(dir.join("gain.txt"), &k)?;
        }
        let j = j_star.as_ref().map(|(n, j)| (n.as_str(), *j));
        write_json(&dir.join("certificate.json"), &certificate(ctx, s, j))?;
    }
    Ok(())
}

fn first_fixed_benchmark(exp: &Experiment, ctx: &SynthesisContext) -> Result<Option<(String, f64)>, RunError> {
    for sc in &exp.scenarios {
        if matches!(sc.source, DisturbanceScenario::WorstCaseEnergy { .. }) {
            continue;
        }
        let w = sc.source.generate(ctx, None)?;
        let delta = exp.system.perturbation(&exp.x0, &w)?;
        return Ok(Some((sc.name.clone(), ctx.oracle.benchmark_cost(&delta))));
    }
    Ok(None)
}

/// One simulated scenario under one controller.
#[derive(Debug, Clone)]
pub struct Run {
    pub scenario: String,
    pub key: ControllerKey,
    pub trajectory: Trajectory,
    pub bound: Option<f64>,
    pub max_violation: Option<f64>,
}

/// Simulates every controller on every scenario. Worst-case scenarios are
/// generated against each controller and skipped for the non-causal one.
pub fn simulate_all(exp: &Experiment, ctx: &SynthesisContext, results: &[Synthesised]) -> Result<Vec<Run>, RunError> {
    let mut runs = Vec::new();
    for sc in &exp.scenarios {
        let fixed = match sc.source {
            DisturbanceScenario::WorstCaseEnergy { .. } => None,
            _ => Some(sc.source.generate(ctx, None)?),
        };
        for s in results {
            let w = match (&fixed, &s.phi) {
                (Some(w), _) => w.clone(),
                (None, Some(phi)) => sc.source.generate(ctx, Some((phi, &exp.x0)))?,
                (None, None) => continue,
            };
            let trajectory = match &s.controller {
                Some(c) => rollout_controller(ctx, c, &exp.x0, &w)?,
                None => {
                    let delta = exp.system.perturbation(&exp.x0, &w)?;
                    let u = optimal_sequence(&ctx.oracle, &ctx.stk, &delta)?;
                    let mut policy = OpenLoop::from_stacked(&u, exp.system.input_dim());
                    rollout(ctx, &mut policy, &exp.x0, &w)?
                }
            };
            if let Some(phi) = &s.phi {
                let delta = exp.system.perturbation(&exp.x0, &w)?;
                let direct = regret_of(ctx, phi, &delta);
                let scale = trajectory.total_cost.abs().max(1.0);
                if (direct - trajectory.regret).abs() > 1e-6 * scale {
                    log::warn!(
                        "{} on {}: simulated regret {} differs from the response value {}",
                        s.key.name(),
                        sc.name,
                        trajectory.regret,
                        direct
                    );
                }
            }
            let bound = regret_bound(exp, s, &w);
            let max_violation = exp.constraints.as_ref().map(|cs| max_violation(&trajectory, cs));
            runs.push(Run { scenario: sc.name.clone(), key: s.key, trajectory, bound, max_violation });
        }
    }
    Ok(runs)
}

/// The regret guarantee that applies to `w`, if any.
fn regret_bound(exp: &Experiment, s: &Synthesised, w: &[DVector<f64>]) -> Option<f64> {
    let energy: f64 = w.iter().map(|wk| wk.norm_squared()).sum();
    let slack = 1.0 + 1e-9;
    match s.key.mode {
        Mode::H2 | Mode::Hinf => None,
        Mode::Noncausal => Some(0.0),
        Mode::AdversarialX0 => s.gamma_star.map(|g| g * (exp.x0.norm_squared() + energy)),
        Mode::EnergyRegret => {
            let omega = exp.disturbance.derived_omega(exp.system.horizon()).ok()?;
            (energy <= omega * slack).then_some(s.gamma_star?)
        }
        Mode::PointwiseRegret => match &exp.disturbance {
            DisturbanceModel::PointwiseEllipsoid { p } => {
                w.iter().all(|wk| wk.dot(&(p * wk)) <= slack).then_some(s.gamma_star?)
            }
            DisturbanceModel::EnergyBall { .. } => None,
        },
    }
}

/// Writes one full trajectory CSV per scenario and controller.
pub fn write_trajectories(runs: &[Run], out: &Path) -> Result<(), RunError> {
    for r in runs {
        let dir = out.join("trajectories").join(r.key.name());
        create_dir(&dir)?;
        let path = dir.join(format!("{}.csv", r.scenario));
        let file = fs::File::create(&path).map_err(io_at(&path))?;
        write_trajectory_csv(&r.trajectory, file)?;
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

/// Rows of the summary table as strings; the bound is "—" when none applies.
pub fn summary_rows(runs: &[Run]) -> (Vec<String>, Vec<Vec<String>>) {
    let constrained = runs.iter().any(|r| r.max_violation.is_some());
    let mut header: Vec<String> =
        ["scenario", "controller", "cost", "regret", "regret_bound"].iter().map(|s| s.to_string()).collect();
    if constrained {
        header.push("max_violation".into());
    }
    let rows = runs
        .iter()
        .map(|r| {
            let mut row = vec![
                r.scenario.clone(),
                r.key.label(),
                num(r.trajectory.total_cost),
                num(r.trajectory.regret),
                r.bound.map_or_else(|| "—".to_string(), num),
            ];
            if constrained {
                row.push(r.max_violation.map_or_else(|| "—".to_string(), num));
            }
            row
        })
        .collect();
    (header, rows)
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = " ".repeat(w - c.chars().count());
                if i < 2 {
                    format!("{c}{pad}")
                } else {
                    format!("{pad}{c}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), RunError> {
    let csv_err = |e: csv::Error| RunError::Other(format!("{}: {e}", path.display()));
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.write_record(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_at(path))
}

fn full(v: f64) -> String {
    format!("{v:.17e}")
}

/// Writes `summary.csv`, `summary.txt`, per-scenario cumulative-cost series and
/// per-controller state trajectories. Returns the aligned table.
pub fn write_compare(runs: &[Run], out: &Path) -> Result<String, RunError> {
    create_dir(out)?;
    let (header, rows) = summary_rows(runs);
    write_csv(&out.join("summary.csv"), &header, &rows)?;
    let table = aligned(&header, &rows);
    fs::write(out.join("summary.txt"), &table).map_err(io_at(&out.join("summary.txt")))?;

    let cum_dir = out.join("cumulative");
    create_dir(&cum_dir)?;
    let mut scenarios: Vec<&str> = Vec::new();
    for r in runs {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    for sc in scenarios {
        let group: Vec<&Run> = runs.iter().filter(|r| r.scenario == sc).collect();
        let mut header = vec!["step".to_string()];
        header.extend(group.iter().map(|r| r.key.name()));
        let series: Vec<Vec<f64>> =
            group.iter().map(|r| slsregret::sim::cumulative_cost_series(&r.trajectory)).collect();
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let rows: Vec<Vec<String>> = (0..len)
            .map(|k| {
                let mut row = vec![k.to_string()];
                row.extend(series.iter().map(|s| s.get(k).map_or_else(String::new, |&v| full(v))));
                row
            })
            .collect();
        write_csv(&cum_dir.join(format!("{sc}.csv")), &header, &rows)?;
    }

    for r in runs {
        let dir = out.join("states").join(r.key.name());
        create_dir(&dir)?;
        let n = r.trajectory.x.first().map_or(0, DVector::len);
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        let rows: Vec<Vec<String>> = r
            .trajectory
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| std::iter::once(k.to_string()).chain(x.iter().map(|&v| full(v))).collect())
            .collect();
        write_csv(&dir.join(format!("{}.csv", r.scenario)), &header, &rows)?;
    }
    Ok(table)
}

/// Output directory: the command-line value, then the config value, then `out`.
pub fn output_dir(exp: &Experiment, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| exp.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Builds the operators shared by all controllers.
pub fn context(exp: &Experiment) -> Result<SynthesisContext, RunError> {
    Ok(SynthesisContext::new(&exp.system, &exp.costs)?)
}
