//! Experiment configuration files (TOML) and their validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use slsregret::conic::SolveOptions;
use slsregret::model::spring_damper;
use slsregret::sim::DisturbanceScenario;
use slsregret::synth::{Formulation, SynthOptions};
use slsregret::{ConstraintSet, CostWeights, DisturbanceModel, LtvSystem};

/// A configuration problem, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub modes: Vec<String>,
    pub system: RawSystem,
    pub costs: RawCosts,
    pub disturbance: RawDisturbance,
    pub constraints: Option<RawConstraints>,
    #[serde(default)]
    pub scenarios: Vec<RawScenario>,
    #[serde(default)]
    pub solver: RawSolver,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpringDamper {
    pub c: f64,
    pub d: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub spring_damper: Option<RawSpringDamper>,
    pub a: Option<Matrix>,
    pub b: Option<Matrix>,
    pub e: Option<Matrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCosts {
    pub q: Matrix,
    pub r: Matrix,
    /// Terminal state weight; defaults to `q`.
    pub q_terminal: Option<Matrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawDisturbance {
    Energy { omega: f64 },
    Ellipsoid { p: Matrix },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConstraints {
    #[serde(default)]
    pub hx: Matrix,
    #[serde(default)]
    pub hu: Matrix,
    /// Modes synthesised with the constraints; defaults to the pointwise one.
    pub apply_to: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawScenario {
    Constant { name: String, value: Vec<f64> },
    RandomEllipsoid { name: String, seed: Option<u64>, count: Option<usize> },
    BoundaryEllipsoid { name: String, seed: Option<u64>, count: Option<usize> },
    WorstCaseEnergy { name: String, omega: Option<f64> },
    Custom { name: String, file: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    pub time_limit: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub prescale: bool,
    #[serde(default)]
    pub literal: bool,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    100
}

impl Default for RawSolver {
    fn default() -> Self {
        Self {
            tolerance: default_tol(),
            time_limit: None,
            max_iter: default_max_iter(),
            prescale: false,
            literal: false,
        }
    }
}

/// A controller the tool can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    H2,
    Hinf,
    EnergyRegret,
    PointwiseRegret,
    AdversarialX0,
    Noncausal,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::H2, Mode::Hinf, Mode::EnergyRegret, Mode::PointwiseRegret, Mode::AdversarialX0, Mode::Noncausal];

    pub fn name(self) -> &'static str {
        match self {
            Mode::H2 => "h2",
            Mode::Hinf => "hinf",
            Mode::EnergyRegret => "energy_regret",
            Mode::PointwiseRegret => "pointwise_regret",
            Mode::AdversarialX0 => "adversarial_x0",
            Mode::Noncausal => "noncausal",
        }
    }

    /// Column header used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Mode::H2 => "H2",
            Mode::Hinf => "H∞",
            Mode::EnergyRegret => "regret (energy)",
            Mode::PointwiseRegret => "regret (pointwise)",
            Mode::AdversarialX0 => "regret (adversarial x0)",
            Mode::Noncausal => "non-causal",
        }
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .map_or_else(|| err(format!("unknown mode {s:?}; expected one of {}", mode_list())), Ok)
    }
}

fn mode_list() -> String {
    Mode::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
}

/// One named disturbance sequence to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: DisturbanceScenario,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: LtvSystem,
    pub costs: CostWeights,
    pub disturbance: DisturbanceModel,
    pub x0: DVector<f64>,
    pub modes: Vec<Mode>,
    pub constraints: Option<ConstraintSet>,
    pub constrained_modes: Vec<Mode>,
    pub scenarios: Vec<Scenario>,
    pub synth: SynthOptions,
    pub output: Option<PathBuf>,
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub modes: Vec<String>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

fn matrix(field: &str, rows: &Matrix) -> Result<DMatrix<f64>, ConfigError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return err(format!("{field}: rows have different lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return err(format!("{field}: entries must be finite"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn lib(field: &str, e: slsregret::Error) -> ConfigError {
    ConfigError(format!("{field}: {e}"))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config: {}", e.to_string().trim())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates every field and builds the model objects.
    pub fn build(&self, base: &Path, ov: &Overrides) -> Result<Experiment, ConfigError> {
        let t = self.horizon;
        let (a, b, e) = match (&self.system.spring_damper, &self.system.a, &self.system.b) {
            (Some(sd), None, None) => {
                if !(sd.ts > 0.0 && sd.ts.is_finite() && sd.c.is_finite() && sd.d.is_finite()) {
                    return err("system.spring_damper: c, d must be finite and ts positive");
                }
                spring_damper(sd.c, sd.d, sd.ts)
            }
            (None, Some(a), Some(b)) => {
                let a = matrix("system.a", a)?;
                let e = match &self.system.e {
                    Some(e) => matrix("system.e", e)?,
                    None => DMatrix::identity(a.nrows(), a.nrows()),
                };
                (a, matrix("system.b", b)?, e)
            }
            _ => return err("system: give either spring_damper or both a and b"),
        };
        let system = LtvSystem::time_invariant(a, b, e, t).map_err(|e| lib("system", e))?;
        let (n, m) = (system.state_dim(), system.input_dim());

        let q = matrix("costs.q", &self.costs.q)?;
        let r = matrix("costs.r", &self.costs.r)?;
        let qt = match &self.costs.q_terminal {
            Some(m) => matrix("costs.q_terminal", m)?,
            None => q.clone(),
        };
        let mut qs = vec![q; t];
        qs.push(qt);
        let costs = CostWeights::new(qs, vec![r; t + 1]).map_err(|e| lib("costs", e))?;

        let disturbance = match &self.disturbance {
            RawDisturbance::Energy { omega } => {
                DisturbanceModel::energy(*omega).map_err(|e| lib("disturbance.omega", e))?
            }
            RawDisturbance::Ellipsoid { p } => {
                let p = matrix("disturbance.p", p)?;
                if p.nrows() != system.disturbance_dim() || p.ncols() != p.nrows() {
                    return err(format!("disturbance.p: must be {0}×{0}", system.disturbance_dim()));
                }
                DisturbanceModel::ellipsoid(p).map_err(|e| lib("disturbance.p", e))?
            }
        };

        if self.x0.len() != n || self.x0.iter().any(|v| !v.is_finite()) {
            return err(format!("x0: must hold {n} finite entries"));
        }
        let x0 = DVector::from_column_slice(&self.x0);

        let names = if ov.modes.is_empty() { &self.modes } else { &ov.modes };
        if names.is_empty() {
            return err("modes: at least one required");
        }
        let mut modes = Vec::new();
        for name in names {
            let mode: Mode = name.parse().map_err(|e: ConfigError| ConfigError(format!("modes: {}", e.0)))?;
            if !modes.contains(&mode) {
                modes.push(mode);
            }
        }
        if modes.contains(&Mode::PointwiseRegret) && !matches!(disturbance, DisturbanceModel::PointwiseEllipsoid { .. })
        {
            return err("modes: pointwise_regret needs disturbance.kind = \"ellipsoid\"");
        }

        let (constraints, constrained_modes) = match &self.constraints {
            None => (None, Vec::new()),
            Some(c) => {
                let hx = if c.hx.is_empty() { DMatrix::zeros(0, n) } else { matrix("constraints.hx", &c.hx)? };
                let hu = if c.hu.is_empty() { DMatrix::zeros(0, m) } else { matrix("constraints.hu", &c.hu)? };
                if hx.ncols() != n || hu.ncols() != m {
                    return err(format!("constraints: hx needs {n} columns and hu {m}"));
                }
                let cs = ConstraintSet::new(hx, hu).map_err(|e| lib("constraints", e))?;
                let apply: Vec<Mode> = match &c.apply_to {
                    None => vec![Mode::PointwiseRegret],
                    Some(v) => v
                        .iter()
                        .map(|s| {
                            s.parse().map_err(|e: ConfigError| ConfigError(format!("constraints.apply_to: {}", e.0)))
                        })
                        .collect::<Result<_, _>>()?,
                };
                if apply.iter().any(|m| !matches!(m, Mode::EnergyRegret | Mode::PointwiseRegret)) {
                    return err("constraints.apply_to: only energy_regret and pointwise_regret accept constraints");
                }
                if !matches!(disturbance, DisturbanceModel::PointwiseEllipsoid { .. }) {
                    return err("constraints: robust constraints need disturbance.kind = \"ellipsoid\"");
                }
                (Some(cs), apply)
            }
        };

        let ellipsoid = || match &disturbance {
            DisturbanceModel::PointwiseEllipsoid { p } => Ok(p.clone()),
            DisturbanceModel::EnergyBall { .. } => {
                err("scenarios: ellipsoid sampling needs disturbance.kind = \"ellipsoid\"")
            }
        };
        let mut scenarios = Vec::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            let field = format!("scenarios[{i}]");
            match s {
                RawScenario::Constant { name, value } => {
                    if value.len() != system.disturbance_dim() || value.iter().any(|v| !v.is_finite()) {
                        return err(format!("{field}.value: must hold {} finite entries", system.disturbance_dim()));
                    }
                    let source = DisturbanceScenario::Constant(DVector::from_column_slice(value));
                    scenarios.push(Scenario { name: name.clone(), source });
                }
                RawScenario::RandomEllipsoid { name, seed, count }
                | RawScenario::BoundaryEllipsoid { name, seed, count } => {
                    let p = ellipsoid()?;
                    let base_seed = ov.seed.or(*seed).unwrap_or(0);
                    let count = count.unwrap_or(1);
                    let boundary = matches!(s, RawScenario::BoundaryEllipsoid { .. });
                    for k in 0..count {
                        let seed = base_seed.wrapping_add(k as u64);
                        let source = if boundary {
                            DisturbanceScenario::BoundaryEllipsoid { p: p.clone(), seed }
                        } else {
                            DisturbanceScenario::RandomInEllipsoid { p: p.clone(), seed }
                        };
                        let name = if count == 1 { name.clone() } else { format!("{name}_{k:04}") };
                        scenarios.push(Scenario { name, source });
                    }
                }
                RawScenario::WorstCaseEnergy { name, omega } => {
                    let omega = match omega {
                        Some(w) if *w >= 0.0 && w.is_finite() => *w,
                        Some(_) => return err(format!("{field}.omega: must be finite and nonnegative")),
                        None => disturbance.derived_omega(t).map_err(|e| lib(&field, e))?,
                    };
                    scenarios
                        .push(Scenario { name: name.clone(), source: DisturbanceScenario::WorstCaseEnergy { omega } });
                }
                RawScenario::Custom { name, file } => {
                    let path = base.join(file);
                    let w = slsregret::io::read_matrix(&path).map_err(|e| lib(&format!("{field}.file"), e))?;
                    if w.nrows() != t || w.ncols() != system.disturbance_dim() {
                        return err(format!("{field}.file: expected a {t}×{} matrix", system.disturbance_dim()));
                    }
                    let seq = (0..t).map(|k| w.row(k).transpose()).collect();
                    scenarios.push(Scenario { name: name.clone(), source: DisturbanceScenario::Custom(seq) });
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = scenarios.iter().find(|s| !seen.insert(s.name.clone())) {
            return err(format!("scenarios: duplicate name {:?}", dup.name));
        }
        if let Some(bad) =
            scenarios.iter().find(|s| !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return err(format!("scenarios: name {:?} may only use letters, digits, '_' and '-'", bad.name));
        }

        let tol = ov.tol.unwrap_or(self.solver.tolerance);
        if !(tol > 0.0 && tol < 1.0) {
            return err("solver.tolerance: must lie in (0, 1)");
        }
        if self.solver.time_limit.is_some_and(|l| l.is_nan() || l <= 0.0) {
            return err("solver.time_limit: must be positive");
        }
        let synth = SynthOptions {
            solver: SolveOptions {
                tol,
                max_iter: self.solver.max_iter,
                verbose: false,
                time_limit: self.solver.time_limit,
            },
            formulation: if self.solver.literal { Formulation::Literal } else { Formulation::Factored },
            prescale: self.solver.prescale,
        };
        Ok(Experiment {
            system,
            costs,
            disturbance,
            x0,
            modes,
            constraints,
            constrained_modes,
            scenarios,
            synth,
            output: self.output.as_ref().map(|o| base.join(o)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
horizon = 5
x0 = [1.0, 2.0]
modes = ["energy_regret"]

[system.spring_damper]
c = 0.2
d = 0.1
ts = 0.1

[costs]
q = [[0.1, 0.0], [0.0, 0.1]]
r = [[1.0]]

[disturbance]
kind = "ellipsoid"
p = [[1.0, 0.0], [0.0, 1.0]]
"#;

    fn build(text: &str) -> Result<Experiment, ConfigError> {
        RawConfig::parse(text)?.build(Path::new("."), &Overrides::default())
    }

    #[test]
    fn minimal_config_builds() {
        let exp = build(BASE).unwrap();
        assert_eq!(exp.system.horizon(), 5);
        assert_eq!(exp.modes, vec![Mode::EnergyRegret]);
        assert_eq!(exp.synth.solver.tol, 1e-8);
    }

    #[test]
    fn empty_mode_list_is_rejected() {
        let text = BASE.replace(r#"modes = ["energy_regret"]"#, "modes = []");
        assert_eq!(build(&text).unwrap_err().0, "modes: at least one required");
    }

    #[test]
    fn unknown_field_is_named() {
        let text = BASE.replace("[costs]", "[costs]\nqq = 1");
        let e = build(&text).unwrap_err();
        assert!(e.0.contains("qq"), "{e}");
    }

    #[test]
    fn ragged_matrix_is_named() {
        let text = BASE.replace("r = [[1.0]]", "r = [[1.0], [1.0, 2.0]]");
        assert!(build(&text).unwrap_err().0.starts_with("costs.r"));
    }

    #[test]
    fn wrong_x0_length_is_named() {
        let text = BASE.replace("x0 = [1.0, 2.0]", "x0 = [1.0]");
        assert!(build(&text).unwrap_err().0.starts_with("x0"));
    }

    #[test]
    fn command_line_modes_override_config() {
        let raw = RawConfig::parse(BASE).unwrap();
        let ov = Overrides { modes: vec!["h2".into(), "noncausal".into()], tol: Some(1e-6), seed: None };
        let exp = raw.build(Path::new("."), &ov).unwrap();
        assert_eq!(exp.modes, vec![Mode::H2, Mode::Noncausal]);
        assert_eq!(exp.synth.solver.tol, 1e-6);
    }

    #[test]
    fn sampled_scenarios_expand_with_seeds() {
        let text = format!("{BASE}\n[[scenarios]]\nkind = \"boundary_ellipsoid\"\nname = \"b\"\nseed = 7\ncount = 3\n");
        let exp = build(&text).unwrap();
        let names: Vec<_> = exp.scenarios.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["b_0000", "b_0001", "b_0002"]);
        assert!(matches!(exp.scenarios[2].source, DisturbanceScenario::BoundaryEllipsoid { seed: 9, .. }));
    }

    #[test]
    fn pointwise_mode_needs_an_ellipsoid() {
        let text = BASE
            .replace("kind = \"ellipsoid\"\np = [[1.0, 0.0], [0.0, 1.0]]", "kind = \"energy\"\nomega = 3.0")
            .replace(r#"["energy_regret"]"#, r#"["pointwise_regret"]"#);
        assert!(build(&text).unwrap_err().0.starts_with("modes"));
    }
}
