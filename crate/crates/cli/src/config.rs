//! JSON run configuration.
//!
//! ```json
//! {
//!   "game": { "n_agents": 1000, "capacity": 500, "payoff_scale": 0.01,
//!             "rounds_per_unit": 100, "rule": "basic_reinforcement" },
//!   "model": { "kind": "logistic", "scale": 1.0, "center": 0.0 },
//!   "init": { "kind": "gaussian_target", "entry_fraction": 0.2, "sd": 1.0 },
//!   "t_end": 0.6
//! }
//! ```
//!
//! Every other key has a default; [`Resolved::config`] holds the config
//! with all defaults filled in and is what `run.json` echoes.

use std::path::{Path, PathBuf};

use entrydyn::abm::InitSpec;
use entrydyn::kinetic::{self, DensityGrid, GridSpec};
use entrydyn::{GameParams, LearningRule, ProbabilityModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub n_agents: usize,
    pub capacity: usize,
    pub payoff_scale: f64,
    pub rounds_per_unit: u32,
    pub rule: LearningRule,
    #[serde(default)]
    pub outside_payoff: f64,
}

impl GameConfig {
    pub fn params(&self) -> CliResult<GameParams> {
        let params = GameParams::new(self.n_agents, self.capacity, self.payoff_scale, self.rounds_per_unit, self.rule)?
            .with_outside_payoff(self.outside_payoff)?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Logistic {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        center: f64,
    },
    ErevRothRatio { baseline: f64 },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Logistic { scale: 1.0, center: 0.0 }
    }
}

impl ModelConfig {
    pub fn model(&self) -> CliResult<ProbabilityModel> {
        let model = match *self {
            ModelConfig::Logistic { scale, center } => ProbabilityModel::logistic(scale, center)?,
            ModelConfig::ErevRothRatio { baseline } => ProbabilityModel::erev_roth(baseline)?,
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Abm,
    Pde,
    #[default]
    Both,
}

impl Engine {
    pub fn allows(self, other: Engine) -> bool {
        self == Engine::Both || self == other
    }
}

/// Initial condition. `gaussian_target` picks the mean so that the
/// initial entry fraction `a(0)` on the grid equals `entry_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    AllEqual {
        value: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default)]
        snap_to_lattice: bool,
    },
    Explicit {
        values: Vec<f64>,
    },
    Sorted {
        low: f64,
        high: f64,
    },
    GaussianTarget {
        entry_fraction: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Fitted rates must lie within this factor of the predicted rates.
    #[serde(default = "two")]
    pub rate_factor: f64,
    #[serde(default = "sorting_epsilon")]
    pub sorting_epsilon: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rate_factor: 2.0, sorting_epsilon: entrydyn::analysis::SORTING_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub engine: Engine,
    pub init: InitConfig,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Finite-volume grid; defaults to `center +- 12 scale` with 800 cells.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "output_dir")]
    pub output_dir: PathBuf,
    /// Rounds between Monte Carlo records.
    #[serde(default = "one_u64")]
    pub output_stride: u64,
    /// Time between solver records; defaults to `output_stride / M`.
    #[serde(default)]
    pub pde_output_interval: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn cfl_safety() -> f64 {
    0.4
}
fn sorting_epsilon() -> f64 {
    entrydyn::analysis::SORTING_EPSILON
}
fn output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace top-level config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub t_end: Option<f64>,
    pub replicas: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(t_end) = o.t_end {
            self.t_end = t_end;
        }
        if let Some(replicas) = o.replicas {
            self.replicas = replicas;
        }
    }

    /// Validates everything and fills in defaults.
    pub fn resolve(mut self) -> CliResult<Resolved> {
        let params = self.game.params()?;
        let model = self.model.model()?;
        let bad = |key: &str, msg: String| CliError::Config(format!("invalid {key}: {msg}"));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(bad("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if self.replicas == 0 {
            return Err(bad("replicas", "must be at least 1".into()));
        }
        if self.output_stride == 0 {
            return Err(bad("output_stride", "must be at least 1".into()));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(bad("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if let Some(&t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return Err(bad("snapshot_times", format!("{t} is outside [0, t_end]")));
        }
        let t = &self.tolerances;
        if !(t.rate_factor >= 1.0 && t.rate_factor.is_finite()) {
            return Err(bad("rate_factor", format!("must be at least 1, got {}", t.rate_factor)));
        }
        if !(t.sorting_epsilon > 0.0 && t.sorting_epsilon < 1.0) {
            return Err(bad("sorting_epsilon", format!("must lie in (0, 1), got {}", t.sorting_epsilon)));
        }

        let grid = match (self.grid, &model) {
            (Some(g), _) => g,
            (None, ProbabilityModel::Logistic(l)) => GridSpec::default_for(l),
            (None, ProbabilityModel::ErevRothRatio { baseline }) => GridSpec::new(0.0, 50.0 * baseline, 800)?,
        };
        grid.validate()?;
        self.grid = Some(grid);
        let interval = self.pde_output_interval.unwrap_or(self.output_stride as f64 * params.tau());
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(bad("pde_output_interval", format!("must be positive, got {interval}")));
        }
        self.pde_output_interval = Some(interval);

        let init = match &self.init {
            InitConfig::AllEqual { value } => InitSpec::AllEqual { value: *value },
            InitConfig::Gaussian { mean, sd, snap_to_lattice } => {
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(bad("sd", format!("must be non-negative and finite, got {sd}")));
                }
                InitSpec::Gaussian { mean: *mean, sd: *sd, snap_to_lattice: *snap_to_lattice }
            }
            InitConfig::Explicit { values } => {
                if values.len() != params.n_agents() {
                    return Err(bad(
                        "values",
                        format!("explicit initial state has {} entries, n_agents is {}", values.len(), params.n_agents()),
                    ));
                }
                InitSpec::Explicit { values: values.clone() }
            }
            InitConfig::Sorted { low, high } => InitSpec::Sorted { low: *low, high: *high },
            InitConfig::GaussianTarget { entry_fraction, sd } => {
                if !(*sd > 0.0 && sd.is_finite()) {
                    return Err(bad("sd", format!("must be positive and finite, got {sd}")));
                }
                let mean = kinetic::gaussian_mean_for_entry_fraction(&grid, &model, *sd, *entry_fraction)?;
                InitSpec::Gaussian { mean, sd: *sd, snap_to_lattice: false }
            }
        };
        Ok(Resolved { config: self, params, model, init, grid, pde_output_interval: interval })
    }
}

/// A validated configuration with derived engine inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub params: GameParams,
    pub model: ProbabilityModel,
    pub init: InitSpec,
    pub grid: GridSpec,
    pub pde_output_interval: f64,
}

impl Resolved {
    /// The initial condition as a density on the solver grid.
    pub fn initial_density(&self) -> CliResult<DensityGrid> {
        let grid = self.grid;
        let density = match &self.init {
            InitSpec::AllEqual { value } => DensityGrid::point_mass(grid, *value)?,
            InitSpec::Gaussian { mean, sd, .. } => DensityGrid::gaussian(grid, *mean, *sd)?,
            InitSpec::Explicit { values } => {
                let atoms: Vec<(f64, f64)> = values.iter().map(|&q| (q, 1.0)).collect();
                DensityGrid::weighted_cells(grid, &atoms)?
            }
            InitSpec::Sorted { low, high } => {
                let kappa = self.params.kappa();
                DensityGrid::weighted_cells(grid, &[(*low, 1.0 - kappa), (*high, kappa)])?
            }
        };
        Ok(density)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "game": {"n_agents": 10, "capacity": 5, "payoff_scale": 0.01, "rounds_per_unit": 100, "rule": "basic_reinforcement"},
        "init": {"kind": "all_equal", "value": 0.0},
        "t_end": 0.05
    }"#;

    #[test]
    fn defaults_are_filled_in() {
        let r = RunConfig::from_json(MINIMAL).unwrap().resolve().unwrap();
        assert_eq!(r.config.replicas, 1);
        assert_eq!(r.config.engine, Engine::Both);
        assert_eq!(r.config.grid, Some(GridSpec::new(-12.0, 12.0, 800).unwrap()));
        assert_eq!(r.config.pde_output_interval, Some(0.01));
        assert_eq!(r.config.model, ModelConfig::Logistic { scale: 1.0, center: 0.0 });
    }

    #[test]
    fn resolved_config_round_trips() {
        let r = RunConfig::from_json(MINIMAL).unwrap().resolve().unwrap();
        let echoed = serde_json::to_string(&r.config).unwrap();
        let again = RunConfig::from_json(&echoed).unwrap().resolve().unwrap();
        assert_eq!(again.config, r.config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"t_end\"", "\"t_ned\": 1, \"t_end\"");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("t_ned"), "{err}");
    }

    #[test]
    fn errors_name_the_key() {
        let text = MINIMAL.replace("\"capacity\": 5", "\"capacity\": 10");
        let err = RunConfig::from_json(&text).unwrap().resolve().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("capacity"), "{err}");

        let text = MINIMAL.replace("0.05", "-1");
        let err = RunConfig::from_json(&text).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("t_end"), "{err}");
    }

    #[test]
    fn overrides_replace_top_level_keys() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.apply(&Overrides { seed: Some(9), out: Some("x".into()), t_end: Some(2.0), replicas: Some(4) });
        assert_eq!((c.seed, c.output_dir.as_path(), c.t_end, c.replicas), (9, Path::new("x"), 2.0, 4));
    }

    #[test]
    fn target_mean_hits_the_entry_fraction() {
        let text = MINIMAL.replace(
            r#"{"kind": "all_equal", "value": 0.0}"#,
            r#"{"kind": "gaussian_target", "entry_fraction": 0.2, "sd": 1.0}"#,
        );
        let r = RunConfig::from_json(&text).unwrap().resolve().unwrap();
        let f0 = r.initial_density().unwrap();
        let a = kinetic::moments(&f0, &r.model).unwrap().a;
        assert!((a - 0.2).abs() < 1e-9, "{a}");
    }
}
