use std::fs;
use std::path::{Path, PathBuf};

use entrydyn::abm::{self, AbmRun, PopulationState};
use entrydyn::analysis::{self, RateComparison, SeriesComparison};
use entrydyn::game::{predicted_time_scales, ProbabilityModel};
use entrydyn::kinetic::{self, KineticVariant, PdeRun, Snapshot};
use entrydyn::oracle;
use entrydyn::{Field, LearningRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Engine, GameConfig, ModelConfig, Resolved, RunConfig};
use crate::csvio;
use crate::error::{CliError, CliResult};

pub const SERIES_FILE: &str = "series.csv";
pub const RUN_FILE: &str = "run.json";

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn require_engine(resolved: &Resolved, wanted: Engine) -> CliResult<()> {
    let selected = resolved.config.engine;
    if selected.allows(wanted) {
        Ok(())
    } else {
        Err(CliError::Config(format!("invalid engine: the config selects {selected:?}, not {wanted:?}")))
    }
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> CliResult<Vec<String>> {
    snapshots
        .iter()
        .map(|s| {
            let name = csvio::density_file_name(s.t);
            csvio::write_density(&dir.join(&name), &s.density)?;
            Ok(name)
        })
        .collect()
}

fn run_record(resolved: &Resolved, engine: Engine) -> serde_json::Map<String, Value> {
    let p = &resolved.params;
    let scales = predicted_time_scales(p);
    let mut map = serde_json::Map::new();
    map.insert("engine".into(), json!(engine));
    map.insert("config".into(), json!(resolved.config));
    map.insert("resolved_init".into(), json!(resolved.init));
    map.insert("seed".into(), json!(resolved.config.seed));
    map.insert(
        "derived".into(),
        json!({ "kappa": p.kappa(), "r": p.r(), "tau": p.tau(), "tau_al": scales.tau_al, "tau_s": scales.tau_s }),
    );
    map
}

/// Monte Carlo run: one replica, or an ensemble with standard errors.
pub fn cmd_abm(resolved: &Resolved) -> CliResult<PathBuf> {
    require_engine(resolved, Engine::Abm)?;
    let c = &resolved.config;
    let mut run = AbmRun::new(c.t_end, c.seed, c.output_stride);
    if !c.snapshot_times.is_empty() {
        run.snapshot_times = c.snapshot_times.clone();
        run.snapshot_grid = Some(resolved.grid);
    }
    let (model, params, init) = (&resolved.model, &resolved.params, &resolved.init);
    let (series, snapshots) = if c.replicas == 1 {
        let out = abm::simulate(params, model, init, &run)?;
        (out.series, out.snapshots)
    } else {
        let series = abm::ensemble_run(params, model, init, &run, c.replicas)?;
        let snapshots = if run.snapshot_times.is_empty() {
            Vec::new()
        } else {
            abm::simulate(params, model, init, &run)?.snapshots
        };
        (series, snapshots)
    };

    let dir = &c.output_dir;
    prepare_dir(dir)?;
    csvio::write_series(&dir.join(SERIES_FILE), &series)?;
    let densities = write_snapshots(dir, &snapshots)?;
    let mut record = run_record(resolved, Engine::Abm);
    record.insert("records".into(), json!(series.len()));
    record.insert("density_files".into(), json!(densities));
    write_json(&dir.join(RUN_FILE), &record)?;
    Ok(dir.clone())
}

/// Kinetic solver run.
pub fn cmd_pde(resolved: &Resolved) -> CliResult<PathBuf> {
    require_engine(resolved, Engine::Pde)?;
    let c = &resolved.config;
    let run = PdeRun {
        variant: KineticVariant::for_rule(resolved.params.rule()),
        cfl_safety: c.cfl_safety,
        t_end: c.t_end,
        output_interval: resolved.pde_output_interval,
        snapshot_times: c.snapshot_times.clone(),
    };
    let f0 = resolved.initial_density()?;
    let out = kinetic::solve(&f0, &resolved.params, &resolved.model, &run)?;

    let dir = &c.output_dir;
    prepare_dir(dir)?;
    csvio::write_series(&dir.join(SERIES_FILE), &out.series)?;
    let densities = write_snapshots(dir, &out.snapshots)?;
    let mut record = run_record(resolved, Engine::Pde);
    record.insert("variant".into(), json!(run.variant));
    record.insert("records".into(), json!(out.series.len()));
    record.insert("mass_residual".into(), json!(out.max_mass_residual));
    record.insert("min_density".into(), json!(out.min_density));
    record.insert("steps".into(), json!(out.steps));
    record.insert("density_files".into(), json!(densities));
    write_json(&dir.join(RUN_FILE), &record)?;
    Ok(dir.clone())
}

#[derive(Debug, Serialize)]
struct FitVerdict {
    #[serde(flatten)]
    comparison: Option<RateComparison>,
    error: Option<String>,
    pass: bool,
}

impl FitVerdict {
    fn new(result: entrydyn::Result<RateComparison>, factor: f64) -> Self {
        match result {
            Ok(c) => Self { pass: c.within_factor(factor), comparison: Some(c), error: None },
            Err(e) => Self { comparison: None, error: Some(e.to_string()), pass: false },
        }
    }
}

/// Decay fits for every series file. Fails with a check error if any
/// fit is missing or outside the configured factor.
pub fn cmd_analyze(resolved: &Resolved, files: &[PathBuf], c_p: Option<f64>, out: &Path) -> CliResult<PathBuf> {
    let c_p = match c_p {
        Some(c_p) => c_p,
        None => match resolved.model {
            ProbabilityModel::Logistic(_) => analysis::learning_prefactor_density(&resolved.initial_density()?, &resolved.model)?,
            ProbabilityModel::ErevRothRatio { .. } => {
                return Err(CliError::Config("invalid c_p: pass --c-p for non-logistic models".into()))
            }
        },
    };
    let tol = &resolved.config.tolerances;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for file in files {
        let series = csvio::read_series(file)?;
        let learning = FitVerdict::new(analysis::aggregate_learning_fit(&series, &resolved.params, c_p), tol.rate_factor);
        let sorting =
            FitVerdict::new(analysis::sorting_fit(&series, &resolved.params, tol.sorting_epsilon), tol.rate_factor);
        let ratio = match (&learning.comparison, &sorting.comparison) {
            (Some(l), Some(s)) => Some(s.fit.tau_char / l.fit.tau_char),
            _ => None,
        };
        for (name, v) in [("learning", &learning), ("sorting", &sorting)] {
            match (&v.comparison, &v.error) {
                (Some(c), _) => println!(
                    "{} {name}: rate {} predicted {} ratio {} [{}]",
                    file.display(),
                    c.fit.rate,
                    c.predicted_rate,
                    c.ratio,
                    if v.pass { "PASS" } else { "FAIL" }
                ),
                (None, Some(e)) => eprintln!("{} {name}: {e}", file.display()),
                (None, None) => {}
            }
            if !v.pass {
                failures.push(format!("{} {name}", file.display()));
            }
        }
        reports.push(json!({
            "file": file,
            "learning": learning,
            "sorting": sorting,
            "timescale_ratio": ratio,
        }));
    }
    prepare_dir(out)?;
    let path = out.join("fits.json");
    write_json(
        &path,
        &json!({ "c_p": c_p, "rate_factor": tol.rate_factor, "sorting_epsilon": tol.sorting_epsilon, "series": reports }),
    )?;
    if failures.is_empty() {
        Ok(path)
    } else {
        Err(CliError::Check(format!("{} (see {})", failures.join(", "), path.display())))
    }
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub files: [PathBuf; 2],
    pub a: SeriesComparison,
    pub b: SeriesComparison,
}

/// Sup-norm and RMSE distance per field. With a tolerance, fails if the
/// sup-norm of `a` exceeds it.
pub fn cmd_compare(first: &Path, second: &Path, out: &Path, tolerance: Option<f64>) -> CliResult<PathBuf> {
    let (s1, s2) = (csvio::read_series(first)?, csvio::read_series(second)?);
    let report = CompareReport {
        files: [first.to_path_buf(), second.to_path_buf()],
        a: analysis::compare_series(&s1, &s2, Field::A)?,
        b: analysis::compare_series(&s1, &s2, Field::B)?,
    };
    prepare_dir(out)?;
    let path = out.join("compare.json");
    write_json(&path, &report)?;
    println!("a: sup {} rmse {} over {} points", report.a.sup_norm, report.a.rmse, report.a.points);
    println!("b: sup {} rmse {} over {} points", report.b.sup_norm, report.b.rmse, report.b.points);
    match tolerance {
        Some(tol) if !(report.a.sup_norm <= tol) => {
            Err(CliError::Check(format!("sup-norm of a is {} > tolerance {tol}", report.a.sup_norm)))
        }
        _ => Ok(path),
    }
}

/// Settings for `oracle-check`; every key is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_oracle_game")]
    pub game: GameConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_oracle_game() -> GameConfig {
    GameConfig {
        n_agents: 6,
        capacity: 2,
        payoff_scale: 0.05,
        rounds_per_unit: 100,
        rule: LearningRule::BasicReinforcement,
        outside_payoff: 0.0,
    }
}
fn default_instances() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-12
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            game: default_oracle_game(),
            model: ModelConfig::default(),
            instances: default_instances(),
            tolerance: default_tolerance(),
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub tolerance: f64,
    /// `|sum_k P(m = k) - 1|`.
    pub normalization: f64,
    /// Enumerated law against the convolution recurrence.
    pub poisson_binomial: f64,
    /// Enumerated expected increments against the conditional form.
    pub drift: f64,
    /// Identical probabilities against the binomial law.
    pub binomial: f64,
    pub pass: bool,
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, model: &ProbabilityModel) -> PopulationState {
    let draw = |rng: &mut ChaCha8Rng| match model {
        ProbabilityModel::Logistic(l) => l.center() + l.scale() * rng.random_range(-4.0..4.0),
        ProbabilityModel::ErevRothRatio { baseline } => baseline * rng.random_range(0.0..4.0),
    };
    PopulationState::new((0..n).map(|_| draw(rng)).collect())
}

fn binomial_law(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let choose = (1..=k).fold(1.0, |acc, j| acc * (n - k + j) as f64 / j as f64);
            choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        })
        .collect()
}

fn max_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Checks the enumerated one-round law on random states.
pub fn cmd_oracle_check(cfg: &OracleConfig) -> CliResult<OracleReport> {
    let params = cfg.game.params()?;
    let model = cfg.model.model()?;
    let n = params.n_agents();
    if n > oracle::MAX_AGENTS {
        return Err(CliError::Config(format!(
            "invalid n_agents: exhaustive enumeration is capped at {} agents, got {n}",
            oracle::MAX_AGENTS
        )));
    }
    if cfg.instances == 0 {
        return Err(CliError::Config("invalid instances: must be at least 1".into()));
    }
    if !(cfg.tolerance >= 0.0) {
        return Err(CliError::Config(format!("invalid tolerance: must be non-negative, got {}", cfg.tolerance)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = OracleReport { instances: cfg.instances, tolerance: cfg.tolerance, ..Default::default() };
    for _ in 0..cfg.instances {
        let state = random_state(&mut rng, n, &model);
        let law = oracle::enumerate_round(&state, &params, &model)?;
        let probs: Vec<f64> =
            state.propensities().iter().map(|&q| model.split(q).map(|s| s.0)).collect::<entrydyn::Result<_>>()?;
        report.normalization = report.normalization.max((law.m_law.iter().sum::<f64>() - 1.0).abs());
        report.poisson_binomial = report.poisson_binomial.max(max_diff(&law.m_law, &oracle::poisson_binomial(&probs)));
        report.drift = report.drift.max(oracle::expected_drift_check(&state, &params, &model)?.max_abs_diff());

        let q = state.propensities()[0];
        let uniform = PopulationState::new(vec![q; n]);
        let law = oracle::enumerate_round(&uniform, &params, &model)?;
        report.binomial = report.binomial.max(max_diff(&law.m_law, &binomial_law(n, probs[0])));
    }
    let worst = report.normalization.max(report.poisson_binomial).max(report.drift).max(report.binomial);
    report.pass = worst <= cfg.tolerance;
    Ok(report)
}

/// Writes gnuplot scripts for the series and density files in `dir`.
pub fn cmd_make_plots(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let series = dir.join(SERIES_FILE);
    if series.exists() {
        let with_stderr = csvio::read_series(&series)?.has_stderr();
        let a = if with_stderr { "using 1:2:5 with yerrorbars" } else { "using 1:2 with lines" };
        let b = if with_stderr { "using 1:3:6 with yerrorbars" } else { "using 1:3 with lines" };
        let script = format!(
            "# gnuplot {name}, run from this directory\n\
             set datafile separator ','\n\
             set terminal pngcairo size 900,600\n\
             set output 'series.png'\n\
             set xlabel 't'\n\
             set multiplot layout 2,1\n\
             set ylabel 'a'\n\
             plot '{SERIES_FILE}' {a} title 'a'\n\
             set ylabel 'b'\n\
             plot '{SERIES_FILE}' {b} title 'b'\n\
             unset multiplot\n",
            name = "plot_series.gp"
        );
        let path = dir.join("plot_series.gp");
        fs::write(&path, script).map_err(CliError::io(&path))?;
        written.push(path);
    }

    let mut densities: Vec<(f64, String)> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            let t = name.strip_prefix("density_t")?.strip_suffix(".csv")?.parse().ok()?;
            Some((t, name))
        })
        .collect();
    densities.sort_by(|x, y| x.0.total_cmp(&y.0));
    if !densities.is_empty() {
        let curves: Vec<String> = densities
            .iter()
            .map(|(t, name)| format!("'{name}' using 1:2 with lines title 't = {}'", csvio::format_f64(*t)))
            .collect();
        let script = format!(
            "# gnuplot plot_density.gp, run from this directory\n\
             set datafile separator ','\n\
             set terminal pngcairo size 900,600\n\
             set output 'density.png'\n\
             set xlabel 'q'\n\
             set ylabel 'f'\n\
             plot {}\n",
            curves.join(", \\\n     ")
        );
        let path = dir.join("plot_density.gp");
        fs::write(&path, script).map_err(CliError::io(&path))?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(CliError::Runtime(format!("{}: no {SERIES_FILE} or density_t*.csv to plot", dir.display())));
    }
    Ok(written)
}

/// Loads a run config and applies command-line overrides.
pub fn load_run_config(path: &Path, overrides: &crate::config::Overrides) -> CliResult<Resolved> {
    let mut config = RunConfig::load(path)?;
    config.apply(overrides);
    config.resolve()
}
