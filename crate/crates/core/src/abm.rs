//! Agent-based Monte Carlo engine.
//!
//! Every round each agent enters independently with probability `p(q_i)`
//! computed from its pre-round propensity. Once the entrant count `m` is
//! known, every agent is updated with the game's learning rule. No update
//! is visible to other agents within the same round.
//!
//! Runs are driven by a [`ChaCha8Rng`] seeded from a `u64`; replica `i` of
//! an ensemble uses `base_seed + i`. Results are reproducible for a fixed
//! seed within this implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{apply_update, GameParams, ProbabilityModel};
use crate::kinetic::{DensityGrid, GridSpec, Moments, Snapshot};
use crate::series::{ObservableSeries, Record};

/// Initial propensity assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    AllEqual { value: f64 },
    /// Independent normal draws, optionally rounded to the lattice `{k h}`.
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default)]
        snap_to_lattice: bool,
    },
    Explicit { values: Vec<f64> },
    /// The first `c` agents at `high`, the rest at `low`.
    Sorted { low: f64, high: f64 },
}

/// Microstate: one propensity per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    propensities: Vec<f64>,
    round_index: u64,
}

impl PopulationState {
    pub fn new(propensities: Vec<f64>) -> Self {
        Self { propensities, round_index: 0 }
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    pub fn len(&self) -> usize {
        self.propensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.propensities.is_empty()
    }

    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    pub fn time(&self, params: &GameParams) -> f64 {
        params.time_of_round(self.round_index)
    }
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub entered: Vec<bool>,
    pub m: usize,
    /// Time at which the round was played.
    pub t: f64,
}

pub fn init_population(params: &GameParams, init: &InitSpec, seed: u64) -> Result<PopulationState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_population_with(params, init, &mut rng)
}

fn init_population_with<R: Rng>(params: &GameParams, init: &InitSpec, rng: &mut R) -> Result<PopulationState> {
    let n = params.n_agents();
    let propensities = match init {
        InitSpec::AllEqual { value } => vec![*value; n],
        InitSpec::Gaussian { mean, sd, snap_to_lattice } => {
            if !(*sd >= 0.0 && sd.is_finite()) {
                return Err(invalid("sd", format!("must be non-negative and finite, got {sd}")));
            }
            let normal = Normal::new(*mean, *sd).map_err(|e| invalid("sd", e.to_string()))?;
            let h = params.payoff_scale();
            (0..n)
                .map(|_| {
                    let q = normal.sample(rng);
                    if *snap_to_lattice {
                        (q / h).round() * h
                    } else {
                        q
                    }
                })
                .collect()
        }
        InitSpec::Explicit { values } => {
            if values.len() != n {
                return Err(invalid(
                    "values",
                    format!("explicit initial state has {} entries, expected {n}", values.len()),
                ));
            }
            values.clone()
        }
        InitSpec::Sorted { low, high } => {
            let c = params.capacity();
            (0..n).map(|i| if i < c { *high } else { *low }).collect()
        }
    };
    Ok(PopulationState::new(propensities))
}

/// Plays one round in place: decisions from pre-round propensities, then
/// the population-wide update with the realized entrant count.
pub fn play_round<R: Rng>(
    state: &mut PopulationState,
    params: &GameParams,
    model: &ProbabilityModel,
    rng: &mut R,
) -> Result<RoundOutcome> {
    if state.len() != params.n_agents() {
        return Err(invalid("n_agents", format!("state has {} agents, params {}", state.len(), params.n_agents())));
    }
    let t = state.time(params);
    let mut entered = Vec::with_capacity(state.len());
    for &q in &state.propensities {
        let (p, _) = model.split(q)?;
        entered.push(rng.random::<f64>() < p);
    }
    let m = entered.iter().filter(|&&e| e).count();
    for (q, &e) in state.propensities.iter_mut().zip(&entered) {
        *q = apply_update(*q, e, m, params);
    }
    state.round_index += 1;
    Ok(RoundOutcome { entered, m, t })
}

/// Population averages `a = mean p(q_i)` and `b = mean p(q_i) (1 - p(q_i))`.
pub fn empirical_moments(state: &PopulationState, model: &ProbabilityModel) -> Result<Moments> {
    let n = state.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for &q in &state.propensities {
        let (p, pc) = model.split(q)?;
        a += p;
        b += p * pc;
    }
    Ok(Moments { a: a / n, b: b / n })
}

/// Histogram of the propensities normalized to unit mass. Agents outside
/// the grid are counted in the end cells; their number is returned.
pub fn empirical_density(state: &PopulationState, spec: &GridSpec) -> Result<(DensityGrid, usize)> {
    spec.validate()?;
    if state.is_empty() {
        return Err(Error::EmptyGrid("population is empty".into()));
    }
    let mut counts = vec![0.0; spec.cells];
    let mut outside = 0;
    for &q in &state.propensities {
        let (k, out) = spec.locate(q);
        counts[k] += 1.0;
        outside += usize::from(out);
    }
    let scale = 1.0 / (state.len() as f64 * spec.dq());
    counts.iter_mut().for_each(|c| *c *= scale);
    Ok((DensityGrid::new(*spec, counts)?, outside))
}

/// Settings of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmRun {
    pub t_end: f64,
    pub seed: u64,
    /// Rounds between records.
    pub record_stride: u64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub snapshot_grid: Option<GridSpec>,
}

impl AbmRun {
    pub fn new(t_end: f64, seed: u64, record_stride: u64) -> Self {
        Self { t_end, seed, record_stride, snapshot_times: Vec::new(), snapshot_grid: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        if !self.snapshot_times.is_empty() && self.snapshot_grid.is_none() {
            return Err(invalid("snapshot_grid", "snapshots requested without a grid"));
        }
        Ok(())
    }

    /// `ceil(t_end * M)`, tolerant of round-off in `t_end`.
    pub fn rounds(&self, params: &GameParams) -> u64 {
        let exact = self.t_end * f64::from(params.rounds_per_unit());
        let nearest = exact.round();
        if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            exact.ceil() as u64
        }
    }
}

#[derive(Debug, Clone)]
pub struct AbmOutput {
    pub series: ObservableSeries,
    pub snapshots: Vec<Snapshot>,
    pub final_state: PopulationState,
}

/// Runs `ceil(t_end M)` rounds. Rounds that are multiples of the stride
/// are recorded, plus the final state. Moments are taken before the
/// round's update; `m_frac` is the entrant fraction of the round played
/// from that state and is absent for the final record.
pub fn simulate(
    params: &GameParams,
    model: &ProbabilityModel,
    init: &InitSpec,
    run: &AbmRun,
) -> Result<AbmOutput> {
    run.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut state = init_population_with(params, init, &mut rng)?;
    let rounds = run.rounds(params);
    let n = params.n_agents() as f64;

    let mut snapshot_rounds: Vec<u64> = run
        .snapshot_times
        .iter()
        .map(|&t| ((t.max(0.0) * f64::from(params.rounds_per_unit())).round() as u64).min(rounds))
        .collect();
    snapshot_rounds.sort_unstable();
    snapshot_rounds.dedup();

    let mut series = ObservableSeries::new();
    let mut snapshots = Vec::new();
    for round in 0..=rounds {
        if snapshot_rounds.binary_search(&round).is_ok() {
            if let Some(grid) = &run.snapshot_grid {
                let (density, _) = empirical_density(&state, grid)?;
                snapshots.push(Snapshot { t: state.time(params), density });
            }
        }
        let record = round % run.record_stride == 0 || round == rounds;
        let moments = if record { Some(empirical_moments(&state, model)?) } else { None };
        let t = state.time(params);
        let m_frac = if round < rounds {
            Some(play_round(&mut state, params, model, &mut rng)?.m as f64 / n)
        } else {
            None
        };
        if let Some(Moments { a, b }) = moments {
            series.push(Record { m_frac, ..Record::new(t, a, b) });
        }
    }
    Ok(AbmOutput { series, snapshots, final_state: state })
}

/// Pointwise mean and standard error over replicas with seeds
/// `base_seed, base_seed + 1, ...`.
pub fn ensemble_run(
    params: &GameParams,
    model: &ProbabilityModel,
    init: &InitSpec,
    run: &AbmRun,
    replicas: usize,
) -> Result<ObservableSeries> {
    let seeds: Vec<u64> = (0..replicas as u64).map(|i| run.seed.wrapping_add(i)).collect();
    ensemble_with_seeds(params, model, init, run, &seeds)
}

/// Ensemble over an explicit seed list; replicas run in parallel.
pub fn ensemble_with_seeds(
    params: &GameParams,
    model: &ProbabilityModel,
    init: &InitSpec,
    run: &AbmRun,
    seeds: &[u64],
) -> Result<ObservableSeries> {
    if seeds.len() < 2 {
        return Err(invalid("replicas", format!("an ensemble needs at least 2 replicas, got {}", seeds.len())));
    }
    let runs: Vec<ObservableSeries> = seeds
        .par_iter()
        .map(|&seed| {
            let mut single = run.clone();
            single.seed = seed;
            single.snapshot_times.clear();
            simulate(params, model, init, &single).map(|out| out.series)
        })
        .collect::<Result<_>>()?;
    Ok(combine(&runs))
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn combine(runs: &[ObservableSeries]) -> ObservableSeries {
    let first = &runs[0];
    let mut out = ObservableSeries::new();
    for (i, rec) in first.records.iter().enumerate() {
        let (a, stderr_a) = mean_and_stderr(runs.iter().map(|s| s.records[i].a));
        let (b, stderr_b) = mean_and_stderr(runs.iter().map(|s| s.records[i].b));
        let m_frac = rec
            .m_frac
            .map(|_| runs.iter().filter_map(|s| s.records[i].m_frac).sum::<f64>() / runs.len() as f64);
        out.push(Record { t: rec.t, a, b, m_frac, stderr_a: Some(stderr_a), stderr_b: Some(stderr_b) });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::LearningRule;
    use approx::assert_relative_eq;

    fn params(n: usize, c: usize, rule: LearningRule) -> GameParams {
        GameParams::new(n, c, 0.01, 100, rule).unwrap()
    }

    #[test]
    fn init_examples() {
        let p = params(4, 2, LearningRule::BasicReinforcement);
        let s = init_population(&p, &InitSpec::AllEqual { value: 0.0 }, 1).unwrap();
        assert_eq!(s.propensities(), &[0.0; 4]);
        let s = init_population(&p, &InitSpec::Gaussian { mean: 0.0, sd: 0.0, snap_to_lattice: false }, 1).unwrap();
        assert_eq!(s.propensities(), &[0.0; 4]);

        let p2 = params(2, 1, LearningRule::BasicReinforcement);
        let s = init_population(&p2, &InitSpec::Explicit { values: vec![0.1, 0.2] }, 9).unwrap();
        assert_eq!(s.propensities(), &[0.1, 0.2]);
        assert!(init_population(&p, &InitSpec::Explicit { values: vec![0.1, 0.2] }, 9).is_err());
        assert!(init_population(&p, &InitSpec::Gaussian { mean: 0.0, sd: -1.0, snap_to_lattice: false }, 1).is_err());
    }

    #[test]
    fn gaussian_init_is_seeded_and_snaps() {
        let p = params(50, 20, LearningRule::BasicReinforcement);
        let init = InitSpec::Gaussian { mean: 0.3, sd: 1.0, snap_to_lattice: true };
        let a = init_population(&p, &init, 7).unwrap();
        let b = init_population(&p, &init, 7).unwrap();
        assert_eq!(a, b);
        for &q in a.propensities() {
            let k = q / 0.01;
            assert!((k - k.round()).abs() < 1e-6);
        }
        assert_ne!(a, init_population(&p, &init, 8).unwrap());
    }

    #[test]
    fn saturated_single_agent_at_capacity_is_unchanged() {
        // N = 1 cannot satisfy c < N, so use N = 2 with one agent that never enters
        let p = params(2, 1, LearningRule::BasicReinforcement);
        let model = ProbabilityModel::default();
        let mut state = PopulationState::new(vec![40.0, -40.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let out = play_round(&mut state, &p, &model, &mut rng).unwrap();
            assert_eq!(out.m, 1);
            assert_eq!(out.entered, vec![true, false]);
        }
        assert_eq!(state.propensities(), &[40.0, -40.0]);
        assert_eq!(state.round_index(), 100);
    }

    #[test]
    fn ratio_model_rejects_negative_propensity() {
        let p = params(3, 1, LearningRule::BasicReinforcement);
        let model = ProbabilityModel::erev_roth(1.0).unwrap();
        let mut state = PopulationState::new(vec![0.5, -0.1, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let before = state.clone();
        assert!(matches!(play_round(&mut state, &p, &model, &mut rng), Err(Error::Domain { .. })));
        assert_eq!(state, before);
    }

    #[test]
    fn outcome_counts_entrants() {
        let p = params(200, 100, LearningRule::FictitiousStochastic);
        let model = ProbabilityModel::default();
        let mut state = init_population(&p, &InitSpec::Gaussian { mean: 0.0, sd: 2.0, snap_to_lattice: false }, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let out = play_round(&mut state, &p, &model, &mut rng).unwrap();
            assert_eq!(out.m, out.entered.iter().filter(|&&e| e).count());
            assert_eq!(out.entered.len(), 200);
            assert_eq!(state.len(), 200);
        }
    }

    #[test]
    fn basic_rule_leaves_non_entrants_alone() {
        let p = params(100, 30, LearningRule::BasicReinforcement);
        let model = ProbabilityModel::default();
        let mut state = init_population(&p, &InitSpec::Gaussian { mean: 0.0, sd: 1.0, snap_to_lattice: false }, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let before = state.clone();
            let out = play_round(&mut state, &p, &model, &mut rng).unwrap();
            for i in 0..100 {
                let dq = state.propensities()[i] - before.propensities()[i];
                if out.entered[i] {
                    assert_relative_eq!(dq, 0.01 * (30.0 - out.m as f64), epsilon = 1e-12);
                } else {
                    assert_eq!(dq, 0.0);
                }
            }
        }
    }

    #[test]
    fn binomial_count_statistics() {
        // mean N p = 500, sd sqrt(N p (1 - p)) = 15.81
        let p = params(1000, 500, LearningRule::BasicReinforcement);
        let model = ProbabilityModel::default();
        let base = PopulationState::new(vec![0.0; 1000]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let counts: Vec<f64> = (0..10_000)
            .map(|_| play_round(&mut base.clone(), &p, &model, &mut rng).unwrap().m as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let sd = (counts.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (counts.len() as f64 - 1.0)).sqrt();
        let expected_sd = (1000.0f64 * 0.25).sqrt();
        assert!((mean - 500.0).abs() <= 4.0 * expected_sd / 100.0, "mean {mean}");
        assert!((sd - expected_sd).abs() <= 0.05 * expected_sd, "sd {sd}");
    }

    #[test]
    fn moments_examples() {
        let model = ProbabilityModel::default();
        let half = PopulationState::new(vec![0.0; 6]);
        let m = empirical_moments(&half, &model).unwrap();
        assert_eq!((m.a, m.b), (0.5, 0.25));

        let sorted = PopulationState::new(vec![60.0, 60.0, -60.0, -60.0, -60.0]);
        let m = empirical_moments(&sorted, &model).unwrap();
        assert_relative_eq!(m.a, 0.4, epsilon = 1e-15);
        assert!(m.b < 1e-25);

        let l = crate::game::Logistic::default();
        let pair = PopulationState::new(vec![l.inverse(0.2).unwrap(), l.inverse(0.6).unwrap()]);
        let m = empirical_moments(&pair, &model).unwrap();
        assert_relative_eq!(m.a, 0.4, epsilon = 1e-14);
        assert_relative_eq!(m.b, 0.2, epsilon = 1e-14);
    }

    #[test]
    fn density_examples() {
        let spec = GridSpec::new(-1.0, 1.0, 10).unwrap();
        let dq = spec.dq();
        let one = PopulationState::new(vec![0.05; 7]);
        let (f, outside) = empirical_density(&one, &spec).unwrap();
        assert_eq!(outside, 0);
        assert_relative_eq!(f.values()[5], 1.0 / dq, max_relative = 1e-14);
        assert_eq!(f.values().iter().filter(|&&v| v != 0.0).count(), 1);

        let two = PopulationState::new(vec![-0.55, -0.55, 0.75, 0.75]);
        let (f, _) = empirical_density(&two, &spec).unwrap();
        assert_relative_eq!(f.values()[2], 0.5 / dq, max_relative = 1e-14);
        assert_relative_eq!(f.values()[8], 0.5 / dq, max_relative = 1e-14);

        let wide = PopulationState::new(vec![-5.0, 0.0, 3.0]);
        let (f, outside) = empirical_density(&wide, &spec).unwrap();
        assert_eq!(outside, 2);
        assert!((f.mass() - 1.0).abs() <= 1e-12);

        let bad = GridSpec { q_min: 0.0, q_max: 1.0, cells: 0 };
        assert!(empirical_density(&one, &bad).is_err());
    }

    #[test]
    fn simulate_counts_records() {
        let p = params(20, 10, LearningRule::BasicReinforcement);
        let out = simulate(&p, &ProbabilityModel::default(), &InitSpec::AllEqual { value: 0.0 }, &AbmRun::new(0.03, 1, 1))
            .unwrap();
        let t = out.series.times();
        assert_eq!(t, vec![0.0, 0.01, 0.02, 0.03]);
        assert!(out.series.records[..3].iter().all(|r| r.m_frac.is_some()));
        assert!(out.series.records[3].m_frac.is_none());

        let strided = simulate(&p, &ProbabilityModel::default(), &InitSpec::AllEqual { value: 0.0 }, &AbmRun::new(0.1, 1, 4))
            .unwrap();
        assert_eq!(strided.series.times(), vec![0.0, 0.04, 0.08, 0.1]);
    }

    #[test]
    fn simulate_is_reproducible() {
        let p = params(300, 120, LearningRule::FictitiousStochastic);
        let init = InitSpec::Gaussian { mean: -1.0, sd: 0.5, snap_to_lattice: true };
        let run = AbmRun::new(0.5, 99, 3);
        let a = simulate(&p, &ProbabilityModel::default(), &init, &run).unwrap();
        let b = simulate(&p, &ProbabilityModel::default(), &init, &run).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.final_state, b.final_state);
        a.series.check_invariants().unwrap();
    }

    #[test]
    fn identical_seeds_give_zero_stderr() {
        let p = params(100, 50, LearningRule::BasicReinforcement);
        let init = InitSpec::AllEqual { value: -1.0 };
        let run = AbmRun::new(0.2, 5, 1);
        let s = ensemble_with_seeds(&p, &ProbabilityModel::default(), &init, &run, &[5, 5]).unwrap();
        assert!(s.records.iter().all(|r| r.stderr_a == Some(0.0) && r.stderr_b == Some(0.0)));
        assert!(ensemble_run(&p, &ProbabilityModel::default(), &init, &run, 1).is_err());
    }

    #[test]
    fn stationary_ensemble_within_sampling_bound() {
        let p = params(1000, 500, LearningRule::BasicReinforcement);
        let init = InitSpec::Sorted { low: -15.0, high: 15.0 };
        let replicas = 6;
        let s = ensemble_run(&p, &ProbabilityModel::default(), &init, &AbmRun::new(0.5, 17, 1), replicas).unwrap();
        let bound = 4.0 / ((1000 * replicas) as f64).sqrt();
        for r in &s.records {
            assert!(r.stderr_a.unwrap() <= bound);
            assert!((r.a - 0.5).abs() <= bound);
        }
    }
}
