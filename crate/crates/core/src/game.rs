//! Game definitions shared by every engine: parameters, the entry
//! probability model, payoffs, the two propensity update rules and the
//! predicted time scales.
//!
//! Each agent carries a single scalar propensity `q` to enter the market.
//! The probability of entering is `p(q)` for a strictly increasing `p`.
//! After every round the propensity moves by an integer multiple of the
//! payoff scale `h`, so propensities started on the lattice `{k * h}` stay
//! on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How agents turn realized payoffs into propensity changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRule {
    /// Only entrants learn: `q' = q + h * delta * (c - m)`.
    BasicReinforcement,
    /// Every agent also credits the forgone payoff of the other action:
    /// `q' = q + h * (c - m) - h * (1 - delta)`.
    FictitiousStochastic,
}

/// Physical constants of the repeated game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameParams {
    n_agents: usize,
    capacity: usize,
    payoff_scale: f64,
    rounds_per_unit: u32,
    outside_payoff: f64,
    rule: LearningRule,
}

impl GameParams {
    pub fn new(
        n_agents: usize,
        capacity: usize,
        payoff_scale: f64,
        rounds_per_unit: u32,
        rule: LearningRule,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(invalid("n_agents", "must be positive"));
        }
        if capacity == 0 || capacity >= n_agents {
            return Err(invalid(
                "capacity",
                format!("capacity must satisfy 0 < c < N (got c = {capacity}, N = {n_agents})"),
            ));
        }
        if !(payoff_scale.is_finite() && payoff_scale > 0.0) {
            return Err(invalid("payoff_scale", format!("must be positive and finite, got {payoff_scale}")));
        }
        if rounds_per_unit == 0 {
            return Err(invalid("rounds_per_unit", "must be positive"));
        }
        Ok(Self { n_agents, capacity, payoff_scale, rounds_per_unit, outside_payoff: 0.0, rule })
    }

    /// Sets the payoff for staying out. Only `v = 0` is supported; the
    /// argument exists so callers echo the general payoff form explicitly.
    pub fn with_outside_payoff(mut self, v: f64) -> Result<Self> {
        if v != 0.0 {
            return Err(invalid("outside_payoff", format!("only 0 is supported, got {v}")));
        }
        self.outside_payoff = v;
        Ok(self)
    }

    pub fn with_rule(mut self, rule: LearningRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn payoff_scale(&self) -> f64 {
        self.payoff_scale
    }

    pub fn rounds_per_unit(&self) -> u32 {
        self.rounds_per_unit
    }

    pub fn outside_payoff(&self) -> f64 {
        self.outside_payoff
    }

    pub fn rule(&self) -> LearningRule {
        self.rule
    }

    /// Time per round, `1 / M`.
    pub fn tau(&self) -> f64 {
        1.0 / f64::from(self.rounds_per_unit)
    }

    /// Capacity as a fraction of the population, `c / N`.
    pub fn kappa(&self) -> f64 {
        self.capacity as f64 / self.n_agents as f64
    }

    /// Rate constant `N * h * M`.
    pub fn r(&self) -> f64 {
        self.n_agents as f64 * self.payoff_scale * f64::from(self.rounds_per_unit)
    }

    /// Time of round `n`, computed without accumulating round-off.
    pub fn time_of_round(&self, n: u64) -> f64 {
        n as f64 / f64::from(self.rounds_per_unit)
    }

    fn check_count(&self, m: usize) -> Result<()> {
        if m > self.n_agents {
            return Err(Error::EntrantCount { m, n: self.n_agents });
        }
        Ok(())
    }
}

/// Logistic entry probability `p(q) = 1 / (1 + exp(-(q - center) / scale))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    scale: f64,
    center: f64,
}

impl Logistic {
    pub fn new(scale: f64, center: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("scale", format!("logistic scale must be positive, got {scale}")));
        }
        if !center.is_finite() {
            return Err(invalid("center", "logistic center must be finite"));
        }
        Ok(Self { scale, center })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Returns `(p(q), 1 - p(q))`, each evaluated without cancellation.
    #[inline]
    pub fn split(&self, q: f64) -> (f64, f64) {
        let x = (q - self.center) / self.scale;
        let e = (-x.abs()).exp();
        let small = e / (1.0 + e);
        let large = 1.0 / (1.0 + e);
        if x >= 0.0 {
            (large, small)
        } else {
            (small, large)
        }
    }

    #[inline]
    pub fn p(&self, q: f64) -> f64 {
        self.split(q).0
    }

    /// `p'(q) = p (1 - p) / s`.
    #[inline]
    pub fn derivative(&self, q: f64) -> f64 {
        let (p, pc) = self.split(q);
        p * pc / self.scale
    }

    /// `p''(q) = p'(q) (1 - 2p) / s`.
    pub fn second_derivative(&self, q: f64) -> f64 {
        let (p, pc) = self.split(q);
        p * pc * (pc - p) / (self.scale * self.scale)
    }

    /// Propensity at which the entry probability equals `prob`.
    pub fn inverse(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(invalid("probability", format!("must lie in (0, 1), got {prob}")));
        }
        Ok(self.center + self.scale * (prob / (1.0 - prob)).ln())
    }
}

impl Default for Logistic {
    fn default() -> Self {
        Self { scale: 1.0, center: 0.0 }
    }
}

/// Maps a propensity to the probability of entering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProbabilityModel {
    Logistic(Logistic),
    /// Ratio form `q / (q + baseline)`, defined for `q >= 0` only.
    ErevRothRatio { baseline: f64 },
}

impl Default for ProbabilityModel {
    fn default() -> Self {
        ProbabilityModel::Logistic(Logistic::default())
    }
}

impl ProbabilityModel {
    pub fn logistic(scale: f64, center: f64) -> Result<Self> {
        Logistic::new(scale, center).map(ProbabilityModel::Logistic)
    }

    pub fn erev_roth(baseline: f64) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(invalid("baseline", format!("must be positive, got {baseline}")));
        }
        Ok(ProbabilityModel::ErevRothRatio { baseline })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProbabilityModel::Logistic(_) => "logistic",
            ProbabilityModel::ErevRothRatio { .. } => "erev_roth_ratio",
        }
    }

    pub fn as_logistic(&self) -> Option<&Logistic> {
        match self {
            ProbabilityModel::Logistic(l) => Some(l),
            ProbabilityModel::ErevRothRatio { .. } => None,
        }
    }

    /// Returns `(p(q), 1 - p(q))`.
    #[inline]
    pub fn split(&self, q: f64) -> Result<(f64, f64)> {
        match *self {
            ProbabilityModel::Logistic(l) => Ok(l.split(q)),
            ProbabilityModel::ErevRothRatio { baseline } => {
                if !(q >= 0.0) {
                    return Err(Error::Domain { q, model: self.name() });
                }
                let total = q + baseline;
                Ok((q / total, baseline / total))
            }
        }
    }

    /// Whether `q` lies in the model's domain.
    pub fn contains(&self, q: f64) -> bool {
        match self {
            ProbabilityModel::Logistic(_) => q.is_finite(),
            ProbabilityModel::ErevRothRatio { .. } => q >= 0.0 && q.is_finite(),
        }
    }

    /// Derivative `p'(q)`; available for the logistic model.
    pub fn derivative(&self, q: f64) -> Option<f64> {
        self.as_logistic().map(|l| l.derivative(q))
    }
}

/// Entry probability `p(q)` under `model`.
pub fn entry_probability(model: &ProbabilityModel, q: f64) -> Result<f64> {
    model.split(q).map(|(p, _)| p)
}

/// Payoff of one agent given its action and the total entrant count `m`
/// (which includes the agent when it entered).
pub fn payoff(entered: bool, m: usize, params: &GameParams) -> Result<f64> {
    params.check_count(m)?;
    let v = params.outside_payoff;
    if entered {
        Ok(v + params.payoff_scale * (params.capacity as f64 - m as f64))
    } else {
        Ok(v)
    }
}

/// Propensity increment in units of `h`.
#[inline]
fn lattice_steps(entered: bool, m: usize, params: &GameParams) -> i64 {
    let excess = params.capacity as i64 - m as i64;
    match (params.rule, entered) {
        (LearningRule::BasicReinforcement, true) => excess,
        (LearningRule::BasicReinforcement, false) => 0,
        (LearningRule::FictitiousStochastic, true) => excess,
        (LearningRule::FictitiousStochastic, false) => excess - 1,
    }
}

/// Applies the game's learning rule to one agent.
///
/// `m` counts all entrants of the round, including this agent when
/// `entered` is true.
pub fn update_propensity(q: f64, entered: bool, m: usize, params: &GameParams) -> Result<f64> {
    params.check_count(m)?;
    Ok(apply_update(q, entered, m, params))
}

/// Unchecked form used inside the engines once `m` is known to be valid.
#[inline]
pub(crate) fn apply_update(q: f64, entered: bool, m: usize, params: &GameParams) -> f64 {
    match lattice_steps(entered, m, params) {
        0 => q,
        k => q + params.payoff_scale * k as f64,
    }
}

/// Predicted characteristic times of aggregate learning and sorting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeScales {
    /// `1 / r`.
    pub tau_al: f64,
    /// `2 / (r h)`.
    pub tau_s: f64,
}

pub fn predicted_time_scales(params: &GameParams) -> TimeScales {
    let r = params.r();
    TimeScales { tau_al: 1.0 / r, tau_s: 2.0 / (r * params.payoff_scale) }
}
