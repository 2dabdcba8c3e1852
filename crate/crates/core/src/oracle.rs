//! Exact one-round law for small populations by enumerating all `2^N`
//! entry patterns. Serves as ground truth for the Monte Carlo engine.

use serde::Serialize;

use crate::abm::PopulationState;
use crate::error::{invalid, Error, Result};
use crate::game::{apply_update, GameParams, LearningRule, ProbabilityModel};
use crate::kinetic::Moments;

/// Largest population handled by [`enumerate_round`].
pub const MAX_AGENTS: usize = 12;

/// Exact law of one round started from a fixed state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLaw {
    /// `P(m = k)` for `k = 0..=N`.
    pub m_law: Vec<f64>,
    /// `E[q_i']` for every agent.
    pub expected_next: Vec<f64>,
    /// `E[q_i' - q_i]` for every agent.
    pub expected_increment: Vec<f64>,
    /// `E[a']` and `E[b']` after the round.
    pub expected_moments: Moments,
}

fn check_size(state: &PopulationState, params: &GameParams) -> Result<usize> {
    let n = state.len();
    if n > MAX_AGENTS {
        return Err(Error::TooManyAgents { n, max: MAX_AGENTS });
    }
    if n != params.n_agents() {
        return Err(invalid("n_agents", format!("state has {n} agents, params {}", params.n_agents())));
    }
    Ok(n)
}

pub fn enumerate_round(state: &PopulationState, params: &GameParams, model: &ProbabilityModel) -> Result<RoundLaw> {
    let n = check_size(state, params)?;
    let q = state.propensities();
    let split: Vec<(f64, f64)> = q.iter().map(|&qi| model.split(qi)).collect::<Result<_>>()?;

    let mut m_law = vec![0.0; n + 1];
    let mut expected_next = vec![0.0; n];
    let mut expected_increment = vec![0.0; n];
    let (mut ea, mut eb) = (0.0, 0.0);
    let mut next = vec![0.0; n];
    for pattern in 0u32..(1 << n) {
        let entered = |i: usize| pattern & (1 << i) != 0;
        let weight: f64 = (0..n).map(|i| if entered(i) { split[i].0 } else { split[i].1 }).product();
        if weight == 0.0 {
            continue;
        }
        let m = pattern.count_ones() as usize;
        m_law[m] += weight;
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..n {
            next[i] = apply_update(q[i], entered(i), m, params);
            expected_next[i] += weight * next[i];
            expected_increment[i] += weight * (next[i] - q[i]);
            let (p, pc) = model.split(next[i])?;
            a += p;
            b += p * pc;
        }
        ea += weight * a / n as f64;
        eb += weight * b / n as f64;
    }
    Ok(RoundLaw { m_law, expected_next, expected_increment, expected_moments: Moments { a: ea, b: eb } })
}

/// Law of a sum of independent Bernoulli(`p_i`) variables by the
/// convolution recurrence.
pub fn poisson_binomial(probs: &[f64]) -> Vec<f64> {
    let mut law = vec![0.0; probs.len() + 1];
    law[0] = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        for k in (0..=j + 1).rev() {
            let stay = law[k] * (1.0 - p);
            let enter = if k > 0 { law[k - 1] * p } else { 0.0 };
            law[k] = stay + enter;
        }
    }
    law
}

/// Enumerated expected increments next to the closed conditional form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCheck {
    pub enumerated: Vec<f64>,
    /// Basic: `h p_i (c - sum_{j != i} p_j - 1)`.
    /// Fictitious: `h (c - sum_j p_j) - h (1 - p_i)`.
    pub conditional: Vec<f64>,
}

impl DriftCheck {
    pub fn max_abs_diff(&self) -> f64 {
        self.enumerated.iter().zip(&self.conditional).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

pub fn expected_drift_check(state: &PopulationState, params: &GameParams, model: &ProbabilityModel) -> Result<DriftCheck> {
    let law = enumerate_round(state, params, model)?;
    let probs: Vec<f64> = state.propensities().iter().map(|&q| model.split(q).map(|s| s.0)).collect::<Result<_>>()?;
    let total: f64 = probs.iter().sum();
    let h = params.payoff_scale();
    let c = params.capacity() as f64;
    let conditional = probs
        .iter()
        .map(|&p| match params.rule() {
            LearningRule::BasicReinforcement => h * p * (c - (total - p) - 1.0),
            LearningRule::FictitiousStochastic => h * (c - total) - h * (1.0 - p),
        })
        .collect();
    Ok(DriftCheck { enumerated: law.expected_increment, conditional })
}
