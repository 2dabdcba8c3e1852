//! Time-scale extraction and series comparison.
//!
//! The aggregate-learning rate is read off `|a(t) - kappa|` and the sorting
//! rate off `b(t)`, each by a least-squares line through the logarithm of
//! the gap. Predictions come from the closed-form moment equations:
//! `a(t) = kappa + (a(0) - kappa) exp(-c_p r t)` and `b(t) ~ exp(-r h t / 2)`,
//! where `c_p = int p' p f0` is measured from the initial state.

use serde::Serialize;

use crate::abm::PopulationState;
use crate::error::{invalid, Error, FitError, Result};
use crate::game::{GameParams, ProbabilityModel};
use crate::kinetic::DensityGrid;
use crate::series::{Field, ObservableSeries};

/// Minimum number of samples for a decay fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Default fit window for aggregate learning, as fractions of the
/// initial gap `|a(0) - kappa|`.
pub const LEARNING_WINDOW: (f64, f64) = (0.2, 0.8);

/// Default fraction of the initial gap at which the sorting window opens.
pub const SORTING_EPSILON: f64 = 0.05;

/// Result of a log-linear exponential fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub tau_char: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Least-squares line through `(t, ln |x(t) - x_inf|)` for samples with
/// `t` in `window`; the rate is minus the slope.
pub fn fit_exponential_decay(
    points: &[(f64, f64)],
    x_inf: f64,
    window: (f64, f64),
) -> Result<DecayFit, FitError> {
    let (t_lo, t_hi) = window;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for &(t, x) in points.iter().filter(|(t, _)| *t >= t_lo && *t <= t_hi) {
        let gap = (x - x_inf).abs();
        if !(gap > 0.0) {
            return Err(FitError::NonPositiveGap { t });
        }
        ts.push(t);
        ys.push(gap.ln());
    }
    if ts.len() < MIN_FIT_POINTS {
        return Err(FitError::InsufficientPoints { found: ts.len(), needed: MIN_FIT_POINTS });
    }
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        let (dt, dy) = (t - t_mean, y - y_mean);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let rate = -slope;
    if !(rate > 0.0) {
        return Err(FitError::NotDecaying { rate });
    }
    let ss_res = (syy - slope * sty).max(0.0);
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        rate,
        tau_char: 1.0 / rate,
        log_intercept: intercept,
        r_squared,
        window: (ts[0], ts[ts.len() - 1]),
        points: ts.len(),
    })
}

/// A fitted rate next to its predicted counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateComparison {
    pub fit: DecayFit,
    pub predicted_rate: f64,
    /// `fit.rate / predicted_rate`.
    pub ratio: f64,
}

impl RateComparison {
    fn new(fit: DecayFit, predicted_rate: f64) -> Self {
        Self { fit, predicted_rate, ratio: fit.rate / predicted_rate }
    }

    /// Whether the fitted rate lies within `[pred / factor, pred * factor]`.
    pub fn within_factor(&self, factor: f64) -> bool {
        self.ratio >= 1.0 / factor && self.ratio <= factor
    }
}

/// Fits `|a(t) - kappa|` on the window where the gap lies between 80% and
/// 20% of its initial value and compares with the rate `c_p r`.
pub fn aggregate_learning_fit(series: &ObservableSeries, params: &GameParams, c_p: f64) -> Result<RateComparison> {
    if !(c_p > 0.0 && c_p.is_finite()) {
        return Err(invalid("c_p", format!("must be positive, got {c_p}")));
    }
    let kappa = params.kappa();
    let points = series.points(Field::A);
    let Some(&(_, a0)) = points.first() else {
        return Err(FitError::InsufficientPoints { found: 0, needed: MIN_FIT_POINTS }.into());
    };
    let g0 = (a0 - kappa).abs();
    let (lo, hi) = LEARNING_WINDOW;
    let gap = |x: f64| (x - kappa).abs();
    let start = points.iter().position(|&(_, x)| gap(x) <= hi * g0);
    let window = match start {
        None => (f64::INFINITY, f64::INFINITY),
        Some(i) => {
            let end = points[i..]
                .iter()
                .position(|&(_, x)| gap(x) < lo * g0)
                .map_or(points.len() - 1, |j| (i + j).saturating_sub(1));
            (points[i].0, points[end].0)
        }
    };
    let fit = fit_exponential_decay(&points, kappa, window)?;
    Ok(RateComparison::new(fit, c_p * params.r()))
}

/// Fits `b(t)` against zero from the first time `|a - kappa|` falls below
/// `epsilon |a(0) - kappa|` to the end of the series, and compares with the
/// rate `r h / 2`.
pub fn sorting_fit(series: &ObservableSeries, params: &GameParams, epsilon: f64) -> Result<RateComparison> {
    let kappa = params.kappa();
    let tau_s = crate::game::predicted_time_scales(params).tau_s;
    let never = || FitError::WindowNeverOpens { epsilon, required_t_end: 3.0 * tau_s };
    let first = series.records.first().ok_or_else(never)?;
    let g0 = (first.a - kappa).abs();
    let open = series
        .records
        .iter()
        .position(|r| (r.a - kappa).abs() < epsilon * g0)
        .ok_or_else(never)?;
    let window = (series.records[open].t, series.records[series.len() - 1].t);
    let fit = fit_exponential_decay(&series.points(Field::B), 0.0, window)?;
    Ok(RateComparison::new(fit, params.r() * params.payoff_scale() / 2.0))
}

/// Closed-form solution `kappa + (a0 - kappa) exp(-c_p r t)`.
pub fn moment_ode_a(t: f64, a0: f64, kappa: f64, r: f64, c_p: f64) -> f64 {
    kappa + (a0 - kappa) * (-c_p * r * t).exp()
}

/// `int p'(q) p(q) f(q) dq` by the midpoint rule.
pub fn learning_prefactor_density(f: &DensityGrid, model: &ProbabilityModel) -> Result<f64> {
    let l = model.as_logistic().ok_or(Error::UnsupportedModel)?;
    Ok(f.iter().map(|(q, fk)| l.derivative(q) * l.p(q) * fk).sum::<f64>() * f.dq())
}

/// Population mean of `p'(q_i) p(q_i)`.
pub fn learning_prefactor_population(state: &PopulationState, model: &ProbabilityModel) -> Result<f64> {
    let l = model.as_logistic().ok_or(Error::UnsupportedModel)?;
    let sum: f64 = state.propensities().iter().map(|&q| l.derivative(q) * l.p(q)).sum();
    Ok(sum / state.len() as f64)
}

/// `max_q p'(q) p(q) = 4 / (27 s)` for the logistic model, attained at `p = 2/3`.
pub fn learning_prefactor_bound(model: &ProbabilityModel) -> Result<f64> {
    let l = model.as_logistic().ok_or(Error::UnsupportedModel)?;
    Ok(4.0 / (27.0 * l.scale()))
}

/// Distance between two series on a common time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesComparison {
    pub sup_norm: f64,
    pub rmse: f64,
    pub t_at_max: f64,
    pub points: usize,
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let i = points.partition_point(|&(ti, _)| ti < t);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[points.len() - 1].1;
    }
    let (t0, x0) = points[i - 1];
    let (t1, x1) = points[i];
    if t1 == t0 {
        return x1;
    }
    x0 + (x1 - x0) * (t - t0) / (t1 - t0)
}

/// Compares one field of two series over their overlapping time range.
/// The series with fewer samples in the overlap supplies the evaluation
/// times and the other is interpolated linearly onto them.
pub fn compare_series(s1: &ObservableSeries, s2: &ObservableSeries, field: Field) -> Result<SeriesComparison> {
    let (p1, p2) = (s1.points(field), s2.points(field));
    let (Some(first1), Some(first2)) = (p1.first(), p2.first()) else {
        return Err(Error::NoOverlap);
    };
    let lo = first1.0.max(first2.0);
    let hi = p1[p1.len() - 1].0.min(p2[p2.len() - 1].0);
    if lo > hi {
        return Err(Error::NoOverlap);
    }
    let inside = |p: &[(f64, f64)]| -> Vec<(f64, f64)> {
        p.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect()
    };
    let (w1, w2) = (inside(&p1), inside(&p2));
    let first_is_coarser = match w1.len().cmp(&w2.len()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            let key = |w: &[(f64, f64)]| w.iter().map(|&(t, _)| t).collect::<Vec<_>>();
            key(&w1).iter().zip(key(&w2).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                != Some(std::cmp::Ordering::Greater)
        }
    };
    let (grid, other) = if first_is_coarser { (&w1, &p2) } else { (&w2, &p1) };
    if grid.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut sup = 0.0f64;
    let mut t_at_max = grid[0].0;
    let mut sq = 0.0;
    for &(t, x) in grid.iter() {
        let d = (x - interpolate(other, t)).abs();
        sq += d * d;
        if d > sup {
            sup = d;
            t_at_max = t;
        }
    }
    Ok(SeriesComparison { sup_norm: sup, rmse: (sq / grid.len() as f64).sqrt(), t_at_max, points: grid.len() })
}
