//! Finite-volume solver for the mean-field drift-diffusion equations of the
//! propensity density `f(t, q)`.
//!
//! Both learning rules lead to an equation of the form
//!
//! ```text
//! f_t + d/dq (v f) - d/dq (mu df/dq) = 0
//! ```
//!
//! where the coefficients depend on the density only through the two
//! moments `a = int p f` and `b = int p (1 - p) f`. With
//! `D = (r N h (kappa - a)^2 + r h b) / 2`:
//!
//! * basic reinforcement: `v = r (kappa - a) p - D p'` and `mu = D p`, the
//!   conservative form of `r (kappa - a) (p f)_q - D (p f)_qq`;
//! * fictitious play: `v = r (kappa - a)` and `mu = D`, uniform in `q`.
//!
//! The scheme is explicit Euler in time with first-order upwind advective
//! fluxes, centered diffusive fluxes and zero flux through both ends, so
//! total mass is conserved to round-off and positivity holds under the
//! step bound of [`stable_dt`].

mod grid;

pub use grid::{DensityGrid, GridSpec, Snapshot};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{GameParams, LearningRule, Logistic, ProbabilityModel};
use crate::series::{ObservableSeries, Record};

/// Which mean-field equation to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticVariant {
    /// Coefficients proportional to `p(q)` (basic reinforcement).
    Reinforcement,
    /// Coefficients uniform in `q` (fictitious stochastic play).
    Fictitious,
}

impl KineticVariant {
    pub fn for_rule(rule: LearningRule) -> Self {
        match rule {
            LearningRule::BasicReinforcement => KineticVariant::Reinforcement,
            LearningRule::FictitiousStochastic => KineticVariant::Fictitious,
        }
    }
}

/// The two moments the coefficients depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub a: f64,
    pub b: f64,
}

fn require_logistic(model: &ProbabilityModel) -> Result<&Logistic> {
    model.as_logistic().ok_or(Error::UnsupportedModel)
}

/// Midpoint-rule moments of a density.
pub fn moments(f: &DensityGrid, model: &ProbabilityModel) -> Result<Moments> {
    let logistic = require_logistic(model)?;
    let dq = f.dq();
    let (mut a, mut b) = (0.0, 0.0);
    for (q, fk) in f.iter() {
        let (p, pc) = logistic.split(q);
        a += p * fk;
        b += p * pc * fk;
    }
    Ok(Moments { a: a * dq, b: b * dq })
}

/// Scalar diffusion strength `D = (r N h (kappa - a)^2 + r h b) / 2`.
pub fn diffusion_strength(m: Moments, params: &GameParams) -> f64 {
    let r = params.r();
    let h = params.payoff_scale();
    let gap = params.kappa() - m.a;
    0.5 * (r * params.n_agents() as f64 * h * gap * gap + r * h * m.b)
}

/// Face velocities and diffusivities, one entry per face (`cells + 1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficients {
    pub velocity: Vec<f64>,
    pub diffusivity: Vec<f64>,
}

pub fn coefficients(
    m: Moments,
    params: &GameParams,
    model: &ProbabilityModel,
    spec: &GridSpec,
    variant: KineticVariant,
) -> Result<Coefficients> {
    let logistic = require_logistic(model)?;
    let tables = FaceTables::new(logistic, spec);
    let mut out = Coefficients {
        velocity: vec![0.0; spec.cells + 1],
        diffusivity: vec![0.0; spec.cells + 1],
    };
    tables.fill(m, params, variant, &mut out);
    Ok(out)
}

/// Largest explicit step allowed by the advective and diffusive bounds,
/// scaled by `safety` and capped at `cap`.
pub fn stable_dt(dq: f64, coeffs: &Coefficients, safety: f64, cap: f64) -> f64 {
    let v_max = coeffs.velocity.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mu_max = coeffs.diffusivity.iter().fold(0.0f64, |acc, &mu| acc.max(mu));
    let mut limit = f64::INFINITY;
    if v_max > 0.0 {
        limit = limit.min(dq / v_max);
    }
    if mu_max > 0.0 {
        limit = limit.min(dq * dq / (2.0 * mu_max));
    }
    (safety * limit).min(cap)
}

/// `p` and `p'` at faces plus the moment weights at cell centers.
struct FaceTables {
    p_face: Vec<f64>,
    dp_face: Vec<f64>,
    p_center: Vec<f64>,
    b_center: Vec<f64>,
    dq: f64,
}

impl FaceTables {
    fn new(logistic: &Logistic, spec: &GridSpec) -> Self {
        let (p_face, dp_face) = spec
            .faces()
            .into_iter()
            .map(|q| (logistic.p(q), logistic.derivative(q)))
            .unzip();
        let (p_center, b_center) = spec
            .centers()
            .into_iter()
            .map(|q| {
                let (p, pc) = logistic.split(q);
                (p, p * pc)
            })
            .unzip();
        Self { p_face, dp_face, p_center, b_center, dq: spec.dq() }
    }

    fn moments(&self, f: &[f64]) -> Moments {
        let mut a = 0.0;
        let mut b = 0.0;
        for ((fk, p), w) in f.iter().zip(&self.p_center).zip(&self.b_center) {
            a += p * fk;
            b += w * fk;
        }
        Moments { a: a * self.dq, b: b * self.dq }
    }

    fn fill(&self, m: Moments, params: &GameParams, variant: KineticVariant, out: &mut Coefficients) {
        let drift = params.r() * (params.kappa() - m.a);
        let d = diffusion_strength(m, params);
        match variant {
            KineticVariant::Reinforcement => {
                for (j, (p, dp)) in self.p_face.iter().zip(&self.dp_face).enumerate() {
                    out.velocity[j] = drift * p - d * dp;
                    out.diffusivity[j] = d * p;
                }
            }
            KineticVariant::Fictitious => {
                out.velocity.iter_mut().for_each(|v| *v = drift);
                out.diffusivity.iter_mut().for_each(|mu| *mu = d);
            }
        }
    }
}

/// Reusable buffers for repeated steps on one grid.
struct Stepper {
    tables: FaceTables,
    coeffs: Coefficients,
    flux: Vec<f64>,
}

impl Stepper {
    fn new(logistic: &Logistic, spec: &GridSpec) -> Self {
        let faces = spec.cells + 1;
        Self {
            tables: FaceTables::new(logistic, spec),
            coeffs: Coefficients { velocity: vec![0.0; faces], diffusivity: vec![0.0; faces] },
            flux: vec![0.0; faces],
        }
    }

    /// Recomputes the coefficients from `f`.
    fn prepare(&mut self, f: &[f64], params: &GameParams, variant: KineticVariant) -> Moments {
        let m = self.tables.moments(f);
        self.tables.fill(m, params, variant, &mut self.coeffs);
        m
    }

    /// Advances `f` by `dt` with the coefficients from the last `prepare`.
    fn advance(&mut self, f: &mut [f64], dt: f64) {
        let dq = self.tables.dq;
        let cells = f.len();
        let Coefficients { velocity, diffusivity } = &self.coeffs;
        self.flux[0] = 0.0;
        self.flux[cells] = 0.0;
        for j in 1..cells {
            let v = velocity[j];
            let upwind = if v > 0.0 { f[j - 1] } else { f[j] };
            self.flux[j] = v * upwind - diffusivity[j] * (f[j] - f[j - 1]) / dq;
        }
        let ratio = dt / dq;
        for (k, fk) in f.iter_mut().enumerate() {
            *fk -= ratio * (self.flux[k + 1] - self.flux[k]);
        }
    }
}

/// One explicit step of the scheme. Fails if `dt` exceeds the stability
/// bound of the coefficients computed from `f`.
pub fn step(
    f: &DensityGrid,
    dt: f64,
    params: &GameParams,
    model: &ProbabilityModel,
    variant: KineticVariant,
) -> Result<DensityGrid> {
    let logistic = require_logistic(model)?;
    let mut stepper = Stepper::new(logistic, f.spec());
    let mut next = f.clone();
    stepper.prepare(next.values(), params, variant);
    let limit = stable_dt(f.dq(), &stepper.coeffs, 1.0, f64::INFINITY);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    stepper.advance(next.values_mut(), dt);
    if next.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: dt });
    }
    Ok(next)
}

/// Settings for one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub variant: KineticVariant,
    /// Fraction of the stability bound used per step, in `(0, 1]`.
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Time between recorded observations.
    pub output_interval: f64,
    /// Times at which the full density is captured.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl PdeRun {
    pub fn new(variant: KineticVariant, t_end: f64, output_interval: f64) -> Self {
        Self { variant, cfl_safety: 0.4, t_end, output_interval, snapshot_times: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(invalid("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if !(self.output_interval > 0.0 && self.output_interval.is_finite()) {
            return Err(invalid("output_interval", format!("must be positive, got {}", self.output_interval)));
        }
        Ok(())
    }

    /// Record times `0, dt, 2 dt, ...` ending exactly at `t_end`.
    fn record_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        let mut k = 0u64;
        loop {
            let t = k as f64 * self.output_interval;
            if t >= self.t_end - 1e-9 * self.output_interval {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(self.t_end);
        times
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeOutput {
    pub series: ObservableSeries,
    pub snapshots: Vec<Snapshot>,
    /// Largest `|sum f dq - 1|` seen after any step.
    pub max_mass_residual: f64,
    /// Smallest cell value seen after any step.
    pub min_density: f64,
    pub steps: u64,
    pub final_density: DensityGrid,
}

#[derive(Clone, Copy)]
struct Stop {
    t: f64,
    record: bool,
    snapshot: bool,
}

fn stops(run: &PdeRun) -> Vec<Stop> {
    let mut out: Vec<Stop> =
        run.record_times().into_iter().map(|t| Stop { t, record: true, snapshot: false }).collect();
    for &t in &run.snapshot_times {
        let t = t.clamp(0.0, run.t_end);
        match out.iter_mut().find(|s| (s.t - t).abs() <= 1e-12 * run.t_end.max(1.0)) {
            Some(s) => s.snapshot = true,
            None => out.push(Stop { t, record: false, snapshot: true }),
        }
    }
    out.sort_by(|x, y| x.t.total_cmp(&y.t));
    out
}

/// Integrates from `f0` to `run.t_end` with adaptive explicit steps.
pub fn solve(
    f0: &DensityGrid,
    params: &GameParams,
    model: &ProbabilityModel,
    run: &PdeRun,
) -> Result<PdeOutput> {
    run.validate()?;
    let logistic = require_logistic(model)?;
    let mut stepper = Stepper::new(logistic, f0.spec());
    let mut f = f0.clone();
    let dq = f.dq();

    let mut series = ObservableSeries::new();
    let mut snapshots = Vec::new();
    let mut max_mass_residual = (f.mass() - 1.0).abs();
    let mut min_density = f.min_value();
    let mut steps = 0u64;
    let mut t = 0.0f64;

    for stop in stops(run) {
        loop {
            let remaining = stop.t - t;
            if remaining <= 1e-13 * stop.t.max(1e-300) {
                t = stop.t.max(t);
                break;
            }
            stepper.prepare(f.values(), params, run.variant);
            let dt = stable_dt(dq, &stepper.coeffs, run.cfl_safety, remaining);
            stepper.advance(f.values_mut(), dt);
            steps += 1;
            t = if dt >= remaining { stop.t } else { t + dt };

            let mut sum = 0.0;
            for &v in f.values() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { t });
                }
                sum += v;
                min_density = min_density.min(v);
            }
            max_mass_residual = max_mass_residual.max((sum * dq - 1.0).abs());
        }
        if stop.record {
            let m = stepper.tables.moments(f.values());
            series.push(Record::new(t, m.a, m.b));
        }
        if stop.snapshot {
            snapshots.push(Snapshot { t, density: f.clone() });
        }
    }

    Ok(PdeOutput { series, snapshots, max_mass_residual, min_density, steps, final_density: f })
}

/// Mean of a Gaussian with standard deviation `sd` whose grid moment `a`
/// equals `target`, found by bisection.
pub fn gaussian_mean_for_entry_fraction(
    spec: &GridSpec,
    model: &ProbabilityModel,
    sd: f64,
    target: f64,
) -> Result<f64> {
    require_logistic(model)?;
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("entry_fraction", format!("must lie in (0, 1), got {target}")));
    }
    let a_of = |mean: f64| -> Result<f64> { Ok(moments(&DensityGrid::gaussian(*spec, mean, sd)?, model)?.a) };
    let (mut lo, mut hi) = (spec.q_min, spec.q_max);
    if a_of(lo)? > target || a_of(hi)? < target {
        return Err(invalid("entry_fraction", format!("{target} is not reachable on the grid")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a_of(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
