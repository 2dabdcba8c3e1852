use serde::{Deserialize, Serialize};

/// One observation of the population at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    /// Mean entry probability.
    pub a: f64,
    /// Sorting coefficient, the population mean of `p (1 - p)`.
    pub b: f64,
    /// Realized entrant fraction of the round played at `t`.
    pub m_frac: Option<f64>,
    pub stderr_a: Option<f64>,
    pub stderr_b: Option<f64>,
}

impl Record {
    pub fn new(t: f64, a: f64, b: f64) -> Self {
        Self { t, a, b, m_frac: None, stderr_a: None, stderr_b: None }
    }
}

/// Which moment of a series to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    A,
    B,
}

/// Time series of observables produced by either engine.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub records: Vec<Record>,
}

impl ObservableSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        debug_assert!(self.records.last().is_none_or(|last| record.t > last.t));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn field(&self, field: Field) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| match field {
                Field::A => r.a,
                Field::B => r.b,
            })
            .collect()
    }

    /// `(t, value)` pairs for one field.
    pub fn points(&self, field: Field) -> Vec<(f64, f64)> {
        self.times().into_iter().zip(self.field(field)).collect()
    }

    /// Records with `t <= t_max`.
    pub fn truncated(&self, t_max: f64) -> Self {
        Self { records: self.records.iter().copied().filter(|r| r.t <= t_max).collect() }
    }

    pub fn has_stderr(&self) -> bool {
        self.records.iter().any(|r| r.stderr_a.is_some() || r.stderr_b.is_some())
    }

    /// Checks ordering and the bounds `0 <= a <= 1`, `0 <= b <= 1/4`.
    pub fn check_invariants(&self) -> Result<(), String> {
        const SLACK: f64 = 1e-12;
        for (i, r) in self.records.iter().enumerate() {
            if i > 0 && r.t <= self.records[i - 1].t {
                return Err(format!("time not increasing at record {i}"));
            }
            if !(-SLACK..=1.0 + SLACK).contains(&r.a) {
                return Err(format!("a = {} out of [0, 1] at t = {}", r.a, r.t));
            }
            if !(-SLACK..=0.25 + SLACK).contains(&r.b) {
                return Err(format!("b = {} out of [0, 1/4] at t = {}", r.b, r.t));
            }
        }
        Ok(())
    }
}
