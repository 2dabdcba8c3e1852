use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Logistic;

/// Uniform cell layout on `[q_min, q_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub cells: usize,
}

impl GridSpec {
    pub fn new(q_min: f64, q_max: f64, cells: usize) -> Result<Self> {
        let spec = Self { q_min, q_max, cells };
        spec.validate()?;
        Ok(spec)
    }

    /// `[center - 12 s, center + 12 s]` with 800 cells; wide enough that
    /// `p < 1e-5` at the left end and `1 - p < 1e-5` at the right end.
    pub fn default_for(model: &Logistic) -> Self {
        let half = 12.0 * model.scale();
        Self { q_min: model.center() - half, q_max: model.center() + half, cells: 800 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::EmptyGrid("cell count is zero".into()));
        }
        if !(self.q_min.is_finite() && self.q_max.is_finite() && self.q_max > self.q_min) {
            return Err(Error::EmptyGrid(format!("degenerate range [{}, {}]", self.q_min, self.q_max)));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.cells as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.q_min + (k as f64 + 0.5) * self.dq()
    }

    /// Position of face `j`; face `j` separates cells `j - 1` and `j`.
    pub fn face(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.dq()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|k| self.center(k)).collect()
    }

    pub fn faces(&self) -> Vec<f64> {
        (0..=self.cells).map(|j| self.face(j)).collect()
    }

    /// Cell containing `q`, clamped to the end cells. The flag is true when
    /// `q` lay outside the grid.
    pub fn locate(&self, q: f64) -> (usize, bool) {
        let x = (q - self.q_min) / self.dq();
        if x < 0.0 {
            (0, true)
        } else if x >= self.cells as f64 {
            (self.cells - 1, q > self.q_max)
        } else {
            (x as usize, false)
        }
    }
}

/// Piecewise-constant density on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.cells {
            return Err(Error::EmptyGrid(format!(
                "{} values supplied for {} cells",
                values.len(),
                spec.cells
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `shape` at the cell centers and normalizes to unit mass.
    pub fn from_fn(spec: GridSpec, shape: impl Fn(f64) -> f64) -> Result<Self> {
        spec.validate()?;
        let values = spec.centers().into_iter().map(shape).collect();
        let mut grid = Self { spec, values };
        grid.normalize()?;
        Ok(grid)
    }

    /// Gaussian profile; `sd = 0` gives a point mass.
    pub fn gaussian(spec: GridSpec, mean: f64, sd: f64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(crate::error::invalid("sd", format!("must be non-negative, got {sd}")));
        }
        if sd == 0.0 {
            return Self::point_mass(spec, mean);
        }
        Self::from_fn(spec, |q| (-0.5 * ((q - mean) / sd).powi(2)).exp())
    }

    /// All mass in the cell containing `q`.
    pub fn point_mass(spec: GridSpec, q: f64) -> Result<Self> {
        Self::weighted_cells(spec, &[(q, 1.0)])
    }

    /// Mass `w_i` in the cell containing `q_i`; weights are normalized.
    pub fn weighted_cells(spec: GridSpec, atoms: &[(f64, f64)]) -> Result<Self> {
        spec.validate()?;
        let mut values = vec![0.0; spec.cells];
        for &(q, w) in atoms {
            values[spec.locate(q).0] += w;
        }
        let mut grid = Self { spec, values };
        grid.normalize()?;
        Ok(grid)
    }

    fn normalize(&mut self) -> Result<()> {
        let mass: f64 = self.values.iter().sum::<f64>() * self.spec.dq();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::EmptyGrid("profile has no mass on the grid".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dq(&self) -> f64 {
        self.spec.dq()
    }

    /// `sum f_k dq`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.dq()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean propensity `sum q_k f_k dq`.
    pub fn mean(&self) -> f64 {
        let dq = self.spec.dq();
        self.values.iter().enumerate().map(|(k, f)| self.spec.center(k) * f * dq).sum()
    }

    /// `(q_k, f_k)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &f)| (self.spec.center(k), f))
    }
}

/// A density captured at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub density: DensityGrid,
}
