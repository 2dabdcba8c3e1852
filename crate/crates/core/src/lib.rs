//! Repeated market entry games under adaptive learning.
//!
//! Three descriptions of the same dynamics are provided and can be checked
//! against each other:
//!
//! * [`oracle`]: exact one-round laws for small populations,
//! * [`abm`]: agent-based Monte Carlo for any population size,
//! * [`kinetic`]: the mean-field drift-diffusion equation for the
//!   propensity density.
//!
//! [`analysis`] extracts the aggregate-learning and sorting time scales
//! from either engine's output and compares series.

pub mod abm;
pub mod analysis;
pub mod error;
pub mod game;
pub mod kinetic;
pub mod oracle;
pub mod series;

pub use error::{Error, FitError, Result};
pub use game::{GameParams, LearningRule, Logistic, ProbabilityModel, TimeScales};
pub use series::{Field, ObservableSeries, Record};
