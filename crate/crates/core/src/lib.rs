//! Cross-validated relevance weights and weighted likelihood estimates for
//! borrowing strength across related populations.

pub mod cv;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod mapping;
pub mod model;
pub mod search;
pub mod sim;
pub mod weights;

pub use cv::{lognormal_weight, loo_discrepancy, optimize_weights, DeletionScheme};
pub use error::{Result, WleError};
pub use estimator::{loo_estimates, mle_mean, wle, Estimate};
pub use linalg::{constrained_quadratic_min, pseudo_inverse, Matrix, QpSolution};
pub use model::{summarize, Family, ModelSpec, MultiSample, PopulationSample, SampleStats, Scheme, WeightVector};
pub use sim::{run_study, run_study_with_workers, ReportRow, SimulationReport, StudyConfig};
pub use weights::{
    select_weights, weights_equal_matrix, weights_equal_two, weights_unequal_matrix, weights_unequal_two, Delta,
};
