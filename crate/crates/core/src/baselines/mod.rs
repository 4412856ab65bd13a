//! Comparators for the functional network: penalized functional multinomial regression
//! and a conventional network fed the raw grid values.

mod conventional;
mod flm;

pub use conventional::{make_conventional_nn_dataset, raw_matrix_dataset};
pub use flm::{
    fit_flm, predict_flm, roughness_penalty, FitDiagnostics, FlmConfig, FlmModel, FlmSolver,
    DEFAULT_LAMBDA_GRID, PENALTY_POINTS,
};
