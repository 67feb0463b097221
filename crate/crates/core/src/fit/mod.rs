//! Least-squares estimation of model parameters from measured curves.

mod lm;
mod problems;

pub use lm::{least_squares, FitOptions, FitProblem, FitResult};
pub use problems::{
    fit_dephasing_curve, fit_fluorescence_tail, fit_noise_curve, fit_noise_with_response, DataSet, DephasingFitOptions,
    DEPHASING_PARAMS, FLUORESCENCE_PARAMS, NOISE_PARAMS,
};
