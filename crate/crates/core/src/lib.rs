//! Markov-switching vector autoregression: simulation, regularized EM
//! estimation with a windowed approximate E-step, baselines, and study
//! tooling.
//!
//! The model is Y_t = B_{Z_t}' Y_{t-1} + eps_t with eps_t ~ N(0, sigma2 Id)
//! and a latent K-state Markov chain Z. Estimation alternates a windowed
//! forward-filter E-step with an M-step made of a closed-form transition
//! update, a coordinate-descent weighted lasso for the coefficients, and a
//! closed-form variance update. See the crate README for the CLI.

pub mod diagnostics;
pub mod em;
pub mod error;
pub mod experiment;
pub mod filtering;
pub mod linalg;
pub mod model;
pub mod mstep;
pub mod rng;
pub mod sim;
pub mod tuning;

pub use diagnostics::{
    bound_check, compute_metrics, gradient_norm_probe, isnr_probe, oracle_fit, xi_coefficient,
    MetricsReport, OracleFit, ProbeConfig, ProbeEstimate,
};
pub use em::{
    align_permutation, beta_l2_distance, fit, fit_single_init, random_init, EStepEngine, EmConfig,
    FitOutput, FitResult, SPolicy, TraceRecord, TruncationRule,
};
pub use error::{CoreError, Result};
pub use experiment::{run_experiment, summarize, ExperimentSpec, StudyOutput, StudySummary};
pub use filtering::{
    approx_estep, approx_estep_with_start, exact_filter, symmetric_filter_closed_form,
    WindowWeights,
};
pub use linalg::{gaussian_loglik, spectral_norm, stationary_distribution};
pub use model::{validate, ModelParams, SeriesData, SupportSet, ValidationReport};
pub use mstep::{update_beta, update_sigma2, update_transition, BetaUpdate, LassoConfig};
pub use sim::{make_setting_one, make_setting_two, simulate, SettingKind, SettingSpec, SimConfig};
pub use tuning::{cv_select_lambda, hbic_score, lambda_grid, FoldScheme, TuningMode, TuningPolicy};
