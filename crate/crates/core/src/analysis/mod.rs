//! Estimators, fits and inequality checks.

mod inequality;
mod influence;
mod lambda_c;
mod reveal;
mod sharpness;
mod sites;
mod stats;
mod theta;

pub use inequality::{
    verify_inequality, verify_many, BlockLine, InequalityKind, InequalityReport, Verdict,
    VerifyOptions,
};
pub use influence::{
    estimate_influences, estimate_influences_with, InfluenceEstimate, DEFAULT_PROBES,
};
pub use lambda_c::{bisect_levels, estimate_lambda_c, LambdaCEstimate};
pub use reveal::{estimate_revealment, revealment_with, RevealmentMap, REVEAL_HEADER};
pub use sharpness::{
    fit_sharpness, linear_fit, subcritical_fit, supercritical_fit, LinearFit, SharpnessReport,
    SubcriticalRow,
};
pub use sites::{is_bad, is_good, site_diagnostics, SiteDiagnostics, SiteSweep};
pub use stats::{mean, std_error, variance, wilson_interval, wilson_interval_z};
pub use theta::{
    estimate_theta, hits_at, theta_table, theta_table_text, trial_levels, ThetaEstimate,
    THETA_HEADER,
};
