//! Black-box importance sampling for joint Value-at-Risk and Conditional
//! Value-at-Risk estimation.
//!
//! Samples `X` from a Gaussian-copula model with Weibull-type marginals are
//! pushed outward by `T(x) = x · r^κ(x)`, reweighted by their likelihood
//! ratio, and fed to a weighted empirical quantile. Only black-box
//! evaluations of the loss and of the input log density are needed.

pub mod dist;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod losses;
pub mod normal;
pub mod transform;

pub use dist::{
    copula_log_density, joint_log_density, marginal_log_density, marginal_quantile, sample_x,
    std_normal_quantile, CorrelationMatrix, DistributionSpec, MarginalSpec, SampleMatrix,
};
pub use error::{Error, Result};
pub use estimators::{
    cvar_standard_error, estimate, estimate_with_transform, is_cdf_tail, is_cvar, is_var,
    naive_var_cvar, EstimateReport, IsConfig, Method, WeightedLossSample,
};
pub use harness::{
    cross_validate_h, pert_h_rule, relative_rmse, run_replications, variance_ratio_study,
    ExperimentConfig, HRule, ReplicationTable,
};
pub use losses::{
    eval_linear, eval_pert, eval_relu_net, load_relu_params, LossModel, ReluNetParams,
};
pub use transform::{
    extrapolation_factor, kappa, log_jacobian, log_likelihood_ratio, transform, TransformParams,
};
