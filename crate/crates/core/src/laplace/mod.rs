//! Nested Laplace approximation: a Gaussian approximation of the latent field
//! at fixed hyperparameters, a grid over the hyperparameters, and the
//! integrated marginals.

mod hyper;
mod marginals;
mod mode;
mod model;

pub use hyper::{
    evaluate_grid, explore_hyperparameters, hyper_posterior_point, log_hyper_posterior, HyperGrid,
};
pub use marginals::{fit, hyper_marginal, latent_marginals, FitResult, GaussianMixture, RandomEffectSummary};
pub use mode::{gmrf_mode, Constraint, GaussianApprox};
pub use model::{Assembly, HyperValues, LatentModel};
