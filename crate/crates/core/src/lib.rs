//! Bayesian spatial logistic and Weibull survival models with regional
//! random effects, fitted by nested Laplace approximations.

pub mod design;
pub mod domain;
pub mod error;
pub mod graph;
pub mod cli;
pub mod criteria;
pub mod laplace;
pub mod likelihood;
pub mod oracle;
pub mod quadrature;
pub mod simulate;
pub mod sparse;

pub use domain::{
    Dataset, Effect, Family, FixedHypers, GridSettings, HyperKind, HyperPoint, LatentField, Marginal,
    ModelSpec, Outcome, PriorSet, Summary,
};
pub use error::{Error, Result};
pub use graph::{RegionGraph, SparsePrecision};
pub use laplace::{fit, FitResult, GaussianApprox, LatentModel};
