//! Contrastive-divergence estimation for discrete exponential families.
//!
//! The crate is organised around the [`Model`] trait: a binary state space
//! `{0,1}^m`, sufficient statistics `g`, and an optional hard-constraint
//! offset. On top of it sit the Gibbs-type [`kernels`], the exact
//! enumeration [`oracle`] for small models, and the [`estimators`].

pub mod error;
pub mod estimators;
pub mod family;
pub mod kernels;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod state;

pub use error::{CdError, Result};
pub use family::{
    change_stats, conditional_prob, log_unnormalized, offset, suff_stats, MeanParams, Model,
    NaturalParams, StatVector,
};
pub use estimators::{ExpectationMode, FitConfig, FitResult, FitStatus, Method};
pub use kernels::{BlockDistribution, ChainRecord, KernelFamily, KernelPlan, KernelSample};
pub use models::{BinaryPairwiseModel, ErgmModel, ErgmStat};
pub use state::{DyadIndex, State};
