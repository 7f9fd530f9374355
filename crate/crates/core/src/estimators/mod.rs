//! Fitting procedures: pseudo-likelihood, composite likelihood, contrastive
//! divergence with stochastic-approximation or Newton-like updates, and a
//! long-chain stochastic-approximation stand-in for the MLE.

mod cd;
mod equilibrium;
mod pseudo;

pub use cd::{
    cd_fixed_point_residual, cd_newton_fit, cd_sgd_fit, fit, kernel_moments, sa_mle_reference,
    KernelMoments,
};
pub use equilibrium::{equilibrium_moments, EquilibriumOptions, EquilibriumSample};
pub use pseudo::{
    composite_fit, composite_objective, mple_fit, pseudo_log_likelihood, weighted_mple_fit,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::CdError;
use crate::family::{NaturalParams, StatVector};
use crate::kernels::{BlockDistribution, KernelPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Mple,
    Composite,
    CdSgd,
    CdNewton,
    SaMleReference,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mple => "mple",
            Method::Composite => "composite",
            Method::CdSgd => "cd_sgd",
            Method::CdNewton => "cd_newton",
            Method::SaMleReference => "sa_mle_reference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CdError;

    fn from_str(s: &str) -> Result<Self, CdError> {
        Ok(match s {
            "mple" => Method::Mple,
            "composite" => Method::Composite,
            "cd_sgd" => Method::CdSgd,
            "cd_newton" => Method::CdNewton,
            "sa_mle_reference" => Method::SaMleReference,
            other => return Err(CdError::InvalidConfig(format!("unknown method `{other}`"))),
        })
    }
}

/// How `E_T[g]` is obtained inside the CD iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpectationMode {
    /// Sample means over independent chains.
    MonteCarlo,
    /// Exact kernel law by enumeration; small models only.
    Exact,
}

impl FromStr for ExpectationMode {
    type Err = CdError;

    fn from_str(s: &str) -> Result<Self, CdError> {
        match s {
            "monte_carlo" => Ok(ExpectationMode::MonteCarlo),
            "exact" => Ok(ExpectationMode::Exact),
            other => Err(CdError::InvalidConfig(format!(
                "unknown expectation mode `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub method: Method,
    /// Kernel for the CD methods and the reference run.
    pub plan: Option<KernelPlan>,
    /// Block distribution for composite likelihood.
    pub blocks: Option<BlockDistribution>,
    /// Gain numerator `a` in `γ_i = a / i`.
    pub gain_a: f64,
    pub max_iters: usize,
    /// Stopping threshold on the scaled residual; `None` picks the mode default.
    pub tol: Option<f64>,
    /// Ridge weight: `ridge · trace(H) / d` is added to the Hessian diagonal.
    pub ridge: f64,
    /// Cap on `‖Δη‖₂` per iteration.
    pub max_step: f64,
    pub n_chains: usize,
    pub mode: ExpectationMode,
    pub seed: u64,
    /// `‖η‖∞` beyond which a fit is declared diverged.
    pub bound: f64,
    /// Starting point; `None` starts at the MPLE.
    pub start: Option<Vec<f64>>,
    /// Newton iterations before the Robbins–Monro phase of the reference run.
    pub warmup_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: Method::Mple,
            plan: None,
            blocks: None,
            gain_a: 0.5,
            max_iters: 100,
            tol: None,
            ridge: 1e-6,
            max_step: 1.0,
            n_chains: 1024,
            mode: ExpectationMode::MonteCarlo,
            seed: 0,
            bound: 100.0,
            start: None,
            warmup_iters: 10,
        }
    }
}

impl FitConfig {
    pub fn new(method: Method) -> Self {
        FitConfig {
            method,
            ..FitConfig::default()
        }
    }

    pub fn with_plan(mut self, plan: KernelPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn with_mode(mut self, mode: ExpectationMode) -> Self {
        self.mode = mode;
        self
    }

    /// 1e-8 absolute in exact mode, 0.5 standard errors in Monte Carlo mode.
    pub fn effective_tol(&self) -> f64 {
        self.tol.unwrap_or(match self.mode {
            ExpectationMode::Exact => 1e-8,
            ExpectationMode::MonteCarlo => 0.5,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIters,
    Diverged,
    /// The optimum lies at infinity (separation, or statistics on a face).
    Boundary,
}

impl FitStatus {
    pub fn name(self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIters => "max_iters",
            FitStatus::Diverged => "diverged",
            FitStatus::Boundary => "boundary",
        }
    }
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub eta: Vec<f64>,
    /// Scaled residual (CD methods) or gradient sup-norm (likelihood methods).
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub method: Method,
    pub eta_hat: NaturalParams,
    /// `E_T[g]` at `η̂` under the kernel implied by the method.
    pub mu_hat: StatVector,
    /// Covariance of `g` under that kernel (sample covariance in Monte Carlo mode).
    pub cov_hat: DMatrix<f64>,
    /// Monte-Carlo standard error of each `mu_hat` component; zero when exact.
    pub mu_se: Vec<f64>,
    /// Approximate sampling covariance of `η̂` from Monte-Carlo noise in
    /// `E_T[g]`; zero for deterministic fits.
    pub eta_cov: DMatrix<f64>,
    pub trace: Vec<TraceEntry>,
    pub status: FitStatus,
    pub iterations: usize,
}

impl FitResult {
    pub fn final_residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.residual)
    }
}
