use nalgebra::DMatrix;

use super::pseudo::{check_observed, composite_fit, mple_fit};
use super::{ExpectationMode, FitConfig, FitResult, FitStatus, Method, TraceEntry};
use crate::error::{CdError, Result};
use crate::family::{check_params, suff_stats, Model, NaturalParams, StatVector};
use crate::kernels::{derive_seed, sample_kernel, KernelPlan};
use crate::optim::{cap_step, norm_inf, solve_spd};
use crate::oracle::{exact_kernel_law, Enumeration};
use crate::state::State;

/// Moments of `g(Y^{(k)})` under a kernel, plus the matrix used as the
/// Newton-like Hessian.
#[derive(Clone, Debug)]
pub struct KernelMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Sample covariance in Monte Carlo mode; in exact mode the covariance
    /// within each block/start/support choice of the kernel.
    pub hessian: DMatrix<f64>,
    pub se: Vec<f64>,
    pub n_chains: usize,
}

enum Engine {
    Exact(Enumeration),
    MonteCarlo { n_chains: usize, seed: u64 },
}

impl Engine {
    fn new<M: Model + ?Sized>(model: &M, mode: ExpectationMode, n_chains: usize, seed: u64) -> Result<Self> {
        Ok(match mode {
            ExpectationMode::Exact => Engine::Exact(Enumeration::new(model)?),
            ExpectationMode::MonteCarlo => Engine::MonteCarlo { n_chains, seed },
        })
    }

    fn moments<M: Model + ?Sized>(
        &self,
        model: &M,
        eta: &[f64],
        plan: &KernelPlan,
        y0: &State,
        tag: u64,
    ) -> Result<KernelMoments> {
        match self {
            Engine::Exact(space) => {
                let law = exact_kernel_law(model, space, eta, plan, y0)?.moments(space);
                Ok(KernelMoments {
                    se: vec![0.0; law.mean.len()],
                    mean: law.mean,
                    cov: law.cov,
                    hessian: law.within_cov,
                    n_chains: 0,
                })
            }
            Engine::MonteCarlo { n_chains, seed } => {
                let s = sample_kernel(model, eta, plan, y0, *n_chains, derive_seed(*seed, tag), false)?;
                Ok(KernelMoments {
                    mean: s.mean.into_inner(),
                    hessian: s.cov.clone(),
                    cov: s.cov,
                    se: s.se,
                    n_chains: s.n_chains,
                })
            }
        }
    }
}

/// `E_T[g(Y^{(k)})]` and friends for chains of `plan` started at `y0`.
pub fn kernel_moments<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
    mode: ExpectationMode,
    n_chains: usize,
    seed: u64,
) -> Result<KernelMoments> {
    check_params(model, eta)?;
    Engine::new(model, mode, n_chains, seed)?.moments(model, eta, plan, y0, 0)
}

/// `g(y_obs) − E_T[g]` with chains started at `y_obs`.
pub fn cd_fixed_point_residual<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y_obs: &State,
    plan: &KernelPlan,
    mode: ExpectationMode,
    n_chains: usize,
    seed: u64,
) -> Result<StatVector> {
    check_observed(model, y_obs)?;
    let g = suff_stats(model, y_obs)?;
    let mom = kernel_moments(model, eta, plan, y_obs, mode, n_chains, seed)?;
    Ok(StatVector(
        g.iter().zip(&mom.mean).map(|(a, b)| a - b).collect(),
    ))
}

fn scaled_residual(r: &[f64], se: &[f64], mode: ExpectationMode) -> f64 {
    match mode {
        ExpectationMode::Exact => norm_inf(r),
        ExpectationMode::MonteCarlo => r
            .iter()
            .zip(se)
            .map(|(ri, s)| ri.abs() / s.max(1e-8))
            .fold(0.0, f64::max),
    }
}

fn ridged(h: &DMatrix<f64>, weight: f64) -> f64 {
    let d = h.nrows().max(1) as f64;
    weight * (h.trace() / d).max(0.0)
}

/// Newton-like direction `(H + ridge)^{-1} r`, or `r` itself when the
/// regularised system is still not positive definite.
fn newton_direction(h: &DMatrix<f64>, r: &[f64], ridge_weight: f64) -> Vec<f64> {
    solve_spd(h, r, ridged(h, ridge_weight)).unwrap_or_else(|| r.to_vec())
}

/// `H^{-1} (cov/n) H^{-1}`: the spread of a root of `g − Ê_T[g] = 0` caused by
/// Monte-Carlo error in `Ê_T[g]`.
fn sandwich(mom: &KernelMoments, ridge_weight: f64) -> DMatrix<f64> {
    let d = mom.mean.len();
    if mom.n_chains == 0 {
        return DMatrix::zeros(d, d);
    }
    let mut h = mom.hessian.clone();
    let ridge = ridged(&h, ridge_weight);
    for i in 0..d {
        h[(i, i)] += ridge;
    }
    match h.try_inverse() {
        Some(inv) => &inv * (&mom.cov / mom.n_chains as f64) * &inv,
        None => DMatrix::from_element(d, d, f64::NAN),
    }
}

fn starting_point<M: Model + ?Sized>(model: &M, y: &State, cfg: &FitConfig) -> Result<Vec<f64>> {
    if let Some(s) = &cfg.start {
        check_params(model, s)?;
        return Ok(s.clone());
    }
    let mple = mple_fit(model, y)?;
    Ok(match mple.status {
        FitStatus::Converged | FitStatus::MaxIters if mple.eta_hat.is_finite() => {
            mple.eta_hat.into_inner()
        }
        _ => vec![0.0; model.num_stats()],
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Update {
    Gain,
    Newton,
}

fn require_plan(cfg: &FitConfig) -> Result<&KernelPlan> {
    cfg.plan
        .as_ref()
        .ok_or_else(|| CdError::InvalidConfig(format!("{} needs a kernel plan", cfg.method)))
}

fn cd_loop<M: Model + ?Sized>(
    model: &M,
    y_obs: &State,
    cfg: &FitConfig,
    update: Update,
    method: Method,
) -> Result<FitResult> {
    let plan = require_plan(cfg)?;
    check_observed(model, y_obs)?;
    plan.validate(model)?;
    if cfg.mode == ExpectationMode::MonteCarlo && cfg.n_chains < 2 {
        return Err(CdError::InvalidConfig("need at least two chains".into()));
    }
    let g_obs = suff_stats(model, y_obs)?;
    let engine = Engine::new(model, cfg.mode, cfg.n_chains, cfg.seed)?;
    let tol = cfg.effective_tol();
    let mut eta = starting_point(model, y_obs, cfg)?;
    let mut trace = Vec::new();
    let mut status = FitStatus::MaxIters;
    let mut updates = 0;
    let mut mom;
    let mut iter = 0usize;
    loop {
        mom = engine.moments(model, &eta, plan, y_obs, iter as u64)?;
        let r: Vec<f64> = g_obs.iter().zip(&mom.mean).map(|(g, m)| g - m).collect();
        let scaled = scaled_residual(&r, &mom.se, cfg.mode);
        trace.push(TraceEntry {
            eta: eta.clone(),
            residual: scaled,
        });
        if scaled <= tol {
            status = FitStatus::Converged;
            break;
        }
        if iter >= cfg.max_iters {
            break;
        }
        iter += 1;
        let mut step = match update {
            Update::Gain => {
                let gain = cfg.gain_a / iter as f64;
                r.iter().map(|x| gain * x).collect()
            }
            Update::Newton => newton_direction(&mom.hessian, &r, cfg.ridge),
        };
        cap_step(&mut step, cfg.max_step);
        for (e, s) in eta.iter_mut().zip(&step) {
            *e += s;
        }
        updates += 1;
        if !eta.iter().all(|e| e.is_finite()) || norm_inf(&eta) > cfg.bound {
            status = FitStatus::Diverged;
            trace.push(TraceEntry {
                eta: eta.clone(),
                residual: f64::INFINITY,
            });
            break;
        }
    }
    Ok(FitResult {
        method,
        eta_cov: sandwich(&mom, cfg.ridge),
        eta_hat: NaturalParams(eta),
        mu_hat: StatVector(mom.mean),
        cov_hat: mom.cov,
        mu_se: mom.se,
        trace,
        status,
        iterations: updates,
    })
}

/// CD with stochastic-approximation updates `η ← η + (a/i)(g(y) − Ê_T[g])`.
pub fn cd_sgd_fit<M: Model + ?Sized>(model: &M, y_obs: &State, cfg: &FitConfig) -> Result<FitResult> {
    cd_loop(model, y_obs, cfg, Update::Gain, Method::CdSgd)
}

/// CD with Newton-like updates `η ← η + H^{-1}(g(y) − Ê_T[g])`.
pub fn cd_newton_fit<M: Model + ?Sized>(
    model: &M,
    y_obs: &State,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cd_loop(model, y_obs, cfg, Update::Newton, Method::CdNewton)
}

/// Long-chain stand-in for the MLE: `warmup_iters` Newton-like steps, then
/// Robbins–Monro steps `(a/i) H^{-1}(g(y) − Ê_T[g])` with `H` frozen at the
/// end of the warm-up. Meant for plans whose chains nearly reach equilibrium.
pub fn sa_mle_reference<M: Model + ?Sized>(
    model: &M,
    y_obs: &State,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let warm = FitConfig {
        max_iters: cfg.warmup_iters,
        tol: Some(0.0),
        ..cfg.clone()
    };
    let phase1 = cd_loop(model, y_obs, &warm, Update::Newton, Method::SaMleReference)?;
    if phase1.status == FitStatus::Diverged {
        return Ok(phase1);
    }
    let plan = require_plan(cfg)?;
    let g_obs = suff_stats(model, y_obs)?;
    let engine = Engine::new(model, cfg.mode, cfg.n_chains, derive_seed(cfg.seed, u64::MAX))?;
    let tol = cfg.effective_tol();
    let mut h = phase1.cov_hat.clone();
    let ridge = ridged(&h, cfg.ridge);
    for i in 0..h.nrows() {
        h[(i, i)] += ridge;
    }
    let mut eta = phase1.eta_hat.into_inner();
    let mut trace = phase1.trace;
    let mut status = FitStatus::MaxIters;
    let mut updates = phase1.iterations;
    let mut mom;
    let mut i = 0usize;
    loop {
        mom = engine.moments(model, &eta, plan, y_obs, i as u64)?;
        let r: Vec<f64> = g_obs.iter().zip(&mom.mean).map(|(g, m)| g - m).collect();
        let scaled = scaled_residual(&r, &mom.se, cfg.mode);
        trace.push(TraceEntry {
            eta: eta.clone(),
            residual: scaled,
        });
        if scaled <= tol {
            status = FitStatus::Converged;
            break;
        }
        if i >= cfg.max_iters {
            break;
        }
        i += 1;
        let gain = cfg.gain_a / i as f64;
        let mut step: Vec<f64> = newton_direction(&h, &r, 0.0)
            .into_iter()
            .map(|s| gain * s)
            .collect();
        cap_step(&mut step, cfg.max_step);
        for (e, s) in eta.iter_mut().zip(&step) {
            *e += s;
        }
        updates += 1;
        if !eta.iter().all(|e| e.is_finite()) || norm_inf(&eta) > cfg.bound {
            status = FitStatus::Diverged;
            break;
        }
    }
    Ok(FitResult {
        method: Method::SaMleReference,
        eta_cov: sandwich(&mom, cfg.ridge),
        eta_hat: NaturalParams(eta),
        mu_hat: StatVector(mom.mean),
        cov_hat: mom.cov,
        mu_se: mom.se,
        trace,
        status,
        iterations: updates,
    })
}

/// Runs the method named in `cfg`.
pub fn fit<M: Model + ?Sized>(model: &M, y_obs: &State, cfg: &FitConfig) -> Result<FitResult> {
    match cfg.method {
        Method::Mple => mple_fit(model, y_obs),
        Method::Composite => {
            let blocks = cfg.blocks.as_ref().ok_or_else(|| {
                CdError::InvalidConfig("composite likelihood needs a block distribution".into())
            })?;
            composite_fit(model, y_obs, blocks)
        }
        Method::CdSgd => cd_sgd_fit(model, y_obs, cfg),
        Method::CdNewton => cd_newton_fit(model, y_obs, cfg),
        Method::SaMleReference => sa_mle_reference(model, y_obs, cfg),
    }
}
