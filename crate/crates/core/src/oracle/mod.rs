//! Brute-force ground truth on enumerable state spaces.
//!
//! Every configuration of an `m`-dimensional model is addressed by its code
//! (bit `i` of the code is `y_i`). [`Enumeration`] caches `g(y)` and the
//! offset for all `2^m` codes, after which partition functions, moments,
//! exact transition laws and divergences are cheap to evaluate for any `η`.

mod divergence;
mod law;

pub use divergence::{
    augmented_divergence, block_conditional, combined_divergence, q_star_distribution,
    qstar_argmax, qstar_log_likelihood, support_probabilities, AugmentedDivergence, CombinedDivergence, QStar,
};
pub use law::{
    detailed_balance_error, exact_kernel_law, kernel_step_matrix, kl_decay_curve, kl_divergence,
    support_step_matrix, ExactLaw, LawComponent, LawMoments, TransitionMatrix,
};

use nalgebra::DMatrix;

use crate::error::{CdError, Result};
use crate::family::{check_params, log_sum_exp, MeanParams, Model, NaturalParams};
use crate::optim::{newton_maximize, Evaluation, NewtonOptions, NewtonStatus};
use crate::state::State;

/// Default bound on `m` for full enumeration (about 10^6 states).
pub const ENUMERATION_LIMIT: usize = 20;
/// Default bound on `m` for dense transition matrices.
pub const MATRIX_LIMIT: usize = 12;

/// Cached statistics and offsets for all `2^m` configurations.
#[derive(Clone, Debug)]
pub struct Enumeration {
    m: usize,
    d: usize,
    stats: Vec<f64>,
    allowed: Vec<bool>,
}

impl Enumeration {
    pub fn new<M: Model + ?Sized>(model: &M) -> Result<Self> {
        Enumeration::with_limit(model, ENUMERATION_LIMIT)
    }

    pub fn with_limit<M: Model + ?Sized>(model: &M, limit: usize) -> Result<Self> {
        let m = model.dim();
        if m > limit.min(30) {
            return Err(CdError::StateSpaceTooLarge { dim: m, limit });
        }
        let d = model.num_stats();
        let size = 1usize << m;
        let mut stats = vec![0.0; size * d];
        let mut allowed = vec![true; size];
        for code in 0..size {
            let y = State::from_code(code as u64, m);
            model.write_stats(&y, &mut stats[code * d..(code + 1) * d]);
            allowed[code] = model.is_allowed(&y);
        }
        Ok(Enumeration {
            m,
            d,
            stats,
            allowed,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn num_stats(&self) -> usize {
        self.d
    }

    pub fn size(&self) -> usize {
        1 << self.m
    }

    #[inline]
    pub fn stats(&self, code: usize) -> &[f64] {
        &self.stats[code * self.d..(code + 1) * self.d]
    }

    #[inline]
    pub fn allowed(&self, code: usize) -> bool {
        self.allowed[code]
    }

    fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.d {
            return Err(CdError::DimensionMismatch {
                expected: self.d,
                actual: eta.len(),
            });
        }
        Ok(())
    }

    /// `η·g(y) + o(y)` for every code.
    pub fn log_weights(&self, eta: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|c| {
                if self.allowed[c] {
                    self.stats(c).iter().zip(eta).map(|(g, e)| g * e).sum()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn distribution(&self, eta: &[f64]) -> Result<ExactDistribution> {
        self.check_eta(eta)?;
        let lw = self.log_weights(eta);
        let log_z = log_sum_exp(lw.iter().copied());
        if log_z == f64::NEG_INFINITY {
            return Err(CdError::Numerical("every configuration is forbidden".into()));
        }
        let (states, log_probs) = lw
            .iter()
            .enumerate()
            .filter(|(c, _)| self.allowed[*c])
            .map(|(c, w)| (c as u64, w - log_z))
            .unzip();
        Ok(ExactDistribution {
            m: self.m,
            states,
            log_probs,
            log_z,
        })
    }

    /// Mean and covariance of `g` under a full-space probability vector.
    pub fn moments_of(&self, probs: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.d;
        let mut mean = vec![0.0; d];
        for (c, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                for (acc, g) in mean.iter_mut().zip(self.stats(c)) {
                    *acc += p * g;
                }
            }
        }
        let mut cov = DMatrix::zeros(d, d);
        for (c, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                let g = self.stats(c);
                for a in 0..d {
                    for b in 0..=a {
                        cov[(a, b)] += p * (g[a] - mean[a]) * (g[b] - mean[b]);
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        (mean, cov)
    }

    /// `(μ(η), cov_η(g))`.
    pub fn moments(&self, eta: &[f64]) -> Result<(MeanParams, DMatrix<f64>)> {
        let dist = self.distribution(eta)?;
        let (mean, cov) = self.moments_of(&dist.full_probs());
        Ok((MeanParams(mean), cov))
    }

    /// Per-component `(min, max)` of each statistic over allowed states.
    pub fn stat_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.d];
        for c in (0..self.size()).filter(|&c| self.allowed[c]) {
            for (r, &g) in ranges.iter_mut().zip(self.stats(c)) {
                r.0 = r.0.min(g);
                r.1 = r.1.max(g);
            }
        }
        ranges
    }
}

/// The normalised law of an enumerable model; forbidden states are absent.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub m: usize,
    pub states: Vec<u64>,
    pub log_probs: Vec<f64>,
    pub log_z: f64,
}

impl ExactDistribution {
    pub fn total_mass(&self) -> f64 {
        self.log_probs.iter().map(|l| l.exp()).sum()
    }

    /// Probabilities indexed by code over all `2^m` configurations.
    pub fn full_probs(&self) -> Vec<f64> {
        let mut p = vec![0.0; 1 << self.m];
        for (&c, &l) in self.states.iter().zip(&self.log_probs) {
            p[c as usize] = l.exp();
        }
        p
    }
}

/// `log z(η)`.
pub fn log_partition<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Result<f64> {
    check_params(model, eta)?;
    Ok(Enumeration::new(model)?.distribution(eta)?.log_z)
}

/// `z(η) = Σ_y exp(η·g(y) + o(y))`, computed in log space.
pub fn partition<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Result<f64> {
    Ok(log_partition(model, eta)?.exp())
}

/// `μ(η) = E_η[g(Y)]`.
pub fn exact_mean_params<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Result<MeanParams> {
    check_params(model, eta)?;
    Ok(Enumeration::new(model)?.moments(eta)?.0)
}

/// Exact MLE for one observation with statistics `g_obs`: the `η` solving
/// `μ(η) = g_obs`. Fails when `g_obs` sits on the boundary of the convex hull
/// of achievable statistics.
pub fn exact_mle<M: Model + ?Sized>(model: &M, g_obs: &[f64]) -> Result<NaturalParams> {
    exact_mle_enumerated(&Enumeration::new(model)?, g_obs)
}

pub fn exact_mle_enumerated(space: &Enumeration, g_obs: &[f64]) -> Result<NaturalParams> {
    space.check_eta(g_obs)?;
    for (j, ((lo, hi), &g)) in space.stat_ranges().iter().zip(g_obs).enumerate() {
        if g <= *lo || g >= *hi {
            return Err(CdError::MleDoesNotExist(format!(
                "statistic {j} observed at {g}, the edge of its range [{lo}, {hi}]"
            )));
        }
    }
    let objective = |eta: &[f64]| -> Result<Evaluation> {
        let dist = space.distribution(eta)?;
        let (mean, cov) = space.moments_of(&dist.full_probs());
        let value = g_obs.iter().zip(eta).map(|(g, e)| g * e).sum::<f64>() - dist.log_z;
        Ok(Evaluation {
            value,
            gradient: g_obs.iter().zip(&mean).map(|(g, m)| g - m).collect(),
            information: cov,
        })
    };
    let opts = NewtonOptions {
        grad_tol: 1e-12,
        max_iters: 500,
        bound: 200.0,
        ..NewtonOptions::default()
    };
    let out = newton_maximize(objective, &vec![0.0; space.d], &opts)?;
    match out.status {
        NewtonStatus::Converged => {
            let (_, cov) = space.moments(&out.x)?;
            let smallest = cov.symmetric_eigenvalues().min();
            if smallest < 1e-9 * cov.trace().max(1e-300) {
                return Err(CdError::MleDoesNotExist(
                    "observed statistics lie on a face of the convex hull".into(),
                ));
            }
            Ok(NaturalParams(out.x))
        }
        NewtonStatus::Diverged => Err(CdError::MleDoesNotExist(
            "Newton iterates diverged".into(),
        )),
        other => Err(CdError::Numerical(format!(
            "exact MLE did not converge ({other:?}, gradient {:.3e})",
            out.grad_norm
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::suff_stats;
    use crate::models::{BinaryPairwiseModel, ErgmModel, ErgmStat};

    #[test]
    fn partition_closed_forms() {
        let model = BinaryPairwiseModel::independent(5).unwrap();
        assert!((partition(&model, &[0.0]).unwrap() - 32.0).abs() < 1e-12);
        let one = BinaryPairwiseModel::independent(1).unwrap();
        let theta: f64 = 0.8;
        assert!((partition(&one, &[theta]).unwrap() - (1.0 + theta.exp())).abs() < 1e-12);
    }

    #[test]
    fn capped_partition_matches_filtered_recount() {
        let model = ErgmModel::new(5, vec![ErgmStat::Edges], None, None, Some(2)).unwrap();
        let eta = [0.3];
        let mut z = 0.0;
        for code in 0..1u64 << 10 {
            let y = State::from_code(code, 10);
            let deg = model.dyads().degrees(&y);
            if deg.iter().all(|&d| d <= 2) {
                z += (eta[0] * suff_stats(&model, &y).unwrap()[0]).exp();
            }
        }
        assert!((partition(&model, &eta).unwrap() - z).abs() < 1e-9 * z);
    }

    #[test]
    fn mean_at_zero_is_half_the_dyads() {
        let model = ErgmModel::new(5, vec![ErgmStat::Edges], None, None, None).unwrap();
        let mu = exact_mean_params(&model, &[0.0]).unwrap();
        assert!((mu[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mle_boundary_and_origin() {
        let one = BinaryPairwiseModel::independent(1).unwrap();
        assert!(matches!(
            exact_mle(&one, &[1.0]),
            Err(CdError::MleDoesNotExist(_))
        ));
        let model = BinaryPairwiseModel::cycle(4).unwrap();
        let mu0 = exact_mean_params(&model, &[0.0, 0.0]).unwrap();
        let eta = exact_mle(&model, &mu0).unwrap();
        assert!(eta.iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn too_large_is_rejected() {
        let model = BinaryPairwiseModel::independent(25).unwrap();
        assert!(matches!(
            Enumeration::new(&model),
            Err(CdError::StateSpaceTooLarge { .. })
        ));
    }
}
