//! The exponential-family abstraction `q(y) ∝ exp(η·g(y) + o(y))` over binary
//! configurations, together with its parameter vectors.
//!
//! Offsets are hard constraints only: `o(y)` is either `0` or `-∞`. A model
//! reports them through [`Model::is_allowed`] and, for single-coordinate
//! changes, [`Model::allows`].

use std::ops::{Deref, DerefMut};

use crate::error::{CdError, Result};
use crate::state::{DyadIndex, State};

macro_rules! real_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(d: usize) -> Self {
                $name(vec![0.0; d])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                $name(v.to_vec())
            }
        }
    };
}

real_vector!(
    /// Natural parameters `η`.
    NaturalParams
);
real_vector!(
    /// Mean-value parameters `μ = E_q[g(Y)]`.
    MeanParams
);
real_vector!(
    /// A vector of sufficient statistics `g(y)` (or a difference of them).
    StatVector
);

impl NaturalParams {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// A discrete exponential family over `{0,1}^m` with `d` sufficient statistics.
///
/// `write_stats` and `write_change` skip dimension checks; the free functions
/// in this module are the checked entry points.
pub trait Model: Send + Sync {
    /// State dimension `m`.
    fn dim(&self) -> usize;

    /// Number of sufficient statistics `d`.
    fn num_stats(&self) -> usize;

    fn stat_names(&self) -> Vec<String>;

    /// Writes `g(y)` into `out` (length `d`).
    fn write_stats(&self, y: &State, out: &mut [f64]);

    /// Writes `g(y | y_i = 1) − g(y | y_i = 0)` into `out`.
    fn write_change(&self, y: &State, i: usize, out: &mut [f64]);

    /// `false` iff the offset of `y` is `-∞`.
    fn is_allowed(&self, _y: &State) -> bool {
        true
    }

    /// Whether `y` with coordinate `i` set to `value` is allowed. Models with
    /// an offset may assume the constraint already holds away from `i`'s
    /// neighbourhood, which is true along any chain started at an allowed state.
    fn allows(&self, _y: &State, _i: usize, _value: bool) -> bool {
        true
    }

    fn has_offset(&self) -> bool {
        false
    }

    /// Structural conditional independence of `Y_i` and `Y_j` given the rest,
    /// for every parameter value. Conservative: `false` when unsure.
    fn conditionally_independent(&self, _i: usize, _j: usize) -> bool {
        false
    }

    /// Graph addressing, for models whose coordinates are dyads.
    fn graph(&self) -> Option<&DyadIndex> {
        None
    }
}

pub(crate) fn check_dim<M: Model + ?Sized>(model: &M, y: &State) -> Result<()> {
    if y.len() != model.dim() {
        return Err(CdError::DimensionMismatch {
            expected: model.dim(),
            actual: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_params<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Result<()> {
    if eta.len() != model.num_stats() {
        return Err(CdError::DimensionMismatch {
            expected: model.num_stats(),
            actual: eta.len(),
        });
    }
    Ok(())
}

pub fn suff_stats<M: Model + ?Sized>(model: &M, y: &State) -> Result<StatVector> {
    check_dim(model, y)?;
    let mut out = vec![0.0; model.num_stats()];
    model.write_stats(y, &mut out);
    Ok(StatVector(out))
}

/// `o(y)`: `0` or `-∞`.
pub fn offset<M: Model + ?Sized>(model: &M, y: &State) -> Result<f64> {
    check_dim(model, y)?;
    Ok(if model.is_allowed(y) {
        0.0
    } else {
        f64::NEG_INFINITY
    })
}

pub fn change_stats<M: Model + ?Sized>(model: &M, y: &State, i: usize) -> Result<StatVector> {
    check_dim(model, y)?;
    if i >= model.dim() {
        return Err(CdError::IndexOutOfRange {
            index: i,
            dim: model.dim(),
        });
    }
    let mut out = vec![0.0; model.num_stats()];
    model.write_change(y, i, &mut out);
    Ok(StatVector(out))
}

/// `η·g(y) + o(y)`.
pub fn log_unnormalized<M: Model + ?Sized>(model: &M, eta: &[f64], y: &State) -> Result<f64> {
    check_params(model, eta)?;
    let g = suff_stats(model, y)?;
    if !model.is_allowed(y) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(dot(eta, &g))
}

/// `P(Y_i = 1 | y_{\i})`.
pub fn conditional_prob<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &State,
    i: usize,
) -> Result<f64> {
    check_params(model, eta)?;
    check_dim(model, y)?;
    if i >= model.dim() {
        return Err(CdError::IndexOutOfRange {
            index: i,
            dim: model.dim(),
        });
    }
    let mut scratch = vec![0.0; model.num_stats()];
    site_prob(model, eta, y, i, &mut scratch)
}

/// Unchecked single-site conditional used on hot paths. `scratch` has length `d`.
#[inline]
pub(crate) fn site_prob<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &State,
    i: usize,
    scratch: &mut [f64],
) -> Result<f64> {
    let (zero_ok, one_ok) = if model.has_offset() {
        (model.allows(y, i, false), model.allows(y, i, true))
    } else {
        (true, true)
    };
    match (zero_ok, one_ok) {
        (false, false) => Err(CdError::DegenerateConditional { index: i }),
        (true, false) => Ok(0.0),
        (false, true) => Ok(1.0),
        (true, true) => {
            model.write_change(y, i, scratch);
            Ok(logistic(dot(eta, scratch)))
        }
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable `log(Σ exp(x_i))`; `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_stable() {
        assert_eq!(logistic(0.0), 0.5);
        for x in [-800.0, -3.0, 0.7, 40.0, 900.0] {
            let p = logistic(x);
            assert!((p + logistic(-x) - 1.0).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn log_sum_exp_handles_negative_infinity() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp([0.0, f64::NEG_INFINITY, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }
}
