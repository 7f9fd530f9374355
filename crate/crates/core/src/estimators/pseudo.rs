use nalgebra::DMatrix;

use super::{FitResult, FitStatus, Method, TraceEntry};
use crate::error::{CdError, Result};
use crate::family::{check_dim, dot, logistic, suff_stats, Model, NaturalParams, StatVector};
use crate::kernels::{BlockDistribution, DEFAULT_BLOCK_LIMIT};
use crate::optim::{newton_maximize, Evaluation, NewtonOptions, NewtonStatus};
use crate::state::State;

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn check_observed<M: Model + ?Sized>(model: &M, y: &State) -> Result<()> {
    check_dim(model, y)?;
    if !model.is_allowed(y) {
        return Err(CdError::InvalidConfig(
            "observed state is forbidden by the offset".into(),
        ));
    }
    Ok(())
}

struct SiteRow {
    y: bool,
    delta: Vec<f64>,
    weight: f64,
}

/// Per-site change statistics at `y`. Sites whose conditional is pinned by
/// the offset contribute nothing and are dropped.
fn site_design<M: Model + ?Sized>(
    model: &M,
    y: &State,
    weights: Option<&[f64]>,
) -> Result<Vec<SiteRow>> {
    check_observed(model, y)?;
    if let Some(w) = weights {
        if w.len() != model.dim() {
            return Err(CdError::DimensionMismatch {
                expected: model.dim(),
                actual: w.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(model.dim());
    for i in 0..model.dim() {
        let weight = weights.map_or(1.0, |w| w[i]);
        if weight == 0.0 {
            continue;
        }
        if model.has_offset() && !(model.allows(y, i, false) && model.allows(y, i, true)) {
            continue;
        }
        let mut delta = vec![0.0; model.num_stats()];
        model.write_change(y, i, &mut delta);
        rows.push(SiteRow {
            y: y.get(i),
            delta,
            weight,
        });
    }
    Ok(rows)
}

fn pl_evaluate(rows: &[SiteRow], eta: &[f64]) -> Evaluation {
    let d = eta.len();
    let mut value = 0.0;
    let mut gradient = vec![0.0; d];
    let mut information = DMatrix::zeros(d, d);
    for r in rows {
        let s = dot(eta, &r.delta);
        let p = logistic(s);
        value -= r.weight * if r.y { softplus(-s) } else { softplus(s) };
        let resid = if r.y { 1.0 - p } else { -p };
        let v = r.weight * p * (1.0 - p);
        for a in 0..d {
            gradient[a] += r.weight * resid * r.delta[a];
            for b in 0..=a {
                information[(a, b)] += v * r.delta[a] * r.delta[b];
            }
        }
    }
    symmetrize(&mut information);
    Evaluation {
        value,
        gradient,
        information,
    }
}

pub(crate) fn symmetrize(h: &mut DMatrix<f64>) {
    for a in 0..h.nrows() {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
}

/// `Σ_i w_i log q(Y_i = y_i | y_{\i})` with its gradient and information.
pub fn pseudo_log_likelihood<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &State,
    weights: Option<&[f64]>,
) -> Result<Evaluation> {
    crate::family::check_params(model, eta)?;
    Ok(pl_evaluate(&site_design(model, y, weights)?, eta))
}

fn newton_fit(
    method: Method,
    d: usize,
    start: &[f64],
    mut objective: impl FnMut(&[f64]) -> Evaluation,
    g_obs: &StatVector,
    total_weight: f64,
) -> Result<FitResult> {
    if start.len() != d {
        return Err(CdError::DimensionMismatch {
            expected: d,
            actual: start.len(),
        });
    }
    let opts = NewtonOptions {
        grad_tol: 1e-10,
        max_iters: 200,
        max_step: 10.0,
        bound: 100.0,
    };
    let out = newton_maximize(|x| Ok(objective(x)), start, &opts)?;
    let eval = objective(&out.x);
    let mut status = match out.status {
        NewtonStatus::Converged => FitStatus::Converged,
        NewtonStatus::Diverged => FitStatus::Boundary,
        NewtonStatus::MaxIters | NewtonStatus::Stalled => FitStatus::MaxIters,
    };
    // Saturated conditionals flatten the objective long before the iterates
    // hit the bound; compare curvature with that at the start.
    if status == FitStatus::Converged {
        let scale = objective(start).information.symmetric_eigenvalues().max();
        let smallest = eval.information.clone().symmetric_eigenvalues().min();
        if !(smallest > 1e-8 * scale.max(f64::MIN_POSITIVE)) {
            status = FitStatus::Boundary;
        }
    }
    let mu_hat: Vec<f64> = g_obs
        .iter()
        .zip(&eval.gradient)
        .map(|(g, grad)| g - grad / total_weight)
        .collect();
    Ok(FitResult {
        method,
        eta_hat: NaturalParams(out.x),
        mu_hat: StatVector(mu_hat),
        cov_hat: eval.information / total_weight,
        mu_se: vec![0.0; d],
        eta_cov: DMatrix::zeros(d, d),
        trace: out
            .trace
            .into_iter()
            .map(|(eta, residual)| TraceEntry { eta, residual })
            .collect(),
        status,
        iterations: out.iterations,
    })
}

/// Maximum pseudo-likelihood by Newton's method from `η = 0`. This is the
/// logistic regression of each `y_i` on its change statistics.
pub fn mple_fit<M: Model + ?Sized>(model: &M, y: &State) -> Result<FitResult> {
    weighted_mple_fit(model, y, None)
}

/// Pseudo-likelihood with per-site weights `w_i`.
pub fn weighted_mple_fit<M: Model + ?Sized>(
    model: &M,
    y: &State,
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    let rows = site_design(model, y, weights)?;
    let total: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => model.dim() as f64,
    };
    let g_obs = suff_stats(model, y)?;
    let d = model.num_stats();
    newton_fit(
        Method::Mple,
        d,
        &vec![0.0; d],
        |eta| pl_evaluate(&rows, eta),
        &g_obs,
        total,
    )
}

struct BlockDesign {
    weight: f64,
    /// Statistics of every block configuration, `2^|A| × d` row-major.
    stats: Vec<f64>,
    allowed: Vec<bool>,
    observed: usize,
}

fn block_designs<M: Model + ?Sized>(
    model: &M,
    y: &State,
    blocks: &BlockDistribution,
) -> Result<Vec<BlockDesign>> {
    check_observed(model, y)?;
    let d = model.num_stats();
    let mut designs = Vec::with_capacity(blocks.len());
    for (block, weight) in blocks.iter() {
        if block.len() > DEFAULT_BLOCK_LIMIT {
            return Err(CdError::BlockTooLarge {
                size: block.len(),
                limit: DEFAULT_BLOCK_LIMIT,
            });
        }
        if let Some(&i) = block.iter().find(|&&i| i >= model.dim()) {
            return Err(CdError::IndexOutOfRange {
                index: i,
                dim: model.dim(),
            });
        }
        let configs = 1usize << block.len();
        let mut stats = vec![0.0; configs * d];
        let mut allowed = vec![true; configs];
        let mut z = y.clone();
        let mut observed = 0;
        for (b, &i) in block.iter().enumerate() {
            if y.get(i) {
                observed |= 1 << b;
            }
        }
        for c in 0..configs {
            for (b, &i) in block.iter().enumerate() {
                z.set(i, (c >> b) & 1 == 1);
            }
            model.write_stats(&z, &mut stats[c * d..(c + 1) * d]);
            allowed[c] = !model.has_offset() || model.is_allowed(&z);
        }
        designs.push(BlockDesign {
            weight,
            stats,
            allowed,
            observed,
        });
    }
    Ok(designs)
}

fn composite_evaluate(designs: &[BlockDesign], eta: &[f64]) -> Evaluation {
    let d = eta.len();
    let mut value = 0.0;
    let mut gradient = vec![0.0; d];
    let mut information = DMatrix::zeros(d, d);
    let mut logw = Vec::new();
    for des in designs {
        let configs = des.allowed.len();
        logw.clear();
        logw.extend((0..configs).map(|c| {
            if des.allowed[c] {
                dot(eta, &des.stats[c * d..(c + 1) * d])
            } else {
                f64::NEG_INFINITY
            }
        }));
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logw.iter().map(|l| (l - top).exp()).sum();
        let lse = top + z.ln();
        value += des.weight * (logw[des.observed] - lse);
        let mut mean = vec![0.0; d];
        for c in 0..configs {
            let p = (logw[c] - lse).exp();
            for (m, g) in mean.iter_mut().zip(&des.stats[c * d..(c + 1) * d]) {
                *m += p * g;
            }
        }
        let obs = &des.stats[des.observed * d..(des.observed + 1) * d];
        for a in 0..d {
            gradient[a] += des.weight * (obs[a] - mean[a]);
        }
        for c in 0..configs {
            let p = (logw[c] - lse).exp();
            if p == 0.0 {
                continue;
            }
            let g = &des.stats[c * d..(c + 1) * d];
            for a in 0..d {
                for b in 0..=a {
                    information[(a, b)] += des.weight * p * (g[a] - mean[a]) * (g[b] - mean[b]);
                }
            }
        }
    }
    symmetrize(&mut information);
    Evaluation {
        value,
        gradient,
        information,
    }
}

/// `Σ_A r(A) log q(Y_A = y_A | y_{\A})` with gradient `g(y) − E_T[g]` and
/// information `Σ_A r(A) cov(g | y_{\A})`.
pub fn composite_objective<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &State,
    blocks: &BlockDistribution,
) -> Result<Evaluation> {
    crate::family::check_params(model, eta)?;
    Ok(composite_evaluate(&block_designs(model, y, blocks)?, eta))
}

/// Maximum composite likelihood by Newton's method from `η = 0`.
pub fn composite_fit<M: Model + ?Sized>(
    model: &M,
    y: &State,
    blocks: &BlockDistribution,
) -> Result<FitResult> {
    let designs = block_designs(model, y, blocks)?;
    let g_obs = suff_stats(model, y)?;
    let d = model.num_stats();
    newton_fit(
        Method::Composite,
        d,
        &vec![0.0; d],
        |eta| composite_evaluate(&designs, eta),
        &g_obs,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BinaryPairwiseModel;

    #[test]
    fn balanced_independent_sites_give_zero() {
        let model = BinaryPairwiseModel::independent(6).unwrap();
        let y = State::parse("110100").unwrap();
        let fit = mple_fit(&model, &y).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!(fit.eta_hat[0].abs() < 1e-12);
    }

    #[test]
    fn separation_is_a_boundary() {
        let model = BinaryPairwiseModel::independent(4).unwrap();
        let fit = mple_fit(&model, &State::parse("1111").unwrap()).unwrap();
        assert_eq!(fit.status, FitStatus::Boundary);
    }

    #[test]
    fn singleton_composite_is_pseudo_likelihood() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
        let model = BinaryPairwiseModel::ising(6, &edges).unwrap();
        let y = State::parse("111000").unwrap();
        let pl = mple_fit(&model, &y).unwrap();
        let cl = composite_fit(&model, &y, &BlockDistribution::singletons(6).unwrap()).unwrap();
        assert_eq!(pl.status, FitStatus::Converged);
        for (a, b) in pl.eta_hat.iter().zip(cl.eta_hat.iter()) {
            assert!((a - b).abs() < 1e-9, "{:?} {:?}", pl.eta_hat, cl.eta_hat);
        }
    }
}
