use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::{BlockDistribution, ChainRecord};
use crate::error::{CdError, Result};
use crate::family::{log_sum_exp, site_prob, suff_stats, Model};
use crate::state::{DyadIndex, State};

#[inline]
pub(crate) fn gibbs_site<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    i: usize,
    scratch: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let p = site_prob(model, eta, y, i, scratch)?;
    let u: f64 = rng.random();
    y.set(i, u < p);
    Ok(())
}

/// Resamples one uniformly chosen coordinate; returns it.
pub fn step_random_scan<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    rng: &mut R,
) -> Result<usize> {
    let i = rng.random_range(0..model.dim());
    let mut scratch = vec![0.0; model.num_stats()];
    gibbs_site(model, eta, y, i, &mut scratch, rng)?;
    Ok(i)
}

/// Resamples the coordinate at `cursor` and advances the cursor, wrapping at `m`.
pub fn step_sequential_scan<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    cursor: &mut usize,
    rng: &mut R,
) -> Result<usize> {
    let i = *cursor % model.dim();
    let mut scratch = vec![0.0; model.num_stats()];
    gibbs_site(model, eta, y, i, &mut scratch, rng)?;
    *cursor = (i + 1) % model.dim();
    Ok(i)
}

/// Samples `Y_A` exactly from `q(Y_A | y_{\A})` by enumerating the block.
pub(crate) fn sample_block<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    block: &[usize],
    limit: usize,
    rng: &mut R,
) -> Result<()> {
    if block.len() > limit {
        return Err(CdError::BlockTooLarge {
            size: block.len(),
            limit,
        });
    }
    let configs = 1usize << block.len();
    let mut scratch = vec![0.0; model.num_stats()];
    let mut log_w = Vec::with_capacity(configs);
    for c in 0..configs {
        for (b, &i) in block.iter().enumerate() {
            y.set(i, (c >> b) & 1 == 1);
        }
        if model.has_offset() && !model.is_allowed(y) {
            log_w.push(f64::NEG_INFINITY);
        } else {
            model.write_stats(y, &mut scratch);
            log_w.push(eta.iter().zip(&scratch).map(|(a, b)| a * b).sum());
        }
    }
    let lse = log_sum_exp(log_w.iter().copied());
    if lse == f64::NEG_INFINITY {
        return Err(CdError::DegenerateConditional { index: block[0] });
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = configs - 1;
    for (c, lw) in log_w.iter().enumerate() {
        acc += (lw - lse).exp();
        if u < acc {
            chosen = c;
            break;
        }
    }
    // guard against rounding pushing `u` past the last positive weight
    while log_w[chosen] == f64::NEG_INFINITY {
        chosen -= 1;
    }
    for (b, &i) in block.iter().enumerate() {
        y.set(i, (chosen >> b) & 1 == 1);
    }
    Ok(())
}

/// Draws `A ~ r` and samples `Y_A` from its exact conditional; returns `A`.
pub fn step_blocked_gibbs<'a, M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    blocks: &'a BlockDistribution,
    limit: usize,
    rng: &mut R,
) -> Result<&'a [usize]> {
    let a = blocks.sample(rng);
    sample_block(model, eta, y, a, limit, rng)?;
    Ok(a)
}

/// Draws a pair from `pairs`, checks it is conditionally independent, and
/// resamples both coordinates from their single-site conditionals.
pub fn step_ci_pair<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    pairs: &BlockDistribution,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let pair = pairs.sample(rng);
    let (i, j) = (pair[0], pair[1]);
    if !model.conditionally_independent(i, j) {
        return Err(CdError::InvalidPair(i, j));
    }
    let mut scratch = vec![0.0; model.num_stats()];
    gibbs_site(model, eta, y, i, &mut scratch, rng)?;
    gibbs_site(model, eta, y, j, &mut scratch, rng)?;
    Ok((i, j))
}

/// Three single-site updates in the order `first, second, first`.
pub fn run_one_and_half_pass<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y0: &State,
    first: usize,
    second: usize,
    rng: &mut R,
) -> Result<ChainRecord> {
    let mut y = y0.clone();
    let mut scratch = vec![0.0; model.num_stats()];
    for i in [first, second, first] {
        gibbs_site(model, eta, &mut y, i, &mut scratch, rng)?;
    }
    let g_final = suff_stats(model, &y)?;
    Ok(ChainRecord {
        y0: y0.clone(),
        y_final: y,
        visited_blocks: vec![vec![first], vec![second], vec![first]],
        g_final,
    })
}

/// Node-s chain support: a uniform node and a uniform `s`-subset of its dyads.
pub fn draw_node_subset<R: Rng + ?Sized>(
    graph: &DyadIndex,
    s: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = graph.nodes();
    if s == 0 || s + 1 > n {
        return Err(CdError::InvalidConfig(format!(
            "node_s needs 1 <= s <= {}, got {s}",
            n - 1
        )));
    }
    let u = rng.random_range(0..n);
    let incident: Vec<usize> = graph.incident(u).collect();
    let mut chosen: Vec<usize> = sample_indices(rng, incident.len(), s)
        .into_iter()
        .map(|p| incident[p])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// One random-scan step restricted to `support`; returns the updated index.
pub fn step_within<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    support: &[usize],
    rng: &mut R,
) -> Result<usize> {
    let i = support[rng.random_range(0..support.len())];
    let mut scratch = vec![0.0; model.num_stats()];
    gibbs_site(model, eta, y, i, &mut scratch, rng)?;
    Ok(i)
}

pub(crate) use self::gibbs_site as gibbs_site_update;
