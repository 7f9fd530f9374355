use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::step::{draw_node_subset, gibbs_site_update, sample_block};
use super::{KernelFamily, KernelPlan};
use crate::error::{CdError, Result};
use crate::family::{check_dim, check_params, Model, StatVector};
use crate::state::State;

/// One chain's trajectory summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    pub y0: State,
    pub y_final: State,
    /// `B_1, …, B_k`: indices eligible to change at each step.
    pub visited_blocks: Vec<Vec<usize>>,
    pub g_final: StatVector,
}

impl ChainRecord {
    /// `∪ B_i`, sorted.
    pub fn support(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.visited_blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// SplitMix64 finaliser; mixes a master seed with a tag into a fresh seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator for chain `chain` under `seed`: a ChaCha8 key from the
/// seed with the chain index as stream id, so chains never share a stream.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Runs one chain of `plan.k` steps from `y0`. With `record = false` the
/// returned record has an empty `visited_blocks`.
pub fn run_chain<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
    rng: &mut R,
    record: bool,
) -> Result<ChainRecord> {
    let m = model.dim();
    let mut y = y0.clone();
    let mut scratch = vec![0.0; model.num_stats()];
    let mut visited: Vec<Vec<usize>> = if record {
        Vec::with_capacity(plan.k)
    } else {
        Vec::new()
    };
    let mut note = |b: &[usize]| {
        if record {
            visited.push(b.to_vec());
        }
    };
    match &plan.family {
        KernelFamily::RandomScan => {
            for _ in 0..plan.k {
                let i = rng.random_range(0..m);
                gibbs_site_update(model, eta, &mut y, i, &mut scratch, rng)?;
                note(&[i]);
            }
        }
        KernelFamily::SequentialScan => {
            let mut cursor = rng.random_range(0..m);
            for _ in 0..plan.k {
                gibbs_site_update(model, eta, &mut y, cursor, &mut scratch, rng)?;
                note(&[cursor]);
                cursor = (cursor + 1) % m;
            }
        }
        KernelFamily::Blocked { blocks, limit } => {
            for _ in 0..plan.k {
                let a = blocks.sample(rng);
                sample_block(model, eta, &mut y, a, *limit, rng)?;
                note(a);
            }
        }
        KernelFamily::CiPair { pairs } => {
            for _ in 0..plan.k {
                let p = pairs.sample(rng);
                if !model.conditionally_independent(p[0], p[1]) {
                    return Err(CdError::InvalidPair(p[0], p[1]));
                }
                gibbs_site_update(model, eta, &mut y, p[0], &mut scratch, rng)?;
                gibbs_site_update(model, eta, &mut y, p[1], &mut scratch, rng)?;
                note(p);
            }
        }
        KernelFamily::OneAndHalfPass { first, second } => {
            for &i in [first, second, first].iter().take(plan.k) {
                gibbs_site_update(model, eta, &mut y, *i, &mut scratch, rng)?;
                note(&[*i]);
            }
        }
        KernelFamily::NodeS { s } => {
            let graph = model.graph().ok_or_else(|| {
                CdError::InvalidConfig("node_s requires a graph-structured model".into())
            })?;
            let support = draw_node_subset(graph, *s, rng)?;
            run_within(model, eta, &mut y, &support, plan.k, &mut scratch, rng, &mut note)?;
        }
        KernelFamily::BlockScan { blocks } => {
            let support = blocks.sample(rng).to_vec();
            run_within(model, eta, &mut y, &support, plan.k, &mut scratch, rng, &mut note)?;
        }
    }
    let mut g = vec![0.0; model.num_stats()];
    model.write_stats(&y, &mut g);
    Ok(ChainRecord {
        y0: y0.clone(),
        y_final: y,
        visited_blocks: visited,
        g_final: StatVector(g),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_within<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &mut State,
    support: &[usize],
    k: usize,
    scratch: &mut [f64],
    rng: &mut R,
    note: &mut impl FnMut(&[usize]),
) -> Result<()> {
    for _ in 0..k {
        let i = support[rng.random_range(0..support.len())];
        gibbs_site_update(model, eta, y, i, scratch, rng)?;
        note(&[i]);
    }
    Ok(())
}

/// Sample moments of `g(Y^{(k)})` over independent chains started at `y0`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSample {
    pub mean: StatVector,
    /// Sample covariance (divisor `n − 1`).
    pub cov: DMatrix<f64>,
    /// Monte-Carlo standard error of each mean component.
    pub se: Vec<f64>,
    pub n_chains: usize,
    pub records: Vec<ChainRecord>,
}

/// Runs `n_chains` independent chains of `plan` from `y0`. Chain `c` uses
/// [`chain_rng`]`(seed, c)`, so results do not depend on thread scheduling.
pub fn sample_kernel<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
    n_chains: usize,
    seed: u64,
    keep_records: bool,
) -> Result<KernelSample> {
    check_dim(model, y0)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    if n_chains < 2 {
        return Err(CdError::InvalidConfig("need at least two chains".into()));
    }
    let records: Vec<ChainRecord> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(seed, c as u64);
            run_chain(model, eta, plan, y0, &mut rng, keep_records)
        })
        .collect::<Result<_>>()?;

    let d = model.num_stats();
    let n = n_chains as f64;
    let mut mean = vec![0.0; d];
    for r in &records {
        for (acc, g) in mean.iter_mut().zip(r.g_final.iter()) {
            *acc += g;
        }
    }
    mean.iter_mut().for_each(|x| *x /= n);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in &records {
        for a in 0..d {
            let da = r.g_final[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (r.g_final[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            cov[(a, b)] /= n - 1.0;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let se: Vec<f64> = (0..d).map(|a| (cov[(a, a)] / n).sqrt()).collect();
    let records = if keep_records {
        records
    } else {
        Vec::new()
    };
    Ok(KernelSample {
        mean: StatVector(mean),
        cov,
        se,
        n_chains,
        records,
    })
}
