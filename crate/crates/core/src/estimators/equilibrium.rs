use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::pseudo::{check_observed, symmetrize};
use crate::error::{CdError, Result};
use crate::family::{check_params, Model};
use crate::kernels::chain_rng;
use crate::state::State;

/// Long random-scan runs used to estimate `μ(η)` where enumeration is out of
/// reach. A sweep is `m` single-site updates.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumOptions {
    pub n_chains: usize,
    pub burn_in_sweeps: usize,
    pub samples: usize,
    pub sweeps_per_sample: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            n_chains: 16,
            burn_in_sweeps: 50,
            samples: 200,
            sweeps_per_sample: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumSample {
    pub mean: Vec<f64>,
    /// Pooled covariance of `g` over all retained samples.
    pub cov: DMatrix<f64>,
    /// Standard error of `mean` from the spread of per-chain means.
    pub se: Vec<f64>,
    /// Every retained `g` value, chain by chain.
    pub draws: Vec<Vec<f64>>,
}

/// Estimates `E_η[g]` by random-scan Gibbs from `y0`.
pub fn equilibrium_moments<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y0: &State,
    opts: &EquilibriumOptions,
    seed: u64,
) -> Result<EquilibriumSample> {
    check_observed(model, y0)?;
    check_params(model, eta)?;
    if opts.n_chains < 2 || opts.samples == 0 || opts.sweeps_per_sample == 0 {
        return Err(CdError::InvalidConfig(
            "equilibrium run needs two or more chains and at least one sample".into(),
        ));
    }
    let m = model.dim();
    let d = model.num_stats();
    let per_chain: Vec<Vec<Vec<f64>>> = (0..opts.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(seed, c as u64);
            let mut y = y0.clone();
            let mut scratch = vec![0.0; d];
            let mut sweep = |y: &mut State, rng: &mut rand_chacha::ChaCha8Rng| -> Result<()> {
                for _ in 0..m {
                    let i = rng.random_range(0..m);
                    crate::kernels::gibbs_site_update(model, eta, y, i, &mut scratch, rng)?;
                }
                Ok(())
            };
            for _ in 0..opts.burn_in_sweeps {
                sweep(&mut y, &mut rng)?;
            }
            let mut out = Vec::with_capacity(opts.samples);
            for _ in 0..opts.samples {
                for _ in 0..opts.sweeps_per_sample {
                    sweep(&mut y, &mut rng)?;
                }
                let mut g = vec![0.0; d];
                model.write_stats(&y, &mut g);
                out.push(g);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let chains = opts.n_chains as f64;
    let chain_means: Vec<Vec<f64>> = per_chain
        .iter()
        .map(|draws| {
            let mut mu = vec![0.0; d];
            for g in draws {
                for (a, x) in mu.iter_mut().zip(g) {
                    *a += x;
                }
            }
            mu.iter_mut().for_each(|a| *a /= draws.len() as f64);
            mu
        })
        .collect();
    let mut mean = vec![0.0; d];
    for mu in &chain_means {
        for (a, x) in mean.iter_mut().zip(mu) {
            *a += x / chains;
        }
    }
    let se = (0..d)
        .map(|j| {
            let ss: f64 = chain_means.iter().map(|mu| (mu[j] - mean[j]).powi(2)).sum();
            (ss / (chains - 1.0) / chains).sqrt()
        })
        .collect();
    let draws: Vec<Vec<f64>> = per_chain.into_iter().flatten().collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for g in &draws {
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += (g[a] - mean[a]) * (g[b] - mean[b]);
            }
        }
    }
    cov /= (draws.len() as f64 - 1.0).max(1.0);
    symmetrize(&mut cov);
    Ok(EquilibriumSample {
        mean,
        cov,
        se,
        draws,
    })
}
