//! Gibbs-type transition kernels and the chain sampler behind `E_T[g]`.

mod sample;
mod step;

pub use sample::{chain_rng, derive_seed, run_chain, sample_kernel, ChainRecord, KernelSample};
pub use step::{
    draw_node_subset, run_one_and_half_pass, step_blocked_gibbs, step_ci_pair, step_random_scan,
    step_sequential_scan, step_within,
};
pub(crate) use step::gibbs_site_update;

use std::fmt;

use rand::Rng;

use crate::error::{CdError, Result};
use crate::family::Model;

/// Default bound on blocked-Gibbs block size (2^12 configurations).
pub const DEFAULT_BLOCK_LIMIT: usize = 12;

/// A probability distribution `r(·)` over index blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDistribution {
    blocks: Vec<Vec<usize>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BlockDistribution {
    /// Weights are normalised; blocks must be non-empty with distinct indices.
    pub fn new(blocks: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != weights.len() {
            return Err(CdError::InvalidConfig(
                "block distribution needs one positive weight per block".into(),
            ));
        }
        for b in &blocks {
            if b.is_empty() {
                return Err(CdError::InvalidConfig("empty block".into()));
            }
            let mut sorted = b.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != b.len() {
                return Err(CdError::InvalidConfig(format!("repeated index in block {b:?}")));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(CdError::InvalidConfig("block weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(BlockDistribution {
            blocks,
            weights,
            cumulative,
        })
    }

    pub fn uniform(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let w = vec![1.0; blocks.len()];
        BlockDistribution::new(blocks, w)
    }

    /// Uniform over `{0}, {1}, …, {m-1}`.
    pub fn singletons(m: usize) -> Result<Self> {
        BlockDistribution::uniform((0..m).map(|i| vec![i]).collect())
    }

    /// Uniform over all unordered pairs `{i, j}` accepted by `keep`.
    pub fn pairs_where(m: usize, mut keep: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut blocks = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if keep(i, j) {
                    blocks.push(vec![i, j]);
                }
            }
        }
        BlockDistribution::uniform(blocks)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.blocks
            .iter()
            .map(Vec::as_slice)
            .zip(self.weights.iter().copied())
    }

    pub fn max_block(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.blocks.len() - 1);
        &self.blocks[k]
    }

    /// Per-index selection weight `Σ_{A ∋ i} r(A)`.
    pub fn coverage(&self, m: usize) -> Vec<f64> {
        let mut cover = vec![0.0; m];
        for (b, w) in self.iter() {
            for &i in b {
                cover[i] += w;
            }
        }
        cover
    }
}

/// The transition kernel families.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    /// Each step resamples one uniformly chosen coordinate.
    RandomScan,
    /// Start at a uniform cursor, then resample coordinates in order, wrapping.
    SequentialScan,
    /// Each step draws `A ~ r` and samples `Y_A` exactly from its conditional.
    Blocked {
        blocks: BlockDistribution,
        limit: usize,
    },
    /// Each step draws a conditionally independent pair and resamples both.
    CiPair { pairs: BlockDistribution },
    /// Resample `first`, then `second`, then `first` again.
    OneAndHalfPass { first: usize, second: usize },
    /// Per chain: pick a node and `s` of its dyads; then random scan within them.
    NodeS { s: usize },
    /// Per chain: draw a block `A ~ r`; then random scan within `A`.
    BlockScan { blocks: BlockDistribution },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::RandomScan => "random_scan",
            KernelFamily::SequentialScan => "sequential_scan",
            KernelFamily::Blocked { .. } => "blocked_gibbs",
            KernelFamily::CiPair { .. } => "ci_pair",
            KernelFamily::OneAndHalfPass { .. } => "one_and_half_pass",
            KernelFamily::NodeS { .. } => "node_s",
            KernelFamily::BlockScan { .. } => "block_scan",
        }
    }

    /// Whether the chain's support is fixed once at the start of the chain.
    pub fn chain_scoped_support(&self) -> bool {
        matches!(self, KernelFamily::NodeS { .. } | KernelFamily::BlockScan { .. })
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::NodeS { s } => write!(f, "node_s(s={s})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A kernel family plus the number of steps `k` per chain.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPlan {
    pub family: KernelFamily,
    pub k: usize,
}

impl KernelPlan {
    pub fn new(family: KernelFamily, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(CdError::InvalidConfig("kernel needs k >= 1 steps".into()));
        }
        if let KernelFamily::OneAndHalfPass { .. } = family {
            if k != 3 {
                return Err(CdError::InvalidConfig(
                    "one-and-a-half pass makes exactly 3 updates".into(),
                ));
            }
        }
        Ok(KernelPlan { family, k })
    }

    pub fn random_scan(k: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::RandomScan, k)
    }

    pub fn sequential_scan(k: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::SequentialScan, k)
    }

    pub fn blocked(blocks: BlockDistribution, k: usize) -> Result<Self> {
        KernelPlan::new(
            KernelFamily::Blocked {
                blocks,
                limit: DEFAULT_BLOCK_LIMIT,
            },
            k,
        )
    }

    pub fn ci_pair(pairs: BlockDistribution, k: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::CiPair { pairs }, k)
    }

    pub fn one_and_half_pass(first: usize, second: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::OneAndHalfPass { first, second }, 3)
    }

    pub fn node_s(s: usize, k: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::NodeS { s }, k)
    }

    pub fn block_scan(blocks: BlockDistribution, k: usize) -> Result<Self> {
        KernelPlan::new(KernelFamily::BlockScan { blocks }, k)
    }

    /// Checks the family's fields against `model`. `k = 0` is tolerated here
    /// and means "no steps".
    pub fn validate<M: Model + ?Sized>(&self, model: &M) -> Result<()> {
        let m = model.dim();
        let check_blocks = |blocks: &BlockDistribution| -> Result<()> {
            for (b, _) in blocks.iter() {
                if let Some(&i) = b.iter().find(|&&i| i >= m) {
                    return Err(CdError::IndexOutOfRange { index: i, dim: m });
                }
            }
            Ok(())
        };
        match &self.family {
            KernelFamily::RandomScan | KernelFamily::SequentialScan => Ok(()),
            KernelFamily::Blocked { blocks, limit } => {
                check_blocks(blocks)?;
                if blocks.max_block() > *limit {
                    return Err(CdError::BlockTooLarge {
                        size: blocks.max_block(),
                        limit: *limit,
                    });
                }
                Ok(())
            }
            KernelFamily::CiPair { pairs } => {
                check_blocks(pairs)?;
                for (b, _) in pairs.iter() {
                    if b.len() != 2 {
                        return Err(CdError::InvalidConfig(format!(
                            "ci_pair blocks must be pairs, got {b:?}"
                        )));
                    }
                    if !model.conditionally_independent(b[0], b[1]) {
                        return Err(CdError::InvalidPair(b[0], b[1]));
                    }
                }
                Ok(())
            }
            KernelFamily::OneAndHalfPass { first, second } => {
                for &i in [first, second] {
                    if i >= m {
                        return Err(CdError::IndexOutOfRange { index: i, dim: m });
                    }
                }
                if first == second {
                    return Err(CdError::InvalidConfig(
                        "one-and-a-half pass needs two distinct coordinates".into(),
                    ));
                }
                Ok(())
            }
            KernelFamily::NodeS { s } => {
                let graph = model.graph().ok_or_else(|| {
                    CdError::InvalidConfig("node_s requires a graph-structured model".into())
                })?;
                if *s == 0 || *s + 1 > graph.nodes() {
                    return Err(CdError::InvalidConfig(format!(
                        "node_s needs 1 <= s <= {}, got {s}",
                        graph.nodes() - 1
                    )));
                }
                Ok(())
            }
            KernelFamily::BlockScan { blocks } => check_blocks(blocks),
        }
    }
}

impl fmt::Display for KernelPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} k={}", self.family, self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BinaryPairwiseModel, ErgmModel, ErgmStat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_sampling_follows_weights() {
        let r = BlockDistribution::new(vec![vec![0], vec![1, 2]], vec![1.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..20_000).filter(|_| r.sample(&mut rng).len() == 2).count();
        let frac = hits as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
        assert_eq!(r.coverage(3), vec![0.25, 0.75, 0.75]);
    }

    #[test]
    fn plan_validation() {
        let cycle = BinaryPairwiseModel::cycle(6).unwrap();
        assert!(KernelPlan::new(KernelFamily::RandomScan, 0).is_err());
        assert!(KernelPlan::one_and_half_pass(0, 0)
            .unwrap()
            .validate(&cycle)
            .is_err());
        let adjacent = BlockDistribution::uniform(vec![vec![0, 1]]).unwrap();
        assert_eq!(
            KernelPlan::ci_pair(adjacent, 1).unwrap().validate(&cycle),
            Err(CdError::InvalidPair(0, 1))
        );
        let big = BlockDistribution::uniform(vec![(0..6).collect()]).unwrap();
        let plan = KernelPlan::new(
            KernelFamily::Blocked {
                blocks: big,
                limit: 4,
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            plan.validate(&cycle),
            Err(CdError::BlockTooLarge { size: 6, limit: 4 })
        ));
        assert!(KernelPlan::node_s(2, 5).unwrap().validate(&cycle).is_err());
        let ergm = ErgmModel::new(5, vec![ErgmStat::Edges], None, None, None).unwrap();
        assert!(KernelPlan::node_s(4, 5).unwrap().validate(&ergm).is_ok());
        assert!(KernelPlan::node_s(5, 5).unwrap().validate(&ergm).is_err());
    }
}
