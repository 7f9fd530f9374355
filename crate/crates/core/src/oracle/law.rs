//! Exact transition laws of the kernels, as operators on probability vectors
//! indexed by configuration code.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{Enumeration, MATRIX_LIMIT};
use crate::error::{CdError, Result};
use crate::family::{check_dim, check_params, logistic, Model};
use crate::kernels::{BlockDistribution, KernelFamily, KernelPlan};
use crate::state::State;

/// One elementary update applied to a whole probability vector.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Op {
    Site(usize),
    Block(Vec<usize>),
    /// Single-site updates applied in order.
    Sweep(Vec<usize>),
}

impl Op {
    pub(crate) fn indices(&self) -> Vec<usize> {
        match self {
            Op::Site(i) => vec![*i],
            Op::Block(b) => b.clone(),
            Op::Sweep(s) => {
                let mut v = s.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    pub(crate) fn apply(&self, lw: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        match self {
            Op::Site(i) => {
                let mut out = vec![0.0; p.len()];
                apply_site(lw, p, *i, &mut out)?;
                Ok(out)
            }
            Op::Block(b) => apply_block(lw, p, b),
            Op::Sweep(order) => {
                let mut cur = p.to_vec();
                let mut out = vec![0.0; p.len()];
                for &i in order {
                    apply_site(lw, &cur, i, &mut out)?;
                    std::mem::swap(&mut cur, &mut out);
                }
                Ok(cur)
            }
        }
    }
}

#[inline]
fn prob_one(w0: f64, w1: f64) -> f64 {
    if w1 == f64::NEG_INFINITY {
        0.0
    } else if w0 == f64::NEG_INFINITY {
        1.0
    } else {
        logistic(w1 - w0)
    }
}

fn apply_site(lw: &[f64], p: &[f64], i: usize, out: &mut [f64]) -> Result<()> {
    let bit = 1usize << i;
    for c0 in (0..p.len()).filter(|c| c & bit == 0) {
        let c1 = c0 | bit;
        let t = p[c0] + p[c1];
        if t == 0.0 {
            out[c0] = 0.0;
            out[c1] = 0.0;
            continue;
        }
        if lw[c0] == f64::NEG_INFINITY && lw[c1] == f64::NEG_INFINITY {
            return Err(CdError::DegenerateConditional { index: i });
        }
        let p1 = prob_one(lw[c0], lw[c1]);
        out[c0] = t * (1.0 - p1);
        out[c1] = t * p1;
    }
    Ok(())
}

/// Codes of all `2^|block|` sub-configurations, placed at the block's bits.
pub(crate) fn block_offsets(block: &[usize]) -> Vec<usize> {
    (0..1usize << block.len())
        .map(|sub| {
            block
                .iter()
                .enumerate()
                .filter(|(b, _)| (sub >> b) & 1 == 1)
                .fold(0, |acc, (_, &i)| acc | (1 << i))
        })
        .collect()
}

pub(crate) fn mask_of(indices: &[usize]) -> usize {
    indices.iter().fold(0, |acc, &i| acc | (1 << i))
}

fn apply_block(lw: &[f64], p: &[f64], block: &[usize]) -> Result<Vec<f64>> {
    let mask = mask_of(block);
    let offsets = block_offsets(block);
    let mut out = vec![0.0; p.len()];
    let mut w = vec![0.0; offsets.len()];
    for rest in (0..p.len()).filter(|c| c & mask == 0) {
        let t: f64 = offsets.iter().map(|&o| p[rest | o]).sum();
        if t == 0.0 {
            continue;
        }
        for (wk, &o) in w.iter_mut().zip(&offsets) {
            *wk = lw[rest | o];
        }
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(CdError::DegenerateConditional { index: block[0] });
        }
        let z: f64 = w.iter().map(|x| (x - top).exp()).sum();
        for (wk, &o) in w.iter().zip(&offsets) {
            out[rest | o] = t * (wk - top).exp() / z;
        }
    }
    Ok(out)
}

/// `Σ w · op(p)`.
pub(crate) fn apply_mixture(lw: &[f64], mix: &[(Op, f64)], p: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; p.len()];
    for (op, w) in mix {
        for (o, v) in out.iter_mut().zip(op.apply(lw, p)?) {
            *o += w * v;
        }
    }
    Ok(out)
}

fn combinations(items: &[usize], s: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], s: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for idx in start..items.len() {
            if items.len() - idx < s - cur.len() {
                break;
            }
            cur.push(items[idx]);
            rec(items, s, idx + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, s, 0, &mut Vec::with_capacity(s), &mut out);
    out
}

/// Distribution of the fixed per-chain support for node-s and block-scan
/// kernels, with identical index sets merged.
pub(crate) fn chain_supports<M: Model + ?Sized>(
    model: &M,
    family: &KernelFamily,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    match family {
        KernelFamily::NodeS { s } => {
            let graph = model.graph().ok_or_else(|| {
                CdError::InvalidConfig("node_s requires a graph-structured model".into())
            })?;
            let n = graph.nodes();
            for u in 0..n {
                let incident: Vec<usize> = graph.incident(u).collect();
                let subsets = combinations(&incident, *s);
                let w = 1.0 / (n as f64 * subsets.len() as f64);
                for mut sub in subsets {
                    sub.sort_unstable();
                    *acc.entry(sub).or_insert(0.0) += w;
                }
            }
        }
        KernelFamily::BlockScan { blocks } => {
            for (b, w) in blocks.iter() {
                let mut sub = b.to_vec();
                sub.sort_unstable();
                *acc.entry(sub).or_insert(0.0) += w;
            }
        }
        _ => {
            return Err(CdError::InvalidConfig(
                "kernel does not fix its support per chain".into(),
            ))
        }
    }
    Ok(acc.into_iter().collect())
}

fn uniform_sites(support: &[usize]) -> Vec<(Op, f64)> {
    let w = 1.0 / support.len() as f64;
    support.iter().map(|&i| (Op::Site(i), w)).collect()
}

fn blocks_mixture(blocks: &BlockDistribution, as_pairs: bool) -> Vec<(Op, f64)> {
    blocks
        .iter()
        .map(|(b, w)| {
            let op = if as_pairs {
                Op::Sweep(b.to_vec())
            } else if b.len() == 1 {
                Op::Site(b[0])
            } else {
                Op::Block(b.to_vec())
            };
            (op, w)
        })
        .collect()
}

/// Per-step update mixture for families whose step law does not depend on
/// the step index or on a per-chain draw.
pub(crate) fn per_step_mixture(m: usize, family: &KernelFamily) -> Option<Vec<(Op, f64)>> {
    match family {
        KernelFamily::RandomScan => Some(uniform_sites(&(0..m).collect::<Vec<_>>())),
        KernelFamily::Blocked { blocks, .. } => Some(blocks_mixture(blocks, false)),
        KernelFamily::CiPair { pairs } => Some(blocks_mixture(pairs, true)),
        _ => None,
    }
}

/// The averaged one-step operator. Sequential scan with a uniform cursor
/// averages to random scan; chain-scoped kernels average over their support
/// draw; one-and-a-half pass is treated as a single three-update step.
pub(crate) fn one_step_mixture<M: Model + ?Sized>(
    model: &M,
    family: &KernelFamily,
) -> Result<(Vec<(Op, f64)>, usize)> {
    let m = model.dim();
    if let Some(mix) = per_step_mixture(m, family) {
        return Ok((mix, 1));
    }
    match family {
        KernelFamily::SequentialScan => Ok((uniform_sites(&(0..m).collect::<Vec<_>>()), 1)),
        KernelFamily::OneAndHalfPass { first, second } => {
            Ok((vec![(Op::Sweep(vec![*first, *second, *first]), 1.0)], 3))
        }
        _ => {
            let mut weight = vec![0.0; m];
            for (sub, w) in chain_supports(model, family)? {
                for &i in &sub {
                    weight[i] += w / sub.len() as f64;
                }
            }
            let mix = weight
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| (Op::Site(i), w))
                .collect();
            Ok((mix, 1))
        }
    }
}

/// Window of a sequential scan started at `s`.
pub(crate) fn sequential_window(m: usize, s: usize, k: usize) -> Vec<usize> {
    (0..k).map(|t| (s + t) % m).collect()
}

/// One piece of a kernel's `k`-step law: the law of `Y^{(k)}` given one
/// value of the kernel's discrete choice (block, start, or chain support).
#[derive(Clone, Debug)]
pub struct LawComponent {
    pub weight: f64,
    /// Indices this component can change.
    pub support: Vec<usize>,
    /// Probabilities indexed by configuration code.
    pub probs: Vec<f64>,
}

/// The exact law of `Y^{(k)}` from a fixed start, as a weighted mixture.
#[derive(Clone, Debug)]
pub struct ExactLaw {
    pub components: Vec<LawComponent>,
}

/// Moments of `g(Y^{(k)})`.
#[derive(Clone, Debug)]
pub struct LawMoments {
    pub mean: Vec<f64>,
    /// Covariance under the full mixture.
    pub cov: DMatrix<f64>,
    /// `Σ_c w_c cov_c`: the covariance left after conditioning on the
    /// kernel's discrete choice.
    pub within_cov: DMatrix<f64>,
}

impl ExactLaw {
    pub fn marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.components[0].probs.len()];
        for c in &self.components {
            for (o, p) in out.iter_mut().zip(&c.probs) {
                *o += c.weight * p;
            }
        }
        out
    }

    pub fn moments(&self, space: &Enumeration) -> LawMoments {
        let d = space.num_stats();
        let (mean, cov) = space.moments_of(&self.marginal());
        let mut within_cov = DMatrix::zeros(d, d);
        for c in &self.components {
            let (_, cc) = space.moments_of(&c.probs);
            within_cov += cc * c.weight;
        }
        LawMoments {
            mean,
            cov,
            within_cov,
        }
    }
}

fn check_start(space: &Enumeration, y0: &State) -> Result<usize> {
    let code = y0.code() as usize;
    if !space.allowed(code) {
        return Err(CdError::InvalidConfig(
            "start state is forbidden by the offset".into(),
        ));
    }
    Ok(code)
}

/// The exact law of `k` steps of `plan` started at `y0`.
pub fn exact_kernel_law<M: Model + ?Sized>(
    model: &M,
    space: &Enumeration,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
) -> Result<ExactLaw> {
    check_dim(model, y0)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    let m = model.dim();
    let start = check_start(space, y0)?;
    let lw = space.log_weights(eta);
    let mut delta = vec![0.0; space.size()];
    delta[start] = 1.0;
    let all: Vec<usize> = (0..m).collect();
    if plan.k == 0 {
        return Ok(ExactLaw {
            components: vec![LawComponent {
                weight: 1.0,
                support: Vec::new(),
                probs: delta,
            }],
        });
    }

    let components = match &plan.family {
        family @ (KernelFamily::RandomScan
        | KernelFamily::Blocked { .. }
        | KernelFamily::CiPair { .. }) => {
            let mix = per_step_mixture(m, family).expect("per-step family");
            if plan.k == 1 {
                mix.iter()
                    .map(|(op, w)| {
                        Ok(LawComponent {
                            weight: *w,
                            support: op.indices(),
                            probs: op.apply(&lw, &delta)?,
                        })
                    })
                    .collect::<Result<_>>()?
            } else {
                let mut p = delta;
                for _ in 0..plan.k {
                    p = apply_mixture(&lw, &mix, &p)?;
                }
                vec![LawComponent {
                    weight: 1.0,
                    support: all,
                    probs: p,
                }]
            }
        }
        KernelFamily::SequentialScan => (0..m)
            .map(|s| {
                let order = sequential_window(m, s, plan.k);
                let probs = Op::Sweep(order.clone()).apply(&lw, &delta)?;
                let mut support = order;
                support.sort_unstable();
                support.dedup();
                Ok(LawComponent {
                    weight: 1.0 / m as f64,
                    support,
                    probs,
                })
            })
            .collect::<Result<_>>()?,
        KernelFamily::OneAndHalfPass { first, second } => {
            let order: Vec<usize> = [*first, *second, *first]
                .into_iter()
                .take(plan.k)
                .collect();
            let mut support = order.clone();
            support.sort_unstable();
            support.dedup();
            vec![LawComponent {
                weight: 1.0,
                support,
                probs: Op::Sweep(order).apply(&lw, &delta)?,
            }]
        }
        family @ (KernelFamily::NodeS { .. } | KernelFamily::BlockScan { .. }) => {
            chain_supports(model, family)?
                .into_iter()
                .map(|(support, w)| {
                    let mix = uniform_sites(&support);
                    let mut p = delta.clone();
                    for _ in 0..plan.k {
                        p = apply_mixture(&lw, &mix, &p)?;
                    }
                    Ok(LawComponent {
                        weight: w,
                        support,
                        probs: p,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(ExactLaw { components })
}

/// A dense row-stochastic matrix over the allowed states.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    /// Allowed configuration codes, in increasing order; row/column labels.
    pub states: Vec<u64>,
    /// Number of single-site or block updates one application represents.
    pub k: usize,
    pub matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.states.binary_search(&code).ok()
    }

    /// `max_r |Σ_c P(r, c) − 1|`.
    pub fn row_sum_error(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.min()
    }
}

fn matrix_from_mixture(
    space: &Enumeration,
    lw: &[f64],
    mix: &[(Op, f64)],
    k: usize,
) -> Result<TransitionMatrix> {
    let states: Vec<u64> = (0..space.size())
        .filter(|&c| space.allowed(c))
        .map(|c| c as u64)
        .collect();
    let n = states.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut delta = vec![0.0; space.size()];
    for (r, &code) in states.iter().enumerate() {
        delta[code as usize] = 1.0;
        let row = apply_mixture(lw, mix, &delta)?;
        delta[code as usize] = 0.0;
        for (c, &to) in states.iter().enumerate() {
            matrix[(r, c)] = row[to as usize];
        }
    }
    Ok(TransitionMatrix { states, k, matrix })
}

/// The exact one-step transition matrix of `plan`, averaged over its block
/// (or cursor, or support) choice.
pub fn kernel_step_matrix<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
) -> Result<TransitionMatrix> {
    check_params(model, eta)?;
    plan.validate(model)?;
    let space = Enumeration::with_limit(model, MATRIX_LIMIT)?;
    let lw = space.log_weights(eta);
    let (mix, k) = one_step_mixture(model, &plan.family)?;
    matrix_from_mixture(&space, &lw, &mix, k)
}

/// One random-scan step confined to `support`.
pub fn support_step_matrix<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    support: &[usize],
) -> Result<TransitionMatrix> {
    check_params(model, eta)?;
    if support.is_empty() {
        return Err(CdError::InvalidConfig("empty support".into()));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= model.dim()) {
        return Err(CdError::IndexOutOfRange {
            index: i,
            dim: model.dim(),
        });
    }
    let space = Enumeration::with_limit(model, MATRIX_LIMIT)?;
    let lw = space.log_weights(eta);
    matrix_from_mixture(&space, &lw, &uniform_sites(support), 1)
}

/// `max |P(y→y′) q(y) − P(y′→y) q(y′)|` over allowed pairs.
pub fn detailed_balance_error<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    tm: &TransitionMatrix,
) -> Result<f64> {
    let dist = Enumeration::with_limit(model, MATRIX_LIMIT)?.distribution(eta)?;
    let q: Vec<f64> = dist.log_probs.iter().map(|l| l.exp()).collect();
    if dist.states != tm.states {
        return Err(CdError::InvalidConfig(
            "transition matrix does not match the model's state space".into(),
        ));
    }
    let n = q.len();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            worst = worst.max((tm.matrix[(a, b)] * q[a] - tm.matrix[(b, a)] * q[b]).abs());
        }
    }
    Ok(worst)
}

/// `KL(p ‖ q) = Σ p log(p/q)`; `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total
}

/// `KL(δ_{y0} M^k ‖ q)` for `k = 1..=k_max`, with `M` the averaged one-step
/// operator of [`kernel_step_matrix`].
pub fn kl_decay_curve<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
    k_max: usize,
) -> Result<Vec<f64>> {
    check_dim(model, y0)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    let space = Enumeration::new(model)?;
    let start = check_start(&space, y0)?;
    let lw = space.log_weights(eta);
    let q = space.distribution(eta)?.full_probs();
    let (mix, _) = one_step_mixture(model, &plan.family)?;
    let mut p = vec![0.0; space.size()];
    p[start] = 1.0;
    let mut curve = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        p = apply_mixture(&lw, &mix, &p)?;
        curve.push(kl_divergence(&p, &q));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BlockDistribution;
    use crate::models::BinaryPairwiseModel;

    #[test]
    fn random_scan_m2_at_zero() {
        let model = BinaryPairwiseModel::independent(2).unwrap();
        let tm = kernel_step_matrix(&model, &[0.0], &KernelPlan::random_scan(1).unwrap()).unwrap();
        for r in 0..4usize {
            for c in 0..4usize {
                let hamming = (r ^ c).count_ones();
                let expect = match hamming {
                    0 => 0.5,
                    1 => 0.25,
                    _ => 0.0,
                };
                assert!((tm.matrix[(r, c)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn block_operator_is_the_exact_conditional() {
        let model = BinaryPairwiseModel::cycle(4).unwrap();
        let eta = [0.3, -0.7];
        let space = Enumeration::new(&model).unwrap();
        let q = space.distribution(&eta).unwrap().full_probs();
        let plan =
            KernelPlan::blocked(BlockDistribution::uniform(vec![vec![0, 1, 2]]).unwrap(), 1)
                .unwrap();
        let y0 = State::parse("0111").unwrap();
        let law = exact_kernel_law(&model, &space, &eta, &plan, &y0).unwrap();
        let p = law.marginal();
        // codes sharing y_3 = 1 with the start
        let z: f64 = (0..16).filter(|c| c & 8 != 0).map(|c| q[c]).sum();
        for c in 0..16 {
            let expect = if c & 8 != 0 { q[c] / z } else { 0.0 };
            assert!((p[c] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(&[0, 1, 2, 3, 4], 2).len(), 10);
        assert_eq!(combinations(&[3, 4], 2), vec![vec![3, 4]]);
    }
}
