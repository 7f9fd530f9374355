//! The last-step law `q*` given the chain's support, and the augmented and
//! combined divergences built on it.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::law::{block_offsets, chain_supports, mask_of, per_step_mixture, sequential_window, Op};
use super::{kl_divergence, Enumeration};
use crate::error::{CdError, Result};
use crate::family::{check_dim, check_params, Model, NaturalParams};
use crate::kernels::{KernelFamily, KernelPlan};
use crate::optim::{newton_maximize, Evaluation, NewtonOptions, NewtonStatus};
use crate::state::State;

type Joint = BTreeMap<usize, Vec<f64>>;

fn add_into(table: &mut Joint, mask: usize, w: f64, v: &[f64]) {
    let slot = table
        .entry(mask)
        .or_insert_with(|| vec![0.0; v.len()]);
    for (s, x) in slot.iter_mut().zip(v) {
        *s += w * x;
    }
}

fn union_dp(
    lw: &[f64],
    mix: &[(Op, f64)],
    k: usize,
    start: &[f64],
    restrict: Option<usize>,
) -> Result<Joint> {
    let mix: Vec<(&Op, f64, usize)> = mix
        .iter()
        .map(|(op, w)| (op, *w, mask_of(&op.indices())))
        .filter(|(_, _, bm)| restrict.is_none_or(|r| bm & !r == 0))
        .collect();
    let mut table: Joint = BTreeMap::new();
    table.insert(0, start.to_vec());
    for _ in 0..k {
        let mut next: Joint = BTreeMap::new();
        for (mask, v) in &table {
            for (op, w, bm) in &mix {
                add_into(&mut next, mask | bm, *w, &op.apply(lw, v)?);
            }
        }
        table = next;
    }
    Ok(table)
}

/// Joint law of `(a, Y^{(k)})` for a chain from `start`: for every support
/// mask `a = ∪B_i`, the sub-probability vector over codes. With `restrict`,
/// only trajectories whose blocks stay inside the mask are followed.
fn support_joint<M: Model + ?Sized>(
    model: &M,
    lw: &[f64],
    plan: &KernelPlan,
    start: usize,
    restrict: Option<usize>,
) -> Result<Joint> {
    let m = model.dim();
    let mut delta = vec![0.0; lw.len()];
    delta[start] = 1.0;
    let mut table = Joint::new();
    if plan.k == 0 {
        table.insert(0, delta);
        return Ok(table);
    }
    let inside = |mask: usize| restrict.is_none_or(|r| mask & !r == 0);
    match &plan.family {
        family @ (KernelFamily::RandomScan
        | KernelFamily::Blocked { .. }
        | KernelFamily::CiPair { .. }) => {
            let mix = per_step_mixture(m, family).expect("per-step family");
            table = union_dp(lw, &mix, plan.k, &delta, restrict)?;
        }
        KernelFamily::SequentialScan => {
            for s in 0..m {
                let order = sequential_window(m, s, plan.k);
                let mask = mask_of(&order);
                if inside(mask) {
                    let v = Op::Sweep(order).apply(lw, &delta)?;
                    add_into(&mut table, mask, 1.0 / m as f64, &v);
                }
            }
        }
        KernelFamily::OneAndHalfPass { first, second } => {
            let order: Vec<usize> = [*first, *second, *first]
                .into_iter()
                .take(plan.k)
                .collect();
            let mask = mask_of(&order);
            if inside(mask) {
                let v = Op::Sweep(order).apply(lw, &delta)?;
                add_into(&mut table, mask, 1.0, &v);
            }
        }
        family @ (KernelFamily::NodeS { .. } | KernelFamily::BlockScan { .. }) => {
            for (support, w) in chain_supports(model, family)? {
                let frac = 1.0 / support.len() as f64;
                let mix: Vec<(Op, f64)> = support.iter().map(|&i| (Op::Site(i), frac)).collect();
                for (mask, v) in union_dp(lw, &mix, plan.k, &delta, restrict)? {
                    add_into(&mut table, mask, w, &v);
                }
            }
        }
    }
    Ok(table)
}

/// `q*(Y_a | y0, a)` together with the support probability `π(a)`.
#[derive(Clone, Debug)]
pub struct QStar {
    /// The support `a`, sorted.
    pub support: Vec<usize>,
    pub pi: f64,
    /// Indexed by sub-configuration: bit `b` is the value of `Y_{support[b]}`.
    pub probs: Vec<f64>,
}

impl QStar {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Sub-configuration index of `y` restricted to the support.
    pub fn index_of(&self, y: &State) -> usize {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, &i)| y.get(i))
            .fold(0, |acc, (b, _)| acc | (1 << b))
    }
}

fn sorted_support(m: usize, a: &[usize]) -> Result<Vec<usize>> {
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    if let Some(&i) = a.iter().find(|&&i| i >= m) {
        return Err(CdError::IndexOutOfRange { index: i, dim: m });
    }
    if a.is_empty() {
        return Err(CdError::InvalidConfig("empty support".into()));
    }
    Ok(a)
}

fn q_star_from(
    model: &(impl Model + ?Sized),
    lw: &[f64],
    plan: &KernelPlan,
    start: usize,
    support: &[usize],
) -> Result<QStar> {
    let mask = mask_of(support);
    let joint = support_joint(model, lw, plan, start, Some(mask))?;
    let entry = joint.get(&mask).ok_or(CdError::UnreachableSupport)?;
    let pi: f64 = entry.iter().sum();
    if pi <= 0.0 {
        return Err(CdError::UnreachableSupport);
    }
    let rest = start & !mask;
    let probs = block_offsets(support)
        .iter()
        .map(|o| entry[rest | o] / pi)
        .collect();
    Ok(QStar {
        support: support.to_vec(),
        pi,
        probs,
    })
}

/// The exact law of the chain's last state on `a`, given that the chain's
/// support is exactly `a`; coordinates outside `a` stay at `y0`.
pub fn q_star_distribution<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
    a: &[usize],
) -> Result<QStar> {
    check_dim(model, y0)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    let support = sorted_support(model.dim(), a)?;
    let space = Enumeration::new(model)?;
    let lw = space.log_weights(eta);
    q_star_from(model, &lw, plan, y0.code() as usize, &support)
}

/// `q(Y_a | y_{\a})` over the sub-configurations of `a` (sorted), in the
/// indexing used by [`QStar`].
pub fn block_conditional<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    y: &State,
    a: &[usize],
) -> Result<Vec<f64>> {
    check_dim(model, y)?;
    check_params(model, eta)?;
    let support = sorted_support(model.dim(), a)?;
    let space = Enumeration::new(model)?;
    let q = space.distribution(eta)?.full_probs();
    let rest = y.code() as usize & !mask_of(&support);
    let block: Vec<f64> = block_offsets(&support).iter().map(|o| q[rest | o]).collect();
    let z: f64 = block.iter().sum();
    if z <= 0.0 {
        return Err(CdError::DegenerateConditional { index: support[0] });
    }
    Ok(block.into_iter().map(|p| p / z).collect())
}

/// Both forms of the augmented divergence.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedDivergence {
    /// `KL(p‖q) − KL(p_m‖q_m) + Σ_y p(y) log(q_c/q*)`.
    pub three_term: f64,
    /// `KL(p ‖ q* p_m)`.
    pub single_kl: f64,
}

impl AugmentedDivergence {
    pub fn value(&self) -> f64 {
        self.single_kl
    }
}

struct Pair {
    space_q: Enumeration,
    lw_q: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn prepare<P: Model + ?Sized, Q: Model + ?Sized>(
    model_p: &P,
    model_q: &Q,
    eta_p: &[f64],
    eta_q: &[f64],
) -> Result<Pair> {
    check_params(model_p, eta_p)?;
    check_params(model_q, eta_q)?;
    if model_p.dim() != model_q.dim() {
        return Err(CdError::DimensionMismatch {
            expected: model_q.dim(),
            actual: model_p.dim(),
        });
    }
    let p = Enumeration::new(model_p)?.distribution(eta_p)?.full_probs();
    let space_q = Enumeration::new(model_q)?;
    let q = space_q.distribution(eta_q)?.full_probs();
    let lw_q = space_q.log_weights(eta_q);
    Ok(Pair {
        space_q,
        lw_q,
        p,
        q,
    })
}

fn augmented_from<Q: Model + ?Sized>(
    model_q: &Q,
    pair: &Pair,
    plan: &KernelPlan,
    support: &[usize],
    y0: &State,
) -> Result<AugmentedDivergence> {
    let (p, q) = (&pair.p, &pair.q);
    let mask = mask_of(support);
    let offsets = block_offsets(support);
    let start_a = y0.code() as usize & mask;
    let mut kl_m_p = vec![0.0; 0];
    let mut kl_m_q = vec![0.0; 0];
    let mut third = 0.0;
    let mut single = 0.0;
    for rest in (0..pair.space_q.size()).filter(|c| c & mask == 0) {
        let pm: f64 = offsets.iter().map(|o| p[rest | o]).sum();
        let qm: f64 = offsets.iter().map(|o| q[rest | o]).sum();
        kl_m_p.push(pm);
        kl_m_q.push(qm);
        if pm == 0.0 {
            continue;
        }
        let qs = q_star_from(model_q, &pair.lw_q, plan, rest | start_a, support)?;
        for (sub, o) in offsets.iter().enumerate() {
            let py = p[rest | o];
            if py == 0.0 {
                continue;
            }
            let qstar = qs.probs[sub];
            if qstar <= 0.0 || qm <= 0.0 {
                return Ok(AugmentedDivergence {
                    three_term: f64::INFINITY,
                    single_kl: f64::INFINITY,
                });
            }
            let qc = q[rest | o] / qm;
            third += py * (qc / qstar).ln();
            single += py * (py / (qstar * pm)).ln();
        }
    }
    let three_term = kl_divergence(p, q) - kl_divergence(&kl_m_p, &kl_m_q) + third;
    Ok(AugmentedDivergence {
        three_term,
        single_kl: single,
    })
}

/// `d_a(p, q)` for the chain support `a`. The chain's start on `a` is the
/// fixed reference `y0_a`; off `a` it is clamped to each `y_{\a}` in turn.
pub fn augmented_divergence<P: Model + ?Sized, Q: Model + ?Sized>(
    model_p: &P,
    model_q: &Q,
    eta_p: &[f64],
    eta_q: &[f64],
    plan: &KernelPlan,
    a: &[usize],
    y0: &State,
) -> Result<AugmentedDivergence> {
    check_dim(model_q, y0)?;
    plan.validate(model_q)?;
    let support = sorted_support(model_q.dim(), a)?;
    let pair = prepare(model_p, model_q, eta_p, eta_q)?;
    augmented_from(model_q, &pair, plan, &support, y0)
}

/// `cd(p, q) = Σ_A π(A) d_A(p, q)` and its terms.
#[derive(Clone, Debug)]
pub struct CombinedDivergence {
    pub value: f64,
    /// `(A, π(A), d_A)` for every support with positive probability.
    pub terms: Vec<(Vec<usize>, f64, f64)>,
}

/// Support probabilities `π(a)` of the kernel; they do not depend on the
/// state for any family here, so they are read off a chain from `y0`.
pub fn support_probabilities<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y0: &State,
) -> Result<Vec<(Vec<usize>, f64)>> {
    check_dim(model, y0)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    let space = Enumeration::new(model)?;
    let lw = space.log_weights(eta);
    let joint = support_joint(model, &lw, plan, y0.code() as usize, None)?;
    Ok(joint
        .into_iter()
        .map(|(mask, v)| {
            let support = (0..model.dim()).filter(|i| mask >> i & 1 == 1).collect();
            (support, v.iter().sum::<f64>())
        })
        .filter(|(_, pi)| *pi > 0.0)
        .collect())
}

pub fn combined_divergence<P: Model + ?Sized, Q: Model + ?Sized>(
    model_p: &P,
    model_q: &Q,
    eta_p: &[f64],
    eta_q: &[f64],
    plan: &KernelPlan,
    y0: &State,
) -> Result<CombinedDivergence> {
    let supports = support_probabilities(model_q, eta_q, plan, y0)?;
    let pair = prepare(model_p, model_q, eta_p, eta_q)?;
    let mut value = 0.0;
    let mut terms = Vec::with_capacity(supports.len());
    for (a, pi) in supports {
        let d = augmented_from(model_q, &pair, plan, &a, y0)?.value();
        value += pi * d;
        terms.push((a, pi, d));
    }
    Ok(CombinedDivergence { value, terms })
}

/// `E_π[log q*(y_a | y, a)]` for a chain started at the observation `y`:
/// the objective whose maximiser the kernel's special cases identify.
pub fn qstar_log_likelihood<M: Model + ?Sized>(
    model: &M,
    eta: &[f64],
    plan: &KernelPlan,
    y: &State,
) -> Result<f64> {
    check_dim(model, y)?;
    check_params(model, eta)?;
    plan.validate(model)?;
    let space = Enumeration::new(model)?;
    let lw = space.log_weights(eta);
    let code = y.code() as usize;
    let joint = support_joint(model, &lw, plan, code, None)?;
    let mut total = 0.0;
    for v in joint.values() {
        let pi: f64 = v.iter().sum();
        if pi > 0.0 {
            total += pi * (v[code] / pi).ln();
        }
    }
    Ok(total)
}

/// Maximises [`qstar_log_likelihood`] over `η` by Newton's method on central
/// finite differences. Intended for small `d`; the result is accurate to
/// roughly `1e-7`.
pub fn qstar_argmax<M: Model + ?Sized>(
    model: &M,
    plan: &KernelPlan,
    y: &State,
    start: &[f64],
) -> Result<NaturalParams> {
    check_params(model, start)?;
    let d = start.len();
    let f = |eta: &[f64]| qstar_log_likelihood(model, eta, plan, y);
    let grad = |eta: &[f64]| -> Result<Vec<f64>> {
        let h = 1e-4;
        let mut x = eta.to_vec();
        (0..d)
            .map(|j| {
                x[j] = eta[j] + h;
                let up = f(&x)?;
                x[j] = eta[j] - h;
                let down = f(&x)?;
                x[j] = eta[j];
                Ok((up - down) / (2.0 * h))
            })
            .collect()
    };
    let objective = |eta: &[f64]| -> Result<Evaluation> {
        let h = 1e-3;
        let gradient = grad(eta)?;
        let mut information = DMatrix::zeros(d, d);
        let mut x = eta.to_vec();
        for j in 0..d {
            x[j] = eta[j] + h;
            let up = grad(&x)?;
            x[j] = eta[j] - h;
            let down = grad(&x)?;
            x[j] = eta[j];
            for i in 0..d {
                information[(i, j)] = -(up[i] - down[i]) / (2.0 * h);
            }
        }
        let information = (&information + information.transpose()) * 0.5;
        Ok(Evaluation {
            value: f(eta)?,
            gradient,
            information,
        })
    };
    let opts = NewtonOptions {
        grad_tol: 1e-9,
        max_iters: 100,
        max_step: 2.0,
        bound: 100.0,
    };
    let out = newton_maximize(objective, start, &opts)?;
    match out.status {
        NewtonStatus::Converged => Ok(NaturalParams(out.x)),
        NewtonStatus::Diverged => Err(CdError::MleDoesNotExist(
            "q* likelihood is maximised at infinity".into(),
        )),
        other => Err(CdError::Numerical(format!(
            "q* likelihood maximisation stopped: {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BlockDistribution;
    use crate::models::BinaryPairwiseModel;

    #[test]
    fn single_block_q_star_is_the_conditional() {
        let model = BinaryPairwiseModel::cycle(5).unwrap();
        let eta = [0.2, 0.6];
        let y0 = State::parse("10110").unwrap();
        let blocks = BlockDistribution::uniform(vec![vec![1, 2], vec![3, 4]]).unwrap();
        let plan = KernelPlan::blocked(blocks, 1).unwrap();
        let qs = q_star_distribution(&model, &eta, &plan, &y0, &[1, 2]).unwrap();
        let qc = block_conditional(&model, &eta, &y0, &[1, 2]).unwrap();
        assert!((qs.pi - 0.5).abs() < 1e-15);
        for (a, b) in qs.probs.iter().zip(&qc) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn unreachable_support() {
        let model = BinaryPairwiseModel::cycle(4).unwrap();
        let plan = KernelPlan::random_scan(1).unwrap();
        let y0 = State::zeros(4);
        assert_eq!(
            q_star_distribution(&model, &[0.0, 0.0], &plan, &y0, &[0, 1]).unwrap_err(),
            CdError::UnreachableSupport
        );
    }

    #[test]
    fn random_scan_support_probabilities_sum_to_one() {
        let model = BinaryPairwiseModel::chain(4).unwrap();
        let plan = KernelPlan::random_scan(3).unwrap();
        let pis = support_probabilities(&model, &[0.1, 0.1], &plan, &State::zeros(4)).unwrap();
        let total: f64 = pis.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-14);
        // three distinct sites out of four: 4 supports, each 4·3·2/64 · ... = 6/64
        let triple: f64 = pis.iter().filter(|(a, _)| a.len() == 3).map(|(_, p)| p).sum();
        assert!((triple - 24.0 / 64.0).abs() < 1e-14);
    }
}
