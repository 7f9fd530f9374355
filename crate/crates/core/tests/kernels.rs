mod common;

use cdfit::kernels::{
    chain_rng, run_chain, sample_kernel, step_blocked_gibbs, step_random_scan,
    step_sequential_scan, DEFAULT_BLOCK_LIMIT,
};
use cdfit::oracle::{
    detailed_balance_error, exact_kernel_law, kernel_step_matrix, kl_decay_curve, kl_divergence,
    support_step_matrix, Enumeration,
};
use cdfit::{
    BinaryPairwiseModel, BlockDistribution, CdError, ErgmModel, ErgmStat, KernelFamily,
    KernelPlan, Model, State,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_ergm(cap: Option<usize>) -> ErgmModel {
    ErgmModel::new(
        5,
        vec![ErgmStat::Edges, ErgmStat::Isolates, ErgmStat::NodeMatch, ErgmStat::Gwesp],
        Some(vec![0, 0, 1, 1, 0]),
        Some(2.0 / 3.0),
        cap,
    )
    .unwrap()
}

fn blocks6() -> BlockDistribution {
    BlockDistribution::new(
        vec![vec![0, 1], vec![2, 3, 4], vec![5, 0], vec![1, 4]],
        vec![1.0, 2.0, 1.0, 0.5],
    )
    .unwrap()
}

fn ci_pairs(model: &BinaryPairwiseModel) -> BlockDistribution {
    BlockDistribution::pairs_where(model.dim(), |i, j| model.conditionally_independent(i, j))
        .unwrap()
}

#[test]
fn random_scan_at_zero_resamples_a_fair_coin() {
    let model = BinaryPairwiseModel::chain(4).unwrap();
    let mut rng = chain_rng(1, 0);
    let n = 40_000;
    let mut ones = 0;
    for _ in 0..n {
        let mut y = State::parse("0000").unwrap();
        let i = step_random_scan(&model, &[0.0, 0.0], &mut y, &mut rng).unwrap();
        assert!(y.diff_indices(&State::zeros(4)).iter().all(|&j| j == i));
        ones += usize::from(y.get(i));
    }
    let frac = ones as f64 / n as f64;
    assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{frac}");
}

#[test]
fn blocked_at_zero_is_uniform_over_the_block() {
    let model = BinaryPairwiseModel::cycle(5).unwrap();
    let blocks = BlockDistribution::uniform(vec![vec![1, 2, 3]]).unwrap();
    let mut rng = chain_rng(2, 0);
    let n = 32_000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let mut y = State::zeros(5);
        step_blocked_gibbs(&model, &[0.0, 0.0], &mut y, &blocks, DEFAULT_BLOCK_LIMIT, &mut rng)
            .unwrap();
        let c = (y.get(1) as usize) | (y.get(2) as usize) << 1 | (y.get(3) as usize) << 2;
        counts[c] += 1;
    }
    let sd = (n as f64 / 8.0 * 7.0 / 8.0).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 / 8.0).abs() < 4.0 * sd);
    }
    let big = BlockDistribution::uniform(vec![(0..13).collect()]).unwrap();
    let wide = BinaryPairwiseModel::independent(13).unwrap();
    let mut y = State::zeros(13);
    let err = step_blocked_gibbs(&wide, &[0.0], &mut y, &big, DEFAULT_BLOCK_LIMIT, &mut rng);
    assert!(matches!(err, Err(CdError::BlockTooLarge { .. })));
}

#[test]
fn sequential_scan_wraps_and_covers() {
    let model = BinaryPairwiseModel::cycle(5).unwrap();
    let mut rng = chain_rng(0, 0);
    let mut y = State::zeros(5);
    let mut cursor = 4;
    let a = step_sequential_scan(&model, &[0.0, 0.0], &mut y, &mut cursor, &mut rng).unwrap();
    let b = step_sequential_scan(&model, &[0.0, 0.0], &mut y, &mut cursor, &mut rng).unwrap();
    assert_eq!((a, b), (4, 0));

    let plan = KernelPlan::sequential_scan(5).unwrap();
    for c in 0..20 {
        let rec = run_chain(&model, &[0.1, 0.2], &plan, &y, &mut chain_rng(9, c), true).unwrap();
        assert_eq!(rec.support(), vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn single_step_kernels_satisfy_detailed_balance() {
    let model = BinaryPairwiseModel::ising(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (0, 4)])
        .unwrap();
    let eta = [-0.3, 0.8];
    let plans = [
        KernelPlan::random_scan(1).unwrap(),
        KernelPlan::blocked(
            BlockDistribution::new(vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 0]], vec![1.0, 2.0, 3.0])
                .unwrap(),
            1,
        )
        .unwrap(),
        KernelPlan::ci_pair(ci_pairs(&model), 1).unwrap(),
    ];
    for plan in &plans {
        let tm = kernel_step_matrix(&model, &eta, plan).unwrap();
        assert!(tm.row_sum_error() < 1e-14, "{plan}");
        assert!(tm.min_entry() >= 0.0);
        let err = detailed_balance_error(&model, &eta, &tm).unwrap();
        assert!(err < 1e-12, "{plan}: {err:e}");
    }

    let ergm = small_ergm(Some(3));
    let eta = [-0.5, 0.4, 0.6, 0.3];
    let tm = kernel_step_matrix(&ergm, &eta, &KernelPlan::random_scan(1).unwrap()).unwrap();
    assert!(detailed_balance_error(&ergm, &eta, &tm).unwrap() < 1e-12);
    // Node-s restricted to each support it can draw.
    let mut rng = chain_rng(4, 0);
    for _ in 0..6 {
        let support = cdfit::kernels::draw_node_subset(ergm.dyads(), 3, &mut rng).unwrap();
        let tm = support_step_matrix(&ergm, &eta, &support).unwrap();
        assert!(detailed_balance_error(&ergm, &eta, &tm).unwrap() < 1e-12);
    }
}

#[test]
fn kl_to_the_target_never_increases() {
    let model = BinaryPairwiseModel::cycle(8).unwrap();
    let eta = [-0.2, 0.7];
    let y0 = State::parse("11110000").unwrap();
    let plans = [
        KernelPlan::random_scan(1).unwrap(),
        KernelPlan::blocked(
            BlockDistribution::uniform(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 0]]).unwrap(),
            1,
        )
        .unwrap(),
    ];
    for plan in &plans {
        let curve = kl_decay_curve(&model, &eta, plan, &y0, 400).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{plan}");
        }
        assert!(curve[399] < 1e-8, "{plan}: {}", curve[399]);
    }
}

#[test]
fn one_step_kl_matches_direct_sum() {
    let model = BinaryPairwiseModel::independent(3).unwrap();
    let y0 = State::parse("101").unwrap();
    let kl = kl_decay_curve(&model, &[0.0], &KernelPlan::random_scan(1).unwrap(), &y0, 1).unwrap()[0];
    // From 101 one step reaches 101 w.p. 1/2 and each single flip w.p. 1/6.
    let q = 1.0 / 8.0;
    let direct = 0.5 * (0.5f64 / q).ln() + 3.0 * (1.0 / 6.0) * ((1.0 / 6.0) / q).ln();
    assert!((kl - direct).abs() < 1e-14);
    assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
    assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]), 2f64.ln());
}

#[test]
fn one_and_half_pass_law_is_the_composed_matrices() {
    let model = BinaryPairwiseModel::chain(4).unwrap();
    let eta = [0.3, -0.9];
    let y0 = State::parse("0110").unwrap();
    let plan = KernelPlan::one_and_half_pass(1, 2).unwrap();
    let space = Enumeration::new(&model).unwrap();
    let law = exact_kernel_law(&model, &space, &eta, &plan, &y0).unwrap().marginal();

    let first = support_step_matrix(&model, &eta, &[1]).unwrap();
    let second = support_step_matrix(&model, &eta, &[2]).unwrap();
    let composed: DMatrix<f64> = &first.matrix * &second.matrix * &first.matrix;
    let row = first.index_of(y0.code()).unwrap();
    for (c, &code) in first.states.iter().enumerate() {
        assert!((composed[(row, c)] - law[code as usize]).abs() < 1e-14);
    }

    let zero = exact_kernel_law(&model, &space, &[0.0, 0.0], &plan, &y0).unwrap().marginal();
    for (code, p) in zero.iter().enumerate() {
        let touches_pair = (code ^ y0.code() as usize) & !0b0110 == 0;
        let want = if touches_pair { 0.25 } else { 0.0 };
        assert!((p - want).abs() < 1e-14);
    }
}

#[test]
fn sampled_mean_matches_exact_law() {
    let model = common::chord6();
    let eta = [-0.4, 0.6];
    let y0 = common::chord6_obs();
    let space = Enumeration::new(&model).unwrap();
    let plans = [
        KernelPlan::random_scan(5).unwrap(),
        KernelPlan::sequential_scan(4).unwrap(),
        KernelPlan::blocked(blocks6(), 3).unwrap(),
        KernelPlan::ci_pair(ci_pairs(&model), 2).unwrap(),
        KernelPlan::block_scan(blocks6(), 6).unwrap(),
    ];
    for (t, plan) in plans.iter().enumerate() {
        let exact = exact_kernel_law(&model, &space, &eta, plan, &y0).unwrap().moments(&space);
        let s = sample_kernel(&model, &eta, plan, &y0, 8000, 17 + t as u64, false).unwrap();
        for j in 0..2 {
            let z = (s.mean[j] - exact.mean[j]).abs() / s.se[j];
            assert!(z < 4.0, "{plan} stat {j}: z = {z}");
        }
        assert!((s.cov[(0, 1)] - s.cov[(1, 0)]).abs() == 0.0);
        assert!(s.cov.clone().symmetric_eigenvalues().min() >= -1e-12);
    }

    let ergm = small_ergm(Some(3));
    let eta = [-0.5, 0.4, 0.6, 0.3];
    let y0 = ergm.dyads().state_from_edges(&[(0, 1), (1, 2), (3, 4)]).unwrap();
    let space = Enumeration::new(&ergm).unwrap();
    let plan = KernelPlan::node_s(3, 6).unwrap();
    let exact = exact_kernel_law(&ergm, &space, &eta, &plan, &y0).unwrap().moments(&space);
    let s = sample_kernel(&ergm, &eta, &plan, &y0, 8000, 5, false).unwrap();
    for j in 0..4 {
        assert!((s.mean[j] - exact.mean[j]).abs() < 4.0 * s.se[j].max(1e-12), "stat {j}");
    }
}

#[test]
fn zero_steps_leave_the_start() {
    let model = common::chord6();
    let y0 = common::chord6_obs();
    let plan = KernelPlan {
        family: KernelFamily::RandomScan,
        k: 0,
    };
    let s = sample_kernel(&model, &[0.5, 0.5], &plan, &y0, 10, 0, false).unwrap();
    assert_eq!(s.mean.0, vec![3.0, 2.0]);
    assert!(s.cov.iter().all(|&c| c == 0.0));
}

#[test]
fn node_s_revisits_match_occupancy() {
    let ergm = ErgmModel::new(12, vec![ErgmStat::Edges], None, None, None).unwrap();
    let plan = KernelPlan::node_s(5, 50).unwrap();
    let y0 = State::zeros(ergm.dim());
    let chains = 4000;
    let s = sample_kernel(&ergm, &[-1.0], &plan, &y0, chains, 21, true).unwrap();
    let mut revisits = Vec::with_capacity(chains);
    for rec in &s.records {
        let support = rec.support();
        assert!(support.len() <= 5);
        let (i, j) = ergm.dyads().endpoints(support[0]);
        let hub = support
            .iter()
            .map(|&d| ergm.dyads().endpoints(d))
            .fold(vec![i, j], |mut acc, (a, b)| {
                acc.retain(|&u| u == a || u == b);
                acc
            });
        assert!(!hub.is_empty(), "support not incident to one node");
        revisits.push((50 - support.len()) as f64);
    }
    // Distinct dyads among 50 uniform draws from 5.
    let expected = 50.0 - 5.0 * (1.0 - (1.0f64 - 0.2).powi(50));
    let mean = revisits.iter().sum::<f64>() / chains as f64;
    assert!((mean - expected).abs() < 1e-3, "{mean} vs {expected}");

    let full = KernelPlan::node_s(11, 3).unwrap();
    assert!(full.validate(&ergm).is_ok());
    assert!(KernelPlan::node_s(12, 3).unwrap().validate(&ergm).is_err());
}

#[test]
fn invalid_ci_pair_is_rejected() {
    let model = BinaryPairwiseModel::cycle(5).unwrap();
    let bad = BlockDistribution::uniform(vec![vec![0, 1]]).unwrap();
    assert!(matches!(
        KernelPlan::ci_pair(bad, 1).unwrap().validate(&model),
        Err(CdError::InvalidPair(0, 1))
    ));
}

#[test]
fn chains_are_reproducible() {
    let model = common::chord6();
    let plan = KernelPlan::blocked(blocks6(), 7).unwrap();
    let y0 = common::chord6_obs();
    let a = sample_kernel(&model, &[0.1, 0.3], &plan, &y0, 64, 99, true).unwrap();
    let b = sample_kernel(&model, &[0.1, 0.3], &plan, &y0, 64, 99, true).unwrap();
    assert_eq!(a, b);
    let c = sample_kernel(&model, &[0.1, 0.3], &plan, &y0, 64, 100, true).unwrap();
    assert_ne!(a.records, c.records);
}

fn any_plan() -> impl Strategy<Value = KernelPlan> {
    (0usize..5, 1usize..12).prop_map(|(f, k)| match f {
        0 => KernelPlan::random_scan(k).unwrap(),
        1 => KernelPlan::sequential_scan(k).unwrap(),
        2 => KernelPlan::blocked(blocks6(), k).unwrap(),
        3 => KernelPlan::block_scan(blocks6(), k).unwrap(),
        _ => KernelPlan::one_and_half_pass(2, 5).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chains_stay_inside_their_support(
        plan in any_plan(),
        bits in proptest::collection::vec(any::<bool>(), 6),
        eta in proptest::collection::vec(-2.0f64..2.0, 2),
        seed in any::<u64>(),
    ) {
        let model = common::chord6();
        let y0 = State::from_bits(&bits);
        let rec = run_chain(&model, &eta, &plan, &y0, &mut chain_rng(seed, 0), true).unwrap();
        prop_assert_eq!(rec.visited_blocks.len(), plan.k);
        let support = rec.support();
        for i in rec.y_final.diff_indices(&y0) {
            prop_assert!(support.contains(&i));
        }
        prop_assert_eq!(rec.g_final, cdfit::suff_stats(&model, &rec.y_final).unwrap());
        let again = run_chain(&model, &eta, &plan, &y0, &mut chain_rng(seed, 0), true).unwrap();
        prop_assert_eq!(again.y_final, rec.y_final);
    }

    #[test]
    fn capped_chains_never_leave_the_allowed_set(seed in any::<u64>(), k in 1usize..40) {
        let ergm = small_ergm(Some(2));
        let y0 = ergm.dyads().state_from_edges(&[(0, 1), (2, 3)]).unwrap();
        let plan = KernelPlan::node_s(4, k).unwrap();
        let rec = run_chain(&ergm, &[2.0, 0.0, 0.0, 0.5], &plan, &y0, &mut chain_rng(seed, 1), false).unwrap();
        prop_assert!(ergm.is_allowed(&rec.y_final));
    }
}
