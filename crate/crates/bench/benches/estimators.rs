use cdfit::estimators::{cd_newton_fit, composite_fit, mple_fit};
use cdfit::models::SyntheticNetwork;
use cdfit::{
    BinaryPairwiseModel, BlockDistribution, ErgmModel, ErgmStat, ExpectationMode, FitConfig,
    KernelPlan, Method, State,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ergm_mple(c: &mut Criterion) {
    let spec = SyntheticNetwork {
        nodes: 30,
        grades: 2,
        density: 0.1,
        homophily: 3.0,
        degree_cap: Some(10),
    };
    let (y, attrs) = spec.generate(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let model = ErgmModel::new(
        30,
        vec![ErgmStat::Edges, ErgmStat::Isolates, ErgmStat::NodeMatch, ErgmStat::Gwesp],
        Some(attrs.codes),
        Some(2.0 / 3.0),
        Some(10),
    )
    .unwrap();
    c.bench_function("ergm30 mple", |b| b.iter(|| mple_fit(&model, &y).unwrap()));
}

fn small_exact_fits(c: &mut Criterion) {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
    let model = BinaryPairwiseModel::ising(6, &edges).unwrap();
    let y = State::parse("111000").unwrap();
    let blocks =
        BlockDistribution::uniform(vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![1, 4]]).unwrap();
    c.bench_function("chord6 composite", |b| {
        b.iter(|| composite_fit(&model, &y, &blocks).unwrap())
    });
    let cfg = FitConfig::new(Method::CdNewton)
        .with_plan(KernelPlan::blocked(blocks.clone(), 1).unwrap())
        .with_mode(ExpectationMode::Exact);
    c.bench_function("chord6 exact cd_newton blocked k=1", |b| {
        b.iter(|| cd_newton_fit(&model, &y, &cfg).unwrap())
    });
}

criterion_group!(benches, ergm_mple, small_exact_fits);
criterion_main!(benches);
