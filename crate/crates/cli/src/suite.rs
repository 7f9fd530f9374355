//! The verification suite run by `cdfit verify` and by the acceptance tests.
//! Every check reduces to `measured ≤ tolerance`.

use cdfit::estimators::{
    cd_fixed_point_residual, cd_newton_fit, cd_sgd_fit, composite_fit, mple_fit,
    weighted_mple_fit,
};
use cdfit::oracle::{
    augmented_divergence, combined_divergence, detailed_balance_error, exact_mean_params,
    exact_mle, kernel_step_matrix, kl_decay_curve, log_partition, qstar_argmax,
    support_probabilities, support_step_matrix,
};
use cdfit::{
    suff_stats, BinaryPairwiseModel, BlockDistribution, ErgmModel, ErgmStat, ExpectationMode,
    FitConfig, FitStatus, KernelPlan, Method, Model, State,
};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(group: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            group,
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
    /// `(kernel, KL after k = 1, 2, ... steps)`.
    pub kl_curves: Vec<(String, Vec<f64>)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn group(&self, group: &str) -> impl Iterator<Item = &Check> {
        let group = group.to_owned();
        self.checks.iter().filter(move |c| c.group == group)
    }
}

pub const GROUPS: [&str; 6] = [
    "oracle",
    "detailed_balance",
    "kl_monotonicity",
    "divergence",
    "equivalence",
    "learning",
];

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn chord6() -> BinaryPairwiseModel {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
    BinaryPairwiseModel::ising(6, &edges).expect("valid model")
}

fn chord6_obs() -> State {
    State::parse("111000").expect("valid state")
}

fn pairwise8() -> BinaryPairwiseModel {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (0, 4), (2, 6)];
    BinaryPairwiseModel::ising(8, &edges).expect("valid model")
}

fn ergm(n: usize, cap: Option<usize>) -> ErgmModel {
    let grades = (0..n as u32).map(|i| i % 2).collect();
    ErgmModel::new(
        n,
        vec![ErgmStat::Edges, ErgmStat::Isolates, ErgmStat::NodeMatch, ErgmStat::Gwesp],
        Some(grades),
        Some(2.0 / 3.0),
        cap,
    )
    .expect("valid model")
}

fn model4() -> BinaryPairwiseModel {
    BinaryPairwiseModel::ising(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).expect("valid model")
}

fn composite_blocks() -> BlockDistribution {
    BlockDistribution::uniform(vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![1, 4]])
        .expect("valid blocks")
}

fn ci_pairs<M: Model + ?Sized>(model: &M) -> Result<BlockDistribution> {
    Ok(BlockDistribution::pairs_where(model.dim(), |i, j| {
        model.conditionally_independent(i, j)
    })?)
}

fn exact_cfg(method: Method, plan: KernelPlan) -> FitConfig {
    FitConfig {
        max_iters: 50,
        ..FitConfig::new(method)
            .with_plan(plan)
            .with_mode(ExpectationMode::Exact)
    }
}

/// Worst relative gap between a central-difference gradient of `log z` and the
/// enumerated mean.
fn log_partition_gradient_gap<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Result<f64> {
    let mu = exact_mean_params(model, eta)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut x = eta.to_vec();
    for j in 0..eta.len() {
        x[j] = eta[j] + h;
        let up = log_partition(model, &x)?;
        x[j] = eta[j] - h;
        let down = log_partition(model, &x)?;
        x[j] = eta[j];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - mu[j]).abs() / mu[j].abs().max(1.0));
    }
    Ok(worst)
}

pub fn oracle_consistency() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let pw = pairwise8();
    let er = ergm(6, Some(4));
    let cases: [(&str, &dyn Model, Vec<f64>); 3] = [
        ("pairwise m=8", &pw, vec![-0.4, 0.3]),
        ("ergm n=6", &er, vec![-1.0, 0.5, 0.4, 0.3]),
        ("ergm n=6 uncapped", &ergm(6, None), vec![-0.5, -0.3, 0.2, 0.1]),
    ];
    for (label, model, eta) in cases {
        out.push(Check::new(
            "oracle",
            format!("grad log z = mu ({label})"),
            log_partition_gradient_gap(model, &eta)?,
            1e-6,
        ));
    }
    let mle_cases: [(&str, &dyn Model, State); 2] = [
        ("pairwise m=8", &pw, State::parse("11010010")?),
        ("chord m=6", &chord6(), chord6_obs()),
    ];
    for (label, model, y) in mle_cases {
        let g = suff_stats(model, &y)?;
        let eta = exact_mle(model, &g)?;
        let mu = exact_mean_params(model, &eta)?;
        out.push(Check::new(
            "oracle",
            format!("exact_mle residual ({label})"),
            max_abs_diff(&g, &mu),
            1e-10,
        ));
    }
    Ok(out)
}

pub fn detailed_balance() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let pw = pairwise8();
    let eta = [0.3, -0.5];
    let plans = [
        KernelPlan::random_scan(1)?,
        KernelPlan::blocked(
            BlockDistribution::new(vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7], vec![1, 6]], vec![1.0, 2.0, 1.0, 0.5])?,
            1,
        )?,
        KernelPlan::ci_pair(ci_pairs(&pw)?, 1)?,
    ];
    for plan in &plans {
        let tm = kernel_step_matrix(&pw, &eta, plan)?;
        out.push(Check::new(
            "detailed_balance",
            format!("{} (pairwise m=8)", plan.family.name()),
            detailed_balance_error(&pw, &eta, &tm)?,
            1e-12,
        ));
    }
    // Node-s chains are confined to dyads at one node; each such support
    // gives its own reversible step.
    let er = ergm(4, None);
    let eta = [-0.5, 0.4, 0.3, 0.2];
    let index = er.dyads();
    let mut worst: f64 = 0.0;
    for u in 0..er.nodes() {
        let star: Vec<usize> = index.incident(u).collect();
        for s in 1..=star.len() {
            let tm = support_step_matrix(&er, &eta, &star[..s])?;
            worst = worst.max(detailed_balance_error(&er, &eta, &tm)?);
        }
    }
    out.push(Check::new(
        "detailed_balance",
        "node_s supports (ergm n=4)",
        worst,
        1e-12,
    ));
    Ok(out)
}

pub fn kl_monotonicity(steps: usize) -> Result<(Vec<Check>, Vec<(String, Vec<f64>)>)> {
    let mut checks = Vec::new();
    let mut curves = Vec::new();
    let pw = pairwise8();
    let y0 = State::parse("11100000")?;
    let eta = [0.2, 0.4];
    let er = ergm(4, None);
    let plans: Vec<(&dyn Model, Vec<f64>, State, KernelPlan, &str)> = vec![
        (&pw, eta.to_vec(), y0.clone(), KernelPlan::random_scan(1)?, "pairwise m=8"),
        (
            &pw,
            eta.to_vec(),
            y0.clone(),
            KernelPlan::blocked(BlockDistribution::uniform(vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![2, 5]])?, 1)?,
            "pairwise m=8",
        ),
        (&pw, eta.to_vec(), y0.clone(), KernelPlan::ci_pair(ci_pairs(&pw)?, 1)?, "pairwise m=8"),
        (&er, vec![-0.5, 0.4, 0.3, 0.2], State::parse("110100")?, KernelPlan::node_s(2, 1)?, "ergm n=4"),
    ];
    for (model, eta, y0, plan, label) in plans {
        let curve = kl_decay_curve(model, &eta, &plan, &y0, steps)?;
        let worst_rise = curve
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        let name = format!("{} ({label})", plan.family.name());
        checks.push(Check::new("kl_monotonicity", name.clone(), worst_rise, 1e-12));
        curves.push((name, curve));
    }
    Ok((checks, curves))
}

pub fn divergence() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let model = model4();
    let y0 = State::parse("1001")?;
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let plans = [
        KernelPlan::random_scan(3)?,
        KernelPlan::blocked(BlockDistribution::uniform(vec![vec![0, 1], vec![2, 3], vec![1, 2]])?, 2)?,
    ];
    for plan in &plans {
        let supports = support_probabilities(&model, &[0.0, 0.0], plan, &y0)?;
        let mut lowest = f64::INFINITY;
        let mut form_gap: f64 = 0.0;
        for &p in &grid {
            for &q in &grid {
                let eta_p = [p, 0.5 * p - 0.2];
                let eta_q = [q, 0.3 - 0.5 * q];
                for (a, _) in &supports {
                    let d = augmented_divergence(&model, &model, &eta_p, &eta_q, plan, a, &y0)?;
                    lowest = lowest.min(d.single_kl);
                    form_gap = form_gap.max((d.three_term - d.single_kl).abs());
                }
            }
        }
        let name = plan.family.name();
        out.push(Check::new("divergence", format!("-min d_a over grid ({name})"), -lowest, 1e-12));
        out.push(Check::new("divergence", format!("three-term form vs single KL ({name})"), form_gap, 1e-10));
    }

    let blocked = KernelPlan::blocked(BlockDistribution::uniform(vec![vec![0, 1], vec![1, 2, 3]])?, 1)?;
    let eta = [0.3, -0.4];
    let mut worst: f64 = 0.0;
    for (a, _) in support_probabilities(&model, &eta, &blocked, &y0)? {
        worst = worst.max(augmented_divergence(&model, &model, &eta, &eta, &blocked, &a, &y0)?.value().abs());
    }
    out.push(Check::new("divergence", "d_a(p, p) for blocked k=1", worst, 1e-10));

    let plan = KernelPlan::random_scan(3)?;
    let y0 = State::parse("0110")?;
    let eta_p = [-0.3, 0.6];
    let cell = 0.1;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in -10..=10 {
        for j in -10..=10 {
            let eta_q = [eta_p[0] + cell * i as f64, eta_p[1] + cell * j as f64];
            let cd = combined_divergence(&model, &model, &eta_p, &eta_q, &plan, &y0)?;
            if cd.value < best.0 {
                best = (cd.value, eta_q);
            }
        }
    }
    out.push(Check::new(
        "divergence",
        "cd(p, .) grid argmin distance in cells",
        max_abs_diff(&best.1, &eta_p) / cell,
        1.0 + 1e-9,
    ));
    Ok(out)
}

/// Reference points for the equivalence and learning checks.
struct Targets {
    composite: Vec<f64>,
    weighted_composite: Vec<f64>,
    weighted_blocks: BlockDistribution,
    mple: Vec<f64>,
    ci_mple: Vec<f64>,
}

fn targets() -> Result<Targets> {
    let model = chord6();
    let y = chord6_obs();
    let weighted_blocks = BlockDistribution::new(vec![vec![0, 1, 2], vec![3, 4], vec![1, 4, 5]], vec![2.0, 1.0, 1.0])?;
    let pairs = ci_pairs(&model)?;
    Ok(Targets {
        composite: composite_fit(&model, &y, &composite_blocks())?.eta_hat.into_inner(),
        weighted_composite: composite_fit(&model, &y, &weighted_blocks)?.eta_hat.into_inner(),
        weighted_blocks,
        mple: mple_fit(&model, &y)?.eta_hat.into_inner(),
        ci_mple: weighted_mple_fit(&model, &y, Some(&pairs.coverage(model.dim())))?
            .eta_hat
            .into_inner(),
    })
}

pub fn equivalence() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let model = chord6();
    let y = chord6_obs();
    let t = targets()?;
    let group = "equivalence";

    let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, KernelPlan::blocked(composite_blocks(), 1)?))?;
    out.push(Check::new(group, "blocked k=1 fixed point vs composite", max_abs_diff(&cd.eta_hat, &t.composite), 1e-6));

    let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, KernelPlan::block_scan(t.weighted_blocks.clone(), 300)?))?;
    out.push(Check::new(
        group,
        "within-block equilibrium fixed point vs weighted composite",
        max_abs_diff(&cd.eta_hat, &t.weighted_composite),
        1e-6,
    ));

    let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, KernelPlan::ci_pair(ci_pairs(&model)?, 1)?))?;
    out.push(Check::new(group, "CI-pair fixed point vs weighted MPLE", max_abs_diff(&cd.eta_hat, &t.ci_mple), 1e-6));

    for plan in [KernelPlan::random_scan(1)?, KernelPlan::sequential_scan(1)?] {
        let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, plan.clone()))?;
        out.push(Check::new(
            group,
            format!("{} k=1 fixed point vs MPLE", plan.family.name()),
            max_abs_diff(&cd.eta_hat, &t.mple),
            1e-6,
        ));
    }
    // For longer sequential scans the kernel's q*-likelihood, not its moment
    // equation, is the object that reduces to the pseudo-likelihood.
    let mut worst: f64 = 0.0;
    for k in 2..=6 {
        let eta = qstar_argmax(&model, &KernelPlan::sequential_scan(k)?, &y, &[0.0, 0.0])?;
        worst = worst.max(max_abs_diff(&eta, &t.mple));
    }
    out.push(Check::new(group, "sequential_scan k=2..6 q* argmax vs MPLE", worst, 1e-6));

    let ring = BinaryPairwiseModel::cycle(8)?;
    let y8 = State::parse("11010000")?;
    let mple = mple_fit(&ring, &y8)?;
    let r = cd_fixed_point_residual(
        &ring,
        &mple.eta_hat,
        &y8,
        &KernelPlan::ci_pair(ci_pairs(&ring)?, 1)?,
        ExpectationMode::Exact,
        0,
        0,
    )?;
    out.push(Check::new(group, "CI-pair residual at MPLE (cycle m=8)", r.iter().fold(0.0, |a: f64, x| a.max(x.abs())), 1e-8));
    Ok(out)
}

pub fn learning() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let model = chord6();
    let y = chord6_obs();
    let t = targets()?;
    let group = "learning";

    let targets: [(&str, KernelPlan, &[f64]); 4] = [
        ("blocked k=1", KernelPlan::blocked(composite_blocks(), 1)?, &t.composite),
        ("block_scan k=300", KernelPlan::block_scan(t.weighted_blocks.clone(), 300)?, &t.weighted_composite),
        ("ci_pair k=1", KernelPlan::ci_pair(ci_pairs(&model)?, 1)?, &t.ci_mple),
        ("random_scan k=1", KernelPlan::random_scan(1)?, &t.mple),
    ];
    for (label, plan, target) in &targets {
        let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, plan.clone()))?;
        let ok = cd.status == FitStatus::Converged && max_abs_diff(&cd.eta_hat, target) <= 1e-6;
        out.push(Check::new(
            group,
            format!("cd_newton iterations to target ({label})"),
            if ok { cd.iterations as f64 } else { f64::INFINITY },
            10.0,
        ));
    }

    let (label, plan, target) = &targets[0];
    let cfg = FitConfig {
        gain_a: 50.0,
        max_iters: 10_000,
        ..exact_cfg(Method::CdSgd, plan.clone())
    };
    let sgd = cd_sgd_fit(&model, &y, &cfg)?;
    out.push(Check::new(group, format!("cd_sgd distance to target ({label})"), max_abs_diff(&sgd.eta_hat, target), 1e-4));
    out.push(Check::new(group, format!("cd_sgd iterations ({label})"), sgd.iterations as f64, 10_000.0));

    let exact_fit = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, plan.clone()))?;
    let cfg = FitConfig {
        n_chains: 4096,
        max_iters: 30,
        seed: 3,
        ..FitConfig::new(Method::CdNewton).with_plan(plan.clone())
    };
    let mc = cd_newton_fit(&model, &y, &cfg)?;
    let worst = (0..model.num_stats())
        .map(|j| (mc.mu_hat[j] - exact_fit.mu_hat[j]).abs() / mc.mu_se[j])
        .fold(0.0, f64::max);
    out.push(Check::new(group, "Monte Carlo mu_hat vs exact, in SE (4096 chains)", worst, 4.0));
    Ok(out)
}

/// Deliberately wrong baseline: the blocked-CD fixed point compared with the
/// plain MPLE instead of the composite likelihood. A working suite reports
/// this check as failed.
pub fn negative_control() -> Result<Vec<Check>> {
    let model = chord6();
    let y = chord6_obs();
    let cd = cd_newton_fit(&model, &y, &exact_cfg(Method::CdNewton, KernelPlan::blocked(composite_blocks(), 1)?))?;
    let mple = mple_fit(&model, &y)?;
    Ok(vec![Check::new(
        "negative_control",
        "blocked k=1 fixed point vs plain MPLE",
        max_abs_diff(&cd.eta_hat, &mple.eta_hat),
        1e-6,
    )])
}

pub fn run_group(group: &str, kl_steps: usize, report: &mut SuiteReport) -> Result<()> {
    let checks = match group {
        "oracle" => oracle_consistency()?,
        "detailed_balance" => detailed_balance()?,
        "kl_monotonicity" => {
            let (checks, curves) = kl_monotonicity(kl_steps)?;
            report.kl_curves.extend(curves);
            checks
        }
        "divergence" => divergence()?,
        "equivalence" => equivalence()?,
        "learning" => learning()?,
        "negative_control" => negative_control()?,
        other => return Err(crate::error::invalid(format!("unknown check group `{other}`"))),
    };
    report.checks.extend(checks);
    Ok(())
}

pub fn run_suite(kl_steps: usize, negative_control: bool) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for group in GROUPS {
        run_group(group, kl_steps, &mut report)?;
    }
    if negative_control {
        run_group("negative_control", kl_steps, &mut report)?;
    }
    Ok(report)
}
