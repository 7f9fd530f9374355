//! The four subcommands. Each returns what it wrote so that callers (and
//! tests) can inspect results without re-reading files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cdfit::estimators::{equilibrium_moments, fit, mple_fit, sa_mle_reference};
use cdfit::kernels::derive_seed;
use cdfit::models::{format_attributes, format_edge_list, SyntheticNetwork};
use cdfit::oracle::Enumeration;
use cdfit::{
    suff_stats, ErgmModel, ErgmStat, FitConfig, FitResult, KernelFamily, KernelPlan, Method,
    Model, State,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_method, EquilibriumConfig, RunConfig, SolverConfig};
use crate::error::{invalid, CliError, Result};
use crate::loader::{load_problem, Problem};
use crate::output::{quantile, write_csv, KlRow, QuantileRow, SweepRow, VerifyRow};
use crate::suite::{self, SuiteReport};

/// Largest model whose mean `μ(η̂)` is enumerated rather than simulated.
const EXACT_MEAN_LIMIT: usize = 16;

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if overrides.seed.is_some() {
        cfg.seed = overrides.seed;
    }
    if overrides.out.is_some() {
        cfg.out = overrides.out.clone();
    }
    if overrides.jobs.is_some() {
        cfg.jobs = overrides.jobs;
    }
    Ok(cfg)
}

/// Runs `f` inside a thread pool sized by `jobs` (all cores when unset).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `μ(η̂)` with its standard error and, when simulated, the draws of `g`.
pub struct MeanSummary {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
}

/// Model mean at `eta`: enumerated for small models, otherwise a long
/// random-scan run from `y0`. The standard error adds the spread of `η̂`
/// pushed through the Jacobian `cov_η(g)` to the sampling error of the mean.
pub fn model_mean(
    model: &dyn Model,
    eta: &[f64],
    eta_cov: &DMatrix<f64>,
    y0: &State,
    eq: &EquilibriumConfig,
    seed: u64,
) -> Result<MeanSummary> {
    let (mean, cov, base_se, draws) = if model.dim() <= EXACT_MEAN_LIMIT {
        let (mean, cov) = Enumeration::new(model)?.moments(eta)?;
        let d = mean.len();
        (mean.into_inner(), cov, vec![0.0; d], Vec::new())
    } else {
        let s = equilibrium_moments(model, eta, y0, &eq.options(), seed)?;
        (s.mean, s.cov, s.se, s.draws)
    };
    let spread = &cov * eta_cov * &cov;
    let se = base_se
        .iter()
        .enumerate()
        .map(|(j, s)| (s * s + spread[(j, j)].max(0.0)).sqrt())
        .collect();
    Ok(MeanSummary { mean, se, draws })
}

/// Identifies a row group in the output tables.
#[derive(Clone, Debug, PartialEq)]
pub struct RowKey {
    pub family: String,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub method: String,
}

impl RowKey {
    pub fn for_plan(plan: Option<&KernelPlan>, method: Method) -> Self {
        let (family, s, k) = match plan {
            Some(p) => {
                let s = match p.family {
                    KernelFamily::NodeS { s } => Some(s),
                    _ => None,
                };
                (p.family.name().to_owned(), s, Some(p.k))
            }
            None => ("none".to_owned(), None, None),
        };
        RowKey {
            family,
            s,
            k,
            method: method.name().to_owned(),
        }
    }
}

pub struct PointOutcome {
    pub key: RowKey,
    pub outcome: std::result::Result<(FitResult, MeanSummary), String>,
    pub wall_time: f64,
}

fn rows_for(hash: &str, names: &[String], point: &PointOutcome, record_time: bool) -> Vec<SweepRow> {
    let wall_time = record_time.then_some(point.wall_time);
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let base = SweepRow {
                config_hash: hash.to_owned(),
                family: point.key.family.clone(),
                s: point.key.s,
                k: point.key.k,
                method: point.key.method.clone(),
                statistic: name.clone(),
                mu_hat: None,
                mc_se: None,
                eta_hat: None,
                iterations: None,
                status: String::new(),
                wall_time,
            };
            match &point.outcome {
                Ok((fit, mean)) => SweepRow {
                    mu_hat: Some(mean.mean[j]),
                    mc_se: Some(mean.se[j]),
                    eta_hat: Some(fit.eta_hat[j]),
                    iterations: Some(fit.iterations),
                    status: fit.status.name().to_owned(),
                    ..base
                },
                Err(msg) => SweepRow {
                    status: format!("error: {msg}"),
                    ..base
                },
            }
        })
        .collect()
}

fn run_point(
    problem: &Problem,
    cfg: &FitConfig,
    eq: &EquilibriumConfig,
    mean_seed: u64,
) -> PointOutcome {
    let model = problem.model.as_model();
    let start = Instant::now();
    let outcome = fit(model, &problem.observed, cfg)
        .and_then(|f| {
            let mean = model_mean(model, &f.eta_hat, &f.eta_cov, &problem.observed, eq, mean_seed)
                .map_err(|e| match e {
                    CliError::Model(e) => e,
                    other => cdfit::CdError::InvalidConfig(other.to_string()),
                })?;
            Ok((f, mean))
        })
        .map_err(|e| e.to_string());
    PointOutcome {
        key: RowKey::for_plan(cfg.plan.as_ref(), cfg.method),
        outcome,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

pub struct FitOutput {
    pub csv: PathBuf,
    pub rows: Vec<SweepRow>,
    pub result: FitResult,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutput> {
    let section = cfg.fit.as_ref().ok_or_else(|| invalid("missing [fit] table"))?;
    let master = cfg.master_seed()?;
    let hash = cfg.hash();
    let problem = load_problem(cfg)?;
    let model = problem.model.as_model();
    let fit_cfg = section.fit_config(model, derive_seed(master, 1))?;
    let point = with_jobs(cfg.jobs, || {
        run_point(&problem, &fit_cfg, &section.equilibrium, derive_seed(master, 2))
    })?;
    let names = model.stat_names();
    let rows = rows_for(&hash, &names, &point, cfg.record_wall_time);
    let csv = write_csv(&cfg.out_dir(), "fit.csv", &rows)?;
    let (result, mean) = point.outcome.map_err(|e| invalid(format!("fit failed: {e}")))?;

    let g = suff_stats(model, &problem.observed)?;
    println!("config {hash}");
    println!(
        "method {} kernel {} status {} after {} iterations",
        fit_cfg.method,
        fit_cfg.plan.as_ref().map_or("none".into(), ToString::to_string),
        result.status,
        result.iterations,
    );
    println!("{:<12} {:>12} {:>12} {:>12} {:>10}", "statistic", "observed", "eta_hat", "mu_hat", "se");
    for (j, name) in names.iter().enumerate() {
        println!(
            "{:<12} {:>12.4} {:>12.6} {:>12.4} {:>10.4}",
            name, g[j], result.eta_hat[j], mean.mean[j], mean.se[j]
        );
    }
    println!("wrote {}", csv.display());
    Ok(FitOutput { csv, rows, result })
}

/// One grid point of a sweep: kernel family, subset size (Node-s only), steps.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub family: String,
    pub s: Option<usize>,
    pub k: usize,
}

pub fn sweep_grid(families: &[String], s_values: &[usize], k_values: &[usize]) -> Result<Vec<GridPoint>> {
    let mut grid = Vec::new();
    for family in families {
        match family.as_str() {
            "node_s" => {
                if s_values.is_empty() {
                    return Err(invalid("node_s sweep needs a non-empty `s` list"));
                }
                for &s in s_values {
                    for &k in k_values {
                        grid.push(GridPoint { family: family.clone(), s: Some(s), k });
                    }
                }
            }
            "random_scan" | "sequential_scan" => {
                for &k in k_values {
                    grid.push(GridPoint { family: family.clone(), s: None, k });
                }
            }
            other => return Err(invalid(format!("family `{other}` cannot be swept"))),
        }
    }
    if grid.is_empty() {
        return Err(invalid("empty sweep grid"));
    }
    Ok(grid)
}

fn grid_plan(p: &GridPoint) -> cdfit::Result<KernelPlan> {
    match (p.family.as_str(), p.s) {
        ("node_s", Some(s)) => KernelPlan::node_s(s, p.k),
        ("sequential_scan", _) => KernelPlan::sequential_scan(p.k),
        _ => KernelPlan::random_scan(p.k),
    }
}

pub struct SweepOutput {
    pub csv: PathBuf,
    pub quantiles_csv: Option<PathBuf>,
    pub rows: Vec<SweepRow>,
    pub quantile_rows: Vec<QuantileRow>,
}

fn reference_config(solver: &SolverConfig, r: &crate::config::ReferenceConfig, seed: u64) -> Result<FitConfig> {
    Ok(FitConfig {
        n_chains: r.n_chains,
        max_iters: r.max_iters,
        gain_a: r.gain_a,
        warmup_iters: r.warmup_iters,
        plan: Some(KernelPlan::random_scan(r.k)?),
        ..solver.fit_config(Method::SaMleReference, seed)?
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    let section = cfg.sweep.as_ref().ok_or_else(|| invalid("missing [sweep] table"))?;
    let master = cfg.master_seed()?;
    let hash = cfg.hash();
    let problem = load_problem(cfg)?;
    let model = problem.model.as_model();
    let names = model.stat_names();
    let method = parse_method(&section.method)?;
    if !matches!(method, Method::CdNewton | Method::CdSgd) {
        return Err(invalid("sweep method must be cd_newton or cd_sgd"));
    }
    let grid = sweep_grid(&section.families, &section.s, &section.k)?;
    let mut configs = Vec::with_capacity(grid.len());
    for (i, p) in grid.iter().enumerate() {
        let mut c = section.solver.fit_config(method, derive_seed(master, 100 + 2 * i as u64))?;
        let plan = grid_plan(p).and_then(|plan| plan.validate(model).map(|()| plan));
        configs.push(match plan {
            Ok(plan) => {
                c.plan = Some(plan);
                Ok(c)
            }
            Err(e) => Err((p.clone(), e.to_string())),
        });
    }
    let reference = section
        .reference
        .as_ref()
        .map(|r| reference_config(&section.solver, r, derive_seed(master, 3)))
        .transpose()?;
    let eq = &section.equilibrium;

    let (baselines, points) = with_jobs(cfg.jobs, || {
        let mple_start = Instant::now();
        let mple = mple_fit(model, &problem.observed)
            .and_then(|f| {
                model_mean(model, &f.eta_hat, &f.eta_cov, &problem.observed, eq, derive_seed(master, 2))
                    .map_err(|e| cdfit::CdError::InvalidConfig(e.to_string()))
                    .map(|m| (f, m))
            })
            .map_err(|e| e.to_string());
        let mut baselines = vec![PointOutcome {
            key: RowKey::for_plan(None, Method::Mple),
            outcome: mple,
            wall_time: mple_start.elapsed().as_secs_f64(),
        }];
        if let Some(rc) = &reference {
            let start = Instant::now();
            let outcome = sa_mle_reference(model, &problem.observed, rc)
                .and_then(|f| {
                    model_mean(model, &f.eta_hat, &f.eta_cov, &problem.observed, eq, derive_seed(master, 4))
                        .map_err(|e| cdfit::CdError::InvalidConfig(e.to_string()))
                        .map(|m| (f, m))
                })
                .map_err(|e| e.to_string());
            baselines.push(PointOutcome {
                key: RowKey::for_plan(rc.plan.as_ref(), Method::SaMleReference),
                outcome,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        let points: Vec<PointOutcome> = configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| match c {
                Ok(c) => run_point(&problem, c, eq, derive_seed(master, 101 + 2 * i as u64)),
                Err((p, msg)) => PointOutcome {
                    key: RowKey {
                        family: p.family.clone(),
                        s: p.s,
                        k: Some(p.k),
                        method: method.name().to_owned(),
                    },
                    outcome: Err(msg.clone()),
                    wall_time: 0.0,
                },
            })
            .collect();
        (baselines, points)
    })?;

    let mut rows = Vec::new();
    for p in baselines.iter().chain(&points) {
        rows.extend(rows_for(&hash, &names, p, cfg.record_wall_time));
    }
    let out = cfg.out_dir();
    let csv = write_csv(&out, "sweep.csv", &rows)?;

    let mut quantile_rows = Vec::new();
    if let Some(Ok((_, mean))) = baselines.get(1).map(|b| &b.outcome) {
        for (j, name) in names.iter().enumerate() {
            let mut xs: Vec<f64> = mean.draws.iter().map(|g| g[j]).collect();
            xs.sort_by(f64::total_cmp);
            for &q in &section.quantiles {
                quantile_rows.push(QuantileRow {
                    config_hash: hash.clone(),
                    statistic: name.clone(),
                    quantile: q,
                    value: quantile(&xs, q),
                });
            }
        }
    }
    let quantiles_csv = if quantile_rows.is_empty() {
        None
    } else {
        Some(write_csv(&out, "sweep_quantiles.csv", &quantile_rows)?)
    };

    println!("config {hash}: {} grid points", grid.len());
    for p in baselines.iter().chain(&points) {
        let k = &p.key;
        let label = match (k.s, k.k) {
            (Some(s), Some(kk)) => format!("{} s={s} k={kk}", k.family),
            (None, Some(kk)) => format!("{} k={kk}", k.family),
            _ => k.family.clone(),
        };
        match &p.outcome {
            Ok((f, m)) => println!(
                "{:<10} {:<26} {:<10} mu_hat {:.3?}",
                k.method, label, f.status.name(), m.mean
            ),
            Err(e) => println!("{:<10} {:<26} error: {e}", k.method, label),
        }
    }
    println!("wrote {}", csv.display());
    Ok(SweepOutput {
        csv,
        quantiles_csv,
        rows,
        quantile_rows,
    })
}

pub struct VerifyOutput {
    pub report: SuiteReport,
    pub csv: PathBuf,
    pub kl_csv: PathBuf,
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyOutput> {
    let section = cfg.verify.clone().unwrap_or_default();
    let hash = cfg.hash();
    let kl_steps = section.kl_steps.unwrap_or(50);
    let report = with_jobs(cfg.jobs, || suite::run_suite(kl_steps, section.negative_control))??;

    println!("config {hash}");
    for c in &report.checks {
        println!(
            "{} [{}] {}: measured {:.3e}, tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.group,
            c.name,
            c.measured,
            c.tolerance
        );
    }
    for (name, curve) in &report.kl_curves {
        let shown: Vec<String> = curve.iter().map(|x| format!("{x:.3e}")).collect();
        println!("KL decay {name}: {}", shown.join(" "));
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", report.checks.len());

    let rows: Vec<VerifyRow> = report
        .checks
        .iter()
        .map(|c| VerifyRow {
            config_hash: hash.clone(),
            group: c.group.to_owned(),
            check: c.name.clone(),
            measured: c.measured,
            tolerance: c.tolerance,
            passed: c.passed,
        })
        .collect();
    let kl_rows: Vec<KlRow> = report
        .kl_curves
        .iter()
        .flat_map(|(name, curve)| {
            curve.iter().enumerate().map(|(i, &kl)| KlRow {
                config_hash: hash.clone(),
                kernel: name.clone(),
                k: i + 1,
                kl,
            })
        })
        .collect();
    let out = cfg.out_dir();
    let csv = write_csv(&out, "verify.csv", &rows)?;
    let kl_csv = write_csv(&out, "verify_kl.csv", &kl_rows)?;
    Ok(VerifyOutput { report, csv, kl_csv })
}

pub struct SimulateOutput {
    pub edges: PathBuf,
    pub attributes: PathBuf,
    pub stats: Vec<(String, f64)>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let section = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| invalid("missing [simulate] table"))?;
    let seed = cfg.master_seed()?;
    let generator = SyntheticNetwork {
        nodes: section.nodes,
        grades: section.grades,
        density: section.density,
        homophily: section.homophily,
        degree_cap: section.degree_cap,
    };
    let (y, attrs) = generator.generate(&mut ChaCha8Rng::seed_from_u64(seed))?;
    let model = ErgmModel::new(
        section.nodes,
        vec![ErgmStat::Edges, ErgmStat::Isolates, ErgmStat::NodeMatch, ErgmStat::Gwesp],
        Some(attrs.codes.clone()),
        Some(section.alpha),
        section.degree_cap,
    )?;
    let g = suff_stats(&model, &y)?;
    let stats: Vec<(String, f64)> = model.stat_names().into_iter().zip(g.iter().copied()).collect();

    let summary: Vec<String> = stats.iter().map(|(n, v)| format!("{n}={v}")).collect();
    let mut text = format!("# seed {seed}; {}\n", summary.join(", "));
    text.push_str(&format_edge_list(model.dyads(), &y));
    let out = cfg.out_dir();
    crate::output::ensure_dir(&out)?;
    let write = |path: PathBuf, body: &str| -> Result<PathBuf> {
        fs::write(&path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    let edges = write(out.join(format!("{}.edges", section.prefix)), &text)?;
    let attributes = write(out.join(format!("{}.attrs", section.prefix)), &format_attributes(&attrs))?;
    println!("realised statistics: {}", summary.join(", "));
    println!("wrote {} and {}", edges.display(), attributes.display());
    Ok(SimulateOutput {
        edges,
        attributes,
        stats,
    })
}
