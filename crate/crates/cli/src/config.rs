//! Run configuration: a TOML file with a `[model]` table and one table per
//! subcommand. See `docs/config.md` for the full grammar.

use std::fs;
use std::path::{Path, PathBuf};

use cdfit::estimators::EquilibriumOptions;
use cdfit::{
    BlockDistribution, ExpectationMode, FitConfig, KernelFamily, KernelPlan, Method, Model,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, CliError, Result};

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it. Required by every subcommand.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Fill the `wall_time` CSV column. Off by default so that output bytes
    /// depend only on the configuration.
    #[serde(default)]
    pub record_wall_time: bool,
    pub model: Option<ModelConfig>,
    pub fit: Option<FitSection>,
    pub sweep: Option<SweepSection>,
    pub verify: Option<VerifySection>,
    pub simulate: Option<SimulateSection>,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ergm,
    Pairwise,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub nodes: Option<usize>,
    pub stats: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub degree_cap: Option<usize>,
    /// Edge list of the observed network.
    pub edges: Option<PathBuf>,
    /// Node attribute (grade) file.
    pub attributes: Option<PathBuf>,
    /// Generate the observed network instead of reading it.
    pub synthetic: Option<SyntheticConfig>,
    pub sites: Option<usize>,
    pub couplings: Option<Vec<[usize; 2]>>,
    /// Observed pairwise state as a 0/1 string.
    pub observed: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub grades: usize,
    pub density: f64,
    #[serde(default = "default_homophily")]
    pub homophily: f64,
    pub seed: u64,
}

fn default_homophily() -> f64 {
    3.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub k: usize,
    pub s: Option<usize>,
    pub blocks: Option<Vec<Vec<usize>>>,
    pub weights: Option<Vec<f64>>,
    pub first: Option<usize>,
    pub second: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_chains: usize,
    pub max_iters: usize,
    pub gain_a: f64,
    pub tol: Option<f64>,
    pub ridge: f64,
    pub max_step: f64,
    pub mode: String,
    pub bound: f64,
    pub warmup_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = FitConfig::default();
        SolverConfig {
            n_chains: d.n_chains,
            max_iters: d.max_iters,
            gain_a: d.gain_a,
            tol: d.tol,
            ridge: d.ridge,
            max_step: d.max_step,
            mode: "monte_carlo".into(),
            bound: d.bound,
            warmup_iters: d.warmup_iters,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub n_chains: usize,
    pub burn_in_sweeps: usize,
    pub samples: usize,
    pub sweeps_per_sample: usize,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        let d = EquilibriumOptions::default();
        EquilibriumConfig {
            n_chains: d.n_chains,
            burn_in_sweeps: d.burn_in_sweeps,
            samples: d.samples,
            sweeps_per_sample: d.sweeps_per_sample,
        }
    }
}

impl EquilibriumConfig {
    pub fn options(&self) -> EquilibriumOptions {
        EquilibriumOptions {
            n_chains: self.n_chains,
            burn_in_sweeps: self.burn_in_sweeps,
            samples: self.samples,
            sweeps_per_sample: self.sweeps_per_sample,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub method: String,
    pub kernel: Option<KernelConfig>,
    /// Blocks and weights for composite likelihood.
    pub blocks: Option<Vec<Vec<usize>>>,
    pub block_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Random-scan steps per chain; long enough to be near equilibrium.
    pub k: usize,
    #[serde(default = "default_reference_chains")]
    pub n_chains: usize,
    #[serde(default = "default_reference_iters")]
    pub max_iters: usize,
    #[serde(default = "default_reference_gain")]
    pub gain_a: f64,
    #[serde(default = "default_reference_warmup")]
    pub warmup_iters: usize,
}

fn default_reference_chains() -> usize {
    256
}
fn default_reference_iters() -> usize {
    100
}
fn default_reference_gain() -> f64 {
    1.0
}
fn default_reference_warmup() -> usize {
    5
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Any of `random_scan`, `sequential_scan`, `node_s`.
    pub families: Vec<String>,
    /// Node-s subset sizes.
    #[serde(default)]
    pub s: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(default = "default_sweep_method")]
    pub method: String,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
    pub reference: Option<ReferenceConfig>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

fn default_sweep_method() -> String {
    "cd_newton".into()
}

fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.25, 0.5, 0.75, 0.95]
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Add a check that compares against a deliberately wrong baseline.
    pub negative_control: bool,
    /// KL decay steps; 50 when unset.
    pub kl_steps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub nodes: usize,
    pub grades: usize,
    pub density: f64,
    #[serde(default = "default_homophily")]
    pub homophily: f64,
    pub degree_cap: Option<usize>,
    /// GWESP decay used when logging the realised statistics.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_alpha() -> f64 {
    2.0 / 3.0
}

fn default_prefix() -> String {
    "network".into()
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text, path)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| invalid("no seed: set `seed` in the config or pass --seed"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form. Output
    /// location, thread count and timing do not affect results and are left
    /// out.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out: None,
            jobs: None,
            record_wall_time: false,
            base_dir: PathBuf::new(),
            ..self.clone()
        };
        let text = toml::to_string(&canonical).expect("configuration serialises");
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn parse_method(name: &str) -> Result<Method> {
    name.parse::<Method>().map_err(CliError::from)
}

impl SolverConfig {
    pub fn fit_config(&self, method: Method, seed: u64) -> Result<FitConfig> {
        let mode: ExpectationMode = self.mode.parse()?;
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(invalid(format!("tol must be positive, got {t}")));
            }
        }
        Ok(FitConfig {
            method,
            n_chains: self.n_chains,
            max_iters: self.max_iters,
            gain_a: self.gain_a,
            tol: self.tol,
            ridge: self.ridge,
            max_step: self.max_step,
            mode,
            bound: self.bound,
            warmup_iters: self.warmup_iters,
            seed,
            ..FitConfig::default()
        })
    }
}

fn block_distribution(blocks: &[Vec<usize>], weights: Option<&[f64]>) -> Result<BlockDistribution> {
    let weights = weights.map_or_else(|| vec![1.0; blocks.len()], <[f64]>::to_vec);
    Ok(BlockDistribution::new(blocks.to_vec(), weights)?)
}

impl KernelConfig {
    pub fn plan(&self, model: &dyn Model) -> Result<KernelPlan> {
        let need = |field: &str| invalid(format!("kernel `{}` needs `{field}`", self.family));
        let blocks = || -> Result<BlockDistribution> {
            let b = self.blocks.as_ref().ok_or_else(|| need("blocks"))?;
            block_distribution(b, self.weights.as_deref())
        };
        let family = match self.family.as_str() {
            "random_scan" => KernelFamily::RandomScan,
            "sequential_scan" => KernelFamily::SequentialScan,
            "blocked_gibbs" => KernelFamily::Blocked {
                blocks: blocks()?,
                limit: cdfit::kernels::DEFAULT_BLOCK_LIMIT,
            },
            "block_scan" => KernelFamily::BlockScan { blocks: blocks()? },
            "ci_pair" => KernelFamily::CiPair {
                pairs: match &self.blocks {
                    Some(_) => blocks()?,
                    None => BlockDistribution::pairs_where(model.dim(), |i, j| {
                        model.conditionally_independent(i, j)
                    })?,
                },
            },
            "one_and_half_pass" => KernelFamily::OneAndHalfPass {
                first: self.first.ok_or_else(|| need("first"))?,
                second: self.second.ok_or_else(|| need("second"))?,
            },
            "node_s" => KernelFamily::NodeS {
                s: self.s.ok_or_else(|| need("s"))?,
            },
            other => return Err(invalid(format!("unknown kernel family `{other}`"))),
        };
        let plan = KernelPlan::new(family, self.k)?;
        plan.validate(model)?;
        Ok(plan)
    }
}

impl FitSection {
    pub fn fit_config(&self, model: &dyn Model, seed: u64) -> Result<FitConfig> {
        let method = parse_method(&self.method)?;
        let mut cfg = self.solver.fit_config(method, seed)?;
        if let Some(k) = &self.kernel {
            cfg.plan = Some(k.plan(model)?);
        }
        if let Some(b) = &self.blocks {
            cfg.blocks = Some(block_distribution(b, self.block_weights.as_deref())?);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_report_their_line() {
        let err = RunConfig::parse("seed = 1\n[fit]\nmethod = \"mple\"\nbogus = 2\n", Path::new("x.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::parse("seed = 3\nout = \"a\"\n", Path::new("a.toml")).unwrap();
        let b = RunConfig::parse("seed = 3\nout = \"b\"\njobs = 4\n", Path::new("b.toml")).unwrap();
        let c = RunConfig::parse("seed = 4\n", Path::new("c.toml")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
