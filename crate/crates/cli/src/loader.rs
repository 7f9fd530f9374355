//! Builds the model and observed state described by a `[model]` table.

use std::fs;
use std::path::Path;

use cdfit::models::{parse_attributes, parse_edge_list, NodeAttributes, SyntheticNetwork};
use cdfit::{BinaryPairwiseModel, ErgmModel, ErgmStat, Model, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, ModelKind, RunConfig};
use crate::error::{invalid, CliError, Result};

pub enum LoadedModel {
    Ergm(ErgmModel),
    Pairwise(BinaryPairwiseModel),
}

impl LoadedModel {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            LoadedModel::Ergm(m) => m,
            LoadedModel::Pairwise(m) => m,
        }
    }
}

pub struct Problem {
    pub model: LoadedModel,
    pub observed: State,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

const DEFAULT_STATS: [ErgmStat; 4] = [
    ErgmStat::Edges,
    ErgmStat::Isolates,
    ErgmStat::NodeMatch,
    ErgmStat::Gwesp,
];

pub fn load_problem(cfg: &RunConfig) -> Result<Problem> {
    let spec = cfg
        .model
        .as_ref()
        .ok_or_else(|| invalid("missing [model] table"))?;
    match spec.kind {
        ModelKind::Ergm => load_ergm(cfg, spec),
        ModelKind::Pairwise => load_pairwise(spec),
    }
}

fn load_ergm(cfg: &RunConfig, spec: &ModelConfig) -> Result<Problem> {
    let n = spec
        .nodes
        .ok_or_else(|| invalid("ERGM model needs `nodes`"))?;
    let stats = match &spec.stats {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<ErgmStat>())
            .collect::<cdfit::Result<Vec<_>>>()?,
        None => DEFAULT_STATS.to_vec(),
    };
    let alpha = match spec.alpha {
        Some(a) => Some(a),
        None if stats.contains(&ErgmStat::Gwesp) => Some(2.0 / 3.0),
        None => None,
    };

    let (observed, attributes): (State, Option<NodeAttributes>) = match (&spec.synthetic, &spec.edges) {
        (Some(_), Some(_)) => {
            return Err(invalid("give either `edges` or [model.synthetic], not both"))
        }
        (Some(syn), None) => {
            let generator = SyntheticNetwork {
                nodes: n,
                grades: syn.grades,
                density: syn.density,
                homophily: syn.homophily,
                degree_cap: spec.degree_cap,
            };
            let (y, attrs) = generator.generate(&mut ChaCha8Rng::seed_from_u64(syn.seed))?;
            (y, Some(attrs))
        }
        (None, Some(edges)) => {
            let path = cfg.resolve(edges);
            let y = parse_edge_list(&read(&path)?, n).map_err(|source| CliError::Data {
                path: path.clone(),
                source,
            })?;
            let attrs = match &spec.attributes {
                Some(a) => {
                    let path = cfg.resolve(a);
                    Some(parse_attributes(&read(&path)?, n).map_err(|source| CliError::Data {
                        path: path.clone(),
                        source,
                    })?)
                }
                None => None,
            };
            (y, attrs)
        }
        (None, None) => return Err(invalid("ERGM model needs `edges` or [model.synthetic]")),
    };
    let grades = attributes.map(|a| a.codes);
    let model = ErgmModel::new(n, stats, grades, alpha, spec.degree_cap)?;
    if !model.is_allowed(&observed) {
        return Err(invalid("observed network violates the degree cap"));
    }
    Ok(Problem {
        model: LoadedModel::Ergm(model),
        observed,
    })
}

fn load_pairwise(spec: &ModelConfig) -> Result<Problem> {
    let m = spec
        .sites
        .ok_or_else(|| invalid("pairwise model needs `sites`"))?;
    let couplings: Vec<(usize, usize)> = spec
        .couplings
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|&[i, j]| (i, j))
        .collect();
    let model = BinaryPairwiseModel::ising(m, &couplings)?;
    let observed = State::parse(
        spec.observed
            .as_deref()
            .ok_or_else(|| invalid("pairwise model needs `observed`"))?,
    )?;
    if observed.len() != m {
        return Err(invalid(format!(
            "observed state has {} sites, model has {m}",
            observed.len()
        )));
    }
    Ok(Problem {
        model: LoadedModel::Pairwise(model),
        observed,
    })
}
