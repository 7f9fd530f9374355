use crate::error::{CdError, Result};
use crate::family::Model;
use crate::state::State;

/// Ising-style model on `{0,1}^m`: statistic `c` is
/// `Σ_{i ∈ field(c)} y_i + Σ_{(i,j) ∈ coupling(c)} y_i y_j`.
#[derive(Clone, Debug)]
pub struct BinaryPairwiseModel {
    m: usize,
    d: usize,
    field_groups: Vec<Option<usize>>,
    couplings: Vec<(usize, usize, usize)>,
    neighbours: Vec<Vec<(usize, usize)>>,
    names: Vec<String>,
}

impl BinaryPairwiseModel {
    /// `field_groups[i]` is the statistic that site `i` feeds (if any);
    /// each coupling `(i, j, c)` adds `y_i y_j` to statistic `c`.
    pub fn new(
        m: usize,
        names: Vec<String>,
        field_groups: Vec<Option<usize>>,
        couplings: Vec<(usize, usize, usize)>,
    ) -> Result<Self> {
        let d = names.len();
        if m == 0 || d == 0 {
            return Err(CdError::InvalidConfig(
                "pairwise model needs at least one site and one statistic".into(),
            ));
        }
        if field_groups.len() != m {
            return Err(CdError::DimensionMismatch {
                expected: m,
                actual: field_groups.len(),
            });
        }
        if let Some(c) = field_groups.iter().flatten().find(|&&c| c >= d) {
            return Err(CdError::IndexOutOfRange { index: *c, dim: d });
        }
        let mut neighbours = vec![Vec::new(); m];
        for &(i, j, c) in &couplings {
            if i >= m || j >= m || i == j {
                return Err(CdError::InvalidConfig(format!(
                    "coupling ({i}, {j}) does not reference two distinct sites below {m}"
                )));
            }
            if c >= d {
                return Err(CdError::IndexOutOfRange { index: c, dim: d });
            }
            neighbours[i].push((j, c));
            neighbours[j].push((i, c));
        }
        Ok(BinaryPairwiseModel {
            m,
            d,
            field_groups,
            couplings,
            neighbours,
            names,
        })
    }

    /// Two statistics: total field `Σ y_i` and total coupling `Σ_{edges} y_i y_j`.
    pub fn ising(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        BinaryPairwiseModel::new(
            m,
            vec!["field".into(), "coupling".into()],
            vec![Some(0); m],
            edges.iter().map(|&(i, j)| (i, j, 1)).collect(),
        )
    }

    pub fn chain(m: usize) -> Result<Self> {
        let edges: Vec<_> = (1..m).map(|i| (i - 1, i)).collect();
        BinaryPairwiseModel::ising(m, &edges)
    }

    pub fn cycle(m: usize) -> Result<Self> {
        let edges: Vec<_> = (0..m).map(|i| (i, (i + 1) % m)).collect();
        BinaryPairwiseModel::ising(m, &edges)
    }

    /// Single statistic `Σ y_i`, no interactions.
    pub fn independent(m: usize) -> Result<Self> {
        BinaryPairwiseModel::new(m, vec!["field".into()], vec![Some(0); m], Vec::new())
    }

    pub fn couplings(&self) -> &[(usize, usize, usize)] {
        &self.couplings
    }

    pub fn coupled(&self, i: usize, j: usize) -> bool {
        self.neighbours[i].iter().any(|&(k, _)| k == j)
    }
}

impl Model for BinaryPairwiseModel {
    fn dim(&self) -> usize {
        self.m
    }

    fn num_stats(&self) -> usize {
        self.d
    }

    fn stat_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn write_stats(&self, y: &State, out: &mut [f64]) {
        out.fill(0.0);
        for (i, g) in self.field_groups.iter().enumerate() {
            if let (Some(c), true) = (g, y.get(i)) {
                out[*c] += 1.0;
            }
        }
        for &(i, j, c) in &self.couplings {
            if y.get(i) && y.get(j) {
                out[c] += 1.0;
            }
        }
    }

    fn write_change(&self, y: &State, i: usize, out: &mut [f64]) {
        out.fill(0.0);
        if let Some(c) = self.field_groups[i] {
            out[c] += 1.0;
        }
        for &(j, c) in &self.neighbours[i] {
            if y.get(j) {
                out[c] += 1.0;
            }
        }
    }

    fn conditionally_independent(&self, i: usize, j: usize) -> bool {
        i != j && !self.coupled(i, j)
    }
}
