//! A small undirected ERGM with edges, isolates, node-match and GWESP terms and
//! an optional hard cap on node degree.
//!
//! GWESP uses the fixed-decay form
//! `e^α Σ_{i≥1} [1 − (1 − e^{−α})^i] EP_i`, where `EP_i` counts edges whose
//! endpoints have exactly `i` shared partners.

use std::fmt;
use std::str::FromStr;

use smallvec::{smallvec, SmallVec};

use crate::error::{CdError, Result};
use crate::family::Model;
use crate::state::{DyadIndex, State};

type Words = SmallVec<[u64; 4]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErgmStat {
    Edges,
    Isolates,
    NodeMatch,
    Gwesp,
}

impl ErgmStat {
    pub fn name(self) -> &'static str {
        match self {
            ErgmStat::Edges => "edges",
            ErgmStat::Isolates => "isolates",
            ErgmStat::NodeMatch => "nodematch",
            ErgmStat::Gwesp => "gwesp",
        }
    }
}

impl fmt::Display for ErgmStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErgmStat {
    type Err = CdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "edges" => Ok(ErgmStat::Edges),
            "isolates" => Ok(ErgmStat::Isolates),
            "nodematch" | "node_match" => Ok(ErgmStat::NodeMatch),
            "gwesp" => Ok(ErgmStat::Gwesp),
            other => Err(CdError::InvalidConfig(format!("unknown ERGM statistic {other:?}"))),
        }
    }
}

/// Geometric weights for shared-partner counts.
#[derive(Clone, Debug)]
struct GwespTable {
    alpha: f64,
    /// `w(i) = e^α (1 − r^i)`
    weight: Vec<f64>,
    /// `r^i = w(i+1) − w(i)`
    increment: Vec<f64>,
}

impl GwespTable {
    fn new(alpha: f64, n: usize) -> Self {
        let r = 1.0 - (-alpha).exp();
        let ea = alpha.exp();
        let mut weight = Vec::with_capacity(n + 1);
        let mut increment = Vec::with_capacity(n + 1);
        let mut pow = 1.0;
        for _ in 0..=n {
            weight.push(ea * (1.0 - pow));
            increment.push(pow);
            pow *= r;
        }
        GwespTable {
            alpha,
            weight,
            increment,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ErgmModel {
    index: DyadIndex,
    stats: Vec<ErgmStat>,
    grades: Option<Vec<u32>>,
    gwesp: Option<GwespTable>,
    degree_cap: Option<usize>,
}

impl ErgmModel {
    pub fn new(
        n: usize,
        stats: Vec<ErgmStat>,
        grades: Option<Vec<u32>>,
        alpha: Option<f64>,
        degree_cap: Option<usize>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(CdError::InvalidConfig("an ERGM needs at least two nodes".into()));
        }
        if stats.is_empty() {
            return Err(CdError::InvalidConfig("empty statistic set".into()));
        }
        for (k, s) in stats.iter().enumerate() {
            if stats[..k].contains(s) {
                return Err(CdError::InvalidConfig(format!("duplicate statistic {s}")));
            }
        }
        let has_gwesp = stats.contains(&ErgmStat::Gwesp);
        let gwesp = match (has_gwesp, alpha) {
            (true, Some(a)) if a > 0.0 && a.is_finite() => Some(GwespTable::new(a, n)),
            (true, Some(a)) => {
                return Err(CdError::InvalidConfig(format!("GWESP alpha must be positive, got {a}")))
            }
            (true, None) => return Err(CdError::InvalidConfig("gwesp requires alpha".into())),
            (false, Some(_)) => {
                return Err(CdError::InvalidConfig("alpha given without gwesp".into()))
            }
            (false, None) => None,
        };
        if stats.contains(&ErgmStat::NodeMatch) {
            match &grades {
                Some(g) if g.len() == n => {}
                Some(g) => {
                    return Err(CdError::DimensionMismatch {
                        expected: n,
                        actual: g.len(),
                    })
                }
                None => return Err(CdError::InvalidConfig("nodematch requires grades".into())),
            }
        }
        Ok(ErgmModel {
            index: DyadIndex::new(n),
            stats,
            grades,
            gwesp,
            degree_cap,
        })
    }

    pub fn nodes(&self) -> usize {
        self.index.nodes()
    }

    pub fn dyads(&self) -> &DyadIndex {
        &self.index
    }

    pub fn stats(&self) -> &[ErgmStat] {
        &self.stats
    }

    pub fn grades(&self) -> Option<&[u32]> {
        self.grades.as_deref()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.gwesp.as_ref().map(|t| t.alpha)
    }

    pub fn degree_cap(&self) -> Option<usize> {
        self.degree_cap
    }

    fn neighbour_words(&self, y: &State, u: usize, exclude: usize) -> Words {
        let n = self.index.nodes();
        let mut words: Words = smallvec![0; n.div_ceil(64)];
        for v in 0..n {
            if v != u && v != exclude && y.get(self.index.dyad(u, v)) {
                words[v / 64] |= 1 << (v % 64);
            }
        }
        words
    }
}

fn popcount_and(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

fn for_each_bit(words: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            f(w * 64 + b);
            bits &= bits - 1;
        }
    }
}

/// Number of edges.
pub fn ergm_edges(y: &State) -> usize {
    y.count_ones()
}

/// Number of degree-zero nodes.
pub fn ergm_isolates(index: &DyadIndex, y: &State) -> usize {
    index.degrees(y).iter().filter(|&&d| d == 0).count()
}

/// Number of edges joining nodes with equal grade.
pub fn ergm_nodematch(index: &DyadIndex, y: &State, grades: &[u32]) -> usize {
    (0..index.num_dyads())
        .filter(|&k| {
            let (i, j) = index.endpoints(k);
            y.get(k) && grades[i] == grades[j]
        })
        .count()
}

/// `EP_i` for `i = 0..n-2`: edges whose endpoints share exactly `i` partners.
pub fn edgewise_shared_partners(index: &DyadIndex, y: &State) -> Vec<usize> {
    let n = index.nodes();
    let adjacency: Vec<Words> = (0..n)
        .map(|u| {
            let mut w: Words = smallvec![0; n.div_ceil(64)];
            for v in 0..n {
                if index.has_edge(y, u, v) {
                    w[v / 64] |= 1 << (v % 64);
                }
            }
            w
        })
        .collect();
    let mut counts = vec![0; n.saturating_sub(1).max(1)];
    for k in 0..index.num_dyads() {
        if y.get(k) {
            let (i, j) = index.endpoints(k);
            counts[popcount_and(&adjacency[i], &adjacency[j])] += 1;
        }
    }
    counts
}

/// GWESP with fixed decay `alpha`.
pub fn ergm_gwesp(index: &DyadIndex, y: &State, alpha: f64) -> f64 {
    let r = 1.0 - (-alpha).exp();
    let ea = alpha.exp();
    edgewise_shared_partners(index, y)
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ep)| ea * (1.0 - r.powi(i as i32)) * ep as f64)
        .sum()
}

/// `-∞` if some node has degree above `cap`, else `0`.
pub fn degree_cap_offset(index: &DyadIndex, y: &State, cap: usize) -> f64 {
    if index.degrees(y).iter().any(|&d| d > cap) {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

impl Model for ErgmModel {
    fn dim(&self) -> usize {
        self.index.num_dyads()
    }

    fn num_stats(&self) -> usize {
        self.stats.len()
    }

    fn stat_names(&self) -> Vec<String> {
        self.stats.iter().map(|s| s.name().to_string()).collect()
    }

    fn write_stats(&self, y: &State, out: &mut [f64]) {
        let need_sp = self.gwesp.is_some();
        let shared = need_sp.then(|| edgewise_shared_partners(&self.index, y));
        for (slot, stat) in out.iter_mut().zip(&self.stats) {
            *slot = match stat {
                ErgmStat::Edges => ergm_edges(y) as f64,
                ErgmStat::Isolates => ergm_isolates(&self.index, y) as f64,
                ErgmStat::NodeMatch => {
                    ergm_nodematch(&self.index, y, self.grades.as_deref().unwrap_or(&[])) as f64
                }
                ErgmStat::Gwesp => {
                    let table = self.gwesp.as_ref().expect("gwesp table");
                    shared
                        .as_ref()
                        .expect("shared partners")
                        .iter()
                        .enumerate()
                        .map(|(i, &ep)| table.weight[i] * ep as f64)
                        .sum()
                }
            };
        }
    }

    fn write_change(&self, y: &State, k: usize, out: &mut [f64]) {
        let (u, w) = self.index.endpoints(k);
        let mut nu: Option<Words> = None;
        let mut nw: Option<Words> = None;
        for (slot, stat) in out.iter_mut().zip(&self.stats) {
            *slot = match stat {
                ErgmStat::Edges => 1.0,
                ErgmStat::Isolates => {
                    let nu = nu.get_or_insert_with(|| self.neighbour_words(y, u, w));
                    let nw = nw.get_or_insert_with(|| self.neighbour_words(y, w, u));
                    let isolated_u = nu.iter().all(|&x| x == 0);
                    let isolated_w = nw.iter().all(|&x| x == 0);
                    -(f64::from(u8::from(isolated_u)) + f64::from(u8::from(isolated_w)))
                }
                ErgmStat::NodeMatch => {
                    let g = self.grades.as_deref().expect("grades");
                    f64::from(u8::from(g[u] == g[w]))
                }
                ErgmStat::Gwesp => {
                    let table = self.gwesp.as_ref().expect("gwesp table");
                    let nu = nu.get_or_insert_with(|| self.neighbour_words(y, u, w));
                    let nw = nw.get_or_insert_with(|| self.neighbour_words(y, w, u));
                    let common: Words = nu.iter().zip(nw.iter()).map(|(a, b)| a & b).collect();
                    let mut delta = 0.0;
                    let mut shared = 0;
                    for_each_bit(&common, |v| {
                        shared += 1;
                        let nv = self.neighbour_words(y, v, usize::MAX);
                        delta += table.increment[popcount_and(nu, &nv)];
                        delta += table.increment[popcount_and(nw, &nv)];
                    });
                    delta + table.weight[shared]
                }
            };
        }
    }

    fn is_allowed(&self, y: &State) -> bool {
        match self.degree_cap {
            Some(cap) => self.index.degrees(y).iter().all(|&d| d <= cap),
            None => true,
        }
    }

    fn allows(&self, y: &State, k: usize, value: bool) -> bool {
        let Some(cap) = self.degree_cap else {
            return true;
        };
        let (u, w) = self.index.endpoints(k);
        let own = usize::from(y.get(k));
        let add = usize::from(value);
        let du = self.index.degree(y, u) - own + add;
        let dw = self.index.degree(y, w) - own + add;
        du <= cap && dw <= cap
    }

    fn has_offset(&self) -> bool {
        self.degree_cap.is_some()
    }

    fn conditionally_independent(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        if self.gwesp.is_some() {
            return false;
        }
        if self.degree_cap.is_some() || self.stats.contains(&ErgmStat::Isolates) {
            let (i, j) = self.index.endpoints(a);
            let (k, l) = self.index.endpoints(b);
            return i != k && i != l && j != k && j != l;
        }
        true
    }

    fn graph(&self) -> Option<&DyadIndex> {
        Some(&self.index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{change_stats, conditional_prob, offset, suff_stats};

    fn full_model(n: usize, cap: Option<usize>) -> ErgmModel {
        let grades = (0..n as u32).map(|i| i % 2).collect();
        ErgmModel::new(
            n,
            vec![
                ErgmStat::Edges,
                ErgmStat::Isolates,
                ErgmStat::NodeMatch,
                ErgmStat::Gwesp,
            ],
            Some(grades),
            Some(2.0 / 3.0),
            cap,
        )
        .unwrap()
    }

    fn star(n: usize, leaves: usize) -> (DyadIndex, State) {
        let idx = DyadIndex::new(n);
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        let y = idx.state_from_edges(&edges).unwrap();
        (idx, y)
    }

    #[test]
    fn edge_and_isolate_counts() {
        let idx = DyadIndex::new(5);
        let empty = State::zeros(10);
        assert_eq!(ergm_edges(&empty), 0);
        assert_eq!(ergm_isolates(&idx, &empty), 5);
        let complete = idx.complete();
        assert_eq!(ergm_edges(&complete), 10);
        assert_eq!(ergm_isolates(&idx, &complete), 0);
        let single = idx.state_from_edges(&[(1, 3)]).unwrap();
        assert_eq!(ergm_isolates(&idx, &single), 3);
    }

    #[test]
    fn nodematch_extremes() {
        let idx = DyadIndex::new(4);
        let y = idx.state_from_edges(&[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(ergm_nodematch(&idx, &y, &[7, 7, 7, 7]), 3);
        assert_eq!(ergm_nodematch(&idx, &y, &[0, 1, 2, 3]), 0);
    }

    #[test]
    fn gwesp_of_triangle_is_three_for_any_alpha() {
        let idx = DyadIndex::new(3);
        let tri = idx.complete();
        for alpha in [0.1, 2.0 / 3.0, 1.0, 5.0] {
            assert!((ergm_gwesp(&idx, &tri, alpha) - 3.0).abs() < 1e-12);
        }
        assert_eq!(ergm_gwesp(&idx, &State::zeros(3), 0.5), 0.0);
    }

    #[test]
    fn degree_cap_boundary_is_inclusive() {
        let (idx, y) = star(12, 11);
        assert_eq!(degree_cap_offset(&idx, &y, 10), f64::NEG_INFINITY);
        let (idx, y) = star(12, 10);
        assert_eq!(degree_cap_offset(&idx, &y, 10), 0.0);
        assert_eq!(degree_cap_offset(&idx, &State::zeros(66), 10), 0.0);
    }

    #[test]
    fn offset_through_model() {
        let model = full_model(4, Some(2));
        let (_, y) = star(4, 3);
        assert_eq!(offset(&model, &y).unwrap(), f64::NEG_INFINITY);
        assert_eq!(offset(&model, &State::zeros(6)).unwrap(), 0.0);
        let uncapped = full_model(4, None);
        assert_eq!(offset(&uncapped, &y).unwrap(), 0.0);
    }

    #[test]
    fn triangle_edges_statistic() {
        let model = full_model(3, None);
        let g = suff_stats(&model, &DyadIndex::new(3).complete()).unwrap();
        assert_eq!(g[0], 3.0);
        assert!((g[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn isolates_change_on_empty_graph() {
        let model = full_model(4, None);
        let dyad = model.dyads().dyad(0, 1);
        let delta = change_stats(&model, &State::zeros(6), dyad).unwrap();
        assert_eq!(delta[0], 1.0);
        assert_eq!(delta[1], -2.0);
    }

    #[test]
    fn capped_conditional_forbids_overflow() {
        let model = full_model(5, Some(2));
        let idx = model.dyads();
        let y = idx.state_from_edges(&[(0, 1), (0, 2)]).unwrap();
        let p = conditional_prob(&model, &[0.3, 0.1, 0.2, 0.4], &y, idx.dyad(0, 3)).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn validation() {
        assert!(ErgmModel::new(4, vec![ErgmStat::Gwesp], None, None, None).is_err());
        assert!(ErgmModel::new(4, vec![ErgmStat::Edges], None, Some(0.5), None).is_err());
        assert!(ErgmModel::new(4, vec![ErgmStat::NodeMatch], Some(vec![0; 3]), None, None).is_err());
        assert!(ErgmModel::new(4, vec![ErgmStat::Edges, ErgmStat::Edges], None, None, None).is_err());
    }
}
