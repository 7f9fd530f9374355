//! Binary configurations and undirected-graph dyad addressing.

use std::fmt;

use crate::error::{CdError, Result};

const WORD: usize = 64;

/// A configuration `y ∈ {0,1}^m`, bit-packed with O(1) coordinate access.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct State {
    words: Vec<u64>,
    m: usize,
}

impl State {
    /// The all-zeros configuration of dimension `m`.
    pub fn zeros(m: usize) -> Self {
        State {
            words: vec![0; m.div_ceil(WORD)],
            m,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = State::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// Parses a string of `0`/`1` characters, e.g. `"0110"`.
    pub fn parse(text: &str) -> Result<Self> {
        let bits = text
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CdError::Parse {
                    line: 1,
                    message: format!("unexpected character {other:?} in binary state"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(State::from_bits(&bits))
    }

    /// Builds a state from the low `m` bits of `code` (bit `i` is `y_i`).
    pub fn from_code(code: u64, m: usize) -> Self {
        debug_assert!(m <= 64);
        let mut s = State::zeros(m);
        if m > 0 {
            let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
            s.words[0] = code & mask;
        }
        s
    }

    /// Inverse of [`State::from_code`]; only meaningful for `m <= 64`.
    pub fn code(&self) -> u64 {
        debug_assert!(self.m <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.m);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.m);
        let bit = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= bit;
        } else {
            self.words[i / WORD] &= !bit;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.m);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.m).map(move |i| self.get(i))
    }

    /// Indices where `self` and `other` differ.
    pub fn diff_indices(&self, other: &State) -> Vec<usize> {
        (0..self.m.min(other.m))
            .filter(|&i| self.get(i) != other.get(i))
            .collect()
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State(")?;
        for b in self.iter() {
            write!(f, "{}", u8::from(b))?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

/// Fixed upper-triangle row-major enumeration of the dyads of an undirected
/// graph on `n` nodes: `(0,1), (0,2), …, (0,n-1), (1,2), …`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadIndex {
    n: usize,
    endpoints: Vec<(u32, u32)>,
    lookup: Vec<u32>,
}

impl DyadIndex {
    pub fn new(n: usize) -> Self {
        let m = n * n.saturating_sub(1) / 2;
        let mut endpoints = Vec::with_capacity(m);
        let mut lookup = vec![u32::MAX; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let k = endpoints.len() as u32;
                endpoints.push((i as u32, j as u32));
                lookup[i * n + j] = k;
                lookup[j * n + i] = k;
            }
        }
        DyadIndex {
            n,
            endpoints,
            lookup,
        }
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_dyads(&self) -> usize {
        self.endpoints.len()
    }

    /// Flat index of the dyad `{i, j}`; `i != j`, order irrelevant.
    #[inline]
    pub fn dyad(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j && i < self.n && j < self.n);
        self.lookup[i * self.n + j] as usize
    }

    /// Endpoints `(i, j)` with `i < j`.
    #[inline]
    pub fn endpoints(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.endpoints[k];
        (i as usize, j as usize)
    }

    #[inline]
    pub fn has_edge(&self, y: &State, i: usize, j: usize) -> bool {
        i != j && y.get(self.dyad(i, j))
    }

    /// Dyads incident to node `u`, ordered by the other endpoint.
    pub fn incident(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| v != u).map(move |v| self.dyad(u, v))
    }

    pub fn degree(&self, y: &State, u: usize) -> usize {
        (0..self.n).filter(|&v| self.has_edge(y, u, v)).count()
    }

    pub fn degrees(&self, y: &State) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for (k, &(i, j)) in self.endpoints.iter().enumerate() {
            if y.get(k) {
                deg[i as usize] += 1;
                deg[j as usize] += 1;
            }
        }
        deg
    }

    /// Builds a graph state from an edge list; self-loops are rejected.
    pub fn state_from_edges(&self, edges: &[(usize, usize)]) -> Result<State> {
        let mut y = State::zeros(self.num_dyads());
        for &(i, j) in edges {
            if i == j {
                return Err(CdError::InvalidConfig(format!("self-loop at node {i}")));
            }
            if i >= self.n || j >= self.n {
                return Err(CdError::IndexOutOfRange {
                    index: i.max(j),
                    dim: self.n,
                });
            }
            y.set(self.dyad(i, j), true);
        }
        Ok(y)
    }

    pub fn edges(&self, y: &State) -> Vec<(usize, usize)> {
        (0..self.num_dyads())
            .filter(|&k| y.get(k))
            .map(|k| self.endpoints(k))
            .collect()
    }

    pub fn complete(&self) -> State {
        let mut y = State::zeros(self.num_dyads());
        for k in 0..self.num_dyads() {
            y.set(k, true);
        }
        y
    }
}
