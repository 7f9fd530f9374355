//! Plain-text network files.
//!
//! Edge lists hold one `i j` pair per line (0-based, undirected). Attribute
//! files hold one `i label` pair per line. In both, `#` starts a comment line
//! and blank lines are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{CdError, Result};
use crate::state::{DyadIndex, State};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_node(token: Option<&str>, n: usize, line: usize) -> Result<usize> {
    let token = token.ok_or_else(|| CdError::Parse {
        line,
        message: "expected two fields".into(),
    })?;
    let id: usize = token.parse().map_err(|_| CdError::Parse {
        line,
        message: format!("invalid node id {token:?}"),
    })?;
    if id >= n {
        return Err(CdError::Parse {
            line,
            message: format!("node id {id} out of range for {n} nodes"),
        });
    }
    Ok(id)
}

/// Parses an edge list on `n` nodes into a dyad state.
pub fn parse_edge_list(text: &str, n: usize) -> Result<State> {
    let index = DyadIndex::new(n);
    let mut y = State::zeros(index.num_dyads());
    for (line, content) in content_lines(text) {
        let mut fields = content.split_whitespace();
        let i = parse_node(fields.next(), n, line)?;
        let j = parse_node(fields.next(), n, line)?;
        if fields.next().is_some() {
            return Err(CdError::Parse {
                line,
                message: "trailing fields after edge".into(),
            });
        }
        if i == j {
            return Err(CdError::Parse {
                line,
                message: format!("self-loop at node {i}"),
            });
        }
        y.set(index.dyad(i, j), true);
    }
    Ok(y)
}

/// Node attributes: per-node category codes plus the label of each code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeAttributes {
    pub codes: Vec<u32>,
    pub labels: Vec<String>,
}

/// Parses a node attribute file; every node in `0..n` must appear exactly once.
/// Codes are assigned to labels in order of first appearance.
pub fn parse_attributes(text: &str, n: usize) -> Result<NodeAttributes> {
    let mut codes: Vec<Option<u32>> = vec![None; n];
    let mut labels: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, u32> = HashMap::new();
    for (line, content) in content_lines(text) {
        let mut fields = content.split_whitespace();
        let i = parse_node(fields.next(), n, line)?;
        let label = fields.next().ok_or_else(|| CdError::Parse {
            line,
            message: "missing attribute label".into(),
        })?;
        if codes[i].is_some() {
            return Err(CdError::Parse {
                line,
                message: format!("node {i} listed twice"),
            });
        }
        let code = *lookup.entry(label.to_string()).or_insert_with(|| {
            labels.push(label.to_string());
            (labels.len() - 1) as u32
        });
        codes[i] = Some(code);
    }
    let codes = codes
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| CdError::Parse {
                line: 0,
                message: format!("node {i} has no attribute"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeAttributes { codes, labels })
}

pub fn format_edge_list(index: &DyadIndex, y: &State) -> String {
    let mut out = format!("# {} nodes\n", index.nodes());
    for (i, j) in index.edges(y) {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn format_attributes(attributes: &NodeAttributes) -> String {
    let mut out = String::new();
    for (i, &c) in attributes.codes.iter().enumerate() {
        let _ = writeln!(out, "{i} {}", attributes.labels[c as usize]);
    }
    out
}
