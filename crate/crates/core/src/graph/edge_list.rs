use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected simple graph read from a SNAP-style edge list.
///
/// Original ids are kept in `node_ids` (sorted ascending); `edges` refer to
/// positions in that list, stored as `(lo, hi)` pairs sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeListGraph {
    pub node_ids: Vec<u64>,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeListGraph {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Builds a graph from raw id pairs, dropping self-loops (their endpoint
    /// still counts as a node) and collapsing duplicates.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut raw = BTreeSet::new();
        for (a, b) in pairs {
            ids.insert(a);
            ids.insert(b);
            if a != b {
                raw.insert((a.min(b), a.max(b)));
            }
        }
        if ids.is_empty() {
            return Err(Error::InvalidInput("edge list contains no nodes".into()));
        }
        let node_ids: Vec<u64> = ids.into_iter().collect();
        let index: BTreeMap<u64, usize> =
            node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let edges = raw.into_iter().map(|(a, b)| (index[&a], index[&b])).collect();
        Ok(EdgeListGraph { node_ids, edges })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Parses edge-list text. Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list<R: BufRead>(input: R) -> Result<EdgeListGraph> {
    let mut pairs = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let mut id = || -> Result<u64> {
            let f = fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                message: "expected two node ids".into(),
            })?;
            f.parse::<u64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad node id {f:?}: {e}"),
            })
        };
        let a = id()?;
        let b = id()?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "expected exactly two node ids".into(),
            });
        }
        pairs.push((a, b));
    }
    EdgeListGraph::from_pairs(pairs)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<EdgeListGraph> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(f))
}

/// Writes the graph back as an edge list using the original ids. Isolated
/// nodes are written as self-loops so that reloading keeps them.
pub fn write_edge_list<W: Write>(g: &EdgeListGraph, mut out: W) -> std::io::Result<()> {
    for &(a, b) in &g.edges {
        writeln!(out, "{} {}", g.node_ids[a], g.node_ids[b])?;
    }
    for (i, deg) in g.degrees().into_iter().enumerate() {
        if deg == 0 {
            writeln!(out, "{0} {0}", g.node_ids[i])?;
        }
    }
    Ok(())
}
