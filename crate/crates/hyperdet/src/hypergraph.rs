//! Hypergraph representation, incidence/degree algebra, clique expansion and file I/O.
//!
//! A hypergraph is `(V, E, Ω)`: `n` nodes, `m` hyperedges (arbitrary-size node
//! subsets) and a diagonal of non-negative hyperedge weights. Node ids are dense
//! 0-based integers; external string labels map through an optional id table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable hypergraph topology.
///
/// Invariants (enforced on construction):
/// - every node id in every hyperedge is in `[0, n)`
/// - every hyperedge has at least two distinct members
/// - `weights.len() == edges.len()`, all weights non-negative
///
/// Duplicate hyperedges are allowed; they carry independent weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    n: usize,
    edges: Vec<Vec<usize>>,
    weights: Vec<f64>,
    labels: Option<Vec<String>>,
}

/// Sparse 0/1 incidence in both orientations.
///
/// `edge_members[e]` lists the nodes of hyperedge `e` ascending;
/// `node_edges[v]` lists the hyperedges containing `v` ascending. Both describe
/// the same matrix: entry `(v, e)` is 1 iff `v ∈ edges[e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceView {
    pub edge_members: Vec<Vec<usize>>,
    pub node_edges: Vec<Vec<usize>>,
}

/// Diagonals of the node and hyperedge degree matrices.
///
/// `node_deg[v] = Σ_e Ω_ee · H_ve` (weights folded in),
/// `edge_deg[e] = |edges[e]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVectors {
    pub node_deg: Vec<f64>,
    pub edge_deg: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonHypergraph {
    n: usize,
    edges: Vec<Vec<usize>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl Hypergraph {
    /// Build a hypergraph with unit weights, validating all invariants.
    ///
    /// Members of each edge are sorted and deduplicated; an edge with fewer
    /// than two distinct members is rejected.
    pub fn new(n: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        let m = edges.len();
        Self::with_weights(n, edges, vec![1.0; m])
    }

    /// Build a hypergraph with explicit hyperedge weights.
    pub fn with_weights(n: usize, edges: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidHypergraph("node count must be >= 1".into()));
        }
        if weights.len() != edges.len() {
            return Err(Error::InvalidHypergraph(format!(
                "{} weights for {} edges",
                weights.len(),
                edges.len()
            )));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (i, mut e) in edges.into_iter().enumerate() {
            e.sort_unstable();
            e.dedup();
            if let Some(&bad) = e.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidHypergraph(format!(
                    "edge {i}: node id {bad} out of range (n = {n})"
                )));
            }
            if e.len() < 2 {
                return Err(Error::InvalidHypergraph(format!(
                    "edge {i}: fewer than two distinct members"
                )));
            }
            canon.push(e);
        }
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, &w)| !(w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidHypergraph(format!(
                "edge {i}: weight {w} is negative or non-finite"
            )));
        }
        Ok(Self { n, edges: canon, weights, labels: None })
    }

    /// Build from string-labeled edges; labels are mapped to dense ids in
    /// first-occurrence order and recorded on the graph.
    pub fn from_labeled_edges(edges: &[Vec<String>]) -> Result<Self> {
        let mut table: BTreeMap<&str, usize> = BTreeMap::new();
        let mut labels: Vec<String> = Vec::new();
        let mut mapped = Vec::with_capacity(edges.len());
        for e in edges {
            let mut ids = Vec::with_capacity(e.len());
            for name in e {
                let next = labels.len();
                let id = *table.entry(name.as_str()).or_insert_with(|| {
                    labels.push(name.clone());
                    next
                });
                ids.push(id);
            }
            mapped.push(ids);
        }
        let mut g = Self::new(labels.len(), mapped)?;
        g.labels = Some(labels);
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Hyperedges, each sorted ascending and duplicate-free.
    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    /// Diagonal of Ω.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Optional original node labels (index = dense id).
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Both adjacency orientations of the incidence matrix, ascending ids.
    pub fn build_incidence(&self) -> IncidenceView {
        let mut node_edges = vec![Vec::new(); self.n];
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                node_edges[v].push(e);
            }
        }
        IncidenceView { edge_members: self.edges.clone(), node_edges }
    }

    /// Weighted node degrees and hyperedge degrees.
    pub fn degrees(&self) -> DegreeVectors {
        let mut node_deg = vec![0.0; self.n];
        let mut edge_deg = vec![0.0; self.edges.len()];
        for (e, members) in self.edges.iter().enumerate() {
            edge_deg[e] = members.len() as f64;
            for &v in members {
                node_deg[v] += self.weights[e];
            }
        }
        DegreeVectors { node_deg, edge_deg }
    }

    /// Pairwise graph obtained by replacing every hyperedge with a clique.
    ///
    /// Returns deduplicated undirected pairs `(u, v)` with `u < v`, sorted.
    /// No self-loops; multiplicity across hyperedges is collapsed.
    pub fn clique_expansion(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for members in &self.edges {
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    pairs.push((members[i], members[j]));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// The clique expansion re-expressed as a hypergraph of size-2 edges,
    /// unit weights. Used by the "no higher-order structure" ablation.
    pub fn clique_expansion_hypergraph(&self) -> Result<Self> {
        let pairs = self.clique_expansion();
        let edges = pairs.into_iter().map(|(u, v)| vec![u, v]).collect();
        Self::new(self.n, edges)
    }

    /// Parse from the text or JSON on-disk format (sniffed by leading `{`).
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        Self::parse(&raw)
    }

    /// Parse from a string in either supported format.
    ///
    /// Text format: line 1 `"n m"`; each following edge line is an optional
    /// `w=<float>` token followed by space-separated node ids. Lines starting
    /// with `#` are comments. JSON format: `{"n":…, "edges":[[…]], "weights":[…]}`.
    pub fn parse(raw: &str) -> Result<Self> {
        if raw.trim_start().starts_with('{') {
            let j: JsonHypergraph = serde_json::from_str(raw)?;
            let weights = j.weights.unwrap_or_else(|| vec![1.0; j.edges.len()]);
            return Self::with_weights(j.n, j.edges, weights);
        }
        let mut lines = raw
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
        let mut it = header.split_whitespace();
        let n: usize = parse_tok(it.next(), line_no, "node count")?;
        let m: usize = parse_tok(it.next(), line_no, "edge count")?;
        let mut edges = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for _ in 0..m {
            let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected {m} edge lines"),
            })?;
            let mut w = 1.0;
            let mut members = Vec::new();
            for tok in line.split_whitespace() {
                if let Some(ws) = tok.strip_prefix("w=") {
                    w = ws.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad weight token '{tok}'"),
                    })?;
                } else {
                    members.push(tok.parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad node id '{tok}'"),
                    })?);
                }
            }
            edges.push(members);
            weights.push(w);
        }
        Self::with_weights(n, edges, weights)
    }

    /// Serialize to the canonical text format. Unit weights are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for (e, members) in self.edges.iter().enumerate() {
            if self.weights[e] != 1.0 {
                let _ = write!(out, "w={} ", self.weights[e]);
            }
            let ids: Vec<String> = members.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_tok(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse { line, msg: format!("missing or bad {what}") })
}
