//! Betweenness centrality of zone road networks and the centralization-based
//! pattern classification.
//!
//! Node scores follow the ordered-pair convention: for every ordered pair
//! `(s, t)` with `s != t` and neither equal to `v`, node `v` earns the
//! fraction of `s -> t` shortest paths that pass through it. Normalized
//! scores divide by `(N-1)(N-2)`.
//!
//! Graph centralization uses the raw (unnormalized) scores with Freeman's
//! star maximum `N^3 - 4N^2 + 5N - 2 = (N-1)^2 (N-2)`, so a star scores 1.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Accumulator;

/// One undirected road link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length_km: Option<f64>,
}

/// Undirected road network of one zone. Nodes are junctions, edges are links.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, Option<f64>)>>,
}

impl RoadGraph {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::build(node_count, edges).map_err(|(_, err)| err)
    }

    /// Validates edges in order; a failure reports the index of the first bad edge.
    fn build(node_count: usize, edges: Vec<Edge>) -> Result<Self, (usize, Error)> {
        if node_count == 0 {
            return Err((0, Error::Validation("graph must have at least one node".into())));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); node_count];
        for (idx, e) in edges.iter().enumerate() {
            let fail = |msg: String| Err((idx, Error::Validation(format!("edge #{idx} ({}, {}) {msg}", e.u, e.v))));
            if e.u >= node_count || e.v >= node_count {
                return fail(format!("references a node outside [0, {node_count})"));
            }
            if e.u == e.v {
                return fail("is a self-loop".into());
            }
            if let Some(len) = e.length_km {
                if !(len.is_finite() && len > 0.0) {
                    return fail(format!("has non-positive length {len}"));
                }
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return fail("is a duplicate".into());
            }
            adjacency[e.u].push((e.v, e.length_km));
            adjacency[e.v].push((e.u, e.length_km));
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    /// Unweighted graph from plain `(u, v)` pairs.
    pub fn from_pairs(node_count: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(u, v)| Edge { u, v, length_km: None })
            .collect();
        Self::new(node_count, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().map(|&(v, _)| v)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.node_count
    }

    /// Parses the edge-list text format: `u v [length_km]` per line, `#`
    /// comments, blank lines ignored, optional `nodes N` header.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0].eq_ignore_ascii_case("nodes") {
                if fields.len() != 2 || declared.is_some() || !edges.is_empty() {
                    return Err(Error::parse(line_no, "header must be a single leading `nodes N` line"));
                }
                let n = fields[1]
                    .parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("bad node count `{}`", fields[1])))?;
                declared = Some(n);
                continue;
            }
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::parse(line_no, "expected `u v [length_km]`"));
            }
            let node = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("bad node id `{s}`")))
            };
            let length_km = match fields.get(2) {
                Some(s) => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("bad length `{s}`")))?,
                ),
                None => None,
            };
            edges.push((line_no, Edge { u: node(fields[0])?, v: node(fields[1])?, length_km }));
        }
        let inferred = edges.iter().map(|(_, e)| e.u.max(e.v) + 1).max().unwrap_or(0);
        let node_count = declared.unwrap_or(inferred);
        if node_count == 0 {
            return Err(Error::Validation("edge list declares no nodes".into()));
        }
        let lines: Vec<usize> = edges.iter().map(|(line, _)| *line).collect();
        Self::build(node_count, edges.into_iter().map(|(_, e)| e).collect())
            .map_err(|(idx, err)| Error::parse(lines[idx], err.to_string()))
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count);
        for e in &self.edges {
            match e.length_km {
                Some(len) => out.push_str(&format!("{} {} {}\n", e.u, e.v, len)),
                None => out.push_str(&format!("{} {}\n", e.u, e.v)),
            }
        }
        out
    }
}

/// How shortest paths are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    HopCount,
    EdgeLength,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hop_count" => Ok(Metric::HopCount),
            "edge_length" => Ok(Metric::EdgeLength),
            other => Err(Error::Validation(format!("unknown metric `{other}`"))),
        }
    }
}

/// Which scores feed the centralization numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralizationVariant {
    /// Raw ordered-pair betweenness; the star graph attains exactly 1.
    #[default]
    Unnormalized,
    /// Normalized node scores over the same denominator, kept for comparison.
    PaperLiteral,
}

impl FromStr for CentralizationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" => Ok(Self::Unnormalized),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(Error::Validation(format!("unknown centralization variant `{other}`"))),
        }
    }
}

/// Road-network morphology keyed to centralization intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NetworkPattern {
    Grid,
    IrregularGrid,
    Mixed,
    Lollipops,
    Unclassifiable,
}

impl NetworkPattern {
    /// The four classifiable patterns in increasing-centralization order.
    pub const ORDERED: [NetworkPattern; 4] = [
        NetworkPattern::Grid,
        NetworkPattern::IrregularGrid,
        NetworkPattern::Mixed,
        NetworkPattern::Lollipops,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NetworkPattern::Grid => "Grid",
            NetworkPattern::IrregularGrid => "IrregularGrid",
            NetworkPattern::Mixed => "Mixed",
            NetworkPattern::Lollipops => "Lollipops",
            NetworkPattern::Unclassifiable => "Unclassifiable",
        }
    }
}

impl fmt::Display for NetworkPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "grid" => Ok(Self::Grid),
            "irregulargrid" => Ok(Self::IrregularGrid),
            "mixed" => Ok(Self::Mixed),
            "lollipops" | "lollipop" => Ok(Self::Lollipops),
            "unclassifiable" => Ok(Self::Unclassifiable),
            _ => Err(Error::Validation(format!("unknown road-network pattern `{s}`"))),
        }
    }
}

/// Upper (exclusive) bounds of the Grid, IrregularGrid and Mixed intervals.
pub const PATTERN_BOUNDARIES: [f64; 3] = [0.15, 0.30, 0.40];

/// Maps a centralization value in `[0, 1]` to its pattern class.
pub fn classify_pattern(centralization: f64) -> Result<NetworkPattern> {
    if !(0.0..=1.0).contains(&centralization) {
        return Err(Error::Domain(format!(
            "centralization {centralization} outside [0, 1]"
        )));
    }
    let idx = PATTERN_BOUNDARIES
        .iter()
        .position(|&b| centralization < b)
        .unwrap_or(3);
    Ok(NetworkPattern::ORDERED[idx])
}

/// Raw and normalized ordered-pair betweenness of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Betweenness<T> {
    pub raw: Vec<T>,
    pub normalized: Vec<T>,
    /// False when some node pairs have no connecting path; they contribute 0.
    pub connected: bool,
}

/// Raw ordered-pair betweenness `B_i = sum_{s != t != i} sigma_st(i) / sigma_st`.
///
/// Brandes accumulation: one single-source pass per node, dependencies
/// summed in reverse distance order.
pub fn raw_betweenness<T: Accumulator>(graph: &RoadGraph, metric: Metric) -> Result<Vec<T>> {
    if metric == Metric::EdgeLength {
        if let Some(e) = graph.edges.iter().find(|e| e.length_km.is_none()) {
            return Err(Error::Validation(format!(
                "edge ({}, {}) has no length; edge_length metric needs every length",
                e.u, e.v
            )));
        }
    }
    let n = graph.node_count;
    let mut scores = vec![T::zero(); n];
    for source in 0..n {
        let pass = match metric {
            Metric::HopCount => bfs_pass::<T>(graph, source),
            Metric::EdgeLength => dijkstra_pass::<T>(graph, source),
        };
        let mut delta = vec![T::zero(); n];
        for &w in pass.order.iter().rev() {
            for &v in &pass.preds[w] {
                let share = pass.sigma[v].clone() / pass.sigma[w].clone() * (T::one() + delta[w].clone());
                delta[v] = delta[v].clone() + share;
            }
            if w != source {
                scores[w] = scores[w].clone() + delta[w].clone();
            }
        }
    }
    Ok(scores)
}

/// Node betweenness normalized by `(N-1)(N-2)`; all zeros when `N < 3`.
pub fn node_betweenness<T: Accumulator>(graph: &RoadGraph, metric: Metric) -> Result<Betweenness<T>> {
    let raw = raw_betweenness::<T>(graph, metric)?;
    let n = graph.node_count;
    let normalized = if n < 3 {
        vec![T::zero(); n]
    } else {
        let denom = T::of_usize((n - 1) * (n - 2));
        raw.iter().map(|b| b.clone() / denom.clone()).collect()
    };
    Ok(Betweenness {
        raw,
        normalized,
        connected: graph.is_connected(),
    })
}

/// Freeman star maximum `N^3 - 4N^2 + 5N - 2`.
pub fn centralization_denominator<T: Accumulator>(n: usize) -> T {
    let n = T::of_usize(n);
    let two = T::of_usize(2);
    let four = T::of_usize(4);
    let five = T::of_usize(5);
    n.clone() * n.clone() * n.clone() + five * n.clone() - four * n.clone() * n - two
}

fn centralization_of<T: Accumulator>(scores: &[T], n: usize) -> T {
    let max = scores
        .iter()
        .cloned()
        .fold(T::zero(), |m, b| if b > m { b } else { m });
    let spread = scores
        .iter()
        .fold(T::zero(), |acc, b| acc + (max.clone() - b.clone()));
    spread / centralization_denominator::<T>(n)
}

/// Graph-level betweenness centralization.
pub fn graph_centralization<T: Accumulator>(
    graph: &RoadGraph,
    metric: Metric,
    variant: CentralizationVariant,
) -> Result<T> {
    let n = graph.node_count;
    if n < 3 {
        return Err(Error::Domain(format!(
            "centralization undefined for fewer than 3 nodes (got {n})"
        )));
    }
    let b = node_betweenness::<T>(graph, metric)?;
    Ok(match variant {
        CentralizationVariant::Unnormalized => centralization_of(&b.raw, n),
        CentralizationVariant::PaperLiteral => centralization_of(&b.normalized, n),
    })
}

/// Node scores, centralization and pattern class of one road network.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityResult<T> {
    pub node_scores: Vec<T>,
    /// `None` when the graph has fewer than three nodes.
    pub graph_centralization: Option<T>,
    pub pattern: NetworkPattern,
    pub connected: bool,
}

pub fn analyze<T: Accumulator>(
    graph: &RoadGraph,
    metric: Metric,
    variant: CentralizationVariant,
) -> Result<CentralityResult<T>> {
    let n = graph.node_count;
    let b = node_betweenness::<T>(graph, metric)?;
    let (centralization, pattern) = if n < 3 {
        (None, NetworkPattern::Unclassifiable)
    } else {
        let c = match variant {
            CentralizationVariant::Unnormalized => centralization_of(&b.raw, n),
            CentralizationVariant::PaperLiteral => centralization_of(&b.normalized, n),
        };
        let value = c.to_f64().unwrap_or(f64::NAN).clamp(0.0, 1.0);
        (Some(c), classify_pattern(value)?)
    };
    Ok(CentralityResult {
        node_scores: b.normalized,
        graph_centralization: centralization,
        pattern,
        connected: b.connected,
    })
}

/// Dense 0/1 adjacency matrix with zero diagonal.
pub fn adjacency_matrix(graph: &RoadGraph) -> Vec<Vec<u8>> {
    let n = graph.node_count;
    let mut m = vec![vec![0u8; n]; n];
    for e in &graph.edges {
        m[e.u][e.v] = 1;
        m[e.v][e.u] = 1;
    }
    m
}

struct ShortestPathPass<T> {
    /// Nodes in non-decreasing distance order (reached nodes only).
    order: Vec<usize>,
    preds: Vec<Vec<usize>>,
    sigma: Vec<T>,
}

fn bfs_pass<T: Accumulator>(graph: &RoadGraph, source: usize) -> ShortestPathPass<T> {
    let n = graph.node_count;
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![T::zero(); n];
    let mut preds = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    dist[source] = 0;
    sigma[source] = T::one();
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for w in graph.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] = sigma[w].clone() + sigma[v].clone();
                preds[w].push(v);
            }
        }
    }
    ShortestPathPass { order, preds, sigma }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Path lengths within this relative tolerance count as ties.
const LENGTH_TIE_TOL: f64 = 1e-12;

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= LENGTH_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn dijkstra_pass<T: Accumulator>(graph: &RoadGraph, source: usize) -> ShortestPathPass<T> {
    let n = graph.node_count;
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut sigma = vec![T::zero(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { node: v, .. }) = heap.pop() {
        if settled[v] {
            continue;
        }
        settled[v] = true;
        if v == source {
            sigma[v] = T::one();
        } else {
            sigma[v] = preds[v]
                .iter()
                .fold(T::zero(), |acc, &p| acc + sigma[p].clone());
        }
        order.push(v);
        for &(w, len) in &graph.adjacency[v] {
            if settled[w] {
                continue;
            }
            let candidate = dist[v] + len.expect("lengths checked");
            if dist[w].is_infinite() || (candidate < dist[w] && !same_length(candidate, dist[w])) {
                dist[w] = candidate;
                preds[w].clear();
                preds[w].push(v);
                heap.push(HeapEntry { dist: candidate, node: w });
            } else if same_length(candidate, dist[w]) {
                preds[w].push(v);
            }
        }
    }
    ShortestPathPass { order, preds, sigma }
}
