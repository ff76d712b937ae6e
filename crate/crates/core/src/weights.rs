//! Zone proximity matrices for the CAR prior.
//!
//! Three weightings of the same neighbor list: binary adjacency, shared
//! boundary length, and total lanes of the arterials crossing the shared
//! boundary. Matrices are stored as symmetric neighbor lists; a dense view
//! and an upper-triangle triple export are available.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One adjacent zone pair with its raw proximity attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    pub i: usize,
    pub j: usize,
    pub boundary_km: f64,
    /// Total lanes over all arterials connecting the two zones.
    pub lanes: u32,
}

impl NeighborPair {
    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// Zone count plus the list of adjacent pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTopology {
    zone_count: usize,
    pairs: Vec<NeighborPair>,
}

impl ZoneTopology {
    /// Validates and canonicalizes the pair list (`i < j`, sorted).
    ///
    /// A pair listed twice (in either orientation) is accepted only when
    /// both listings carry identical attributes.
    pub fn new(zone_count: usize, pairs: Vec<NeighborPair>) -> Result<Self> {
        if zone_count == 0 {
            return Err(Error::Validation("topology must have at least one zone".into()));
        }
        let mut unique: BTreeMap<(usize, usize), NeighborPair> = BTreeMap::new();
        for p in pairs {
            if p.i >= zone_count || p.j >= zone_count {
                return Err(Error::Validation(format!(
                    "pair ({}, {}) references a zone outside [0, {zone_count})",
                    p.i, p.j
                )));
            }
            if p.i == p.j {
                return Err(Error::Validation(format!("pair ({}, {}) pairs a zone with itself", p.i, p.j)));
            }
            if !(p.boundary_km.is_finite() && p.boundary_km > 0.0) {
                return Err(Error::Validation(format!(
                    "pair ({}, {}) has non-positive boundary length {}",
                    p.i, p.j, p.boundary_km
                )));
            }
            let (i, j) = p.key();
            let canonical = NeighborPair { i, j, ..p };
            match unique.get(&(i, j)) {
                Some(prev) if *prev != canonical => {
                    return Err(Error::Validation(format!(
                        "pair ({i}, {j}) listed twice with conflicting attributes"
                    )))
                }
                Some(_) => {}
                None => {
                    unique.insert((i, j), canonical);
                }
            }
        }
        Ok(Self {
            zone_count,
            pairs: unique.into_values().collect(),
        })
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    pub fn pairs(&self) -> &[NeighborPair] {
        &self.pairs
    }

    /// Parses `zones N` followed by `i j boundary_km lanes` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut zone_count = None;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0].eq_ignore_ascii_case("zones") {
                if fields.len() != 2 || zone_count.is_some() {
                    return Err(Error::parse(line_no, "expected a single `zones N` header"));
                }
                zone_count = Some(
                    fields[1]
                        .parse::<usize>()
                        .map_err(|_| Error::parse(line_no, format!("bad zone count `{}`", fields[1])))?,
                );
                continue;
            }
            if zone_count.is_none() {
                return Err(Error::parse(line_no, "missing `zones N` header"));
            }
            if fields.len() != 4 {
                return Err(Error::parse(line_no, "expected `i j boundary_km lanes`"));
            }
            let bad = |what: &str, s: &str| Error::parse(line_no, format!("bad {what} `{s}`"));
            pairs.push(NeighborPair {
                i: fields[0].parse().map_err(|_| bad("zone id", fields[0]))?,
                j: fields[1].parse().map_err(|_| bad("zone id", fields[1]))?,
                boundary_km: fields[2].parse().map_err(|_| bad("boundary length", fields[2]))?,
                lanes: fields[3].parse().map_err(|_| bad("lane count", fields[3]))?,
            });
        }
        let zone_count = zone_count.ok_or_else(|| Error::Validation("missing `zones N` header".into()))?;
        Self::new(zone_count, pairs)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("zones {}\n", self.zone_count);
        for p in &self.pairs {
            out.push_str(&format!("{} {} {} {}\n", p.i, p.j, p.boundary_km, p.lanes));
        }
        out
    }
}

/// Which attribute becomes the weight `w_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Adjacency,
    BoundaryLength,
    LaneCount,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Adjacency => "adjacency",
            WeightMode::BoundaryLength => "boundary_length",
            WeightMode::LaneCount => "lane_count",
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" => Ok(Self::Adjacency),
            "boundary_length" => Ok(Self::BoundaryLength),
            "lane_count" => Ok(Self::LaneCount),
            other => Err(Error::Validation(format!("unknown weight mode `{other}`"))),
        }
    }
}

/// Symmetric nonnegative zone-by-zone weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix<T> {
    /// `None` for matrices loaded from a triple file.
    mode: Option<WeightMode>,
    neighbors: Vec<Vec<(usize, T)>>,
    row_sums: Vec<T>,
}

/// Connected components under the `w_ij > 0` relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<usize>,
    pub count: usize,
}

impl Components {
    pub fn members(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Builds the proximity matrix of `topology` under `mode`.
///
/// In lane-count mode a pair with zero connecting lanes is not a neighbor.
pub fn build_weights<T: Scalar>(topology: &ZoneTopology, mode: WeightMode) -> ProximityMatrix<T> {
    let triples = topology.pairs.iter().filter_map(|p| {
        let w = match mode {
            WeightMode::Adjacency => 1.0,
            WeightMode::BoundaryLength => p.boundary_km,
            WeightMode::LaneCount => f64::from(p.lanes),
        };
        (w > 0.0).then(|| (p.i, p.j, T::lit(w)))
    });
    let mut m = ProximityMatrix::assemble(topology.zone_count, triples);
    m.mode = Some(mode);
    m
}

impl<T: Scalar> ProximityMatrix<T> {
    fn assemble(n: usize, triples: impl Iterator<Item = (usize, usize, T)>) -> Self {
        let mut neighbors: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, j, w) in triples {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for row in &mut neighbors {
            row.sort_by_key(|&(j, _)| j);
        }
        let row_sums = neighbors
            .iter()
            .map(|row| row.iter().fold(T::zero(), |acc, &(_, w)| acc + w))
            .collect();
        Self {
            mode: None,
            neighbors,
            row_sums,
        }
    }

    /// Matrix from explicit `(i, j, w)` triples; `(j, i)` is implied.
    ///
    /// Zero weights are dropped. A pair listed in both orientations must
    /// carry the same weight.
    pub fn from_triples(n: usize, triples: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("matrix must have at least one zone".into()));
        }
        let mut unique: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for &(i, j, w) in triples {
            if i >= n || j >= n {
                return Err(Error::Validation(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            if i == j {
                return Err(Error::Validation(format!("diagonal entry ({i}, {j}) must be zero")));
            }
            if !(w.is_finite() && w >= T::zero()) {
                return Err(Error::Validation(format!("entry ({i}, {j}) has invalid weight {w}")));
            }
            let key = (i.min(j), i.max(j));
            match unique.get(&key) {
                Some(&prev) if prev != w => {
                    return Err(Error::Validation(format!(
                        "entry ({}, {}) listed twice with weights {prev} and {w}",
                        key.0, key.1
                    )))
                }
                _ => {
                    unique.insert(key, w);
                }
            }
        }
        Ok(Self::assemble(
            n,
            unique.into_iter().filter(|&(_, w)| w > T::zero()).map(|((i, j), w)| (i, j, w)),
        ))
    }

    pub fn mode(&self) -> Option<WeightMode> {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Nonzero entries of row `i` as `(j, w_ij)`, sorted by `j`.
    pub fn neighbors(&self, i: usize) -> &[(usize, T)] {
        &self.neighbors[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.neighbors[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|pos| self.neighbors[i][pos].1)
            .unwrap_or_else(|_| T::zero())
    }

    /// `w_{i+}` for every zone.
    pub fn row_sums(&self) -> &[T] {
        &self.row_sums
    }

    /// Zones with `w_{i+} = 0`.
    pub fn islands(&self) -> Vec<usize> {
        self.row_sums
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == T::zero())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_islands(&self) -> bool {
        self.row_sums.iter().any(|&s| s == T::zero())
    }

    pub fn dense(&self) -> Vec<Vec<T>> {
        let n = self.len();
        let mut out = vec![vec![T::zero(); n]; n];
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, w) in row {
                out[i][j] = w;
            }
        }
        out
    }

    /// Upper-triangle nonzero entries `(i, j, w)` with `i < j`.
    pub fn triples(&self) -> Vec<(usize, usize, T)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&(j, _)| j > i).map(move |&(j, w)| (i, j, w)))
            .collect()
    }

    /// Number of unordered neighbor pairs.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn connected_components(&self) -> Components {
        let n = self.len();
        let mut labels = vec![usize::MAX; n];
        let mut count = 0;
        for start in 0..n {
            if labels[start] != usize::MAX {
                continue;
            }
            labels[start] = count;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.neighbors[u] {
                    if labels[v] == usize::MAX {
                        labels[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        Components { labels, count }
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            mode: self.mode,
            neighbors: self
                .neighbors
                .iter()
                .map(|row| row.iter().map(|&(j, w)| (j, w * factor)).collect())
                .collect(),
            row_sums: self.row_sums.iter().map(|&s| s * factor).collect(),
        }
    }

    /// Weight-matrix file body: `zones N` header then `i j w` per upper-triangle entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(mode) = self.mode {
            out.push_str(&format!("# mode {mode}\n"));
        }
        out.push_str(&format!("zones {}\n", self.len()));
        for (i, j, w) in self.triples() {
            out.push_str(&format!("{i} {j} {w}\n"));
        }
        out
    }

    /// Parses the weight-matrix file. Without a `zones N` header the size is
    /// inferred as the largest id plus one.
    pub fn parse(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut mode = None;
        let mut triples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = raw.trim();
            if let Some(rest) = trimmed.strip_prefix("# mode ") {
                mode = Some(rest.trim().parse::<WeightMode>().map_err(|e| Error::parse(line_no, e.to_string()))?);
                continue;
            }
            let line = trimmed.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0].eq_ignore_ascii_case("zones") {
                if fields.len() != 2 || declared.is_some() {
                    return Err(Error::parse(line_no, "expected a single `zones N` header"));
                }
                declared = Some(
                    fields[1]
                        .parse::<usize>()
                        .map_err(|_| Error::parse(line_no, format!("bad zone count `{}`", fields[1])))?,
                );
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::parse(line_no, "expected `i j w`"));
            }
            let bad = |s: &str| Error::parse(line_no, format!("bad field `{s}`"));
            let i: usize = fields[0].parse().map_err(|_| bad(fields[0]))?;
            let j: usize = fields[1].parse().map_err(|_| bad(fields[1]))?;
            let w: f64 = fields[2].parse().map_err(|_| bad(fields[2]))?;
            triples.push((i, j, T::lit(w)));
        }
        let inferred = triples.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
        let n = declared.unwrap_or(inferred);
        let mut m = Self::from_triples(n, &triples)?;
        m.mode = mode;
        Ok(m)
    }

    /// Lossless-as-possible conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ProximityMatrix<U> {
        let conv = |w: T| U::from_f64(w.to_f64().expect("finite weight")).expect("representable weight");
        ProximityMatrix {
            mode: self.mode,
            neighbors: self
                .neighbors
                .iter()
                .map(|row| row.iter().map(|&(j, w)| (j, conv(w))).collect())
                .collect(),
            row_sums: self.row_sums.iter().map(|&s| conv(s)).collect(),
        }
    }
}
