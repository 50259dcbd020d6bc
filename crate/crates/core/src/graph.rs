//! Graph representation, instance parsing and small-graph canonical forms.
//!
//! Vertices are 0-based in memory. The DIMACS and rudy formats are 1-based;
//! conversion happens only in the parsers and serializers below.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest graph order accepted by [`canonical_key`].
pub const MAX_CANONICAL_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// How repeated vertex pairs in the input are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duplicates {
    /// Keep one copy (DIMACS lists both orientations).
    Collapse,
    /// Add the weights (rudy).
    SumWeights,
}

/// Undirected graph on `n` vertices with real edge weights (1.0 when unweighted).
///
/// Edges satisfy `u < v`, contain no self-loops or duplicates and are kept
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<bool>,
}

impl WeightedGraph {
    /// Builds a graph from 0-based `(u, v, w)` triples.
    pub fn new<I>(n: usize, edges: I, duplicates: Duplicates) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has a vertex outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", a + 1)));
            }
            let key = (a.min(b), a.max(b));
            match (merged.get_mut(&key), duplicates) {
                (Some(acc), Duplicates::SumWeights) => *acc += w,
                (Some(_), Duplicates::Collapse) => {}
                (None, _) => {
                    merged.insert(key, w);
                }
            }
        }
        let mut adjacency = vec![false; n * n];
        let edges = merged
            .into_iter()
            .map(|((u, v), weight)| {
                adjacency[u * n + v] = true;
                adjacency[v * n + u] = true;
                Edge { u, v, weight }
            })
            .collect();
        Ok(Self {
            n,
            edges,
            adjacency,
        })
    }

    /// Unweighted graph from 0-based vertex pairs.
    pub fn unweighted<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(
            n,
            pairs.into_iter().map(|(u, v)| (u, v, 1.0)),
            Duplicates::Collapse,
        )
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            adjacency: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::unweighted(n, pairs).expect("complete graph is valid")
    }

    pub fn cycle(n: usize) -> Self {
        Self::unweighted(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle is valid")
    }

    pub fn path(n: usize) -> Self {
        Self::unweighted(n, (1..n).map(|i| (i - 1, i))).expect("path is valid")
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.n + v]
    }

    pub fn is_unweighted(&self) -> bool {
        self.edges.iter().all(|e| e.weight == 1.0)
    }

    pub fn degree(&self, v: usize) -> usize {
        (0..self.n).filter(|&u| self.has_edge(u, v)).count()
    }

    pub fn complement(&self) -> Self {
        let pairs = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.has_edge(i, j))
            .collect::<Vec<_>>();
        Self::unweighted(self.n, pairs).expect("complement is valid")
    }

    /// `L = Diag(W 1) - W` for the weighted adjacency matrix `W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.u, e.v)] -= e.weight;
            l[(e.v, e.u)] -= e.weight;
            l[(e.u, e.u)] += e.weight;
            l[(e.v, e.v)] += e.weight;
        }
        l
    }

    /// Total weight of edges with endpoints on different sides of `signs`.
    pub fn cut_weight(&self, signs: &[i8]) -> f64 {
        self.edges
            .iter()
            .filter(|e| signs[e.u] != signs[e.v])
            .map(|e| e.weight)
            .sum()
    }

    /// Induced subgraph on `subset`, relabelled `0..k` in subset order.
    pub fn induced_subgraph(&self, subset: &VertexSubset) -> WeightedGraph {
        let vs = subset.vertices();
        let k = vs.len();
        let mut edges = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                if self.has_edge(vs[a], vs[b]) {
                    let w = self.weight(vs[a], vs[b]);
                    edges.push((a, b, w));
                }
            }
        }
        WeightedGraph::new(k, edges, Duplicates::Collapse).expect("induced subgraph is valid")
    }

    /// Number of edges with both endpoints in `subset`.
    pub fn edges_within(&self, subset: &VertexSubset) -> usize {
        let vs = subset.vertices();
        let mut count = 0;
        for a in 0..vs.len() {
            for b in a + 1..vs.len() {
                if self.has_edge(vs[a], vs[b]) {
                    count += 1;
                }
            }
        }
        count
    }

    fn weight(&self, u: usize, v: usize) -> f64 {
        let key = (u.min(v), u.max(v));
        self.edges
            .binary_search_by(|e| (e.u, e.v).cmp(&key))
            .map(|i| self.edges[i].weight)
            .unwrap_or(0.0)
    }

    /// Bitmask over the pairs `(i, j)`, `i < j`, in row-major order.
    pub(crate) fn pair_mask(&self) -> u64 {
        assert!(self.n <= 11, "pair mask needs n <= 11");
        let mut mask = 0u64;
        let mut bit = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    mask |= 1 << bit;
                }
                bit += 1;
            }
        }
        mask
    }

    /// DIMACS `p edge` serialization (weights dropped).
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p edge {} {}\n", self.n, self.edges.len());
        for e in &self.edges {
            out.push_str(&format!("e {} {}\n", e.u + 1, e.v + 1));
        }
        out
    }

    /// rudy `n m` / `i j w` serialization.
    pub fn to_rudy(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for e in &self.edges {
            out.push_str(&format!("{} {} {}\n", e.u + 1, e.v + 1, e.weight));
        }
        out
    }
}

/// Strictly increasing list of distinct vertices, `2 <= k <= n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexSubset(Vec<usize>);

impl VertexSubset {
    /// Validates and sorts 0-based vertex indices.
    pub fn new(mut vertices: Vec<usize>, n: usize) -> Result<Self> {
        vertices.sort_unstable();
        if vertices.len() < 2 || vertices.len() > n {
            return Err(Error::InvalidSubset(format!(
                "size {} not in 2..={n}",
                vertices.len()
            )));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSubset("repeated vertex".into()));
        }
        if let Some(&v) = vertices.last().filter(|&&v| v >= n) {
            return Err(Error::InvalidSubset(format!("vertex {} outside 1..={n}", v + 1)));
        }
        Ok(Self(vertices))
    }

    /// `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based labels for reports.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Display for VertexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.0.iter().map(|v| (v + 1).to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
}

fn parse_index(token: Option<&str>, line: usize, what: &str) -> Result<usize> {
    token
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))?
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("invalid {what}")))
}

fn check_vertex(v: usize, n: usize, line: usize) -> Result<usize> {
    if v == 0 || v > n {
        return Err(Error::parse(line, format!("vertex {v} out of range 1..={n}")));
    }
    Ok(v - 1)
}

/// Parses a DIMACS `.col` edge file (`c` comments, `p edge n m`, `e i j`).
pub fn parse_dimacs(text: &str) -> Result<WeightedGraph> {
    let mut n: Option<usize> = None;
    let mut pairs = Vec::new();
    for (line_no, line) in lines(text) {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None | Some("c") => {}
            Some("p") => {
                if n.is_some() {
                    return Err(Error::parse(line_no, "duplicate problem line"));
                }
                match tokens.next() {
                    Some("edge") | Some("col") | Some("edges") => {}
                    _ => return Err(Error::parse(line_no, "expected `p edge n m`")),
                }
                n = Some(parse_index(tokens.next(), line_no, "vertex count")?);
                parse_index(tokens.next(), line_no, "edge count")?;
            }
            Some("e") => {
                let n = n.ok_or_else(|| Error::parse(line_no, "edge before `p edge` header"))?;
                let a = check_vertex(parse_index(tokens.next(), line_no, "vertex")?, n, line_no)?;
                let b = check_vertex(parse_index(tokens.next(), line_no, "vertex")?, n, line_no)?;
                if a == b {
                    return Err(Error::parse(line_no, format!("self-loop at vertex {}", a + 1)));
                }
                pairs.push((a, b, 1.0));
            }
            Some(other) => {
                return Err(Error::parse(line_no, format!("unknown line type `{other}`")))
            }
        }
    }
    let n = n.ok_or_else(|| Error::parse(0, "missing `p edge n m` header"))?;
    WeightedGraph::new(n, pairs, Duplicates::Collapse)
}

/// Parses the rudy format: `n m` followed by `m` lines `i j w`.
pub fn parse_rudy(text: &str) -> Result<WeightedGraph> {
    let mut it = lines(text).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = it.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let mut tokens = header.split_whitespace();
    let n = parse_index(tokens.next(), header_line, "vertex count")?;
    let m = parse_index(tokens.next(), header_line, "edge count")?;
    let mut edges = Vec::with_capacity(m);
    let mut last_line = header_line;
    for (line_no, line) in it {
        last_line = line_no;
        let mut tokens = line.split_whitespace();
        let a = check_vertex(parse_index(tokens.next(), line_no, "vertex")?, n, line_no)?;
        let b = check_vertex(parse_index(tokens.next(), line_no, "vertex")?, n, line_no)?;
        if a == b {
            return Err(Error::parse(line_no, format!("self-loop at vertex {}", a + 1)));
        }
        let w = tokens
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing weight"))?
            .parse::<f64>()
            .map_err(|_| Error::parse(line_no, "invalid weight"))?;
        edges.push((a, b, w));
    }
    if edges.len() != m {
        return Err(Error::parse(
            last_line,
            format!("header announces {m} edges but {} were listed", edges.len()),
        ));
    }
    WeightedGraph::new(n, edges, Duplicates::SumWeights)
}

/// Isomorphism-invariant key of a small unweighted graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey {
    order: u8,
    mask: u64,
}

/// Canonical key together with the relabelling that attains it:
/// vertex `a` of the canonical graph is vertex `perm[a]` of the input.
pub fn canonical_form(g: &WeightedGraph) -> Result<(CanonicalKey, Vec<usize>)> {
    let k = g.order();
    if k > MAX_CANONICAL_ORDER {
        return Err(Error::UnsupportedSize {
            got: k,
            max: MAX_CANONICAL_ORDER,
        });
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best_mask = permuted_mask(g, &perm);
    let mut best_perm = perm.clone();
    // Heap's algorithm over all k! relabellings.
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let mask = permuted_mask(g, &perm);
            if mask < best_mask {
                best_mask = mask;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((
        CanonicalKey {
            order: k as u8,
            mask: best_mask,
        },
        best_perm,
    ))
}

/// Equal for isomorphic graphs, different otherwise (orders up to 8).
pub fn canonical_key(g: &WeightedGraph) -> Result<CanonicalKey> {
    canonical_form(g).map(|(key, _)| key)
}

fn permuted_mask(g: &WeightedGraph, perm: &[usize]) -> u64 {
    let k = perm.len();
    let mut mask = 0u64;
    let mut bit = 0;
    for a in 0..k {
        for b in a + 1..k {
            if g.has_edge(perm[a], perm[b]) {
                mask |= 1 << bit;
            }
            bit += 1;
        }
    }
    mask
}
