//! Undirected simple graphs, the synthetic generators used throughout the
//! experiments, hop-distance fields, and the k-hop coverage utilities.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// An immutable undirected graph without self-loops or parallel edges.
///
/// Edges are stored with `u < v`, sorted lexicographically. Neighbor lists are
/// sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Option<Array2<f64>>,
    communities: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge iterator.
    ///
    /// Self-loops and duplicate edges are dropped; see [`Graph::from_edges_counted`]
    /// to learn how many were discarded.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::from_edges_counted(n, edges).map(|(g, _)| g)
    }

    /// Like [`Graph::from_edges`] but also reports what was dropped.
    pub fn from_edges_counted<I>(n: usize, edges: I) -> Result<(Self, DropCounts)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        let mut dropped = DropCounts::default();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::NodeOutOfRange { node: u.max(v), n });
            }
            if u == v {
                dropped.self_loops += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                dropped.duplicates += 1;
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok((
            Graph {
                n,
                edges,
                adjacency,
                features: None,
                communities: None,
            },
            dropped,
        ))
    }

    /// Attaches an `n × d` node feature matrix.
    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.n {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows, graph has {} nodes",
                features.nrows(),
                self.n
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    /// Attaches one community label per node.
    pub fn with_communities(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} community labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.communities = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn communities(&self) -> Option<&[usize]> {
        self.communities.as_deref()
    }

    /// Input features for the networks: the attached matrix, or a constant
    /// column of ones for featureless graphs.
    pub fn input_features(&self) -> Array2<f64> {
        match &self.features {
            Some(x) => x.clone(),
            None => Array2::ones((self.n, 1)),
        }
    }

    /// Same node set and annotations, different edge set.
    pub fn with_edge_subset(&self, edges: &[(usize, usize)]) -> Result<Graph> {
        let mut g = Graph::from_edges(self.n, edges.iter().copied())?;
        g.features = self.features.clone();
        g.communities = self.communities.clone();
        Ok(g)
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let d = bfs_from(self, 0);
        d.iter().all(|&x| x != usize::MAX)
    }

    /// Serializes to the edge-list text format read by [`load_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Returns a copy with node `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Shape("permutation length differs from node count".into()));
        }
        Graph::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }
}

/// Self-loops and duplicates discarded while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Connected caveman graph: `communities` cliques of `size` nodes arranged in
/// a ring. In clique `i` the edge `(i·s, i·s+1)` is removed and replaced by
/// `(i·s, ((i+1) mod c)·s + 1)`. Node `v` belongs to community `v / size`.
pub fn gen_caveman(communities: usize, size: usize) -> Result<Graph> {
    if communities < 2 || size < 3 {
        return Err(Error::InvalidArgument(format!(
            "caveman graph needs at least 2 communities of size 3 (got c={communities}, s={size})"
        )));
    }
    let n = communities * size;
    let mut edges = Vec::with_capacity(communities * size * (size - 1) / 2);
    for i in 0..communities {
        let base = i * size;
        for a in 0..size {
            for b in (a + 1)..size {
                if a == 0 && b == 1 {
                    continue;
                }
                edges.push((base + a, base + b));
            }
        }
        edges.push((base, ((i + 1) % communities) * size + 1));
    }
    let labels = (0..n).map(|v| v / size).collect();
    Graph::from_edges(n, edges)?.with_communities(labels)
}

/// `rows × cols` lattice with 4-neighborhoods; node `(r, c)` has id `r·cols + c`.
pub fn gen_grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive (got {rows}×{cols})"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::from_edges(rows * cols, edges)
}

/// Parses whitespace-separated `u v` pairs, one per line.
///
/// Blank lines and lines starting with `#` are ignored, except a `# nodes N`
/// header, which sets a lower bound on the node count so isolated trailing
/// nodes survive a round trip.
pub fn parse_edge_list(text: &str) -> Result<(Graph, DropCounts)> {
    let mut pairs = Vec::new();
    let mut declared = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            if parts.next() == Some("nodes") {
                if let Some(Ok(n)) = parts.next().map(str::parse::<usize>) {
                    declared = n;
                }
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut next_id = || -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected two node ids".into(),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{tok}` is not a non-negative integer"),
            })
        };
        let u = next_id()?;
        let v = next_id()?;
        if tokens.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: "more than two tokens".into(),
            });
        }
        pairs.push((u, v));
    }
    if pairs.is_empty() && declared == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "edge list is empty".into(),
        });
    }
    let min_n = pairs.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    Graph::from_edges_counted(declared.max(min_n), pairs)
}

/// Reads an edge-list file; see [`parse_edge_list`].
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(Graph, DropCounts)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_edge_list(&text)
}

/// Hop distances from a set of anchors, one column per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    dist: Array2<usize>,
    anchors: Vec<usize>,
}

impl DistanceField {
    /// The value stored for nodes in a different component than the anchor.
    /// Equal to the node count, so strictly larger than any real distance.
    pub fn unreachable(&self) -> usize {
        self.dist.nrows()
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn get(&self, node: usize, anchor_idx: usize) -> usize {
        self.dist[[node, anchor_idx]]
    }

    pub fn column(&self, anchor_idx: usize) -> Vec<usize> {
        self.dist.column(anchor_idx).to_vec()
    }

    pub fn matrix(&self) -> &Array2<usize> {
        &self.dist
    }
}

/// Single-source BFS; `usize::MAX` marks unreachable nodes.
fn bfs_from(g: &Graph, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &w in &g.adjacency[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// BFS that stops expanding past `max_hops`.
fn bfs_truncated(g: &Graph, source: usize, max_hops: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        if dist[u] == max_hops {
            continue;
        }
        for &w in &g.adjacency[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Exact hop counts from every source to every node.
pub fn bfs_distances(g: &Graph, sources: &[usize]) -> Result<DistanceField> {
    let n = g.n;
    let mut dist = Array2::zeros((n, sources.len()));
    for (j, &s) in sources.iter().enumerate() {
        if s >= n {
            return Err(Error::NodeOutOfRange { node: s, n });
        }
        for (v, d) in bfs_from(g, s).into_iter().enumerate() {
            dist[[v, j]] = if d == usize::MAX { n } else { d };
        }
    }
    Ok(DistanceField {
        dist,
        anchors: sources.to_vec(),
    })
}

/// All-pairs hop distances as an `n × n` matrix (unreachable = n).
pub fn all_pairs_distances(g: &Graph) -> Array2<usize> {
    let all: Vec<usize> = (0..g.n).collect();
    bfs_distances(g, &all)
        .map(|f| f.dist)
        .unwrap_or_else(|_| Array2::zeros((0, 0)))
}

/// The k-th power closure: `(u, v)` is an edge iff `1 ≤ d(u, v) ≤ k`.
pub fn khop_closure(g: &Graph, k: usize) -> Result<Graph> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut edges = Vec::new();
    for u in 0..g.n {
        for (v, d) in bfs_truncated(g, u, k).into_iter().enumerate() {
            if v > u && d != usize::MAX && d >= 1 {
                edges.push((u, v));
            }
        }
    }
    let mut out = Graph::from_edges(g.n, edges)?;
    out.features = g.features.clone();
    out.communities = g.communities.clone();
    Ok(out)
}

/// True iff every node lies within `k` hops of some anchor.
pub fn coverage_check(g: &Graph, anchors: &[usize], k: usize) -> Result<bool> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("anchor set is empty".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a >= g.n) {
        return Err(Error::NodeOutOfRange { node: bad, n: g.n });
    }
    let mut covered = vec![false; g.n];
    for &a in anchors {
        for (v, d) in bfs_truncated(g, a, k).into_iter().enumerate() {
            if d != usize::MAX {
                covered[v] = true;
            }
        }
    }
    Ok(covered.into_iter().all(|c| c))
}

/// Greedy k-hop dominating set: repeatedly take the node whose k-hop ball
/// covers the most still-uncovered nodes, lowest id on ties. An
/// approximation, not a minimum.
pub fn greedy_dominating_set(g: &Graph, k: usize) -> Result<Vec<usize>> {
    if g.n == 0 {
        return Err(Error::EmptyGraph);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let balls: Vec<Vec<usize>> = (0..g.n)
        .map(|u| {
            bfs_truncated(g, u, k)
                .into_iter()
                .enumerate()
                .filter(|&(_, d)| d != usize::MAX)
                .map(|(v, _)| v)
                .collect()
        })
        .collect();
    let mut covered = vec![false; g.n];
    let mut remaining = g.n;
    let mut chosen = Vec::new();
    while remaining > 0 {
        let (best, gain) = balls
            .iter()
            .enumerate()
            .map(|(u, ball)| (u, ball.iter().filter(|&&v| !covered[v]).count()))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        debug_assert!(gain > 0);
        for &v in &balls[best] {
            if !covered[v] {
                covered[v] = true;
                remaining -= 1;
            }
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    Ok(chosen)
}
