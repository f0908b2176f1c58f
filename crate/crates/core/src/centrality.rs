//! Node centrality indices and score-based anchor picking, the rule-based
//! alternatives to learned anchor selection.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralityKind {
    Degree,
    Betweenness,
    Closeness,
    Harmonic,
    Load,
}

impl CentralityKind {
    pub const ALL: [CentralityKind; 5] = [
        CentralityKind::Degree,
        CentralityKind::Betweenness,
        CentralityKind::Closeness,
        CentralityKind::Harmonic,
        CentralityKind::Load,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CentralityKind::Degree => "degree",
            CentralityKind::Betweenness => "betweenness",
            CentralityKind::Closeness => "closeness",
            CentralityKind::Harmonic => "harmonic",
            CentralityKind::Load => "load",
        }
    }
}

impl fmt::Display for CentralityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CentralityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CentralityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown centrality `{s}`")))
    }
}

/// One score per node, tagged with the index that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub kind: CentralityKind,
    pub scores: Vec<f64>,
}

pub fn centrality(g: &Graph, kind: CentralityKind) -> Result<ScoreVector> {
    if g.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let scores = match kind {
        CentralityKind::Degree => (0..g.node_count()).map(|v| g.degree(v) as f64).collect(),
        CentralityKind::Betweenness => betweenness(g),
        CentralityKind::Closeness => distance_based(g, |reach, total| {
            if total == 0 {
                0.0
            } else {
                (reach - 1) as f64 / total as f64
            }
        }),
        CentralityKind::Harmonic => harmonic(g),
        CentralityKind::Load => load(g),
    };
    Ok(ScoreVector { kind, scores })
}

/// BFS shortest-path DAG from `source`: visit order, distances, path counts
/// and predecessor lists.
struct ShortestPathDag {
    order: Vec<usize>,
    dist: Vec<usize>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
}

fn shortest_path_dag(g: &Graph, source: usize) -> ShortestPathDag {
    let n = g.node_count();
    let mut dag = ShortestPathDag {
        order: Vec::with_capacity(n),
        dist: vec![usize::MAX; n],
        sigma: vec![0.0; n],
        preds: vec![Vec::new(); n],
    };
    let mut queue = VecDeque::new();
    dag.dist[source] = 0;
    dag.sigma[source] = 1.0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        dag.order.push(v);
        for &w in g.neighbors(v) {
            if dag.dist[w] == usize::MAX {
                dag.dist[w] = dag.dist[v] + 1;
                queue.push_back(w);
            }
            if dag.dist[w] == dag.dist[v] + 1 {
                dag.sigma[w] += dag.sigma[v];
                dag.preds[w].push(v);
            }
        }
    }
    dag
}

/// Brandes' accumulation, unnormalized, each unordered pair counted once.
fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut bc = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for s in 0..n {
        let dag = shortest_path_dag(g, s);
        for &v in &dag.order {
            delta[v] = 0.0;
        }
        for &w in dag.order.iter().rev() {
            for &v in &dag.preds[w] {
                delta[v] += dag.sigma[v] / dag.sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc.iter_mut().for_each(|x| *x /= 2.0);
    bc
}

/// Newman's load: every target sends one unit back toward the source,
/// splitting evenly among its shortest-path predecessors.
fn load(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut total = vec![0.0; n];
    let mut flow = vec![0.0; n];
    for s in 0..n {
        let dag = shortest_path_dag(g, s);
        for &v in &dag.order {
            flow[v] = 1.0;
        }
        for &v in dag.order.iter().rev() {
            if v == s {
                continue;
            }
            let share = flow[v] / dag.preds[v].len() as f64;
            for &x in &dag.preds[v] {
                if x != s {
                    flow[x] += share;
                }
            }
        }
        for &v in &dag.order {
            if v != s {
                total[v] += flow[v] - 1.0;
            }
        }
    }
    total.iter_mut().for_each(|x| *x /= 2.0);
    total
}

fn distance_based(g: &Graph, score: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..g.node_count())
        .map(|v| {
            let dag = shortest_path_dag(g, v);
            let total: usize = dag.order.iter().map(|&u| dag.dist[u]).sum();
            score(dag.order.len(), total)
        })
        .collect()
}

fn harmonic(g: &Graph) -> Vec<f64> {
    (0..g.node_count())
        .map(|v| {
            let dag = shortest_path_dag(g, v);
            dag.order
                .iter()
                .filter(|&&u| u != v)
                .map(|&u| 1.0 / dag.dist[u] as f64)
                .sum()
        })
        .collect()
}

/// The `k` highest-scoring nodes, lowest id first among equal scores,
/// returned in ascending id order.
pub fn top_k_by_score(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {k} anchors from {} nodes",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).unwrap()
    }

    #[test]
    fn path_betweenness() {
        let s = centrality(&path(3), CentralityKind::Betweenness).unwrap();
        assert_eq!(s.scores, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn star_distance_indices() {
        let h = centrality(&star(3), CentralityKind::Harmonic).unwrap();
        assert_relative_eq!(h.scores[0], 3.0);
        let c = centrality(&star(3), CentralityKind::Closeness).unwrap();
        assert_relative_eq!(c.scores[0], 1.0);
        assert_relative_eq!(c.scores[1], 3.0 / 5.0);
    }

    #[test]
    fn isolated_node_closeness_is_zero() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let c = centrality(&g, CentralityKind::Closeness).unwrap();
        assert_eq!(c.scores, vec![1.0, 1.0, 0.0]);
        let h = centrality(&g, CentralityKind::Harmonic).unwrap();
        assert_eq!(h.scores[2], 0.0);
    }

    #[test]
    fn load_splits_evenly_where_brandes_weights_by_path_count() {
        // Node 6 is reached from 0 through 3 (two paths) and through 4 (one path).
        let g = Graph::from_edges(
            7,
            [(0, 1), (0, 2), (1, 3), (2, 3), (0, 5), (5, 4), (3, 6), (4, 6)],
        )
        .unwrap();
        let b = centrality(&g, CentralityKind::Betweenness).unwrap().scores;
        let l = centrality(&g, CentralityKind::Load).unwrap().scores;
        assert!((b[3] - l[3]).abs() > 1e-3);
        // Both distribute sum over pairs of (d - 1).
        assert_relative_eq!(b.iter().sum::<f64>(), l.iter().sum::<f64>(), epsilon = 1e-9);
    }

    #[test]
    fn top_k_rules() {
        assert_eq!(top_k_by_score(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(top_k_by_score(&[1.0; 4], 2).unwrap(), vec![0, 1]);
        let deg = centrality(&star(4), CentralityKind::Degree).unwrap();
        assert_eq!(top_k_by_score(&deg.scores, 1).unwrap(), vec![0]);
        assert!(top_k_by_score(&[1.0, 2.0], 3).is_err());
        assert!(top_k_by_score(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn kind_parsing() {
        for k in CentralityKind::ALL {
            assert_eq!(k.name().parse::<CentralityKind>().unwrap(), k);
        }
        assert!("eigenvector".parse::<CentralityKind>().is_err());
    }

    #[test]
    fn empty_graph_rejected() {
        let g = Graph::from_edges(0, []).unwrap();
        assert!(matches!(centrality(&g, CentralityKind::Degree), Err(Error::EmptyGraph)));
    }
}
