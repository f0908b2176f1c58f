//! Slow, obviously-correct reference implementations used as test oracles.

#![allow(dead_code)]

use anchorlab::autodiff::{Tape, Var};
use anchorlab::graph::{gen_caveman, Graph};
use anchorlab::model::{AnchorPlan, PreparedGraph};
use anchorlab::{Mode, ModelConfig, Psgnn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Erdős–Rényi G(n, p) from a seed.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Random labelled tree on `n` nodes: node `i` attaches to a uniform earlier node.
pub fn random_tree(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<_> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

/// Floyd–Warshall hop distances; unreachable pairs get `n`.
pub fn floyd_warshall(g: &Graph) -> Array2<usize> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = Array2::from_elem((n, n), inf);
    for v in 0..n {
        d[[v, v]] = 0;
    }
    for &(u, v) in g.edges() {
        d[[u, v]] = 1;
        d[[v, u]] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[[i, k]] + d[[k, j]];
                if via < d[[i, j]] {
                    d[[i, j]] = via;
                }
            }
        }
    }
    d.mapv(|x| if x >= inf { n } else { x })
}

/// Pairs within `k` hops via boolean powers of `A + I`.
pub fn khop_by_matrix_power(g: &Graph, k: usize) -> Vec<(usize, usize)> {
    let n = g.node_count();
    let mut step = Array2::from_elem((n, n), false);
    for v in 0..n {
        step[[v, v]] = true;
    }
    for &(u, v) in g.edges() {
        step[[u, v]] = true;
        step[[v, u]] = true;
    }
    let mut reach = step.clone();
    for _ in 1..k {
        let mut next = Array2::from_elem((n, n), false);
        for i in 0..n {
            for j in 0..n {
                next[[i, j]] = (0..n).any(|m| reach[[i, m]] && step[[m, j]]);
            }
        }
        reach = next;
    }
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if reach[[u, v]] {
                out.push((u, v));
            }
        }
    }
    out
}

/// Betweenness by enumerating every shortest path explicitly.
pub fn brute_betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let d = floyd_warshall(g);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            if d[[s, t]] >= n {
                continue;
            }
            let mut paths = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(path) = stack.pop() {
                let last = *path.last().unwrap();
                if last == t {
                    paths.push(path);
                    continue;
                }
                for &w in g.neighbors(last) {
                    if d[[s, w]] == path.len() && d[[w, t]] + path.len() == d[[s, t]] {
                        let mut p = path.clone();
                        p.push(w);
                        stack.push(p);
                    }
                }
            }
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    bc[v] += 1.0 / total;
                }
            }
        }
    }
    bc
}

/// P(score_pos > score_neg) + ½·P(tie) over all positive–negative pairs.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut count = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            count += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / count
}

/// Two-sided Wilcoxon p by listing all 2ⁿ sign assignments explicitly.
pub fn wilcoxon_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    // Average ranks by direct counting.
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&x| {
            let below = abs.iter().filter(|&&y| y < x).count() as f64;
            let equal = abs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

/// Checks d loss / d x for a loss built by `build` from a single input.
pub fn check_unary(x0: &Array2<f64>, build: impl Fn(&mut Tape, Var) -> Var) {
    let mut tape = Tape::new();
    let x = tape.param(x0.clone());
    let loss = build(&mut tape, x);
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.get(x).cloned().unwrap_or_else(|| Array2::zeros(x0.dim()));

    let eval = |x: Array2<f64>| {
        let mut t = Tape::new();
        let v = t.param(x);
        let l = build(&mut t, v);
        t.scalar(l)
    };
    for idx in ndarray::indices(x0.dim()) {
        let mut plus = x0.clone();
        plus[idx] += H;
        let mut minus = x0.clone();
        minus[idx] -= H;
        let numeric = (eval(plus) - eval(minus)) / (2.0 * H);
        let err = rel_err(analytic[idx], numeric);
        assert!(
            err < TOL,
            "entry {idx:?}: analytic {} vs numeric {numeric} (rel err {err:e})",
            analytic[idx]
        );
    }
}

/// Whole-model gradient: every parameter entry of a small network against
/// finite differences of the pair loss.
pub fn check_model(mode: Mode, plan: impl Fn() -> AnchorPlan<'static>) {
    let g = gen_caveman(2, 4).unwrap();
    let pg = PreparedGraph::new(&g);
    let mut cfg = ModelConfig::new(mode, 1, g.node_count());
    cfg.hidden = 4;
    cfg.pos_dim = 3;
    let model = Psgnn::new(cfg, 11).unwrap();
    let pairs = [(0usize, 1usize, 1.0), (0, 5, 0.0), (2, 3, 1.0), (3, 6, 0.0)];

    let loss_of = |m: &Psgnn| -> (Tape, anchorlab::params::Bound, Var) {
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        let fwd = m.forward_on_tape(&mut tape, &bound, &pg, plan()).unwrap();
        let us: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let vs: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let hu = tape.gather_rows(fwd.embeddings, &us).unwrap();
        let hv = tape.gather_rows(fwd.embeddings, &vs).unwrap();
        let prod = tape.mul(hu, hv).unwrap();
        let logits = tape.row_sum(prod);
        let probs = tape.sigmoid(logits);
        let labels = Array2::from_shape_vec((pairs.len(), 1), pairs.iter().map(|p| p.2).collect()).unwrap();
        let loss = tape.bce(probs, labels).unwrap();
        (tape, bound, loss)
    };

    let (tape, bound, loss) = loss_of(&model);
    let mut grads = tape.backward(loss).unwrap();
    let analytic = bound.collect(model.params(), &mut grads);

    let mut checked = 0;
    for (name, value) in model.params().iter() {
        for idx in ndarray::indices(value.dim()) {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut().get_mut(name).unwrap()[idx] += delta;
                let (t, _, l) = loss_of(&m);
                t.scalar(l)
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            let a = analytic[name][idx];
            let err = rel_err(a, numeric);
            assert!(err < TOL, "{name}{idx:?}: analytic {a} vs numeric {numeric} (rel err {err:e})");
            checked += 1;
        }
    }
    assert!(checked > 50);
}

