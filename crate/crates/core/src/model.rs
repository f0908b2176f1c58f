//! The position-sensing network: a residual GCN that scores every node as a
//! potential anchor, a mean-aggregation encoder, optional node-id positional
//! embeddings for anchors, and distance-gated node updates.
//!
//! One forward pass:
//!
//! 1. selector scores `n×1` in `(0, 1)` → ℓ2-normalized likelihoods `o`;
//! 2. anchors = top-k of `o + α·ε`, `ε ~ N(0, I)` from the seeded stream;
//! 3. hop distances from every node to every anchor;
//! 4. encoder embeddings `h⁰`, anchor embeddings `e_a` taken from `h⁰` (and,
//!    in embedded mode, fused with the anchor's positional row);
//! 5. three updates `h ← ReLU(W·[h ; m] + b)` with
//!    `m_v = (1/k) Σ_a w_a · (W_g·s_{v,a} + b_g) ⊙ e_a` and `s_{v,a} = 1/(1+d_{v,a})`.
//!
//! For learned anchors `w_a = o_a·√n`, which is the only path from the task
//! loss back into the selector. Other strategies use `w_a = 1`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{SparseMatrix, Tape, Var};
use crate::centrality::top_k_by_score;
use crate::error::{Error, Result};
use crate::graph::{bfs_distances, Graph};
use crate::params::{gaussian, init_weight, Bound, Checkpoint, ParamStore};

/// Whether anchors carry node-id positional embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Anchor embeddings come from message passing alone.
    #[serde(rename = "S")]
    Simple,
    /// Anchor embeddings are fused with a trainable per-node-id row.
    #[serde(rename = "E")]
    Embedded,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simple => "S",
            Mode::Embedded => "E",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Mode::Simple),
            "E" | "e" => Ok(Mode::Embedded),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}` (expected S or E)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub pos_dim: usize,
    /// Rows of the positional table; only used in embedded mode.
    pub table_rows: usize,
    pub layers: usize,
    pub mode: Mode,
}

impl ModelConfig {
    pub fn new(mode: Mode, input_dim: usize, table_rows: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden: 32,
            pos_dim: 16,
            table_rows,
            layers: 3,
            mode,
        }
    }
}

/// `⌈c·log₂ n⌉`, clamped to `[1, n]`.
pub fn default_anchor_count(n: usize, k_const: f64) -> usize {
    if n <= 1 {
        return n;
    }
    let k = (k_const * (n as f64).log2()).ceil();
    (k.max(1.0) as usize).min(n)
}

/// A graph with its features and aggregation operators precomputed.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    graph: Graph,
    features: Array2<f64>,
    mean_adj: Arc<SparseMatrix>,
    gcn_adj: Arc<SparseMatrix>,
}

impl PreparedGraph {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.node_count();
        let mean_rows = (0..n)
            .map(|v| {
                let nb = graph.neighbors(v);
                let w = 1.0 / nb.len().max(1) as f64;
                nb.iter().map(|&u| (u, w)).collect()
            })
            .collect();
        // D^{-1/2} (A + I) D^{-1/2}
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt())
            .collect();
        let gcn_rows = (0..n)
            .map(|v| {
                let mut row: Vec<(usize, f64)> = graph
                    .neighbors(v)
                    .iter()
                    .map(|&u| (u, inv_sqrt[v] * inv_sqrt[u]))
                    .collect();
                row.push((v, inv_sqrt[v] * inv_sqrt[v]));
                row.sort_by_key(|&(u, _)| u);
                row
            })
            .collect();
        PreparedGraph {
            graph: graph.clone(),
            features: graph.input_features(),
            mean_adj: Arc::new(SparseMatrix::from_rows(n, mean_rows)),
            gcn_adj: Arc::new(SparseMatrix::from_rows(n, gcn_rows)),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

/// Outcome of one anchor-selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSelection {
    /// ℓ2-normalized selector output, one entry per node.
    pub likelihoods: Vec<f64>,
    /// The standard-normal draw (all zeros when `alpha == 0`).
    pub noise: Vec<f64>,
    /// `likelihoods + alpha · noise`
    pub perturbed: Vec<f64>,
    /// Top-k of `perturbed`, ascending.
    pub anchors: Vec<usize>,
    pub alpha: f64,
    /// Set when the selector output had (near) zero norm.
    pub degenerate: bool,
}

/// How a forward pass obtains its anchors.
#[derive(Debug, Clone, Copy)]
pub enum AnchorPlan<'a> {
    /// Selector network with exploration noise `alpha` drawn from `seed`.
    Learned { k: usize, alpha: f64, seed: u64 },
    /// Caller-chosen anchors, unit weights.
    Fixed(&'a [usize]),
    /// No anchors: the encoder output is the embedding.
    Unaware,
}

pub struct Forward {
    pub embeddings: Var,
    pub anchors: Vec<usize>,
    pub selection: Option<AnchorSelection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psgnn {
    config: ModelConfig,
    params: ParamStore,
}

fn check_finite(tape: &Tape, v: Var, context: impl FnOnce() -> String) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context() })
    }
}

impl Psgnn {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.layers == 0 || config.input_dim == 0 {
            return Err(Error::InvalidArgument(
                "hidden width, input width and layer count must be positive".into(),
            ));
        }
        if config.mode == Mode::Embedded && (config.table_rows == 0 || config.pos_dim == 0) {
            return Err(Error::InvalidArgument(
                "embedded mode needs a non-empty positional table".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (config.input_dim, config.hidden);
        let mut p = ParamStore::new();

        p.insert("sel.in.w", init_weight(&mut rng, d, h));
        p.insert("sel.in.b", Array2::zeros((1, h)));
        for l in 0..config.layers {
            p.insert(format!("sel.{l}.w"), init_weight(&mut rng, h, h));
            p.insert(format!("sel.{l}.b"), Array2::zeros((1, h)));
        }
        p.insert("sel.out.w", init_weight(&mut rng, h, 1));
        p.insert("sel.out.b", Array2::zeros((1, 1)));

        for l in 0..config.layers {
            let fan_in = if l == 0 { d } else { h };
            p.insert(format!("enc.{l}.self"), init_weight(&mut rng, fan_in, h));
            p.insert(format!("enc.{l}.nbr"), init_weight(&mut rng, fan_in, h));
            p.insert(format!("enc.{l}.b"), Array2::zeros((1, h)));
        }

        if config.mode == Mode::Embedded {
            p.insert("pos.table", gaussian(&mut rng, config.table_rows, config.pos_dim, 0.1));
            p.insert("pos.fc.w", init_weight(&mut rng, h + config.pos_dim, h));
            p.insert("pos.fc.b", Array2::zeros((1, h)));
        }

        for l in 0..config.layers {
            p.insert(format!("upd.{l}.gate.w"), init_weight(&mut rng, 1, h));
            p.insert(format!("upd.{l}.gate.b"), Array2::zeros((1, h)));
            p.insert(format!("upd.{l}.fuse.w"), init_weight(&mut rng, 2 * h, h));
            p.insert(format!("upd.{l}.fuse.b"), Array2::zeros((1, h)));
        }
        Ok(Psgnn { config, params: p })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Checks that this model can run on `pg`.
    pub fn check_graph(&self, pg: &PreparedGraph) -> Result<()> {
        let n = pg.node_count();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if pg.features.ncols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} input features, graph has {}",
                self.config.input_dim,
                pg.features.ncols()
            )));
        }
        if self.config.mode == Mode::Embedded && self.config.table_rows < n {
            return Err(Error::TableTooSmall {
                rows: self.config.table_rows,
                n,
            });
        }
        Ok(())
    }

    /// Selector scores (`n×1`) in `(0, 1)`: residual GCN followed by a
    /// per-node linear layer and a sigmoid.
    pub fn selector_scores(&self, tape: &mut Tape, p: &Bound, pg: &PreparedGraph) -> Result<Var> {
        let x = tape.constant(pg.features.clone());
        let w = tape.matmul(x, p.var("sel.in.w")?)?;
        let w = tape.add(w, p.var("sel.in.b")?)?;
        let mut h = tape.relu(w);
        for l in 0..self.config.layers {
            let agg = tape.sparse_matmul(&pg.gcn_adj, h)?;
            let z = tape.matmul(agg, p.var(&format!("sel.{l}.w"))?)?;
            let z = tape.add(z, p.var(&format!("sel.{l}.b"))?)?;
            let z = tape.relu(z);
            h = tape.add(h, z)?;
        }
        let s = tape.matmul(h, p.var("sel.out.w")?)?;
        let s = tape.add(s, p.var("sel.out.b")?)?;
        check_finite(tape, s, || "anchor-selection scores".into())?;
        Ok(tape.sigmoid(s))
    }

    /// Runs the selector on `tape` and picks `k` anchors. Returns the
    /// selection and the `n×1` likelihood variable.
    pub fn select_on_tape(
        &self,
        tape: &mut Tape,
        p: &Bound,
        pg: &PreparedGraph,
        k: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<(AnchorSelection, Var)> {
        let n = pg.node_count();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "cannot select {k} anchors from {n} nodes"
            )));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
        }
        let scores = self.selector_scores(tape, p, pg)?;
        let (o, degenerate) = tape.l2_normalize(scores)?;
        let likelihoods: Vec<f64> = tape.value(o).iter().copied().collect();
        let noise: Vec<f64> = if alpha > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        } else {
            vec![0.0; n]
        };
        let perturbed: Vec<f64> = likelihoods
            .iter()
            .zip(&noise)
            .map(|(o, e)| o + alpha * e)
            .collect();
        let anchors = top_k_by_score(&perturbed, k)?;
        Ok((
            AnchorSelection {
                likelihoods,
                noise,
                perturbed,
                anchors,
                alpha,
                degenerate,
            },
            o,
        ))
    }

    /// Stand-alone anchor selection (no gradient bookkeeping kept).
    pub fn select_anchors(&self, pg: &PreparedGraph, k: usize, alpha: f64, seed: u64) -> Result<AnchorSelection> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        self.select_on_tape(&mut tape, &p, pg, k, alpha, seed)
            .map(|(sel, _)| sel)
    }

    /// Mean-aggregation encoder: `h ← ReLU(h·W_self + mean_N(h)·W_nbr + b)`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, pg: &PreparedGraph) -> Result<Var> {
        let mut h = tape.constant(pg.features.clone());
        for l in 0..self.config.layers {
            let own = tape.matmul(h, p.var(&format!("enc.{l}.self"))?)?;
            let agg = tape.sparse_matmul(&pg.mean_adj, h)?;
            let nbr = tape.matmul(agg, p.var(&format!("enc.{l}.nbr"))?)?;
            let z = tape.add(own, nbr)?;
            let z = tape.add(z, p.var(&format!("enc.{l}.b"))?)?;
            h = tape.relu(z);
        }
        Ok(h)
    }

    /// Rows of `encoded` at `anchors`, fused with positional rows in
    /// embedded mode.
    pub fn anchor_embeddings_on_tape(
        &self,
        tape: &mut Tape,
        p: &Bound,
        encoded: Var,
        anchors: &[usize],
    ) -> Result<Var> {
        let n = tape.value(encoded).nrows();
        if let Some(&bad) = anchors.iter().find(|&&a| a >= n) {
            return Err(Error::NodeOutOfRange { node: bad, n });
        }
        let e = tape.gather_rows(encoded, anchors)?;
        match self.config.mode {
            Mode::Simple => Ok(e),
            Mode::Embedded => {
                if let Some(&bad) = anchors.iter().find(|&&a| a >= self.config.table_rows) {
                    return Err(Error::TableTooSmall {
                        rows: self.config.table_rows,
                        n: bad + 1,
                    });
                }
                let pos = tape.gather_rows(p.var("pos.table")?, anchors)?;
                let cat = tape.concat_cols(&[e, pos])?;
                let z = tape.matmul(cat, p.var("pos.fc.w")?)?;
                tape.add(z, p.var("pos.fc.b")?)
            }
        }
    }

    /// `k×h` anchor embeddings for `pg`, evaluated eagerly.
    pub fn anchor_embeddings(&self, pg: &PreparedGraph, anchors: &[usize]) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let h = self.encode(&mut tape, &p, pg)?;
        let e = self.anchor_embeddings_on_tape(&mut tape, &p, h, anchors)?;
        Ok(tape.value(e).clone())
    }

    /// The positional-table row for `node`.
    pub fn positional_embedding(&self, node: usize) -> Result<ArrayView1<'_, f64>> {
        let table = self
            .params
            .get("pos.table")
            .ok_or_else(|| Error::InvalidArgument("simple-mode model has no positional table".into()))?;
        if node >= table.nrows() {
            return Err(Error::TableTooSmall {
                rows: table.nrows(),
                n: node + 1,
            });
        }
        Ok(table.row(node))
    }

    /// One distance-gated update.
    ///
    /// `gates` is the constant `n×k` matrix of `1/(1+d)`, `anchor_weights`
    /// is `1×k`, `anchor_embs` is `k×h`.
    #[allow(clippy::too_many_arguments)]
    pub fn node_update(
        &self,
        tape: &mut Tape,
        p: &Bound,
        layer: usize,
        node_embs: Var,
        anchor_embs: Var,
        gates: Var,
        anchor_weights: Var,
    ) -> Result<Var> {
        let k = tape.value(anchor_embs).nrows();
        if tape.value(gates).ncols() != k || tape.value(anchor_weights).dim() != (1, k) {
            return Err(Error::Shape(format!(
                "node_update: {k} anchor embeddings, gates {:?}, weights {:?}",
                tape.value(gates).dim(),
                tape.value(anchor_weights).dim()
            )));
        }
        let gw = p.var(&format!("upd.{layer}.gate.w"))?;
        let gb = p.var(&format!("upd.{layer}.gate.b"))?;
        // Σ_a w_a s_{v,a} (W_g ⊙ e_a) + Σ_a w_a (b_g ⊙ e_a)
        let weighted_gates = tape.mul(gates, anchor_weights)?;
        let scaled = tape.mul(anchor_embs, gw)?;
        let slope = tape.matmul(weighted_gates, scaled)?;
        let shifted = tape.mul(anchor_embs, gb)?;
        let offset = tape.matmul(anchor_weights, shifted)?;
        let sum = tape.add(slope, offset)?;
        let message = tape.scale(sum, 1.0 / k as f64);
        self.fuse(tape, p, layer, node_embs, message)
    }

    fn fuse(&self, tape: &mut Tape, p: &Bound, layer: usize, node_embs: Var, message: Var) -> Result<Var> {
        let cat = tape.concat_cols(&[node_embs, message])?;
        let z = tape.matmul(cat, p.var(&format!("upd.{layer}.fuse.w"))?)?;
        let z = tape.add(z, p.var(&format!("upd.{layer}.fuse.b"))?)?;
        let out = tape.relu(z);
        check_finite(tape, out, || format!("node update layer {layer}"))?;
        Ok(out)
    }

    /// Full forward pass on `tape`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        p: &Bound,
        pg: &PreparedGraph,
        plan: AnchorPlan<'_>,
    ) -> Result<Forward> {
        self.check_graph(pg)?;
        let n = pg.node_count();
        let (anchors, weights, selection) = match plan {
            AnchorPlan::Unaware => {
                let h = self.encode(tape, p, pg)?;
                return Ok(Forward {
                    embeddings: h,
                    anchors: Vec::new(),
                    selection: None,
                });
            }
            AnchorPlan::Fixed(anchors) => {
                if anchors.is_empty() {
                    return Err(Error::InvalidArgument("empty anchor set".into()));
                }
                let mut sorted = anchors.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                let w = tape.constant(Array2::ones((1, sorted.len())));
                (sorted, w, None)
            }
            AnchorPlan::Learned { k, alpha, seed } => {
                let (sel, o) = self.select_on_tape(tape, p, pg, k, alpha, seed)?;
                let picked = tape.gather_rows(o, &sel.anchors)?;
                let row = tape.transpose(picked);
                let w = tape.scale(row, (n as f64).sqrt());
                (sel.anchors.clone(), w, Some(sel))
            }
        };

        let field = bfs_distances(pg.graph(), &anchors)?;
        let gates = field.matrix().mapv(|d| 1.0 / (1.0 + d as f64));
        let gates = tape.constant(gates);

        let encoded = self.encode(tape, p, pg)?;
        let anchor_embs = self.anchor_embeddings_on_tape(tape, p, encoded, &anchors)?;
        let mut h = encoded;
        for layer in 0..self.config.layers {
            h = self.node_update(tape, p, layer, h, anchor_embs, gates, weights)?;
        }
        Ok(Forward {
            embeddings: h,
            anchors,
            selection,
        })
    }

    /// Eager forward pass returning the `n×h` embedding matrix.
    pub fn embed(&self, pg: &PreparedGraph, plan: AnchorPlan<'_>) -> Result<(Array2<f64>, Vec<usize>, Option<AnchorSelection>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let f = self.forward_on_tape(&mut tape, &p, pg, plan)?;
        Ok((tape.value(f.embeddings).clone(), f.anchors, f.selection))
    }

    /// Like [`Psgnn::embed`] with fixed anchors but every message zeroed, so
    /// only the encoder and fusion layers act.
    pub fn embed_without_messages(&self, pg: &PreparedGraph) -> Result<Array2<f64>> {
        self.check_graph(pg)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut h = self.encode(&mut tape, &p, pg)?;
        let zeros = tape.constant(Array2::zeros((pg.node_count(), self.config.hidden)));
        for layer in 0..self.config.layers {
            h = self.fuse(&mut tape, &p, layer, h, zeros)?;
        }
        Ok(tape.value(h).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            params: self.params.clone(),
            ..Default::default()
        };
        let c = &self.config;
        for (k, v) in [
            ("mode", c.mode.to_string()),
            ("input_dim", c.input_dim.to_string()),
            ("hidden", c.hidden.to_string()),
            ("pos_dim", c.pos_dim.to_string()),
            ("table_rows", c.table_rows.to_string()),
            ("layers", c.layers.to_string()),
        ] {
            ck.meta.insert(k.to_string(), v);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let field = |key: &str| -> Result<&str> {
            ck.meta
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("meta `{key}` is not an integer")))
        };
        let config = ModelConfig {
            mode: field("mode")?.parse()?,
            input_dim: num("input_dim")?,
            hidden: num("hidden")?,
            pos_dim: num("pos_dim")?,
            table_rows: num("table_rows")?,
            layers: num("layers")?,
        };
        // Validate the parameter set against a freshly shaped model.
        let template = Psgnn::new(config.clone(), 0)?;
        for (name, m) in template.params.iter() {
            let got = ck
                .params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if got.dim() != m.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` is {:?}, expected {:?}",
                    got.dim(),
                    m.dim()
                )));
            }
        }
        if ck.params.len() != template.params.len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        if !ck.params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(Psgnn {
            config,
            params: ck.params.clone(),
        })
    }
}
