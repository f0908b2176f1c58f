//! Pair datasets, the pair scoring head, ROC AUC, and the training loop
//! shared by every anchor strategy.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{sigmoid, Tape, Var};
use crate::centrality::{centrality, top_k_by_score, CentralityKind};
use crate::error::{Error, Result};
use crate::graph::{gen_caveman, gen_grid, load_edge_list, Graph};
use crate::model::{default_anchor_count, AnchorPlan, Mode, ModelConfig, PreparedGraph, Psgnn};
use crate::params::AdamState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Do two nodes share a community?
    PairCommunity,
    /// Is there an edge between two nodes?
    Link,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::PairCommunity => "pair-community",
            Task::Link => "link",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair-community" | "community" => Ok(Task::PairCommunity),
            "link" => Ok(Task::Link),
            _ => Err(Error::InvalidArgument(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Labelled node pairs for one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDataset {
    pub task: Task,
    pub split: Split,
    pub pairs: Vec<(usize, usize, bool)>,
}

impl PairDataset {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.2).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }

    fn endpoints(&self) -> (Vec<usize>, Vec<usize>) {
        self.pairs.iter().map(|&(u, v, _)| (u, v)).unzip()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.2).collect()
    }
}

/// Train/valid/test pair sets plus the graph that message passing may see.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: PairDataset,
    pub valid: PairDataset,
    pub test: PairDataset,
    pub message_graph: Graph,
}

/// SplitMix64 finalizer; derives independent sub-seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPLIT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TRAIN_NOISE: u64 = 3;
const STREAM_RANDOM_ANCHORS: u64 = 4;
const STREAM_EVAL_ANCHORS: u64 = 5;

fn ordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Edge split: 10% valid, 10% test (floors), the rest train. Each split gets
/// as many sampled non-edges as it has edges; the non-edges are distinct
/// across splits. Only training edges remain in the message-passing graph.
pub fn split_link(g: &Graph, seed: u64) -> Result<TaskData> {
    let m = g.edge_count();
    if m < 10 {
        return Err(Error::Dataset(format!("link prediction needs at least 10 edges, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_SPLIT));
    let mut edges = g.edges().to_vec();
    edges.shuffle(&mut rng);
    let n_valid = m / 10;
    let n_test = m / 10;
    let n_train = m - n_valid - n_test;

    let n = g.node_count();
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut negatives = Vec::with_capacity(m);
    let max_attempts = 100 * m;
    let mut attempts = 0;
    while negatives.len() < m {
        if attempts >= max_attempts {
            return Err(Error::Dataset(format!(
                "found only {} of {m} non-edges after {max_attempts} attempts",
                negatives.len()
            )));
        }
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let key = ordered(u, v);
        if used.insert(key) {
            negatives.push(key);
        }
    }

    let make = |split, pos: &[(usize, usize)], neg: &[(usize, usize)]| PairDataset {
        task: Task::Link,
        split,
        pairs: pos
            .iter()
            .map(|&(u, v)| (u, v, true))
            .chain(neg.iter().map(|&(u, v)| (u, v, false)))
            .collect(),
    };
    let (tr_pos, rest) = edges.split_at(n_train);
    let (va_pos, te_pos) = rest.split_at(n_valid);
    let (tr_neg, rest) = negatives.split_at(n_train);
    let (va_neg, te_neg) = rest.split_at(n_valid);
    Ok(TaskData {
        train: make(Split::Train, tr_pos, tr_neg),
        valid: make(Split::Valid, va_pos, va_neg),
        test: make(Split::Test, te_pos, te_neg),
        message_graph: g.with_edge_subset(tr_pos)?,
    })
}

/// Per-class pair counts for each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl PairCounts {
    /// 10% valid and 10% test (floors, at least one each), the rest train.
    pub fn proportional(per_class: usize) -> Self {
        let valid = (per_class / 10).max(1);
        let test = (per_class / 10).max(1);
        PairCounts {
            train: per_class.saturating_sub(valid + test),
            valid,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

fn count_cross_pairs(labels: &[usize]) -> usize {
    let mut sizes = std::collections::HashMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0usize) += 1;
    }
    let n = labels.len();
    let same: usize = sizes.values().map(|&s| s * (s - 1) / 2).sum();
    n * (n - 1) / 2 - same
}

/// Same-community pairs (label 1) against cross-community pairs (label 0),
/// balanced per split and sampled without replacement.
pub fn split_pairs_community(g: &Graph, seed: u64, counts: PairCounts) -> Result<TaskData> {
    let labels = g
        .communities()
        .ok_or_else(|| Error::Dataset("graph has no community labels".into()))?;
    let distinct: HashSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Dataset("need at least two communities".into()));
    }
    if counts.train == 0 || counts.valid == 0 || counts.test == 0 {
        return Err(Error::Dataset("every split needs at least one pair per class".into()));
    }
    let need = counts.total();
    let n = g.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_SPLIT));

    let mut positives: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| labels[u] == labels[v])
        .collect();
    let cross = count_cross_pairs(labels);
    if positives.len() < need || cross < need {
        return Err(Error::Dataset(format!(
            "need {need} pairs per class, have {} same-community and {cross} cross-community",
            positives.len()
        )));
    }
    positives.shuffle(&mut rng);
    positives.truncate(need);

    // Rejection sampling is fine while the request is a small share of all
    // cross pairs; fall back to enumeration otherwise.
    let negatives: Vec<(usize, usize)> = if need * 4 <= cross {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(need);
        while out.len() < need {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if labels[u] == labels[v] {
                continue;
            }
            let key = ordered(u, v);
            if seen.insert(key) {
                out.push(key);
            }
        }
        out
    } else {
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| labels[u] != labels[v])
            .collect();
        all.shuffle(&mut rng);
        all.truncate(need);
        all
    };

    let make = |split, range: std::ops::Range<usize>| PairDataset {
        task: Task::PairCommunity,
        split,
        pairs: positives[range.clone()]
            .iter()
            .map(|&(u, v)| (u, v, true))
            .chain(negatives[range].iter().map(|&(u, v)| (u, v, false)))
            .collect(),
    };
    let a = counts.train;
    let b = a + counts.valid;
    Ok(TaskData {
        train: make(Split::Train, 0..a),
        valid: make(Split::Valid, a..b),
        test: make(Split::Test, b..need),
        message_graph: g.clone(),
    })
}

/// `σ(h_u · h_v)`
pub fn pair_score(hu: &[f64], hv: &[f64]) -> Result<f64> {
    if hu.len() != hv.len() {
        return Err(Error::Shape(format!(
            "pair_score: {} vs {} dimensions",
            hu.len(),
            hv.len()
        )));
    }
    Ok(sigmoid(hu.iter().zip(hv).map(|(a, b)| a * b).sum()))
}

/// Rank-statistic ROC AUC with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "roc_auc: {} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Stats("roc_auc needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            context: "roc_auc scores".into(),
        });
    }
    let ranks = crate::stats::average_ranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Where anchors come from during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Selector network with exploration noise.
    Learned(Mode),
    /// Uniform without replacement, redrawn every epoch and every evaluation.
    Random(Mode),
    /// Fixed top-k by a centrality index on the message-passing graph.
    Centrality(CentralityKind, Mode),
    /// No anchors at all: plain three-layer message passing.
    Unaware,
}

impl Strategy {
    pub fn mode(self) -> Mode {
        match self {
            Strategy::Learned(m) | Strategy::Random(m) | Strategy::Centrality(_, m) => m,
            Strategy::Unaware => Mode::Simple,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = |m: &Mode| if *m == Mode::Embedded { "-E" } else { "" };
        match self {
            Strategy::Learned(m) => write!(f, "learned-{m}"),
            Strategy::Random(m) => write!(f, "random{}", suffix(m)),
            Strategy::Centrality(k, m) => write!(f, "centrality-{k}{}", suffix(m)),
            Strategy::Unaware => f.write_str("none"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts `learned-S`, `learned-E`, `random[-E]`,
    /// `centrality-<kind>[-E]` (or `centrality:<kind>`), and `none`.
    fn from_str(s: &str) -> Result<Self> {
        let (base, mode) = match s.strip_suffix("-E").or_else(|| s.strip_suffix("-e")) {
            Some(b) => (b, Mode::Embedded),
            None => (s.strip_suffix("-S").unwrap_or(s), Mode::Simple),
        };
        if base == "learned" {
            return Ok(Strategy::Learned(mode));
        }
        if base == "random" {
            return Ok(Strategy::Random(mode));
        }
        if base == "none" && mode == Mode::Simple {
            return Ok(Strategy::Unaware);
        }
        if let Some(kind) = base
            .strip_prefix("centrality-")
            .or_else(|| base.strip_prefix("centrality:"))
        {
            return Ok(Strategy::Centrality(kind.parse()?, mode));
        }
        Err(Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A graph source: a generator with parameters or an edge-list file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Caveman { communities: usize, size: usize },
    Grid { rows: usize, cols: usize },
    EdgeList { path: PathBuf },
}

impl DatasetSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            DatasetSpec::Caveman { communities, size } => gen_caveman(*communities, *size),
            DatasetSpec::Grid { rows, cols } => gen_grid(*rows, *cols),
            DatasetSpec::EdgeList { path } => load_edge_list(path).map(|(g, _)| g),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Caveman { communities, size } => write!(f, "caveman-c{communities}-s{size}"),
            DatasetSpec::Grid { rows, cols } => write!(f, "grid-{rows}x{cols}"),
            DatasetSpec::EdgeList { path } => write!(f, "edges:{}", path.display()),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    /// Parses the `Display` form: `caveman-c2-s8`, `grid-16x16`, `edges:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized dataset `{s}`"));
        if let Some(path) = s.strip_prefix("edges:") {
            return Ok(DatasetSpec::EdgeList { path: path.into() });
        }
        if let Some(rest) = s.strip_prefix("caveman-c") {
            let (c, sz) = rest.split_once("-s").ok_or_else(bad)?;
            return Ok(DatasetSpec::Caveman {
                communities: c.parse().map_err(|_| bad())?,
                size: sz.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("grid-") {
            let (r, c) = rest.split_once('x').ok_or_else(bad)?;
            return Ok(DatasetSpec::Grid {
                rows: r.parse().map_err(|_| bad())?,
                cols: c.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Exploration noise scale during training; evaluation always uses 0.
    pub alpha: f64,
    /// Anchors per graph: `⌈k_const · log₂ n⌉`.
    pub k_const: f64,
    pub hidden: usize,
    pub pos_dim: usize,
    /// Upper bound on pairs per class for the community task.
    pub max_pairs_per_class: usize,
    /// Evaluate on valid/test every this many epochs (and after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-3,
            alpha: 0.5,
            k_const: 1.0,
            hidden: 32,
            pos_dim: 16,
            max_pairs_per_class: 4000,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if !(self.k_const > 0.0 && self.k_const.is_finite()) {
            return bad("k_const must be positive");
        }
        if self.hidden == 0 || self.eval_every == 0 {
            return bad("hidden and eval_every must be positive");
        }
        Ok(())
    }
}

/// Builds the split for `task` on `g`.
pub fn make_task_data(g: &Graph, task: Task, seed: u64, cfg: &TrainConfig) -> Result<TaskData> {
    match task {
        Task::Link => split_link(g, seed),
        Task::PairCommunity => {
            let labels = g
                .communities()
                .ok_or_else(|| Error::Dataset("graph has no community labels".into()))?;
            let n = labels.len();
            let same: usize = {
                let mut sizes = std::collections::HashMap::new();
                for &l in labels {
                    *sizes.entry(l).or_insert(0usize) += 1;
                }
                sizes.values().map(|&s| s * (s - 1) / 2).sum()
            };
            let cross = n * n.saturating_sub(1) / 2 - same;
            let per_class = same.min(cross).min(cfg.max_pairs_per_class);
            split_pairs_community(g, seed, PairCounts::proportional(per_class))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    /// `None` on epochs without an evaluation.
    pub valid_auc: Option<f64>,
}

/// Anchors chosen at one training epoch and their likelihoods (1.0 for
/// strategies without a selector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorStep {
    pub epoch: usize,
    pub anchors: Vec<usize>,
    pub likelihoods: Vec<f64>,
}

/// Everything one training run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task: Task,
    pub dataset: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub nodes: usize,
    pub anchors_per_graph: usize,
    pub config: TrainConfig,
    pub curve: Vec<EpochStat>,
    /// 1-based epoch whose parameters scored best on validation.
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    pub test_auc: f64,
    /// Anchors used for the reported test AUC.
    pub eval_anchors: Vec<usize>,
    pub anchor_trace: Vec<AnchorStep>,
}

/// Column order of [`RunRecord::csv_row`].
pub const CSV_HEADER: [&str; 14] = [
    "run_id",
    "task",
    "dataset",
    "strategy",
    "seed",
    "nodes",
    "k",
    "epochs",
    "alpha",
    "lr",
    "best_epoch",
    "best_valid_auc",
    "test_auc",
    "eval_anchors",
];

impl RunRecord {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.task.to_string(),
            self.dataset.clone(),
            self.strategy.to_string(),
            self.seed.to_string(),
            self.nodes.to_string(),
            self.anchors_per_graph.to_string(),
            self.config.epochs.to_string(),
            format!("{:?}", self.config.alpha),
            format!("{:?}", self.config.lr),
            self.best_epoch.to_string(),
            format!("{:?}", self.best_valid_auc),
            format!("{:?}", self.test_auc),
            self.eval_anchors
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        ]
    }

    /// Anchor trace as CSV: `epoch,anchor,likelihood`, one row per anchor.
    pub fn anchor_trace_csv(&self) -> String {
        let mut out = String::from("epoch,anchor,likelihood\n");
        for step in &self.anchor_trace {
            for (a, o) in step.anchors.iter().zip(&step.likelihoods) {
                let _ = writeln!(out, "{},{a},{o:?}", step.epoch);
            }
        }
        out
    }
}

/// Stable identifier of (task, dataset, strategy, seed, config).
pub fn run_id(task: Task, dataset: &str, strategy: Strategy, seed: u64, cfg: &TrainConfig) -> String {
    let key = serde_json::json!({
        "task": task,
        "dataset": dataset,
        "strategy": strategy,
        "seed": seed,
        "config": cfg,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-node share of the last `window` epochs in which the node was an anchor.
pub fn selection_frequency(trace: &[AnchorStep], n: usize, window: usize) -> Vec<f64> {
    let start = trace.len().saturating_sub(window);
    let steps = &trace[start..];
    let mut freq = vec![0.0; n];
    for step in steps {
        for &a in &step.anchors {
            if a < n {
                freq[a] += 1.0;
            }
        }
    }
    if !steps.is_empty() {
        freq.iter_mut().for_each(|f| *f /= steps.len() as f64);
    }
    freq
}

fn pair_logits(tape: &mut Tape, embeddings: Var, data: &PairDataset) -> Result<Var> {
    let (us, vs) = data.endpoints();
    let hu = tape.gather_rows(embeddings, &us)?;
    let hv = tape.gather_rows(embeddings, &vs)?;
    let prod = tape.mul(hu, hv)?;
    Ok(tape.row_sum(prod))
}

fn pair_loss(tape: &mut Tape, embeddings: Var, data: &PairDataset) -> Result<Var> {
    let logits = pair_logits(tape, embeddings, data)?;
    let probs = tape.sigmoid(logits);
    let labels = Array2::from_shape_vec(
        (data.pairs.len(), 1),
        data.pairs.iter().map(|p| if p.2 { 1.0 } else { 0.0 }).collect(),
    )
    .map_err(|e| Error::Shape(e.to_string()))?;
    tape.bce(probs, labels)
}

/// AUC of `σ(h_u·h_v)` over a pair set given eager embeddings.
pub fn evaluate_pairs(embeddings: &Array2<f64>, data: &PairDataset) -> Result<f64> {
    let scores = data
        .pairs
        .iter()
        .map(|&(u, v, _)| {
            pair_score(
                embeddings.row(u).as_slice().unwrap_or(&embeddings.row(u).to_vec()),
                embeddings.row(v).as_slice().unwrap_or(&embeddings.row(v).to_vec()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    roc_auc(&scores, &data.labels())
}

fn sample_anchors(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

fn model_config(strategy: Strategy, pg: &PreparedGraph, cfg: &TrainConfig) -> ModelConfig {
    let mut mc = ModelConfig::new(
        strategy.mode(),
        pg.graph().input_features().ncols(),
        pg.node_count(),
    );
    mc.hidden = cfg.hidden;
    mc.pos_dim = cfg.pos_dim;
    if mc.mode == Mode::Simple {
        mc.table_rows = 0;
    }
    mc
}

/// Resolves anchors for one forward pass.
struct AnchorSource {
    strategy: Strategy,
    k: usize,
    alpha: f64,
    seed: u64,
    fixed: Vec<usize>,
}

impl AnchorSource {
    fn new(strategy: Strategy, pg: &PreparedGraph, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let n = pg.node_count();
        let k = default_anchor_count(n, cfg.k_const);
        let fixed = match strategy {
            Strategy::Centrality(kind, _) => {
                top_k_by_score(&centrality(pg.graph(), kind)?.scores, k)?
            }
            _ => Vec::new(),
        };
        Ok(AnchorSource {
            strategy,
            k,
            alpha: cfg.alpha,
            seed,
            fixed,
        })
    }

    /// Holds the randomly drawn anchors so the plan can borrow them.
    fn plan<'a>(&'a self, epoch: usize, training: bool, scratch: &'a mut Vec<usize>, n: usize) -> AnchorPlan<'a> {
        match self.strategy {
            Strategy::Learned(_) => AnchorPlan::Learned {
                k: self.k,
                alpha: if training { self.alpha } else { 0.0 },
                seed: mix_seed(mix_seed(self.seed, STREAM_TRAIN_NOISE), epoch as u64),
            },
            Strategy::Random(_) => {
                let stream = if training { STREAM_RANDOM_ANCHORS } else { STREAM_EVAL_ANCHORS };
                *scratch = sample_anchors(n, self.k, mix_seed(mix_seed(self.seed, stream), epoch as u64));
                AnchorPlan::Fixed(scratch)
            }
            Strategy::Centrality(..) => AnchorPlan::Fixed(&self.fixed),
            Strategy::Unaware => AnchorPlan::Unaware,
        }
    }
}

/// Full-batch training with Adam; reports test AUC at the best validation
/// epoch and returns the model parameters from that epoch.
pub fn train(
    g: &Graph,
    dataset: &str,
    task: Task,
    strategy: Strategy,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RunRecord, Psgnn)> {
    cfg.validate()?;
    let data = make_task_data(g, task, seed, cfg)?;
    train_on(&data, dataset, task, strategy, cfg, seed)
}

/// [`train`] on a prepared split.
pub fn train_on(
    data: &TaskData,
    dataset: &str,
    task: Task,
    strategy: Strategy,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RunRecord, Psgnn)> {
    cfg.validate()?;
    let pg = PreparedGraph::new(&data.message_graph);
    let n = pg.node_count();
    let mut model = Psgnn::new(model_config(strategy, &pg, cfg), mix_seed(seed, STREAM_INIT))?;
    let source = AnchorSource::new(strategy, &pg, cfg, seed)?;
    let mut adam = AdamState::new(cfg.lr);

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, f64, Vec<usize>, Psgnn)> = None;
    let mut scratch = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let plan = source.plan(epoch, true, &mut scratch, n);
        let fwd = model.forward_on_tape(&mut tape, &bound, &pg, plan)?;
        let loss = pair_loss(&mut tape, fwd.embeddings, &data.train)?;
        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: loss_value,
            });
        }
        if strategy != Strategy::Unaware {
            let likelihoods = match &fwd.selection {
                Some(sel) => fwd.anchors.iter().map(|&a| sel.likelihoods[a]).collect(),
                None => vec![1.0; fwd.anchors.len()],
            };
            trace.push(AnchorStep {
                epoch,
                anchors: fwd.anchors.clone(),
                likelihoods,
            });
        }
        let mut grads = tape.backward(loss)?;
        let grads = bound.collect(model.params(), &mut grads);
        drop(tape);
        adam.step(model.params_mut(), &grads)?;
        if !model.params().all_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }

        let mut valid_auc = None;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let plan = source.plan(epoch, false, &mut scratch, n);
            let (emb, anchors, _) = model.embed(&pg, plan)?;
            let v = evaluate_pairs(&emb, &data.valid)?;
            let t = evaluate_pairs(&emb, &data.test)?;
            valid_auc = Some(v);
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((epoch, v, t, anchors, model.clone()));
            }
        }
        curve.push(EpochStat {
            epoch,
            loss: loss_value,
            valid_auc,
        });
    }

    let (best_epoch, best_valid_auc, test_auc, eval_anchors, best_model) =
        best.expect("the last epoch is always evaluated");
    let record = RunRecord {
        run_id: run_id(task, dataset, strategy, seed, cfg),
        task,
        dataset: dataset.to_string(),
        strategy,
        seed,
        nodes: n,
        anchors_per_graph: source.k,
        config: cfg.clone(),
        curve,
        best_epoch,
        best_valid_auc,
        test_auc,
        eval_anchors,
        anchor_trace: trace,
    };
    Ok((record, best_model))
}

/// Applies a frozen model to another graph: anchors from its selector with
/// no noise, AUC on the target's split for `seed`.
pub fn transfer_eval(
    model: &Psgnn,
    target: &Graph,
    dataset: &str,
    task: Task,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RunRecord> {
    let data = make_task_data(target, task, seed, cfg)?;
    let pg = PreparedGraph::new(&data.message_graph);
    model.check_graph(&pg)?;
    let n = pg.node_count();
    let k = default_anchor_count(n, cfg.k_const);
    let (emb, anchors, _) = model.embed(&pg, AnchorPlan::Learned { k, alpha: 0.0, seed: 0 })?;
    let valid = evaluate_pairs(&emb, &data.valid)?;
    let test = evaluate_pairs(&emb, &data.test)?;
    let strategy = Strategy::Learned(model.mode());
    Ok(RunRecord {
        run_id: run_id(task, dataset, strategy, seed, cfg),
        task,
        dataset: dataset.to_string(),
        strategy,
        seed,
        nodes: n,
        anchors_per_graph: k,
        config: cfg.clone(),
        curve: Vec::new(),
        best_epoch: 0,
        best_valid_auc: valid,
        test_auc: test,
        eval_anchors: anchors,
        anchor_trace: Vec::new(),
    })
}
