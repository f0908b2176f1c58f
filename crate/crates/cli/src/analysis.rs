use std::collections::BTreeMap;
use std::path::Path;

use anchorlab::centrality::{centrality, CentralityKind};
use anchorlab::params::Checkpoint;
use anchorlab::stats::{kendall, spearman, wilcoxon_signed_rank, StatReport};
use anchorlab::tasks::{make_task_data, selection_frequency, transfer_eval};
use anchorlab::{DatasetSpec, Psgnn, Strategy};
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::store::{read_rows, ResultStore};

/// Paired test of strategy `a` against `b`.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `(run_id of a, run_id of b)` for each pair, matched on task, dataset and seed.
    pub pairs: Vec<(String, String)>,
    pub report: StatReport,
}

/// `(task, dataset, seed) -> (run_id, test AUC)` for one strategy.
type Side = BTreeMap<(String, String, u64), (String, f64)>;

pub fn compare(results: &Path, a: &str, b: &str) -> Result<Comparison> {
    let a: Strategy = a.parse()?;
    let b: Strategy = b.parse()?;
    let rows = read_rows(results)?;
    let mut side: [Side; 2] = Default::default();
    for row in rows {
        let strategy: Strategy = row.strategy.parse()?;
        for (i, want) in [a, b].into_iter().enumerate() {
            if strategy == want {
                let key = (row.task.clone(), row.dataset.clone(), row.seed);
                if side[i].insert(key, (row.run_id.clone(), row.test_auc)).is_some() {
                    bail!(
                        "{}: several {want} runs for {} seed {}; use separate output directories per config",
                        results.display(),
                        row.dataset,
                        row.seed
                    );
                }
            }
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut pairs = Vec::new();
    for (key, (id_a, auc_a)) in &side[0] {
        if let Some((id_b, auc_b)) = side[1].get(key) {
            xs.push(*auc_a);
            ys.push(*auc_b);
            pairs.push((id_a.clone(), id_b.clone()));
        }
    }
    if pairs.is_empty() {
        bail!("{}: no (task, dataset, seed) has both {a} and {b}", results.display());
    }
    let report = wilcoxon_signed_rank(&xs, &ys)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Comparison {
        a: a.to_string(),
        b: b.to_string(),
        mean_a: mean(&xs),
        mean_b: mean(&ys),
        pairs,
        report,
    })
}

/// Rank correlation between learned anchor frequency and one centrality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorCorrelation {
    pub run_id: String,
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub centrality: String,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    /// Why a coefficient is missing, e.g. a constant ranking.
    pub note: String,
}

/// For every learned run in `store`, correlates per-node selection frequency
/// over the last `window` epochs with each centrality of the graph the run
/// passed messages on.
pub fn anchors_analyze(store: &ResultStore, window: usize) -> Result<Vec<AnchorCorrelation>> {
    let mut out = Vec::new();
    for row in read_rows(&store.results_path())? {
        if !matches!(row.strategy.parse::<Strategy>()?, Strategy::Learned(_)) {
            continue;
        }
        let rec = store.load_record(&row.run_id)?;
        let spec: DatasetSpec = rec.dataset.parse()?;
        let g = spec.build().with_context(|| format!("rebuilding {}", rec.dataset))?;
        let data = make_task_data(&g, rec.task, rec.seed, &rec.config)?;
        let freq = selection_frequency(&rec.anchor_trace, rec.nodes, window);
        for kind in CentralityKind::ALL {
            let scores = centrality(&data.message_graph, kind)?.scores;
            let (s, k) = (spearman(&freq, &scores), kendall(&freq, &scores));
            let note = match (&s, &k) {
                (Err(e), _) | (_, Err(e)) => e.to_string(),
                _ => String::new(),
            };
            out.push(AnchorCorrelation {
                run_id: rec.run_id.clone(),
                dataset: rec.dataset.clone(),
                strategy: rec.strategy.to_string(),
                seed: rec.seed,
                centrality: kind.to_string(),
                spearman: s.ok(),
                kendall: k.ok(),
                note,
            });
        }
    }
    Ok(out)
}

/// One cell of the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub strategy: String,
    pub seed: u64,
    pub source_run: String,
    pub test_auc: Option<f64>,
    pub note: String,
}

/// Evaluates the checkpoint of every (source, strategy, seed) run on every
/// target. Checkpoints must already exist in `store`.
pub fn transfer(cfg: &ExperimentConfig, store: &ResultStore) -> Result<Vec<TransferCell>> {
    let targets = if cfg.targets.is_empty() { &cfg.datasets } else { &cfg.targets };
    let graphs = targets
        .iter()
        .map(|t| t.build().with_context(|| format!("building {t}")))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for job in cfg.jobs() {
        let id = job.run_id();
        let path = store.checkpoint_path(&id);
        if !path.is_file() {
            bail!(
                "missing checkpoint {} for {} {} seed {}; run `anchorlab sweep` with the same config first",
                path.display(),
                job.dataset,
                job.strategy,
                job.seed
            );
        }
        let model = Psgnn::from_checkpoint(&Checkpoint::load(&path)?)?;
        for (spec, g) in targets.iter().zip(&graphs) {
            let name = spec.to_string();
            let (test_auc, note) = match transfer_eval(&model, g, &name, job.task, &job.train, job.seed) {
                Ok(r) => (Some(r.test_auc), String::new()),
                Err(e @ anchorlab::Error::TableTooSmall { .. }) => (None, e.to_string()),
                Err(e) => return Err(e).with_context(|| format!("{} on {name}", job.dataset)),
            };
            out.push(TransferCell {
                source: job.dataset.to_string(),
                target: name,
                strategy: job.strategy.to_string(),
                seed: job.seed,
                source_run: id.clone(),
                test_auc,
                note,
            });
        }
    }
    Ok(out)
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
