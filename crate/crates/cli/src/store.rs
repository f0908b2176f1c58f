//! On-disk layout of a results directory:
//!
//! ```text
//! <out>/results.csv               one row per run (CSV_HEADER columns)
//! <out>/runs/<run_id>.json        full RunRecord with the epoch curve
//! <out>/runs/<run_id>.anchors.csv anchor trace
//! <out>/checkpoints/<run_id>.ckpt best-validation parameters
//! ```

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use anchorlab::params::Checkpoint;
use anchorlab::tasks::CSV_HEADER;
use anchorlab::RunRecord;
use anyhow::{Context, Result};

pub const RESULTS_FILE: &str = "results.csv";

pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn open(root: &Path) -> Result<Self> {
        for sub in ["runs", "checkpoints"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        Ok(ResultStore { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join(RESULTS_FILE)
    }

    pub fn record_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.json"))
    }

    pub fn checkpoint_path(&self, run_id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{run_id}.ckpt"))
    }

    /// Run ids that already have a row.
    pub fn completed(&self) -> Result<HashSet<String>> {
        Ok(read_rows(&self.results_path())?.into_iter().map(|r| r.run_id).collect())
    }

    /// Writes sidecars first and the CSV row last, so a row implies the rest exists.
    pub fn append(&self, record: &RunRecord, checkpoint: &Checkpoint) -> Result<()> {
        let id = &record.run_id;
        fs::write(self.record_path(id), serde_json::to_string_pretty(record)?)?;
        fs::write(
            self.root.join("runs").join(format!("{id}.anchors.csv")),
            record.anchor_trace_csv(),
        )?;
        checkpoint.save(self.checkpoint_path(id))?;

        let path = self.results_path();
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(CSV_HEADER)?;
        }
        w.write_record(record.csv_row())?;
        w.flush()?;
        Ok(())
    }

    pub fn load_record(&self, run_id: &str) -> Result<RunRecord> {
        let path = self.record_path(run_id);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// The columns of `results.csv` that the analyses need.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: String,
    pub task: String,
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub test_auc: f64,
}

/// Reads `path`; a missing file is an empty result set.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column `{name}`", path.display()))
    };
    let (id, task, ds, st, seed, auc) = (
        col("run_id")?,
        col("task")?,
        col("dataset")?,
        col("strategy")?,
        col("seed")?,
        col("test_auc")?,
    );
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let field = |c: usize| rec.get(c).unwrap_or_default().to_string();
        rows.push(ResultRow {
            run_id: field(id),
            task: field(task),
            dataset: field(ds),
            strategy: field(st),
            seed: field(seed).parse().with_context(|| format!("{}: row {}: seed", path.display(), i + 2))?,
            test_auc: field(auc)
                .parse()
                .with_context(|| format!("{}: row {}: test_auc", path.display(), i + 2))?,
        });
    }
    Ok(rows)
}
