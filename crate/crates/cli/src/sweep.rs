use std::collections::HashMap;
use std::sync::mpsc;
use std::time::Instant;

use anchorlab::tasks::train;
use anchorlab::{DatasetSpec, Graph, RunRecord};
use anyhow::{anyhow, bail, Context, Result};

use crate::config::Job;
use crate::store::ResultStore;

/// Worker count: `ANCHORLAB_THREADS` if set, else the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var("ANCHORLAB_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("ANCHORLAB_THREADS={v}"))?;
            if n == 0 {
                bail!("ANCHORLAB_THREADS must be at least 1");
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub skipped: usize,
    pub ran: usize,
}

/// Runs every job without a row in `store`. Workers train in parallel; this
/// thread is the only writer.
pub fn execute(jobs: &[Job], store: &ResultStore, threads: usize) -> Result<SweepSummary> {
    let done = store.completed()?;
    let pending: Vec<&Job> = jobs.iter().filter(|j| !done.contains(&j.run_id())).collect();
    let mut summary = SweepSummary {
        total: jobs.len(),
        skipped: jobs.len() - pending.len(),
        ran: 0,
    };
    if summary.skipped > 0 {
        eprintln!("skipping {} runs already in {}", summary.skipped, store.results_path().display());
    }
    if pending.is_empty() {
        return Ok(summary);
    }

    let mut graphs: HashMap<&DatasetSpec, Graph> = HashMap::new();
    for job in &pending {
        if !graphs.contains_key(&job.dataset) {
            let g = job.dataset.build().with_context(|| format!("building {}", job.dataset))?;
            graphs.insert(&job.dataset, g);
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("starting worker pool")?;
    let (tx, rx) = mpsc::channel::<(usize, Result<(RunRecord, anchorlab::params::Checkpoint)>, f64)>();
    let mut failures = Vec::new();

    std::thread::scope(|s| {
        let graphs = &graphs;
        let pending = &pending;
        s.spawn(move || {
            pool.scope(|ps| {
                for (i, job) in pending.iter().enumerate() {
                    let tx = tx.clone();
                    ps.spawn(move |_| {
                        let start = Instant::now();
                        let g = &graphs[&job.dataset];
                        let out = train(g, &job.dataset.to_string(), job.task, job.strategy, &job.train, job.seed)
                            .map(|(rec, model)| (rec, model.to_checkpoint()))
                            .map_err(|e| anyhow!("{} {} seed {}: {e}", job.dataset, job.strategy, job.seed));
                        let _ = tx.send((i, out, start.elapsed().as_secs_f64()));
                    });
                }
            });
        });

        for (i, out, secs) in rx {
            match out.and_then(|(rec, ck)| store.append(&rec, &ck).map(|_| rec)) {
                Ok(rec) => {
                    summary.ran += 1;
                    eprintln!(
                        "[{}/{}] {} {} seed {}: test AUC {:.4} (best epoch {}, {secs:.1}s)",
                        summary.ran + failures.len(),
                        pending.len(),
                        rec.dataset,
                        rec.strategy,
                        rec.seed,
                        rec.test_auc,
                        rec.best_epoch
                    );
                }
                Err(e) => {
                    eprintln!("run {} failed: {e:#}", pending[i].run_id());
                    failures.push(e);
                }
            }
        }
    });

    if let Some(first) = failures.into_iter().next() {
        return Err(first.context("sweep finished with failed runs"));
    }
    Ok(summary)
}
