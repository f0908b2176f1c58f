use std::fs;
use std::path::{Path, PathBuf};

use anchorlab::{DatasetSpec, Strategy, Task, TrainConfig};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One experiment file: the cartesian product of `datasets × strategies ×
/// seeds` under a shared training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub datasets: Vec<DatasetSpec>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Graphs to evaluate frozen models on; `transfer` falls back to `datasets`.
    #[serde(default)]
    pub targets: Vec<DatasetSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub strategy: Option<Strategy>,
    pub alpha: Option<f64>,
    pub k_const: Option<f64>,
    pub epochs: Option<usize>,
}

impl ExperimentConfig {
    /// Parses `path`; relative edge-list and output paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            anyhow::anyhow!("{}: field `{field}`: {}", path.display(), e.inner())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in cfg.datasets.iter_mut().chain(cfg.targets.iter_mut()) {
            if let DatasetSpec::EdgeList { path: p } = spec {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if let Some(s) = o.strategy {
            self.strategies = vec![s];
        }
        if let Some(a) = o.alpha {
            self.train.alpha = a;
        }
        if let Some(k) = o.k_const {
            self.train.k_const = k;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config: field `seeds`: must not be empty");
        }
        if self.datasets.is_empty() {
            bail!("config: field `datasets`: must not be empty");
        }
        if self.strategies.is_empty() {
            bail!("config: field `strategies`: must not be empty");
        }
        for (field, list) in [("datasets", &self.datasets), ("targets", &self.targets)] {
            for (i, spec) in list.iter().enumerate() {
                if let DatasetSpec::EdgeList { path } = spec {
                    if !path.is_file() {
                        bail!("config: field `{field}[{i}].path`: {} does not exist", path.display());
                    }
                }
            }
        }
        self.train.validate().context("config: field `train`")?;
        Ok(())
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for dataset in &self.datasets {
            for &strategy in &self.strategies {
                for &seed in &self.seeds {
                    out.push(Job {
                        task: self.task,
                        dataset: dataset.clone(),
                        strategy,
                        seed,
                        train: self.train.clone(),
                    });
                }
            }
        }
        out
    }
}

/// A single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task: Task,
    pub dataset: DatasetSpec,
    pub strategy: Strategy,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Job {
    pub fn run_id(&self) -> String {
        anchorlab::tasks::run_id(self.task, &self.dataset.to_string(), self.strategy, self.seed, &self.train)
    }
}

/// Accepts `3`, `0,1,5` or a half-open range `0..8`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed `{p}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn product_and_overrides() {
        let mut cfg: ExperimentConfig = serde_json::from_str(
            r#"{"task": "link",
                "datasets": [{"kind": "grid", "rows": 4, "cols": 4}, {"kind": "caveman", "communities": 2, "size": 4}],
                "strategies": ["learned-E", "random"],
                "seeds": [0, 1, 2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.jobs().len(), 12);
        cfg.apply(&Overrides {
            strategy: Some("none".parse().unwrap()),
            epochs: Some(7),
            ..Default::default()
        });
        assert_eq!(cfg.jobs().len(), 6);
        assert!(cfg.jobs().iter().all(|j| j.train.epochs == 7));
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }
}
