//! Position-aware node embeddings with learned anchor selection.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: graphs, generators, hop distances, k-hop coverage;
//! - [`centrality`]: degree/betweenness/closeness/harmonic/load scores;
//! - [`autodiff`] and [`params`]: the reverse-mode tape, Adam, checkpoints;
//! - [`model`]: the anchor-selection and distance-gated update network;
//! - [`tasks`]: splits, AUC, and the training loop;
//! - [`stats`]: Wilcoxon signed-rank, Spearman, Kendall.

pub mod autodiff;
pub mod centrality;
pub mod error;
pub mod graph;
pub mod model;
pub mod params;
pub mod stats;
pub mod tasks;

pub use centrality::{CentralityKind, ScoreVector};
pub use error::{Error, Result};
pub use graph::{DistanceField, Graph};
pub use model::{AnchorSelection, Mode, ModelConfig, Psgnn};
pub use stats::StatReport;
pub use tasks::{DatasetSpec, PairDataset, RunRecord, Strategy, Task, TrainConfig};
