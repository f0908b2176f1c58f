//! Shared fixtures for the benchmarks.

use anchorlab::graph::{gen_caveman, gen_grid};
use anchorlab::Graph;

/// Graphs of a few sizes, labelled for reporting.
pub fn graphs() -> Vec<(String, Graph)> {
    vec![
        ("caveman-c8-s8".into(), gen_caveman(8, 8).unwrap()),
        ("caveman-c20-s20".into(), gen_caveman(20, 20).unwrap()),
        ("grid-16x16".into(), gen_grid(16, 16).unwrap()),
        ("grid-48x48".into(), gen_grid(48, 48).unwrap()),
    ]
}
