use anchorlab::centrality::{centrality, CentralityKind};
use anchorlab::graph::{bfs_distances, greedy_dominating_set, khop_closure};
use anchorlab::model::default_anchor_count;
use anchorlab_bench::graphs;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn bfs(c: &mut Criterion) {
    let mut group = c.benchmark_group("bfs_distances");
    for (name, g) in graphs() {
        let k = default_anchor_count(g.node_count(), 1.0);
        let anchors: Vec<usize> = (0..g.node_count()).step_by(g.node_count() / k).take(k).collect();
        group.bench_with_input(BenchmarkId::from_parameter(&name), &g, |b, g| {
            b.iter(|| bfs_distances(g, black_box(&anchors)).unwrap())
        });
    }
    group.finish();
}

fn centralities(c: &mut Criterion) {
    let mut group = c.benchmark_group("centrality");
    group.sample_size(10);
    for (name, g) in graphs().into_iter().take(3) {
        for kind in CentralityKind::ALL {
            group.bench_with_input(BenchmarkId::new(kind.name(), &name), &g, |b, g| {
                b.iter(|| centrality(g, kind).unwrap())
            });
        }
    }
    group.finish();
}

fn coverage(c: &mut Criterion) {
    let mut group = c.benchmark_group("coverage");
    for (name, g) in graphs().into_iter().take(3) {
        group.bench_with_input(BenchmarkId::new("khop2", &name), &g, |b, g| b.iter(|| khop_closure(g, 2).unwrap()));
        group.bench_with_input(BenchmarkId::new("greedy2", &name), &g, |b, g| {
            b.iter(|| greedy_dominating_set(g, 2).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bfs, centralities, coverage);
criterion_main!(benches);
