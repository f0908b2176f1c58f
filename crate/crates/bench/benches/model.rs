use anchorlab::autodiff::Tape;
use anchorlab::model::{default_anchor_count, AnchorPlan, PreparedGraph};
use anchorlab::{Mode, ModelConfig, Psgnn};
use anchorlab_bench::graphs;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("epoch");
    group.sample_size(20);
    for (name, g) in graphs().into_iter().take(3) {
        let pg = PreparedGraph::new(&g);
        let n = pg.node_count();
        let k = default_anchor_count(n, 1.0);
        for mode in [Mode::Simple, Mode::Embedded] {
            let table = if mode == Mode::Embedded { n } else { 0 };
            let model = Psgnn::new(ModelConfig::new(mode, g.input_features().ncols(), table), 0).unwrap();
            group.bench_function(BenchmarkId::new(format!("learned-{mode}"), &name), |b| {
                b.iter(|| {
                    let mut tape = Tape::new();
                    let p = model.params().bind(&mut tape);
                    let plan = AnchorPlan::Learned { k, alpha: 0.5, seed: 1 };
                    let f = model.forward_on_tape(&mut tape, &p, &pg, plan).unwrap();
                    let loss = tape.sum(f.embeddings);
                    tape.backward(loss).unwrap()
                })
            });
        }
        let model = Psgnn::new(ModelConfig::new(Mode::Simple, g.input_features().ncols(), 0), 0).unwrap();
        group.bench_function(BenchmarkId::new("embed", &name), |b| {
            b.iter(|| model.embed(&pg, AnchorPlan::Learned { k, alpha: 0.0, seed: 0 }).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
