use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use crossloop::knowledge::{rank_entries, FailureSignals, KnowledgeEntry, SignalSet};
use crossloop::par::Exec;
use crossloop::quality::{repository_maintainability, PythonAnalyzer};
use crossloop::repo::RepositoryArtifact;
use crossloop::score::Score;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn entries(n: usize, dim: usize) -> Vec<KnowledgeEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| KnowledgeEntry {
            entry_id: format!("f{i:06}"),
            source_attempt: 1,
            associated_score: Score::ZERO,
            signals: SignalSet::Failure(FailureSignals { carry_over_constraints: vec!["c".into()], ..Default::default() }),
            summary_text: format!("c{i}"),
            embedding: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            embedder_id: "bench".into(),
        })
        .collect()
}

fn retrieval(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_entries");
    let query: Vec<f64> = (0..256).map(|i| (i as f64).sin()).collect();
    for n in [1_000, 20_000] {
        let set = entries(n, 256);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &set, |b, set| {
                b.iter(|| rank_entries(black_box(&query), set, 3, exec).unwrap().hits.len())
            });
        }
    }
    group.finish();
}

fn python_repo(files: usize) -> RepositoryArtifact {
    let body: String = (0..80)
        .map(|i| {
            format!(
                "def f{i}(x, y):\n    if x > y and x % 3 == 0:\n        return [v * 2 for v in range(x) if v % 2]\n    elif y:\n        return {{'k': y ** 2}}\n    return None\n\n"
            )
        })
        .collect();
    RepositoryArtifact::new((0..files).map(|i| (format!("pkg/m{i}.py"), body.clone())), 1).unwrap()
}

fn maintainability(c: &mut Criterion) {
    let mut group = c.benchmark_group("repository_maintainability");
    group.sample_size(20);
    let repo = python_repo(64);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| repository_maintainability(black_box(&repo), &[&PythonAnalyzer], exec)));
    }
    group.finish();
}

criterion_group!(benches, retrieval, maintainability);
criterion_main!(benches);
