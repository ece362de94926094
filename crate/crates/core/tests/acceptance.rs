//! Acceptance gate: one test per criterion, named `criterion_NN_*`, each
//! printing a PASS line (visible with `--nocapture`).

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use crossloop::backend::{BackendUsage, Cost, HashEmbedder, Purpose, ScriptStep, ScriptedModel};
use crossloop::engine::{drive, resume, run_task, Engine, EngineConfig, Termination};
use crossloop::knowledge::{
    cosine_similarity, rank_entries, retrieve, ExtractedEntries, FailureSignals, KnowledgeEntry, KnowledgeKind,
    SignalSet, SuccessSignals,
};
use crossloop::par::Exec;
use crossloop::quality::{
    aggregate_nonfunctional, file_maintainability, Dimension, FileStats, QualityError, QualityReport, Weights,
};
use crossloop::repo::RepositoryArtifact;
use crossloop::report::{load_report, percent};
use crossloop::sandbox::{ExitStatus, ProcessSandbox, Sandbox, SandboxConfig};
use crossloop::score::{Fraction, Score};
use crossloop::state::{self, AttemptRecord, TaskSpec, TaskState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(n: u32, what: &str) {
    println!("PASS criterion {n}: {what}");
}

/// Every sequence of length 1..=max_len over `alphabet`.
fn sequences<T: Copy>(alphabet: &[T], max_len: usize) -> Vec<Vec<T>> {
    let mut all = Vec::new();
    let mut layer: Vec<Vec<T>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|prefix| alphabet.iter().map(move |v| [prefix.clone(), vec![*v]].concat()))
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

#[test]
fn criterion_01_algorithm_oracle_equivalence() {
    let started = Instant::now();
    let embedder = HashEmbedder::default();
    let config = EngineConfig { exec: Exec::Sequential, ..config() };
    let ws = tempfile::tempdir().unwrap();
    let all = sequences(&[0u64, 1, 2], 4);
    assert_eq!(all.len(), 3 + 9 + 27 + 81);
    for (case, seq) in all.iter().enumerate() {
        let scores: Vec<(u64, u64)> = seq.iter().map(|h| (*h, 2)).collect();
        // Brute-force oracle: generation stops at the first full score.
        let stop = seq.iter().position(|h| *h == 2).map_or(seq.len(), |k| k + 1);
        let expected_max = *seq[..stop].iter().max().unwrap();
        let expected_attempts = if stop < seq.len() { stop + 1 } else { seq.len() };

        let mut model = scripted(&scores);
        let mut engine = Engine { model: &mut model, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &config };
        let id = format!("seq{case}");
        let result = run_task(spec(&id, seq.len() as u32, 1), ws.path(), &mut engine).unwrap();
        assert_eq!(result.final_score.value(), Fraction::new(expected_max, 2), "{seq:?}");
        assert_eq!(model.calls(Purpose::Generation), stop, "{seq:?}");
        assert_eq!(result.attempts_executed as usize, expected_attempts, "{seq:?}");
        let full = expected_max == 2;
        assert_eq!(result.terminated_by == Termination::FullScoreReached, full, "{seq:?}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(1, &format!("{} sequences match the brute-force oracle in {elapsed:.2?}", all.len()));
}

#[test]
fn criterion_02_motivating_example_replay() {
    let ws = tempfile::tempdir().unwrap();
    let embedder = HashEmbedder::default();
    let config = config();
    let mut model = scripted(&percent_scores(&[86, 92, 79, 90]));
    let mut engine = Engine { model: &mut model, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &config };
    let result = run_task(spec("fig1", 4, 1), ws.path(), &mut engine).unwrap();

    assert_eq!(result.final_score.value(), Fraction::new(92, 100));
    assert_eq!(result.final_repository.digest(), scored_repo("r1", 92, 100).digest());
    let state = state::load(ws.path(), "fig1").unwrap();
    let trajectory: Vec<Fraction> = state.best_trajectory().into_iter().map(|s| s.unwrap().value()).collect();
    assert_eq!(trajectory, [86, 92, 92, 92].map(|p| Fraction::new(p, 100)).to_vec());
    let attempt3 = scored_repo("r2", 79, 100).digest();
    assert_eq!(state.attempts()[2].repository_digest, Some(attempt3));
    assert_ne!(state.historical_best().unwrap().repo.digest(), attempt3);
    for t in 1..=4 {
        let log = fs::read_to_string(ws.path().join(format!("fig1/attempts/{t}/logs/engine.jsonl"))).unwrap();
        assert_eq!(log.contains("\"event\":\"best-update\""), t <= 2, "attempt {t}");
    }
    pass(2, "final 92/100, trajectory [0.86, 0.92, 0.92, 0.92], attempt 3 never best");
}

fn percent_scores(p: &[u64]) -> Vec<(u64, u64)> {
    p.iter().map(|v| (*v, 100)).collect()
}

#[test]
fn criterion_03_short_circuit_frugality() {
    let embedder = HashEmbedder::default();
    let config = config();
    // (per-generation scores, internal iteration budget, generation calls up to the first full score)
    type Case = (&'static [(u64, u64)], u32, usize);
    let cases: &[Case] = &[
        (&[(4, 4)], 1, 1),
        (&[(1, 4), (4, 4)], 1, 2),
        (&[(0, 4), (2, 4), (4, 4)], 4, 3),
        (&[(0, 4), (1, 4), (2, 4), (3, 4), (4, 4)], 4, 5),
        (&[(1, 4), (1, 4), (1, 4), (4, 4)], 1, 4),
    ];
    for (scores, iterations, calls) in cases {
        let ws = tempfile::tempdir().unwrap();
        let mut padded = scores.to_vec();
        padded.extend(std::iter::repeat_n((4, 4), 20));
        let mut model = scripted(&padded);
        let mut engine = Engine { model: &mut model, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &config };
        let result = run_task(spec("sc", 4, *iterations), ws.path(), &mut engine).unwrap();
        assert_eq!(result.terminated_by, Termination::FullScoreReached);
        assert_eq!(model.calls(Purpose::Generation), *calls, "{scores:?}");

        let mut untouched = ScriptedModel::new("m").with_generation(padded.iter().map(|(p, t)| ScriptStep::repo(&scored_repo("x", *p, *t))));
        let mut engine = Engine { model: &mut untouched, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &config };
        resume("sc", ws.path(), &mut engine).unwrap();
        assert_eq!(untouched.calls(Purpose::Generation), 0);
        let state = state::load(ws.path(), "sc").unwrap();
        let after_full = state.attempts().iter().skip_while(|a| !a.functional_score.meets(Fraction::from_integer(1)));
        assert!(after_full.skip(1).all(|a| a.reused_historical_best && a.generator_calls == 0));
    }
    pass(3, "zero generation calls after a full score (5 scripted runs plus resume)");
}

#[test]
fn criterion_04_dual_update_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let embedder = HashEmbedder::default();
    let config = config();
    for run in 0..60 {
        let budget = rng.random_range(1..=4u32);
        let iterations = rng.random_range(1..=3u32);
        let mut model = ScriptedModel::new("m");
        for _ in 0..(budget * iterations) {
            let step = if rng.random_bool(0.15) {
                ScriptStep::transport_error("reset")
            } else {
                let total = rng.random_range(1..=5u64);
                ScriptStep::repo(&scored_repo(&format!("{}", rng.random::<u32>()), rng.random_range(0..=total), total))
            };
            model = model.with_generation([step]);
        }
        model = model.with_extraction((0..budget as usize).map(|n| ScriptStep::reply(extraction_reply(run * 10 + n))));
        let cfg = EngineConfig { retry: crossloop::backend::RetryPolicy::immediate(0), ..config.clone() };
        let mut engine = Engine { model: &mut model, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &cfg };
        let mut state = TaskState::init(spec("dual", budget, iterations)).unwrap();
        let _ = drive(&mut state, None, &mut engine);
        let non_reused = state.attempts().iter().filter(|a| !a.reused_historical_best).count();
        assert_eq!(model.calls(Purpose::Extraction), non_reused, "run {run}");
        assert!(state.attempts().iter().all(|a| a.extraction_calls == u32::from(!a.reused_historical_best)));
    }
    pass(4, "extraction invoked exactly once per non-reused attempt over 60 random runs");
}

fn brute_force_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_entry(rng: &mut ChaCha8Rng, id: String, embedding: Vec<f64>) -> KnowledgeEntry {
    KnowledgeEntry {
        entry_id: id,
        source_attempt: 1,
        associated_score: Score::new(rng.random_range(0..=3), 3).unwrap(),
        signals: SignalSet::Failure(FailureSignals { carry_over_constraints: vec!["c".into()], ..Default::default() }),
        summary_text: "c".into(),
        embedding,
        embedder_id: "random".into(),
    }
}

#[test]
fn criterion_05_retrieval_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..200 {
        let n = rng.random_range(0..=50usize);
        let mut entries: Vec<KnowledgeEntry> = Vec::new();
        for i in 0..n {
            let embedding = if i > 0 && rng.random_bool(0.2) {
                // Exact duplicates force ties broken by id.
                entries[rng.random_range(0..i)].embedding.clone()
            } else {
                (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let id = format!("e{:04}", rng.random_range(0..10_000u32) * 100 + i as u32);
            entries.push(random_entry(&mut rng, id, embedding));
        }
        let query: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(0..=10usize);

        let mut expected: Vec<(f64, &str)> =
            entries.iter().map(|e| (brute_force_cosine(&query, &e.embedding), e.entry_id.as_str())).collect();
        expected.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        expected.truncate(k);

        for exec in [Exec::Sequential, Exec::Parallel] {
            let got = rank_entries(&query, &entries, k, exec).unwrap();
            assert_eq!(got.entry_ids(), expected.iter().map(|e| e.1).collect::<Vec<_>>(), "set {set}");
            for (hit, (sim, _)) in got.hits.iter().zip(&expected) {
                assert!((hit.similarity - sim).abs() <= 1e-12);
            }
        }
    }

    // End to end through the embedder on the same sort.
    let embedder = HashEmbedder::default();
    let words = ["parser", "png", "lsb", "cli", "json", "tests", "encode", "decode", "unicode", "module"];
    let texts: Vec<String> = (0..30).map(|i| format!("{} {} {}", words[i % 10], words[(i * 7) % 10], words[(i * 3) % 10])).collect();
    let entries: Vec<KnowledgeEntry> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let signals = SignalSet::Success(SuccessSignals { carry_over_signals: vec![t.clone()], ..Default::default() });
            KnowledgeEntry::build(KnowledgeEntry::make_id(KnowledgeKind::Success, 1, i + 1), 1, Score::ZERO, signals, &embedder)
                .unwrap()
        })
        .collect();
    let requirement = "png lsb encode unicode";
    let got = retrieve(requirement, &entries, 5, &embedder, Exec::default()).unwrap();
    let q = crossloop::knowledge::embed_text(requirement, &embedder).unwrap();
    let mut expected: Vec<(f64, &str)> =
        entries.iter().map(|e| (brute_force_cosine(&q, &e.embedding), e.entry_id.as_str())).collect();
    expected.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    assert_eq!(got.entry_ids(), expected[..5].iter().map(|e| e.1).collect::<Vec<_>>());

    let c = cosine_similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
    assert!((c - 8.0 / 9.0).abs() < 1e-12);
    pass(5, "200 random sets match the brute-force ranking; cos((1,2,2),(2,1,2)) = 8/9");
}

#[test]
fn criterion_06_historical_best_maximality() {
    let quarters = [0u64, 1, 2, 3, 4];
    let all = sequences(&quarters, 6);
    for seq in &all {
        let mut state = TaskState::init(spec("max", 6, 1)).unwrap();
        for (i, q) in seq.iter().enumerate() {
            let t = i as u32 + 1;
            let repo = at_attempt(scored_repo(&format!("r{i}"), *q, 4), t);
            let score = Score::new(*q, 4).unwrap();
            state
                .append_attempt(AttemptRecord {
                    attempt_index: t,
                    functional_score: score,
                    nonfunctional: None,
                    reused_historical_best: false,
                    internal_iterations_used: 1,
                    generator_calls: 1,
                    extraction_calls: 1,
                    usage: BackendUsage::default(),
                    repository_digest: Some(repo.digest()),
                    failure_tag: None,
                })
                .unwrap();
            state.update_historical_best(repo, score);
        }
        let max = *seq.iter().max().unwrap();
        let first = seq.iter().position(|q| *q == max).unwrap();
        assert_eq!(state.best_score().unwrap().value(), Fraction::new(max, 4));
        assert_eq!(state.historical_best().unwrap().repo.digest(), scored_repo(&format!("r{first}"), max, 4).digest());
        state.validate().unwrap();
    }

    // The same property through the engine, for every sequence below full score.
    let embedder = HashEmbedder::default();
    let config = EngineConfig { exec: Exec::Sequential, ..config() };
    let below_full = sequences(&quarters[..4], 5);
    for seq in &below_full {
        let scores: Vec<(u64, u64)> = seq.iter().map(|q| (*q, 4)).collect();
        let mut model = scripted(&scores);
        let mut engine = Engine { model: &mut model, embedder: &embedder, sandbox: &ScoreFileSandbox, config: &config };
        let mut state = TaskState::init(spec("max", seq.len() as u32, 1)).unwrap();
        let result = drive(&mut state, None, &mut engine).unwrap();
        let max = *seq.iter().max().unwrap();
        let first = seq.iter().position(|q| *q == max).unwrap();
        assert_eq!(result.final_score.value(), Fraction::new(max, 4));
        assert_eq!(result.final_repository.digest(), scored_repo(&format!("r{first}"), max, 4).digest(), "{seq:?}");
    }
    pass(6, &format!("{} state sequences and {} engine runs keep the earliest argmax", all.len(), below_full.len()));
}

#[test]
fn criterion_07_sandbox_timeout() {
    let repo = RepositoryArtifact::new([("test.sh", "sleep 10\n")], 1).unwrap();
    let sandbox = ProcessSandbox::new(SandboxConfig::default());
    let started = Instant::now();
    let report = sandbox.run(&repo, "sh test.sh", Duration::from_secs(2)).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(report.exit_status, ExitStatus::TimedOut);
    assert!(elapsed < Duration::from_secs(7), "took {elapsed:?}");
    let score = crossloop::quality::functional_score(&report);
    assert_eq!(score.value(), Fraction::from_integer(0));
    pass(7, &format!("10 s test under a 2 s limit returned TimedOut with score 0 in {elapsed:.2?}"));
}

fn random_repo(rng: &mut ChaCha8Rng, attempt: u32) -> RepositoryArtifact {
    let n = rng.random_range(1..=50usize);
    let files: BTreeMap<String, Vec<u8>> = (0..n)
        .map(|i| {
            let depth = rng.random_range(0..3usize);
            let mut path: Vec<String> = (0..depth).map(|_| format!("d{}", rng.random_range(0..4u8))).collect();
            path.push(format!("f{i}.{}", ["py", "txt", "bin", "md"][rng.random_range(0..4usize)]));
            let len = rng.random_range(0..200usize);
            (path.join("/"), (0..len).map(|_| rng.random::<u8>()).collect())
        })
        .collect();
    RepositoryArtifact::new(files, attempt).unwrap()
}

fn random_words(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| format!("signal-{} \u{e9}\u{1f600} \"q\"", rng.random::<u32>())).collect()
}

fn random_state(rng: &mut ChaCha8Rng, id: &str) -> TaskState {
    let embedder = HashEmbedder::default();
    let mut spec = TaskSpec::new(id, format!("Requirement {}\nwith two lines", rng.random::<u64>()), "pytest -q");
    spec.full_score = Fraction::new(rng.random_range(1..=4), 4);
    spec.attempt_budget = rng.random_range(1..=6);
    spec.internal_iteration_budget = rng.random_range(1..=4);
    spec.timeout_seconds = rng.random_range(1..=600);
    let mut state = TaskState::init(spec.clone()).unwrap();
    let attempts = rng.random_range(0..=spec.attempt_budget);
    for t in 1..=attempts {
        if crossloop::engine::should_short_circuit(&state) {
            let record = AttemptRecord::reuse(t, state.historical_best().unwrap());
            state.append_attempt(record).unwrap();
            break;
        }
        let failed = rng.random_bool(0.1);
        let total = rng.random_range(0..=20u64);
        let score = if failed { Score::ZERO } else { Score::new(rng.random_range(0..=total), total).unwrap() };
        let repo = (!failed).then(|| random_repo(rng, t));
        let nonfunctional = (rng.random_bool(0.5) && !failed).then(|| {
            let mut dims = BTreeMap::new();
            for d in Dimension::ALL {
                if rng.random_bool(0.7) {
                    dims.insert(d, rng.random::<f64>());
                }
            }
            QualityReport {
                functional: score,
                nonfunctional_aggregate: rng.random::<f64>(),
                weights: Weights(dims.keys().map(|d| (*d, Fraction::new(rng.random_range(1..10), 10))).collect()),
                dimensions: dims,
            }
        });
        state
            .append_attempt(AttemptRecord {
                attempt_index: t,
                functional_score: score,
                nonfunctional,
                reused_historical_best: false,
                internal_iterations_used: rng.random_range(1..=4),
                generator_calls: rng.random_range(1..=12),
                extraction_calls: rng.random_range(1..=2),
                usage: BackendUsage {
                    prompt_tokens: rng.random_range(0..1_000_000),
                    completion_tokens: rng.random_range(0..1_000_000),
                    monetary_cost: Cost::from_pico(rng.random_range(0..10_000_000_000_000)),
                },
                repository_digest: repo.as_ref().map(RepositoryArtifact::digest),
                failure_tag: failed.then(|| "generation-failure".to_string()),
            })
            .unwrap();
        if let Some(repo) = repo {
            state.update_historical_best(repo, score);
        }
        let success = (0..rng.random_range(0..3usize))
            .map(|i| {
                let signals = SignalSet::Success(SuccessSignals {
                    repository_level_signals: random_words(rng, 3),
                    functionally_validated_signals: random_words(rng, 2),
                    carry_over_signals: vec![format!("carry {t} {i} {}", rng.random::<u32>())],
                });
                KnowledgeEntry::build(KnowledgeEntry::make_id(KnowledgeKind::Success, t, i + 1), t, score, signals, &embedder)
                    .unwrap()
            })
            .collect();
        let failure = (0..rng.random_range(0..3usize))
            .map(|i| {
                let signals = SignalSet::Failure(FailureSignals {
                    observed_failure_signals: vec![format!("failure {t} {i} {}", rng.random::<u32>())],
                    repository_level_failure_signals: random_words(rng, 2),
                    carry_over_constraints: random_words(rng, 2),
                });
                KnowledgeEntry::build(KnowledgeEntry::make_id(KnowledgeKind::Failure, t, i + 1), t, score, signals, &embedder)
                    .unwrap()
            })
            .collect();
        state.admit_knowledge(ExtractedEntries { success, failure }, None, None).unwrap();
    }
    state
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_08_persistence_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let id = format!("task-{i}");
        let original = random_state(&mut rng, &id);
        let first = tempfile::tempdir().unwrap();
        state::persist(&original, first.path()).unwrap();
        let loaded = state::load(first.path(), &id).unwrap();
        assert_eq!(loaded, original, "state {i}");

        let second = tempfile::tempdir().unwrap();
        state::persist(&loaded, second.path()).unwrap();
        let a = tree(&first.path().join(&id));
        let b = tree(&second.path().join(&id));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "state {i}");
        assert!(a == b, "state {i}: persisted bytes differ");
        // Re-persisting in place leaves the bytes unchanged too.
        state::persist(&loaded, first.path()).unwrap();
        assert!(tree(&first.path().join(&id)) == a);
    }
    pass(8, "100 random states round-trip with deep equality and byte-identical re-persist");
}

#[test]
fn criterion_09_scoring() {
    let dims: BTreeMap<Dimension, f64> = Dimension::ALL.into_iter().zip([0.5, 1.0, 0.0, 1.0, 0.5]).collect();
    let weights = |w: [u64; 5]| Weights(Dimension::ALL.into_iter().zip(w.map(|n| Fraction::new(n, 10))).collect());

    let bad = aggregate_nonfunctional(&dims, &weights([4, 3, 1, 1, 2]));
    assert!(matches!(bad, Err(QualityError::WeightSum(_))), "{bad:?}");
    let short = aggregate_nonfunctional(&dims, &weights([4, 3, 1, 1, 0]));
    assert!(short.is_err());
    assert_eq!(aggregate_nonfunctional(&dims, &weights([4, 3, 1, 1, 1])).unwrap(), 0.65);

    let top = FileStats { halstead_volume: 1.0, cyclomatic_complexity: 0.0, loc: 1 };
    assert_eq!(file_maintainability(&top).unwrap(), 100.0);
    let clipped = FileStats { halstead_volume: 1e9, cyclomatic_complexity: 500.0, loc: 100_000 };
    assert_eq!(file_maintainability(&clipped).unwrap(), 0.0);
    pass(9, "bad weights rejected, worked example = 0.65 exactly, MI 100 and clipped 0");
}

fn synthetic_attempt(t: u32, score: Score, cost: &str, reused: bool, digest: Option<crossloop::canonical::Digest>) -> AttemptRecord {
    AttemptRecord {
        attempt_index: t,
        functional_score: score,
        nonfunctional: None,
        reused_historical_best: reused,
        internal_iterations_used: u32::from(!reused),
        generator_calls: u32::from(!reused),
        extraction_calls: u32::from(!reused),
        usage: BackendUsage { prompt_tokens: 0, completion_tokens: 0, monetary_cost: Cost::from_dollars(cost).unwrap() },
        repository_digest: digest,
        failure_tag: None,
    }
}

#[test]
fn criterion_10_reporting_fidelity() {
    let ws = tempfile::tempdir().unwrap();

    // Solved at attempt 1, reuses at attempt 2.
    let mut solved = TaskState::init(spec("solved", 2, 1)).unwrap();
    let repo = scored_repo("s", 4, 4);
    solved.append_attempt(synthetic_attempt(1, Score::new(4, 4).unwrap(), "6.62", false, Some(repo.digest()))).unwrap();
    solved.update_historical_best(repo, Score::new(4, 4).unwrap());
    let reuse = AttemptRecord::reuse(2, solved.historical_best().unwrap());
    solved.append_attempt(reuse).unwrap();
    state::persist(&solved, ws.path()).unwrap();

    // Unsolved, pays for both attempts.
    let mut open = TaskState::init(spec("open", 2, 1)).unwrap();
    let r1 = scored_repo("o1", 2, 4);
    let r2 = at_attempt(scored_repo("o2", 3, 4), 2);
    open.append_attempt(synthetic_attempt(1, Score::new(2, 4).unwrap(), "6.62", false, Some(r1.digest()))).unwrap();
    open.update_historical_best(r1, Score::new(2, 4).unwrap());
    open.append_attempt(synthetic_attempt(2, Score::new(3, 4).unwrap(), "7.31", false, Some(r2.digest()))).unwrap();
    open.update_historical_best(r2, Score::new(3, 4).unwrap());
    state::persist(&open, ws.path()).unwrap();

    let report = load_report(ws.path()).unwrap();
    let a1 = &report.attempts[0];
    let a2 = &report.attempts[1];
    assert_eq!(a1.reuse_rate(), None);
    assert_eq!(percent(&a2.reuse_rate().unwrap()), "50.00%");
    assert_eq!(a1.total_cost, Cost::from_dollars("13.24").unwrap());
    assert_eq!(a2.total_cost, Cost::from_dollars("7.31").unwrap());
    let reduction = percent(&report.cost_reduction().unwrap());
    assert_eq!(reduction, "44.79%");
    let table = report.render_by_attempt();
    assert!(table.lines().nth(1).unwrap().contains("--"), "{table}");
    assert!(table.contains("50.00%") && table.contains("cost reduction A2 vs A1: 44.79%"), "{table}");
    // Recomputable purely from persisted files.
    assert_eq!(load_report(ws.path()).unwrap().render_by_attempt(), table);

    let single = tempfile::tempdir().unwrap();
    let mut one = TaskState::init(spec("one", 1, 1)).unwrap();
    one.append_attempt(synthetic_attempt(1, Score::new(1, 4).unwrap(), "1.00", false, None)).unwrap();
    state::persist(&one, single.path()).unwrap();
    let text = load_report(single.path()).unwrap().render_by_attempt();
    assert!(text.lines().nth(1).unwrap().split_whitespace().any(|c| c == "--"), "{text}");
    pass(10, &format!("reuse(A2) = 50.00%, reduction 13.24 -> 7.31 = {reduction}, A1 reuse rendered --"));
}
