use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use worldloop::env::{ActionId, Environment, GameRegistry};
use worldloop::exec::Tracker;
use worldloop::model::WorldModel;
use worldloop::modelers::oracle_model;
use worldloop::par::Execution;
use worldloop::plan::{plan_bfs, SearchBudget};
use worldloop::trace::TransitionRecord;
use worldloop::verify::verify_world_model_with;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random_records(reg: &GameRegistry, game: &str, n: usize) -> Vec<TransitionRecord> {
    let legal: Vec<ActionId> = reg.get(game).unwrap().legal().iter().copied().filter(|a| !a.is_reset()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut session, initial) = reg.new_session(game).unwrap();
    let mut tracker = Tracker::new(game, initial);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = if rng.gen_ratio(1, 30) { ActionId::Reset } else { legal[rng.gen_range(0..legal.len())] };
        let obs = Environment::step(&mut session, a).unwrap();
        out.push(tracker.observe(a, &obs));
    }
    out
}

fn verify_replay(c: &mut Criterion) {
    let reg = GameRegistry::builtin();
    let model = oracle_model(reg.get("keydoor").unwrap());
    let mut group = c.benchmark_group("verify_world_model");
    for n in [1_000, 10_000] {
        let records = random_records(&reg, "keydoor", n);
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &records, |b, r| {
                b.iter(|| verify_world_model_with(&model, black_box(r), mode).unwrap())
            });
        }
    }
    group.finish();
}

fn bfs(c: &mut Criterion) {
    let reg = GameRegistry::builtin();
    let mut group = c.benchmark_group("plan_bfs");
    group.sample_size(20);
    for (game, level) in [("corridor", 3), ("pushblock", 2)] {
        let spec = reg.get(game).unwrap();
        let model = oracle_model(spec);
        let start = model.reconstruct(spec.initial_frame(level)).unwrap();
        let legal: Vec<ActionId> = spec.legal().iter().copied().filter(|a| !a.is_reset()).collect();
        for (name, mode) in MODES {
            group.bench_function(BenchmarkId::new(name, format!("{game}-{level}")), |b| {
                b.iter(|| plan_bfs(&model, black_box(&start), &legal, SearchBudget::default(), mode).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, verify_replay, bfs);
criterion_main!(benches);
