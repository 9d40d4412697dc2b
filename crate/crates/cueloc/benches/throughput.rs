//! Sequential-versus-parallel throughput on the two episode-level hot
//! paths: batched training gradients and frozen-model evaluation.
//!
//! `workers = 1` runs on the calling thread, the exact code path a build
//! without the `parallel` feature compiles to, so the 1-worker rows double
//! as the sequential-fallback baseline. Higher worker counts fan episodes
//! out through the worker pool; results reduce in episode order either
//! way, so every variant computes bit-identical numbers.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cueloc::model::{ArchitectureConfig, Localizer, ParameterSet};
use cueloc::parallel::map_indexed;
use cueloc::scene::{CueKind, EpisodeStream};
use cueloc::train::{evaluate, loss_and_gradients, Protocol, TrainConfig};
use cueloc::Real;

const WORKER_COUNTS: [usize; 3] = [1, 2, 4];
const BATCH: usize = 8;
const EVAL_EPISODES: usize = 16;

struct Fixture {
    cfg: TrainConfig,
    stream: EpisodeStream,
    params: ParameterSet,
}

/// Small-canvas fixture so one batch fits a criterion iteration; the
/// parallel fan-out pattern is identical at every scale.
fn fixture() -> Fixture {
    let mut cfg = TrainConfig::desk(Protocol::SyntheticGlyphs, CueKind::RedDot, 0.0, 7);
    cfg.canvas = 24;
    cfg.architecture = ArchitectureConfig::tiny();
    let source = cfg.build_source().expect("scene source");
    let stream = cfg.train_stream(source).expect("episode stream");
    let params = ParameterSet::init(&cfg.architecture, cfg.seed).expect("params");
    Fixture { cfg, stream, params }
}

fn bench_batch_gradients(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for workers in WORKER_COUNTS {
        group.bench_with_input(
            BenchmarkId::from_parameter(workers),
            &workers,
            |b, &workers| {
                b.iter(|| {
                    let results = map_indexed(BATCH, workers, |i| {
                        let ep = fx.stream.episode(i as u64).expect("episode");
                        loss_and_gradients(&fx.cfg.architecture, &fx.params, &ep)
                            .expect("gradients")
                    });
                    // Same order-preserving reduction the trainer uses.
                    let mut total = 0.0;
                    for (loss, grads) in results {
                        total += loss;
                        for g in grads {
                            total += g.iter().sum::<Real>();
                        }
                    }
                    total
                })
            },
        );
    }
    group.finish();
}

fn bench_evaluation(c: &mut Criterion) {
    let fx = fixture();
    let localizer = Localizer::new(fx.cfg.architecture.clone(), fx.params.clone());
    let mut group = c.benchmark_group("evaluation");
    group.sample_size(10);
    for workers in WORKER_COUNTS {
        group.bench_with_input(
            BenchmarkId::from_parameter(workers),
            &workers,
            |b, &workers| {
                b.iter(|| {
                    evaluate(&localizer, &fx.stream, 0, EVAL_EPISODES, workers)
                        .expect("evaluation")
                        .mse
                })
            },
        );
    }
    group.finish();
}

fn bench_episode_generation(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("episode_generation");
    for workers in WORKER_COUNTS {
        group.bench_with_input(
            BenchmarkId::from_parameter(workers),
            &workers,
            |b, &workers| {
                let mut next = 0u64;
                b.iter(|| {
                    let base = next;
                    next += BATCH as u64;
                    map_indexed(BATCH, workers, |i| {
                        fx.stream.episode(base + i as u64).expect("episode").label_rc()
                    })
                })
            },
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_batch_gradients,
    bench_evaluation,
    bench_episode_generation
);
criterion_main!(benches);
