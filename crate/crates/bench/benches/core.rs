use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vgi_bench::reference_corpus;
use vgi_core::corpus::generate_adversarial;
use vgi_core::evalstats::{exact_binomial_p, judge, mcnemar_exact, wilson_ci};
use vgi_core::vision::{frame_delta, SamplerSettings};
use vgi_core::{Frame, SamplerState};

fn stats(c: &mut Criterion) {
    c.bench_function("wilson_ci 34/40", |b| {
        b.iter(|| wilson_ci(black_box(34), black_box(40)))
    });
    let mut group = c.benchmark_group("exact_binomial_p");
    for n in [40u64, 400, 4000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| exact_binomial_p(black_box(n * 7 / 10), n))
        });
    }
    group.finish();
    c.bench_function("mcnemar_exact 14/2", |b| {
        b.iter(|| mcnemar_exact(black_box(2), black_box(14)))
    });
}

fn judging(c: &mut Criterion) {
    let corpus = reference_corpus();
    let replies: Vec<(String, usize)> = corpus
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| (item.intended().unwrap().gold_reference.clone(), i))
        .collect();
    c.bench_function("judge reference corpus", |b| {
        b.iter(|| {
            for (text, i) in &replies {
                black_box(judge(text, &corpus.items[*i]));
            }
        })
    });
}

fn vision(c: &mut Criterion) {
    let pixels = |seed: u32| {
        (0..640 * 480)
            .map(|i| ((i as u32 ^ seed) % 251) as f32 / 250.0)
            .collect::<Vec<_>>()
    };
    let a = Frame::new(640, 480, pixels(1), 0).unwrap();
    let b = Frame::new(640, 480, pixels(7), 500).unwrap();
    c.bench_function("frame_delta 640x480", |bench| {
        bench.iter(|| frame_delta(black_box(&a), black_box(&b)))
    });

    let frames: Vec<Frame> = (0..100)
        .map(|i| Frame::filled(64, 48, (i % 10) as f32 / 10.0, i * 100).unwrap())
        .collect();
    c.bench_function("sampler 100 frames", |bench| {
        bench.iter(|| {
            let mut s = SamplerState::new(SamplerSettings {
                threshold: 0.25,
                min_interval_ms: 250,
            })
            .unwrap();
            for f in &frames {
                black_box(s.should_sample(f.clone()).unwrap());
            }
        })
    });
}

fn derangement(c: &mut Criterion) {
    let corpus = reference_corpus();
    c.bench_function("generate_adversarial 120 items", |b| {
        b.iter(|| generate_adversarial(&corpus, black_box(7)).unwrap())
    });
}

criterion_group!(benches, stats, judging, vision, derangement);
criterion_main!(benches);
