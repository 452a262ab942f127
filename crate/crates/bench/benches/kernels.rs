use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exvo::embedder::{build_embedder, EmbedderConfig};
use exvo::metrics::ccc;
use exvo::mtl::{build_mtl, LossTerms, MtlConfig, MtlPreset, MtlTarget};
use exvo::nn::{loss_cross_entropy_grad, Tensor};
use exvo::signal::{zff_filter, Waveform, DEFAULT_TREND_WINDOW_MS};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn embedder(c: &mut Criterion) {
    let cfg = EmbedderConfig::default();
    let net = build_embedder(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let n = cfg.frame_len_samples();
    let x = Tensor::new(vec![1, n], noise(n, 2)).unwrap();
    c.bench_function("embedder_forward_frame", |b| b.iter(|| net.predict(&x).unwrap()));
    c.bench_function("embedder_forward_backward_frame", |b| {
        b.iter(|| {
            let cache = net.forward(&x).unwrap();
            let g = loss_cross_entropy_grad(cache.output(), 0).unwrap();
            net.backward(&cache, &g).unwrap()
        })
    });
}

fn mtl(c: &mut Criterion) {
    let cfg = MtlConfig::preset(MtlPreset::Sys1);
    let model = build_mtl(&cfg, 2048, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let x = noise(2048, 4);
    let target = MtlTarget {
        emotions: [0.5; 10],
        age_norm: 0.0,
        country: 1,
    };
    c.bench_function("mtl_sys1_gradient_2048", |b| {
        b.iter_batched(
            || model.zero_grads(),
            |mut g| model.accumulate_gradients(&x, &target, LossTerms::Three, &mut g).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn signal(c: &mut Criterion) {
    let w = Waveform::new(noise(16_000, 5), 16_000).unwrap();
    c.bench_function("zff_1s_16k", |b| b.iter(|| zff_filter(&w, DEFAULT_TREND_WINDOW_MS).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let p = noise(10_000, 6);
    let t = noise(10_000, 7);
    c.bench_function("ccc_10k", |b| b.iter(|| ccc(&p, &t).unwrap()));
}

criterion_group!(benches, embedder, mtl, signal, metrics);
criterion_main!(benches);
