use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use rand::Rng as _;

use ltcal_core::eval::average_precision;
use ltcal_core::head::{Batch, HeadParams, HeadSpec, Loss, LossConfig, LossKind};
use ltcal_core::rng::substream;
use ltcal_core::sampling::{BilevelSampler, SamplerConfig};
use ltcal_core::synth::{generate, SynthConfig};

fn head_forward_backward(c: &mut Criterion) {
    let mut rng = substream(0, "bench");
    let ds = generate(&SynthConfig::default()).unwrap();
    let mut group = c.benchmark_group("head");
    for hidden in [64, 256] {
        let spec = HeadSpec::new(ds.feature_dim(), vec![hidden, hidden], ds.num_classes() + 1);
        let params = HeadParams::init(&spec, &mut rng);
        let n = 256;
        let features = Array2::from_shape_fn((n, ds.feature_dim()), |_| rng.random::<f64>());
        let labels: Vec<usize> = (0..n)
            .map(|_| rng.random_range(0..=ds.num_classes()))
            .collect();
        let batch = Batch::new(features.clone(), labels).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("forward", hidden), &features, |b, f| {
            b.iter(|| params.forward(black_box(f)).unwrap())
        });
        for kind in [LossKind::Ce, LossKind::Margin] {
            let loss = Loss::new(&LossConfig::of_kind(kind), &ds.stats).unwrap();
            group.bench_with_input(
                BenchmarkId::new(format!("backward_{kind:?}").to_lowercase(), hidden),
                &batch,
                |b, batch| b.iter(|| params.backward(black_box(batch), &loss).unwrap()),
            );
        }
    }
    group.finish();
}

fn ap(c: &mut Criterion) {
    let mut rng = substream(1, "bench");
    let mut group = c.benchmark_group("average_precision");
    for n in [1_000usize, 10_000, 100_000] {
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.05)).collect();
        let ids: Vec<usize> = (0..n).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| average_precision(black_box(&scores), &positive, &ids))
        });
    }
    group.finish();
}

fn bilevel_sampler(c: &mut Criterion) {
    let ds = generate(&SynthConfig::default()).unwrap();
    let cfg = SamplerConfig::default();
    c.bench_function("bilevel_batch", |b| {
        b.iter_batched(
            || BilevelSampler::new(&ds, &cfg, substream(2, "bench")).unwrap(),
            |mut sampler| black_box(sampler.sample_batch()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, head_forward_backward, ap, bilevel_sampler);
criterion_main!(benches);
