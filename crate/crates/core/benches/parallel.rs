//! Sequential vs rayon execution of the data-parallel stages.
//!
//! Built without the `parallel` feature, both variants take the sequential
//! path and should report the same times.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lpcc::ingest::{synth_scan, synth_scan_with, SceneSpec};
use lpcc::metrics::evaluate_pair;
use lpcc::pipeline::{
    compress_batch, lossless_reference, CodecChoice, CompressOptions, PlaneCodecs,
};
use lpcc::{Exec, SensorConfig};

const EXECS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn synthesis(c: &mut Criterion) {
    let config = SensorConfig::synthetic_default();
    let spec = SceneSpec::courtyard(1, 0.15);
    let mut g = c.benchmark_group("synth_scan");
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| synth_scan_with(black_box(&spec), &config, exec))
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let config = SensorConfig::synthetic_default();
    let scan = synth_scan(&SceneSpec::courtyard(2, 0.15), &config);
    let recon = lossless_reference(&scan, &config).unwrap();
    let mut g = c.benchmark_group("evaluate_pair");
    g.sample_size(20);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_pair(black_box(&scan), black_box(&recon), exec).unwrap())
        });
    }
    g.finish();
}

fn batch(c: &mut Criterion) {
    let config = SensorConfig::synthetic_default();
    let clouds: Vec<_> = (0..8)
        .map(|s| synth_scan(&SceneSpec::courtyard(s, 0.15), &config))
        .collect();
    let mut g = c.benchmark_group("compress_batch_8");
    g.sample_size(10);
    for (codecs, opts) in [
        (
            "png",
            CompressOptions::new(PlaneCodecs::uniform(CodecChoice::LOSSLESS)),
        ),
        (
            "default",
            CompressOptions::new(PlaneCodecs::lossy_default()),
        ),
    ] {
        for (name, exec) in EXECS {
            g.bench_function(BenchmarkId::new(codecs, name), |b| {
                b.iter(|| compress_batch(black_box(&clouds), &config, &opts, exec))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, synthesis, metrics, batch);
criterion_main!(benches);
