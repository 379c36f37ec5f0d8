use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hnd_core::par::Jobs;
use hnd_core::synthetic::{generate, Plant, PlantTarget, PlantedSpec};
use hnd_core::{dissect_layer, DissectConfig};

fn bench_dissect(c: &mut Criterion) {
    let mut spec = PlantedSpec::new(64, 200, 11);
    for u in 0..16 {
        spec.plants.push(Plant {
            unit: u,
            target: PlantTarget::Concept { concept: "Eyeglasses".into() },
            effect: 2.0,
        });
    }
    let g = generate(&spec).expect("bench spec");
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());

    let mut group = c.benchmark_group("dissect_layer");
    group.sample_size(10);
    for (label, jobs) in [("serial", Jobs::SERIAL), ("parallel", Jobs(Some(threads)))] {
        let config = DissectConfig { jobs, ..DissectConfig::default() };
        group.bench_with_input(BenchmarkId::new(label, 64), &config, |b, config| {
            b.iter(|| dissect_layer(black_box(&g.dictionary), black_box(&g.activations), config, "bench").unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_dissect);
criterion_main!(benches);
