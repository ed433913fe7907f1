use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use covroute_core::cyclo::DcsEstimator;
use covroute_core::detector::{optimize_threshold, run_trials};
use covroute_core::routing::build_graph;
use covroute_core::waveform::{add_awgn, random_bits, synthesize};
use covroute_core::{rng, DetectorKind, Objective, ScenarioConfig, WaveformSpec};

fn dcs_estimate(c: &mut Criterion) {
    let spec = WaveformSpec::default();
    let p = spec.params().unwrap();
    let bits = random_bits(&mut rng::stream(1, &[0]), 256);
    let clean = synthesize(&p, &bits, 1.0).unwrap();
    let noise_psd = clean.mean_power() / p.bandwidth_hz();
    let x = add_awgn(&clean, noise_psd, 2).unwrap();
    let est = DcsEstimator::new(x.observation().len(), p.sample_rate_hz(), &spec.cycles().unwrap())
        .unwrap()
        .with_band_limit(p.bandwidth_hz());
    c.bench_function("dcs_256_bits", |b| b.iter(|| est.estimate(black_box(x.observation())).unwrap()));
}

fn routing(c: &mut Criterion) {
    let cfg = ScenarioConfig::preset("grid-covert").unwrap();
    let topo = cfg.topology().unwrap();
    let constraints = cfg.constraints().unwrap();
    c.bench_function("build_graph_6x6", |b| {
        b.iter(|| build_graph(black_box(&topo), &constraints, Objective::CovertMax, None).unwrap())
    });
    let graph = build_graph(&topo, &constraints, Objective::CovertMax, None).unwrap();
    c.bench_function("widest_path_6x6", |b| b.iter(|| black_box(&graph).widest_path().unwrap()));
}

fn calibration_cell(c: &mut Criterion) {
    let spec = WaveformSpec::default();
    let mut group = c.benchmark_group("calibration_cell");
    group.sample_size(10);
    for kind in [DetectorKind::Cycle, DetectorKind::Energy] {
        group.bench_function(kind.as_str(), |b| {
            b.iter(|| optimize_threshold(&run_trials(kind, &spec, 0.1, 64, 100, 7).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, dcs_estimate, routing, calibration_cell);
criterion_main!(benches);
