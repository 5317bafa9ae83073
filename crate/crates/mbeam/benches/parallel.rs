use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mbeam::channel::Cir;
use mbeam::exec::Execution;
use mbeam::linksim::scenario::{run_scenario, RandomBlocker, ScenarioConfig};
use mbeam::linksim::{default_sensitivity_grid, sensitivity_map, SensitivitySetup};
use mbeam::superres::{build_dictionary, jitter_search, JitterGrid};
use mbeam::{sinc, Complex64};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ScenarioConfig {
            trials: 16,
            duration_s: 0.2,
            random_blocker: Some(RandomBlocker { duration_s: (0.02, 0.1), ..RandomBlocker::default() }),
            exec,
            ..ScenarioConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_scenario(&cfg).unwrap()));
    }
    group.finish();
}

fn sensitivity(c: &mut Criterion) {
    let mut group = c.benchmark_group("sensitivity_map");
    let (delta, sigma) = default_sensitivity_grid();
    let setup = SensitivitySetup::default();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sensitivity_map(&setup, &delta, &sigma, exec).unwrap())
        });
    }
    group.finish();
}

fn jitter(c: &mut Criterion) {
    let mut group = c.benchmark_group("jitter_search");
    let bw = 400e6;
    let tofs = [0.0, 1.0e-9, 2.2e-9];
    let taps: Vec<Complex64> = (0..64)
        .map(|n| {
            let t = n as f64 - 20.0;
            Complex64::new(sinc(t), 0.0)
                + Complex64::from_polar(0.6, 1.0) * sinc(t - 0.4)
                + Complex64::from_polar(0.3, -2.0) * sinc(t - 0.88)
        })
        .collect();
    let cir = Cir::from_taps(taps, bw).unwrap();
    let dict = build_dictionary(&tofs, bw, 64).unwrap();
    let grid = JitterGrid::default();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| jitter_search(&cir, &dict, &grid, 1e-6, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, sensitivity, jitter);
criterion_main!(benches);
