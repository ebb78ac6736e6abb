use std::hint::black_box;

use cavmold::fitting::{fit, synthesize, Bounds, ControlKind, FitOptions, FitParams};
use cavmold::lindblad::{evolve, DensityMatrix, HilbertSpec, PumpSchedule, SolverOptions};
use cavmold::modespace::{anticrossing_sweep_nm, SystemParams};
use cavmold::spectra::synthesize_map;
use cavmold::tuning::{FreeCarrierPulse, TuningProfile};
use cavmold::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sweep(c: &mut Criterion) {
    let p = SystemParams::nominal();
    let grid: Vec<f64> = (0..20_001).map(|i| -1.5 + 3.0 * i as f64 / 20_000.0).collect();
    let mut group = c.benchmark_group("anticrossing_sweep");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| anticrossing_sweep_nm(black_box(&p), &grid, exec).unwrap())
        });
    }
    group.finish();
}

fn map(c: &mut Criterion) {
    let mut p = SystemParams::nominal();
    p.pump = PumpSchedule::cw(1e7);
    let prof = TuningProfile::new(
        0.0,
        None,
        vec![FreeCarrierPulse { t0: 0.0, delta_lambda_max: 0.6, tau_fc: 300.0, tau_rise: 0.0 }],
    )
    .unwrap();
    let spec = HilbertSpec::new(2).unwrap();
    let t_grid: Vec<f64> = (0..=1250).map(|i| -1000.0 + 2.0 * i as f64).collect();
    let traj = evolve(&p, &prof, &DensityMatrix::vacuum(spec), &t_grid, &SolverOptions::default()).unwrap();
    let lambda: Vec<f64> = (0..301).map(|i| 1550.5 + 0.01 * i as f64).collect();
    let mut group = c.benchmark_group("synthesize_map");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| synthesize_map(black_box(&traj), &lambda, 1.0, exec).unwrap())
        });
    }
    group.finish();
}

fn multistart_fit(c: &mut Criterion) {
    let truth = FitParams::from_system(&SystemParams::nominal());
    let controls: Vec<f64> = (-6..=6).map(|i| i as f64 * 0.25).collect();
    let data = synthesize(&truth, ControlKind::Detuning, &controls, true, false).unwrap();
    let init = FitParams { eta: 1.3 * truth.eta, kappa_t: 0.8 * truth.kappa_t, ..truth };
    let mut group = c.benchmark_group("multistart_fit");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = FitOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| fit(black_box(&data), &init, &Bounds::default(), opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, map, multistart_fit);
criterion_main!(benches);
