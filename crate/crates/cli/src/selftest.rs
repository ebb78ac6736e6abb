//! Embedded invariant suite run by `cavmold selftest`.

use cavmold::lindblad::{
    dense_superoperator, emitter_decay_rate, evolve, steady_state, DensityMatrix, Fault, Frame, HilbertSpec, Liouvillian,
    PumpSchedule, Rates, SolverOptions,
};
use cavmold::modespace::{
    couple, coupled_hamiltonian, nominal, system_hamiltonian, BareMode, ModeIndex, SystemParams,
};
use cavmold::spectra::{burst_metrics, synthesize_map, DecayCurve, FeatureKind};
use cavmold::tuning::{FreeCarrierPulse, TuningProfile};
use cavmold::units::{omega_interval_to_wl, PS_PER_S};
use cavmold::Exec;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelftestOptions {
    /// Debug hook: flip the cavity-loss sign in the master-equation runs.
    pub inject_fault: bool,
}

type Check = fn(&SelftestOptions) -> Result<String, String>;

const CHECKS: [(&str, Check); 12] = [
    ("trace preservation", trace_preservation),
    ("positivity", positivity),
    ("photon decay e^(-2kt)", photon_decay),
    ("leaky emitter decay", leaky_decay),
    ("purcell weak-coupling rate", purcell_rate),
    ("exceptional-point Q halving", exceptional_point),
    ("coupled-basis similarity", similarity),
    ("target-component sum rule", sum_rule),
    ("matrix-free vs dense generator", dense_generator),
    ("steady-state stationarity", steady_state_check),
    ("lorentzian line area", line_area),
    ("gaussian burst metrics", gaussian_burst),
];

pub fn run(opts: &SelftestOptions) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| match f(opts) {
            Ok(detail) => CheckResult { name, passed: true, detail },
            Err(detail) => CheckResult { name, passed: false, detail },
        })
        .collect()
}

pub fn report(results: &[CheckResult]) -> String {
    let w = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!("{:<w$}  {}  {}\n", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail));
    }
    let n = results.iter().filter(|r| r.passed).count();
    s.push_str(&format!("{n}/{} checks passed\n", results.len()));
    s
}

fn solver(opts: &SelftestOptions, n_max: usize) -> SolverOptions {
    SolverOptions {
        n_max,
        fault: opts.inject_fault.then_some(Fault::CavityLossSign),
        ..Default::default()
    }
}

fn within(value: f64, bound: f64, what: &str) -> Result<String, String> {
    if value <= bound {
        Ok(format!("{what} {value:.2e} <= {bound:.0e}"))
    } else {
        Err(format!("{what} {value:.2e} > {bound:.0e}"))
    }
}

fn pumped_run(opts: &SelftestOptions) -> Result<cavmold::lindblad::Trajectory, String> {
    let mut p = SystemParams::nominal();
    p.pump = PumpSchedule::cw(1e9);
    let prof = TuningProfile::new(
        0.0,
        None,
        vec![FreeCarrierPulse { t0: 100.0, delta_lambda_max: 0.6, tau_fc: 200.0, tau_rise: 0.0 }],
    )
    .map_err(|e| e.to_string())?;
    let spec = HilbertSpec::new(2).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::basis_state(spec, 1, 1, 0).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 10.0).collect();
    evolve(&p, &prof, &rho0, &grid, &solver(opts, 2)).map_err(|e| e.to_string())
}

fn trace_preservation(opts: &SelftestOptions) -> Result<String, String> {
    let tr = pumped_run(opts)?;
    within(tr.max_trace_error(), 1e-8, "max |tr ρ − 1|")
}

fn positivity(opts: &SelftestOptions) -> Result<String, String> {
    let tr = pumped_run(opts)?;
    let min = tr.min_eigenvalue.iter().copied().fold(f64::INFINITY, f64::min);
    within(-min, 1e-8, "−min eigenvalue")
}

fn uncoupled() -> SystemParams {
    let mut p = SystemParams::nominal();
    p.emitter.g = 0.0;
    p.eta = 0.0;
    p.emitter.gamma_leaky = 0.0;
    p
}

fn photon_decay(opts: &SelftestOptions) -> Result<String, String> {
    let p = uncoupled();
    let spec = HilbertSpec::new(2).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::basis_state(spec, 0, 1, 0).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 2.0).collect();
    let tr = evolve(&p, &TuningProfile::constant(0.0), &rho0, &grid, &solver(opts, 2)).map_err(|e| e.to_string())?;
    let worst = tr
        .t
        .iter()
        .zip(&tr.n_t)
        .map(|(t, n)| {
            let exact = (-2.0 * p.target.kappa * t / PS_PER_S).exp();
            (n - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    within(worst, 1e-6, "relative error")
}

fn leaky_decay(opts: &SelftestOptions) -> Result<String, String> {
    let mut p = uncoupled();
    p.emitter.gamma_leaky = 1e9;
    let spec = HilbertSpec::new(1).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::basis_state(spec, 1, 0, 0).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 200.0).collect();
    let tr = evolve(&p, &TuningProfile::constant(0.0), &rho0, &grid, &solver(opts, 1)).map_err(|e| e.to_string())?;
    let worst = tr
        .t
        .iter()
        .zip(&tr.emitter)
        .map(|(t, e)| {
            let exact = (-1e9 * t / PS_PER_S).exp();
            (e - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    within(worst, 1e-6, "relative error")
}

fn purcell_rate(opts: &SelftestOptions) -> Result<String, String> {
    let mut p = SystemParams::nominal();
    p.eta = 0.0;
    p.emitter.g = p.target.kappa / 20.0;
    let expected = p.emitter.gamma_leaky + p.purcell_rate();
    let got = emitter_decay_rate(&p, &solver(opts, 1), 200.0, 2000.0).map_err(|e| e.to_string())?;
    within((got - expected).abs() / expected, 0.05, "relative deviation")
}

fn exceptional_point(_: &SelftestOptions) -> Result<String, String> {
    let t = BareMode::from_wavelength(nominal::LAMBDA_T_NM, nominal::KAPPA_T).map_err(|e| e.to_string())?;
    let fp = BareMode { omega: t.omega, kappa: 3.0 * t.kappa };
    let c = couple(&t, &fp, t.kappa);
    let worst = [ModeIndex::One, ModeIndex::Two]
        .iter()
        .map(|l| (c.q_factor(*l) / t.q_factor() - 0.5).abs())
        .fold(0.0, f64::max);
    within(worst, 1e-6, "|Q_l/Q_t − 0.5|")
}

fn random_params(rng: &mut ChaCha8Rng) -> SystemParams {
    let mut p = SystemParams::nominal();
    p.target.kappa = rng.random_range(5e10..5e11);
    p.fp.kappa = rng.random_range(5e10..2e12);
    p.fp.omega = p.target.omega + rng.random_range(-1e12..1e12);
    p.eta = rng.random_range(1e10..5e11);
    p.emitter.g = rng.random_range(0.0..0.5) * p.target.kappa.min(p.fp.kappa);
    p.emitter.omega0 = p.target.omega + rng.random_range(-2e11..2e11);
    p
}

fn similarity(_: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut n = 0;
    while n < 200 {
        let p = random_params(&mut rng);
        let c = p.coupled_modes();
        let Ok(h2) = coupled_hamiltonian(&p, &c) else { continue };
        let shift = p.target.omega;
        let a = system_hamiltonian(&p).eigenvalues_shifted(shift);
        let b = h2.eigenvalues_shifted(shift);
        let scale = p.target.kappa.max(p.fp.kappa).max(p.eta);
        for z in a {
            let d = b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d / z.norm().max(scale));
        }
        n += 1;
    }
    within(worst, 1e-10, "max relative eigenvalue mismatch")
}

fn sum_rule(_: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let c = p.coupled_modes();
        let s = c.target_component(ModeIndex::One).norm_sqr() + c.target_component(ModeIndex::Two).norm_sqr();
        worst = worst.max((s - 1.0).abs());
    }
    within(worst, 1e-12, "max |Σ|α_l|² − 1|")
}

fn dense_generator(opts: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for n_max in 1..=2 {
        let spec = HilbertSpec::new(n_max).map_err(|e| e.to_string())?;
        let mut p = random_params(&mut rng);
        p.emitter.gamma_leaky = 7e8;
        let r = Rates::new(&p, &p.fp, 3e8, 1e8, 2e8, Frame::Rotating);
        let lv = Liouvillian::new(spec)
            .map_err(|e| e.to_string())?
            .with_fault(opts.inject_fault.then_some(Fault::CavityLossSign));
        let dense = dense_superoperator(spec, &r).map_err(|e| e.to_string())?;
        let rho = DensityMatrix::random(spec, &mut rng);
        let mut out = vec![C64::new(0.0, 0.0); rho.as_slice().len()];
        lv.apply(&r, rho.as_slice(), &mut out);
        let v = nalgebra::DVector::from_column_slice(rho.as_slice());
        let d = &dense * v;
        let scale = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = out.iter().zip(d.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    within(worst, 1e-10, "max relative difference")
}

fn steady_state_check(opts: &SelftestOptions) -> Result<String, String> {
    let mut p = SystemParams::nominal();
    p.pump = PumpSchedule::cw(1e8);
    let s = solver(opts, 2);
    let rho = steady_state(&p, &p.fp, &s).map_err(|e| e.to_string())?;
    let tr = evolve(&p, &TuningProfile::constant(0.0), &rho, &[0.0, 500.0], &s).map_err(|e| e.to_string())?;
    let drift = rho
        .as_slice()
        .iter()
        .zip(tr.final_state.as_slice())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    within(drift, 1e-9, "max |Δρ| over 500 ps")
}

fn line_area(_: &SelftestOptions) -> Result<String, String> {
    let mut p = SystemParams::nominal();
    p.pump = PumpSchedule::cw(1e9);
    let spec = HilbertSpec::new(1).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::basis_state(spec, 0, 1, 0).map_err(|e| e.to_string())?;
    let tr = evolve(
        &p,
        &TuningProfile::constant(1.0),
        &rho0,
        &[0.0, 1.0],
        &SolverOptions { n_max: 1, ..Default::default() },
    )
    .map_err(|e| e.to_string())?;
    // Lorentzian tails beyond ±n FWHM hold 1/(πn) of the area; n = 200
    // keeps the truncation near 0.16%
    let m = &tr.modes[0];
    let widest = [ModeIndex::One, ModeIndex::Two]
        .iter()
        .map(|l| omega_interval_to_wl(2.0 * m.kappa(*l), nominal::LAMBDA_T_NM))
        .fold(0.0, f64::max);
    let half_span = 200.0 * widest;
    let n = 200_000;
    let grid: Vec<f64> = (0..=n).map(|i| nominal::LAMBDA_T_NM - half_span + 2.0 * half_span * i as f64 / n as f64).collect();
    let map = synthesize_map(&tr, &grid, 1.0, Exec::Sequential).map_err(|e| e.to_string())?;
    let integ = map.integrated()[0];
    let expected: f64 = [(ModeIndex::One, tr.n1[0]), (ModeIndex::Two, tr.n2[0])]
        .iter()
        .map(|(l, n)| m.target_component(*l).norm_sqr() * 2.0 * m.kappa(*l) * n)
        .sum();
    within((integ - expected).abs() / expected, 5e-3, "relative area error")
}

fn gaussian_burst(_: &SelftestOptions) -> Result<String, String> {
    let t: Vec<f64> = (0..=2500).map(|i| -1000.0 + i as f64).collect();
    let intensity = t.iter().map(|x| 1.0 + 2.0 * (-(x - 300.0).powi(2) / 2e4).exp()).collect();
    let c = DecayCurve { t_grid: t, intensity, center: 1552.0, fwhm: 0.5 };
    let m = burst_metrics(&c, (-1000.0, -500.0)).map_err(|e| e.to_string())?;
    if m.kind != FeatureKind::Burst || (m.depth - 3.0).abs() > 1e-6 {
        return Err(format!("kind {:?}, depth {}", m.kind, m.depth));
    }
    within((m.fwhm - 235.482).abs() / 235.482, 0.02, "relative FWHM error")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let r = run(&SelftestOptions::default());
        assert!(r.len() >= 10);
        for c in &r {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert!(report(&r).ends_with("12/12 checks passed\n"));
    }

    #[test]
    fn injected_fault_breaks_trace() {
        let r = run(&SelftestOptions { inject_fault: true });
        let trace = r.iter().find(|c| c.name == "trace preservation").unwrap();
        assert!(!trace.passed, "{}", trace.detail);
    }
}
