//! Scenario execution: static sweeps, dynamic runs with filtered traces,
//! delay scans and τ_fc calibration. Everything here is pure; files are
//! written by `output`.

use cavmold::fitting::{ControlKind, DataRow};
use cavmold::fitting::AnticrossingData;
use cavmold::lindblad::{evolve, steady_state, PumpSchedule, Trajectory};
use cavmold::modespace::{anticrossing_sweep_nm, SweepRow};
use cavmold::spectra::{apply_filter, burst_metrics, irf_convolve, ratio_curve, synthesize_map, BurstMetrics, DecayCurve, PLMap};
use cavmold::tuning::TuningProfile;
use cavmold::Exec;
use serde::Serialize;

use crate::config::{FilterConfig, RunConfig};
use crate::error::{CliError, Result};

const MAX_BISECTIONS: usize = 40;

pub fn static_sweep(cfg: &RunConfig, exec: Exec) -> Result<Vec<SweepRow>> {
    let params = cfg.system_params()?;
    Ok(anticrossing_sweep_nm(&params, &cfg.grids.detuning_nm.values(), exec)?)
}

/// Sweep rows in the fit-ingest layout; decay times in ns.
pub fn sweep_table(rows: &[SweepRow]) -> Result<AnticrossingData> {
    let data = rows
        .iter()
        .map(|r| {
            let mut d = DataRow::new(r.detuning, r.lambda1_nm, r.lambda2_nm);
            d.q1 = Some(r.q1);
            d.q2 = Some(r.q2);
            d.tau = Some(r.decay_time * 1e9);
            d
        })
        .collect();
    Ok(AnticrossingData::new(ControlKind::Detuning, data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutput {
    pub filter: FilterConfig,
    #[serde(skip)]
    pub curve: DecayCurve,
    /// Curve the metrics were taken from: the filtered trace, or its ratio
    /// to the unperturbed reference in a delay scan.
    #[serde(skip)]
    pub analysed: DecayCurve,
    pub baseline_window_ps: Option<[f64; 2]>,
    pub metrics: Option<BurstMetrics>,
    /// Why no metrics were produced.
    pub metrics_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub map: PLMap,
    pub trajectory: Trajectory,
    pub filters: Vec<FilterOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayOutput {
    pub delay_ps: f64,
    pub filters: Vec<FilterOutput>,
    pub max_trace_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub tau_fc_ps: f64,
    pub fwhm_ps: f64,
    pub target_fwhm_ps: f64,
    /// (τ_fc ps, FWHM ps) of every run, in evaluation order; NaN where no
    /// burst was found.
    pub evaluations: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicOutput {
    pub calibration: Option<Calibration>,
    /// Single run, or the unperturbed reference of a delay scan.
    pub run: RunOutput,
    pub delays: Vec<DelayOutput>,
}

fn baseline_window(cfg: &RunConfig, profile: &TuningProfile) -> [f64; 2] {
    if let Some(w) = cfg.spectra.baseline_window_ps {
        return w;
    }
    let t0 = profile.pulses().first().map_or(cfg.grids.time.start_ps + cfg.spectra.baseline_span_ps, |p| p.t0);
    [t0 - cfg.spectra.baseline_span_ps, t0 - 1e-9 * cfg.grids.time.step_ps]
}

/// Master-equation run from the CW steady state, followed by the PL map.
fn simulate(cfg: &RunConfig, profile: &TuningProfile, exec: Exec) -> Result<(Trajectory, PLMap)> {
    let params = cfg.system_params()?;
    let grid = cfg.grids.time.values();
    let fp0 = profile.fp_mode_at(grid[0], &params.target, params.fp.kappa)?;
    let rho0 = steady_state(&params, &fp0, &cfg.solver)?;
    let traj = evolve(&params, profile, &rho0, &grid, &cfg.solver)?;
    let map = synthesize_map(&traj, &cfg.grids.wavelength_nm.values(), cfg.spectra.collection_exponent, exec)?;
    Ok((traj, map))
}

fn filter_curve(map: &PLMap, f: &FilterConfig, irf_sigma: f64) -> Result<DecayCurve> {
    let c = apply_filter(map, f.center_nm, f.fwhm_nm)?;
    Ok(irf_convolve(&c, irf_sigma)?)
}

fn analyse(curve: DecayCurve, analysed: DecayCurve, filter: FilterConfig, window: [f64; 2]) -> FilterOutput {
    let (metrics, metrics_error) = match burst_metrics(&analysed, (window[0], window[1])) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    FilterOutput { filter, curve, analysed, baseline_window_ps: Some(window), metrics, metrics_error }
}

fn single_run(cfg: &RunConfig, profile: &TuningProfile, exec: Exec) -> Result<RunOutput> {
    let (trajectory, map) = simulate(cfg, profile, exec)?;
    let window = baseline_window(cfg, profile);
    let filters = cfg
        .spectra
        .filters
        .iter()
        .map(|f| {
            let c = filter_curve(&map, f, cfg.spectra.irf_sigma_ps)?;
            Ok(analyse(c.clone(), c, *f, window))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput { map, trajectory, filters })
}

/// Profile with the first control pulse moved to `t0` and every τ_fc set.
fn profile_with(cfg: &RunConfig, t0: Option<f64>, tau_fc: Option<f64>) -> Result<TuningProfile> {
    let mut c = cfg.clone();
    if let Some(tau) = tau_fc {
        for p in &mut c.tuning.pulses {
            p.tau_fc = tau;
        }
    }
    if let (Some(t0), Some(first)) = (t0, c.tuning.pulses.first_mut()) {
        first.t0 = t0;
    }
    Ok(c.profile()?)
}

/// Burst FWHM (ps) of the calibration run at one τ_fc; NaN without a burst.
pub fn calibration_fwhm(cfg: &RunConfig, tau_fc: f64, exec: Exec) -> Result<f64> {
    let cal = cfg.calibration.ok_or_else(|| CliError::config("calibration", "section missing"))?;
    let mut c = cfg.clone();
    c.pump = PumpSchedule::cw(cal.cw_rate);
    c.grids.time = cal.time;
    c.tuning.static_detuning_nm = cal.reference_detuning_nm;
    c.tuning.pulses.truncate(1);
    c.tuning.pulses[0].t0 = 0.0;
    c.tuning.pulses[0].tau_fc = tau_fc;
    c.spectra.filters = vec![cal.filter];
    c.spectra.baseline_window_ps = None;
    let run = single_run(&c, &c.profile()?, exec)?;
    Ok(match run.filters[0].metrics {
        Some(m) if m.kind == cavmold::spectra::FeatureKind::Burst => m.fwhm,
        _ => f64::NAN,
    })
}

/// One-dimensional scan of τ_fc on a log grid, then bisection on the first
/// bracket of the target FWHM.
pub fn calibrate(cfg: &RunConfig, exec: Exec) -> Result<Calibration> {
    let cal = cfg.calibration.ok_or_else(|| CliError::config("calibration", "section missing"))?;
    let n = cal.scan_points;
    let ratio = (cal.tau_max_ps / cal.tau_min_ps).ln();
    let taus: Vec<f64> = (0..n).map(|i| cal.tau_min_ps * (ratio * i as f64 / (n - 1) as f64).exp()).collect();
    let scan = exec.map(&taus, |&tau| calibration_fwhm(cfg, tau, Exec::Sequential));
    let mut evaluations = Vec::with_capacity(n + MAX_BISECTIONS);
    for (tau, w) in taus.iter().zip(scan) {
        evaluations.push([*tau, w?]);
    }
    let target = cal.target_fwhm_ps;
    let close = |w: f64| (w - target).abs() <= cal.tolerance_ps;
    let best = |ev: &[[f64; 2]]| {
        ev.iter()
            .filter(|e| close(e[1]))
            .min_by(|a, b| (a[1] - target).abs().total_cmp(&(b[1] - target).abs()))
            .copied()
    };
    if let Some([tau, w]) = best(&evaluations) {
        return Ok(Calibration { tau_fc_ps: tau, fwhm_ps: w, target_fwhm_ps: target, evaluations });
    }
    let bracket = evaluations.windows(2).find(|w| {
        w[0][1].is_finite() && w[1][1].is_finite() && (w[0][1] - target) * (w[1][1] - target) < 0.0
    });
    let Some(&[lo, hi]) = bracket else {
        return Err(CliError::Core(cavmold::Error::ConvergenceFailure(format!(
            "no τ_fc in [{}, {}] ps brackets a burst FWHM of {target} ps",
            cal.tau_min_ps, cal.tau_max_ps
        ))));
    };
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..MAX_BISECTIONS {
        let tau = (lo[0] * hi[0]).sqrt();
        let w = calibration_fwhm(cfg, tau, exec)?;
        evaluations.push([tau, w]);
        if close(w) {
            return Ok(Calibration { tau_fc_ps: tau, fwhm_ps: w, target_fwhm_ps: target, evaluations });
        }
        if !w.is_finite() {
            break;
        }
        if (w - target) * (lo[1] - target) > 0.0 {
            lo = [tau, w];
        } else {
            hi = [tau, w];
        }
    }
    Err(CliError::Core(cavmold::Error::ConvergenceFailure(format!(
        "τ_fc bisection did not reach {target} ± {} ps",
        cal.tolerance_ps
    ))))
}

pub fn dynamic(cfg: &RunConfig, exec: Exec) -> Result<DynamicOutput> {
    let calibration = cfg.calibration.map(|_| calibrate(cfg, exec)).transpose()?;
    let tau = calibration.as_ref().map(|c| c.tau_fc_ps);

    let Some(scan) = &cfg.delay_scan else {
        let run = single_run(cfg, &profile_with(cfg, None, tau)?, exec)?;
        return Ok(DynamicOutput { calibration, run, delays: Vec::new() });
    };

    let mut reference_cfg = cfg.clone();
    reference_cfg.tuning.pulses.clear();
    let (ref_traj, ref_map) = simulate(&reference_cfg, &reference_cfg.profile()?, exec)?;
    let ref_curves = cfg
        .spectra
        .filters
        .iter()
        .map(|f| filter_curve(&ref_map, f, cfg.spectra.irf_sigma_ps))
        .collect::<Result<Vec<_>>>()?;

    let delays = exec.map(&scan.delays_ps, |&d| -> Result<DelayOutput> {
        let profile = profile_with(cfg, Some(d), tau)?;
        let (traj, map) = simulate(cfg, &profile, Exec::Sequential)?;
        let window = match cfg.spectra.baseline_window_ps {
            Some(w) => w,
            None => [d - cfg.spectra.baseline_span_ps, d - 1e-9 * cfg.grids.time.step_ps],
        };
        let filters = cfg
            .spectra
            .filters
            .iter()
            .zip(&ref_curves)
            .map(|(f, reference)| {
                let c = filter_curve(&map, f, cfg.spectra.irf_sigma_ps)?;
                let r = ratio_curve(&c, reference)?;
                Ok(analyse(c, r, *f, window))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DelayOutput { delay_ps: d, filters, max_trace_error: traj.max_trace_error() })
    });
    let delays = delays.into_iter().collect::<Result<Vec<_>>>()?;

    let filters = cfg
        .spectra
        .filters
        .iter()
        .zip(ref_curves)
        .map(|(f, c)| FilterOutput {
            filter: *f,
            curve: c.clone(),
            analysed: c,
            baseline_window_ps: None,
            metrics: None,
            metrics_error: Some("reference run has no control pulse".into()),
        })
        .collect();
    Ok(DynamicOutput {
        calibration,
        run: RunOutput { map: ref_map, trajectory: ref_traj, filters },
        delays,
    })
}
