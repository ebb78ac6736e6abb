//! Run configuration: a versioned JSON document in I/O units (nm, ps,
//! rad/s, 1/s). Unknown keys are rejected and every physical invariant is
//! checked, with the offending key path, before anything runs.

use std::path::Path;

use cavmold::fitting::{Bounds, DefaultUncertainty, FitParams, SimplexOptions};
use cavmold::lindblad::{PumpMode, PumpPulse, PumpSchedule, SolverOptions};
use cavmold::modespace::{nominal, BareMode, EmitterParams, SystemParams};
use cavmold::tuning::{FreeCarrierPulse, ThermoOpticModel, TuningProfile};
use cavmold::units::{detuning_wl_to_omega, wl_to_omega};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub pump: PumpSchedule,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub spectra: SpectraConfig,
    /// Repeats the run with the first control pulse moved to each delay.
    #[serde(default)]
    pub delay_scan: Option<DelayScan>,
    /// Replaces every control pulse's τ_fc by a calibrated value.
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub render: RenderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub lambda_t_nm: f64,
    /// rad/s
    pub kappa_t: f64,
    pub kappa_fp: f64,
    pub eta: f64,
    pub g: f64,
    /// 1/s
    pub gamma_leaky: f64,
    /// Emitter wavelength minus target wavelength, nm.
    #[serde(default)]
    pub emitter_detuning_nm: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            lambda_t_nm: nominal::LAMBDA_T_NM,
            kappa_t: nominal::KAPPA_T,
            kappa_fp: nominal::KAPPA_FP,
            eta: nominal::ETA,
            g: nominal::G,
            gamma_leaky: nominal::GAMMA_LEAKY,
            emitter_detuning_nm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default)]
    pub static_detuning_nm: f64,
    #[serde(default)]
    pub thermo: Option<ThermoOpticModel>,
    #[serde(default)]
    pub pulses: Vec<FreeCarrierPulse>,
    #[serde(default)]
    pub fc_absorption_per_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Linspace {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let d = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| if i + 1 == self.count { self.stop } else { self.start + d * i as f64 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start_ps: f64,
    pub stop_ps: f64,
    pub step_ps: f64,
}

impl TimeGrid {
    /// `start + k·step` up to and including `stop` (within 1e-9 step).
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop_ps - self.start_ps) / self.step_ps + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start_ps + k as f64 * self.step_ps).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub detuning_nm: Linspace,
    pub time: TimeGrid,
    pub wavelength_nm: Linspace,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            detuning_nm: Linspace { start: -1.5, stop: 1.5, count: 301 },
            time: TimeGrid { start_ps: -1000.0, stop_ps: 1500.0, step_ps: 2.0 },
            wavelength_nm: Linspace { start: 1550.5, stop: 1553.5, count: 301 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    #[serde(default = "one")]
    pub collection_exponent: f64,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
    /// Explicit baseline window; otherwise the span preceding the control pulse.
    #[serde(default)]
    pub baseline_window_ps: Option<[f64; 2]>,
    #[serde(default = "baseline_span")]
    pub baseline_span_ps: f64,
    #[serde(default)]
    pub irf_sigma_ps: f64,
    /// Write the full wavelength × time map.
    #[serde(default = "yes")]
    pub write_map: bool,
}

fn one() -> f64 {
    1.0
}
fn baseline_span() -> f64 {
    500.0
}
fn yes() -> bool {
    true
}

impl Default for SpectraConfig {
    fn default() -> Self {
        SpectraConfig {
            collection_exponent: 1.0,
            filters: Vec::new(),
            baseline_window_ps: None,
            baseline_span_ps: 500.0,
            irf_sigma_ps: 0.0,
            write_map: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScan {
    pub delays_ps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub target_fwhm_ps: f64,
    pub tolerance_ps: f64,
    pub tau_min_ps: f64,
    pub tau_max_ps: f64,
    pub scan_points: usize,
    /// Static detuning of the burst run used for calibration, nm.
    pub reference_detuning_nm: f64,
    pub filter: FilterConfig,
    /// CW emitter pump of the calibration run, 1/s.
    pub cw_rate: f64,
    /// Time grid of the calibration run; the control pulse arrives at 0 ps.
    pub time: TimeGrid,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target_fwhm_ps: 232.0,
            tolerance_ps: 5.0,
            tau_min_ps: 40.0,
            tau_max_ps: 800.0,
            scan_points: 12,
            reference_detuning_nm: 0.0,
            filter: FilterConfig { center_nm: 1552.2, fwhm_nm: 0.5 },
            cw_rate: CW_PUMP,
            time: TimeGrid { start_ps: -1000.0, stop_ps: 1500.0, step_ps: 2.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Initial guess; the configured system (plus `calibration_init`) when absent.
    #[serde(default)]
    pub init: Option<FitParams>,
    /// Initial (slope nm/mW, offset nm) for power-controlled data.
    #[serde(default)]
    pub calibration_init: Option<[f64; 2]>,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub uncertainty: DefaultUncertainty,
    #[serde(default = "starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Objective evaluations allowed per start.
    #[serde(default = "max_evaluations")]
    pub max_evaluations: usize,
}

fn starts() -> usize {
    8
}

fn max_evaluations() -> usize {
    SimplexOptions::default().max_evals
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            init: None,
            calibration_init: None,
            bounds: Bounds::default(),
            uncertainty: DefaultUncertainty::default(),
            n_starts: 8,
            seed: 0,
            max_evaluations: max_evaluations(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapFormat {
    Ppm,
    Svg,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub heatmap: HeatmapFormat,
    #[serde(default)]
    pub log_scale: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { enabled: true, heatmap: HeatmapFormat::Both, log_scale: false }
    }
}

fn check(ok: bool, key: &str, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(key, msg))
    }
}

fn positive(v: f64, key: &str) -> Result<()> {
    check(v > 0.0 && v.is_finite(), key, format!("must be positive and finite, got {v}"))
}

fn non_negative(v: f64, key: &str) -> Result<()> {
    check(v >= 0.0 && v.is_finite(), key, format!("must be >= 0 and finite, got {v}"))
}

fn finite(v: f64, key: &str) -> Result<()> {
    check(v.is_finite(), key, format!("must be finite, got {v}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::config(key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every invariant of the underlying physical types.
    pub fn validate(&self) -> Result<()> {
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
        )?;
        let s = &self.system;
        positive(s.lambda_t_nm, "system.lambda_t_nm")?;
        positive(s.kappa_t, "system.kappa_t")?;
        positive(s.kappa_fp, "system.kappa_fp")?;
        non_negative(s.eta, "system.eta")?;
        non_negative(s.g, "system.g")?;
        non_negative(s.gamma_leaky, "system.gamma_leaky")?;
        finite(s.emitter_detuning_nm, "system.emitter_detuning_nm")?;
        let w = wl_to_omega(s.lambda_t_nm).map_err(|e| CliError::config("system.lambda_t_nm", e.to_string()))?;
        check(w / (2.0 * s.kappa_t) > 1.0, "system.kappa_t", "target Q must exceed 1")?;
        check(w / (2.0 * s.kappa_fp) > 1.0, "system.kappa_fp", "FP Q must exceed 1")?;
        check(
            s.g < s.kappa_t.min(s.kappa_fp),
            "system.g",
            format!("g = {} is outside the weak-coupling regime (must be < min(kappa_t, kappa_fp))", s.g),
        )?;

        let p = &self.pump;
        non_negative(p.cw_rate, "pump.cw_rate")?;
        non_negative(p.cavity_cw_rate, "pump.cavity_cw_rate")?;
        for (i, e) in p.pulse_events.iter().enumerate() {
            finite(e.time, &format!("pump.pulse_events[{i}].time"))?;
            non_negative(e.area, &format!("pump.pulse_events[{i}].area"))?;
            positive(e.width, &format!("pump.pulse_events[{i}].width"))?;
        }

        let t = &self.tuning;
        finite(t.static_detuning_nm, "tuning.static_detuning_nm")?;
        non_negative(t.fc_absorption_per_nm, "tuning.fc_absorption_per_nm")?;
        if let Some(th) = &t.thermo {
            non_negative(th.coeff, "tuning.thermo.coeff")?;
            non_negative(th.power, "tuning.thermo.power")?;
        }
        for (i, fc) in t.pulses.iter().enumerate() {
            let k = |f: &str| format!("tuning.pulses[{i}].{f}");
            finite(fc.t0, &k("t0"))?;
            non_negative(fc.delta_lambda_max, &k("delta_lambda_max"))?;
            positive(fc.tau_fc, &k("tau_fc"))?;
            non_negative(fc.tau_rise, &k("tau_rise"))?;
        }

        let sv = &self.solver;
        check(sv.n_max >= 1, "solver.n_max", format!("must be >= 1, got {}", sv.n_max))?;
        positive(sv.rtol, "solver.rtol")?;
        positive(sv.atol, "solver.atol")?;
        positive(sv.h_max, "solver.h_max")?;
        if let Some(h) = sv.fixed_step {
            positive(h, "solver.fixed_step")?;
        }
        non_negative(sv.dephasing, "solver.dephasing")?;

        let g = &self.grids;
        for (key, ls) in [("grids.detuning_nm", g.detuning_nm), ("grids.wavelength_nm", g.wavelength_nm)] {
            finite(ls.start, &format!("{key}.start"))?;
            finite(ls.stop, &format!("{key}.stop"))?;
            check(ls.count >= 1, &format!("{key}.count"), "must be >= 1")?;
            check(ls.count == 1 || ls.stop > ls.start, &format!("{key}.stop"), "must exceed start")?;
        }
        check(g.wavelength_nm.start > 0.0, "grids.wavelength_nm.start", "must be positive")?;
        check(g.wavelength_nm.count >= 2, "grids.wavelength_nm.count", "must be >= 2")?;
        finite(g.time.start_ps, "grids.time.start_ps")?;
        positive(g.time.step_ps, "grids.time.step_ps")?;
        check(
            g.time.stop_ps.is_finite() && g.time.stop_ps > g.time.start_ps,
            "grids.time.stop_ps",
            "must exceed start_ps",
        )?;
        check(
            (g.time.stop_ps - g.time.start_ps) / g.time.step_ps <= 1e7,
            "grids.time.step_ps",
            "grid would exceed 1e7 samples",
        )?;

        let sp = &self.spectra;
        non_negative(sp.collection_exponent, "spectra.collection_exponent")?;
        positive(sp.baseline_span_ps, "spectra.baseline_span_ps")?;
        non_negative(sp.irf_sigma_ps, "spectra.irf_sigma_ps")?;
        if let Some([a, b]) = sp.baseline_window_ps {
            check(a.is_finite() && b.is_finite() && b > a, "spectra.baseline_window_ps", "must be [start, end] with end > start")?;
        }
        let (lo, hi) = (g.wavelength_nm.start, g.wavelength_nm.stop);
        for (i, f) in sp.filters.iter().enumerate() {
            check(
                f.center_nm >= lo && f.center_nm <= hi,
                &format!("spectra.filters[{i}].center_nm"),
                format!("{} nm lies outside the wavelength grid [{lo}, {hi}]", f.center_nm),
            )?;
            positive(f.fwhm_nm, &format!("spectra.filters[{i}].fwhm_nm"))?;
        }

        if let Some(ds) = &self.delay_scan {
            check(!ds.delays_ps.is_empty(), "delay_scan.delays_ps", "must not be empty")?;
            for (i, d) in ds.delays_ps.iter().enumerate() {
                finite(*d, &format!("delay_scan.delays_ps[{i}]"))?;
            }
            check(!t.pulses.is_empty(), "tuning.pulses", "a delay scan needs a control pulse to move")?;
        }
        if let Some(c) = &self.calibration {
            positive(c.target_fwhm_ps, "calibration.target_fwhm_ps")?;
            positive(c.tolerance_ps, "calibration.tolerance_ps")?;
            positive(c.tau_min_ps, "calibration.tau_min_ps")?;
            check(c.tau_max_ps > c.tau_min_ps, "calibration.tau_max_ps", "must exceed tau_min_ps")?;
            check(c.scan_points >= 2, "calibration.scan_points", "must be >= 2")?;
            finite(c.reference_detuning_nm, "calibration.reference_detuning_nm")?;
            check(
                c.filter.center_nm >= lo && c.filter.center_nm <= hi,
                "calibration.filter.center_nm",
                "lies outside the wavelength grid",
            )?;
            positive(c.filter.fwhm_nm, "calibration.filter.fwhm_nm")?;
            positive(c.cw_rate, "calibration.cw_rate")?;
            positive(c.time.step_ps, "calibration.time.step_ps")?;
            check(
                c.time.start_ps < -self.spectra.baseline_span_ps && c.time.stop_ps > 0.0,
                "calibration.time",
                "must cover the baseline span before 0 ps and extend past 0 ps",
            )?;
            check(!t.pulses.is_empty(), "tuning.pulses", "calibration needs a control pulse")?;
        }

        let f = &self.fit;
        check(f.n_starts >= 1, "fit.n_starts", "must be >= 1")?;
        check(f.max_evaluations >= 10, "fit.max_evaluations", "must be >= 10")?;
        positive(f.uncertainty.lambda, "fit.uncertainty.lambda")?;
        positive(f.uncertainty.q_relative, "fit.uncertainty.q_relative")?;
        positive(f.uncertainty.tau_relative, "fit.uncertainty.tau_relative")?;
        let b = &f.bounds;
        check(b.rate_min > 0.0 && b.rate_max > b.rate_min, "fit.bounds.rate_max", "need 0 < rate_min < rate_max")?;
        check(b.leaky_min > 0.0 && b.leaky_max > b.leaky_min, "fit.bounds.leaky_max", "need 0 < leaky_min < leaky_max")?;
        positive(b.lambda_margin, "fit.bounds.lambda_margin")?;
        positive(b.slope_max, "fit.bounds.slope_max")?;
        positive(b.offset_max, "fit.bounds.offset_max")?;

        self.system_params().map_err(|e| CliError::config("system", e.to_string()))?;
        self.profile().map_err(|e| CliError::config("tuning", e.to_string()))?;
        Ok(())
    }

    /// Physical parameters with the FP mode at the static detuning.
    pub fn system_params(&self) -> cavmold::Result<SystemParams> {
        let s = &self.system;
        let target = BareMode::from_wavelength(s.lambda_t_nm, s.kappa_t)?;
        let omega0 = wl_to_omega(s.lambda_t_nm + s.emitter_detuning_nm)?;
        let profile = self.profile()?;
        let fp = BareMode::from_wavelength(s.lambda_t_nm + profile.static_shift(), s.kappa_fp)?;
        SystemParams::new(EmitterParams { omega0, g: s.g, gamma_leaky: s.gamma_leaky }, target, fp, s.eta, self.pump.clone())
    }

    pub fn profile(&self) -> cavmold::Result<TuningProfile> {
        let t = &self.tuning;
        TuningProfile::new(t.static_detuning_nm, t.thermo, t.pulses.clone())?.with_absorption(t.fc_absorption_per_nm)
    }

    /// FP detuning grid in rad/s, first order about λ_t.
    pub fn detuning_grid_rad(&self) -> cavmold::Result<Vec<f64>> {
        self.grids
            .detuning_nm
            .values()
            .iter()
            .map(|d| detuning_wl_to_omega(*d, self.system.lambda_t_nm))
            .collect()
    }
}

/// Names of the built-in scenarios.
pub const SCENARIOS: [&str; 6] = [
    "fig2-sweep",
    "fig3-burst",
    "fig3-dip",
    "fig4-delay",
    "fig4-delay-dip",
    "fig4-delay-blue-detuned",
];

fn base(name: &str) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        scenario: name.to_string(),
        system: SystemConfig::default(),
        pump: PumpSchedule::default(),
        tuning: TuningConfig::default(),
        solver: SolverOptions::default(),
        grids: Grids::default(),
        spectra: SpectraConfig::default(),
        delay_scan: None,
        calibration: None,
        fit: FitConfig::default(),
        render: RenderConfig::default(),
    }
}

/// Free-carrier control pulse with the default 150 ps lifetime.
fn control_pulse(t0: f64) -> FreeCarrierPulse {
    FreeCarrierPulse { t0, delta_lambda_max: 0.6, tau_fc: 150.0, tau_rise: 0.0 }
}

/// Weak CW emitter pump, 1/s; keeps photon numbers far below one.
const CW_PUMP: f64 = 1e7;

fn fig3(name: &str, static_detuning: f64, filter_nm: f64) -> RunConfig {
    let mut c = base(name);
    c.pump = PumpSchedule::cw(CW_PUMP);
    c.tuning = TuningConfig { static_detuning_nm: static_detuning, pulses: vec![control_pulse(0.0)], ..Default::default() };
    c.spectra.filters = vec![FilterConfig { center_nm: filter_nm, fwhm_nm: 0.5 }];
    c.calibration = Some(CalibrationConfig::default());
    c
}

fn fig4(name: &str, static_detuning: f64) -> RunConfig {
    let mut c = base(name);
    c.pump = PumpSchedule {
        pulse_events: vec![PumpPulse { time: 0.0, area: 1.0, width: 6.0 }],
        mode: PumpMode::Instantaneous,
        ..Default::default()
    };
    c.tuning = TuningConfig { static_detuning_nm: static_detuning, pulses: vec![control_pulse(2000.0)], ..Default::default() };
    c.grids.time = TimeGrid { start_ps: 0.0, stop_ps: 3500.0, step_ps: 2.0 };
    c.spectra.filters = vec![FilterConfig { center_nm: 1552.2, fwhm_nm: 0.5 }];
    c.spectra.write_map = false;
    c.delay_scan = Some(DelayScan { delays_ps: vec![1500.0, 2000.0, 2500.0] });
    c.calibration = Some(CalibrationConfig::default());
    c
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<RunConfig> {
    let c = match name {
        "fig2-sweep" => base(name),
        "fig3-burst" => fig3(name, 0.0, 1552.2),
        "fig3-dip" => fig3(name, 0.6, nominal::LAMBDA_T_NM),
        "fig4-delay" => fig4(name, 0.0),
        "fig4-delay-dip" => fig4(name, 0.6),
        "fig4-delay-blue-detuned" => fig4(name, -0.6),
        _ => return Err(CliError::UnknownScenario(name.to_string())),
    };
    c.validate()?;
    Ok(c)
}

/// Initial fit guess from the configured system.
pub fn fit_init(cfg: &RunConfig) -> Result<FitParams> {
    if let Some(init) = cfg.fit.init {
        return Ok(init);
    }
    let sys = cfg.system_params()?;
    let mut p = FitParams::from_system(&sys);
    if let Some([slope, offset]) = cfg.fit.calibration_init {
        p = p.with_calibration(slope, offset);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for name in SCENARIOS {
            let c = preset(name).unwrap();
            let back = RunConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c, "{name}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn unknown_key_is_located() {
        let mut v: serde_json::Value = serde_json::from_str(&preset("fig3-burst").unwrap().to_json()).unwrap();
        v["system"]["kapa_t"] = serde_json::json!(1.0);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("system") && err.contains("kapa_t"), "{err}");
    }

    #[test]
    fn invariant_violations_name_the_key() {
        let mut c = preset("fig3-burst").unwrap();
        c.tuning.pulses[0].tau_fc = -1.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("tuning.pulses[0].tau_fc"), "{err}");

        let mut c = preset("fig2-sweep").unwrap();
        c.system.g = 2.0 * c.system.kappa_t;
        assert!(c.validate().unwrap_err().to_string().contains("system.g"));

        let mut c = preset("fig3-burst").unwrap();
        c.spectra.filters[0].center_nm = 1600.0;
        assert!(c.validate().unwrap_err().to_string().contains("spectra.filters[0].center_nm"));

        let mut c = preset("fig2-sweep").unwrap();
        c.schema_version = 7;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grids() {
        let t = TimeGrid { start_ps: -1.0, stop_ps: 1.0, step_ps: 0.5 };
        assert_eq!(t.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let l = Linspace { start: 0.0, stop: 1.0, count: 3 };
        assert_eq!(l.values(), vec![0.0, 0.5, 1.0]);
    }
}
