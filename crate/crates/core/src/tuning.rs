//! FP-cavity wavelength shift over time: static offset, thermo-optic red
//! shift and free-carrier blue-shift pulses with exponential recovery.
//!
//! Shifts are in nm relative to the bare target wavelength; times in ps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modespace::BareMode;
use crate::units::wl_to_omega;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoOpticModel {
    /// Red shift per unit CW power, nm/mW.
    pub coeff: f64,
    /// mW
    pub power: f64,
}

impl ThermoOpticModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.coeff >= 0.0 && self.coeff.is_finite()) {
            return invalid(format!("thermo-optic coefficient must be >= 0, got {}", self.coeff));
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return invalid(format!("CW power must be >= 0, got {}", self.power));
        }
        Ok(())
    }
}

/// coeff·power, nm.
pub fn thermo_shift(model: &ThermoOpticModel) -> Result<f64> {
    model.validate()?;
    Ok(model.coeff * model.power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeCarrierPulse {
    /// Arrival time, ps.
    pub t0: f64,
    /// Peak blue shift, nm.
    pub delta_lambda_max: f64,
    /// Carrier relaxation time, ps.
    pub tau_fc: f64,
    /// Rise time, ps. Zero means an instantaneous step.
    #[serde(default)]
    pub tau_rise: f64,
}

impl FreeCarrierPulse {
    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() {
            return invalid("pulse arrival time must be finite");
        }
        if !(self.delta_lambda_max >= 0.0 && self.delta_lambda_max.is_finite()) {
            return invalid(format!("pulse shift must be >= 0, got {}", self.delta_lambda_max));
        }
        if !(self.tau_fc > 0.0 && self.tau_fc.is_finite()) {
            return invalid(format!("free-carrier lifetime must be > 0, got {}", self.tau_fc));
        }
        if !(self.tau_rise >= 0.0 && self.tau_rise.is_finite()) {
            return invalid(format!("rise time must be >= 0, got {}", self.tau_rise));
        }
        Ok(())
    }

    /// Blue shift contribution at `t` (≤ 0, nm).
    pub fn shift_at(&self, t: f64) -> f64 {
        if t < self.t0 {
            return 0.0;
        }
        let dt = t - self.t0;
        let rise = if self.tau_rise > 0.0 { -(-dt / self.tau_rise).exp_m1() } else { 1.0 };
        -self.delta_lambda_max * rise * (-dt / self.tau_fc).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TuningProfile {
    /// λ_FP − λ_t without any pump, nm.
    pub static_detuning: f64,
    pub thermo: Option<ThermoOpticModel>,
    pulses: Vec<FreeCarrierPulse>,
    /// Extra FP loss per nm of free-carrier shift: κ_FP(t) = κ_FP·(1 + c·|shift_fc|).
    /// Zero disables free-carrier absorption.
    #[serde(default)]
    pub fc_absorption_per_nm: f64,
}

impl TuningProfile {
    pub fn new(
        static_detuning: f64,
        thermo: Option<ThermoOpticModel>,
        mut pulses: Vec<FreeCarrierPulse>,
    ) -> Result<Self> {
        if !static_detuning.is_finite() {
            return invalid("static detuning must be finite");
        }
        if let Some(th) = &thermo {
            th.validate()?;
        }
        for p in &pulses {
            p.validate()?;
        }
        pulses.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        Ok(TuningProfile { static_detuning, thermo, pulses, fc_absorption_per_nm: 0.0 })
    }

    pub fn constant(static_detuning: f64) -> Self {
        TuningProfile { static_detuning, ..Default::default() }
    }

    pub fn with_absorption(mut self, per_nm: f64) -> Result<Self> {
        if !(per_nm >= 0.0 && per_nm.is_finite()) {
            return invalid(format!("free-carrier absorption must be >= 0, got {per_nm}"));
        }
        self.fc_absorption_per_nm = per_nm;
        Ok(self)
    }

    pub fn pulses(&self) -> &[FreeCarrierPulse] {
        &self.pulses
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.static_detuning, self.thermo, self.pulses.clone())?
            .with_absorption(self.fc_absorption_per_nm)?;
        if self.pulses.windows(2).any(|w| w[0].t0 > w[1].t0) {
            return invalid("pulses must be sorted by arrival time");
        }
        Ok(())
    }

    /// Times at which the shift is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.t0).collect()
    }

    pub fn static_shift(&self) -> f64 {
        self.static_detuning + self.thermo.map_or(0.0, |th| th.coeff * th.power)
    }

    pub fn free_carrier_shift(&self, t: f64) -> f64 {
        self.free_carrier_shift_active(t, t)
    }

    /// Free-carrier shift at `t` counting only pulses that arrived at or
    /// before `active_until`. Integrators use this to evaluate a segment
    /// that ends exactly on a pulse arrival from the inside.
    pub fn free_carrier_shift_active(&self, t: f64, active_until: f64) -> f64 {
        self.pulses
            .iter()
            .take_while(|p| p.t0 <= active_until)
            .map(|p| p.shift_at(t))
            .sum()
    }

    /// FP shift relative to the bare target wavelength at time `t`, nm.
    pub fn fp_shift_at(&self, t: f64) -> f64 {
        self.static_shift() + self.free_carrier_shift(t)
    }

    /// Instantaneous FP mode for a target mode and an unperturbed FP loss.
    pub fn fp_mode_at(&self, t: f64, target: &BareMode, kappa_fp: f64) -> Result<BareMode> {
        self.fp_mode_active(t, t, target, kappa_fp)
    }

    pub fn fp_mode_active(
        &self,
        t: f64,
        active_until: f64,
        target: &BareMode,
        kappa_fp: f64,
    ) -> Result<BareMode> {
        let fc = self.free_carrier_shift_active(t, active_until);
        let lambda = target.wavelength_nm() + self.static_shift() + fc;
        let kappa = kappa_fp * (1.0 + self.fc_absorption_per_nm * fc.abs());
        BareMode::new(wl_to_omega(lambda)?, kappa)
    }

    /// Intervals `[start, end)` over which the shift varies fast, paired with
    /// the largest sensible integration step.
    pub fn fast_windows(&self) -> Vec<(f64, f64, f64)> {
        self.pulses
            .iter()
            .filter(|p| p.tau_rise > 0.0)
            .map(|p| (p.t0, p.t0 + 10.0 * p.tau_rise, 0.25 * p.tau_rise))
            .collect()
    }
}

/// FP mode snapshots on a strictly increasing time grid.
pub fn sample_profile(
    profile: &TuningProfile,
    t_grid: &[f64],
    target: &BareMode,
    kappa_fp: f64,
) -> Result<Vec<BareMode>> {
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must be strictly increasing");
    }
    t_grid.iter().map(|&t| profile.fp_mode_at(t, target, kappa_fp)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pulse(t0: f64, dl: f64, tau: f64) -> FreeCarrierPulse {
        FreeCarrierPulse { t0, delta_lambda_max: dl, tau_fc: tau, tau_rise: 0.0 }
    }

    #[test]
    fn pre_pulse_baseline() {
        let p = TuningProfile::new(0.3, None, vec![pulse(100.0, 0.6, 150.0)]).unwrap();
        assert_eq!(p.fp_shift_at(-50.0), 0.3);
        assert_eq!(p.fp_shift_at(99.999), 0.3);
    }

    #[test]
    fn pulse_pulls_onto_resonance() {
        let p = TuningProfile::new(0.6, None, vec![pulse(0.0, 0.6, 150.0)]).unwrap();
        assert_eq!(p.fp_shift_at(0.0), 0.0);
    }

    #[test]
    fn half_life() {
        let tau = 150.0;
        let p = TuningProfile::new(0.0, None, vec![pulse(10.0, 0.6, tau)]).unwrap();
        assert_relative_eq!(p.fp_shift_at(10.0 + tau * 2f64.ln()), -0.3, epsilon = 1e-14);
    }

    #[test]
    fn thermo_linear() {
        let m = ThermoOpticModel { coeff: 0.1, power: 0.0 };
        assert_eq!(thermo_shift(&m).unwrap(), 0.0);
        let m = ThermoOpticModel { coeff: 0.1, power: 10.0 };
        assert_relative_eq!(thermo_shift(&m).unwrap(), 1.0, epsilon = 1e-15);
        assert!(thermo_shift(&ThermoOpticModel { coeff: 0.1, power: -1.0 }).is_err());
        let p = TuningProfile::new(0.2, Some(m), vec![]).unwrap();
        assert_relative_eq!(p.fp_shift_at(0.0), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn rise_envelope() {
        let mut pl = pulse(0.0, 0.6, 150.0);
        pl.tau_rise = 5.0;
        assert_eq!(pl.shift_at(0.0), 0.0);
        assert!(pl.shift_at(1.0) < 0.0);
        let later = pl.shift_at(100.0);
        let expected = -0.6 * (1.0 - (-20f64).exp()) * (-100.0f64 / 150.0).exp();
        assert_relative_eq!(later, expected, max_relative = 1e-12);
    }

    #[test]
    fn pulses_sorted_and_validated() {
        let p = TuningProfile::new(0.0, None, vec![pulse(500.0, 0.1, 10.0), pulse(0.0, 0.2, 10.0)])
            .unwrap();
        assert_eq!(p.pulses()[0].t0, 0.0);
        assert!(TuningProfile::new(0.0, None, vec![pulse(0.0, -0.1, 10.0)]).is_err());
        assert!(TuningProfile::new(0.0, None, vec![pulse(0.0, 0.1, 0.0)]).is_err());
    }

    #[test]
    fn constant_profile_snapshots() {
        let target = BareMode::from_wavelength(1552.0, 1.564e11).unwrap();
        let p = TuningProfile::constant(0.25);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 3.0).collect();
        let snaps = sample_profile(&p, &grid, &target, 4.7e11).unwrap();
        assert!(snaps.windows(2).all(|w| w[0] == w[1]));
        assert_relative_eq!(snaps[0].wavelength_nm(), 1552.25, max_relative = 1e-13);
    }

    #[test]
    fn non_monotonic_grid_rejected() {
        let target = BareMode::from_wavelength(1552.0, 1.564e11).unwrap();
        let p = TuningProfile::constant(0.0);
        assert!(sample_profile(&p, &[0.0, 1.0, 1.0], &target, 4.7e11).is_err());
        assert!(sample_profile(&p, &[0.0, 2.0, 1.0], &target, 4.7e11).is_err());
    }

    #[test]
    fn recovery_is_monotonic_and_crossings_match_inversion() {
        let target = BareMode::from_wavelength(1552.0, 1.564e11).unwrap();
        let tau = 150.0;
        let p = TuningProfile::new(0.0, None, vec![pulse(0.0, 0.6, tau)]).unwrap();
        let dt = 1.0;
        let grid: Vec<f64> = (-100..=1500).map(|i| i as f64 * dt).collect();
        let snaps = sample_profile(&p, &grid, &target, 4.7e11).unwrap();
        let after: Vec<f64> = grid
            .iter()
            .zip(&snaps)
            .filter(|(t, _)| **t >= 0.0)
            .map(|(_, m)| m.wavelength_nm())
            .collect();
        assert!(after.windows(2).all(|w| w[1] > w[0]));

        // "in resonance" when within 0.1 nm of the target
        let thr = 0.1;
        let inside: Vec<bool> = snaps
            .iter()
            .map(|m| (m.wavelength_nm() - 1552.0).abs() < thr)
            .collect();
        let leave = grid[inside.iter().position(|x| !x).unwrap()];
        let reenter_idx = inside.iter().enumerate().skip(101).find(|(_, x)| **x).unwrap().0;
        let reenter = grid[reenter_idx];
        assert!((leave - 0.0).abs() <= dt);
        let analytic = tau * (0.6 / thr).ln();
        assert!((reenter - analytic).abs() <= dt, "{reenter} vs {analytic}");
    }

    #[test]
    fn absorption_hook() {
        let target = BareMode::from_wavelength(1552.0, 1.564e11).unwrap();
        let p = TuningProfile::new(0.0, None, vec![pulse(0.0, 0.5, 100.0)])
            .unwrap()
            .with_absorption(2.0)
            .unwrap();
        assert_eq!(p.fp_mode_at(-1.0, &target, 4e11).unwrap().kappa, 4e11);
        assert_relative_eq!(p.fp_mode_at(0.0, &target, 4e11).unwrap().kappa, 8e11, max_relative = 1e-15);
    }
}
