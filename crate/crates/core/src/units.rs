//! Unit conversions between vacuum wavelength and angular frequency.
//!
//! Wavelengths are in nm, angular frequencies in rad/s, times in ps.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

const NM: f64 = 1e-9;

/// Seconds to picoseconds.
pub const PS_PER_S: f64 = 1e12;

/// ω = 2πc/λ.
pub fn wl_to_omega(lambda_nm: f64) -> Result<f64> {
    if !(lambda_nm > 0.0) || !lambda_nm.is_finite() {
        return invalid(format!("wavelength must be positive and finite, got {lambda_nm} nm"));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / (lambda_nm * NM))
}

/// λ = 2πc/ω.
pub fn omega_to_wl(omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return invalid(format!("angular frequency must be positive and finite, got {omega} rad/s"));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / omega / NM)
}

/// First-order conversion of a wavelength detuning to an angular-frequency
/// detuning, Δω = −2πcΔλ/λ². A red shift (Δλ > 0) lowers the frequency.
pub fn detuning_wl_to_omega(delta_lambda_nm: f64, lambda_ref_nm: f64) -> Result<f64> {
    if !(lambda_ref_nm > 0.0) || !lambda_ref_nm.is_finite() {
        return invalid(format!("reference wavelength must be positive, got {lambda_ref_nm} nm"));
    }
    let lref = lambda_ref_nm * NM;
    Ok(-2.0 * PI * SPEED_OF_LIGHT * delta_lambda_nm * NM / (lref * lref))
}

/// Magnitude of a frequency interval expressed as a wavelength interval (nm)
/// at `lambda_ref_nm`, first order.
pub fn omega_interval_to_wl(delta_omega: f64, lambda_ref_nm: f64) -> f64 {
    let lref = lambda_ref_nm * NM;
    delta_omega.abs() * lref * lref / (2.0 * PI * SPEED_OF_LIGHT) / NM
}
