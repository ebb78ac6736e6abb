//! Time-resolved PL maps from trajectories, bandpass-filtered decay curves
//! and burst/dip metrics.
//!
//! The map is quasi-static: each coupled mode emits a Lorentzian line at
//! its instantaneous wavelength and linewidth, weighted by its photon
//! number, loss rate and overlap with the target cavity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::Trajectory;
use crate::modespace::ModeIndex;
use crate::par::Exec;
use crate::units::omega_interval_to_wl;

/// Intensity over (time × wavelength); row = time, column = wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLMap {
    /// nm, ascending
    pub lambda_grid: Vec<f64>,
    /// ps, ascending
    pub t_grid: Vec<f64>,
    pub intensity: Vec<Vec<f64>>,
}

impl PLMap {
    pub fn validate(&self) -> Result<()> {
        check_ascending(&self.lambda_grid, "wavelength grid")?;
        check_ascending(&self.t_grid, "time grid")?;
        if self.intensity.len() != self.t_grid.len()
            || self.intensity.iter().any(|r| r.len() != self.lambda_grid.len())
        {
            return invalid("map shape does not match its grids");
        }
        if self.intensity.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid("map intensities must be finite and >= 0");
        }
        Ok(())
    }

    /// ∫ S(λ, t) dλ per time row, trapezoid rule.
    pub fn integrated(&self) -> Vec<f64> {
        self.intensity.iter().map(|row| trapezoid(&self.lambda_grid, row)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// ps
    pub t_grid: Vec<f64>,
    pub intensity: Vec<f64>,
    /// nm
    pub center: f64,
    /// nm
    pub fwhm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Burst,
    Dip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstMetrics {
    pub kind: FeatureKind,
    /// I_max/I_0 for a burst, I_0/I_min for a dip.
    pub depth: f64,
    /// ps
    pub fwhm: f64,
    /// ps
    pub extremum_time: f64,
    pub baseline: f64,
}

fn check_ascending(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return invalid(format!("{what} is empty"));
    }
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid(format!("{what} must be finite and strictly ascending"));
    }
    Ok(())
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

/// Unit-area Lorentzian with full width `fwhm`.
fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / std::f64::consts::PI / ((x - center).powi(2) + hw * hw)
}

/// Builds the PL map. `collection_exponent` p sets the weight
/// w_l = |target component of mode l|^(2p).
pub fn synthesize_map(traj: &Trajectory, lambda_grid: &[f64], collection_exponent: f64, exec: Exec) -> Result<PLMap> {
    check_ascending(lambda_grid, "wavelength grid")?;
    if traj.is_empty() {
        return invalid("trajectory is empty");
    }
    if traj.modes.len() != traj.len() {
        return invalid("trajectory lacks coupled-mode snapshots");
    }
    if !(collection_exponent >= 0.0 && collection_exponent.is_finite()) {
        return invalid(format!("collection exponent must be >= 0, got {collection_exponent}"));
    }

    let rows: Vec<Result<Vec<f64>>> = exec.map_range(traj.len(), |i| {
        let modes = &traj.modes[i];
        let mut lines = Vec::with_capacity(2);
        for (l, n) in [(ModeIndex::One, traj.n1[i]), (ModeIndex::Two, traj.n2[i])] {
            let center = modes.wavelength_nm(l)?;
            let width = omega_interval_to_wl(2.0 * modes.kappa(l), center);
            let weight = modes.target_component(l).norm_sqr().powf(collection_exponent);
            let strength = weight * 2.0 * modes.kappa(l) * n.max(0.0);
            lines.push((center, width, strength));
        }
        Ok(lambda_grid
            .iter()
            .map(|&x| lines.iter().map(|&(c, w, s)| s * lorentzian(x, c, w)).sum())
            .collect())
    });
    let intensity = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PLMap { lambda_grid: lambda_grid.to_vec(), t_grid: traj.t.clone(), intensity })
}

/// Passes the map through a unit-peak Lorentzian bandpass filter.
pub fn apply_filter(map: &PLMap, center: f64, fwhm: f64) -> Result<DecayCurve> {
    map.validate()?;
    let (lo, hi) = (map.lambda_grid[0], *map.lambda_grid.last().unwrap());
    if !(center >= lo && center <= hi) {
        return invalid(format!("filter center {center} nm outside the map range [{lo}, {hi}] nm"));
    }
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return invalid(format!("filter width must be > 0, got {fwhm}"));
    }
    let hw = 0.5 * fwhm;
    let profile: Vec<f64> = map.lambda_grid.iter().map(|x| 1.0 / (1.0 + ((x - center) / hw).powi(2))).collect();
    let intensity = map
        .intensity
        .iter()
        .map(|row| {
            let y: Vec<f64> = row.iter().zip(&profile).map(|(s, f)| s * f).collect();
            trapezoid(&map.lambda_grid, &y)
        })
        .collect();
    Ok(DecayCurve { t_grid: map.t_grid.clone(), intensity, center, fwhm })
}

/// Burst or dip metrics relative to the mean over `baseline_window` (ps).
/// The extremum is searched after the window.
pub fn burst_metrics(curve: &DecayCurve, baseline_window: (f64, f64)) -> Result<BurstMetrics> {
    check_ascending(&curve.t_grid, "time grid")?;
    if curve.intensity.len() != curve.t_grid.len() {
        return invalid("curve length does not match its time grid");
    }
    let (ta, tb) = baseline_window;
    let base: Vec<f64> = curve
        .t_grid
        .iter()
        .zip(&curve.intensity)
        .filter(|(t, _)| **t >= ta && **t <= tb)
        .map(|(_, v)| *v)
        .collect();
    if base.len() < 3 {
        return invalid(format!("baseline window [{ta}, {tb}] ps holds {} samples, need 3", base.len()));
    }
    let m = base.len() as f64;
    let i0 = base.iter().sum::<f64>() / m;
    let sd = (base.iter().map(|v| (v - i0).powi(2)).sum::<f64>() / m).sqrt();
    if !(i0 > 0.0) {
        return invalid(format!("baseline level must be positive, got {i0}"));
    }

    let start = curve.t_grid.partition_point(|t| *t <= tb);
    if start >= curve.t_grid.len() {
        return invalid("no samples after the baseline window");
    }
    let after = &curve.intensity[start..];
    let (imax_rel, imax) = after
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let (imin_rel, imin) = after
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });

    let burst_depth = imax / i0;
    let dip_depth = if imin > 0.0 { i0 / imin } else { f64::INFINITY };
    let (kind, idx, ext, depth) = if burst_depth >= dip_depth {
        (FeatureKind::Burst, start + imax_rel, imax, burst_depth)
    } else {
        (FeatureKind::Dip, start + imin_rel, imin, dip_depth)
    };
    let deviation = (ext - i0).abs();
    let threshold = (3.0 * sd).max(1e-9 * i0);
    if deviation < threshold {
        return Err(Error::NoFeature { deviation, threshold });
    }

    let half = 0.5 * (i0 + ext);
    let t = &curve.t_grid;
    let y = &curve.intensity;
    let beyond = |v: f64| match kind {
        FeatureKind::Burst => v <= half,
        FeatureKind::Dip => v >= half,
    };
    let cross = |a: usize, b: usize| t[a] + (half - y[a]) * (t[b] - t[a]) / (y[b] - y[a]);
    let left = (1..=idx).rev().find(|&j| beyond(y[j - 1])).map(|j| cross(j - 1, j));
    let right = (idx..y.len() - 1).find(|&j| beyond(y[j + 1])).map(|j| cross(j, j + 1));
    let (Some(l), Some(r)) = (left, right) else {
        return invalid("feature does not return through half level inside the curve");
    };
    Ok(BurstMetrics { kind, depth, fwhm: r - l, extremum_time: t[idx], baseline: i0 })
}

/// Gaussian instrument response of standard deviation `sigma` (ps).
///
/// Each sample's trapezoid-weighted content is spread over the grid with a
/// kernel normalized on that same grid, so the total integral is kept.
pub fn irf_convolve(curve: &DecayCurve, sigma: f64) -> Result<DecayCurve> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("IRF width must be >= 0, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(curve.clone());
    }
    check_ascending(&curve.t_grid, "time grid")?;
    let t = &curve.t_grid;
    let n = t.len();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
            let right = if i + 1 < n { t[i + 1] - t[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    if w.iter().all(|x| *x == 0.0) {
        return Ok(curve.clone());
    }
    let mut out = vec![0.0; n];
    let mut kern = vec![0.0; n];
    for j in 0..n {
        let src = curve.intensity[j] * w[j];
        if src == 0.0 {
            continue;
        }
        let mut z = 0.0;
        for i in 0..n {
            let d = (t[i] - t[j]) / sigma;
            kern[i] = if d.abs() < 40.0 { (-0.5 * d * d).exp() } else { 0.0 };
            z += w[i] * kern[i];
        }
        for i in 0..n {
            out[i] += src * kern[i] / z;
        }
    }
    Ok(DecayCurve { intensity: out, ..curve.clone() })
}

/// Pointwise `num / den` on a shared grid; zero where the denominator is 0.
pub fn ratio_curve(num: &DecayCurve, den: &DecayCurve) -> Result<DecayCurve> {
    if num.t_grid != den.t_grid {
        return invalid("curves must share a time grid");
    }
    let intensity = num
        .intensity
        .iter()
        .zip(&den.intensity)
        .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
        .collect();
    Ok(DecayCurve { intensity, ..num.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curve(t: Vec<f64>, f: impl Fn(f64) -> f64) -> DecayCurve {
        let intensity = t.iter().map(|x| f(*x)).collect();
        DecayCurve { t_grid: t, intensity, center: 1552.0, fwhm: 0.5 }
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn gaussian_bump_metrics() {
        let c = curve(grid(-1000.0, 1500.0, 2501), |t| 1.0 + 2.0 * (-(t - 300.0).powi(2) / (2.0 * 100.0f64.powi(2))).exp());
        let m = burst_metrics(&c, (-1000.0, -500.0)).unwrap();
        assert_eq!(m.kind, FeatureKind::Burst);
        assert_relative_eq!(m.depth, 3.0, max_relative = 1e-6);
        assert_relative_eq!(m.fwhm, 235.48, max_relative = 0.02);
        assert_relative_eq!(m.extremum_time, 300.0);
    }

    #[test]
    fn dip_metrics() {
        let c = curve(grid(-1000.0, 1500.0, 2501), |t| 2.0 - (-(t - 200.0).powi(2) / (2.0 * 80.0f64.powi(2))).exp());
        let m = burst_metrics(&c, (-1000.0, -500.0)).unwrap();
        assert_eq!(m.kind, FeatureKind::Dip);
        assert_relative_eq!(m.depth, 2.0, max_relative = 1e-6);
        assert_relative_eq!(m.fwhm, 2.3548 * 80.0, max_relative = 0.01);
    }

    #[test]
    fn flat_curve_has_no_feature() {
        let c = curve(grid(0.0, 100.0, 101), |_| 4.0);
        assert!(matches!(burst_metrics(&c, (0.0, 20.0)), Err(Error::NoFeature { .. })));
    }

    #[test]
    fn short_baseline_rejected() {
        let c = curve(grid(0.0, 100.0, 101), |t| t);
        assert!(burst_metrics(&c, (0.0, 1.0)).is_err());
    }

    #[test]
    fn irf_identity_and_width() {
        let t = grid(-1000.0, 1000.0, 2001);
        let c = curve(t.clone(), |x| if x == 0.0 { 1.0 } else { 0.0 });
        assert_eq!(irf_convolve(&c, 0.0).unwrap(), c);
        let b = irf_convolve(&c, 50.0).unwrap();
        assert_relative_eq!(trapezoid(&t, &b.intensity), trapezoid(&t, &c.intensity), max_relative = 1e-12);
        let baseline = DecayCurve { intensity: b.intensity.iter().map(|v| v + 1e-6).collect(), ..b.clone() };
        let m = burst_metrics(&baseline, (-1000.0, -600.0)).unwrap();
        assert_relative_eq!(m.fwhm, 117.74, max_relative = 0.01);
    }

    #[test]
    fn filter_rejects_outside_center() {
        let map = PLMap { lambda_grid: vec![1551.0, 1552.0, 1553.0], t_grid: vec![0.0], intensity: vec![vec![1.0; 3]] };
        assert!(apply_filter(&map, 1554.0, 0.5).is_err());
        assert!(apply_filter(&map, 1552.0, 0.0).is_err());
        assert!(apply_filter(&map, 1552.0, 0.5).is_ok());
    }
}
