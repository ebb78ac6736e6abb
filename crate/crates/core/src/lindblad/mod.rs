//! Open-system dynamics of emitter ⊗ target mode ⊗ FP mode in a truncated
//! Fock space.
//!
//! Density matrices are stored row-major. Times inside this module are in
//! ps; rates crossing the public boundary are in SI units (1/s, rad/s).

mod generator;
mod integrate;
mod space;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use generator::{dense_superoperator, Fault, Frame, Liouvillian, Rates};
pub use integrate::{dopri_segment, rk4_segment, StepControl, Stats};
pub use space::{build_space, HilbertSpec, Ladder, OperatorSet};

use crate::error::{invalid, Error, Result};
use crate::modespace::{couple, BareMode, CoupledModes, ModeIndex, SystemParams};
use crate::tuning::TuningProfile;
use crate::units::PS_PER_S;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// How pulse events act on the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpMode {
    /// Gaussian rate envelope P(t) with the event's area and FWHM.
    #[default]
    Gaussian,
    /// The event's area is applied at once as the exact map exp(A·D[σ⁺]).
    Instantaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpPulse {
    /// Center time, ps.
    pub time: f64,
    /// ∫P dt, dimensionless.
    pub area: f64,
    /// FWHM, ps.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSchedule {
    /// Continuous emitter pump, 1/s.
    #[serde(default)]
    pub cw_rate: f64,
    #[serde(default)]
    pub pulse_events: Vec<PumpPulse>,
    #[serde(default)]
    pub mode: PumpMode,
    /// Continuous incoherent pump of the target cavity, 1/s. Off by default.
    #[serde(default)]
    pub cavity_cw_rate: f64,
}

impl PumpSchedule {
    pub fn cw(rate: f64) -> Self {
        PumpSchedule { cw_rate: rate, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cw_rate >= 0.0 && self.cw_rate.is_finite()) {
            return invalid(format!("CW pump rate must be >= 0, got {}", self.cw_rate));
        }
        if !(self.cavity_cw_rate >= 0.0 && self.cavity_cw_rate.is_finite()) {
            return invalid(format!("cavity pump rate must be >= 0, got {}", self.cavity_cw_rate));
        }
        for (i, p) in self.pulse_events.iter().enumerate() {
            if !p.time.is_finite() {
                return invalid(format!("pump pulse {i}: time must be finite"));
            }
            if !(p.area >= 0.0 && p.area.is_finite()) {
                return invalid(format!("pump pulse {i}: area must be >= 0, got {}", p.area));
            }
            if !(p.width > 0.0 && p.width.is_finite()) {
                return invalid(format!("pump pulse {i}: width must be > 0, got {}", p.width));
            }
        }
        Ok(())
    }

    /// Emitter pump rate at `t` (ps), 1/s. Instantaneous events do not
    /// contribute a rate.
    pub fn rate_at(&self, t: f64) -> f64 {
        let mut rate = self.cw_rate;
        if self.mode == PumpMode::Gaussian {
            for p in &self.pulse_events {
                let sigma = p.width / FWHM_PER_SIGMA;
                let z = (t - p.time) / sigma;
                if z.abs() < 40.0 {
                    let per_ps = p.area * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                    rate += per_ps * PS_PER_S;
                }
            }
        }
        rate
    }

    /// Windows `(start, end, step cap)` around Gaussian pulses, ps.
    fn fast_windows(&self) -> Vec<(f64, f64, f64)> {
        if self.mode != PumpMode::Gaussian {
            return Vec::new();
        }
        self.pulse_events
            .iter()
            .filter(|p| p.area > 0.0)
            .map(|p| {
                let sigma = p.width / FWHM_PER_SIGMA;
                (p.time - 6.0 * sigma, p.time + 6.0 * sigma, 0.5 * sigma)
            })
            .collect()
    }
}

/// Row-major density matrix over a [`HilbertSpec`] basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    spec: HilbertSpec,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn vacuum(spec: HilbertSpec) -> Self {
        Self::basis_state(spec, 0, 0, 0).expect("vacuum is in every space")
    }

    /// |e, n_t, n_fp⟩⟨e, n_t, n_fp|
    pub fn basis_state(spec: HilbertSpec, e: usize, n_t: usize, n_fp: usize) -> Result<Self> {
        if e > 1 || n_t > spec.n_max || n_fp > spec.n_max {
            return invalid(format!(
                "basis state ({e}, {n_t}, {n_fp}) outside space with n_max = {}",
                spec.n_max
            ));
        }
        let n = spec.dim();
        let mut data = vec![ZERO; n * n];
        let i = spec.index(e, n_t, n_fp);
        data[i * n + i] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { spec, data })
    }

    /// Validated construction from row-major entries.
    pub fn from_raw(spec: HilbertSpec, data: Vec<C64>) -> Result<Self> {
        let n = spec.dim();
        if data.len() != n * n {
            return invalid(format!("density matrix needs {} entries, got {}", n * n, data.len()));
        }
        let rho = DensityMatrix { spec, data };
        rho.validate()?;
        Ok(rho)
    }

    /// A random full-rank state, ρ = GG†/tr(GG†).
    pub fn random<R: Rng + ?Sized>(spec: HilbertSpec, rng: &mut R) -> Self {
        let n = spec.dim();
        let g = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut m = &g * g.adjoint();
        let tr: C64 = m.diagonal().sum();
        m /= tr;
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = m[(i, j)];
            }
        }
        DensityMatrix { spec, data }
    }

    pub fn spec(&self) -> HilbertSpec {
        self.spec
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.spec.dim() + j]
    }

    pub fn trace(&self) -> C64 {
        let n = self.spec.dim();
        (0..n).map(|i| self.data[i * n + i]).sum()
    }

    /// max |ρ_ij − conj(ρ_ji)|
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.spec.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.spec.dim();
        let m = DMatrix::from_fn(n, n, |i, j| (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5);
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-8 {
            return invalid(format!("density matrix trace is {tr}, expected 1"));
        }
        let h = self.hermiticity_error();
        if h > 1e-10 {
            return invalid(format!("density matrix is not Hermitian (error {h:e})"));
        }
        let lo = self.min_eigenvalue();
        if lo < -1e-8 {
            return invalid(format!("density matrix has negative eigenvalue {lo:e}"));
        }
        Ok(())
    }

    /// Tr(Dρ) for a diagonal operator D.
    pub fn expect_diag(&self, diag: &[f64]) -> f64 {
        let n = self.spec.dim();
        diag.iter().enumerate().map(|(i, d)| d * self.data[i * n + i].re).sum()
    }

    /// Tr(Lρ)
    pub fn expect_ladder(&self, op: &Ladder) -> C64 {
        let n = self.spec.dim();
        op.entries().map(|(i, k, a)| self.data[k * n + i] * a).sum()
    }

    /// The same state in a larger truncation, padded with zeros.
    pub fn embed(&self, target: HilbertSpec) -> Result<Self> {
        if target.n_max < self.spec.n_max {
            return invalid("cannot embed into a smaller space");
        }
        let (n, m) = (self.spec.dim(), target.dim());
        let map: Vec<usize> = (0..n)
            .map(|i| {
                let (e, a, b) = self.spec.decompose(i);
                target.index(e, a, b)
            })
            .collect();
        let mut data = vec![ZERO; m * m];
        for i in 0..n {
            for j in 0..n {
                data[map[i] * m + map[j]] = self.data[i * n + j];
            }
        }
        Ok(DensityMatrix { spec: target, data })
    }
}

/// Single-time expectation values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub emitter: f64,
    pub n_t: f64,
    pub n_fp: f64,
    /// ⟨a_t†a_fp⟩
    pub coherence: C64,
}

pub fn observables(rho: &DensityMatrix, ops: &OperatorSet) -> Observables {
    let hop = ops.a_t_dag.compose(&ops.a_fp);
    Observables {
        emitter: rho.expect_diag(&ops.n_e),
        n_t: rho.expect_diag(&ops.n_t),
        n_fp: rho.expect_diag(&ops.n_fp),
        coherence: rho.expect_ladder(&hop),
    }
}

/// Photon numbers of the two coupled modes.
///
/// With `P_l = ⟨b_l†b_l⟩` the projection onto the normalized mode function
/// of mode l and `N = n_t + n_fp`, mode l receives
/// `n_l = (P_l + N − P_other) / 2`. This equals `P_l` when the mode
/// functions are orthogonal, keeps `n_1 + n_2 = N` when they are not (a
/// non-Hermitian pair near the exceptional point) and stays in `[0, N]`.
pub fn mode_populations_from(obs: &Observables, coupled: &CoupledModes) -> (f64, f64) {
    let proj = |l| {
        let [vt, vf] = coupled.mode_vector(l);
        vt.norm_sqr() * obs.n_t + vf.norm_sqr() * obs.n_fp + 2.0 * (vt * vf.conj() * obs.coherence).re
    };
    let (p1, p2) = (proj(ModeIndex::One), proj(ModeIndex::Two));
    let total = obs.n_t + obs.n_fp;
    (0.5 * (p1 + total - p2), 0.5 * (p2 + total - p1))
}

pub fn mode_populations(rho: &DensityMatrix, coupled: &CoupledModes) -> Result<(f64, f64)> {
    let ops = build_space(rho.spec())?;
    Ok(mode_populations_from(&observables(rho, &ops), coupled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// ps
    #[serde(default = "default_h_max")]
    pub h_max: f64,
    #[serde(default)]
    pub frame: Frame,
    /// Classical RK4 with this step (ps) instead of the adaptive integrator.
    #[serde(default)]
    pub fixed_step: Option<f64>,
    /// Emitter pure dephasing, 1/s.
    #[serde(default)]
    pub dephasing: f64,
    #[serde(default = "default_true")]
    pub check_positivity: bool,
    /// Rerun at n_max + 1 and fail if any observable moves by more than 1%.
    #[serde(default)]
    pub convergence_check: bool,
    #[doc(hidden)]
    #[serde(skip)]
    pub fault: Option<Fault>,
}

fn default_n_max() -> usize {
    2
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-12
}
fn default_h_max() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_max: default_n_max(),
            rtol: default_rtol(),
            atol: default_atol(),
            h_max: default_h_max(),
            frame: Frame::Rotating,
            fixed_step: None,
            dephasing: 0.0,
            check_positivity: true,
            convergence_check: false,
            fault: None,
        }
    }
}

impl SolverOptions {
    pub fn spec(&self) -> Result<HilbertSpec> {
        HilbertSpec::new(self.n_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol), ("h_max", self.h_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be > 0, got {v}"));
            }
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0 && h.is_finite()) {
                return invalid(format!("fixed step must be > 0, got {h}"));
            }
        }
        if !(self.dephasing >= 0.0 && self.dephasing.is_finite()) {
            return invalid(format!("dephasing must be >= 0, got {}", self.dephasing));
        }
        Ok(())
    }

    fn control(&self) -> StepControl {
        StepControl { rtol: self.rtol, atol: self.atol, h_max: self.h_max, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// ps
    pub t: Vec<f64>,
    pub emitter: Vec<f64>,
    pub n_t: Vec<f64>,
    pub n_fp: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub coherence: Vec<C64>,
    pub modes: Vec<CoupledModes>,
    pub trace_error: Vec<f64>,
    /// NaN when positivity checks are disabled.
    pub min_eigenvalue: Vec<f64>,
    pub hermiticity_error: Vec<f64>,
    pub final_state: DensityMatrix,
    pub stats: Stats,
    /// Largest relative observable change against n_max + 1, when checked.
    pub truncation_deviation: Option<f64>,
}

impl Trajectory {
    fn new(final_state: DensityMatrix) -> Self {
        Trajectory {
            t: Vec::new(),
            emitter: Vec::new(),
            n_t: Vec::new(),
            n_fp: Vec::new(),
            n1: Vec::new(),
            n2: Vec::new(),
            coherence: Vec::new(),
            modes: Vec::new(),
            trace_error: Vec::new(),
            min_eigenvalue: Vec::new(),
            hermiticity_error: Vec::new(),
            final_state,
            stats: Stats::default(),
            truncation_deviation: None,
        }
    }

    pub fn max_trace_error(&self) -> f64 {
        self.trace_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn record(&mut self, t: f64, rho: &DensityMatrix, ops: &OperatorSet, modes: CoupledModes, positivity: bool) {
        let obs = observables(rho, ops);
        let (n1, n2) = mode_populations_from(&obs, &modes);
        self.t.push(t);
        self.emitter.push(obs.emitter);
        self.n_t.push(obs.n_t);
        self.n_fp.push(obs.n_fp);
        self.n1.push(n1);
        self.n2.push(n2);
        self.coherence.push(obs.coherence);
        self.modes.push(modes);
        self.trace_error.push((rho.trace() - 1.0).norm());
        self.min_eigenvalue.push(if positivity { rho.min_eigenvalue() } else { f64::NAN });
        self.hermiticity_error.push(rho.hermiticity_error());
    }
}

/// dρ/dt for a fixed FP mode and the CW part of the pump, in the rotating
/// frame, per ps.
pub fn liouvillian_apply(params: &SystemParams, fp_now: &BareMode, rho: &DensityMatrix) -> Result<Vec<C64>> {
    params.validate()?;
    fp_now.validate()?;
    let lv = Liouvillian::new(rho.spec())?;
    let r = Rates::new(params, fp_now, params.pump.cw_rate, params.pump.cavity_cw_rate, 0.0, Frame::Rotating);
    let mut out = vec![ZERO; rho.data.len()];
    lv.apply(&r, &rho.data, &mut out);
    Ok(out)
}

/// exp(A·D[σ⁺]) applied in place: ground-state population moves to the
/// excited state with weight 1 − e^(−A), emitter coherences shrink by e^(−A/2).
fn instantaneous_pump(rho: &mut DensityMatrix, area: f64) {
    let spec = rho.spec;
    let n = spec.dim();
    let half = n / 2;
    let keep = (-area).exp();
    let moved = -(-area).exp_m1();
    let coh = (-0.5 * area).exp();
    for i in 0..half {
        for j in 0..half {
            let gg = rho.data[i * n + j];
            rho.data[i * n + j] = gg * keep;
            rho.data[(i + half) * n + (j + half)] += gg * moved;
            rho.data[i * n + (j + half)] *= coh;
            rho.data[(i + half) * n + j] *= coh;
        }
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return invalid("time grid is empty");
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must be finite and strictly increasing");
    }
    Ok(())
}

/// Integrates the master equation over `t_grid` (ps) with the FP mode
/// following `profile` and the emitter pump following `params.pump`.
///
/// Pulse arrivals and instantaneous pump events act at their exact times;
/// a grid point that coincides with one records the state just after it.
pub fn evolve(
    params: &SystemParams,
    profile: &TuningProfile,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    params.validate()?;
    profile.validate()?;
    opts.validate()?;
    check_grid(t_grid)?;
    let spec = opts.spec()?;
    if rho0.spec != spec {
        return invalid(format!(
            "initial state has n_max = {}, solver expects {}",
            rho0.spec.n_max, spec.n_max
        ));
    }
    rho0.validate()?;

    let mut traj = evolve_unchecked(params, profile, rho0, t_grid, opts)?;
    if opts.convergence_check {
        let bigger = HilbertSpec::new(spec.n_max + 1)?;
        let opts_big = SolverOptions { n_max: bigger.n_max, convergence_check: false, ..opts.clone() };
        let big = evolve_unchecked(params, profile, &rho0.embed(bigger)?, t_grid, &opts_big)?;
        let dev = truncation_deviation(&traj, &big);
        traj.truncation_deviation = Some(dev);
        if dev > 0.01 {
            return Err(Error::ConvergenceFailure(format!(
                "observables change by {:.3}% from n_max = {} to {}",
                100.0 * dev,
                spec.n_max,
                bigger.n_max
            )));
        }
    }
    Ok(traj)
}

fn truncation_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    [(&a.emitter, &b.emitter), (&a.n_t, &b.n_t), (&a.n_fp, &b.n_fp), (&a.n1, &b.n1), (&a.n2, &b.n2)]
        .iter()
        .map(|(x, y)| {
            let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale
        })
        .fold(0.0, f64::max)
}

fn evolve_unchecked(
    params: &SystemParams,
    profile: &TuningProfile,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let spec = rho0.spec;
    let lv = Liouvillian::new(spec)?.with_fault(opts.fault);
    let ctl = opts.control();
    let pump = &params.pump;
    let (t_first, t_last) = (t_grid[0], *t_grid.last().unwrap());

    let mut windows = pump.fast_windows();
    windows.extend(profile.fast_windows());

    let instantaneous: Vec<(f64, f64)> = if pump.mode == PumpMode::Instantaneous {
        pump.pulse_events.iter().map(|p| (p.time, p.area)).collect()
    } else {
        Vec::new()
    };

    // Segment boundaries: grid points (flagged) plus interior breakpoints.
    let mut stops: Vec<(f64, bool)> = t_grid.iter().map(|&t| (t, true)).collect();
    let extra = profile
        .breakpoints()
        .into_iter()
        .chain(windows.iter().flat_map(|w| [w.0, w.1]))
        .chain(instantaneous.iter().map(|e| e.0))
        .filter(|&t| t > t_first && t < t_last);
    stops.extend(extra.map(|t| (t, false)));
    stops.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    stops.dedup_by(|later, earlier| later.0 == earlier.0);

    let fp_kappa = params.fp.kappa;
    let snapshot = |t: f64| -> Result<CoupledModes> {
        let fp = profile.fp_mode_at(t, &params.target, fp_kappa)?;
        Ok(couple(&params.target, &fp, params.eta))
    };

    let mut rho = rho0.clone();
    let mut traj = Trajectory::new(rho0.clone());
    let mut stats = Stats::default();
    for &(te, area) in &instantaneous {
        if te == t_first {
            instantaneous_pump(&mut rho, area);
        }
    }
    traj.record(t_first, &rho, lv.ops(), snapshot(t_first)?, opts.check_positivity);

    let mut h = 0.1_f64.min(ctl.h_max);
    for w in stops.windows(2) {
        let (a, (b, on_grid)) = (w[0].0, w[1]);
        // FP modes for this segment, validated once up front at both ends
        profile.fp_mode_active(a, a, &params.target, fp_kappa)?;
        profile.fp_mode_active(b, a, &params.target, fp_kappa)?;
        let mut rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            let fp = profile
                .fp_mode_active(t, a, &params.target, fp_kappa)
                .unwrap_or(BareMode { omega: params.fp.omega, kappa: fp_kappa });
            let r = Rates::new(params, &fp, pump.rate_at(t), pump.cavity_cw_rate, opts.dephasing, opts.frame);
            lv.apply(&r, y, dy);
        };
        match opts.fixed_step {
            Some(step) => rk4_segment(&mut rhs, a, b, &mut rho.data, step, &mut stats),
            None => {
                let cap = |t: f64| {
                    windows
                        .iter()
                        .filter(|w| t >= w.0 && t < w.1)
                        .map(|w| w.2)
                        .fold(f64::INFINITY, f64::min)
                };
                dopri_segment(&mut rhs, cap, a, b, &mut rho.data, &mut h, &ctl, &mut stats)?;
            }
        }
        for &(te, area) in &instantaneous {
            if te == b {
                instantaneous_pump(&mut rho, area);
            }
        }
        if on_grid {
            traj.record(b, &rho, lv.ops(), snapshot(b)?, opts.check_positivity);
        }
    }
    traj.final_state = rho;
    traj.stats = stats;
    Ok(traj)
}

/// Stationary state under the CW pumps with the FP mode held fixed.
///
/// Solves L(ρ) = 0 with tr ρ = 1 directly on the superoperator, then
/// verifies the residual ‖L(ρ)‖ < 1e-10·‖ρ‖.
pub fn steady_state(params: &SystemParams, fp_fixed: &BareMode, opts: &SolverOptions) -> Result<DensityMatrix> {
    params.validate()?;
    fp_fixed.validate()?;
    opts.validate()?;
    let spec = opts.spec()?;
    if params.pump.cw_rate == 0.0 && params.pump.cavity_cw_rate == 0.0 {
        return Ok(DensityMatrix::vacuum(spec));
    }
    let lv = Liouvillian::new(spec)?;
    let r = Rates::new(
        params,
        fp_fixed,
        params.pump.cw_rate,
        params.pump.cavity_cw_rate,
        opts.dephasing,
        Frame::Rotating,
    );
    let n = spec.dim();
    let nn = n * n;
    let mut sup = DMatrix::<C64>::zeros(nn, nn);
    let mut basis = vec![ZERO; nn];
    let mut col = vec![ZERO; nn];
    for k in 0..nn {
        basis[k] = C64::new(1.0, 0.0);
        lv.apply(&r, &basis, &mut col);
        basis[k] = ZERO;
        for (i, v) in col.iter().enumerate() {
            sup[(i, k)] = *v;
        }
    }
    // The (0,0) equation is redundant with trace conservation; replace it.
    for k in 0..nn {
        sup[(0, k)] = ZERO;
    }
    for i in 0..n {
        sup[(0, i * n + i)] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<C64>::zeros(nn);
    rhs[0] = C64::new(1.0, 0.0);
    let sol = sup
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ConvergenceFailure("steady-state system is singular".into()))?;

    let mut data: Vec<C64> = sol.iter().copied().collect();
    for i in 0..n {
        for j in i..n {
            let m = (data[i * n + j] + data[j * n + i].conj()) * 0.5;
            data[i * n + j] = m;
            data[j * n + i] = m.conj();
        }
    }
    let rho = DensityMatrix { spec, data };
    let mut out = vec![ZERO; nn];
    lv.apply(&r, &rho.data, &mut out);
    let resid = out.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let scale = rho.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    // residual in 1/ps relative to the fastest rate in the problem
    let rate_scale = [r.kappa_t, r.kappa_fp, r.g, r.eta, r.gamma_leaky, r.pump]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    if resid > 1e-10 * scale * rate_scale {
        return Err(Error::ConvergenceFailure(format!(
            "steady-state residual {resid:e} exceeds tolerance"
        )));
    }
    rho.validate().map_err(|e| Error::ConvergenceFailure(e.to_string()))?;
    Ok(rho)
}

/// Least-squares slope of ln y against t (ps) over samples with
/// `t_from <= t <= t_to`, returned as a positive rate in 1/s.
pub fn log_linear_rate(t: &[f64], y: &[f64], t_from: f64, t_to: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(tt, yy)| **tt >= t_from && **tt <= t_to && **yy > 0.0)
        .map(|(tt, yy)| (*tt, yy.ln()))
        .collect();
    if pts.len() < 3 {
        return invalid("need at least 3 positive samples in the fit window");
    }
    let m = pts.len() as f64;
    let tb = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let yb = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tb) * (p.1 - yb)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tb).powi(2)).sum();
    Ok(-sxy / sxx * PS_PER_S)
}

/// Emitter decay rate (1/s) from a master-equation run that starts with
/// the emitter excited and no pumping, fitted over `[t_from, t_to]` ps.
pub fn emitter_decay_rate(params: &SystemParams, opts: &SolverOptions, t_from: f64, t_to: f64) -> Result<f64> {
    let quiet = SystemParams { pump: PumpSchedule::default(), ..params.clone() };
    let spec = opts.spec()?;
    let rho0 = DensityMatrix::basis_state(spec, 1, 0, 0)?;
    let samples = 400;
    let grid: Vec<f64> = (0..=samples).map(|i| t_to * i as f64 / samples as f64).collect();
    let traj = evolve(&quiet, &TuningProfile::constant(fp_detuning_nm(params)?), &rho0, &grid, opts)?;
    log_linear_rate(&traj.t, &traj.emitter, t_from, t_to)
}

/// λ_FP − λ_t of the static FP mode in `params`, nm.
pub fn fp_detuning_nm(params: &SystemParams) -> Result<f64> {
    Ok(params.fp.wavelength_nm() - params.target.wavelength_nm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::nominal;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(n: usize) -> HilbertSpec {
        HilbertSpec::new(n).unwrap()
    }

    fn bare(g: f64, eta: f64, gamma_leaky: f64) -> SystemParams {
        let mut p = SystemParams::nominal();
        p.emitter.g = g;
        p.eta = eta;
        p.emitter.gamma_leaky = gamma_leaky;
        p
    }

    #[test]
    fn vacuum_is_stationary() {
        let p = SystemParams::nominal();
        let d = liouvillian_apply(&p, &p.fp, &DensityMatrix::vacuum(spec(2))).unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn bare_cavity_generator() {
        let p = bare(0.0, 0.0, 0.0);
        let rho = DensityMatrix::basis_state(spec(2), 0, 1, 0).unwrap();
        let d = liouvillian_apply(&p, &p.fp, &rho).unwrap();
        let ops = build_space(spec(2)).unwrap();
        let n = spec(2).dim();
        let dn: f64 = (0..n).map(|i| ops.n_t[i] * d[i * n + i].re).sum();
        assert_relative_eq!(dn, -2.0 * p.target.kappa / PS_PER_S, max_relative = 1e-12);
    }

    #[test]
    fn leaky_decay_is_exponential() {
        let p = bare(0.0, 0.0, 1e9);
        let rho0 = DensityMatrix::basis_state(spec(1), 1, 0, 0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 100.0).collect();
        let opts = SolverOptions { n_max: 1, ..Default::default() };
        let tr = evolve(&p, &TuningProfile::constant(0.0), &rho0, &grid, &opts).unwrap();
        for (t, e) in tr.t.iter().zip(&tr.emitter) {
            let exact = (-1e9 * t / PS_PER_S).exp();
            assert!((e - exact).abs() <= 1e-6 * exact, "{t}: {e} vs {exact}");
        }
    }

    #[test]
    fn photon_lifetime() {
        let p = bare(0.0, 0.0, 0.0);
        let tau = PS_PER_S / (2.0 * p.target.kappa);
        let rho0 = DensityMatrix::basis_state(spec(2), 0, 1, 0).unwrap();
        let tr = evolve(&p, &TuningProfile::constant(0.0), &rho0, &[0.0, tau], &Default::default()).unwrap();
        assert!((tr.n_t[1] - (-1f64).exp()).abs() < 1e-6 * (-1f64).exp());
        assert!(tr.max_trace_error() < 1e-8);
    }

    #[test]
    fn instantaneous_pump_map() {
        let mut rho = DensityMatrix::random(spec(1), &mut ChaCha8Rng::seed_from_u64(3));
        let ops = build_space(spec(1)).unwrap();
        let before = rho.expect_diag(&ops.n_e);
        instantaneous_pump(&mut rho, 0.7);
        let after = rho.expect_diag(&ops.n_e);
        assert_relative_eq!(1.0 - after, (1.0 - before) * (-0.7f64).exp(), max_relative = 1e-12);
        rho.validate().unwrap();
    }

    #[test]
    fn gaussian_pump_area() {
        let s = PumpSchedule {
            pulse_events: vec![PumpPulse { time: 100.0, area: 0.3, width: 6.0 }],
            ..Default::default()
        };
        let dt = 0.01;
        let area: f64 = (0..20000).map(|i| s.rate_at(i as f64 * dt) * dt / PS_PER_S).sum();
        assert_relative_eq!(area, 0.3, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_pump_matches_exact_map() {
        // g = 0: the emitter sees only D[σ⁺] while the pulse is on
        let mut p = bare(0.0, 0.0, 0.0);
        p.pump = PumpSchedule {
            pulse_events: vec![PumpPulse { time: 50.0, area: 0.4, width: 6.0 }],
            ..Default::default()
        };
        let rho0 = DensityMatrix::vacuum(spec(1));
        let opts = SolverOptions { n_max: 1, ..Default::default() };
        let tr = evolve(&p, &TuningProfile::constant(0.0), &rho0, &[0.0, 100.0], &opts).unwrap();
        assert_relative_eq!(tr.emitter[1], 1.0 - (-0.4f64).exp(), max_relative = 1e-7);
    }

    #[test]
    fn weak_pump_steady_state() {
        let mut p = SystemParams::nominal();
        p.fp = BareMode::from_wavelength(nominal::LAMBDA_T_NM + 1.0, nominal::KAPPA_FP).unwrap();
        let gamma = crate::modespace::resolvent_decay_rate(&p);
        p.pump = PumpSchedule::cw(1e-3 * gamma);
        let rho = steady_state(&p, &p.fp, &Default::default()).unwrap();
        let ops = build_space(spec(2)).unwrap();
        let e = rho.expect_diag(&ops.n_e);
        let predicted = p.pump.cw_rate / gamma;
        assert!((e - predicted).abs() < 0.05 * predicted, "{e} vs {predicted}");
    }

    #[test]
    fn unpumped_steady_state_is_vacuum() {
        let p = SystemParams::nominal();
        let rho = steady_state(&p, &p.fp, &Default::default()).unwrap();
        assert_eq!(rho, DensityMatrix::vacuum(spec(2)));
    }

    #[test]
    fn populations_uncoupled_and_split() {
        let rho = DensityMatrix::basis_state(spec(2), 0, 1, 0).unwrap();
        let p = bare(0.0, 0.0, 0.0);
        let uncoupled = couple(&p.target, &p.fp, 0.0);
        assert_eq!(mode_populations(&rho, &uncoupled).unwrap(), (1.0, 0.0));
        let sym = BareMode { omega: p.target.omega, kappa: p.target.kappa };
        let half = couple(&p.target, &sym, 1e11);
        let (a, b) = mode_populations(&rho, &half).unwrap();
        assert_relative_eq!(a, 0.5, epsilon = 1e-12);
        assert_relative_eq!(b, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn populations_sum_to_photon_number() {
        let p = SystemParams::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ops = build_space(spec(2)).unwrap();
        for dw in [0.0, 1e10, -3e11] {
            let c = couple(&p.target, &BareMode { omega: p.target.omega + dw, kappa: p.fp.kappa }, p.eta);
            let rho = DensityMatrix::random(spec(2), &mut rng);
            let obs = observables(&rho, &ops);
            let (a, b) = mode_populations_from(&obs, &c);
            assert_relative_eq!(a + b, obs.n_t + obs.n_fp, max_relative = 1e-12);
            assert!(a >= -1e-12 && b >= -1e-12);
        }
    }

    #[test]
    fn embed_preserves_observables() {
        let rho = DensityMatrix::random(spec(1), &mut ChaCha8Rng::seed_from_u64(9));
        let big = rho.embed(spec(3)).unwrap();
        big.validate().unwrap();
        let (o1, o3) = (
            observables(&rho, &build_space(spec(1)).unwrap()),
            observables(&big, &build_space(spec(3)).unwrap()),
        );
        assert_relative_eq!(o1.n_t, o3.n_t, epsilon = 1e-14);
        assert!((o1.coherence - o3.coherence).norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_grid_and_state() {
        let p = SystemParams::nominal();
        let rho = DensityMatrix::vacuum(spec(2));
        let prof = TuningProfile::constant(0.0);
        assert!(evolve(&p, &prof, &rho, &[0.0, 0.0], &Default::default()).is_err());
        assert!(evolve(&p, &prof, &DensityMatrix::vacuum(spec(1)), &[0.0, 1.0], &Default::default()).is_err());
        let mut bad = vec![ZERO; 64];
        bad[0] = C64::new(2.0, 0.0);
        assert!(DensityMatrix::from_raw(spec(1), bad).is_err());
    }
}
