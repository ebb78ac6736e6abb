//! Coupled-mode algebra for one emitter, a target cavity and a Fabry-Perot
//! (FP) cavity.
//!
//! A cavity mode is a complex frequency `ω − iκ` where `κ` is the
//! field-amplitude decay rate, so `Q = ω/(2κ)` and the photon number decays
//! at `2κ`. The two cavities form a complex-symmetric 2×2 block
//!
//! ```text
//! | ω_t − iκ_t      η        |
//! |     η       ω_FP − iκ_FP |
//! ```
//!
//! whose eigenvectors are written `mode 1 = (α, −β)`, `mode 2 = (β, α)` in the
//! (target, FP) basis, Euclidean normalized.

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::PumpSchedule;
use crate::par::Exec;
use crate::units::{omega_to_wl, wl_to_omega};

/// Relative size of the eigenvalue splitting below which a pair is treated
/// as coalesced.
const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BareMode {
    /// rad/s
    pub omega: f64,
    /// Field-amplitude decay rate, rad/s.
    pub kappa: f64,
}

impl BareMode {
    pub fn new(omega: f64, kappa: f64) -> Result<Self> {
        let mode = BareMode { omega, kappa };
        mode.validate()?;
        Ok(mode)
    }

    pub fn from_wavelength(lambda_nm: f64, kappa: f64) -> Result<Self> {
        Self::new(wl_to_omega(lambda_nm)?, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return invalid(format!("mode frequency must be positive, got {}", self.omega));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return invalid(format!("mode loss rate must be positive, got {}", self.kappa));
        }
        if !(self.omega / (2.0 * self.kappa) > 1.0) {
            return invalid(format!(
                "mode quality factor must exceed 1 (omega {}, kappa {})",
                self.omega, self.kappa
            ));
        }
        Ok(())
    }

    pub fn complex_frequency(&self) -> C64 {
        C64::new(self.omega, -self.kappa)
    }

    pub fn q_factor(&self) -> f64 {
        self.omega / (2.0 * self.kappa)
    }

    pub fn wavelength_nm(&self) -> f64 {
        omega_to_wl(self.omega).expect("validated mode frequency")
    }
}

/// Q = ω/(2κ).
pub fn q_factor(omega: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return invalid(format!("loss rate must be positive, got {kappa}"));
    }
    Ok(omega / (2.0 * kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// rad/s
    pub omega0: f64,
    /// Emitter to target-cavity coupling, rad/s.
    pub g: f64,
    /// Background emission into non-cavity modes, 1/s.
    pub gamma_leaky: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub emitter: EmitterParams,
    pub target: BareMode,
    pub fp: BareMode,
    /// Cavity-cavity coupling, rad/s.
    pub eta: f64,
    pub pump: PumpSchedule,
}

/// Nominal device: target at 1552.0 nm, η from the 0.4 nm splitting,
/// κ_t = η, κ_FP = 3κ_t.
pub mod nominal {
    pub const LAMBDA_T_NM: f64 = 1552.0;
    pub const ETA: f64 = 1.564e11;
    pub const KAPPA_T: f64 = ETA;
    pub const KAPPA_FP: f64 = 3.0 * KAPPA_T;
    pub const G: f64 = 1e10;
    pub const GAMMA_LEAKY: f64 = 5e8;
}

impl SystemParams {
    pub fn new(
        emitter: EmitterParams,
        target: BareMode,
        fp: BareMode,
        eta: f64,
        pump: PumpSchedule,
    ) -> Result<Self> {
        let params = SystemParams { emitter, target, fp, eta, pump };
        params.validate()?;
        Ok(params)
    }

    /// Nominal parameters with the emitter resonant with the target and the
    /// FP cavity resonant too (zero detuning), no pumping.
    pub fn nominal() -> Self {
        let target = BareMode::from_wavelength(nominal::LAMBDA_T_NM, nominal::KAPPA_T)
            .expect("nominal target");
        SystemParams {
            emitter: EmitterParams {
                omega0: target.omega,
                g: nominal::G,
                gamma_leaky: nominal::GAMMA_LEAKY,
            },
            target,
            fp: BareMode { omega: target.omega, kappa: nominal::KAPPA_FP },
            eta: nominal::ETA,
            pump: PumpSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.fp.validate()?;
        let e = &self.emitter;
        if !(e.omega0 > 0.0 && e.omega0.is_finite()) {
            return invalid(format!("emitter frequency must be positive, got {}", e.omega0));
        }
        if !(e.g >= 0.0 && e.g.is_finite()) {
            return invalid(format!("emitter coupling g must be >= 0, got {}", e.g));
        }
        if !(e.gamma_leaky >= 0.0 && e.gamma_leaky.is_finite()) {
            return invalid(format!("leaky-mode rate must be >= 0, got {}", e.gamma_leaky));
        }
        let kmin = self.target.kappa.min(self.fp.kappa);
        if e.g >= kmin {
            return invalid(format!(
                "emitter coupling g = {} is not in the weak-coupling regime (min cavity loss {kmin})",
                e.g
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return invalid(format!("cavity coupling eta must be >= 0, got {}", self.eta));
        }
        self.pump.validate()
    }

    pub fn with_fp(&self, fp: BareMode) -> Self {
        SystemParams { fp, ..self.clone() }
    }

    /// Copy with the FP mode moved to `ω_t + detuning`.
    pub fn with_fp_detuning(&self, detuning: f64) -> Self {
        self.with_fp(BareMode { omega: self.target.omega + detuning, kappa: self.fp.kappa })
    }

    pub fn purcell_rate(&self) -> f64 {
        2.0 * self.emitter.g * self.emitter.g / self.target.kappa
    }

    pub fn coupled_modes(&self) -> CoupledModes {
        couple(&self.target, &self.fp, self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModeIndex {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledModes {
    pub omega1: f64,
    pub omega2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha: C64,
    pub beta: C64,
    /// Set when the two eigenmodes coalesce (exceptional point).
    pub degenerate: bool,
}

impl CoupledModes {
    pub fn eigenvalue(&self, l: ModeIndex) -> C64 {
        match l {
            ModeIndex::One => C64::new(self.omega1, -self.kappa1),
            ModeIndex::Two => C64::new(self.omega2, -self.kappa2),
        }
    }

    pub fn omega(&self, l: ModeIndex) -> f64 {
        self.eigenvalue(l).re
    }

    pub fn kappa(&self, l: ModeIndex) -> f64 {
        -self.eigenvalue(l).im
    }

    /// (target, FP) components of the normalized mode function.
    pub fn mode_vector(&self, l: ModeIndex) -> [C64; 2] {
        match l {
            ModeIndex::One => [self.alpha, -self.beta],
            ModeIndex::Two => [self.beta, self.alpha],
        }
    }

    pub fn target_component(&self, l: ModeIndex) -> C64 {
        self.mode_vector(l)[0]
    }

    pub fn q_factor(&self, l: ModeIndex) -> f64 {
        self.omega(l) / (2.0 * self.kappa(l))
    }

    pub fn wavelength_nm(&self, l: ModeIndex) -> Result<f64> {
        omega_to_wl(self.omega(l))
    }
}

/// Diagonalizes the cavity pair.
pub fn couple(target: &BareMode, fp: &BareMode, eta: f64) -> CoupledModes {
    let a = target.complex_frequency();
    let d = fp.complex_frequency();
    let mean = (a + d) * 0.5;
    // half difference from the small quantities directly, avoiding the
    // cancellation of two ~1e15 numbers
    let h = C64::new(target.omega - fp.omega, fp.kappa - target.kappa) * 0.5;
    let eta_c = C64::new(eta, 0.0);

    if eta == 0.0 {
        return uncoupled(target, fp);
    }

    let mut s = (h * h + eta_c * eta_c).sqrt();
    let scale = h.norm().max(eta);
    let degenerate = s.norm() <= DEGENERACY_TOL * scale;
    if degenerate {
        s = C64::new(0.0, 0.0);
    }
    let (wp, wm) = (mean + s, mean - s);
    // mode 1: lower real frequency, then lower loss
    let plus_first = (wp.re, -wp.im) < (wm.re, -wm.im);
    let (w1, w2, s1) = if plus_first { (wp, wm, s) } else { (wm, wp, -s) };

    // eigenvector of w1: (η, w1 − a) or (w1 − d, η), with w1 − a = −h + s1
    // and w1 − d = h + s1
    let u = [eta_c, -h + s1];
    let v = [h + s1, eta_c];
    let vec1 = if norm2(&u) >= norm2(&v) { u } else { v };
    let (alpha, beta) = fix_phase(normalize(vec1));

    CoupledModes {
        omega1: w1.re,
        omega2: w2.re,
        kappa1: -w1.im,
        kappa2: -w2.im,
        alpha,
        beta,
        degenerate,
    }
}

fn uncoupled(target: &BareMode, fp: &BareMode) -> CoupledModes {
    let target_first = (target.omega, target.kappa) <= (fp.omega, fp.kappa);
    let (m1, m2, vec1) = if target_first {
        (target, fp, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    } else {
        (fp, target, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    };
    let (alpha, beta) = fix_phase(vec1);
    CoupledModes {
        omega1: m1.omega,
        omega2: m2.omega,
        kappa1: m1.kappa,
        kappa2: m2.kappa,
        alpha,
        beta,
        degenerate: target.omega == fp.omega && target.kappa == fp.kappa,
    }
}

fn norm2(v: &[C64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

fn normalize(v: [C64; 2]) -> [C64; 2] {
    let n = norm2(&v).sqrt();
    [v[0] / n, v[1] / n]
}

/// Maps the mode-1 vector `(α, −β)` to `(α, β)` with α real and
/// non-negative, or −β real positive when α vanishes.
fn fix_phase(v: [C64; 2]) -> (C64, C64) {
    let pivot = if v[0].norm() > 1e-14 { v[0] } else { v[1] };
    let phase = pivot.conj() / pivot.norm();
    let alpha = v[0] * phase;
    let beta = -(v[1] * phase);
    (alpha, beta)
}

/// |target component|²·κ_t/κ_l.
pub fn se_rate_ratio(coupled: &CoupledModes, l: ModeIndex, kappa_t: f64) -> f64 {
    coupled.target_component(l).norm_sqr() * kappa_t / coupled.kappa(l)
}

/// Emitter lifetime (s) with the FP cavity at `ω_t + detuning`.
pub fn total_decay_time(params: &SystemParams, detuning: f64) -> Result<f64> {
    decay_time_with_fp(params, &params.with_fp_detuning(detuning).fp)
}

pub fn decay_time_with_fp(params: &SystemParams, fp: &BareMode) -> Result<f64> {
    let coupled = couple(&params.target, fp, params.eta);
    let gamma_t = params.purcell_rate();
    let rate = params.emitter.gamma_leaky
        + gamma_t
            * [ModeIndex::One, ModeIndex::Two]
                .iter()
                .map(|&l| se_rate_ratio(&coupled, l, params.target.kappa))
                .sum::<f64>();
    if !(rate > 0.0) {
        return Err(Error::InvalidConfiguration(
            "total emitter decay rate is zero; decay time undefined".into(),
        ));
    }
    Ok(1.0 / rate)
}

/// Emitter population decay rate (1/s) from the cavity-pair resolvent,
/// `γ_leaky − 2g² Im[(ω_0 − M)⁻¹]_tt`. This is the Markovian weak-coupling
/// rate without the single-Lorentzian-per-mode approximation.
pub fn resolvent_decay_rate(params: &SystemParams) -> f64 {
    let w0 = params.emitter.omega0;
    // work relative to ω_0 to keep the small differences exact
    let a = C64::new(w0 - params.target.omega, params.target.kappa);
    let d = C64::new(w0 - params.fp.omega, params.fp.kappa);
    let det = a * d - params.eta * params.eta;
    let g_tt = d / det;
    let g = params.emitter.g;
    params.emitter.gamma_leaky - 2.0 * g * g * g_tt.im
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// FP minus target, rad/s.
    pub detuning: f64,
    pub lambda1_nm: f64,
    pub lambda2_nm: f64,
    pub q1: f64,
    pub q2: f64,
    /// s
    pub decay_time: f64,
    pub degenerate: bool,
}

fn sweep_row(params: &SystemParams, fp: &BareMode, detuning: f64) -> Result<SweepRow> {
    fp.validate()?;
    let c = couple(&params.target, fp, params.eta);
    Ok(SweepRow {
        detuning,
        lambda1_nm: c.wavelength_nm(ModeIndex::One)?,
        lambda2_nm: c.wavelength_nm(ModeIndex::Two)?,
        q1: c.q_factor(ModeIndex::One),
        q2: c.q_factor(ModeIndex::Two),
        decay_time: decay_time_with_fp(params, fp)?,
        degenerate: c.degenerate,
    })
}

/// One row per angular-frequency detuning (FP minus target, rad/s).
pub fn anticrossing_sweep(
    params: &SystemParams,
    detuning_grid: &[f64],
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    if detuning_grid.is_empty() {
        return invalid("detuning grid is empty");
    }
    if let Some(x) = detuning_grid.iter().find(|x| !x.is_finite()) {
        return invalid(format!("detuning grid contains non-finite value {x}"));
    }
    exec.map(detuning_grid, |&dw| {
        let fp = BareMode { omega: params.target.omega + dw, kappa: params.fp.kappa };
        sweep_row(params, &fp, dw)
    })
    .into_iter()
    .collect()
}

/// Same as [`anticrossing_sweep`] with wavelength detunings `λ_FP − λ_t`
/// (nm), converted exactly. The `detuning` field of each row stays in nm.
pub fn anticrossing_sweep_nm(
    params: &SystemParams,
    detunings_nm: &[f64],
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    if detunings_nm.is_empty() {
        return invalid("detuning grid is empty");
    }
    let lambda_t = params.target.wavelength_nm();
    exec.map(detunings_nm, |&dl| {
        let fp = BareMode::from_wavelength(lambda_t + dl, params.fp.kappa)?;
        sweep_row(params, &fp, dl)
    })
    .into_iter()
    .collect()
}

/// 3×3 complex matrix in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix3(pub Matrix3<C64>);

impl ComplexMatrix3 {
    pub fn is_complex_symmetric(&self, tol: f64) -> bool {
        let m = &self.0;
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        (m - m.transpose()).iter().all(|z| z.norm() <= tol * scale)
    }

    /// Eigenvalues sorted by (real, imaginary) part, computed after removing
    /// `shift` from the diagonal and restored afterwards.
    pub fn eigenvalues_shifted(&self, shift: f64) -> [C64; 3] {
        let m = self.0 - Matrix3::from_diagonal_element(C64::new(shift, 0.0));
        let ev = m
            .schur()
            .eigenvalues()
            .expect("complex Schur form is upper triangular");
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        out.map(|z| z + shift)
    }
}

/// Emitter, target, FP in the bare basis.
pub fn system_hamiltonian(params: &SystemParams) -> ComplexMatrix3 {
    let z = C64::new(0.0, 0.0);
    let g = C64::new(params.emitter.g, 0.0);
    let eta = C64::new(params.eta, 0.0);
    ComplexMatrix3(Matrix3::new(
        C64::new(params.emitter.omega0, 0.0), g, z,
        g, params.target.complex_frequency(), eta,
        z, eta, params.fp.complex_frequency(),
    ))
}

/// Emitter and the two coupled modes.
///
/// The basis change is a complex orthogonal transform, so the couplings use
/// the mixing amplitudes rescaled to `α² + β² = 1`; the Euclidean amplitudes
/// stored in [`CoupledModes`] differ from these by a common complex factor.
/// Fails at an exceptional point, where no such basis exists.
pub fn coupled_hamiltonian(params: &SystemParams, coupled: &CoupledModes) -> Result<ComplexMatrix3> {
    let fresh = params.coupled_modes();
    let scale = params.eta.max(params.target.kappa).max(params.fp.kappa);
    let mismatch = (fresh.eigenvalue(ModeIndex::One) - coupled.eigenvalue(ModeIndex::One)).norm()
        + (fresh.eigenvalue(ModeIndex::Two) - coupled.eigenvalue(ModeIndex::Two)).norm();
    if mismatch > 1e-9 * scale {
        return invalid("coupled modes were not derived from these system parameters");
    }
    let bilinear = coupled.alpha * coupled.alpha + coupled.beta * coupled.beta;
    if coupled.degenerate || bilinear.norm() < 1e-8 {
        return invalid("coupled-mode basis is defective at the exceptional point");
    }
    let s = bilinear.sqrt();
    let g = params.emitter.g;
    let ag = coupled.alpha / s * g;
    let bg = coupled.beta / s * g;
    let z = C64::new(0.0, 0.0);
    Ok(ComplexMatrix3(Matrix3::new(
        C64::new(params.emitter.omega0, 0.0), ag, bg,
        ag, coupled.eigenvalue(ModeIndex::One), z,
        bg, z, coupled.eigenvalue(ModeIndex::Two),
    )))
}
