//! Recovery of coupled-mode parameters from anticrossing tables by
//! weighted least squares over the diagonalized cavity pair.

mod data;
pub mod simplex;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use data::{AnticrossingData, ControlKind, DataRow, MIN_ROWS};
pub use simplex::{SimplexOptions, SimplexResult};

use crate::error::{invalid, Result};
use crate::modespace::{couple, decay_time_with_fp, BareMode, EmitterParams, ModeIndex, SystemParams};
use crate::par::Exec;
use crate::units::detuning_wl_to_omega;

/// Model parameters. Rates in rad/s (γ_leaky in 1/s), wavelengths in nm,
/// slope in nm/mW. Optional entries are fitted only when the data need them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub eta: f64,
    pub kappa_t: f64,
    pub kappa_fp: f64,
    pub lambda_t: f64,
    pub slope: Option<f64>,
    pub offset: Option<f64>,
    pub gamma_leaky: Option<f64>,
    pub g: Option<f64>,
}

impl FitParams {
    pub fn from_system(p: &SystemParams) -> Self {
        FitParams {
            eta: p.eta,
            kappa_t: p.target.kappa,
            kappa_fp: p.fp.kappa,
            lambda_t: p.target.wavelength_nm(),
            slope: None,
            offset: None,
            gamma_leaky: Some(p.emitter.gamma_leaky),
            g: Some(p.emitter.g),
        }
    }

    pub fn with_calibration(self, slope: f64, offset: f64) -> Self {
        FitParams { slope: Some(slope), offset: Some(offset), ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    /// Bounds of η, κ_t, κ_FP and g, rad/s.
    pub rate_min: f64,
    pub rate_max: f64,
    /// Bounds of γ_leaky, 1/s.
    pub leaky_min: f64,
    pub leaky_max: f64,
    /// λ_t may move this far outside the data's wavelength span, nm.
    pub lambda_margin: f64,
    pub slope_max: f64,
    pub offset_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            rate_min: 1e9,
            rate_max: 1e14,
            leaky_min: 1e6,
            leaky_max: 1e12,
            lambda_margin: 2.0,
            slope_max: 10.0,
            offset_max: 10.0,
        }
    }
}

/// Uncertainties used when the data carry no `*_err` columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultUncertainty {
    /// nm
    pub lambda: f64,
    pub q_relative: f64,
    pub tau_relative: f64,
}

impl Default for DefaultUncertainty {
    fn default() -> Self {
        DefaultUncertainty { lambda: 0.05, q_relative: 0.1, tau_relative: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    /// Start 0 is the initial guess; the rest come from a seeded lattice.
    pub n_starts: usize,
    pub seed: u64,
    pub exec: Exec,
    pub uncertainty: DefaultUncertainty,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            simplex: SimplexOptions::default(),
            n_starts: 8,
            seed: 0,
            exec: Exec::Parallel,
            uncertainty: DefaultUncertainty::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// Finite-difference standard errors, same layout as `params`; NaN where
    /// the curvature matrix is singular.
    pub std_errors: FitParams,
    /// sqrt of the weighted sum of squared residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub start_index: usize,
    /// The fitted coupling is below the wavelength resolution or not
    /// distinguishable from zero.
    pub near_degenerate: bool,
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Eta,
    KappaT,
    KappaFp,
    LambdaT,
    Slope,
    Offset,
    GammaLeaky,
    G,
}

impl Slot {
    fn is_rate(self) -> bool {
        matches!(self, Slot::Eta | Slot::KappaT | Slot::KappaFp | Slot::GammaLeaky | Slot::G)
    }
}

fn layout(data: &AnticrossingData) -> Vec<Slot> {
    let mut s = vec![Slot::Eta, Slot::KappaT, Slot::KappaFp, Slot::LambdaT];
    if data.control == ControlKind::Power {
        s.extend([Slot::Slope, Slot::Offset]);
    }
    if data.has_tau() {
        s.extend([Slot::GammaLeaky, Slot::G]);
    }
    s
}

fn get(p: &FitParams, s: Slot) -> Option<f64> {
    match s {
        Slot::Eta => Some(p.eta),
        Slot::KappaT => Some(p.kappa_t),
        Slot::KappaFp => Some(p.kappa_fp),
        Slot::LambdaT => Some(p.lambda_t),
        Slot::Slope => p.slope,
        Slot::Offset => p.offset,
        Slot::GammaLeaky => p.gamma_leaky,
        Slot::G => p.g,
    }
}

fn set(p: &mut FitParams, s: Slot, v: f64) {
    match s {
        Slot::Eta => p.eta = v,
        Slot::KappaT => p.kappa_t = v,
        Slot::KappaFp => p.kappa_fp = v,
        Slot::LambdaT => p.lambda_t = v,
        Slot::Slope => p.slope = Some(v),
        Slot::Offset => p.offset = Some(v),
        Slot::GammaLeaky => p.gamma_leaky = Some(v),
        Slot::G => p.g = Some(v),
    }
}

fn slot_bounds(s: Slot, b: &Bounds, data: &AnticrossingData) -> (f64, f64) {
    let (lo, hi) = data.wavelength_span();
    match s {
        Slot::LambdaT => (lo - b.lambda_margin, hi + b.lambda_margin),
        Slot::Slope => (0.0, b.slope_max),
        Slot::Offset => (-b.offset_max, b.offset_max),
        Slot::GammaLeaky => (b.leaky_min, b.leaky_max),
        _ => (b.rate_min, b.rate_max),
    }
}

/// Total out-of-bounds distance, in units of each slot's range.
fn violation(p: &FitParams, slots: &[Slot], b: &Bounds, data: &AnticrossingData) -> f64 {
    slots
        .iter()
        .map(|&s| {
            let (lo, hi) = slot_bounds(s, b, data);
            let v = get(p, s).unwrap_or(f64::NAN);
            if !v.is_finite() {
                return 1.0;
            }
            ((lo - v).max(0.0) + (v - hi).max(0.0)) / (hi - lo)
        })
        .sum()
}

fn residual_len(data: &AnticrossingData) -> usize {
    data.rows.len() * (2 + if data.has_q() { 2 } else { 0 } + usize::from(data.has_tau()))
}

const PENALTY: f64 = 1e6;

/// Weighted residuals `(model − datum)/uncertainty`, row by row:
/// λ1, λ2, then Q1, Q2 and τ when present. Model modes are paired with the
/// data by ascending wavelength. Parameters outside `bounds` give large
/// finite penalty residuals.
pub fn residuals(
    theta: &FitParams,
    data: &AnticrossingData,
    bounds: &Bounds,
    unc: &DefaultUncertainty,
) -> Vec<f64> {
    let slots = layout(data);
    let m = residual_len(data);
    let v = violation(theta, &slots, bounds, data);
    if v > 0.0 {
        return vec![PENALTY * (1.0 + v); m];
    }
    let mut out = Vec::with_capacity(m);
    for row in &data.rows {
        match row_model(theta, data.control, row.control, data.has_tau()) {
            Some(model) => {
                let [(l1, q1), (l2, q2)] = model.modes;
                out.push((l1 - row.lambda1) / row.lambda1_err.unwrap_or(unc.lambda));
                out.push((l2 - row.lambda2) / row.lambda2_err.unwrap_or(unc.lambda));
                if let (Some(d1), Some(d2)) = (row.q1, row.q2) {
                    out.push((q1 - d1) / row.q1_err.unwrap_or(unc.q_relative * d1));
                    out.push((q2 - d2) / row.q2_err.unwrap_or(unc.q_relative * d2));
                }
                if let (Some(d), Some(tau)) = (row.tau, model.tau) {
                    out.push((tau - d) / row.tau_err.unwrap_or(unc.tau_relative * d));
                }
            }
            None => out.extend(std::iter::repeat_n(PENALTY, m / data.rows.len())),
        }
    }
    for r in out.iter_mut() {
        if !r.is_finite() {
            *r = PENALTY;
        }
    }
    out
}

struct RowModel {
    /// (wavelength nm, Q), ascending wavelength
    modes: [(f64, f64); 2],
    /// ns
    tau: Option<f64>,
}

fn row_model(p: &FitParams, kind: ControlKind, control: f64, with_tau: bool) -> Option<RowModel> {
    let detuning = match kind {
        ControlKind::Detuning => control,
        ControlKind::Power => p.offset? + p.slope? * control,
    };
    let target = BareMode::from_wavelength(p.lambda_t, p.kappa_t).ok()?;
    let fp = BareMode::from_wavelength(p.lambda_t + detuning, p.kappa_fp).ok()?;
    let c = couple(&target, &fp, p.eta);
    let mut modes = [ModeIndex::One, ModeIndex::Two].map(|l| (c.wavelength_nm(l).unwrap_or(f64::NAN), c.q_factor(l)));
    if modes[0].0 > modes[1].0 {
        modes.swap(0, 1);
    }
    let tau = if with_tau {
        let sys = SystemParams {
            emitter: EmitterParams { omega0: target.omega, g: p.g?, gamma_leaky: p.gamma_leaky? },
            target,
            fp,
            eta: p.eta,
            pump: Default::default(),
        };
        Some(decay_time_with_fp(&sys, &fp).ok()? * 1e9)
    } else {
        None
    };
    Some(RowModel { modes, tau })
}

/// Noiseless data generated from `truth` at the given control values.
pub fn synthesize(
    truth: &FitParams,
    control: ControlKind,
    controls: &[f64],
    with_q: bool,
    with_tau: bool,
) -> Result<AnticrossingData> {
    let rows = controls
        .iter()
        .map(|&x| {
            let m = row_model(truth, control, x, with_tau)
                .ok_or_else(|| crate::Error::InvalidInput("parameters incomplete for this data layout".into()))?;
            let mut r = DataRow::new(x, m.modes[0].0, m.modes[1].0);
            if with_q {
                r.q1 = Some(m.modes[0].1);
                r.q2 = Some(m.modes[1].1);
            }
            r.tau = m.tau;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    AnticrossingData::new(control, rows)
}

fn objective(theta: &FitParams, data: &AnticrossingData, b: &Bounds, u: &DefaultUncertainty) -> f64 {
    residuals(theta, data, b, u).iter().map(|r| r * r).sum()
}

fn to_search(p: &FitParams, slots: &[Slot]) -> Vec<f64> {
    slots
        .iter()
        .map(|&s| {
            let v = get(p, s).unwrap();
            if s.is_rate() {
                v.ln()
            } else {
                v
            }
        })
        .collect()
}

fn from_search(z: &[f64], slots: &[Slot], template: &FitParams) -> FitParams {
    let mut p = *template;
    for (&s, &v) in slots.iter().zip(z) {
        set(&mut p, s, if s.is_rate() { v.exp() } else { v });
    }
    p
}

fn search_steps(slots: &[Slot]) -> Vec<f64> {
    slots
        .iter()
        .map(|s| match s {
            Slot::LambdaT | Slot::Offset => 0.02,
            Slot::Slope => 0.01,
            _ => 0.1,
        })
        .collect()
}

fn start_points(init: &FitParams, slots: &[Slot], b: &Bounds, data: &AnticrossingData, opts: &FitOptions) -> Vec<FitParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![*init];
    for _ in 1..opts.n_starts.max(1) {
        let mut p = *init;
        for &s in slots {
            let (lo, hi) = slot_bounds(s, b, data);
            let v = get(&p, s).unwrap();
            let moved = match s {
                Slot::LambdaT | Slot::Offset => v + rng.random_range(-0.2..0.2),
                Slot::Slope => v * rng.random_range(-0.5f64..0.5).exp(),
                _ => v * rng.random_range(-std::f64::consts::LN_2..std::f64::consts::LN_2).exp(),
            };
            set(&mut p, s, moved.clamp(lo, hi));
        }
        starts.push(p);
    }
    starts
}

fn check_init(init: &FitParams, slots: &[Slot], b: &Bounds, data: &AnticrossingData) -> Result<()> {
    for &s in slots {
        let Some(v) = get(init, s) else {
            return invalid(format!("initial guess lacks {s:?}, which these data require"));
        };
        let (lo, hi) = slot_bounds(s, b, data);
        if !(v >= lo && v <= hi) {
            return invalid(format!("initial {s:?} = {v} outside bounds [{lo}, {hi}]"));
        }
    }
    Ok(())
}

/// Fits `data` starting from `init`. Runs the multi-start simplex search
/// and returns the lowest objective, ties going to the lowest start index.
pub fn fit(data: &AnticrossingData, init: &FitParams, bounds: &Bounds, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    let slots = layout(data);
    check_init(init, &slots, bounds, data)?;
    // parameters the data cannot constrain are dropped from the result
    let mut template = *init;
    for s in [Slot::Slope, Slot::Offset, Slot::GammaLeaky, Slot::G] {
        if !slots.contains(&s) {
            match s {
                Slot::Slope => template.slope = None,
                Slot::Offset => template.offset = None,
                Slot::GammaLeaky => template.gamma_leaky = None,
                _ => template.g = None,
            }
        }
    }

    let starts = start_points(&template, &slots, bounds, data, opts);
    let steps = search_steps(&slots);
    let unc = opts.uncertainty;
    let runs = opts.exec.map(&starts, |s| {
        let z0 = to_search(s, &slots);
        simplex::minimize(|z| objective(&from_search(z, &slots, &template), data, bounds, &unc), &z0, &steps, &opts.simplex)
    });
    let (start_index, best) = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, &SimplexResult)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.f <= r.f => acc,
            _ => Some((i, r)),
        })
        .expect("at least one start");
    let evaluations = runs.iter().map(|r| r.evals).sum();
    let params = from_search(&best.x, &slots, &template);
    let std_errors = standard_errors(&params, &slots, data, &unc);

    let lambda_res = data
        .rows
        .iter()
        .flat_map(|r| [r.lambda1_err, r.lambda2_err])
        .map(|e| e.unwrap_or(unc.lambda))
        .fold(f64::INFINITY, f64::min);
    let eta_res = 0.5 * detuning_wl_to_omega(lambda_res, params.lambda_t)?.abs();
    let near_degenerate = params.eta < eta_res || !(std_errors.eta < params.eta);

    Ok(FitResult {
        params,
        std_errors,
        residual_norm: best.f.sqrt(),
        converged: best.converged,
        evaluations,
        start_index,
        near_degenerate,
        history: best.history.clone(),
    })
}

/// sqrt(diag((JᵀJ)⁻¹)) from a central-difference Jacobian in natural units.
fn standard_errors(
    p: &FitParams,
    slots: &[Slot],
    data: &AnticrossingData,
    u: &DefaultUncertainty,
) -> FitParams {
    let m = residual_len(data);
    let n = slots.len();
    let mut jac = DMatrix::<f64>::zeros(m, n);
    // an optimum on a bound still gets a two-sided difference
    let unbounded = Bounds {
        rate_min: 0.0,
        rate_max: f64::INFINITY,
        leaky_min: 0.0,
        leaky_max: f64::INFINITY,
        lambda_margin: f64::INFINITY,
        slope_max: f64::INFINITY,
        offset_max: f64::INFINITY,
    };
    for (k, &s) in slots.iter().enumerate() {
        let v = get(p, s).unwrap();
        let h = 1e-6 * v.abs().max(1e-3);
        let (mut up, mut dn) = (*p, *p);
        set(&mut up, s, v + h);
        set(&mut dn, s, v - h);
        let ru = residuals(&up, data, &unbounded, u);
        let rd = residuals(&dn, data, &unbounded, u);
        for i in 0..m {
            jac[(i, k)] = (ru[i] - rd[i]) / (2.0 * h);
        }
    }
    let cov = (jac.transpose() * &jac).try_inverse();
    let mut se = FitParams {
        eta: f64::NAN,
        kappa_t: f64::NAN,
        kappa_fp: f64::NAN,
        lambda_t: f64::NAN,
        slope: None,
        offset: None,
        gamma_leaky: None,
        g: None,
    };
    for (k, &s) in slots.iter().enumerate() {
        let v = cov.as_ref().map_or(f64::NAN, |c| c[(k, k)].max(0.0).sqrt());
        set(&mut se, s, v);
    }
    se
}

/// Linear map from FP-cavity power to detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    /// nm/mW
    pub slope: f64,
    /// nm
    pub offset: f64,
}

impl PowerCalibration {
    pub fn detuning(&self, power_mw: f64) -> f64 {
        self.slope * power_mw + self.offset
    }
}

pub fn calibrate_power(data: &AnticrossingData, result: &FitResult) -> Result<PowerCalibration> {
    if data.control != ControlKind::Power {
        return invalid("data have no power column (control is a detuning in nm)");
    }
    match (result.params.slope, result.params.offset) {
        (Some(slope), Some(offset)) if slope >= 0.0 => Ok(PowerCalibration { slope, offset }),
        (Some(slope), Some(_)) => invalid(format!("fitted slope {slope} is negative")),
        _ => invalid("fit was run without calibration parameters"),
    }
}
