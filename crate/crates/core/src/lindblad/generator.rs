use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::space::{build_space, HilbertSpec, Ladder, OperatorSet};
use crate::error::{invalid, Result};
use crate::modespace::{BareMode, SystemParams};
use crate::units::PS_PER_S;

/// Frame in which the generator is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Rotating at the bare target-cavity frequency.
    #[default]
    Rotating,
    Lab,
}

/// Deliberate defects for negative-control checks.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Flips the sign of the cavity-loss part of the effective Hamiltonian
    /// while keeping the jump terms.
    CavityLossSign,
}

/// Instantaneous generator coefficients, in rad/ps and 1/ps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rates {
    pub delta_e: f64,
    pub delta_t: f64,
    pub delta_fp: f64,
    pub g: f64,
    pub eta: f64,
    /// Field-amplitude loss rates; the jump rates are 2κ.
    pub kappa_t: f64,
    pub kappa_fp: f64,
    pub gamma_leaky: f64,
    /// Incoherent emitter pump, D[σ⁺].
    pub pump: f64,
    /// Incoherent target-cavity pump, D[a_t†].
    pub cavity_pump: f64,
    /// Emitter pure dephasing, D[σ⁺σ⁻].
    pub dephasing: f64,
}

impl Rates {
    /// Rates for an instantaneous FP mode and pump rates given in 1/s.
    pub fn new(
        params: &SystemParams,
        fp_now: &BareMode,
        pump: f64,
        cavity_pump: f64,
        dephasing: f64,
        frame: Frame,
    ) -> Self {
        let to_ps = PS_PER_S.recip();
        let w_ref = match frame {
            Frame::Rotating => params.target.omega,
            Frame::Lab => 0.0,
        };
        Rates {
            delta_e: (params.emitter.omega0 - w_ref) * to_ps,
            delta_t: (params.target.omega - w_ref) * to_ps,
            delta_fp: (fp_now.omega - w_ref) * to_ps,
            g: params.emitter.g * to_ps,
            eta: params.eta * to_ps,
            kappa_t: params.target.kappa * to_ps,
            kappa_fp: fp_now.kappa * to_ps,
            gamma_leaky: params.emitter.gamma_leaky * to_ps,
            pump: pump * to_ps,
            cavity_pump: cavity_pump * to_ps,
            dephasing: dephasing * to_ps,
        }
    }
}

struct Jump {
    op: Ladder,
    dagger_self: Vec<f64>,
}

impl Jump {
    fn new(op: Ladder) -> Self {
        let dagger_self = op.dagger_self_diag();
        Jump { op, dagger_self }
    }
}

/// Matrix-free Lindblad generator
/// `dρ/dt = −i[H, ρ] + Σ_k r_k (L_k ρ L_k† − ½{L_k†L_k, ρ})` with
/// `H = Δ_e σ⁺σ⁻ + Δ_t a_t†a_t + Δ_FP a_fp†a_fp + g(a_t σ⁺ + a_t† σ⁻) + η(a_t†a_fp + a_fp†a_t)`.
pub struct Liouvillian {
    ops: OperatorSet,
    g_terms: Vec<(usize, usize, f64)>,
    eta_terms: Vec<(usize, usize, f64)>,
    // a_t, a_fp, σ⁻, σ⁺, a_t†, σ⁺σ⁻
    jumps: [Jump; 6],
    fault: Option<Fault>,
}

impl Liouvillian {
    pub fn new(spec: HilbertSpec) -> Result<Self> {
        let ops = build_space(spec)?;
        let atsp = ops.a_t.compose(&ops.sigma_plus);
        let g_terms = atsp.entries().chain(atsp.adjoint().entries()).collect();
        let hop = ops.a_t_dag.compose(&ops.a_fp);
        let eta_terms = hop.entries().chain(hop.adjoint().entries()).collect();
        let proj_e = ops.sigma_plus.compose(&ops.sigma_minus);
        let jumps = [
            Jump::new(ops.a_t.clone()),
            Jump::new(ops.a_fp.clone()),
            Jump::new(ops.sigma_minus.clone()),
            Jump::new(ops.sigma_plus.clone()),
            Jump::new(ops.a_t_dag.clone()),
            Jump::new(proj_e),
        ];
        Ok(Liouvillian { ops, g_terms, eta_terms, jumps, fault: None })
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops.spec.dim()
    }

    fn jump_rates(r: &Rates) -> [f64; 6] {
        [2.0 * r.kappa_t, 2.0 * r.kappa_fp, r.gamma_leaky, r.pump, r.cavity_pump, r.dephasing]
    }

    /// Writes `dρ/dt` for a row-major `ρ` into `out`. Works for any complex
    /// matrix, Hermitian or not.
    pub fn apply(&self, r: &Rates, rho: &[C64], out: &mut [C64]) {
        let n = self.dim();
        debug_assert_eq!(rho.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        let rates = Self::jump_rates(r);

        // diagonal of H_eff = H − (i/2) Σ r_k L_k†L_k
        let mut diag = vec![C64::new(0.0, 0.0); n];
        for (i, d) in diag.iter_mut().enumerate() {
            let mut loss = 0.0;
            for (k, (jump, rate)) in self.jumps.iter().zip(rates).enumerate() {
                let sign = if k < 2 && self.fault == Some(Fault::CavityLossSign) { -1.0 } else { 1.0 };
                loss += sign * rate * jump.dagger_self[i];
            }
            let re = r.delta_e * self.ops.n_e[i] + r.delta_t * self.ops.n_t[i] + r.delta_fp * self.ops.n_fp[i];
            *d = C64::new(re, -0.5 * loss);
        }

        let mi = C64::new(0.0, -1.0);
        for i in 0..n {
            for j in 0..n {
                // −i(H_eff ρ − ρ H_eff†) on the diagonal part
                out[i * n + j] = mi * (diag[i] - diag[j].conj()) * rho[i * n + j];
            }
        }
        for (terms, coef) in [(&self.g_terms, r.g), (&self.eta_terms, r.eta)] {
            if coef == 0.0 {
                continue;
            }
            for &(row, col, v) in terms.iter() {
                let h = coef * v;
                // −i H ρ: row `row` gains h·ρ[col, :]
                for j in 0..n {
                    out[row * n + j] += mi * h * rho[col * n + j];
                }
                // +i ρ H: column `col` gains h·ρ[:, row]
                for i in 0..n {
                    out[i * n + col] -= mi * h * rho[i * n + row];
                }
            }
        }
        for (jump, rate) in self.jumps.iter().zip(rates) {
            if rate == 0.0 {
                continue;
            }
            for (i, si) in jump.op.src.iter().enumerate() {
                let Some(si) = *si else { continue };
                let ai = rate * jump.op.amp[i];
                for (j, sj) in jump.op.src.iter().enumerate() {
                    let Some(sj) = *sj else { continue };
                    out[i * n + j] += ai * jump.op.amp[j] * rho[si * n + sj];
                }
            }
        }
    }
}

/// Builds the full `dim² × dim²` generator by Kronecker products of dense
/// single-mode operators, for row-major vectorization
/// `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`. Independent of [`Liouvillian::apply`].
pub fn dense_superoperator(spec: HilbertSpec, r: &Rates) -> Result<nalgebra::DMatrix<C64>> {
    use nalgebra::DMatrix;
    let spec = HilbertSpec::new(spec.n_max)?;
    let m = spec.levels();
    if spec.dim() > 64 {
        return invalid("dense superoperator limited to n_max <= 4");
    }
    let c = |x: f64| C64::new(x, 0.0);
    let mut sm2 = DMatrix::<C64>::zeros(2, 2);
    sm2[(0, 1)] = c(1.0);
    let mut a1 = DMatrix::<C64>::zeros(m, m);
    for k in 0..m - 1 {
        a1[(k, k + 1)] = c(((k + 1) as f64).sqrt());
    }
    let i2 = DMatrix::<C64>::identity(2, 2);
    let im = DMatrix::<C64>::identity(m, m);
    let sm = sm2.kronecker(&im).kronecker(&im);
    let at = i2.kronecker(&a1).kronecker(&im);
    let af = i2.kronecker(&im).kronecker(&a1);
    let adj = |x: &DMatrix<C64>| x.adjoint();

    let h = (&adj(&sm) * &sm) * c(r.delta_e)
        + (&adj(&at) * &at) * c(r.delta_t)
        + (&adj(&af) * &af) * c(r.delta_fp)
        + (&at * &adj(&sm) + &adj(&at) * &sm) * c(r.g)
        + (&adj(&at) * &af + &adj(&af) * &at) * c(r.eta);

    let dim = spec.dim();
    let id = DMatrix::<C64>::identity(dim, dim);
    let mi = C64::new(0.0, -1.0);
    let mut sup = (h.kronecker(&id) - id.kronecker(&h.transpose())) * mi;
    let proj_e = &adj(&sm) * &sm;
    let jumps = [
        (at.clone(), 2.0 * r.kappa_t),
        (af.clone(), 2.0 * r.kappa_fp),
        (sm.clone(), r.gamma_leaky),
        (adj(&sm), r.pump),
        (adj(&at), r.cavity_pump),
        (proj_e, r.dephasing),
    ];
    for (l, rate) in jumps {
        if rate == 0.0 {
            continue;
        }
        let ldl = &adj(&l) * &l;
        let term = l.kronecker(&l.map(|z| z.conj()))
            - ldl.kronecker(&id) * c(0.5)
            - id.kronecker(&ldl.transpose()) * c(0.5);
        sup += term * c(rate);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::DensityMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rates(rng: &mut ChaCha8Rng) -> Rates {
        Rates {
            delta_e: rng.random_range(-0.5..0.5),
            delta_t: rng.random_range(-0.5..0.5),
            delta_fp: rng.random_range(-0.5..0.5),
            g: rng.random_range(0.0..0.1),
            eta: rng.random_range(0.0..0.3),
            kappa_t: rng.random_range(0.01..0.3),
            kappa_fp: rng.random_range(0.01..0.6),
            gamma_leaky: rng.random_range(0.0..0.01),
            pump: rng.random_range(0.0..0.01),
            cavity_pump: rng.random_range(0.0..0.01),
            dephasing: rng.random_range(0.0..0.01),
        }
    }

    #[test]
    fn matches_dense_superoperator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n_max in 1..=2 {
            let spec = HilbertSpec::new(n_max).unwrap();
            let l = Liouvillian::new(spec).unwrap();
            let n = spec.dim();
            for _ in 0..5 {
                let r = random_rates(&mut rng);
                let sup = dense_superoperator(spec, &r).unwrap();
                let rho = DensityMatrix::random(spec, &mut rng);
                let mut out = vec![C64::new(0.0, 0.0); n * n];
                l.apply(&r, rho.as_slice(), &mut out);
                let v = nalgebra::DVector::from_column_slice(rho.as_slice());
                let dense = &sup * v;
                let err = out
                    .iter()
                    .zip(dense.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(err <= 1e-10 * scale.max(1.0), "n_max {n_max}: {err}");
            }
        }
    }

    #[test]
    fn output_is_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = HilbertSpec::new(2).unwrap();
        let l = Liouvillian::new(spec).unwrap();
        let n = spec.dim();
        for _ in 0..10 {
            let r = random_rates(&mut rng);
            let rho = DensityMatrix::random(spec, &mut rng);
            let mut out = vec![C64::new(0.0, 0.0); n * n];
            l.apply(&r, rho.as_slice(), &mut out);
            let tr: C64 = (0..n).map(|i| out[i * n + i]).sum();
            assert!(tr.norm() < 1e-12, "{tr}");
        }
    }

    #[test]
    fn fault_breaks_trace() {
        let spec = HilbertSpec::new(1).unwrap();
        let l = Liouvillian::new(spec).unwrap().with_fault(Some(Fault::CavityLossSign));
        let r = Rates { kappa_t: 0.1, ..Default::default() };
        let rho = DensityMatrix::basis_state(spec, 0, 1, 0).unwrap();
        let n = spec.dim();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        l.apply(&r, rho.as_slice(), &mut out);
        let tr: C64 = (0..n).map(|i| out[i * n + i]).sum();
        assert!(tr.re > 0.1);
    }
}
