use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Emitter (two-level) ⊗ target mode ⊗ FP mode, each mode truncated at
/// `n_max` photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub n_max: usize,
}

impl HilbertSpec {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return invalid(format!("n_max must be >= 1, got {n_max}"));
        }
        Ok(HilbertSpec { n_max })
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.levels() * self.levels()
    }

    pub fn index(&self, e: usize, n_t: usize, n_fp: usize) -> usize {
        (e * self.levels() + n_t) * self.levels() + n_fp
    }

    pub fn decompose(&self, i: usize) -> (usize, usize, usize) {
        let m = self.levels();
        (i / (m * m), (i / m) % m, i % m)
    }
}

/// An operator with at most one nonzero per row and per column (ladder
/// operators, projectors and their products). Row `i` of `Lρ` reads row
/// `src[i]` of `ρ` scaled by `amp[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub src: Vec<Option<usize>>,
    pub amp: Vec<f64>,
}

impl Ladder {
    fn from_fn(spec: &HilbertSpec, f: impl Fn(usize, usize, usize) -> Option<(usize, f64)>) -> Self {
        let dim = spec.dim();
        let mut src = vec![None; dim];
        let mut amp = vec![0.0; dim];
        for i in 0..dim {
            let (e, nt, nf) = spec.decompose(i);
            if let Some((k, a)) = f(e, nt, nf) {
                if a != 0.0 {
                    src[i] = Some(k);
                    amp[i] = a;
                }
            }
        }
        Ladder { src, amp }
    }

    pub fn dim(&self) -> usize {
        self.src.len()
    }

    /// `self · other`
    pub fn compose(&self, other: &Ladder) -> Ladder {
        let mut src = vec![None; self.dim()];
        let mut amp = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            if let Some(k) = self.src[i] {
                if let Some(m) = other.src[k] {
                    src[i] = Some(m);
                    amp[i] = self.amp[i] * other.amp[k];
                }
            }
        }
        Ladder { src, amp }
    }

    pub fn adjoint(&self) -> Ladder {
        let mut src = vec![None; self.dim()];
        let mut amp = vec![0.0; self.dim()];
        for (i, s) in self.src.iter().enumerate() {
            if let Some(k) = *s {
                debug_assert!(src[k].is_none(), "ladder operator is not injective");
                src[k] = Some(i);
                amp[k] = self.amp[i];
            }
        }
        Ladder { src, amp }
    }

    /// Diagonal of `L†L`.
    pub fn dagger_self_diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (i, s) in self.src.iter().enumerate() {
            if let Some(k) = *s {
                d[k] += self.amp[i] * self.amp[i];
            }
        }
        d
    }

    /// Nonzero entries as (row, column, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.src
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|k| (i, k, self.amp[i])))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, k, a) in self.entries() {
            m[(i, k)] = C64::new(a, 0.0);
        }
        m
    }
}

/// Operators of the emitter-target-FP space.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub spec: HilbertSpec,
    pub sigma_minus: Ladder,
    pub sigma_plus: Ladder,
    pub a_t: Ladder,
    pub a_fp: Ladder,
    pub a_t_dag: Ladder,
    pub a_fp_dag: Ladder,
    /// Diagonals of σ⁺σ⁻, a_t†a_t and a_fp†a_fp.
    pub n_e: Vec<f64>,
    pub n_t: Vec<f64>,
    pub n_fp: Vec<f64>,
}

pub fn build_space(spec: HilbertSpec) -> Result<OperatorSet> {
    let spec = HilbertSpec::new(spec.n_max)?;
    let nm = spec.n_max;
    let sigma_minus = Ladder::from_fn(&spec, |e, nt, nf| (e == 0).then(|| (spec.index(1, nt, nf), 1.0)));
    let a_t = Ladder::from_fn(&spec, |e, nt, nf| {
        (nt < nm).then(|| (spec.index(e, nt + 1, nf), ((nt + 1) as f64).sqrt()))
    });
    let a_fp = Ladder::from_fn(&spec, |e, nt, nf| {
        (nf < nm).then(|| (spec.index(e, nt, nf + 1), ((nf + 1) as f64).sqrt()))
    });
    let dim = spec.dim();
    let (mut n_e, mut n_t, mut n_fp) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    for i in 0..dim {
        let (e, nt, nf) = spec.decompose(i);
        n_e[i] = e as f64;
        n_t[i] = nt as f64;
        n_fp[i] = nf as f64;
    }
    Ok(OperatorSet {
        spec,
        sigma_plus: sigma_minus.adjoint(),
        a_t_dag: a_t.adjoint(),
        a_fp_dag: a_fp.adjoint(),
        sigma_minus,
        a_t,
        a_fp,
        n_e,
        n_t,
        n_fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_space() {
        let ops = build_space(HilbertSpec::new(1).unwrap()).unwrap();
        assert_eq!(ops.spec.dim(), 8);
        let a = ops.a_t.to_dense();
        let nnz = a.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nnz, 4);
        assert!(a.iter().all(|z| z.norm() == 0.0 || z.re == 1.0));
        assert!(HilbertSpec::new(0).is_err());
    }

    #[test]
    fn index_layout() {
        let s = HilbertSpec::new(2).unwrap();
        assert_eq!(s.dim(), 18);
        for i in 0..s.dim() {
            let (e, nt, nf) = s.decompose(i);
            assert_eq!(s.index(e, nt, nf), i);
        }
        assert_eq!(s.index(1, 0, 0), 9);
    }

    #[test]
    fn number_operator_spectrum() {
        for n_max in 1..=4 {
            let ops = build_space(HilbertSpec::new(n_max).unwrap()).unwrap();
            let n = ops.a_t_dag.compose(&ops.a_t);
            let diag = ops.a_t.dagger_self_diag();
            for (d, n) in diag.iter().zip(&ops.n_t) {
                assert!((d - n).abs() < 1e-14);
            }
            for (i, k, v) in n.entries() {
                assert_eq!(i, k);
                assert!((v - ops.n_t[i]).abs() < 1e-14);
            }
            let mut levels: Vec<usize> = ops.n_fp.iter().map(|&x| x as usize).collect();
            levels.sort();
            levels.dedup();
            assert_eq!(levels, (0..=n_max).collect::<Vec<_>>());
        }
    }

    #[test]
    fn truncated_commutator() {
        let ops = build_space(HilbertSpec::new(3).unwrap()).unwrap();
        for (a, ad, n) in [
            (&ops.a_t, &ops.a_t_dag, &ops.n_t),
            (&ops.a_fp, &ops.a_fp_dag, &ops.n_fp),
        ] {
            let (a, ad) = (a.to_dense(), ad.to_dense());
            let comm = &a * &ad - &ad * &a;
            for i in 0..ops.spec.dim() {
                for j in 0..ops.spec.dim() {
                    let expected = if i == j && n[i] < 3.0 { 1.0 } else if i == j { -3.0 } else { 0.0 };
                    assert!((comm[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn sigma_algebra() {
        let ops = build_space(HilbertSpec::new(2).unwrap()).unwrap();
        let sp = ops.sigma_plus.to_dense();
        let sm = ops.sigma_minus.to_dense();
        let ne = &sp * &sm;
        for i in 0..ops.spec.dim() {
            assert_eq!(ne[(i, i)].re, ops.n_e[i]);
        }
        assert_eq!(ops.sigma_minus.dagger_self_diag(), ops.n_e);
    }
}
