use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{min_eigenvalue, SymMatrix};

use super::{check_field_dim, check_point, jet_from_hessian, Jet, Potential};

/// Minimal Hessian eigenvalue enforced on the verification grid.
pub const PERIODIC_PSD_MARGIN: f64 = 1e-6;

/// `amplitude · cos(2π ⟨k, x⟩ + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub freq: Vec<i32>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `A = cof(H(½ xᵀ S x + ψ))` with `ψ` a trigonometric polynomial; the field
/// is `Z^n`-periodic, divergence-free and (after rescaling `ψ`) PSD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicField {
    pub n: usize,
    pub s_base: SymMatrix,
    /// Terms after rescaling.
    pub terms: Vec<TrigTerm>,
    /// Factor applied to the requested amplitudes (1 when no rescaling was needed).
    pub amplitude_scale: f64,
    /// Minimal Hessian eigenvalue over the verification grid.
    pub grid_min_eigenvalue: f64,
    pub check_resolution: usize,
}

fn default_check_resolution(n: usize) -> usize {
    if n <= 3 {
        64
    } else {
        16
    }
}

fn psi_hessian(terms: &[TrigTerm], x: &[f64], n: usize) -> Result<SymMatrix> {
    let mut h = SymMatrix::zeros(n)?;
    let tau2 = 4.0 * PI * PI;
    for t in terms {
        let arg = 2.0 * PI * t.freq.iter().zip(x).map(|(k, v)| *k as f64 * v).sum::<f64>() + t.phase;
        let c = -t.amplitude * tau2 * arg.cos();
        for i in 0..n {
            for j in i..n {
                let v = h.get(i, j) + c * t.freq[i] as f64 * t.freq[j] as f64;
                h.set(i, j, v);
            }
        }
    }
    Ok(h)
}

fn grid_min_eigenvalue(s_base: &SymMatrix, terms: &[TrigTerm], res: usize) -> Result<f64> {
    let n = s_base.dim();
    let total = res.pow(n as u32);
    let mins = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut x = vec![0.0; n];
            let mut rem = lin;
            for d in (0..n).rev() {
                x[d] = (rem % res) as f64 / res as f64;
                rem /= res;
            }
            Ok(min_eigenvalue(&s_base.add(&psi_hessian(terms, &x, n)?)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

impl PeriodicField {
    pub fn new(s_base: SymMatrix, terms: Vec<TrigTerm>) -> Result<Self> {
        let res = default_check_resolution(s_base.dim());
        Self::with_check_resolution(s_base, terms, res)
    }

    /// Rescales the amplitudes until `min eig H(½xᵀSx + tψ) ≥ margin` on the
    /// `res^n` grid. The grid minimum is concave in `t`, so the secant step
    /// `t = (λ₀ - m)/(λ₀ - λ₁)` already reaches the margin up to rounding.
    pub fn with_check_resolution(s_base: SymMatrix, terms: Vec<TrigTerm>, res: usize) -> Result<Self> {
        let n = s_base.dim();
        check_field_dim(n)?;
        for t in &terms {
            if t.freq.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.freq.len() });
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(Error::InvalidInput("non-finite trigonometric coefficient".into()));
            }
        }
        let margin = PERIODIC_PSD_MARGIN;
        let base_min = min_eigenvalue(&s_base);
        if base_min < margin {
            return Err(Error::ConvexityMarginViolated { margin, base_min });
        }
        let scaled = |t: f64| -> Vec<TrigTerm> {
            terms
                .iter()
                .map(|term| TrigTerm { amplitude: term.amplitude * t, ..term.clone() })
                .collect()
        };
        let full_min = grid_min_eigenvalue(&s_base, &terms, res)?;
        let mut scale = 1.0;
        let mut grid_min = full_min;
        if full_min < margin {
            scale = (base_min - margin) / (base_min - full_min);
            grid_min = grid_min_eigenvalue(&s_base, &scaled(scale), res)?;
            let mut attempts = 0;
            while grid_min < margin {
                attempts += 1;
                if attempts > 20 {
                    return Err(Error::ConvexityMarginViolated { margin, base_min });
                }
                scale *= 0.999;
                grid_min = grid_min_eigenvalue(&s_base, &scaled(scale), res)?;
            }
        }
        Ok(Self {
            n,
            s_base,
            terms: scaled(scale),
            amplitude_scale: scale,
            grid_min_eigenvalue: grid_min,
            check_resolution: res,
        })
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        check_point(self.n, x)?;
        Ok(self.s_base.add(&psi_hessian(&self.terms, x, self.n)?))
    }

    /// `cof(H(½xᵀSx + ψ))(x)`.
    pub fn periodic_eval(&self, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.hessian(x)?.cofactor())
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0 || t.freq.iter().all(|k| *k == 0))
    }
}

impl Potential for PeriodicField {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        check_point(self.n, x)?;
        let n = self.n;
        let sx = self.s_base.as_general().matvec(x);
        let mut value = 0.5 * x.iter().zip(&sx).map(|(a, b)| a * b).sum::<f64>();
        let mut gradient = sx;
        for t in &self.terms {
            let arg = 2.0 * PI * t.freq.iter().zip(x).map(|(k, v)| *k as f64 * v).sum::<f64>() + t.phase;
            value += t.amplitude * arg.cos();
            let s = -t.amplitude * 2.0 * PI * arg.sin();
            for i in 0..n {
                gradient[i] += s * t.freq[i] as f64;
            }
        }
        let h = self.hessian(x)?;
        let det = h.det();
        Ok(jet_from_hessian(value, gradient, h, det))
    }
}

/// Random periodic field: `S = Id + GᵀG/4`, three terms with frequencies in
/// `{-2..2}^n`, amplitudes in `[0.005, 0.05]` and random phases.
pub fn random_periodic<R: Rng>(rng: &mut R, n: usize, check_resolution: usize) -> Result<PeriodicField> {
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0) * 0.5).collect())
        .collect();
    let s_base = SymMatrix::identity(n)?.add(&SymMatrix::gram(&vectors)?);
    let mut terms = Vec::new();
    while terms.len() < 3 {
        let freq: Vec<i32> = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
        if freq.iter().all(|k| *k == 0) {
            continue;
        }
        terms.push(TrigTerm {
            freq,
            amplitude: rng.gen_range(0.005..0.05),
            phase: rng.gen_range(0.0..2.0 * PI),
        });
    }
    PeriodicField::with_check_resolution(s_base, terms, check_resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fd::{jet_deviation, FD_STEP};
    use crate::matkit::psd_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_field_is_identity() {
        let f = PeriodicField::new(SymMatrix::identity(2).unwrap(), vec![]).unwrap();
        assert!(f.is_constant());
        let a = f.periodic_eval(&[0.3, 0.7]).unwrap();
        assert_eq!(a, SymMatrix::identity(2).unwrap());
    }

    #[test]
    fn lattice_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_periodic(&mut rng, 3, 16).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a = f.periodic_eval(&x).unwrap();
            for k in 0..3 {
                let mut y = x.clone();
                y[k] += 1.0;
                let b = f.periodic_eval(&y).unwrap();
                assert!(a.sub(&b).max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rescaling_reaches_margin() {
        let terms = vec![TrigTerm { freq: vec![1, 0], amplitude: 1.0, phase: 0.0 }];
        let f = PeriodicField::new(SymMatrix::identity(2).unwrap(), terms).unwrap();
        assert!(f.amplitude_scale < 1.0);
        assert!(f.grid_min_eigenvalue >= PERIODIC_PSD_MARGIN);
        // 1 - 4π² a ≥ margin at the optimum.
        let a = f.terms[0].amplitude;
        assert!((1.0 - 4.0 * PI * PI * a - PERIODIC_PSD_MARGIN).abs() < 1e-9);
        assert!(psd_check(&f.periodic_eval(&[0.0, 0.3]).unwrap(), 0.0));
    }

    #[test]
    fn margin_violation_when_base_degenerate() {
        let err = PeriodicField::new(SymMatrix::diag(&[1.0, 0.0]).unwrap(), vec![]).unwrap_err();
        assert!(matches!(err, Error::ConvexityMarginViolated { .. }));
    }

    #[test]
    fn jet_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_periodic(&mut rng, 2, 32).unwrap();
        let dev = jet_deviation(&f, &[0.31, 0.77], FD_STEP).unwrap();
        assert!(dev.gradient < 1e-8 && dev.hessian < 1e-6, "{dev:?}");
    }
}
