use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::SymMatrix;

use super::{check_field_dim, check_point, MatrixField};

/// `η(x) = amplitude · (1 - |x - center|² / radius²)₊^power`.
///
/// `power ≥ 3` makes `η` of class `C²` with support `B_radius(center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub power: u32,
    pub amplitude: f64,
}

impl PolyBump {
    pub fn new(center: Vec<f64>, radius: f64, power: u32, amplitude: f64) -> Result<Self> {
        let b = Self { center, radius, power, amplitude };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_field_dim(self.center.len())?;
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput(format!("bump radius {} must be positive", self.radius)));
        }
        if self.power < 3 {
            return Err(Error::InvalidInput(format!("bump power {} must be >= 3", self.power)));
        }
        if !self.amplitude.is_finite() || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("bump parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `1 - |x - center|²/radius²`; the bump is supported where this is positive.
    fn slack(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        1.0 - r2 / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s = self.slack(x);
        if s <= 0.0 {
            0.0
        } else {
            self.amplitude * s.powi(self.power as i32)
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = self.slack(x);
        if s <= 0.0 {
            return vec![0.0; self.dim()];
        }
        let k = self.power as i32;
        let f = -2.0 * self.amplitude * k as f64 * s.powi(k - 1) / (self.radius * self.radius);
        x.iter().zip(&self.center).map(|(a, c)| f * (a - c)).collect()
    }

    /// `∂²η / ∂x_i ∂x_j`.
    pub fn second(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let s = self.slack(x);
        if s <= 0.0 {
            return 0.0;
        }
        let k = self.power as i32;
        let kf = k as f64;
        let r2 = self.radius * self.radius;
        let di = x[i] - self.center[i];
        let dj = x[j] - self.center[j];
        let mut v = 4.0 * kf * (kf - 1.0) * s.powi(k - 2) * di * dj / (r2 * r2);
        if i == j {
            v -= 2.0 * kf * s.powi(k - 1) / r2;
        }
        self.amplitude * v
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let n = self.dim();
        let mut h = SymMatrix::zeros(n)?;
        for i in 0..n {
            for j in i..n {
                h.set(i, j, self.second(x, i, j));
            }
        }
        Ok(h)
    }

    /// `∫ η = amplitude · ω_n radius^n · k! Γ(n/2+1) / Γ(k+n/2+1)`.
    pub fn integral(&self) -> f64 {
        let n = self.dim() as f64;
        let k = self.power as f64;
        let mut ratio = 1.0;
        // Γ(k+1)Γ(n/2+1)/Γ(k+n/2+1) = Π_{m=1..k} m / (m + n/2)
        let mut m = 1.0;
        while m <= k {
            ratio *= m / (m + 0.5 * n);
            m += 1.0;
        }
        self.amplitude * crate::quadrature::unit_ball_volume(self.dim()) * self.radius.powf(n) * ratio
    }
}

/// `A = diag(f_1, …, f_n)` with every `f_i` a finite sum of polynomial bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalField {
    pub profiles: Vec<Vec<PolyBump>>,
}

impl DiagonalField {
    pub fn new(profiles: Vec<Vec<PolyBump>>) -> Result<Self> {
        let n = profiles.len();
        check_field_dim(n)?;
        for b in profiles.iter().flatten() {
            b.validate()?;
            if b.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.dim() });
            }
        }
        Ok(Self { profiles })
    }

    /// Every diagonal entry equal to the same bump.
    pub fn shared(bump: PolyBump) -> Result<Self> {
        let n = bump.dim();
        Self::new(vec![vec![bump]; n])
    }

    pub fn dim(&self) -> usize {
        self.profiles.len()
    }

    /// `λ A`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let profiles = self
            .profiles
            .iter()
            .map(|p| {
                p.iter()
                    .map(|b| PolyBump { amplitude: b.amplitude * lambda, ..b.clone() })
                    .collect()
            })
            .collect();
        Self { profiles }
    }

    pub fn entry(&self, i: usize, x: &[f64]) -> f64 {
        self.profiles[i].iter().map(|b| b.value(x)).sum()
    }

    /// Returns `(diag(f_1(x), …, f_n(x)), (∂_1 f_1, …, ∂_n f_n)(x))`.
    pub fn diagonal_eval(&self, x: &[f64]) -> Result<(SymMatrix, Vec<f64>)> {
        let n = self.dim();
        check_point(n, x)?;
        let values: Vec<f64> = (0..n).map(|i| self.entry(i, x)).collect();
        let div = (0..n)
            .map(|i| self.profiles[i].iter().map(|b| b.gradient(x)[i]).sum())
            .collect();
        Ok((SymMatrix::diag(&values)?, div))
    }

    /// Smallest axis-aligned box containing every support; the unit cube
    /// about the origin for the all-zero field.
    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for b in self.profiles.iter().flatten() {
            for d in 0..n {
                lo[d] = lo[d].min(b.center[d] - b.radius);
                hi[d] = hi[d].max(b.center[d] + b.radius);
            }
        }
        if lo[0].is_infinite() {
            return (vec![-0.5; n], vec![0.5; n]);
        }
        (lo, hi)
    }
}

impl MatrixField for DiagonalField {
    fn dim(&self) -> usize {
        self.profiles.len()
    }

    fn eval(&self, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.diagonal_eval(x)?.0)
    }

    fn divergence(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.diagonal_eval(x)?.1)
    }
}
