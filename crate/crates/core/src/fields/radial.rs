use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::SymMatrix;
use crate::quadrature::{norm, Sphere};

use super::{check_field_dim, check_point, jet_from_hessian, Jet, Potential, SINGULAR_SET_TOL};

/// `f_α(x) = |x|^{1+α} + (α-1)/2` for `|x| ≤ 1`, `(1+α)/2 |x|²` outside.
///
/// The constants make `f_α` of class `C¹` away from the origin; it is
/// convex for every `α ≥ 0`, a cone plus constant at `α = 0` and the pure
/// quadratic `|x|²` at `α = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialConvexFn {
    pub alpha: f64,
    pub n: usize,
}

impl RadialConvexFn {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_field_dim(n)?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha = {alpha} must be >= 0")));
        }
        Ok(Self { alpha, n })
    }

    /// Inner-branch value at radius `r`.
    pub fn inner_value(&self, r: f64) -> f64 {
        r.powf(1.0 + self.alpha) + 0.5 * (self.alpha - 1.0)
    }

    /// Outer-branch value at radius `r`.
    pub fn outer_value(&self, r: f64) -> f64 {
        0.5 * (1.0 + self.alpha) * r * r
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r <= 1.0 {
            self.inner_value(r)
        } else {
            self.outer_value(r)
        }
    }

    /// Closed-form `det(Hf_α)` at radius `r` (off the singular set).
    pub fn det_hessian_at(&self, r: f64) -> f64 {
        let a1 = 1.0 + self.alpha;
        let n = self.n as i32;
        if r < 1.0 {
            self.alpha * a1.powi(n) * r.powf(n as f64 * (self.alpha - 1.0))
        } else {
            a1.powi(n)
        }
    }

    pub fn radial_eval(&self, x: &[f64]) -> Result<Jet> {
        check_point(self.n, x)?;
        let r = norm(x);
        if r <= SINGULAR_SET_TOL || (r - 1.0).abs() <= SINGULAR_SET_TOL {
            return Err(Error::OnSingularSet { radius: r });
        }
        let n = self.n;
        let alpha = self.alpha;
        let a1 = 1.0 + alpha;
        if r < 1.0 {
            let ra = r.powf(alpha - 1.0);
            let rb = (alpha - 1.0) * r.powf(alpha - 3.0);
            let gradient = x.iter().map(|v| a1 * ra * v).collect();
            let mut h = SymMatrix::zeros(n)?;
            for i in 0..n {
                for j in i..n {
                    let diag = if i == j { ra } else { 0.0 };
                    h.set(i, j, a1 * (diag + rb * x[i] * x[j]));
                }
            }
            Ok(jet_from_hessian(self.inner_value(r), gradient, h, self.det_hessian_at(r)))
        } else {
            let gradient = x.iter().map(|v| a1 * v).collect();
            let h = SymMatrix::identity(n)?.scale(a1);
            Ok(jet_from_hessian(self.outer_value(r), gradient, h, self.det_hessian_at(r)))
        }
    }
}

impl Potential for RadialConvexFn {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.radial_eval(x)
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.n])
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        vec![Sphere {
            center: vec![0.0; self.n],
            radius: 1.0,
        }]
    }
}

/// `x ↦ √(|x|² + ε²)`: a smooth convex surrogate of the cone `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCone {
    pub eps_width: f64,
    pub n: usize,
}

impl SmoothedCone {
    pub fn new(eps_width: f64, n: usize) -> Result<Self> {
        check_field_dim(n)?;
        if !(eps_width > 0.0) {
            return Err(Error::InvalidInput(format!("eps = {eps_width} must be positive")));
        }
        Ok(Self { eps_width, n })
    }

    /// `ε² (r² + ε²)^{-(n+2)/2}`.
    pub fn det_hessian_at(&self, r: f64) -> f64 {
        let e2 = self.eps_width * self.eps_width;
        e2 * (r * r + e2).powf(-0.5 * (self.n as f64 + 2.0))
    }

    /// Radial derivative `r / √(r² + ε²)`.
    pub fn radial_slope(&self, r: f64) -> f64 {
        r / (r * r + self.eps_width * self.eps_width).sqrt()
    }

    pub fn smoothed_cone_eval(&self, x: &[f64]) -> Result<Jet> {
        check_point(self.n, x)?;
        let n = self.n;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let s = (r2 + self.eps_width * self.eps_width).sqrt();
        let gradient = x.iter().map(|v| v / s).collect();
        let s3 = s * s * s;
        let mut h = SymMatrix::zeros(n)?;
        for i in 0..n {
            for j in i..n {
                let diag = if i == j { 1.0 / s } else { 0.0 };
                h.set(i, j, diag - x[i] * x[j] / s3);
            }
        }
        Ok(jet_from_hessian(s, gradient, h, self.det_hessian_at(r2.sqrt())))
    }
}

impl Potential for SmoothedCone {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.smoothed_cone_eval(x)
    }
}

/// `½ xᵀ M x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPotential {
    pub m: SymMatrix,
}

impl Potential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.m.dim()
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        check_point(self.m.dim(), x)?;
        let gradient = self.m.as_general().matvec(x);
        let value = 0.5 * x.iter().zip(&gradient).map(|(a, b)| a * b).sum::<f64>();
        Ok(jet_from_hessian(value, gradient, self.m, self.m.det()))
    }
}
