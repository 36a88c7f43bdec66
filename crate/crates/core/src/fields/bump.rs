use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::critical_exponent;
use crate::matkit::SymMatrix;
use crate::quadrature::{dot, lp_dyadic_in, BallRegion, IntegrationScheme, LpReport, Sphere};

use super::{check_field_dim, check_point, CofactorField, Jet, Potential, RadialConvexFn};

/// The localized perturbation
///
/// `φ(x) = c [ f_α(2(x - x0)/β) - 2(1+α)/β² (|x0|² - 2⟨x, x0⟩) ]`,
///
/// which coincides with the quadratic `xᵀ S x`, `S = 2c(1+α)/β² Id`,
/// outside `B_{β/2}(x0)` and concentrates a power singularity of `det(Hφ)`
/// at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub n: usize,
    pub p: f64,
    pub beta: f64,
    pub delta: f64,
    pub eps: f64,
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub c: f64,
    /// `‖cof(Hφ)‖_{L^p(B_β(x0))}` at `c = 1`.
    pub unit_norm: f64,
    pub s: SymMatrix,
}

/// `α` solving `1/(1-α) = 1/(1-p*) + ε`.
pub fn bump_alpha(p: f64, n: usize, eps: f64) -> Result<f64> {
    let p_star = critical_exponent(p, n);
    let alpha = 1.0 - 1.0 / (1.0 / (1.0 - p_star) + eps);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidExponent { alpha });
    }
    Ok(alpha)
}

/// Builds the bump with `c = (δ / (2 N₁))^{1/(n-1)}`, where `N₁` is the
/// cofactor `L^p` norm at `c = 1`; `cof(H(cφ)) = c^{n-1} cof(Hφ)` then gives
/// a norm of `δ/2`.
pub fn construct_bump(
    p: f64,
    n: usize,
    beta: f64,
    delta: f64,
    eps: f64,
    x0: &[f64],
    scheme: &IntegrationScheme,
) -> Result<BumpField> {
    check_field_dim(n)?;
    check_point(n, x0)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} must be >= 1")));
    }
    for (name, v) in [("beta", beta), ("delta", delta), ("eps", eps)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
        }
    }
    let alpha = bump_alpha(p, n, eps)?;
    let mut field = BumpField {
        n,
        p,
        beta,
        delta,
        eps,
        x0: x0.to_vec(),
        alpha,
        c: 1.0,
        unit_norm: f64::NAN,
        s: SymMatrix::zeros(n)?,
    };
    let report = field.cofactor_lp(scheme)?;
    let unit_norm = report.norm();
    if !unit_norm.is_finite() || unit_norm <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "cofactor L^p norm at c = 1 is {unit_norm}"
        )));
    }
    field.unit_norm = unit_norm;
    field.c = (delta / (2.0 * unit_norm)).powf(1.0 / (n as f64 - 1.0));
    field.s = SymMatrix::identity(n)?.scale(2.0 * field.c * (1.0 + alpha) / (beta * beta));
    Ok(field)
}

impl BumpField {
    pub fn profile(&self) -> RadialConvexFn {
        RadialConvexFn {
            alpha: self.alpha,
            n: self.n,
        }
    }

    /// `B_β(x0)`: the region on which the cofactor norm is measured.
    pub fn domain(&self) -> BallRegion {
        BallRegion {
            center: self.x0.clone(),
            radius: self.beta,
        }
    }

    /// `B_{β/2}(x0)`: the support of the non-quadratic part.
    pub fn core(&self) -> BallRegion {
        BallRegion {
            center: self.x0.clone(),
            radius: 0.5 * self.beta,
        }
    }

    fn rescale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x0)
            .map(|(xi, ci)| 2.0 * (xi - ci) / self.beta)
            .collect()
    }

    /// The quadratic tail `xᵀ S x`.
    pub fn tail_quadratic(&self, x: &[f64]) -> f64 {
        let sx = self.s.as_general().matvec(x);
        dot(x, &sx)
    }

    /// The constant Hessian `4c(1+α)/β² Id` outside `B_{β/2}(x0)`.
    pub fn outer_hessian(&self) -> Result<SymMatrix> {
        let h = 4.0 * self.c * (1.0 + self.alpha) / (self.beta * self.beta);
        Ok(SymMatrix::identity(self.n)?.scale(h))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_point(self.n, x)?;
        let y = self.rescale(x);
        let lin = 2.0 * (1.0 + self.alpha) / (self.beta * self.beta)
            * (dot(&self.x0, &self.x0) - 2.0 * dot(x, &self.x0));
        Ok(self.c * (self.profile().value(&y) - lin))
    }

    pub fn bump_eval(&self, x: &[f64]) -> Result<Jet> {
        check_point(self.n, x)?;
        let y = self.rescale(x);
        let inner = self.profile().radial_eval(&y)?;
        let b2 = self.beta * self.beta;
        let k = self.c * 4.0 / b2;
        let lin = 2.0 * (1.0 + self.alpha) / b2 * (dot(&self.x0, &self.x0) - 2.0 * dot(x, &self.x0));
        let value = self.c * (inner.value - lin);
        let gradient = inner
            .gradient
            .iter()
            .zip(&self.x0)
            .map(|(g, c0)| self.c * (2.0 / self.beta * g + 4.0 * (1.0 + self.alpha) / b2 * c0))
            .collect();
        let outside = crate::quadrature::norm(&y) > 1.0;
        let hessian = if outside {
            self.outer_hessian()?
        } else {
            inner.hessian.scale(k)
        };
        let det_hessian = k.powi(self.n as i32) * inner.det_hessian;
        Ok(super::jet_from_hessian(value, gradient, hessian, det_hessian))
    }

    /// `L^p` ledger of `|cof(Hφ)|` (Frobenius) over `B_β(x0)`, shells about `x0`.
    pub fn cofactor_lp(&self, scheme: &IntegrationScheme) -> Result<LpReport> {
        let spheres = self.singular_spheres();
        lp_dyadic_in(
            |x| Ok(self.bump_eval(x)?.cof_hessian.frobenius()),
            self.p,
            &self.domain(),
            &self.x0,
            &spheres,
            scheme,
        )
    }

    pub fn cofactor_field(&self) -> CofactorField<&BumpField> {
        CofactorField(self)
    }
}

impl Potential for BumpField {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.bump_eval(x)
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        Some(self.x0.clone())
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        vec![Sphere {
            center: self.x0.clone(),
            radius: 0.5 * self.beta,
        }]
    }
}
