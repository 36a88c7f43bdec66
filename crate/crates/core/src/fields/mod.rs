//! Explicit convex potentials and matrix fields with closed-form derivatives.
//!
//! Every family exposes a [`Jet`] (value, gradient, Hessian, its determinant
//! and cofactor). Matrix fields are built either as cofactors of potential
//! Hessians ([`CofactorField`]) or directly (diagonal and test fields).

mod bump;
mod diagonal;
pub mod fd;
mod periodic;
mod radial;

pub use bump::{construct_bump, BumpField};
pub use diagonal::{DiagonalField, PolyBump};
pub use periodic::{random_periodic, PeriodicField, TrigTerm, PERIODIC_PSD_MARGIN};
pub use radial::{QuadraticPotential, RadialConvexFn, SmoothedCone};

use crate::error::{Error, Result};
use crate::matkit::SymMatrix;
use crate::quadrature::Sphere;

/// Distance to `{0, 1}` below which radial evaluation is refused.
pub const SINGULAR_SET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymMatrix,
    pub det_hessian: f64,
    pub cof_hessian: SymMatrix,
}

/// A scalar potential with closed-form first and second derivatives.
pub trait Potential: Sync {
    fn dim(&self) -> usize;

    fn jet(&self, x: &[f64]) -> Result<Jet>;

    /// Point where the Hessian may blow up.
    fn singular_point(&self) -> Option<Vec<f64>> {
        None
    }

    /// Spheres across which the Hessian may jump.
    fn singular_spheres(&self) -> Vec<Sphere> {
        Vec::new()
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        (**self).jet(x)
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        (**self).singular_point()
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        (**self).singular_spheres()
    }
}

/// A map `x ↦ A(x)` into symmetric matrices.
pub trait MatrixField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<SymMatrix>;

    /// Row divergence `(div A)_i = Σ_j ∂_j A_ij` in closed form.
    fn divergence(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::DivergenceUnavailable)
    }

    fn is_divergence_free(&self) -> bool {
        false
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        None
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        Vec::new()
    }
}

/// `x ↦ cof(Hφ)(x)`; divergence-free by the Piola identity.
#[derive(Debug, Clone)]
pub struct CofactorField<P>(pub P);

impl<P: Potential> MatrixField for CofactorField<P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.0.jet(x)?.cof_hessian)
    }

    fn divergence(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.0.dim()])
    }

    fn is_divergence_free(&self) -> bool {
        true
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        self.0.singular_point()
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        self.0.singular_spheres()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub SymMatrix);

impl MatrixField for ConstantField {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, _x: &[f64]) -> Result<SymMatrix> {
        Ok(self.0)
    }

    fn divergence(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.0.dim()])
    }

    fn is_divergence_free(&self) -> bool {
        true
    }
}

/// Pointwise linear combination `a·A + b·B`.
pub struct Combination<'a> {
    pub first: &'a dyn MatrixField,
    pub second: &'a dyn MatrixField,
    pub a: f64,
    pub b: f64,
}

impl<'a> Combination<'a> {
    pub fn sum(first: &'a dyn MatrixField, second: &'a dyn MatrixField) -> Self {
        Self { first, second, a: 1.0, b: 1.0 }
    }

    pub fn difference(first: &'a dyn MatrixField, second: &'a dyn MatrixField) -> Self {
        Self { first, second, a: 1.0, b: -1.0 }
    }
}

impl MatrixField for Combination<'_> {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<SymMatrix> {
        let a = self.first.eval(x)?.scale(self.a);
        let b = self.second.eval(x)?.scale(self.b);
        Ok(a.add(&b))
    }

    fn divergence(&self, x: &[f64]) -> Result<Vec<f64>> {
        let da = self.first.divergence(x)?;
        let db = self.second.divergence(x)?;
        Ok(da.iter().zip(&db).map(|(u, v)| self.a * u + self.b * v).collect())
    }

    fn is_divergence_free(&self) -> bool {
        self.first.is_divergence_free() && self.second.is_divergence_free()
    }

    fn singular_point(&self) -> Option<Vec<f64>> {
        self.first.singular_point().or_else(|| self.second.singular_point())
    }

    fn singular_spheres(&self) -> Vec<Sphere> {
        let mut s = self.first.singular_spheres();
        s.extend(self.second.singular_spheres());
        s
    }
}

type MatrixFn = dyn Fn(&[f64]) -> Result<SymMatrix> + Sync + Send;
type VectorFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send;

/// Field given by closures, mostly for hand-built test cases such as `x ⊗ x`.
pub struct FnField {
    pub n: usize,
    pub field: Box<MatrixFn>,
    pub divergence: Option<Box<VectorFn>>,
}

impl FnField {
    pub fn new(n: usize, field: impl Fn(&[f64]) -> Result<SymMatrix> + Sync + Send + 'static) -> Self {
        Self { n, field: Box::new(field), divergence: None }
    }

    pub fn with_divergence(
        mut self,
        div: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send + 'static,
    ) -> Self {
        self.divergence = Some(Box::new(div));
        self
    }

    /// `A(x) = x ⊗ x`, with `div A = (n + 1) x`.
    pub fn outer_product(n: usize) -> Self {
        Self::new(n, move |x| {
            let mut m = SymMatrix::zeros(n)?;
            for i in 0..n {
                for j in i..n {
                    m.set(i, j, x[i] * x[j]);
                }
            }
            Ok(m)
        })
        .with_divergence(move |x| Ok(x.iter().map(|v| (n as f64 + 1.0) * v).collect()))
    }
}

impl MatrixField for FnField {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<SymMatrix> {
        (self.field)(x)
    }

    fn divergence(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.divergence {
            Some(d) => d(x),
            None => Err(Error::DivergenceUnavailable),
        }
    }
}

pub(crate) fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    Ok(())
}

pub(crate) fn check_field_dim(n: usize) -> Result<()> {
    if (2..=crate::matkit::MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

pub(crate) fn jet_from_hessian(value: f64, gradient: Vec<f64>, hessian: SymMatrix, det_hessian: f64) -> Jet {
    let cof_hessian = hessian.cofactor();
    Jet { value, gradient, hessian, det_hessian, cof_hessian }
}
