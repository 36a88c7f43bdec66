//! Weak (distributional) identities tested against compactly supported bumps.
//!
//! Every pairing is integrated in polar coordinates over the support of the
//! test function. The pole sits at the integrand's point singularity when it
//! lies inside the support and at the bump centre otherwise. The innermost
//! ball `|x - pole| < t 2^{-K}` is replaced by the geometric extrapolation of
//! the shell sequence, and the same extrapolation of `∫|A||∇η|` bounds what
//! it contributes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{MatrixField, Potential};
use crate::matkit::SymMatrix;
use crate::quadrature::{dist, integrate_polar, BallRegion, IntegrationScheme, ShellLedger};

pub use crate::fields::PolyBump as TestFunction;

/// Shells plus the geometric tail when the sequence contracts.
fn extrapolated(ledger: &ShellLedger) -> f64 {
    ledger.total() + ledger.tail_estimate().unwrap_or(0.0)
}

fn support(eta: &TestFunction) -> BallRegion {
    BallRegion {
        center: eta.center.clone(),
        radius: eta.radius,
    }
}

fn choose_pole(eta: &TestFunction, singular: Option<Vec<f64>>) -> Vec<f64> {
    match singular {
        Some(s) if s.len() == eta.dim() && dist(&s, &eta.center) < 0.999 * eta.radius => s,
        _ => eta.center.clone(),
    }
}

fn check_dims(field_dim: usize, eta: &TestFunction) -> Result<()> {
    eta.validate()?;
    if eta.dim() != field_dim {
        return Err(Error::DimensionMismatch {
            expected: field_dim,
            got: eta.dim(),
        });
    }
    Ok(())
}

/// `r_i = ∫ Σ_j A_ij ∂_j η` and the scale `∫ |A|_F |∇η|` it is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResidual {
    pub residual: Vec<f64>,
    pub normalization: f64,
    /// Extrapolated share of the normalization inside the innermost shell.
    pub inner_ball_bound: f64,
}

impl DivergenceResidual {
    /// `|r| / ∫|A||∇η|`, 0 when both vanish.
    pub fn relative(&self) -> f64 {
        let r = self.residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            0.0
        } else {
            r / self.normalization
        }
    }
}

pub fn weak_divergence_residual<A: MatrixField + ?Sized>(
    field: &A,
    eta: &TestFunction,
    scheme: &IntegrationScheme,
) -> Result<DivergenceResidual> {
    let n = field.dim();
    check_dims(n, eta)?;
    let pole = choose_pole(eta, field.singular_point());
    let ledgers = integrate_polar(&support(eta), &pole, &field.singular_spheres(), n + 1, scheme, |x, out| {
        let a = field.eval(x)?;
        let g = eta.gradient(x);
        let row = a.as_general().matvec(&g);
        out[..n].copy_from_slice(&row);
        out[n] = a.frobenius() * g.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(())
    })?;
    let residual = ledgers[..n].iter().map(extrapolated).collect();
    let norm_ledger = &ledgers[n];
    Ok(DivergenceResidual {
        residual,
        normalization: extrapolated(norm_ledger),
        inner_ball_bound: norm_ledger.tail_estimate().unwrap_or(f64::INFINITY),
    })
}

/// The two sides of `∫ f ∂_ij η = ∫ η (Hf)_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianPairing {
    pub value_side: f64,
    pub hessian_side: f64,
}

impl HessianPairing {
    pub fn residual(&self) -> f64 {
        (self.value_side - self.hessian_side).abs()
    }
}

pub fn weak_hessian_residual<P: Potential + ?Sized>(
    f: &P,
    eta: &TestFunction,
    i: usize,
    j: usize,
    scheme: &IntegrationScheme,
) -> Result<HessianPairing> {
    let n = f.dim();
    check_dims(n, eta)?;
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!("index ({i}, {j}) out of range for n = {n}")));
    }
    let pole = choose_pole(eta, f.singular_point());
    let ledgers = integrate_polar(&support(eta), &pole, &f.singular_spheres(), 2, scheme, |x, out| {
        let jet = f.jet(x)?;
        out[0] = jet.value * eta.second(x, i, j);
        out[1] = eta.value(x) * jet.hessian.get(i, j);
        Ok(())
    })?;
    Ok(HessianPairing {
        value_side: extrapolated(&ledgers[0]),
        hessian_side: extrapolated(&ledgers[1]),
    })
}

/// `Jac(u)(η) = -(1/n) ∫ ⟨cof(∇u) u, ∇η⟩` for `u = ∇φ`.
pub fn distributional_jacobian<P: Potential + ?Sized>(
    phi: &P,
    eta: &TestFunction,
    scheme: &IntegrationScheme,
) -> Result<f64> {
    let n = phi.dim();
    check_dims(n, eta)?;
    let pole = choose_pole(eta, phi.singular_point());
    let ledgers = integrate_polar(&support(eta), &pole, &phi.singular_spheres(), 1, scheme, |x, out| {
        let jet = phi.jet(x)?;
        let cu = jet.cof_hessian.as_general().matvec(&jet.gradient);
        out[0] = cu.iter().zip(eta.gradient(x)).map(|(a, b)| a * b).sum::<f64>();
        Ok(())
    })?;
    Ok(-extrapolated(&ledgers[0]) / n as f64)
}

/// `∫ η det(Hφ)`, the absolutely continuous Monge–Ampère pairing.
pub fn determinant_pairing<P: Potential + ?Sized>(
    phi: &P,
    eta: &TestFunction,
    scheme: &IntegrationScheme,
) -> Result<f64> {
    let n = phi.dim();
    check_dims(n, eta)?;
    let pole = choose_pole(eta, phi.singular_point());
    let ledgers = integrate_polar(&support(eta), &pole, &phi.singular_spheres(), 1, scheme, |x, out| {
        out[0] = eta.value(x) * phi.jet(x)?.det_hessian;
        Ok(())
    })?;
    Ok(extrapolated(&ledgers[0]))
}

/// Central-difference row divergence `Σ_j (A_ij(x + h e_j) - A_ij(x - h e_j)) / 2h`.
pub fn fd_divergence<A: MatrixField + ?Sized>(field: &A, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = field.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let mut xp = x.to_vec();
    let mut out = vec![0.0; n];
    for j in 0..n {
        xp[j] = x[j] + h;
        let plus: SymMatrix = field.eval(&xp)?;
        xp[j] = x[j] - h;
        let minus = field.eval(&xp)?;
        xp[j] = x[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += (plus.get(i, j) - minus.get(i, j)) / (2.0 * h);
        }
    }
    Ok(out)
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|a| a * a).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Test bumps supported inside `region`. The first `count / 2 + count % 2`
/// contain the region centre (centre offset ≤ 0.3R, radius in [0.5R, 0.65R]);
/// the rest avoid it (offset in [0.45R, 0.6R], radius in [0.15R, 0.35R]).
pub fn test_bump_corpus<R: Rng>(region: &BallRegion, count: usize, rng: &mut R) -> Result<Vec<TestFunction>> {
    let n = region.dim();
    let big_r = region.radius;
    let containing = count - count / 2;
    (0..count)
        .map(|k| {
            let dir = random_unit(rng, n);
            let (offset, radius) = if k < containing {
                (rng.gen_range(0.0..0.3) * big_r, rng.gen_range(0.5..0.65) * big_r)
            } else {
                (rng.gen_range(0.45..0.6) * big_r, rng.gen_range(0.15..0.35) * big_r)
            };
            let center = region.center.iter().zip(&dir).map(|(c, d)| c + offset * d).collect();
            let power = rng.gen_range(3..=4);
            TestFunction::new(center, radius, power, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CofactorField, ConstantField, FnField, QuadraticPotential, RadialConvexFn};
    use crate::quadrature::unit_ball_volume;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scheme() -> IntegrationScheme {
        IntegrationScheme::default()
    }

    #[test]
    fn constant_field_has_no_weak_divergence() {
        let a = ConstantField(SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap());
        let eta = TestFunction::new(vec![0.2, -0.1], 0.4, 3, 1.0).unwrap();
        let r = weak_divergence_residual(&a, &eta, &scheme()).unwrap();
        assert!(r.residual.iter().all(|v| v.abs() < 1e-10), "{r:?}");
    }

    #[test]
    fn outer_product_integrates_by_parts() {
        let n = 3;
        let a = FnField::outer_product(n);
        let eta = TestFunction::new(vec![0.3, -0.2, 0.1], 0.5, 3, 1.0).unwrap();
        let r = weak_divergence_residual(&a, &eta, &scheme()).unwrap();
        let moments = integrate_polar(&support(&eta), &eta.center, &[], n, &scheme(), |x, out| {
            for i in 0..n {
                out[i] = x[i] * eta.value(x);
            }
            Ok(())
        })
        .unwrap();
        for i in 0..n {
            let want = -(n as f64 + 1.0) * extrapolated(&moments[i]);
            assert!((r.residual[i] - want).abs() <= 1e-8 * want.abs(), "{} vs {want}", r.residual[i]);
        }
    }

    #[test]
    fn radial_cofactor_is_weakly_divergence_free() {
        let f = RadialConvexFn::new(0.5, 3).unwrap();
        let a = CofactorField(f);
        let eta = TestFunction::new(vec![0.1, 0.05, -0.1], 0.6, 3, 1.0).unwrap();
        let r = weak_divergence_residual(&a, &eta, &scheme()).unwrap();
        assert!(r.relative() < 1e-8, "{r:?}");
    }

    #[test]
    fn quadratic_hessian_pairing_is_exact() {
        let m = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let f = QuadraticPotential { m };
        let eta = TestFunction::new(vec![0.1, 0.2], 0.5, 3, 1.0).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let pair = weak_hessian_residual(&f, &eta, i, j, &scheme()).unwrap();
            assert!(pair.residual() <= 1e-9, "{pair:?}");
            assert!((pair.hessian_side - m.get(i, j) * eta.integral()).abs() < 1e-9);
        }
    }

    #[test]
    fn cone_hessian_pairing() {
        let f = RadialConvexFn::new(0.0, 2).unwrap();
        let eta = TestFunction::new(vec![0.0, 0.0], 0.7, 3, 1.0).unwrap();
        let pair = weak_hessian_residual(&f, &eta, 0, 0, &scheme()).unwrap();
        assert!(pair.residual() <= 1e-4, "{pair:?}");
    }

    #[test]
    fn half_alpha_off_diagonal_pairing() {
        let f = RadialConvexFn::new(0.5, 3).unwrap();
        let eta = TestFunction::new(vec![0.1, -0.2, 0.1], 0.6, 3, 1.0).unwrap();
        let pair = weak_hessian_residual(&f, &eta, 0, 2, &scheme()).unwrap();
        assert!(pair.residual() <= 1e-5, "{pair:?}");
    }

    #[test]
    fn jacobian_of_linear_maps() {
        let eta = TestFunction::new(vec![0.1, 0.2], 0.5, 3, 1.0).unwrap();
        let id = QuadraticPotential { m: SymMatrix::identity(2).unwrap() };
        let j = distributional_jacobian(&id, &eta, &scheme()).unwrap();
        assert!((j - eta.integral()).abs() < 1e-12);
        let double = RadialConvexFn::new(1.0, 2).unwrap();
        let j = distributional_jacobian(&double, &eta, &scheme()).unwrap();
        assert!((j - 4.0 * eta.integral()).abs() < 1e-10, "{j}");
    }

    #[test]
    fn jacobian_matches_determinant_in_absolutely_continuous_case() {
        let f = RadialConvexFn::new(0.5, 2).unwrap();
        let eta = TestFunction::new(vec![0.2, -0.1], 0.6, 3, 1.0).unwrap();
        let jac = distributional_jacobian(&f, &eta, &scheme()).unwrap();
        let det = determinant_pairing(&f, &eta, &scheme()).unwrap();
        assert!((jac - det).abs() <= 1e-5 * det.abs(), "{jac} vs {det}");
    }

    #[test]
    fn cone_jacobian_detects_atom() {
        for n in 2..=3 {
            let f = RadialConvexFn::new(0.0, n).unwrap();
            let mut c = vec![0.0; n];
            c[0] = 0.1;
            let eta = TestFunction::new(c, 0.5, 3, 1.0).unwrap();
            let eta0 = eta.value(&vec![0.0; n]);
            let jac = distributional_jacobian(&f, &eta, &scheme()).unwrap();
            let want = unit_ball_volume(n) * eta0;
            assert!((jac - want).abs() <= 0.05 * want, "n={n}: {jac} vs {want}");
        }
    }

    #[test]
    fn fd_divergence_oracles() {
        let c = ConstantField(SymMatrix::identity(3).unwrap());
        assert_eq!(fd_divergence(&c, &[0.1, 0.2, 0.3], 1e-4).unwrap(), vec![0.0; 3]);
        let x = [0.3, -0.4, 0.2];
        let d = fd_divergence(&FnField::outer_product(3), &x, 1e-4).unwrap();
        for i in 0..3 {
            assert!((d[i] - 4.0 * x[i]).abs() < 1e-8);
        }
        let a = CofactorField(RadialConvexFn::new(0.5, 3).unwrap());
        let d = fd_divergence(&a, &[0.3, 0.4, 0.0], 1e-4).unwrap();
        assert!(d.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-6, "{d:?}");
    }

    #[test]
    fn corpus_respects_region() {
        let region = BallRegion { center: vec![0.1, 0.2, 0.3], radius: 0.25 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corpus = test_bump_corpus(&region, 10, &mut rng).unwrap();
        for (k, b) in corpus.iter().enumerate() {
            let d = dist(&b.center, &region.center);
            assert!(d + b.radius < region.radius);
            assert_eq!(d < b.radius, k < 5);
        }
    }
}
