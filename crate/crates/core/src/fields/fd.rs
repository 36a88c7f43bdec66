//! Central finite differences used as an independent check of closed forms.

use crate::error::Result;
use crate::matkit::SymMatrix;

use super::Potential;

/// Default step for finite-difference checks.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector map, symmetrized.
///
/// Applied to a gradient this gives a Hessian with `O(eps/h)` roundoff
/// instead of the `O(eps/h²)` of second differences of values.
pub fn symmetric_jacobian<F>(g: F, x: &[f64], h: f64) -> Result<SymMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        xp[j] = x[j] + h;
        let gp = g(&xp)?;
        xp[j] = x[j] - h;
        let gm = g(&xp)?;
        xp[j] = x[j];
        cols.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let mut m = SymMatrix::zeros(n)?;
    for i in 0..n {
        for j in i..n {
            m.set(i, j, 0.5 * (cols[j][i] + cols[i][j]));
        }
    }
    Ok(m)
}

/// Relative discrepancies of a potential's closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetDeviation {
    /// `‖∇φ − ∇_h φ‖_∞ / ‖∇φ‖_∞` with `∇_h` differencing values.
    pub gradient: f64,
    /// `‖Hφ − D_h ∇φ‖_max / ‖Hφ‖_max` with `D_h` differencing the gradient.
    pub hessian: f64,
}

pub fn jet_deviation<P: Potential + ?Sized>(pot: &P, x: &[f64], h: f64) -> Result<JetDeviation> {
    let jet = pot.jet(x)?;
    let g_fd = gradient(|y| Ok(pot.jet(y)?.value), x, h)?;
    let h_fd = symmetric_jacobian(|y| Ok(pot.jet(y)?.gradient), x, h)?;
    let gmax = jet.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gerr = jet
        .gradient
        .iter()
        .zip(&g_fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let herr = jet.hessian.sub(&h_fd).max_abs();
    Ok(JetDeviation {
        gradient: gerr / gmax.max(f64::MIN_POSITIVE),
        hessian: herr / jet.hessian.max_abs().max(f64::MIN_POSITIVE),
    })
}
