//! Monge–Ampère masses of radial convex functions and the Hardy-type norm
//! `∫ f log(1 + f)` of non-negative densities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Potential, SmoothedCone};
use crate::quadrature::{integrate_domain, unit_ball_volume, Domain, IntegrationScheme};

/// Nodes with values down to this are treated as zero by [`hardy_norm`].
pub const NEGATIVE_INPUT_TOL: f64 = 1e-12;

/// Convex radial profile `g` of `φ(x) = g(|x|)`, described through its
/// right derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// `g(r) = r`.
    Cone,
    /// The profile of `f_α`: `g' = (1+α) r^α` on `[0, 1)`, `(1+α) r` beyond.
    RadialF { alpha: f64 },
    /// `g(r) = √(r² + ε²)`.
    SmoothedCone { eps: f64 },
    /// `g(r) = r²/2`.
    Quadratic,
    /// `g'(0) = initial_slope ≥ 0` and `g'' = curvatures[k] ≥ 0` on the k-th
    /// interval cut by the ascending `breakpoints`.
    PiecewiseQuadratic {
        initial_slope: f64,
        breakpoints: Vec<f64>,
        curvatures: Vec<f64>,
    },
}

impl RadialProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            RadialProfile::RadialF { alpha } if !(*alpha >= 0.0) => {
                Err(Error::InvalidExponent { alpha: *alpha })
            }
            RadialProfile::SmoothedCone { eps } if !(*eps > 0.0) => {
                Err(Error::InvalidInput(format!("eps = {eps} must be positive")))
            }
            RadialProfile::PiecewiseQuadratic { initial_slope, breakpoints, curvatures } => {
                if curvatures.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidInput("need one curvature per interval".into()));
                }
                if !(*initial_slope >= 0.0) || curvatures.iter().any(|c| !(*c >= 0.0)) {
                    return Err(Error::InvalidInput("slopes and curvatures must be non-negative".into()));
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.first().is_some_and(|b| !(*b > 0.0)) {
                    return Err(Error::InvalidInput("breakpoints must be positive and ascending".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `sup ∂g(r) = g'(r+)`.
    pub fn right_slope(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Cone => 1.0,
            RadialProfile::RadialF { alpha } => {
                if r < 1.0 {
                    (1.0 + alpha) * r.powf(*alpha)
                } else {
                    (1.0 + alpha) * r
                }
            }
            RadialProfile::SmoothedCone { eps } => r / (r * r + eps * eps).sqrt(),
            RadialProfile::Quadratic => r,
            RadialProfile::PiecewiseQuadratic { initial_slope, breakpoints, curvatures } => {
                let mut slope = *initial_slope;
                let mut left = 0.0;
                for (k, c) in curvatures.iter().enumerate() {
                    let right = breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
                    slope += c * (r.min(right) - left).max(0.0);
                    if r < right {
                        break;
                    }
                    left = right;
                }
                slope
            }
        }
    }
}

/// `μ_φ(B_r) = ω_n (g'(r+))^n`: the volume of the gradient image of `B_r`,
/// including the subdifferential `B_{g'(0+)}` at the origin.
pub fn ma_mass_radial(profile: &RadialProfile, r: f64, n: usize) -> Result<f64> {
    profile.validate()?;
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius {r} must be positive")));
    }
    Ok(unit_ball_volume(n) * profile.right_slope(r).powi(n as i32))
}

/// `∫ f log(1 + f)` over `domain`; `pole` centres the shells on balls.
pub fn hardy_norm<F>(f: F, domain: &Domain, pole: Option<&[f64]>, scheme: &IntegrationScheme) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let v = integrate_domain(domain, pole, &[], 1, scheme, |x, out| {
        let value = f(x)?;
        if value < -NEGATIVE_INPUT_TOL {
            return Err(Error::NegativeInput { value, point: x.to_vec() });
        }
        let value = value.max(0.0);
        out[0] = value * value.ln_1p();
        Ok(())
    })?;
    Ok(v[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyRow {
    pub eps: f64,
    /// `∫_{B_{1/2}} det(Hφ_ε)`.
    pub mass: f64,
    /// `∫_{B_1} det(Hφ_ε) log(1 + det(Hφ_ε))`.
    pub hardy: f64,
}

/// Mass and Hardy norm of `det(H√(|x|² + ε²))` for every `ε` in the list.
pub fn hardy_blowup_series(eps_list: &[f64], n: usize, scheme: &IntegrationScheme) -> Result<Vec<HardyRow>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidInput("empty eps list".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && *e <= 0.25)) {
        return Err(Error::InvalidInput("every eps must lie in (0, 1/4]".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("eps list must be strictly decreasing".into()));
    }
    let half = Domain::Ball { center: vec![0.0; n], radius: 0.5 };
    let unit = Domain::unit_ball(n);
    eps_list
        .par_iter()
        .map(|&eps| {
            let cone = SmoothedCone::new(eps, n)?;
            let det = |x: &[f64]| Ok(cone.jet(x)?.det_hessian);
            let mass = integrate_domain(&half, None, &[], 1, scheme, |x, out| {
                out[0] = det(x)?;
                Ok(())
            })?[0];
            let hardy = hardy_norm(det, &unit, None, scheme)?;
            Ok(HardyRow { eps, mass, hardy })
        })
        .collect()
}

/// Least-squares line `y = slope x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidInput("line fit needs at least two paired points".into()));
    }
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("line fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: ybar - slope * xbar, r_squared })
}

/// Fit of the Hardy column against `log(1/ε)`.
pub fn hardy_log_fit(rows: &[HardyRow]) -> Result<LineFit> {
    let xs: Vec<f64> = rows.iter().map(|r| -r.eps.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.hardy).collect();
    fit_line(&xs, &ys)
}
