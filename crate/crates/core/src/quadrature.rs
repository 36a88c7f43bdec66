//! Singularity-aware quadrature.
//!
//! Balls are integrated in polar coordinates about a *pole* (normally the
//! point singularity of the integrand). Along every ray the first radial
//! segment is split into dyadic shells `t_max 2^{-k-1} < t < t_max 2^{-k}`,
//! each carrying a Gauss–Legendre rule, so a power singularity at the pole
//! turns into a geometric sequence of shell integrals. Spheres across which
//! the integrand jumps are passed as breakpoints and split every ray.
//!
//! Cubes use composite tensor Gauss–Legendre, tori the periodic rectangle
//! rule. All reductions are pairwise over a fixed index order, so results are
//! bit-identical whether the per-direction work runs serially or in parallel.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{SymMatrix, MAX_DIM};

/// Ratio below which a shell sequence counts as converging.
pub const CONVERGENCE_RATIO: f64 = 1.0 - 1e-3;

/// Slopes this close to zero are treated as "no singularity".
const NOT_SINGULAR_SLOPE: f64 = 1e-9;

/// Gauss–Legendre nodes per cell of the composite cube rule.
const CUBE_CELL_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationScheme {
    /// Number of dyadic shells `K` on the first radial segment.
    pub dyadic_depth: usize,
    /// Gauss–Legendre order on each radial piece.
    pub radial_order: usize,
    /// Base angular resolution of the sphere rule.
    pub angular_order: usize,
    /// Nodes per axis for cube and torus rules.
    pub grid_resolution: usize,
}

impl Default for IntegrationScheme {
    fn default() -> Self {
        Self {
            dyadic_depth: 20,
            radial_order: 10,
            angular_order: 16,
            grid_resolution: 64,
        }
    }
}

impl IntegrationScheme {
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.dyadic_depth = depth;
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid_resolution = grid;
        self
    }

    /// One refinement step: more shells, more radial and angular nodes, finer grids.
    pub fn refined(&self) -> Self {
        Self {
            dyadic_depth: self.dyadic_depth + 4,
            radial_order: self.radial_order + 4,
            angular_order: self.angular_order * 3 / 2,
            grid_resolution: self.grid_resolution * 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dyadic_depth < 2 {
            return Err(Error::InvalidInput("dyadic_depth must be at least 2".into()));
        }
        if self.radial_order < 1 || self.angular_order < 2 || self.grid_resolution < 1 {
            return Err(Error::InvalidInput("scheme orders must be positive".into()));
        }
        Ok(())
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let m = order;
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // p0 = P_m(x), p1 = P_{m-1}(x)
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 1..=m {
                let kf = k as f64;
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p2) / kf;
            }
            dp = m as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
fn gl_on(a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> impl Iterator<Item = (f64, f64)> + '_ {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(rule.1.iter())
        .map(move |(x, w)| (mid + half * x, half * w))
}

/// Volume `ω_n` of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Surface measure of the unit sphere `S^{n-1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Quadrature on `S^{n-1}` for n = 2, 3, 4.
///
/// n = 2: equal angles. n = 3: Gauss in `cos θ` × equal angles in `φ`.
/// n = 4: Hopf coordinates `(√u e^{iξ₁}, √(1-u) e^{iξ₂})`, whose surface
/// measure is `½ du dξ₁ dξ₂`; Gauss in `u` × equal angles in both `ξ`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub directions: Vec<[f64; MAX_DIM]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n: usize, order: usize) -> Result<Self> {
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        let order = order.max(2);
        let ring = |count: usize| {
            (0..count).map(move |j| 2.0 * PI * (j as f64 + 0.5) / count as f64)
        };
        match n {
            2 => {
                let count = 2 * order;
                for th in ring(count) {
                    directions.push([th.cos(), th.sin(), 0.0, 0.0]);
                    weights.push(2.0 * PI / count as f64);
                }
            }
            3 => {
                let gl = gauss_legendre(order);
                let count = 2 * order;
                for (z, wz) in gl.0.iter().zip(gl.1.iter()) {
                    let rho = (1.0 - z * z).sqrt();
                    for ph in ring(count) {
                        directions.push([rho * ph.cos(), rho * ph.sin(), *z, 0.0]);
                        weights.push(wz * 2.0 * PI / count as f64);
                    }
                }
            }
            4 => {
                let gl = gauss_legendre(order);
                let count = 2 * order;
                let dxi = 2.0 * PI / count as f64;
                for (u, wu) in gl_on(0.0, 1.0, &gl) {
                    let (a, b) = (u.sqrt(), (1.0 - u).sqrt());
                    for x1 in ring(count) {
                        for x2 in ring(count) {
                            directions.push([a * x1.cos(), a * x1.sin(), b * x2.cos(), b * x2.sin()]);
                            weights.push(0.5 * wu * dxi * dxi);
                        }
                    }
                }
            }
            _ => return Err(Error::UnsupportedDimension(n)),
        }
        Ok(Self {
            dim: n,
            directions,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallRegion {
    pub fn unit(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) < self.radius
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Integrals of one scalar component, split by radial zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellLedger {
    /// `shells[k]`: contribution of the k-th dyadic shell of the first segment.
    pub shells: Vec<f64>,
    /// Everything beyond the first radial segment.
    pub outer: f64,
}

impl ShellLedger {
    pub fn shells_total(&self) -> f64 {
        pairwise_sum(&self.shells)
    }

    /// Shells plus outer region; excludes the innermost ball of radius `t 2^{-K}`.
    pub fn total(&self) -> f64 {
        self.shells_total() + self.outer
    }

    /// Ratio of the last shell to the one before it.
    pub fn tail_ratio(&self) -> f64 {
        let k = self.shells.len();
        if k < 2 {
            return f64::NAN;
        }
        let (prev, last) = (self.shells[k - 2], self.shells[k - 1]);
        if prev == 0.0 {
            if last == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            last / prev
        }
    }

    /// Geometric extrapolation of the omitted inner ball, for non-negative
    /// integrands with a converging shell sequence; `None` otherwise.
    pub fn tail_estimate(&self) -> Option<f64> {
        let rho = self.tail_ratio();
        if !(0.0..CONVERGENCE_RATIO).contains(&rho) {
            return None;
        }
        let last = *self.shells.last()?;
        Some(last * rho / (1.0 - rho))
    }

    /// `total()` plus the geometric tail, or `+∞` when the shells do not converge.
    pub fn total_with_tail(&self) -> f64 {
        match self.tail_estimate() {
            Some(t) => self.total() + t,
            None => f64::INFINITY,
        }
    }
}

/// Integrates a vector-valued integrand of `width` components over `region`
/// in polar coordinates about `pole`.
///
/// `spheres` lists surfaces across which the integrand may jump; every ray is
/// split where it crosses them. The closure writes its values into the output
/// slice; non-finite values are rejected.
pub fn integrate_polar<F>(
    region: &BallRegion,
    pole: &[f64],
    spheres: &[Sphere],
    width: usize,
    scheme: &IntegrationScheme,
    f: F,
) -> Result<Vec<ShellLedger>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    scheme.validate()?;
    let n = region.dim();
    if pole.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pole.len(),
        });
    }
    let offset: Vec<f64> = pole.iter().zip(&region.center).map(|(p, c)| p - c).collect();
    let off_sq = dot(&offset, &offset);
    if off_sq.sqrt() >= region.radius * (1.0 - 1e-12) {
        return Err(Error::InvalidInput(format!(
            "pole {pole:?} is not inside the integration ball"
        )));
    }
    let sphere_rule = SphereRule::new(n, scheme.angular_order)?;
    let gl = gauss_legendre(scheme.radial_order);
    let depth = scheme.dyadic_depth;
    let stride = (depth + 1) * width;

    let per_direction: Vec<Vec<f64>> = (0..sphere_rule.len())
        .into_par_iter()
        .map(|d| {
            let omega = &sphere_rule.directions[d][..n];
            let w_dir = sphere_rule.weights[d];
            let mut acc = vec![0.0; stride];
            let mut x = vec![0.0; n];
            let mut vals = vec![0.0; width];

            let b = dot(omega, &offset);
            let t_max = -b + (b * b - (off_sq - region.radius * region.radius)).sqrt();
            let mut cuts = vec![0.0];
            for s in spheres {
                let e: Vec<f64> = pole.iter().zip(&s.center).map(|(p, c)| p - c).collect();
                let bb = dot(omega, &e);
                let disc = bb * bb - (dot(&e, &e) - s.radius * s.radius);
                if disc <= 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                for t in [-bb - sq, -bb + sq] {
                    if t > 1e-12 * t_max && t < (1.0 - 1e-12) * t_max {
                        cuts.push(t);
                    }
                }
            }
            cuts.push(t_max);
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_max);

            let mut eval = |t: f64, weight: f64, slot: usize, acc: &mut [f64]| -> Result<()> {
                for i in 0..n {
                    x[i] = pole[i] + t * omega[i];
                }
                f(&x, &mut vals)?;
                let jac = weight * w_dir * t.powi(n as i32 - 1);
                for (c, v) in vals.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteSample { point: x.clone() });
                    }
                    acc[slot * width + c] += jac * v;
                }
                Ok(())
            };

            let first = cuts[1];
            for k in 0..depth {
                let hi = first * 0.5f64.powi(k as i32);
                let lo = 0.5 * hi;
                for (t, w) in gl_on(lo, hi, &gl) {
                    eval(t, w, k, &mut acc)?;
                }
            }
            for seg in cuts[1..].windows(2) {
                let (a, c) = (seg[0], seg[1]);
                let mid = 0.5 * (a + c);
                for (lo, hi) in [(a, mid), (mid, c)] {
                    for (t, w) in gl_on(lo, hi, &gl) {
                        eval(t, w, depth, &mut acc)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |idx: usize| -> f64 {
        let col: Vec<f64> = per_direction.iter().map(|v| v[idx]).collect();
        pairwise_sum(&col)
    };
    Ok((0..width)
        .map(|c| ShellLedger {
            shells: (0..depth).map(|k| column(k * width + c)).collect(),
            outer: column(depth * width + c),
        })
        .collect())
}

/// Scalar convenience wrapper around [`integrate_polar`].
pub fn integrate_polar_scalar<F>(
    region: &BallRegion,
    pole: &[f64],
    spheres: &[Sphere],
    scheme: &IntegrationScheme,
    g: F,
) -> Result<ShellLedger>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut out = integrate_polar(region, pole, spheres, 1, scheme, |x, v| {
        v[0] = g(x)?;
        Ok(())
    })?;
    Ok(out.remove(0))
}

/// `∫_{B_1(0)} g` on dyadic annuli about the origin.
pub fn integrate_ball<F>(g: F, n: usize, scheme: &IntegrationScheme) -> Result<ShellLedger>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let region = BallRegion::unit(n);
    let pole = vec![0.0; n];
    integrate_polar_scalar(&region, &pole, &[], scheme, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerIntegral {
    Finite(f64),
    Divergent,
}

/// `∫_{B_R(0)} |x|^s dx = n ω_n R^{s+n} / (s+n)` when `s + n > 0`.
pub fn ball_power_integral(s: f64, n: usize, radius: f64) -> Result<PowerIntegral> {
    if radius <= 0.0 {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let e = s + n as f64;
    if e <= 0.0 {
        return Ok(PowerIntegral::Divergent);
    }
    Ok(PowerIntegral::Finite(unit_sphere_area(n) * radius.powf(e) / e))
}

/// Shared driver for tensor-product rules: evaluates `f` on every node of the
/// product grid (row-major index order) and reduces each component pairwise.
fn tensor_integrate<F>(axes: &[Vec<(f64, f64)>], width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let n = axes.len();
    let per_axis: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = per_axis.iter().product();
    let values: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut x = vec![0.0; n];
            let mut w = 1.0;
            let mut rem = lin;
            for d in (0..n).rev() {
                let idx = rem % per_axis[d];
                rem /= per_axis[d];
                x[d] = axes[d][idx].0;
                w *= axes[d][idx].1;
            }
            let mut vals = vec![0.0; width];
            f(&x, &mut vals)?;
            for v in vals.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteSample { point: x.clone() });
                }
                *v *= w;
            }
            Ok(vals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..width)
        .map(|c| {
            let col: Vec<f64> = values.iter().map(|v| v[c]).collect();
            pairwise_sum(&col)
        })
        .collect())
}

fn cube_axis(lo: f64, hi: f64, scheme: &IntegrationScheme) -> Vec<(f64, f64)> {
    let cells = (scheme.grid_resolution / CUBE_CELL_ORDER).max(1);
    let gl = gauss_legendre(CUBE_CELL_ORDER);
    let h = (hi - lo) / cells as f64;
    (0..cells)
        .flat_map(|c| {
            let a = lo + c as f64 * h;
            gl_on(a, a + h, &gl).collect::<Vec<_>>()
        })
        .collect()
}

/// `∫_{[lo, hi]} f` with a composite tensor Gauss–Legendre rule
/// (`grid_resolution` nodes per axis).
pub fn integrate_cube<F>(
    lo: &[f64],
    hi: &[f64],
    width: usize,
    scheme: &IntegrationScheme,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::InvalidInput("cube bounds must share a positive dimension".into()));
    }
    let axes: Vec<Vec<(f64, f64)>> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| cube_axis(*a, *b, scheme))
        .collect();
    tensor_integrate(&axes, width, f)
}

fn torus_axis(resolution: usize) -> Vec<(f64, f64)> {
    let w = 1.0 / resolution as f64;
    (0..resolution).map(|j| (j as f64 * w, w)).collect()
}

/// Mean `⨍_{[0,1)^n} g` of a `Z^n`-periodic integrand by the rectangle rule.
pub fn integrate_torus<F>(g: F, n: usize, scheme: &IntegrationScheme) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    torus_mean(n, 1, scheme, 0.0, |x, v| {
        v[0] = g(x)?;
        Ok(())
    })
    .map(|v| v[0])
}

/// Entrywise torus mean of a symmetric-matrix-valued integrand.
pub fn integrate_torus_matrix<F>(g: F, n: usize, scheme: &IntegrationScheme) -> Result<SymMatrix>
where
    F: Fn(&[f64]) -> Result<SymMatrix> + Sync,
{
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let means = torus_mean(n, pairs.len(), scheme, 0.0, |x, v| {
        let m = g(x)?;
        for (slot, (i, j)) in pairs.iter().enumerate() {
            v[slot] = m.get(*i, *j);
        }
        Ok(())
    })?;
    let mut out = SymMatrix::zeros(n)?;
    for (slot, (i, j)) in pairs.iter().enumerate() {
        out.set(*i, *j, means[slot]);
    }
    Ok(out)
}

/// Torus mean on the lattice `(j + shift)/N`.
pub fn torus_mean<F>(
    n: usize,
    width: usize,
    scheme: &IntegrationScheme,
    shift: f64,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let res = scheme.grid_resolution;
    if res == 0 {
        return Err(Error::InvalidInput("grid_resolution must be positive".into()));
    }
    let axis: Vec<(f64, f64)> = torus_axis(res)
        .into_iter()
        .map(|(x, w)| (x + shift / res as f64, w))
        .collect();
    tensor_integrate(&vec![axis; n], width, f)
}

/// Shell ledger of `|g|^p` together with the fitted local power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: f64,
    pub shell_integrals: Vec<f64>,
    pub outer_integral: f64,
    pub converged: bool,
    /// Local power `s` in `|g| ~ r^s` about the pole.
    pub fitted_exponent: f64,
    /// Estimated `sup{q : g ∈ L^q near the pole}`; `+∞` when not singular.
    pub threshold_q: f64,
    pub tail_ratio: f64,
    /// Geometric estimate of the omitted innermost ball (0 when not converged).
    pub tail_estimate: f64,
}

impl LpReport {
    fn from_ledger(ledger: ShellLedger, p: f64, n: usize) -> Self {
        let tail_ratio = ledger.tail_ratio();
        let converged = tail_ratio < CONVERGENCE_RATIO;
        let fitted_exponent = fit_power(&ledger.shells, p, n);
        let threshold_q = if fitted_exponent < -NOT_SINGULAR_SLOPE {
            n as f64 / -fitted_exponent
        } else {
            f64::INFINITY
        };
        let tail_estimate = ledger.tail_estimate().unwrap_or(0.0);
        Self {
            p,
            shell_integrals: ledger.shells,
            outer_integral: ledger.outer,
            converged,
            fitted_exponent,
            threshold_q,
            tail_ratio,
            tail_estimate,
        }
    }

    /// `∫|g|^p` over the whole region (tail included), `+∞` if the shells diverge.
    pub fn integral(&self) -> f64 {
        if !self.converged {
            return f64::INFINITY;
        }
        pairwise_sum(&self.shell_integrals) + self.outer_integral + self.tail_estimate
    }

    /// `‖g‖_{L^p}`.
    pub fn norm(&self) -> f64 {
        self.integral().powf(1.0 / self.p)
    }
}

/// Least-squares slope of `log2(shell_k)` against `k` over the deeper half of
/// the shells, converted to the local exponent `s` of `|g| ~ r^s`.
fn fit_power(shells: &[f64], p: f64, n: usize) -> f64 {
    let depth = shells.len();
    let start = (depth / 2).min(depth.saturating_sub(2));
    let window = &shells[start..];
    if window.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        // An integrand vanishing near the pole carries no singularity.
        return f64::INFINITY;
    }
    let m = window.len() as f64;
    let xs: Vec<f64> = (start..depth).map(|k| k as f64).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.log2()).collect();
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let slope = sxy / sxx;
    // shell_k ∝ 2^{-k(s p + n)}
    -(slope + n as f64) / p
}

/// `L^p` ledger of `g` on the unit ball about the origin.
pub fn lp_dyadic<F>(g: F, p: f64, n: usize, scheme: &IntegrationScheme) -> Result<LpReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    lp_dyadic_in(g, p, &BallRegion::unit(n), &vec![0.0; n], &[], scheme)
}

/// `L^p` ledger of `g` on an arbitrary ball, with shells about `pole`.
pub fn lp_dyadic_in<F>(
    g: F,
    p: f64,
    region: &BallRegion,
    pole: &[f64],
    spheres: &[Sphere],
    scheme: &IntegrationScheme,
) -> Result<LpReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} must be >= 1")));
    }
    let ledger = integrate_polar_scalar(region, pole, spheres, scheme, |x| {
        Ok(g(x)?.abs().powf(p))
    })?;
    Ok(LpReport::from_ledger(ledger, p, region.dim()))
}

/// Membership threshold `q* = n / (-s)` of a local power singularity.
pub fn fit_threshold(report: &LpReport, n: usize) -> Result<f64> {
    let s = report.fitted_exponent;
    if !(s < -NOT_SINGULAR_SLOPE) {
        return Err(Error::NotSingular { exponent: s });
    }
    Ok(n as f64 / -s)
}

/// Integration domain shared by norm-type reductions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// Polar rule about `center` (or an interior pole, see [`integrate_domain`]).
    Ball { center: Vec<f64>, radius: f64 },
    /// Composite tensor Gauss–Legendre on `[lo, hi]`.
    Cube { lo: Vec<f64>, hi: Vec<f64> },
    /// The unit torus `[0, 1)^n` with the rectangle rule.
    Torus { n: usize },
}

impl Domain {
    pub fn unit_ball(n: usize) -> Self {
        Domain::Ball { center: vec![0.0; n], radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } => center.len(),
            Domain::Cube { lo, .. } => lo.len(),
            Domain::Torus { n } => *n,
        }
    }
}

/// Integrals of `width` non-negative components over `domain`.
///
/// On balls the shells are centred at `pole` when it lies inside, and the
/// innermost ball is extrapolated geometrically; a component whose shells do
/// not contract integrates to `+∞`.
pub fn integrate_domain<F>(
    domain: &Domain,
    pole: Option<&[f64]>,
    spheres: &[Sphere],
    width: usize,
    scheme: &IntegrationScheme,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    match domain {
        Domain::Ball { center, radius } => {
            let region = BallRegion { center: center.clone(), radius: *radius };
            let pole = match pole {
                Some(p) if p.len() == center.len() && dist(p, center) < 0.999 * radius => p.to_vec(),
                _ => center.clone(),
            };
            let ledgers = integrate_polar(&region, &pole, spheres, width, scheme, f)?;
            Ok(ledgers.iter().map(ShellLedger::total_with_tail).collect())
        }
        Domain::Cube { lo, hi } => integrate_cube(lo, hi, width, scheme, f),
        Domain::Torus { n } => torus_mean(*n, width, scheme, 0.0, f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for m in 1..=20 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..(2 * m) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "m={m} deg={deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn sphere_rules_have_correct_area() {
        for n in 2..=4 {
            let rule = SphereRule::new(n, 8).unwrap();
            let area: f64 = pairwise_sum(&rule.weights);
            assert!((area - unit_sphere_area(n)).abs() < 1e-12, "n={n}");
            for d in &rule.directions {
                assert!((norm(&d[..n]) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_rules_integrate_second_moments() {
        // ∫_{S^{n-1}} x_1^2 = |S^{n-1}| / n.
        for n in 2..=4 {
            let rule = SphereRule::new(n, 8).unwrap();
            let m: f64 = rule
                .directions
                .iter()
                .zip(&rule.weights)
                .map(|(d, w)| w * d[0] * d[0])
                .sum();
            assert!((m - unit_sphere_area(n) / n as f64).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ball_power_integral_examples() {
        let PowerIntegral::Finite(v) = ball_power_integral(-1.0, 2, 1.0).unwrap() else {
            panic!()
        };
        assert!((v - 2.0 * PI).abs() < 1e-14);
        let PowerIntegral::Finite(v) = ball_power_integral(0.0, 3, 1.0).unwrap() else {
            panic!()
        };
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-14);
        assert_eq!(ball_power_integral(-2.0, 2, 1.0).unwrap(), PowerIntegral::Divergent);
    }

    #[test]
    fn unit_function_fills_annuli() {
        let s = IntegrationScheme::default();
        let k = s.dyadic_depth as i32;
        let ledger = integrate_ball(|_| Ok(1.0), 2, &s).unwrap();
        let want = PI - PI * 4f64.powi(-k);
        assert!((ledger.total() - want).abs() < 1e-10);
        assert!((ledger.total_with_tail() - PI).abs() < 1e-12);
    }

    #[test]
    fn inverse_radius_shells_in_the_plane() {
        let s = IntegrationScheme::default();
        // |x|^{-1}: the k-th shell is 2π (2^{-k} - 2^{-k-1}).
        let ledger = integrate_ball(|x| Ok(1.0 / norm(x)), 2, &s).unwrap();
        for (k, v) in ledger.shells.iter().enumerate() {
            let want = 2.0 * PI * 0.5f64.powi(k as i32 + 1);
            assert!((v - want).abs() < 1e-12 * want.max(1e-6), "k={k}");
        }
        // |x|^{-2}: every shell is 2π ln 2.
        let ledger = integrate_ball(|x| Ok(1.0 / (x[0] * x[0] + x[1] * x[1])), 2, &s).unwrap();
        for v in &ledger.shells {
            assert!((v - 2.0 * PI * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_dyadic_log_divergent_and_bounded() {
        let s = IntegrationScheme::default();
        let r = lp_dyadic(|x| Ok(1.0 / norm(x)), 2.0, 2, &s).unwrap();
        assert!(!r.converged);
        for v in &r.shell_integrals {
            assert!((v - 2.0 * PI * 2f64.ln()).abs() < 1e-12);
        }
        assert!((r.fitted_exponent + 1.0).abs() < 1e-10);
        assert!(r.integral().is_infinite());

        let one = lp_dyadic(|_| Ok(1.0), 1.0, 3, &s).unwrap();
        assert!(one.converged);
        assert!(one.threshold_q.is_infinite());
        assert!(matches!(fit_threshold(&one, 3), Err(Error::NotSingular { .. })));
    }

    #[test]
    fn breakpoints_split_jumps_exactly() {
        // Indicator of |x| < 0.3 integrated about an off-centre pole.
        let s = IntegrationScheme::default();
        let region = BallRegion {
            center: vec![0.1, 0.0, 0.0],
            radius: 0.8,
        };
        let sphere = Sphere {
            center: vec![0.0; 3],
            radius: 0.3,
        };
        let ledger = integrate_polar_scalar(&region, &[0.05, 0.02, 0.0], &[sphere], &s, |x| {
            Ok(if norm(x) < 0.3 { 1.0 } else { 0.0 })
        })
        .unwrap();
        let want = 4.0 / 3.0 * PI * 0.027;
        assert!((ledger.total_with_tail() - want).abs() < 1e-9 * want);
    }

    #[test]
    fn torus_mean_of_trig_square() {
        let s = IntegrationScheme::default().with_grid(4);
        let m = integrate_torus(|x| Ok((2.0 * PI * x[0]).sin().powi(2)), 2, &s).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        let c = integrate_torus(|_| Ok(3.25), 3, &s).unwrap();
        assert!((c - 3.25).abs() < 1e-14);
    }

    #[test]
    fn cube_rule_polynomials() {
        let s = IntegrationScheme::default().with_grid(8);
        let v = integrate_cube(&[0.0, -1.0], &[2.0, 1.0], 1, &s, |x, out| {
            out[0] = x[0] * x[0] * x[1] * x[1];
            Ok(())
        })
        .unwrap();
        assert!((v[0] - 8.0 / 3.0 * 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_non_finite_samples() {
        let s = IntegrationScheme::default();
        let err = integrate_ball(|_| Ok(f64::NAN), 2, &s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { .. }));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
