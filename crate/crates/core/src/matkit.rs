//! Dense kernels for small square matrices (n = 2, 3, 4).
//!
//! Determinants are evaluated by cofactor (Laplace) expansion, so integer
//! inputs give exactly rounded results without pivoting noise. The
//! cofactor follows the convention `cof(A)_{ij} = (-1)^{i+j} det(A^{ji})`,
//! where `A^{ji}` drops row `j` and column `i`; with it `A cof(A) = det(A) Id`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// Default tolerance for membership in the PSD cone.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

fn check_dim(n: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralMatrix {
    n: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl GeneralMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(Self {
            n,
            entries: [[0.0; MAX_DIM]; MAX_DIM],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n)?;
        for i in 0..n {
            m.entries[i][i] = 1.0;
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len())?;
        for (i, v) in values.iter().enumerate() {
            m.entries[i][i] = *v;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            m.entries[i][..n].copy_from_slice(row);
        }
        Ok(m)
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        let mut m = Self::zeros(u.len())?;
        for i in 0..u.len() {
            for j in 0..v.len() {
                m.entries[i][j] = u[i] * v[j];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n && j < self.n);
        self.entries[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries[i][j] = value;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.entries[i][..self.n].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                t.entries[i][j] = self.entries[j][i];
            }
        }
        t
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.entries[i][j] += other.entries[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.entries[i][j] -= other.entries[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.entries[i][j] *= s;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = *self;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.entries[i][k] * other.entries[k][j];
                }
                out.entries[i][j] = acc;
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entries[i][j] * v[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.entries[i][j].abs());
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.entries[i][j] * self.entries[i][j];
            }
        }
        acc.sqrt()
    }

    /// Frobenius inner product `⟨A, B⟩ = Σ A_ij B_ij`.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.entries[i][j] * other.entries[i][j];
            }
        }
        acc
    }

    /// The `(n-1)×(n-1)` minor with `row` and `col` removed, as a flat array.
    fn minor(&self, row: usize, col: usize) -> ([[f64; MAX_DIM]; MAX_DIM], usize) {
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        let mut r = 0;
        for i in 0..self.n {
            if i == row {
                continue;
            }
            let mut c = 0;
            for j in 0..self.n {
                if j == col {
                    continue;
                }
                out[r][c] = self.entries[i][j];
                c += 1;
            }
            r += 1;
        }
        (out, self.n - 1)
    }
}

fn det_raw(a: &[[f64; MAX_DIM]; MAX_DIM], n: usize) -> f64 {
    match n {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        4 => {
            // 2x2 minors of the bottom two rows, reused across the first-row expansion.
            let m = |c0: usize, c1: usize| a[2][c0] * a[3][c1] - a[2][c1] * a[3][c0];
            let (m01, m02, m03, m12, m13, m23) =
                (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
            let c0 = a[1][1] * m23 - a[1][2] * m13 + a[1][3] * m12;
            let c1 = a[1][0] * m23 - a[1][2] * m03 + a[1][3] * m02;
            let c2 = a[1][0] * m13 - a[1][1] * m03 + a[1][3] * m01;
            let c3 = a[1][0] * m12 - a[1][1] * m02 + a[1][2] * m01;
            a[0][0] * c0 - a[0][1] * c1 + a[0][2] * c2 - a[0][3] * c3
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

pub fn det(m: &GeneralMatrix) -> f64 {
    det_raw(&m.entries, m.n)
}

pub fn cofactor(m: &GeneralMatrix) -> GeneralMatrix {
    let n = m.n;
    let mut out = *m;
    for i in 0..n {
        for j in 0..n {
            let (minor, k) = m.minor(j, i);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            out.entries[i][j] = sign * det_raw(&minor, k);
        }
    }
    out
}

/// `|det(A + u vᵀ) − det(A) − ⟨u vᵀ, cofᵀ(A)⟩|`.
pub fn det_lemma_residual(a: &GeneralMatrix, u: &[f64], v: &[f64]) -> Result<f64> {
    let b = GeneralMatrix::outer(u, v)?;
    if b.n != a.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: b.n,
        });
    }
    let lhs = det(&a.add(&b));
    let rhs = det(a) + b.inner(&cofactor(a).transpose());
    Ok((lhs - rhs).abs())
}

/// Symmetric matrix; symmetry is exact (`m[i][j] == m[j][i]` bitwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix(GeneralMatrix);

impl SymMatrix {
    pub fn new(m: GeneralMatrix) -> Result<Self> {
        for i in 0..m.n {
            for j in (i + 1)..m.n {
                if m.entries[i][j] != m.entries[j][i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Averages the off-diagonal pairs.
    pub fn symmetrize(m: &GeneralMatrix) -> Self {
        let mut out = *m;
        for i in 0..m.n {
            for j in (i + 1)..m.n {
                let avg = 0.5 * (m.entries[i][j] + m.entries[j][i]);
                out.entries[i][j] = avg;
                out.entries[j][i] = avg;
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        GeneralMatrix::zeros(n).map(Self)
    }

    pub fn identity(n: usize) -> Result<Self> {
        GeneralMatrix::identity(n).map(Self)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        GeneralMatrix::diag(values).map(Self)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(GeneralMatrix::from_rows(rows)?)
    }

    /// `Σ_k v_k v_kᵀ`, PSD by construction.
    pub fn gram(vectors: &[Vec<f64>]) -> Result<Self> {
        let n = vectors.first().map(Vec::len).unwrap_or(0);
        let mut m = GeneralMatrix::zeros(n)?;
        for v in vectors {
            for i in 0..n {
                for j in i..n {
                    m.entries[i][j] += v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                m.entries[j][i] = m.entries[i][j];
            }
        }
        Ok(Self(m))
    }

    /// Sets `(i, j)` and `(j, i)` together.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.0.set(i, j, value);
        self.0.set(j, i, value);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn as_general(&self) -> &GeneralMatrix {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.sub(&other.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn det(&self) -> f64 {
        det(&self.0)
    }

    /// Cofactor of a symmetric matrix; only the upper triangle is computed so
    /// the result is exactly symmetric.
    pub fn cofactor(&self) -> Self {
        let n = self.0.n;
        let mut out = self.0;
        for i in 0..n {
            for j in i..n {
                let (minor, k) = self.0.minor(j, i);
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let v = sign * det_raw(&minor, k);
                out.entries[i][j] = v;
                out.entries[j][i] = v;
            }
        }
        Self(out)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.frobenius()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn trace(&self) -> f64 {
        (0..self.0.n).map(|i| self.0.entries[i][i]).sum()
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues in ascending order.
///
/// n = 2: closed-form roots of the characteristic polynomial.
/// n = 3, 4: cyclic Jacobi rotations. The trigonometric cubic formula loses
/// half the digits near repeated eigenvalues, which is exactly where PSD
/// checks on rank-deficient matrices need them.
pub fn sym_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    let m = &a.0.entries;
    let mut eig = match a.dim() {
        2 => {
            let half_tr = 0.5 * (m[0][0] + m[1][1]);
            let half_diff = 0.5 * (m[0][0] - m[1][1]);
            let disc = half_diff.hypot(m[0][1]);
            vec![half_tr - disc, half_tr + disc]
        }
        _ => jacobi_eigenvalues(a),
    };
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

fn jacobi_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    let n = a.dim();
    let mut m = a.0.entries;
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

pub fn min_eigenvalue(a: &SymMatrix) -> f64 {
    sym_eigenvalues(a)[0]
}

/// `true` iff every eigenvalue is `>= -tol`.
pub fn psd_check(a: &SymMatrix, tol: f64) -> bool {
    min_eigenvalue(a) >= -tol
}

/// `det(A+B)^{1/n} − det(A)^{1/n} − det(B)^{1/n}` for PSD `A`, `B`.
pub fn minkowski_gap(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    for m in [a, b] {
        let min_eigenvalue = min_eigenvalue(m);
        if min_eigenvalue < -DEFAULT_PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue });
        }
    }
    Ok(psd_root_det(&a.add(b)) - psd_root_det(a) - psd_root_det(b))
}

/// `det(A)^{1/n}` for PSD `A`, from the spectrum.
///
/// Eigenvalues below `8nε·λ_max` are indistinguishable from zero and count as
/// zero: the n-th root would otherwise turn a roundoff determinant of 1e-17
/// into a spurious 1e-4.
pub fn psd_root_det(a: &SymMatrix) -> f64 {
    let n = a.dim();
    let eig = sym_eigenvalues(a);
    let floor = 8.0 * n as f64 * f64::EPSILON * eig[n - 1].abs();
    if eig[0] <= floor {
        return 0.0;
    }
    eig.iter().map(|l| l.powf(1.0 / n as f64)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_identity_and_diag() {
        assert_eq!(det(&GeneralMatrix::identity(3).unwrap()), 1.0);
        assert_eq!(det(&GeneralMatrix::diag(&[2.0, 3.0]).unwrap()), 6.0);
        assert_eq!(det(&GeneralMatrix::diag(&[2.0, 3.0, 5.0, 7.0]).unwrap()), 210.0);
    }

    #[test]
    fn cofactor_diagonal_cases() {
        let id = GeneralMatrix::identity(4).unwrap();
        assert_eq!(cofactor(&id), id);
        let c2 = cofactor(&GeneralMatrix::diag(&[2.0, 3.0]).unwrap());
        assert_eq!(c2, GeneralMatrix::diag(&[3.0, 2.0]).unwrap());
        let c3 = cofactor(&GeneralMatrix::diag(&[1.0, 2.0, 3.0]).unwrap());
        assert_eq!(c3, GeneralMatrix::diag(&[6.0, 3.0, 2.0]).unwrap());
    }

    #[test]
    fn cofactor_uses_transposed_minor() {
        // cof(A)_{01} = -det(A^{10}) drops row 1, column 0.
        let a = GeneralMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = cofactor(&a);
        assert_eq!(c.rows(), vec![vec![4.0, -2.0], vec![-3.0, 1.0]]);
        let prod = a.matmul(&c);
        assert_eq!(prod, GeneralMatrix::identity(2).unwrap().scale(det(&a)));
    }

    #[test]
    fn det_lemma_trivial_cases() {
        let id = GeneralMatrix::identity(2).unwrap();
        assert_eq!(det_lemma_residual(&id, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let z = GeneralMatrix::zeros(3).unwrap();
        assert_eq!(
            det_lemma_residual(&z, &[1.0, -2.0, 0.5], &[3.0, 1.0, 4.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn minkowski_equality_cases() {
        let id = SymMatrix::identity(2).unwrap();
        let zero = SymMatrix::zeros(2).unwrap();
        assert!(minkowski_gap(&id, &id).unwrap().abs() < 1e-15);
        assert!(minkowski_gap(&id, &zero).unwrap().abs() < 1e-15);
    }

    #[test]
    fn minkowski_rejects_indefinite() {
        let bad = SymMatrix::diag(&[1.0, -1.0]).unwrap();
        let id = SymMatrix::identity(2).unwrap();
        assert!(matches!(minkowski_gap(&bad, &id), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn psd_examples() {
        assert!(psd_check(&SymMatrix::identity(3).unwrap(), 0.0));
        assert!(!psd_check(&SymMatrix::diag(&[1.0, -1.0]).unwrap(), 1e-10));
        assert!(psd_check(&SymMatrix::diag(&[1.0, 0.0, 2.0, 3.0]).unwrap(), 0.0));
        assert!(!psd_check(&SymMatrix::diag(&[1.0, 2.0, -1e-6, 3.0]).unwrap(), 1e-10));
    }

    #[test]
    fn root_det_of_singular_psd_is_zero() {
        let v = vec![vec![0.3, -0.7, 0.2, 0.9], vec![1.1, 0.4, -0.5, 0.0]];
        let g = SymMatrix::gram(&v).unwrap();
        assert_eq!(psd_root_det(&g), 0.0);
        let d = SymMatrix::diag(&[2.0, 8.0, 4.0]).unwrap();
        assert!((psd_root_det(&d) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_gram_keeps_zero_eigenvalues_at_roundoff() {
        for n in 2..=4 {
            let v: Vec<f64> = (0..n).map(|k| 0.3 + 0.17 * k as f64 - 0.05 * (k * k) as f64).collect();
            let g = SymMatrix::gram(&[v]).unwrap();
            assert!(min_eigenvalue(&g).abs() < 1e-15, "n={n}: {}", min_eigenvalue(&g));
        }
    }

    #[test]
    fn eigenvalues_known_spectra() {
        // [[2,1],[1,2]] has spectrum {1,3}.
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        // Tridiagonal [2,-1;-1,2,-1;-1,2]: 2 - sqrt2, 2, 2 + sqrt2.
        let t = SymMatrix::from_rows(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ])
        .unwrap();
        let e = sym_eigenvalues(&t);
        let s2 = 2f64.sqrt();
        for (got, want) in e.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
        // 4x4 path-graph Laplacian-like matrix: 2 - 2cos(k pi / 5).
        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            rows[i][i] = 2.0;
            if i + 1 < 4 {
                rows[i][i + 1] = -1.0;
                rows[i + 1][i] = -1.0;
            }
        }
        let e = sym_eigenvalues(&SymMatrix::from_rows(&rows).unwrap());
        for (k, got) in e.iter().enumerate() {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 5.0).cos();
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_dimensions_and_asymmetry() {
        assert_eq!(GeneralMatrix::zeros(5), Err(Error::UnsupportedDimension(5)));
        assert_eq!(GeneralMatrix::zeros(1), Err(Error::UnsupportedDimension(1)));
        let err = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).unwrap_err();
        assert_eq!(err, Error::NotSymmetric { row: 0, col: 1 });
    }

    #[test]
    fn symmetric_cofactor_matches_general() {
        let s = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 3.0, 0.5],
            vec![-2.0, 0.5, 5.0],
        ])
        .unwrap();
        let c = s.cofactor();
        let g = cofactor(s.as_general());
        for i in 0..3 {
            for j in 0..3 {
                assert!((c.get(i, j) - g.get(i, j)).abs() < 1e-14);
            }
        }
    }
}
