//! Auxiliary-system matrices and the similarity transform into controller
//! canonical (companion) form.
//!
//! The stretched-time auxiliary system is `dy/dtau = A y + B (v + pi)` with
//! superdiagonal ones and `A[i][i] = -alpha * i` (zero-based). Its
//! characteristic polynomial has roots `0, -alpha, ..., -(n-1) alpha`.
//! `Q = C(A, B) V` maps companion coordinates `z` to `y = Q z`.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Small dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Writes `self * v` into `out`.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, a[(r, col)]))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty pivot search");
            if pivot.abs() <= 1e-14 * scale {
                return Err(Error::SingularMatrix { column: col, pivot });
            }
            a.swap_rows(col, pivot_row);
            inv.swap_rows(col, pivot_row);
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(r, j)] -= f * a[(col, j)];
                    inv[(r, j)] -= f * inv[(col, j)];
                }
            }
        }
        Ok(inv)
    }

    /// Inverse computed in exact rational arithmetic on the stored binary
    /// values, rounded once at the end.
    pub fn exact_inverse(&self) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a: Vec<Vec<BigRational>> = (0..n)
            .map(|i| {
                let mut row: Vec<BigRational> = self
                    .row(i)
                    .iter()
                    .map(|&v| {
                        BigRational::from_float(v)
                            .ok_or_else(|| Error::Domain(format!("non-finite matrix entry {v}")))
                    })
                    .collect::<Result<_>>()?;
                row.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for col in 0..n {
            let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
                return Err(Error::SingularMatrix { column: col, pivot: 0.0 });
            };
            a.swap(col, p);
            let pivot = a[col][col].clone();
            for v in a[col].iter_mut() {
                *v = &*v / &pivot;
            }
            let pivot_row = a[col].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r == col || row[col].is_zero() {
                    continue;
                }
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= &f * pv;
                }
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = a[i][n + j].to_f64().unwrap_or(f64::NAN);
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Integer coefficients of `prod_{i=0}^{n-1} (s + i)` (unsigned Stirling
/// numbers of the first kind), leading coefficient first.
fn unit_root_coefficients(n: usize) -> Vec<u128> {
    let mut poly: Vec<u128> = vec![1];
    for i in 0..n as u128 {
        let mut next = vec![0u128; poly.len() + 1];
        for (j, &c) in poly.iter().enumerate() {
            next[j] += c;
            next[j + 1] += c * i;
        }
        poly = next;
    }
    poly
}

/// Coefficients `(a_1, ..., a_n)` of `s^n + a_1 s^(n-1) + ... + a_n`, the
/// characteristic polynomial with roots `alpha (1 - i)`, `i = 1..n`.
///
/// Each `a_i` is an exact integer times `alpha^i`; `a_n` is always zero.
pub fn companion_coefficients(n: usize, alpha: f64) -> Result<Vec<f64>> {
    validate(n, alpha)?;
    let ints = unit_root_coefficients(n);
    Ok((1..=n)
        .map(|i| ints[i] as f64 * alpha.powi(i as i32))
        .collect())
}

/// The auxiliary-system pair `(A, B)`.
pub fn build_auxiliary_matrices(n: usize, alpha: f64) -> Result<(Matrix, Vec<f64>)> {
    validate(n, alpha)?;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -alpha * i as f64;
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    Ok((a, b))
}

/// Controllability matrix `[B, AB, ..., A^(n-1) B]`.
pub fn controllability_matrix(a: &Matrix, b: &[f64]) -> Matrix {
    let n = b.len();
    let mut c = Matrix::zeros(n, n);
    let mut col = b.to_vec();
    for j in 0..n {
        for i in 0..n {
            c[(i, j)] = col[i];
        }
        col = a.mul_vec(&col);
    }
    c
}

/// Anti-triangular Hankel matrix built from `(a_1, ..., a_n)`: row `i`,
/// column `j` holds `a_{n-1-i-j}` with `a_0 = 1` and zeros below the
/// anti-diagonal.
pub fn coefficient_matrix(a: &[f64]) -> Matrix {
    let n = a.len();
    let coeff = |k: isize| -> f64 {
        match k {
            0 => 1.0,
            k if k > 0 => a[k as usize - 1],
            _ => 0.0,
        }
    };
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] = coeff(n as isize - 1 - i as isize - j as isize);
        }
    }
    v
}

/// Everything needed to move between auxiliary and companion coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTransform {
    pub n: usize,
    pub alpha: f64,
    /// `(a_1, ..., a_n)`.
    pub a: Vec<f64>,
    pub a_mat: Matrix,
    pub b: Vec<f64>,
    pub controllability: Matrix,
    pub v: Matrix,
    pub q: Matrix,
    pub q_inv: Matrix,
}

impl CanonicalTransform {
    pub fn build(n: usize, alpha: f64) -> Result<Self> {
        let a = companion_coefficients(n, alpha)?;
        let (a_mat, b) = build_auxiliary_matrices(n, alpha)?;
        let controllability = controllability_matrix(&a_mat, &b);
        let v = coefficient_matrix(&a);
        let q = controllability.mul(&v);
        let q_inv = q.exact_inverse()?;
        Ok(Self {
            n,
            alpha,
            a,
            a_mat,
            b,
            controllability,
            v,
            q,
            q_inv,
        })
    }

    /// `z = Q^-1 y` written into `z`.
    pub fn to_companion_into(&self, y: &[f64], z: &mut [f64]) {
        self.q_inv.mul_vec_into(y, z);
    }

    pub fn to_companion(&self, y: &[f64]) -> Vec<f64> {
        self.q_inv.mul_vec(y)
    }

    /// `a_n z_1 + a_(n-1) z_2 + ... + a_1 z_n`.
    pub fn coefficient_correction(&self, z: &[f64]) -> f64 {
        let n = self.n;
        (0..n).map(|i| self.a[n - 1 - i] * z[i]).sum()
    }

    /// `Q^-1 A Q`.
    pub fn companion_matrix(&self) -> Matrix {
        self.q_inv.mul(&self.a_mat).mul(&self.q)
    }
}

/// `build_transform(n, alpha)`.
pub fn build_transform(n: usize, alpha: f64) -> Result<CanonicalTransform> {
    CanonicalTransform::build(n, alpha)
}

fn validate(n: usize, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    if n > 30 {
        return Err(Error::InvalidParameter(format!("order {n} is too large")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force expansion of `prod (s - r_i)` with floating coefficients.
    fn expand(roots: &[f64]) -> Vec<f64> {
        let mut poly = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; poly.len() + 1];
            for (j, &c) in poly.iter().enumerate() {
                next[j] += c;
                next[j + 1] -= c * r;
            }
            poly = next;
        }
        poly
    }

    #[test]
    fn coefficients_of_example_chain() {
        assert_eq!(companion_coefficients(3, 1.0).unwrap(), vec![3.0, 2.0, 0.0]);
        assert_eq!(companion_coefficients(1, 2.5).unwrap(), vec![0.0]);
        let expected = expand(&[0.0, -2.0, -4.0, -6.0]);
        assert_eq!(expected, vec![1.0, 12.0, 44.0, 48.0, 0.0]);
        assert_eq!(companion_coefficients(4, 2.0).unwrap(), expected[1..].to_vec());
    }

    #[test]
    fn coefficients_match_brute_force() {
        for n in 1..=8 {
            for alpha in [0.2, 1.0, 3.0] {
                let roots: Vec<f64> = (0..n).map(|i| -alpha * i as f64).collect();
                let brute = expand(&roots);
                let exact = companion_coefficients(n, alpha).unwrap();
                for (x, y) in exact.iter().zip(&brute[1..]) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "n={n} alpha={alpha}");
                }
            }
        }
    }

    #[test]
    fn auxiliary_matrices() {
        let (a, b) = build_auxiliary_matrices(3, 1.0).unwrap();
        assert_eq!(
            a.to_rows(),
            vec![vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![0.0, 0.0, -2.0]]
        );
        assert_eq!(b, vec![0.0, 0.0, 1.0]);
        let (a1, b1) = build_auxiliary_matrices(1, 4.0).unwrap();
        assert_eq!(a1.to_rows(), vec![vec![0.0]]);
        assert_eq!(b1, vec![1.0]);
        assert!(build_auxiliary_matrices(0, 1.0).is_err());
    }

    #[test]
    fn example_transform_gives_z3_equal_y3_minus_y2() {
        let t = build_transform(3, 1.0).unwrap();
        assert_eq!(
            t.q.to_rows(),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]
        );
        assert_eq!(t.to_companion(&[1.0, 2.0, 5.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(t.coefficient_correction(&[1.0, 2.0, 3.0]), 13.0);
    }

    #[test]
    fn scalar_and_second_order_transforms() {
        let t1 = build_transform(1, 0.3).unwrap();
        assert_eq!(t1.q.to_rows(), vec![vec![1.0]]);
        let t2 = build_transform(2, 1.0).unwrap();
        assert_eq!(t2.q, Matrix::identity(2));
        let comp = t2.companion_matrix();
        assert_eq!(comp.to_rows(), vec![vec![0.0, 1.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn inverse_detects_singularity() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(m.inverse(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn inverse_with_pivoting() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(m.inverse().unwrap(), m);
    }
}
