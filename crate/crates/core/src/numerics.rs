//! Dense complex linear algebra.
//!
//! Everything the estimator needs lives here: a row-major [`ComplexMatrix`],
//! the unitary DFT, off-diagonal regularization (ODIR) of Gram matrices, and
//! Cholesky-based solves for the regularized normal equations. Gram matrices
//! in this crate are at most a few dozen rows wide, so factorizations are
//! direct and unblocked.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{shape_err, Error, Result};

/// Condition estimate above which a Gram matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real entries.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(
            rows,
            cols,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return shape_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return shape_err(format!(
                "vector of length {} against {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return shape_err(format!(
                "{}x{} versus {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Real part of the Frobenius inner product `<self, rhs>`.
    pub fn inner_re(&self, rhs: &Self) -> Result<f64> {
        if self.shape() != rhs.shape() {
            return shape_err("inner product of differently shaped matrices");
        }
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.shape(), rhs.shape());
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// The leading `n` columns.
    pub fn first_cols(&self, n: usize) -> Result<Self> {
        if n > self.cols {
            return shape_err(format!("requested {n} columns of a {}-column matrix", self.cols));
        }
        Ok(Self::from_fn(self.rows, n, |i, j| self[(i, j)]))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Unitary DFT matrix, `F[j,k] = exp(-i 2 pi j k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let norm = 1.0 / (n as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        // reduce jk mod n first so the phase argument stays small
        let phase = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
        Complex64::from_polar(norm, phase)
    }))
}

/// Off-diagonal regularization: keeps the diagonal, divides every
/// off-diagonal entry by `1 + delta`.
pub fn odir(a: &ComplexMatrix, delta: f64) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return shape_err(format!("ODIR needs a square matrix, got {}x{}", a.rows, a.cols));
    }
    check_delta(delta)?;
    let shrink = 1.0 / (1.0 + delta);
    Ok(ComplexMatrix::from_fn(a.rows, a.cols, |i, j| {
        if i == j {
            a[(i, j)]
        } else {
            a[(i, j)] * shrink
        }
    }))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ODIR delta must be finite and non-negative, got {delta}"
        )));
    }
    Ok(())
}

/// Lower Cholesky factor `L` with `A = L L^H`, or `None` when a pivot is not
/// strictly positive.
pub fn cholesky(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.rows;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L L^H X = B` given the lower factor.
fn cholesky_solve(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
    }
    x
}

/// One-norm condition estimate `|A|_1 |A^-1|_1` of a Hermitian positive
/// definite matrix. Returns infinity when the factorization breaks down.
pub fn condition_estimate(a: &ComplexMatrix) -> f64 {
    match cholesky(a) {
        Some(l) => {
            let inv = cholesky_solve(&l, &ComplexMatrix::identity(a.rows));
            let c = a.norm_one() * inv.norm_one();
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Solves `A X = B` for Hermitian positive definite `A`, rejecting systems
/// whose condition estimate exceeds [`SINGULAR_CONDITION`]. `delta` is only
/// reported in the error.
pub fn solve_hpd(a: &ComplexMatrix, b: &ComplexMatrix, delta: f64) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows != b.rows {
        return shape_err(format!(
            "system {}x{} with right-hand side {}x{}",
            a.rows, a.cols, b.rows, b.cols
        ));
    }
    let l = cholesky(a).ok_or(Error::Singular {
        cond: f64::INFINITY,
        delta,
    })?;
    let inv = cholesky_solve(&l, &ComplexMatrix::identity(a.rows));
    let cond = a.norm_one() * inv.norm_one();
    if !(cond <= SINGULAR_CONDITION) {
        return Err(Error::Singular { cond, delta });
    }
    let x = cholesky_solve(&l, b);
    if !x.is_finite() {
        return Err(Error::Singular { cond, delta });
    }
    Ok(x)
}

/// `(odir(Q^H Q, delta))^-1 Q^H`. With `delta = 0` and full column rank this
/// is the Moore-Penrose pseudoinverse.
pub fn regularized_pinv(q: &ComplexMatrix, delta: f64) -> Result<ComplexMatrix> {
    if q.rows == 0 || q.cols == 0 {
        return Err(Error::InvalidDimension(format!(
            "pseudoinverse of an empty {}x{} matrix",
            q.rows, q.cols
        )));
    }
    check_delta(delta)?;
    let qh = q.adjoint();
    let gram = odir(&qh.matmul(q)?, delta)?;
    solve_hpd(&gram, &qh, delta)
}

/// Minimum-norm pseudoinverse `Q^H (Q Q^H)^-1` of a full-row-rank matrix.
pub fn min_norm_pinv(q: &ComplexMatrix) -> Result<ComplexMatrix> {
    if q.rows == 0 || q.cols == 0 {
        return Err(Error::InvalidDimension("pseudoinverse of an empty matrix".into()));
    }
    let qh = q.adjoint();
    let outer = q.matmul(&qh)?;
    // (Q Q^H)^-1 Q = X  =>  result = X^H
    Ok(solve_hpd(&outer, q, 0.0)?.adjoint())
}

/// Unitary DFT (or its inverse) applied to every row in place.
pub fn fft_rows(m: &mut ComplexMatrix, inverse: bool) {
    let n = m.cols;
    if n == 0 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(&mut m.data);
    let norm = 1.0 / (n as f64).sqrt();
    m.data.iter_mut().for_each(|z| *z *= norm);
}

/// Unitary DFT (or its inverse) applied to every column.
pub fn fft_cols(m: &mut ComplexMatrix, inverse: bool) {
    let mut t = m.transpose();
    fft_rows(&mut t, inverse);
    *m = t.transpose();
}

/// Lower Cholesky factor of a real symmetric positive definite matrix.
pub fn cholesky_real(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
            let s = a[(i, j)] - dot;
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(Array2::from_shape_vec((n, n), l).unwrap())
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub fn lower_triangular_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    // row i of L^-1 from rows above: X[i,:] = (e_i - sum_{k<i} L[i,k] X[k,:]) / L[i,i]
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        let (done, rest) = x.split_at_mut(i * n);
        let row = &mut rest[..n];
        row[i] = 1.0;
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                let xk = &done[k * n..k * n + k + 1];
                for (r, &v) in row[..=k].iter_mut().zip(xk) {
                    *r -= lik * v;
                }
            }
        }
        let d = l[(i, i)];
        row[..=i].iter_mut().for_each(|v| *v /= d);
    }
    Array2::from_shape_vec((n, n), x).unwrap()
}

/// Inverse of a real symmetric positive definite matrix, `None` if the
/// factorization fails.
pub fn spd_inverse(a: &Array2<f64>) -> Option<Array2<f64>> {
    let l = cholesky_real(a)?;
    let li = lower_triangular_inverse(&l);
    let inv = li.t().dot(&li);
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Maximum absolute column sum of a real matrix.
pub fn norm_one_real(a: &Array2<f64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A X = B` for symmetric positive definite real `A`.
/// Returns `None` if the factorization fails.
pub fn solve_spd_real(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    assert_eq!(b.nrows(), a.nrows());
    Some(spd_inverse(a)?.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Gauss-Jordan elimination with partial pivoting; shares nothing with
    /// the Cholesky path.
    fn gauss_jordan_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let n = a.rows();
        let mut m = a.clone();
        let mut x = b.clone();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()))
                .unwrap();
            for k in 0..n {
                let t = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = t;
            }
            for k in 0..x.cols() {
                let t = x[(col, k)];
                x[(col, k)] = x[(piv, k)];
                x[(piv, k)] = t;
            }
            let p = m[(col, col)];
            for k in 0..n {
                m[(col, k)] /= p;
            }
            for k in 0..x.cols() {
                x[(col, k)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = m[(i, col)];
                    for k in 0..n {
                        let v = m[(col, k)];
                        m[(i, k)] -= f * v;
                    }
                    for k in 0..x.cols() {
                        let v = x[(col, k)];
                        x[(i, k)] -= f * v;
                    }
                }
            }
        }
        x
    }

    #[test]
    fn dft_small_cases() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1.as_slice(), &[c(1.0, 0.0)]);

        let f2 = dft_matrix(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)];
        for (a, b) in f2.as_slice().iter().zip(expected) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(matches!(dft_matrix(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn dft_is_unitary() {
        for n in [1, 2, 3, 7, 8, 32, 64, 100, 256, 1024] {
            let f = dft_matrix(n).unwrap();
            let prod = f.matmul(&f.adjoint()).unwrap();
            let err = prod.max_abs_diff(&ComplexMatrix::identity(n));
            assert!(err < 1e-12, "n={n}: {err}");
        }
    }

    #[test]
    fn fft_rows_matches_dft_matrix() {
        let x = random_matrix(3, 16, 4);
        let f = dft_matrix(16).unwrap();
        let mut fast = x.clone();
        fft_rows(&mut fast, false);
        let slow = x.matmul(&f.transpose()).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-12);

        let mut back = fast.clone();
        fft_rows(&mut back, true);
        assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn fft_cols_matches_dft_matrix() {
        let x = random_matrix(8, 3, 5);
        let f = dft_matrix(8).unwrap();
        let mut fast = x.clone();
        fft_cols(&mut fast, false);
        assert!(fast.max_abs_diff(&f.matmul(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn odir_examples() {
        let a = ComplexMatrix::from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(odir(&a, 0.0).unwrap(), a);
        let r = odir(&a, 1.0).unwrap();
        assert_eq!(
            r,
            ComplexMatrix::from_real(2, 2, &[2.0, 0.5, 0.5, 2.0]).unwrap()
        );

        let big = odir(&a, 1e12).unwrap();
        assert_eq!(big[(0, 0)], a[(0, 0)]);
        assert_eq!(big[(1, 1)], a[(1, 1)]);
        assert!(big[(0, 1)].norm() <= 1e-11 * a[(0, 1)].norm());

        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(odir(&rect, 0.1), Err(Error::Shape(_))));
        assert!(matches!(odir(&a, -0.1), Err(Error::InvalidParameter(_))));
        assert!(matches!(odir(&a, f64::NAN), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn odir_keeps_diagonal_bitwise() {
        let a = random_matrix(6, 6, 9);
        for delta in [0.0, 1e-3, 0.7, 12.0] {
            let r = odir(&a, delta).unwrap();
            for i in 0..6 {
                assert_eq!(r[(i, i)], a[(i, i)]);
            }
        }
    }

    #[test]
    fn pinv_of_identity() {
        let p = regularized_pinv(&ComplexMatrix::identity(5), 0.0).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::identity(5)) < 1e-15);
    }

    #[test]
    fn pinv_left_inverse() {
        for seed in 0..20 {
            let q = random_matrix(3, 2, seed);
            let p = regularized_pinv(&q, 0.0).unwrap();
            assert_eq!(p.shape(), (2, 3));
            let err = p.matmul(&q).unwrap().max_abs_diff(&ComplexMatrix::identity(2));
            assert!(err < 1e-10, "seed {seed}: {err}");
        }
    }

    #[test]
    fn pinv_matches_gauss_jordan_normal_equations() {
        for (m, n, seed) in [(3, 2, 1), (8, 5, 2), (20, 20, 3), (40, 16, 4)] {
            let q = random_matrix(m, n, seed);
            let qh = q.adjoint();
            let oracle = gauss_jordan_solve(&qh.matmul(&q).unwrap(), &qh);
            let p = regularized_pinv(&q, 0.0).unwrap();
            assert!(p.max_abs_diff(&oracle) < 1e-10);
        }
    }

    #[test]
    fn pinv_singular_gram_reports_delta() {
        // two identical columns
        let q = ComplexMatrix::from_real(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        match regularized_pinv(&q, 0.0) {
            Err(Error::Singular { delta, .. }) => assert_eq!(delta, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
        let msg = regularized_pinv(&q, 0.0).unwrap_err().to_string();
        assert!(msg.contains("delta"));
        assert!(regularized_pinv(&q, 0.1).is_ok());
    }

    #[test]
    fn regularization_improves_condition_monotonically() {
        // nearly collinear columns
        let base = random_matrix(10, 4, 11);
        let q = ComplexMatrix::from_fn(10, 4, |i, j| {
            base[(i, 0)] + base[(i, j)] * 1e-4 * j as f64
        });
        let gram = q.adjoint().matmul(&q).unwrap();
        let mut last = f64::INFINITY;
        for delta in [0.0, 1e-6, 1e-4, 1e-2, 1e-1, 1.0, 10.0, 1e3] {
            let cond = condition_estimate(&odir(&gram, delta).unwrap());
            assert!(cond <= last * (1.0 + 1e-12), "delta {delta}: {cond} > {last}");
            last = cond;
        }
        assert!(last < 10.0);
    }

    #[test]
    fn min_norm_pinv_is_right_inverse() {
        let q = random_matrix(4, 9, 21);
        let p = min_norm_pinv(&q).unwrap();
        let err = q.matmul(&p).unwrap().max_abs_diff(&ComplexMatrix::identity(4));
        assert!(err < 1e-10);
    }

    #[test]
    fn spd_real_solve() {
        let a = Array2::from_shape_vec((2, 2), vec![4.0, 1.0, 1.0, 3.0]).unwrap();
        let b = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        let x = solve_spd_real(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        let not_pd = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(solve_spd_real(&not_pd, &b).is_none());
    }

    #[test]
    fn spd_inverse_of_random_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((12, 30), |_| rng.random_range(-1.0..1.0));
        let g = a.dot(&a.t());
        let inv = spd_inverse(&g).unwrap();
        let err = (g.dot(&inv) - Array2::<f64>::eye(12)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10);
    }
}
