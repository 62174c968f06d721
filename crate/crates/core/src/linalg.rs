//! Dense linear algebra used by the integral-equation and charge solvers.
//!
//! Everything here is generic over [`Real`]. Matrices are row-major. The
//! factorizations are plain textbook algorithms: partial-pivoting LU for the
//! production solves, Householder QR as an independent cross-check, and a
//! restarted, right-preconditioned GMRES for the large systems that are only
//! ever touched through matrix-vector products.

use crate::real::{CompensatedSum, Real};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("GMRES did not reach relative residual {tol:e} in {iterations} iterations (last {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transposed(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut y);
        }
        y
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2<T: Real>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

/// Compensated Euclidean norm, for diagnostics where the vector is long.
pub fn norm2_compensated<T: Real>(x: &[T]) -> T {
    let mut acc = CompensatedSum::new();
    for &v in x {
        acc.add(v * v);
    }
    acc.value().sqrt()
}

/// Partial-pivoting LU factorization `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self, LinalgError> {
        let n = a.rows;
        if a.cols != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: a.cols,
            });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a
            .data
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
        let tiny = scale * T::epsilon() * T::lit(8.0);
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: best.to_f64_lossy(),
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(p * n + j, k * n + j);
                }
            }
            let pivot = a[(k, k)];
            let (upper, lower) = a.data.split_at_mut((k + 1) * n);
            let row_k = &upper[k * n + k + 1..k * n + n];
            for i in 0..n - k - 1 {
                let row_i = &mut lower[i * n..(i + 1) * n];
                let l = row_i[k] / pivot;
                row_i[k] = l;
                if l != T::zero() {
                    axpy(-l, row_k, &mut row_i[k + 1..]);
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transposed(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // Aᵀ = Uᵀ Lᵀ P
        let mut z = b.to_vec();
        for i in 0..n {
            z[i] /= self.lu[(i, i)];
            let zi = z[i];
            let row = self.lu.row(i);
            for j in i + 1..n {
                z[j] -= row[j] * zi;
            }
        }
        for i in (0..n).rev() {
            let zi = z[i];
            let row = self.lu.row(i);
            for j in 0..i {
                z[j] -= row[j] * zi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

/// Householder QR, used as an independent dense solver.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    qr: Matrix<T>,
    tau: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self, LinalgError> {
        let (m, n) = (a.rows, a.cols);
        let mut tau = vec![T::zero(); n];
        for k in 0..n.min(m) {
            let norm = (k..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<T>().sqrt();
            if norm == T::zero() {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: 0.0,
                });
            }
            let alpha = if a[(k, k)] > T::zero() { -norm } else { norm };
            let v0 = a[(k, k)] - alpha;
            for i in k + 1..m {
                a[(i, k)] /= v0;
            }
            tau[k] = (alpha - a[(k, k)]) / alpha;
            a[(k, k)] = alpha;
            for j in k + 1..n {
                let mut s = a[(k, j)];
                for i in k + 1..m {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= tau[k];
                a[(k, j)] -= s;
                for i in k + 1..m {
                    let v = a[(i, k)];
                    a[(i, j)] -= s * v;
                }
            }
        }
        Ok(Self { qr: a, tau })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (m, n) = (self.qr.rows, self.qr.cols);
        assert_eq!(b.len(), m);
        let mut y = b.to_vec();
        for k in 0..n.min(m) {
            let mut s = y[k];
            for i in k + 1..m {
                s += self.qr[(i, k)] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in k + 1..m {
                y[i] -= s * self.qr[(i, k)];
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.qr[(i, j)] * x[j];
            }
            x[i] = s / self.qr[(i, i)];
        }
        x
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct IterativeSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖` recomputed from the returned iterate.
    pub relative_residual: T,
}

/// Parameters for [`gmres`].
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions<T> {
    pub tol: T,
    pub restart: usize,
    pub max_iter: usize,
}

impl<T: Real> Default for GmresOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            restart: 60,
            max_iter: 2000,
        }
    }
}

/// Restarted GMRES with right preconditioning: solves `A x = b` by working
/// on `A M⁻¹ y = b`, `x = M⁻¹ y`, so the monitored residual is the true one.
pub fn gmres<T, A, P>(
    apply: A,
    precondition: P,
    b: &[T],
    x0: Option<Vec<T>>,
    opts: GmresOptions<T>,
) -> Result<IterativeSolution<T>, LinalgError>
where
    T: Real,
    A: Fn(&[T]) -> Vec<T>,
    P: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.unwrap_or_else(|| vec![T::zero(); n]);
    if bnorm == T::zero() {
        return Ok(IterativeSolution {
            x: vec![T::zero(); n],
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let residual = |x: &[T]| -> Vec<T> {
        let ax = apply(x);
        b.iter().zip(ax).map(|(&bi, ai)| bi - ai).collect()
    };
    let mut total = 0;
    let m = opts.restart.max(1);
    loop {
        let r = residual(&x);
        let beta = norm2(&r);
        if beta / bnorm <= opts.tol {
            return Ok(IterativeSolution {
                x,
                iterations: total,
                relative_residual: beta / bnorm,
            });
        }
        if total >= opts.max_iter {
            return Err(LinalgError::NoConvergence {
                iterations: total,
                residual: (beta / bnorm).to_f64_lossy(),
                tol: opts.tol.to_f64_lossy(),
            });
        }
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut h = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z = precondition(&basis[k]);
            let mut w = apply(&z);
            // Modified Gram-Schmidt, twice for stability.
            for _ in 0..2 {
                for (j, vj) in basis.iter().enumerate() {
                    let hij = dot(&w, vj);
                    h[j][k] += hij;
                    axpy(-hij, vj, &mut w);
                }
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = wnorm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            total += 1;
            k_used = k + 1;
            let breakdown = wnorm <= T::epsilon() * bnorm;
            if !breakdown {
                basis.push(w.iter().map(|&v| v / wnorm).collect());
            }
            if g[k + 1].abs() / bnorm <= opts.tol * T::lit(0.5) || breakdown || total >= opts.max_iter
            {
                break;
            }
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            axpy(yj, &basis[j], &mut update);
        }
        let dx = precondition(&update);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
}

/// Largest eigenvalue magnitude of a symmetric operator by power iteration.
///
/// The start vector is a deterministic pseudo-random vector derived from
/// `seed`, so repeated calls are reproducible.
pub fn symmetric_spectral_radius<T: Real, A: Fn(&[T]) -> Vec<T>>(
    apply: A,
    n: usize,
    tol: T,
    max_iter: usize,
    seed: u64,
) -> T {
    if n == 0 {
        return T::zero();
    }
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<T> = (0..n)
        .map(|_| {
            state = splitmix64(state);
            T::lit((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = T::zero();
    for _ in 0..max_iter {
        // Iterate with A² so the estimate is monotone for indefinite A.
        let w = apply(&v);
        let w2 = apply(&w);
        let rq = dot(&v, &w2);
        let nw = norm2(&w2);
        if nw == T::zero() {
            return T::zero();
        }
        let new_estimate = rq.abs().sqrt();
        v = w2.iter().map(|&x| x / nw).collect();
        if (new_estimate - estimate).abs() <= tol * new_estimate {
            return new_estimate;
        }
        estimate = new_estimate;
    }
    estimate
}

/// Smallest singular value of a square matrix from its LU factors, by power
/// iteration on `(AᵀA)⁻¹`.
pub fn smallest_singular_value<T: Real>(lu: &Lu<T>, tol: T, max_iter: usize) -> T {
    let n = lu.dim();
    let mut v: Vec<T> = (0..n)
        .map(|i| T::one() + T::lit(0.1) * T::lit(((i * 7919) % 97) as f64 / 97.0))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = T::zero();
    for _ in 0..max_iter {
        let w = lu.solve_transposed(&lu.solve(&v));
        let rq = dot(&v, &w);
        let nw = norm2(&w);
        v = w.iter().map(|&x| x / nw).collect();
        if (rq - estimate).abs() <= tol * rq {
            estimate = rq;
            break;
        }
        estimate = rq;
    }
    T::one() / estimate.sqrt()
}

/// SplitMix64 step; also the documented per-trial seed derivation.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> Matrix<f64> {
        Matrix::from_fn(n, n, |i, j| {
            let base = 1.0 / (1.0 + (i as f64 - j as f64).abs());
            if i == j {
                base + 2.0
            } else {
                base * if (i + 2 * j) % 3 == 0 { -1.0 } else { 1.0 }
            }
        })
    }

    #[test]
    fn lu_and_qr_agree() {
        let a = test_matrix(37);
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let x1 = Lu::factor(a.clone()).unwrap().solve(&b);
        let x2 = Qr::factor(a.clone()).unwrap().solve(&b);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-12);
        }
        let r = a.matvec(&x1);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_transposed_solve() {
        let a = test_matrix(20);
        let b: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let x = Lu::factor(a.clone()).unwrap().solve_transposed(&b);
        let r = a.matvec_transposed(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-11);
        }
    }

    #[test]
    fn lu_detects_singular() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lu::factor(a), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn gmres_matches_direct() {
        let a = test_matrix(50);
        let b: Vec<f64> = (0..50).map(|i| (0.3 * i as f64).cos()).collect();
        let sol = gmres(
            |v: &[f64]| a.matvec(v),
            |v: &[f64]| v.to_vec(),
            &b,
            None,
            GmresOptions {
                restart: 7,
                ..Default::default()
            },
        )
        .unwrap();
        let direct = Lu::factor(a).unwrap().solve(&b);
        assert!(sol.relative_residual <= 1e-12);
        for (p, q) in sol.x.iter().zip(&direct) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let d = [3.0, -5.0, 1.0, 0.5];
        let r = symmetric_spectral_radius(
            |v: &[f64]| v.iter().zip(&d).map(|(a, b)| a * b).collect(),
            4,
            1e-12,
            500,
            7,
        );
        assert!((r - 5.0).abs() < 1e-8);
    }

    #[test]
    fn smallest_singular_value_of_diagonal() {
        let a: Matrix<f64> = Matrix::from_fn(3, 3, |i, j| if i == j { [2.0, 0.25, -4.0][i] } else { 0.0 });
        let s = smallest_singular_value(&Lu::factor(a).unwrap(), 1e-14, 200);
        assert!((s - 0.25).abs() < 1e-10);
    }
}
