//! Banded Hermitian Cholesky, Jacobi-preconditioned conjugate gradients and
//! small dense determinants.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field over which the solvers operate (real or complex).
pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn norm_sqr(self) -> f64;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Lower band of a Hermitian matrix: entry `(i, j)` with `i - bw <= j <= i`.
#[derive(Clone, Debug)]
pub struct BandedHermitian<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedHermitian<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![T::zero(); n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Sets `(i, j)` and implicitly `(j, i) = conj`.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let (i, j, v) = if j > i { (j, i, v.conj()) } else { (i, j, v) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.at(i, j);
        self.data[k] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j, c) = if j > i { (j, i, true) } else { (i, j, false) };
        if i - j > self.bw {
            return T::zero();
        }
        let v = self.data[self.at(i, j)];
        if c {
            v.conj()
        } else {
            v
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.at(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a.conj() * x[i];
                }
            }
        }
        y
    }

    /// In-place `L Lᴴ` factorization.
    pub fn cholesky(mut self) -> Result<BandedCholesky<T>> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in lo..j {
                    s -= self.data[ri + k] * self.data[rj + k].conj();
                }
                if j < i {
                    let d = self.data[rj + j].re();
                    self.data[ri + j] = s.scale(1.0 / d);
                } else {
                    let p = s.re();
                    if !(p > 0.0) || !p.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: p });
                    }
                    self.data[ri + i] = T::from_real(p.sqrt());
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    l: BandedHermitian<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    /// `log det A = 2 Σ log L_ii` (real for Hermitian positive definite A).
    pub fn log_det(&self) -> f64 {
        (0..self.l.n).map(|i| 2.0 * self.l.data[self.l.at(i, i)].re().ln()).sum()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (n, bw) = (self.l.n, self.l.bw);
        let d = &self.l.data;
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            let ri = i * w + bw - i;
            for k in i.saturating_sub(bw)..i {
                s -= d[ri + k] * y[k];
            }
            y[i] = s.scale(1.0 / d[ri + i].re());
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= d[k * w + bw - k + i].conj() * y[k];
            }
            y[i] = s.scale(1.0 / d[i * w + bw].re());
        }
        y
    }
}

/// Jacobi-preconditioned conjugate gradients for a Hermitian positive
/// definite operator given as a closure.
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    diag: &[f64],
    b: &[T],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(diag).map(|(&ri, &d)| ri.scale(1.0 / d)).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).fold(T::zero(), |s, (&u, &v)| s + u.conj() * v) };
    let max_abs = |a: &[T]| a.iter().fold(0.0f64, |m, v| m.max(v.norm_sqr().sqrt()));
    let mut rz = dot(&r, &z);
    let mut res = max_abs(&r);
    for it in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = max_abs(&r);
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i].scale(1.0 / diag[i]);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            break;
        }
    }
    Err(Error::NoConvergence { residual: res, iterations: max_iter })
}

/// Determinant of a small dense complex matrix (row-major) by partial
/// pivoting LU.
pub fn det_dense(n: usize, a: &[Complex64]) -> Complex64 {
    let mut m = a.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i * n + c].norm().total_cmp(&m[j * n + c].norm()))
            .unwrap_or(c);
        if m[p * n + c].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != c {
            for k in 0..n {
                m.swap(p * n + k, c * n + k);
            }
            det = -det;
        }
        let piv = m[c * n + c];
        det *= piv;
        for i in c + 1..n {
            let f = m[i * n + c] / piv;
            if f.norm() != 0.0 {
                for k in c..n {
                    let t = m[c * n + k];
                    m[i * n + k] -= f * t;
                }
            }
        }
    }
    det
}

/// Exact determinant of an integer matrix (fraction-free Bareiss).
pub fn det_integer(n: usize, a: &[i64]) -> Result<i128> {
    if n == 0 {
        return Ok(1);
    }
    let mut m: Vec<i128> = a.iter().map(|&x| i128::from(x)).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k * n + k] == 0 {
            match (k + 1..n).find(|&i| m[i * n + k] != 0) {
                Some(p) => {
                    for c in 0..n {
                        m.swap(p * n + c, k * n + c);
                    }
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[i * n + j]
                    .checked_mul(m[k * n + k])
                    .and_then(|x| x.checked_sub(m[i * n + k].checked_mul(m[k * n + j])?))
                    .ok_or_else(|| Error::TooLarge("integer determinant overflow".into()))?;
                m[i * n + j] = v / prev;
            }
        }
        prev = m[k * n + k];
    }
    Ok(sign * m[n * n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_det_real(n: usize, a: &[f64]) -> f64 {
        det_dense(n, &a.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>()).re
    }

    #[test]
    fn banded_matches_dense() {
        // tridiagonal-plus Hermitian matrix with bandwidth 2
        let n = 7;
        let mut b = BandedHermitian::<Complex64>::zeros(n, 2);
        let mut dense = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            b.set(i, i, Complex64::new(4.0 + i as f64 * 0.1, 0.0));
            dense[i * n + i] = Complex64::new(4.0 + i as f64 * 0.1, 0.0);
            for d in 1..=2usize {
                if i + d < n {
                    let v = Complex64::from_polar(-1.0 / d as f64, 0.3 * (i + d) as f64);
                    b.set(i + d, i, v);
                    dense[(i + d) * n + i] = v;
                    dense[i * n + i + d] = v.conj();
                }
            }
        }
        let f = b.clone().cholesky().unwrap();
        let det = det_dense(n, &dense);
        assert!(det.im.abs() < 1e-10);
        assert!((f.log_det() - det.re.ln()).abs() < 1e-12);
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = f.solve(&rhs);
        let back = b.matvec(&x);
        for i in 0..n {
            assert!((back[i] - rhs[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn cg_solves_laplacian() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = 2.5 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        };
        let b = vec![1.0; n];
        let x = conjugate_gradient(apply, &vec![2.5; n], &b, 1e-12, 1000).unwrap();
        let mut y = vec![0.0; n];
        apply(&x, &mut y);
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-11));
    }

    #[test]
    fn integer_det() {
        let a = [2, -1, 0, -1, 2, -1, 0, -1, 2];
        assert_eq!(det_integer(3, &a).unwrap(), 4);
        assert_eq!(det_integer(2, &[0, 1, 1, 0]).unwrap(), -1);
        let f = [3.0, 1.0, 2.0, 1.0, 5.0, 1.0, 2.0, 1.0, 4.0];
        assert!((dense_det_real(3, &f) - 37.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let mut b = BandedHermitian::<f64>::zeros(2, 1);
        b.set(0, 0, 1.0);
        b.set(1, 1, 1.0);
        b.set(1, 0, 2.0);
        assert!(matches!(b.cholesky(), Err(Error::NotPositiveDefinite { .. })));
    }
}
