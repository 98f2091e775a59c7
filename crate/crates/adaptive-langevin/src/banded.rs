//! Banded LU factorization with partial pivoting, for real or complex
//! matrices with `kl` sub- and `ku` super-diagonals.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use sprs::CsMat;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandedError {
    #[error("matrix is singular to working precision (zero pivot at row {row})")]
    Singular { row: usize },
    #[error("entry ({row}, {col}) lies outside the declared band (kl = {kl}, ku = {ku})")]
    OutsideBand { row: usize, col: usize, kl: usize, ku: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// `L U` factors of a banded matrix, rows stored with `2kl + ku + 1` slots.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<T>,
    mult: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Factor `M + shift·I`.
    pub fn factor(m: &CsMat<f64>, kl: usize, ku: usize, shift: T) -> Result<Self, BandedError> {
        let n = m.rows();
        if m.cols() != n {
            return Err(BandedError::NotSquare { rows: n, cols: m.cols() });
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            a: vec![T::default(); n * width],
            mult: vec![T::default(); n * kl],
            piv: vec![0; n],
        };
        for (i, row) in m.outer_iterator().enumerate() {
            for (j, &x) in row.iter() {
                if j + kl < i || j > i + ku {
                    return Err(BandedError::OutsideBand { row: i, col: j, kl, ku });
                }
                let k = lu.idx(i, j);
                lu.a[k] = lu.a[k] + T::from_real(x);
            }
        }
        for i in 0..n {
            let k = lu.idx(i, i);
            lu.a[k] = lu.a[k] + shift;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    fn eliminate(&mut self) -> Result<(), BandedError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.a[self.idx(k, k)].modulus();
            for i in k + 1..=last_row {
                let v = self.a[self.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(BandedError::Singular { row: k });
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (x, y) = (self.idx(k, j), self.idx(p, j));
                    self.a.swap(x, y);
                }
            }
            let pivot = self.a[self.idx(k, k)];
            let len = last_col - k;
            let krow = self.idx(k, k + 1);
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let m = self.a[ik] / pivot;
                self.mult[k * kl + (i - k - 1)] = m;
                self.a[ik] = T::default();
                if m == T::default() {
                    continue;
                }
                // row i is stored after row k, so the two slices never overlap
                let irow = self.idx(i, k + 1);
                let (head, tail) = self.a.split_at_mut(irow);
                let (src_row, dst_row) = (&head[krow..krow + len], &mut tail[..len]);
                for (dst, &src) in dst_row.iter_mut().zip(src_row) {
                    *dst = *dst - m * src;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `max |u_ii| / min |u_ii|`, a cheap lower estimate of the condition number.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.a[self.idx(i, i)].modulus()).collect();
        let mx = d.iter().cloned().fold(0.0, f64::max);
        let mn = d.iter().cloned().fold(f64::INFINITY, f64::min);
        mx / mn
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] = b[i] - self.mult[k * kl + (i - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            let last = (i + kl + ku).min(n - 1);
            let base = self.idx(i, i);
            for (off, j) in (i + 1..=last).enumerate() {
                s = s - self.a[base + 1 + off] * b[j];
            }
            b[i] = s / self.a[base];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve `Aᴴ x = b` (plain transpose for real matrices).
    pub fn solve_adjoint(&self, b: &[T]) -> Vec<T> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            let first = i.saturating_sub(kl + ku);
            for j in first..i {
                s = s - self.a[self.idx(j, i)].conj() * z[j];
            }
            z[i] = s / self.a[self.idx(i, i)].conj();
        }
        for k in (0..n).rev() {
            let mut acc = z[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                acc = acc - self.mult[k * kl + (i - k - 1)].conj() * z[i];
            }
            z[k] = acc;
            let p = self.piv[k];
            if p != k {
                z.swap(k, p);
            }
        }
        z
    }
}

/// Lower and upper bandwidth of a sparse matrix.
pub fn bandwidths(m: &CsMat<f64>) -> (usize, usize) {
    let (mut kl, mut ku) = (0, 0);
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, _) in row.iter() {
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    (kl, ku)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sprs::TriMat;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> CsMat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = TriMat::new((n, n));
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                t.add_triplet(i, j, rng.random_range(-1.0..1.0));
            }
        }
        t.to_csr()
    }

    fn dense(m: &CsMat<f64>) -> DMatrix<f64> {
        crate::operator::csr_to_dense(m)
    }

    #[test]
    fn matches_dense_lu() {
        for (n, kl, ku, seed) in [(40, 3, 2, 1), (25, 0, 4, 2), (30, 5, 0, 3), (7, 6, 6, 4)] {
            let m = random_band(n, kl, ku, seed);
            let lu = BandedLu::factor(&m, kl, ku, 0.3).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = lu.solve(&b);
            let shifted = dense(&m) + DMatrix::identity(n, n) * 0.3;
            let oracle = shifted.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let err = (DVector::from_vec(x) - &oracle).norm() / oracle.norm();
            assert!(err < 1e-10, "{err}");
            let xt = lu.solve_adjoint(&b);
            let oracle_t = shifted.transpose().lu().solve(&DVector::from_vec(b)).unwrap();
            let err = (DVector::from_vec(xt) - &oracle_t).norm() / oracle_t.norm();
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn complex_shift_and_adjoint() {
        let n = 30;
        let m = random_band(n, 2, 3, 9);
        let z = Complex64::new(-0.2, 0.7);
        let lu = BandedLu::factor(&m, 2, 3, -z).unwrap();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let x = lu.solve(&b);
        let d = dense(&m).map(|v| Complex64::new(v, 0.0)) - DMatrix::identity(n, n) * z;
        let r = &d * DVector::from_vec(x) - DVector::from_vec(b.clone());
        assert!(r.norm() < 1e-10);
        let y = lu.solve_adjoint(&b);
        let r = d.adjoint() * DVector::from_vec(y) - DVector::from_vec(b);
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn detects_singular_and_band_violations() {
        let mut t = TriMat::new((3, 3));
        t.add_triplet(0, 0, 1.0);
        t.add_triplet(1, 1, 0.0);
        let m: CsMat<f64> = t.to_csr();
        assert!(matches!(BandedLu::<f64>::factor(&m, 1, 1, 0.0), Err(BandedError::Singular { .. })));
        let mut t = TriMat::new((3, 3));
        t.add_triplet(0, 2, 1.0);
        let m: CsMat<f64> = t.to_csr();
        assert!(matches!(BandedLu::<f64>::factor(&m, 1, 1, 1.0), Err(BandedError::OutsideBand { .. })));
        assert_eq!(bandwidths(&m), (0, 2));
    }

    proptest! {
        #[test]
        fn residual_is_small(n in 2usize..40, kl in 0usize..5, ku in 0usize..5, seed in 0u64..1000) {
            let m = random_band(n, kl, ku, seed);
            let lu = BandedLu::factor(&m, kl, ku, 5.0).unwrap();
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let x = lu.solve(&b);
            let mx = crate::operator::matvec(&m, &x);
            let r: f64 = mx.iter().zip(&x).zip(&b).map(|((a, xi), bi)| (a + 5.0 * xi - bi).powi(2)).sum();
            prop_assert!(r.sqrt() < 1e-9 * (1.0 + crate::operator::norm(&b)));
        }
    }
}
