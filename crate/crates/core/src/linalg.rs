//! Matrix-free operators, a small row-major dense matrix, and power iteration
//! for the largest singular value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A linear map known only through products with vectors.
pub trait LinearOperator<T: Scalar> {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`, with `x.len() == cols()` and `out.len() == rows()`.
    fn apply(&self, x: &[T], out: &mut [T]);
    /// `out = Aᵀ x`, with `x.len() == rows()` and `out.len() == cols()`.
    fn apply_transpose(&self, x: &[T], out: &mut [T]);
}

impl<T: Scalar, A: LinearOperator<T> + ?Sized> LinearOperator<T> for &A {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        (**self).apply(x, out)
    }
    fn apply_transpose(&self, x: &[T], out: &mut [T]) {
        (**self).apply_transpose(x, out)
    }
}

/// `A - B` for two operators of equal shape, evaluated lazily.
pub struct Difference<A, B> {
    pub lhs: A,
    pub rhs: B,
}

impl<T: Scalar, A: LinearOperator<T>, B: LinearOperator<T>> LinearOperator<T> for Difference<A, B> {
    fn rows(&self) -> usize {
        self.lhs.rows()
    }
    fn cols(&self) -> usize {
        self.lhs.cols()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        let mut tmp = vec![T::zero(); out.len()];
        self.lhs.apply(x, out);
        self.rhs.apply(x, &mut tmp);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o = *o - t;
        }
    }
    fn apply_transpose(&self, x: &[T], out: &mut [T]) {
        let mut tmp = vec![T::zero(); out.len()];
        self.lhs.apply_transpose(x, out);
        self.rhs.apply_transpose(x, &mut tmp);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o = *o - t;
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
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

    /// Builds from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
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

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> LinearOperator<T> for DenseMatrix<T> {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }
    fn apply_transpose(&self, x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
    }
}

/// Stopping rule and start vector for [`top_singular_value`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterConfig {
    /// Relative tolerance on the Rayleigh quotient of `AᵀA`.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            seed: 0x5eed,
        }
    }
}

/// Result of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate<T> {
    /// Largest singular value estimate `‖A v‖` for the final unit vector `v`.
    pub value: T,
    pub iters: usize,
    /// Eigen-residual `‖AᵀA v − σ² v‖ / σ²` at the final iterate.
    pub residual: T,
    pub converged: bool,
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Largest singular value of `op` by power iteration on `AᵀA`.
///
/// Each step costs one product with `A` and one with `Aᵀ`. Iteration stops once
/// the relative change of the Rayleigh quotient and its geometric extrapolation
/// of the remaining error both fall below `cfg.tol`; otherwise the estimate is
/// returned with `converged == false` after `cfg.max_iters` steps.
pub fn top_singular_value<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    cfg: &PowerIterConfig,
) -> SpectralEstimate<T> {
    let (m, n) = (op.rows(), op.cols());
    if m == 0 || n == 0 {
        return SpectralEstimate {
            value: T::zero(),
            iters: 0,
            residual: T::zero(),
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    let vn = norm(&v);
    v.iter_mut().for_each(|x| *x = *x / vn);

    let tol = T::lit(cfg.tol);
    let mut w = vec![T::zero(); m];
    let mut u = vec![T::zero(); n];
    let mut prev_rq: Option<T> = None;
    let mut prev_change: Option<T> = None;
    let mut residual = T::zero();
    let mut rq = T::zero();

    for iter in 1..=cfg.max_iters.max(1) {
        op.apply(&v, &mut w);
        rq = w.iter().map(|&x| x * x).sum();
        if rq == T::zero() {
            return SpectralEstimate {
                value: T::zero(),
                iters: iter,
                residual: T::zero(),
                converged: true,
            };
        }
        op.apply_transpose(&w, &mut u);
        residual = u
            .iter()
            .zip(&v)
            .map(|(&a, &b)| {
                let d = a - rq * b;
                d * d
            })
            .sum::<T>()
            .sqrt()
            / rq;

        let mut done = false;
        if let Some(p) = prev_rq {
            let change = (rq - p).abs() / rq;
            if change < tol {
                // Geometric tail of the remaining error, from the contraction of
                // successive changes.
                let tail = match prev_change {
                    Some(pc) if pc > T::zero() && change < pc => {
                        let ratio = change / pc;
                        change * ratio / (T::one() - ratio)
                    }
                    _ => change,
                };
                done = tail < tol || change == T::zero();
            }
            prev_change = Some(change);
        }
        prev_rq = Some(rq);

        let un = norm(&u);
        if un == T::zero() {
            break;
        }
        if done {
            return SpectralEstimate {
                value: rq.sqrt(),
                iters: iter,
                residual,
                converged: true,
            };
        }
        for (vi, &ui) in v.iter_mut().zip(&u) {
            *vi = ui / un;
        }
    }
    SpectralEstimate {
        value: rq.sqrt(),
        iters: cfg.max_iters,
        residual,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectrum() {
        let m = DenseMatrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ]);
        let est = top_singular_value(&m, &PowerIterConfig::default());
        assert!(est.converged);
        assert!((est.value - 3.0_f64).abs() < 1e-8 * 3.0);
    }

    #[test]
    fn zero_operator_is_exactly_zero() {
        let m = DenseMatrix::<f64>::zeros(4, 6);
        let est = top_singular_value(&m, &PowerIterConfig::default());
        assert_eq!(est.value, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn rectangular_rank_one() {
        // u vᵀ with ‖u‖ = 5, ‖v‖ = 1.
        let u = [3.0, 4.0];
        let v = [0.6, 0.0, 0.8];
        let m = DenseMatrix::from_fn(2, 3, |i, j| u[i] * v[j]);
        let est = top_singular_value(&m, &PowerIterConfig::default());
        assert!((est.value - 5.0_f64).abs() < 1e-10);
    }

    #[test]
    fn f32_instantiation() {
        let m = DenseMatrix::from_rows(&[vec![2.0_f32, 0.0], vec![0.0, -7.0]]);
        let est = top_singular_value(&m, &PowerIterConfig { tol: 1e-6, ..Default::default() });
        assert!((est.value - 7.0).abs() < 1e-4);
    }

    #[test]
    fn difference_operator() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        let d = Difference { lhs: &a, rhs: &b };
        let est = top_singular_value(&d, &PowerIterConfig::default());
        assert!((est.value - 2.0_f64).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.999]]);
        let est = top_singular_value(&m, &PowerIterConfig { tol: 1e-14, max_iters: 3, seed: 1 });
        assert!(!est.converged);
        assert_eq!(est.iters, 3);
    }
}
