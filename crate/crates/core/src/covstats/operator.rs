use super::{CooccurrenceCounts, CovStatsError};
use crate::linalg::{DenseMatrix, LinearOperator};
use crate::scalar::Scalar;

/// Implicit `C(n) = J / N − p qᵀ`, where `J` is the sparse joint-count matrix,
/// `N` the number of pairs, and `p`, `q` the left and right marginal
/// frequencies. Never densified.
#[derive(Debug, Clone)]
pub struct CovarianceOperator<T> {
    lag: usize,
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    // J / N
    vals: Vec<T>,
    p: Vec<T>,
    q: Vec<T>,
}

/// Builds the covariance handle for one lag. Counts stay integers until here.
pub fn covariance_from_counts<T: Scalar>(counts: &CooccurrenceCounts) -> Result<CovarianceOperator<T>, CovStatsError> {
    if counts.num_pairs == 0 {
        return Err(CovStatsError::EmptyCounts { lag: counts.lag });
    }
    let dim = counts.vocab_size;
    let n = T::from_u64(counts.num_pairs).expect("count representable");
    let mut row_ptr = vec![0usize; dim + 1];
    for &(a, _, _) in &counts.pairs {
        row_ptr[a as usize + 1] += 1;
    }
    for i in 0..dim {
        row_ptr[i + 1] += row_ptr[i];
    }
    // pairs are sorted by (row, col), so they are already in CSR order
    let col_idx = counts.pairs.iter().map(|&(_, b, _)| b).collect();
    let vals = counts
        .pairs
        .iter()
        .map(|&(_, _, c)| T::from_u64(c).expect("count representable") / n)
        .collect();
    let freq = |v: &[u64]| -> Vec<T> { v.iter().map(|&c| T::from_u64(c).expect("count") / n).collect() };
    Ok(CovarianceOperator {
        lag: counts.lag,
        dim,
        row_ptr,
        col_idx,
        vals,
        p: freq(&counts.left),
        q: freq(&counts.right),
    })
}

impl<T: Scalar> CovarianceOperator<T> {
    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn left_marginal(&self) -> &[T] {
        &self.p
    }

    pub fn right_marginal(&self) -> &[T] {
        &self.q
    }

    /// Entry `C_{μν}`.
    pub fn entry(&self, mu: usize, nu: usize) -> T {
        let row = &self.col_idx[self.row_ptr[mu]..self.row_ptr[mu + 1]];
        let j = match row.binary_search(&(nu as u32)) {
            Ok(k) => self.vals[self.row_ptr[mu] + k],
            Err(_) => T::zero(),
        };
        j - self.p[mu] * self.q[nu]
    }

    /// Materializes the matrix; intended for small vocabularies and tests.
    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j))
    }

    /// `‖C‖_F` from the sparse support plus the rank-one part outside it.
    pub fn frobenius_norm(&self) -> T {
        let q2: T = self.q.iter().map(|&x| x * x).sum();
        let mut total = T::zero();
        for mu in 0..self.dim {
            let pm = self.p[mu];
            let mut on_support = T::zero();
            let mut q2_support = T::zero();
            for k in self.row_ptr[mu]..self.row_ptr[mu + 1] {
                let qn = self.q[self.col_idx[k] as usize];
                let d = self.vals[k] - pm * qn;
                on_support = on_support + d * d;
                q2_support = q2_support + qn * qn;
            }
            // Σ_{ν ∉ support} (p_μ q_ν)²
            let off = (q2 - q2_support).max(T::zero());
            total = total + on_support + pm * pm * off;
        }
        total.sqrt()
    }
}

impl<T: Scalar> LinearOperator<T> for CovarianceOperator<T> {
    fn rows(&self) -> usize {
        self.dim
    }
    fn cols(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        let qx: T = self.q.iter().zip(x).map(|(&a, &b)| a * b).sum();
        for mu in 0..self.dim {
            let mut acc = T::zero();
            for k in self.row_ptr[mu]..self.row_ptr[mu + 1] {
                acc = acc + self.vals[k] * x[self.col_idx[k] as usize];
            }
            out[mu] = acc - self.p[mu] * qx;
        }
    }
    fn apply_transpose(&self, x: &[T], out: &mut [T]) {
        let px: T = self.p.iter().zip(x).map(|(&a, &b)| a * b).sum();
        for (o, &qn) in out.iter_mut().zip(&self.q) {
            *o = -(qn * px);
        }
        for mu in 0..self.dim {
            let xm = x[mu];
            if xm == T::zero() {
                continue;
            }
            for k in self.row_ptr[mu]..self.row_ptr[mu + 1] {
                let nu = self.col_idx[k] as usize;
                out[nu] = out[nu] + self.vals[k] * xm;
            }
        }
    }
}

/// `‖C(n)‖_F` straight from counts.
pub fn frobenius_norm<T: Scalar>(counts: &CooccurrenceCounts) -> Result<T, CovStatsError> {
    Ok(covariance_from_counts::<T>(counts)?.frobenius_norm())
}
