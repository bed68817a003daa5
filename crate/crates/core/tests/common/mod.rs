//! Independent reference implementations used as test oracles: brute-force
//! dense co-occurrence counts and a one-sided Jacobi SVD.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use langscale::covstats::BoundaryMode;
use langscale::tokenizer::TokenStream;

/// Row-major dense `V×V` counts of `(x_i, x_{i+lag})`, walking each document
/// separately (or the EOS-free concatenation under `Cross`).
pub fn dense_counts(stream: &TokenStream, lag: usize, mode: BoundaryMode) -> Vec<u64> {
    let v = stream.vocab_size() as usize;
    let eos = stream.eos();
    let mut table = vec![0u64; v * v];
    let segments: Vec<Vec<u32>> = match mode {
        BoundaryMode::Wall => stream
            .ids()
            .split(|&t| t == eos)
            .map(|d| d.to_vec())
            .collect(),
        BoundaryMode::Cross => vec![stream.ids().iter().copied().filter(|&t| t != eos).collect()],
    };
    for seg in &segments {
        for i in 0..seg.len().saturating_sub(lag) {
            table[seg[i] as usize * v + seg[i + lag] as usize] += 1;
        }
    }
    table
}

/// `C = J/N − p qᵀ` as a dense row-major matrix; `None` when no pairs exist.
pub fn dense_covariance(table: &[u64], v: usize) -> Option<Vec<Vec<f64>>> {
    let total: u64 = table.iter().sum();
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let mut p = vec![0.0; v];
    let mut q = vec![0.0; v];
    for a in 0..v {
        for b in 0..v {
            let c = table[a * v + b] as f64;
            p[a] += c;
            q[b] += c;
        }
    }
    Some(
        (0..v)
            .map(|a| (0..v).map(|b| table[a * v + b] as f64 / n - (p[a] / n) * (q[b] / n)).collect())
            .collect(),
    )
}

pub fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Singular values in descending order by one-sided (Hestenes) Jacobi
/// rotations on the columns of `m`.
pub fn jacobi_singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    // work on columns
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for j in 0..cols {
            for k in j + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    alpha += a[j][i] * a[j][i];
                    beta += a[k][i] * a[k][i];
                    gamma += a[j][i] * a[k][i];
                }
                if gamma == 0.0 {
                    continue;
                }
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / scale);
                if gamma.abs() <= 1e-15 * scale {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let x = a[j][i];
                    let y = a[k][i];
                    a[j][i] = c * x - s * y;
                    a[k][i] = s * x + c * y;
                }
            }
        }
        if off <= 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn jacobi_norm(m: &[Vec<f64>]) -> f64 {
    jacobi_singular_values(m).first().copied().unwrap_or(0.0)
}

/// A random stream: vocabulary of `content + 1` (EOS last), random documents
/// mixing iid draws with short- and long-range copies.
pub fn random_corpus(seed: u64, content: usize, len: usize) -> TokenStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eos = content as u32;
    let copy_prob: f64 = rng.random_range(0.0..0.8);
    let mut ids = Vec::with_capacity(len);
    let mut doc_start = 0;
    while ids.len() < len {
        if ids.len() > doc_start && rng.random_bool(0.002) {
            ids.push(eos);
            doc_start = ids.len();
            continue;
        }
        let pos = ids.len() - doc_start;
        let tok = if pos > 0 && rng.random_bool(copy_prob) {
            let back = 1 + (rng.random_range(0.0f64..1.0).powf(3.0) * pos.min(200) as f64) as usize;
            ids[ids.len() - back.min(pos)]
        } else {
            // skewed base law
            let u: f64 = rng.random_range(0.0..1.0);
            ((u * u) * content as f64) as u32 % content as u32
        };
        ids.push(tok);
    }
    TokenStream::new(ids, content as u32 + 1).expect("ids in range")
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Dense row-major table from sparse counts.
pub fn dense_counts_from(c: &langscale::covstats::CooccurrenceCounts, v: usize) -> Vec<u64> {
    let mut t = vec![0u64; v * v];
    for &(a, b, k) in &c.pairs {
        t[a as usize * v + b as usize] = k;
    }
    t
}

/// `T = λ I + (1 − λ) 1 πᵀ`: stationary law `π`, every nontrivial eigenvalue
/// equal to `λ`, so `C(n) = λⁿ diag(π)(I − 1 πᵀ)`.
pub fn lambda_chain(pi: &[f64], lambda: f64) -> Vec<Vec<f64>> {
    (0..pi.len())
        .map(|i| {
            (0..pi.len())
                .map(|j| (1.0 - lambda) * pi[j] + if i == j { lambda } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Frobenius distance between the empirical covariance of `counts` and an
/// exact `V×V` matrix; the empirical side may carry one extra (EOS) symbol.
pub fn covariance_error(counts: &langscale::covstats::CooccurrenceCounts, exact: &[Vec<f64>]) -> f64 {
    let v = counts.left.len();
    let emp = dense_covariance(&dense_counts_from(counts, v), v).expect("pairs present");
    let mut s = 0.0;
    for (a, row) in exact.iter().enumerate() {
        for (b, x) in row.iter().enumerate() {
            s += (emp[a][b] - x) * (emp[a][b] - x);
        }
    }
    s.sqrt()
}
