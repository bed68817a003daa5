use super::SynthError;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Rejects chains that are reducible or periodic, the two ways a finite chain
/// can fail to have a unique limiting law.
pub fn check_ergodic(transition: &[Vec<f64>]) -> Result<(), SynthError> {
    let v = transition.len();
    if v == 0 {
        return Err(SynthError::NotErgodic("empty state space".into()));
    }
    let succ: Vec<Vec<usize>> = transition
        .iter()
        .map(|row| (0..v).filter(|&j| row[j] > 0.0).collect())
        .collect();
    let mut pred = vec![Vec::new(); v];
    for (i, s) in succ.iter().enumerate() {
        for &j in s {
            pred[j].push(i);
        }
    }
    let reach = |adj: &[Vec<usize>]| -> Vec<Option<usize>> {
        let mut level = vec![None; v];
        level[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if level[w].is_none() {
                    level[w] = Some(level[u].expect("visited") + 1);
                    queue.push_back(w);
                }
            }
        }
        level
    };
    let fwd = reach(&succ);
    if let Some(s) = fwd.iter().position(Option::is_none) {
        return Err(SynthError::NotErgodic(format!("state {s} is unreachable from state 0")));
    }
    if let Some(s) = reach(&pred).iter().position(Option::is_none) {
        return Err(SynthError::NotErgodic(format!("state 0 is unreachable from state {s}")));
    }
    // The period is the gcd of level[u] + 1 − level[w] over all edges u → w.
    let mut g = 0usize;
    for (u, s) in succ.iter().enumerate() {
        for &w in s {
            let (lu, lw) = (fwd[u].expect("reached"), fwd[w].expect("reached"));
            g = gcd(g, (lu + 1).abs_diff(lw));
        }
    }
    if g != 1 {
        return Err(SynthError::NotErgodic(format!("chain is periodic with period {g}")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary law `π = π T` by Gaussian elimination on `(Tᵀ − I) π = 0`
/// with one equation replaced by `Σ π = 1`.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>, SynthError> {
    check_ergodic(transition)?;
    let v = transition.len();
    let mut a: Vec<Vec<f64>> = (0..v)
        .map(|i| {
            let mut row: Vec<f64> = (0..v).map(|j| transition[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[v - 1] = vec![1.0; v + 1];
    for col in 0..v {
        let pivot = (col..v)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(SynthError::NotErgodic("singular stationary system".into()));
        }
        a.swap(col, pivot);
        for r in 0..v {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=v {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..v).map(|i| (a[i][v] / a[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

/// Exact `C(n) = D (Tⁿ − 1 πᵀ)` with `D = diag(π)`, one matrix per lag in
/// the order given.
pub fn analytic_covariance<T: Scalar>(transition: &[Vec<f64>], lags: &[usize]) -> Result<Vec<DenseMatrix<T>>, SynthError> {
    let pi = stationary_distribution(transition)?;
    let v = pi.len();
    let t = DenseMatrix::from_rows(transition);
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let mut powers: Vec<Option<DenseMatrix<f64>>> = vec![None; max_lag + 1];
    let mut cur = DenseMatrix::<f64>::identity(v);
    for n in 1..=max_lag {
        cur = cur.matmul(&t);
        if lags.contains(&n) {
            powers[n] = Some(cur.clone());
        }
    }
    let identity = DenseMatrix::<f64>::identity(v);
    Ok(lags
        .iter()
        .map(|&n| {
            let tn = if n == 0 { &identity } else { powers[n].as_ref().expect("computed") };
            DenseMatrix::from_fn(v, v, |i, j| T::lit(pi[i] * (tn[(i, j)] - pi[j])))
        })
        .collect())
}
