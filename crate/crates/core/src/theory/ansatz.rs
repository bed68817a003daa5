use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nonnegative, positive, LanguageExponents, LossCurveSet, LossRecord, TheoryError};
use crate::scalar::Scalar;

/// How quickly the entropy drop of lag `n` is captured once `P` passes `P*_n`.
/// Every shape is nondecreasing with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionShape {
    /// Nothing is ever learned.
    Zero,
    /// Everything is learned instantly.
    One,
    /// `0` for `x ≤ 1`, `1 − x^−δ` above.
    #[default]
    Hard,
    /// `1 − (1 + x)^−δ`.
    Smooth,
}

impl TransitionShape {
    pub fn eval<T: Scalar>(self, x: T, delta: T) -> T {
        match self {
            Self::Zero => T::zero(),
            Self::One => T::one(),
            Self::Hard if x <= T::one() => T::zero(),
            Self::Hard => T::one() - x.powf(-delta),
            Self::Smooth => T::one() - (T::one() + x).powf(-delta),
        }
    }
}

/// A single `δ` or one value per horizon `n = 1..=max_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec<T> {
    Scalar(T),
    Table(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec<T> {
    pub exponents: LanguageExponents<T>,
    /// `A` in `H_n = H_∞ + A n^−γ`.
    pub amplitude: T,
    pub delta: DeltaSpec<T>,
    #[serde(default)]
    pub shape: TransitionShape,
    /// Largest horizon; also the context length of the emitted curves.
    pub max_n: usize,
    pub p_grid: Vec<T>,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default = "default_arch")]
    pub arch: String,
}

fn default_dataset() -> String {
    "ansatz".into()
}

fn default_arch() -> String {
    "theory".into()
}

impl<T: Scalar> AnsatzSpec<T> {
    pub fn validate(&self) -> Result<(), TheoryError> {
        self.exponents.validate()?;
        nonnegative("amplitude", self.amplitude)?;
        if self.max_n == 0 {
            return Err(TheoryError::InvalidSpec("max_n must be at least 1".into()));
        }
        if self.p_grid.is_empty() {
            return Err(TheoryError::InvalidSpec("P grid is empty".into()));
        }
        for &p in &self.p_grid {
            positive("P", p)?;
        }
        match &self.delta {
            DeltaSpec::Scalar(d) => {
                positive("delta", *d)?;
            }
            DeltaSpec::Table(t) => {
                if t.len() != self.max_n {
                    return Err(TheoryError::InvalidSpec(format!(
                        "delta table has {} entries, expected max_n = {}",
                        t.len(),
                        self.max_n
                    )));
                }
                for &d in t {
                    positive("delta", d)?;
                }
            }
        }
        if self.exponents.h_0 < self.entropy(1) {
            return Err(TheoryError::InvalidSpec(format!(
                "h_0 = {} is below H_1 = {}",
                self.exponents.h_0,
                self.entropy(1)
            )));
        }
        Ok(())
    }

    /// `H_0` for `n = 0`, else `H_∞ + A n^−γ`.
    pub fn entropy(&self, n: usize) -> T {
        if n == 0 {
            self.exponents.h_0
        } else {
            self.exponents.h_inf + self.amplitude * T::from_usize_lossy(n).powf(-self.exponents.gamma)
        }
    }

    /// `H_0, H_1, …, H_max_n`.
    pub fn entropies(&self) -> Vec<T> {
        (0..=self.max_n).map(|n| self.entropy(n)).collect()
    }

    pub fn delta_at(&self, n: usize) -> T {
        match &self.delta {
            DeltaSpec::Scalar(d) => *d,
            DeltaSpec::Table(t) => t[n - 1],
        }
    }

    /// The smallest `δ_n`, which governs the regime.
    pub fn min_delta(&self) -> T {
        match &self.delta {
            DeltaSpec::Scalar(d) => *d,
            DeltaSpec::Table(t) => t.iter().copied().fold(T::infinity(), T::min),
        }
    }

    pub fn threshold(&self, n: usize) -> T {
        let e = &self.exponents;
        e.c * e.c * T::from_usize_lossy(n).powf(T::lit(2.0) * e.beta)
    }
}

/// Evaluates `L_n(P) = H_0 + Σ_{n'=1..n} (H_n' − H_{n'−1}) f(P / P*_n')` as an
/// exact finite sum for every `P` in the grid and every `n = 1..=max_n`.
///
/// Records are ordered by grid position, then `n`; the context length is
/// `max_n`. The two constant shapes are evaluated in closed form, so
/// `f ≡ 1` yields `L_n = H_n` and `f ≡ 0` yields `L_n = H_0` bit-for-bit.
pub fn synthesize_curves<T: Scalar>(spec: &AnsatzSpec<T>) -> Result<LossCurveSet<T>, TheoryError> {
    spec.validate()?;
    let h = spec.entropies();
    let thresholds: Vec<T> = (1..=spec.max_n).map(|n| spec.threshold(n)).collect();
    let deltas: Vec<T> = (1..=spec.max_n).map(|n| spec.delta_at(n)).collect();

    let per_p: Vec<Vec<LossRecord<T>>> = spec
        .p_grid
        .par_iter()
        .map(|&p| {
            let mut loss = h[0];
            (1..=spec.max_n)
                .map(|n| {
                    loss = match spec.shape {
                        TransitionShape::Zero => h[0],
                        TransitionShape::One => h[n],
                        shape => loss + (h[n] - h[n - 1]) * shape.eval(p / thresholds[n - 1], deltas[n - 1]),
                    };
                    LossRecord {
                        dataset: spec.dataset.clone(),
                        arch: spec.arch.clone(),
                        context: spec.max_n,
                        tokens: p,
                        n,
                        loss,
                    }
                })
                .collect()
        })
        .collect();
    Ok(LossCurveSet::new(per_p.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::log_space;

    pub(crate) fn spec(shape: TransitionShape) -> AnsatzSpec<f64> {
        AnsatzSpec {
            exponents: LanguageExponents {
                gamma: 0.34,
                beta: 0.88,
                h_inf: 1.5,
                h_0: 4.0,
                c: 1.0,
            },
            amplitude: 2.0,
            delta: DeltaSpec::Scalar(1.0),
            shape,
            max_n: 64,
            p_grid: log_space(1.0, 1e6, 13),
            dataset: "toy".into(),
            arch: "ansatz".into(),
        }
    }

    #[test]
    fn instant_learning_gives_entropies() {
        let s = spec(TransitionShape::One);
        let set = synthesize_curves(&s).unwrap();
        for r in &set.records {
            assert_eq!(r.loss, s.entropy(r.n));
        }
    }

    #[test]
    fn no_learning_gives_h0() {
        let set = synthesize_curves(&spec(TransitionShape::Zero)).unwrap();
        assert!(set.records.iter().all(|r| r.loss == 4.0));
    }

    #[test]
    fn shapes_are_bounded_and_monotone() {
        for shape in [TransitionShape::Hard, TransitionShape::Smooth] {
            let mut prev = 0.0;
            for x in log_space(1e-3, 1e3, 200) {
                let f = shape.eval(x, 0.7);
                assert!((0.0..=1.0).contains(&f));
                assert!(f >= prev);
                prev = f;
            }
        }
        assert_eq!(TransitionShape::Hard.eval(1.0, 0.5), 0.0);
    }

    #[test]
    fn validation() {
        let mut s = spec(TransitionShape::Hard);
        s.delta = DeltaSpec::Table(vec![1.0; 3]);
        assert!(synthesize_curves(&s).is_err());
        let mut s = spec(TransitionShape::Hard);
        s.exponents.h_0 = 1.0;
        assert!(synthesize_curves(&s).is_err());
        let mut s = spec(TransitionShape::Hard);
        s.p_grid.clear();
        assert!(synthesize_curves(&s).is_err());
    }

    #[test]
    fn delta_table_matches_scalar() {
        let a = spec(TransitionShape::Hard);
        let mut b = a.clone();
        b.delta = DeltaSpec::Table(vec![1.0; 64]);
        assert_eq!(synthesize_curves(&a).unwrap(), synthesize_curves(&b).unwrap());
        assert_eq!(b.min_delta(), 1.0);
    }

    #[test]
    fn spec_json_accepts_scalar_or_table_delta() {
        let s = spec(TransitionShape::Smooth);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"delta\":1.0"));
        let back: AnsatzSpec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
