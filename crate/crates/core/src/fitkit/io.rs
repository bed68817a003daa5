use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{AsymptoteFit, BrokenPowerLawFit, FitError, PowerLawFit};
use crate::covstats::LagCovarianceSummary;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints<T> {
    pub points: Vec<(T, T)>,
    /// Present when every row carries a third column.
    pub weights: Option<Vec<T>>,
}

/// Reads `x,y[,weight]` rows. A first line that does not parse as numbers is
/// taken as a header; blank lines and `#` comments are ignored.
pub fn read_points_csv<T: Scalar, R: BufRead>(r: R) -> Result<WeightedPoints<T>, FitError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut seen_data = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if !seen_data && i == 0 => continue,
            Err(e) => {
                return Err(FitError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        seen_data = true;
        match values.len() {
            2 | 3 => {
                points.push((T::lit(values[0]), T::lit(values[1])));
                if let Some(&w) = values.get(2) {
                    weights.push(T::lit(w));
                }
            }
            k => {
                return Err(FitError::Parse {
                    line: i + 1,
                    message: format!("expected 2 or 3 columns, found {k}"),
                })
            }
        }
    }
    let weights = match weights.len() {
        0 => None,
        k if k == points.len() => Some(weights),
        _ => {
            return Err(FitError::Parse {
                line: 0,
                message: "weight column present on some rows only".into(),
            })
        }
    };
    Ok(WeightedPoints { points, weights })
}

/// Which norm column of a covariance summary to fit against the lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsonlColumn {
    #[default]
    OpNorm,
    FrobNorm,
}

/// `(lag, norm)` pairs from covariance summary lines.
pub fn read_points_jsonl<T: Scalar + for<'de> Deserialize<'de>, R: BufRead>(
    r: R,
    column: JsonlColumn,
) -> Result<Vec<(T, T)>, FitError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LagCovarianceSummary<T> = serde_json::from_str(&line).map_err(|e| FitError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let y = match column {
            JsonlColumn::OpNorm => s.op_norm,
            JsonlColumn::FrobNorm => s.frob_norm,
        };
        out.push((T::from_usize_lossy(s.lag), y));
    }
    Ok(out)
}

/// Uniform JSON report for every fitted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub form: String,
    pub params: BTreeMap<String, f64>,
    pub r2: f64,
    pub range: [f64; 2],
    pub masked_points: Vec<[f64; 2]>,
}

impl FitReport {
    fn new(form: &str, params: &[(&str, f64)], r2: f64, range: [f64; 2]) -> Self {
        Self {
            form: form.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            r2,
            range,
            masked_points: Vec::new(),
        }
    }

    pub fn with_masked<T: Scalar>(mut self, masked: &[(T, T)]) -> Self {
        self.masked_points = masked.iter().map(|p| [p.0.to_f64_lossy(), p.1.to_f64_lossy()]).collect();
        self
    }
}

impl<T: Scalar> From<&PowerLawFit<T>> for FitReport {
    fn from(f: &PowerLawFit<T>) -> Self {
        Self::new(
            "powerlaw",
            &[
                ("exponent", f.exponent.to_f64_lossy()),
                ("log_prefactor", f.log_prefactor.to_f64_lossy()),
                ("num_points", f.num_points as f64),
            ],
            f.r2.to_f64_lossy(),
            [f.fit_range.lo.to_f64_lossy(), f.fit_range.hi.to_f64_lossy()],
        )
    }
}

impl<T: Scalar> From<&AsymptoteFit<T>> for FitReport {
    fn from(f: &AsymptoteFit<T>) -> Self {
        Self::new(
            "asymptote",
            &[
                ("asymptote", f.asymptote.to_f64_lossy()),
                ("delta", f.delta.to_f64_lossy()),
                ("log_prefactor", f.log_prefactor.to_f64_lossy()),
                ("grid_step", f.grid_step.to_f64_lossy()),
                ("num_points", f.num_points as f64),
            ],
            f.r2.to_f64_lossy(),
            [f.fit_range.lo.to_f64_lossy(), f.fit_range.hi.to_f64_lossy()],
        )
    }
}

impl<T: Scalar> From<&BrokenPowerLawFit<T>> for FitReport {
    fn from(f: &BrokenPowerLawFit<T>) -> Self {
        Self::new(
            "broken",
            &[
                ("breakpoint", f.breakpoint.to_f64_lossy()),
                ("exponent_left", f.exponent_left.to_f64_lossy()),
                ("exponent_right", f.exponent_right.to_f64_lossy()),
                ("log_prefactor_left", f.log_prefactor_left.to_f64_lossy()),
                ("log_prefactor_right", f.log_prefactor_right.to_f64_lossy()),
            ],
            f.r2_total.to_f64_lossy(),
            [f.fit_range.lo.to_f64_lossy(), f.fit_range.hi.to_f64_lossy()],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header_and_weights() {
        let text = "x,y,weight\n1,2,1\n2,1,0.5\n";
        let wp: WeightedPoints<f64> = read_points_csv(text.as_bytes()).unwrap();
        assert_eq!(wp.points, vec![(1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(wp.weights, Some(vec![1.0, 0.5]));
    }

    #[test]
    fn csv_rejects_garbage() {
        let text = "1,2\nfoo,3\n";
        assert!(matches!(
            read_points_csv::<f64, _>(text.as_bytes()),
            Err(FitError::Parse { line: 2, .. })
        ));
        assert!(read_points_csv::<f64, _>("1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn jsonl_columns() {
        let text = "{\"lag\":3,\"op_norm\":0.5,\"frob_norm\":0.7,\"num_pairs\":10,\"iters\":4,\"residual\":0.0}\n";
        let op: Vec<(f64, f64)> = read_points_jsonl(text.as_bytes(), JsonlColumn::OpNorm).unwrap();
        let fr: Vec<(f64, f64)> = read_points_jsonl(text.as_bytes(), JsonlColumn::FrobNorm).unwrap();
        assert_eq!(op, vec![(3.0, 0.5)]);
        assert_eq!(fr, vec![(3.0, 0.7)]);
    }
}
