use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{manifest, PipelineConfig, PipelineError};
use crate::collapse::{collapse_report, exponent_scan, CollapseReport, ExponentScan};
use crate::covstats::{
    count_pairs, empirical_horizon, empty_lags, read_summaries, summarize, write_summaries, HorizonReport,
    LagCovarianceSummary,
};
use crate::fitkit::{
    apply_mask, fit_asymptote, fit_broken_power_law, fit_power_law, line_fit, outlier_mask, AsymptoteGrid,
    AsymptoteOptions, BrokenPowerLawFit, FitRange, OutlierOptions, PowerLawFit,
};
use crate::scalar::log_space;
use crate::theory::{
    calibrate_threshold_constant, classify_regime, data_threshold, decompose_loss, predict_alpha, LanguageExponents, LossCurve,
    LossCurveSet, ScalingReport, ThresholdCalibration,
};
use crate::tokenizer::TokenStream;

/// Shape of the correlation decay suggested by comparing a log-log fit of
/// `‖C(n)‖_op` against a semi-log one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayForm {
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMeasurement {
    pub beta: f64,
    pub fit: PowerLawFit<f64>,
    /// R² of `ln ‖C(n)‖_op` against `n`, over the same points.
    pub semilog_r2: f64,
    pub decay_form: DecayForm,
    /// The power-law R² is below the configured floor.
    pub low_r2: bool,
    /// `(lag, op_norm)` pairs removed by the outlier mask.
    pub masked: Vec<(f64, f64)>,
    /// Two-stage fit over the same window, when requested.
    pub broken: Option<BrokenPowerLawFit<f64>>,
    /// Requested lags with no pairs.
    pub empty_lags: Vec<usize>,
    /// Lags whose power iteration hit the iteration cap.
    pub unconverged_lags: Vec<usize>,
    pub summaries: Vec<LagCovarianceSummary<f64>>,
}

/// Counts every configured lag, takes operator norms, and fits
/// `‖C(n)‖_op ∝ n^−β`.
///
/// When the environment names a cache directory, per-lag summaries are reused
/// across runs with the same stream, lags, boundary mode and power settings.
pub fn run_measure_beta(stream: &TokenStream, cfg: &PipelineConfig) -> Result<BetaMeasurement, PipelineError> {
    let lags = cfg.covstats.lags();
    let key = manifest::cache_key(&[
        &manifest::stream_digest(stream),
        &serde_json::to_string(&(&cfg.covstats, &cfg.power.iter_config())).expect("serializes"),
    ]);
    let (summaries, empty) = match manifest::cache_path("covstats", &key, "jsonl") {
        Some(path) if path.exists() => load_cached(&path, &lags)?,
        cache => {
            let counts = count_pairs(stream, &lags, cfg.covstats.boundary)?;
            let empty = empty_lags(&counts);
            let summaries = summarize::<f64>(&counts, &cfg.power.iter_config())?;
            if let Some(path) = cache {
                store_cached(&path, &summaries);
            }
            (summaries, empty)
        }
    };
    let unconverged: Vec<usize> = summaries.iter().filter(|s| !s.converged).map(|s| s.lag).collect();
    if cfg.power.require_convergence && !unconverged.is_empty() {
        return Err(PipelineError::Numerical(format!(
            "power iteration did not converge within {} iterations at lags {unconverged:?}",
            cfg.power.max_iters
        )));
    }

    let range = cfg.beta_fit.range.map(|[lo, hi]| FitRange { lo, hi });
    let all: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.lag as f64, s.op_norm))
        .filter(|p| range.is_none_or(|r| r.contains(p.0)))
        .collect();
    if let Some(&(lag, _)) = all.iter().find(|p| !(p.1 > 0.0)) {
        return Err(PipelineError::Data(format!(
            "operator norm vanishes at lag {lag}; the corpus has no measurable correlation there"
        )));
    }
    let (points, masked) = if cfg.beta_fit.mask_outliers {
        let opts = OutlierOptions {
            window: cfg.beta_fit.outlier_window,
            z_thresh: cfg.beta_fit.outlier_z,
            ..OutlierOptions::default()
        };
        let mask = outlier_mask(&all, &opts)?;
        let masked = all.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
        (apply_mask(&all, &mask), masked)
    } else {
        (all, Vec::new())
    };
    let fit = fit_power_law(&points, range)?;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let semilog_r2 = line_fit(&xs, &ys, None)?.r2;
    let broken = if cfg.beta_fit.broken {
        Some(fit_broken_power_law(&points, None)?)
    } else {
        None
    };
    Ok(BetaMeasurement {
        beta: fit.exponent,
        semilog_r2,
        decay_form: if semilog_r2 > fit.r2 {
            DecayForm::Exponential
        } else {
            DecayForm::PowerLaw
        },
        low_r2: fit.r2 < cfg.beta_fit.low_r2,
        fit,
        masked,
        broken,
        empty_lags: empty,
        unconverged_lags: unconverged,
        summaries,
    })
}

fn load_cached(path: &Path, lags: &[usize]) -> Result<(Vec<LagCovarianceSummary<f64>>, Vec<usize>), PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let summaries = read_summaries::<f64, _>(std::io::BufReader::new(file))?;
    let present: std::collections::BTreeSet<usize> = summaries.iter().map(|s| s.lag).collect();
    let empty = lags.iter().copied().filter(|l| !present.contains(l)).collect();
    Ok((summaries, empty))
}

// A failed cache write only costs a recomputation next time.
fn store_cached(path: &Path, summaries: &[LagCovarianceSummary<f64>]) {
    let tmp = path.with_extension("tmp");
    let ok = std::fs::File::create(&tmp)
        .map_err(|e| e.into())
        .and_then(|f| write_summaries(summaries, std::io::BufWriter::new(f)))
        .is_ok();
    if ok {
        let _ = std::fs::rename(&tmp, path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMeasurement {
    pub gamma: f64,
    pub fit: PowerLawFit<f64>,
    pub h_inf: f64,
    pub dataset: String,
    pub arch: String,
    pub context: usize,
    /// Token count of the curve that was fitted (the largest available).
    pub tokens: f64,
    pub second_tokens: Option<f64>,
    /// `max |L_n(P_max) − L_n(P_second)|` over the fit window.
    pub convergence: Option<f64>,
    pub warnings: Vec<String>,
}

/// Fits `L_n(P_max) − H_∞ ∝ n^−γ` on the configured small-`n` window of the
/// curve with the most training tokens.
pub fn run_measure_gamma(
    curves: &LossCurveSet<f64>,
    cfg: &PipelineConfig,
) -> Result<GammaMeasurement, PipelineError> {
    let all = curves.curves();
    let top = largest_curve(&all).ok_or_else(|| PipelineError::Data("loss table has no curves".into()))?;
    let range = FitRange::new(cfg.gamma_fit.range[0], cfg.gamma_fit.range[1])?;
    let h_inf = cfg.theory.h_inf;
    let points: Vec<(f64, f64)> = top
        .points
        .iter()
        .filter(|p| p.0 >= 1 && range.contains(p.0 as f64))
        .map(|&(n, l)| (n as f64, l - h_inf))
        .collect();
    let fit = fit_power_law(&points, Some(range))?;

    let mut warnings = Vec::new();
    let second = all
        .iter()
        .filter(|c| same_family(c, top) && c.tokens < top.tokens)
        .max_by(|a, b| a.tokens.total_cmp(&b.tokens));
    let convergence = match second {
        Some(s) => points
            .iter()
            .filter_map(|&(n, _)| {
                let n = n as usize;
                Some((top.loss_at(n)? - s.loss_at(n)?).abs())
            })
            .reduce(f64::max),
        None => {
            warnings.push(format!(
                "only one token count for {}/{}/T={}; convergence diagnostic omitted",
                top.dataset, top.arch, top.context
            ));
            None
        }
    };
    Ok(GammaMeasurement {
        gamma: fit.exponent,
        fit,
        h_inf,
        dataset: top.dataset.clone(),
        arch: top.arch.clone(),
        context: top.context,
        tokens: top.tokens,
        second_tokens: second.map(|s| s.tokens),
        convergence,
        warnings,
    })
}

fn same_family<T>(a: &LossCurve<T>, b: &LossCurve<T>) -> bool {
    a.dataset == b.dataset && a.arch == b.arch && a.context == b.context
}

// Most tokens wins; ties go to the longer context, then to table order.
fn largest_curve(curves: &[LossCurve<f64>]) -> Option<&LossCurve<f64>> {
    curves.iter().reduce(|best, c| {
        if (c.tokens, c.context) > (best.tokens, best.context) {
            c
        } else {
            best
        }
    })
}

/// Decay of one `L_n(P)` toward its asymptote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaFit {
    pub n: usize,
    pub asymptote: f64,
    pub delta: f64,
    pub r2: f64,
    pub num_points: usize,
}

/// An analysis section that could not be produced for lack of input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGap {
    pub stage: String,
    pub reason: String,
}

/// An analysis section that failed on the input it was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub beta: Option<BetaMeasurement>,
    pub horizon: Option<HorizonReport<f64>>,
    pub calibration: Option<ThresholdCalibration<f64>>,
    pub gamma: Option<GammaMeasurement>,
    pub delta_fits: Vec<DeltaFit>,
    pub scaling: Option<ScalingReport>,
    /// Power law of `L_AR − H_∞` against `P` for the fitted family.
    pub alpha_fit: Option<PowerLawFit<f64>>,
    pub collapse: Option<CollapseReport<f64>>,
    pub scan: Option<ExponentScan<f64>>,
    pub gaps: Vec<StageGap>,
    pub failures: Vec<StageFailure>,
    pub warnings: Vec<String>,
}

impl FullReport {
    /// Exit code of the first failed stage, or 0.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.exit_code)
    }

    fn gap(&mut self, stage: &str, reason: impl Into<String>) {
        self.gaps.push(StageGap {
            stage: stage.into(),
            reason: reason.into(),
        });
    }

    fn record<T>(&mut self, stage: &str, r: Result<T, PipelineError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push(StageFailure {
                    stage: stage.into(),
                    exit_code: e.exit_code(),
                    message: e.to_string(),
                });
                None
            }
        }
    }
}

/// Runs every stage its inputs allow. A stage that cannot run for lack of
/// input is listed under `gaps`; a stage that fails is listed under
/// `failures` with its label, and the stages that do not depend on it still
/// run.
pub fn run_full_report(
    stream: Option<&TokenStream>,
    curves: Option<&LossCurveSet<f64>>,
    cfg: &PipelineConfig,
) -> FullReport {
    let mut rep = FullReport {
        beta: None,
        horizon: None,
        calibration: None,
        gamma: None,
        delta_fits: Vec::new(),
        scaling: None,
        alpha_fit: None,
        collapse: None,
        scan: None,
        gaps: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
    };

    match stream {
        Some(s) => {
            rep.beta = rep.record("beta", run_measure_beta(s, cfg));
            if !cfg.horizon.enabled {
                rep.gap("horizon", "disabled in config");
            } else {
                rep.horizon = rep.record("horizon", run_horizon(s, cfg));
            }
        }
        None => {
            rep.gap("beta", "no token stream supplied");
            rep.gap("horizon", "no token stream supplied");
        }
    }
    let beta = rep.beta.as_ref().map(|b| b.beta);

    rep.calibration = match (cfg.theory.c, &rep.horizon, beta) {
        (Some(_), _, _) => None,
        (None, Some(h), Some(b)) => {
            let pts = h.points();
            if pts.is_empty() {
                rep.gap("calibration", "no prefix reached a horizon");
                None
            } else {
                rep.record("calibration", calibrate_threshold_constant(&pts, b).map_err(Into::into))
            }
        }
        _ => {
            rep.gap("calibration", "needs a measured beta and horizon, or theory.c in the config");
            None
        }
    };
    let c = cfg.theory.c.or(rep.calibration.map(|k| k.c));

    let Some(curves) = curves else {
        for stage in ["gamma", "delta", "alpha_fit", "scaling", "collapse"] {
            rep.gap(stage, "no loss table supplied");
        }
        return rep;
    };
    for v in curves.monotonicity_violations(1e-9).iter().take(5) {
        rep.warnings.push(format!(
            "loss rises along n at {}/{}/T={}/P={} n={}",
            v.dataset, v.arch, v.context, v.tokens, v.n
        ));
    }
    rep.gamma = rep.record("gamma", run_measure_gamma(curves, cfg));
    let family: Vec<LossCurve<f64>> = match &rep.gamma {
        Some(g) => curves
            .curves()
            .into_iter()
            .filter(|c| c.dataset == g.dataset && c.arch == g.arch && c.context == g.context)
            .collect(),
        None => Vec::new(),
    };

    if family.len() < 4 {
        rep.gap("delta", "fewer than four token counts in the fitted family");
    } else {
        for n in 1..=cfg.asymptote.max_n {
            let pts: Vec<(f64, f64)> = family.iter().filter_map(|c| Some((c.tokens, c.loss_at(n)?))).collect();
            let threshold = match (beta, c) {
                (Some(b), Some(c)) => Some(data_threshold(n as f64, b, c).map_err(PipelineError::from)),
                _ => None,
            }
            .transpose();
            let threshold = match threshold {
                Ok(t) => t,
                Err(e) => {
                    rep.warnings.push(format!("no decay fit for n = {n}: {e}"));
                    continue;
                }
            };
            let opts = AsymptoteOptions {
                grid: Some(AsymptoteGrid {
                    h_min: cfg.asymptote.h_min,
                    step: cfg.asymptote.grid_step,
                    ..AsymptoteGrid::default_for(&pts)
                }),
                min_ratio: cfg.asymptote.min_ratio,
                threshold,
            };
            match fit_asymptote(&pts, &opts) {
                Ok(f) => rep.delta_fits.push(DeltaFit {
                    n,
                    asymptote: f.asymptote,
                    delta: f.delta,
                    r2: f.r2,
                    num_points: f.num_points,
                }),
                Err(e) => rep.warnings.push(format!("no decay fit for n = {n}: {e}")),
            }
        }
    }

    if family.len() >= 3 {
        let pts: Vec<(f64, f64)> = family
            .iter()
            .map(|c| (c.tokens, c.autoregressive_loss() - cfg.theory.h_inf))
            .collect();
        let range = cfg.theory.alpha_range.map(|[lo, hi]| FitRange { lo, hi });
        rep.alpha_fit = rep.record("alpha_fit", fit_power_law(&pts, range).map_err(Into::into));
    } else {
        rep.gap("alpha_fit", "fewer than three token counts in the fitted family");
    }

    let gamma = rep.gamma.as_ref().map(|g| g.gamma);
    match (gamma, beta) {
        (Some(g), Some(b)) => {
            let scaling = scaling_report(&rep, curves, &family, g, b, c, cfg);
            rep.scaling = rep.record("scaling", scaling);
        }
        _ => rep.gap("scaling", "needs both gamma and beta"),
    }

    match (gamma, beta) {
        (Some(g), Some(b)) => {
            let h = (cfg.theory.h_inf > 0.0).then_some(cfg.theory.h_inf);
            rep.collapse = rep.record(
                "collapse",
                collapse_report(curves, g, b, h, cfg.collapse.num_bins).map_err(Into::into),
            );
        }
        _ => rep.gap("collapse", "needs both gamma and beta"),
    }
    if cfg.collapse.scan {
        let scan = exponent_scan(
            curves,
            &cfg.collapse.gamma_grid,
            &cfg.collapse.beta_grid,
            cfg.theory.h_inf,
            cfg.collapse.num_bins,
        );
        rep.scan = rep.record("scan", scan.map_err(Into::into));
    }
    rep
}

fn run_horizon(stream: &TokenStream, cfg: &PipelineConfig) -> Result<HorizonReport<f64>, PipelineError> {
    let total = stream.total_tokens();
    let prefixes = match &cfg.horizon.prefixes {
        Some(p) => p.clone(),
        None => {
            let lo = (total / 1000).max(1) as f64;
            let hi = (total / 10).max(2) as f64;
            let mut p: Vec<usize> = log_space(lo, hi, cfg.horizon.num_prefixes.max(2))
                .into_iter()
                .map(|x| x.round() as usize)
                .collect();
            p.dedup();
            p
        }
    };
    let lags: Vec<usize> = (1..=cfg.horizon.max_lag).collect();
    Ok(empirical_horizon(
        stream,
        &prefixes,
        &lags,
        cfg.horizon.tol_ratio,
        cfg.horizon.min_pairs,
        &cfg.power.iter_config(),
        cfg.covstats.boundary,
        cfg.horizon.rule,
    )?)
}

fn scaling_report(
    rep: &FullReport,
    curves: &LossCurveSet<f64>,
    family: &[LossCurve<f64>],
    gamma: f64,
    beta: f64,
    c: Option<f64>,
    cfg: &PipelineConfig,
) -> Result<ScalingReport, PipelineError> {
    let alpha_pred = predict_alpha(gamma, beta)?;
    let delta_table: Vec<(usize, f64)> = rep.delta_fits.iter().map(|d| (d.n, d.delta)).collect();
    let regime = match delta_table.iter().map(|d| d.1).reduce(f64::min) {
        Some(d) => Some(classify_regime(gamma, beta, d)?),
        None => None,
    };
    let decomposition = match (c, &rep.gamma) {
        (Some(c), Some(g)) => {
            let max_n = family.iter().map(|c| c.context).max().unwrap_or(0);
            let amplitude = g.fit.log_prefactor.exp();
            let h_n = |n: usize| cfg.theory.h_inf + amplitude * (n as f64).powf(-gamma);
            let h_0 = family
                .iter()
                .filter_map(|c| c.loss_at(0))
                .reduce(f64::min)
                .unwrap_or_else(|| h_n(1));
            let entropies: Vec<f64> = (0..=max_n).map(|n| if n == 0 { h_0 } else { h_n(n) }).collect();
            let exps = LanguageExponents {
                gamma,
                beta,
                h_inf: cfg.theory.h_inf,
                h_0,
                c,
            };
            let family_set = LossCurveSet::new(
                curves
                    .records
                    .iter()
                    .filter(|r| r.dataset == g.dataset && r.arch == g.arch && r.context == g.context)
                    .cloned()
                    .collect(),
            );
            decompose_loss(&family_set, &exps, &entropies)?
        }
        _ => Vec::new(),
    };
    Ok(ScalingReport {
        gamma,
        beta,
        alpha_pred,
        c,
        delta_table,
        regime,
        decomposition,
    })
}
