use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{FileDigest, RunManifest};
use super::stages::{run_full_report, run_measure_beta, run_measure_gamma, FullReport};
use super::svg::{loglog, Series, Style};
use super::{PipelineConfig, PipelineError};
use crate::collapse::{collapse_report, exponent_scan, rescale};
use crate::covstats::write_summaries;
use crate::fitkit::{
    apply_mask, fit_asymptote, fit_broken_power_law, fit_power_law, fit_power_law_weighted, outlier_mask,
    read_points_csv, read_points_jsonl, AsymptoteGrid, AsymptoteOptions, FitRange, FitReport, JsonlColumn,
    OutlierOptions,
};
use crate::synthlang::{generate, SynthSpec};
use crate::theory::{
    classify_regime, data_threshold, horizon, predict_alpha, synthesize_curves, AnsatzSpec, LossCurveSet,
    RegimeClassification,
};
use crate::tokenizer::{encode, train_bpe, DocSplit, TokenStream, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    Powerlaw,
    Asymptote,
    Broken,
}

/// One unit of work; stored verbatim in the manifest so it can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Command {
    /// Text to `tokens.bin` and `vocab.json`, training BPE unless a
    /// vocabulary is given.
    Tokenize {
        input: PathBuf,
        split: String,
        vocab_size: Option<usize>,
        vocab: Option<PathBuf>,
    },
    /// Covariance summaries and the correlation exponent of a token stream.
    Covstats { tokens: PathBuf },
    /// A fit of `x,y[,w]` CSV points or covariance summaries, or the
    /// entropy exponent of a loss table.
    Fit {
        form: FitForm,
        points: Option<PathBuf>,
        losses: Option<PathBuf>,
        column: JsonlColumn,
        range: Option<[f64; 2]>,
        mask_outliers: bool,
    },
    /// Closed-form predictions from given exponents.
    Predict {
        gamma: f64,
        beta: f64,
        c: Option<f64>,
        delta: Option<f64>,
        tokens: Vec<f64>,
        max_n: usize,
    },
    SynthCorpus { spec: PathBuf },
    SynthCurves { spec: PathBuf },
    Collapse {
        losses: PathBuf,
        gamma: f64,
        beta: f64,
    },
    Report {
        tokens: Option<PathBuf>,
        losses: Option<PathBuf>,
    },
}

impl Command {
    fn inputs(&self) -> Vec<&Path> {
        fn opt(p: &Option<PathBuf>) -> Vec<&Path> {
            p.as_deref().into_iter().collect()
        }
        match self {
            Self::Tokenize { input, vocab, .. } => [vec![input.as_path()], opt(vocab)].concat(),
            Self::Covstats { tokens } => vec![tokens],
            Self::Fit { points, losses, .. } => [opt(points), opt(losses)].concat(),
            Self::Predict { .. } => Vec::new(),
            Self::SynthCorpus { spec } | Self::SynthCurves { spec } => vec![spec],
            Self::Collapse { losses, .. } => vec![losses],
            Self::Report { tokens, losses } => [opt(tokens), opt(losses)].concat(),
        }
    }

    fn absolutize(mut self) -> Result<Self, PipelineError> {
        let abs = |p: &mut PathBuf| -> Result<(), PipelineError> {
            *p = std::fs::canonicalize(&*p).map_err(|e| PipelineError::io(p, e))?;
            Ok(())
        };
        let abs_opt = |p: &mut Option<PathBuf>| p.as_mut().map_or(Ok(()), abs);
        match &mut self {
            Self::Tokenize { input, vocab, .. } => {
                abs(input)?;
                abs_opt(vocab)?;
            }
            Self::Covstats { tokens } => abs(tokens)?,
            Self::Fit { points, losses, .. } => {
                abs_opt(points)?;
                abs_opt(losses)?;
            }
            Self::Predict { .. } => {}
            Self::SynthCorpus { spec } | Self::SynthCurves { spec } => abs(spec)?,
            Self::Collapse { losses, .. } => abs(losses)?,
            Self::Report { tokens, losses } => {
                abs_opt(tokens)?;
                abs_opt(losses)?;
            }
        }
        Ok(self)
    }
}

/// Closed-form predictions written by the `predict` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub gamma: f64,
    pub beta: f64,
    pub alpha_pred: f64,
    pub regime: Option<RegimeClassification<f64>>,
    pub c: Option<f64>,
    /// `(n, P*_n)` for `n = 1..=max_n`.
    pub thresholds: Vec<(usize, f64)>,
    /// `(P, n*(P))` for the requested token counts.
    pub horizons: Vec<(f64, f64)>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        self.files.push(PathBuf::from(name));
        Ok(p)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), PipelineError> {
        let p = self.path(name)?;
        std::fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        self.text(name, &(serde_json::to_string_pretty(value).expect("output serializes") + "\n"))
    }
}

/// Runs `command` under `config`, writing outputs and `manifest.json` into
/// `out_dir`. Input paths are made absolute before they are recorded.
///
/// For a report whose stages partly failed, the outputs and manifest are
/// still written and the first stage failure is returned alongside.
pub fn execute(
    command: Command,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(RunManifest, Option<PipelineError>), PipelineError> {
    config.validate()?;
    let command = command.absolutize()?;
    let inputs = command
        .inputs()
        .into_iter()
        .map(FileDigest::of)
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut manifest = RunManifest::begin(command.clone(), config.clone(), inputs);
    let mut out = Out {
        dir: out_dir,
        files: Vec::new(),
    };
    let failure = run(&command, config, &mut out)?;
    manifest.outputs = out
        .files
        .iter()
        .map(|rel| {
            let mut d = FileDigest::of(&out_dir.join(rel))?;
            d.path = rel.clone();
            Ok(d)
        })
        .collect::<Result<_, PipelineError>>()?;
    manifest.finished_unix = manifest.started_unix.max(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    );
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok((manifest, failure))
}

fn run(command: &Command, cfg: &PipelineConfig, out: &mut Out) -> Result<Option<PipelineError>, PipelineError> {
    match command {
        Command::Tokenize {
            input,
            split,
            vocab_size,
            vocab,
        } => {
            let split: DocSplit = split.parse().map_err(PipelineError::Config)?;
            let text = std::fs::read_to_string(input).map_err(|e| PipelineError::io(input, e))?;
            let vocab = match (vocab, vocab_size) {
                (Some(path), _) => Vocabulary::load(path)?,
                (None, Some(v)) => train_bpe(&split.split(&text), *v)?,
                (None, None) => return Err(PipelineError::Config("tokenize needs a vocabulary size or file".into())),
            };
            let stream = encode(&text, &vocab, &split);
            let p = out.path("tokens.bin")?;
            stream.save(&p)?;
            let p = out.path("vocab.json")?;
            vocab.save(&p)?;
        }
        Command::Covstats { tokens } => {
            let stream = TokenStream::load(tokens)?;
            let beta = run_measure_beta(&stream, cfg)?;
            write_covstats(out, &beta.summaries)?;
            out.json("beta.json", &beta_json(&beta))?;
            out.text("plots/beta.svg", &beta_plot(&beta))?;
        }
        Command::Fit {
            form,
            points,
            losses,
            column,
            range,
            mask_outliers,
        } => {
            let range = range.map(|[lo, hi]| FitRange::new(lo, hi)).transpose()?;
            match (points, losses) {
                (None, Some(losses)) => {
                    if *form != FitForm::Powerlaw {
                        return Err(PipelineError::Config("a loss table is fitted with the powerlaw form only".into()));
                    }
                    let mut cfg = cfg.clone();
                    if let Some(r) = range {
                        cfg.gamma_fit.range = [r.lo, r.hi];
                    }
                    let curves = LossCurveSet::load(losses)?;
                    let gamma = run_measure_gamma(&curves, &cfg)?;
                    out.json("gamma.json", &gamma)?;
                }
                (Some(points), None) => {
                    let report = fit_points(*form, points, *column, range, *mask_outliers, cfg)?;
                    out.json("fit.json", &report)?;
                }
                _ => return Err(PipelineError::Config("fit needs exactly one of a points file or a loss table".into())),
            }
        }
        Command::Predict {
            gamma,
            beta,
            c,
            delta,
            tokens,
            max_n,
        } => {
            let thresholds = match c {
                Some(c) => (1..=*max_n)
                    .map(|n| Ok((n, data_threshold(n as f64, *beta, *c)?)))
                    .collect::<Result<_, PipelineError>>()?,
                None => Vec::new(),
            };
            let horizons = match c {
                Some(c) => tokens
                    .iter()
                    .map(|&p| Ok((p, horizon(p, *beta, *c)?)))
                    .collect::<Result<_, PipelineError>>()?,
                None => Vec::new(),
            };
            let prediction = Prediction {
                gamma: *gamma,
                beta: *beta,
                alpha_pred: predict_alpha(*gamma, *beta)?,
                regime: delta.map(|d| classify_regime(*gamma, *beta, d)).transpose()?,
                c: *c,
                thresholds,
                horizons,
            };
            out.json("prediction.json", &prediction)?;
        }
        Command::SynthCorpus { spec } => {
            let spec = SynthSpec::load(spec)?;
            let stream = generate(&spec)?;
            let p = out.path("tokens.bin")?;
            stream.save(&p)?;
        }
        Command::SynthCurves { spec } => {
            let text = std::fs::read_to_string(spec).map_err(|e| PipelineError::io(spec, e))?;
            let spec: AnsatzSpec<f64> = serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", spec.display())))?;
            let curves = synthesize_curves(&spec)?;
            let p = out.path("losses.csv")?;
            curves.save(&p)?;
        }
        Command::Collapse { losses, gamma, beta } => {
            let curves = LossCurveSet::load(losses)?;
            let h = (cfg.theory.h_inf > 0.0).then_some(cfg.theory.h_inf);
            let report = collapse_report(&curves, *gamma, *beta, h, cfg.collapse.num_bins)?;
            out.json("collapse.json", &report)?;
            out.text("plots/collapse.svg", &collapse_plot(&curves, *gamma, *beta, cfg.theory.h_inf))?;
            if cfg.collapse.scan {
                let scan = exponent_scan(
                    &curves,
                    &cfg.collapse.gamma_grid,
                    &cfg.collapse.beta_grid,
                    cfg.theory.h_inf,
                    cfg.collapse.num_bins,
                )?;
                out.json("scan.json", &scan)?;
            }
        }
        Command::Report { tokens, losses } => {
            let stream = tokens.as_deref().map(TokenStream::load).transpose()?;
            let curves = losses.as_deref().map(LossCurveSet::load).transpose()?;
            let report = run_full_report(stream.as_ref(), curves.as_ref(), cfg);
            write_report(out, &report, curves.as_ref(), cfg)?;
            return Ok(report.failures.first().map(|f| {
                let kind = match f.exit_code {
                    2 => PipelineError::Config(f.message.clone()),
                    4 => PipelineError::Numerical(f.message.clone()),
                    _ => PipelineError::Data(f.message.clone()),
                };
                kind.in_stage(&f.stage)
            }));
        }
    }
    Ok(None)
}

fn fit_points(
    form: FitForm,
    path: &Path,
    column: JsonlColumn,
    range: Option<FitRange<f64>>,
    mask_outliers: bool,
    cfg: &PipelineConfig,
) -> Result<FitReport, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let (points, weights) = if path.extension().is_some_and(|e| e == "jsonl") {
        (read_points_jsonl::<f64, _>(reader, column)?, None)
    } else {
        let wp = read_points_csv::<f64, _>(reader)?;
        (wp.points, wp.weights)
    };
    let (points, weights, masked) = if mask_outliers {
        let opts = OutlierOptions {
            window: cfg.beta_fit.outlier_window,
            z_thresh: cfg.beta_fit.outlier_z,
            ..OutlierOptions::default()
        };
        let mask = outlier_mask(&points, &opts)?;
        let weights = weights.map(|w| w.iter().zip(&mask).filter(|(_, &m)| !m).map(|(w, _)| *w).collect::<Vec<_>>());
        let kept = apply_mask(&points, &mask);
        let masked: Vec<(f64, f64)> = points.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
        (kept, weights, masked)
    } else {
        (points, weights, Vec::new())
    };
    let report = match form {
        FitForm::Powerlaw => match &weights {
            Some(w) => FitReport::from(&fit_power_law_weighted(&points, w, range)?),
            None => FitReport::from(&fit_power_law(&points, range)?),
        },
        FitForm::Asymptote => {
            let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| range.is_none_or(|r| r.contains(p.0))).collect();
            let opts = AsymptoteOptions {
                grid: Some(AsymptoteGrid {
                    h_min: cfg.asymptote.h_min,
                    step: cfg.asymptote.grid_step,
                    ..AsymptoteGrid::default_for(&pts)
                }),
                min_ratio: cfg.asymptote.min_ratio,
                threshold: None,
            };
            FitReport::from(&fit_asymptote(&pts, &opts)?)
        }
        FitForm::Broken => {
            let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| range.is_none_or(|r| r.contains(p.0))).collect();
            FitReport::from(&fit_broken_power_law(&pts, None)?)
        }
    };
    Ok(report.with_masked(&masked))
}

fn write_covstats(out: &mut Out, summaries: &[crate::covstats::LagCovarianceSummary<f64>]) -> Result<(), PipelineError> {
    let p = out.path("covstats.jsonl")?;
    let f = std::fs::File::create(&p).map_err(|e| PipelineError::io(&p, e))?;
    write_summaries(summaries, std::io::BufWriter::new(f))?;
    Ok(())
}

// The beta record without the per-lag table, which has its own file.
fn beta_json(beta: &super::BetaMeasurement) -> super::BetaMeasurement {
    super::BetaMeasurement {
        summaries: Vec::new(),
        ..beta.clone()
    }
}

fn beta_plot(beta: &super::BetaMeasurement) -> String {
    let data: Vec<(f64, f64)> = beta.summaries.iter().map(|s| (s.lag as f64, s.op_norm)).collect();
    let fit: Vec<(f64, f64)> = [beta.fit.fit_range.lo, beta.fit.fit_range.hi]
        .iter()
        .map(|&x| (x, beta.fit.predict(x)))
        .collect();
    loglog(
        "Correlation decay",
        "lag n",
        "‖C(n)‖_op",
        &[
            Series::new("measured", data, Style::Markers),
            Series::new(format!("β = {:.3}", beta.beta), fit, Style::Line),
        ],
    )
}

fn collapse_plot(curves: &LossCurveSet<f64>, gamma: f64, beta: f64, shift: f64) -> String {
    let series: Vec<Series> = rescale(curves, gamma, beta, shift)
        .map(|family| {
            family
                .into_iter()
                .map(|c| Series::new(format!("n = {}", c.n), c.points, Style::Line))
                .collect()
        })
        .unwrap_or_default();
    // the legend only has room for a handful of entries
    let step = series.len().div_ceil(8).max(1);
    let series: Vec<Series> = series.into_iter().step_by(step).collect();
    loglog(
        &format!("Collapse at γ = {gamma:.3}, β = {beta:.3}"),
        "P / n^{2β}",
        "n^γ (L_n − H_∞)",
        &series,
    )
}

fn write_report(
    out: &mut Out,
    report: &FullReport,
    curves: Option<&LossCurveSet<f64>>,
    cfg: &PipelineConfig,
) -> Result<(), PipelineError> {
    let mut slim = report.clone();
    if let Some(beta) = &report.beta {
        write_covstats(out, &beta.summaries)?;
        out.text("plots/beta.svg", &beta_plot(beta))?;
        slim.beta = Some(beta_json(beta));
    }
    out.json("report.json", &slim)?;
    if let Some(s) = &report.scaling {
        out.json("scaling.json", s)?;
    }
    if let Some(c) = &report.collapse {
        out.json("collapse.json", c)?;
        if let Some(curves) = curves {
            out.text(
                "plots/collapse.svg",
                &collapse_plot(curves, c.gamma_used, c.beta_used, cfg.theory.h_inf),
            )?;
        }
    }
    if let Some(h) = &report.horizon {
        out.text(
            "plots/horizon.svg",
            &loglog(
                "Prediction horizon",
                "P (tokens)",
                "n*(P)",
                &[Series::new("measured", h.points(), Style::Markers)],
            ),
        )?;
    }
    if let (Some(g), Some(curves)) = (&report.gamma, curves) {
        let family: Vec<(f64, f64)> = curves
            .curves()
            .iter()
            .filter(|c| c.dataset == g.dataset && c.arch == g.arch && c.context == g.context)
            .map(|c| (c.tokens, c.autoregressive_loss() - cfg.theory.h_inf))
            .collect();
        let mut series = vec![Series::new("L_AR − H_∞", family, Style::Markers)];
        if let Some(f) = &report.alpha_fit {
            let line = [f.fit_range.lo, f.fit_range.hi].iter().map(|&x| (x, f.predict(x))).collect();
            series.push(Series::new(format!("α = {:.3}", f.exponent), line, Style::Line));
        }
        out.text("plots/loss.svg", &loglog("Autoregressive loss", "P (tokens)", "L_AR − H_∞", &series))?;
    }
    Ok(())
}

/// Result of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    /// Inputs whose current digest differs from the recorded one.
    pub changed_inputs: Vec<PathBuf>,
    /// Outputs whose bytes differ from the recorded digest.
    pub mismatched_outputs: Vec<PathBuf>,
    pub missing_outputs: Vec<PathBuf>,
}

impl ReplayCheck {
    pub fn reproduced(&self) -> bool {
        self.changed_inputs.is_empty() && self.mismatched_outputs.is_empty() && self.missing_outputs.is_empty()
    }
}

/// Re-runs the command of `manifest` with its recorded configuration into
/// `out_dir` and compares every output digest.
pub fn replay(manifest: &RunManifest, out_dir: &Path) -> Result<ReplayCheck, PipelineError> {
    let changed_inputs = manifest
        .inputs
        .iter()
        .filter(|d| FileDigest::of(&d.path).map_or(true, |now| now.sha256 != d.sha256))
        .map(|d| d.path.clone())
        .collect::<Vec<_>>();
    if !changed_inputs.is_empty() {
        return Ok(ReplayCheck {
            changed_inputs,
            mismatched_outputs: Vec::new(),
            missing_outputs: Vec::new(),
        });
    }
    let (rerun, _) = execute(manifest.command.clone(), &manifest.config, out_dir)?;
    let mut mismatched_outputs = Vec::new();
    let mut missing_outputs = Vec::new();
    for want in &manifest.outputs {
        match rerun.outputs.iter().find(|d| d.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => {}
            Some(_) => mismatched_outputs.push(want.path.clone()),
            None => missing_outputs.push(want.path.clone()),
        }
    }
    Ok(ReplayCheck {
        changed_inputs,
        mismatched_outputs,
        missing_outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestOutcome {
    pub checks: Vec<(String, bool)>,
}

impl SelftestOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

/// Builds a small synthetic corpus and loss table under `work_dir`, runs the
/// full report, replays its manifest, and checks that the report equals the
/// composition of separately run stages.
pub fn selftest_builtin(work_dir: &Path) -> Result<SelftestOutcome, PipelineError> {
    std::fs::create_dir_all(work_dir).map_err(|e| PipelineError::io(work_dir, e))?;
    let corpus_spec = work_dir.join("corpus.json");
    let curves_spec = work_dir.join("curves.json");
    let write = |p: &Path, v: serde_json::Value| {
        std::fs::write(p, serde_json::to_string_pretty(&v).expect("json")).map_err(|e| PipelineError::io(p, e))
    };
    write(
        &corpus_spec,
        serde_json::json!({
            "vocab_size": 6, "length": 60000, "seed": 7,
            "process": {"kind": "powerlaw_copy", "copy_prob": 0.5, "lag_exponent": 0.5, "max_lag": 256},
            "doc_length": {"kind": "fixed", "length": 2000}
        }),
    )?;
    write(
        &curves_spec,
        serde_json::json!({
            "exponents": {"gamma": 0.34, "beta": 0.88, "h_inf": 0.0, "h_0": 1.0, "c": 1.0},
            "amplitude": 1.0, "delta": 1.0, "max_n": 64,
            "p_grid": crate::scalar::log_space(10.0, 1e5, 9),
        }),
    )?;
    let mut cfg = PipelineConfig::default();
    cfg.covstats.max_lag = 32;
    cfg.horizon.max_lag = 16;
    cfg.asymptote.max_n = 4;

    let sub = |name: &str| work_dir.join(name);
    execute(Command::SynthCorpus { spec: corpus_spec }, &cfg, &sub("corpus"))?;
    execute(Command::SynthCurves { spec: curves_spec }, &cfg, &sub("curves"))?;
    let report = Command::Report {
        tokens: Some(sub("corpus").join("tokens.bin")),
        losses: Some(sub("curves").join("losses.csv")),
    };
    let (first, _) = execute(report.clone(), &cfg, &sub("report_a"))?;
    let (_, _) = execute(report, &cfg, &sub("report_b"))?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| PipelineError::io(&p, e));
    let a = read(sub("report_a").join("report.json"))?;
    let b = read(sub("report_b").join("report.json"))?;
    let replayed = replay(&first, &sub("report_replay"))?;

    let (beta_run, _) = execute(
        Command::Covstats {
            tokens: sub("corpus").join("tokens.bin"),
        },
        &cfg,
        &sub("stage_covstats"),
    )?;
    let stage_beta = read(sub("stage_covstats").join("covstats.jsonl"))?;
    let report_beta = read(sub("report_a").join("covstats.jsonl"))?;
    let (_, _) = execute(
        Command::Fit {
            form: FitForm::Powerlaw,
            points: None,
            losses: Some(sub("curves").join("losses.csv")),
            column: JsonlColumn::OpNorm,
            range: None,
            mask_outliers: false,
        },
        &cfg,
        &sub("stage_gamma"),
    )?;
    let report: FullReport = serde_json::from_slice(&a).map_err(|e| PipelineError::Data(e.to_string()))?;
    let stage_gamma: super::GammaMeasurement =
        serde_json::from_slice(&read(sub("stage_gamma").join("gamma.json"))?).map_err(|e| PipelineError::Data(e.to_string()))?;

    Ok(SelftestOutcome {
        checks: vec![
            ("report is identical across two runs".into(), a == b),
            ("manifest replay reproduces every output".into(), replayed.reproduced()),
            (
                "report covariance table equals the covstats stage".into(),
                stage_beta == report_beta && !beta_run.outputs.is_empty(),
            ),
            (
                "report gamma equals the fit stage".into(),
                report.gamma.as_ref() == Some(&stage_gamma),
            ),
        ],
    })
}
