use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use langscale::fitkit::{FitRange, JsonlColumn};
use langscale::pipeline::{
    execute, replay, selftest_builtin, Command, FitForm, PipelineConfig, PipelineError, RunManifest,
};

/// Measure and predict data-scaling exponents of language corpora.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical non-convergence. Set LANGSCALE_CACHE_DIR to reuse covariance
/// summaries across runs.
#[derive(Debug, Parser)]
#[command(name = "langscale", version)]
struct Cli {
    /// TOML file with ranges, grids, tolerances and seeds; defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Directory for outputs and manifest.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Train (or load) a byte-level BPE vocabulary and encode a text file.
    Tokenize {
        #[arg(long)]
        input: PathBuf,
        /// Train a vocabulary of this size (including the 256 bytes and EOS).
        #[arg(long, conflicts_with = "vocab", required_unless_present = "vocab")]
        vocab_size: Option<usize>,
        /// Encode with an existing vocabulary file.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Document split: whole, lines, blank, or delim:<marker>.
        #[arg(long, default_value = "blank")]
        split: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Lag covariance norms of a token stream and the fitted correlation exponent.
    Covstats {
        #[arg(long)]
        tokens: PathBuf,
        /// Overrides covstats.max_lag.
        #[arg(long)]
        max_lag: Option<usize>,
        /// Overrides beta_fit.range, as A:B.
        #[arg(long)]
        range: Option<FitRange<f64>>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Fit a power law, a power law with asymptote, or a broken power law.
    Fit {
        form: Form,
        /// `x,y[,w]` CSV, or covariance summaries (`.jsonl`).
        #[arg(long, conflicts_with = "losses", required_unless_present = "losses")]
        points: Option<PathBuf>,
        /// Loss table; fits the entropy exponent of the largest-P curve.
        #[arg(long)]
        losses: Option<PathBuf>,
        /// Norm column used with `.jsonl` points.
        #[arg(long, value_enum, default_value = "op-norm")]
        column: Column,
        /// Inclusive x window, as A:B.
        #[arg(long)]
        range: Option<FitRange<f64>>,
        #[arg(long)]
        mask_outliers: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Closed-form predictions: alpha, regime, thresholds and horizons.
    Predict {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        beta: f64,
        /// Threshold constant in P*_n = c² n^{2β}.
        #[arg(long)]
        c: Option<f64>,
        /// Decay rate of the learning transition, for the regime.
        #[arg(long)]
        delta: Option<f64>,
        /// Token counts to report horizons for.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        tokens: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        max_n: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Rescale loss curves by (P/n^{2β}, n^γ L) and score the collapse.
    Collapse {
        #[arg(long)]
        losses: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        beta: f64,
        /// Overrides theory.h_inf; a positive value adds the subtracted form.
        #[arg(long)]
        h_inf: Option<f64>,
        /// Also scan the configured (γ, β) grids.
        #[arg(long)]
        scan: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Generate a synthetic corpus or ansatz loss curves from a JSON spec.
    Synth {
        kind: SynthKind,
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Every analysis the inputs allow, with plots; missing inputs become gaps.
    Report {
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long)]
        losses: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Check reproducibility: replay a manifest, or run the built-in check.
    Selftest {
        /// Replay this manifest and compare every output digest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Scratch directory; a temporary one by default.
        #[arg(long)]
        work: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Form {
    Powerlaw,
    Asymptote,
    Broken,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Column {
    OpNorm,
    FrobNorm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Corpus,
    Curves,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let (command, out) = match cli.verb {
        Verb::Tokenize {
            input,
            vocab_size,
            vocab,
            split,
            out,
        } => (
            Command::Tokenize {
                input,
                split,
                vocab_size,
                vocab,
            },
            out.out,
        ),
        Verb::Covstats {
            tokens,
            max_lag,
            range,
            out,
        } => {
            if let Some(m) = max_lag {
                cfg.covstats.max_lag = m;
            }
            if let Some(r) = range {
                cfg.beta_fit.range = Some([r.lo, r.hi]);
            }
            (Command::Covstats { tokens }, out.out)
        }
        Verb::Fit {
            form,
            points,
            losses,
            column,
            range,
            mask_outliers,
            out,
        } => (
            Command::Fit {
                form: match form {
                    Form::Powerlaw => FitForm::Powerlaw,
                    Form::Asymptote => FitForm::Asymptote,
                    Form::Broken => FitForm::Broken,
                },
                points,
                losses,
                column: match column {
                    Column::OpNorm => JsonlColumn::OpNorm,
                    Column::FrobNorm => JsonlColumn::FrobNorm,
                },
                range: range.map(|r| [r.lo, r.hi]),
                mask_outliers,
            },
            out.out,
        ),
        Verb::Predict {
            gamma,
            beta,
            c,
            delta,
            tokens,
            max_n,
            out,
        } => (
            Command::Predict {
                gamma,
                beta,
                c,
                delta,
                tokens,
                max_n,
            },
            out.out,
        ),
        Verb::Collapse {
            losses,
            gamma,
            beta,
            h_inf,
            scan,
            out,
        } => {
            if let Some(h) = h_inf {
                cfg.theory.h_inf = h;
            }
            cfg.collapse.scan |= scan;
            (Command::Collapse { losses, gamma, beta }, out.out)
        }
        Verb::Synth { kind, spec, out } => (
            match kind {
                SynthKind::Corpus => Command::SynthCorpus { spec },
                SynthKind::Curves => Command::SynthCurves { spec },
            },
            out.out,
        ),
        Verb::Report { tokens, losses, out } => (Command::Report { tokens, losses }, out.out),
        Verb::Selftest { manifest, work } => return selftest(manifest.as_deref(), work),
    };

    let (manifest, failure) = execute(command, &cfg, &out)?;
    summarize(&manifest, &out);
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn summarize(manifest: &RunManifest, out: &Path) {
    for d in &manifest.outputs {
        println!("wrote {}", out.join(&d.path).display());
    }
    let read = |name: &str| -> Option<serde_json::Value> {
        serde_json::from_str(&std::fs::read_to_string(out.join(name)).ok()?).ok()
    };
    if let Some(v) = read("beta.json") {
        println!("beta = {} (r2 {}, decay {})", v["beta"], v["fit"]["r2"], v["decay_form"]);
    }
    if let Some(v) = read("gamma.json") {
        println!("gamma = {} (r2 {}) at P = {}", v["gamma"], v["fit"]["r2"], v["tokens"]);
        for w in v["warnings"].as_array().into_iter().flatten() {
            eprintln!("warning: {}", w.as_str().unwrap_or_default());
        }
    }
    if let Some(v) = read("fit.json") {
        println!("{} fit: {} (r2 {})", v["form"].as_str().unwrap_or("?"), v["params"], v["r2"]);
    }
    if let Some(v) = read("prediction.json") {
        println!("alpha_pred = {}", v["alpha_pred"]);
    }
    if let Some(v) = read("collapse.json") {
        println!("collapse dispersion = {}", v["dispersion_score"]);
    }
    if let Some(v) = read("report.json") {
        if let Some(s) = read("scaling.json") {
            println!("alpha_pred = {} (gamma {}, beta {})", s["alpha_pred"], s["gamma"], s["beta"]);
        }
        if !v["alpha_fit"].is_null() {
            println!("fitted loss exponent = {}", v["alpha_fit"]["exponent"]);
        }
        for g in v["gaps"].as_array().into_iter().flatten() {
            eprintln!("gap: {}: {}", g["stage"].as_str().unwrap_or("?"), g["reason"].as_str().unwrap_or("?"));
        }
        for w in v["warnings"].as_array().into_iter().flatten() {
            eprintln!("warning: {}", w.as_str().unwrap_or_default());
        }
    }
}

fn selftest(manifest: Option<&Path>, work: Option<PathBuf>) -> Result<(), PipelineError> {
    let tmp;
    let work = match work {
        Some(w) => w,
        None => {
            tmp = tempfile::tempdir().map_err(|e| PipelineError::Data(format!("temporary directory: {e}")))?;
            tmp.path().to_path_buf()
        }
    };
    let ok = match manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            let check = replay(&m, &work)?;
            for p in &check.changed_inputs {
                println!("FAIL input changed since the run: {}", p.display());
            }
            for p in &check.mismatched_outputs {
                println!("FAIL output differs: {}", p.display());
            }
            for p in &check.missing_outputs {
                println!("FAIL output missing: {}", p.display());
            }
            if check.reproduced() {
                println!("PASS all {} outputs reproduced", m.outputs.len());
            }
            check.reproduced()
        }
        None => {
            let outcome = selftest_builtin(&work)?;
            for (name, pass) in &outcome.checks {
                println!("{} {name}", if *pass { "PASS" } else { "FAIL" });
            }
            outcome.passed()
        }
    };
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Numerical("self-test found irreproducible outputs".into()))
    }
}
