//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! numbers. Exits nonzero when any asserted criterion fails. The corpus-data
//! check runs only when token streams are supplied through the environment
//! and is reported either way.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    covariance_error, dense_counts, dense_covariance, frobenius, jacobi_norm, lambda_chain, loglog_slope,
    random_corpus, random_matrix, rel,
};
use langscale::collapse::{collapse_report, exponent_scan};
use langscale::covstats::{count_pairs, empirical_horizon, summarize, BoundaryMode, HorizonRule, LagCounter};
use langscale::fitkit::{fit_asymptote, fit_power_law, AsymptoteOptions, FitRange};
use langscale::linalg::{top_singular_value, DenseMatrix, PowerIterConfig};
use langscale::pipeline::{run_measure_beta, PipelineConfig};
use langscale::scalar::log_space;
use langscale::synthlang::{analytic_covariance, generate, DocLength, Process, SynthSpec};
use langscale::theory::{synthesize_curves, AnsatzSpec, DeltaSpec, LanguageExponents, LossCurveSet, TransitionShape};
use langscale::tokenizer::TokenStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMA: f64 = 0.34;
const BETA: f64 = 0.88;

/// Token streams for the corpus-data check (V = 8192 encodings).
const TINYSTORIES_ENV: &str = "LANGSCALE_TINYSTORIES_TOKENS";
const WIKITEXT_ENV: &str = "LANGSCALE_WIKITEXT_TOKENS";

enum Verdict {
    Pass(String),
    Fail(String),
    /// Best-effort criterion that could not run here.
    NotRun(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Verdict); 8] = [
        ("covariance oracle", Duration::from_secs(60), covariance_oracle),
        ("operator norm", Duration::from_secs(10), operator_norm),
        ("markov oracle", Duration::from_secs(300), markov_oracle),
        ("fit recovery", Duration::from_secs(10), fit_recovery),
        ("loss exponent", Duration::from_secs(60), loss_exponent),
        ("curve collapse", Duration::from_secs(60), curve_collapse),
        ("horizon law", Duration::from_secs(600), horizon_law),
        ("corpus exponents", Duration::from_secs(6 * 3600), corpus_exponents),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let t = Instant::now();
        let v = run();
        let took = t.elapsed();
        let over = took > budget;
        let timing = format!("{:.1}s of {}s", took.as_secs_f64(), budget.as_secs());
        match v {
            Verdict::Pass(d) if !over => println!("PASS {name}: {d} [{timing}]"),
            Verdict::Pass(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [over budget: {timing}]");
            }
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{timing}]");
            }
            Verdict::NotRun(d) => println!("FAIL {name} (best-effort, not run): {d}"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn tight() -> PowerIterConfig {
    PowerIterConfig {
        tol: 1e-14,
        max_iters: 100_000,
        seed: 11,
    }
}

/// Streaming sparse counts against brute force, norms against dense
/// evaluation, on 50 random corpora.
fn covariance_oracle() -> Verdict {
    let lags: Vec<usize> = (1..=64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut count_mismatch, mut worst_op, mut worst_frob) = (0usize, 0.0f64, 0.0f64);
    let mut cells = 0;
    for seed in 0..50 {
        let content = rng.random_range(1..100usize);
        let len = rng.random_range(1_000..=100_000usize);
        let stream = random_corpus(seed, content, len);
        let v = stream.vocab_size() as usize;
        let counts = count_pairs(&stream, &lags, BoundaryMode::Wall).unwrap();
        let sums = summarize::<f64>(&counts, &tight()).unwrap();
        let mut sums = sums.iter().peekable();
        for c in &counts {
            let dense = dense_counts(&stream, c.lag, BoundaryMode::Wall);
            let mut sparse = vec![0u64; v * v];
            for &(a, b, k) in &c.pairs {
                sparse[a as usize * v + b as usize] = k;
            }
            if sparse != dense {
                count_mismatch += 1;
            }
            let Some(cov) = dense_covariance(&dense, v) else { continue };
            let s = sums.next_if(|s| s.lag == c.lag).expect("summary for nonempty lag");
            worst_frob = worst_frob.max(rel(s.frob_norm, frobenius(&cov)));
            worst_op = worst_op.max(rel(s.op_norm, jacobi_norm(&cov)));
            cells += 1;
        }
    }
    verdict(
        count_mismatch == 0 && worst_op <= 1e-9 && worst_frob <= 1e-9,
        format!(
            "{cells} (corpus, lag) cells, {count_mismatch} count mismatches, worst relative error op {worst_op:.1e}, frobenius {worst_frob:.1e} (limit 1e-9)"
        ),
    )
}

fn operator_norm() -> Verdict {
    let worst = (0..100)
        .map(|seed| {
            let m = random_matrix(1000 + seed, 50, 50);
            let got = top_singular_value(&DenseMatrix::from_rows(&m), &PowerIterConfig::default()).value;
            rel(got, jacobi_norm(&m))
        })
        .fold(0.0, f64::max);
    verdict(worst <= 1e-6, format!("100 matrices 50x50, worst relative error {worst:.1e} (limit 1e-6)"))
}

/// Empirical covariance error against `D (Tⁿ − 1πᵀ)` as the prefix grows.
fn markov_oracle() -> Verdict {
    let pi = [0.35, 0.25, 0.2, 0.12, 0.08];
    let t = lambda_chain(&pi, 0.8);
    let lags: Vec<usize> = (1..=20).collect();
    let exact: Vec<Vec<Vec<f64>>> = analytic_covariance::<f64>(&t, &lags)
        .unwrap()
        .iter()
        .map(|m| m.to_rows())
        .collect();
    let sizes = [10_000usize, 100_000, 1_000_000, 10_000_000];
    let seeds = 3;
    let mut err = vec![0.0; sizes.len()];
    for seed in 0..seeds {
        let s = generate(&SynthSpec {
            vocab_size: pi.len(),
            length: sizes[sizes.len() - 1],
            seed: 500 + seed,
            process: Process::Markov { transition: t.clone() },
            doc_length: DocLength::Single,
        })
        .unwrap();
        let mut counter = LagCounter::new(&lags, s.vocab_size() as usize, BoundaryMode::Wall).unwrap();
        let mut done = 0;
        for (k, &p) in sizes.iter().enumerate() {
            counter.extend(&s.ids()[done..p]);
            done = p;
            for (c, e) in counter.snapshot().iter().zip(&exact) {
                err[k] += covariance_error(c, e) / (seeds as usize * lags.len()) as f64;
            }
        }
    }
    let pts: Vec<(f64, f64)> = sizes.iter().zip(&err).map(|(&p, &e)| (p as f64, e)).collect();
    let slope = loglog_slope(&pts);
    verdict(
        (slope + 0.5).abs() <= 0.1,
        format!(
            "mean Frobenius error {} at P = 1e4..1e7, log-log slope {slope:.3} (target -0.5 ± 0.1)",
            err.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn fit_recovery() -> Verdict {
    let mut worst_exact = 0.0f64;
    for (i, &exp) in [0.1, 0.5, 0.88, 1.7, 3.0].iter().enumerate() {
        let pre = 0.3 * i as f64 - 0.5;
        let pts: Vec<(f64, f64)> = (1..=200).map(|x| (x as f64, (pre - exp * (x as f64).ln()).exp())).collect();
        worst_exact = worst_exact.max((fit_power_law(&pts, None).unwrap().exponent - exp).abs());
    }

    let xs = log_space(1.0, 100.0, 50);
    let noisy_mean = (0..100u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = xs
                .iter()
                .map(|&x: &f64| (x, x.powf(-0.5) * (1.0 + rng.random_range(-0.05..0.05))))
                .collect();
            fit_power_law(&pts, None).unwrap().exponent
        })
        .sum::<f64>()
        / 100.0;

    let mut asym_ok = true;
    let mut worst_delta = 0.0f64;
    for (h, d) in [(0.0, 0.5), (1.23, 0.19), (2.0, 0.3), (3.5, 1.1)] {
        let pts: Vec<(f64, f64)> = log_space(1e2, 1e8, 25).into_iter().map(|p: f64| (p, h + 0.7 * p.powf(-d))).collect();
        let f = fit_asymptote(&pts, &AsymptoteOptions::default()).unwrap();
        asym_ok &= (f.asymptote - h).abs() < 1e-9;
        worst_delta = worst_delta.max((f.delta - d).abs());
    }
    verdict(
        worst_exact <= 1e-9 && (noisy_mean - 0.5).abs() <= 0.03 && asym_ok && worst_delta < 1e-6,
        format!(
            "noiseless worst error {worst_exact:.1e}; mean exponent under ±5% noise {noisy_mean:.4} (true 0.5); asymptote on grid: {asym_ok}, worst delta error {worst_delta:.1e}"
        ),
    )
}

fn ansatz(delta: f64, max_n: usize, p_grid: Vec<f64>) -> AnsatzSpec<f64> {
    AnsatzSpec {
        exponents: LanguageExponents {
            gamma: GAMMA,
            beta: BETA,
            h_inf: 0.0,
            h_0: 1.0,
            c: 1.0,
        },
        amplitude: 1.0,
        delta: DeltaSpec::Scalar(delta),
        shape: TransitionShape::Hard,
        max_n,
        p_grid,
        dataset: "synthetic".into(),
        arch: "ansatz".into(),
    }
}

/// Slope of the autoregressive loss over four decades of P, with a context
/// long enough that every horizon stays inside it.
fn loss_exponent() -> Verdict {
    let slope = |delta: f64| {
        let set = synthesize_curves(&ansatz(delta, 131_072, log_space(1e4, 1e8, 21))).unwrap();
        let pts: Vec<(f64, f64)> = set.curves().iter().map(|c| (c.tokens, c.autoregressive_loss())).collect();
        fit_power_law(&pts, None).unwrap().exponent
    };
    let fast = slope(1.0);
    let slow = slope(0.1);
    verdict(
        (fast - 0.19).abs() <= 0.02 && (slow - 0.10).abs() <= 0.02,
        format!("delta 1.0 -> {fast:.4} (target 0.19 ± 0.02); delta 0.1 -> {slow:.4} (target 0.10 ± 0.02)"),
    )
}

fn curve_collapse() -> Verdict {
    let keep = [1024, 2048, 4096];
    let grid = log_space(1e-2 * 1024f64.powf(2.0 * BETA), 1e3 * 4096f64.powf(2.0 * BETA), 400);
    let all = synthesize_curves(&ansatz(1.0, 4096, grid)).unwrap();
    let set = LossCurveSet::new(all.records.into_iter().filter(|r| keep.contains(&r.n)).collect());
    let right = collapse_report(&set, GAMMA, BETA, None, 32).unwrap().dispersion_score;
    let wrong = collapse_report(&set, 2.0 * GAMMA, BETA, None, 32).unwrap().dispersion_score;
    let gammas: Vec<f64> = (0..=10).map(|i| 0.24 + 0.02 * i as f64).collect();
    let betas: Vec<f64> = (0..=10).map(|i| 0.78 + 0.02 * i as f64).collect();
    let scan = exponent_scan(&set, &gammas, &betas, 0.0, 32).unwrap();
    let found = (scan.best_gamma - GAMMA).abs() < 1e-9 && (scan.best_beta - BETA).abs() < 1e-9;
    verdict(
        right < 1e-3 && wrong >= 10.0 * right && found,
        format!(
            "dispersion {right:.2e} with true exponents, {wrong:.2e} with 2γ; scan argmin ({:.2}, {:.2}) on a 0.02 grid",
            scan.best_gamma, scan.best_beta
        ),
    )
}

/// Horizons from prefixes of copy-process corpora against the dense-oracle
/// correlation exponent over the lags those horizons cover.
fn horizon_law() -> Verdict {
    let lags: Vec<usize> = (1..=64).collect();
    let prefixes: Vec<usize> = log_space(1e4, 1e6, 9).into_iter().map(|x: f64| x.round() as usize).collect();
    let seeds = 5;
    let v = 9;
    let mut points = Vec::new();
    let mut norms = vec![0.0; lags.len()];
    for seed in 0..seeds {
        let s = generate(&SynthSpec {
            vocab_size: v - 1,
            length: 10_000_000,
            seed,
            process: Process::PowerlawCopy {
                copy_prob: 0.5,
                lag_exponent: 0.5,
                noise_prob: 0.0,
                base: None,
                max_lag: 1024,
            },
            doc_length: DocLength::Single,
        })
        .unwrap();
        let r = empirical_horizon::<f64>(
            &s,
            &prefixes,
            &lags,
            0.5,
            1,
            &PowerIterConfig::default(),
            BoundaryMode::Wall,
            HorizonRule::Contiguous,
        )
        .unwrap();
        points.extend(r.points());
        for c in count_pairs(&s, &lags, BoundaryMode::Wall).unwrap() {
            let table = common::dense_counts_from(&c, v);
            norms[c.lag - 1] += jacobi_norm(&dense_covariance(&table, v).unwrap()) / seeds as f64;
        }
    }
    let slope = -fit_power_law(&points, None).unwrap().exponent;
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let oracle_pts: Vec<(f64, f64)> = lags.iter().zip(&norms).map(|(&n, &y)| (n as f64, y)).collect();
    let beta = fit_power_law(&oracle_pts, Some(FitRange::new(lo, hi.max(lo + 2.0)).unwrap()))
        .unwrap()
        .exponent;
    let want = 1.0 / (2.0 * beta);
    verdict(
        (slope - want).abs() <= 0.1,
        format!(
            "{} (P, n*) points, n* in [{lo}, {hi}]; slope {slope:.3} vs 1/(2β) = {want:.3} with oracle β = {beta:.3} (tolerance 0.1)",
            points.len()
        ),
    )
}

/// Correlation exponents of the two reference corpora, when their V = 8192
/// token streams are supplied.
fn corpus_exponents() -> Verdict {
    let tiny = std::env::var_os(TINYSTORIES_ENV).map(PathBuf::from);
    let wiki = std::env::var_os(WIKITEXT_ENV).map(PathBuf::from);
    if tiny.is_none() && wiki.is_none() {
        return Verdict::NotRun(format!(
            "needs TinyStories and WikiText encoded at V = 8192; set {TINYSTORIES_ENV} and {WIKITEXT_ENV} to tokens.bin files"
        ));
    }
    let mut cfg = PipelineConfig::default();
    cfg.covstats.max_lag = 512;
    let mut parts = Vec::new();
    let mut ok = true;
    if let Some(path) = tiny {
        match TokenStream::load(&path).map_err(|e| e.to_string()).and_then(|s| {
            run_measure_beta(&s, &cfg).map_err(|e| e.to_string())
        }) {
            Ok(m) => {
                ok &= (m.beta - 0.88).abs() <= 0.05;
                parts.push(format!("TinyStories β = {:.3} (target 0.88 ± 0.05)", m.beta));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("TinyStories: {e}"));
            }
        }
    } else {
        ok = false;
        parts.push(format!("TinyStories not supplied ({TINYSTORIES_ENV})"));
    }
    if let Some(path) = wiki {
        let mut cfg = cfg.clone();
        cfg.beta_fit.broken = true;
        match TokenStream::load(&path).map_err(|e| e.to_string()).and_then(|s| {
            run_measure_beta(&s, &cfg).map_err(|e| e.to_string())
        }) {
            Ok(m) => match m.broken {
                Some(b) => {
                    ok &= (b.exponent_left - 0.94).abs() <= 0.05;
                    parts.push(format!(
                        "WikiText short-lag β = {:.3} below lag {:.0} (target 0.94 ± 0.05)",
                        b.exponent_left, b.breakpoint
                    ));
                }
                None => {
                    ok = false;
                    parts.push("WikiText: broken fit unavailable".into());
                }
            },
            Err(e) => {
                ok = false;
                parts.push(format!("WikiText: {e}"));
            }
        }
    } else {
        ok = false;
        parts.push(format!("WikiText not supplied ({WIKITEXT_ENV})"));
    }
    verdict(ok, parts.join("; "))
}
