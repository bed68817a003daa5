mod common;

use common::{covariance_error, dense_counts_from, dense_covariance, jacobi_norm, lambda_chain, loglog_slope};
use langscale::covstats::{count_pairs, summarize, BoundaryMode, LagCounter};
use langscale::fitkit::fit_power_law;
use langscale::linalg::PowerIterConfig;
use langscale::pipeline::{run_measure_beta, PipelineConfig};
use langscale::synthlang::{analytic_covariance, generate, DocLength, Process, SynthSpec};

fn iid(seed: u64, length: usize) -> SynthSpec {
    SynthSpec {
        vocab_size: 50,
        length,
        seed,
        process: Process::Iid { probs: None },
        doc_length: DocLength::Single,
    }
}

fn markov(transition: Vec<Vec<f64>>, seed: u64, length: usize) -> SynthSpec {
    SynthSpec {
        vocab_size: transition.len(),
        length,
        seed,
        process: Process::Markov { transition },
        doc_length: DocLength::Single,
    }
}

fn copy_process(seed: u64, length: usize) -> SynthSpec {
    SynthSpec {
        vocab_size: 20,
        length,
        seed,
        process: Process::PowerlawCopy {
            copy_prob: 0.9,
            lag_exponent: 0.8,
            noise_prob: 0.0,
            base: None,
            max_lag: 1024,
        },
        doc_length: DocLength::Single,
    }
}

const PI: [f64; 5] = [0.35, 0.25, 0.2, 0.12, 0.08];

fn op_norms(spec: &SynthSpec, lags: &[usize]) -> Vec<f64> {
    let s = generate(spec).unwrap();
    let counts = count_pairs(&s, lags, BoundaryMode::Wall).unwrap();
    summarize::<f64>(&counts, &PowerIterConfig::default())
        .unwrap()
        .iter()
        .map(|x| x.op_norm)
        .collect()
}

#[test]
fn independent_tokens_stay_at_the_noise_floor() {
    let lags: Vec<usize> = (1..=16).collect();
    let per_seed: Vec<Vec<f64>> = (1..=20).map(|seed| op_norms(&iid(seed, 1_000_000), &lags)).collect();
    let floor = per_seed.iter().flatten().sum::<f64>() / (20 * lags.len()) as f64;
    let probe = op_norms(&iid(0, 1_000_000), &lags);
    for (lag, x) in lags.iter().zip(&probe) {
        assert!(*x < 3.0 * floor, "lag {lag}: {x} vs floor {floor}");
    }
    // the floor itself shrinks like P^−1/2
    let small: f64 = (1..=20)
        .map(|seed| op_norms(&iid(seed, 100_000), &lags).iter().sum::<f64>() / lags.len() as f64)
        .sum::<f64>()
        / 20.0;
    let ratio = small / floor;
    assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.15, "floor ratio {ratio}");
}

#[test]
fn markov_norms_decay_geometrically() {
    let lags: Vec<usize> = (1..=10).collect();
    let norms = op_norms(&markov(lambda_chain(&PI, 0.8), 3, 2_000_000), &lags);
    let pts: Vec<(f64, f64)> = lags.iter().zip(&norms).map(|(&n, &y)| (n as f64, y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let want = 0.8f64.ln();
    assert!((slope / want - 1.0).abs() < 0.05, "slope {slope} vs {want}");
}

#[test]
fn markov_covariance_matches_transition_powers() {
    let t = lambda_chain(&PI, 0.8);
    let lags: Vec<usize> = (1..=20).collect();
    let exact: Vec<Vec<Vec<f64>>> = analytic_covariance::<f64>(&t, &lags)
        .unwrap()
        .iter()
        .map(|m| m.to_rows())
        .collect();
    // closed form for this chain
    for (n, m) in lags.iter().zip(&exact) {
        for a in 0..5 {
            for b in 0..5 {
                let want = 0.8f64.powi(*n as i32) * PI[a] * (if a == b { 1.0 } else { 0.0 } - PI[b]);
                assert!((m[a][b] - want).abs() < 1e-14);
            }
        }
    }

    // empirical estimates close in at rate P^−1/2
    let sizes = [10_000usize, 100_000, 1_000_000];
    let mut err = vec![0.0; sizes.len()];
    for seed in 0..3 {
        let s = generate(&markov(t.clone(), 100 + seed, *sizes.last().unwrap())).unwrap();
        let mut counter = LagCounter::new(&lags, s.vocab_size() as usize, BoundaryMode::Wall).unwrap();
        let mut done = 0;
        for (k, &p) in sizes.iter().enumerate() {
            counter.extend(&s.ids()[done..p]);
            done = p;
            for (c, e) in counter.snapshot().iter().zip(&exact) {
                err[k] += covariance_error(c, e);
            }
        }
    }
    let pts: Vec<(f64, f64)> = sizes.iter().zip(&err).map(|(&p, &e)| (p as f64, e)).collect();
    let slope = loglog_slope(&pts);
    assert!((slope + 0.5).abs() < 0.1, "error slope {slope}");
}

#[test]
fn copy_process_exponent_agrees_with_dense_oracle() {
    let lags: Vec<usize> = (1..=256).collect();
    let v = 21;
    let mut mean = vec![0.0; lags.len()];
    for seed in 0..5 {
        let s = generate(&copy_process(1000 + seed, 10_000_000)).unwrap();
        for (i, c) in count_pairs(&s, &lags, BoundaryMode::Wall).unwrap().iter().enumerate() {
            mean[i] += jacobi_norm(&dense_covariance(&dense_counts_from(c, v), v).unwrap()) / 5.0;
        }
    }
    let oracle_pts: Vec<(f64, f64)> = lags.iter().zip(&mean).map(|(&n, &y)| (n as f64, y)).collect();
    let oracle = fit_power_law(&oracle_pts, None).unwrap().exponent;

    let mut cfg = PipelineConfig::default();
    cfg.covstats.max_lag = 256;
    let measured = run_measure_beta(&generate(&copy_process(7, 10_000_000)).unwrap(), &cfg).unwrap();
    assert!((measured.beta - oracle).abs() < 0.1, "measured {} vs oracle {oracle}", measured.beta);
}

#[test]
fn generation_is_seed_deterministic() {
    for spec in [iid(4, 5_000), markov(lambda_chain(&PI, 0.5), 4, 5_000), copy_process(4, 5_000)] {
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(a, generate(&other).unwrap());
    }
}

#[test]
fn documents_follow_the_length_law() {
    let mut spec = copy_process(9, 50_000);
    spec.doc_length = DocLength::Fixed { length: 100 };
    let s = generate(&spec).unwrap();
    assert_eq!(s.num_documents(), 500);
    assert!(s.documents().all(|d| d.len() == 100));
    assert_eq!(s.total_tokens(), 50_000 + 499);
}
