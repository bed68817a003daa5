use langscale::collapse::{collapse_report, dispersion, exponent_scan, rescale, CollapseError};
use langscale::scalar::log_space;
use langscale::theory::{synthesize_curves, AnsatzSpec, DeltaSpec, LanguageExponents, LossCurveSet, TransitionShape};

const GAMMA: f64 = 0.34;
const BETA: f64 = 0.88;

/// Ansatz curves at large horizons, where the finite sum has settled onto its
/// scaling form, sampled from well below the first threshold to well above
/// the last.
fn family() -> LossCurveSet<f64> {
    let keep = [1024, 2048, 4096];
    let spec = AnsatzSpec {
        exponents: LanguageExponents {
            gamma: GAMMA,
            beta: BETA,
            h_inf: 0.0,
            h_0: 1.0,
            c: 1.0,
        },
        amplitude: 1.0,
        delta: DeltaSpec::Scalar(1.0),
        shape: TransitionShape::Hard,
        max_n: 4096,
        p_grid: log_space(1e-2 * 1024f64.powf(2.0 * BETA), 1e3 * 4096f64.powf(2.0 * BETA), 400),
        dataset: "synthetic".into(),
        arch: "ansatz".into(),
    };
    let all = synthesize_curves(&spec).unwrap();
    LossCurveSet::new(all.records.into_iter().filter(|r| keep.contains(&r.n)).collect())
}

#[test]
fn true_exponents_collapse_the_family() {
    let set = family();
    let rep = collapse_report(&set, GAMMA, BETA, None, 32).unwrap();
    assert!(rep.dispersion_score < 1e-3, "score {}", rep.dispersion_score);
    for r in &rep.per_curve_residuals {
        assert!(r.max_abs_relative < 5e-3, "n {} residual {}", r.n, r.max_abs_relative);
    }
    assert_eq!(rep.master_curve.len(), 32);
}

#[test]
fn wrong_exponents_spread_the_family() {
    let set = family();
    let right = collapse_report(&set, GAMMA, BETA, None, 32).unwrap().dispersion_score;
    for (g, b) in [(2.0 * GAMMA, BETA), (GAMMA, 1.2 * BETA), (GAMMA, 0.8 * BETA), (0.5 * GAMMA, BETA)] {
        let wrong = collapse_report(&set, g, b, None, 32).unwrap().dispersion_score;
        assert!(wrong > 10.0 * right, "({g}, {b}): {wrong} vs {right}");
    }
}

#[test]
fn scan_finds_the_true_pair() {
    let set = family();
    let gammas: Vec<f64> = (0..=10).map(|i| 0.24 + 0.02 * i as f64).collect();
    let betas: Vec<f64> = (0..=10).map(|i| 0.78 + 0.02 * i as f64).collect();
    let scan = exponent_scan(&set, &gammas, &betas, 0.0, 32).unwrap();
    assert!((scan.best_gamma - GAMMA).abs() < 1e-9, "gamma {}", scan.best_gamma);
    assert!((scan.best_beta - BETA).abs() < 1e-9, "beta {}", scan.best_beta);
    assert_eq!(scan.scores.len(), 11);
    assert!(scan.scores.iter().flatten().all(Option::is_some));
}

#[test]
fn rescaling_keeps_each_curve_ordered() {
    let set = family();
    for c in rescale(&set, 0.5, 1.1, 0.0).unwrap() {
        assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0));
        let scale = (c.n as f64).powf(0.5);
        let raw = set.records.iter().find(|r| r.n == c.n).unwrap();
        assert!((c.points[0].1 - scale * raw.loss).abs() < 1e-12);
    }
}

#[test]
fn a_single_curve_cannot_be_scored() {
    let set = family();
    let one = LossCurveSet::new(set.records.into_iter().filter(|r| r.n == 2048).collect());
    assert!(matches!(
        exponent_scan(&one, &[0.3, 0.34], &[0.88], 0.0, 16),
        Err(CollapseError::TooFewCurves(1))
    ));
    let fam = rescale(&one, GAMMA, BETA, 0.0).unwrap();
    assert!(dispersion(&fam, 16).is_err());
}
