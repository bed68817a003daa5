use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn langscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langscale"))
        .args(args)
        .env_remove("LANGSCALE_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = langscale(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    langscale(args).status.code().expect("exited normally")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn corpus(&self) -> PathBuf {
        let spec = self.write(
            "corpus.json",
            r#"{"vocab_size": 12, "length": 200000, "seed": 4,
                "process": {"kind": "powerlaw_copy", "copy_prob": 0.9, "lag_exponent": 0.8},
                "doc_length": {"kind": "geometric", "mean": 5000}}"#,
        );
        let out = self.path("corpus");
        ok(&["synth", "corpus", "--spec", s(&spec), "--out", s(&out)]);
        out.join("tokens.bin")
    }

    fn curves(&self) -> PathBuf {
        let spec = self.write(
            "curves.json",
            r#"{"exponents": {"gamma": 0.34, "beta": 0.88, "h_inf": 0.0, "h_0": 1.0, "c": 1.0},
                "amplitude": 1.0, "delta": 1.0, "max_n": 32,
                "p_grid": [100, 1000, 10000, 100000, 1000000, 10000000]}"#,
        );
        let out = self.path("curves");
        ok(&["synth", "curves", "--spec", s(&spec), "--out", s(&out)]);
        out.join("losses.csv")
    }

    fn config(&self, text: &str) -> PathBuf {
        self.write("config.toml", text)
    }
}

#[test]
fn tokenize_writes_stream_and_vocabulary() {
    let f = Fixture::new();
    let text = "the cat sat on the mat\n\nthe dog sat on the log\n\nthe cat and the dog";
    let input = f.write("text.txt", text);
    let out = f.path("tok");
    ok(&["tokenize", "--input", s(&input), "--vocab-size", "270", "--out", s(&out)]);
    let vocab = json(out.join("vocab.json"));
    assert_eq!(vocab["size"], 270);
    assert_eq!(vocab["specials"]["eos"], 269);
    let raw = std::fs::read(out.join("tokens.bin")).unwrap();
    assert_eq!(&raw[..4], b"LSTK");

    // reusing the vocabulary gives the same stream
    let again = f.path("tok2");
    let vocab_path = out.join("vocab.json");
    ok(&["tokenize", "--input", s(&input), "--vocab", s(&vocab_path), "--out", s(&again)]);
    assert_eq!(raw, std::fs::read(again.join("tokens.bin")).unwrap());
}

#[test]
fn covstats_then_fit_the_summaries() {
    let f = Fixture::new();
    let tokens = f.corpus();
    let out = f.path("cov");
    let stdout = ok(&["covstats", "--tokens", s(&tokens), "--max-lag", "32", "--out", s(&out)]);
    assert!(stdout.contains("beta = "));
    let beta = json(out.join("beta.json"));
    assert!(beta["beta"].as_f64().unwrap() > 0.0);
    let lines = std::fs::read_to_string(out.join("covstats.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 32);
    assert!(std::fs::read_to_string(out.join("plots/beta.svg")).unwrap().starts_with("<svg"));

    let summaries = out.join("covstats.jsonl");
    for form in ["powerlaw", "broken"] {
        let fit_out = f.path(&format!("fit-{form}"));
        ok(&["fit", form, "--points", s(&summaries), "--range", "1:32", "--out", s(&fit_out)]);
        assert_eq!(json(fit_out.join("fit.json"))["form"], form);
    }
}

#[test]
fn fit_forms_on_csv_points_and_loss_tables() {
    let f = Fixture::new();
    let mut csv = String::new();
    for i in 0..20 {
        let p = 10f64.powf(2.0 + 0.3 * i as f64);
        csv.push_str(&format!("{p},{}\n", 1.5 + 2.0 * p.powf(-0.4)));
    }
    let points = f.write("points.csv", &csv);
    let out = f.path("asym");
    ok(&["fit", "asymptote", "--points", s(&points), "--out", s(&out)]);
    let fit = json(out.join("fit.json"));
    assert!((fit["params"]["asymptote"].as_f64().unwrap() - 1.5).abs() < 1e-9, "{fit}");

    let losses = f.curves();
    let out = f.path("gamma");
    let stdout = ok(&["fit", "powerlaw", "--losses", s(&losses), "--out", s(&out)]);
    assert!(stdout.contains("gamma = "));
    let g = json(out.join("gamma.json"));
    assert!((g["gamma"].as_f64().unwrap() - 0.34).abs() < 0.02);
}

#[test]
fn predict_reports_closed_forms() {
    let f = Fixture::new();
    let out = f.path("pred");
    ok(&[
        "predict", "--gamma", "0.34", "--beta", "0.88", "--c", "1", "--delta", "1", "--tokens", "1e4,1e8", "--out",
        s(&out),
    ]);
    let p = json(out.join("prediction.json"));
    assert!((p["alpha_pred"].as_f64().unwrap() - 0.34 / 1.76).abs() < 1e-12);
    assert_eq!(p["regime"]["regime"], "horizon_limited");
}

#[test]
fn collapse_with_scan() {
    let f = Fixture::new();
    let losses = f.curves();
    let cfg = f.config("[collapse]\ngamma_grid = [0.3, 0.34, 0.38]\nbeta_grid = [0.84, 0.88, 0.92]\n");
    let out = f.path("col");
    ok(&[
        "--config", s(&cfg), "collapse", "--losses", s(&losses), "--gamma", "0.34", "--beta", "0.88", "--scan",
        "--out", s(&out),
    ]);
    let c = json(out.join("collapse.json"));
    assert!(c["dispersion_score"].as_f64().unwrap() >= 0.0);
    assert!(out.join("scan.json").exists());
    assert!(out.join("plots/collapse.svg").exists());
}

#[test]
fn report_with_both_inputs_and_with_one() {
    let f = Fixture::new();
    let tokens = f.corpus();
    let losses = f.curves();
    let cfg = f.config("[covstats]\nmax_lag = 32\n");
    let out = f.path("rep");
    ok(&["--config", s(&cfg), "report", "--tokens", s(&tokens), "--losses", s(&losses), "--out", s(&out)]);
    for file in ["report.json", "scaling.json", "collapse.json", "covstats.jsonl", "manifest.json"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let scaling = json(out.join("scaling.json"));
    assert!(scaling["alpha_pred"].as_f64().unwrap() > 0.0);

    let partial = f.path("rep-partial");
    let err = String::from_utf8(
        langscale(&["--config", s(&cfg), "report", "--tokens", s(&tokens), "--out", s(&partial)]).stderr,
    )
    .unwrap();
    assert!(err.contains("gap: gamma"), "{err}");
    let rep = json(partial.join("report.json"));
    assert!(!rep["beta"].is_null());
    assert!(rep["gamma"].is_null());
}

#[test]
fn selftest_builtin_and_manifest_replay() {
    let f = Fixture::new();
    let work = f.path("work");
    let stdout = ok(&["selftest", "--work", s(&work)]);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");

    f.curves();
    let manifest = f.path("curves/manifest.json");
    let stdout = ok(&["selftest", "--manifest", s(&manifest), "--work", s(&f.path("replay"))]);
    assert!(stdout.contains("PASS"));

    // an edited input no longer matches the recorded run
    let spec = f.path("curves.json");
    let edited = std::fs::read_to_string(&spec).unwrap().replace("0.34", "0.35");
    std::fs::write(&spec, edited).unwrap();
    let out = langscale(&["selftest", "--manifest", s(&manifest), "--work", s(&f.path("replay2"))]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL input changed"));
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let f = Fixture::new();
    let tokens = f.corpus();
    let out = f.path("x");

    // 2: configuration
    let bad = f.config("[covstats]\nmax_lag = 0\n");
    assert_eq!(code(&["--config", s(&bad), "covstats", "--tokens", s(&tokens), "--out", s(&out)]), 2);
    let unknown = f.write("unknown.toml", "[covstats]\nmystery = 1\n");
    assert_eq!(code(&["--config", s(&unknown), "covstats", "--tokens", s(&tokens), "--out", s(&out)]), 2);
    assert_eq!(code(&["fit", "cubic", "--points", "p.csv", "--out", s(&out)]), 2);

    // 3: data
    assert_eq!(code(&["covstats", "--tokens", s(&f.path("missing.bin")), "--out", s(&out)]), 3);
    let garbage = f.write("garbage.bin", "not a token stream");
    assert_eq!(code(&["covstats", "--tokens", s(&garbage), "--out", s(&out)]), 3);
    let bad_csv = f.write("bad.csv", "dataset,arch,T,P,n\nx,y,1,2,3\n");
    assert_eq!(code(&["fit", "powerlaw", "--losses", s(&bad_csv), "--out", s(&out)]), 3);

    // 4: numerical non-convergence
    let strict = f.config("[covstats]\nmax_lag = 8\n[power]\nmax_iters = 1\ntol = 1e-300\n");
    assert_eq!(code(&["--config", s(&strict), "covstats", "--tokens", s(&tokens), "--out", s(&out)]), 4);

    // 0
    assert_eq!(code(&["predict", "--gamma", "0.3", "--beta", "0.9", "--out", s(&out)]), 0);
}
