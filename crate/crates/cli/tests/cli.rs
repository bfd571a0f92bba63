use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dosetree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosetree"))
        .args(args)
        .env_remove("DOSETREE_OUT")
        .env_remove("DOSETREE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = dosetree(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Simulated 1D data plus a short two-chain fit.
struct Fitted {
    _dir: tempfile::TempDir,
    sim: PathBuf,
    fit: PathBuf,
}

impl Fitted {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let sim = dir.path().join("sim");
        let fit = dir.path().join("fit");
        ok(&["simulate", "--seed", "5", "--out", s(&sim)]);
        ok(&[
            "fit",
            "--data",
            s(&sim.join("responses.csv")),
            "--covariates",
            s(&sim.join("covariates.csv")),
            "--iterations",
            "100",
            "--burn-in",
            "50",
            "--thin",
            "5",
            "--chains",
            "2",
            "--out",
            s(&fit),
        ]);
        Self { _dir: dir, sim, fit }
    }

    fn chain(&self) -> PathBuf {
        self.fit.join("chain/posterior.bin")
    }

    fn data_args(&self) -> [String; 4] {
        [
            "--data".into(),
            s(&self.sim.join("responses.csv")).into(),
            "--covariates".into(),
            s(&self.sim.join("covariates.csv")).into(),
        ]
    }
}

#[test]
fn pipeline_writes_reports() {
    let f = Fitted::new();
    for name in ["traces", "diagnostics", "acceptance", "splits"] {
        assert!(f.fit.join(format!("tables/{name}.csv")).is_file(), "{name}");
    }
    assert!(f.fit.join("figures/trace_sigma2.svg").is_file());
    let manifest = std::fs::read_to_string(f.fit.join("run.manifest")).unwrap();
    assert!(manifest.contains("command = fit"));
    assert!(manifest.contains("config.iterations = 100"));

    // 100 sweeps, 50 burn-in, thin 5: 10 stored draws per chain.
    let traces = csv_rows(&f.fit.join("tables/traces.csv"));
    for c in ["0", "1"] {
        assert_eq!(traces.iter().filter(|r| r[0] == c).count(), 10);
    }

    let out = f.fit.parent().unwrap().join("ppc");
    let mut args = vec!["ppc".to_string(), "--chain".into(), s(&f.chain()).into()];
    args.extend(f.data_args());
    args.extend(["--out".into(), s(&out).into()]);
    let stdout = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(stdout.contains("coverage"));
    let cov = csv_rows(&out.join("tables/coverage.csv"));
    assert_eq!(cov.len(), 24);

    let out = f.fit.parent().unwrap().join("pd");
    ok(&["pd", "--chain", s(&f.chain()), "--vars", "x1", "--grid", "7", "--out", s(&out)]);
    let pd = csv_rows(&out.join("tables/pd_x1.csv"));
    assert_eq!(pd.len(), 7 * 11);
    ok(&["pd", "--chain", s(&f.chain()), "--vars", "x1,x3", "--at", "12.5", "--grid", "5", "--out", s(&out)]);
    assert_eq!(csv_rows(&out.join("tables/pd_x1_x3.csv")).len(), 25);
    assert!(out.join("figures/pd_x1_x3.svg").is_file());

    let out = f.fit.parent().unwrap().join("sens");
    ok(&["sens", "--chain", s(&f.chain()), "--n-base", "64", "--max-draws", "5", "--mode", "averaged", "--out", s(&out)]);
    let sens = csv_rows(&out.join("tables/sensitivity.csv"));
    assert_eq!(sens.len(), 6);
    for row in &sens {
        for v in &row[1..] {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert!(out.join("figures/sensitivity.svg").is_file());
}

#[test]
fn narrower_level_gives_narrower_bands() {
    let f = Fitted::new();
    let width = |level: &str| {
        let out = f.fit.parent().unwrap().join(format!("pred{level}"));
        ok(&[
            "predict",
            "--chain",
            s(&f.chain()),
            "--covariates",
            s(&f.sim.join("covariates.csv")),
            "--level",
            level,
            "--out",
            s(&out),
        ]);
        let rows = csv_rows(&out.join("tables/predictive.csv"));
        rows.iter().map(|r| r[5].parse::<f64>().unwrap() - r[4].parse::<f64>().unwrap()).sum::<f64>()
    };
    assert!(width("0.5") < width("0.9"));
}

#[test]
fn pd_rejects_points_off_the_grid_and_unknown_names() {
    let f = Fitted::new();
    let out = f.fit.parent().unwrap().join("pd");
    let o = dosetree(&["pd", "--chain", s(&f.chain()), "--vars", "x1", "--at", "5000", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside"));
    let o = dosetree(&["pd", "--chain", s(&f.chain()), "--vars", "nope", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn missing_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = dosetree(&["fit", "--data", s(&missing), "--covariates", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn bad_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--out", s(&sim)]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "iterations = 10\nbogus = 1\n").unwrap();
    let o = dosetree(&[
        "fit",
        "--data",
        s(&sim.join("responses.csv")),
        "--covariates",
        s(&sim.join("covariates.csv")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn loco_reports_one_row_per_particle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.txt");
    std::fs::write(&spec, "n_particles = 3\nn_covariates = 2\ntree = (leaf)\ncurves = 0,1.5,5,1.2\n").unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--spec", s(&spec), "--seed", "2", "--out", s(&sim)]);
    let out = dir.path().join("loco");
    ok(&[
        "loco",
        "--data",
        s(&sim.join("responses.csv")),
        "--covariates",
        s(&sim.join("covariates.csv")),
        "--iterations",
        "200",
        "--burn-in",
        "100",
        "--thin",
        "4",
        "--chains",
        "1",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("tables/loco.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["P01", "P02", "P03"]);
    assert!(out.join("flagged.txt").is_file());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--surface", "--isolated", "--seed", "9", "--out", s(&a)]);
    ok(&["simulate", "--surface", "--isolated", "--seed", "9", "--out", s(&b)]);
    for f in ["responses.csv", "covariates.csv", "tables/truth.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let header = std::fs::read_to_string(a.join("responses.csv")).unwrap();
    assert!(header.starts_with("particle,replicate,dose,time,response"));
}

#[test]
fn help_documents_flags() {
    let top = ok(&["--help"]);
    for cmd in ["fit", "predict", "ppc", "pd", "sens", "loco", "simulate"] {
        assert!(top.contains(cmd), "{cmd}");
    }
    let fit = ok(&["fit", "--help"]);
    for flag in ["--data", "--covariates", "--config", "--iterations", "--burn-in", "--thin", "--chains", "--seed", "--out", "--threads"] {
        assert!(fit.contains(flag), "{flag}");
    }
    let sens = ok(&["sens", "--help"]);
    for flag in ["--n-base", "--mode", "--max-draws", "--noise"] {
        assert!(sens.contains(flag), "{flag}");
    }
}
