//! End-to-end runs of the `whisker` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_whisker"));
    c.env_remove("WHISKER_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const MODEL_A: &str = "grid = 64\n[model]\nfamily = \"A\"\neps = 0.005\n";

#[test]
fn exact_seed_of_the_product_map() {
    let d = TempDir::new().unwrap();
    write(d.path(), "t.toml", "grid = 32\n[model]\nfamily = \"T\"\nmu = 2.0\n");
    let o = run(&["solve", "t.toml", "--out", "out", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&d.path().join("out/report.jsonl"));
    let last = recs.last().unwrap();
    assert!(last["residual"].as_f64().unwrap() < 1e-13);
    for key in ["iter", "residual", "lambda_norm", "avgA_cond", "avgQ_cond", "mu1", "mu2", "mu3", "isotropy", "center_dist"] {
        assert!(last.get(key).is_some(), "missing {key}");
    }
    for f in ["torus.fourier", "torus.json", "samples.csv", "splitting_s.fourier", "splitting_c.fourier", "splitting_u.fourier"] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(d.path().join("out/samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
    assert!(csv.starts_with("theta_1,K_1,K_2,K_3,K_4\n"));
    let head = fs::read_to_string(d.path().join("out/torus.fourier")).unwrap();
    assert!(head.starts_with("fourier 1 4 32\n"));
}

#[test]
fn continuation_writes_one_torus_per_value() {
    let d = TempDir::new().unwrap();
    write(
        d.path(),
        "c.toml",
        "grid = 32\nout = \"cont\"\n[model]\nfamily = \"A\"\n[continue]\nparam = \"eps\"\nvalues = [0.001, 0.002, 0.003, 0.004, 0.005]\npredictor = \"secant\"\n",
    );
    let o = run(&["continue", "c.toml", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = d.path().join("cont");
    for i in 0..5 {
        assert!(out.join(format!("torus_{i:03}.fourier")).exists());
    }
    let csv = fs::read_to_string(out.join("lipschitz.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[1].ends_with(','));
    for r in &rows[2..] {
        let lip: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(lip.is_finite() && lip > 0.0);
    }
}

#[test]
fn grid_that_is_not_a_power_of_two_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.toml", "grid = 100\n[model]\nfamily = \"T\"\n");
    let o = run(&["solve", "g.toml"], d.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("g.toml:1: field `grid`"), "{}", stderr(&o));
    write(d.path(), "ok.toml", "[model]\nfamily = \"T\"\n");
    assert_eq!(code(&run(&["solve", "ok.toml", "--grid", "48"], d.path())), 1);
}

#[test]
fn malformed_config_reports_line_and_field() {
    let d = TempDir::new().unwrap();
    write(d.path(), "m.toml", "grid = 32\n[model]\nfamily = \"A\"\n\n[newton]\nmax_iters = 3\n");
    let o = run(&["solve", "m.toml"], d.path());
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("m.toml:6") && e.contains("max_iters"), "{e}");
    write(d.path(), "n.toml", "[model]\nfamily = \"A\"\n[newton]\nsolve_tol = 0.0\n");
    let e = stderr(&run(&["solve", "n.toml"], d.path()));
    assert!(e.contains("n.toml:4: field `newton.solve_tol`"), "{e}");
}

#[test]
fn usage_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", MODEL_A);
    assert_eq!(code(&run(&["solve", "missing.toml"], d.path())), 1);
    assert_eq!(code(&run(&["explode", "a.toml"], d.path())), 1);
    assert_eq!(code(&run(&["verify", "a.toml"], d.path())), 1);
    assert_eq!(code(&run(&["solve", "a.toml", "--seed-torus", "nope.fourier"], d.path())), 1);
    let o = bin().args(["solve", "a.toml"]).env("WHISKER_THREADS", "many").current_dir(d.path()).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_accepts_a_converged_torus_and_catches_damage() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", MODEL_A);
    let o = run(&["solve", "a.toml", "--out", "s", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["verify", "a.toml", "--seed-torus", "s/torus.fourier", "--out", "v"], d.path());
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("shadowing"));

    // one coefficient off by 1e-3
    let text = fs::read_to_string(d.path().join("s/torus.fourier")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = 1 + 32 + 3;
    let mut parts: Vec<String> = lines[row].split_whitespace().map(String::from).collect();
    let re: f64 = parts[1].parse().unwrap();
    parts[1] = format!("{:.16e}", re + 1e-3);
    lines[row] = parts.join(" ");
    fs::create_dir(d.path().join("bad")).unwrap();
    fs::write(d.path().join("bad/torus.fourier"), lines.join("\n") + "\n").unwrap();
    fs::copy(d.path().join("s/torus.json"), d.path().join("bad/torus.json")).unwrap();
    let o = run(&["verify", "a.toml", "--seed-torus", "bad/torus.fourier", "--out", "vb", "--quiet"], d.path());
    assert_eq!(code(&o), 2);
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(d.path().join("vb/verify.json")).unwrap()).unwrap();
    let pass = |name: &str| rows.iter().find(|r| r["check"] == name).unwrap()["pass"].as_bool().unwrap();
    assert!(!pass("residual") && !pass("shadowing"));

    // a stored translation on an exact map
    let mut side: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("s/torus.json")).unwrap()).unwrap();
    side["lambda"] = serde_json::json!([1e-4]);
    fs::create_dir(d.path().join("lam")).unwrap();
    fs::copy(d.path().join("s/torus.fourier"), d.path().join("lam/torus.fourier")).unwrap();
    fs::write(d.path().join("lam/torus.json"), side.to_string()).unwrap();
    let o = run(&["verify", "a.toml", "--seed-torus", "lam/torus.fourier", "--out", "vl"], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("vanishing") && l.contains("FAIL")));
}

#[test]
fn strong_coupling_is_a_controlled_failure() {
    let d = TempDir::new().unwrap();
    write(d.path(), "s.toml", "grid = 64\n[model]\nfamily = \"A\"\neps = 0.5\n");
    let o = run(&["solve", "s.toml", "--out", "o", "--quiet"], d.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!records(&d.path().join("o/report.jsonl")).is_empty());
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/torus.json")).unwrap()).unwrap();
    assert_eq!(side["converged"], false);
    assert!(side["error"].is_string());
}

#[test]
fn identical_runs_give_identical_files() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", MODEL_A);
    for (out, threads) in [("r1", "1"), ("r2", "3")] {
        let o = bin().args(["solve", "a.toml", "--out", out, "--quiet"]).env("WHISKER_THREADS", threads).current_dir(d.path()).output().unwrap();
        assert_eq!(code(&o), 0);
    }
    for f in ["torus.fourier", "torus.json", "report.jsonl", "samples.csv", "splitting_c.fourier"] {
        let a = fs::read(d.path().join("r1").join(f)).unwrap();
        let b = fs::read(d.path().join("r2").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn flow_model_records_its_defects() {
    let d = TempDir::new().unwrap();
    write(d.path(), "b.toml", "grid = 32\n[model]\nfamily = \"B\"\neps = 0.005\n[flow.integrator]\nscheme = \"yoshida6\"\nstep = 0.03125\n");
    let o = run(&["solve", "b.toml", "--out", "o", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/torus.json")).unwrap()).unwrap();
    assert_eq!(side["kind"], "flow");
    let defects = side["extra"]["flow_defects"].as_object().unwrap();
    assert_eq!(defects.len(), 4);
    assert!(defects.values().all(|v| v.as_f64().unwrap() < 1e-8));
}

#[test]
fn refine_and_report_use_a_stored_torus() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", MODEL_A);
    assert_eq!(code(&run(&["solve", "a.toml", "--out", "s", "--quiet"], d.path())), 0);
    let o = run(&["refine-bundle", "a.toml", "--seed-torus", "s/torus.fourier", "--out", "rb", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("rb/bundles.json")).unwrap()).unwrap();
    assert_eq!(b["dims"], serde_json::json!([1, 2, 1]));
    assert!(b["invariance_residual"].as_f64().unwrap() < 1e-9);
    let o = run(&["report", "a.toml", "--seed-torus", "s/torus.fourier", "--out", "rp"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("rp/condition.json")).unwrap()).unwrap();
    assert!(c["conditions"]["c_total"].as_f64().unwrap().is_finite());
    assert!(c["certificate"]["kappa"].as_f64().unwrap() > 0.0);
}

/// The product map `(x + y, y, 2u, v/2)` served by a Python subprocess.
const PLUGIN: &str = r#"import sys
for line in sys.stdin:
    p = line.split()
    if p[0] != "eval":
        print("error unknown request", flush=True)
        continue
    x, y, u, v = map(float, p[1:])
    f = [x + y, y, 2 * u, v / 2]
    d = [1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0.5]
    print(" ".join(repr(float(a)) for a in f + d), flush=True)
"#;

#[test]
fn subprocess_plugin_drives_the_solver() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let d = TempDir::new().unwrap();
    write(d.path(), "t.toml", "grid = 16\n[model]\nfamily = \"T\"\nmu = 2.0\n");
    assert_eq!(code(&run(&["solve", "t.toml", "--out", "seed", "--quiet"], d.path())), 0);
    write(d.path(), "plugin.py", PLUGIN);
    write(
        d.path(),
        "p.toml",
        "grid = 16\nseed_torus = \"seed/torus.fourier\"\n[plugin]\ncommand = [\"python3\", \"plugin.py\"]\ndim = 4\nangles = [0]\n",
    );
    let o = run(&["solve", "p.toml", "--out", "o", "--quiet"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&d.path().join("o/report.jsonl"));
    assert!(recs.last().unwrap()["residual"].as_f64().unwrap() < 1e-13);
}
