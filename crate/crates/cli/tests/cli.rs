use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_newton-deconv");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn binary")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn header(text: &str) -> serde_json::Value {
    let first = text.lines().next().unwrap();
    serde_json::from_str(first.strip_prefix("# ").unwrap()).unwrap()
}

fn write_lines(path: &Path, ys: &[f64]) {
    let body: String = ys.iter().map(|y| format!("{y:e}\n")).collect();
    fs::write(path, body).unwrap();
}

#[test]
fn resumed_fit_matches_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ys: Vec<f64> = (0..120).map(|i| ((i * 37) % 23) as f64 * 0.4 - 4.0).collect();
    write_lines(&d.join("a.txt"), &ys[..70]);
    write_lines(&d.join("b.txt"), &ys[70..]);
    write_lines(&d.join("all.txt"), &ys);

    ok(d, &["fit", "--input", "a.txt", "--checkpoint", "split.bin"]);
    ok(d, &["fit", "--input", "b.txt", "--checkpoint", "split.bin", "--resume"]);
    ok(d, &["fit", "--input", "all.txt", "--checkpoint", "whole.bin"]);
    assert_eq!(
        fs::read(d.join("split.bin")).unwrap(),
        fs::read(d.join("whole.bin")).unwrap()
    );
}

#[test]
fn empty_input_leaves_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.txt"), "# nothing here\n\n").unwrap();
    let out = ok(d, &["fit", "--input", "empty.txt", "--checkpoint", "c.bin"]);
    assert!(out.contains("n = 0"), "{out}");
    let est = ok(d, &["estimate", "--checkpoint", "c.bin", "--set", "eval.points=3"]);
    assert_eq!(header(&est)["n"], 0);
    assert_eq!(csv_rows(&est).len(), 3);
}

#[test]
fn bad_line_is_reported_and_progress_kept() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.txt"), "0.5\n1.5\noops\n2\n").unwrap();
    let out = run(d, &["fit", "--input", "bad.txt", "--checkpoint", "c.bin"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    let est = ok(d, &["estimate", "--checkpoint", "c.bin", "--set", "eval.points=2"]);
    assert_eq!(header(&est)["n"], 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "[noise]\nsd = 1.0\ncolour = \"red\"\n").unwrap();
    let out = run(d, &["fit", "--config", "run.toml", "--checkpoint", "c.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(d, &["fit", "--input", "run.toml", "--set", "schedule.gamma=0.3", "--checkpoint", "c.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["estimate", "--checkpoint", "missing.bin"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["simulate", "-o", "s.csv", "--set", "sim.n=50", "--set", "sim.preset=bim"];
    ok(d, &args);
    let text = fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(text.starts_with("x,z,y\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 50);
    for r in &rows {
        assert_eq!(r[2], r[0] + r[1]);
    }
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("s.csv.json")).unwrap()).unwrap();
    assert_eq!(side["preset"], "bim");
    assert_eq!(side["n"], 50);
    assert_eq!(side["seed"], 1);
    assert!(side["generator"].is_string());

    let again = d.join("again");
    fs::create_dir(&again).unwrap();
    ok(&again, &args);
    assert_eq!(text, fs::read_to_string(again.join("s.csv")).unwrap());
}

#[test]
fn fit_reads_a_named_csv_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "-o", "s.csv", "--set", "sim.n=40"]);
    let out = ok(d, &["fit", "--input", "s.csv", "--csv-col", "y", "--checkpoint", "c.bin"]);
    assert!(out.contains("n = 40"), "{out}");
}

#[test]
fn interval_and_band_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "-o", "s.csv", "--set", "sim.n=200"]);
    ok(d, &["fit", "--input", "s.csv", "--csv-col", "y", "--checkpoint", "c.bin"]);
    let iv = ok(d, &["interval", "--checkpoint", "c.bin", "--set", "eval.points=7"]);
    let h = header(&iv);
    assert_eq!(h["b_n"].as_f64(), Some(200.0));
    assert_eq!(h["y_nodes"], 801);
    for r in csv_rows(&iv) {
        assert!(r[2] <= r[1] && r[1] <= r[3]);
        assert!(r[4] >= 0.0);
    }

    let band = ok(d, &["band", "--checkpoint", "c.bin", "--set", "eval.points=9"]);
    let h = header(&band);
    let hw = h["half_width"].as_f64().unwrap();
    assert!(hw > 0.0);
    for r in csv_rows(&band) {
        assert!((r[3] - r[1] - hw).abs() <= 1e-12 * (1.0 + hw));
        assert!((r[1] - r[2] - hw).abs() <= 1e-12 * (1.0 + hw));
    }
}

#[test]
fn single_atom_interval_uses_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let grid = [
        "--set", "grid.mean_min=0", "--set", "grid.mean_max=0", "--set", "grid.mean_step=1",
        "--set", "grid.var_min=1", "--set", "grid.var_max=1", "--set", "grid.var_step=1",
    ];
    write_lines(&d.join("y.txt"), &[0.3, -1.0, 2.0, 0.1]);
    let mut args = vec!["fit", "--input", "y.txt", "--checkpoint", "c.bin"];
    args.extend_from_slice(&grid);
    ok(d, &args);
    let iv = ok(d, &["interval", "--checkpoint", "c.bin", "--set", "eval.points=3"]);
    let expected = 0.5 * 1.959963984540054 * 1e-6;
    for r in csv_rows(&iv) {
        assert_eq!(r[4], 0.0);
        let half = (r[3] - r[2]) / 2.0;
        assert!((half - expected).abs() < 1e-15, "{half}");
    }
}

#[test]
fn calibrate_reports_every_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(
        d,
        &[
            "calibrate",
            "--set", "grid.mean_min=-3", "--set", "grid.mean_max=3", "--set", "grid.mean_step=1",
            "--set", "grid.var_min=0.5", "--set", "grid.var_max=1.5", "--set", "grid.var_step=0.5",
            "--set", "calib.horizon=60", "--set", "calib.gamma_start=0.6",
            "--set", "calib.gamma_step=0.1", "--set", "calib.seeds=[1,2]",
        ],
    );
    let h = header(&out);
    let per: Vec<f64> = h["gamma_hat_per_seed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(per.len(), 2);
    assert_eq!(h["gamma_hat"].as_f64().unwrap(), (per[0] + per[1]) / 2.0);
    assert_eq!(h["streams"], "per-gamma");
    let lines: Vec<&str> = out.lines().skip(2).collect();
    assert_eq!(lines.len(), 2 * 5);
}
