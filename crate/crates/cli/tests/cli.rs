use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmc"))
        .args(args)
        .current_dir(dir)
        .env_remove("GMC_THREADS")
        .env_remove("RUST_BACKTRACE")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gmc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_reports_sizes_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["gen", "--n", "100", "--alpha", "0.5", "--rho0", "0.2", "--seed", "7", "--out"];
    let stdout = ok(d, &[&args[..], &["a.json"]].concat());
    assert!(stdout.contains("M = 50, K0 = 20"), "{stdout}");
    ok(d, &[&args[..], &["b.json"]].concat());
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    let m = json(&d.join("a.json.manifest.json"));
    assert_eq!(m["subcommand"], "gen");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"][0], "a.json");
}

#[test]
fn infeasible_generation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmc(dir.path(), &["gen", "--n", "100", "--alpha", "0.1", "--rho0", "0.2", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K0 = 20 exceeds M = 10"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn solve_recovers_a_planted_signal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "100", "--alpha", "0.5", "--rho0", "0.2", "--seed", "7", "--out", "i.json"]);
    ok(d, &["solve", "--in", "i.json", "--k", "20", "--seed", "3", "--out", "s.json"]);
    let r = json(&d.join("s.json"));
    assert_eq!(r["restarts"].as_array().unwrap().len(), 100);
    assert!(r["best_energy"].as_f64().unwrap() <= 1e-20);
    assert_eq!(r["recovered"], true);
    assert!(r["eps_x"].as_f64().unwrap() <= 1e-10);
    let truth = json(&d.join("i.json"))["support0"].clone();
    assert_eq!(r["best_support"], truth);
    assert!(d.join("s.json.manifest.json").exists());

    let first = fs::read(d.join("s.json")).unwrap();
    ok(d, &["--threads", "1", "solve", "--in", "i.json", "--k", "20", "--seed", "3", "--out", "s.json"]);
    assert_eq!(first, fs::read(d.join("s.json")).unwrap());
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["solve", "--in", "i.json", "--k", "0"][..],
        &["gen", "--n", "10", "--bogus"][..],
        &["phase", "--n-init", "0", "--out", "p.csv"][..],
    ] {
        assert_eq!(gmc(d, args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn oversized_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "20", "--alpha", "0.5", "--rho0", "0.2", "--out", "i.json"]);
    let out = gmc(d, &["solve", "--in", "i.json", "--k", "11", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("s.json").exists());
}

#[test]
fn phase_grid_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = ["phase", "--n", "30", "--alpha", "0.3,0.6", "--rho0", "0.1,0.2", "--n-samp", "4", "--n-init", "5", "--seed", "1"];
    ok(d, &[&["--threads", "1"][..], &base[..], &["--out", "p1.csv"]].concat());
    ok(d, &[&["--threads", "3"][..], &base[..], &["--out", "p3.csv"]].concat());
    let text = fs::read_to_string(d.join("p1.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(d.join("p3.csv")).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,rho0,n_samp,p_samp");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.3,0.1,4,"));

    let out = gmc(d, &["phase", "--n", "30", "--alpha", "0.1", "--rho0", "0.5", "--out", "bad.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cell (alpha=0.1, rho0=0.5)"));
}

#[test]
fn experiment_csvs_have_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["scaling", "--sizes", "20,40", "--n-samp", "2", "--n-init", "2", "--out", "sc.csv"]);
    ok(d, &["noisy", "--n", "40", "--rho", "0.1,0.2", "--n-samp", "2", "--n-init", "2", "--out", "n.csv"]);
    ok(d, &["success", "--n", "40", "--n-samp", "2", "--n-init", "2", "--out", "su.csv"]);
    let first = |f: &str| fs::read_to_string(d.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first("sc.csv"), "N,nconv_mean,nconv_stderr");
    assert_eq!(first("n.csv"), "rho,eps_y_mean,eps_y_stderr,eps_x_mean,eps_x_stderr");
    assert_eq!(first("su.csv"), "N,alpha,rho0,n_init,n_samp,p_suc_mean,p_suc_stderr");
    for f in ["sc.csv", "n.csv", "su.csv"] {
        assert!(d.join(format!("{f}.manifest.json")).exists());
    }
}

fn write_planted_csv(d: &Path) {
    ok(d, &["gen", "--n", "30", "--alpha", "0.8", "--rho0", "0.07", "--seed", "4", "--out", "p.json"]);
    let inst = json(&d.join("p.json"));
    let mut a = String::new();
    for row in inst["a"].as_array().unwrap() {
        let cells: Vec<String> = row.as_array().unwrap().iter().map(|v| v.to_string()).collect();
        a.push_str(&cells.join(","));
        a.push('\n');
    }
    let y: String = inst["y"].as_array().unwrap().iter().map(|v| format!("{v}\n")).collect();
    fs::write(d.join("A.csv"), a).unwrap();
    fs::write(d.join("y.csv"), y).unwrap();
}

#[test]
fn cv_writes_table_counts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_planted_csv(d);
    ok(d, &["cv", "--a", "A.csv", "--y", "y.csv", "--k-max", "3", "--no-standardize", "--n-init-per-fold", "5", "--out", "cv.csv"]);
    let table = fs::read_to_string(d.join("cv.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "K,eps_cv");
    assert_eq!(lines.len(), 4);
    // two planted columns: the exact fit leaves nothing to predict wrongly
    let eps2: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!(eps2 <= 1e-18, "{eps2}");

    let counts = fs::read_to_string(d.join("cv.counts_K2.csv")).unwrap();
    let mut rows = counts.lines();
    assert_eq!(rows.next(), Some("variable,count"));
    let support: Vec<u64> = json(&d.join("p.json"))["support0"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() + 1)
        .collect();
    for line in rows.take(2) {
        let (var, count) = line.split_once(',').unwrap();
        assert!(support.contains(&var.parse().unwrap()));
        assert_eq!(count, "24");
    }
    assert_eq!(json(&d.join("cv.report.json")).as_array().unwrap().len(), 3);

    let before = fs::read(d.join("cv.counts_K3.csv")).unwrap();
    ok(d, &["replay", "cv.csv.manifest.json"]);
    assert_eq!(before, fs::read(d.join("cv.counts_K3.csv")).unwrap());
    assert_eq!(table, fs::read_to_string(d.join("cv.csv")).unwrap());
}

#[test]
fn cv_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("A.csv"), "1,2\n3,oops\n5,6\n").unwrap();
    fs::write(d.join("y.csv"), "1\n2\n3\n").unwrap();
    let out = gmc(d, &["cv", "--a", "A.csv", "--y", "y.csv", "--out", "cv.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}
