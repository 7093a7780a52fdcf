use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consistent"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TOY: &str = "user,item,rating\n\
alice,dune,5\n\
alice,heat,3\n\
bob,heat,4\n\
bob,solaris,2\n\
carol,dune,1\n\
carol,solaris,4\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Integer ratings on a deterministic pattern, roughly two thirds observed.
fn synthetic_csv(n_users: usize, n_items: usize) -> String {
    let mut s = String::from("user,item,rating\n");
    for i in 0..n_users {
        for j in 0..n_items {
            if (i * 5 + j * 11) % 3 != 0 {
                s.push_str(&format!("u{i},m{j},{}\n", 1 + (i * 7 + j * 3 + i * j) % 5));
            }
        }
    }
    s
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses the dense CSV written by canonicalize/complete.
fn dense(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let items: Vec<String> = lines.next().unwrap().split(',').skip(1).map(String::from).collect();
    let mut users = Vec::new();
    let mut rows = Vec::new();
    for line in lines {
        let mut f = line.split(',');
        users.push(f.next().unwrap().to_string());
        rows.push(f.map(|x| x.parse().unwrap()).collect());
    }
    (users, items, rows)
}

#[test]
fn canonicalize_sc_writes_zero_sum_form() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "toy.csv", TOY);
    let out = dir.path().join("out");
    let o = run(&["canonicalize", "--mode", "sc", "--input", path_str(&input), "--has-header", "--out-dir", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["canonical.csv", "shifts.csv", "diagnostics.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let (users, items, rows) = dense(&out.join("canonical.csv"));
    assert_eq!(users, ["alice", "bob", "carol"]);
    assert_eq!(items, ["dune", "heat", "solaris"]);
    for r in &rows {
        assert!(r.iter().sum::<f64>().abs() < 1e-9);
    }
    for j in 0..3 {
        assert!(rows.iter().map(|r| r[j]).sum::<f64>().abs() < 1e-9);
    }

    let shifts = fs::read_to_string(out.join("shifts.csv")).unwrap();
    assert!(shifts.starts_with("axis,id,offset\nuser,alice,"));
    assert_eq!(shifts.lines().count(), 1 + 3 + 3);
    let diag = read_json(&out.join("diagnostics.json"));
    assert!(diag["residual"].as_f64().unwrap() <= 1e-10);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "canonicalize");
    assert_eq!(manifest["dataset"]["entries"], 6);
    assert_eq!(manifest["dataset"]["checksum"].as_str().unwrap().len(), 64);
}

#[test]
fn canonicalize_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "toy.csv", TOY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["canonicalize", "--mode", "uc", "--input", path_str(&input), "--has-header", "--out-dir", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["canonical.csv", "scales.csv", "diagnostics.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn canonicalize_uc_rejects_zero_rating_by_name() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "zero.csv", "alice,dune,5\nbob,dune,0\nbob,heat,2\n");
    let o = run(&["canonicalize", "--mode", "uc", "--input", path_str(&input), "--out-dir", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("bob") && msg.contains("dune"), "{msg}");
}

#[test]
fn convergence_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "toy.csv", TOY);
    let o = run(&[
        "canonicalize", "--mode", "sc", "--input", path_str(&input), "--has-header", "--max-iter", "1",
        "--out-dir", path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn missing_input_and_bad_rows_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = run(&["canonicalize", "--mode", "sc", "--input", "/definitely/not/here.csv"]);
    assert_eq!(code(&o), 2);
    let bad = write(dir.path(), "bad.csv", "a,x,4\na,x,5\n");
    let o = run(&["canonicalize", "--mode", "sc", "--input", path_str(&bad), "--out-dir", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn complete_writes_dense_predictions() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(12, 9));
    let out = dir.path().join("out");
    let o = run(&[
        "complete", "--input", path_str(&input), "--has-header", "--mode", "sc", "--k", "2", "--clamp", "1:5",
        "--out-dir", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (users, items, rows) = dense(&out.join("predictions.csv"));
    assert_eq!((users.len(), items.len()), (12, 9));
    assert!(rows.iter().flatten().all(|&x| (1.0..=5.0).contains(&x)));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["mode"], "sc");
    assert_eq!(manifest["config"]["clamp"], serde_json::json!([1.0, 5.0]));
    assert_eq!(read_json(&out.join("diagnostics.json"))["k"], 2);
}

#[test]
fn sweep_writes_csv_charts_and_manifest() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(30, 24));
    let run_once = |out: &Path| {
        run(&[
            "sweep", "--input", path_str(&input), "--has-header", "--ks", "2:6:2", "--modes", "plain,sc,uc",
            "--ratio", "0.8", "--seed", "3", "--clamp", "off", "--out-dir", path_str(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run_once(&a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&run_once(&b)), 0);

    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,k,rmse,mae,n_scored,n_unscorable");
    assert_eq!(lines.len(), 1 + 9);
    let keys: Vec<(String, usize)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect();
    let want: Vec<(String, usize)> = ["plain", "sc", "uc"]
        .iter()
        .flat_map(|m| [2, 4, 6].map(|k| (m.to_string(), k)))
        .collect();
    assert_eq!(keys, want);

    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["config"]["clamp"], Value::Null);
    assert_eq!(manifest["seed"], 3);
    for f in ["sweep.csv", "rmse.svg", "mae.svg", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let svg = fs::read_to_string(a.join("rmse.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 3);
    for label in ["RMSE", "SVD", "SC-SVD", "UC-SVD"] {
        assert!(svg.contains(&format!(">{label}<")), "{label}");
    }
}

#[test]
fn sweep_sequential_matches_parallel() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(20, 16));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, extra) in [(&a, None), (&b, Some("--sequential"))] {
        let mut args = vec!["sweep", "--input", path_str(&input), "--has-header", "--ks", "1,3", "--out-dir", path_str(out)];
        args.extend(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());
}

#[test]
fn sweep_rejects_bad_arguments() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(10, 10));
    for extra in [["--ks", "5:0:5"], ["--modes", "plain,svd"], ["--ratio", "1"], ["--clamp", "5:1"]] {
        let mut args = vec!["sweep", "--input", path_str(&input), "--has-header", "--out-dir", path_str(dir.path())];
        args.extend(extra);
        assert_eq!(code(&run(&args)), 2, "{extra:?}");
    }
}

#[test]
fn attack_on_synthetic_data() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(25, 20));
    let attack = |extra: &[&str]| {
        let mut args = vec!["attack", "--input", path_str(&input), "--has-header", "--user", "u3", "--k", "3"];
        args.extend(extra);
        args.extend(["--out-dir", path_str(dir.path())]);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (read_json(&dir.path().join("attack.json")), String::from_utf8(o.stdout).unwrap())
    };

    let (uc, table) = attack(&["--scale", "3", "--mode", "uc"]);
    assert_eq!(uc["user"], "u3");
    assert_eq!(uc["transform"], serde_json::json!({"kind": "scale", "amount": 3.0}));
    assert!(uc["max_abs_delta_others"].as_f64().unwrap() <= 1e-6);
    assert!(table.contains("attacked user") && table.contains("u3"));

    let (sc, _) = attack(&["--shift", "-1.5", "--mode", "sc"]);
    assert!(sc["max_abs_delta_others"].as_f64().unwrap() <= 1e-6);

    let (plain, _) = attack(&["--scale", "3", "--mode", "plain"]);
    assert!(plain["max_abs_delta_others"].as_f64().unwrap() > 0.01);
    assert_eq!(read_json(&dir.path().join("manifest.json"))["command"], "attack");
}

#[test]
fn attack_flag_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", &synthetic_csv(10, 10));
    let base = ["attack", "--input", path_str(&input), "--has-header", "--out-dir", path_str(dir.path())];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend(extra);
        run(&args)
    };
    assert_eq!(code(&with(&["--user", "u1", "--scale", "2", "--shift", "1"])), 2);
    assert_eq!(code(&with(&["--user", "u1"])), 2);
    let o = with(&["--user", "nobody", "--scale", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nobody"));
    assert_eq!(code(&with(&["--user", "u1", "--scale", "-2"])), 2);
}

fn ml100k_dir() -> Option<PathBuf> {
    let root = std::env::var_os("RS_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    if root.join("ml-100k/u.data").is_file() {
        Some(root)
    } else {
        eprintln!("MovieLens 100k not found under {}; skipping", root.display());
        None
    }
}

fn ml100k_attack(root: &Path, mode: &str, out: &Path) -> Value {
    let o = bin()
        .env("RS_DATA_DIR", root)
        .args(["attack", "--dataset", "ml100k", "--user", "196", "--scale", "2", "--mode", mode, "--k", "25"])
        .args(["--seed", "7", "--out-dir", path_str(out)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    read_json(&out.join("attack.json"))
}

#[test]
fn ml100k_uc_attack_is_contained() {
    let Some(root) = ml100k_dir() else { return };
    let dir = TempDir::new().unwrap();
    let report = ml100k_attack(&root, "uc", dir.path());
    assert!(report["max_abs_delta_others"].as_f64().unwrap() <= 1e-6);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["dataset"]["entries"], 100_000);
}

#[test]
fn ml100k_plain_attack_matches_recorded_delta() {
    let Some(root) = ml100k_dir() else { return };
    let dir = TempDir::new().unwrap();
    let report = ml100k_attack(&root, "plain", dir.path());
    let golden = read_json(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/attack_ml100k_plain.json"));
    let got = report["max_abs_delta_others"].as_f64().unwrap();
    let want = golden["max_abs_delta_others"].as_f64().unwrap();
    assert!(got > 0.0);
    assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    assert_eq!(report["topn_changes"], golden["topn_changes"]);
}
