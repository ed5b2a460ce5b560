use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use rmdp::cli::InstanceFile;
use rmdp::synthetic::{desk_healthcare, random_factor_model, random_instance};

fn rmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, file: &InstanceFile) -> PathBuf {
    let path = dir.join(name);
    file.save(&path).unwrap();
    path
}

fn factor_file(seed: u64) -> InstanceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng, 4, 2, 0.8);
    let fm = random_factor_model(&mut rng, 4, 2, 2);
    let mut file = InstanceFile::from_parts(&inst, None);
    file.set_factor_model(&fm);
    file
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_state_objective_is_geometric_sum() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"states":1,"actions":1,"discount":0.9,"p0":[1.0],"rewards":[[2.0]],"kernel":[[[1.0]]]}"#;
    let path = dir.path().join("one.json");
    std::fs::write(&path, json).unwrap();
    let v = stdout_json(&rmdp(&["solve-nominal", s(&path), "--eps", "1e-9"]));
    let obj = v["objective"].as_f64().unwrap();
    assert!((obj - 20.0).abs() < 1e-6, "{obj}");
}

#[test]
fn factor_model_file_matches_assembled_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let file = factor_file(3);
    let fm = file.require_factor_model().unwrap();
    let kernel = fm.nominal_kernel().unwrap();
    let with_kernel = InstanceFile::from_parts(&file.instance().unwrap(), Some(&kernel));
    let a = write(dir.path(), "fm.json", &file);
    let b = write(dir.path(), "kernel.json", &with_kernel);
    let va = stdout_json(&rmdp(&["solve-nominal", s(&a)]));
    let vb = stdout_json(&rmdp(&["solve-nominal", s(&b)]));
    assert_eq!(va["policy"], vb["policy"]);
    let (za, zb) = (va["objective"].as_f64().unwrap(), vb["objective"].as_f64().unwrap());
    assert!((za - zb).abs() < 1e-9);
}

#[test]
fn bad_p0_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"states":2,"actions":1,"discount":0.9,"p0":[0.5,0.4],"rewards":[[1.0],[0.0]],"kernel":[[[1.0,0.0]],[[0.0,1.0]]]}"#;
    let path = dir.path().join("bad.json");
    std::fs::write(&path, json).unwrap();
    let out = rmdp(&["solve-nominal", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p0"));
}

#[test]
fn malformed_json_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(rmdp(&["solve-nominal", s(&path)]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(rmdp(&["solve-nominal", s(&missing)]).status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = rmdp(&["solve-nominal", "x.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(rmdp(&[]).status.code(), Some(1));
}

#[test]
fn build_factors_recovers_exact_rank_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let file = factor_file(11);
    let fm = file.require_factor_model().unwrap();
    let kernel = fm.nominal_kernel().unwrap();
    let src = write(
        dir.path(),
        "src.json",
        &InstanceFile::from_parts(&file.instance().unwrap(), Some(&kernel)),
    );

    let out2 = dir.path().join("r2.json");
    let v = stdout_json(&rmdp(&["build-factors", s(&src), "--r", "2", "--out", s(&out2)]));
    assert!(v["linf"].as_f64().unwrap() <= 1e-6, "{v}");
    let reloaded = InstanceFile::load(&out2).unwrap();
    assert_eq!(reloaded.require_factor_model().unwrap().rank(), 2);
    stdout_json(&rmdp(&["improve", s(&out2), "--tau", "0.05"]));

    let full = dir.path().join("r8.json");
    let v = stdout_json(&rmdp(&["build-factors", s(&src), "--r", "8", "--out", s(&full)]));
    assert!(v["linf"].as_f64().unwrap() <= 1e-8, "{v}");

    let too_big = dir.path().join("r9.json");
    let out = rmdp(&["build-factors", s(&src), "--r", "9", "--out", s(&too_big)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!too_big.exists());
}

#[test]
fn improve_at_zero_radius_matches_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "fm.json", &factor_file(5));
    let nominal = stdout_json(&rmdp(&["solve-nominal", s(&path)]));
    let robust = stdout_json(&rmdp(&["improve", s(&path), "--tau", "0"]));
    assert_eq!(nominal["policy"], robust["policy"]);
    let gap = nominal["objective"].as_f64().unwrap() - robust["objective"].as_f64().unwrap();
    assert!(gap.abs() < 1e-5, "{gap}");
}

#[test]
fn evaluate_reproduces_improve_objective() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "fm.json", &factor_file(8));
    let policy = dir.path().join("policy.json");
    let improved = stdout_json(&rmdp(&[
        "improve", s(&path), "--tau", "0.1", "--eps", "1e-7", "--out", s(&policy),
    ]));
    let z = improved["objective"].as_f64().unwrap();
    for extra in [&[][..], &["--lp"][..]] {
        let mut args = vec!["evaluate", s(&path), "--tau", "0.1", "--eps", "1e-7", "--policy", s(&policy)];
        args.extend_from_slice(extra);
        let v = stdout_json(&rmdp(&args));
        let ze = v["objective"].as_f64().unwrap();
        assert!((ze - z).abs() <= 2e-7 + 1e-6, "{extra:?}: {ze} vs {z}");
    }
}

#[test]
fn compare_emits_one_line_per_tau_and_quantity() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, kernel) = desk_healthcare();
    let path = write(dir.path(), "hc.json", &InstanceFile::from_parts(&inst, Some(&kernel)));
    let csv_path = dir.path().join("out.csv");
    let out = rmdp(&[
        "compare", s(&path), "--n", "50", "--tau", "0.05,0.09", "--restarts", "2", "--out", s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tau,table,quantity,value,conf95"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    let mut keys: Vec<(String, String)> = rows
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5);
            (f[0].to_string(), f[2].to_string())
        })
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 30);
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap(), text);
}

#[test]
fn instance_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = factor_file(21);
    let path = write(dir.path(), "a.json", &file);
    let back = InstanceFile::load(&path).unwrap();
    assert_eq!(back, file);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(back.to_json(), text);
}
