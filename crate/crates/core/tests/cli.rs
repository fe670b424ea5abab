use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etfce-grf")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn phantom(dir: &Path, seed: &str) -> String {
    let prefix = dir.join("ph").to_string_lossy().into_owned();
    let out = run(&["--seed", seed, "phantom", &prefix, "--dims", "16", "--subjects", "10", "--amplitude", "0.5"]);
    json(&out);
    prefix
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["enhance", "smoothest", "phantom", "experiment", "perm", "bench", "compare"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["experiment", "not_an_experiment"]).status.code(), Some(1));
    let out = run(&["smoothest", "/nonexistent/stack.nii"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/stack.nii"));
}

#[test]
fn phantom_then_enhance_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = phantom(dir.path(), "3");
    for ext in ["stack.nii", "truth.nii", "mask.nii", "zstat.nii", "json"] {
        assert!(Path::new(&format!("{prefix}.{ext}")).exists(), "{ext}");
    }
    let zstat = format!("{prefix}.zstat.nii");
    let mask = format!("{prefix}.mask.nii");
    let stack = format!("{prefix}.stack.nii");
    let out_prefix = dir.path().join("enh").to_string_lossy().into_owned();
    let v = json(&run(&["enhance", &zstat, &out_prefix, "--mask", &mask, "--residuals", &stack]));
    assert_eq!(v["run_config"]["n_levels"], 500);
    assert!(v["n_significant"].as_u64().unwrap() > 0);
    assert!(v["provenance"].is_object() || v["provenance"].is_string());
    for ext in ["S.nii", "p.nii", "z.nii", "json"] {
        assert!(Path::new(&format!("{out_prefix}.{ext}")).exists(), "{ext}");
    }

    let base = dir.path().join("base").to_string_lossy().into_owned();
    json(&run(&["enhance", &zstat, &base, "--mask", &mask, "--fwhm", "3", "--method", "ptfce", "--n-levels", "500"]));
    let hyb = dir.path().join("hyb").to_string_lossy().into_owned();
    json(&run(&["enhance", &zstat, &hyb, "--mask", &mask, "--fwhm", "3"]));
    let cmp = json(&run(&[
        "compare",
        &format!("{base}.z.nii"),
        &format!("{hyb}.z.nii"),
        "--threshold",
        "4",
        "--mask",
        &mask,
    ]));
    assert!(cmp["max_abs_dz"].as_f64().unwrap() < 1e-6);
    assert_eq!(cmp["dice"], 1.0);

    let sm = json(&run(&["smoothest", &stack, "--mask", &mask]));
    assert!(sm["grf"].is_object());
}

#[test]
fn seeds_reproduce_phantoms() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = phantom(a.path(), "9");
    let pb = phantom(b.path(), "9");
    let read = |p: &str| std::fs::read(format!("{p}.stack.nii")).unwrap();
    assert_eq!(read(&pa), read(&pb));
}

#[test]
fn perm_and_bench_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = phantom(dir.path(), "4");
    let stack = format!("{prefix}.stack.nii");
    let mask = format!("{prefix}.mask.nii");
    let zstat = format!("{prefix}.zstat.nii");
    let out_prefix = dir.path().join("perm").to_string_lossy().into_owned();
    let v = json(&run(&["--seed", "2", "perm", &stack, &out_prefix, "--mask", &mask, "-B", "19"]));
    assert_eq!(v["null_max"].as_array().unwrap().len(), 19);
    assert_eq!(v["min_p"], 0.05);

    let v = json(&run(&[
        "bench", &zstat, "--mask", &mask, "--fwhm", "3", "--repeats", "2", "--stack", &stack, "-B", "3",
    ]));
    assert_eq!(v["warmup_discarded"], true);
    for m in ["ptfce", "hybrid", "etfce", "perm_etfce"] {
        assert_eq!(v["methods"][m]["seconds"].as_array().unwrap().len(), 2, "{m}");
    }
}

#[test]
fn experiment_csv_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    let out = run(&[
        "--format", "csv", "experiment", "smoothness", "--realisations", "2", "--dims", "16", "--subjects", "8",
        "--out-dir", &d,
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("smoothness.json").exists());
    assert!(dir.path().join("smoothness.csv").exists());
}
