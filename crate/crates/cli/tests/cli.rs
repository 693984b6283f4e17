use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossdiff"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn crossdiff(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn bundled_with(name: &str, from: &str, to: &str) -> String {
    let text = fs::read_to_string(bundled(name)).unwrap();
    assert!(text.contains(from), "{from:?} not in {name}");
    text.replace(from, to)
}

fn report_json(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// Number printed after `prefix` on its line.
fn printed_number(text: &str, prefix: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no {prefix:?} in {text}"));
    line[prefix.len()..].trim().parse().unwrap()
}

#[test]
fn run_bundled_example_writes_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let res = crossdiff(&["run", bundled("rank1_n2.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let json = report_json(&out);
    assert_eq!(json["status"], "ok");
    assert_eq!(json["exit_code"], 0);
    assert_eq!(json["run"]["spec"]["k"], serde_json::json!([1.0, 2.0]));
    assert_eq!(json["snapshots"].as_array().unwrap().len(), 22);
    for f in ["series_direct.csv", "series_normal_form.csv", "cross_distance.csv", "snapshots/direct_0010.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let series = fs::read_to_string(out.join("series_direct.csv")).unwrap();
    assert!(series.starts_with("t,mass_1,mass_2,F_f1,F_f2,F_f3,F_hBS,F_hR,min_density,hs_norm"));
    assert!(series.lines().nth(1).unwrap().contains("NaN"));
    assert!(printed_number(&stdout(&res), "max cross distance") <= 1e-4);
}

#[test]
fn non_positive_mobility_is_a_config_error_with_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "bad.toml", &bundled_with("rank1_n2.toml", "k = [1.0, 2.0]", "k = [1.0, -2.0]"));
    let res = crossdiff(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("system.k[1]"), "{}", stderr(&res));
}

#[test]
fn unreadable_or_malformed_config_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let res = crossdiff(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let cfg = write_config(&tmp, "typo.toml", &format!("{}\nbogus = 1\n", bundled_with("rank1_n2.toml", "", "")));
    let res = crossdiff(&["verify", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("output"), "{}", stderr(&res));
}

#[test]
fn initial_data_touching_zero_loses_positivity_at_start() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "zero.toml", &bundled_with("rank1_n2.toml", "1 + 0.3*cos(x)", "1 + cos(x)"));
    let out = tmp.path().join("z");
    let res = crossdiff(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("positivity lost at t = 0"), "{}", stderr(&res));
    let json = report_json(&out);
    assert_eq!(json["status"], "solver_error");
    assert_eq!(json["exit_code"], 3);
    assert!(json["run"].is_null());
}

#[test]
fn verify_battery_passes_for_rank_one_and_general() {
    let tmp = TempDir::new().unwrap();
    for name in ["rank1_n2.toml", "general_b11.toml"] {
        let out = tmp.path().join(name);
        let res = crossdiff(&["verify", bundled(name).to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{name}: {}", stdout(&res));
        assert!(!stdout(&res).contains("[FAIL]"));
        let v: Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
        assert_eq!(v["pass"], true);
        assert_eq!(v["seed"], 20_240_601);
    }
}

#[test]
fn verify_flags_skewed_coefficients() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let res = crossdiff(&[
        "verify",
        bundled("rank1_2d.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--corrupt-a1",
    ]);
    assert_eq!(code(&res), 4);
    assert!(stdout(&res).contains("[FAIL] a1_symmetry"), "{}", stdout(&res));
}

#[test]
fn verify_seed_is_recorded_and_overridable() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let res = crossdiff(&[
        "verify",
        bundled("rank1_n2.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&res), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
}

#[test]
fn report_directory_revalidates_offline() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let cfg = write_config(
        &tmp,
        "small.toml",
        &bundled_with("rank1_2d.toml", "grid_points = 32", "grid_points = 16"),
    );
    let res = crossdiff(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(out.join("picard_trace.csv").is_file());

    let res = crossdiff(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stdout(&res));
    assert!(stdout(&res).contains("picard.bound"));
    assert!(out.join("verify.json").is_file());

    fs::remove_file(out.join("snapshots/normal_form_0003.csv")).unwrap();
    let res = crossdiff(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(code(&res), 4);
    assert!(stdout(&res).contains("[FAIL] normal_form.snapshots"));
}

#[test]
fn tampered_series_fails_offline_validation() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let cfg = write_config(
        &tmp,
        "small.toml",
        &bundled_with("general_b11.toml", "grid_points = 128", "grid_points = 32"),
    );
    assert_eq!(code(&crossdiff(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let mut json = report_json(&out);
    let masses = &mut json["run"]["direct"]["series"][3]["masses"][0];
    *masses = Value::from(masses.as_f64().unwrap() * 1.01);
    fs::write(out.join("report.json"), serde_json::to_string(&json).unwrap()).unwrap();
    let res = crossdiff(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(code(&res), 4);
    assert!(stdout(&res).contains("[FAIL] direct.snapshots"), "{}", stdout(&res));
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "small.toml",
        &bundled_with("rank1_n2.toml", "grid_points = 256", "grid_points = 64"),
    );
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        let res = crossdiff(&["run", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(code(&res), 0);
    }
    for f in ["series_direct.csv", "series_normal_form.csv", "snapshots/normal_form_0010.csv"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn binary_snapshots_and_mode_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "bin.toml",
        &format!(
            "{}\n[output]\nformat = \"both\"\n",
            bundled_with("general_b11.toml", "grid_points = 128", "grid_points = 32")
        ),
    );
    let out = tmp.path().join("o");
    let res = crossdiff(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--mode", "direct"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(out.join("snapshots/direct_0000.bin").is_file());
    assert!(out.join("snapshots/direct_0000.csv").is_file());
    assert!(!out.join("series_normal_form.csv").exists());
    assert!(!out.join("cross_distance.csv").exists());
    assert_eq!(report_json(&out)["run"]["mode"], "direct");
    assert_eq!(code(&crossdiff(&["verify", "--report", out.to_str().unwrap()])), 0);
}

#[test]
fn compare_prints_distance_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c");
    let res = crossdiff(&["compare", bundled("rank1_n2.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = stdout(&res);
    assert!(text.contains("distance"));
    assert!(printed_number(&text, "max cross distance") <= 1e-4);
}

#[test]
fn compare_constant_data_has_zero_distance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "const.toml",
        "[system]\nd = 1\nk = [1.0, 2.0]\na = [1.0, 1.0]\n[initial]\nu = [\"1.5\", \"0.5\"]\n[solver]\ngrid_points = 32\nmode = \"direct\"\n",
    );
    let res = crossdiff(&["compare", cfg.to_str().unwrap(), "--out", tmp.path().join("c").to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    assert!(printed_number(&stdout(&res), "max cross distance") <= 1e-13);
}

#[test]
fn refinement_sweep_reports_second_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "sweep.toml",
        &bundled_with("rank1_n2.toml", "grid_points = 256", "grid_points = 32"),
    );
    let out = tmp.path().join("s");
    let res = crossdiff(&["compare", cfg.to_str().unwrap(), "--sweep", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let orders: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(3)?.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .collect();
    assert_eq!(orders.len(), 2, "{csv}");
    for o in orders {
        assert!((o - 2.0).abs() < 0.2, "order {o}\n{csv}");
    }
}
