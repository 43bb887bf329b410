use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn specmux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specmux")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn rate_from_bundled_config() {
    let cfg = asset("configs/rate_base.toml");
    let v = stdout_json(&specmux(&["rate", "--config", path_str(&cfg)]));
    // n = 1 at zero distance: (0.81)^2 success, 100 modes per 10/300 GHz slot.
    assert_eq!(v["p_success"].as_f64().unwrap(), 0.6561);
    assert_eq!(v["rate_hz"].as_f64().unwrap(), 0.6561 * 3e8);
}

#[test]
fn missing_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(asset("configs/rate_base.toml")).unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, text.replace("memory_eff = 0.9\n", "")).unwrap();
    let out = specmux(&["rate", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("memory_eff"), "{}", stderr(&out));
}

#[test]
fn emission_probability_above_one_is_rejected() {
    let cfg = asset("configs/rate_base.toml");
    let out = specmux(&["rate", "--config", path_str(&cfg), "--set", "pair_emission_prob=1.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pair_emission_prob"));
}

#[test]
fn bad_flags_exit_with_validation_code() {
    assert_eq!(specmux(&["rate", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(specmux(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(specmux(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_trials_is_rejected() {
    let cfg = asset("configs/rate_base.toml");
    let out = specmux(&["simulate", "--config", path_str(&cfg), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = asset("configs/rate_base.toml");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let r = dir.path().join("r.json");
    let trace = dir.path().join("trace.jsonl");
    let common = [
        "simulate",
        "--config",
        path_str(&cfg),
        "--seed",
        "5",
        "--trials",
        "20000",
    ];
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let mut args = common.to_vec();
        args.extend([
            "--threads",
            threads,
            "--out",
            path_str(out),
            "--trace",
            path_str(&trace),
        ]);
        assert!(specmux(&args).status.success());
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());

    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["rng"].as_str().unwrap().contains("chacha8"));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["meta"]["seed"], 5);
    assert_eq!(v["trials"], 20000);

    let manifest_path = dir.path().join("a.json.manifest.json");
    assert!(specmux(&["replay", path_str(&manifest_path), "--out", path_str(&r)])
        .status
        .success());
    assert_eq!(fs::read(&r).unwrap(), bytes);

    let lines: Vec<Value> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20000);
    assert_eq!(lines[17]["trial"], 17);
    let successes = lines.iter().filter(|l| l["success"] == true).count();
    assert_eq!(successes as u64, v["successes"].as_u64().unwrap());
}

#[test]
fn replay_reproduces_deterministic_commands() {
    let dir = tempfile::tempdir().unwrap();
    let counts = asset("data/synthetic_counts.csv");
    let sweep_cfg = asset("configs/sweep_default.toml");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "rate",
            "--config",
            "configs/rate_base.toml",
            "--set",
            "num_links=3",
            "--set",
            "total_length_km=300",
        ],
        vec![
            "sweep",
            "--config",
            path_str(&sweep_cfg),
            "--set",
            "modes_list=[100, 1000]",
        ],
        vec!["decoy", path_str(&counts)],
        vec!["afc", "--set", "tooth_width_hz=2.125e6"],
        vec!["crosstalk", "--format", "json"],
    ];
    for (i, case) in cases.iter().enumerate() {
        let first = dir.path().join(format!("{i}.out"));
        let again = dir.path().join(format!("{i}.again"));
        let mut args = case.clone();
        args.extend(["--out", path_str(&first)]);
        let out = Command::new(env!("CARGO_BIN_EXE_specmux"))
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .args(&args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{case:?}: {}", stderr(&out));
        let manifest = dir.path().join(format!("{i}.out.manifest.json"));
        let out = Command::new(env!("CARGO_BIN_EXE_specmux"))
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .args(["replay", path_str(&manifest), "--out", path_str(&again)])
            .output()
            .unwrap();
        assert!(out.status.success(), "{case:?}: {}", stderr(&out));
        assert_eq!(fs::read(&first).unwrap(), fs::read(&again).unwrap(), "{case:?}");
    }
}

#[test]
fn sweep_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    let cfg = asset("configs/sweep_default.toml");
    assert!(
        specmux(&["sweep", "--config", path_str(&cfg), "--out", path_str(&rows)])
            .status
            .success()
    );
    let text = fs::read_to_string(&rows).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "m,length_km,optimal_n,rate_hz,direct_rate_hz"
    );
    assert_eq!(text.lines().count(), 1 + 3 * 201);
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("rows.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 3);
    for curve in summary.as_array().unwrap() {
        assert!(curve["crossover_km"].as_f64().unwrap() < 600.0);
    }

    let out = specmux(&["sweep", "--set", "distances_km=[]"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&specmux(&[
        "sweep",
        "--format",
        "json",
        "--set",
        "distances_km=[250]",
        "--set",
        "modes_list=[1000]",
    ]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn decoy_reports_and_errors() {
    let counts = asset("data/synthetic_counts.csv");
    let v = stdout_json(&specmux(&["decoy", path_str(&counts)]));
    assert!(v["classical"]["passes"].as_bool().unwrap());
    assert_eq!(v["vacuum_error_rate"], "half");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "state,mu,counts_same,counts_orth,total_pulses\ne,0.5,10,1,1000\nl,0.5,ten,1,1000\n",
    )
    .unwrap();
    let out = specmux(&["decoy", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let vac = dir.path().join("vac.csv");
    fs::write(
        &vac,
        "state,mu,counts_same,counts_orth,total_pulses\ne,0,5,5,100000\nl,0,5,5,100000\n+,0,5,5,100000\n-,0,5,5,100000\n",
    )
    .unwrap();
    let out = specmux(&["decoy", path_str(&vac)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bound invalid"), "{}", stderr(&out));
}

#[test]
fn afc_preset_numbers() {
    let v = stdout_json(&specmux(&["afc"]));
    assert_eq!(v["overall_efficiency"].as_f64().unwrap(), 1.5e-4);
    assert_eq!(v["finesse"].as_f64().unwrap(), 2.0);
    let v = stdout_json(&specmux(&["afc", "--set", "tooth_width_hz=2.125e6"]));
    assert!((v["cavity_matched_efficiency"].as_f64().unwrap() - 0.8963).abs() < 5e-4);

    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("preset.toml");
    assert!(
        specmux(&["afc", "--set", "num_bins=10", "--save-preset", path_str(&saved)])
            .status
            .success()
    );
    let v = stdout_json(&specmux(&["afc", "--config", path_str(&saved)]));
    assert_eq!(v["comb"]["num_bins"], 10);
    assert_eq!(
        stdout_json(&specmux(&[
            "afc",
            "--config",
            path_str(&asset("configs/afc_calgary_2014.toml"))
        ])),
        stdout_json(&specmux(&["afc"]))
    );
}

#[test]
fn crosstalk_curve_saturates() {
    let out = specmux(&["crosstalk"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let f: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(f[0], 1.0);
    assert!(f.windows(2).all(|w| w[1] <= w[0]));
    assert!(f.windows(2).skip(4).all(|w| w[0] - w[1] < 2e-3));
}
