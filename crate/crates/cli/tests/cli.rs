use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chillplan_core::ingest::Window;
use chillplan_core::qfr::RegimeModel;
use chillplan_core::regimes::TransitionModel;
use chillplan_core::scenario::{DiurnalTemperature, PeakPriceMarket};
use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 3

[data]
price = "price.csv"
temperature = "temperature.csv"

[qfr]
regimes = 4
train_start = 2020-06-01
train_end = 2020-08-31

[chain]
grouping = "seasonal"

[mdp]
theta_step = 1.0
anchor = 2020-07-15
profile_start = 2020-07-01
profile_end = 2020-07-31
verify = true

[simulate]
windows = [{ start = 2020-07-14, end = 2020-07-16 }]
"#;

fn workspace(config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let summer = Window::summer(2020).unwrap();
    PeakPriceMarket::default()
        .generate(8, summer.start, summer.hours())
        .unwrap()
        .write_csv(dir.path().join("price.csv"))
        .unwrap();
    DiurnalTemperature::default()
        .generate(9, summer.start, summer.hours())
        .unwrap()
        .write_csv(dir.path().join("temperature.csv"))
        .unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config).unwrap();
    (dir, path)
}

fn chillplan(cmd: &str, config: &Path, envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chillplan"));
    c.args([cmd, "--config"]).arg(config);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn out_dir(dir: &TempDir) -> PathBuf {
    dir.path().join("out")
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let (dir, config) = workspace(CONFIG);
    for cmd in [
        "fit-qfr",
        "estimate-chain",
        "plan",
        "simulate",
        "compare",
        "export-plot-data",
    ] {
        let out = chillplan(cmd, &config, &[]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = out_dir(&dir);
    let model =
        RegimeModel::from_json(&std::fs::read_to_string(out.join("regime_model.json")).unwrap())
            .unwrap();
    assert_eq!(model.boundary_fits.len(), 3);
    let chain = TransitionModel::from_json(
        &std::fs::read_to_string(out.join("transition_model.json")).unwrap(),
    )
    .unwrap();
    // Summer-only training data with seasonal grouping: one month group.
    assert_eq!(chain.bucket_count(), 24);
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("plan.json")).unwrap()).unwrap();
    let (lp, dp) = (
        plan["objective"].as_f64().unwrap(),
        plan["dp_gain"].as_f64().unwrap(),
    );
    assert!((lp - dp).abs() / dp < 1e-6);
    let trajectories = std::fs::read_dir(out.join("trajectories")).unwrap().count();
    assert_eq!(trajectories, 3);
    let fig2 = std::fs::read_to_string(out.join("plots/fig2_policy.csv")).unwrap();
    // 24 hours x 4 regimes x 18 temperatures, plus the header.
    assert_eq!(fig2.lines().count(), 24 * 4 * 18 + 1);
    let fig3 = std::fs::read_to_string(out.join("plots/fig3_traces.csv")).unwrap();
    assert_eq!(fig3.lines().count(), 3 * 24 + 1);
    for f in ["fig1_regimes.csv", "fig4_costs.csv"] {
        assert!(out.join("plots").join(f).is_file());
    }
}

#[test]
fn environment_overrides_the_regime_count() {
    let (dir, config) = workspace(CONFIG);
    let out = chillplan("fit-qfr", &config, &[("CHILLPLAN__QFR__REGIMES", "8")]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let header = std::fs::read_to_string(out_dir(&dir).join("qfr_boundaries.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert_eq!(header.matches("boundary_").count(), 7);
    assert_eq!(header.matches("representative_").count(), 8);
}

#[test]
fn inverted_band_is_rejected_before_any_work() {
    let config = format!("{CONFIG}\n[cost]\nt_min = 27.0\nt_max = 18.0\n");
    let (dir, config) = workspace(&config);
    let out = chillplan("fit-qfr", &config, &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_min"));
    assert!(!out_dir(&dir).exists());
}

#[test]
fn missing_inputs_fail_validation() {
    let (dir, config) = workspace(CONFIG);
    std::fs::remove_file(dir.path().join("price.csv")).unwrap();
    let out = chillplan("fit-qfr", &config, &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn export_without_simulations_is_an_error() {
    let (dir, config) = workspace(CONFIG);
    std::fs::create_dir_all(out_dir(&dir)).unwrap();
    std::fs::write(out_dir(&dir).join("reports.json"), "[]").unwrap();
    let out = chillplan("export-plot-data", &config, &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no simulation results"));
    assert!(!out_dir(&dir).join("plots").exists());
}

#[test]
fn unsmoothed_chain_on_sparse_data_is_an_error() {
    let (_dir, config) = workspace(CONFIG);
    let envs = [
        ("CHILLPLAN__QFR__REGIMES", "16"),
        ("CHILLPLAN__CHAIN__ALPHA", "0"),
    ];
    assert!(chillplan("fit-qfr", &config, &envs).status.success());
    let out = chillplan("estimate-chain", &config, &envs);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha > 0"), "{err}");
}
