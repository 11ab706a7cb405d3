use mfce_py::api;

const CONFIG: &str = r#"{
    "problem": {"kind": "analytic"},
    "algorithm": "multifidelity",
    "engine": {"m": 500, "gamma_star": 4.0, "floor": 0.03},
    "levels": [2, 4, "hifi"],
    "repetitions": 2
}"#;

#[test]
fn config_defaults_are_filled_in() {
    let v: serde_json::Value =
        serde_json::from_str(&api::normalize_config(CONFIG).unwrap()).unwrap();
    assert_eq!(v["engine"]["rho"], 0.2);
    assert_eq!(v["levels"], serde_json::json!([2, 4, "hifi"]));
    assert!(api::normalize_config(&CONFIG.replace("500", "1")).is_err());
}

#[test]
fn estimate_report_feeds_runs_csv() {
    let report = api::estimate(CONFIG, Some(9)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["report"]["runs"][1]["seed"], 10);
    let csv = api::report_runs_csv(&report).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with(
        "algorithm,m,levels,seed,p_hat,scv,wall_clock_s,hf_evals,iters_d2,iters_d4,iters_hifi"
    ));
}

#[test]
fn compare_and_oracles() {
    let csv = api::compare_configs(&[CONFIG.into(), CONFIG.replace("multifidelity", "standard")])
        .unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!((api::analytic_probability(4.0) - 3.1671e-5).abs() < 1e-8);
    let s = api::pde_score(&[0.8, 0.15, 2.97, 0.0, 0.0], 8).unwrap();
    assert!(s > 0.0 && s.is_finite());
    assert!(api::pde_score(&[0.8], 8).is_err());
}
