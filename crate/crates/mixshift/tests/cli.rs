//! End-to-end exercises of the `mixshift` command surface, run in-process.

use std::fs;
use std::path::Path;

use mixshift::cli::{manifest_path, run};
use mixshift::core::MixingSolution;

fn run_args(args: &[&str]) -> i32 {
    let mut argv = vec!["mixshift"];
    argv.extend_from_slice(args);
    run(argv)
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

const TEST_TAKING: &str = r#"{
    "p": [0.9, 0.1],
    "N": 100000,
    "curves": [
        {"kind": "powerlaw", "A": 1.0, "B": 1e-6, "alpha": 1.0},
        {"kind": "powerlaw", "A": 1.0, "B": 1e-6, "alpha": 1.0}
    ]
}"#;

const MEMO_3: &str = r#"{
    "p": [0.6, 0.3, 0.1],
    "N": 3,
    "curves": [
        {"kind": "memorization"},
        {"kind": "memorization"},
        {"kind": "memorization"}
    ]
}"#;

#[test]
fn powerlaw_solves_the_test_taking_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("test_taking.json");
    write(&config, TEST_TAKING);
    let out = dir.path().join("solution.json");
    for method in ["asymptotic", "lagrange"] {
        let code = run_args(&[
            "powerlaw",
            "--config",
            config.to_str().unwrap(),
            "--method",
            method,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let sol: MixingSolution =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert!((sol.q_star[0] - 0.75).abs() < 1e-3, "{method}: {}", sol.q_star[0]);
        assert!((sol.loss_ratio - 0.8).abs() < 1e-3);
    }

    // Manifest sits next to the output and records the config digest.
    let manifest = manifest_path(&out);
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(body["command"], "powerlaw");
    assert_eq!(body["outputs"][0], out.to_str().unwrap());
    assert_eq!(body["tool_version"], env!("CARGO_PKG_VERSION"));
    let digest = body["config_digest"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn memorize_symmetric_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("memo.json");
    let code = run_args(&[
        "memorize",
        "--p",
        "0.5,0.5",
        "--N",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let sol: MixingSolution = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sol.q_star.as_slice(), &[0.5, 0.5]);
    assert!((sol.l_star - 0.25).abs() < 1e-12);
    assert_eq!(sol.diagnostics["K_N"], 2.0);
}

#[test]
fn memorize_scaling_emits_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scaling.csv");
    let code = run_args(&[
        "memorize",
        "--scaling",
        "alpha=1.5",
        "--k-rule",
        "4N",
        "--grid",
        "100:10000:log5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let body = fs::read_to_string(&out).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "N,L_same,L_star");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6); // 5 grid rows + slope footer
    assert!(rows[5].starts_with("# slope_same,"));
}

#[test]
fn fig2_sweep_is_reproducible_and_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("fig2_a.csv");
    let out2 = dir.path().join("fig2_b.csv");
    assert_eq!(run_args(&["fig2", "--out", out1.to_str().unwrap()]), 0);
    assert_eq!(run_args(&["fig2", "--out", out2.to_str().unwrap()]), 0);
    let a = fs::read(&out1).unwrap();
    let b = fs::read(&out2).unwrap();
    assert_eq!(a, b, "fig2 output must be byte-identical across runs");

    let body = String::from_utf8(a).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "p,q1_star,L_same,L_star,N_ratio");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 99);
    let at_07 = rows
        .iter()
        .find(|r| (r[0] - 0.7).abs() < 1e-9)
        .expect("p = 0.7 row");
    assert!(
        (0.70..=0.85).contains(&at_07[4]),
        "N_ratio at 0.7 = {}",
        at_07[4]
    );
    // Losses obey L* <= L_same everywhere in the sweep.
    for r in &rows {
        assert!(r[3] <= r[2] * (1.0 + 1e-12));
    }
}

#[test]
fn fig1_curve_dips_at_three_quarters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1.csv");
    assert_eq!(run_args(&["fig1", "--out", out.to_str().unwrap()]), 0);
    let body = fs::read_to_string(&out).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "q,loss_alpha_1,loss_alpha_2");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 199);
    let argmin_a1 = rows
        .iter()
        .min_by(|x, y| x[1].total_cmp(&y[1]))
        .unwrap()[0];
    assert!((argmin_a1 - 0.75).abs() <= 0.01, "alpha=1 argmin at {argmin_a1}");
    // The matched split q = 0.9 is strictly worse than the optimum.
    let at_09 = rows.iter().find(|r| (r[0] - 0.9).abs() < 1e-9).unwrap();
    let at_075 = rows.iter().find(|r| (r[0] - 0.75).abs() < 1e-9).unwrap();
    assert!(at_075[1] < at_09[1]);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write(&config, "{\n  \"p\": [0.5, oops]\n}");
    let code = run_args(&["powerlaw", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 2);
    let missing = run_args(&["powerlaw", "--config", "/nonexistent/x.json"]);
    assert_eq!(missing, 2);
}

#[test]
fn unreachable_epsilon_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("memo.json");
    write(&config, MEMO_3);
    let code = run_args(&[
        "nratio",
        "--config",
        config.to_str().unwrap(),
        "--epsilon",
        "1e-9",
        "--n-max",
        "4",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn nratio_approaches_the_test_taking_limit() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("test_taking.json");
    write(&config, TEST_TAKING);
    let out = dir.path().join("nratio.json");
    let code = run_args(&[
        "nratio",
        "--config",
        config.to_str().unwrap(),
        "--epsilon",
        "1e-4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let ratio = body["ratio"].as_f64().unwrap();
    assert!((ratio - 0.8).abs() <= 5e-3, "ratio = {ratio}");
}

#[test]
fn mc_runs_are_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("memo.json");
    write(&config, MEMO_3);
    let out1 = dir.path().join("mc1.json");
    let out2 = dir.path().join("mc2.json");
    for out in [&out1, &out2] {
        let code = run_args(&[
            "mc",
            "--config",
            config.to_str().unwrap(),
            "--q",
            "0.5,0.3,0.2",
            "--draws",
            "20000",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn check_pds_flags_skewed_memorization() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("memo.json");
    write(&config, MEMO_3);
    let out = dir.path().join("pds.json");
    let code = run_args(&[
        "check-pds",
        "--config",
        config.to_str().unwrap(),
        "--p",
        "0.6,0.3,0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(body["verdict"], "non-stationary");
    assert_eq!(body["is_stationary"], false);
    assert_eq!(body["certificate"].as_array().unwrap().len(), 3);
}

#[test]
fn compose_waterfill_beats_matched_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    write(&world, r#"{"M": 200, "chain_min": 5, "chain_max": 15}"#);
    let mut predicted = Vec::new();
    for mix in ["matched", "waterfill", "blend:0.3"] {
        let out = dir.path().join(format!("compose_{}.json", mix.replace(':', "_")));
        let code = run_args(&[
            "compose",
            "--world",
            world.to_str().unwrap(),
            "--mix",
            mix,
            "--N",
            "500",
            "--seed",
            "7",
            "--draws",
            "4000",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let body: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        predicted.push(body["predicted_accuracy"].as_f64().unwrap());
        assert!(body["mc_accuracy"].is_number());
    }
    assert!(
        predicted[1] > predicted[0],
        "waterfill {} !> matched {}",
        predicted[1],
        predicted[0]
    );
}

#[test]
fn optimize_dispatches_by_family() {
    let dir = tempfile::tempdir().unwrap();
    let memo = dir.path().join("memo.json");
    write(&memo, MEMO_3);
    let out = dir.path().join("opt.json");
    assert_eq!(
        run_args(&["optimize", "--config", memo.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let sol: MixingSolution = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(sol.loss_ratio <= 1.0);
    assert!((sol.q_star[0] - 0.58578).abs() < 1e-4);

    // Forcing the numeric oracle on the same instance lands nearby.
    let out_numeric = dir.path().join("opt_numeric.json");
    assert_eq!(
        run_args(&[
            "optimize",
            "--config",
            memo.to_str().unwrap(),
            "--numeric",
            "--grid-resolution",
            "0.001",
            "--out",
            out_numeric.to_str().unwrap(),
        ]),
        0
    );
    let numeric: MixingSolution =
        serde_json::from_str(&fs::read_to_string(&out_numeric).unwrap()).unwrap();
    assert!((numeric.q_star[0] - sol.q_star[0]).abs() <= 1e-3);
}

#[test]
fn transfer_solution_carries_offset() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("transfer.json");
    write(
        &config,
        r#"{
            "p": [0.9, 0.1],
            "N": 100000,
            "curves": [
                {"kind": "transfer", "A0": 2.0, "B0": 1.0, "A1": 1.0, "B1": 1e-6, "alpha": 1.0},
                {"kind": "transfer", "A0": 5.0, "B0": 3.0, "A1": 1.0, "B1": 1e-6, "alpha": 1.0}
            ]
        }"#,
    );
    let out = dir.path().join("transfer_out.json");
    assert_eq!(
        run_args(&["transfer", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let sol: MixingSolution = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((sol.q_star[0] - 0.75).abs() < 1e-3);
    assert!(sol.diagnostics["transfer_offset"] > 0.0);
}

#[test]
fn sweep_matches_fig2_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("sweep.csv");
    let b = dir.path().join("fig2.csv");
    assert_eq!(
        run_args(&[
            "sweep",
            "--range",
            "p_major=0.01:0.99:0.01",
            "--alpha",
            "0.28",
            "--K",
            "100",
            "--N",
            "1000000",
            "--out",
            a.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(run_args(&["fig2", "--out", b.to_str().unwrap()]), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn powerlaw_sweep_flag_delegates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("psweep.csv");
    let code = run_args(&[
        "powerlaw",
        "--sweep",
        "p_major=0.1:0.9:0.1",
        "--alpha",
        "0.5",
        "--K",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let body = fs::read_to_string(&out).unwrap();
    assert_eq!(body.lines().count(), 10); // header + 9 rows
    // Omitting --alpha / --K is a usage error.
    assert_eq!(run_args(&["powerlaw", "--sweep", "p_major=0.1:0.9:0.1"]), 2);
}
