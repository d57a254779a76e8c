#![allow(clippy::excessive_precision)]

use bnshift::cli::{run, OUTPUT_DIR_ENV};
use bnshift::table::Table;
use std::path::Path;

fn bnshift(args: &[&str]) -> i32 {
    let mut argv = vec!["bnshift", "--quiet"];
    argv.extend_from_slice(args);
    run(argv)
}

fn read_table(path: &Path) -> Table {
    Table::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn symmetric_optimal_lambda_is_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(bnshift(&["optimal-lambda", "--out", out]), 0);
    let t = read_table(&dir.path().join("optimal_lambda.tsv"));
    assert_eq!(t.columns[1], "lambda_star");
    assert_eq!(t.rows[0][1], 0.5);
}

#[test]
fn bound_reproduces_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bound.toml");
    std::fs::write(
        &cfg,
        r#"
[bound]
n = 200
m = 50
bound_b = 4.0
delta = 0.1
var_p_hat = 1.0
scenario = { mu_p = 0.0, mu_q = 0.3, var_p = 1.0, var_q = 2.0, kappa3_p = 0.5, kappa3_q = 1.0 }
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        bnshift(&[
            "bound",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let t = read_table(&out.join("bound.tsv"));
    let get = |name: &str| t.rows[0][t.columns.iter().position(|c| c == name).unwrap()];
    assert!((get("total_excess") - 0.690_268_979_084_621_462_82).abs() < 1e-14);
    assert!((get("lambda_eff") - 0.285_165_911_777_619_159_34).abs() < 1e-15);
    assert!((get("t_q") - 0.739_980_843_848_991_068_88).abs() < 1e-15);
}

#[test]
fn compare_cdf_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let code = bnshift(&[
            "compare-cdf",
            "--seed",
            "77",
            "--reps",
            "20000",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        outputs.push(std::fs::read(out.join("compare_cdf.tsv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert!(String::from_utf8_lossy(&outputs[0])
        .starts_with("# seed=77 columns: x\tempirical\tnormal\tedgeworth\n"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let code = bnshift(&[
        "mse-curve",
        "--seed",
        "5",
        "--set",
        "mse_curve.reps=3000",
        "--set",
        "mse_curve.lambdas.points=11",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let echo = first.join("mse_curve.config.toml");
    let second = dir.path().join("second");
    let code = bnshift(&[
        "mse-curve",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(first.join("mse_curve.tsv")).unwrap(),
        std::fs::read(second.join("mse_curve.tsv")).unwrap()
    );
    assert_eq!(read_table(&second.join("mse_curve.tsv")).rows.len(), 11);
}

#[test]
fn rows_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        bnshift(&["saddlepoint", "--out", out, "--set", "format=\"rows\""]),
        0
    );
    let text = std::fs::read_to_string(dir.path().join("saddlepoint.tsv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("x="));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // malformed or invalid configuration
    assert_eq!(
        bnshift(&["bound", "--out", out, "--set", "bound.delta=1.5"]),
        2
    );
    assert_eq!(
        bnshift(&["bound", "--out", out, "--set", "bound.bogus=1"]),
        2
    );
    assert_eq!(
        bnshift(&["rate", "--out", out, "--set", "rate.sizes=[[10,10]]"]),
        2
    );
    assert_eq!(bnshift(&["saddlepoint", "--out", out, "--reps", "10"]), 2);
    assert_eq!(bnshift(&["no-such-command"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = [").unwrap();
    assert_eq!(
        bnshift(&["simulate", "--config", bad.to_str().unwrap(), "--out", out]),
        2
    );
    // numeric domain: a degenerate test law has no skew-corrected score
    assert_eq!(
        bnshift(&[
            "one-step",
            "--out",
            out,
            "--set",
            "one_step.test={ family = \"two_point\", low = 0.0, high = 1.0, p_high = 0.0 }",
        ]),
        3
    );
    // output location blocked by a regular file
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let blocked = blocker.join("sub");
    assert_eq!(
        bnshift(&["optimal-lambda", "--out", blocked.to_str().unwrap()]),
        4
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        bnshift(&["simulate", "--config", missing.to_str().unwrap()]),
        4
    );
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    // only this test relies on the variable; the others pass --out
    unsafe { std::env::set_var(OUTPUT_DIR_ENV, dir.path()) };
    assert_eq!(bnshift(&["optimal-lambda"]), 0);
    unsafe { std::env::remove_var(OUTPUT_DIR_ENV) };
    assert!(dir.path().join("optimal_lambda.tsv").exists());
    assert!(dir.path().join("optimal_lambda.config.toml").exists());
}
