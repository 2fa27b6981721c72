use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use informed_core::informed::dividend_yield;
use informed_core::{bsm_call, BsmInputs, DyConvention};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_informed-options"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const BSM_ATM: [&str; 15] = [
    "price", "--model", "bsm", "--S0", "100", "--K", "100", "--T", "1", "--r", "0", "--sigma", "0.2", "--dy", "0",
];

#[test]
fn bsm_price_example() {
    let o = run(&BSM_ATM);
    assert_eq!(code(&o), 0);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 7.9656).abs() < 1e-3, "{v}");
}

#[test]
fn informed_without_information_prints_bsm_bytes() {
    let informed = run(&[
        "price", "--model", "informed", "--S0", "100", "--K", "100", "--T", "1", "--r", "0", "--sigma", "0.2",
        "--lambda", "0",
    ]);
    assert_eq!(code(&informed), 0);
    assert_eq!(informed.stdout, run(&BSM_ATM).stdout);
}

#[test]
fn trees_print_ten_decimals() {
    let o = run(&[
        "price", "--model", "ksrf", "--S0", "100", "--K", "100", "--T", "1", "--r", "0.01", "--mu", "0.05",
        "--sigma", "0.2", "--p0", "0.55", "--n", "500",
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    let frac = s.trim().split('.').nth(1).unwrap();
    assert_eq!(frac.len(), 10);
    let v: f64 = s.trim().parse().unwrap();
    assert!((v - 8.4333).abs() < 0.05, "{v}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["price", "--model", "nope"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    // mean-info without its parameters is a usage error
    let o = run(&["price", "--model", "mean-info", "--S0", "100", "--K", "100", "--T", "1", "--r", "0", "--sigma", "0.2"]);
    assert_eq!(code(&o), 1);
    let o = run(&["estimate", "/nonexistent/history.csv"]);
    assert_eq!(code(&o), 2);
    // drift too large for a two-step CRR tree
    let o = run(&[
        "price", "--model", "crr", "--S0", "100", "--K", "100", "--T", "1", "--r", "0.01", "--sigma", "0.2", "--mu",
        "5", "--n", "2",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn thread_variable_is_validated() {
    let o = bin().args(BSM_ATM).env("INFORMED_OPTIONS_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn monte_carlo_is_deterministic_across_threads() {
    let args = [
        "price", "--model", "tv-mc", "--S0", "100", "--K", "100", "--T", "1", "--r", "0.02", "--mu", "0.06",
        "--sigma", "0.2", "--lambda", "0.1", "--dy-flag", "pde-consistent", "--paths", "20000", "--steps", "8",
        "--seed", "17",
    ];
    let one = bin().args(args).env("INFORMED_OPTIONS_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("INFORMED_OPTIONS_THREADS", "4").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, run(&args).stdout);
}

#[test]
fn estimate_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.csv");
    fs::write(&h, "date,close\n2020-05-14,100\n2020-05-15,110\n").unwrap();
    let o = run(&["estimate", h.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["p_hat"], 1.0);
    assert!((v["mu_hat"].as_f64().unwrap() - 1.1f64.ln()).abs() < 1e-15);
    assert_eq!(v["window"], 2);

    // one return has no sample deviation, so there is no valid annualized volatility
    let o = run(&["estimate", h.to_str().unwrap(), "--dt", "0.5", "--r", "0.01"]);
    assert_eq!(code(&o), 3);

    fs::write(&h, "date,close\n2020-05-14,100\n2020-05-15,110\n2020-05-18,99\n").unwrap();
    let o = run(&["estimate", h.to_str().unwrap(), "--dt", "0.5", "--r", "0.01"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mu_hat = 0.99f64.ln() / 2.0;
    assert!((v["mu"].as_f64().unwrap() - mu_hat / 0.5).abs() < 1e-15);
    assert_eq!(v["dt"], 0.5);
}

fn write_lambda_chain(dir: &Path, lambda: f64) -> (String, String) {
    let (mu, sigma, r, p0, spot) = (0.06, 0.2, 0.02, 0.55, 301.6);
    let d_y = dividend_yield(sigma, (mu - r) / sigma, lambda);
    let mut chain = String::from("expiry_years,strike,bid,ask\n");
    for t in [0.25, 0.5, 1.0] {
        for k in [280.0, 300.0, 320.0] {
            let c = bsm_call(&BsmInputs::new(spot, k, t, r, sigma, d_y).unwrap(), DyConvention::AsPrinted).unwrap();
            chain += &format!("{t},{k},{c:.12},{c:.12}\n");
        }
    }
    // crossed quote, reported and skipped
    chain += "1.0,340,5.0,4.0\n";
    let chain_path = dir.join("chain.csv");
    fs::write(&chain_path, chain).unwrap();
    let params = dir.join("params.json");
    fs::write(
        &params,
        format!(r#"{{"mu":{mu},"sigma":{sigma},"r":{r},"p0":{p0},"dt":0.003968253968253968}}"#),
    )
    .unwrap();
    (chain_path.to_str().unwrap().into(), params.to_str().unwrap().into())
}

#[test]
fn calibrate_lambda_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let (chain, params) = write_lambda_chain(dir.path(), 0.003);
    let out = dir.path().join("surface.csv");
    let o = run(&[
        "calibrate", "--target", "lambda", "--chain", &chain, "--params", &params, "--spot", "301.6", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 11") && err.contains("rejected"), "{err}");

    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("moneyness,maturity_years,value,residual,status"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let v: f64 = cols[2].parse().unwrap();
        assert!((v - 0.003).abs() < 1e-5, "{row}");
        assert_eq!(cols[4], "ok");
    }
}

#[test]
fn surface_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (chain, params) = write_lambda_chain(dir.path(), 0.01);
    let csv = dir.path().join("s.csv");
    let o = run(&[
        "calibrate", "--target", "lambda", "--chain", &chain, "--params", &params, "--spot", "301.6", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let json = dir.path().join("s.json");
    let o = run(&["surface-export", csv.to_str().unwrap(), "--format", "json", "--out", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 9);
    let back = run(&["surface-export", json.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&back), 0);
    assert_eq!(stdout(&back), fs::read_to_string(&csv).unwrap());
}

#[test]
fn calibrate_missing_header_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, params) = write_lambda_chain(dir.path(), 0.003);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0.5,300,10.0,10.4\n").unwrap();
    let o = run(&[
        "calibrate", "--target", "lambda", "--chain", bad.to_str().unwrap(), "--params", &params, "--spot", "301.6",
    ]);
    assert_eq!(code(&o), 2);
}
