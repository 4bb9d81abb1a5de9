use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn circalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circalloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Small seeded market in `root/data`.
fn small_market(root: &Path) -> PathBuf {
    let data = root.join("data");
    let out = circalloc(&[
        "generate",
        "--seed",
        "7",
        "--orders",
        "6",
        "--offers",
        "40",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    data
}

fn allocate(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let offers = data.join("offers.csv");
    let orders = data.join("orders.csv");
    let postcodes = data.join("postcodes.csv");
    let mut args = vec![
        "allocate",
        "--offers",
        offers.to_str().unwrap(),
        "--orders",
        orders.to_str().unwrap(),
        "--postcodes",
        postcodes.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    circalloc(&args)
}

#[test]
fn generate_writes_dataset_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    for f in ["offers.csv", "orders.csv", "postcodes.csv", "manifest.json"] {
        assert!(data.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&data);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["n_orders"], 6);
    assert_eq!(m["artifacts"].as_object().unwrap().len(), 3);
    assert!(m["timings"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["stage"] == "generate"));
}

#[test]
fn generate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, db) = (small_market(a.path()), small_market(b.path()));
    assert_eq!(manifest(&da)["artifacts"], manifest(&db)["artifacts"]);
}

#[test]
fn zero_orders_is_an_argument_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = circalloc(&["generate", "--orders", "0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--orders"), "{}", stderr(&out));
}

#[test]
fn strategy_weights_recorded_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = allocate(&data, &out_dir, &["--strategy", "expiry-first"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = &manifest(&out_dir)["config"]["runs"][0];
    assert_eq!(run["label"], "Expiry");
    let w = &run["weights"];
    assert_eq!(
        [&w["price"], &w["quantity"], &w["expiry"], &w["distance"]],
        [0.15, 0.15, 0.55, 0.15].map(Value::from).each_ref()
    );
    for f in ["allocations.csv", "diagnostics.jsonl", "metrics.json"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let header = fs::read_to_string(out_dir.join("allocations.csv")).unwrap();
    assert!(header.starts_with("iteration,offer_id,order_id,quantity_t,transaction_price_gbp,distance_km,"));
}

#[test]
fn all_strategies_give_seven_comparison_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = allocate(&data, &out_dir, &["--all-strategies"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(out_dir.join("comparison.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 8);
    assert!(rdr.records().all(|r| r.unwrap().len() == 8));
    for s in ["equal-weights", "price-first", "distance-extreme"] {
        assert!(out_dir.join(s).join("allocations.csv").is_file());
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("utilisation %") && stdout.contains("DistX"));
}

#[test]
fn evaluate_matches_all_strategies() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(allocate(&data, &a, &["--all-strategies"]).status.success());
    let offers = data.join("offers.csv");
    let orders = data.join("orders.csv");
    let postcodes = data.join("postcodes.csv");
    let out = circalloc(&[
        "evaluate",
        "--offers",
        offers.to_str().unwrap(),
        "--orders",
        orders.to_str().unwrap(),
        "--postcodes",
        postcodes.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["metrics.json", "comparison.csv", "price-first/allocations.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn repeated_allocation_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        assert!(allocate(&data, dir, &["--strategy", "equal-weights"]).status.success());
    }
    for f in ["allocations.csv", "metrics.json", "diagnostics.jsonl"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(manifest(&a)["artifacts"], manifest(&b)["artifacts"]);
}

#[test]
fn weights_file_is_normalised() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let weights = tmp.path().join("w.json");
    fs::write(&weights, r#"{"price":2,"quantity":1,"expiry":1,"distance":0}"#).unwrap();
    let out_dir = tmp.path().join("out");
    let out = allocate(&data, &out_dir, &["--weights", weights.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = &manifest(&out_dir)["config"]["runs"][0];
    assert_eq!(run["label"], "custom");
    assert_eq!(run["weights"]["price"], 0.5);
}

#[test]
fn corrupt_row_names_row_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let path = data.join("offers.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[3] = "lots".to_string(); // quantity
    lines[3] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = allocate(&data, &tmp.path().join("out"), &["--strategy", "equal-weights"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("row 4") && err.contains("quantity"), "{err}");
}

#[test]
fn unknown_postcode_is_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let path = data.join("postcodes.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(2).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let out = allocate(&data, &tmp.path().join("out"), &["--strategy", "equal-weights"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).to_lowercase().contains("postcode"), "{}", stderr(&out));
}

#[test]
fn weight_choice_is_required_and_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_market(tmp.path());
    let out_dir = tmp.path().join("out");
    assert_eq!(allocate(&data, &out_dir, &[]).status.code(), Some(2));
    let both = allocate(&data, &out_dir, &["--strategy", "price-first", "--all-strategies"]);
    assert_eq!(both.status.code(), Some(2));
    let unknown = allocate(&data, &out_dir, &["--strategy", "cheapest"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("equal-weights"));
}
