use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use turnpoint::elasticity::{default_model_grid, model_elasticity_curve, Period, Record};
use turnpoint::ingest::write_series;
use turnpoint::CommoditySeries;

fn turnpoint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnpoint"))
        .args(args)
        .env("TURNPOINT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = turnpoint(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(path: &Path, rows: &[(String, f64, f64)]) {
    let mut text = String::from("period,price,sur\n");
    for (p, price, sur) in rows {
        text.push_str(&format!("{p},{price},{sur}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn one_sample_histogram_holds_every_agent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--n", "40", "--mean-capacity", "0.1", "--samples", "1", "--seed", "5", "--out-dir", s(&out)]);
    let total: u64 = data_rows(&out.join("prices.csv")).iter().map(|r| r[6].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 40);
    let cost_total: u64 = data_rows(&out.join("costs.csv")).iter().map(|r| r[6].parse::<u64>().unwrap()).sum();
    assert_eq!(cost_total, 40);
    let report = json(&out.join("report.json"));
    assert_eq!(report["converged_samples"], 1);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["job"]["subcommand"], "simulate");
}

#[test]
fn replay_reproduces_simulation_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    ok(&["simulate", "--n", "30", "--mean-capacity", "0.3", "--inventory", "0.01", "--samples", "3", "--seed", "11", "--out-dir", s(&first)]);
    ok(&["replay", s(&first.join("manifest.json")), "--out-dir", s(&again)]);
    for name in ["prices.csv", "costs.csv", "report.json"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn unconverged_samples_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = turnpoint(&["simulate", "--n", "20", "--mean-capacity", "0.2", "--samples", "2", "--max-steps", "2", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn invalid_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = turnpoint(&["simulate", "--n", "20", "--mean-capacity", "0.2", "--eta", "2", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = turnpoint(&["simulate", "--mean-capacity", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meanfield_reports_turning_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["meanfield", "--inventory", "1e-3", "--capacity-grid", "5e-5:3e-3:80", "--log-grid", "--out-dir", s(dir.path())]);
    let rows = data_rows(&dir.path().join("curve.csv"));
    assert_eq!(rows.len(), 80);
    let marks = json(&dir.path().join("landmarks.json"));
    let u = marks["turning_point"]["u"].as_f64().unwrap();
    assert!((u - 0.622).abs() < 0.03, "turning point {u}");
    let quasi = marks["quasi_point"]["u"].as_f64().unwrap();
    assert!(quasi < u);
}

#[test]
fn hard_rectifier_has_no_turning_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["meanfield", "--inventory", "0", "--capacity-grid", "0.01:0.4:12", "--log-grid", "--out-dir", s(dir.path())]);
    let marks = json(&dir.path().join("landmarks.json"));
    assert!(marks["turning_point"].is_null());
    assert!(marks["turning_point_note"].is_string());
}

#[test]
fn degenerate_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for grid in ["0.1:1:0", "1:0.1:10", "0.1:1", "-0.1:1:5 --log-grid"] {
        let mut args = vec!["meanfield", "--out-dir", s(dir.path()), "--capacity-grid"];
        args.extend(grid.split(' '));
        assert_eq!(turnpoint(&args).status.code(), Some(2), "{grid}");
    }
}

#[test]
fn window_count_matches_record_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tin.csv");
    let rows: Vec<_> = (0..20).map(|i| ((2000 + i).to_string(), 10.0 - 0.3 * i as f64 + 0.01 * (i * i) as f64, 0.05 + 0.01 * i as f64)).collect();
    write_csv(&input, &rows);
    let out = dir.path().join("out");
    ok(&["analyze", "--input", s(&input), "--window", "13", "--out-dir", s(&out)]);
    assert_eq!(data_rows(&out.join("elasticity.csv")).len(), 8);
    let report = json(&out.join("fit.json"));
    assert_eq!(report["source"], "tin");
    assert_eq!(report["curve_points"], 8);
}

#[test]
fn monotone_elasticity_has_no_yield_point() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wheat.csv");
    // elasticity 1/sur^2 falls monotonically
    let rows: Vec<_> = (0..30)
        .map(|i| {
            let sur = 0.1 + 0.02 * i as f64;
            (format!("{}Q{}", 1990 + i / 4, i % 4 + 1), 1.0 + 1.0 / sur, sur)
        })
        .collect();
    write_csv(&input, &rows);
    ok(&["analyze", "--input", s(&input), "--window", "7", "--out-dir", s(dir.path())]);
    let report = json(&dir.path().join("fit.json"));
    assert!(report["yield_point"].is_null());
    assert!(report["relative_yield_elasticity"].is_null());
}

#[test]
fn fit_recovers_generator_scales() {
    let (s_true, e_true) = (0.4, 5.0);
    let model = model_elasticity_curve(1e-3, &default_model_grid()).unwrap();
    let n = 400;
    let sur: Vec<f64> = (0..n).map(|i| 0.1 * s_true * 50f64.powf(i as f64 / (n - 1) as f64)).collect();
    let mut price = vec![0.0; n];
    price[n - 1] = 1.0 + e_true * s_true;
    for j in (0..n - 1).rev() {
        let mid = (sur[j] * sur[j + 1]).sqrt();
        price[j] = price[j + 1] + e_true * model.eval(mid / s_true) * (sur[j + 1] - sur[j]);
    }
    let records = (0..n)
        .map(|i| Record {
            period: Period::Year(1600 + i as i32),
            price: price[i],
            sur: sur[i],
        })
        .collect();
    let series = CommoditySeries::new("synthetic", records, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("synthetic.csv");
    let mut buf = Vec::new();
    write_series(&series, &mut buf).unwrap();
    std::fs::write(&input, buf).unwrap();

    ok(&["analyze", "--input", s(&input), "--window", "11", "--fit", "--out-dir", s(dir.path())]);
    let fit = &json(&dir.path().join("fit.json"))["fit"];
    let s_fit = fit["sur_scale"].as_f64().unwrap();
    let e_fit = fit["elasticity_scale"].as_f64().unwrap();
    assert!((s_fit / s_true - 1.0).abs() < 0.05, "sur scale {s_fit}");
    assert!((e_fit / e_true - 1.0).abs() < 0.05, "elasticity scale {e_fit}");
}

#[test]
fn deflator_requires_base() {
    let dir = tempfile::tempdir().unwrap();
    let out = turnpoint(&["analyze", "--input", "x.csv", "--deflator", "d.csv", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn elasticity_fixture(dir: &Path, name: &str) -> std::path::PathBuf {
    let sub = dir.join(name);
    std::fs::create_dir_all(&sub).unwrap();
    let input = sub.join("series.csv");
    let rows: Vec<_> = (0..40)
        .map(|i| {
            let sur = 0.05 + 0.01 * i as f64;
            ((1950 + i).to_string(), 1.0 + 0.5 / (sur + 0.02), sur)
        })
        .collect();
    write_csv(&input, &rows);
    ok(&["analyze", "--input", s(&input), "--window", "9", "--fit", "--out-dir", s(&sub)]);
    sub.join("elasticity.csv")
}

#[test]
fn plots_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = elasticity_fixture(dir.path(), "corn");
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    ok(&["plot", "--kind", "elasticity", "--input", s(&csv), "--overlay-model", "--output", s(&a)]);
    ok(&["plot", "--kind", "elasticity", "--input", s(&csv), "--overlay-model", "--output", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.manifest.json").exists());
}

#[test]
fn empty_input_plots_axes_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("elasticity.csv");
    std::fs::write(&csv, "sur_mean,elasticity,stderr,n\n").unwrap();
    let svg = dir.path().join("e.svg");
    ok(&["plot", "--kind", "elasticity", "--input", s(&csv), "--output", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && !text.contains("<circle"));
}

#[test]
fn composite_gives_each_commodity_its_own_style() {
    let dir = tempfile::tempdir().unwrap();
    let corn = elasticity_fixture(dir.path(), "corn");
    let soy = elasticity_fixture(dir.path(), "soy");
    let svg = dir.path().join("c.svg");
    ok(&["plot", "--kind", "composite", "--input", s(&corn), "--input", s(&soy), "--output", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains(">corn<") && text.contains(">soy<"));
    assert!(text.contains("<circle") && text.contains("<rect x="));
}

#[test]
fn schema_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = elasticity_fixture(dir.path(), "corn");
    let out = turnpoint(&["plot", "--kind", "curve", "--input", s(&csv), "--output", s(&dir.path().join("x.svg"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected columns"));
}
