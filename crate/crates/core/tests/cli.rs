use std::path::{Path, PathBuf};
use std::process::Command;

use causal_tree::cli::{fit_model, main_with_args, predict_rows, Cli, Command as Sub, Model};
use causal_tree::data::read_covariates;
use clap::Parser;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-tree"))
}

fn run(args: &[&str]) -> i32 {
    let mut all = vec!["causal-tree"];
    all.extend_from_slice(args);
    main_with_args(all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, design: u8, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("d{design}_{n}_{seed}.csv"));
    let code = run(&["generate", "--design", &design.to_string(), "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&out)]);
    assert_eq!(code, 0);
    out
}

fn fit_args(data: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> =
        ["causal-tree", "fit", "--data", s(data), "--true-cate", "tau", "--out-dir", s(out)].iter().map(|x| x.to_string()).collect();
    v.extend(extra.iter().map(|x| x.to_string()));
    v
}

fn parse_fit(args: &[String]) -> causal_tree::cli::FitArgs {
    match Cli::try_parse_from(args).unwrap().command {
        Sub::Fit(a) => a,
        _ => unreachable!(),
    }
}

fn read_predictions(path: &Path) -> Vec<(usize, String, String, String)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[1].parse().unwrap(), rec[2].to_string(), rec[3].to_string(), rec[4].to_string())
        })
        .collect()
}

#[test]
fn fit_then_predict_reproduces_leaf_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 1000, 3);
    let out = dir.path().join("fit");
    let args = fit_args(&data, &out, &["--estimator", "ct", "--honest", "--seed", "7"]);
    assert_eq!(main_with_args(args.clone()), 0);

    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("leaves"));
    assert!(report.contains("ci_lo") || report.contains('['), "{report}");

    let preds = dir.path().join("preds.csv");
    let code = run(&["predict", "--model", s(&out.join("model.json")), "--data", s(&data), "--out", s(&preds)]);
    assert_eq!(code, 0);
    let from_file = read_predictions(&preds);

    // In-memory fit and prediction give the same output as the serialised path.
    let model = fit_model(&parse_fit(&args)).unwrap();
    let saved = Model::load(&out.join("model.json")).unwrap();
    assert_eq!(model, saved);
    let rows = read_covariates(std::fs::File::open(&data).unwrap(), &model.feature_names).unwrap();
    let in_memory = predict_rows(&model, &model.estimates, &rows);
    assert_eq!(from_file.len(), rows.len());
    for (i, ((leaf, t, lo, hi), (m_leaf, m_est))) in from_file.iter().zip(&in_memory).enumerate() {
        assert_eq!(*leaf, model.tree.apply(&rows[i]));
        assert_eq!(leaf, m_leaf);
        let (mt, mlo, mhi) = m_est.unwrap();
        assert_eq!(t.parse::<f64>().unwrap(), mt);
        assert_eq!(lo.parse::<f64>().unwrap(), mlo);
        assert_eq!(hi.parse::<f64>().unwrap(), mhi);
    }
}

#[test]
fn estimates_file_round_trips_through_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 800, 5);
    let out = dir.path().join("fit");
    assert_eq!(main_with_args(fit_args(&data, &out, &[])), 0);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let model = s(&out.join("model.json")).to_string();
    assert_eq!(run(&["predict", "--model", &model, "--data", s(&data), "--out", s(&a)]), 0);
    let est = s(&out.join("estimates.csv")).to_string();
    assert_eq!(run(&["predict", "--model", &model, "--estimates", &est, "--data", s(&data), "--out", s(&b)]), 0);
    assert_eq!(read_predictions(&a), read_predictions(&b));
}

#[test]
fn mismatched_covariates_are_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 600, 1);
    let out = dir.path().join("fit");
    assert_eq!(main_with_args(fit_args(&data, &out, &[])), 0);
    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "y,w,x1\n1,0,0.5\n2,1,-0.5\n").unwrap();
    let o = bin().args(["predict", "--model", s(&out.join("model.json")), "--data", s(&narrow)]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("x2"), "{err}");
}

#[test]
fn leaf_id_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 600, 2);
    let out = dir.path().join("fit");
    assert_eq!(main_with_args(fit_args(&data, &out, &[])), 0);
    let text = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let first = lines[1].split_once(',').unwrap().1.to_string();
    lines[1] = format!("9999,{first}");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let code = run(&["predict", "--model", s(&out.join("model.json")), "--estimates", s(&bad), "--data", s(&data)]);
    assert_eq!(code, 2);
}

#[test]
fn single_leaf_model_predicts_a_constant() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 400, 4);
    let out = dir.path().join("fit");
    // 200 training units cannot be split with 60 units per arm on each side.
    assert_eq!(main_with_args(fit_args(&data, &out, &["--n-min", "60"])), 0);
    let preds = dir.path().join("p.csv");
    assert_eq!(run(&["predict", "--model", s(&out.join("model.json")), "--data", s(&data), "--out", s(&preds)]), 0);
    let p = read_predictions(&preds);
    assert!(p.iter().all(|r| r == &p[0]));
}

fn with_propensity(src: &Path, dst: &Path) {
    // Attach a covariate-dependent propensity column; outcomes are unchanged.
    let mut r = csv::Reader::from_path(src).unwrap();
    let mut w = csv::Writer::from_path(dst).unwrap();
    let mut header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let x1 = header.iter().position(|h| h == "x1").unwrap();
    header.push("e".into());
    w.write_record(&header).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[x1].parse().unwrap();
        let e = 0.3 + 0.4 / (1.0 + (-x).exp());
        let mut row: Vec<String> = rec.iter().map(String::from).collect();
        row.push(e.to_string());
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn weighted_flag_routes_to_weighted_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let raw = generate(dir.path(), 1, 1000, 6);
    let data = dir.path().join("with_e.csv");
    with_propensity(&raw, &data);
    let out_u = dir.path().join("u");
    let out_w = dir.path().join("w");
    let plain = fit_args(&data, &out_u, &["--propensity", "e"]);
    let weighted = fit_args(&data, &out_w, &["--propensity", "e", "--weighted", "--trim", "0.1,0.9"]);
    let mu = fit_model(&parse_fit(&plain)).unwrap();
    let mw = fit_model(&parse_fit(&weighted)).unwrap();
    assert_eq!(mu.tree, mw.tree);
    assert_ne!(mu.estimates, mw.estimates);
    assert_eq!(main_with_args(weighted), 0);
    assert!(out_w.join("estimates.csv").exists());

    let no_e = fit_args(&raw, &dir.path().join("x"), &["--weighted"]);
    assert_eq!(main_with_args(no_e), 2);
}

#[test]
fn fit_is_deterministic_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 2, 1000, 8);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = bin().args(fit_args(&data, out, &["--estimator", "ts", "--seed", "11"]).iter().skip(1)).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["model.json", "estimates.csv", "report.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn adaptive_fit_uses_every_unit() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 600, 9);
    let m = fit_model(&parse_fit(&fit_args(&data, &dir.path().join("o"), &["--adaptive"]))).unwrap();
    assert!(!m.spec.honest);
    let n: usize = m.estimates.leaves.values().filter_map(|l| l.estimate()).map(|e| e.n_treat + e.n_control).sum();
    assert_eq!(n, 600);
}

#[test]
fn simulate_smoke_run_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.kv");
    std::fs::write(&cfg, "# smoke\ndesign = 1\nn = 300\nn_test = 1000\nreplications = 10\nseed = 4\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out-dir", s(&a)]), 0);
    assert_eq!(run(&["--threads", "1", "simulate", "--config", s(&cfg), "--out-dir", s(&b)]), 0);
    let csv_a = std::fs::read(a.join("sim_report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("sim_report.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("sim_report.txt")).unwrap(), std::fs::read(b.join("sim_report.txt")).unwrap());

    let text = std::fs::read_to_string(a.join("sim_report.txt")).unwrap();
    for panel in ["Number of leaves", "relative to CT-H", "honest to adaptive", "Coverage", "Transformed-outcome MSE"] {
        assert!(text.contains(panel), "missing panel {panel}");
    }
    assert!(!text.contains("NaN"));
    let mut r = csv::Reader::from_reader(csv_a.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 12);
}

#[test]
fn simulate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let bad_design = dir.path().join("a.kv");
    std::fs::write(&bad_design, "design = 4\nn = 300\nreplications = 1\n").unwrap();
    assert_eq!(run(&["simulate", "--config", s(&bad_design), "--out-dir", s(dir.path())]), 2);
    let tiny = dir.path().join("b.kv");
    std::fs::write(&tiny, "design = 1\nn = 10\nreplications = 1\n").unwrap();
    assert_eq!(run(&["simulate", "--config", s(&tiny), "--out-dir", s(dir.path())]), 2);
    let unknown = dir.path().join("c.kv");
    std::fs::write(&unknown, "design = 1\nsamples = 10\n").unwrap();
    assert_eq!(run(&["simulate", "--config", s(&unknown), "--out-dir", s(dir.path())]), 2);
}

#[test]
fn invalid_row_is_reported_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "y,w,x1\n1,0,0\n2,1,1\n3,2,2\n").unwrap();
    let o = bin().args(["fit", "--data", s(&data), "--out-dir", s(dir.path())]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}
