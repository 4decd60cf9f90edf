use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const GAUSSIAN: &str = r#"{"type": "iid_mgf", "family": "gaussian", "params": {"mu": 0, "sigma2": 1}}"#;
const SIGNS: &str = r#"{"type": "iid_finite", "atoms": [-1, 1], "probs": [0.5, 0.5]}"#;
const BERNOULLI: &str = r#"{"type": "iid_finite", "atoms": [0, 1], "probs": [0.5, 0.5]}"#;
const IRRATIONAL: &str = r#"{"type": "iid_finite", "atoms": [0, 1, 1.4142135623730951], "probs": [0.3333333333333333, 0.3333333333333333, 0.33333333333333337]}"#;
const CHAIN: &str = r#"{"type": "finite_markov", "P": [[0.6, 0.4], [0.3, 0.7]], "h": [[0, 1], [1.4142135623730951, 0.5]], "mu0": [0.5, 0.5]}"#;
const COBOUNDARY: &str = r#"{"type": "finite_markov", "P": [[0.6, 0.4], [0.3, 0.7]], "h": [[0, 1], [-1, 0]], "mu0": [0.5, 0.5]}"#;
const DOUBLING_32: &str = r#"{"type": "fourier", "map": "doubling", "g": {"cos": [0, 1], "sin": [0, 0]}, "m_max": 32}"#;
const DOUBLING_64: &str = r#"{"type": "fourier", "map": "doubling", "g": {"cos": [0, 1], "sin": [0, 0]}, "m_max": 64}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn model(&self, name: &str, text: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn ldx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldx")).args(args).output().unwrap()
}

fn run(cmd: &str, model: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--model", model.to_str().unwrap()];
    args.extend_from_slice(extra);
    ldx(&args)
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses a single-table CSV into header and rows of strings.
fn csv_table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Splits multi-table CSV output into named blocks.
fn csv_blocks(text: &str) -> Vec<(String, String)> {
    text.split("\n\n")
        .map(|block| {
            let (name, body) = block.split_once('\n').unwrap();
            (name.trim_start_matches("# ").to_string(), body.to_string())
        })
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| num(&r[i])).collect()
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

#[test]
fn rate_gaussian_matches_quadratic_rate() {
    let ws = Workspace::new();
    let m = ws.model("g.json", GAUSSIAN);
    let (header, rows) = csv_table(&ok(&run("rate", &m, &["--a-grid", "0.5:1.0:2"])));
    assert_eq!(header, ["a", "theta_a", "I", "sigma2", "Z0", "B"]);
    let rate = column(&rows, 2);
    assert!(rel(rate[0], 0.125) < 1e-12 && rel(rate[1], 0.5) < 1e-12);
    assert_eq!(rows[0][5], "inf");
}

#[test]
fn rate_drops_levels_beyond_range_end() {
    let ws = Workspace::new();
    let m = ws.model("pm.json", SIGNS);
    let out = run("rate", &m, &["--a-grid", "0.4:1.2:3"]);
    let (_, rows) = csv_table(&ok(&out));
    assert_eq!(column(&rows, 0), vec![0.4, 0.8]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("a = 1.2 dropped"));
}

#[test]
fn empty_grid_gives_empty_table() {
    let ws = Workspace::new();
    let m = ws.model("g.json", GAUSSIAN);
    let text = ok(&run("rate", &m, &["--a-grid", "0.1:0.5:0"]));
    assert_eq!(text, "a,theta_a,I,sigma2,Z0,B\n");
}

#[test]
fn expand_gaussian_and_sidecar() {
    let ws = Workspace::new();
    let m = ws.model("g.json", GAUSSIAN);
    let out = ws.path("e.csv");
    ok(&run("expand", &m, &["--a", "1", "--order", "4", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(&out).unwrap();
    let blocks = csv_blocks(&text);
    assert_eq!(blocks[0].0, "coefficients");
    assert_eq!(blocks[1].0, "polynomials");
    let (_, rows) = csv_table(&blocks[0].1);
    let d = column(&rows, 2);
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    for (got, want) in d.iter().zip([c, -c, 3.0 * c]) {
        assert!(rel(*got, want) < 1e-10, "{got} vs {want}");
    }
    let side: Value = serde_json::from_str(&std::fs::read_to_string(ws.path("e.csv.diag.json")).unwrap()).unwrap();
    for key in ["gap", "max_imag_discarded", "continuation_radius", "warnings"] {
        assert!(side.get(key).is_some(), "sidecar lacks {key}");
    }
    assert!(side["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn order_zero_matches_firstorder() {
    let ws = Workspace::new();
    let m = ws.model("chain.json", CHAIN);
    let text = ok(&run("expand", &m, &["--a", "0.3", "--order", "0"]));
    let (_, rows) = csv_table(&csv_blocks(&text)[0].1);
    assert_eq!(rows.len(), 1);
    let (_, first) = csv_table(&ok(&run("firstorder", &m, &["--a", "0.3"])));
    assert_eq!(rows[0][2], first[0][1]);
}

#[test]
fn lattice_model_warns_but_completes() {
    let ws = Workspace::new();
    let m = ws.model("b.json", BERNOULLI);
    let out_path = ws.path("lat.csv");
    let out = run("expand", &m, &["--a", "0.2", "--out", out_path.to_str().unwrap()]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lattice"));
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("lat.csv.diag.json")).unwrap()).unwrap();
    assert!(side["warnings"][0].as_str().unwrap().contains("lattice"));
}

#[test]
fn firstorder_columns_agree() {
    let ws = Workspace::new();
    for (name, text) in [("g.json", GAUSSIAN), ("c.json", CHAIN), ("i.json", IRRATIONAL)] {
        let m = ws.model(name, text);
        let (_, rows) = csv_table(&ok(&run("firstorder", &m, &["--a-grid", "0.1:0.3:3"])));
        for r in &rows {
            assert!(rel(num(&r[1]), num(&r[2])) < 1e-12, "{name}: {r:?}");
        }
    }
    let m = ws.model("g.json", GAUSSIAN);
    let (_, rows) = csv_table(&ok(&run("firstorder", &m, &["--a", "1"])));
    assert!((num(&rows[0][1]) - 0.398942280401).abs() < 1e-11);
}

#[test]
fn doubling_map_constant_is_stable_in_m_max() {
    let ws = Workspace::new();
    let k = |text: &str, name: &str| {
        let m = ws.model(name, text);
        let (_, rows) = csv_table(&ok(&run("firstorder", &m, &["--a", "0.3"])));
        num(&rows[0][2])
    };
    let (k32, k64) = (k(DOUBLING_32, "d32.json"), k(DOUBLING_64, "d64.json"));
    assert!(k32 > 0.0 && k32.is_finite());
    assert!(rel(k32, k64) < 1e-8);
}

#[test]
fn validate_uses_engine_coefficients() {
    let ws = Workspace::new();
    let m = ws.model("c.json", CHAIN);
    let text = ok(&run("validate", &m, &["--a", "0.3", "--N-grid", "10..12", "--order", "2"]));
    let blocks = csv_blocks(&text);
    let (header, rows) = csv_table(&blocks[0].1);
    assert_eq!(header, ["a", "N", "m", "oracle", "oracle_err", "expansion", "residual", "scaled_residual"]);
    assert_eq!(rows.len(), 3 * 2);
    // The expansion column is rebuilt from the coefficients `expand` reports.
    let (_, rate) = csv_table(&ok(&run("rate", &m, &["--a", "0.3"])));
    let rate = num(&rate[0][2]);
    let (_, coeffs) = csv_table(&csv_blocks(&ok(&run("expand", &m, &["--a", "0.3", "--order", "2"])))[0].1);
    let d = column(&coeffs, 2);
    for r in &rows {
        let (n, mm) = (num(&r[1]), num(&r[2]) as usize);
        let series: f64 = (0..=mm).map(|k| d[k] / n.powf(k as f64 + 0.5)).sum();
        assert!(rel(num(&r[5]), series * (-rate * n).exp()) < 1e-12);
        assert_eq!(num(&r[4]), 0.0);
    }
    let (_, fit) = csv_table(&blocks[1].1);
    assert_eq!(fit.len(), 2);
}

#[test]
fn validate_markov_monte_carlo_first_order() {
    let ws = Workspace::new();
    let m = ws.model("c.json", CHAIN);
    let args = ["--a", "0.3", "--N-grid", "1000", "--order", "0", "--oracle", "mc", "--samples", "200000", "--seed", "3"];
    let (_, rows) = csv_table(&csv_blocks(&ok(&run("validate", &m, &args)))[0].1);
    let (oracle, expansion) = (num(&rows[0][3]), num(&rows[0][5]));
    let ratio = oracle / expansion;
    assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
}

#[test]
fn validate_reduces_grid_on_scale_errors() {
    let ws = Workspace::new();
    let m = ws.model("c.json", CHAIN);
    let out = run("validate", &m, &["--a", "0.3", "--N-grid", "10,40", "--order", "0"]);
    let (_, rows) = csv_table(&csv_blocks(&ok(&out))[0].1);
    assert_eq!(rows.len(), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("N = 40 dropped"));
}

#[test]
fn diagnose_lattice_and_irrational() {
    let ws = Workspace::new();
    let lookup = |text: &str, key: &str| -> String {
        let (_, rows) = csv_table(&csv_blocks(text)[0].1);
        rows.iter().find(|r| r[0] == key).unwrap()[1].clone()
    };
    let m = ws.model("b.json", BERNOULLI);
    let text = ok(&run("diagnose", &m, &["--a", "0.2"]));
    assert_eq!(lookup(&text, "gap_scan_flagged"), "true");
    assert!((num(&lookup(&text, "gap_scan_argmax")) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    assert_eq!(lookup(&text, "nonlattice"), "false");

    let m = ws.model("i.json", IRRATIONAL);
    let text = ok(&run("diagnose", &m, &["--a", "0.2", "--s-grid", "0.1:100:1000"]));
    assert_eq!(lookup(&text, "gap_scan_flagged"), "false");
    assert_eq!(lookup(&text, "nonlattice"), "true");
    assert_eq!(lookup(&text, "diophantine_lattice_flag"), "false");

    let m = ws.model("cob.json", COBOUNDARY);
    let out = run("diagnose", &m, &[]);
    assert_eq!(lookup(&ok(&out), "degenerate_variance"), "true");
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate variance"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let code = |out: Output| out.status.code().unwrap();
    // 2: configuration and parse errors
    let bad = ws.model("bad.json", "{\"type\": \"iid_finite\",\n \"atoms\": [0, 1,\n}");
    let out = run("rate", &bad, &["--a", "0.1"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(code(out), 2);
    assert_eq!(code(ldx(&["rate", "--a", "0.1"])), 2);
    let g = ws.model("g.json", GAUSSIAN);
    assert_eq!(code(run("rate", &g, &[])), 2);
    assert_eq!(code(run("validate", &g, &["--a", "0.5"])), 2);
    // 3: invalid models and ranges
    let invalid = ws.model("inv.json", r#"{"type": "iid_finite", "atoms": [0, 1], "probs": [0.5, 0.6]}"#);
    assert_eq!(code(run("rate", &invalid, &["--a", "0.1"])), 3);
    assert_eq!(code(run("expand", &g, &["--a", "0.5", "--order", "12"])), 3);
    let substochastic = ws.model("sub.json", r#"{"type": "finite_markov", "P": [[0.6, 0.3], [0.3, 0.7]], "h": [[0, 1], [1, 0]], "mu0": [0.5, 0.5]}"#);
    assert_eq!(code(run("rate", &substochastic, &["--a", "0.1"])), 3);
    // 4: numerical failure (a circle far too large around eigenvalue collisions)
    let c = ws.model("c.json", CHAIN);
    assert_eq!(code(run("rate", &c, &["--a", "0.3", "--radius", "500"])), 4);
    // 5: oracle out of scale for every N
    assert_eq!(code(run("validate", &c, &["--a", "0.3", "--N-grid", "40,50", "--order", "0"])), 5);
}

#[test]
fn output_is_deterministic() {
    let ws = Workspace::new();
    let c = ws.model("c.json", CHAIN);
    let args = ["--a", "0.3", "--N-grid", "50", "--oracle", "mc", "--samples", "20000", "--seed", "7", "--order", "2"];
    let a = ok(&run("validate", &c, &args));
    let b = ok(&run("validate", &c, &args));
    assert_eq!(a, b);
    let mut other = args.to_vec();
    other[9] = "8";
    assert_ne!(a, ok(&run("validate", &c, &other)));
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let ws = Workspace::new();
    let c = ws.model("c.json", CHAIN);
    for cmd in ["rate", "expand", "firstorder", "validate", "diagnose"] {
        let extra = ["--a", "0.3", "--N-grid", "8..10", "--order", "2"];
        let csv_text = ok(&run(cmd, &c, &extra));
        let mut json_args = extra.to_vec();
        json_args.extend_from_slice(&["--format", "json"]);
        let doc: Value = serde_json::from_str(&ok(&run(cmd, &c, &json_args))).unwrap();
        assert_eq!(doc["command"], cmd);
        let tables = doc["tables"].as_array().unwrap();
        let blocks: Vec<(String, String)> = if tables.len() > 1 {
            csv_blocks(&csv_text)
        } else {
            vec![(tables[0]["name"].as_str().unwrap().to_string(), csv_text.clone())]
        };
        assert_eq!(blocks.len(), tables.len(), "{cmd}");
        for ((name, body), t) in blocks.iter().zip(tables) {
            assert_eq!(name, t["name"].as_str().unwrap());
            let (header, rows) = csv_table(body);
            let cols: Vec<&str> = t["columns"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
            assert_eq!(header, cols);
            let jrows = t["rows"].as_array().unwrap();
            assert_eq!(rows.len(), jrows.len(), "{cmd}/{name}");
            for (r, jr) in rows.iter().zip(jrows) {
                for (cell, jv) in r.iter().zip(jr.as_array().unwrap()) {
                    match jv {
                        Value::Number(n) => assert_eq!(num(cell), n.as_f64().unwrap(), "{cmd}/{name}"),
                        Value::Null => assert!(num(cell).is_nan() || num(cell).is_infinite()),
                        Value::Bool(b) => assert_eq!(cell, &b.to_string()),
                        Value::String(s) => assert_eq!(cell, s),
                        other => panic!("unexpected JSON value {other}"),
                    }
                }
            }
        }
    }
}
