use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_open-dicke")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn parse(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let head = lines.next().unwrap().split(',').map(String::from).collect();
    (head, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn critical_curve_reaches_top_coupling() {
    let (head, rows) = parse(&stdout(&["critical-curve", "--points", "4"]));
    assert_eq!(head, ["s_tilde", "g_c"]);
    let last: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert!((last - 0.5590169943749474).abs() < 1e-15);
}

#[test]
fn subspace_moments_table() {
    let (head, rows) = parse(&stdout(&["subspace", "--method", "mf2", "--n-atoms", "10"]));
    assert_eq!(head, ["two_s", "s_tilde", "sz_mean", "sz2_mean", "photon_mean", "method", "converged", "residual"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[5] == "MF2" && r[6] == "true"));
}

#[test]
fn config_file_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# test\ng = 0.3\nomega_0 = 0.5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    stdout(&["critical-curve", "--points", "2", "--config", c, "--out", o]);
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("critical.json")).unwrap()).unwrap();
    assert_eq!(j["g"], 0.3);
    // 0.3 is below the global threshold
    assert!(j["s_tilde_c"].is_null());
    stdout(&["critical-curve", "--points", "2", "--config", c, "--g", "0.9", "--out", o]);
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("critical.json")).unwrap()).unwrap();
    assert_eq!(j["g"], 0.9);
    assert!((j["s_tilde_c"].as_f64().unwrap() - 0.3858024691358025).abs() < 1e-12);

    fs::write(&cfg, "colour = red\n").unwrap();
    let bad = run(&["critical-curve", "--config", c]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("colour"));
}

#[test]
fn dpt_writes_distribution_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let args = ["dpt", "--n-atoms", "20", "--f", "0.5", "--k", "3", "--cache", cache.to_str().unwrap(), "--out", out.to_str().unwrap()];
    stdout(&args);
    let first = fs::read_to_string(out.join("distribution.csv")).unwrap();
    let (head, rows) = parse(&first);
    assert_eq!(head, ["two_s", "s_tilde", "p", "p_scaled"]);
    let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let (head, rows) = parse(&fs::read_to_string(out.join("spectrum.csv")).unwrap());
    assert_eq!(head, ["index", "re_lambda", "im_lambda", "source"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[3] == "dpt"));
    // second run reads the cache and must reproduce the bytes
    stdout(&args);
    assert_eq!(first, fs::read_to_string(out.join("distribution.csv")).unwrap());
}

#[test]
fn oracle_small_system() {
    let (head, rows) = parse(&stdout(&["oracle", "--n-atoms", "2", "--n-max", "6", "--k", "2", "--gamma", "1e-3"]));
    assert_eq!(head, ["index", "re_lambda", "im_lambda", "source"]);
    assert_eq!(rows[0][3], "oracle");
    let lead: f64 = rows[0][1].parse().unwrap();
    assert!(lead.abs() < 1e-8);
    let too_big = run(&["oracle", "--n-atoms", "6"]);
    assert!(!too_big.status.success());
}

#[test]
fn wigner_of_one_subspace() {
    let (head, rows) = parse(&stdout(&["wigner", "--n-atoms", "4", "--two-s", "4", "--points", "31"]));
    assert_eq!(head, ["x", "p", "W"]);
    assert_eq!(rows.len(), 31 * 31);
}

#[test]
fn sweeps_tag_every_row() {
    let (head, rows) = parse(&stdout(&["sweep-phase", "--n-atoms", "40", "--g-min", "0.5", "--g-max", "1.0", "--g-step", "0.5"]));
    assert_eq!(&head[..2], ["g", "s_tilde"]);
    assert_eq!(rows.len(), 2 * 21);
    assert!(rows.iter().all(|r| r[r.len() - 2] == "MF1"));
    let (head, rows) = parse(&stdout(&["sweep-f", "--n-atoms", "30", "--f-grid", "0,1", "--k", "2"]));
    assert_eq!(head[0], "f");
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[r.len() - 2] == "DPT-MF2"));
    let (head, rows) = parse(&stdout(&["scaling", "--n-list", "40,60,80"]));
    assert_eq!(head[0], "n_atoms");
    assert_eq!(rows.len(), 3);
}

#[test]
fn unknown_figure_fails() {
    let o = run(&["figure", "fig-99"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown figure"));
}
