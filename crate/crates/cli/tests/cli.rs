use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qpolar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpolar"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = qpolar(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// BER rows with the wall-clock column dropped.
fn rows_without_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) if !l.starts_with('#') => head.to_string(),
            _ => l.to_string(),
        })
        .collect()
}

#[test]
fn exact_polarize_matches_density_evolution() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["polarize", "--family", "polar", "--L", "3", "--channel", "erasure:0.25", "--exact", "--out", "s.csv"]);
    let text = fs::read_to_string(d.path().join("s.csv")).unwrap();
    let stats = qpolar::ChannelStats::read_csv(text.as_bytes()).unwrap();
    let de = qpolar::polarization::bec_density_evolution(3, 0.25).unwrap();
    for w in 0..8 {
        assert!((stats.err_x[w] - de.err_x[w]).abs() < 1e-9);
        assert!((stats.err_z[w] - de.err_z[w]).abs() < 1e-9);
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("s.csv.meta.json")).unwrap()).unwrap();
    assert!(text.contains(meta["config_hash"].as_str().unwrap()));
    assert!(meta["version"].is_string());
}

#[test]
fn noiseless_polarize_is_all_zero() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["polarize", "--family", "bmera", "--L", "3", "--channel", "depol:0", "--trials", "1"]);
    let stats = qpolar::ChannelStats::read_csv(out.as_bytes()).unwrap();
    assert!(stats.err_x.iter().chain(&stats.err_z).all(|&v| v == 0.0));
}

#[test]
fn select_prints_bounds() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["polarize", "--L", "4", "--channel", "erasure:0.25", "--exact", "--out", "s.csv"]);
    let out = ok(d.path(), &["select", "--stats", "s.csv", "--k", "0", "--out", "m.json"]);
    let line = out.lines().last().unwrap();
    let (ub, db) = line.split_once(' ').unwrap();
    let ub: f64 = ub.strip_prefix("union_bound=").unwrap().parse().unwrap();
    let db: f64 = db.strip_prefix("degenerate_bound=").unwrap().parse().unwrap();
    // with no data wires the union bound is the sum of the decided quadratures
    assert!((ub - db).abs() < 1e-12);
    let map = qpolar::FrozenMap::from_json(&fs::read_to_string(d.path().join("m.json")).unwrap()).unwrap();
    assert_eq!((map.n, map.k, map.family.as_str()), (16, 0, "polar"));
    assert_eq!(qpolar(d.path(), &["select", "--stats", "s.csv", "--k", "17"]).status.code(), Some(2));
    assert_eq!(qpolar(d.path(), &["select", "--stats", "s.csv", "--rate", "0.3"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["polarize", "--family", "bmera", "--L", "5", "--channel", "depol:0.08", "--trials", "400", "--out", "s.csv"]);
    ok(d.path(), &["select", "--stats", "s.csv", "--rate", "0.5", "--out", "m.json"]);
    let sim = |threads: &str, out: &str| {
        ok(d.path(), &[
            "simulate", "--family", "bmera", "--L", "5", "--channel", "depol:0.08", "--frozen", "m.json", "--trials", "600",
            "--batch", "32", "--seed", "7", "--threads", threads, "--out", out,
        ]);
        fs::read_to_string(d.path().join(out)).unwrap()
    };
    let a = sim("1", "a.csv");
    let b = sim("8", "b.csv");
    assert_eq!(rows_without_time(&a), rows_without_time(&b));
    assert!(a.starts_with("n,k,channel,decoder,trials,block_errors,degenerate_only_events,ber,wilson95_low,wilson95_high,wall_seconds\n"));
    // appending keeps a single header
    let twice = sim("2", "a.csv");
    assert_eq!(twice.matches("n,k,").count(), 1);
    assert_eq!(twice.lines().filter(|l| l.starts_with("32,")).count(), 2);
}

#[test]
fn noiseless_simulation_has_zero_ber() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["polarize", "--L", "4", "--channel", "depol:0.05", "--trials", "200", "--out", "s.csv"]);
    ok(d.path(), &["select", "--stats", "s.csv", "--k", "8", "--out", "m.json"]);
    let out = ok(d.path(), &["simulate", "--L", "4", "--channel", "depol:0", "--frozen", "m.json", "--trials", "100", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["block_errors"], 0);
    assert_eq!(v["ber"], 0.0);
}

#[test]
fn mismatched_map_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["polarize", "--L", "3", "--channel", "depol:0.05", "--trials", "10", "--out", "s.csv"]);
    ok(d.path(), &["select", "--stats", "s.csv", "--k", "4", "--out", "m.json"]);
    let o = qpolar(d.path(), &["simulate", "--L", "4", "--channel", "depol:0.05", "--frozen", "m.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(qpolar(d.path(), &["polarize", "--L", "3", "--channel", "depol:x"]).status.code(), Some(2));
    assert_eq!(qpolar(d.path(), &["polarize", "--L", "3", "--channel", "wobble:0.1"]).status.code(), Some(2));
    assert_eq!(qpolar(d.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(qpolar(d.path(), &["oracle-check", "--L", "4", "--channel", "depol:0.1"]).status.code(), Some(2));
    assert_eq!(
        qpolar(d.path(), &["polarize", "--family", "bmera", "--L", "3", "--channel", "erasure:0.2", "--exact"]).status.code(),
        Some(2)
    );
}

#[test]
fn oracle_check_passes() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["oracle-check", "--family", "polar", "--L", "2", "--channel", "depol:0.1", "--states", "1000"][..],
        &["oracle-check", "--family", "bmera", "--L", "3", "--channel", "depol:0.25", "--decoder", "standard", "--states", "300"],
        &["oracle-check", "--family", "bmera", "--L", "3", "--channel", "depol:0.25", "--decoder", "symmetric", "--states", "300"],
        &["oracle-check", "--family", "polar", "--L", "2", "--channel", "erasure:0.25"],
    ] {
        let out = ok(d.path(), args);
        assert!(out.trim_end().ends_with("result=pass"), "{out}");
    }
}

#[test]
fn config_file_with_overrides() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.cfg"), "# defaults\nfamily=bmera\nL=3\nchannel=depol:0.1\ntrials=20\nseed=5\n").unwrap();
    let from_file = ok(d.path(), &["polarize", "--config", "run.cfg"]);
    let explicit = ok(d.path(), &["polarize", "--family", "bmera", "--L", "3", "--channel", "depol:0.1", "--trials", "20", "--seed", "5"]);
    assert_eq!(from_file, explicit);
    let overridden = ok(d.path(), &["--seed", "6", "polarize", "--config", "run.cfg"]);
    let explicit6 = ok(d.path(), &["polarize", "--family", "bmera", "--L", "3", "--channel", "depol:0.1", "--trials", "20", "--seed", "6"]);
    assert_eq!(overridden, explicit6);
    fs::write(d.path().join("bad.cfg"), "no equals sign\n").unwrap();
    assert_eq!(qpolar(d.path(), &["polarize", "--config", "bad.cfg"]).status.code(), Some(2));
}

#[test]
fn export_and_bench() {
    let d = tempfile::tempdir().unwrap();
    let json = ok(d.path(), &["export-circuit", "--family", "bmera", "--L", "3", "--format", "json"]);
    let c = qpolar::CodeCircuit::from_json(&json).unwrap();
    assert_eq!(c, qpolar::build_bmera(3).unwrap());
    let csv = ok(d.path(), &["export-circuit", "--family", "polar", "--L", "3"]);
    assert_eq!(csv.lines().count(), 1 + 12);
    let o = qpolar(d.path(), &["bench", "--Ls", "3,5", "--reps", "3"]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 3);
    assert!(String::from_utf8(o.stderr).unwrap().contains("verdict="));
}
