use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_czbench"))
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn czbench")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"x\"\nbogus = 1\n").unwrap();
    let o = run(&["verify", "all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let demo = std::fs::read_to_string(repo().join("configs/demo.toml")).unwrap();
    std::fs::write(&cfg, demo.replace("eps = [0.5, 0.25]", "eps = [0.5, 1.5]")).unwrap();
    let o = run(&["verify", "tp-control", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps[1]"));

    let o = run(&["verify", "everything", "--config", repo().join("configs/demo.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["verify", "all", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_cap_must_be_a_number() {
    let o = bin()
        .env("CZBENCH_THREADS", "many")
        .args(["decompose", "--n", "1", "--t", "0.5", "--eps", "0.1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn decompose_json_tiles_the_dyadic_part() {
    let (t, eps) = (0.7, 0.05);
    let o = run(&["decompose", "--n", "2", "--t", "0.7", "--eps", "0.05", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let t_star = v["t_star"]["num"].as_f64().unwrap() / 2f64.powi(v["t_star"]["log2_den"].as_i64().unwrap() as i32);
    assert!(t_star <= t && t - t_star < eps);
    // cubes of side 2^-k have area 4^-k and must fill [0,1) x [0, t_star)
    let area: f64 = v["cubes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| 4f64.powi(-(c["level"].as_i64().unwrap() as i32)))
        .sum();
    assert_eq!(area, t_star);
}

#[test]
fn decompose_rejects_bad_height() {
    let o = run(&["decompose", "--n", "1", "--t", "1.5", "--eps", "0.1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_measure_round_trips_through_constants() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.txt");
    let w = dir.path().join("w.txt");
    let out = dir.path().join("c.json");
    let a = run(&["gen-measure", "--kind", "cascade", "--params", "a=0.3", "--seed", "5", "--depth", "6", "--out", s.to_str().unwrap()]);
    assert_eq!(code(&a), 0);
    let b = run(&["gen-measure", "--kind", "uniform", "--depth", "6", "--out", w.to_str().unwrap()]);
    assert_eq!(code(&b), 0);

    let text = std::fs::read_to_string(&s).unwrap();
    assert!(text.starts_with("n=1,L=6"));
    let rows: Vec<(usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (i, m) = l.split_once(',').unwrap();
            (i.parse().unwrap(), m.parse().unwrap())
        })
        .collect();
    assert!(rows.len() <= 64);
    let total: f64 = rows.iter().map(|r| r.1).sum();
    assert!((total - 1.0).abs() < 1e-9, "total mass {total}");

    // same seed, same bytes
    let again = dir.path().join("s2.txt");
    run(&["gen-measure", "--kind", "cascade", "--params", "a=0.3", "--seed", "5", "--depth", "6", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&s).unwrap(), std::fs::read(&again).unwrap());

    let c = run(&[
        "constants", "--sigma", s.to_str().unwrap(), "--omega", w.to_str().unwrap(), "--kernel", "hilbert", "--kappa",
        "2", "--depth", "6", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&c), 0, "{}", String::from_utf8_lossy(&c.stderr));
    let table: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let table = table.as_array().unwrap();
    let hash = table[0]["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for c in table {
        assert_eq!(c["config_hash"].as_str().unwrap(), hash);
        assert!(c["value"].as_f64().unwrap().is_finite());
    }
    // A₂ of a probability measure against Lebesgue on [0,1) is at least 1:
    // the unit cube alone gives |Q|_σ|Q|_ω/|Q|² = 1.
    let a2 = table.iter().find(|c| c["constant_name"].as_str().unwrap().starts_with("A2(")).unwrap();
    assert!(a2["value"].as_f64().unwrap() >= 1.0 - 1e-12);
}

#[test]
fn gen_measure_unknown_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-measure", "--kind", "gaussian", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_demo_matches_golden_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let cfg = repo().join("configs/demo.toml");
    let o = run(&["verify", "all", "--config", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let golden = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo_report.json")).unwrap();
    assert!(o.stdout == golden, "report differs from tests/golden/demo_report.json");

    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = report["verifications"].as_array().unwrap().len();
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv.lines().count(), n + 1);
    assert!(csv.lines().skip(1).all(|l| l.contains(",pass,")));
}

#[test]
fn verify_is_byte_identical_across_runs_and_thread_counts() {
    let cfg = repo().join("configs/demo.toml");
    let args = ["verify", "cancellation", "--config", cfg.to_str().unwrap()];
    let a = bin().env("CZBENCH_THREADS", "1").args(args).output().unwrap();
    let b = bin().env("CZBENCH_THREADS", "3").args(args).output().unwrap();
    assert_eq!(code(&a), 0);
    assert!(a.stdout == b.stdout);
}

#[test]
fn failing_check_exits_one() {
    // At depth 6 the discrete Hilbert norm is nowhere near π to within 1e-6.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    std::fs::write(
        &cfg,
        "name = \"tight\"\nn = 1\ndepth = 6\nsigma = { kind = \"uniform\" }\nomega = { kind = \"uniform\" }\n\
         kernel = { name = \"hilbert\" }\n\n[tolerances]\nhilbert_band = 1e-6\n",
    )
    .unwrap();
    let o = run(&["verify", "t1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["all_pass"], false);
}
