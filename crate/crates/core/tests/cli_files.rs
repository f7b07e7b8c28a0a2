use std::path::Path;
use std::process::{Command, Output};

use fbmlab::cli::read_csv;

fn fbmlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbmlab"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--cache-dir")
        .arg(dir.join("cache"))
        .env_remove("FBMLAB_CACHE_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn values(o: &Output) -> Vec<f64> {
    stdout(o)
        .lines()
        .skip(1)
        .take_while(|l| *l != "deltas")
        .filter_map(|l| l.split_whitespace().nth(1)?.parse().ok())
        .collect()
}

#[test]
fn innerprod_methods_agree_on_disjoint_indicators() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["innerprod", "--f", "1@[0,1]", "--g", "1@[2,3]", "--h", "0.3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = values(&o);
    assert_eq!(v.len(), 4, "{}", stdout(&o));
    for x in &v[..3] {
        assert!((x + 0.049125544044516707).abs() < 1e-8, "{x}");
    }
    assert!((v[3] + 0.049125544044516707).abs() < 1e-6, "{}", v[3]);
}

#[test]
fn innerprod_self_product_of_indicator() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["innerprod", "--f", "1@[0,2]", "--g", "1@[0,2]", "--method", "jolis,window"]);
    assert!(o.status.success());
    for x in values(&o) {
        assert!((x - 2f64.powf(0.6)).abs() < 1e-8, "{x}");
    }
}

#[test]
fn user_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["innerprod", "--f", "1@[0,2]", "--g", "1@[1,3]", "--method", "disjoint"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fbmlab(d.path(), &["innerprod", "--f", "2*s^1*exp(-1*s)@[0,1", "--g", "1@[0,1]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("position"), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fbmlab(d.path(), &["identity", "--h", "0.7"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fbmlab(d.path(), &["identity", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes_and_detects_perturbation() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = fbmlab(d.path(), &["selftest", "--sigma-h-factor", "1.001"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn identity_json_fields() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["identity", "--h", "0.35"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(d.path().join("out/identity.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["operation"], "identity");
    assert_eq!(v["H"], 0.35);
    for k in ["lhs", "rhs", "a1", "a2", "a3", "wall_clock_s"] {
        assert!(v[k].is_number(), "{k}");
    }
    assert!(v["rel_err"].as_f64().unwrap() < 1e-10);
}

#[test]
fn config_file_then_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.conf");
    std::fs::write(&cfg, "# test\nh = 0.4\ntheta = 2\n").unwrap();
    let o = fbmlab(d.path(), &["identity", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/identity.json")).unwrap()).unwrap();
    assert_eq!(v["H"], 0.4);
    assert_eq!(v["config"]["theta"], 2.0);
    let o = fbmlab(d.path(), &["identity", "--config", cfg.to_str().unwrap(), "--h", "0.25"]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/identity.json")).unwrap()).unwrap();
    assert_eq!(v["H"], 0.25);
}

#[test]
fn appendix_csv_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let o = fbmlab(d.path(), &["appendix", "--ids", "Q", "--h", "0.3", "--t-grid", "50,100,200,400"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_csv(&d.path().join("out/appendix.csv")).unwrap();
    assert_eq!(t.header, ["id", "T", "value", "fitted_slope", "closed_slope", "rel_err", "status"]);
    assert_eq!(t.rows.len(), 4);
    assert_eq!(t.meta("h"), Some("0.3"));
    let closed: f64 = t.column("closed_slope").unwrap()[0].parse().unwrap();
    assert_eq!(closed, 6.0 * (-2.0f64).exp() + 2.0);
    let fitted: f64 = t.column("fitted_slope").unwrap()[0].parse().unwrap();
    assert!((fitted - closed).abs() / closed < 0.01);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/appendix.json")).unwrap()).unwrap();
    let v0: f64 = t.column("value").unwrap()[0].parse().unwrap();
    assert_eq!(json["rows"][0]["value"].as_f64().unwrap(), v0);
}

#[test]
fn ftnorm_oracle_and_cache_are_bit_exact() {
    let d = tempfile::tempdir().unwrap();
    let args = ["ftnorm", "--t-grid", "4,10", "--oracle"];
    let a = fbmlab(d.path(), &args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let first = std::fs::read(d.path().join("out/ftnorm.csv")).unwrap();
    let t = read_csv(&d.path().join("out/ftnorm.csv")).unwrap();
    for (total, oracle) in t.column("total").unwrap().iter().zip(t.column("oracle").unwrap()) {
        let (x, y): (f64, f64) = (total.parse().unwrap(), oracle.parse().unwrap());
        assert!((x - y).abs() / x < 0.01, "{x} vs {y}");
    }
    let b = fbmlab(d.path(), &args);
    assert!(b.status.success());
    assert_eq!(first, std::fs::read(d.path().join("out/ftnorm.csv")).unwrap());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/ftnorm.json")).unwrap()).unwrap();
    assert!(json["cache_hits"].as_u64().unwrap() >= 20);
}

#[test]
fn be_rate_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let e = tempfile::tempdir().unwrap();
    let args = ["be-rate", "--t-grid", "10,20", "--n-reps", "200", "--delta", "1/8", "--seed", "7"];
    assert!(fbmlab(d.path(), &args).status.success());
    assert!(fbmlab(e.path(), &args).status.success());
    // identical apart from the directory metadata lines
    let body = |dir: &Path| {
        let text = std::fs::read_to_string(dir.join("out/be.csv")).unwrap();
        text.lines().filter(|l| !l.starts_with("# out") && !l.starts_with("# cache_dir")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body(d.path()), body(e.path()));
    let t = read_csv(&d.path().join("out/be.csv")).unwrap();
    assert_eq!(t.header, ["T", "n_reps", "dk_lse", "dk_mm", "var_norm_lse", "var_norm_mm", "mc_floor", "status"]);
    assert_eq!(t.rows.len(), 2);
    assert!(d.path().join("out/be_rate.dat").exists());
}
