use serde_json::Value;
use std::path::{Path, PathBuf};
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["qfock"];
    argv.extend_from_slice(args);
    qfock_cli::run(argv)
}

fn run_report(args: &[&str], out: &Path) -> (i32, Value) {
    let mut a = args.to_vec();
    let out_s = out.to_str().unwrap();
    a.extend_from_slice(&["--out", out_s]);
    let code = run(&a);
    let report = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    (code, report)
}

const CONSTANT: &str = "[model]\nkind = \"mixed\"\ntruncation = 5\nd = 2\nq_constant = 0.5\n";
const AW: &str = "[model]\nkind = \"araki-woods\"\ntruncation = 4\nq_constant = 0.3\nblocks = [{ kind = \"invariant\" }, { kind = \"pair\", lambda = 4.0 }]\n";

#[test]
fn free_fourth_moment_is_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.toml",
        "[model]\nkind = \"mixed\"\ntruncation = 4\nq = [[0.0]]\n[params]\norder = 4\n",
    );
    let (code, r) = run_report(&["moments", "--config", cfg.to_str().unwrap()], &dir.path().join("r.json"));
    assert_eq!(code, 0);
    let c = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "phi(s_0^4)").unwrap();
    assert_eq!(c["lhs"].as_f64().unwrap(), 2.0);
    assert_eq!(c["rhs"].as_f64().unwrap(), 2.0);
    assert_eq!(c["pass"], true);
    assert_eq!(r["overall_pass"], true);
}

#[test]
fn constant_q_commutator_decay() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{CONSTANT}[params]\npairs = [[0, 0]]\n"));
    let (code, r) = run_report(&["commutator-decay", "--config", cfg.to_str().unwrap()], &dir.path().join("r.json"));
    assert_eq!(code, 0);
    let norms: Vec<f64> = r["data"]["pairs"][0]["norms"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let expected = [1.0, 0.5, 0.25, 0.125, 0.0625];
    assert_eq!(norms.len(), expected.len());
    for (a, b) in norms.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[model]\nkind = \"mixed\"\ntruncation = 3\nq = [[0.1, 0.2], [0.3, 0.1]]\n");
    assert_eq!(run(&["gram", "--config", cfg.to_str().unwrap()]), 2);
    let err = qfock_cli::config::RunConfig::parse(&std::fs::read_to_string(&cfg).unwrap()).unwrap_err();
    assert!(err.0.contains("q[0][1]"));
    assert_eq!(run(&["gram"]), 2);
    let mismatch = write_config(dir.path(), "cmd.toml", &format!("command = \"wick\"\n{CONSTANT}"));
    assert_eq!(run(&["gram", "--config", mismatch.to_str().unwrap()]), 2);
}

#[test]
fn library_errors_become_failed_checks() {
    let dir = TempDir::new().unwrap();
    // order 6 needs N ≥ 6
    let cfg = write_config(dir.path(), "t.toml", &format!("{CONSTANT}[params]\norder = 6\n"));
    let (code, r) = run_report(&["moments", "--config", cfg.to_str().unwrap()], &dir.path().join("r.json"));
    assert_eq!(code, 1);
    assert_eq!(r["overall_pass"], false);
    assert!(r["errors"][0].as_str().unwrap().contains("truncation"));
    let aw_only = run_report(&["aw-modular", "--config", cfg.to_str().unwrap()], &dir.path().join("r2.json"));
    assert_eq!(aw_only.0, 1);
}

#[test]
fn exit_status_follows_overall_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "aw.toml", AW);
    for cmd in ["aw-inner", "aw-modular", "aw-centralizer", "aw-fixed", "trace-check", "wick", "commutant"] {
        let (code, r) = run_report(&[cmd, "--config", cfg.to_str().unwrap()], &dir.path().join("r.json"));
        assert_eq!(r["overall_pass"], true, "{cmd}: {r}");
        assert_eq!(code, 0);
    }
    // the literal W(ξ)η = η⊗ξ check fails for ξ with a degree-1 part
    let (code, r) = run_report(&["aw-thm44", "--config", cfg.to_str().unwrap()], &dir.path().join("r.json"));
    assert_eq!(r["overall_pass"], false);
    assert_eq!(code, 1);
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, vec!["W(xi) eta = eta (x) xi"]);
}

#[test]
fn reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "m.toml", "[model]\nkind = \"mixed\"\ntruncation = 5\nq = [[0.3, -0.2], [-0.2, 0.5]]\n");
    let a = run_report(&["commutant", "--config", cfg.to_str().unwrap(), "--seed", "9"], &dir.path().join("a.json")).1;
    let b = run_report(&["commutant", "--config", cfg.to_str().unwrap(), "--seed", "9"], &dir.path().join("b.json")).1;
    assert_eq!(a["checks"], b["checks"]);
    assert_eq!(a["seed"], 9);
    let c = run_report(&["commutant", "--config", cfg.to_str().unwrap(), "--seed", "10"], &dir.path().join("c.json")).1;
    assert_ne!(a["checks"][0]["lhs"], c["checks"][0]["lhs"]);
}

#[test]
fn exact_precision_gram() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "x.toml",
        "[model]\nkind = \"mixed\"\ntruncation = 3\nq_rational = [[\"1/3\", \"-1/5\"], [\"-1/5\", \"1/2\"]]\n",
    );
    let (code, r) = run_report(&["gram", "--config", cfg.to_str().unwrap(), "--precision", "exact"], &dir.path().join("r.json"));
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["precision"], "exact");
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["name"] == "level 3 float = exact"));
}

#[test]
fn cache_lifecycle() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    std::fs::create_dir(&cache).unwrap();
    let cache_s = cache.to_str().unwrap();
    let out = dir.path().join("r.json");

    let (code, r) = run_report(&["cache", "list", "--cache", cache_s], &out);
    assert_eq!(code, 0);
    assert!(r["result"]["entries"].as_array().unwrap().is_empty());

    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let (code, r) = run_report(&["gram", "--config", cfg.to_str().unwrap(), "--cache", cache_s], &out);
    assert_eq!(code, 0);
    assert_eq!(r["cache_hits"], 0);
    let (_, r) = run_report(&["cache", "list", "--cache", cache_s], &out);
    let mut levels: Vec<u64> = r["result"]["entries"].as_array().unwrap().iter().map(|e| e["n"].as_u64().unwrap()).collect();
    levels.sort();
    assert_eq!(levels, (0..=5).collect::<Vec<_>>());

    let (_, r) = run_report(&["gram", "--config", cfg.to_str().unwrap(), "--cache", cache_s], &out);
    assert_eq!(r["cache_hits"], 6);

    let (code, _) = run_report(&["cache", "verify", "--cache", cache_s], &out);
    assert_eq!(code, 0);
    let victim = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().contains("_n3_"))
        .unwrap();
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, bytes).unwrap();
    let (code, r) = run_report(&["cache", "verify", "--cache", cache_s], &out);
    assert_eq!(code, 1);
    let flagged: Vec<&Value> = r["result"]["files"].as_array().unwrap().iter().filter(|f| f["status"] == "hash-mismatch").collect();
    assert_eq!(flagged.len(), 1);

    let (code, r) = run_report(&["cache", "purge", "--cache", cache_s], &out);
    assert_eq!(code, 0);
    assert!(r["result"]["removed"].as_u64().unwrap() >= 6);
    let (_, r) = run_report(&["cache", "list", "--cache", cache_s], &out);
    assert!(r["result"]["entries"].as_array().unwrap().is_empty());
}
