use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hardball::graphs::CollisionSequence;

const FIXTURE: &str = "[system]\nnu = 2\nradius = 0.1\nmasses = [1.0, 1.0, 1.0]\n\n[experiment]\nseed = 7\ncollisions = 200\n";

fn hardball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardball")).args(args).output().unwrap()
}

fn with_config(text: &str, f: impl FnOnce(&Path, &Path)) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, text).unwrap();
    f(&cfg, &dir.path().join("out"));
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_report_and_events() {
    with_config(FIXTURE, |cfg, out| {
        let o = hardball(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS energy_drift"));
        let r = report(out);
        assert_eq!(r["status"], "pass");
        assert_eq!(r["results"]["collisions"], 200);
        assert!(r["config"]["experiment"]["output_dir"].is_null());
        let seq = CollisionSequence::read_events_csv(fs::File::open(out.join("events.csv")).unwrap(), 3).unwrap();
        assert_eq!(seq.len(), 200);
    });
}

#[test]
fn seed_flag_overrides_config() {
    with_config(FIXTURE, |cfg, out| {
        let c = cfg.to_str().unwrap();
        let other = out.with_file_name("other");
        assert_eq!(hardball(&["simulate", "--config", c, "--output", out.to_str().unwrap(), "--quiet"]).status.code(), Some(0));
        let o = hardball(&["simulate", "--config", c, "--output", other.to_str().unwrap(), "--seed", "8", "--quiet"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
        assert_eq!(report(&other)["config"]["experiment"]["seed"], 8);
        assert_ne!(report(out)["results"]["t_end"], report(&other)["results"]["t_end"]);
    });
}

#[test]
fn malformed_configs_exit_4_without_output() {
    let cases = [
        "[system]\nnu = 2\nradius = 0.1\n",
        "[system]\nnu = 2\nradius = 0.1\nmasses = [1.0, 1.0]\nextra = true\n",
        "[system]\nnu = 2\nradius = 0.3\nmasses = [1.0, 1.0]\n",
        "[system]\nnu = 2\nradius = 0.1\nmasses = [1.0, -1.0]\n",
        "[system]\nnu = 2\nradius = 0.1\nmasses = [1.0, 1.0]\n[experiment]\nkind = \"certificate\"\n",
        "this is not toml",
    ];
    for text in cases {
        with_config(text, |cfg, out| {
            let o = hardball(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(4), "config {text:?}");
            assert!(!out.exists());
        });
    }
    with_config(FIXTURE, |cfg, out| {
        let o = hardball(&["verify-lemma310", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(4));
        assert!(!out.exists());
    });
    let o = hardball(&["simulate", "--config", "/nonexistent/run.toml", "--output", "/nonexistent/out"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(hardball(&["frobnicate"]).status.code(), Some(4));
}

#[test]
fn dense_packing_exits_3() {
    let masses = vec!["1.0"; 40].join(", ");
    let text = format!("[system]\nnu = 2\nradius = 0.24\nmasses = [{masses}]\n");
    with_config(&text, |cfg, out| {
        let o = hardball(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3));
        let r = report(out);
        assert_eq!(r["status"], "hypothesis-unmet");
        assert!(r["error"].as_str().unwrap().contains("10000"));
    });
}

#[test]
fn estimates_from_mass_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est");
    let o = hardball(&["estimates", "--masses", "1,1,1", "--output", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    let f1 = r["results"]["f1"].as_f64().unwrap();
    assert!((f1 - 4.0 * 3f64.sqrt()).abs() < 1e-12);
    assert!(r["results"]["g_threshold"].as_f64().unwrap() <= 0.99 / 12.0 + 1e-12);
    assert!(r["config"]["system"]["nu"].is_null());
}

#[test]
fn certificate_run_writes_reloadable_records() {
    with_config(&format!("{FIXTURE}L = 100.0\n"), |cfg, out| {
        let o = hardball(&["certificate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--quiet"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let certs: Vec<hardball::subspaces::Certificate> =
            serde_json::from_str(&fs::read_to_string(out.join("certificates.json")).unwrap()).unwrap();
        assert_eq!(certs.len(), 2);
        let p = hardball::phase_space::SystemParams::equal_masses(3, 2, 0.1).unwrap();
        for c in &certs {
            assert!(hardball::subspaces::verify_certificate(&p, c).unwrap().passed);
        }
        assert!(certs[0].ratio > 100.0 && certs[1].ratio < 0.01);
    });
}

#[test]
fn shipped_configs_resolve() {
    use hardball::cli::{ExperimentConfig, Kind};
    let fixture = ExperimentConfig::from_toml(include_str!("../../../docs/configs/fixture.toml")).unwrap();
    for kind in [Kind::Simulate, Kind::VerifyQ, Kind::VerifyLemma310, Kind::Certificate, Kind::Estimates] {
        fixture.clone().resolve(kind, None, None).unwrap();
    }
    let unequal = ExperimentConfig::from_toml(include_str!("../../../docs/configs/unequal-3d.toml")).unwrap();
    unequal.clone().resolve(Kind::Certificate, None, None).unwrap();
    assert!(unequal.resolve(Kind::Simulate, None, None).is_err());
}
