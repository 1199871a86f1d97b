use std::path::Path;
use std::process::Command;

use fdmodels::config::{preset, ExperimentConfig, Study};
use fdmodels_cli::{main_with, report_run, run_config, Manifest, EXIT_OK, EXIT_VALIDATION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdmodels"))
}

fn small_custom() -> ExperimentConfig {
    let mut cfg = preset("custom").unwrap();
    cfg.n_samples = 30;
    if let Study::Custom(p) = &mut cfg.study {
        p.dt = 0.05;
        p.thin = 2;
        p.levels = vec![2, 4];
    }
    cfg
}

fn read_manifest(dir: &Path) -> Manifest {
    fdmodels::io::read_json(&dir.join("manifest.json")).unwrap()
}

#[test]
fn preset_lists_and_prints() {
    let out = bin().args(["preset"]).output().unwrap();
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "example3_conductivity"));

    let out = bin().args(["preset", "example2_input"]).output().unwrap();
    let cfg: ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg, preset("example2_input").unwrap());
}

#[test]
fn validation_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("example2_input").unwrap();
    if let Study::Example2Input(p) = &mut cfg.study {
        p.oscillators[0].beta = p.oscillators[0].alpha.powi(2) / 4.0;
        p.levels = vec![15, 5];
    }
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("underdamped"), "{err}");
    assert!(err.contains("not strictly increasing"), "{err}");
}

#[test]
fn syntax_errors_carry_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"schema_version\": 1,\n  oops\n}").unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_and_unknown_preset_are_validation_failures() {
    assert_eq!(main_with(["fdmodels", "run"]), EXIT_VALIDATION);
    assert_eq!(
        main_with(["fdmodels", "run", "--preset", "nope"]),
        EXIT_VALIDATION
    );
    assert_eq!(
        main_with(["fdmodels", "preset", "custom", "--bogus"]),
        EXIT_VALIDATION
    );
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_custom();
    let ma = run_config(&cfg, a.path(), false, Some(1)).unwrap();
    let mb = run_config(&cfg, b.path(), false, Some(3)).unwrap();
    assert_eq!(ma.deterministic_part(), mb.deterministic_part());
    assert_eq!(mb.run_info.threads, 3);
    for f in &ma.files {
        let x = std::fs::read(a.path().join(&f.path)).unwrap();
        let y = std::fs::read(b.path().join(&f.path)).unwrap();
        assert_eq!(x, y, "{}", f.path);
        assert_eq!(fdmodels_cli::sha256_hex(&x), f.sha256);
    }
    assert_eq!(read_manifest(a.path()), ma);
}

#[test]
fn seed_flag_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    std::fs::write(&cfg_path, serde_json::to_string(&small_custom()).unwrap()).unwrap();
    for (sub, seed) in [("s1", "1"), ("s2", "2")] {
        let code = main_with([
            "fdmodels",
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            dir.path().join(sub).to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let (m1, m2) = (
        read_manifest(&dir.path().join("s1")),
        read_manifest(&dir.path().join("s2")),
    );
    assert_eq!((m1.seed, m2.seed), (1, 2));
    let hash = |m: &Manifest| {
        m.files
            .iter()
            .find(|f| f.path == "inputs.bin")
            .unwrap()
            .sha256
            .clone()
    };
    assert_ne!(hash(&m1), hash(&m2));
}

#[test]
fn report_reproduces_run_statistics() {
    let run = tempfile::tempdir().unwrap();
    let m = run_config(&small_custom(), run.path(), false, None).unwrap();
    let rep = run.path().join("report");
    let r = report_run(run.path(), &rep, None).unwrap();
    for f in m.files.iter().filter(|f| f.path.ends_with(".csv")) {
        let again = r.files.iter().find(|g| g.path == f.path).unwrap();
        assert_eq!(again.sha256, f.sha256, "{}", f.path);
    }
}

#[test]
fn report_refuses_tampered_inputs() {
    let run = tempfile::tempdir().unwrap();
    run_config(&small_custom(), run.path(), false, None).unwrap();
    let bin_path = run.path().join("inputs.bin");
    let mut bytes = std::fs::read(&bin_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&bin_path, bytes).unwrap();
    let err = report_run(run.path(), &run.path().join("report"), None).unwrap_err();
    assert!(err.to_string().contains("content hash"), "{err}");
}

#[test]
fn eigen_writes_analytic_and_numerical_bases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    std::fs::write(&cfg_path, serde_json::to_string(&small_custom()).unwrap()).unwrap();
    let out = bin()
        .args(["eigen", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("e"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["basis_X.csv", "basis_X.json", "basis_X_analytic.csv"] {
        assert!(dir.path().join("e").join(f).exists(), "{f}");
    }
}
