use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use timeless_runner::manifest::MANIFEST_FILE;
use timeless_runner::{RunManifest, StageStatus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timeless"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// A bundled scenario with textual substitutions, written into `dir`.
fn edited(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(scenario(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "`{from}` not in {name}");
        text = text.replace(from, to);
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = edited(tmp.path(), "separable.cfg", &[("count = 32, min = -6.0", "cuont = 32, min = -6.0")]);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("unknown field `cuont`"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 8"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn one_bad_file_stops_the_whole_batch() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("broken.cfg");
    fs::write(&bad, "name = \"x\"\n[grid\n").unwrap();
    let out = tmp.path().join("out");
    let o = bin()
        .args(["run", "--config"])
        .arg(scenario("separable.cfg"))
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let o = run(&scenario("coupled_heavy_clock.cfg"), dir, &["--workers", workers, "--stages", "solve,factorize"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ma = RunManifest::read(&a.join("coupled_heavy_clock")).unwrap();
    let mb = RunManifest::read(&b.join("coupled_heavy_clock")).unwrap();
    assert!(ma.ok);
    assert_eq!(ma.points.len(), 3);
    assert!(!ma.files.is_empty());
    assert_eq!(ma.checksums(), mb.checksums());
    assert_eq!(ma.scenario_hash, mb.scenario_hash);
}

#[test]
fn seed_override_changes_the_scenario_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&scenario("separable.cfg"), &a, &["--stages", "solve"]).status.success());
    assert!(run(&scenario("separable.cfg"), &b, &["--stages", "solve", "--seed", "99"]).status.success());
    let ma = RunManifest::read(&a.join("separable")).unwrap();
    let mb = RunManifest::read(&b.join("separable")).unwrap();
    assert_eq!((ma.seed, mb.seed), (1, 99));
    assert_ne!(ma.scenario_hash, mb.scenario_hash);
    let stages: Vec<_> = mb.points[0].stages.iter().map(|s| s.stage.name()).collect();
    assert_eq!(stages, ["solve"]);
}

#[test]
fn failed_stage_keeps_earlier_outputs_and_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    // Every clock point falls below the node threshold.
    let cfg = edited(tmp.path(), "separable.cfg", &[("[scf]", "[factorize]\nnode_threshold = 1e6\n\n[scf]")]);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("factorize"), "{}", stderr(&o));
    let dir = out.join("separable");
    let m = RunManifest::read(&dir).unwrap();
    assert!(!m.ok);
    let status: Vec<_> = m.points[0].stages.iter().map(|s| s.status).collect();
    assert_eq!(status, [StageStatus::Ok, StageStatus::Failed, StageStatus::Skipped, StageStatus::Skipped]);
    assert!(m.points[0].stages[1].error.as_deref().unwrap().contains("node threshold"));
    for f in ["solve.json", "eigenpairs.csv", "state.dump"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(!dir.join("factorize.json").exists());
}

#[test]
fn validate_reports_clock_constraints() {
    let tmp = tempfile::tempdir().unwrap();
    let q = edited(tmp.path(), "cyclic_clock.cfg", &[("momenta = [10.0]", "momenta = [10.5]")]);
    let th = edited(tmp.path(), "two_handle_clock.cfg", &[("momenta = [3.0, 1.0]", "momenta = [2.0, 1.0]")]);
    let o = bin().args(["validate", "--config"]).arg(&q).arg(&th).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("10.5 is not an integer"), "{text}");
    assert!(text.contains("L10 = 2 differs from C1 * L20 = 3"), "{text}");
}

#[test]
fn bundled_scenarios_validate() {
    let mut cmd = bin();
    cmd.args(["validate", "--config"]);
    for e in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")).unwrap() {
        cmd.arg(e.unwrap().path());
    }
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn unknown_stage_is_a_usage_error() {
    let o = bin().args(["run", "--config"]).arg(scenario("separable.cfg")).args(["--stages", "solve,bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown stage `bogus`"), "{}", stderr(&o));
}

#[test]
fn report_checks_files_and_writes_plot_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run(&scenario("harmonic_clock.cfg"), &out, &[]).status.success());
    let dir = out.join("harmonic_clock");
    let o = bin().arg("report").arg("--out").arg(&dir).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("emergence: min fidelity"), "{text}");
    let fid = fs::read_to_string(dir.join("plots/fidelity.csv")).unwrap();
    assert!(fid.starts_with("point,time,fidelity\n") && fid.lines().count() > 10);
    assert!(dir.join("plots/stages.csv").exists());
    // The plot tables are not part of the run, so the manifest is unchanged.
    assert!(!fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap().contains("plots/"));

    fs::write(dir.join("solve.json"), "{}").unwrap();
    let o = bin().arg("report").arg("--out").arg(&dir).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum mismatch: solve.json"), "{}", stderr(&o));
}

#[test]
fn report_on_a_missing_run_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("report").arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
