use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tpa(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpa-sim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn builtin_runs_and_replication_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpa(&["run", "--builtin", "replication-cw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("r_det = 0.0707 Hz"), "{text}");
    assert!(text.contains("below threshold"), "{text}");
    for f in ["points.csv", "fit.json", "report.json", "timetags.csv", "timetags.csv.meta.toml", "phase.csv"] {
        assert!(dir.path().join(format!("replication-cw.{f}")).exists(), "{f}");
    }
}

#[test]
fn schema_violation_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/bsv-sweep.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, base.replace("points = 8", "points = 8\nduty = 0.5")).unwrap();
    let o = tpa(&["run", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 30") && err.contains("duty"), "{err}");

    let missing = dir.path().join("missing.toml");
    fs::write(&missing, "name = \"x\"\nkind = \"bsv-sweep\"\n").unwrap();
    let o = tpa(&["run", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn infeasible_physics_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/replication-cw.toml")).unwrap();
    let cfg = dir.path().join("duty.toml");
    fs::write(&cfg, base.replace("duty_cycle = 0.5", "duty_cycle = 1.0")).unwrap();
    let o = tpa(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = tpa(&["chopper-sim", "--duty", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_required_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tpa(&["analyze"], dir.path()).status.code(), Some(2));
    assert_eq!(tpa(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(tpa(&["frobnicate"], dir.path()).status.code(), Some(2));
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["provenance"]["timestamp"] = serde_json::Value::Null;
    v
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for builtin in ["replication-cw", "bsv-sweep", "sfg-crossover"] {
        for d in [&a, &b] {
            assert!(tpa(&["run", "--builtin", builtin, "--seed", "7"], d.path()).status.success());
        }
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 12);
    for n in names {
        let (x, y) = (a.path().join(&n), b.path().join(&n));
        if n.to_string_lossy().ends_with(".report.json") {
            assert_eq!(without_timestamp(&x), without_timestamp(&y));
        } else {
            assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{n:?}");
        }
    }
}

#[test]
fn seed_changes_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    tpa(&["run", "--builtin", "bsv-sweep", "--seed", "1"], a.path());
    tpa(&["run", "--builtin", "bsv-sweep", "--seed", "2"], b.path());
    let f = "bsv-sweep.points.csv";
    assert_ne!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
}

#[test]
fn analyze_reproduces_in_process_fits() {
    let run = tempfile::tempdir().unwrap();
    let again = tempfile::tempdir().unwrap();
    for (builtin, input, fit) in [
        ("replication-cw", "replication-cw.timetags.csv", "power-law"),
        ("bsv-sweep", "bsv-sweep.points.csv", "power-law"),
        ("sfg-crossover", "sfg-crossover.points.csv", "crossover"),
    ] {
        assert!(tpa(&["run", "--builtin", builtin], run.path()).status.success());
        let o = tpa(&["analyze", "--input", run.path().join(input).to_str().unwrap(), "--fit", fit], again.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let name = format!("{builtin}.fit.json");
        assert_eq!(
            fs::read(run.path().join(&name)).unwrap(),
            fs::read(again.path().join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn analyze_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    let o = tpa(&["analyze", "--input", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let tags = dir.path().join("t.timetags.csv");
    fs::write(&tags, "timestamp_ns,channel\n5,0\n3,0\n").unwrap();
    let o = tpa(&["analyze", "--input", tags.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn rates_closed_loop() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpa(&["rates", "--sigma2", "1e-57", "--area", "1e-11", "--ent-time", "1.26e-13", "--f", "1"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("n_at_crossover = 1.00"), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    assert!((v["n_at_crossover"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn tof_low_gain_fwhm() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpa(&["tof-spec", "--preset", "low-gain", "--samples", "100000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tof-low-gain.summary.json")).unwrap()).unwrap();
    let fwhm = v["marginal_fwhm_m"].as_f64().unwrap();
    assert!((fwhm / 30e-9 - 1.0).abs() < 0.05, "{fwhm}");
    let spectrum = fs::read_to_string(dir.path().join("tof-low-gain.spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("bin_center_m,count\n"));
}

#[test]
fn chopper_sim_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpa(&["chopper-sim", "--signal-rate", "1", "--duration", "60", "--sync", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let tags = fs::read_to_string(dir.path().join("chopper.timetags.csv")).unwrap();
    assert!(tags.starts_with("timestamp_ns,channel\n"));
    assert!(tags.lines().any(|l| l.ends_with(",1")));
    let meta = fs::read_to_string(dir.path().join("chopper.timetags.csv.meta.toml")).unwrap();
    assert!(meta.contains("seed = 3") && meta.contains("format_version = 1"), "{meta}");
    let phase = fs::read_to_string(dir.path().join("chopper.phase.csv")).unwrap();
    assert_eq!(phase.lines().count(), 51);
}

#[test]
fn sweep_and_sfg_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpa(&["sweep", "--points", "5", "--mc-pulses", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("bsv-sweep.points.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
    let o = tpa(&["sfg-crossover", "--modes", "40"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("model 100.00"), "{}", stdout(&o));
}
