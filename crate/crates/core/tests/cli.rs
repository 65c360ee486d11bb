use std::path::Path;
use std::process::{Command, Output};

use biphoton::correlator::read_histogram_csv;
use biphoton::tagstream::read_file;

const CONFIG: &str = r#"preset = "quick"
seed = 5

[acquisition]
duration_s = 30
signal_duration_s = 30
idler_duration_s = 60

[sweep]
powers_mw = [0.5, 2.0]
windows_ns = [100, 400, 1000]
duration_s = 20
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biphoton")).args(args).output().unwrap()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    (dir, cfg)
}

fn out(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_then_analyse_the_tag_file() {
    let (dir, cfg) = setup();
    let o = out(dir.path(), "sim");
    let r = run(&["simulate", "--config", &cfg, "--out", &o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let tags = Path::new(&o).join("tags.bptt");
    let stream = read_file(&tags).unwrap();
    assert!(stream.len() > 1000);
    let summary = std::fs::read_to_string(Path::new(&o).join("simulate.txt")).unwrap();
    assert!(summary.contains("seed = 5"));
    assert!(summary.contains("duration_s = 30"));
    assert!(summary.contains(CONFIG));

    let x = out(dir.path(), "x");
    let r = run(&["xcorr", "--config", &cfg, "--tags", tags.to_str().unwrap(), "--out", &x]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_histogram_csv(std::fs::File::open(Path::new(&x).join("xcorr.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2400);
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("dnu_s_mhz"));
}

#[test]
fn outputs_are_deterministic() {
    let (dir, cfg) = setup();
    let a = out(dir.path(), "a");
    let b = out(dir.path(), "b");
    for o in [&a, &b] {
        let r = run(&["report", "--config", &cfg, "--out", o]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["report.txt", "xcorr.csv", "signal_autocorr.csv", "idler_autocorr.csv", "fasel.csv"] {
        let x = std::fs::read(Path::new(&a).join(f)).unwrap();
        let y = std::fs::read(Path::new(&b).join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let report = std::fs::read_to_string(Path::new(&a).join("report.txt")).unwrap();
    assert!(report.contains("seed = 5") && report.contains("[sweep]"));
    let names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.iter().all(|n| !n.to_string_lossy().ends_with(".tmp")));
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = setup();
    let o = out(dir.path(), "m");
    let r = run(&["metrics", "--config", &cfg, "--seed", "77", "--out", &o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8(r.stdout).unwrap().contains("seed = 77"));
}

#[test]
fn sweeps_write_csv() {
    let (dir, cfg) = setup();
    let o = out(dir.path(), "s");
    assert!(run(&["sweep-power", "--config", &cfg, "--out", &o]).status.success());
    assert!(run(&["sweep-window", "--config", &cfg, "--out", &o]).status.success());
    let power = std::fs::read_to_string(Path::new(&o).join("sweep_power.csv")).unwrap();
    assert_eq!(power.lines().count(), 3);
    let window = std::fs::read_to_string(Path::new(&o).join("sweep_window.csv")).unwrap();
    assert_eq!(window.lines().count(), 4);
}

#[test]
fn autocorr_and_heralded_run() {
    let (dir, cfg) = setup();
    let o = out(dir.path(), "h");
    let r = run(&["autocorr", "--arm", "idler", "--config", &cfg, "--out", &o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = run(&["heralded", "--config", &cfg, "--out", &o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let fasel = std::fs::read_to_string(Path::new(&o).join("fasel.csv")).unwrap();
    assert!(fasel.starts_with("n,counts"));
    assert_eq!(fasel.lines().count(), 32);
}

#[test]
fn cavity_prints_all_routes() {
    let r = run(&["cavity"]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("cavity | 0.5549"), "{text}");
    assert!(text.contains("heralding | 0.3944"), "{text}");
}

#[test]
fn configuration_errors_exit_with_2() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[source]\npump_power_mw = 1\npump_pwr = 2\n").unwrap();
    let r = run(&["xcorr", "--config", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8(r.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("pump_pwr"), "{err}");

    assert_eq!(run(&["xcorr", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    assert_eq!(run(&["xcorr", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["xcorr", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn analysis_errors_exit_with_3() {
    let (dir, cfg) = setup();
    let junk = dir.path().join("junk.bptt");
    std::fs::write(&junk, b"not a tag file at all, definitely not").unwrap();
    let r = run(&["xcorr", "--config", &cfg, "--tags", junk.to_str().unwrap(), "--out", &out(dir.path(), "j")]);
    assert_eq!(r.status.code(), Some(3));

    let dark = dir.path().join("dark.toml");
    std::fs::write(&dark, format!("{CONFIG}\n[source]\ncreation_prob = 0.0\n")).unwrap();
    let r = run(&["xcorr", "--config", dark.to_str().unwrap(), "--out", &out(dir.path(), "d")]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}
