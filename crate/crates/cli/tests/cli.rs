use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pwampc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwampc"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn design_writes_a_loadable_controller() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwampc(dir.path(), &["design", "--override", "arm=lqr"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("arm = lqr"));
    assert!(report.contains("gamma = none"));
    let text = fs::read_to_string(dir.path().join("controller.json")).unwrap();
    pwampc::io::ControllerArtifact::parse(&text).unwrap();
}

#[test]
fn zero_input_range_is_an_empty_terminal_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwampc(dir.path(), &["design", "--override", "u_max=0"]);
    assert_eq!(code(&o), 14);
    let e = stderr(&o);
    assert!(e.starts_with("error: code=14 kind=empty-terminal-set message=\""), "{e}");
    assert!(!dir.path().join("controller.json").exists());
}

#[test]
fn bad_overrides_and_scenarios_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--override", "duration=0"][..],
        &["simulate", "--override", "horizon"],
        &["simulate", "--override", "nope=1"],
        &["simulate", "--override", "u_max=3"],
        &["design", "--override", "q=1,2"],
        &["identify", "--override", "amplitude=inf"],
    ] {
        let o = pwampc(dir.path(), args);
        assert_eq!(code(&o), 4, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("kind=invalid-input"));
    }
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pwampc(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&pwampc(dir.path(), &["export-table"])), 2);
    let missing = dir.path().join("missing.toml");
    let o = pwampc(dir.path(), &["simulate", "--scenario", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let help = pwampc(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
}

#[test]
fn malformed_scenario_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    fs::write(&path, "duration = \"long\"\n").unwrap();
    let o = pwampc(dir.path(), &["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn simulate_writes_trace_metrics_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("square.toml");
    fs::write(
        &scenario,
        "controller = \"pid\"\nduration = 1.0\n[reference]\nkind = \"square\"\namplitude = 1.0\nfrequency = 1.0\n",
    )
    .unwrap();
    let o = pwampc(dir.path(), &["simulate", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), pwampc::sim::CSV_HEADER);
    assert_eq!(csv.lines().count(), 1001);
    let metrics = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(metrics.contains("controller = pid"));
    assert!(metrics.contains("holds = 2"));
    let svg = fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.contains("position (mm)"));
}

#[test]
fn compare_accepts_a_single_controller() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwampc(
        dir.path(),
        &["--jobs", "2", "compare", "--controller", "pid", "--override", "duration=0.3"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("compare.txt")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(!table.contains("oscillation_ratio"));
    assert!(dir.path().join("trace-pid.csv").exists());
}

#[test]
fn compare_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = |jobs: &'static str| {
        vec![
            "--jobs",
            jobs,
            "compare",
            "--controller",
            "mpc-lqr",
            "--controller",
            "mpc-robust,pid",
            "--override",
            "duration=0.3",
        ]
    };
    let one = pwampc(&dir.path().join("one"), &args("1"));
    let three = pwampc(&dir.path().join("three"), &args("3"));
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, three.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.contains("oscillation_ratio"));
    for f in ["compare.txt", "compare.svg", "trace-mpc-lqr.csv", "trace-pid.csv"] {
        assert_eq!(
            fs::read(dir.path().join("one").join(f)).unwrap(),
            fs::read(dir.path().join("three").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(code(&pwampc(dir.path(), &["--jobs", "0", "compare"])), 4);
}

#[test]
fn table_export_from_a_designed_controller() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pwampc(dir.path(), &["design"])), 0);
    let ctrl = dir.path().join("controller.json");
    let o = pwampc(
        dir.path(),
        &["export-table", "--controller", ctrl.to_str().unwrap(), "--override", "samples=200"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let regions = fs::read_to_string(dir.path().join("regions.txt")).unwrap();
    assert!(regions.contains("samples = 800"));
    let table = fs::read_to_string(dir.path().join("table.json")).unwrap();
    pwampc::io::TableArtifact::parse(&table).unwrap();
}

#[test]
fn identify_reports_breakaway_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwampc(dir.path(), &["identify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("identify.txt")).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim_start_matches(" = ")
            .parse()
            .unwrap()
    };
    assert!(value("f_cp_est") > 0.0);
    assert!(value("f_cn_est") < 0.0);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_pwampc"))
        .env("PWAMPC_OUT", &target)
        .args(["identify"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(target.join("identify.txt").exists());
}
