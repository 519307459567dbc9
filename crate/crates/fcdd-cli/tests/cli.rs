//! Black-box tests of the `fcdd` binary: exit codes, artifact layout,
//! and byte-stable sidecars. A single short training fixture is shared
//! by every test that needs finished runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::LazyLock;

use serde_json::Value;
use tempfile::TempDir;

fn fcdd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fcdd"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

fn literature_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/mvtec_literature_pixel_rocauc.csv")
}

struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    proto: PathBuf,
}

/// Two short repetitions on the generated corpus, reused read-only.
static TRAINED: LazyLock<Fixture> = LazyLock::new(|| {
    let dir = TempDir::new().expect("tempdir");
    let data = dir.path().join("data");
    let proto = dir.path().join("proto");
    std::fs::create_dir_all(&data).expect("data dir");
    let out = run(fcdd()
        .env_remove("FCDD_DATA_ROOT")
        .args(["train", "--setup", "synthetic", "--reps", "2"])
        .args(["--epochs", "2", "--snapshot-every", "1", "--batch-size", "8"])
        .args(["--seed", "3"])
        .arg("--data-root")
        .arg(&data)
        .arg("--out")
        .arg(&proto));
    assert_eq!(exit_code(&out), 0, "fixture training: {}", stderr_of(&out));
    Fixture { _dir: dir, data, proto }
});

#[test]
fn train_writes_the_protocol_layout() {
    let proto = &TRAINED.proto;
    assert!(proto.join("config.json").is_file());
    let outcome = read_json(&proto.join("aggregate.json"));
    let aggregate = &outcome["aggregate"];
    assert_eq!(outcome["runs"].as_array().unwrap().len(), 2);
    assert_eq!(aggregate["requested"], 2);
    assert_eq!(aggregate["completed"], 2);
    assert_eq!(aggregate["pixel_values"].as_array().unwrap().len(), 2);
    for i in 0..2 {
        let run_dir = proto.join(format!("run_{i}"));
        for file in ["spec.json", "record.json", "log.txt", "resources.csv"] {
            assert!(run_dir.join(file).is_file(), "run_{i} is missing {file}");
        }
        for epoch in [1, 2] {
            assert!(run_dir.join("snapshots").join(format!("epoch_{epoch}")).is_file());
        }
        assert!(run_dir.join("heatmaps").read_dir().unwrap().next().is_some());
    }
}

#[test]
fn train_without_a_data_root_creates_nothing() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("never");
    let out = run(fcdd()
        .env_remove("FCDD_DATA_ROOT")
        .args(["train", "--setup", "synthetic"])
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("FCDD_DATA_ROOT"));
    assert!(!out_dir.exists(), "nothing may be written on rejection");
}

#[test]
fn train_reads_the_data_root_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(fcdd()
        .env("FCDD_DATA_ROOT", &data)
        .args(["train", "--setup", "synthetic", "--reps", "1"])
        .args(["--epochs", "1", "--snapshot-every", "1", "--batch-size", "8"])
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    assert!(out_dir.join("run_0").join("record.json").is_file());
    let config = read_json(&out_dir.join("config.json"));
    assert_eq!(config["data_root"], Value::String(data.to_string_lossy().into_owned()));
}

#[test]
fn train_rejects_zero_repetitions() {
    let dir = TempDir::new().unwrap();
    let out = run(fcdd()
        .args(["train", "--setup", "synthetic", "--reps", "0"])
        .arg("--data-root")
        .arg(&TRAINED.data)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn argument_errors_exit_one_and_help_exits_zero() {
    let out = run(fcdd().args(["train", "--bogus-flag"]));
    assert_eq!(exit_code(&out), 1);
    let out = run(fcdd().arg("--help"));
    assert_eq!(exit_code(&out), 0);
    assert!(stdout_of(&out).contains("train"));
}

#[test]
fn eval_reproduces_the_recorded_metrics() {
    let run_dir = TRAINED.proto.join("run_0");
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let out = run(fcdd()
        .args(["eval", "--run-dir"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&first));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));

    let record = read_json(&run_dir.join("record.json"));
    let eval = read_json(&first.join("eval.json"));
    assert_eq!(eval["epoch"], 2);
    for metric in ["sample_rocauc", "pixel_rocauc"] {
        let want = record["final_metrics"][metric].as_f64().unwrap();
        let got = eval["metrics"][metric].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "{metric}: {got} vs recorded {want}");
    }

    let second = dir.path().join("second");
    let out = run(fcdd()
        .args(["eval", "--run-dir"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&second));
    assert_eq!(exit_code(&out), 0);
    for file in ["eval.json", "config.json"] {
        assert_eq!(
            std::fs::read(first.join(file)).unwrap(),
            std::fs::read(second.join(file)).unwrap(),
            "{file} differs between identical invocations"
        );
    }
}

#[test]
fn eval_rejects_an_unknown_epoch() {
    let dir = TempDir::new().unwrap();
    let out = run(fcdd()
        .args(["eval", "--run-dir"])
        .arg(TRAINED.proto.join("run_0"))
        .args(["--epoch", "99"])
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("no snapshot at epoch 99"));
}

#[test]
fn history_matches_the_metric_trace() {
    let run_dir = TRAINED.proto.join("run_0");
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(fcdd()
        .args(["history", "--run-dir"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));

    let record = read_json(&run_dir.join("record.json"));
    let trace = record["metric_trace"].as_array().unwrap();
    let history = read_json(&out_dir.join("history.json"));
    let points = history["points"].as_array().unwrap();
    assert_eq!(points.len(), trace.len());
    for (point, entry) in points.iter().zip(trace) {
        assert_eq!(point["epoch"], entry[0]);
        let got = point["value"].as_f64().unwrap();
        let want = entry[1].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "epoch {}: {got} vs {want}", point["epoch"]);
    }
    assert!(out_dir.join("history.csv").is_file());
    assert!(out_dir.join("history.svg").is_file());
}

#[test]
fn cdd_ranks_the_literature_table_deterministically() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let out = run(fcdd()
        .args(["cdd", "--scores"])
        .arg(literature_csv())
        .arg("--out")
        .arg(&first));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("average ranks:"));
    let diagram = read_json(&first.join("cdd.json"));
    assert_eq!(diagram["avg_ranks"].as_array().unwrap().len(), 10);

    let second = dir.path().join("second");
    let out = run(fcdd()
        .args(["cdd", "--scores"])
        .arg(literature_csv())
        .arg("--out")
        .arg(&second));
    assert_eq!(exit_code(&out), 0);
    for file in ["cdd.svg", "cdd.json"] {
        assert_eq!(
            std::fs::read(first.join(file)).unwrap(),
            std::fs::read(second.join(file)).unwrap(),
            "{file} differs between identical invocations"
        );
    }
}

#[test]
fn cdd_names_the_offending_cell_in_a_malformed_table() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("bad.csv");
    std::fs::write(&table, "method,d1,d2\nm1,50,60\nm2,70,oops\n").unwrap();
    let out = run(fcdd()
        .args(["cdd", "--scores"])
        .arg(&table)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 1);
    let err = stderr_of(&out);
    assert!(err.contains("line 3"), "stderr: {err}");
    assert!(err.contains("cannot parse"), "stderr: {err}");
}

#[test]
fn cdd_rejects_an_alpha_outside_the_open_interval() {
    let dir = TempDir::new().unwrap();
    let out = run(fcdd()
        .args(["cdd", "--scores"])
        .arg(literature_csv())
        .args(["--alpha", "1.5"])
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn diff_reports_percent_point_gaps() {
    let dir = TempDir::new().unwrap();
    let ours = dir.path().join("ours.csv");
    let reference = dir.path().join("reference.csv");
    std::fs::write(&ours, "class,rocauc\na,0.97\nb,0.91\n").unwrap();
    std::fs::write(&reference, "class,rocauc\na,0.96\nb,0.93\n").unwrap();

    let first = dir.path().join("first");
    let out = run(fcdd()
        .args(["diff", "--ours"])
        .arg(&ours)
        .arg("--reference")
        .arg(&reference)
        .arg("--out")
        .arg(&first));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("max |diff| 2.0 pp"), "stdout: {text}");
    assert!(text.contains("mean |diff| 1.5 pp"), "stdout: {text}");
    let csv_text = std::fs::read_to_string(first.join("diff.csv")).unwrap();
    assert!(csv_text.contains("a,1.000000"));
    assert!(csv_text.contains("b,2.000000"));

    let second = dir.path().join("second");
    let out = run(fcdd()
        .args(["diff", "--ours"])
        .arg(&ours)
        .arg("--reference")
        .arg(&reference)
        .arg("--out")
        .arg(&second));
    assert_eq!(exit_code(&out), 0);
    for file in ["diff.csv", "diff.json"] {
        assert_eq!(
            std::fs::read(first.join(file)).unwrap(),
            std::fs::read(second.join(file)).unwrap()
        );
    }
}

#[test]
fn diff_rejects_mismatched_class_sets() {
    let dir = TempDir::new().unwrap();
    let ours = dir.path().join("ours.csv");
    let reference = dir.path().join("reference.csv");
    std::fs::write(&ours, "class,rocauc\nc,0.5\n").unwrap();
    std::fs::write(&reference, "class,rocauc\na,0.96\nb,0.93\n").unwrap();
    let out = run(fcdd()
        .args(["diff", "--ours"])
        .arg(&ours)
        .arg("--reference")
        .arg(&reference)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn report_consolidates_a_protocol_directory() {
    let dir = TempDir::new().unwrap();
    let reference = dir.path().join("reference.csv");
    std::fs::write(&reference, "class,rocauc\ngood,0.95\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(fcdd()
        .args(["report", "--run"])
        .arg(&TRAINED.proto)
        .arg("--reference")
        .arg(&reference)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));

    let csv_text = std::fs::read_to_string(out_dir.join("means.csv")).unwrap();
    assert!(
        csv_text.contains("synthetic-square,good,2,"),
        "means.csv: {csv_text}"
    );
    let summary = read_json(&out_dir.join("report.json"));
    assert_eq!(summary["gaps"].as_array().unwrap().len(), 0);
    assert!(out_dir.join("boxplot.svg").is_file());
    assert!(out_dir.join("boxplot.json").is_file());
    assert!(out_dir.join("diff.csv").is_file());
    assert!(stdout_of(&out).contains("reference diff"));
}

#[test]
fn report_strict_exits_nonzero_on_gaps() {
    let dir = TempDir::new().unwrap();
    let copy = dir.path().join("proto");
    for i in 0..2 {
        let run_dir = copy.join(format!("run_{i}"));
        std::fs::create_dir_all(&run_dir).unwrap();
        std::fs::copy(
            TRAINED.proto.join(format!("run_{i}")).join("record.json"),
            run_dir.join("record.json"),
        )
        .unwrap();
    }
    let gap_record = copy.join("run_1").join("record.json");
    let mut record = read_json(&gap_record);
    record["final_metrics"]["pixel_rocauc"] = Value::Null;
    record["final_metrics"]["sample_rocauc"] = Value::Null;
    std::fs::write(&gap_record, serde_json::to_string_pretty(&record).unwrap()).unwrap();

    let strict = run(fcdd()
        .args(["report", "--strict", "--run"])
        .arg(&copy)
        .arg("--out")
        .arg(dir.path().join("strict")));
    assert_eq!(exit_code(&strict), 2, "{}", stderr_of(&strict));
    let summary = read_json(&dir.path().join("strict").join("report.json"));
    assert_eq!(summary["gaps"].as_array().unwrap().len(), 1);

    let lenient = run(fcdd()
        .args(["report", "--run"])
        .arg(&copy)
        .arg("--out")
        .arg(dir.path().join("lenient")));
    assert_eq!(exit_code(&lenient), 0, "{}", stderr_of(&lenient));
}

/// Full-scale run over a real ten-class corpus, gated on a reference
/// result file. Takes hours; see README.md for the directory layout and
/// the exact invocation.
#[test]
#[ignore]
fn full_scale_reproduction_recipe() {
    let var = |name: &str| {
        std::env::var(name).unwrap_or_else(|_| {
            panic!(
                "set FCDD_FMNIST_ROOT (class-per-directory image corpus), FCDD_OE_ROOT \
                 (auxiliary anomaly images), and FCDD_REFERENCE_CSV (class,rocauc \
                 fractions) to run the full-scale recipe; {name} is missing"
            )
        })
    };
    let data_root = PathBuf::from(var("FCDD_FMNIST_ROOT"));
    let oe_root = PathBuf::from(var("FCDD_OE_ROOT"));
    let reference = PathBuf::from(var("FCDD_REFERENCE_CSV"));

    let mut classes: Vec<String> = data_root
        .join("train")
        .read_dir()
        .expect("train directory listing")
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    classes.sort();
    assert_eq!(classes.len(), 10, "expected a ten-class corpus");

    let base = TempDir::new().unwrap();
    let mut report_cmd = fcdd();
    report_cmd.args(["report", "--reference"]).arg(&reference);
    for class in &classes {
        let out_dir = base.path().join(class);
        let out = run(fcdd()
            .args(["train", "--setup", "labeled", "--reps", "5"])
            .args(["--class", class])
            .arg("--data-root")
            .arg(&data_root)
            .arg("--oe-root")
            .arg(&oe_root)
            .arg("--out")
            .arg(&out_dir));
        assert_eq!(exit_code(&out), 0, "class {class}: {}", stderr_of(&out));
        report_cmd.arg("--run").arg(&out_dir);
    }

    let report_out = base.path().join("report");
    report_cmd.arg("--out").arg(&report_out);
    let out = run(&mut report_cmd);
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));

    let stats = read_json(&report_out.join("diff.json"));
    let max_diff = stats["max_diff"].as_f64().unwrap();
    let mean_shift = stats["mean_rocauc_diff"].as_f64().unwrap();
    assert!(max_diff <= 2.0, "worst class is {max_diff:.2} pp from the reference");
    assert!(
        mean_shift.abs() <= 1.0,
        "class mean is {mean_shift:.2} pp from the reference"
    );
}
