//! Subcommand plumbing shared by all commands: argument structs, error
//! classification, the resolved-config snapshot, and the small file
//! formats more than one command reads or writes.

mod cdd;
mod diff;
mod eval;
mod history;
mod report;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use clap::{Parser, Subcommand};
use serde::Serialize;

use fcdd_core::eval::DiffStats;
use fcdd_core::train::RunRecord;

/// Train detection models, evaluate snapshots, and compare methods.
#[derive(Parser)]
#[command(name = "fcdd", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one experiment setup under the repetition protocol.
    Train(train::TrainArgs),
    /// Re-evaluate one snapshot of a finished run.
    Eval(eval::EvalArgs),
    /// Test metric over epochs, recomputed from a run's snapshots.
    History(history::HistoryArgs),
    /// Difference table between two per-class result files.
    Diff(diff::DiffArgs),
    /// Critical-difference diagram from a method-by-dataset score table.
    Cdd(cdd::CddArgs),
    /// Consolidated means, box plots, and optional reference diff over runs.
    Report(report::ReportArgs),
}

pub fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::History(args) => history::run(args),
        Command::Diff(args) => diff::run(args),
        Command::Cdd(args) => cdd::run(args),
        Command::Report(args) => report::run(args),
    }
}

/// Failure class decides the exit code: validation problems exit 1,
/// failures during real work exit 2 (with artifacts preserved).
#[derive(Debug)]
pub enum CmdError {
    Validation(String),
    Runtime(String),
}

pub(crate) fn validation(msg: impl fmt::Display) -> CmdError {
    CmdError::Validation(msg.to_string())
}

pub(crate) fn runtime(msg: impl fmt::Display) -> CmdError {
    CmdError::Runtime(msg.to_string())
}

/// Create the output directory and snapshot the resolved flags into
/// `config.json`. Called by every command before it starts real work.
pub(crate) fn write_config<C: Serialize>(out: &Path, config: &C) -> Result<(), CmdError> {
    std::fs::create_dir_all(out)
        .map_err(|e| validation(format!("cannot create {}: {e}", out.display())))?;
    let json = serde_json::to_string_pretty(config).expect("flags serialize");
    std::fs::write(out.join("config.json"), json)
        .map_err(|e| validation(format!("cannot write config into {}: {e}", out.display())))?;
    Ok(())
}

/// Per-class result file: header `class,rocauc`, one row per class,
/// ROC-AUC as a fraction in [0, 1].
pub(crate) fn read_class_fractions(path: &Path) -> Result<BTreeMap<String, f64>, CmdError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != ["class", "rocauc"] {
        return Err(validation(format!(
            "{}: expected header `class,rocauc`, got `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        if record.len() != 2 {
            return Err(validation(format!(
                "{} line {line}: expected 2 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        let class = record[0].to_string();
        let value: f64 = record[1].parse().map_err(|_| {
            validation(format!(
                "{} line {line}: `{}` is not a number",
                path.display(),
                &record[1]
            ))
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(validation(format!(
                "{} line {line}: ROC-AUC {value} outside [0, 1]",
                path.display()
            )));
        }
        if map.insert(class.clone(), value).is_some() {
            return Err(validation(format!(
                "{} line {line}: duplicate class `{class}`",
                path.display()
            )));
        }
    }
    if map.is_empty() {
        return Err(validation(format!("{}: no data rows", path.display())));
    }
    Ok(map)
}

/// Write a difference table as `diff.csv` (absolute per-class differences
/// in percent points) plus the full stats as `diff.json`.
pub(crate) fn write_diff_outputs(out: &Path, stats: &DiffStats) -> Result<(), CmdError> {
    let mut csv_text = String::from("class,abs_diff_pp\n");
    for (class, diff) in &stats.per_class_abs_diff {
        csv_text.push_str(&format!("{class},{diff:.6}\n"));
    }
    std::fs::write(out.join("diff.csv"), csv_text).map_err(|e| runtime(e))?;
    let json = serde_json::to_string_pretty(stats).expect("stats serialize");
    std::fs::write(out.join("diff.json"), json).map_err(|e| runtime(e))?;
    Ok(())
}

/// The runs belonging to one experiment: either a single run directory
/// (holding `record.json`) or a protocol directory of `run_<i>` children.
pub(crate) struct RunGroup {
    pub label: String,
    pub class: String,
    pub records: Vec<RunRecord>,
    /// Named holes: repetitions without a readable record.
    pub gaps: Vec<String>,
}

/// Strip the repetition suffix the protocol appends to spec names.
fn base_name(name: &str) -> &str {
    if let Some((head, tail)) = name.rsplit_once("-rep") {
        if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
            return head;
        }
    }
    name
}

pub(crate) fn collect_group(dir: &Path) -> Result<RunGroup, CmdError> {
    let mut records = Vec::new();
    let mut gaps = Vec::new();
    if dir.join("record.json").is_file() {
        let record = RunRecord::load(&dir.join("record.json"))
            .map_err(|e| validation(format!("{}: {e}", dir.display())))?;
        records.push(record);
    } else {
        let mut run_dirs = Vec::new();
        for i in 0.. {
            let run_dir = dir.join(format!("run_{i}"));
            if !run_dir.is_dir() {
                break;
            }
            run_dirs.push(run_dir);
        }
        if run_dirs.is_empty() {
            return Err(validation(format!(
                "{}: neither record.json nor run_<i> directories found",
                dir.display()
            )));
        }
        for run_dir in run_dirs {
            match RunRecord::load(&run_dir.join("record.json")) {
                Ok(record) => records.push(record),
                Err(e) => gaps.push(format!("{}: no record ({e})", run_dir.display())),
            }
        }
    }
    let first = records.first().ok_or_else(|| {
        validation(format!(
            "{}: no readable run records ({} missing)",
            dir.display(),
            gaps.len()
        ))
    })?;
    Ok(RunGroup {
        label: base_name(&first.spec.name).to_string(),
        class: first.spec.split.normal_class.clone(),
        records,
        gaps,
    })
}
