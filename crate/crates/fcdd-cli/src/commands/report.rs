//! `fcdd report`: consolidate run directories into a per-experiment mean
//! table, box plots on a shared axis, and an optional difference table
//! against a per-class reference.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fcdd_core::eval::diff_table;
use fcdd_core::train::ObjectiveKind;
use fcdd_stats::plot::boxplot_svg;
use fcdd_stats::{boxplot_stats, BoxplotStats};

use super::{
    collect_group, read_class_fractions, runtime, write_config, write_diff_outputs, CmdError,
    RunGroup,
};

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Run directory: either one run (record.json) or a protocol
    /// directory of run_<i> children. Repeat for several experiments.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    /// Per-class reference results (CSV: class,rocauc fractions); adds a
    /// difference table keyed by each experiment's normal class.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Exit nonzero when any repetition lacks a defined metric.
    #[arg(long)]
    pub strict: bool,
    /// Output directory for the report files.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ReportRow {
    name: String,
    class: String,
    runs: usize,
    sample_mean: Option<f64>,
    pixel_mean: Option<f64>,
}

#[derive(Serialize)]
struct ReportSummary {
    rows: Vec<ReportRow>,
    gaps: Vec<String>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn run(args: ReportArgs) -> Result<(), CmdError> {
    let groups: Vec<RunGroup> = args
        .runs
        .iter()
        .map(|dir| collect_group(dir))
        .collect::<Result<_, _>>()?;
    let reference = args
        .reference
        .as_ref()
        .map(|path| read_class_fractions(path))
        .transpose()?;

    write_config(&args.out, &args)?;

    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut boxes: Vec<(String, BoxplotStats)> = Vec::new();
    for group in &groups {
        gaps.extend(group.gaps.iter().cloned());
        let mut samples = Vec::new();
        let mut pixels = Vec::new();
        let mut objective_values = Vec::new();
        for record in &group.records {
            let m = &record.final_metrics;
            samples.extend(m.sample_rocauc);
            pixels.extend(m.pixel_rocauc);
            let value = match record.spec.objective {
                ObjectiveKind::Sample => m.sample_rocauc,
                ObjectiveKind::Pixel => m.pixel_rocauc,
            };
            match value {
                Some(v) => objective_values.push(v),
                None => gaps.push(format!(
                    "{}: {} undefined",
                    record.spec.name, record.metric_name
                )),
            }
        }
        if !objective_values.is_empty() {
            let percents: Vec<f64> = objective_values.iter().map(|v| v * 100.0).collect();
            let stats = boxplot_stats(&percents).map_err(|e| runtime(e))?;
            boxes.push((group.label.clone(), stats));
        }
        rows.push(ReportRow {
            name: group.label.clone(),
            class: group.class.clone(),
            runs: group.records.len(),
            sample_mean: mean(&samples),
            pixel_mean: mean(&pixels),
        });
    }

    let mut csv_text = String::from("name,class,runs,sample_mean,pixel_mean\n");
    for row in &rows {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        csv_text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.name,
            row.class,
            row.runs,
            fmt(row.sample_mean),
            fmt(row.pixel_mean)
        ));
    }
    std::fs::write(args.out.join("means.csv"), csv_text).map_err(|e| runtime(e))?;
    let summary = ReportSummary { rows, gaps };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(args.out.join("report.json"), json).map_err(|e| runtime(e))?;

    if !boxes.is_empty() {
        std::fs::write(
            args.out.join("boxplot.svg"),
            boxplot_svg(&boxes, "ROC-AUC (%)"),
        )
        .map_err(|e| runtime(e))?;
        let box_json = serde_json::to_string_pretty(&boxes).expect("stats serialize");
        std::fs::write(args.out.join("boxplot.json"), box_json).map_err(|e| runtime(e))?;
    }

    if let Some(reference) = reference {
        let mut ours = BTreeMap::new();
        for row in &summary.rows {
            let Some(value) = row.pixel_mean.or(row.sample_mean) else {
                continue;
            };
            if ours.insert(row.class.clone(), value).is_some() {
                return Err(runtime(format!(
                    "two run groups share normal class `{}`; the difference table needs one per class",
                    row.class
                )));
            }
        }
        let stats = diff_table(&ours, &reference).map_err(|e| runtime(e))?;
        write_diff_outputs(&args.out, &stats)?;
        println!(
            "reference diff: max |diff| {:.1} pp, mean |diff| {:.1} pp",
            stats.max_diff, stats.mean_diff
        );
    }

    for row in &summary.rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
        println!(
            "{} (class {}): {} runs, sample {} pixel {}",
            row.name,
            row.class,
            row.runs,
            fmt(row.sample_mean),
            fmt(row.pixel_mean)
        );
    }
    if !summary.gaps.is_empty() {
        println!("gaps:");
        for gap in &summary.gaps {
            println!("  {gap}");
        }
        if args.strict {
            return Err(runtime(format!(
                "{} gaps under --strict; report files in {}",
                summary.gaps.len(),
                args.out.display()
            )));
        }
    }
    Ok(())
}
