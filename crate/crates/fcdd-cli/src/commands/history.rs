//! `fcdd history`: recompute the test metric at every snapshot of a run,
//! tolerating unreadable snapshots as gaps on the epoch axis.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fcdd_core::data::load_split;
use fcdd_core::eval::performance_history;
use fcdd_core::train::{evaluate_split_metrics, restore_backbone, ObjectiveKind, RunRecord};
use fcdd_core::CoreError;
use fcdd_stats::plot::{line_plot_svg, LineSeries};

use super::{runtime, validation, write_config, CmdError};

#[derive(Args, Serialize)]
pub struct HistoryArgs {
    /// Finished run directory (holds record.json and snapshots/).
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Output directory for history.json, history.csv, and history.svg.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(args: HistoryArgs) -> Result<(), CmdError> {
    let record = RunRecord::load(&args.run_dir.join("record.json"))
        .map_err(|e| validation(format!("{}: {e}", args.run_dir.display())))?;
    if record.snapshots.is_empty() {
        return Err(validation("run has no snapshots"));
    }
    let snapshots: Vec<(usize, PathBuf)> = record
        .snapshots
        .iter()
        .map(|(epoch, _)| {
            (
                *epoch,
                args.run_dir.join("snapshots").join(format!("epoch_{epoch}")),
            )
        })
        .collect();

    write_config(&args.out, &args)?;

    let data = load_split(&record.spec.split, &record.spec.load).map_err(|e| runtime(e))?;
    let (_, c, h, w) = data.test_images.dim();
    let history = performance_history(&snapshots, |path| {
        let mut backbone = restore_backbone(&record.spec.arch, (c, h, w), path)?;
        let metrics = evaluate_split_metrics(
            &mut backbone,
            &data.test_images,
            &data.test_labels,
            &data.test_masks,
            record.heatmap_sigma,
        )?;
        let value = match record.spec.objective {
            ObjectiveKind::Sample => metrics.sample_rocauc,
            ObjectiveKind::Pixel => metrics.pixel_rocauc,
        };
        value.ok_or_else(|| CoreError::Degenerate("metric undefined on this split".into()))
    })
    .map_err(|e| runtime(e))?;

    let json = serde_json::to_string_pretty(&history).expect("history serializes");
    std::fs::write(args.out.join("history.json"), json).map_err(|e| runtime(e))?;
    let mut csv_text = String::from("epoch,value\n");
    for point in &history.points {
        match point.value {
            Some(v) => csv_text.push_str(&format!("{},{v:.6}\n", point.epoch)),
            None => csv_text.push_str(&format!("{},\n", point.epoch)),
        }
    }
    std::fs::write(args.out.join("history.csv"), csv_text).map_err(|e| runtime(e))?;

    let defined = history.defined();
    if !defined.is_empty() {
        let series = LineSeries {
            name: record.metric_name.clone(),
            points: defined.iter().map(|&(e, v)| (e as f64, v)).collect(),
        };
        let svg = line_plot_svg(&[series], "epoch", &record.metric_name);
        std::fs::write(args.out.join("history.svg"), svg).map_err(|e| runtime(e))?;
    }
    let gaps = history.points.len() - defined.len();
    println!(
        "{} snapshots, {} defined, {} gaps; outputs in {}",
        history.points.len(),
        defined.len(),
        gaps,
        args.out.display()
    );
    Ok(())
}
