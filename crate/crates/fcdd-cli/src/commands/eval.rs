//! `fcdd eval`: restore one snapshot from a finished run and recompute
//! the test metrics from scratch.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fcdd_core::data::load_split;
use fcdd_core::eval::format_percent;
use fcdd_core::train::{evaluate_split_metrics, restore_backbone, RunRecord, SplitMetrics};

use super::{runtime, validation, write_config, CmdError};

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Finished run directory (holds record.json and snapshots/).
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Snapshot epoch to evaluate; defaults to the last one taken.
    #[arg(long)]
    pub epoch: Option<usize>,
    /// Output directory for config.json and eval.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct EvalOutput {
    epoch: usize,
    metrics: SplitMetrics,
}

pub fn run(args: EvalArgs) -> Result<(), CmdError> {
    let record = RunRecord::load(&args.run_dir.join("record.json"))
        .map_err(|e| validation(format!("{}: {e}", args.run_dir.display())))?;
    let available: Vec<usize> = record.snapshots.iter().map(|(e, _)| *e).collect();
    let epoch = match args.epoch {
        Some(epoch) if available.contains(&epoch) => epoch,
        Some(epoch) => {
            return Err(validation(format!(
                "no snapshot at epoch {epoch}; available: {available:?}"
            )))
        }
        None => *available
            .last()
            .ok_or_else(|| validation("run has no snapshots"))?,
    };
    let snapshot = args
        .run_dir
        .join("snapshots")
        .join(format!("epoch_{epoch}"));
    if !snapshot.is_file() {
        return Err(validation(format!("missing snapshot {}", snapshot.display())));
    }

    write_config(&args.out, &args)?;

    let data = load_split(&record.spec.split, &record.spec.load).map_err(|e| runtime(e))?;
    let (_, c, h, w) = data.test_images.dim();
    let mut backbone =
        restore_backbone(&record.spec.arch, (c, h, w), &snapshot).map_err(|e| runtime(e))?;
    let metrics = evaluate_split_metrics(
        &mut backbone,
        &data.test_images,
        &data.test_labels,
        &data.test_masks,
        record.heatmap_sigma,
    )
    .map_err(|e| runtime(e))?;

    let output = EvalOutput { epoch, metrics };
    let json = serde_json::to_string_pretty(&output).expect("metrics serialize");
    std::fs::write(args.out.join("eval.json"), json).map_err(|e| runtime(e))?;
    println!(
        "epoch {epoch}: sample {} pixel {}",
        metrics.sample_rocauc.map_or("-".into(), format_percent),
        metrics.pixel_rocauc.map_or("-".into(), format_percent),
    );
    Ok(())
}
