//! `fcdd diff`: per-class difference between two result files, reported
//! in percent points.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fcdd_core::eval::diff_table;

use super::{read_class_fractions, validation, write_config, write_diff_outputs, CmdError};

#[derive(Args, Serialize)]
pub struct DiffArgs {
    /// Our per-class results (CSV: class,rocauc with fractions in [0, 1]).
    #[arg(long)]
    pub ours: PathBuf,
    /// Reference per-class results, same format, same class set.
    #[arg(long)]
    pub reference: PathBuf,
    /// Output directory for config.json, diff.csv, and diff.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(args: DiffArgs) -> Result<(), CmdError> {
    let ours = read_class_fractions(&args.ours)?;
    let reference = read_class_fractions(&args.reference)?;
    let stats = diff_table(&ours, &reference).map_err(|e| validation(e))?;

    write_config(&args.out, &args)?;
    write_diff_outputs(&args.out, &stats)?;
    println!(
        "{} classes: max |diff| {:.1} pp, mean |diff| {:.1} pp, mean ROC-AUC shift {:.1} pp",
        stats.per_class_abs_diff.len(),
        stats.max_diff,
        stats.mean_diff,
        stats.mean_rocauc_diff,
    );
    Ok(())
}
