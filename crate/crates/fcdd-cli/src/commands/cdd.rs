//! `fcdd cdd`: critical-difference diagram from a method-by-dataset
//! score table, as an SVG plus a machine-readable sidecar.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fcdd_stats::plot::cd_diagram_svg;
use fcdd_stats::{cd_diagram, ScoreTable};

use super::{runtime, validation, write_config, CmdError};

#[derive(Args, Serialize)]
pub struct CddArgs {
    /// Score table CSV: first column `method`, one column per dataset,
    /// values in percent.
    #[arg(long)]
    pub scores: PathBuf,
    /// Significance level for the pairwise tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory for config.json, cdd.svg, and cdd.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(args: CddArgs) -> Result<(), CmdError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(validation(format!(
            "--alpha must be inside (0, 1), got {}",
            args.alpha
        )));
    }
    let table = ScoreTable::from_csv_path(&args.scores)
        .map_err(|e| validation(format!("{}: {e}", args.scores.display())))?;

    write_config(&args.out, &args)?;
    let diagram = cd_diagram(&table, args.alpha).map_err(|e| runtime(e))?;
    std::fs::write(args.out.join("cdd.svg"), cd_diagram_svg(&diagram))
        .map_err(|e| runtime(e))?;
    let json = serde_json::to_string_pretty(&diagram).expect("diagram serializes");
    std::fs::write(args.out.join("cdd.json"), json).map_err(|e| runtime(e))?;

    let ordering = diagram
        .order()
        .into_iter()
        .map(|i| format!("{} ({:.2})", diagram.methods[i], diagram.avg_ranks[i]))
        .collect::<Vec<_>>()
        .join(" < ");
    println!("average ranks: {ordering}");
    println!(
        "{} indistinguishable groups at alpha {}; outputs in {}",
        diagram.cliques.len(),
        args.alpha,
        args.out.display()
    );
    Ok(())
}
