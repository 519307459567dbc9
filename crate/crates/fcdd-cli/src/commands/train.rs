//! `fcdd train`: build the split for the chosen setup, assemble the
//! experiment spec, and run it under the repetition protocol.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use fcdd_core::backbone::{Arch, Pretraining};
use fcdd_core::data::synth::{square_split, SquareSplitSizes};
use fcdd_core::data::{make_mvtec_setup, make_one_vs_rest, ConfettiParams, LoadOptions, SplitMode};
use fcdd_core::eval::format_percent;
use fcdd_core::objective::PixelLossOptions;
use fcdd_core::train::{repeat_protocol, ExperimentSpec, ObjectiveKind, SgdConfig};

use super::{runtime, validation, write_config, CmdError};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    /// Generated 28x28 corpus: textured backgrounds vs. bright squares.
    Synthetic,
    /// One-vs-rest over a labeled corpus (root/{train,test}/<class>).
    Labeled,
    /// Defect dataset, anomalies synthesized by confetti noise.
    MvtecUnsup,
    /// Defect dataset, one real defect per type moved into training.
    MvtecSemisup,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchChoice {
    FmnistCnn,
    CifarCnn,
    Vgg11Fcdd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveChoice {
    Sample,
    Pixel,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    /// Experiment family to set up.
    #[arg(long, value_enum)]
    pub setup: Setup,
    /// Dataset root; the FCDD_DATA_ROOT environment variable is the
    /// documented fallback when this flag is absent.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Normal class: a class directory for the labeled setup, an object
    /// category for the defect setups.
    #[arg(long = "class")]
    pub normal_class: Option<String>,
    /// Auxiliary image root used as training-time anomalies (labeled
    /// setup only).
    #[arg(long)]
    pub oe_root: Option<PathBuf>,
    /// Output directory; receives config.json, run_<i>/, aggregate.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Repetitions of the run, seeded consecutively from --seed.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Snapshot and test-metric cadence in epochs.
    #[arg(long, default_value_t = 5)]
    pub snapshot_every: usize,
    /// Backbone; defaults to vgg11-fcdd for defect setups and fmnist-cnn
    /// otherwise.
    #[arg(long, value_enum)]
    pub arch: Option<ArchChoice>,
    /// Loss family; defaults to pixel for mask-bearing setups and sample
    /// for the labeled setup.
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveChoice>,
    /// Resize inputs to this square side; defaults to 224 for defect
    /// setups and the native size otherwise.
    #[arg(long)]
    pub resize: Option<usize>,
    /// Input channels; defaults to 3 for defect setups and 1 otherwise.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Weight archive for the frozen prefix (vgg11-fcdd only); without it
    /// that backbone runs on seeded random frozen weights.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Test heatmaps exported at the end of each run.
    #[arg(long, default_value_t = 4)]
    pub export_heatmaps: usize,
}

pub fn run(mut args: TrainArgs) -> Result<(), CmdError> {
    let data_root = args
        .data_root
        .clone()
        .or_else(|| std::env::var_os("FCDD_DATA_ROOT").map(PathBuf::from))
        .ok_or_else(|| validation("no dataset root: pass --data-root or set FCDD_DATA_ROOT"))?;
    if !data_root.is_dir() {
        return Err(validation(format!(
            "dataset root {} is not a directory",
            data_root.display()
        )));
    }
    args.data_root = Some(data_root.clone());

    let is_mvtec = matches!(args.setup, Setup::MvtecUnsup | Setup::MvtecSemisup);
    let class = match args.setup {
        Setup::Synthetic => {
            if args.normal_class.is_some() {
                return Err(validation("--class does not apply to the synthetic setup"));
            }
            String::new()
        }
        _ => args
            .normal_class
            .clone()
            .ok_or_else(|| validation("this setup needs --class"))?,
    };
    if args.oe_root.is_some() && args.setup != Setup::Labeled {
        return Err(validation("--oe-root applies only to the labeled setup"));
    }
    if args.reps == 0 {
        return Err(validation("--reps must be at least 1"));
    }

    let (split, name) = match args.setup {
        Setup::Synthetic => {
            let split = square_split(
                &data_root.join("square-corpus"),
                SquareSplitSizes::default(),
                args.seed,
            )
            .map_err(|e| validation(format!("generating synthetic corpus: {e}")))?;
            (split, "synthetic-square".to_string())
        }
        Setup::Labeled => {
            let split = make_one_vs_rest(&data_root, &class, args.oe_root.as_deref())
                .map_err(|e| validation(format!("composing one-vs-rest split: {e}")))?;
            (split, format!("{class}-ovr"))
        }
        Setup::MvtecUnsup | Setup::MvtecSemisup => {
            let mode = if args.setup == Setup::MvtecUnsup {
                SplitMode::PixelUnsup
            } else {
                SplitMode::PixelSemisup
            };
            let confetti = ConfettiParams::default().with_seed(args.seed);
            let split = make_mvtec_setup(&data_root, &class, mode, confetti, args.seed)
                .map_err(|e| validation(format!("composing defect split: {e}")))?;
            let suffix = if args.setup == Setup::MvtecUnsup {
                "unsup"
            } else {
                "semisup"
            };
            (split, format!("{class}-{suffix}"))
        }
    };

    let arch = match args.arch {
        Some(ArchChoice::FmnistCnn) => Arch::FmnistCnn,
        Some(ArchChoice::CifarCnn) => Arch::CifarCnn,
        Some(ArchChoice::Vgg11Fcdd) => Arch::Vgg11Fcdd,
        None if is_mvtec => Arch::Vgg11Fcdd,
        None => Arch::FmnistCnn,
    };
    let pretraining = match (&args.pretrained, &arch) {
        (Some(path), Arch::Vgg11Fcdd) => Pretraining::Archive(path.clone()),
        (Some(_), _) => {
            return Err(validation(
                "--pretrained applies only to the vgg11-fcdd backbone",
            ))
        }
        (None, Arch::Vgg11Fcdd) => Pretraining::RandomFrozen,
        (None, _) => Pretraining::None,
    };
    let objective = match args.objective {
        Some(ObjectiveChoice::Sample) => ObjectiveKind::Sample,
        Some(ObjectiveChoice::Pixel) => ObjectiveKind::Pixel,
        None if args.setup == Setup::Labeled => ObjectiveKind::Sample,
        None => ObjectiveKind::Pixel,
    };
    let load = LoadOptions {
        resize: args
            .resize
            .or(if is_mvtec { Some(224) } else { None })
            .map(|side| (side, side)),
        channels: args.channels.unwrap_or(if is_mvtec { 3 } else { 1 }),
        normalize: true,
    };

    let spec = ExperimentSpec {
        name,
        split,
        load,
        arch,
        pretraining,
        objective,
        pixel_options: PixelLossOptions::default(),
        epochs: args.epochs,
        batch_size: args.batch_size,
        optimizer: SgdConfig {
            learning_rate: args.learning_rate,
            ..SgdConfig::default()
        },
        seed: args.seed,
        snapshot_every: args.snapshot_every,
        heatmap_sigma: None,
        export_heatmaps: args.export_heatmaps,
    };
    spec.validate().map_err(|e| validation(e))?;

    write_config(&args.out, &args)?;
    let outcome = repeat_protocol(&spec, args.reps, &args.out).map_err(|e| runtime(e))?;

    let mut failed = 0;
    for (i, run) in outcome.runs.iter().enumerate() {
        match (&run.record, &run.error) {
            (Some(record), _) => {
                let m = &record.final_metrics;
                println!(
                    "run_{i} seed {}: sample {} pixel {}",
                    run.seed,
                    m.sample_rocauc.map_or("-".into(), format_percent),
                    m.pixel_rocauc.map_or("-".into(), format_percent),
                );
            }
            (None, err) => {
                failed += 1;
                println!(
                    "run_{i} seed {}: FAILED ({})",
                    run.seed,
                    err.as_deref().unwrap_or("unknown")
                );
            }
        }
    }
    let agg = &outcome.aggregate;
    println!(
        "{}/{} runs complete; mean sample {} pixel {}; artifacts in {}",
        agg.completed,
        agg.requested,
        agg.sample_mean.map_or("-".into(), format_percent),
        agg.pixel_mean.map_or("-".into(), format_percent),
        args.out.display()
    );
    if failed > 0 {
        return Err(runtime(format!(
            "{failed} of {} repetitions failed; artifacts preserved in {}",
            args.reps,
            args.out.display()
        )));
    }
    Ok(())
}
