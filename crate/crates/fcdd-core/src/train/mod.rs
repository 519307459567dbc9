//! The experiment runner: seeded gradient descent on a declarative spec,
//! periodic weight snapshots, per-epoch loss and metric traces, resource
//! monitoring, and the repeated-runs protocol. Every run leaves a
//! self-documenting directory behind: the resolved spec is written
//! before any work starts, and all artifacts live next to it.

pub mod monitor;
pub mod optim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use monitor::{process_memory_bytes, ResourceLog, ResourceMonitor, ResourceSample};
pub use optim::{Sgd, SgdConfig};

use crate::backbone::weights::{load_weights, save_weights, Coverage};
use crate::backbone::{build_backbone, Arch, Backbone, Pretraining};
use crate::data::{load_split, LoadOptions, LoadedSplit, SplitSpec};
use crate::eval::{pixel_roc_auc, roc_auc, ScoredSet};
use crate::explain::{default_sigma, export_heatmap, upsample_heatmap, RenderRange};
use crate::objective::{
    fcdd_loss_grad, huber_score_map, huber_score_map_grad, pixel_fcdd_loss_grad_with,
    sample_scores, LabeledBatchScores, PixelLossOptions,
};
use crate::{CoreError, Result};

/// Which loss drives the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Image-level labels only.
    Sample,
    /// Mask supervision on the latent grid.
    Pixel,
}

/// Everything one training run depends on. Serialized verbatim into the
/// run directory before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub split: SplitSpec,
    pub load: LoadOptions,
    pub arch: Arch,
    pub pretraining: Pretraining,
    pub objective: ObjectiveKind,
    pub pixel_options: PixelLossOptions,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    pub seed: u64,
    pub snapshot_every: usize,
    /// Heatmap kernel width; None means receptive-field size / 4.
    pub heatmap_sigma: Option<f64>,
    /// How many test heatmaps to export at run end.
    pub export_heatmaps: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.snapshot_every == 0 {
            return Err(CoreError::InvalidArgument(
                "epochs, batch size, and snapshot interval must all be at least 1".into(),
            ));
        }
        if let Some(sigma) = self.heatmap_sigma {
            if !(sigma > 0.0) {
                return Err(CoreError::InvalidArgument(format!(
                    "heatmap sigma must be positive, got {sigma}"
                )));
            }
        }
        self.optimizer.validate()?;
        self.split.validate()
    }
}

/// Test metrics of one parameter state. Either value is None when the
/// split cannot define it (single-class labels, no anomalous pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub sample_rocauc: Option<f64>,
    pub pixel_rocauc: Option<f64>,
}

/// The self-documenting artifact of one executed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: ExperimentSpec,
    /// Actual seed (the experiment seed plus the repetition offset).
    pub seed: u64,
    pub epoch_losses: Vec<f64>,
    pub snapshots: Vec<(usize, PathBuf)>,
    pub metric_name: String,
    /// Test metric at every snapshot epoch.
    pub metric_trace: Vec<(usize, Option<f64>)>,
    pub final_metrics: SplitMetrics,
    pub duration_secs: f64,
    pub normalization_mean: Vec<f64>,
    pub normalization_std: Vec<f64>,
    pub heatmap_sigma: f64,
    pub resource_peak_cpu_bytes: u64,
    pub resource_peak_gpu_bytes: Option<u64>,
    pub accelerator_log_missing: bool,
    pub versions: BTreeMap<String, String>,
    /// Set when the run aborted; partial artifacts stay on disk.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Rebuild a backbone from a full snapshot archive.
pub fn restore_backbone(
    arch: &Arch,
    input_shape: (usize, usize, usize),
    snapshot: &Path,
) -> Result<Backbone> {
    let mut backbone = build_backbone(arch, input_shape, &Pretraining::RandomFrozen, 0)?;
    load_weights(&mut backbone, snapshot, Coverage::Full)?;
    Ok(backbone)
}

/// Evaluate both test metrics for the given parameter state, batching
/// the forward passes. Heatmaps for the pixel metric use the backbone's
/// receptive field with the given kernel width.
pub fn evaluate_split_metrics(
    backbone: &mut Backbone,
    images: &Array4<f64>,
    labels: &[u8],
    masks: &Array3<u8>,
    sigma: f64,
) -> Result<SplitMetrics> {
    let n = images.dim().0;
    if n == 0 || labels.len() != n || masks.dim().0 != n {
        return Err(CoreError::Shape(format!(
            "{n} images, {} labels, {} masks",
            labels.len(),
            masks.dim().0
        )));
    }
    let rf = backbone.receptive_field();
    let mut scores = Vec::with_capacity(n);
    let mut heatmaps = Vec::with_capacity(n);
    for start in (0..n).step_by(32) {
        let end = (start + 32).min(n);
        let batch = images.slice(ndarray::s![start..end, .., .., ..]).to_owned();
        let latent = backbone.forward_eval(&batch)?;
        let maps = huber_score_map(&latent)?;
        scores.extend(sample_scores(&maps)?);
        for i in 0..maps.len() {
            heatmaps.push(upsample_heatmap(maps.map(i), maps.source_shape, &rf, sigma)?);
        }
    }
    let sample_set = ScoredSet::new(scores, labels.to_vec())?;
    let sample_rocauc = if sample_set.is_degenerate() {
        None
    } else {
        Some(roc_auc(&sample_set)?)
    };
    let mask_views: Vec<ndarray::Array2<u8>> = (0..n)
        .map(|i| masks.index_axis(Axis(0), i).to_owned())
        .collect();
    let any_anom = masks.iter().any(|&m| m == 1);
    let any_norm = masks.iter().any(|&m| m == 0);
    let pixel_rocauc = if any_anom && any_norm {
        Some(pixel_roc_auc(&heatmaps, &mask_views)?)
    } else {
        None
    };
    Ok(SplitMetrics {
        sample_rocauc,
        pixel_rocauc,
    })
}

fn gather_batch(
    data: &LoadedSplit,
    indices: &[usize],
) -> (Array4<f64>, Vec<u8>, Array3<u8>) {
    let (_, c, h, w) = data.train_images.dim();
    let mut images = Array4::zeros((indices.len(), c, h, w));
    let mut masks = Array3::zeros((indices.len(), h, w));
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &idx) in indices.iter().enumerate() {
        images
            .index_axis_mut(Axis(0), row)
            .assign(&data.train_images.index_axis(Axis(0), idx));
        masks
            .index_axis_mut(Axis(0), row)
            .assign(&data.train_masks.index_axis(Axis(0), idx));
        labels.push(data.train_labels[idx]);
    }
    (images, labels, masks)
}

/// Epochs at which snapshots are written: every `every` epochs plus the
/// final epoch, deduplicated.
pub fn snapshot_epochs(epochs: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=epochs).filter(|e| e % every == 0).collect();
    if out.last() != Some(&epochs) {
        out.push(epochs);
    }
    out
}

struct RunState {
    record: RunRecord,
    log: std::fs::File,
    run_dir: PathBuf,
    started: Instant,
    monitor: Option<ResourceMonitor>,
}

impl RunState {
    fn log_line(&mut self, msg: &str) {
        let _ = writeln!(self.log, "[{:9.3}s] {msg}", self.started.elapsed().as_secs_f64());
    }

    /// Persist everything recorded so far; used on both success and abort.
    fn finalize(&mut self, failure: Option<String>) -> Result<()> {
        if let Some(monitor) = self.monitor.take() {
            let log = monitor.stop();
            log.write_csv(&self.run_dir.join("resources.csv"))?;
            self.record.resource_peak_cpu_bytes = log.peak_cpu_bytes;
            self.record.resource_peak_gpu_bytes = log.peak_gpu_bytes;
            self.record.accelerator_log_missing = log.accelerator_missing;
        }
        self.record.duration_secs = self.started.elapsed().as_secs_f64();
        self.record.failure = failure;
        self.record.save(&self.run_dir.join("record.json"))
    }
}

/// Run one experiment into `run_dir`. The resolved spec lands on disk
/// before any computation; on a non-finite loss the run aborts with a
/// diagnostic record and partial artifacts preserved.
pub fn train(spec: &ExperimentSpec, run_dir: &Path) -> Result<RunRecord> {
    spec.validate()?;
    std::fs::create_dir_all(run_dir.join("snapshots"))?;
    std::fs::write(
        run_dir.join("spec.json"),
        serde_json::to_string_pretty(spec)?,
    )?;

    let mut versions = BTreeMap::new();
    versions.insert(
        env!("CARGO_PKG_NAME").to_string(),
        env!("CARGO_PKG_VERSION").to_string(),
    );
    let mut state = RunState {
        record: RunRecord {
            spec: spec.clone(),
            seed: spec.seed,
            epoch_losses: Vec::new(),
            snapshots: Vec::new(),
            metric_name: match spec.objective {
                ObjectiveKind::Sample => "sample_rocauc".to_string(),
                ObjectiveKind::Pixel => "pixel_rocauc".to_string(),
            },
            metric_trace: Vec::new(),
            final_metrics: SplitMetrics {
                sample_rocauc: None,
                pixel_rocauc: None,
            },
            duration_secs: 0.0,
            normalization_mean: Vec::new(),
            normalization_std: Vec::new(),
            heatmap_sigma: 0.0,
            resource_peak_cpu_bytes: 0,
            resource_peak_gpu_bytes: None,
            accelerator_log_missing: true,
            versions,
            failure: None,
        },
        log: std::fs::File::create(run_dir.join("log.txt"))?,
        run_dir: run_dir.to_path_buf(),
        started: Instant::now(),
        monitor: Some(ResourceMonitor::start(Duration::from_secs(1))?),
    };
    state.log_line(&format!("run {} starting, seed {}", spec.name, spec.seed));

    match train_loop(spec, &mut state) {
        Ok(()) => {
            state.finalize(None)?;
            Ok(state.record)
        }
        Err(err) => {
            let msg = err.to_string();
            state.log_line(&format!("aborted: {msg}"));
            state.finalize(Some(msg))?;
            Err(err)
        }
    }
}

fn train_loop(spec: &ExperimentSpec, state: &mut RunState) -> Result<()> {
    let data = load_split(&spec.split, &spec.load)?;
    state.record.normalization_mean = data.mean.clone();
    state.record.normalization_std = data.std.clone();
    let (n_train, c, h, w) = data.train_images.dim();
    state.log_line(&format!(
        "loaded {n_train} train and {} test items at {c}x{h}x{w}",
        data.test_images.dim().0
    ));

    let mut backbone = build_backbone(&spec.arch, (c, h, w), &spec.pretraining, spec.seed)?;
    let rf = backbone.receptive_field();
    let sigma = spec.heatmap_sigma.unwrap_or_else(|| default_sigma(&rf));
    state.record.heatmap_sigma = sigma;
    let frozen_before = backbone.frozen_param_vector();

    let mut sgd = Sgd::new(spec.optimizer, backbone.param_vector().len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let snapshot_at = snapshot_epochs(spec.epochs, spec.snapshot_every);

    let mut indices: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=spec.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in indices.chunks(spec.batch_size) {
            let (images, labels, masks) = gather_batch(&data, chunk);
            backbone.zero_grads();
            let latent = backbone.forward(&images, true)?;
            let maps = huber_score_map(&latent)?;
            let (loss, d_maps) = match spec.objective {
                ObjectiveKind::Sample => {
                    let batch = LabeledBatchScores::new(maps.clone(), labels, None)?;
                    fcdd_loss_grad(&batch)?
                }
                ObjectiveKind::Pixel => {
                    let batch = LabeledBatchScores::new(maps.clone(), labels, Some(masks))?;
                    pixel_fcdd_loss_grad_with(&batch, spec.pixel_options)?
                }
            };
            if !loss.is_finite() {
                return Err(CoreError::NonFinite(format!("loss at epoch {epoch}")));
            }
            let d_grid = huber_score_map_grad(&latent, &d_maps);
            backbone.backward(&d_grid);
            let mut params = backbone.param_vector();
            sgd.step(&mut params, &backbone.grad_vector())?;
            backbone.set_param_vector(&params)?;
            loss_sum += loss * chunk.len() as f64;
        }
        sgd.end_epoch();
        let epoch_loss = loss_sum / n_train as f64;
        state.record.epoch_losses.push(epoch_loss);
        state.log_line(&format!(
            "epoch {epoch} loss {epoch_loss:.6} lr {:.3e}",
            sgd.learning_rate()
        ));

        if snapshot_at.contains(&epoch) {
            let path = state.run_dir.join("snapshots").join(format!("epoch_{epoch}"));
            save_weights(&backbone, &path)?;
            state.record.snapshots.push((epoch, path));
            let metrics = evaluate_split_metrics(
                &mut backbone,
                &data.test_images,
                &data.test_labels,
                &data.test_masks,
                sigma,
            )?;
            let value = match spec.objective {
                ObjectiveKind::Sample => metrics.sample_rocauc,
                ObjectiveKind::Pixel => metrics.pixel_rocauc,
            };
            state.record.metric_trace.push((epoch, value));
            state.log_line(&format!(
                "snapshot epoch {epoch}: {} {:?}",
                state.record.metric_name, value
            ));
        }
    }

    if backbone.frozen_param_vector() != frozen_before {
        return Err(CoreError::Degenerate(
            "frozen prefix parameters changed during training".into(),
        ));
    }

    state.record.final_metrics = evaluate_split_metrics(
        &mut backbone,
        &data.test_images,
        &data.test_labels,
        &data.test_masks,
        sigma,
    )?;
    state.log_line(&format!("final metrics {:?}", state.record.final_metrics));

    if spec.export_heatmaps > 0 {
        let dir = state.run_dir.join("heatmaps");
        std::fs::create_dir_all(&dir)?;
        let n_export = spec.export_heatmaps.min(data.test_images.dim().0);
        let batch = data
            .test_images
            .slice(ndarray::s![..n_export, .., .., ..])
            .to_owned();
        let latent = backbone.forward_eval(&batch)?;
        let maps = huber_score_map(&latent)?;
        for i in 0..n_export {
            let hm = upsample_heatmap(maps.map(i), maps.source_shape, &rf, sigma)?;
            export_heatmap(&hm, RenderRange::PerImage, &dir.join(format!("test_{i:03}.png")))?;
        }
        state.log_line(&format!("exported {n_export} test heatmaps"));
    }
    Ok(())
}

/// One repetition's outcome inside the protocol: a record or an error,
/// never silently dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub seed: u64,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

/// Mean final metrics over completed runs, with the raw per-run values
/// retained so score distributions stay plottable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub requested: usize,
    pub completed: usize,
    pub sample_values: Vec<f64>,
    pub pixel_values: Vec<f64>,
    pub sample_mean: Option<f64>,
    pub pixel_mean: Option<f64>,
}

/// Pure aggregation over run records.
pub fn aggregate_records<'a>(
    records: impl IntoIterator<Item = &'a RunRecord>,
    requested: usize,
) -> Aggregate {
    let mut sample_values = Vec::new();
    let mut pixel_values = Vec::new();
    let mut completed = 0;
    for r in records {
        completed += 1;
        if let Some(v) = r.final_metrics.sample_rocauc {
            sample_values.push(v);
        }
        if let Some(v) = r.final_metrics.pixel_rocauc {
            pixel_values.push(v);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Aggregate {
        requested,
        completed,
        sample_mean: mean(&sample_values),
        pixel_mean: mean(&pixel_values),
        sample_values,
        pixel_values,
    }
}

/// The repetition protocol and its aggregate, serialized to
/// `aggregate.json` in the base directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub runs: Vec<RunOutcome>,
    pub aggregate: Aggregate,
}

/// Run the experiment `n` times with seeds seed, seed+1, …, seed+n-1 into
/// `base_dir/run_<i>`. Failed repetitions are recorded and the remaining
/// ones still run; the aggregate covers completed runs only.
pub fn repeat_protocol(spec: &ExperimentSpec, n: usize, base_dir: &Path) -> Result<ProtocolOutcome> {
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "protocol needs at least one repetition".into(),
        ));
    }
    spec.validate()?;
    std::fs::create_dir_all(base_dir)?;
    let mut runs = Vec::with_capacity(n);
    for i in 0..n {
        let mut rep = spec.clone();
        rep.seed = spec.seed + i as u64;
        rep.name = format!("{}-rep{i}", spec.name);
        let run_dir = base_dir.join(format!("run_{i}"));
        let outcome = match train(&rep, &run_dir) {
            Ok(record) => RunOutcome {
                run_dir,
                seed: rep.seed,
                record: Some(record),
                error: None,
            },
            Err(err) => RunOutcome {
                run_dir,
                seed: rep.seed,
                record: None,
                error: Some(err.to_string()),
            },
        };
        runs.push(outcome);
    }
    let aggregate = aggregate_records(runs.iter().filter_map(|r| r.record.as_ref()), n);
    let outcome = ProtocolOutcome { runs, aggregate };
    std::fs::write(
        base_dir.join("aggregate.json"),
        serde_json::to_string_pretty(&outcome)?,
    )?;
    Ok(outcome)
}
