//! Dataset composition and loading. Splits are declarative: a
//! [`SplitSpec`] lists every item with its role, label, and mask
//! reference, and is serializable as a run manifest. Loading decodes the
//! listed images, applies seeded confetti corruption where the manifest asks
//! for it, and normalizes with statistics from the training normals.

pub mod confetti;
pub mod mvtec;
pub mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

pub use confetti::{confetti_noise, ColorMode, ConfettiParams};
pub use mvtec::make_mvtec_setup;

use crate::{CoreError, Result};

/// The three experimental regimes a split can describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// One class is normal, every other class is anomalous; anomalies at
    /// training time come from a disjoint outlier-exposure dataset.
    SampleWise,
    /// No real anomalies at training time; confetti-corrupted normals
    /// stand in for them, masked as entirely anomalous.
    PixelUnsup,
    /// A few real anomalous images with ground-truth masks join the
    /// training set.
    PixelSemisup,
}

/// Where an item's ground-truth mask comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskRef {
    /// No anomalous pixels.
    Zeros,
    /// Every pixel anomalous (the convention for corrupted normals).
    Ones,
    /// A stored binary mask image.
    File(PathBuf),
}

/// One image in a split: stable id, source file, binary label, mask
/// reference, and an optional per-item confetti seed. Items with a seed
/// are corrupted copies; their source is the clean image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitItem {
    pub id: String,
    pub source: PathBuf,
    pub label: u8,
    pub mask: MaskRef,
    pub confetti_seed: Option<u64>,
}

/// A complete experiment split. Serialized verbatim into run directories
/// so every item's provenance is on record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub normal_class: String,
    pub train_items: Vec<SplitItem>,
    pub test_items: Vec<SplitItem>,
    pub oe_source: Option<String>,
    pub confetti: Option<ConfettiParams>,
    /// Ids of test images relocated into train (semi-supervised mode).
    pub moved_from_test: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.test_items.is_empty() {
            return Err(CoreError::Data("split has no test items".into()));
        }
        let mut seen = BTreeSet::new();
        for item in self.train_items.iter().chain(&self.test_items) {
            if !seen.insert(item.id.as_str()) {
                return Err(CoreError::Data(format!(
                    "item id {} appears more than once",
                    item.id
                )));
            }
            if item.label > 1 {
                return Err(CoreError::Data(format!(
                    "item {} has label {}, want 0 or 1",
                    item.id, item.label
                )));
            }
            if item.label == 0 && item.mask != MaskRef::Zeros {
                return Err(CoreError::Data(format!(
                    "normal item {} must have an all-zero mask",
                    item.id
                )));
            }
            if item.confetti_seed.is_some() && self.confetti.is_none() {
                return Err(CoreError::Data(format!(
                    "item {} wants confetti but the split has no parameters",
                    item.id
                )));
            }
        }
        match self.mode {
            SplitMode::SampleWise => {
                for item in self.train_items.iter().chain(&self.test_items) {
                    if item.confetti_seed.is_some() || matches!(item.mask, MaskRef::File(_)) {
                        return Err(CoreError::Data(format!(
                            "sample-wise split must not carry masks or confetti, item {}",
                            item.id
                        )));
                    }
                }
            }
            SplitMode::PixelUnsup => {
                for item in &self.train_items {
                    if item.label == 1
                        && (item.confetti_seed.is_none() || item.mask != MaskRef::Ones)
                    {
                        return Err(CoreError::Data(format!(
                            "unsupervised train anomalies must be all-ones-masked confetti copies, item {}",
                            item.id
                        )));
                    }
                }
            }
            SplitMode::PixelSemisup => {
                for item in &self.train_items {
                    if item.label == 1 && item.confetti_seed.is_none() {
                        if !matches!(item.mask, MaskRef::File(_)) {
                            return Err(CoreError::Data(format!(
                                "real train anomaly {} needs its ground-truth mask",
                                item.id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_manifest(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn sorted_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, p)
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Compose a one-vs-rest split from a labeled image-folder dataset
/// (`root/train/<class>/…`, `root/test/<class>/…`). Training normals are
/// the chosen class's train images; training anomalies, when an
/// outlier-exposure root is given, are that dataset's train images from
/// every class. The test split keeps all classes, labeled by whether
/// they match the normal class.
pub fn make_one_vs_rest(
    root: &Path,
    normal_class: &str,
    oe_root: Option<&Path>,
) -> Result<SplitSpec> {
    let train_dir = root.join("train");
    let classes = sorted_subdirs(&train_dir)?;
    if !classes.iter().any(|(name, _)| name == normal_class) {
        return Err(CoreError::Data(format!(
            "class {normal_class} not found under {}",
            train_dir.display()
        )));
    }

    let mut train_items = Vec::new();
    for file in sorted_images(&train_dir.join(normal_class))? {
        train_items.push(SplitItem {
            id: format!("train/{normal_class}/{}", file.file_name().unwrap().to_string_lossy()),
            source: file,
            label: 0,
            mask: MaskRef::Zeros,
            confetti_seed: None,
        });
    }
    let mut oe_source = None;
    if let Some(oe) = oe_root {
        oe_source = Some(oe.display().to_string());
        for (class, dir) in sorted_subdirs(&oe.join("train"))? {
            for file in sorted_images(&dir)? {
                train_items.push(SplitItem {
                    id: format!("oe/{class}/{}", file.file_name().unwrap().to_string_lossy()),
                    source: file,
                    label: 1,
                    mask: MaskRef::Zeros,
                    confetti_seed: None,
                });
            }
        }
    }

    let mut test_items = Vec::new();
    for (class, dir) in sorted_subdirs(&root.join("test"))? {
        for file in sorted_images(&dir)? {
            test_items.push(SplitItem {
                id: format!("test/{class}/{}", file.file_name().unwrap().to_string_lossy()),
                source: file,
                label: (class != normal_class) as u8,
                mask: MaskRef::Zeros,
                confetti_seed: None,
            });
        }
    }

    let spec = SplitSpec {
        mode: SplitMode::SampleWise,
        normal_class: normal_class.to_string(),
        train_items,
        test_items,
        oe_source,
        confetti: None,
        moved_from_test: Vec::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Decoding and preprocessing choices, recorded alongside results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Target (height, width); None keeps the native size, which must
    /// then agree across all items.
    pub resize: Option<(usize, usize)>,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
    /// Standardize with per-channel mean/std of the training normals.
    pub normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            resize: None,
            channels: 1,
            normalize: true,
        }
    }
}

/// One fully decoded split: image tensors, labels, pixel masks, item
/// ids, and the normalization constants that were applied.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub train_images: Array4<f64>,
    pub train_labels: Vec<u8>,
    pub train_masks: Array3<u8>,
    pub train_ids: Vec<String>,
    /// True confetti footprints for corrupted items, kept for diagnostics
    /// only; training uses the all-ones convention from the split items.
    pub train_blob_masks: Vec<Option<Array2<u8>>>,
    pub test_images: Array4<f64>,
    pub test_labels: Vec<u8>,
    pub test_masks: Array3<u8>,
    pub test_ids: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn decode_image(path: &Path, opts: &LoadOptions) -> Result<Array3<f64>> {
    let img = image::open(path)
        .map_err(|e| CoreError::Data(format!("cannot decode {}: {e}", path.display())))?;
    let img = match opts.resize {
        Some((h, w)) => img.resize_exact(
            w as u32,
            h as u32,
            image::imageops::FilterType::Triangle,
        ),
        None => img,
    };
    let (h, w) = (img.height() as usize, img.width() as usize);
    let out = match opts.channels {
        1 => {
            let gray = img.to_luma8();
            Array3::from_shape_fn((1, h, w), |(_, y, x)| {
                gray.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
            })
        }
        3 => {
            let rgb = img.to_rgb8();
            Array3::from_shape_fn((3, h, w), |(c, y, x)| {
                rgb.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
            })
        }
        other => {
            return Err(CoreError::InvalidArgument(format!(
                "unsupported channel count {other}"
            )))
        }
    };
    Ok(out)
}

fn decode_mask(path: &Path, target: (usize, usize)) -> Result<Array2<u8>> {
    let img = image::open(path)
        .map_err(|e| CoreError::Data(format!("cannot decode mask {}: {e}", path.display())))?
        .resize_exact(
            target.1 as u32,
            target.0 as u32,
            image::imageops::FilterType::Nearest,
        )
        .to_luma8();
    Ok(Array2::from_shape_fn(target, |(y, x)| {
        (img.get_pixel(x as u32, y as u32).0[0] > 0) as u8
    }))
}

struct LoadedItem {
    image: Array3<f64>,
    mask: Array2<u8>,
    blob_mask: Option<Array2<u8>>,
}

fn load_item(item: &SplitItem, spec: &SplitSpec, opts: &LoadOptions) -> Result<LoadedItem> {
    let mut image = decode_image(&item.source, opts)?;
    let (_, h, w) = image.dim();
    let mut blob_mask = None;
    if let Some(seed) = item.confetti_seed {
        let params = spec
            .confetti
            .ok_or_else(|| CoreError::Data("confetti item without parameters".into()))?
            .with_seed(seed);
        let (corrupted, blobs) = confetti_noise(&image, &params)?;
        image = corrupted;
        blob_mask = Some(blobs);
    }
    let mask = match &item.mask {
        MaskRef::Zeros => Array2::zeros((h, w)),
        MaskRef::Ones => Array2::ones((h, w)),
        MaskRef::File(path) => decode_mask(path, (h, w))?,
    };
    Ok(LoadedItem {
        image,
        mask,
        blob_mask,
    })
}

fn stack_items(
    items: &[SplitItem],
    spec: &SplitSpec,
    opts: &LoadOptions,
) -> Result<(Array4<f64>, Array3<u8>, Vec<Option<Array2<u8>>>)> {
    if items.is_empty() {
        return Ok((
            Array4::zeros((0, opts.channels, 0, 0)),
            Array3::zeros((0, 0, 0)),
            Vec::new(),
        ));
    }
    let mut loaded = Vec::with_capacity(items.len());
    for item in items {
        loaded.push(load_item(item, spec, opts)?);
    }
    let shape = loaded[0].image.dim();
    for (item, l) in items.iter().zip(&loaded) {
        if l.image.dim() != shape {
            return Err(CoreError::Shape(format!(
                "item {} decodes to {:?}, expected {:?}; pass a resize target",
                item.id,
                l.image.dim(),
                shape
            )));
        }
    }
    let (c, h, w) = shape;
    let mut images = Array4::zeros((items.len(), c, h, w));
    let mut masks = Array3::zeros((items.len(), h, w));
    let mut blobs = Vec::with_capacity(items.len());
    for (i, l) in loaded.into_iter().enumerate() {
        images.index_axis_mut(Axis(0), i).assign(&l.image);
        masks.index_axis_mut(Axis(0), i).assign(&l.mask);
        blobs.push(l.blob_mask);
    }
    Ok((images, masks, blobs))
}

/// Decode every item of a split. Normalization constants are computed
/// from the training normals and applied to both splits; they are
/// returned so runs can record them.
pub fn load_split(spec: &SplitSpec, opts: &LoadOptions) -> Result<LoadedSplit> {
    spec.validate()?;
    if spec.train_items.is_empty() {
        return Err(CoreError::Data("split has no train items".into()));
    }
    let (mut train_images, train_masks, train_blob_masks) =
        stack_items(&spec.train_items, spec, opts)?;
    let (mut test_images, test_masks, _) = stack_items(&spec.test_items, spec, opts)?;
    {
        let (_, tc, th, tw) = train_images.dim();
        let (_, ec, eh, ew) = test_images.dim();
        if (tc, th, tw) != (ec, eh, ew) {
            return Err(CoreError::Shape(format!(
                "train items decode to {:?} but test items to {:?}",
                train_images.dim(),
                test_images.dim()
            )));
        }
    }

    let c = train_images.dim().1;
    let mut mean = vec![0.0; c];
    let mut std = vec![1.0; c];
    if opts.normalize {
        for ci in 0..c {
            let mut values = Vec::new();
            for (i, item) in spec.train_items.iter().enumerate() {
                if item.label == 0 {
                    values.extend(
                        train_images
                            .index_axis(Axis(0), i)
                            .index_axis(Axis(0), ci)
                            .iter(),
                    );
                }
            }
            if values.is_empty() {
                return Err(CoreError::Data(
                    "cannot normalize: no normal training items".into(),
                ));
            }
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let var =
                values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
            mean[ci] = m;
            std[ci] = var.sqrt().max(1e-8);
        }
        for images in [&mut train_images, &mut test_images] {
            for ci in 0..c {
                images
                    .index_axis_mut(Axis(1), ci)
                    .mapv_inplace(|v| (v - mean[ci]) / std[ci]);
            }
        }
    }

    Ok(LoadedSplit {
        train_images,
        train_labels: spec.train_items.iter().map(|i| i.label).collect(),
        train_masks,
        train_ids: spec.train_items.iter().map(|i| i.id.clone()).collect(),
        train_blob_masks,
        test_images,
        test_labels: spec.test_items.iter().map(|i| i.label).collect(),
        test_masks,
        test_ids: spec.test_items.iter().map(|i| i.id.clone()).collect(),
        mean,
        std,
    })
}
