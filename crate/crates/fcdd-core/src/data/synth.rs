//! Synthetic PNG corpora for tests and smoke experiments: textured
//! grayscale backgrounds, with bright square anomalies and matching
//! masks where asked. Everything is seeded, so a corpus is reproducible
//! byte for byte.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MaskRef, SplitItem, SplitMode, SplitSpec};
use crate::{CoreError, Result};

const SIDE: usize = 28;

fn write_gray_png(path: &Path, pixels: &[u8], side: usize) -> Result<()> {
    let img = image::GrayImage::from_raw(side as u32, side as u32, pixels.to_vec())
        .ok_or_else(|| CoreError::InvalidArgument("pixel buffer size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Textured background: banded gradient plus per-pixel noise, all well
/// below the anomaly intensity range.
fn background(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut pixels = vec![0u8; SIDE * SIDE];
    for y in 0..SIDE {
        let band = 40 + ((y / 4) % 3) as i32 * 15;
        for x in 0..SIDE {
            let noise: i32 = rng.random_range(-12..=12);
            pixels[y * SIDE + x] = (band + 30 + noise).clamp(0, 255) as u8;
        }
    }
    pixels
}

/// Paste a bright square and return its binary footprint.
fn add_square(pixels: &mut [u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let side = rng.random_range(6..=12);
    let y0 = rng.random_range(0..=SIDE - side);
    let x0 = rng.random_range(0..=SIDE - side);
    let brightness: u8 = rng.random_range(200..=255);
    let mut mask = vec![0u8; SIDE * SIDE];
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            pixels[y * SIDE + x] = brightness;
            mask[y * SIDE + x] = 255;
        }
    }
    mask
}

/// Write a labeled image-folder corpus (`root/train/<class>/…`,
/// `root/test/<class>/…`) with class-dependent texture. Returns nothing;
/// compose splits with [`super::make_one_vs_rest`].
pub fn write_labeled_corpus(
    root: &Path,
    classes: &[&str],
    n_train_per_class: usize,
    n_test_per_class: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (ci, class) in classes.iter().enumerate() {
        for (split, count) in [("train", n_train_per_class), ("test", n_test_per_class)] {
            let dir = root.join(split).join(class);
            std::fs::create_dir_all(&dir)?;
            for i in 0..count {
                let mut pixels = background(&mut rng);
                // A class-specific stripe makes classes distinguishable.
                for x in 0..SIDE {
                    pixels[(ci * 5 + 2) * SIDE + x] = 160;
                }
                write_gray_png(&dir.join(format!("{i:03}.png")), &pixels, SIDE)?;
            }
        }
    }
    Ok(())
}

/// Write one object class in the MVTec-AD directory convention. Each
/// defect type gets bright-square anomalies with ground-truth masks.
pub fn write_mvtec_corpus(
    root: &Path,
    class: &str,
    n_train_good: usize,
    n_test_good: usize,
    defect_types: &[(&str, usize)],
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_root = root.join(class);
    let train_good = class_root.join("train").join("good");
    std::fs::create_dir_all(&train_good)?;
    for i in 0..n_train_good {
        write_gray_png(
            &train_good.join(format!("{i:03}.png")),
            &background(&mut rng),
            SIDE,
        )?;
    }
    let test_good = class_root.join("test").join("good");
    std::fs::create_dir_all(&test_good)?;
    for i in 0..n_test_good {
        write_gray_png(
            &test_good.join(format!("{i:03}.png")),
            &background(&mut rng),
            SIDE,
        )?;
    }
    for (defect, count) in defect_types {
        let test_dir = class_root.join("test").join(defect);
        let gt_dir = class_root.join("ground_truth").join(defect);
        std::fs::create_dir_all(&test_dir)?;
        std::fs::create_dir_all(&gt_dir)?;
        for i in 0..*count {
            let mut pixels = background(&mut rng);
            let mask = add_square(&mut pixels, &mut rng);
            write_gray_png(&test_dir.join(format!("{i:03}.png")), &pixels, SIDE)?;
            write_gray_png(&gt_dir.join(format!("{i:03}_mask.png")), &mask, SIDE)?;
        }
    }
    Ok(())
}

/// Sizes for [`square_split`].
#[derive(Debug, Clone, Copy)]
pub struct SquareSplitSizes {
    pub train_normal: usize,
    pub train_anomalous: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
}

impl Default for SquareSplitSizes {
    fn default() -> Self {
        Self {
            train_normal: 32,
            train_anomalous: 32,
            test_normal: 20,
            test_anomalous: 20,
        }
    }
}

/// Write a fully supervised segmentation corpus: textured normals and
/// bright-square anomalies with true masks in both splits. Returns the
/// ready-to-load spec. This is the separable construction used by the
/// end-to-end smoke check.
pub fn square_split(dir: &Path, sizes: SquareSplitSizes, seed: u64) -> Result<SplitSpec> {
    if sizes.test_normal == 0 || sizes.test_anomalous == 0 {
        return Err(CoreError::InvalidArgument(
            "square split needs both test classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_items = Vec::new();
    let mut test_items = Vec::new();
    for (split, n_normal, n_anom, items) in [
        ("train", sizes.train_normal, sizes.train_anomalous, &mut train_items),
        ("test", sizes.test_normal, sizes.test_anomalous, &mut test_items),
    ] {
        let good_dir = dir.join(split).join("good");
        let anom_dir = dir.join(split).join("square");
        let mask_dir = dir.join(split).join("square_masks");
        std::fs::create_dir_all(&good_dir)?;
        std::fs::create_dir_all(&anom_dir)?;
        std::fs::create_dir_all(&mask_dir)?;
        for i in 0..n_normal {
            let path = good_dir.join(format!("{i:03}.png"));
            write_gray_png(&path, &background(&mut rng), SIDE)?;
            items.push(SplitItem {
                id: format!("{split}/good/{i:03}"),
                source: path,
                label: 0,
                mask: MaskRef::Zeros,
                confetti_seed: None,
            });
        }
        for i in 0..n_anom {
            let mut pixels = background(&mut rng);
            let mask = add_square(&mut pixels, &mut rng);
            let path = anom_dir.join(format!("{i:03}.png"));
            let mask_path = mask_dir.join(format!("{i:03}_mask.png"));
            write_gray_png(&path, &pixels, SIDE)?;
            write_gray_png(&mask_path, &mask, SIDE)?;
            items.push(SplitItem {
                id: format!("{split}/square/{i:03}"),
                source: path,
                label: 1,
                mask: MaskRef::File(mask_path),
                confetti_seed: None,
            });
        }
    }
    let spec = SplitSpec {
        mode: SplitMode::PixelSemisup,
        normal_class: "good".to_string(),
        train_items,
        test_items,
        oe_source: None,
        confetti: None,
        moved_from_test: Vec::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// The files a [`square_split`] corpus lives in, for cleanup decisions.
pub fn corpus_paths(spec: &SplitSpec) -> Vec<PathBuf> {
    spec.train_items
        .iter()
        .chain(&spec.test_items)
        .map(|i| i.source.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_split, LoadOptions};
    use ndarray::Axis;
    use tempfile::tempdir;

    #[test]
    fn square_split_is_loadable_and_separable() {
        let dir = tempdir().unwrap();
        let sizes = SquareSplitSizes {
            train_normal: 4,
            train_anomalous: 4,
            test_normal: 3,
            test_anomalous: 3,
        };
        let spec = square_split(dir.path(), sizes, 5).unwrap();
        assert_eq!(spec.train_items.len(), 8);
        assert_eq!(spec.test_items.len(), 6);
        let loaded = load_split(
            &spec,
            &LoadOptions {
                resize: None,
                channels: 1,
                normalize: false,
            },
        )
        .unwrap();
        assert_eq!(loaded.train_images.dim(), (8, 1, 28, 28));
        // Anomalies must be brighter inside their masks than any normal
        // background pixel ever gets.
        for i in 0..6 {
            if loaded.test_labels[i] == 1 {
                let img = loaded.test_images.index_axis(Axis(0), i);
                let mask = loaded.test_masks.index_axis(Axis(0), i);
                let n_mask = mask.iter().filter(|&&m| m == 1).count();
                assert!((36..=144).contains(&n_mask), "square of side 6 to 12");
                for y in 0..28 {
                    for x in 0..28 {
                        if mask[[y, x]] == 1 {
                            assert!(img[[0, y, x]] >= 200.0 / 255.0);
                        } else {
                            assert!(img[[0, y, x]] < 160.0 / 255.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_generation_is_deterministic() {
        let a = tempdir().unwrap();
        let b = tempdir().unwrap();
        let sizes = SquareSplitSizes {
            train_normal: 2,
            train_anomalous: 2,
            test_normal: 1,
            test_anomalous: 1,
        };
        let spec_a = square_split(a.path(), sizes, 9).unwrap();
        let spec_b = square_split(b.path(), sizes, 9).unwrap();
        for (ia, ib) in corpus_paths(&spec_a).iter().zip(corpus_paths(&spec_b).iter()) {
            assert_eq!(
                std::fs::read(ia).unwrap(),
                std::fs::read(ib).unwrap(),
                "same seed must give identical bytes"
            );
        }
    }

    #[test]
    fn labeled_corpus_has_expected_layout() {
        let dir = tempdir().unwrap();
        write_labeled_corpus(dir.path(), &["a", "b"], 3, 2, 1).unwrap();
        assert_eq!(
            super::super::sorted_images(&dir.path().join("train/a")).unwrap().len(),
            3
        );
        assert_eq!(
            super::super::sorted_images(&dir.path().join("test/b")).unwrap().len(),
            2
        );
    }

    #[test]
    fn mvtec_corpus_pairs_every_anomaly_with_a_mask() {
        let dir = tempdir().unwrap();
        write_mvtec_corpus(dir.path(), "demo", 3, 2, &[("dent", 2)], 4).unwrap();
        let test = super::super::sorted_images(&dir.path().join("demo/test/dent")).unwrap();
        let masks =
            super::super::sorted_images(&dir.path().join("demo/ground_truth/dent")).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(masks.len(), 2);
        for (img, mask) in test.iter().zip(&masks) {
            let stem = img.file_stem().unwrap().to_string_lossy();
            assert_eq!(
                mask.file_name().unwrap().to_string_lossy(),
                format!("{stem}_mask.png")
            );
        }
    }
}
