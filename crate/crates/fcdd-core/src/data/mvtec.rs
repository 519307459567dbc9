//! Split construction for datasets laid out in the MVTec-AD directory
//! convention:
//!
//! ```text
//! <root>/<class>/train/good/*.png
//! <root>/<class>/test/<defect-type>/*.png        ("good" = defect-free)
//! <root>/<class>/ground_truth/<defect-type>/<stem>_mask.png
//! ```

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ConfettiParams, MaskRef, SplitItem, SplitMode, SplitSpec};
use crate::{CoreError, Result};

fn item_id(class: &str, path: &Path) -> String {
    let mut parts: Vec<String> = Vec::new();
    for comp in path.components().rev().take(3) {
        parts.push(comp.as_os_str().to_string_lossy().into_owned());
    }
    parts.reverse();
    format!("{class}:{}", parts.join("/"))
}

fn mask_path_for(class_root: &Path, defect: &str, image: &Path) -> PathBuf {
    let stem = image.file_stem().unwrap_or_default().to_string_lossy();
    class_root
        .join("ground_truth")
        .join(defect)
        .join(format!("{stem}_mask.png"))
}

/// Build an anomaly-segmentation split for one object class.
///
/// Both modes train on the class's defect-free images plus one
/// confetti-corrupted copy of each, masked all-ones. Semi-supervised mode
/// additionally moves one real anomalous image per defect type, with its
/// ground-truth mask, from test into train; the selection is a seeded
/// shuffle and the chosen ids are recorded in the split manifest.
pub fn make_mvtec_setup(
    data_root: &Path,
    class: &str,
    mode: SplitMode,
    confetti: ConfettiParams,
    selection_seed: u64,
) -> Result<SplitSpec> {
    if mode == SplitMode::SampleWise {
        return Err(CoreError::InvalidArgument(
            "this layout describes segmentation setups, not one-vs-rest".into(),
        ));
    }
    confetti.validate()?;
    let class_root = data_root.join(class);
    if !class_root.is_dir() {
        return Err(CoreError::Data(format!(
            "class {class} not found under {}",
            data_root.display()
        )));
    }

    let mut train_items = Vec::new();
    let normals = super::sorted_images(&class_root.join("train").join("good"))?;
    if normals.is_empty() {
        return Err(CoreError::Data(format!("class {class} has no training images")));
    }
    for file in &normals {
        train_items.push(SplitItem {
            id: item_id(class, file),
            source: file.clone(),
            label: 0,
            mask: MaskRef::Zeros,
            confetti_seed: None,
        });
    }
    for (i, file) in normals.iter().enumerate() {
        train_items.push(SplitItem {
            id: format!("{}#confetti", item_id(class, file)),
            source: file.clone(),
            label: 1,
            mask: MaskRef::Ones,
            confetti_seed: Some(confetti.rng_seed.wrapping_add(i as u64)),
        });
    }

    let mut test_items = Vec::new();
    let mut defect_types = Vec::new();
    for (defect, dir) in super::sorted_subdirs(&class_root.join("test"))? {
        let files = super::sorted_images(&dir)?;
        if files.is_empty() {
            return Err(CoreError::Data(format!(
                "defect type {defect} of class {class} has no test images"
            )));
        }
        if defect != "good" {
            defect_types.push(defect.clone());
        }
        for file in files {
            let (label, mask) = if defect == "good" {
                (0, MaskRef::Zeros)
            } else {
                let mask = mask_path_for(&class_root, &defect, &file);
                if !mask.is_file() {
                    return Err(CoreError::Data(format!(
                        "missing ground-truth mask {}",
                        mask.display()
                    )));
                }
                (1, MaskRef::File(mask))
            };
            test_items.push(SplitItem {
                id: item_id(class, &file),
                source: file,
                label,
                mask,
                confetti_seed: None,
            });
        }
    }

    let mut moved_from_test = Vec::new();
    if mode == SplitMode::PixelSemisup {
        let mut rng = ChaCha8Rng::seed_from_u64(selection_seed);
        for defect in &defect_types {
            let marker = format!("{class}:test/{defect}/");
            let mut candidates: Vec<usize> = test_items
                .iter()
                .enumerate()
                .filter(|(_, item)| item.id.starts_with(&marker))
                .map(|(i, _)| i)
                .collect();
            candidates.shuffle(&mut rng);
            let chosen = candidates[0];
            let mut item = test_items.remove(chosen);
            moved_from_test.push(item.id.clone());
            item.confetti_seed = None;
            train_items.push(item);
        }
    }

    let spec = SplitSpec {
        mode,
        normal_class: class.to_string(),
        train_items,
        test_items,
        oe_source: None,
        confetti: Some(confetti),
        moved_from_test,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;
    use tempfile::tempdir;

    fn corpus(root: &Path) {
        synth::write_mvtec_corpus(
            root,
            "blocks",
            6,
            4,
            &[("scratch", 3), ("stain", 2), ("crack", 4)],
            77,
        )
        .unwrap();
    }

    #[test]
    fn unsupervised_train_has_no_real_anomalies() {
        let dir = tempdir().unwrap();
        corpus(dir.path());
        let spec = make_mvtec_setup(
            dir.path(),
            "blocks",
            SplitMode::PixelUnsup,
            ConfettiParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(spec.train_items.len(), 12, "normals plus one copy each");
        for item in &spec.train_items {
            if item.label == 1 {
                assert!(item.confetti_seed.is_some());
                assert_eq!(item.mask, MaskRef::Ones);
            }
        }
        assert_eq!(spec.test_items.len(), 4 + 3 + 2 + 4);
        assert!(spec.moved_from_test.is_empty());
    }

    #[test]
    fn semisupervised_moves_one_image_per_defect_type() {
        let dir = tempdir().unwrap();
        corpus(dir.path());
        let unsup = make_mvtec_setup(
            dir.path(),
            "blocks",
            SplitMode::PixelUnsup,
            ConfettiParams::default(),
            1,
        )
        .unwrap();
        let semi = make_mvtec_setup(
            dir.path(),
            "blocks",
            SplitMode::PixelSemisup,
            ConfettiParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(semi.moved_from_test.len(), 3);
        assert_eq!(
            semi.test_items.len(),
            unsup.test_items.len() - 3,
            "test shrinks by exactly the number of defect types"
        );
        for id in &semi.moved_from_test {
            assert!(semi.test_items.iter().all(|i| &i.id != id));
            let moved = semi.train_items.iter().find(|i| &i.id == id).unwrap();
            assert_eq!(moved.label, 1);
            assert!(matches!(moved.mask, MaskRef::File(_)), "true mask travels along");
        }
    }

    #[test]
    fn selection_is_deterministic_in_the_seed() {
        let dir = tempdir().unwrap();
        corpus(dir.path());
        let build = |seed| {
            make_mvtec_setup(
                dir.path(),
                "blocks",
                SplitMode::PixelSemisup,
                ConfettiParams::default(),
                seed,
            )
            .unwrap()
            .moved_from_test
        };
        assert_eq!(build(5), build(5));
    }

    #[test]
    fn missing_masks_and_classes_are_errors() {
        let dir = tempdir().unwrap();
        corpus(dir.path());
        assert!(make_mvtec_setup(
            dir.path(),
            "widgets",
            SplitMode::PixelUnsup,
            ConfettiParams::default(),
            1,
        )
        .is_err());

        // Remove one ground-truth mask.
        let gt = dir.path().join("blocks/ground_truth/stain");
        let victim = super::super::sorted_images(&gt).unwrap()[0].clone();
        std::fs::remove_file(victim).unwrap();
        assert!(make_mvtec_setup(
            dir.path(),
            "blocks",
            SplitMode::PixelUnsup,
            ConfettiParams::default(),
            1,
        )
        .is_err());
    }

    #[test]
    fn empty_defect_directory_is_an_error() {
        let dir = tempdir().unwrap();
        corpus(dir.path());
        std::fs::create_dir(dir.path().join("blocks/test/hole")).unwrap();
        assert!(make_mvtec_setup(
            dir.path(),
            "blocks",
            SplitMode::PixelUnsup,
            ConfettiParams::default(),
            1,
        )
        .is_err());
    }
}
