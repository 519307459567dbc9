//! Confetti noise: axis-aligned colored rectangles pasted into an image
//! to synthesize anomalies where no real ones exist at training time.
//! Everything is parameterized and seeded so corrupted images are
//! reproducible from the recorded parameters alone.

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// How each blob is colored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorMode {
    /// One intensity per blob, shared by all channels.
    UniformRandom,
    /// Independent intensity per channel per blob.
    ChannelRandom,
}

/// Geometry and color distribution of the noise. Ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfettiParams {
    pub blob_count_range: (usize, usize),
    pub blob_size_range: (usize, usize),
    pub color_mode: ColorMode,
    pub rng_seed: u64,
}

impl Default for ConfettiParams {
    fn default() -> Self {
        Self {
            blob_count_range: (1, 8),
            blob_size_range: (2, 16),
            color_mode: ColorMode::UniformRandom,
            rng_seed: 0,
        }
    }
}

impl ConfettiParams {
    pub fn validate(&self) -> Result<()> {
        let (cmin, cmax) = self.blob_count_range;
        let (smin, smax) = self.blob_size_range;
        if cmin == 0 || cmin > cmax {
            return Err(CoreError::InvalidArgument(format!(
                "blob count range ({cmin}, {cmax}) must be positive and ordered"
            )));
        }
        if smin == 0 || smin > smax {
            return Err(CoreError::InvalidArgument(format!(
                "blob size range ({smin}, {smax}) must be positive and ordered"
            )));
        }
        Ok(())
    }

    /// The same parameters with a different seed, for deriving one
    /// independent corruption per image.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Paste seeded random rectangles into a (C, H, W) image with values in
/// [0, 1]. Returns the corrupted image and the binary (H, W) union of
/// blob footprints; pixels outside the footprint are bit-identical to
/// the input.
pub fn confetti_noise(
    image: &Array3<f64>,
    params: &ConfettiParams,
) -> Result<(Array3<f64>, Array2<u8>)> {
    params.validate()?;
    let (c, h, w) = image.dim();
    if c == 0 || h == 0 || w == 0 {
        return Err(CoreError::InvalidArgument("empty image".into()));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("image".into()));
    }
    let (_, smax) = params.blob_size_range;
    if smax > h || smax > w {
        return Err(CoreError::InvalidArgument(format!(
            "max blob size {smax} exceeds {h}x{w} image"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let (cmin, cmax) = params.blob_count_range;
    let (smin, smax) = params.blob_size_range;
    let count = rng.random_range(cmin..=cmax);
    let mut corrupted = image.clone();
    let mut mask = Array2::zeros((h, w));
    for _ in 0..count {
        let bh = rng.random_range(smin..=smax);
        let bw = rng.random_range(smin..=smax);
        let y0 = rng.random_range(0..=h - bh);
        let x0 = rng.random_range(0..=w - bw);
        let color: Vec<f64> = match params.color_mode {
            ColorMode::UniformRandom => vec![rng.random_range(0.0..=1.0); c],
            ColorMode::ChannelRandom => {
                (0..c).map(|_| rng.random_range(0.0..=1.0)).collect()
            }
        };
        for (ci, &value) in color.iter().enumerate() {
            corrupted
                .slice_mut(s![ci, y0..y0 + bh, x0..x0 + bw])
                .fill(value);
        }
        mask.slice_mut(s![y0..y0 + bh, x0..x0 + bw]).fill(1u8);
    }
    Ok((corrupted, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(c: usize, h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((c, h, w), |(ci, y, x)| {
            ((ci + 1) * (y * w + x)) as f64 / (c * h * w) as f64
        })
    }

    fn params(seed: u64) -> ConfettiParams {
        ConfettiParams {
            blob_count_range: (1, 4),
            blob_size_range: (2, 6),
            color_mode: ColorMode::UniformRandom,
            rng_seed: seed,
        }
    }

    #[test]
    fn same_seed_same_output() {
        let img = test_image(3, 20, 20);
        let (a_img, a_mask) = confetti_noise(&img, &params(7)).unwrap();
        let (b_img, b_mask) = confetti_noise(&img, &params(7)).unwrap();
        assert_eq!(a_img, b_img);
        assert_eq!(a_mask, b_mask);
        let (c_img, _) = confetti_noise(&img, &params(8)).unwrap();
        assert_ne!(a_img, c_img);
    }

    #[test]
    fn pixels_outside_the_mask_are_untouched() {
        let img = test_image(3, 24, 24);
        for seed in 0..20 {
            let (out, mask) = confetti_noise(&img, &params(seed)).unwrap();
            for y in 0..24 {
                for x in 0..24 {
                    if mask[[y, x]] == 0 {
                        for c in 0..3 {
                            assert!(
                                out[[c, y, x]].to_bits() == img[[c, y, x]].to_bits(),
                                "pixel ({y},{x}) changed outside the mask"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mask_pixel_count_respects_blob_geometry() {
        let img = test_image(1, 32, 32);
        let p = ConfettiParams {
            blob_count_range: (1, 5),
            blob_size_range: (3, 7),
            color_mode: ColorMode::UniformRandom,
            rng_seed: 0,
        };
        for seed in 0..30 {
            let (_, mask) = confetti_noise(&img, &p.with_seed(seed)).unwrap();
            let n = mask.iter().filter(|&&m| m == 1).count();
            assert!(n >= 3 * 3, "union smaller than one minimal blob");
            assert!(n <= 5 * 7 * 7, "union larger than all maximal blobs");
        }
    }

    #[test]
    fn channel_random_colors_blobs_per_channel() {
        let img = Array3::zeros((3, 16, 16));
        let p = ConfettiParams {
            blob_count_range: (1, 1),
            blob_size_range: (5, 5),
            color_mode: ColorMode::ChannelRandom,
            rng_seed: 3,
        };
        let (out, mask) = confetti_noise(&img, &p).unwrap();
        let (y, x) = (0..16)
            .flat_map(|y| (0..16).map(move |x| (y, x)))
            .find(|&(y, x)| mask[[y, x]] == 1)
            .unwrap();
        let rgb = [out[[0, y, x]], out[[1, y, x]], out[[2, y, x]]];
        assert!(rgb[0] != rgb[1] || rgb[1] != rgb[2], "channels drew one value");
    }

    #[test]
    fn oversized_blobs_and_bad_ranges_rejected() {
        let img = test_image(1, 8, 8);
        let mut p = params(0);
        p.blob_size_range = (2, 9);
        assert!(confetti_noise(&img, &p).is_err());
        p.blob_size_range = (0, 4);
        assert!(confetti_noise(&img, &p).is_err());
        p.blob_size_range = (4, 2);
        assert!(confetti_noise(&img, &p).is_err());
        let mut p = params(0);
        p.blob_count_range = (3, 1);
        assert!(confetti_noise(&img, &p).is_err());
    }

    #[test]
    fn blob_is_constant_per_channel_in_uniform_mode() {
        let img = test_image(2, 16, 16);
        let p = ConfettiParams {
            blob_count_range: (1, 1),
            blob_size_range: (4, 4),
            color_mode: ColorMode::UniformRandom,
            rng_seed: 11,
        };
        let (out, mask) = confetti_noise(&img, &p).unwrap();
        let inside: Vec<(usize, usize)> = (0..16)
            .flat_map(|y| (0..16).map(move |x| (y, x)))
            .filter(|&(y, x)| mask[[y, x]] == 1)
            .collect();
        assert_eq!(inside.len(), 16);
        let first = inside[0];
        for &(y, x) in &inside {
            assert_eq!(out[[0, y, x]], out[[0, first.0, first.1]]);
            assert_eq!(out[[0, y, x]], out[[1, y, x]]);
        }
    }
}
