//! The anomaly objective: pseudo-Huber score maps over the latent grid,
//! image scores by averaging, the sample-level loss with outlier exposure,
//! and the mask-supervised pixel loss. Gradient companions return the
//! loss together with its derivative w.r.t. the score maps so the trainer
//! can chain into the backbone.

use ndarray::{Array2, Array3, Array4, ArrayView2, Axis};

use crate::backbone::LatentBatch;
use crate::{CoreError, Result};

/// Scores below this are clamped before the anomalous log term; the term
/// would otherwise be infinite at exactly zero.
const SCORE_EPS: f64 = 1e-12;

/// Per-location anomaly scores for a batch: `values` is (B, U, V),
/// non-negative, with the source image shape kept for mask handling and
/// upsampling.
#[derive(Debug, Clone)]
pub struct ScoreMapBatch {
    pub values: Array3<f64>,
    pub source_shape: (usize, usize),
}

impl ScoreMapBatch {
    pub fn map(&self, sample: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), sample)
    }

    pub fn len(&self) -> usize {
        self.values.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Score maps with per-sample labels and, for pixel supervision, binary
/// full-resolution anomaly masks.
#[derive(Debug, Clone)]
pub struct LabeledBatchScores {
    pub maps: ScoreMapBatch,
    pub labels: Vec<u8>,
    pub masks: Option<Array3<u8>>,
}

impl LabeledBatchScores {
    pub fn new(
        maps: ScoreMapBatch,
        labels: Vec<u8>,
        masks: Option<Array3<u8>>,
    ) -> Result<Self> {
        let b = maps.len();
        if b == 0 {
            return Err(CoreError::InvalidArgument("empty batch".into()));
        }
        if labels.len() != b {
            return Err(CoreError::Shape(format!(
                "{b} score maps but {} labels",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(CoreError::InvalidArgument(format!(
                "labels must be 0 or 1, got {bad}"
            )));
        }
        if let Some(masks) = &masks {
            let (mb, mh, mw) = masks.dim();
            if mb != b || (mh, mw) != maps.source_shape {
                return Err(CoreError::Shape(format!(
                    "masks are {mb}x{mh}x{mw}, expected {b}x{}x{}",
                    maps.source_shape.0, maps.source_shape.1
                )));
            }
            if masks.iter().any(|&v| v > 1) {
                return Err(CoreError::InvalidArgument(
                    "mask values must be 0 or 1".into(),
                ));
            }
            for (i, &label) in labels.iter().enumerate() {
                if label == 0 && masks.index_axis(Axis(0), i).iter().any(|&v| v != 0) {
                    return Err(CoreError::InvalidArgument(format!(
                        "sample {i} is labeled normal but its mask has anomalous pixels"
                    )));
                }
            }
        }
        Ok(Self {
            maps,
            labels,
            masks,
        })
    }
}

/// Pseudo-Huber score of every latent cell: sqrt(|z|^2 + 1) - 1 over the
/// channel vector z at that cell. Zero iff the vector is zero, smooth
/// everywhere, asymptotically linear in |z|.
pub fn huber_score_map(grid: &LatentBatch) -> Result<ScoreMapBatch> {
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("latent grid".into()));
    }
    let (b, _, u, v) = grid.values.dim();
    let mut values = Array3::zeros((b, u, v));
    for bi in 0..b {
        for uy in 0..u {
            for vx in 0..v {
                let sumsq: f64 = grid
                    .values
                    .index_axis(Axis(0), bi)
                    .index_axis(Axis(1), uy)
                    .index_axis(Axis(1), vx)
                    .iter()
                    .map(|z| z * z)
                    .sum();
                values[[bi, uy, vx]] = (sumsq + 1.0).sqrt() - 1.0;
            }
        }
    }
    Ok(ScoreMapBatch {
        values,
        source_shape: grid.source_shape,
    })
}

/// Chain a d(loss)/d(score map) gradient back to the latent grid:
/// d(score)/dz = z / sqrt(|z|^2 + 1).
pub fn huber_score_map_grad(grid: &LatentBatch, d_scores: &Array3<f64>) -> Array4<f64> {
    let (b, c, u, v) = grid.values.dim();
    debug_assert_eq!(d_scores.dim(), (b, u, v));
    let mut d_grid = Array4::zeros((b, c, u, v));
    for bi in 0..b {
        for uy in 0..u {
            for vx in 0..v {
                let sumsq: f64 = (0..c)
                    .map(|ci| grid.values[[bi, ci, uy, vx]].powi(2))
                    .sum();
                let scale = d_scores[[bi, uy, vx]] / (sumsq + 1.0).sqrt();
                for ci in 0..c {
                    d_grid[[bi, ci, uy, vx]] = scale * grid.values[[bi, ci, uy, vx]];
                }
            }
        }
    }
    d_grid
}

/// Image-level anomaly score: the mean over all grid cells.
pub fn sample_score(map: ArrayView2<'_, f64>) -> Result<f64> {
    if map.is_empty() {
        return Err(CoreError::InvalidArgument("empty score map".into()));
    }
    Ok(map.sum() / map.len() as f64)
}

/// Image-level scores for a whole batch.
pub fn sample_scores(maps: &ScoreMapBatch) -> Result<Vec<f64>> {
    (0..maps.len()).map(|i| sample_score(maps.map(i))).collect()
}

/// Loss contribution of an anomalous unit with score s:
/// -log(1 - exp(-s)), evaluated as -log(-expm1(-s)) with s clamped away
/// from zero to dodge the cancellation and the pole.
pub(crate) fn anomalous_term(s: f64) -> f64 {
    let s = s.max(SCORE_EPS);
    -(-(-s).exp_m1()).ln()
}

/// Derivative of [`anomalous_term`]; zero below the clamp, where the term
/// is locally constant in s.
fn anomalous_term_grad(s: f64) -> f64 {
    if s < SCORE_EPS {
        0.0
    } else {
        -1.0 / s.exp_m1()
    }
}

/// Sample-level objective: normal images pay their mean score, anomalous
/// images (outlier exposure) pay -log(1 - exp(-score)); averaged over the
/// batch.
pub fn fcdd_loss(batch: &LabeledBatchScores) -> Result<f64> {
    Ok(fcdd_loss_grad(batch)?.0)
}

/// [`fcdd_loss`] plus its gradient w.r.t. every score-map cell.
pub fn fcdd_loss_grad(batch: &LabeledBatchScores) -> Result<(f64, Array3<f64>)> {
    let n = batch.maps.len() as f64;
    let (_, u, v) = batch.maps.values.dim();
    let cells = (u * v) as f64;
    let mut loss = 0.0;
    let mut d_maps = Array3::zeros(batch.maps.values.dim());
    for (i, &label) in batch.labels.iter().enumerate() {
        let s = sample_score(batch.maps.map(i))?;
        let (term, dterm) = if label == 0 {
            (s, 1.0)
        } else {
            (anomalous_term(s), anomalous_term_grad(s))
        };
        loss += term / n;
        let per_cell = dterm / (n * cells);
        d_maps.index_axis_mut(Axis(0), i).fill(per_cell);
    }
    if !loss.is_finite() {
        return Err(CoreError::NonFinite("sample loss".into()));
    }
    Ok((loss, d_maps))
}

/// How a full-resolution mask collapses onto the latent grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum MaskPooling {
    /// A cell is anomalous if any pixel in its footprint is.
    Max,
    /// A cell is anomalous if the anomalous fraction of its footprint
    /// exceeds the threshold.
    MeanThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PixelLossOptions {
    pub pooling: MaskPooling,
    /// Weight normal and anomalous cells equally instead of flat-averaging
    /// all cells.
    pub balanced: bool,
}

impl Default for PixelLossOptions {
    fn default() -> Self {
        Self {
            pooling: MaskPooling::Max,
            balanced: false,
        }
    }
}

/// Collapse a binary (H, W) mask to the (U, V) grid. Cell (u, v) covers
/// pixel rows floor(u*H/U)..floor((u+1)*H/U) and the analogous columns,
/// so footprints tile the image exactly.
pub fn pool_mask(
    mask: ArrayView2<'_, u8>,
    grid_u: usize,
    grid_v: usize,
    pooling: MaskPooling,
) -> Result<Array2<u8>> {
    let (h, w) = mask.dim();
    if grid_u == 0 || grid_v == 0 || grid_u > h || grid_v > w {
        return Err(CoreError::Shape(format!(
            "cannot pool {h}x{w} mask to {grid_u}x{grid_v} grid"
        )));
    }
    if mask.iter().any(|&v| v > 1) {
        return Err(CoreError::InvalidArgument(
            "mask values must be 0 or 1".into(),
        ));
    }
    let mut pooled = Array2::zeros((grid_u, grid_v));
    for u in 0..grid_u {
        let y0 = u * h / grid_u;
        let y1 = (u + 1) * h / grid_u;
        for v in 0..grid_v {
            let x0 = v * w / grid_v;
            let x1 = (v + 1) * w / grid_v;
            let footprint = mask.slice(ndarray::s![y0..y1, x0..x1]);
            pooled[[u, v]] = match pooling {
                MaskPooling::Max => footprint.iter().any(|&m| m == 1) as u8,
                MaskPooling::MeanThreshold(t) => {
                    let frac = footprint.iter().map(|&m| m as f64).sum::<f64>()
                        / footprint.len() as f64;
                    (frac > t) as u8
                }
            };
        }
    }
    Ok(pooled)
}

/// Pixel-supervised objective with default options (max pooling, flat
/// mean over all cells).
pub fn pixel_fcdd_loss(batch: &LabeledBatchScores) -> Result<f64> {
    Ok(pixel_fcdd_loss_grad_with(batch, PixelLossOptions::default())?.0)
}

pub fn pixel_fcdd_loss_with(batch: &LabeledBatchScores, opts: PixelLossOptions) -> Result<f64> {
    Ok(pixel_fcdd_loss_grad_with(batch, opts)?.0)
}

pub fn pixel_fcdd_loss_grad(batch: &LabeledBatchScores) -> Result<(f64, Array3<f64>)> {
    pixel_fcdd_loss_grad_with(batch, PixelLossOptions::default())
}

/// Pixel-supervised objective: masks collapse onto the grid and every
/// cell is an independently labeled unit; normal cells pay their score,
/// anomalous cells pay -log(1 - exp(-score)).
pub fn pixel_fcdd_loss_grad_with(
    batch: &LabeledBatchScores,
    opts: PixelLossOptions,
) -> Result<(f64, Array3<f64>)> {
    let masks = batch.masks.as_ref().ok_or_else(|| {
        CoreError::InvalidArgument("pixel loss needs a mask for every sample".into())
    })?;
    let (b, u, v) = batch.maps.values.dim();

    let mut cell_labels = Array3::zeros((b, u, v));
    for i in 0..b {
        let pooled = pool_mask(masks.index_axis(Axis(0), i), u, v, opts.pooling)?;
        cell_labels.index_axis_mut(Axis(0), i).assign(&pooled);
    }

    let n_anom = cell_labels.iter().filter(|&&m| m == 1).count();
    let n_norm = b * u * v - n_anom;
    let (w_norm, w_anom) = if opts.balanced {
        // Each group contributes half the loss; a missing group leaves
        // the other at full weight.
        match (n_norm, n_anom) {
            (0, a) => (0.0, 1.0 / a as f64),
            (n, 0) => (1.0 / n as f64, 0.0),
            (n, a) => (0.5 / n as f64, 0.5 / a as f64),
        }
    } else {
        let total = (b * u * v) as f64;
        (1.0 / total, 1.0 / total)
    };

    let mut loss = 0.0;
    let mut d_maps = Array3::zeros((b, u, v));
    for i in 0..b {
        for uy in 0..u {
            for vx in 0..v {
                let s = batch.maps.values[[i, uy, vx]];
                if cell_labels[[i, uy, vx]] == 0 {
                    loss += w_norm * s;
                    d_maps[[i, uy, vx]] = w_norm;
                } else {
                    loss += w_anom * anomalous_term(s);
                    d_maps[[i, uy, vx]] = w_anom * anomalous_term_grad(s);
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(CoreError::NonFinite("pixel loss".into()));
    }
    Ok((loss, d_maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_from(values: Array4<f64>, source: (usize, usize)) -> LatentBatch {
        LatentBatch {
            values,
            source_shape: source,
        }
    }

    fn maps_from(values: Array3<f64>, source: (usize, usize)) -> ScoreMapBatch {
        ScoreMapBatch {
            values,
            source_shape: source,
        }
    }

    #[test]
    fn huber_closed_forms() {
        // |z|^2 of 0, 3, 8 must give scores 0, 1, 2.
        let mut values = Array4::zeros((1, 3, 1, 3));
        for c in 0..3 {
            values[[0, c, 0, 1]] = 1.0; // sum of squares 3
            values[[0, c, 0, 2]] = (8.0f64 / 3.0).sqrt(); // sum of squares 8
        }
        let maps = huber_score_map(&grid_from(values, (4, 12))).unwrap();
        assert!((maps.values[[0, 0, 0]] - 0.0).abs() < 1e-12);
        assert!((maps.values[[0, 0, 1]] - 1.0).abs() < 1e-12);
        assert!((maps.values[[0, 0, 2]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn huber_is_monotone_in_vector_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = Array4::from_shape_simple_fn((1, 4, 2, 2), || rng.random_range(-1.0..1.0));
        let scaled = base.mapv(|v| v * 1.7);
        let a = huber_score_map(&grid_from(base, (8, 8))).unwrap();
        let b = huber_score_map(&grid_from(scaled, (8, 8))).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn huber_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values = Array4::from_shape_simple_fn((2, 3, 2, 2), || rng.random_range(-2.0..2.0));
        let d_scores = Array3::from_shape_simple_fn((2, 2, 2), || rng.random_range(-1.0..1.0));
        let grid = grid_from(values.clone(), (4, 4));
        let d_grid = huber_score_map_grad(&grid, &d_scores);
        let eps = 1e-6;
        for &idx in &[(0, 0, 0, 0), (1, 2, 1, 1), (0, 1, 1, 0)] {
            let mut up = values.clone();
            up[idx] += eps;
            let mut down = values.clone();
            down[idx] -= eps;
            let fu = (huber_score_map(&grid_from(up, (4, 4))).unwrap().values * &d_scores).sum();
            let fd = (huber_score_map(&grid_from(down, (4, 4))).unwrap().values * &d_scores).sum();
            let want = (fu - fd) / (2.0 * eps);
            assert!((d_grid[idx] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn sample_score_is_the_cell_mean() {
        let maps = maps_from(
            Array3::from_shape_vec((1, 1, 2), vec![0.0, 2.0]).unwrap(),
            (2, 4),
        );
        assert_eq!(sample_score(maps.map(0)).unwrap(), 1.0);
        let constant = maps_from(Array3::from_elem((1, 5, 5), 0.37), (10, 10));
        assert!((sample_score(constant.map(0)).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn sample_score_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = Array3::from_shape_simple_fn((1, 7, 7), || rng.random_range(0.0..3.0));
        let mut oracle = 0.0;
        for y in 0..7 {
            for x in 0..7 {
                oracle += values[[0, y, x]];
            }
        }
        oracle /= 49.0;
        let maps = maps_from(values, (28, 28));
        let got = sample_score(maps.map(0)).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn sample_loss_closed_forms() {
        // All-normal batch reduces to the mean of the scores.
        let maps = maps_from(
            Array3::from_shape_vec((2, 1, 1), vec![0.4, 0.8]).unwrap(),
            (2, 2),
        );
        let batch = LabeledBatchScores::new(maps, vec![0, 0], None).unwrap();
        assert!((fcdd_loss(&batch).unwrap() - 0.6).abs() < 1e-15);

        // Single anomalous sample with score ln 2 pays exactly ln 2.
        let ln2 = std::f64::consts::LN_2;
        let maps = maps_from(Array3::from_elem((1, 3, 3), ln2), (6, 6));
        let batch = LabeledBatchScores::new(maps, vec![1], None).unwrap();
        assert!((fcdd_loss(&batch).unwrap() - ln2).abs() < 1e-12);
    }

    #[test]
    fn sample_loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values = Array3::from_shape_simple_fn((4, 3, 3), || rng.random_range(0.0..2.0));
        let labels = vec![0u8, 1, 1, 0];
        let mut oracle = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let mut s: f64 = 0.0;
            for uy in 0..3 {
                for vx in 0..3 {
                    s += values[[i, uy, vx]];
                }
            }
            s /= 9.0;
            oracle += if y == 0 {
                s
            } else {
                -(1.0 - (-s).exp()).ln()
            };
        }
        oracle /= 4.0;
        let batch =
            LabeledBatchScores::new(maps_from(values, (6, 6)), labels, None).unwrap();
        assert!((fcdd_loss(&batch).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn label_flip_swaps_the_per_sample_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values = Array3::from_shape_simple_fn((3, 2, 2), || rng.random_range(0.1..2.0));
        let maps = maps_from(values.clone(), (4, 4));
        let labels = vec![0u8, 1, 0];
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let a = fcdd_loss(&LabeledBatchScores::new(maps.clone(), labels, None).unwrap()).unwrap();
        let b = fcdd_loss(&LabeledBatchScores::new(maps.clone(), flipped, None).unwrap()).unwrap();
        let both: f64 = (0..3)
            .map(|i| {
                let s = sample_score(maps.map(i)).unwrap();
                s + anomalous_term(s)
            })
            .sum::<f64>()
            / 3.0;
        assert!((a + b - both).abs() < 1e-12);
    }

    #[test]
    fn sample_loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values = Array3::from_shape_simple_fn((3, 2, 2), || rng.random_range(0.05..1.5));
        let labels = vec![0u8, 1, 1];
        let batch = LabeledBatchScores::new(
            maps_from(values.clone(), (4, 4)),
            labels.clone(),
            None,
        )
        .unwrap();
        let (_, d_maps) = fcdd_loss_grad(&batch).unwrap();
        let eps = 1e-6;
        for &idx in &[(0, 0, 0), (1, 1, 1), (2, 0, 1)] {
            let mut up = values.clone();
            up[idx] += eps;
            let mut down = values.clone();
            down[idx] -= eps;
            let lu = fcdd_loss(
                &LabeledBatchScores::new(maps_from(up, (4, 4)), labels.clone(), None).unwrap(),
            )
            .unwrap();
            let ld = fcdd_loss(
                &LabeledBatchScores::new(maps_from(down, (4, 4)), labels.clone(), None).unwrap(),
            )
            .unwrap();
            let want = (lu - ld) / (2.0 * eps);
            assert!((d_maps[idx] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn anomalous_score_of_zero_is_clamped_not_infinite() {
        let maps = maps_from(Array3::zeros((1, 2, 2)), (4, 4));
        let batch = LabeledBatchScores::new(maps, vec![1], None).unwrap();
        let (loss, grads) = fcdd_loss_grad(&batch).unwrap();
        assert!(loss.is_finite());
        assert!(grads.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn mask_pooling_footprints_tile_the_image() {
        let mut mask = Array2::zeros((8, 8));
        mask[[3, 5]] = 1u8;
        // 8x8 to 4x4: pixel (3,5) lies in cell (1,2).
        let pooled = pool_mask(mask.view(), 4, 4, MaskPooling::Max).unwrap();
        let mut expected = Array2::zeros((4, 4));
        expected[[1, 2]] = 1u8;
        assert_eq!(pooled, expected);
        // Mean pooling needs more than the threshold fraction.
        let pooled = pool_mask(mask.view(), 4, 4, MaskPooling::MeanThreshold(0.5)).unwrap();
        assert_eq!(pooled.sum(), 0);
    }

    #[test]
    fn pixel_loss_closed_forms() {
        // All-zero masks reduce to the mean over all cell scores.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = Array3::from_shape_simple_fn((2, 2, 2), || rng.random_range(0.0..2.0));
        let mean = values.sum() / 8.0;
        let batch = LabeledBatchScores::new(
            maps_from(values, (4, 4)),
            vec![0, 0],
            Some(Array3::zeros((2, 4, 4))),
        )
        .unwrap();
        assert!((pixel_fcdd_loss(&batch).unwrap() - mean).abs() < 1e-12);

        // One anomalous cell scoring ln 2, everything else normal at 0.
        let ln2 = std::f64::consts::LN_2;
        let mut values = Array3::zeros((1, 2, 2));
        values[[0, 0, 0]] = ln2;
        let mut masks = Array3::zeros((1, 4, 4));
        masks[[0, 0, 0]] = 1u8;
        let batch =
            LabeledBatchScores::new(maps_from(values, (4, 4)), vec![1], Some(masks)).unwrap();
        assert!((pixel_fcdd_loss(&batch).unwrap() - ln2 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn pixel_loss_matches_cell_by_cell_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let values = Array3::from_shape_simple_fn((3, 2, 3), || rng.random_range(0.0..2.0));
        let mut masks = Array3::zeros((3, 4, 6));
        let labels = vec![0u8, 1, 1];
        for y in 0..2 {
            for x in 0..3 {
                masks[[1, y, x]] = 1u8;
            }
        }
        masks[[2, 3, 5]] = 1u8;
        let mut oracle = 0.0;
        for i in 0..3 {
            let pooled = pool_mask(masks.index_axis(Axis(0), i), 2, 3, MaskPooling::Max).unwrap();
            for uy in 0..2 {
                for vx in 0..3 {
                    let s: f64 = values[[i, uy, vx]];
                    oracle += if pooled[[uy, vx]] == 0 {
                        s
                    } else {
                        -(1.0 - (-s).exp()).ln()
                    };
                }
            }
        }
        oracle /= 18.0;
        let batch =
            LabeledBatchScores::new(maps_from(values, (4, 6)), labels, Some(masks)).unwrap();
        assert!((pixel_fcdd_loss(&batch).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn uniform_masks_reduce_pixel_loss_to_cellwise_sample_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = Array3::from_shape_simple_fn((4, 3, 3), || rng.random_range(0.0..1.5));
        let labels = vec![0u8, 1, 0, 1];
        let mut masks = Array3::zeros((4, 9, 9));
        for (i, &y) in labels.iter().enumerate() {
            if y == 1 {
                masks.index_axis_mut(Axis(0), i).fill(1u8);
            }
        }
        let cellwise: f64 = (0..4)
            .map(|i| {
                values
                    .index_axis(Axis(0), i)
                    .iter()
                    .map(|&s| {
                        if labels[i] == 0 {
                            s
                        } else {
                            anomalous_term(s)
                        }
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 36.0;
        let batch =
            LabeledBatchScores::new(maps_from(values, (9, 9)), labels, Some(masks)).unwrap();
        assert!((pixel_fcdd_loss(&batch).unwrap() - cellwise).abs() < 1e-12);
    }

    #[test]
    fn pixel_loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let values = Array3::from_shape_simple_fn((2, 2, 2), || rng.random_range(0.05..1.5));
        let mut masks = Array3::zeros((2, 4, 4));
        for y in 0..2 {
            for x in 0..2 {
                masks[[1, y, x]] = 1u8;
            }
        }
        let labels = vec![0u8, 1];
        let make = |v: Array3<f64>| {
            LabeledBatchScores::new(maps_from(v, (4, 4)), labels.clone(), Some(masks.clone()))
                .unwrap()
        };
        let (_, d_maps) = pixel_fcdd_loss_grad(&make(values.clone())).unwrap();
        let eps = 1e-6;
        for &idx in &[(0, 0, 0), (1, 0, 0), (1, 1, 1)] {
            let mut up = values.clone();
            up[idx] += eps;
            let mut down = values.clone();
            down[idx] -= eps;
            let want = (pixel_fcdd_loss(&make(up)).unwrap()
                - pixel_fcdd_loss(&make(down)).unwrap())
                / (2.0 * eps);
            assert!((d_maps[idx] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn balanced_option_equalizes_group_weights() {
        // Three normal cells at 1.0 and one anomalous cell at 1.0.
        let values = Array3::from_elem((1, 2, 2), 1.0);
        let mut masks = Array3::zeros((1, 2, 2));
        masks[[0, 0, 0]] = 1u8;
        let batch =
            LabeledBatchScores::new(maps_from(values, (2, 2)), vec![1], Some(masks)).unwrap();
        let balanced = pixel_fcdd_loss_with(
            &batch,
            PixelLossOptions {
                pooling: MaskPooling::Max,
                balanced: true,
            },
        )
        .unwrap();
        let expected = 0.5 * 1.0 + 0.5 * anomalous_term(1.0);
        assert!((balanced - expected).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_malformed_batches() {
        let maps = maps_from(Array3::zeros((2, 2, 2)), (4, 4));
        assert!(LabeledBatchScores::new(maps.clone(), vec![0], None).is_err());
        assert!(LabeledBatchScores::new(maps.clone(), vec![0, 2], None).is_err());
        // Normal sample with anomalous mask pixels.
        let mut masks = Array3::zeros((2, 4, 4));
        masks[[0, 1, 1]] = 1u8;
        assert!(LabeledBatchScores::new(maps.clone(), vec![0, 1], Some(masks)).is_err());
        // Pixel loss without masks.
        let batch = LabeledBatchScores::new(maps, vec![0, 1], None).unwrap();
        assert!(pixel_fcdd_loss(&batch).is_err());
    }

    #[test]
    fn mask_with_wrong_shape_rejected() {
        let maps = maps_from(Array3::zeros((1, 2, 2)), (4, 4));
        let masks = Array3::zeros((1, 3, 4));
        assert!(LabeledBatchScores::new(maps, vec![1], Some(masks)).is_err());
    }

    #[test]
    fn arr2_mask_helper_pools_exactly() {
        let mask = arr2(&[[0u8, 1], [0, 0]]);
        let pooled = pool_mask(mask.view(), 1, 1, MaskPooling::Max).unwrap();
        assert_eq!(pooled[[0, 0]], 1);
    }
}
