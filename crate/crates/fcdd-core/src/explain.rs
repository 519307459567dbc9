//! Full-resolution explanation heatmaps. A low-resolution score map is
//! upsampled by placing one truncated, unnormalized Gaussian bump per
//! grid cell, centered where that cell's receptive field sits in the
//! input image. Rendering maps scores through a monotone colormap to an
//! 8-bit RGB buffer; export writes a PNG plus a JSON sidecar describing
//! the normalization so images stay comparable.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::backbone::ReceptiveField;
use crate::objective::ScoreMapBatch;
use crate::{CoreError, Result};

/// An upsampled score map at the source image resolution, together with
/// the receptive-field geometry and kernel width that produced it.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub values: Array2<f64>,
    pub rf: ReceptiveField,
    pub sigma: f64,
}

/// Kernel width that keeps roughly 95% of the Gaussian mass inside the
/// truncation window.
pub fn default_sigma(rf: &ReceptiveField) -> f64 {
    rf.size as f64 / 4.0
}

/// Upsample one (U, V) score map to the (H, W) source resolution.
///
/// Output(p) = sum over cells (u, v) of map(u, v) * exp(-|p - c|^2 / (2 sigma^2))
/// where c = offset + (u, v) * jump is the cell's receptive-field center
/// and the bump is truncated to pixels with |p - c| <= size/2 on both
/// axes. Kernels are unnormalized, so the output is linear in the map
/// and only monotone comparisons between heatmaps are meaningful.
pub fn upsample_heatmap(
    map: ArrayView2<'_, f64>,
    source_shape: (usize, usize),
    rf: &ReceptiveField,
    sigma: f64,
) -> Result<Heatmap> {
    let (h, w) = source_shape;
    if map.is_empty() || h == 0 || w == 0 {
        return Err(CoreError::InvalidArgument(
            "empty score map or target shape".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("score map".into()));
    }
    let (grid_u, grid_v) = map.dim();
    let half = rf.size as f64 / 2.0;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = Array2::zeros((h, w));
    for u in 0..grid_u {
        let cy = rf.offset + (u * rf.jump) as f64;
        let y0 = (cy - half).ceil().max(0.0) as usize;
        let y1 = ((cy + half).floor() as isize).min(h as isize - 1);
        for v in 0..grid_v {
            let weight = map[[u, v]];
            if weight == 0.0 {
                continue;
            }
            let cx = rf.offset + (v * rf.jump) as f64;
            let x0 = (cx - half).ceil().max(0.0) as usize;
            let x1 = ((cx + half).floor() as isize).min(w as isize - 1);
            for py in y0..=y1.max(0) as usize {
                if py >= h || (py as f64 - cy).abs() > half {
                    continue;
                }
                let dy2 = (py as f64 - cy).powi(2);
                for px in x0..=x1.max(0) as usize {
                    if px >= w || (px as f64 - cx).abs() > half {
                        continue;
                    }
                    let dx2 = (px as f64 - cx).powi(2);
                    values[[py, px]] += weight * (-(dy2 + dx2) * inv).exp();
                }
            }
        }
    }
    Ok(Heatmap {
        values,
        rf: *rf,
        sigma,
    })
}

/// Upsample every map in a batch with the same geometry.
pub fn upsample_batch(
    maps: &ScoreMapBatch,
    rf: &ReceptiveField,
    sigma: f64,
) -> Result<Vec<Heatmap>> {
    (0..maps.len())
        .map(|i| upsample_heatmap(maps.map(i), maps.source_shape, rf, sigma))
        .collect()
}

/// How heatmap scores are normalized before the colormap is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RenderRange {
    /// Stretch this heatmap's own [min, max] to the full color range.
    PerImage,
    /// Use fixed bounds shared across images; values outside are clipped.
    Global { min: f64, max: f64 },
}

/// 8-bit RGB render of a heatmap. `constant` marks a per-image render of
/// a flat heatmap, which comes out all black by convention.
#[derive(Debug, Clone)]
pub struct RenderedHeatmap {
    /// (H, W, 3) row-major RGB.
    pub pixels: Array3<u8>,
    pub bound_min: f64,
    pub bound_max: f64,
    pub constant: bool,
}

/// Black-body style colormap: black through red and yellow to white.
/// Each channel is non-decreasing in t and their sum is exactly 3t, so
/// the map is strictly monotone in total intensity.
pub fn hot_colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let chan = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [chan(3.0 * t), chan(3.0 * t - 1.0), chan(3.0 * t - 2.0)]
}

/// Map a heatmap through [`hot_colormap`] under the given normalization.
pub fn render_heatmap(hm: &Heatmap, norm: RenderRange) -> Result<RenderedHeatmap> {
    if hm.values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("heatmap".into()));
    }
    let (min, max, constant) = match norm {
        RenderRange::Global { min, max } => {
            if !(max > min) {
                return Err(CoreError::InvalidArgument(format!(
                    "global bounds need max > min, got [{min}, {max}]"
                )));
            }
            (min, max, false)
        }
        RenderRange::PerImage => {
            let min = hm.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = hm.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (min, max, max == min)
        }
    };
    let (h, w) = hm.values.dim();
    let mut pixels = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let t = if constant {
                0.0
            } else {
                (hm.values[[y, x]] - min) / (max - min)
            };
            let rgb = hot_colormap(t);
            for c in 0..3 {
                pixels[[y, x, c]] = rgb[c];
            }
        }
    }
    Ok(RenderedHeatmap {
        pixels,
        bound_min: min,
        bound_max: max,
        constant,
    })
}

/// Metadata written next to every exported heatmap so renders stay
/// interpretable and reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub normalization: RenderRange,
    pub bound_min: f64,
    pub bound_max: f64,
    pub constant: bool,
    pub rf_size: usize,
    pub rf_jump: usize,
    pub rf_offset: f64,
    pub sigma: f64,
}

/// Render and write `<path>` as a PNG plus `<path>.json` with the
/// normalization record. Returns the sidecar that was written.
pub fn export_heatmap(hm: &Heatmap, norm: RenderRange, path: &Path) -> Result<HeatmapSidecar> {
    let rendered = render_heatmap(hm, norm)?;
    save_render_png(&rendered, path)?;
    let sidecar = HeatmapSidecar {
        normalization: norm,
        bound_min: rendered.bound_min,
        bound_max: rendered.bound_max,
        constant: rendered.constant,
        rf_size: hm.rf.size,
        rf_jump: hm.rf.jump,
        rf_offset: hm.rf.offset,
        sigma: hm.sigma,
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    std::fs::write(sidecar_path, json)?;
    Ok(sidecar)
}

/// Write an already rendered heatmap as a PNG.
pub fn save_render_png(rendered: &RenderedHeatmap, path: &Path) -> Result<()> {
    let (h, w, _) = rendered.pixels.dim();
    let data = rendered
        .pixels
        .as_standard_layout()
        .iter()
        .cloned()
        .collect::<Vec<u8>>();
    let img = image::RgbImage::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| CoreError::InvalidArgument("render buffer size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
