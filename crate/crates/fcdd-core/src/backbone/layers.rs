//! The four layer kinds of the backbone engine. Each layer owns its
//! parameters, gradient buffers, and whatever activations its backward
//! pass needs; `forward` in training mode caches, `backward` consumes the
//! cache and accumulates parameter gradients.

use ndarray::{s, Array1, Array2, Array4, Axis};
use rand::Rng;

use crate::{CoreError, Result};

/// 2-D convolution, NCHW, square kernel, implemented as im2col followed by
/// one matrix product per batch.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array4<f64>,
    pub grad_bias: Array1<f64>,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    columns: Array2<f64>,
    input_hw: (usize, usize),
    batch: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        let weight = Array4::from_shape_simple_fn((out_ch, in_ch, kernel, kernel), || {
            rng.random_range(-bound..bound)
        });
        let bias = Array1::from_shape_simple_fn(out_ch, || rng.random_range(-bound..bound));
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            weight,
            bias,
            grad_weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            grad_bias: Array1::zeros(out_ch),
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let eff_h = h + 2 * self.padding;
        let eff_w = w + 2 * self.padding;
        if eff_h < self.kernel || eff_w < self.kernel {
            return Err(CoreError::Shape(format!(
                "convolution kernel {} exceeds padded input {}x{}",
                self.kernel, eff_h, eff_w
            )));
        }
        Ok((
            (eff_h - self.kernel) / self.stride + 1,
            (eff_w - self.kernel) / self.stride + 1,
        ))
    }

    /// Gather every kernel window into a (in_ch*k*k, batch*oh*ow) matrix.
    fn im2col(&self, x: &Array4<f64>, oh: usize, ow: usize) -> Array2<f64> {
        let (b, c, h, w) = x.dim();
        let k = self.kernel;
        let mut columns = Array2::zeros((c * k * k, b * oh * ow));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let col = (bi * oh + oy) * ow + ox;
                    let y0 = (oy * self.stride) as isize - self.padding as isize;
                    let x0 = (ox * self.stride) as isize - self.padding as isize;
                    for ci in 0..c {
                        for ky in 0..k {
                            let iy = y0 + ky as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = x0 + kx as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                columns[[(ci * k + ky) * k + kx, col]] =
                                    x[[bi, ci, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
            }
        }
        columns
    }

    /// Scatter-add a (in_ch*k*k, batch*oh*ow) gradient back to input shape.
    fn col2im(
        &self,
        dcol: &Array2<f64>,
        batch: usize,
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
    ) -> Array4<f64> {
        let k = self.kernel;
        let mut dx = Array4::zeros((batch, self.in_ch, h, w));
        for bi in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let col = (bi * oh + oy) * ow + ox;
                    let y0 = (oy * self.stride) as isize - self.padding as isize;
                    let x0 = (ox * self.stride) as isize - self.padding as isize;
                    for ci in 0..self.in_ch {
                        for ky in 0..k {
                            let iy = y0 + ky as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = x0 + kx as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dx[[bi, ci, iy as usize, ix as usize]] +=
                                    dcol[[(ci * k + ky) * k + kx, col]];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Result<Array4<f64>> {
        let (b, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(CoreError::Shape(format!(
                "convolution expects {} channels, got {c}",
                self.in_ch
            )));
        }
        let (oh, ow) = self.out_hw(h, w)?;
        let columns = self.im2col(x, oh, ow);
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.kernel * self.kernel))
            .expect("contiguous weight");
        let mut y2 = w2.dot(&columns);
        for (mut row, &bv) in y2.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row += bv;
        }
        if train {
            self.cache = Some(ConvCache {
                columns,
                input_hw: (h, w),
                batch: b,
            });
        }
        let y = y2
            .into_shape_with_order((self.out_ch, b, oh, ow))
            .expect("row-major product")
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .to_owned();
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("backward without cached forward");
        let (b, oc, oh, ow) = dy.dim();
        debug_assert_eq!(oc, self.out_ch);
        debug_assert_eq!(b, cache.batch);
        let dy2 = dy
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_shape_with_order((oc, b * oh * ow))
            .expect("contiguous grad")
            .to_owned();
        let dw2 = dy2.dot(&cache.columns.t());
        self.grad_weight += &dw2
            .into_shape_with_order((self.out_ch, self.in_ch, self.kernel, self.kernel))
            .expect("kernel shape");
        self.grad_bias += &dy2.sum_axis(Axis(1));
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.kernel * self.kernel))
            .expect("contiguous weight");
        let dcol = w2.t().dot(&dy2);
        let (h, w) = cache.input_hw;
        self.col2im(&dcol, b, h, w, oh, ow)
    }
}

/// Max pooling without padding; ties resolve to the first maximum in
/// row-major window order so the backward scatter is deterministic.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    argmax: Vec<usize>,
    input_dim: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(CoreError::Shape(format!(
                "pooling window {} exceeds input {h}x{w}",
                self.kernel
            )));
        }
        Ok((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Result<Array4<f64>> {
        let (b, c, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w)?;
        let mut y = Array4::zeros((b, c, oh, ow));
        let mut argmax = vec![0usize; b * c * oh * ow];
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ky in 0..self.kernel {
                            for kx in 0..self.kernel {
                                let iy = oy * self.stride + ky;
                                let ix = ox * self.stride + kx;
                                let v = x[[bi, ci, iy, ix]];
                                if v > best {
                                    best = v;
                                    best_idx = iy * w + ix;
                                }
                            }
                        }
                        y[[bi, ci, oy, ox]] = best;
                        argmax[((bi * c + ci) * oh + oy) * ow + ox] = best_idx;
                    }
                }
            }
        }
        if train {
            self.cache = Some(PoolCache {
                argmax,
                input_dim: (b, c, h, w),
                out_hw: (oh, ow),
            });
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("backward without cached forward");
        let (b, c, h, w) = cache.input_dim;
        let (oh, ow) = cache.out_hw;
        let mut dx = Array4::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = cache.argmax[((bi * c + ci) * oh + oy) * ow + ox];
                        dx[[bi, ci, idx / w, idx % w]] += dy[[bi, ci, oy, ox]];
                    }
                }
            }
        }
        dx
    }
}

/// Per-channel batch normalization. Training mode normalizes by batch
/// statistics (biased variance) and updates the running buffers with the
/// unbiased variance; evaluation mode and frozen layers use the running
/// buffers and leave them untouched.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub grad_gamma: Array1<f64>,
    pub grad_beta: Array1<f64>,
    cache: Option<NormCache>,
}

#[derive(Debug, Clone)]
struct NormCache {
    x_hat: Array4<f64>,
    istd: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Result<Array4<f64>> {
        let (b, c, h, w) = x.dim();
        if c != self.channels {
            return Err(CoreError::Shape(format!(
                "batch norm expects {} channels, got {c}",
                self.channels
            )));
        }
        let mut y = Array4::zeros((b, c, h, w));
        if train {
            let n = (b * h * w) as f64;
            let mut x_hat = Array4::zeros((b, c, h, w));
            let mut istd_all = Array1::zeros(c);
            for ci in 0..c {
                let slice = x.slice(s![.., ci, .., ..]);
                let mean = slice.sum() / n;
                let var = slice.mapv(|v| (v - mean) * (v - mean)).sum() / n;
                let istd = 1.0 / (var + self.eps).sqrt();
                istd_all[ci] = istd;
                for bi in 0..b {
                    for yy in 0..h {
                        for xx in 0..w {
                            let xh = (x[[bi, ci, yy, xx]] - mean) * istd;
                            x_hat[[bi, ci, yy, xx]] = xh;
                            y[[bi, ci, yy, xx]] = self.gamma[ci] * xh + self.beta[ci];
                        }
                    }
                }
                let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                self.running_var[ci] =
                    (1.0 - self.momentum) * self.running_var[ci] + self.momentum * unbiased;
            }
            self.cache = Some(NormCache {
                x_hat,
                istd: istd_all,
            });
        } else {
            for ci in 0..c {
                let istd = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                let mean = self.running_mean[ci];
                for bi in 0..b {
                    for yy in 0..h {
                        for xx in 0..w {
                            y[[bi, ci, yy, xx]] =
                                self.gamma[ci] * (x[[bi, ci, yy, xx]] - mean) * istd
                                    + self.beta[ci];
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("backward without cached forward");
        let (b, c, h, w) = dy.dim();
        let n = (b * h * w) as f64;
        let mut dx = Array4::zeros((b, c, h, w));
        for ci in 0..c {
            let dy_c = dy.slice(s![.., ci, .., ..]);
            let xh_c = cache.x_hat.slice(s![.., ci, .., ..]);
            let sum_dy = dy_c.sum();
            let sum_dy_xh = (&dy_c * &xh_c).sum();
            self.grad_gamma[ci] += sum_dy_xh;
            self.grad_beta[ci] += sum_dy;
            let scale = self.gamma[ci] * cache.istd[ci] / n;
            for bi in 0..b {
                for yy in 0..h {
                    for xx in 0..w {
                        dx[[bi, ci, yy, xx]] = scale
                            * (n * dy[[bi, ci, yy, xx]]
                                - sum_dy
                                - cache.x_hat[[bi, ci, yy, xx]] * sum_dy_xh);
                    }
                }
            }
        }
        dx
    }
}

/// Leaky rectifier; slope 0 makes it a plain ReLU.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    cache: Option<Array4<f64>>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let y = x.mapv(|v| if v > 0.0 { v } else { self.slope * v });
        if train {
            self.cache = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let x = self.cache.take().expect("backward without cached forward");
        let mut dx = dy.clone();
        dx.zip_mut_with(&x, |d, &v| {
            if v <= 0.0 {
                *d *= self.slope;
            }
        });
        dx
    }
}
