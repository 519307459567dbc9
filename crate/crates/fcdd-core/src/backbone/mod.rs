//! Convolutional backbones mapping an image batch to a low-resolution
//! latent grid, plus the receptive-field arithmetic that later sizes the
//! explanation kernels. Three named architectures cover the benchmark
//! datasets; `Custom` accepts any layer list for tests and experiments.

mod layers;
pub mod weights;

use std::path::PathBuf;

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{BatchNorm2d, Conv2d, LeakyRelu, MaxPool2d};

use crate::{CoreError, Result};

/// Convolution padding; `Same` keeps the spatial shape for odd kernels at
/// stride 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    None,
    Same,
}

/// One layer of an architecture description. Channel counts are inferred
/// from the running shape, so only convolutions name their output width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    BatchNorm,
    LeakyRelu {
        slope: f64,
    },
}

/// Architecture identifier: the named per-dataset networks or a custom
/// layer list with an optional frozen prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arch {
    /// Three convolutions with two interleaved max-pools; batch norm and
    /// leaky ReLU after the first convolution. For 28x28 grayscale.
    FmnistCnn,
    /// Three conv/norm/pool blocks then a 3x3 and a 1x1 convolution. For
    /// 32x32 color images.
    CifarCnn,
    /// The first ten feature layers of VGG11 as a frozen prefix, followed
    /// by two trainable convolutions. Expects pretrained prefix weights.
    Vgg11Fcdd,
    Custom {
        layers: Vec<LayerSpec>,
        frozen_prefix: usize,
    },
}

impl Arch {
    /// The flat layer list and how many leading layers are frozen.
    pub fn layer_specs(&self) -> (Vec<LayerSpec>, usize) {
        use LayerSpec::*;
        let conv = |out_ch, kernel| Conv {
            out_ch,
            kernel,
            stride: 1,
            padding: Padding::Same,
        };
        match self {
            Arch::FmnistCnn => (
                vec![
                    conv(8, 3),
                    BatchNorm,
                    LeakyRelu { slope: 0.01 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(32, 3),
                    MaxPool { kernel: 2, stride: 2 },
                    conv(64, 3),
                ],
                0,
            ),
            Arch::CifarCnn => (
                vec![
                    conv(32, 3),
                    BatchNorm,
                    LeakyRelu { slope: 0.01 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(64, 3),
                    BatchNorm,
                    LeakyRelu { slope: 0.01 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(128, 3),
                    BatchNorm,
                    LeakyRelu { slope: 0.01 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(256, 3),
                    Conv {
                        out_ch: 128,
                        kernel: 1,
                        stride: 1,
                        padding: Padding::None,
                    },
                ],
                0,
            ),
            Arch::Vgg11Fcdd => (
                vec![
                    conv(64, 3),
                    LeakyRelu { slope: 0.0 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(128, 3),
                    LeakyRelu { slope: 0.0 },
                    MaxPool { kernel: 2, stride: 2 },
                    conv(256, 3),
                    LeakyRelu { slope: 0.0 },
                    conv(256, 3),
                    LeakyRelu { slope: 0.0 },
                    conv(128, 3),
                    Conv {
                        out_ch: 64,
                        kernel: 1,
                        stride: 1,
                        padding: Padding::None,
                    },
                ],
                10,
            ),
            Arch::Custom {
                layers,
                frozen_prefix,
            } => (layers.clone(), *frozen_prefix),
        }
    }
}

/// How the backbone's weights are initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Pretraining {
    /// Seeded random initialization everywhere. Invalid for `Vgg11Fcdd`,
    /// whose frozen prefix would be meaningless noise without opting in.
    None,
    /// Load the frozen prefix (and any further layers present) from a
    /// weight archive.
    Archive(PathBuf),
    /// Explicitly accept a randomly initialized frozen prefix; recorded so
    /// results are never mistaken for pretrained ones.
    RandomFrozen,
}

/// Receptive field of one latent cell: `size` pixels square, cell centers
/// `jump` pixels apart, first center at pixel coordinate `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub size: usize,
    pub jump: usize,
    pub offset: f64,
}

/// Kernel geometry of one layer as seen by receptive-field composition.
#[derive(Debug, Clone, Copy)]
pub struct RfLayer {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Standard receptive-field composition: starting from a single pixel,
/// each layer grows the field by (k-1) jumps, multiplies the jump by its
/// stride, and shifts the first center by ((k-1)/2 - p) jumps.
pub fn receptive_field(layers: &[RfLayer]) -> ReceptiveField {
    let mut size = 1usize;
    let mut jump = 1usize;
    let mut offset = 0.0f64;
    for l in layers {
        size += (l.kernel - 1) * jump;
        offset += ((l.kernel - 1) as f64 / 2.0 - l.padding as f64) * jump as f64;
        jump *= l.stride;
    }
    ReceptiveField { size, jump, offset }
}

/// A batch of latent grids: `values` is (B, C', U, V) and `source_shape`
/// remembers the (H, W) the images had, which the explanation step needs.
#[derive(Debug, Clone)]
pub struct LatentBatch {
    pub values: Array4<f64>,
    pub source_shape: (usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Conv(Conv2d),
    Pool(MaxPool2d),
    Norm(BatchNorm2d),
    Act(LeakyRelu),
}

impl Layer {
    fn forward(&mut self, x: &Array4<f64>, train: bool) -> Result<Array4<f64>> {
        match self {
            Layer::Conv(l) => l.forward(x, train),
            Layer::Pool(l) => l.forward(x, train),
            Layer::Norm(l) => l.forward(x, train),
            Layer::Act(l) => Ok(l.forward(x, train)),
        }
    }

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::Pool(l) => l.backward(dy),
            Layer::Norm(l) => l.backward(dy),
            Layer::Act(l) => l.backward(dy),
        }
    }

    fn rf_layer(&self) -> RfLayer {
        match self {
            Layer::Conv(l) => RfLayer {
                kernel: l.kernel,
                stride: l.stride,
                padding: l.padding,
            },
            Layer::Pool(l) => RfLayer {
                kernel: l.kernel,
                stride: l.stride,
                padding: 0,
            },
            _ => RfLayer {
                kernel: 1,
                stride: 1,
                padding: 0,
            },
        }
    }
}

/// A built backbone: layer stack, frozen prefix, and the latent grid shape
/// its input shape produces.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub arch: Arch,
    /// Input (C, H, W) every batch must match.
    pub input_shape: (usize, usize, usize),
    /// Latent (C', U, V).
    pub out_shape: (usize, usize, usize),
    /// Layers `< frozen_prefix` never train and keep evaluation-mode
    /// normalization statistics even during training.
    pub frozen_prefix: usize,
    /// True when a frozen prefix runs on random weights by explicit opt-in.
    pub random_frozen: bool,
    pub(crate) layers: Vec<Layer>,
}

/// Build a backbone for the given architecture and input shape, seeding
/// all weight initialization. Pretrained weights are loaded when given;
/// `Vgg11Fcdd` refuses to run without them unless `RandomFrozen` opts in.
pub fn build_backbone(
    arch: &Arch,
    input_shape: (usize, usize, usize),
    pretraining: &Pretraining,
    seed: u64,
) -> Result<Backbone> {
    let (c, h, w) = input_shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(CoreError::InvalidArgument(
            "input shape must be positive in every dimension".into(),
        ));
    }
    let (specs, frozen_prefix) = arch.layer_specs();
    if !specs
        .iter()
        .any(|l| matches!(l, LayerSpec::Conv { .. }))
    {
        return Err(CoreError::InvalidArgument(
            "network must contain at least one convolution".into(),
        ));
    }
    if frozen_prefix > specs.len() {
        return Err(CoreError::InvalidArgument(format!(
            "frozen prefix {frozen_prefix} exceeds layer count {}",
            specs.len()
        )));
    }
    match (arch, pretraining) {
        (Arch::Vgg11Fcdd, Pretraining::None) => {
            return Err(CoreError::InvalidArgument(
                "this architecture expects pretrained prefix weights; \
                 pass an archive or opt in to random frozen weights"
                    .into(),
            ))
        }
        (Arch::Vgg11Fcdd, _) => {}
        (_, Pretraining::Archive(_)) => {
            return Err(CoreError::InvalidArgument(
                "pretrained weight archives apply only to the frozen-prefix architecture".into(),
            ))
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(specs.len());
    let (mut cc, mut ch, mut cw) = (c, h, w);
    for spec in &specs {
        match *spec {
            LayerSpec::Conv {
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if kernel == 0 || stride == 0 || out_ch == 0 {
                    return Err(CoreError::InvalidArgument(
                        "convolution kernel, stride, and width must be positive".into(),
                    ));
                }
                let pad = match padding {
                    Padding::None => 0,
                    Padding::Same => {
                        if kernel % 2 == 0 {
                            return Err(CoreError::InvalidArgument(format!(
                                "same padding needs an odd kernel, got {kernel}"
                            )));
                        }
                        (kernel - 1) / 2
                    }
                };
                let conv = Conv2d::new(cc, out_ch, kernel, stride, pad, &mut rng);
                let (oh, ow) = conv.out_hw(ch, cw)?;
                cc = out_ch;
                ch = oh;
                cw = ow;
                layers.push(Layer::Conv(conv));
            }
            LayerSpec::MaxPool { kernel, stride } => {
                if kernel == 0 || stride == 0 {
                    return Err(CoreError::InvalidArgument(
                        "pooling kernel and stride must be positive".into(),
                    ));
                }
                let pool = MaxPool2d::new(kernel, stride);
                let (oh, ow) = pool.out_hw(ch, cw)?;
                ch = oh;
                cw = ow;
                layers.push(Layer::Pool(pool));
            }
            LayerSpec::BatchNorm => layers.push(Layer::Norm(BatchNorm2d::new(cc))),
            LayerSpec::LeakyRelu { slope } => layers.push(Layer::Act(LeakyRelu::new(slope))),
        }
    }
    if ch > h || cw > w {
        return Err(CoreError::InvalidArgument(format!(
            "latent grid {ch}x{cw} exceeds the input resolution {h}x{w}"
        )));
    }

    let mut backbone = Backbone {
        arch: arch.clone(),
        input_shape,
        out_shape: (cc, ch, cw),
        frozen_prefix,
        random_frozen: matches!(pretraining, Pretraining::RandomFrozen),
        layers,
    };
    if let Pretraining::Archive(path) = pretraining {
        weights::load_weights(&mut backbone, path, weights::Coverage::FrozenPrefix)?;
    }
    Ok(backbone)
}

impl Backbone {
    /// Map an image batch to latent grids. `train` enables batch-statistic
    /// normalization and activation caching on the trainable suffix; the
    /// frozen prefix always runs in evaluation mode.
    pub fn forward(&mut self, images: &Array4<f64>, train: bool) -> Result<LatentBatch> {
        let (b, c, h, w) = images.dim();
        if b == 0 {
            return Err(CoreError::InvalidArgument("empty batch".into()));
        }
        if (c, h, w) != self.input_shape {
            return Err(CoreError::Shape(format!(
                "batch shape ({c},{h},{w}) does not match backbone input {:?}",
                self.input_shape
            )));
        }
        if images.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("input batch".into()));
        }
        let mut x = images.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let layer_train = train && i >= self.frozen_prefix;
            x = layer.forward(&x, layer_train)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("latent grid".into()));
        }
        Ok(LatentBatch {
            values: x,
            source_shape: (h, w),
        })
    }

    pub fn forward_eval(&mut self, images: &Array4<f64>) -> Result<LatentBatch> {
        self.forward(images, false)
    }

    /// Backpropagate a latent-grid gradient through the trainable suffix,
    /// accumulating parameter gradients. The frozen prefix is skipped: its
    /// parameters never receive gradient and need no input gradient.
    pub fn backward(&mut self, d_latent: &Array4<f64>) {
        let mut dy = d_latent.clone();
        for layer in self.layers[self.frozen_prefix..].iter_mut().rev() {
            dy = layer.backward(&dy);
        }
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers[self.frozen_prefix..] {
            match layer {
                Layer::Conv(l) => {
                    l.grad_weight.fill(0.0);
                    l.grad_bias.fill(0.0);
                }
                Layer::Norm(l) => {
                    l.grad_gamma.fill(0.0);
                    l.grad_beta.fill(0.0);
                }
                _ => {}
            }
        }
    }

    /// All trainable parameters flattened in deterministic layer order.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers[self.frozen_prefix..] {
            match layer {
                Layer::Conv(l) => {
                    out.extend(l.weight.iter());
                    out.extend(l.bias.iter());
                }
                Layer::Norm(l) => {
                    out.extend(l.gamma.iter());
                    out.extend(l.beta.iter());
                }
                _ => {}
            }
        }
        out
    }

    /// Frozen-prefix parameters (including normalization running
    /// statistics) flattened in deterministic order, for asserting that
    /// training never touches them.
    pub fn frozen_param_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers[..self.frozen_prefix] {
            match layer {
                Layer::Conv(l) => {
                    out.extend(l.weight.iter());
                    out.extend(l.bias.iter());
                }
                Layer::Norm(l) => {
                    out.extend(l.gamma.iter());
                    out.extend(l.beta.iter());
                    out.extend(l.running_mean.iter());
                    out.extend(l.running_var.iter());
                }
                _ => {}
            }
        }
        out
    }

    /// Gradients in the same order as [`Backbone::param_vector`].
    pub fn grad_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers[self.frozen_prefix..] {
            match layer {
                Layer::Conv(l) => {
                    out.extend(l.grad_weight.iter());
                    out.extend(l.grad_bias.iter());
                }
                Layer::Norm(l) => {
                    out.extend(l.grad_gamma.iter());
                    out.extend(l.grad_beta.iter());
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_param_vector(&mut self, params: &[f64]) -> Result<()> {
        let mut it = params.iter();
        let mut take = |dst: &mut f64| -> Result<()> {
            *dst = *it.next().ok_or_else(|| {
                CoreError::InvalidArgument("parameter vector too short".into())
            })?;
            Ok(())
        };
        for layer in &mut self.layers[self.frozen_prefix..] {
            match layer {
                Layer::Conv(l) => {
                    for v in l.weight.iter_mut() {
                        take(v)?;
                    }
                    for v in l.bias.iter_mut() {
                        take(v)?;
                    }
                }
                Layer::Norm(l) => {
                    for v in l.gamma.iter_mut() {
                        take(v)?;
                    }
                    for v in l.beta.iter_mut() {
                        take(v)?;
                    }
                }
                _ => {}
            }
        }
        if it.next().is_some() {
            return Err(CoreError::InvalidArgument(
                "parameter vector too long".into(),
            ));
        }
        Ok(())
    }

    /// Receptive field of one latent cell in input pixels.
    pub fn receptive_field(&self) -> ReceptiveField {
        let rf_layers: Vec<RfLayer> = self.layers.iter().map(Layer::rf_layer).collect();
        receptive_field(&rf_layers)
    }
}
