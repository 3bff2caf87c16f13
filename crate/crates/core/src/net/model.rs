use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::SaversConfig;
use crate::error::{Result, SaversError};
use crate::kernel::{
    conv2d, conv2d_backward, dropout, dropout_backward, maxpool2, maxpool2_backward, relu, relu_backward,
    transposed_conv2d, transposed_conv2d_backward, ConvSpec, DropoutMask, DropoutMode, PoolArgmax,
};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

/// Spatial reduction factor of the encoder (four 2x2 poolings).
pub const GRID: usize = 16;

pub(crate) fn mid_conv_spec() -> ConvSpec {
    ConvSpec {
        kernel_h: 4,
        kernel_w: 4,
        stride: 1,
        pad_top: 1,
        pad_bottom: 2,
        pad_left: 1,
        pad_right: 2,
    }
}

pub(crate) fn decoder_spec() -> ConvSpec {
    ConvSpec::square(2 * GRID, GRID / 2).with_stride(GRID)
}

#[derive(Debug, Clone)]
enum Stage {
    Conv {
        weight: usize,
        bias: usize,
        spec: ConvSpec,
        relu: bool,
    },
    Pool,
    Dropout,
}

#[derive(Debug, Clone)]
enum StageCache {
    Conv { input: Tensor, pre_activation: Option<Tensor> },
    Pool { argmax: PoolArgmax, input_shape: Vec<usize> },
    Dropout { mask: DropoutMask },
}

/// Intermediate values of one forward pass, consumed by [`SaversModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stages: Vec<StageCache>,
    grid: Tensor,
}

/// Outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Per-cell class logits, `[N_c, H/16, W/16]`.
    pub logit_grid: Tensor,
    /// Per-pixel class scores, `[N_c, H, W]`.
    pub score_map: Tensor,
    pub cache: ForwardCache,
}

/// Named tensors in the model's parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        ParamSet { entries }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            entries: other
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn by_index(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    fn by_index_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that names and shapes agree entry by entry.
    pub fn expect_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(SaversError::Corruption(format!(
                "parameter sets differ in length: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(SaversError::Corruption(format!(
                    "parameter mismatch: {na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += alpha * other`, entry by entry.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) -> Result<()> {
        self.expect_same_layout(other)?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// The encoder/decoder network: four `[3x3 conv, ReLU] x2 + 2x2 max-pool`
/// blocks, a 4x4 conv with ReLU and dropout, a linear 1x1 classifier, and a
/// 16x transposed-convolution decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SaversModel {
    config: SaversConfig,
    params: ParamSet,
}

/// `(name, shape)` of every parameter implied by `config`, in order.
pub fn parameter_layout(config: &SaversConfig) -> Vec<(String, Vec<usize>)> {
    let mut layout = Vec::new();
    let mut push_conv = |name: String, out: usize, inp: usize, k: usize| {
        layout.push((format!("{name}.weight"), vec![out, inp, k, k]));
        layout.push((format!("{name}.bias"), vec![out]));
    };
    let mut channels = config.input_channels;
    for (b, &out) in config.block_channels.iter().enumerate() {
        push_conv(format!("block{}.conv1", b + 1), out, channels, 3);
        push_conv(format!("block{}.conv2", b + 1), out, out, 3);
        channels = out;
    }
    push_conv("mid".into(), config.mid_channels, channels, 4);
    push_conv("classifier".into(), config.num_classes, config.mid_channels, 1);
    let k = 2 * GRID;
    layout.push(("decoder.weight".into(), vec![config.num_classes, config.num_classes, k, k]));
    layout
}

/// Bilinear interpolation weight at kernel offset `i` for an upsampling
/// factor of [`GRID`].
pub(crate) fn bilinear_weight(i: usize) -> f64 {
    let factor = GRID as f64;
    let center = factor - 0.5;
    1.0 - (i as f64 - center).abs() / factor
}

impl SaversModel {
    /// He-normal conv weights from the init stream of `seed`, zero biases,
    /// bilinear decoder.
    pub fn build(config: SaversConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut entries = Vec::new();
        for (name, shape) in parameter_layout(&config) {
            let tensor = if name == "decoder.weight" {
                let (n, k) = (shape[0], shape[2]);
                Tensor::from_fn(&shape, |i| {
                    let (c, f) = (i / (n * k * k), (i / (k * k)) % n);
                    let (a, b) = ((i / k) % k, i % k);
                    if c == f {
                        bilinear_weight(a) * bilinear_weight(b)
                    } else {
                        0.0
                    }
                })
            } else if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
            };
            entries.push((name, tensor));
        }
        Ok(SaversModel {
            config,
            params: ParamSet::new(entries),
        })
    }

    /// Assembles a model from stored parameters, checking them against `config`.
    pub fn from_parts(config: SaversConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if layout.len() != params.len() {
            return Err(SaversError::Corruption(format!(
                "config implies {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (pn, pt)) in layout.iter().zip(params.iter()) {
            if name != pn || shape.as_slice() != pt.shape() {
                return Err(SaversError::Corruption(format!(
                    "parameter {pn} {:?} does not match expected {name} {shape:?}",
                    pt.shape()
                )));
            }
            if !pt.is_finite() {
                return Err(SaversError::Corruption(format!("parameter {pn} has non-finite values")));
            }
        }
        Ok(SaversModel { config, params })
    }

    pub fn config(&self) -> &SaversConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        let config = SaversConfig {
            dropout_rate: rate,
            ..self.config.clone()
        };
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn parameter_count(&self) -> usize {
        self.params.num_scalars()
    }

    fn stages(&self) -> Vec<Stage> {
        let mut stages = Vec::new();
        let mut idx = 0;
        let mut conv = |spec: ConvSpec, relu: bool| {
            let s = Stage::Conv {
                weight: idx,
                bias: idx + 1,
                spec,
                relu,
            };
            idx += 2;
            s
        };
        for _ in 0..4 {
            stages.push(conv(ConvSpec::square(3, 1), true));
            stages.push(conv(ConvSpec::square(3, 1), true));
            stages.push(Stage::Pool);
        }
        stages.push(conv(mid_conv_spec(), true));
        stages.push(Stage::Dropout);
        stages.push(conv(ConvSpec::square(1, 0), false));
        stages
    }

    fn decoder_weight(&self) -> &Tensor {
        self.params.by_index(self.params.len() - 1)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (c, h, w) = image.chw()?;
        if c != self.config.input_channels {
            return Err(SaversError::Dimension(format!(
                "image has {c} channels, model expects {}",
                self.config.input_channels
            )));
        }
        if h % GRID != 0 || w % GRID != 0 {
            return Err(SaversError::Dimension(format!(
                "image {h}x{w} is not a multiple of {GRID}; pad it with pad_to_grid first"
            )));
        }
        Ok(())
    }

    /// Runs the encoder. `rng` is only consulted in train mode.
    fn run_encoder<R: Rng + ?Sized>(
        &self,
        image: &Tensor,
        mode: DropoutMode,
        rng: &mut R,
        keep_cache: bool,
    ) -> Result<(Tensor, Vec<StageCache>)> {
        self.check_input(image)?;
        let mut x = image.clone();
        let mut caches = Vec::new();
        for stage in self.stages() {
            match stage {
                Stage::Conv { weight, bias, spec, relu: act } => {
                    let z = conv2d(&x, self.params.by_index(weight), self.params.by_index(bias), &spec)?;
                    let out = if act { relu(&z) } else { z.clone() };
                    if keep_cache {
                        let input = std::mem::replace(&mut x, out);
                        caches.push(StageCache::Conv {
                            input,
                            pre_activation: act.then_some(z),
                        });
                    } else {
                        x = out;
                    }
                }
                Stage::Pool => {
                    let (out, argmax) = maxpool2(&x)?;
                    if keep_cache {
                        caches.push(StageCache::Pool {
                            argmax,
                            input_shape: x.shape().to_vec(),
                        });
                    }
                    x = out;
                }
                Stage::Dropout => {
                    let (out, mask) = dropout(&x, self.config.dropout_rate, mode, rng)?;
                    if keep_cache {
                        caches.push(StageCache::Dropout { mask });
                    }
                    x = out;
                }
            }
        }
        Ok((x, caches))
    }

    /// Encoder in eval mode: `[C,H,W] -> [N_c, H/16, W/16]` class logits.
    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        let mut unused = stream_rng(0, Stream::Dropout);
        Ok(self.run_encoder(image, DropoutMode::Eval, &mut unused, false)?.0)
    }

    /// Decoder: 16x transposed convolution of the logit grid.
    pub fn decode(&self, logit_grid: &Tensor) -> Result<Tensor> {
        let (c, _, _) = logit_grid.chw()?;
        if c != self.config.num_classes {
            return Err(SaversError::Dimension(format!(
                "logit grid {:?} does not have {} class channels",
                logit_grid.shape(),
                self.config.num_classes
            )));
        }
        transposed_conv2d(logit_grid, self.decoder_weight(), &decoder_spec())
    }

    /// Full forward pass keeping everything the backward pass needs.
    pub fn forward<R: Rng + ?Sized>(&self, image: &Tensor, mode: DropoutMode, rng: &mut R) -> Result<ForwardPass> {
        let (grid, stages) = self.run_encoder(image, mode, rng, true)?;
        let score_map = self.decode(&grid)?;
        Ok(ForwardPass {
            logit_grid: grid.clone(),
            score_map,
            cache: ForwardCache { stages, grid },
        })
    }

    /// Parameter gradients given the gradient of a scalar objective with
    /// respect to the score map and, optionally, the logit grid.
    pub fn backward(&self, cache: &ForwardCache, grad_scores: &Tensor, grad_grid: Option<&Tensor>) -> Result<ParamSet> {
        let mut grads = ParamSet::zeros_like(&self.params);
        let dec_idx = self.params.len() - 1;
        let (mut g, grad_dec) =
            transposed_conv2d_backward(grad_scores, &cache.grid, self.decoder_weight(), &decoder_spec())?;
        *grads.by_index_mut(dec_idx) = grad_dec;
        if let Some(extra) = grad_grid {
            g.axpy(1.0, extra)?;
        }
        let stages = self.stages();
        if stages.len() != cache.stages.len() {
            return Err(SaversError::Corruption("forward cache does not match the model".into()));
        }
        for (stage, sc) in stages.iter().zip(&cache.stages).rev() {
            g = match (stage, sc) {
                (Stage::Conv { weight, bias, spec, .. }, StageCache::Conv { input, pre_activation }) => {
                    if let Some(z) = pre_activation {
                        g = relu_backward(&g, z)?;
                    }
                    let (gi, gk, gb) = conv2d_backward(&g, input, self.params.by_index(*weight), spec)?;
                    *grads.by_index_mut(*weight) = gk;
                    *grads.by_index_mut(*bias) = gb;
                    gi
                }
                (Stage::Pool, StageCache::Pool { argmax, input_shape }) => maxpool2_backward(&g, argmax, input_shape)?,
                (Stage::Dropout, StageCache::Dropout { mask }) => dropout_backward(&g, mask)?,
                _ => return Err(SaversError::Corruption("forward cache stage mismatch".into())),
            };
        }
        Ok(grads)
    }
}
