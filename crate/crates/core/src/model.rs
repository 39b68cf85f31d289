//! Encoder/decoder pair and the ELBO loss.
//!
//! Encoder: two stride-2 3×3×3 convolutions, a bottleneck dense layer and two
//! dense heads for the posterior mean and log-variance. Decoder: a dense layer
//! reshaped to `decoder_channels × (T/4)×(H/4)×(W/4)`, two stride-2 transposed
//! convolutions and a final stride-1 transposed convolution with one filter.
//! Every hidden layer is followed by ReLU; the output goes through softplus
//! (or ReLU) so decoded rainfall is never negative.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv_output_extent, conv_transpose_output_extent, Graph, Scalar, Tensor, Var};

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const DOWNSAMPLE_STAGES: usize = 2;
/// Bounds applied to the log-variance head before it is exponentiated.
pub const LOG_VAR_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Softplus,
    Relu,
}

impl OutputActivation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Softplus => "softplus",
            Self::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(Self::Softplus),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Config(format!(
                "unknown output activation {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `(T, H, W)` of one cube.
    pub input_extent: [usize; 3],
    pub conv_channels: usize,
    pub bottleneck_width: usize,
    pub latent_dim: usize,
    pub decoder_channels: usize,
    /// Zero padding of every 3×3×3 layer.
    pub padding: usize,
    pub output_activation: OutputActivation,
}

impl ModelConfig {
    /// 32³ input, 128 conv channels, 500-wide bottleneck, 30 latent dims, 256 decoder maps.
    pub fn paper() -> Self {
        Self {
            input_extent: [32, 32, 32],
            conv_channels: 128,
            bottleneck_width: 500,
            latent_dim: 30,
            decoder_channels: 256,
            padding: 1,
            output_activation: OutputActivation::Softplus,
        }
    }

    /// Single-core scale: 16³ input, 8 latent dims and narrow layers.
    pub fn desk() -> Self {
        Self {
            input_extent: [16, 16, 16],
            conv_channels: 8,
            bottleneck_width: 64,
            latent_dim: 8,
            decoder_channels: 8,
            padding: 1,
            output_activation: OutputActivation::Softplus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("conv_channels", self.conv_channels),
            ("bottleneck_width", self.bottleneck_width),
            ("latent_dim", self.latent_dim),
            ("decoder_channels", self.decoder_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for &e in &self.input_extent {
            if e == 0 || e % 4 != 0 {
                return Err(Error::Config(format!(
                    "input extent {:?} must be positive multiples of 4",
                    self.input_extent
                )));
            }
            let mut n = e;
            for _ in 0..DOWNSAMPLE_STAGES {
                n = conv_output_extent(n, KERNEL, STRIDE, self.padding).unwrap_or(0);
            }
            if n != e / 4 {
                return Err(Error::Config(format!(
                    "padding {} does not halve extent {e} at each stride-{STRIDE} stage",
                    self.padding
                )));
            }
            if conv_transpose_output_extent(e, KERNEL, 1, self.padding, 0) != Some(e) {
                return Err(Error::Config(format!(
                    "padding {} does not preserve extent {e} in the output layer",
                    self.padding
                )));
            }
        }
        Ok(())
    }

    pub fn reduced_extent(&self) -> [usize; 3] {
        self.input_extent.map(|e| e / 4)
    }

    pub fn pixel_count(&self) -> usize {
        self.input_extent.iter().product()
    }

    fn reduced_len(&self) -> usize {
        self.reduced_extent().iter().product()
    }

    /// `output_padding` that maps extent `from` back up to `to` with a stride-2 transposed conv.
    fn output_padding(&self, from: usize, to: usize) -> usize {
        let base = (from - 1) * STRIDE + KERNEL - 2 * self.padding;
        to - base
    }
}

/// The nine weight-bearing layers, in parameter-table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Conv1_1,
    Conv1_2,
    DenseBn,
    DenseMu,
    DenseLogVar,
    DecDense,
    ConvT2_1,
    ConvT2_2,
    ConvT2_3,
}

impl Layer {
    pub const ALL: [Layer; 9] = [
        Layer::Conv1_1,
        Layer::Conv1_2,
        Layer::DenseBn,
        Layer::DenseMu,
        Layer::DenseLogVar,
        Layer::DecDense,
        Layer::ConvT2_1,
        Layer::ConvT2_2,
        Layer::ConvT2_3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Conv1_1 => "conv1_1",
            Layer::Conv1_2 => "conv1_2",
            Layer::DenseBn => "dense_bn",
            Layer::DenseMu => "dense_mu",
            Layer::DenseLogVar => "dense_logvar",
            Layer::DecDense => "dec_dense",
            Layer::ConvT2_1 => "convt2_1",
            Layer::ConvT2_2 => "convt2_2",
            Layer::ConvT2_3 => "convt2_3",
        }
    }

    /// `(weight shape, bias length, fan-in used for initialization)`.
    pub fn shapes(self, cfg: &ModelConfig) -> (Vec<usize>, usize, usize) {
        let (c, b, k, cd) = (
            cfg.conv_channels,
            cfg.bottleneck_width,
            cfg.latent_dim,
            cfg.decoder_channels,
        );
        let kv = KERNEL * KERNEL * KERNEL;
        let flat = c * cfg.reduced_len();
        let stride3 = STRIDE * STRIDE * STRIDE;
        let kk = [KERNEL; 3];
        let conv = |o: usize, i: usize| alloc::vec![o, i, kk[0], kk[1], kk[2]];
        match self {
            Layer::Conv1_1 => (conv(c, 1), c, kv),
            Layer::Conv1_2 => (conv(c, c), c, c * kv),
            Layer::DenseBn => (alloc::vec![b, flat], b, flat),
            Layer::DenseMu | Layer::DenseLogVar => (alloc::vec![k, b], k, b),
            Layer::DecDense => (
                alloc::vec![cd * cfg.reduced_len(), k],
                cd * cfg.reduced_len(),
                k,
            ),
            // transposed kernels are [C_in, C_out, ...]; a stride-s output sees 1/s³ of the taps
            Layer::ConvT2_1 => (conv(cd, c), c, (cd * kv / stride3).max(1)),
            Layer::ConvT2_2 => (conv(c, c), c, (c * kv / stride3).max(1)),
            Layer::ConvT2_3 => (conv(c, 1), 1, c * kv),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All network parameters; shapes are fixed by a [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams<T = f32> {
    layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> VaeParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = Layer::ALL
            .iter()
            .map(|l| {
                let (ws, bl, _) = l.shapes(cfg);
                LayerParams {
                    weight: Tensor::zeros(&ws),
                    bias: Tensor::zeros(&[bl]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Uniform He initialization `U(−√(6/fan_in), √(6/fan_in))` for weights, zero biases.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let layers = Layer::ALL
            .iter()
            .map(|l| {
                let (ws, bl, fan_in) = l.shapes(cfg);
                let bound = Float::sqrt(6.0 / fan_in as f64);
                let weight =
                    Tensor::from_fn(&ws, |_| T::of((2.0 * rng.random::<f64>() - 1.0) * bound));
                LayerParams {
                    weight,
                    bias: Tensor::zeros(&[bl]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Rebuilds parameters from a named table, checking every shape against `cfg`.
    pub fn from_named(cfg: &ModelConfig, mut named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(Layer::ALL.len());
        for l in Layer::ALL {
            let (ws, bl, _) = l.shapes(cfg);
            let mut take = |suffix: &str, shape: &[usize]| -> Result<Tensor<T>> {
                let name = format!("{}.{suffix}", l.name());
                let pos = named
                    .iter()
                    .position(|(n, _)| *n == name)
                    .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
                let (_, t) = named.swap_remove(pos);
                if t.shape() != shape {
                    return Err(Error::Shape {
                        op: "load parameters",
                        detail: format!(
                            "{name} has shape {:?}, config requires {shape:?}",
                            t.shape()
                        ),
                    });
                }
                Ok(t)
            };
            let weight = take("weight", &ws)?;
            let bias = take("bias", &[bl])?;
            layers.push(LayerParams { weight, bias });
        }
        if let Some((extra, _)) = named.first() {
            return Err(Error::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Self { layers })
    }

    pub fn layer(&self, l: Layer) -> &LayerParams<T> {
        &self.layers[l as usize]
    }

    pub fn layer_mut(&mut self, l: Layer) -> &mut LayerParams<T> {
        &mut self.layers[l as usize]
    }

    /// `(name, tensor)` pairs in table order: each layer's weight then bias.
    pub fn named(&self) -> impl Iterator<Item = (String, &Tensor<T>)> + '_ {
        Layer::ALL.iter().zip(&self.layers).flat_map(|(l, p)| {
            [
                (format!("{}.weight", l.name()), &p.weight),
                (format!("{}.bias", l.name()), &p.bias),
            ]
        })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> + '_ {
        self.layers.iter().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> VaeParams<U> {
        VaeParams {
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams {
                    weight: p.weight.cast(),
                    bias: p.bias.cast(),
                })
                .collect(),
        }
    }

    /// Places every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .layers
            .iter()
            .map(|p| {
                (
                    g.leaf(p.weight.clone(), trainable),
                    g.leaf(p.bias.clone(), trainable),
                )
            })
            .collect();
        BoundParams { vars }
    }
}

/// Graph handles of a bound [`VaeParams`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<(Var, Var)>,
}

impl BoundParams {
    /// Pairs up `[w0, b0, w1, b1, ...]` handles in table order.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert_eq!(
            vars.len(),
            2 * Layer::ALL.len(),
            "expected a weight and bias per layer"
        );
        Self {
            vars: vars.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
        }
    }

    pub fn layer(&self, l: Layer) -> (Var, Var) {
        self.vars[l as usize]
    }

    /// Handles in the same order as [`VaeParams::tensors`].
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Posterior parameters for a batch: `mu` and `log_var` are `[N, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStats<T = f32> {
    pub mu: Tensor<T>,
    pub log_var: Tensor<T>,
}

impl<T: Scalar> LatentStats<T> {
    pub fn new(mu: Tensor<T>, log_var: Tensor<T>) -> Result<Self> {
        if mu.shape() != log_var.shape() || mu.shape().len() != 2 {
            return Err(Error::Shape {
                op: "latent stats",
                detail: format!(
                    "mu {:?} and log_var {:?} must both be [N, k]",
                    mu.shape(),
                    log_var.shape()
                ),
            });
        }
        Ok(Self { mu, log_var })
    }

    pub fn batch(&self) -> usize {
        self.mu.shape()[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.shape()[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub rec: f64,
    pub reg: f64,
    pub beta: f64,
}

/// Graph handles of the three loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub rec: Var,
    pub reg: Var,
}

fn check_input<T: Scalar>(g: &Graph<T>, cfg: &ModelConfig, x: Var) -> Result<usize> {
    let s = g.shape(x);
    let [t, h, w] = cfg.input_extent;
    if s.len() != 5 || s[1] != 1 || s[2..] != [t, h, w] {
        return Err(Error::Config(format!(
            "input batch {s:?} does not match model input [N, 1, {t}, {h}, {w}]"
        )));
    }
    Ok(s[0])
}

/// Encoder on the tape; returns `(μ, clamped log σ²)` handles of shape `[N, k]`.
pub fn encode_graph<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    x: Var,
) -> Result<(Var, Var)> {
    let n = check_input(g, cfg, x)?;
    let (w, b) = p.layer(Layer::Conv1_1);
    let h = g.conv3(x, w, b, STRIDE, cfg.padding)?;
    let h = g.relu(h);
    let (w, b) = p.layer(Layer::Conv1_2);
    let h = g.conv3(h, w, b, STRIDE, cfg.padding)?;
    let h = g.relu(h);
    let flat = g.shape(h)[1..].iter().product::<usize>();
    let h = g.reshape(h, &[n, flat])?;
    let (w, b) = p.layer(Layer::DenseBn);
    let h = g.dense(h, w, b)?;
    let h = g.relu(h);
    let (w, b) = p.layer(Layer::DenseMu);
    let mu = g.dense(h, w, b)?;
    let (w, b) = p.layer(Layer::DenseLogVar);
    let lv = g.dense(h, w, b)?;
    let lv = g.clamp(lv, T::of(LOG_VAR_RANGE.0), T::of(LOG_VAR_RANGE.1));
    Ok((mu, lv))
}

/// Decoder on the tape; `z` is `[N, k]`, the result `[N, 1, T, H, W]`.
pub fn decode_graph<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    z: Var,
) -> Result<Var> {
    let s = g.shape(z);
    if s.len() != 2 || s[1] != cfg.latent_dim {
        return Err(Error::Shape {
            op: "decode",
            detail: format!(
                "latent batch {s:?} does not match latent_dim {}",
                cfg.latent_dim
            ),
        });
    }
    let n = s[0];
    let [rt, rh, rw] = cfg.reduced_extent();
    let [t, _, _] = cfg.input_extent;
    let (w, b) = p.layer(Layer::DecDense);
    let h = g.dense(z, w, b)?;
    let h = g.reshape(h, &[n, cfg.decoder_channels, rt, rh, rw])?;
    let h = g.relu(h);
    let (w, b) = p.layer(Layer::ConvT2_1);
    let h = g.conv3_transpose(
        h,
        w,
        b,
        STRIDE,
        cfg.padding,
        cfg.output_padding(t / 4, t / 2),
    )?;
    let h = g.relu(h);
    let (w, b) = p.layer(Layer::ConvT2_2);
    let h = g.conv3_transpose(h, w, b, STRIDE, cfg.padding, cfg.output_padding(t / 2, t))?;
    let h = g.relu(h);
    let (w, b) = p.layer(Layer::ConvT2_3);
    let h = g.conv3_transpose(h, w, b, 1, cfg.padding, 0)?;
    let out = match cfg.output_activation {
        OutputActivation::Softplus => g.softplus(h),
        OutputActivation::Relu => g.relu(h),
    };
    debug_assert_eq!(g.shape(out)[2..], cfg.input_extent);
    Ok(out)
}

/// `rec = mean (x − x̂)²`, `reg = KL`, `total = rec + β·reg`.
pub fn elbo_graph<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    x_hat: Var,
    mu: Var,
    log_var: Var,
    beta: f64,
) -> Result<LossVars> {
    let rec = g.mse(x, x_hat)?;
    let reg = g.kl_normal(mu, log_var)?;
    let weighted = g.scale(reg, T::of(beta));
    let total = g.add(rec, weighted)?;
    Ok(LossVars { total, rec, reg })
}

/// Full forward pass to the loss: encode, reparameterize with `noise`, decode, ELBO.
pub fn forward_loss<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    x: Var,
    noise: &Tensor<T>,
    beta: f64,
) -> Result<LossVars> {
    let (mu, lv) = encode_graph(g, p, cfg, x)?;
    let z = g.reparameterize(mu, lv, noise)?;
    let x_hat = decode_graph(g, p, cfg, z)?;
    elbo_graph(g, x, x_hat, mu, lv, beta)
}

pub fn encode<T: Scalar>(
    x: &Tensor<T>,
    params: &VaeParams<T>,
    cfg: &ModelConfig,
) -> Result<LatentStats<T>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let (mu, lv) = encode_graph(&mut g, &p, cfg, xv)?;
    LatentStats::new(g.value(mu).clone(), g.value(lv).clone())
}

pub fn decode<T: Scalar>(
    z: &Tensor<T>,
    params: &VaeParams<T>,
    cfg: &ModelConfig,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let zv = g.constant(z.clone());
    let out = decode_graph(&mut g, &p, cfg, zv)?;
    Ok(g.value(out).clone())
}

/// `z = μ + exp(½·log σ²) ⊙ noise`.
pub fn reparameterize<T: Scalar>(stats: &LatentStats<T>, noise: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let mu = g.constant(stats.mu.clone());
    let lv = g.constant(stats.log_var.clone());
    let z = g.reparameterize(mu, lv, noise)?;
    Ok(g.value(z).clone())
}

/// `Σ_k ½(μ_k² + σ_k² − 1 − log σ_k²)`, averaged over the batch.
pub fn kl_normal<T: Scalar>(stats: &LatentStats<T>) -> f64 {
    crate::tensor::graph_kl_sum(stats.mu.data(), stats.log_var.data()) / stats.batch() as f64
}

pub fn elbo_loss<T: Scalar>(
    x: &Tensor<T>,
    x_hat: &Tensor<T>,
    stats: &LatentStats<T>,
    beta: f64,
) -> Result<LossBreakdown> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape {
            op: "elbo_loss",
            detail: format!("{:?} vs {:?}", x.shape(), x_hat.shape()),
        });
    }
    let rec = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| {
            let r = a.widen() - b.widen();
            r * r
        })
        .sum::<f64>()
        / x.numel() as f64;
    let reg = kl_normal(stats);
    Ok(LossBreakdown {
        total: rec + beta * reg,
        rec,
        reg,
        beta,
    })
}
