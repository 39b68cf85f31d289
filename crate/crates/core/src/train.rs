//! Minibatch Adam on the ELBO with a KL warm-up and early stopping on a held-out split.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::{CubeDataset, FieldCube, NormStats, Units};
use crate::error::{Error, Result};
use crate::model::{forward_loss, LossBreakdown, ModelConfig, VaeParams};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, Rng};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub warmup_epochs: usize,
    pub beta_target: f64,
    /// Ramp β linearly over the warm-up instead of switching it on at its end.
    pub warmup_ramp: bool,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    /// Global gradient-norm ceiling; `None` leaves gradients untouched.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub validation_fraction: f64,
}

/// Norm ceiling used when clipping is switched on without a value.
pub const DEFAULT_GRAD_CLIP: f64 = 5.0;

impl TrainConfig {
    /// Defaults with `beta_target = latent_dim / pixel_count` of `model`.
    pub fn for_model(model: &ModelConfig) -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            warmup_epochs: 10,
            beta_target: default_beta(model),
            warmup_ramp: false,
            early_stop_patience: 10,
            early_stop_min_delta: 1e-4,
            grad_clip: None,
            seed: 0,
            validation_fraction: 0.1,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail(format!(
                "epochs ({}) and batch size ({}) must be positive",
                self.epochs, self.batch_size
            ));
        }
        if self.warmup_epochs > self.epochs {
            return fail(format!(
                "warm-up of {} epochs exceeds the {} training epochs",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return fail(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(self.beta_target >= 0.0 && self.beta_target.is_finite()) {
            return fail(format!(
                "beta target must be finite and non-negative, got {}",
                self.beta_target
            ));
        }
        if !(self.early_stop_min_delta >= 0.0) {
            return fail(format!(
                "early-stop min delta must be non-negative, got {}",
                self.early_stop_min_delta
            ));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return fail(format!("gradient clip must be positive, got {c}"));
            }
        }
        self.adam().validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_model(&ModelConfig::paper())
    }
}

/// `latent_dim / pixel_count`.
pub fn default_beta(model: &ModelConfig) -> f64 {
    model.latent_dim as f64 / model.pixel_count() as f64
}

/// β applied during `epoch` (zero-based).
pub fn beta_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch >= cfg.warmup_epochs {
        cfg.beta_target
    } else if cfg.warmup_ramp {
        cfg.beta_target * epoch as f64 / cfg.warmup_epochs as f64
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub beta: f64,
    pub train_total: f64,
    pub train_rec: f64,
    pub train_reg: f64,
    /// Validation loss at `beta_target`, so it is comparable across epochs.
    pub val_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }
}

/// Splits `n` indices into `(train, validation)` with `round(fraction·n)` held out.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Config(format!(
            "validation fraction {fraction} of {n} cubes leaves an empty validation or training split"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed, rng::stream::VALIDATION_SPLIT));
    let (val, train) = perm.split_at(n_val);
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Stacks the selected cubes into an `[N, 1, T, H, W]` tensor.
pub fn batch_tensor(cubes: &[FieldCube], indices: &[usize]) -> Result<Tensor<f32>> {
    let first = cubes
        .get(*indices.first().ok_or(Error::Empty("batch"))?)
        .ok_or(Error::Empty("cube set"))?;
    let [t, h, w] = first.extent();
    let mut data = Vec::with_capacity(indices.len() * t * h * w);
    for &i in indices {
        data.extend_from_slice(cubes[i].values());
    }
    Tensor::new(&[indices.len(), 1, t, h, w], data)
}

fn noise(rng: &mut Rng, n: usize, k: usize) -> Tensor<f32> {
    Tensor::from_fn(&[n, k], |_| rng.sample::<f32, _>(StandardNormal))
}

/// Loss of `params` on `cubes` with fixed `noise`, averaged per sample.
fn evaluate(
    params: &VaeParams<f32>,
    model: &ModelConfig,
    cubes: &[FieldCube],
    indices: &[usize],
    noise: &Tensor<f32>,
    batch_size: usize,
    beta: f64,
) -> Result<LossBreakdown> {
    let k = model.latent_dim;
    let mut acc = Accumulator::default();
    for (b, chunk) in indices.chunks(batch_size).enumerate() {
        let x = batch_tensor(cubes, chunk)?;
        let start = b * batch_size * k;
        let eps = Tensor::new(
            &[chunk.len(), k],
            noise.data()[start..start + chunk.len() * k].to_vec(),
        )?;
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let xv = g.constant(x);
        let loss = forward_loss(&mut g, &p, model, xv, &eps, beta)?;
        acc.add(&g, loss, chunk.len());
    }
    Ok(acc.mean(beta))
}

#[derive(Default)]
struct Accumulator {
    total: f64,
    rec: f64,
    reg: f64,
    count: usize,
}

impl Accumulator {
    fn add(&mut self, g: &Graph<f32>, loss: crate::model::LossVars, n: usize) {
        let w = n as f64;
        self.total += scalar(g, loss.total) * w;
        self.rec += scalar(g, loss.rec) * w;
        self.reg += scalar(g, loss.reg) * w;
        self.count += n;
    }

    fn mean(&self, beta: f64) -> LossBreakdown {
        let n = self.count as f64;
        LossBreakdown {
            total: self.total / n,
            rec: self.rec / n,
            reg: self.reg / n,
            beta,
        }
    }
}

fn scalar(g: &Graph<f32>, v: crate::tensor::Var) -> f64 {
    g.value(v).data()[0] as f64
}

/// Scales `grads` in place so their joint Euclidean norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Vec<f32>], max_norm: f64) -> f64 {
    let norm = Float::sqrt(
        grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|&v| v as f64 * v as f64)
            .sum::<f64>(),
    );
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|v| *v *= s);
    }
    norm
}

/// Trains from a seeded initialization. See [`train_with`].
pub fn train(
    dataset: &CubeDataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(VaeParams<f32>, TrainHistory)> {
    train_with(dataset, model, cfg, |_| {})
}

/// Runs the epoch loop, calling `observe` after every epoch, and returns the
/// parameters of the epoch with the lowest validation loss.
///
/// Early stopping counts epochs without a `min_delta` improvement, starting at
/// the end of the warm-up.
pub fn train_with(
    dataset: &CubeDataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<(VaeParams<f32>, TrainHistory)> {
    cfg.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dataset.units() != Some(Units::Normalized) {
        return Err(Error::Data(String::from(
            "training cubes must be normalized",
        )));
    }
    if dataset.extent() != Some(model.input_extent) {
        return Err(Error::Config(format!(
            "cube extent {:?} does not match model input {:?}",
            dataset.extent().unwrap_or_default(),
            model.input_extent
        )));
    }
    let cubes = dataset.cubes();
    let (mut train_idx, val_idx) =
        validation_split(cubes.len(), cfg.validation_fraction, cfg.seed)?;
    let k = model.latent_dim;

    let mut params = VaeParams::<f32>::init(model, &mut rng::seeded(cfg.seed, rng::stream::INIT))?;
    let names: Vec<String> = params.named().map(|(n, _)| n).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let adam = cfg.adam();
    let mut state = AdamState::new(params.tensors());
    let mut shuffle_rng = rng::seeded(cfg.seed, rng::stream::SHUFFLE);
    let mut noise_rng = rng::seeded(cfg.seed, rng::stream::TRAIN_NOISE);
    let val_noise = noise(
        &mut rng::seeded(cfg.seed, rng::stream::VAL_NOISE),
        val_idx.len(),
        k,
    );

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, VaeParams<f32>)> = None;
    let mut reference = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let beta = beta_schedule(epoch, cfg);
        train_idx.shuffle(&mut shuffle_rng);
        let mut acc = Accumulator::default();
        for (b, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            let x = batch_tensor(cubes, chunk)?;
            let eps = noise(&mut noise_rng, chunk.len(), k);
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true);
            let xv = g.constant(x);
            let loss = forward_loss(&mut g, &bound, model, xv, &eps, beta)?;
            let total = scalar(&g, loss.total);
            if !total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {total} at epoch {epoch}, batch {b}"
                )));
            }
            g.backward(loss.total)?;
            let mut grads: Vec<Vec<f32>> = bound
                .vars()
                .map(|v| g.grad(v).expect("trainable parameter").to_vec())
                .collect();
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            adam_step(params.tensors_mut(), &grad_refs, &names, &mut state, &adam)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            acc.add(&g, loss, chunk.len());
        }
        let train_loss = acc.mean(beta);
        let val = evaluate(
            &params,
            model,
            cubes,
            &val_idx,
            &val_noise,
            cfg.batch_size,
            cfg.beta_target,
        )?;
        if !val.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss {} at epoch {epoch}",
                val.total
            )));
        }
        let record = EpochRecord {
            epoch,
            beta,
            train_total: train_loss.total,
            train_rec: train_loss.rec,
            train_reg: train_loss.reg,
            val_total: val.total,
        };
        log::debug!("{record:?}");
        observe(&record);
        records.push(record);

        if best.as_ref().is_none_or(|(_, v, _)| val.total < *v) {
            best = Some((epoch, val.total, params.clone()));
        }
        if epoch + 1 >= cfg.warmup_epochs {
            if val.total < reference - cfg.early_stop_min_delta {
                reference = val.total;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }
    let stopped_epoch = records.len() - 1;
    let (best_epoch, _, best_params) = best.expect("at least one epoch ran");
    Ok((
        best_params,
        TrainHistory {
            records,
            stopped_epoch,
            best_epoch,
        },
    ))
}

/// Everything needed to decode new fields: weights, both configs and the
/// training-set normalization constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: VaeParams<f32>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub norm: NormStats,
}

impl Checkpoint {
    /// FNV-1a over the model shape, normalization constant and every weight bit.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for v in self.model.input_extent {
            h.write(&(v as u64).to_le_bytes());
        }
        for v in [
            self.model.conv_channels,
            self.model.bottleneck_width,
            self.model.latent_dim,
            self.model.decoder_channels,
            self.model.padding,
        ] {
            h.write(&(v as u64).to_le_bytes());
        }
        h.write(self.model.output_activation.as_str().as_bytes());
        h.write(&self.norm.scale().to_le_bytes());
        for (name, t) in self.params.named() {
            h.write(name.as_bytes());
            for &v in t.data() {
                h.write(&v.to_le_bytes());
            }
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        let mut h = Fnv::new();
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
        let mut h = Fnv::new();
        h.write(b"foobar");
        assert_eq!(h.finish(), 0x85944171f73967e8);
    }

    #[test]
    fn step_schedule_boundaries() {
        let cfg = TrainConfig {
            beta_target: 0.05,
            ..TrainConfig::default()
        };
        assert_eq!(beta_schedule(0, &cfg), 0.0);
        assert_eq!(beta_schedule(9, &cfg), 0.0);
        assert_eq!(beta_schedule(10, &cfg), 0.05);
        assert_eq!(beta_schedule(99, &cfg), 0.05);
    }

    #[test]
    fn ramp_schedule_rises_linearly() {
        let cfg = TrainConfig {
            beta_target: 1.0,
            warmup_epochs: 4,
            warmup_ramp: true,
            ..TrainConfig::default()
        };
        let betas: Vec<f64> = (0..6).map(|e| beta_schedule(e, &cfg)).collect();
        assert_eq!(betas, [0.0, 0.25, 0.5, 0.75, 1.0, 1.0]);
    }

    #[test]
    fn default_beta_is_latent_over_pixels() {
        assert_eq!(TrainConfig::default().beta_target, 30.0 / 32768.0);
        assert_eq!(default_beta(&ModelConfig::desk()), 8.0 / 4096.0);
    }

    #[test]
    fn validation_split_rejects_empty_sides() {
        assert!(validation_split(4, 0.1, 0).is_err());
        assert!(validation_split(2, 0.9, 0).is_err());
        let (t, v) = validation_split(100, 0.1, 0).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = alloc::vec![alloc::vec![3.0f32], alloc::vec![4.0f32]];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-7 && (g[1][0] - 0.8).abs() < 1e-7);
        let mut small = alloc::vec![alloc::vec![0.3f32]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.3);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            warmup_epochs: 101,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            grad_clip: Some(0.0),
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
