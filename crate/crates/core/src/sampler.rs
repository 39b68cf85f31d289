//! Latent-locus sampling and decoding into physical units.
//!
//! Two loci of the standard-normal prior steer synthesis: scaled mode draws
//! `z ~ N(0, σ²I)` and tail mode draws each coordinate from `N(0, 1)`
//! restricted to `|v| ≥ t`. Scaled mode draws `ε ~ N(0, 1)` and returns `σ·ε`,
//! so batches for different σ under one seed share their underlying noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::{denormalize_value, FieldCube, Units};
use crate::error::{Error, Result};
use crate::model::decode;
use crate::rng;
use crate::tensor::Tensor;
use crate::train::Checkpoint;

/// Largest tail threshold accepted; beyond it the two-sided acceptance
/// probability `2Φ(−t)` drops below 1e-9.
pub const MAX_TAIL_THRESHOLD: f64 = 6.0;

/// Cubes decoded per forward pass.
const DECODE_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplerMode {
    Scaled { sigma: f64 },
    Tail { threshold: f64 },
}

impl SamplerMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Scaled { .. } => "scaled",
            Self::Tail { .. } => "tail",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub n: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn scaled(sigma: f64, n: usize, seed: u64) -> Self {
        Self {
            mode: SamplerMode::Scaled { sigma },
            n,
            seed,
        }
    }

    pub fn tail(threshold: f64, n: usize, seed: u64) -> Self {
        Self {
            mode: SamplerMode::Tail { threshold },
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config(String::from(
                "sample count must be at least 1",
            )));
        }
        match self.mode {
            SamplerMode::Scaled { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("sigma must be positive and finite, got {sigma}")),
            ),
            SamplerMode::Tail { threshold } if !(threshold >= 0.0) => Err(Error::Config(format!(
                "tail threshold must be non-negative, got {threshold}"
            ))),
            SamplerMode::Tail { threshold } if threshold > MAX_TAIL_THRESHOLD => {
                Err(Error::TailThreshold(threshold))
            }
            _ => Ok(()),
        }
    }
}

fn validate(k: usize, cfg: &SamplerConfig) -> Result<()> {
    if k == 0 {
        return Err(Error::Config(String::from(
            "latent dimension must be positive",
        )));
    }
    cfg.validate()
}

/// `n × k` entries `σ·ε` with `ε` i.i.d. standard normal.
pub fn sample_scaled(k: usize, cfg: &SamplerConfig) -> Result<Tensor<f32>> {
    validate(k, cfg)?;
    let SamplerMode::Scaled { sigma } = cfg.mode else {
        return Err(Error::Config(String::from(
            "sample_scaled needs a scaled-mode config",
        )));
    };
    let mut r = rng::seeded(cfg.seed, rng::stream::SAMPLER);
    Tensor::new(
        &[cfg.n, k],
        (0..cfg.n * k)
            .map(|_| (sigma * r.sample::<f64, _>(StandardNormal)) as f32)
            .collect(),
    )
}

/// Counts from the inner rejection loop of [`sample_tail_with_stats`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TailStats {
    pub draws: u64,
    pub accepted: u64,
}

impl TailStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.draws as f64
    }
}

/// `n × k` coordinates from the standard normal restricted to `|v| ≥ t`.
pub fn sample_tail(k: usize, cfg: &SamplerConfig) -> Result<Tensor<f32>> {
    sample_tail_with_stats(k, cfg).map(|(t, _)| t)
}

pub fn sample_tail_with_stats(k: usize, cfg: &SamplerConfig) -> Result<(Tensor<f32>, TailStats)> {
    validate(k, cfg)?;
    let SamplerMode::Tail { threshold } = cfg.mode else {
        return Err(Error::Config(String::from(
            "sample_tail needs a tail-mode config",
        )));
    };
    let mut r = rng::seeded(cfg.seed, rng::stream::SAMPLER);
    let mut stats = TailStats {
        draws: 0,
        accepted: 0,
    };
    let mut out = Vec::with_capacity(cfg.n * k);
    for _ in 0..cfg.n * k {
        let v = loop {
            let v: f64 = r.sample(StandardNormal);
            stats.draws += 1;
            // compare after rounding so the stored value honours the bound
            if (v as f32).abs() as f64 >= threshold {
                break v as f32;
            }
        };
        stats.accepted += 1;
        out.push(v);
    }
    assert!(
        out.iter().all(|v| v.abs() as f64 >= threshold),
        "tail sample inside (-t, t)"
    );
    Ok((Tensor::new(&[cfg.n, k], out)?, stats))
}

/// Latents for whichever mode `cfg` selects.
pub fn sample_latents(k: usize, cfg: &SamplerConfig) -> Result<Tensor<f32>> {
    match cfg.mode {
        SamplerMode::Scaled { .. } => sample_scaled(k, cfg),
        SamplerMode::Tail { .. } => sample_tail(k, cfg),
    }
}

/// Where a batch came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config: SamplerConfig,
    /// [`Checkpoint::fingerprint`] of the decoder used.
    pub checkpoint_fingerprint: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisBatch {
    /// `n × k`.
    pub latents: Tensor<f32>,
    /// Decoded cubes in mm/day.
    pub fields: Vec<FieldCube>,
    pub provenance: Provenance,
}

impl SynthesisBatch {
    /// Mean precipitation over every pixel of the batch.
    pub fn pixel_mean(&self) -> f64 {
        let n: usize = self.fields.iter().map(|c| c.values().len()).sum();
        self.fields
            .iter()
            .flat_map(|c| c.values())
            .map(|&v| v as f64)
            .sum::<f64>()
            / n as f64
    }
}

/// Draws latents per `cfg` and decodes them with `ckpt`.
pub fn synthesize(ckpt: &Checkpoint, cfg: &SamplerConfig) -> Result<SynthesisBatch> {
    let latents = sample_latents(ckpt.model.latent_dim, cfg)?;
    synthesize_from(ckpt, latents, *cfg)
}

/// Decodes caller-supplied latents; `latents` must be `n × latent_dim`.
pub fn synthesize_from(
    ckpt: &Checkpoint,
    latents: Tensor<f32>,
    config: SamplerConfig,
) -> Result<SynthesisBatch> {
    let k = ckpt.model.latent_dim;
    let s = latents.shape();
    if s.len() != 2 || s[1] != k {
        return Err(Error::Shape {
            op: "synthesize",
            detail: format!("latents {s:?} do not match checkpoint latent_dim {k}"),
        });
    }
    if !latents.all_finite() {
        return Err(Error::NonFinite(String::from("latent batch")));
    }
    let n = s[0];
    let extent = ckpt.model.input_extent;
    let pixels = ckpt.model.pixel_count();
    let mut fields = Vec::with_capacity(n);
    for start in (0..n).step_by(DECODE_BATCH) {
        let end = (start + DECODE_BATCH).min(n);
        let z = Tensor::new(
            &[end - start, k],
            latents.data()[start * k..end * k].to_vec(),
        )?;
        let x = decode(&z, &ckpt.params, &ckpt.model)?;
        for cube in x.data().chunks_exact(pixels) {
            let values = cube
                .iter()
                .map(|&v| denormalize_value(v, ckpt.norm).max(0.0))
                .collect();
            fields.push(FieldCube::new(extent, values, Units::Physical)?);
        }
    }
    Ok(SynthesisBatch {
        latents,
        fields,
        provenance: Provenance {
            config,
            checkpoint_fingerprint: ckpt.fingerprint(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_mismatch_is_rejected() {
        assert!(sample_scaled(3, &SamplerConfig::tail(1.0, 4, 0)).is_err());
        assert!(sample_tail(3, &SamplerConfig::scaled(1.0, 4, 0)).is_err());
    }

    #[test]
    fn config_guards() {
        assert!(SamplerConfig::scaled(0.0, 1, 0).validate().is_err());
        assert!(SamplerConfig::scaled(1e-12, 1, 0).validate().is_ok());
        assert!(SamplerConfig::scaled(1.0, 0, 0).validate().is_err());
        assert!(SamplerConfig::tail(-0.5, 1, 0).validate().is_err());
        assert_eq!(
            SamplerConfig::tail(6.5, 1, 0).validate(),
            Err(Error::TailThreshold(6.5))
        );
        assert!(SamplerConfig::tail(6.0, 1, 0).validate().is_ok());
    }

    #[test]
    fn shared_noise_across_sigma() {
        let a = sample_scaled(4, &SamplerConfig::scaled(0.5, 10, 3)).unwrap();
        let b = sample_scaled(4, &SamplerConfig::scaled(1.0, 10, 3)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }
}
