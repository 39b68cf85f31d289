//! `WXVAE001`: magic, u32 length + UTF-8 `key=value` block covering every
//! model and training field plus the normalization constant, u32 tensor
//! count, then per tensor: u32 name length + UTF-8 name, u32 rank, u32 dims,
//! f32 values.

use std::io::{self, Read, Write};
use std::path::Path;

use wxvae_core::data::NormStats;
use wxvae_core::model::{ModelConfig, OutputActivation, VaeParams};
use wxvae_core::train::{Checkpoint, TrainConfig};
use wxvae_core::Tensor;

use super::{open, to_u32, write_atomic, write_f32s, Decoder};
use crate::error::{FormatError, Result};
use crate::kv;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WXVAE001";

/// Longest header or tensor name accepted, to reject garbage lengths early.
const MAX_TEXT: usize = 1 << 20;
const MAX_RANK: usize = 8;

fn header_pairs(ckpt: &Checkpoint) -> Vec<(String, String)> {
    let m = &ckpt.model;
    let t = &ckpt.train;
    let [d, h, w] = m.input_extent;
    let p = |k: &str, v: String| (k.to_owned(), v);
    vec![
        p("model.input_extent", format!("{d},{h},{w}")),
        p("model.conv_channels", m.conv_channels.to_string()),
        p("model.bottleneck_width", m.bottleneck_width.to_string()),
        p("model.latent_dim", m.latent_dim.to_string()),
        p("model.decoder_channels", m.decoder_channels.to_string()),
        p("model.padding", m.padding.to_string()),
        p(
            "model.output_activation",
            m.output_activation.as_str().to_owned(),
        ),
        p("train.epochs", t.epochs.to_string()),
        p("train.batch_size", t.batch_size.to_string()),
        p("train.lr", t.lr.to_string()),
        p("train.adam_beta1", t.adam_beta1.to_string()),
        p("train.adam_beta2", t.adam_beta2.to_string()),
        p("train.adam_eps", t.adam_eps.to_string()),
        p("train.warmup_epochs", t.warmup_epochs.to_string()),
        p("train.beta_target", t.beta_target.to_string()),
        p("train.warmup_ramp", t.warmup_ramp.to_string()),
        p(
            "train.early_stop_patience",
            t.early_stop_patience.to_string(),
        ),
        p(
            "train.early_stop_min_delta",
            t.early_stop_min_delta.to_string(),
        ),
        p(
            "train.grad_clip",
            t.grad_clip
                .map_or_else(|| "none".to_owned(), |c| c.to_string()),
        ),
        p("train.seed", t.seed.to_string()),
        p(
            "train.validation_fraction",
            t.validation_fraction.to_string(),
        ),
        p("norm.scale", ckpt.norm.scale().to_string()),
    ]
}

pub fn write_checkpoint(w: &mut dyn Write, ckpt: &Checkpoint) -> io::Result<()> {
    let header = kv::render(&header_pairs(ckpt));
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&to_u32(header.len(), "header length")?.to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let named: Vec<(String, &Tensor<f32>)> = ckpt.params.named().collect();
    w.write_all(&to_u32(named.len(), "tensor count")?.to_le_bytes())?;
    for (name, t) in named {
        w.write_all(&to_u32(name.len(), "name length")?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&to_u32(t.shape().len(), "rank")?.to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&to_u32(d, "dimension")?.to_le_bytes())?;
        }
        write_f32s(w, t.data())?;
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_checkpoint(w, ckpt))
}

/// Reads a checkpoint from `r`; `path` only labels errors.
pub fn read_checkpoint(r: impl Read, path: &Path) -> Result<Checkpoint> {
    decode(Decoder::new(r, path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(open(path)?)
}

fn parse_extent(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("input extent {s:?}: {e}"))?;
    v.try_into()
        .map_err(|_| format!("input extent {s:?} needs three values"))
}

fn parse_header(text: &str) -> std::result::Result<(ModelConfig, TrainConfig, NormStats), String> {
    let mut f = kv::Fields::new(kv::parse(text)?);
    let model = ModelConfig {
        input_extent: parse_extent(&f.take::<String>("model.input_extent")?)?,
        conv_channels: f.take("model.conv_channels")?,
        bottleneck_width: f.take("model.bottleneck_width")?,
        latent_dim: f.take("model.latent_dim")?,
        decoder_channels: f.take("model.decoder_channels")?,
        padding: f.take("model.padding")?,
        output_activation: OutputActivation::parse(&f.take::<String>("model.output_activation")?)
            .map_err(|e| e.to_string())?,
    };
    let grad_clip: String = f.take("train.grad_clip")?;
    let train = TrainConfig {
        epochs: f.take("train.epochs")?,
        batch_size: f.take("train.batch_size")?,
        lr: f.take("train.lr")?,
        adam_beta1: f.take("train.adam_beta1")?,
        adam_beta2: f.take("train.adam_beta2")?,
        adam_eps: f.take("train.adam_eps")?,
        warmup_epochs: f.take("train.warmup_epochs")?,
        beta_target: f.take("train.beta_target")?,
        warmup_ramp: f.take("train.warmup_ramp")?,
        early_stop_patience: f.take("train.early_stop_patience")?,
        early_stop_min_delta: f.take("train.early_stop_min_delta")?,
        grad_clip: match grad_clip.as_str() {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|e| format!("key train.grad_clip: cannot parse {s:?}: {e}"))?,
            ),
        },
        seed: f.take("train.seed")?,
        validation_fraction: f.take("train.validation_fraction")?,
    };
    let norm = NormStats::new(f.take("norm.scale")?).map_err(|e| e.to_string())?;
    f.finish()?;
    model.validate().map_err(|e| e.to_string())?;
    Ok((model, train, norm))
}

fn text<R: Read>(d: &mut Decoder<R>, what: &str) -> Result<String> {
    let len = d.u32(&format!("{what} length"))? as usize;
    if len > MAX_TEXT {
        return Err(d.format_err(FormatError::Header(format!(
            "{what} length {len} exceeds {MAX_TEXT}"
        ))));
    }
    let bytes = d.bytes(len, what)?;
    String::from_utf8(bytes)
        .map_err(|_| d.format_err(FormatError::Header(format!("{what} is not UTF-8"))))
}

fn decode<R: Read>(mut d: Decoder<R>) -> Result<Checkpoint> {
    d.magic(CHECKPOINT_MAGIC, "checkpoint")?;
    let header = text(&mut d, "config block")?;
    let (model, train, norm) =
        parse_header(&header).map_err(|m| d.format_err(FormatError::Header(m)))?;
    let count = d.u32("tensor count")? as usize;
    let mut named = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let name = text(&mut d, &format!("name of tensor {i}"))?;
        let rank = d.u32(&format!("rank of {name}"))? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(d.format_err(FormatError::Header(format!(
                "tensor {name} has rank {rank}"
            ))));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(d.u32(&format!("shape of {name}"))? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
        let n = n.ok_or_else(|| {
            d.format_err(FormatError::Header(format!(
                "tensor {name} shape {shape:?} overflows"
            )))
        })?;
        let data = d.f32s(n, &format!("values of {name}"))?;
        let t = Tensor::new(&shape, data)
            .map_err(|e| d.format_err(FormatError::Header(e.to_string())))?;
        named.push((name, t));
    }
    let params = VaeParams::from_named(&model, named).map_err(|e| {
        d.format_err(FormatError::Header(format!(
            "tensors do not match the embedded config: {e}"
        )))
    })?;
    d.finish()?;
    Ok(Checkpoint {
        params,
        model,
        train,
        norm,
    })
}
