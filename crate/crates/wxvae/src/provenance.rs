//! Sidecar describing where a synthesized cube file came from.

use std::io::Write;
use std::path::{Path, PathBuf};

use wxvae_core::sampler::{SamplerConfig, SamplerMode};

use crate::error::{Error, FormatError, Result};
use crate::format::write_atomic;
use crate::kv;

#[derive(Clone, Debug, PartialEq)]
pub struct ProvenanceRecord {
    pub config: SamplerConfig,
    pub latent_dim: usize,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub checkpoint_fingerprint: u64,
}

/// `<cube file>.provenance`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".provenance");
    PathBuf::from(s)
}

impl ProvenanceRecord {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("mode".to_owned(), self.config.mode.name().to_owned())];
        out.push(match self.config.mode {
            SamplerMode::Scaled { sigma } => ("sigma".to_owned(), sigma.to_string()),
            SamplerMode::Tail { threshold } => ("threshold".to_owned(), threshold.to_string()),
        });
        out.extend([
            ("n".to_owned(), self.config.n.to_string()),
            ("seed".to_owned(), self.config.seed.to_string()),
            ("latent_dim".to_owned(), self.latent_dim.to_string()),
            (
                "checkpoint".to_owned(),
                self.checkpoint.display().to_string(),
            ),
            (
                "checkpoint_sha256".to_owned(),
                self.checkpoint_sha256.clone(),
            ),
            (
                "checkpoint_fingerprint".to_owned(),
                format!("{:016x}", self.checkpoint_fingerprint),
            ),
        ]);
        out
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut f = kv::Fields::new(kv::parse(text)?);
        let mode = match f.take::<String>("mode")?.as_str() {
            "scaled" => SamplerMode::Scaled {
                sigma: f.take("sigma")?,
            },
            "tail" => SamplerMode::Tail {
                threshold: f.take("threshold")?,
            },
            other => return Err(format!("unknown mode {other:?}")),
        };
        let config = SamplerConfig {
            mode,
            n: f.take("n")?,
            seed: f.take("seed")?,
        };
        let fp: String = f.take("checkpoint_fingerprint")?;
        let rec = Self {
            config,
            latent_dim: f.take("latent_dim")?,
            checkpoint: PathBuf::from(f.take::<String>("checkpoint")?),
            checkpoint_sha256: f.take("checkpoint_sha256")?,
            checkpoint_fingerprint: u64::from_str_radix(&fp, 16)
                .map_err(|e| format!("checkpoint_fingerprint {fp:?}: {e}"))?,
        };
        f.finish()?;
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = kv::render(&self.to_pairs());
        write_atomic(path, |w: &mut dyn Write| w.write_all(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::format(path, FormatError::Header(m)))
    }
}
