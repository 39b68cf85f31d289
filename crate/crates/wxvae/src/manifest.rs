//! Run manifests: everything needed to redo a subcommand and check its
//! outputs. The text is a valid config file, since readers skip keys under
//! `manifest.`, so `--config out.manifest` replays the run.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, FormatError, Result};
use crate::format::{sha256_file, write_atomic};
use crate::kv;

/// Keys with this prefix describe the run rather than configure it.
pub const RESERVED_PREFIX: &str = "manifest.";

#[derive(Clone, Debug, PartialEq)]
pub struct FileDigest {
    /// Flag name the file was passed under.
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(role: &str, path: &Path) -> Result<Self> {
        Ok(Self {
            role: role.to_owned(),
            path: path.to_owned(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every resolved setting, in resolution order.
    pub config: Vec<(String, String)>,
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_secs: f64,
}

/// `<output>.manifest`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut pairs = vec![
            (
                format!("{RESERVED_PREFIX}subcommand"),
                self.subcommand.clone(),
            ),
            (
                format!("{RESERVED_PREFIX}duration_secs"),
                format!("{:.3}", self.duration_secs),
            ),
        ];
        for (name, seed) in &self.seeds {
            pairs.push((format!("{RESERVED_PREFIX}seed.{name}"), seed.to_string()));
        }
        for (dir, files) in [("input", &self.inputs), ("output", &self.outputs)] {
            for f in files {
                pairs.push((
                    format!("{RESERVED_PREFIX}{dir}.{}", f.role),
                    f.path.display().to_string(),
                ));
                pairs.push((
                    format!("{RESERVED_PREFIX}{dir}.{}.sha256", f.role),
                    f.sha256.clone(),
                ));
            }
        }
        pairs.extend(self.config.iter().cloned());
        format!(
            "# wxvae run manifest; replay with --config <this file>\n{}",
            kv::render(&pairs)
        )
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut m = Self {
            subcommand: String::new(),
            config: Vec::new(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_secs: 0.0,
        };
        for (k, v) in kv::parse(text)? {
            let Some(key) = k.strip_prefix(RESERVED_PREFIX) else {
                m.config.push((k, v));
                continue;
            };
            if key == "subcommand" {
                m.subcommand = v;
            } else if key == "duration_secs" {
                m.duration_secs = v.parse().map_err(|e| format!("duration_secs {v:?}: {e}"))?;
            } else if let Some(name) = key.strip_prefix("seed.") {
                m.seeds.push((
                    name.to_owned(),
                    v.parse().map_err(|e| format!("seed {name} {v:?}: {e}"))?,
                ));
            } else if let Some((files, rest)) = key
                .strip_prefix("input.")
                .map(|r| (&mut m.inputs, r))
                .or_else(|| key.strip_prefix("output.").map(|r| (&mut m.outputs, r)))
            {
                match rest.strip_suffix(".sha256") {
                    Some(role) => match files.iter_mut().find(|f| f.role == role) {
                        Some(f) => f.sha256 = v,
                        None => return Err(format!("digest for unknown file role {role}")),
                    },
                    None => files.push(FileDigest {
                        role: rest.to_owned(),
                        path: PathBuf::from(v),
                        sha256: String::new(),
                    }),
                }
            } else {
                return Err(format!("unknown manifest key {k}"));
            }
        }
        if m.subcommand.is_empty() {
            return Err("manifest names no subcommand".to_owned());
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.render();
        write_atomic(path, |w: &mut dyn Write| w.write_all(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::format(path, FormatError::Header(m)))
    }
}
