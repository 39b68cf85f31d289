//! Little-endian binary formats and the shared plumbing to read and write them.
//!
//! Every writer goes through [`write_atomic`]: bytes land in a temporary file
//! in the destination directory, which is renamed over the target only once
//! complete, so readers never observe a half-written file.

mod checkpoint;
mod cube;
mod grid;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use cube::{load_cubes, read_cubes, save_cubes, write_cubes, CUBE_MAGIC};
pub use grid::{load_grid, read_grid, save_grid, write_grid, GRID_MAGIC};

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};

/// Floats read per chunk, so a corrupt header claiming billions of values
/// fails on truncation instead of on allocation.
const CHUNK: usize = 1 << 16;

pub(crate) struct Decoder<R> {
    inner: R,
    path: PathBuf,
}

impl<R: Read> Decoder<R> {
    pub(crate) fn new(inner: R, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }

    fn fail(&self, e: io::Error, what: &str) -> Error {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(&self.path, FormatError::Truncated(what.to_owned()))
        } else {
            Error::io(&self.path, e)
        }
    }

    pub(crate) fn format_err(&self, kind: FormatError) -> Error {
        Error::format(&self.path, kind)
    }

    pub(crate) fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| self.fail(e, what))?;
        Ok(b)
    }

    pub(crate) fn magic(&mut self, expected: &'static [u8; 8], what: &'static str) -> Result<()> {
        let found = self.array::<8>("magic")?;
        if &found != expected {
            return Err(self.format_err(FormatError::BadMagic {
                what,
                expected: std::str::from_utf8(expected).unwrap_or("?"),
                found: String::from_utf8_lossy(&found).into_owned(),
            }));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let got = (&mut self.inner)
            .take(n as u64)
            .read_to_end(&mut out)
            .map_err(|e| self.fail(e, what))?;
        if got != n {
            return Err(self.format_err(FormatError::Truncated(what.to_owned())));
        }
        Ok(out)
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n.min(CHUNK));
        let mut buf = vec![0u8; 4 * CHUNK.min(n)];
        let mut left = n;
        while left > 0 {
            let m = left.min(CHUNK);
            let b = &mut buf[..4 * m];
            self.inner.read_exact(b).map_err(|e| self.fail(e, what))?;
            out.extend(
                b.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            left -= m;
        }
        Ok(out)
    }

    /// Errors unless the stream is exhausted.
    pub(crate) fn finish(mut self) -> Result<()> {
        let extra =
            io::copy(&mut self.inner, &mut io::sink()).map_err(|e| Error::io(&self.path, e))?;
        if extra > 0 {
            return Err(self.format_err(FormatError::Trailing(extra)));
        }
        Ok(())
    }
}

pub(crate) fn open(path: &Path) -> Result<Decoder<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Decoder::new(BufReader::new(f), path))
}

pub(crate) fn write_f32s(w: &mut dyn Write, values: &[f32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn to_u32(v: usize, what: &str) -> io::Result<u32> {
    u32::try_from(v).map_err(|_| {
        io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{what} {v} does not fit in u32"),
        )
    })
}

/// Writes through `body` into a temporary sibling of `path`, then renames it
/// into place.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let err = |e| Error::io(path, e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(err)?;
        w.flush().map_err(err)?;
    }
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Lower-case hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex(&h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
