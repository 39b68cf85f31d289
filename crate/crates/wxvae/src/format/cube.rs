//! `WXCUBE01`: magic, u32 count/T/H/W, u8 units flag (0 physical,
//! 1 normalized), f32 normalization constant (0 when physical), then
//! `count·T·H·W` f32 values.

use std::io::{self, Read, Write};
use std::path::Path;

use wxvae_core::data::{CubeDataset, FieldCube, NormStats, Role, Units};

use super::{open, to_u32, write_atomic, write_f32s, Decoder};
use crate::error::{FormatError, Result};

pub const CUBE_MAGIC: &[u8; 8] = b"WXCUBE01";

pub fn write_cubes(w: &mut dyn Write, dataset: &CubeDataset) -> io::Result<()> {
    let extent = dataset.extent().unwrap_or([0; 3]);
    let units = dataset.units().unwrap_or(match dataset.norm() {
        Some(_) => Units::Normalized,
        None => Units::Physical,
    });
    w.write_all(CUBE_MAGIC)?;
    w.write_all(&to_u32(dataset.len(), "cube count")?.to_le_bytes())?;
    for v in extent {
        w.write_all(&to_u32(v, "extent")?.to_le_bytes())?;
    }
    w.write_all(&[units.flag()])?;
    w.write_all(&dataset.norm().map_or(0.0, |n| n.scale()).to_le_bytes())?;
    for c in dataset.cubes() {
        write_f32s(w, c.values())?;
    }
    Ok(())
}

pub fn save_cubes(dataset: &CubeDataset, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_cubes(w, dataset))
}

/// Reads a cube file from `r`; `path` only labels errors.
pub fn read_cubes(r: impl Read, path: &Path, role: Role) -> Result<CubeDataset> {
    decode(Decoder::new(r, path), role)
}

pub fn load_cubes(path: &Path, role: Role) -> Result<CubeDataset> {
    decode(open(path)?, role)
}

fn decode<R: Read>(mut d: Decoder<R>, role: Role) -> Result<CubeDataset> {
    let header = |m: String| FormatError::Header(m);
    d.magic(CUBE_MAGIC, "cube")?;
    let count = d.u32("cube count")? as usize;
    let extent = [
        d.u32("extent T")? as usize,
        d.u32("extent H")? as usize,
        d.u32("extent W")? as usize,
    ];
    let flag = d.u8("units flag")?;
    let units = Units::from_flag(flag).map_err(|e| d.format_err(header(e.to_string())))?;
    let scale = d.f32("normalization constant")?;
    let norm = match units {
        Units::Physical if scale != 0.0 => {
            return Err(d.format_err(header(format!(
                "physical cubes carry normalization constant {scale}"
            ))));
        }
        Units::Physical => None,
        Units::Normalized => {
            Some(NormStats::new(scale).map_err(|e| d.format_err(header(e.to_string())))?)
        }
    };
    let per = extent[0] * extent[1] * extent[2];
    if count > 0 && per == 0 {
        return Err(d.format_err(header(format!("cube extent {extent:?} is empty"))));
    }
    let mut cubes = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let values = d.f32s(per, &format!("cube {i} of {count}"))?;
        if let Some((j, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            let reason = if value.is_finite() {
                "negative"
            } else {
                "not finite"
            };
            return Err(d.format_err(FormatError::InvalidValue {
                index: i * per + j,
                value,
                reason,
            }));
        }
        cubes.push(
            FieldCube::new(extent, values, units)
                .map_err(|e| d.format_err(header(e.to_string())))?,
        );
    }
    d.finish()?;
    Ok(CubeDataset::new(cubes, norm, role)?)
}
