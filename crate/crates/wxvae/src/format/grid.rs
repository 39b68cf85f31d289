//! `WXGRID01`: magic, u32 days/height/width/start_day_of_year, then
//! `days·height·width` f32 values in mm/day, day-major then row-major.

use std::io::{self, Read, Write};
use std::path::Path;

use wxvae_core::data::GridSeries;

use super::{open, to_u32, write_atomic, write_f32s, Decoder};
use crate::error::{FormatError, Result};

pub const GRID_MAGIC: &[u8; 8] = b"WXGRID01";

pub fn write_grid(w: &mut dyn Write, series: &GridSeries) -> io::Result<()> {
    w.write_all(GRID_MAGIC)?;
    for (v, what) in [
        (series.days(), "days"),
        (series.height(), "height"),
        (series.width(), "width"),
        (series.start_day_of_year(), "start day"),
    ] {
        w.write_all(&to_u32(v, what)?.to_le_bytes())?;
    }
    write_f32s(w, series.values())
}

pub fn save_grid(series: &GridSeries, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_grid(w, series))
}

/// Reads a grid from `r`; `path` only labels errors.
pub fn read_grid(r: impl Read, path: &Path) -> Result<GridSeries> {
    decode(Decoder::new(r, path))
}

pub fn load_grid(path: &Path) -> Result<GridSeries> {
    decode(open(path)?)
}

fn decode<R: Read>(mut d: Decoder<R>) -> Result<GridSeries> {
    d.magic(GRID_MAGIC, "grid")?;
    let days = d.u32("days")? as usize;
    let height = d.u32("height")? as usize;
    let width = d.u32("width")? as usize;
    let start = d.u32("start day")? as usize;
    let n = days
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| {
            d.format_err(FormatError::Header(format!(
                "{days}x{height}x{width} overflows"
            )))
        })?;
    let values = d.f32s(
        n,
        &format!("{n} grid values ({days} days of {height}x{width})"),
    )?;
    if let Some((index, &value)) = values
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
            index,
            value,
            reason,
        }));
    }
    let series = GridSeries::new(days, height, width, start, values)
        .map_err(|e| d.format_err(FormatError::Header(e.to_string())))?;
    d.finish()?;
    Ok(series)
}
