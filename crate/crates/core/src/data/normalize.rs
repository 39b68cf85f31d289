//! `v' = log(1 + v) / C` with `C` the largest `log(1 + v)` of the training set.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use super::{CubeDataset, FieldCube, Units};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    scale: f32,
}

impl NormStats {
    pub fn new(scale: f32) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Data(format!(
                "normalization constant must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    /// `C = max log(1 + v)` over every pixel; an all-dry set falls back to `C = 1`.
    pub fn fit<'a>(cubes: impl IntoIterator<Item = &'a FieldCube>) -> Result<Self> {
        let mut c = 0.0f32;
        for cube in cubes {
            if cube.units() != Units::Physical {
                return Err(Error::Data(String::from(
                    "normalization constants must be fitted on physical units",
                )));
            }
            for &v in cube.values() {
                c = c.max(log1p32(v));
            }
        }
        Self::new(if c > 0.0 { c } else { 1.0 })
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }
}

fn log1p32(v: f32) -> f32 {
    Float::ln_1p(v as f64) as f32
}

/// Division happens in `f32` so the training maximum maps to exactly 1.0.
pub fn normalize_value(v: f32, stats: NormStats) -> f32 {
    log1p32(v) / stats.scale
}

pub fn denormalize_value(v: f32, stats: NormStats) -> f32 {
    Float::exp_m1(v as f64 * stats.scale as f64) as f32
}

/// Fits `C` on `dataset` and returns it in normalized units.
pub fn normalize(dataset: CubeDataset) -> Result<CubeDataset> {
    let stats = NormStats::fit(dataset.cubes())?;
    normalize_with(dataset, stats)
}

/// Normalizes with constants fitted elsewhere (e.g. the test set with training `C`).
pub fn normalize_with(dataset: CubeDataset, stats: NormStats) -> Result<CubeDataset> {
    if dataset.units() == Some(Units::Normalized) {
        return Err(Error::Data(String::from("dataset is already normalized")));
    }
    let role = dataset.role();
    let cubes = dataset
        .into_cubes()
        .into_iter()
        .map(|c| {
            let extent = c.extent();
            let values: Vec<f32> = c
                .values()
                .iter()
                .map(|&v| normalize_value(v, stats))
                .collect();
            FieldCube::new(extent, values, Units::Normalized)
        })
        .collect::<Result<Vec<_>>>()?;
    CubeDataset::new(cubes, Some(stats), role)
}

/// Maps a normalized cube back to mm/day.
pub fn denormalize(cube: &FieldCube, stats: Option<NormStats>) -> Result<FieldCube> {
    let stats =
        stats.ok_or_else(|| Error::Data(String::from("denormalize needs normalization stats")))?;
    if cube.units() != Units::Normalized {
        return Err(Error::Data(String::from("cube is not in normalized units")));
    }
    let values = cube
        .values()
        .iter()
        .map(|&v| denormalize_value(v, stats).max(0.0))
        .collect();
    FieldCube::new(cube.extent(), values, Units::Physical)
}
