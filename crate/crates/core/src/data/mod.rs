//! Gridded precipitation series, cube datasets and their preparation.

mod monsoon;
mod normalize;
mod resize;
mod split;
mod window;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use monsoon::{
    gen_synthetic_monsoon, seasonal_envelope, MonsoonGenConfig, MONSOON_PEAK_DAY, MONSOON_RANGE,
};
pub use normalize::{
    denormalize, denormalize_value, normalize, normalize_value, normalize_with, NormStats,
};
pub use resize::resize_bilinear;
pub use split::{split_indices, split_train_test};
pub use window::{
    extract_window, plan_windows, window_samples, WindowConfig, WindowPlan, WindowSpec,
};

pub const DAYS_PER_YEAR: usize = 365;

/// Daily precipitation (mm/day) on a fixed grid, day-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSeries {
    days: usize,
    height: usize,
    width: usize,
    /// Zero-based day of year of the first day.
    start_day_of_year: usize,
    values: Vec<f32>,
}

impl GridSeries {
    pub fn new(
        days: usize,
        height: usize,
        width: usize,
        start_day_of_year: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if days == 0 || height == 0 || width == 0 {
            return Err(Error::Data(format!(
                "grid dimensions must be positive, got {days}x{height}x{width}"
            )));
        }
        if start_day_of_year >= DAYS_PER_YEAR {
            return Err(Error::Data(format!(
                "start day of year {start_day_of_year} outside 0..{DAYS_PER_YEAR}"
            )));
        }
        let expected = days * height * width;
        if values.len() != expected {
            return Err(Error::Data(format!(
                "{days}x{height}x{width} grid needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(format!(
                "value {} at index {i} is negative or not finite",
                values[i]
            )));
        }
        Ok(Self {
            days,
            height,
            width,
            start_day_of_year,
            values,
        })
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start_day_of_year(&self) -> usize {
        self.start_day_of_year
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// The `height × width` field of day `d`.
    pub fn day(&self, d: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.values[d * n..(d + 1) * n]
    }

    pub fn day_of_year(&self, d: usize) -> usize {
        (self.start_day_of_year + d) % DAYS_PER_YEAR
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Units {
    /// mm/day
    Physical,
    /// `log(1 + v) / C`
    Normalized,
}

impl Units {
    pub fn flag(self) -> u8 {
        match self {
            Units::Physical => 0,
            Units::Normalized => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            0 => Ok(Units::Physical),
            1 => Ok(Units::Normalized),
            f => Err(Error::Data(format!("unknown units flag {f}"))),
        }
    }
}

/// One `T × H × W` block of precipitation.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldCube {
    extent: [usize; 3],
    values: Vec<f32>,
    units: Units,
}

impl FieldCube {
    pub fn new(extent: [usize; 3], values: Vec<f32>, units: Units) -> Result<Self> {
        let n: usize = extent.iter().product();
        if n == 0 || values.len() != n {
            return Err(Error::Data(format!(
                "cube extent {extent:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(format!(
                "cube value {} at index {i} is negative or not finite",
                values[i]
            )));
        }
        Ok(Self {
            extent,
            values,
            units,
        })
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn units(&self) -> Units {
        self.units
    }

    /// Mean over every pixel, accumulated in `f64`.
    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// Cubes sharing one extent and one unit system.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeDataset {
    cubes: Vec<FieldCube>,
    norm: Option<NormStats>,
    role: Role,
}

impl CubeDataset {
    /// `norm` must be present exactly when the cubes are normalized.
    pub fn new(cubes: Vec<FieldCube>, norm: Option<NormStats>, role: Role) -> Result<Self> {
        if let Some(first) = cubes.first() {
            if let Some((i, c)) = cubes
                .iter()
                .enumerate()
                .find(|(_, c)| c.extent != first.extent || c.units != first.units)
            {
                return Err(Error::Data(format!(
                    "cube {i} has extent {:?} / {:?}, dataset uses {:?} / {:?}",
                    c.extent, c.units, first.extent, first.units
                )));
            }
            let normalized = first.units == Units::Normalized;
            if normalized != norm.is_some() {
                return Err(Error::Data(format!(
                    "normalization stats must accompany normalized cubes (units {:?}, stats {})",
                    first.units,
                    if norm.is_some() { "present" } else { "absent" }
                )));
            }
        }
        Ok(Self { cubes, norm, role })
    }

    pub fn cubes(&self) -> &[FieldCube] {
        &self.cubes
    }

    pub fn into_cubes(self) -> Vec<FieldCube> {
        self.cubes
    }

    pub fn norm(&self) -> Option<NormStats> {
        self.norm
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn extent(&self) -> Option<[usize; 3]> {
        self.cubes.first().map(FieldCube::extent)
    }

    pub fn units(&self) -> Option<Units> {
        self.cubes.first().map(FieldCube::units)
    }

    pub fn with_role(self, role: Role) -> Self {
        Self { role, ..self }
    }

    /// Mean precipitation over every pixel of every cube.
    pub fn pixel_mean(&self) -> f64 {
        let n: usize = self.cubes.iter().map(|c| c.values.len()).sum();
        self.cubes
            .iter()
            .flat_map(|c| c.values.iter())
            .map(|&v| v as f64)
            .sum::<f64>()
            / n.max(1) as f64
    }
}
