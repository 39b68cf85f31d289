//! Seeded stand-in for a gridded daily precipitation archive with a summer monsoon.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{GridSeries, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::rng;

/// Days of year (inclusive) on which the seasonal envelope is non-zero.
pub const MONSOON_RANGE: (usize, usize) = (150, 300);
pub const MONSOON_PEAK_DAY: usize = 225;

/// Raised cosine over [`MONSOON_RANGE`], 1 at the peak and exactly 0 outside.
pub fn seasonal_envelope(day_of_year: usize) -> f64 {
    let (lo, hi) = MONSOON_RANGE;
    if day_of_year < lo || day_of_year > hi {
        return 0.0;
    }
    let width = (hi - lo) as f64;
    0.5 * (1.0 - Float::cos(2.0 * PI * (day_of_year - lo) as f64 / width))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonsoonGenConfig {
    pub days: usize,
    pub height: usize,
    pub width: usize,
    pub start_day_of_year: usize,
    /// Wet-day probability is `p0 + p1·s(d)`.
    pub p0: f64,
    pub p1: f64,
    /// Daily intensity is Gamma(`kappa`, `theta0 + theta1·s(d)`).
    pub kappa: f64,
    pub theta0: f64,
    pub theta1: f64,
    /// Half-width of the box filter applied to the daily spatial noise.
    pub smoothing_radius: usize,
    /// Log-scale standard deviation of the mean-one spatial multiplier.
    pub spatial_log_sigma: f64,
    /// Day-to-day AR(1) coefficient of the spatial noise, in `[0, 1)`.
    pub spatial_persistence: f64,
    /// Consecutive days sharing one storm multiplier.
    pub storm_block_days: usize,
    /// Log-scale standard deviation of the mean-one storm multiplier.
    pub storm_log_sigma: f64,
    pub seed: u64,
}

impl Default for MonsoonGenConfig {
    fn default() -> Self {
        Self {
            days: DAYS_PER_YEAR,
            height: 24,
            width: 24,
            start_day_of_year: 0,
            p0: 0.4,
            p1: 0.6,
            kappa: 4.0,
            theta0: 1.0,
            theta1: 8.0,
            smoothing_radius: 2,
            spatial_log_sigma: 0.2,
            spatial_persistence: 0.7,
            storm_block_days: 16,
            storm_log_sigma: 0.5,
            seed: 0,
        }
    }
}

impl MonsoonGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.days == 0 || self.height == 0 || self.width == 0 {
            return bad(format!(
                "grid {}x{}x{} must be non-empty",
                self.days, self.height, self.width
            ));
        }
        if self.start_day_of_year >= DAYS_PER_YEAR {
            return bad(format!(
                "start day of year {} outside 0..{DAYS_PER_YEAR}",
                self.start_day_of_year
            ));
        }
        let p_max = self.p0 + self.p1;
        if !(0.0..=1.0).contains(&self.p0) || !(0.0..=1.0).contains(&self.p1) || !(p_max <= 1.0) {
            return bad(format!(
                "wet-day probabilities p0={} p1={} must stay within [0, 1]",
                self.p0, self.p1
            ));
        }
        if !(self.kappa > 0.0
            && self.theta0 > 0.0
            && self.theta1 >= 0.0
            && self.kappa.is_finite()
            && (self.theta0 + self.theta1).is_finite())
        {
            return bad(format!(
                "gamma parameters kappa={} theta0={} theta1={} must be positive",
                self.kappa, self.theta0, self.theta1
            ));
        }
        if !(0.0..1.0).contains(&self.spatial_persistence) {
            return bad(format!(
                "spatial persistence must be in [0, 1), got {}",
                self.spatial_persistence
            ));
        }
        if self.storm_block_days == 0 {
            return bad(alloc::string::String::from(
                "storm block must span at least one day",
            ));
        }
        if !(self.spatial_log_sigma >= 0.0
            && self.storm_log_sigma >= 0.0
            && self.spatial_log_sigma.is_finite()
            && self.storm_log_sigma.is_finite())
        {
            return bad(alloc::string::String::from(
                "log-sigmas must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Generates the series day by day as the product of
///
/// * a wet-day indicator per pixel, `Φ(u) < p(d)` for a smoothed standard-normal
///   field `u`, so each pixel is wet with probability `p(d)` and wet pixels
///   form coherent patches that merge into widespread rain as `p(d) → 1`;
/// * a grid-wide gamma intensity;
/// * a mean-one lognormal spatial multiplier;
/// * a mean-one lognormal storm multiplier shared by each block of
///   `storm_block_days`.
///
/// Both spatial fields are box-smoothed white noise following an AR(1) in time.
pub fn gen_synthetic_monsoon(cfg: &MonsoonGenConfig) -> Result<GridSeries> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = rng::seeded(cfg.seed, rng::stream::MONSOON);
    let mut values = Vec::with_capacity(cfg.days * h * w);
    let mut occurrence = SmoothField::new(h, w);
    let mut amount = SmoothField::new(h, w);
    let mut storm = 1.0;
    for d in 0..cfg.days {
        if d % cfg.storm_block_days == 0 {
            storm = lognormal_mean_one(rng.sample(StandardNormal), cfg.storm_log_sigma);
        }
        let s = seasonal_envelope((cfg.start_day_of_year + d) % DAYS_PER_YEAR);
        let p = cfg.p0 + cfg.p1 * s;
        let gamma =
            Gamma::new(cfg.kappa, cfg.theta0 + cfg.theta1 * s).expect("validated gamma parameters");
        let intensity: f64 = gamma.sample(&mut rng);
        let rho = if d == 0 { 0.0 } else { cfg.spatial_persistence };
        occurrence.step(&mut rng, rho, cfg.smoothing_radius);
        amount.step(&mut rng, rho, cfg.smoothing_radius);
        let scale = intensity * storm;
        values.extend(
            occurrence
                .smooth
                .iter()
                .zip(&amount.smooth)
                .map(|(&u, &z)| {
                    let wet = normal_cdf(u) < p;
                    if wet {
                        (scale * lognormal_mean_one(z, cfg.spatial_log_sigma)) as f32
                    } else {
                        0.0
                    }
                }),
        );
    }
    GridSeries::new(cfg.days, h, w, cfg.start_day_of_year, values)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// White noise with AR(1) memory and its standardized box-smoothed view.
struct SmoothField {
    h: usize,
    w: usize,
    noise: Vec<f64>,
    smooth: Vec<f64>,
}

impl SmoothField {
    fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            noise: vec![0.0; h * w],
            smooth: vec![0.0; h * w],
        }
    }

    fn step(&mut self, rng: &mut rng::Rng, rho: f64, radius: usize) {
        let fresh = Float::sqrt(1.0 - rho * rho);
        for z in self.noise.iter_mut() {
            *z = rho * *z + fresh * rng.sample::<f64, _>(StandardNormal);
        }
        smooth_unit_variance(&self.noise, self.h, self.w, radius, &mut self.smooth);
    }
}

fn lognormal_mean_one(z: f64, sigma: f64) -> f64 {
    Float::exp(sigma * z - 0.5 * sigma * sigma)
}

/// Box sum of iid standard normals divided by the root of the tap count, so every
/// output is again standard normal, edges included.
fn smooth_unit_variance(noise: &[f64], h: usize, w: usize, r: usize, out: &mut [f64]) {
    let mut rows = vec![0.0f64; h * w];
    for i in 0..h {
        for j in 0..w {
            let (lo, hi) = (j.saturating_sub(r), (j + r).min(w - 1));
            rows[i * w + j] = noise[i * w + lo..=i * w + hi].iter().sum();
        }
    }
    for i in 0..h {
        let (lo, hi) = (i.saturating_sub(r), (i + r).min(h - 1));
        for j in 0..w {
            let cols = ((j + r).min(w - 1) - j.saturating_sub(r) + 1) as f64;
            let sum: f64 = (lo..=hi).map(|ii| rows[ii * w + j]).sum();
            out[i * w + j] = sum / Float::sqrt(cols * (hi - lo + 1) as f64);
        }
    }
}
