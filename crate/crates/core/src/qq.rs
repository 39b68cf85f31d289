//! Empirical quantiles, QQ curves between pooled pixel distributions, and
//! extreme reference sets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::data::{CubeDataset, FieldCube, Units};
use crate::error::{Error, Result};

pub const DEFAULT_N_PROBS: usize = 199;

/// `n` equally spaced probabilities `i / (n + 1)`, `i = 1..=n`.
pub fn prob_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

/// Ascending copy of `values`; NaN is rejected.
pub fn sorted_pool(values: impl IntoIterator<Item = f32>) -> Result<Vec<f32>> {
    let mut v: Vec<f32> = values.into_iter().collect();
    if let Some(i) = v.iter().position(|x| x.is_nan()) {
        return Err(Error::NonFinite(format!("quantile input at index {i}")));
    }
    v.sort_unstable_by(f32::total_cmp);
    Ok(v)
}

/// Quantiles of an ascending sample, linearly interpolated at rank `h = (n − 1)p`.
pub fn quantiles_sorted(sorted: &[f32], probs: &[f64]) -> Result<Vec<f64>> {
    if sorted.is_empty() {
        return Err(Error::Empty("quantiles"));
    }
    let last = sorted.len() - 1;
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
            let h = last as f64 * p;
            let lo = Float::floor(h) as usize;
            let hi = (lo + 1).min(last);
            let (a, b) = (sorted[lo] as f64, sorted[hi] as f64);
            Ok(a + (h - lo as f64) * (b - a))
        })
        .collect()
}

pub fn quantiles(values: &[f32], probs: &[f64]) -> Result<Vec<f64>> {
    quantiles_sorted(&sorted_pool(values.iter().copied())?, probs)
}

/// Fraction of an ascending sample that is `≤ value`.
pub fn ecdf_sorted(sorted: &[f32], value: f64) -> f64 {
    sorted.partition_point(|&x| x as f64 <= value) as f64 / sorted.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct QQCurve {
    probs: Vec<f64>,
    q_a: Vec<f64>,
    q_b: Vec<f64>,
}

impl QQCurve {
    pub fn new(probs: Vec<f64>, q_a: Vec<f64>, q_b: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() != q_a.len() || probs.len() != q_b.len() {
            return Err(Error::Data(format!(
                "qq curve needs equal non-empty columns, got {}/{}/{}",
                probs.len(),
                q_a.len(),
                q_b.len()
            )));
        }
        if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || probs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data(String::from(
                "qq probabilities must be strictly increasing inside (0, 1)",
            )));
        }
        for (name, q) in [("quantile_a", &q_a), ("quantile_b", &q_b)] {
            if q.iter().any(|v| !v.is_finite()) || q.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Data(format!(
                    "{name} must be finite and non-decreasing"
                )));
            }
        }
        Ok(Self { probs, q_a, q_b })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn q_a(&self) -> &[f64] {
        &self.q_a
    }

    pub fn q_b(&self) -> &[f64] {
        &self.q_b
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn pooled(cubes: &[FieldCube], which: &str) -> Result<Vec<f32>> {
    if cubes.is_empty() {
        return Err(Error::Empty("qq curve"));
    }
    if let Some(c) = cubes.iter().find(|c| c.units() != Units::Physical) {
        return Err(Error::Data(format!(
            "set {which} is in {:?} units; qq curves compare physical units",
            c.units()
        )));
    }
    sorted_pool(cubes.iter().flat_map(|c| c.values().iter().copied()))
}

/// Pools every pixel of each set and evaluates both on `prob_grid(n_probs)`.
pub fn qq_curve(cubes_a: &[FieldCube], cubes_b: &[FieldCube], n_probs: usize) -> Result<QQCurve> {
    let a = pooled(cubes_a, "a")?;
    let b = pooled(cubes_b, "b")?;
    qq_curve_sorted(&a, &b, n_probs)
}

/// As [`qq_curve`] on pre-pooled ascending samples.
pub fn qq_curve_sorted(a: &[f32], b: &[f32], n_probs: usize) -> Result<QQCurve> {
    if n_probs == 0 {
        return Err(Error::Config(String::from(
            "qq curve needs at least one probability",
        )));
    }
    let probs = prob_grid(n_probs);
    let q_a = quantiles_sorted(a, &probs)?;
    let q_b = quantiles_sorted(b, &probs)?;
    QQCurve::new(probs, q_a, q_b)
}

/// `max |q_a − q_b|` over probabilities `≤ upto_prob`; zero when none qualify.
pub fn qq_divergence(curve: &QQCurve, upto_prob: f64) -> Result<f64> {
    if !(upto_prob > 0.0 && upto_prob <= 1.0) {
        return Err(Error::Config(format!(
            "upto_prob must be in (0, 1], got {upto_prob}"
        )));
    }
    Ok(curve
        .probs
        .iter()
        .zip(curve.q_a.iter().zip(&curve.q_b))
        .take_while(|(p, _)| **p <= upto_prob)
        .map(|(_, (a, b))| Float::abs(a - b))
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Top,
    Bottom,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Top => "top",
            Self::Bottom => "bottom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Self::Top),
            "bottom" => Ok(Self::Bottom),
            other => Err(Error::Config(format!(
                "unknown direction {other:?}, expected top or bottom"
            ))),
        }
    }
}

/// Top or bottom `fraction` of cubes ranked by mean precipitation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremeRefSpec {
    pub fraction: f64,
    pub direction: Direction,
}

impl ExtremeRefSpec {
    pub fn new(fraction: f64, direction: Direction) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!(
                "extreme fraction must be in (0, 1), got {fraction}"
            )));
        }
        Ok(Self {
            fraction,
            direction,
        })
    }

    /// `⌈fraction · n⌉`, robust to `fraction · n` landing a hair above an integer.
    pub fn count(&self, n: usize) -> usize {
        (Float::ceil(self.fraction * n as f64 - 1e-9) as usize).clamp(1, n)
    }
}

/// Indices (ascending) of the selected cubes given their means. Ties keep
/// original order.
pub fn extreme_indices(means: &[f64], spec: &ExtremeRefSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    match spec.direction {
        Direction::Top => order.sort_by(|&i, &j| means[j].total_cmp(&means[i])),
        Direction::Bottom => order.sort_by(|&i, &j| means[i].total_cmp(&means[j])),
    }
    order.truncate(spec.count(means.len()));
    order.sort_unstable();
    order
}

pub fn reference_extremes(dataset: &CubeDataset, spec: &ExtremeRefSpec) -> Result<CubeDataset> {
    if dataset.is_empty() {
        return Err(Error::Empty("reference_extremes"));
    }
    let means: Vec<f64> = dataset.cubes().iter().map(FieldCube::mean).collect();
    let cubes = extreme_indices(&means, spec)
        .into_iter()
        .map(|i| dataset.cubes()[i].clone())
        .collect();
    CubeDataset::new(cubes, dataset.norm(), dataset.role())
}
