use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{resize_bilinear, FieldCube, GridSeries, Units, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig {
    pub window_days: usize,
    /// Inclusive day-of-year range every sampled day must fall in.
    pub day_range: (usize, usize),
    pub n_boxes: usize,
    /// `(height, width)` of each crop before resizing.
    pub box_extent: (usize, usize),
    pub n_samples: usize,
    pub resize_to: (usize, usize),
    pub seed: u64,
}

impl WindowConfig {
    pub fn paper() -> Self {
        Self {
            window_days: 32,
            day_range: (150, 300),
            n_boxes: 16,
            box_extent: (20, 20),
            n_samples: 18_000,
            resize_to: (32, 32),
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            window_days: 16,
            n_samples: 1_500,
            resize_to: (16, 16),
            ..Self::paper()
        }
    }

    pub fn cube_extent(&self) -> [usize; 3] {
        [self.window_days, self.resize_to.0, self.resize_to.1]
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::paper()
    }
}

/// One cube to cut: series day `start_day` onwards, crop anchored at `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub start_day: usize,
    pub box_index: usize,
    pub origin: (usize, usize),
}

/// The sampled windows, kept separate from the pixels so large sets can be
/// materialized one cube at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPlan {
    pub config: WindowConfig,
    pub boxes: Vec<(usize, usize)>,
    pub specs: Vec<WindowSpec>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn cubes<'a>(
        &'a self,
        series: &'a GridSeries,
    ) -> impl Iterator<Item = Result<FieldCube>> + 'a {
        self.specs
            .iter()
            .map(move |spec| extract_window(series, spec, &self.config))
    }
}

/// Series days whose window stays inside `day_range` of a single year.
fn valid_starts(series: &GridSeries, cfg: &WindowConfig) -> Vec<usize> {
    let (lo, hi) = cfg.day_range;
    (0..series.days())
        .filter(|&d| d + cfg.window_days <= series.days())
        .filter(|&d| {
            let doy = series.day_of_year(d);
            doy >= lo && doy + cfg.window_days - 1 <= hi
        })
        .collect()
}

pub fn plan_windows(series: &GridSeries, cfg: &WindowConfig) -> Result<WindowPlan> {
    let (lo, hi) = cfg.day_range;
    let (bh, bw) = cfg.box_extent;
    let geometry = |m: alloc::string::String| Err(Error::Config(m));
    if lo > hi || hi >= DAYS_PER_YEAR {
        return geometry(format!(
            "day range ({lo}, {hi}) is not an interval within one year"
        ));
    }
    if cfg.window_days == 0 || cfg.window_days > hi - lo + 1 {
        return geometry(format!(
            "window of {} days does not fit day range ({lo}, {hi})",
            cfg.window_days
        ));
    }
    if bh == 0 || bw == 0 || bh > series.height() || bw > series.width() {
        return geometry(format!(
            "box {bh}x{bw} does not fit grid {}x{}",
            series.height(),
            series.width()
        ));
    }
    if cfg.n_boxes == 0 || cfg.n_samples == 0 || cfg.resize_to.0 == 0 || cfg.resize_to.1 == 0 {
        return geometry(alloc::string::String::from(
            "box count, sample count and resize target must be positive",
        ));
    }
    let starts = valid_starts(series, cfg);
    if starts.is_empty() {
        return geometry(format!(
            "series has no {}-day window inside day range ({lo}, {hi})",
            cfg.window_days
        ));
    }
    let mut rng = rng::seeded(cfg.seed, rng::stream::WINDOWS);
    let boxes: Vec<(usize, usize)> = (0..cfg.n_boxes)
        .map(|_| {
            (
                rng.random_range(0..=series.height() - bh),
                rng.random_range(0..=series.width() - bw),
            )
        })
        .collect();
    let specs = (0..cfg.n_samples)
        .map(|_| {
            let start_day = starts[rng.random_range(0..starts.len())];
            let box_index = rng.random_range(0..boxes.len());
            WindowSpec {
                start_day,
                box_index,
                origin: boxes[box_index],
            }
        })
        .collect();
    Ok(WindowPlan {
        config: cfg.clone(),
        boxes,
        specs,
    })
}

/// Crops one window and resizes each day to `resize_to`.
pub fn extract_window(
    series: &GridSeries,
    spec: &WindowSpec,
    cfg: &WindowConfig,
) -> Result<FieldCube> {
    let (bh, bw) = cfg.box_extent;
    let (r0, c0) = spec.origin;
    let (lo, hi) = cfg.day_range;
    let last = spec.start_day + cfg.window_days - 1;
    assert!(
        last < series.days(),
        "window ends on day {last} past the series"
    );
    assert!(
        r0 + bh <= series.height() && c0 + bw <= series.width(),
        "box at {:?} leaves the grid",
        spec.origin
    );
    let (first_doy, last_doy) = (series.day_of_year(spec.start_day), series.day_of_year(last));
    assert!(
        first_doy >= lo && last_doy <= hi && first_doy <= last_doy,
        "window days {first_doy}..={last_doy} leave ({lo}, {hi})"
    );
    let (th, tw) = cfg.resize_to;
    let mut values = Vec::with_capacity(cfg.window_days * th * tw);
    let mut crop = Vec::with_capacity(bh * bw);
    for d in spec.start_day..=last {
        let field = series.day(d);
        crop.clear();
        for r in r0..r0 + bh {
            crop.extend_from_slice(&field[r * series.width() + c0..r * series.width() + c0 + bw]);
        }
        values.extend(resize_bilinear(&crop, (bh, bw), (th, tw)));
    }
    FieldCube::new(cfg.cube_extent(), values, Units::Physical)
}

/// Plans and materializes every window.
pub fn window_samples(series: &GridSeries, cfg: &WindowConfig) -> Result<Vec<FieldCube>> {
    plan_windows(series, cfg)?.cubes(series).collect()
}
