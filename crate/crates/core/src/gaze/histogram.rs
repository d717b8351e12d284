use serde::{Deserialize, Serialize};

use super::fixation::{Fixation, Saccade};
use crate::model::ScreenDims;

/// Cell size of the spatial fixation histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub cell_w: u32,
    pub cell_h: u32,
}

impl SpatialGrid {
    /// 20 px wide, 40 px tall.
    pub const WIDE: SpatialGrid = SpatialGrid { cell_w: 20, cell_h: 40 };
    /// 40 px wide, 20 px tall.
    pub const TALL: SpatialGrid = SpatialGrid { cell_w: 40, cell_h: 20 };

    pub fn dims(&self, screen: ScreenDims) -> (usize, usize) {
        (
            screen.width.div_ceil(self.cell_w) as usize,
            screen.height.div_ceil(self.cell_h) as usize,
        )
    }

    pub fn cells(&self, screen: ScreenDims) -> usize {
        let (c, r) = self.dims(screen);
        c * r
    }
}

impl Default for SpatialGrid {
    fn default() -> Self {
        Self::WIDE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeHistParams {
    pub length_bins: usize,
    pub slope_bins: usize,
    pub duration_bins: usize,
    pub velocity_bins: usize,
    pub orientation_bins: usize,
    pub fixation_duration_bins: usize,
    /// Slopes are clamped to `[-slope_clamp, slope_clamp]` before binning.
    pub slope_clamp: f64,
    pub spatial: SpatialGrid,
}

impl Default for GazeHistParams {
    fn default() -> Self {
        Self {
            length_bins: 50,
            slope_bins: 30,
            duration_bins: 60,
            velocity_bins: 50,
            orientation_bins: 36,
            fixation_duration_bins: 60,
            slope_clamp: 10.0,
            spatial: SpatialGrid::default(),
        }
    }
}

impl GazeHistParams {
    pub fn rater_dim(&self, screen: ScreenDims) -> usize {
        self.length_bins
            + self.slope_bins
            + self.duration_bins
            + self.velocity_bins
            + self.orientation_bins
            + self.fixation_duration_bins
            + self.spatial.cells(screen)
    }
}

/// Counts with `bins` equal-width bins spanning `[min, max]` of the values themselves.
/// The maximum falls in the last bin; if all values are equal they all fall in bin 0.
pub fn minmax_histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    if values.is_empty() || bins == 0 {
        return h;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for &v in values {
        let b = if span > 0.0 {
            (((v - lo) / span * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        h[b] += 1.0;
    }
    h
}

/// The seven histograms of one rater on one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterHistograms {
    pub length: Vec<f64>,
    pub slope: Vec<f64>,
    pub duration: Vec<f64>,
    pub velocity: Vec<f64>,
    pub orientation: Vec<f64>,
    pub fixation_duration: Vec<f64>,
    pub spatial: Vec<f64>,
}

impl RaterHistograms {
    pub fn compute(fixations: &[Fixation], saccades: &[Saccade], screen: ScreenDims, params: &GazeHistParams) -> Self {
        let collect = |f: fn(&Saccade) -> f64| saccades.iter().map(f).collect::<Vec<_>>();
        let slopes: Vec<f64> = saccades
            .iter()
            .map(|s| s.slope.clamp(-params.slope_clamp, params.slope_clamp))
            .collect();
        let bin_w = 360.0 / params.orientation_bins as f64;
        let mut orientation = vec![0.0; params.orientation_bins];
        for s in saccades {
            let b = ((s.orientation_deg.rem_euclid(360.0) / bin_w) as usize).min(params.orientation_bins - 1);
            orientation[b] += 1.0;
        }
        let (cols, rows) = params.spatial.dims(screen);
        let mut spatial = vec![0.0; cols * rows];
        for f in fixations {
            if !screen.contains(f.x, f.y) {
                continue;
            }
            let c = ((f.x / f64::from(params.spatial.cell_w)) as usize).min(cols - 1);
            let r = ((f.y / f64::from(params.spatial.cell_h)) as usize).min(rows - 1);
            spatial[r * cols + c] += 1.0;
        }
        let fix_durations: Vec<f64> = fixations.iter().map(Fixation::duration_ms).collect();
        Self {
            length: minmax_histogram(&collect(|s| s.length), params.length_bins),
            slope: minmax_histogram(&slopes, params.slope_bins),
            duration: minmax_histogram(&collect(|s| s.duration_ms), params.duration_bins),
            velocity: minmax_histogram(&collect(|s| s.velocity), params.velocity_bins),
            orientation,
            fixation_duration: minmax_histogram(&fix_durations, params.fixation_duration_bins),
            spatial,
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        [
            &self.length,
            &self.slope,
            &self.duration,
            &self.velocity,
            &self.orientation,
            &self.fixation_duration,
            &self.spatial,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }
}

/// Gaze events of one rater on one video.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaterEvents {
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
}

/// Video-level gaze histogram vector, one block per roster rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeHistFeature {
    pub values: Vec<f64>,
    pub per_rater_dim: usize,
    pub raters: Vec<String>,
}

/// Concatenates per-rater histogram blocks in roster order; absent raters get zero blocks.
pub fn gaze_histogram_features(
    per_rater: &std::collections::BTreeMap<String, RaterEvents>,
    screen: ScreenDims,
    roster: &[String],
    params: &GazeHistParams,
) -> GazeHistFeature {
    let dim = params.rater_dim(screen);
    let mut values = Vec::with_capacity(dim * roster.len());
    for rater in roster {
        match per_rater.get(rater) {
            Some(ev) => values.extend(RaterHistograms::compute(&ev.fixations, &ev.saccades, screen, params).concat()),
            None => values.extend(std::iter::repeat_n(0.0, dim)),
        }
    }
    GazeHistFeature {
        values,
        per_rater_dim: dim,
        raters: roster.to_vec(),
    }
}
