use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::fixation::{detect_fixations, FixationParams};
use crate::imageops::{quantize, Plane};
use crate::model::{GazeTrace, ScreenDims};

/// Value of the hottest pixel after normalisation.
pub const HEAT_MAX: f64 = 255.0;

/// A 2-D gaze density map in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    grid: Plane,
    window: (f64, f64),
}

impl Heatmap {
    /// Wraps a plane as-is, without normalisation.
    pub fn from_plane(grid: Plane, window: (f64, f64)) -> Self {
        Self { grid, window }
    }

    pub fn zeros(width: usize, height: usize, window: (f64, f64)) -> Self {
        Self::from_plane(Plane::zeros(width, height), window)
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn grid(&self) -> &Plane {
        &self.grid
    }

    /// Time window in milliseconds the map was accumulated over.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn max(&self) -> f64 {
        self.grid.max()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.data.iter().all(|&v| v <= 0.0)
    }

    /// Pixels at or above `threshold`.
    pub fn mask(&self, threshold: f64) -> Vec<bool> {
        self.grid.data.iter().map(|&v| v >= threshold).collect()
    }

    /// Rescales so the maximum is exactly 255; all-zero maps stay zero.
    pub fn normalized(mut self) -> Self {
        normalize_in_place(&mut self.grid);
        self
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width() as u32, self.height() as u32, |x, y| {
            image::Luma([quantize(self.grid.get(x as usize, y as usize))])
        })
    }
}

fn normalize_in_place(p: &mut Plane) {
    let max = p.max();
    if max > 0.0 && max.is_finite() {
        for v in &mut p.data {
            *v = (*v / max * HEAT_MAX).max(0.0);
        }
        // Guard against rounding on the anchor pixel.
        for v in &mut p.data {
            if *v > HEAT_MAX {
                *v = HEAT_MAX;
            }
        }
    } else {
        p.data.fill(0.0);
    }
}

/// Which gaze events feed the density map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatSource {
    #[default]
    RawSamples,
    /// Fixation centres, weighted by duration, for fixations overlapping the window.
    FixationCenters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapParams {
    /// Coarse accumulation cell size in screen pixels.
    pub cell_px: f64,
    /// Side length of the smoothing kernel, in cells.
    pub kernel_size: usize,
    /// Smoothing σ, in cells.
    pub kernel_sigma: f64,
    /// Half-width of the time window around the frame onset.
    pub half_window_ms: f64,
    pub source: HeatSource,
    pub fixations: FixationParams,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self {
            cell_px: 40.0,
            kernel_size: 5,
            kernel_sigma: 3.0,
            half_window_ms: 1000.0,
            source: HeatSource::RawSamples,
            fixations: FixationParams::default(),
        }
    }
}

/// Coarse grid dimensions covering the screen.
pub fn coarse_dims(screen: ScreenDims, cell_px: f64) -> (usize, usize) {
    (
        (f64::from(screen.width) / cell_px).ceil() as usize,
        (f64::from(screen.height) / cell_px).ceil() as usize,
    )
}

/// Sums weighted points into `cell_px` cells; points off the screen are ignored.
pub fn accumulate_coarse(points: impl IntoIterator<Item = (f64, f64, f64)>, screen: ScreenDims, cell_px: f64) -> Plane {
    let (gw, gh) = coarse_dims(screen, cell_px);
    let mut grid = Plane::zeros(gw, gh);
    for (x, y, w) in points {
        if !screen.contains(x, y) {
            continue;
        }
        let cx = ((x / cell_px) as usize).min(gw - 1);
        let cy = ((y / cell_px) as usize).min(gh - 1);
        grid.data[cy * gw + cx] += w;
    }
    grid
}

/// 2-D Gaussian smoothing with an odd `size × size` normalised kernel and zero padding.
pub fn smooth_coarse(grid: &Plane, size: usize, sigma: f64) -> Plane {
    let r = (size / 2) as isize;
    let w1: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w1.iter().sum::<f64>().powi(2);
    let mut out = Plane::zeros(grid.width, grid.height);
    let (gw, gh) = (grid.width as isize, grid.height as isize);
    for y in 0..gh {
        for x in 0..gw {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = y + dy;
                if sy < 0 || sy >= gh {
                    continue;
                }
                for dx in -r..=r {
                    let sx = x + dx;
                    if sx < 0 || sx >= gw {
                        continue;
                    }
                    acc += w1[(dy + r) as usize] * w1[(dx + r) as usize] * grid.get(sx as usize, sy as usize);
                }
            }
            out.set(x as usize, y as usize, acc / s);
        }
    }
    out
}

/// Bilinear upsampling from cell centres to screen pixel centres.
fn upsample(coarse: &Plane, width: usize, height: usize, cell_px: f64) -> Plane {
    let pos = |p: usize, len: usize| {
        let u = ((p as f64 + 0.5) / cell_px - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = u.floor() as usize;
        (i0, (i0 + 1).min(len - 1), u - i0 as f64)
    };
    let xs: Vec<_> = (0..width).map(|x| pos(x, coarse.width)).collect();
    let mut out = Plane::zeros(width, height);
    for y in 0..height {
        let (y0, y1, fy) = pos(y, coarse.height);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = coarse.get(x0, y0) * (1.0 - fx) + coarse.get(x1, y0) * fx;
            let bot = coarse.get(x0, y1) * (1.0 - fx) + coarse.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Weighted points of all traces inside `[lo, hi]` ms.
fn window_points(traces: &[GazeTrace], lo: f64, hi: f64, params: &HeatmapParams) -> Vec<(f64, f64, f64)> {
    let mut pts = Vec::new();
    for trace in traces {
        match params.source {
            HeatSource::RawSamples => pts.extend(
                trace
                    .valid_samples()
                    .filter(|s| s.t_ms >= lo && s.t_ms <= hi)
                    .map(|s| (s.x, s.y, 1.0)),
            ),
            HeatSource::FixationCenters => pts.extend(
                detect_fixations(trace, &params.fixations)
                    .into_iter()
                    .filter(|f| f.end_ms >= lo && f.start_ms <= hi)
                    .map(|f| (f.x, f.y, f.end_ms.min(hi) - f.start_ms.max(lo))),
            ),
        }
    }
    pts
}

/// Smoothed coarse grid before upsampling and normalisation.
pub fn coarse_heat(traces: &[GazeTrace], screen: ScreenDims, frame_time_s: f64, params: &HeatmapParams) -> Plane {
    let t = frame_time_s * 1000.0;
    let pts = window_points(traces, t - params.half_window_ms, t + params.half_window_ms, params);
    let coarse = accumulate_coarse(pts, screen, params.cell_px);
    smooth_coarse(&coarse, params.kernel_size, params.kernel_sigma)
}

/// Screen-resolution heatmap for the frame shown at `frame_time_s`.
pub fn build_heatmap(traces: &[GazeTrace], frame_time_s: f64) -> Heatmap {
    let screen = traces.first().map(|t| t.screen).unwrap_or_default();
    build_heatmap_with(traces, screen, frame_time_s, &HeatmapParams::default())
}

pub fn build_heatmap_with(traces: &[GazeTrace], screen: ScreenDims, frame_time_s: f64, params: &HeatmapParams) -> Heatmap {
    let t = frame_time_s * 1000.0;
    let window = (t - params.half_window_ms, t + params.half_window_ms);
    let coarse = coarse_heat(traces, screen, frame_time_s, params);
    let grid = upsample(&coarse, screen.width as usize, screen.height as usize, params.cell_px);
    Heatmap::from_plane(grid, window).normalized()
}

/// Screen rectangle `(x0, y0, w, h)` occupied by an aspect-preserving, centred video.
pub fn display_rect(screen: ScreenDims, frame_w: u32, frame_h: u32) -> (f64, f64, f64, f64) {
    let (sw, sh) = (f64::from(screen.width), f64::from(screen.height));
    let scale = (sw / f64::from(frame_w)).min(sh / f64::from(frame_h));
    let (w, h) = (f64::from(frame_w) * scale, f64::from(frame_h) * scale);
    ((sw - w) / 2.0, (sh - h) / 2.0, w, h)
}

/// Drops samples that fall on the letterbox bars.
pub fn restrict_to_display(trace: &GazeTrace, frame_w: u32, frame_h: u32) -> GazeTrace {
    let (x0, y0, w, h) = display_rect(trace.screen, frame_w, frame_h);
    let mut out = trace.clone();
    out.samples
        .retain(|s| s.x >= x0 && s.x < x0 + w && s.y >= y0 && s.y < y0 + h);
    out
}

/// Resamples a screen heatmap onto frame pixels, discarding letterbox bars, and renormalises.
pub fn map_to_frame(heat: &Heatmap, screen: ScreenDims, frame_w: u32, frame_h: u32) -> Heatmap {
    let (x0, y0, w, h) = display_rect(screen, frame_w, frame_h);
    let scale = w / f64::from(frame_w);
    let g = heat.grid();
    let (gw, gh) = (g.width as f64, g.height as f64);
    // Keep interpolation inside the video rectangle so bar pixels never leak in.
    let lo_x = x0.ceil().clamp(0.0, gw - 1.0);
    let hi_x = (x0 + w - 1.0).floor().clamp(lo_x, gw - 1.0);
    let lo_y = y0.ceil().clamp(0.0, gh - 1.0);
    let hi_y = (y0 + h - 1.0).floor().clamp(lo_y, gh - 1.0);
    let sample = |p: f64, lo: f64, hi: f64| {
        let p = p.clamp(lo, hi);
        let i0 = p.floor();
        let i1 = (i0 + 1.0).min(hi);
        (i0 as usize, i1 as usize, p - i0)
    };
    let mut out = Plane::zeros(frame_w as usize, frame_h as usize);
    for fy in 0..frame_h as usize {
        let (ya, yb, ty) = sample(y0 + (fy as f64 + 0.5) * scale - 0.5, lo_y, hi_y);
        for fx in 0..frame_w as usize {
            let (xa, xb, tx) = sample(x0 + (fx as f64 + 0.5) * scale - 0.5, lo_x, hi_x);
            let top = g.get(xa, ya) * (1.0 - tx) + g.get(xb, ya) * tx;
            let bot = g.get(xa, yb) * (1.0 - tx) + g.get(xb, yb) * tx;
            out.set(fx, fy, top * (1.0 - ty) + bot * ty);
        }
    }
    Heatmap::from_plane(out, heat.window()).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GazeSample;

    fn trace_at(points: &[(f64, f64)], t0: f64) -> GazeTrace {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GazeSample { t_ms: t0 + i as f64 * 10.0, x, y })
            .collect();
        GazeTrace::new("r", "v", samples)
    }

    #[test]
    fn empty_window_gives_zero_map() {
        let t = trace_at(&[(100.0, 100.0); 20], 50_000.0);
        let h = build_heatmap(&[t], 3.0);
        assert_eq!((h.width(), h.height()), (1366, 768));
        assert!(h.is_empty());
        assert_eq!(h.max(), 0.0);
    }

    #[test]
    fn single_point_peaks_at_its_cell() {
        let t = trace_at(&[(500.0, 300.0); 30], 2_500.0);
        let h = build_heatmap(&[t], 3.0);
        assert_eq!(h.max(), 255.0);
        // cell (12, 7) has its centre at (500, 300)
        assert!((h.get(500, 300) - 255.0).abs() < 1e-9);
        assert!(h.get(100, 700) < h.get(500, 300));
        assert!(h.grid().data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn symmetric_clusters_have_equal_modes() {
        let mut pts = vec![(300.0, 380.0); 25];
        pts.extend(vec![(1060.0, 380.0); 25]);
        let h = build_heatmap(&[trace_at(&pts, 2_500.0)], 3.0);
        let (a, b) = (h.get(300, 380), h.get(1060, 380));
        assert!((a - b).abs() <= 1.0, "{a} vs {b}");
        assert!(a > 250.0);
    }

    #[test]
    fn window_bounds_are_inclusive() {
        let mut t = trace_at(&[(100.0, 100.0)], 2_000.0);
        t.samples.push(GazeSample { t_ms: 4_000.0, x: 900.0, y: 500.0 });
        t.samples.push(GazeSample { t_ms: 4_000.5, x: 900.0, y: 100.0 });
        let coarse = coarse_heat(&[t], ScreenDims::default(), 3.0, &HeatmapParams::default());
        let raw: f64 = coarse.data.iter().sum();
        assert!(raw > 0.0);
        let g = accumulate_coarse([(100.0, 100.0, 1.0), (900.0, 500.0, 1.0)], ScreenDims::default(), 40.0);
        assert_eq!(g.data.iter().sum::<f64>(), 2.0);
        let expected = smooth_coarse(&g, 5, 3.0);
        for (a, b) in coarse.data.iter().zip(&expected.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_gaze_by_one_cell_shifts_the_coarse_map() {
        let pts: Vec<(f64, f64)> = (0..40).map(|i| (400.0 + (i % 7) as f64 * 11.0, 300.0 + (i % 5) as f64 * 13.0)).collect();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x + 40.0, y + 40.0)).collect();
        let p = HeatmapParams::default();
        let a = coarse_heat(&[trace_at(&pts, 2_500.0)], ScreenDims::default(), 3.0, &p);
        let b = coarse_heat(&[trace_at(&shifted, 2_500.0)], ScreenDims::default(), 3.0, &p);
        for y in 3..a.height - 4 {
            for x in 3..a.width - 4 {
                assert!((a.get(x, y) - b.get(x + 1, y + 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_aspect_is_pure_scaling() {
        let screen = ScreenDims { width: 1366, height: 768 };
        assert_eq!(display_rect(screen, 683, 384), (0.0, 0.0, 1366.0, 768.0));
        let h = build_heatmap(&[trace_at(&[(700.0, 420.0); 30], 2_500.0)], 3.0);
        let m = map_to_frame(&h, screen, 683, 384);
        assert_eq!((m.width(), m.height()), (683, 384));
        let (mut best, mut arg) = (-1.0, (0, 0));
        for y in 0..384 {
            for x in 0..683 {
                if m.get(x, y) > best {
                    best = m.get(x, y);
                    arg = (x, y);
                }
            }
        }
        assert_eq!(best, 255.0);
        assert!((arg.0 as f64 - 350.0).abs() <= 1.0 && (arg.1 as f64 - 210.0).abs() <= 1.0, "{arg:?}");
    }

    #[test]
    fn pillarbox_margins_are_excluded() {
        let screen = ScreenDims::default();
        let (x0, y0, w, h) = display_rect(screen, 64, 48);
        assert_eq!((x0, y0, w, h), (171.0, 0.0, 1024.0, 768.0));
        // Hot bars, a cool bump at frame pixel (10, 5).
        let grid = Plane::from_fn(1366, 768, |x, y| {
            if x < 171 || x >= 1195 {
                255.0
            } else {
                let (cx, cy) = (171.0 + 16.0 * 10.5, 16.0 * 5.5);
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                50.0 * (-d2 / 800.0).exp()
            }
        });
        let m = map_to_frame(&Heatmap::from_plane(grid, (0.0, 0.0)), screen, 64, 48);
        assert_eq!(m.get(10, 5), 255.0);
        assert!(m.get(0, 5) < 1.0 && m.get(63, 5) < 1.0);
    }

    #[test]
    fn gaze_on_bar_gives_zero_frame_map() {
        let screen = ScreenDims::default();
        let grid = Plane::from_fn(1366, 768, |x, _| if x < 171 { 255.0 } else { 0.0 });
        let m = map_to_frame(&Heatmap::from_plane(grid, (0.0, 0.0)), screen, 64, 48);
        assert!(m.is_empty());
        let t = trace_at(&[(50.0, 300.0); 10], 0.0);
        assert!(restrict_to_display(&t, 64, 48).samples.is_empty());
    }

    #[test]
    fn fixation_source_uses_centres() {
        let t = trace_at(&[(600.0, 300.0); 30], 2_500.0);
        let p = HeatmapParams { source: HeatSource::FixationCenters, ..HeatmapParams::default() };
        let h = build_heatmap_with(&[t], ScreenDims::default(), 3.0, &p);
        assert_eq!(h.max(), 255.0);
        assert!((h.get(620, 300) - 255.0).abs() < 1e-9);
    }
}
