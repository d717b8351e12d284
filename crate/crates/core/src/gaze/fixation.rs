use serde::{Deserialize, Serialize};

use crate::model::GazeTrace;

/// Spatial-clustering fixation detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationParams {
    /// Clusters shorter than this are discarded.
    pub min_duration_ms: f64,
    /// Maximum distance from a sample to the running cluster centroid.
    pub dispersion_px: f64,
    /// A time gap longer than this always closes the running cluster.
    pub max_gap_ms: f64,
}

impl Default for FixationParams {
    fn default() -> Self {
        Self {
            min_duration_ms: 100.0,
            dispersion_px: 50.0,
            max_gap_ms: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    /// Timestamp of the first member sample.
    pub start_ms: f64,
    /// Timestamp of the last member sample.
    pub end_ms: f64,
    pub x: f64,
    pub y: f64,
    pub samples: usize,
}

impl Fixation {
    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saccade {
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub length: f64,
    pub duration_ms: f64,
    /// Pixels per millisecond.
    pub velocity: f64,
    /// `dy / dx`; vertical moves are `±inf`.
    pub slope: f64,
    /// Direction of travel in degrees, `[0, 360)`, screen axes (y down).
    pub orientation_deg: f64,
}

/// Duration assumed for abutting fixations when computing velocity.
pub const MIN_SACCADE_DURATION_MS: f64 = 1.0;

struct Cluster {
    start_ms: f64,
    last_ms: f64,
    sum_x: f64,
    sum_y: f64,
    n: usize,
}

impl Cluster {
    fn centroid(&self) -> (f64, f64) {
        (self.sum_x / self.n as f64, self.sum_y / self.n as f64)
    }
}

/// Greedy left-to-right spatial clustering of the valid samples of a trace.
///
/// A sample joins the running cluster when it lies within `dispersion_px` of the
/// running centroid and follows the previous sample by at most `max_gap_ms`;
/// otherwise the cluster is closed and kept only if it lasted `min_duration_ms`.
pub fn detect_fixations(trace: &GazeTrace, params: &FixationParams) -> Vec<Fixation> {
    let samples: Vec<_> = trace.valid_samples().collect();
    if samples.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let close = |c: &Cluster, out: &mut Vec<Fixation>| {
        // Tolerate accumulated rounding in sample timestamps.
        if c.last_ms - c.start_ms + 1e-6 >= params.min_duration_ms {
            let (x, y) = c.centroid();
            out.push(Fixation {
                start_ms: c.start_ms,
                end_ms: c.last_ms,
                x,
                y,
                samples: c.n,
            });
        }
    };
    let mut current: Option<Cluster> = None;
    for s in samples {
        if let Some(c) = current.as_mut() {
            let (cx, cy) = c.centroid();
            let near = (s.x - cx).hypot(s.y - cy) <= params.dispersion_px;
            if near && s.t_ms - c.last_ms <= params.max_gap_ms {
                c.sum_x += s.x;
                c.sum_y += s.y;
                c.n += 1;
                c.last_ms = s.t_ms;
                continue;
            }
            close(c, &mut out);
        }
        current = Some(Cluster {
            start_ms: s.t_ms,
            last_ms: s.t_ms,
            sum_x: s.x,
            sum_y: s.y,
            n: 1,
        });
    }
    if let Some(c) = current.as_ref() {
        close(c, &mut out);
    }
    out
}

/// One saccade between each pair of consecutive fixations.
pub fn derive_saccades(fixations: &[Fixation]) -> Vec<Saccade> {
    fixations
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let length = dx.hypot(dy);
            let duration_ms = b.start_ms - a.end_ms;
            let velocity = length / duration_ms.max(MIN_SACCADE_DURATION_MS);
            let slope = if dx != 0.0 {
                dy / dx
            } else if dy > 0.0 {
                f64::INFINITY
            } else if dy < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            };
            let orientation_deg = dy.atan2(dx).to_degrees().rem_euclid(360.0);
            Saccade {
                from: (a.x, a.y),
                to: (b.x, b.y),
                length,
                duration_ms,
                velocity,
                slope,
                orientation_deg: if orientation_deg >= 360.0 { 0.0 } else { orientation_deg },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GazeSample;

    const PERIOD: f64 = 1000.0 / 60.0;

    fn trace(points: &[(f64, f64, usize)]) -> GazeTrace {
        // (x, y, n_samples) segments at 60 Hz
        let mut samples = Vec::new();
        let mut k = 0usize;
        for &(x, y, n) in points {
            for _ in 0..n {
                samples.push(GazeSample { t_ms: k as f64 * PERIOD, x, y });
                k += 1;
            }
        }
        GazeTrace::new("r", "v", samples)
    }

    #[test]
    fn single_stable_cluster() {
        // 10 samples span 150 ms
        let f = detect_fixations(&trace(&[(100.0, 100.0, 10)]), &FixationParams::default());
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].x, f[0].y), (100.0, 100.0));
        assert!(f[0].duration_ms() >= 150.0 - 1e-9);
    }

    #[test]
    fn short_cluster_rejected() {
        // 80 ms at one point, then a jump
        let f = detect_fixations(&trace(&[(100.0, 100.0, 5), (600.0, 400.0, 1)]), &FixationParams::default());
        assert!(f.is_empty());
    }

    #[test]
    fn two_clusters_one_saccade() {
        // 13 samples span 200 ms
        let t = trace(&[(100.0, 100.0, 13), (400.0, 100.0, 13)]);
        let f = detect_fixations(&t, &FixationParams::default());
        assert_eq!(f.len(), 2);
        let s = derive_saccades(&f);
        assert_eq!(s.len(), 1);
        assert!((s[0].length - 300.0).abs() < 1e-9);
        assert!((s[0].duration_ms - PERIOD).abs() < 1e-9);
    }

    #[test]
    fn off_screen_trace_has_no_fixations() {
        let t = trace(&[(-50.0, 100.0, 30), (2000.0, 100.0, 30)]);
        assert!(detect_fixations(&t, &FixationParams::default()).is_empty());
        assert!(detect_fixations(&trace(&[(1.0, 1.0, 1)]), &FixationParams::default()).is_empty());
    }

    #[test]
    fn temporal_gap_splits_clusters() {
        let mut t = trace(&[(100.0, 100.0, 12)]);
        let mut later = trace(&[(100.0, 100.0, 12)]).samples;
        later.iter_mut().for_each(|s| s.t_ms += 10_000.0);
        t.samples.extend(later);
        let f = detect_fixations(&t, &FixationParams::default());
        assert_eq!(f.len(), 2);
        assert!(f[0].end_ms < f[1].start_ms);
    }

    fn fix(start: f64, end: f64, x: f64, y: f64) -> Fixation {
        Fixation { start_ms: start, end_ms: end, x, y, samples: 2 }
    }

    #[test]
    fn saccade_geometry() {
        let s = derive_saccades(&[fix(0.0, 100.0, 0.0, 0.0), fix(130.0, 300.0, 300.0, 400.0)]);
        assert!((s[0].length - 500.0).abs() < 1e-12);
        assert!((s[0].velocity - 500.0 / 30.0).abs() < 1e-12);
        let s = derive_saccades(&[fix(0.0, 100.0, 0.0, 0.0), fix(150.0, 300.0, 100.0, 0.0)]);
        assert_eq!((s[0].orientation_deg, s[0].slope), (0.0, 0.0));
        let s = derive_saccades(&[fix(0.0, 100.0, 0.0, 0.0), fix(100.0, 300.0, 0.0, -50.0)]);
        assert_eq!(s[0].slope, f64::NEG_INFINITY);
        assert!((s[0].orientation_deg - 270.0).abs() < 1e-12);
        assert_eq!(s[0].velocity, 50.0);
        assert!(derive_saccades(&[fix(0.0, 1.0, 0.0, 0.0)]).is_empty());
    }

    #[test]
    fn saccade_durations_are_inter_fixation_gaps() {
        let fixes: Vec<Fixation> = (0..5)
            .map(|i| fix(i as f64 * 300.0, i as f64 * 300.0 + 150.0 + i as f64, i as f64 * 90.0, 0.0))
            .collect();
        let s = derive_saccades(&fixes);
        assert_eq!(s.len(), 4);
        for (i, sac) in s.iter().enumerate() {
            assert_eq!(sac.duration_ms, fixes[i + 1].start_ms - fixes[i].end_ms);
        }
    }
}
