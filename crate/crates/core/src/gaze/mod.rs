//! Gaze analytics: fixation/saccade segmentation, heatmaps and histogram features.

mod fixation;
mod heatmap;
mod histogram;

pub use fixation::{derive_saccades, detect_fixations, Fixation, FixationParams, Saccade, MIN_SACCADE_DURATION_MS};
pub use heatmap::{
    accumulate_coarse, build_heatmap, build_heatmap_with, coarse_dims, coarse_heat, display_rect, map_to_frame,
    restrict_to_display, smooth_coarse, HeatSource, Heatmap, HeatmapParams, HEAT_MAX,
};
pub use histogram::{
    gaze_histogram_features, minmax_histogram, GazeHistFeature, GazeHistParams, RaterEvents, RaterHistograms,
    SpatialGrid,
};

use crate::model::GazeTrace;

/// Fixations and saccades of one trace.
pub fn segment(trace: &GazeTrace, params: &FixationParams) -> RaterEvents {
    let fixations = detect_fixations(trace, params);
    let saccades = derive_saccades(&fixations);
    RaterEvents { fixations, saccades }
}

/// CSV with header `rater,video,start_ms,end_ms,x,y`.
pub fn fixations_csv(rater: &str, video: &str, fixations: &[Fixation]) -> String {
    let mut out = String::from("rater,video,start_ms,end_ms,x,y\n");
    for f in fixations {
        out.push_str(&format!("{rater},{video},{},{},{},{}\n", f.start_ms, f.end_ms, f.x, f.y));
    }
    out
}

/// CSV with header `rater,video,from_x,from_y,to_x,to_y,length,duration_ms,velocity,slope,orientation_deg`.
pub fn saccades_csv(rater: &str, video: &str, saccades: &[Saccade]) -> String {
    let mut out = String::from("rater,video,from_x,from_y,to_x,to_y,length,duration_ms,velocity,slope,orientation_deg\n");
    for s in saccades {
        out.push_str(&format!(
            "{rater},{video},{},{},{},{},{},{},{},{},{}\n",
            s.from.0, s.from.1, s.to.0, s.to.1, s.length, s.duration_ms, s.velocity, s.slope, s.orientation_deg
        ));
    }
    out
}
