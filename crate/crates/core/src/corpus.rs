//! Synthetic planted-signal corpus.
//!
//! Each video's frames carry its labels only in coarse background structure: a
//! horizontal luminance ramp whose sign encodes valence and a vertical ramp whose
//! sign encodes arousal, plus a per-video low-frequency nuisance wave. High-frequency
//! textured rectangles are scattered on top as label-independent "objects"; they are
//! the only detections. Simulated raters fixate the frame corners, where the ramps
//! are strongest.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detector::{DetectionSidecar, Detection, SidecarFrame, NUM_CLASSES};
use crate::features::{write_binary, FeatureError, FeatureTable, RowKey, FC8_DIM};
use crate::gaze::display_rect;
use crate::model::{
    write_gaze_csv, DatasetManifest, GazeRef, GazeSample, Level, RatingMatrix, ScreenDims, Sidecars, VideoRecord,
};
use crate::{ChannelKind, FRAME_PERIOD_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_videos: usize,
    pub width: u32,
    pub height: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub n_raters: usize,
    /// Half-amplitude of the label ramps, in intensity levels.
    pub signal: f64,
    /// Amplitude of the per-video nuisance wave.
    pub nuisance: f64,
    /// Per-pixel noise standard deviation.
    pub pixel_noise: f64,
    pub objects_per_frame: (usize, usize),
    pub gaze_hz: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_videos: 30,
            width: 128,
            height: 72,
            min_duration_s: 15.0,
            max_duration_s: 30.0,
            n_raters: 3,
            signal: 45.0,
            nuisance: 25.0,
            pixel_noise: 4.0,
            objects_per_frame: (2, 4),
            gaze_hz: 60.0,
            seed: 7,
        }
    }
}

/// An object drawn on a frame and the highest blur level at which it is still detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedObject {
    pub detection: Detection,
    pub survives_to: u32,
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub record: VideoRecord,
    /// One image per sampled frame.
    pub frames: Vec<RgbImage>,
    pub objects: Vec<Vec<PlantedObject>>,
    /// `(rater_id, samples)` in screen pixels.
    pub gaze: Vec<(String, Vec<GazeSample>)>,
}

impl SyntheticVideo {
    /// Detection sidecar covering blur levels `0..=max_level`.
    pub fn detection_sidecar(&self, max_level: u32) -> DetectionSidecar {
        let mut frames = Vec::new();
        for (i, objs) in self.objects.iter().enumerate() {
            for level in 0..=max_level {
                frames.push(SidecarFrame {
                    frame_index: i as u32,
                    blur_level: level,
                    detections: objs.iter().filter(|o| o.survives_to >= level).map(|o| o.detection).collect(),
                });
            }
        }
        DetectionSidecar {
            video_id: self.record.id.clone(),
            frames,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub screen: ScreenDims,
    pub videos: Vec<SyntheticVideo>,
    pub ratings: RatingMatrix,
}

impl Corpus {
    /// Manifest of the corpus as laid out by [`write_corpus`].
    pub fn manifest(&self) -> DatasetManifest {
        let gaze = self
            .videos
            .iter()
            .flat_map(|v| {
                v.gaze.iter().map(|(rater, _)| GazeRef {
                    rater_id: rater.clone(),
                    video_id: v.record.id.clone(),
                    path: PathBuf::from("gaze").join(format!("{rater}_{}.csv", v.record.id)),
                })
            })
            .collect();
        DatasetManifest {
            videos: self.videos.iter().map(|v| v.record.clone()).collect(),
            ratings: self.ratings.clone(),
            gaze,
            sidecars: Sidecars {
                detections: Some("detections".into()),
                features: Some("features".into()),
            },
        }
    }
}

/// Highest blur level any planted object survives to.
pub const MAX_OBJECT_LEVEL: u32 = 2;

fn balanced_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<Level> {
    let mut v: Vec<Level> = (0..n).map(|i| Level::from_high(i < n.div_ceil(2))).collect();
    v.shuffle(rng);
    v
}

fn sign(l: Level) -> f64 {
    if l.is_high() {
        1.0
    } else {
        -1.0
    }
}

fn draw_frame(
    cfg: &CorpusConfig,
    valence: Level,
    arousal: Level,
    wave: (f64, f64, f64, [f64; 3]),
    rng: &mut ChaCha8Rng,
) -> (RgbImage, Vec<PlantedObject>) {
    let (w, h) = (cfg.width, cfg.height);
    let (fx, fy, phase, tint) = wave;
    let noise = Normal::new(0.0, cfg.pixel_noise.max(1e-9)).expect("valid sd");
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let u = (f64::from(x) + 0.5) / f64::from(w) * 2.0 - 1.0;
        let v = (f64::from(y) + 0.5) / f64::from(h) * 2.0 - 1.0;
        let base = 128.0 + cfg.signal * (sign(valence) * u + sign(arousal) * v) / 2.0_f64.sqrt();
        let wv = cfg.nuisance * (std::f64::consts::PI * (fx * u + fy * v) + phase).cos();
        let mut px = [0u8; 3];
        for c in 0..3 {
            px[c] = (base + wv * tint[c] + noise.sample(rng)).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    });

    let n_obj = rng.random_range(cfg.objects_per_frame.0..=cfg.objects_per_frame.1);
    let mut objects = Vec::with_capacity(n_obj);
    for _ in 0..n_obj {
        let ow = rng.random_range(w / 8..=w / 4).max(2);
        let oh = rng.random_range(h / 6..=h / 3).max(2);
        let ox = rng.random_range(0..=w - ow);
        let oy = rng.random_range(0..=h - oh);
        let period = rng.random_range(2..=4u32);
        let colour: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let fill = |x: u32, y: u32| {
            let on = ((x / period) + (y / period)).is_multiple_of(2);
            let a = if on { 110.0 } else { -110.0 };
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = (128.0 + a * (0.5 + 0.5 * colour[c])).round().clamp(0.0, 255.0) as u8;
            }
            Rgb(px)
        };
        for y in oy..oy + oh {
            for x in ox..ox + ow {
                img.put_pixel(x, y, fill(x - ox, y - oy));
            }
        }
        objects.push(PlantedObject {
            detection: Detection::new(
                rng.random_range(0..NUM_CLASSES),
                f64::from(ox),
                f64::from(oy),
                f64::from(ow),
                f64::from(oh),
                rng.random_range(0.5..0.95),
            ),
            survives_to: rng.random_range(0..=MAX_OBJECT_LEVEL),
        });
    }
    (img, objects)
}

/// Corner fixation targets in frame-relative coordinates.
const GAZE_TARGETS: [(f64, f64); 4] = [(0.12, 0.15), (0.88, 0.15), (0.12, 0.85), (0.88, 0.85)];

fn simulate_gaze(cfg: &CorpusConfig, screen: ScreenDims, duration_s: f64, rng: &mut ChaCha8Rng) -> Vec<GazeSample> {
    let (x0, y0, dw, dh) = display_rect(screen, cfg.width, cfg.height);
    let dt = 1000.0 / cfg.gaze_hz;
    let end_ms = duration_s * 1000.0;
    let jitter = Normal::new(0.0, 3.0).expect("valid sd");
    let mut samples = Vec::new();
    let mut k = 0usize;
    let t_of = |k: usize| k as f64 * dt;
    let mut prev: Option<(f64, f64)> = None;
    while t_of(k) < end_ms {
        let (tx, ty) = GAZE_TARGETS[rng.random_range(0..GAZE_TARGETS.len())];
        let cx = x0 + (tx + rng.random_range(-0.05..0.05)) * dw;
        let cy = y0 + (ty + rng.random_range(-0.05..0.05)) * dh;
        if let Some((px, py)) = prev {
            for s in 1..=2 {
                if t_of(k) >= end_ms {
                    break;
                }
                let a = s as f64 / 3.0;
                samples.push(GazeSample {
                    t_ms: t_of(k),
                    x: px + (cx - px) * a,
                    y: py + (cy - py) * a,
                });
                k += 1;
            }
        }
        let n_fix = rng.random_range(12..=30usize);
        for _ in 0..n_fix {
            if t_of(k) >= end_ms {
                break;
            }
            samples.push(GazeSample {
                t_ms: t_of(k),
                x: cx + jitter.sample(rng),
                y: cy + jitter.sample(rng),
            });
            k += 1;
        }
        prev = Some((cx, cy));
    }
    samples
}

fn rating(level: Level, range: (i8, i8), rng: &mut ChaCha8Rng) -> i8 {
    let mid = (range.0 + range.1) / 2;
    if level.is_high() {
        rng.random_range(mid..=range.1)
    } else {
        rng.random_range(range.0..=mid)
    }
}

/// Generates the corpus in memory.
pub fn generate(cfg: &CorpusConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let screen = ScreenDims::default();
    let valence = balanced_labels(cfg.n_videos, &mut rng);
    let arousal = balanced_labels(cfg.n_videos, &mut rng);
    let raters: Vec<String> = (0..cfg.n_raters).map(|r| format!("r{:02}", r + 1)).collect();
    let mut videos = Vec::with_capacity(cfg.n_videos);
    for i in 0..cfg.n_videos {
        let id = format!("ad{i:02}");
        let duration_s = (rng.random_range(cfg.min_duration_s..=cfg.max_duration_s) * 100.0).round() / 100.0;
        let record = VideoRecord {
            id: id.clone(),
            duration_s,
            frame_width: cfg.width,
            frame_height: cfg.height,
            frame_dir: PathBuf::from("frames").join(&id),
            expert_valence: valence[i],
            expert_arousal: arousal[i],
        };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let tint = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
        let wave = (angle.cos(), angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), tint);
        let (frames, objects) = (0..record.frame_count())
            .map(|_| draw_frame(cfg, valence[i], arousal[i], wave, &mut rng))
            .unzip();
        let gaze = raters
            .iter()
            .map(|r| (r.clone(), simulate_gaze(cfg, screen, duration_s, &mut rng)))
            .collect();
        videos.push(SyntheticVideo {
            record,
            frames,
            objects,
            gaze,
        });
    }
    let grid = |f: &dyn Fn(&SyntheticVideo, &mut ChaCha8Rng) -> i8, rng: &mut ChaCha8Rng| -> Vec<Vec<Option<i8>>> {
        raters
            .iter()
            .map(|_| videos.iter().map(|v| Some(f(v, rng))).collect())
            .collect()
    };
    let valence_grid = grid(&|v, r| rating(v.record.expert_valence, RatingMatrix::VALENCE_RANGE, r), &mut rng);
    let arousal_grid = grid(&|v, r| rating(v.record.expert_arousal, RatingMatrix::AROUSAL_RANGE, r), &mut rng);
    let ratings = RatingMatrix {
        raters,
        items: videos.iter().map(|v| v.record.id.clone()).collect(),
        valence: valence_grid,
        arousal: arousal_grid,
    };
    Corpus {
        config: cfg.clone(),
        screen,
        videos,
        ratings,
    }
}

/// Random softmax vectors standing in for classifier posteriors; they carry no label signal.
pub fn noise_fc8(video: &SyntheticVideo, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ video.record.id.bytes().fold(0u64, |h, b| h.wrapping_mul(31) + u64::from(b)));
    let mut table = FeatureTable::new(ChannelKind::Fc8, FC8_DIM);
    for i in 0..video.frames.len() {
        let logits: Vec<f64> = (0..FC8_DIM).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p = e.iter().map(|v| ((v / s) as f32) as f64).collect();
        table
            .insert(RowKey::frame(video.record.id.clone(), i as u32), p)
            .expect("finite softmax row");
    }
    table
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes frames, gaze CSVs, detection and FC8 sidecars and `manifest.json` under `dir`.
/// Returns the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf, CorpusError> {
    let det_dir = dir.join("detections");
    let feat_dir = dir.join("features");
    let gaze_dir = dir.join("gaze");
    for d in [&det_dir, &feat_dir, &gaze_dir] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    for v in &corpus.videos {
        let frame_dir = dir.join(&v.record.frame_dir);
        fs::create_dir_all(&frame_dir).map_err(io_err(&frame_dir))?;
        for (i, img) in v.frames.iter().enumerate() {
            let ms = (FRAME_PERIOD_S * 1000.0) as u64 * i as u64;
            let path = frame_dir.join(format!("{ms:09}.png"));
            img.save(&path).map_err(|e| CorpusError::Encode {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        }
        let det_path = det_dir.join(format!("{}.json", v.record.id));
        v.detection_sidecar(MAX_OBJECT_LEVEL + 1)
            .write(&det_path)
            .map_err(io_err(&det_path))?;
        write_binary(&feat_dir, &noise_fc8(v, corpus.config.seed), &v.record.id)?;
        for (rater, samples) in &v.gaze {
            let path = gaze_dir.join(format!("{rater}_{}.csv", v.record.id));
            write_gaze_csv(&path, samples).map_err(io_err(&path))?;
        }
    }
    let manifest = corpus.manifest();
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json_string()).map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            n_videos: 4,
            min_duration_s: 6.0,
            max_duration_s: 9.0,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.videos[1].frames[0], b.videos[1].frames[0]);
        assert_eq!(a.videos[3].gaze, b.videos[3].gaze);
        assert_eq!(a.ratings, b.ratings);
    }

    #[test]
    fn structure() {
        let c = generate(&small());
        for v in &c.videos {
            assert_eq!(v.frames.len() as u32, v.record.frame_count());
            assert_eq!(v.gaze.len(), 3);
            for (_, s) in &v.gaze {
                assert!(s.windows(2).all(|w| w[1].t_ms > w[0].t_ms));
                assert!(s.last().unwrap().t_ms < v.record.duration_s * 1000.0);
            }
        }
        c.ratings.validate().unwrap();
        let highs = c.videos.iter().filter(|v| v.record.expert_valence.is_high()).count();
        assert_eq!(highs, 2);
    }

    #[test]
    fn sidecar_levels_shrink() {
        let c = generate(&small());
        let sc = c.videos[0].detection_sidecar(MAX_OBJECT_LEVEL + 1);
        let at = |lvl: u32| sc.frames.iter().filter(|f| f.blur_level == lvl).map(|f| f.detections.len()).sum::<usize>();
        assert!(at(0) >= at(1) && at(1) >= at(2));
        assert_eq!(at(MAX_OBJECT_LEVEL + 1), 0);
    }

    #[test]
    fn written_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(&generate(&small()), dir.path()).unwrap();
        let m = crate::model::load_manifest(&path).unwrap();
        assert_eq!(m.videos.len(), 4);
        assert_eq!(m.gaze.len(), 12);
        let frames = crate::model::sample_frames(&m.videos[0]).unwrap();
        assert_eq!(frames.len() as u32, m.videos[0].frame_count());
    }
}
