use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use affectlens_core::eval::EvalReport;
use affectlens_core::features::{read_binary, sidecar_paths};
use affectlens_core::model::load_manifest;
use affectlens_core::ChannelKind;
use image::GenericImageView;

struct Run {
    code: i32,
    stderr: String,
}

fn affectlens(args: &[&str], cwd: &Path) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_affectlens"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// A small corpus plus a fast CV plan in `run.toml`.
fn workspace(extra_config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let r = affectlens(&["corpus", "data", "--videos", "8"], dir.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    fs::write(
        dir.path().join("run.toml"),
        format!("manifest = \"data/manifest.json\"\n{extra_config}\n[plan]\nrepetitions = 2\nfolds = 2\n"),
    )
    .unwrap();
    dir
}

fn stage(dir: &Path, cmd: &str, extra: &[&str]) -> Run {
    let mut args = vec![cmd, "--config", "run.toml", "--classifiers", "lda"];
    args.extend_from_slice(extra);
    affectlens(&args, dir)
}

fn report(dir: &Path, out: &str) -> EvalReport {
    EvalReport::from_json(&fs::read_to_string(dir.join(out).join("results.json")).unwrap()).unwrap()
}

#[test]
fn constant_blur_toy_run_completes() {
    let w = workspace("");
    let d = w.path();
    for cmd in ["synth", "features", "eval"] {
        let r = stage(d, cmd, &["--channels", "constant_blur"]);
        assert_eq!(r.code, 0, "{cmd}: {}", r.stderr);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/constant_blur/summary.json")).unwrap()).unwrap();
    let m = load_manifest(&d.join("data/manifest.json")).unwrap();
    assert_eq!(summary["images"].as_u64().unwrap(), m.total_frames());
    let rep = report(d, "out");
    assert_eq!(rep.rows.len(), 1);
    assert!(rep.rows[0].cells.iter().flatten().all(Option::is_some));
    assert!(d.join("out/results.csv").exists() && d.join("out/run_meta.json").exists());
}

#[test]
fn missing_detections_give_partial_exit() {
    let w = workspace("");
    let d = w.path();
    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("data/manifest.json")).unwrap()).unwrap();
    m["sidecars"].as_object_mut().unwrap().remove("detections");
    fs::write(d.join("data/nodet.json"), m.to_string()).unwrap();
    let r = affectlens(
        &["synth", "--manifest", "data/nodet.json", "--channels", "object_retained,constant_blur"],
        d,
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("object_retained"));
    assert!(d.join("out/constant_blur/summary.json").exists());
    assert!(!d.join("out/object_retained").exists());
}

#[test]
fn missing_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let r = affectlens(&["synth", "--manifest", "nope.json"], dir.path());
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("nope.json"));
}

#[test]
fn reruns_are_deterministic_and_cached() {
    let w = workspace("");
    let d = w.path();
    let chans = ["--channels", "constant_blur,gist"];
    for out in ["a", "b"] {
        for cmd in ["synth", "features", "eval"] {
            let mut extra = chans.to_vec();
            extra.extend(["--out", out]);
            assert_eq!(stage(d, cmd, &extra).code, 0);
        }
    }
    let csv = |out: &str| fs::read(d.join(out).join("results.csv")).unwrap();
    assert_eq!(csv("a"), csv("b"));
    let meta = |out: &str| fs::read(d.join(out).join("run_meta.json")).unwrap();
    assert_eq!(meta("a"), meta("b"));

    let before = fs::metadata(d.join("a/results.csv")).unwrap().modified().unwrap();
    let mut extra = chans.to_vec();
    extra.extend(["--out", "a"]);
    let r = stage(d, "eval", &extra);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("eval: up to date"), "{}", r.stderr);
    assert_eq!(fs::metadata(d.join("a/results.csv")).unwrap().modified().unwrap(), before);
    assert_eq!(csv("a"), csv("b"));

    // A changed setting invalidates the cache.
    let r = stage(d, "eval", &["--channels", "constant_blur,gist", "--out", "a", "--seed", "5"]);
    assert_eq!(r.code, 0);
    assert!(!r.stderr.contains("eval: up to date"));
}

#[test]
fn oracle_learner_scores_one() {
    let w = workspace("mock_oracle = true\nseed = 3");
    let d = w.path();
    for cmd in ["synth", "features", "eval"] {
        assert_eq!(stage(d, cmd, &["--channels", "video"]).code, 0);
    }
    let rep = report(d, "out");
    for cell in rep.rows[0].cells.iter().flatten() {
        let c = cell.as_ref().unwrap();
        assert_eq!(c.scores.len(), 4);
        assert_eq!(c.mean, 1.0, "{:?}", c.scores);
    }
}

#[test]
fn gaze_stage_writes_histograms_and_statistics() {
    let w = workspace("");
    let d = w.path();
    let r = stage(d, "gaze", &["--channels", "eye_hist,eye_roi"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = load_manifest(&d.join("data/manifest.json")).unwrap();
    let roster = m.rater_roster();
    for v in &m.videos {
        let (bin, _) = sidecar_paths(&d.join("out/features"), ChannelKind::EyeHist, &v.id);
        let (header, rows) = read_binary(&bin).unwrap();
        assert_eq!(header.dim, 1666 * roster.len());
        assert_eq!(rows.len(), 1);
        let heatmaps = fs::read_dir(d.join("out/gaze/heatmaps").join(&v.id)).unwrap().count();
        assert_eq!(heatmaps as u32, v.frame_count());
    }
    assert_eq!(stage(d, "stats", &[]).code, 0);
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/agreement.json")).unwrap()).unwrap();
    assert_eq!(a["n_raters"], roster.len());
    assert!(!a["agreement"].as_array().unwrap().is_empty());
}

#[test]
fn off_screen_gaze_gives_no_fixations_and_black_roi() {
    let w = workspace("");
    let d = w.path();
    let m = load_manifest(&d.join("data/manifest.json")).unwrap();
    let target = &m.videos[0].id;
    for g in m.gaze.iter().filter(|g| &g.video_id == target) {
        let rows: String = (0..600).map(|i| format!("{},{},{}\n", i * 16, -40.0, 300.0)).collect();
        fs::write(&g.path, format!("t_ms,x_px,y_px\n{rows}")).unwrap();
    }
    assert_eq!(stage(d, "gaze", &["--channels", "eye_roi"]).code, 0);
    for g in m.gaze.iter().filter(|g| &g.video_id == target) {
        let name = format!("{}_{}.csv", g.rater_id, target);
        let text = fs::read_to_string(d.join("out/gaze/fixations").join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{text}");
    }
    let roi_dir: PathBuf = d.join("out/eye_roi").join(target);
    let mut n = 0;
    for entry in fs::read_dir(roi_dir).unwrap() {
        let img = image::open(entry.unwrap().path()).unwrap();
        assert!(img.pixels().all(|(_, _, p)| p.0[..3] == [0, 0, 0]));
        n += 1;
    }
    assert_eq!(n, m.videos[0].frame_count());
}

#[test]
fn full_run_renders_report() {
    let w = workspace("");
    let d = w.path();
    let r = stage(d, "run", &["--channels", "constant_blur,eye_hist"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let md = fs::read_to_string(d.join("out/report.md")).unwrap();
    assert!(md.contains("| Constant Blur | LDA |"));
    assert!(md.contains("| Eye Hist | LDA |"));
    assert!(md.contains("## Rater agreement"));
    let resolved = Command::new(env!("CARGO_BIN_EXE_affectlens"))
        .args(["config", "--config", "run.toml", "--seed", "11"])
        .current_dir(d)
        .output()
        .unwrap();
    let text = String::from_utf8(resolved.stdout).unwrap();
    assert!(text.contains("seed = 11") && text.contains("folds = 2"), "{text}");
}

fn edit_json(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, v.to_string()).unwrap();
}

#[test]
fn adaptive_blur_with_empty_detector_stops_after_one_pass() {
    let w = workspace("");
    let d = w.path();
    for entry in fs::read_dir(d.join("data/detections")).unwrap() {
        edit_json(&entry.unwrap().path(), |v| {
            for frame in v["frames"].as_array_mut().unwrap() {
                frame["detections"] = serde_json::json!([]);
            }
        });
    }
    let r = stage(d, "synth", &["--channels", "adaptive_blur"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/adaptive_blur/summary.json")).unwrap()).unwrap();
    let hist = summary["blur_iterations"].as_object().unwrap();
    assert_eq!(hist.keys().collect::<Vec<_>>(), ["1"]);
    assert_eq!(hist["1"], summary["images"]);
}

#[test]
fn incomplete_ratings_omit_kappa_but_keep_alpha() {
    let w = workspace("");
    let d = w.path();
    edit_json(&d.join("data/manifest.json"), |m| {
        m["ratings"]["valence"][0][1] = serde_json::Value::Null;
        m["ratings"]["arousal"][2][0] = serde_json::Value::Null;
    });
    assert_eq!(stage(d, "stats", &[]).code, 0);
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/agreement.json")).unwrap()).unwrap();
    for r in a["agreement"].as_array().unwrap() {
        match r["coefficient"].as_str().unwrap() {
            "KrippendorffAlpha" => assert!(r["value"].is_f64(), "{r}"),
            _ => assert!(r["value"].is_null() && r["omitted"].is_string(), "{r}"),
        }
    }
    assert!(a["correlations"].as_array().is_some_and(|c| !c.is_empty()));
    assert_eq!(a["comparisons"].as_array().unwrap().len(), 2);
}
