use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use image::{DynamicImage, ImageFormat};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a uniquely named sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = parent.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn png_bytes(img: impl Into<DynamicImage>) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.into()
        .write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory");
    buf.into_inner()
}

/// `0003.png` for frames, `0003_c01.png` for crops.
pub fn frame_file(frame: u32, crop: Option<u32>) -> String {
    match crop {
        Some(c) => format!("{frame:04}_c{c:02}.png"),
        None => format!("{frame:04}.png"),
    }
}

pub fn parse_frame_file(name: &str) -> Option<(u32, Option<u32>)> {
    let stem = name.strip_suffix(".png")?;
    match stem.split_once("_c") {
        Some((f, c)) => Some((f.parse().ok()?, Some(c.parse().ok()?))),
        None => Some((stem.parse().ok()?, None)),
    }
}

/// Regular files under `dir`, sorted, skipping temp files.
pub fn files_under(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.extension().is_some_and(|e| e == "tmp") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// A scratch tree whose directories replace their live counterparts on commit.
pub struct Staging {
    root: PathBuf,
    out: PathBuf,
}

impl Staging {
    pub fn new(out: &Path, stage: &str) -> io::Result<Self> {
        let root = out.join(".staging").join(stage);
        if root.exists() {
            fs::remove_dir_all(&root)?;
        }
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            out: out.to_path_buf(),
        })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Moves each staged `rel` directory over `out/rel`.
    pub fn commit(self, rels: &[PathBuf]) -> io::Result<()> {
        for rel in rels {
            let (from, to) = (self.root.join(rel), self.out.join(rel));
            if !from.exists() {
                continue;
            }
            if to.exists() {
                fs::remove_dir_all(&to)?;
            }
            if let Some(p) = to.parent() {
                fs::create_dir_all(p)?;
            }
            fs::rename(&from, &to)?;
        }
        fs::remove_dir_all(&self.root)
    }
}
