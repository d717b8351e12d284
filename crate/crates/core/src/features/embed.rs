use image::RgbImage;

/// Area-averaged colour layout descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ThumbnailConfig {
    pub cols: usize,
    pub rows: usize,
}

impl Default for ThumbnailConfig {
    fn default() -> Self {
        Self { cols: 8, rows: 8 }
    }
}

impl ThumbnailConfig {
    pub fn dim(&self) -> usize {
        self.cols * self.rows * 3
    }
}

/// Mean RGB over each cell of a `cols × rows` grid, in `[0, 1]`, cell-major.
pub fn thumbnail(img: &RgbImage, cfg: &ThumbnailConfig) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Vec::with_capacity(cfg.dim());
    for cy in 0..cfg.rows {
        let (y0, y1) = (cy * h / cfg.rows, ((cy + 1) * h / cfg.rows).max(cy * h / cfg.rows + 1).min(h));
        for cx in 0..cfg.cols {
            let (x0, x1) = (cx * w / cfg.cols, ((cx + 1) * w / cfg.cols).max(cx * w / cfg.cols + 1).min(w));
            let mut acc = [0.0f64; 3];
            let mut n = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get_pixel(x as u32, y as u32).0;
                    for c in 0..3 {
                        acc[c] += f64::from(p[c]);
                    }
                    n += 1;
                }
            }
            let n = n.max(1) as f64 * 255.0;
            out.extend(acc.iter().map(|a| a / n));
        }
    }
    out
}
