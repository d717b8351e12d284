//! Gist scene descriptor: mean Gabor energy over a coarse spatial grid.

use std::f64::consts::PI;
use std::sync::Arc;

use image::RgbImage;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::imageops::{luma, resize_for_analysis, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GistConfig {
    /// Working resolution (square).
    pub image_size: usize,
    /// Symmetric reflection padding added on every side before filtering.
    pub padding: usize,
    pub scales: usize,
    pub orientations: usize,
    /// Blocks per side of the pooling grid.
    pub blocks: usize,
    /// Cut-off of the whitening high-pass, in cycles per image.
    pub prefilter_fc: f64,
    /// Divide by local contrast after whitening. Breaks linearity in intensity.
    pub contrast_normalize: bool,
}

impl Default for GistConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            padding: 32,
            scales: 4,
            orientations: 8,
            blocks: 4,
            prefilter_fc: 4.0,
            contrast_normalize: false,
        }
    }
}

impl GistConfig {
    pub fn dim(&self) -> usize {
        self.scales * self.orientations * self.blocks * self.blocks
    }

    fn fft_size(&self) -> usize {
        self.image_size + 2 * self.padding
    }
}

/// Frequency-domain Gabor transfer functions on the padded FFT grid, in unshifted layout.
pub struct GaborBank {
    n: usize,
    scales: usize,
    orientations: usize,
    filters: Vec<Vec<f64>>,
}

/// Signed integer frequency of FFT bin `k` on an `n`-point grid.
fn freq(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn wrap_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

impl GaborBank {
    pub fn new(n: usize, scales: usize, orientations: usize) -> Self {
        let mut filters = Vec::with_capacity(scales * orientations);
        for s in 0..scales {
            let f0 = 0.3 / 1.85f64.powi(s as i32);
            for j in 0..orientations {
                let theta = PI * j as f64 / orientations as f64;
                let width = 2.0 * PI * (16.0 * (orientations * orientations) as f64 / 1024.0);
                let mut g = vec![0.0; n * n];
                for v in 0..n {
                    let fy = freq(v, n);
                    for u in 0..n {
                        let fx = freq(u, n);
                        let fr = fx.hypot(fy);
                        let t = wrap_angle(fy.atan2(fx) - theta);
                        g[v * n + u] = (-3.5 * (fr / n as f64 / f0 - 1.0).powi(2) - width * t * t).exp();
                    }
                }
                g[0] = 0.0;
                filters.push(g);
            }
        }
        Self {
            n,
            scales,
            orientations,
            filters,
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Transfer function of filter `(scale, orientation)`, row-major over `(fy, fx)` bins.
    pub fn filter(&self, scale: usize, orientation: usize) -> &[f64] {
        &self.filters[scale * self.orientations + orientation]
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for y in 0..n {
            for x in y + 1..n {
                buf.swap(y * n + x, x * n + y);
            }
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inv } else { &self.fwd };
        fft.process(buf);
        self.transpose(buf);
        fft.process(buf);
        self.transpose(buf);
        if inverse {
            let scale = 1.0 / (self.n * self.n) as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
        }
    }
}

/// Precomputed filters and FFT plans; cheap to share across threads.
pub struct GistExtractor {
    config: GistConfig,
    bank: GaborBank,
    lowpass: Vec<f64>,
    fft: Fft2,
}

impl GistExtractor {
    pub fn new(config: GistConfig) -> Self {
        let n = config.fft_size();
        let s1 = config.prefilter_fc / 2f64.ln().sqrt();
        let mut lowpass = vec![0.0; n * n];
        for v in 0..n {
            for u in 0..n {
                let (fx, fy) = (freq(u, n), freq(v, n));
                lowpass[v * n + u] = (-(fx * fx + fy * fy) / (s1 * s1)).exp();
            }
        }
        Self {
            bank: GaborBank::new(n, config.scales, config.orientations),
            config,
            lowpass,
            fft: Fft2::new(n),
        }
    }

    pub fn config(&self) -> &GistConfig {
        &self.config
    }

    pub fn bank(&self) -> &GaborBank {
        &self.bank
    }

    /// Descriptor of an RGB image (converted to luma and resized to the working resolution).
    pub fn describe(&self, img: &RgbImage) -> Vec<f64> {
        let g = luma(img);
        let size = self.config.image_size;
        self.describe_plane(&resize_for_analysis(&g, size, size))
    }

    /// Descriptor of a grayscale plane already at the working resolution.
    pub fn describe_plane(&self, img: &Plane) -> Vec<f64> {
        let size = self.config.image_size;
        assert_eq!((img.width, img.height), (size, size), "plane must be {size}x{size}");
        let n = self.config.fft_size();
        let pad = self.config.padding;
        let mut spec: Vec<Complex64> = (0..n * n)
            .map(|i| {
                let (x, y) = (reflect(i % n, pad, size), reflect(i / n, pad, size));
                Complex64::new(img.get(x, y), 0.0)
            })
            .collect();
        self.fft.run(&mut spec, false);
        for (c, lp) in spec.iter_mut().zip(&self.lowpass) {
            *c *= 1.0 - lp;
        }
        if self.config.contrast_normalize {
            self.normalize_contrast(&mut spec);
        }

        let blocks = self.config.blocks;
        let mut out = Vec::with_capacity(self.config.dim());
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for filter in &self.bank.filters {
            for ((b, s), g) in buf.iter_mut().zip(&spec).zip(filter) {
                *b = s * g;
            }
            self.fft.run(&mut buf, true);
            let mut sums = vec![0.0; blocks * blocks];
            let mut counts = vec![0usize; blocks * blocks];
            for y in 0..size {
                let by = y * blocks / size;
                let row = &buf[(y + pad) * n + pad..(y + pad) * n + pad + size];
                for (x, c) in row.iter().enumerate() {
                    let k = by * blocks + x * blocks / size;
                    sums[k] += c.norm();
                    counts[k] += 1;
                }
            }
            out.extend(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64));
        }
        out
    }

    fn normalize_contrast(&self, spec: &mut [Complex64]) {
        let mut white = spec.to_vec();
        self.fft.run(&mut white, true);
        let mut sq: Vec<Complex64> = white.iter().map(|c| Complex64::new(c.re * c.re, 0.0)).collect();
        self.fft.run(&mut sq, false);
        for (c, lp) in sq.iter_mut().zip(&self.lowpass) {
            *c *= lp;
        }
        self.fft.run(&mut sq, true);
        for (w, s) in white.iter_mut().zip(&sq) {
            *w = Complex64::new(w.re / (0.2 + s.norm().sqrt()), 0.0);
        }
        self.fft.run(&mut white, false);
        spec.copy_from_slice(&white);
    }
}

/// Symmetric reflection of padded coordinate `p` into `[0, size)`.
fn reflect(p: usize, pad: usize, size: usize) -> usize {
    let i = p as isize - pad as isize;
    let s = size as isize;
    let period = 2 * s;
    let m = i.rem_euclid(period);
    (if m < s { m } else { period - 1 - m }) as usize
}

/// 512-dim descriptor with the default configuration.
pub fn gist(img: &RgbImage) -> Vec<f64> {
    GistExtractor::new(GistConfig::default()).describe(img)
}
