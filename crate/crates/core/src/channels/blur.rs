//! Separable Gaussian blur with replicate-border padding.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::imageops::{downsample_area, planes_to_rgb, rgb_planes, Plane};

/// Blur width as a fraction of frame width.
pub const CONSTANT_BLUR_SIGMA_FRACTION: f64 = 0.2;

/// Truncated, renormalised 1-D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl BlurKernel {
    /// Kernel with support `[-ceil(3σ), ceil(3σ)]`, weights summing to one.
    pub fn new(sigma: f64) -> Self {
        assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive, got {sigma}");
        let radius = (3.0 * sigma).ceil() as usize;
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Self {
            sigma,
            radius,
            weights,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Weights indexed from `-radius` to `+radius`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// How the convolution is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurMode {
    /// Full-resolution separable convolution.
    Exact,
    /// Blur at `1/factor` resolution, then bilinear upsampling.
    Downsampled { factor: usize },
    /// `Downsampled { factor: 8 }` when σ ≥ 16 px, otherwise `Exact`.
    #[default]
    Auto,
}

const AUTO_DOWNSAMPLE_MIN_SIGMA: f64 = 16.0;
const AUTO_DOWNSAMPLE_FACTOR: usize = 8;

fn convolve_rows(src: &Plane, kernel: &BlurKernel) -> Plane {
    let r = kernel.radius as isize;
    let w = src.width as isize;
    let mut out = Plane::zeros(src.width, src.height);
    let mut padded = vec![0.0; src.width + 2 * kernel.radius];
    for y in 0..src.height {
        let row = &src.data[y * src.width..(y + 1) * src.width];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = (i as isize - r).clamp(0, w - 1) as usize;
            *p = row[x];
        }
        let dst = &mut out.data[y * src.width..(y + 1) * src.width];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = padded[x..x + kernel.weights.len()]
                .iter()
                .zip(&kernel.weights)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

fn transpose(src: &Plane) -> Plane {
    let mut out = Plane::zeros(src.height, src.width);
    for y in 0..src.height {
        for x in 0..src.width {
            out.data[x * src.height + y] = src.data[y * src.width + x];
        }
    }
    out
}

/// Exact separable blur of one plane (rows, then columns), replicate borders.
pub fn blur_plane(src: &Plane, kernel: &BlurKernel) -> Plane {
    let rows = convolve_rows(src, kernel);
    transpose(&convolve_rows(&transpose(&rows), kernel))
}

fn blur_plane_mode(src: &Plane, sigma: f64, mode: BlurMode) -> Plane {
    let mode = match mode {
        BlurMode::Auto if sigma >= AUTO_DOWNSAMPLE_MIN_SIGMA => BlurMode::Downsampled {
            factor: AUTO_DOWNSAMPLE_FACTOR,
        },
        BlurMode::Auto => BlurMode::Exact,
        m => m,
    };
    match mode {
        BlurMode::Downsampled { factor } if factor > 1 => {
            let small = downsample_area(src, factor);
            let blurred = blur_plane(&small, &BlurKernel::new(sigma / factor as f64));
            upsample_extrapolating(&blurred, src.width, src.height)
        }
        _ => blur_plane(src, &BlurKernel::new(sigma)),
    }
}

fn extrapolating_pos(pos: f64, len: usize) -> (usize, usize, f64) {
    if len == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (pos.floor().max(0.0) as usize).min(len - 2);
    (i0, i0 + 1, pos - i0 as f64)
}

/// Bilinear upsampling from cell centres that extends the outermost slopes linearly
/// instead of clamping.
fn upsample_extrapolating(src: &Plane, width: usize, height: usize) -> Plane {
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|x| extrapolating_pos((x as f64 + 0.5) * sx - 0.5, src.width))
        .collect();
    let mut out = Plane::zeros(width, height);
    for y in 0..height {
        let (y0, y1, fy) = extrapolating_pos((y as f64 + 0.5) * sy - 0.5, src.height);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
            let bot = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Gaussian blur of an RGB image; intermediate values stay in floating point and
/// are rounded once at the end.
pub fn gaussian_blur(img: &RgbImage, sigma: f64, mode: BlurMode) -> RgbImage {
    let [r, g, b] = rgb_planes(img);
    planes_to_rgb(&[
        blur_plane_mode(&r, sigma, mode),
        blur_plane_mode(&g, sigma, mode),
        blur_plane_mode(&b, sigma, mode),
    ])
}

/// σ used by the constant-blur channel for a frame of the given width.
pub fn constant_blur_sigma(frame_width: u32) -> f64 {
    CONSTANT_BLUR_SIGMA_FRACTION * f64::from(frame_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn kernel_radius_and_mass() {
        let k = BlurKernel::new(273.2);
        assert_eq!(k.radius(), 820);
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((constant_blur_sigma(1366) - 273.2).abs() < 1e-9);
    }

    #[test]
    fn uniform_frame_is_fixed_point() {
        let img = RgbImage::from_pixel(40, 30, image::Rgb([128, 64, 200]));
        for mode in [BlurMode::Exact, BlurMode::Downsampled { factor: 4 }] {
            assert_eq!(gaussian_blur(&img, 8.0, mode), img);
        }
    }

    #[test]
    fn single_pixel_matches_kernel_peak() {
        // Direct evaluation of the separable kernel at the centre: w0² · 255.
        let sigma = 1.5;
        let mut img = RgbImage::new(21, 21);
        img.put_pixel(10, 10, image::Rgb([255, 255, 255]));
        let out = gaussian_blur(&img, sigma, BlurMode::Exact);
        let radius = (3.0 * sigma).ceil() as i32;
        let norm: f64 = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).sum();
        let peak = 255.0 / (norm * norm);
        assert!((f64::from(out.get_pixel(10, 10)[0]) - peak).abs() <= 1.0);
    }

    #[test]
    fn separable_matches_direct_2d_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let sigma = rng.random_range(0.5..6.0);
            let img = RgbImage::from_fn(32, 32, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]));
            let fast = gaussian_blur(&img, sigma, BlurMode::Exact);
            let r = (3.0 * sigma).ceil() as i64;
            let w1: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
            let s: f64 = w1.iter().sum();
            for y in 0..32i64 {
                for x in 0..32i64 {
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let sx = (x + dx).clamp(0, 31) as u32;
                                let sy = (y + dy).clamp(0, 31) as u32;
                                acc += w1[(dy + r) as usize] * w1[(dx + r) as usize] / (s * s)
                                    * f64::from(img.get_pixel(sx, sy)[c]);
                            }
                        }
                        let got = f64::from(fast.get_pixel(x as u32, y as u32)[c]);
                        assert!((got - acc).abs() <= 1.0, "trial {trial} ({x},{y},{c}): {got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn downsampled_mode_tracks_exact_on_smooth_content() {
        let img = RgbImage::from_fn(128, 96, |x, y| image::Rgb([(x * 2) as u8, (y * 2) as u8, ((x + y) % 256) as u8]));
        let sigma = 25.6;
        let exact = gaussian_blur(&img, sigma, BlurMode::Exact);
        let fast = gaussian_blur(&img, sigma, BlurMode::Downsampled { factor: 8 });
        let diffs: Vec<i32> = exact
            .pixels()
            .zip(fast.pixels())
            .flat_map(|(a, b)| (0..3).map(move |c| (i32::from(a[c]) - i32::from(b[c])).abs()))
            .collect();
        let max_diff = *diffs.iter().max().unwrap();
        let mean_diff = diffs.iter().sum::<i32>() as f64 / diffs.len() as f64;
        assert!(max_diff <= 6, "max diff {max_diff}");
        assert!(mean_diff <= 1.5, "mean diff {mean_diff}");
    }
}
