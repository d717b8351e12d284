//! Seeded inputs for the kernel benchmarks.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth gradient plus uniform noise.
pub fn noisy_image(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(width, height, |x, y| {
        let base = (x * 255 / width.max(1) + y * 255 / height.max(1)) / 2;
        let px = |r: &mut ChaCha8Rng| (base as i32 + r.random_range(-20..=20)).clamp(0, 255) as u8;
        Rgb([px(&mut r), px(&mut r), px(&mut r)])
    })
}

/// Two overlapping Gaussian-ish blobs in `dim` dimensions, `n` rows each, labels alternate.
pub fn two_blobs(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let label = i % 2 == 0;
        let shift = if label { 0.75 } else { -0.75 };
        // Sum of uniforms is close enough to normal for timing purposes.
        x.push(
            (0..dim)
                .map(|_| shift + (0..4).map(|_| r.random_range(-1.0..1.0)).sum::<f64>() / 2.0)
                .collect(),
        );
        y.push(label);
    }
    (x, y)
}
