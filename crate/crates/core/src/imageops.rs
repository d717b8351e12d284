//! Small float-image helpers shared by the blur, heatmap and Gist code.

use image::RgbImage;

/// Single-channel float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Splits an RGB image into three float planes.
pub fn rgb_planes(img: &RgbImage) -> [Plane; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c].data[i] = f64::from(px[c]);
        }
    }
    planes
}

/// Recombines three planes, rounding and saturating to 8 bits.
pub fn planes_to_rgb(planes: &[Plane; 3]) -> RgbImage {
    let (w, h) = (planes[0].width, planes[0].height);
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            px[c] = quantize(planes[c].data[i]);
        }
    }
    img
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// ITU-R BT.601 luma.
pub fn luma(img: &RgbImage) -> Plane {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Plane::zeros(w, h);
    for (i, px) in img.pixels().enumerate() {
        out.data[i] = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
    }
    out
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(src: &Plane, width: usize, height: usize) -> Plane {
    if src.width == width && src.height == height {
        return src.clone();
    }
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|x| sample_pos((x as f64 + 0.5) * sx - 0.5, src.width))
        .collect();
    let mut out = Plane::zeros(width, height);
    for y in 0..height {
        let (y0, y1, fy) = sample_pos((y as f64 + 0.5) * sy - 0.5, src.height);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
            let bot = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn sample_pos(pos: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let p = pos.clamp(0.0, max);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, p - i0 as f64)
}

/// Box-averages `factor × factor` blocks; partial blocks at the border average what they cover.
pub fn downsample_area(src: &Plane, factor: usize) -> Plane {
    let w = src.width.div_ceil(factor);
    let h = src.height.div_ceil(factor);
    let mut out = Plane::zeros(w, h);
    for by in 0..h {
        for bx in 0..w {
            let (mut sum, mut n) = (0.0, 0usize);
            for y in by * factor..((by + 1) * factor).min(src.height) {
                for x in bx * factor..((bx + 1) * factor).min(src.width) {
                    sum += src.get(x, y);
                    n += 1;
                }
            }
            out.set(bx, by, sum / n as f64);
        }
    }
    out
}

/// Resizes for analysis: box pre-filtering on large reductions, then bilinear.
pub fn resize_for_analysis(src: &Plane, width: usize, height: usize) -> Plane {
    let factor = (src.width / width).min(src.height / height);
    if factor >= 2 {
        resize_bilinear(&downsample_area(src, factor), width, height)
    } else {
        resize_bilinear(src, width, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_preserves_constant() {
        let p = Plane::from_fn(7, 5, |_, _| 42.0);
        let r = resize_bilinear(&p, 16, 9);
        assert!(r.data.iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn area_downsample_averages_blocks() {
        let p = Plane::from_fn(4, 2, |x, _| x as f64);
        let d = downsample_area(&p, 2);
        assert_eq!(d.data, vec![0.5, 2.5]);
    }

    #[test]
    fn planes_round_trip() {
        let img = RgbImage::from_fn(3, 2, |x, y| image::Rgb([x as u8 * 50, y as u8 * 70, 9]));
        assert_eq!(planes_to_rgb(&rgb_planes(&img)), img);
    }
}
