//! Image-processing primitives shared by the fusion enhancer and the metrics.
//!
//! Everything works on unit-range `f64` values and pads with reflection
//! (`dcb|abcd|cba`) at the borders.

mod canny;
pub mod color;
mod filters;
mod pyramid;
mod saliency;

pub use canny::{canny, EdgeMap, CANNY_HIGH, CANNY_LOW};
pub use filters::{gaussian_blur, laplacian, separable, sobel, sobel_magnitude, BINOMIAL5};
pub use pyramid::{gaussian_pyramid, laplacian_pyramid, reconstruct, Pyramid};
pub use saliency::saliency_map;

use crate::error::{dim, Error, Result};
use crate::tensor::{Real, Tensor};

/// Single-channel plane, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(dim("plane", format!("{} values for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Reads with reflected coordinates.
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Reflects an index into `0..n` without repeating the edge sample.
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Three-channel image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRGB {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(dim("image", format!("{} pixels for {width}x{height}", pixels.len())));
        }
        if pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range {
                op: "image",
                detail: "pixel values must lie in [0, 1]".into(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn from_fn_clamped(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = f(x, y);
                pixels.push(p.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }));
            }
        }
        Self { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn_clamped(width, height, |_, _| rgb)
    }

    pub fn from_planes(planes: &[Plane; 3]) -> Result<Self> {
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(dim("image", "channel planes differ in extent"));
        }
        Ok(Self::from_fn_clamped(w, h, |x, y| {
            let i = y * w + x;
            [planes[0].data[i], planes[1].data[i], planes[2].data[i]]
        }))
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(dim("image", format!("{} bytes for {width}x{height} RGB", bytes.len())));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        Self::new(width, height, pixels)
    }

    /// Rounds to 8-bit per channel.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    /// Snaps values to the 8-bit grid.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("valid dimensions")
    }

    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|p| p[c]).collect(),
        }
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.channel(0), self.channel(1), self.channel(2)]
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = self.pixels.len() as f64;
        let mut m = [0.0; 3];
        for p in &self.pixels {
            for c in 0..3 {
                m[c] += p[c];
            }
        }
        m.map(|v| v / n)
    }

    /// Largest pairwise gap between channel means.
    pub fn channel_mean_gap(&self) -> f64 {
        let m = self.channel_means();
        let hi = m.iter().cloned().fold(f64::MIN, f64::max);
        let lo = m.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo
    }

    pub fn max_abs_diff(&self, other: &ImageRGB) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn_clamped(self.width, self.height, |x, y| {
            self.pixels[y * self.width + (self.width - 1 - x)]
        })
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn_clamped(self.width, self.height, |x, y| {
            self.pixels[(self.height - 1 - y) * self.width + x]
        })
    }
}

/// Stacks images into an `N x 3 x H x W` tensor scaled to `[-1, 1]`.
pub fn images_to_tensor<T: Real>(imgs: &[ImageRGB]) -> Result<Tensor<T>> {
    let first = imgs.first().ok_or_else(|| dim("images_to_tensor", "no images"))?;
    let (w, h) = (first.width, first.height);
    if imgs.iter().any(|i| (i.width, i.height) != (w, h)) {
        return Err(dim("images_to_tensor", "images differ in extent"));
    }
    Ok(Tensor::from_fn([imgs.len(), 3, h, w], |[n, c, y, x]| {
        T::of(imgs[n].pixels[y * w + x][c] * 2.0 - 1.0)
    }))
}

/// Inverse of [`images_to_tensor`], clamping into `[0, 1]`.
pub fn tensor_to_images<T: Real>(t: &Tensor<T>) -> Result<Vec<ImageRGB>> {
    let [n, c, h, w] = t.shape();
    if c != 3 {
        return Err(dim("tensor_to_images", format!("expected 3 channels, got {c}")));
    }
    Ok((0..n)
        .map(|i| {
            ImageRGB::from_fn_clamped(w, h, |x, y| {
                std::array::from_fn(|ch| (t.at([i, ch, y, x]).as_f64() + 1.0) / 2.0)
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip() {
        let img = ImageRGB::from_fn_clamped(5, 3, |x, y| [x as f64 / 4.0, y as f64 / 2.0, 0.25]);
        let t: Tensor<f64> = images_to_tensor(&[img.clone()]).unwrap();
        assert_eq!(t.shape(), [1, 3, 3, 5]);
        assert!(tensor_to_images(&t).unwrap()[0].max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(-3, 2), 1);
        assert_eq!(reflect(7, 1), 0);
    }

    #[test]
    fn image_validation() {
        assert!(ImageRGB::new(1, 1, vec![[0.0, 1.2, 0.0]]).is_err());
        assert!(ImageRGB::new(2, 1, vec![[0.0; 3]]).is_err());
        assert!(Plane::new(0, 1, vec![]).is_err());
    }
}
