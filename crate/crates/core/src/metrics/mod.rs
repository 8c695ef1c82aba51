//! No-reference underwater image quality: UCIQE and UIQM with its
//! colourfulness, sharpness and contrast components.

mod report;

pub use report::{MetricReport, ScoredImage, Subset, SubsetAggregate};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::imaging::color::{chroma, luma, rgb_to_hsv, to_lab};
use crate::imaging::{sobel_magnitude, ImageRGB, Plane};

/// Coefficients and constants of both metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Weights of chroma spread, lightness contrast and mean saturation.
    pub uciqe_coeffs: [f64; 3],
    /// Divisor applied to the chroma standard deviation.
    pub chroma_norm: f64,
    /// Fraction of pixels averaged at each end of the lightness range.
    pub lightness_tail: f64,
    /// Weights of UICM, UISM and UIConM.
    pub uiqm_coeffs: [f64; 3],
    /// Lower and upper trim fractions for the opponent-channel mean.
    pub trim: [f64; 2],
    pub uicm_coeffs: [f64; 2],
    /// Pixel scale used by the UIQM components.
    pub value_scale: f64,
    pub block: usize,
    pub plip_gamma: f64,
    pub eme_floor: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            uciqe_coeffs: [0.4680, 0.2745, 0.2576],
            chroma_norm: 100.0,
            lightness_tail: 0.01,
            uiqm_coeffs: [0.0282, 0.2953, 3.5753],
            trim: [0.1, 0.1],
            uicm_coeffs: [-0.0268, 0.1586],
            value_scale: 255.0,
            block: 10,
            plip_gamma: 1026.0,
            eme_floor: 1e-4,
        }
    }
}

/// Fewest pixels for which the lightness tails hold at least one sample.
pub const MIN_PIXELS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uciqe {
    pub value: f64,
    /// Normalized chroma standard deviation.
    pub sigma_c: f64,
    /// Normalized lightness contrast.
    pub con_l: f64,
    pub mu_s: f64,
}

impl Uciqe {
    pub fn combine(sigma_c: f64, con_l: f64, mu_s: f64, c: &[f64; 3]) -> f64 {
        c[0] * sigma_c + c[1] * con_l + c[2] * mu_s
    }
}

pub fn uciqe(img: &ImageRGB, config: &MetricConfig) -> Result<Uciqe> {
    let n = img.pixels.len();
    if n < MIN_PIXELS {
        return Err(arg("uciqe", format!("{n} pixels; at least {MIN_PIXELS} required")));
    }
    let lab = to_lab(img);
    let chromas = Plane {
        width: img.width,
        height: img.height,
        data: lab.iter().map(|&p| chroma(p)).collect(),
    };
    let sigma_c = chromas.std() / config.chroma_norm;

    let mut light: Vec<f64> = lab.iter().map(|p| p[0]).collect();
    light.sort_by(f64::total_cmp);
    let k = ((n as f64 * config.lightness_tail).floor() as usize).max(1);
    let bottom = light[..k].iter().sum::<f64>() / k as f64;
    let top = light[n - k..].iter().sum::<f64>() / k as f64;
    let con_l = (top - bottom) / 100.0;

    let mu_s = img.pixels.iter().map(|&p| rgb_to_hsv(p)[1]).sum::<f64>() / n as f64;
    Ok(Uciqe {
        value: Uciqe::combine(sigma_c, con_l, mu_s, &config.uciqe_coeffs),
        sigma_c,
        con_l,
        mu_s,
    })
}

/// Mean after dropping `ceil(lo * n)` smallest and `floor(hi * n)` largest samples.
pub fn trimmed_mean(values: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let tl = ((lo * n as f64).ceil() as usize).min(n);
    let tr = ((hi * n as f64).floor() as usize).min(n - tl);
    let kept = &v[tl..n - tr];
    if kept.is_empty() {
        return 0.0;
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Mean squared deviation of all samples about `mu`.
fn spread(values: &[f64], mu: f64) -> f64 {
    values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64
}

pub fn uicm(img: &ImageRGB, config: &MetricConfig) -> f64 {
    let s = config.value_scale;
    let rg: Vec<f64> = img.pixels.iter().map(|p| s * (p[0] - p[1])).collect();
    let yb: Vec<f64> = img.pixels.iter().map(|p| s * ((p[0] + p[1]) / 2.0 - p[2])).collect();
    let [lo, hi] = config.trim;
    let (mu_rg, mu_yb) = (trimmed_mean(&rg, lo, hi), trimmed_mean(&yb, lo, hi));
    let (var_rg, var_yb) = (spread(&rg, mu_rg), spread(&yb, mu_yb));
    config.uicm_coeffs[0] * mu_rg.hypot(mu_yb) + config.uicm_coeffs[1] * (var_rg + var_yb).sqrt()
}

/// Non-overlapping square blocks covering the centred part of the plane
/// that divides evenly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub size: usize,
    pub rows: usize,
    pub cols: usize,
    pub x0: usize,
    pub y0: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, size: usize) -> Result<Self> {
        if size == 0 || width < size || height < size {
            return Err(arg("block_grid", format!("{width}x{height} holds no {size}x{size} block")));
        }
        let (cols, rows) = (width / size, height / size);
        Ok(Self {
            size,
            rows,
            cols,
            x0: (width - cols * size) / 2,
            y0: (height - rows * size) / 2,
        })
    }

    /// Extremes of block `(r, c)`.
    pub fn min_max(&self, p: &Plane, r: usize, c: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in 0..self.size {
            for x in 0..self.size {
                let v = p.get(self.x0 + c * self.size + x, self.y0 + r * self.size + y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Blockwise `2 / (k1 k2) * sum ln(max / min)`; all-zero blocks add nothing.
pub fn eme(p: &Plane, grid: &BlockGrid, floor: f64) -> f64 {
    let mut sum = 0.0;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (lo, hi) = grid.min_max(p, r, c);
            if hi <= 0.0 {
                continue;
            }
            sum += (hi / lo.max(floor)).ln();
        }
    }
    2.0 * sum / (grid.rows * grid.cols) as f64
}

pub fn uism(img: &ImageRGB, config: &MetricConfig) -> Result<f64> {
    let grid = BlockGrid::new(img.width, img.height, config.block)?;
    let weights = [0.299, 0.587, 0.114];
    let mut total = 0.0;
    for (c, w) in weights.iter().enumerate() {
        let ch = img.channel(c).map(|v| v * config.value_scale);
        let edges = sobel_magnitude(&ch).zip_map(&ch, |g, v| g * v);
        total += w * eme(&edges, &grid, config.eme_floor);
    }
    Ok(total)
}

/// Parameterized logarithmic image processing arithmetic.
#[derive(Clone, Copy, Debug)]
pub struct Plip {
    pub gamma: f64,
}

impl Plip {
    pub fn add(&self, a: f64, b: f64) -> f64 {
        a + b - a * b / self.gamma
    }

    pub fn sub(&self, a: f64, b: f64) -> f64 {
        self.gamma * (a - b) / (self.gamma - b)
    }
}

/// Mean over blocks of `|w ln w|` with `w = (max - min) / (max + min)` in
/// PLIP arithmetic. Flat blocks contribute zero.
pub fn uiconm(img: &ImageRGB, config: &MetricConfig) -> Result<f64> {
    let grid = BlockGrid::new(img.width, img.height, config.block)?;
    let gray = Plane {
        width: img.width,
        height: img.height,
        data: img.pixels.iter().map(|&p| luma(p) * config.value_scale).collect(),
    };
    let plip = Plip {
        gamma: config.plip_gamma,
    };
    let mut sum = 0.0;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (lo, hi) = grid.min_max(&gray, r, c);
            let den = plip.add(hi, lo);
            if hi <= lo || den <= 0.0 {
                continue;
            }
            let w = plip.sub(hi, lo) / den;
            if w > 0.0 {
                sum += (w * w.ln()).abs();
            }
        }
    }
    Ok(sum / (grid.rows * grid.cols) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uiqm {
    pub value: f64,
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
}

impl Uiqm {
    pub fn combine(uicm: f64, uism: f64, uiconm: f64, c: &[f64; 3]) -> f64 {
        c[0] * uicm + c[1] * uism + c[2] * uiconm
    }
}

pub fn uiqm(img: &ImageRGB, config: &MetricConfig) -> Result<Uiqm> {
    let (a, b, c) = (uicm(img, config), uism(img, config)?, uiconm(img, config)?);
    Ok(Uiqm {
        value: Uiqm::combine(a, b, c, &config.uiqm_coeffs),
        uicm: a,
        uism: b,
        uiconm: c,
    })
}

/// Every metric for one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub uciqe: f64,
    pub uiqm: f64,
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
}

impl ImageScores {
    pub const NAMES: [&'static str; 5] = ["UCIQE", "UIQM", "UICM", "UISM", "UIConM"];

    pub fn values(&self) -> [f64; 5] {
        [self.uciqe, self.uiqm, self.uicm, self.uism, self.uiconm]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            uciqe: v[0],
            uiqm: v[1],
            uicm: v[2],
            uism: v[3],
            uiconm: v[4],
        }
    }
}

pub fn score_image(img: &ImageRGB, config: &MetricConfig) -> Result<ImageScores> {
    let u = uciqe(img, config)?;
    let q = uiqm(img, config)?;
    Ok(ImageScores {
        uciqe: u.value,
        uiqm: q.value,
        uicm: q.uicm,
        uism: q.uism,
        uiconm: q.uiconm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gray_scores_zero() {
        let img = ImageRGB::filled(40, 40, [0.4, 0.4, 0.4]);
        let cfg = MetricConfig::default();
        let s = score_image(&img, &cfg).unwrap();
        assert_eq!(s.values(), [0.0; 5]);
    }

    #[test]
    fn small_images_rejected() {
        let img = ImageRGB::filled(9, 9, [0.4; 3]);
        assert!(uciqe(&img, &MetricConfig::default()).is_err());
        assert!(uism(&img, &MetricConfig::default()).is_err());
    }

    #[test]
    fn grid_is_centred() {
        let g = BlockGrid::new(256, 256, 10).unwrap();
        assert_eq!((g.rows, g.cols, g.x0, g.y0), (25, 25, 3, 3));
    }

    #[test]
    fn plip_identities() {
        let p = Plip { gamma: 1026.0 };
        assert_eq!(p.sub(5.0, 5.0), 0.0);
        assert_eq!(p.add(0.0, 7.0), 7.0);
    }
}
