use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::imaging::color::{from_lab, to_lab};
use crate::imaging::ImageRGB;

/// Contrast-limited adaptive histogram equalization on Lab lightness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheConfig {
    /// Tiles per side.
    pub tiles: usize,
    pub bins: usize,
    /// Clip limit as a multiple of the uniform bin height.
    pub clip: f64,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            tiles: 8,
            bins: 256,
            clip: 2.0,
        }
    }
}

/// Clips every bin at `limit` and spreads the excess uniformly, repeating
/// until no bin exceeds the limit. Total mass is preserved whenever
/// `limit * bins >= total`.
pub fn clip_histogram(hist: &[f64], limit: f64) -> Vec<f64> {
    let mut h = hist.to_vec();
    let n = h.len() as f64;
    for _ in 0..64 {
        let mut excess = 0.0;
        for v in h.iter_mut() {
            if *v > limit {
                excess += *v - limit;
                *v = limit;
            }
        }
        if excess <= 1e-12 {
            break;
        }
        let share = excess / n;
        let mut room = 0.0;
        for v in h.iter_mut() {
            *v += share;
            room += (limit - *v).max(0.0);
        }
        if room <= 0.0 {
            h.iter_mut().for_each(|v| *v = v.min(limit));
            break;
        }
    }
    h
}

/// Per-tile lookup table; `None` for flat tiles, which map to themselves.
struct Mapping(Option<Vec<f64>>);

impl Mapping {
    fn apply(&self, v: f64, bins: usize) -> f64 {
        match &self.0 {
            None => v,
            Some(lut) => lut[bin_of(v, bins)],
        }
    }
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn tile_bounds(n: usize, tiles: usize, i: usize) -> (usize, usize) {
    (i * n / tiles, (i + 1) * n / tiles)
}

/// Equalizes lightness tile by tile with bilinear blending between tile
/// mappings. Chroma is left untouched; flat tiles map to themselves.
pub fn contrast_enhance(img: &ImageRGB, config: &ClaheConfig) -> Result<ImageRGB> {
    if config.tiles == 0 || config.bins < 2 || !(config.clip >= 1.0) {
        return Err(arg("contrast_enhance", "need tiles >= 1, bins >= 2 and clip >= 1"));
    }
    let (w, h) = (img.width, img.height);
    let lab = to_lab(img);
    let light: Vec<f64> = lab.iter().map(|p| (p[0] / 100.0).clamp(0.0, 1.0)).collect();
    let (tx, ty) = (config.tiles.min(w), config.tiles.min(h));

    let mut maps = Vec::with_capacity(tx * ty);
    for j in 0..ty {
        let (y0, y1) = tile_bounds(h, ty, j);
        for i in 0..tx {
            let (x0, x1) = tile_bounds(w, tx, i);
            let mut hist = vec![0.0; config.bins];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = light[y * w + x];
                    hist[bin_of(v, config.bins)] += 1.0;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            let lut = if hi - lo <= 0.0 {
                None
            } else {
                let clipped = clip_histogram(&hist, config.clip * count / config.bins as f64);
                let total: f64 = clipped.iter().sum();
                let mut acc = 0.0;
                Some(
                    clipped
                        .iter()
                        .map(|c| {
                            acc += c;
                            acc / total
                        })
                        .collect(),
                )
            };
            maps.push(Mapping(lut));
        }
    }

    // Tile centres along one axis and the bracketing pair for a coordinate.
    let locate = |p: usize, n: usize, t: usize| -> (usize, usize, f64) {
        let centre = |i: usize| {
            let (a, b) = tile_bounds(n, t, i);
            (a + b) as f64 / 2.0 - 0.5
        };
        let pf = p as f64;
        if t == 1 || pf <= centre(0) {
            return (0, 0, 0.0);
        }
        if pf >= centre(t - 1) {
            return (t - 1, t - 1, 0.0);
        }
        let mut i = 0;
        while centre(i + 1) < pf {
            i += 1;
        }
        let f = (pf - centre(i)) / (centre(i + 1) - centre(i));
        (i, i + 1, f)
    };

    let mut out_lab = lab.clone();
    for y in 0..h {
        let (j0, j1, fy) = locate(y, h, ty);
        for x in 0..w {
            let (i0, i1, fx) = locate(x, w, tx);
            let v = light[y * w + x];
            let m = |i: usize, j: usize| maps[j * tx + i].apply(v, config.bins);
            let top = (1.0 - fx) * m(i0, j0) + fx * m(i1, j0);
            let bottom = (1.0 - fx) * m(i0, j1) + fx * m(i1, j1);
            let l = (1.0 - fy) * top + fy * bottom;
            out_lab[y * w + x][0] = 100.0 * l.clamp(0.0, 1.0);
        }
    }
    if maps.iter().all(|m| m.0.is_none()) {
        return Ok(img.clone());
    }
    Ok(from_lab(w, h, &out_lab))
}
