//! Single-image enhancement by multi-scale fusion of a white-balanced input
//! and a contrast-equalized copy of it.

mod clahe;
mod weights;

pub use clahe::{clip_histogram, contrast_enhance, ClaheConfig};
pub use weights::{weight_maps, WeightMaps};

use serde::{Deserialize, Serialize};

use crate::error::{arg, dim, Result};
use crate::imaging::{gaussian_pyramid, laplacian_pyramid, reconstruct, ImageRGB, Plane, Pyramid};

/// Every tunable constant of the enhancer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Red compensation strength.
    pub alpha: f64,
    pub clahe: ClaheConfig,
    /// Multipliers for the contrast, saliency, saturation and exposedness maps.
    pub weight_gains: [f64; 4],
    pub exposedness_mean: f64,
    pub exposedness_sigma: f64,
    pub epsilon: f64,
    pub levels: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            clahe: ClaheConfig::default(),
            weight_gains: [1.0; 4],
            exposedness_mean: 0.5,
            exposedness_sigma: 0.25,
            epsilon: 1e-6,
            levels: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WhiteBalanced {
    pub image: ImageRGB,
    /// Set when the input was too dark to balance and was passed through.
    pub near_black: bool,
}

const DARK_MEAN: f64 = 1e-4;

/// Red-channel compensation followed by gray-world gains.
///
/// Gains are re-estimated on the clamped result a few times so that channel
/// means still agree when some pixels saturate.
pub fn white_balance(img: &ImageRGB, alpha: f64) -> WhiteBalanced {
    let m = img.channel_means();
    if m.iter().all(|&v| v < DARK_MEAN) {
        return WhiteBalanced {
            image: img.clone(),
            near_black: true,
        };
    }
    let gap = m[1] - m[0];
    let mut out = ImageRGB::from_fn_clamped(img.width, img.height, |x, y| {
        let [r, g, b] = img.pixels[y * img.width + x];
        [r + alpha * gap * (1.0 - r) * g, g, b]
    });
    for _ in 0..10 {
        let m = out.channel_means();
        let target = (m[0] + m[1] + m[2]) / 3.0;
        let gains = m.map(|v| if v < DARK_MEAN { 1.0 } else { target / v });
        if gains.iter().all(|g| (g - 1.0).abs() < 1e-9) {
            break;
        }
        out = ImageRGB::from_fn_clamped(out.width, out.height, |x, y| {
            let p = out.pixels[y * out.width + x];
            [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]]
        });
    }
    WhiteBalanced {
        image: out,
        near_black: false,
    }
}

/// Images to blend with per-pixel weights that sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionInputs {
    pub images: Vec<ImageRGB>,
    pub weights: Vec<Plane>,
}

impl FusionInputs {
    /// Normalizes raw weights as `(W_k + eps) / (sum W + K eps)`.
    pub fn from_raw(images: Vec<ImageRGB>, raw: Vec<Plane>, eps: f64) -> Result<Self> {
        check_extents(&images, &raw)?;
        if raw.iter().flat_map(|p| &p.data).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(arg("fusion_inputs", "weights must be finite and non-negative"));
        }
        let k = raw.len() as f64;
        let n = raw[0].data.len();
        let totals: Vec<f64> = (0..n).map(|i| raw.iter().map(|p| p.data[i]).sum::<f64>() + k * eps).collect();
        let weights = raw
            .iter()
            .map(|p| Plane {
                width: p.width,
                height: p.height,
                data: p.data.iter().zip(&totals).map(|(w, t)| (w + eps) / t).collect(),
            })
            .collect();
        Ok(Self { images, weights })
    }

    /// Accepts weights that are already normalized.
    pub fn from_normalized(images: Vec<ImageRGB>, weights: Vec<Plane>) -> Result<Self> {
        check_extents(&images, &weights)?;
        let n = weights[0].data.len();
        for i in 0..n {
            let s: f64 = weights.iter().map(|p| p.data[i]).sum();
            if (s - 1.0).abs() > 1e-6 || weights.iter().any(|p| p.data[i] < 0.0) {
                return Err(arg("fusion_inputs", format!("weights at pixel {i} sum to {s}")));
            }
        }
        Ok(Self { images, weights })
    }
}

fn check_extents(images: &[ImageRGB], weights: &[Plane]) -> Result<()> {
    if images.is_empty() || images.len() != weights.len() {
        return Err(arg(
            "fusion_inputs",
            format!("{} images, {} weight maps", images.len(), weights.len()),
        ));
    }
    let (w, h) = (images[0].width, images[0].height);
    if images.iter().any(|i| (i.width, i.height) != (w, h)) || weights.iter().any(|p| (p.width, p.height) != (w, h)) {
        return Err(dim("fusion_inputs", "images and weights must share extents"));
    }
    Ok(())
}

/// `sum_k Gauss(W_k) * Lap(I_k)` level by level.
pub fn blend_pyramids(laplacians: &[Pyramid], weights: &[Pyramid]) -> Pyramid {
    let levels = laplacians[0]
        .levels
        .iter()
        .enumerate()
        .map(|(l, first)| {
            let mut acc = Plane::filled(first.width, first.height, 0.0);
            for (lap, wp) in laplacians.iter().zip(weights) {
                for ((a, v), w) in acc.data.iter_mut().zip(&lap.levels[l].data).zip(&wp.levels[l].data) {
                    *a += v * w;
                }
            }
            acc
        })
        .collect();
    Pyramid { levels }
}

/// Multi-scale blend of the inputs, clamped to `[0, 1]`.
pub fn fuse(inputs: &FusionInputs, levels: usize) -> Result<ImageRGB> {
    let weight_pyrs = inputs
        .weights
        .iter()
        .map(|w| gaussian_pyramid(w, levels))
        .collect::<Result<Vec<_>>>()?;
    let mut planes = Vec::with_capacity(3);
    for c in 0..3 {
        let laps = inputs
            .images
            .iter()
            .map(|img| laplacian_pyramid(&img.channel(c), levels))
            .collect::<Result<Vec<_>>>()?;
        planes.push(reconstruct(&blend_pyramids(&laps, &weight_pyrs)));
    }
    let planes: [Plane; 3] = planes.try_into().expect("three channels");
    ImageRGB::from_planes(&planes)
}

/// The two fusion inputs with their normalized weights.
pub fn prepare_inputs(img: &ImageRGB, config: &FusionConfig) -> Result<FusionInputs> {
    let input1 = white_balance(img, config.alpha).image;
    let input2 = contrast_enhance(&input1, &config.clahe)?;
    let raw = [&input1, &input2]
        .iter()
        .map(|i| weight_maps(i, config).aggregate(&config.weight_gains))
        .collect();
    FusionInputs::from_raw(vec![input1, input2], raw, config.epsilon)
}

/// White balance, contrast equalization, weight maps and pyramid fusion.
pub fn fusion_enhance(img: &ImageRGB, config: &FusionConfig) -> Result<ImageRGB> {
    let inputs = prepare_inputs(img, config)?;
    fuse(&inputs, config.levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_image_is_a_fixed_point() {
        let img = ImageRGB::from_fn_clamped(16, 16, |x, y| {
            let v = (x + y) as f64 / 30.0;
            [v, v, v]
        });
        let out = white_balance(&img, 1.0);
        assert!(!out.near_black);
        assert!(out.image.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn near_black_passes_through() {
        let img = ImageRGB::filled(8, 8, [0.0, 0.00005, 0.0]);
        let out = white_balance(&img, 1.0);
        assert!(out.near_black);
        assert_eq!(out.image, img);
    }

    #[test]
    fn green_cast_gains_red_where_green_is_bright() {
        let img = ImageRGB::from_fn_clamped(16, 16, |x, _| [0.0, x as f64 / 15.0, 0.2]);
        let out = white_balance(&img, 1.0).image;
        assert!(out.pixels[15][0] > out.pixels[1][0]);
        assert!(out.pixels[15][0] > 0.0);
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let img = ImageRGB::filled(4, 4, [0.5; 3]);
        let raw = vec![Plane::filled(4, 4, 0.0), Plane::filled(4, 4, 3.0)];
        let f = FusionInputs::from_raw(vec![img.clone(), img.clone()], raw, 1e-6).unwrap();
        for i in 0..16 {
            assert!((f.weights[0].data[i] + f.weights[1].data[i] - 1.0).abs() < 1e-12);
        }
        let bad = vec![Plane::filled(4, 4, 0.2), Plane::filled(4, 4, 0.2)];
        assert!(FusionInputs::from_normalized(vec![img.clone(), img], bad).is_err());
    }
}
