use super::FusionConfig;
use crate::imaging::color::to_gray;
use crate::imaging::{laplacian, saliency_map, ImageRGB, Plane};

/// Largest possible per-pixel RGB standard deviation on unit-range values.
const MAX_RGB_STD: f64 = 0.471_404_520_791_031_7; // sqrt(2/9)

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMaps {
    pub contrast: Plane,
    pub saliency: Plane,
    pub saturation: Plane,
    pub exposedness: Plane,
}

impl WeightMaps {
    /// Gain-weighted sum of the four maps.
    pub fn aggregate(&self, gains: &[f64; 4]) -> Plane {
        let maps = [&self.contrast, &self.saliency, &self.saturation, &self.exposedness];
        Plane::from_fn(self.contrast.width, self.contrast.height, |x, y| {
            maps.iter().zip(gains).map(|(m, g)| g * m.get(x, y)).sum()
        })
    }
}

/// Laplacian contrast, saliency, saturation and well-exposedness, each
/// scaled into `[0, 1]`.
pub fn weight_maps(img: &ImageRGB, config: &FusionConfig) -> WeightMaps {
    let gray = to_gray(img);
    let contrast = laplacian(&gray).map(|v| (v.abs() / 4.0).min(1.0));
    let saturation = Plane {
        width: img.width,
        height: img.height,
        data: img
            .pixels
            .iter()
            .map(|p| {
                let m = (p[0] + p[1] + p[2]) / 3.0;
                let var = p.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 3.0;
                (var.sqrt() / MAX_RGB_STD).min(1.0)
            })
            .collect(),
    };
    let (mu, s) = (config.exposedness_mean, config.exposedness_sigma);
    let exposedness = gray.map(|l| (-(l - mu) * (l - mu) / (2.0 * s * s)).exp());
    WeightMaps {
        contrast,
        saliency: saliency_map(img),
        saturation,
        exposedness,
    }
}
