use super::color::to_lab;
use super::filters::{separable, BINOMIAL5};
use super::{ImageRGB, Plane};

/// Frequency-tuned saliency: distance of the blurred Lab image from the mean
/// Lab colour, min-max normalized. A flat image gives an all-zero map.
pub fn saliency_map(img: &ImageRGB) -> Plane {
    let (w, h) = (img.width, img.height);
    let lab = to_lab(img);
    let n = lab.len() as f64;
    let mut mean = [0.0; 3];
    for p in &lab {
        for c in 0..3 {
            mean[c] += p[c] / n;
        }
    }
    let blurred: Vec<Plane> = (0..3)
        .map(|c| {
            let plane = Plane {
                width: w,
                height: h,
                data: lab.iter().map(|p| p[c]).collect(),
            };
            separable(&plane, &BINOMIAL5)
        })
        .collect();
    let dist = Plane::from_fn(w, h, |x, y| {
        (0..3)
            .map(|c| {
                let d = blurred[c].get(x, y) - mean[c];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    });
    let lo = dist.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dist.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        return Plane::filled(w, h, 0.0);
    }
    dist.map(|v| (v - lo) / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_is_not_salient() {
        let s = saliency_map(&ImageRGB::filled(12, 9, [0.2, 0.5, 0.6]));
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_patch_stands_out() {
        let img = ImageRGB::from_fn_clamped(32, 32, |x, y| {
            if (12..20).contains(&x) && (12..20).contains(&y) {
                [0.9, 0.1, 0.1]
            } else {
                [0.1, 0.4, 0.5]
            }
        });
        let s = saliency_map(&img);
        assert!(s.get(16, 16) > 0.9);
        assert!(s.get(2, 2) < 0.1);
        assert!(s.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
