//! sRGB, CIELab (D65) and HSV conversions.

use super::{ImageRGB, Plane};

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

/// D65 white, taken as the row sums of [`RGB_TO_XYZ`] so that every
/// achromatic sRGB value maps to `a* = b* = 0`.
fn white() -> [f64; 3] {
    RGB_TO_XYZ.map(|r| r.iter().sum())
}

pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// `[L*, a*, b*]` with `L*` in `[0, 100]`.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let wp = white();
    let xyz: [f64; 3] = std::array::from_fn(|i| {
        RGB_TO_XYZ[i].iter().zip(&lin).map(|(m, c)| m * c).sum::<f64>() / wp[i]
    });
    let fy = lab_f(xyz[1]);
    let l = 116.0 * fy - 16.0;
    if rgb[0] == rgb[1] && rgb[1] == rgb[2] {
        return [l, 0.0, 0.0];
    }
    [l, 500.0 * (lab_f(xyz[0]) - fy), 200.0 * (fy - lab_f(xyz[2]))]
}

/// Inverse of [`rgb_to_lab`]; out-of-gamut results are clamped.
pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let wp = white();
    let xyz = [lab_f_inv(fx) * wp[0], lab_f_inv(fy) * wp[1], lab_f_inv(fz) * wp[2]];
    std::array::from_fn(|i| {
        let lin: f64 = XYZ_TO_RGB[i].iter().zip(&xyz).map(|(m, c)| m * c).sum();
        linear_to_srgb(lin)
    })
}

/// `[H in degrees, S, V]`, all of `S`, `V` in `[0, 1]`.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| c.clamp(0.0, 1.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    [h, s, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m].map(|t| t.clamp(0.0, 1.0))
}

/// `0.299 R + 0.587 G + 0.114 B`.
pub fn luma(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

pub fn to_gray(img: &ImageRGB) -> Plane {
    Plane {
        width: img.width,
        height: img.height,
        data: img.pixels.iter().map(|&p| luma(p)).collect(),
    }
}

pub fn to_lab(img: &ImageRGB) -> Vec<[f64; 3]> {
    img.pixels.iter().map(|&p| rgb_to_lab(p)).collect()
}

pub fn from_lab(width: usize, height: usize, lab: &[[f64; 3]]) -> ImageRGB {
    ImageRGB::from_fn_clamped(width, height, |x, y| lab_to_rgb(lab[y * width + x]))
}

pub fn to_hsv(img: &ImageRGB) -> Vec<[f64; 3]> {
    img.pixels.iter().map(|&p| rgb_to_hsv(p)).collect()
}

pub fn from_hsv(width: usize, height: usize, hsv: &[[f64; 3]]) -> ImageRGB {
    ImageRGB::from_fn_clamped(width, height, |x, y| hsv_to_rgb(hsv[y * width + x]))
}

/// Lab chroma `sqrt(a*^2 + b*^2)`.
pub fn chroma(lab: [f64; 3]) -> f64 {
    lab[1].hypot(lab[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn achromatic_axis() {
        for v in [0.0, 0.2, 0.5, 0.93] {
            let lab = rgb_to_lab([v, v, v]);
            assert_eq!(chroma(lab), 0.0);
            assert_eq!(rgb_to_hsv([v, v, v])[1], 0.0);
        }
    }

    #[test]
    fn white_point() {
        let lab = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((lab[0] - 100.0).abs() < 0.1);
        assert!(rgb_to_lab([0.0, 0.0, 0.0])[0].abs() < 1e-9);
    }

    #[test]
    fn lab_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5000 {
            let p = [rng.gen::<f64>(), rng.gen(), rng.gen()];
            let back = lab_to_rgb(rgb_to_lab(p));
            for c in 0..3 {
                assert!((back[c] - p[c]).abs() <= 1e-3, "{p:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn hsv_roundtrip_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let p = [rng.gen::<f64>(), rng.gen(), rng.gen()];
            let hsv = rgb_to_hsv(p);
            assert!((0.0..=1.0).contains(&hsv[1]));
            let back = hsv_to_rgb(hsv);
            for c in 0..3 {
                assert!((back[c] - p[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gray_weights() {
        assert!((luma([1.0, 0.0, 0.0]) - 0.299).abs() < 1e-15);
        assert!((luma([1.0, 1.0, 1.0]) - 1.0).abs() < 1e-12);
    }
}
