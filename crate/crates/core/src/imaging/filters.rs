use super::Plane;

/// Normalized 5-tap binomial kernel `[1, 4, 6, 4, 1] / 16`.
pub const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Separable correlation with an odd-length kernel, reflect padded.
pub fn separable(p: &Plane, kernel: &[f64]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (p.width, p.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                s += kv * p.get(super::reflect(x as isize + k as isize - r, w), y);
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                s += kv * tmp[super::reflect(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    Plane { width: w, height: h, data: out }
}

/// Gaussian blur with a normalized `size`-tap kernel.
pub fn gaussian_blur(p: &Plane, sigma: f64, size: usize) -> Plane {
    let r = (size / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    separable(p, &k)
}

fn correlate3(p: &Plane, k: &[[f64; 3]; 3]) -> Plane {
    Plane::from_fn(p.width, p.height, |x, y| {
        let mut s = 0.0;
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    s += kv * p.get_reflect(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
                }
            }
        }
        s
    })
}

/// Horizontal and vertical Sobel responses, written as smoothed central
/// differences so that flat regions give exactly zero.
pub fn sobel(p: &Plane) -> (Plane, Plane) {
    let at = |x: usize, y: usize, dx: isize, dy: isize| p.get_reflect(x as isize + dx, y as isize + dy);
    let gx = Plane::from_fn(p.width, p.height, |x, y| {
        (at(x, y, 1, -1) - at(x, y, -1, -1)) + 2.0 * (at(x, y, 1, 0) - at(x, y, -1, 0)) + (at(x, y, 1, 1) - at(x, y, -1, 1))
    });
    let gy = Plane::from_fn(p.width, p.height, |x, y| {
        (at(x, y, -1, 1) - at(x, y, -1, -1)) + 2.0 * (at(x, y, 0, 1) - at(x, y, 0, -1)) + (at(x, y, 1, 1) - at(x, y, 1, -1))
    });
    (gx, gy)
}

/// `sqrt(Gx^2 + Gy^2)`.
pub fn sobel_magnitude(p: &Plane) -> Plane {
    let (gx, gy) = sobel(p);
    gx.zip_map(&gy, f64::hypot)
}

/// 4-neighbour Laplacian.
pub fn laplacian(p: &Plane) -> Plane {
    correlate3(p, &[[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_plane_has_no_gradient() {
        let p = Plane::filled(9, 7, 0.4);
        assert!(sobel_magnitude(&p).data.iter().all(|&v| v == 0.0));
        assert!(laplacian(&p).data.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn step_edge_magnitude() {
        let h = 0.6;
        let p = Plane::from_fn(10, 6, |x, _| if x >= 5 { h } else { 0.0 });
        let m = sobel_magnitude(&p);
        for y in 0..6 {
            assert!((m.get(4, y) - 4.0 * h).abs() < 1e-12);
            assert!((m.get(5, y) - 4.0 * h).abs() < 1e-12);
            assert_eq!(m.get(1, y), 0.0);
        }
    }

    #[test]
    fn sobel_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Plane::from_fn(13, 11, |_, _| rng.gen());
        let m = sobel_magnitude(&p);
        let (w, h) = (13isize, 11isize);
        let at = |x: isize, y: isize| {
            let cx = if x < 0 { -x } else if x >= w { 2 * (w - 1) - x } else { x };
            let cy = if y < 0 { -y } else if y >= h { 2 * (h - 1) - y } else { y };
            p.data[(cy * w + cx) as usize]
        };
        for y in 0..h {
            for x in 0..w {
                let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                    - at(x - 1, y - 1) - 2.0 * at(x - 1, y) - at(x - 1, y + 1);
                let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                    - at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1);
                let expect = (gx * gx + gy * gy).sqrt();
                assert!((m.get(x as usize, y as usize) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn translation_equivariant_in_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = Plane::from_fn(40, 30, |_, _| rng.gen());
        let k = 3;
        let shifted = Plane::from_fn(40, 30, |x, y| base.get_reflect(x as isize - k, y as isize));
        let (a, b) = (gaussian_blur(&base, 1.4, 5), gaussian_blur(&shifted, 1.4, 5));
        let (sa, sb) = (sobel_magnitude(&base), sobel_magnitude(&shifted));
        for y in 3..27 {
            for x in 8..36 {
                assert!((b.get(x, y) - a.get(x - k as usize, y)).abs() < 1e-12);
                assert!((sb.get(x, y) - sa.get(x - k as usize, y)).abs() < 1e-12);
            }
        }
    }
}
