use super::filters::{separable, BINOMIAL5};
use super::Plane;
use crate::error::{arg, Result};

/// Levels from finest (index 0) to coarsest.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Plane>,
}

fn downsample(p: &Plane) -> Plane {
    let b = separable(p, &BINOMIAL5);
    let (w, h) = (p.width.div_ceil(2), p.height.div_ceil(2));
    Plane::from_fn(w, h, |x, y| b.get(2 * x, 2 * y))
}

/// Zero-insertion to `width x height`, binomial blur, gain 4.
fn upsample(p: &Plane, width: usize, height: usize) -> Plane {
    let mut z = Plane::filled(width, height, 0.0);
    for y in 0..p.height {
        for x in 0..p.width {
            if 2 * x < width && 2 * y < height {
                z.data[2 * y * width + 2 * x] = p.get(x, y);
            }
        }
    }
    separable(&z, &BINOMIAL5).map(|v| 4.0 * v)
}

fn check_levels(p: &Plane, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(arg("pyramid", "at least one level is required"));
    }
    let (mut w, mut h) = (p.width, p.height);
    for _ in 1..levels {
        if w < 2 || h < 2 {
            return Err(arg(
                "pyramid",
                format!("{}x{} cannot be reduced {} times", p.width, p.height, levels - 1),
            ));
        }
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    Ok(())
}

pub fn gaussian_pyramid(p: &Plane, levels: usize) -> Result<Pyramid> {
    check_levels(p, levels)?;
    let mut out = vec![p.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Band-pass levels plus the coarsest Gaussian level on top.
pub fn laplacian_pyramid(p: &Plane, levels: usize) -> Result<Pyramid> {
    let g = gaussian_pyramid(p, levels)?;
    let mut out = Vec::with_capacity(levels);
    for i in 0..levels - 1 {
        let cur = &g.levels[i];
        let up = upsample(&g.levels[i + 1], cur.width, cur.height);
        out.push(cur.zip_map(&up, |a, b| a - b));
    }
    out.push(g.levels[levels - 1].clone());
    Ok(Pyramid { levels: out })
}

/// Collapses a Laplacian pyramid.
pub fn reconstruct(pyr: &Pyramid) -> Plane {
    let mut cur = pyr.levels.last().expect("non-empty pyramid").clone();
    for band in pyr.levels.iter().rev().skip(1) {
        let up = upsample(&cur, band.width, band.height);
        cur = band.zip_map(&up, |a, b| a + b);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extents_halve_with_ceiling() {
        let p = Plane::filled(37, 20, 0.5);
        let g = gaussian_pyramid(&p, 4).unwrap();
        let sizes: Vec<_> = g.levels.iter().map(|l| (l.width, l.height)).collect();
        assert_eq!(sizes, vec![(37, 20), (19, 10), (10, 5), (5, 3)]);
    }

    #[test]
    fn reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Plane::from_fn(33, 18, |_, _| rng.gen());
        let l = laplacian_pyramid(&p, 4).unwrap();
        assert!(reconstruct(&l).max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn too_many_levels() {
        let p = Plane::filled(4, 4, 0.0);
        assert!(gaussian_pyramid(&p, 3).is_ok());
        assert!(gaussian_pyramid(&p, 4).is_err());
        assert!(gaussian_pyramid(&p, 0).is_err());
    }

    #[test]
    fn constant_stays_constant() {
        let p = Plane::filled(16, 16, 0.3);
        let g = gaussian_pyramid(&p, 5).unwrap();
        for l in &g.levels {
            assert!(l.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }
}
