use std::collections::VecDeque;

use super::filters::{gaussian_blur, sobel};
use super::Plane;
use crate::error::{arg, Result};

/// Default hysteresis thresholds on the normalized gradient magnitude.
pub const CANNY_LOW: f64 = 0.1;
pub const CANNY_HIGH: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// Canny detector: 5x5 Gaussian (sigma 1.4), Sobel gradient scaled so a unit
/// step has magnitude 1, non-maximum suppression, 8-connected hysteresis and
/// a final pass that makes every contour 4-connected.
pub fn canny(p: &Plane, low: f64, high: f64) -> Result<EdgeMap> {
    if !(0.0 <= low && low < high) {
        return Err(arg("canny", format!("thresholds must satisfy 0 <= low < high, got {low}, {high}")));
    }
    let smooth = gaussian_blur(p, 1.4, 5);
    let (gx, gy) = sobel(&smooth);
    let (w, h) = (p.width, p.height);
    let mag: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(a, b)| a.hypot(*b) / 4.0).collect();
    let at = |x: isize, y: isize| -> f64 {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        mag[cy * w + cx]
    };

    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let angle = gy.data[i].atan2(gx.data[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let fwd = at(xi + dx, yi + dy);
            let back = at(xi - dx, yi - dy);
            // Ties go to the pixel further along the gradient, keeping plateaus one pixel wide.
            if m >= back && m > fwd {
                thin[i] = m;
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    bridge_diagonals(&mut edges, &mag, w, h);
    Ok(EdgeMap { width: w, height: h, edges })
}

/// Joins edge pixels that touch only at a corner by switching on the
/// stronger of the two pixels they share, so contours are 4-connected.
fn bridge_diagonals(edges: &mut [bool], mag: &[f64], w: usize, h: usize) {
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            if !edges[y * w + x] {
                continue;
            }
            for right in [true, false] {
                if (right && x + 1 >= w) || (!right && x == 0) {
                    continue;
                }
                let nx = if right { x + 1 } else { x - 1 };
                let (side, below) = (y * w + nx, (y + 1) * w + x);
                if edges[(y + 1) * w + nx] && !edges[side] && !edges[below] {
                    let pick = if mag[below] > mag[side] { below } else { side };
                    edges[pick] = true;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_has_no_edges() {
        assert_eq!(canny(&Plane::filled(20, 20, 0.7), CANNY_LOW, CANNY_HIGH).unwrap().count(), 0);
    }

    #[test]
    fn vertical_step_gives_single_column() {
        let p = Plane::from_fn(24, 16, |x, _| if x >= 12 { 1.0 } else { 0.0 });
        let e = canny(&p, CANNY_LOW, CANNY_HIGH).unwrap();
        for y in 0..16 {
            let cols: Vec<usize> = (0..24).filter(|&x| e.get(x, y)).collect();
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            assert!(cols[0] == 11 || cols[0] == 12);
        }
    }

    #[test]
    fn threshold_order() {
        let p = Plane::filled(8, 8, 0.0);
        assert!(canny(&p, 0.3, 0.2).is_err());
        assert!(canny(&p, -0.1, 0.2).is_err());
    }
}
