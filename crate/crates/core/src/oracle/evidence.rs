//! Normalized luminance-gradient evidence of an edge around a pixel.

use crate::raster::Image;

/// Central-difference gradient magnitude of luminance, borders clamped.
pub fn gradient_magnitude(img: &Image) -> Vec<f32> {
    let (w, h) = (img.width as usize, img.height as usize);
    let lum: Vec<f32> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| img.luminance(x as u32, y as u32))
        .collect();
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = (lum[y * w + xp] - lum[y * w + xm]) * 0.5;
            let gy = (lum[yp * w + x] - lum[ym * w + x]) * 0.5;
            out[y * w + x] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Evidence score in [0, 1]: mean gradient magnitude over the
/// `(2 window + 1)^2` neighborhood (clipped at borders), scaled so that an
/// ideal black/white step through the window scores 1.
pub fn edge_evidence(img: &Image, x: u32, y: u32, window: u32) -> f64 {
    EvidenceMap::new(img).score(x, y, window)
}

/// Summed-area table of gradient magnitudes for O(1) window queries.
#[derive(Debug, Clone)]
pub struct EvidenceMap {
    width: usize,
    height: usize,
    sat: Vec<f64>,
}

impl EvidenceMap {
    pub fn new(img: &Image) -> Self {
        let g = gradient_magnitude(img);
        let (w, h) = (img.width as usize, img.height as usize);
        let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += g[y * w + x] as f64;
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            sat,
        }
    }

    pub fn score(&self, x: u32, y: u32, window: u32) -> f64 {
        let (x, y, r) = (x as usize, y as usize, window as usize);
        let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
        let (x1, y1) = ((x + r + 1).min(self.width), (y + r + 1).min(self.height));
        if x0 >= x1 || y0 >= y1 {
            return 0.0;
        }
        let w1 = self.width + 1;
        let sum = self.sat[y1 * w1 + x1] - self.sat[y0 * w1 + x1] - self.sat[y1 * w1 + x0]
            + self.sat[y0 * w1 + x0];
        let mean = sum / ((x1 - x0) * (y1 - y0)) as f64;
        (mean * (2 * r + 1) as f64).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_zero_and_step_is_one() {
        let img = Image::filled(40, 40, [0.4; 3]);
        assert_eq!(edge_evidence(&img, 20, 20, 4), 0.0);
        let mut step = Image::filled(40, 40, [0.0; 3]);
        for y in 0..40 {
            for x in 21..40 {
                step.set(x, y, [1.0; 3]);
            }
        }
        assert!((edge_evidence(&step, 20, 20, 4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integral_matches_direct_sum() {
        let mut img = Image::filled(13, 9, [0.0; 3]);
        for y in 0..9 {
            for x in 0..13 {
                let v = ((x * 7 + y * 3) % 11) as f32 / 11.0;
                img.set(x, y, [v, v * 0.5, 1.0 - v]);
            }
        }
        let g = gradient_magnitude(&img);
        let m = EvidenceMap::new(&img);
        for (x, y) in [(0u32, 0u32), (6, 4), (12, 8), (1, 7)] {
            let mut s = 0.0f64;
            let mut n = 0;
            for yy in y.saturating_sub(2)..=(y + 2).min(8) {
                for xx in x.saturating_sub(2)..=(x + 2).min(12) {
                    s += g[(yy * 13 + xx) as usize] as f64;
                    n += 1;
                }
            }
            let direct = (s / n as f64 * 5.0).min(1.0);
            assert!((m.score(x, y, 2) - direct).abs() < 1e-9);
        }
    }
}
