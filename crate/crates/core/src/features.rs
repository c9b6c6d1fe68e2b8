//! Handcrafted masked-region statistics of a projected image.
//!
//! Layout of the 24-dimensional vector:
//!
//! * `0..3`   mean of R, G, B (scaled to `[0, 1]`)
//! * `3..6`   std of R, G, B
//! * `6..9`   mean gradient magnitude per channel
//! * `9..12`  std of gradient magnitude per channel
//! * `12..15` depth mean, std, range
//! * `15`     coverage ratio
//! * `16..24` luminance gradient orientation histogram, magnitude weighted, sums to 1
//!
//! Only covered pixels contribute. A gradient component uses central
//! differences and is zero unless both neighbours on that axis are covered.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{atan2, floor, mean_std, sqrt};
use crate::render::ProjectedImage;

pub const FEATURE_DIM: usize = 24;
pub const ORIENTATION_BINS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageFeatures(pub Vec<f64>);

impl ImageFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn luminance(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

pub fn extract_features(img: &ProjectedImage) -> Result<ImageFeatures> {
    let (w, h) = (img.width, img.height);
    let covered: Vec<usize> = (0..w * h).filter(|&k| img.mask[k]).collect();
    if covered.is_empty() {
        return Err(Error::EmptyProjection);
    }
    let rgb = |k: usize| -> [f64; 3] {
        let c = img.color[k];
        [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
    };

    let mut f = Vec::with_capacity(FEATURE_DIM);
    let mut stds = [0.0; 3];
    for (ch, sd) in stds.iter_mut().enumerate() {
        let (m, s) = mean_std(covered.iter().map(|&k| rgb(k)[ch]));
        f.push(m);
        *sd = s;
    }
    f.extend_from_slice(&stds);

    // central-difference gradients per channel plus luminance
    let mut mags: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut hist = [0.0; ORIENTATION_BINS];
    for &k in &covered {
        let (x, y) = (k % w, k / w);
        let horiz = x > 0 && x + 1 < w && img.mask[k - 1] && img.mask[k + 1];
        let vert = y > 0 && y + 1 < h && img.mask[k - w] && img.mask[k + w];
        let mut gx = [0.0; 4];
        let mut gy = [0.0; 4];
        if horiz {
            let (l, r) = (rgb(k - 1), rgb(k + 1));
            for ch in 0..3 {
                gx[ch] = 0.5 * (r[ch] - l[ch]);
            }
            gx[3] = 0.5 * (luminance(r) - luminance(l));
        }
        if vert {
            let (u, d) = (rgb(k - w), rgb(k + w));
            for ch in 0..3 {
                gy[ch] = 0.5 * (d[ch] - u[ch]);
            }
            gy[3] = 0.5 * (luminance(d) - luminance(u));
        }
        for ch in 0..3 {
            mags[ch].push(sqrt(gx[ch] * gx[ch] + gy[ch] * gy[ch]));
        }
        let lum_mag = sqrt(gx[3] * gx[3] + gy[3] * gy[3]);
        if lum_mag > 0.0 {
            let theta = atan2(gy[3], gx[3]);
            let bin = (floor((theta + PI) / (2.0 * PI) * ORIENTATION_BINS as f64) as usize)
                .min(ORIENTATION_BINS - 1);
            hist[bin] += lum_mag;
        }
    }
    let mut grad_std = [0.0; 3];
    for ch in 0..3 {
        let (m, s) = mean_std(mags[ch].iter().copied());
        f.push(m);
        grad_std[ch] = s;
    }
    f.extend_from_slice(&grad_std);

    let (dm, ds) = mean_std(covered.iter().map(|&k| img.depth[k]));
    let (lo, hi) = covered.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        (lo.min(img.depth[k]), hi.max(img.depth[k]))
    });
    f.extend_from_slice(&[dm, ds, hi - lo]);
    f.push(covered.len() as f64 / (w * h) as f64);

    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        f.extend(hist.iter().map(|v| v / total));
    } else {
        f.extend_from_slice(&hist);
    }
    debug_assert_eq!(f.len(), FEATURE_DIM);
    Ok(ImageFeatures(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{summarize, PointCloud};
    use crate::geometry::default_viewpoints;
    use crate::math::Vec3;
    use crate::render::{RenderConfig, NO_POINT};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blank(res: usize) -> ProjectedImage {
        let pts = vec![Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)];
        let c = PointCloud::gray("b", pts).unwrap();
        let view = default_viewpoints(&summarize(&c), 1.25).unwrap()[0];
        ProjectedImage {
            width: res,
            height: res,
            color: vec![[0, 0, 0]; res * res],
            depth: vec![f64::INFINITY; res * res],
            mask: vec![false; res * res],
            winner: vec![NO_POINT; res * res],
            view,
            splat_radius: 0,
        }
    }

    fn random_image(res: usize, seed: u64) -> ProjectedImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = blank(res);
        for k in 0..res * res {
            if rng.random::<f64>() < 0.8 {
                img.mask[k] = true;
                img.winner[k] = k as u32;
                img.color[k] = [rng.random(), rng.random(), rng.random()];
                img.depth[k] = rng.random_range(1.0..2.0);
            }
        }
        img
    }

    #[test]
    fn constant_fully_covered() {
        let mut img = blank(16);
        for k in 0..256 {
            img.mask[k] = true;
            img.color[k] = [100, 150, 200];
            img.depth[k] = 3.0;
        }
        let f = extract_features(&img).unwrap().0;
        assert_eq!(f.len(), FEATURE_DIM);
        assert!((f[0] - 100.0 / 255.0).abs() < 1e-12);
        assert_eq!(&f[3..12], &[0.0; 9]);
        assert_eq!(f[13], 0.0);
        assert_eq!(f[14], 0.0);
        assert_eq!(f[15], 1.0);
        assert_eq!(&f[16..], &[0.0; 8]);
    }

    #[test]
    fn empty_projection_is_an_error() {
        assert_eq!(extract_features(&blank(16)), Err(Error::EmptyProjection));
    }

    #[test]
    fn rotation_keeps_coverage_and_means() {
        let img = random_image(16, 2);
        let mut rot = blank(16);
        for y in 0..16 {
            for x in 0..16 {
                let src = y * 16 + x;
                let dst = x * 16 + (15 - y);
                rot.mask[dst] = img.mask[src];
                rot.color[dst] = img.color[src];
                rot.depth[dst] = img.depth[src];
            }
        }
        let a = extract_features(&img).unwrap().0;
        let b = extract_features(&rot).unwrap().0;
        assert_eq!(a[15], b[15]);
        for ch in 0..3 {
            assert!((a[ch] - b[ch]).abs() < 1e-12);
        }
    }

    #[test]
    fn background_content_is_ignored() {
        let img = random_image(16, 5);
        let mut scribbled = img.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in 0..256 {
            if !scribbled.mask[k] {
                scribbled.color[k] = [rng.random(), rng.random(), rng.random()];
            }
        }
        assert_eq!(extract_features(&img), extract_features(&scribbled));
    }

    // Plain re-computation with two-pass statistics and explicit neighbour checks.
    fn reference_features(img: &ProjectedImage) -> Vec<f64> {
        let w = img.width;
        let h = img.height;
        let cov = |x: i64, y: i64| -> bool {
            x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && img.mask[y as usize * w + x as usize]
        };
        let px = |x: i64, y: i64, ch: usize| -> f64 { img.color[y as usize * w + x as usize][ch] as f64 / 255.0 };
        let lum = |x: i64, y: i64| 0.299 * px(x, y, 0) + 0.587 * px(x, y, 1) + 0.114 * px(x, y, 2);
        let mut cells = vec![];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if cov(x, y) {
                    cells.push((x, y));
                }
            }
        }
        let n = cells.len() as f64;
        let two_pass = |vals: &[f64]| {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            (m, libm::sqrt(v))
        };
        let mut out = vec![0.0; 24];
        for ch in 0..3 {
            let vals: Vec<f64> = cells.iter().map(|&(x, y)| px(x, y, ch)).collect();
            let (m, s) = two_pass(&vals);
            out[ch] = m;
            out[3 + ch] = s;
            let g: Vec<f64> = cells
                .iter()
                .map(|&(x, y)| {
                    let gx = if cov(x - 1, y) && cov(x + 1, y) { (px(x + 1, y, ch) - px(x - 1, y, ch)) / 2.0 } else { 0.0 };
                    let gy = if cov(x, y - 1) && cov(x, y + 1) { (px(x, y + 1, ch) - px(x, y - 1, ch)) / 2.0 } else { 0.0 };
                    libm::hypot(gx, gy)
                })
                .collect();
            let (gm, gs) = two_pass(&g);
            out[6 + ch] = gm;
            out[9 + ch] = gs;
        }
        let d: Vec<f64> = cells.iter().map(|&(x, y)| img.depth[y as usize * w + x as usize]).collect();
        let (dm, ds) = two_pass(&d);
        out[12] = dm;
        out[13] = ds;
        out[14] = d.iter().cloned().fold(f64::MIN, f64::max) - d.iter().cloned().fold(f64::MAX, f64::min);
        out[15] = n / (w * h) as f64;
        let mut hist = [0.0; 8];
        for &(x, y) in &cells {
            let gx = if cov(x - 1, y) && cov(x + 1, y) { (lum(x + 1, y) - lum(x - 1, y)) / 2.0 } else { 0.0 };
            let gy = if cov(x, y - 1) && cov(x, y + 1) { (lum(x, y + 1) - lum(x, y - 1)) / 2.0 } else { 0.0 };
            let m = libm::hypot(gx, gy);
            if m > 0.0 {
                let deg = libm::atan2(gy, gx).to_degrees() + 180.0;
                hist[((deg / 45.0) as usize).min(7)] += m;
            }
        }
        let t: f64 = hist.iter().sum();
        for b in 0..8 {
            out[16 + b] = if t > 0.0 { hist[b] / t } else { 0.0 };
        }
        out
    }

    #[test]
    fn matches_independent_recomputation() {
        for seed in 0..5 {
            let img = random_image(16, seed);
            let a = extract_features(&img).unwrap().0;
            let b = reference_features(&img);
            for (i, (x, y)) in a.iter().zip(&b).enumerate() {
                assert!((x - y).abs() < 1e-9, "feature {i}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn rendered_cloud_features_are_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec3> = (0..500).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let c = PointCloud::gray("r", pts).unwrap();
        let v = default_viewpoints(&summarize(&c), 1.25).unwrap()[2];
        let img = crate::render::render(&c, &v, &RenderConfig { resolution: 32, splat_radius: 1 }).unwrap();
        assert!(extract_features(&img).unwrap().0.iter().all(|x| x.is_finite()));
    }
}
