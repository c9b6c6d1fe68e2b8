//! Orthographic z-buffered point splatting.

use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::geometry::ViewSetup;
use crate::math::floor;

pub const DEFAULT_RESOLUTION: usize = 256;
pub const DEFAULT_SPLAT_RADIUS: usize = 1;
pub const MIN_RESOLUTION: usize = 16;

/// No point covers the pixel.
pub const NO_POINT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderConfig {
    pub resolution: usize,
    pub splat_radius: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            resolution: DEFAULT_RESOLUTION,
            splat_radius: DEFAULT_SPLAT_RADIUS,
        }
    }
}

/// Color, depth, and coverage rasters of one view. Row-major, `row = v`,
/// `col = u`. Background pixels are black with infinite depth.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedImage {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[u8; 3]>,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    /// Index of the winning point per pixel, [`NO_POINT`] for background.
    pub winner: Vec<u32>,
    pub view: ViewSetup,
    pub splat_radius: usize,
}

impl ProjectedImage {
    pub fn covered(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn coverage_ratio(&self) -> f64 {
        self.covered() as f64 / (self.width * self.height) as f64
    }

    #[inline]
    pub fn idx(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }
}

/// Pixel of plane coordinates `(u, v)` on a `res`-wide raster spanning
/// `[-h, h]^2`, or `None` when clipped.
#[inline]
pub fn pixel_of(u: f64, v: f64, h: f64, res: usize) -> Option<(usize, usize)> {
    let scale = res as f64 / (2.0 * h);
    let px = floor((u + h) * scale);
    let py = floor((v + h) * scale);
    if px < 0.0 || py < 0.0 || px >= res as f64 || py >= res as f64 {
        return None;
    }
    Some((px as usize, py as usize))
}

pub fn render(cloud: &PointCloud, view: &ViewSetup, config: &RenderConfig) -> Result<ProjectedImage> {
    let res = config.resolution;
    if res < MIN_RESOLUTION {
        return Err(invalid("resolution must be at least 16"));
    }
    let n = res * res;
    let mut depth = vec![f64::INFINITY; n];
    let mut winner = vec![NO_POINT; n];
    let h = view.region_half_extent;
    let r = config.splat_radius as i64;
    let r2 = r * r;
    let toward_viewer = -view.direction;

    for (i, &p) in cloud.points().iter().enumerate() {
        let (u, v) = view.plane_coords(p);
        let Some((px, py)) = pixel_of(u, v, h, res) else {
            continue;
        };
        let key = (p - view.viewpoint).dot(toward_viewer);
        for dy in -r..=r {
            let y = py as i64 + dy;
            if y < 0 || y >= res as i64 {
                continue;
            }
            for dx in -r..=r {
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let x = px as i64 + dx;
                if x < 0 || x >= res as i64 {
                    continue;
                }
                let k = y as usize * res + x as usize;
                // strict test: on equal depth the earlier (lower) index stays
                if key < depth[k] {
                    depth[k] = key;
                    winner[k] = i as u32;
                }
            }
        }
    }

    let colors = cloud.colors();
    let color = winner
        .iter()
        .map(|&w| if w == NO_POINT { [0, 0, 0] } else { colors[w as usize] })
        .collect();
    let mask = winner.iter().map(|&w| w != NO_POINT).collect();
    Ok(ProjectedImage {
        width: res,
        height: res,
        color,
        depth,
        mask,
        winner,
        view: *view,
        splat_radius: config.splat_radius,
    })
}

/// Element-wise [`render`]; output order follows `views`.
pub fn render_face_set(
    cloud: &PointCloud,
    views: &[ViewSetup],
    config: &RenderConfig,
) -> Result<Vec<ProjectedImage>> {
    views.iter().map(|v| render(cloud, v, config)).collect()
}
