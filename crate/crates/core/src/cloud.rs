//! Colored point clouds and their geometric summaries.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Neutral fill for clouds that carry no color attribute.
pub const NEUTRAL_GRAY: [u8; 3] = [128, 128, 128];

/// Positions plus per-point RGB colors. Immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    id: String,
    points: Vec<Vec3>,
    colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<Vec3>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.len() != colors.len() {
            return Err(Error::LengthMismatch {
                points: points.len(),
                colors: colors.len(),
            });
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(PointCloud {
            id: id.into(),
            points,
            colors,
        })
    }

    /// Geometry-only cloud filled with [`NEUTRAL_GRAY`].
    pub fn gray(id: impl Into<String>, points: Vec<Vec3>) -> Result<Self> {
        let colors = alloc::vec![NEUTRAL_GRAY; points.len()];
        Self::new(id, points, colors)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn summary(&self) -> CloudSummary {
        summarize(self)
    }

    /// Same cloud with every point shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> PointCloud {
        PointCloud {
            id: self.id.clone(),
            points: self.points.iter().map(|&p| p + offset).collect(),
            colors: self.colors.clone(),
        }
    }
}

/// Centroid and axis-aligned bounds of a cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudSummary {
    pub centroid: Vec3,
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    pub diagonal: f64,
}

impl CloudSummary {
    /// Largest half side of the bounding box.
    pub fn max_half_extent(&self) -> f64 {
        ((self.bbox_max - self.bbox_min) * 0.5).max_component()
    }
}

pub fn summarize(cloud: &PointCloud) -> CloudSummary {
    let pts = cloud.points();
    let mut lo = pts[0];
    let mut hi = pts[0];
    let mut sum = Vec3::ZERO;
    for &p in pts {
        lo = lo.min(p);
        hi = hi.max(p);
        sum += p;
    }
    let mut centroid = sum / pts.len() as f64;
    // rounding can push the mean a hair outside a flat box
    centroid = centroid.max(lo).min(hi);
    CloudSummary {
        centroid,
        bbox_min: lo,
        bbox_max: hi,
        diagonal: (hi - lo).norm(),
    }
}
