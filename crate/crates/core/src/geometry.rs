//! Default cube-face viewpoints, their projection regions, and candidate grids.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::CloudSummary;
use crate::error::{invalid, Error, Result};
use crate::math::{sqrt, Vec3};

/// Default region margin over the bbox max half-extent.
pub const DEFAULT_MARGIN: f64 = 1.25;

/// Grid sizes with an odd root, so the default viewpoint is always a candidate.
pub const SUPPORTED_GRIDS: [usize; 3] = [9, 25, 49];

/// A viewpoint with its square projection region and local plane frame.
///
/// `direction` points from the center toward the viewpoint; the viewer looks
/// along `-direction`. `(frame_u, frame_v, direction)` is right-handed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSetup {
    pub viewpoint: Vec3,
    pub center: Vec3,
    pub direction: Vec3,
    pub region_half_extent: f64,
    pub frame_u: Vec3,
    pub frame_v: Vec3,
    pub face_index: u8,
}

impl ViewSetup {
    /// In-plane coordinates of `p` relative to the viewpoint.
    pub fn plane_coords(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.viewpoint;
        (d.dot(self.frame_u), d.dot(self.frame_v))
    }

    /// Inverse of [`plane_coords`](Self::plane_coords) on the region plane.
    pub fn lift(&self, u: f64, v: f64) -> Vec3 {
        self.viewpoint + self.frame_u * u + self.frame_v * v
    }

    /// Distance of `p` from the region plane, along `direction`.
    pub fn plane_offset(&self, p: Vec3) -> f64 {
        (p - self.viewpoint).dot(self.direction)
    }

    /// View placed at `position` on this region, aimed at the center, with
    /// the frame re-orthogonalized against the new direction.
    pub fn reoriented_at(&self, position: Vec3) -> Result<ViewSetup> {
        if position == self.viewpoint {
            return Ok(*self);
        }
        let direction = (position - self.center).normalized().ok_or(Error::ZeroVector)?;
        let u = (self.frame_u - direction * self.frame_u.dot(direction))
            .normalized()
            .ok_or(Error::ZeroVector)?;
        let v = direction.cross(u);
        Ok(ViewSetup {
            viewpoint: position,
            center: self.center,
            direction,
            region_half_extent: self.region_half_extent,
            frame_u: u,
            frame_v: v,
            face_index: self.face_index,
        })
    }

    /// Same rig shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> ViewSetup {
        ViewSetup {
            viewpoint: self.viewpoint + offset,
            center: self.center + offset,
            ..*self
        }
    }
}

fn face_axes(face: u8) -> (Vec3, Vec3, Vec3) {
    // (direction, u, v); u sign flipped where needed so u x v = direction
    match face {
        0 => (Vec3::X, Vec3::Y, Vec3::Z),
        1 => (-Vec3::X, -Vec3::Y, Vec3::Z),
        2 => (Vec3::Y, -Vec3::X, Vec3::Z),
        3 => (-Vec3::Y, Vec3::X, Vec3::Z),
        4 => (Vec3::Z, Vec3::X, Vec3::Y),
        _ => (-Vec3::Z, -Vec3::X, Vec3::Y),
    }
}

/// Six views at the face centers of the cube around the centroid, in face
/// order +X, -X, +Y, -Y, +Z, -Z.
pub fn default_viewpoints(summary: &CloudSummary, margin: f64) -> Result<Vec<ViewSetup>> {
    rotated_viewpoints(summary, margin, &IDENTITY)
}

pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn rotate(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// Cube rig rotated about the centroid by the orthonormal matrix `rotation`.
pub fn rotated_viewpoints(
    summary: &CloudSummary,
    margin: f64,
    rotation: &[[f64; 3]; 3],
) -> Result<Vec<ViewSetup>> {
    if !(margin >= 1.0) {
        return Err(invalid(format!("margin {margin} < 1")));
    }
    let half = summary.max_half_extent();
    if half <= 0.0 {
        return Err(Error::DegenerateBox);
    }
    let h = margin * half;
    let c = summary.centroid;
    Ok((0..6u8)
        .map(|face| {
            let (d, u, v) = face_axes(face);
            let (d, u, v) = (rotate(rotation, d), rotate(rotation, u), rotate(rotation, v));
            ViewSetup {
                viewpoint: c + d * h,
                center: c,
                direction: d,
                region_half_extent: h,
                frame_u: u,
                frame_v: v,
                face_index: face,
            }
        })
        .collect())
}

/// Uniformly distributed rotation matrix (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for c in q.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let n = sqrt(q.iter().map(|c| c * c).sum());
        if n > 1e-9 {
            for c in q.iter_mut() {
                *c /= n;
            }
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// One sampled viewpoint on a region, aimed at the cloud center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Vec3,
    pub direction: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateGrid {
    pub base: ViewSetup,
    pub n_v: usize,
    /// Row-major: index `row * side + col`, columns along `frame_u`.
    pub candidates: Vec<Candidate>,
}

impl CandidateGrid {
    pub fn side(&self) -> usize {
        grid_side(self.n_v)
    }

    /// Index of the candidate that coincides with the default viewpoint.
    pub fn center_index(&self) -> usize {
        (self.n_v - 1) / 2
    }

    /// Render setup for candidate `j`.
    pub fn view(&self, j: usize) -> ViewSetup {
        self.base
            .reoriented_at(self.candidates[j].position)
            .expect("candidates never coincide with the center")
    }

    pub fn views(&self) -> Vec<ViewSetup> {
        (0..self.n_v).map(|j| self.view(j)).collect()
    }
}

fn grid_side(n_v: usize) -> usize {
    let mut s = 0;
    while (s + 1) * (s + 1) <= n_v {
        s += 1;
    }
    s
}

/// Cell-center offsets of a uniform `side x side` partition of `[-h, h]`.
pub fn cell_centers(h: f64, side: usize) -> Vec<f64> {
    let step = 2.0 * h / side as f64;
    (0..side).map(|k| -h + (k as f64 + 0.5) * step).collect()
}

pub fn sample_candidates(base: &ViewSetup, n_v: usize) -> Result<CandidateGrid> {
    if !SUPPORTED_GRIDS.contains(&n_v) {
        return Err(invalid(format!("N_v must be one of 9, 25, 49 (got {n_v})")));
    }
    let side = grid_side(n_v);
    let offsets = cell_centers(base.region_half_extent, side);
    let mut candidates = Vec::with_capacity(n_v);
    for (row, &b) in offsets.iter().enumerate() {
        for (col, &a) in offsets.iter().enumerate() {
            // the middle cell of an odd grid is exactly the default viewpoint
            let position = if 2 * row + 1 == side && 2 * col + 1 == side {
                base.viewpoint
            } else {
                base.lift(a, b)
            };
            let direction = (position - base.center)
                .normalized()
                .ok_or(Error::ZeroVector)?;
            candidates.push(Candidate {
                position,
                direction,
            });
        }
    }
    Ok(CandidateGrid {
        base: *base,
        n_v,
        candidates,
    })
}
