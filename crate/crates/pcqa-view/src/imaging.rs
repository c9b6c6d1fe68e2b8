//! PNG export of projected colors and raw depth dumps.
//!
//! A depth dump is `width: u32`, `height: u32`, then `width * height`
//! little-endian `f32` depths in row-major order; background is `+inf`.

use std::io::Cursor;

use pcqa_view_core::render::ProjectedImage;
use pcqa_view_core::Vec3;
use serde::{Deserialize, Serialize};

pub fn encode_png(img: &ProjectedImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("png header to memory");
        let data: Vec<u8> = img.color.iter().flatten().copied().collect();
        w.write_image_data(&data).expect("png data to memory");
    }
    out.into_inner()
}

pub fn encode_depth(img: &ProjectedImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * img.depth.len());
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    for &d in &img.depth {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    out
}

/// Inverse of [`encode_depth`]; `None` on a short or inconsistent buffer.
pub fn decode_depth(bytes: &[u8]) -> Option<(u32, u32, Vec<f32>)> {
    let w = u32::from_le_bytes(bytes.get(0..4)?.try_into().ok()?);
    let h = u32::from_le_bytes(bytes.get(4..8)?.try_into().ok()?);
    let body = bytes.get(8..)?;
    if body.len() != 4 * (w as usize) * (h as usize) {
        return None;
    }
    let depth = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some((w, h, depth))
}

/// One viewpoint as written next to rendered images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRow {
    pub cloud_id: String,
    pub face_index: u8,
    pub candidate_index: usize,
    pub position: Vec3,
    pub direction: Vec3,
}
