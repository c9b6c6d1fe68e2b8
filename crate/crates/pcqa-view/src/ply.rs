//! PLY reading (ascii and binary little-endian) and binary writing.
//!
//! Only the `vertex` element is read. Positions may be any scalar type;
//! colors come from `red`, `green`, `blue` and default to neutral gray.

use std::fs;
use std::io::Write;
use std::path::Path;

use pcqa_view_core::{PointCloud, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("header line {line}: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Body { line: usize, msg: String },
    #[error("truncated: expected {expected} vertices, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("empty cloud")]
    Empty,
    #[error(transparent)]
    Cloud(#[from] pcqa_view_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Number of header lines, for body line numbers.
    lines: usize,
}

fn header_err(line: usize, msg: impl Into<String>) -> PlyError {
    PlyError::Header { line, msg: msg.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut at = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[at..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err(line_no + 1, "missing end_header"))?;
        let raw = &bytes[at..at + end];
        at += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header is not text"))?
            .trim_end_matches('\r')
            .trim();
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(header_err(1, "missing 'ply' magic"));
            }
            continue;
        }
        match first {
            "format" => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(header_err(line_no, format!("unsupported format {other}"))),
                    None => return Err(header_err(line_no, "format without encoding")),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or_else(|| header_err(line_no, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| header_err(line_no, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let ty = words.next().ok_or_else(|| header_err(line_no, "property without type"))?;
                if ty == "list" {
                    if words.count() != 3 {
                        return Err(header_err(line_no, "list property needs count type, item type and name"));
                    }
                    el.properties.push(Property::List);
                } else {
                    let scalar =
                        Scalar::parse(ty).ok_or_else(|| header_err(line_no, format!("unknown property type {ty}")))?;
                    let name = words.next().ok_or_else(|| header_err(line_no, "property without name"))?;
                    el.properties.push(Property::Scalar(name.to_string(), scalar));
                }
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unexpected keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| header_err(line_no, "no format line"))?;
    Ok(Header {
        format,
        elements,
        body: at,
        lines: line_no,
    })
}

struct Layout {
    scalars: Vec<Scalar>,
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn vertex_layout(el: &Element, line: usize) -> Result<Layout, PlyError> {
    let mut scalars = Vec::new();
    let find = |name: &str| {
        el.properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
    };
    for p in &el.properties {
        match p {
            Property::Scalar(_, s) => scalars.push(*s),
            Property::List => return Err(header_err(line, "list properties on vertex are not supported")),
        }
    }
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(header_err(line, "vertex element lacks x, y, z")),
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    Ok(Layout { scalars, xyz, rgb })
}

fn to_color(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Parse PLY bytes into a cloud labelled `id`.
pub fn parse_ply(bytes: &[u8], id: &str) -> Result<PointCloud, PlyError> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(header.lines, "no vertex element"))?;
    let vertex = &header.elements[vi];
    let layout = vertex_layout(vertex, header.lines)?;
    if vertex.count == 0 {
        return Err(PlyError::Empty);
    }
    let body = &bytes[header.body..];
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = Vec::with_capacity(vertex.count);
    let mut values = vec![0.0; layout.scalars.len()];
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| PlyError::Body {
                line: header.lines + 1,
                msg: "body is not text".into(),
            })?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            // elements before the vertex block are skipped line by line
            for el in &header.elements[..vi] {
                for _ in 0..el.count {
                    lines.next();
                }
            }
            for k in 0..vertex.count {
                let (i, l) = lines.next().ok_or(PlyError::Truncated {
                    expected: vertex.count,
                    found: k,
                })?;
                let line = header.lines + 1 + i;
                let mut words = l.split_whitespace();
                for slot in values.iter_mut() {
                    let w = words.next().ok_or_else(|| PlyError::Body {
                        line,
                        msg: "too few values".into(),
                    })?;
                    *slot = w.parse().map_err(|_| PlyError::Body {
                        line,
                        msg: format!("not a number: {w}"),
                    })?;
                }
                push_vertex(&layout, &values, &mut points, &mut colors);
            }
        }
        Format::BinaryLe => {
            let mut at = 0;
            for el in &header.elements[..vi] {
                let mut size = 0;
                for p in &el.properties {
                    match p {
                        Property::Scalar(_, s) => size += s.size(),
                        Property::List => {
                            return Err(header_err(header.lines, "list element before vertex in binary file"))
                        }
                    }
                }
                at += size * el.count;
            }
            let stride: usize = layout.scalars.iter().map(|s| s.size()).sum();
            for k in 0..vertex.count {
                let rec = body.get(at..at + stride).ok_or(PlyError::Truncated {
                    expected: vertex.count,
                    found: k,
                })?;
                let mut off = 0;
                for (slot, s) in values.iter_mut().zip(&layout.scalars) {
                    *slot = s.read_le(&rec[off..]);
                    off += s.size();
                }
                at += stride;
                push_vertex(&layout, &values, &mut points, &mut colors);
            }
        }
    }
    Ok(match layout.rgb {
        Some(_) => PointCloud::new(id, points, colors)?,
        None => PointCloud::gray(id, points)?,
    })
}

fn push_vertex(layout: &Layout, values: &[f64], points: &mut Vec<Vec3>, colors: &mut Vec<[u8; 3]>) {
    let [x, y, z] = layout.xyz;
    points.push(Vec3::new(values[x], values[y], values[z]));
    if let Some([r, g, b]) = layout.rgb {
        colors.push([to_color(values[r]), to_color(values[g]), to_color(values[b])]);
    }
}

/// Load a PLY file; the cloud id is the file stem.
pub fn load_ply(path: &Path) -> Result<PointCloud, PlyError> {
    let bytes = fs::read(path)?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    parse_ply(&bytes, id)
}

/// Binary little-endian PLY with double positions and uchar colors.
pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + cloud.len() * 27);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\ncomment {}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.id(),
        cloud.len()
    )
    .expect("writing to a vector");
    for (p, c) in cloud.points().iter().zip(cloud.colors()) {
        for v in p.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(c);
    }
    out
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<(), PlyError> {
    fs::write(path, encode_ply(cloud))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ASCII: &str = "ply\nformat ascii 1.0\ncomment three points\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\n\
        property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n\
        0 0 0 255 0 0\n1.5 0 0 0 255 0\n0 2.25 -1 0 0 255\n";

    fn binary_f32(points: &[[f32; 3]], colors: &[[u8; 3]]) -> Vec<u8> {
        let mut out = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            points.len()
        )
        .into_bytes();
        for (p, c) in points.iter().zip(colors) {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(c);
        }
        out
    }

    #[test]
    fn ascii_three_vertices() {
        let c = parse_ply(ASCII.as_bytes(), "t").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.colors(), &[[255, 0, 0], [0, 255, 0], [0, 0, 255]]);
        assert_eq!(c.points()[2], Vec3::new(0.0, 2.25, -1.0));
    }

    #[test]
    fn binary_matches_ascii() {
        let pts = [[0.0f32, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 2.25, -1.0]];
        let cols = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];
        let b = parse_ply(&binary_f32(&pts, &cols), "t").unwrap();
        let a = parse_ply(ASCII.as_bytes(), "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_vertices_is_empty() {
        let src = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(matches!(parse_ply(src.as_bytes(), "e"), Err(PlyError::Empty)));
    }

    #[test]
    fn colorless_gets_gray() {
        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n1 2 3\n4 5 6\n3 0 1 1\n";
        let c = parse_ply(src.as_bytes(), "g").unwrap();
        assert_eq!(c.colors(), &[[128, 128, 128]; 2]);
    }

    #[test]
    fn truncation_and_header_errors() {
        let short = ASCII.replace("element vertex 3", "element vertex 4");
        assert!(matches!(
            parse_ply(short.as_bytes(), "t"),
            Err(PlyError::Truncated { expected: 4, found: 3 })
        ));
        let bad = ASCII.replace("property float y", "property quaternion y");
        match parse_ply(bad.as_bytes(), "t") {
            Err(PlyError::Header { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let pts = [[0.0f32; 3]; 2];
        let mut bin = binary_f32(&pts, &[[0; 3]; 2]);
        bin.truncate(bin.len() - 3);
        assert!(matches!(parse_ply(&bin, "t"), Err(PlyError::Truncated { expected: 2, found: 1 })));
        let bad_value = ASCII.replace("1.5 0 0", "1.5 zz 0");
        match parse_ply(bad_value.as_bytes(), "t") {
            Err(PlyError::Body { line, .. }) => assert_eq!(line, 13),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let c = pcqa_view_core::synth::synthetic_cloud(3, 9, 500);
        let back = parse_ply(&encode_ply(&c), c.id()).unwrap();
        assert_eq!(back, c);
    }
}
