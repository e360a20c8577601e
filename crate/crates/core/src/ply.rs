//! PLY vertex clouds (ASCII and binary little-endian).
//!
//! Coordinates on disk are millimeters; clouds in memory are meters.
//! Only the vertex element is consumed. Faces and any other elements that
//! follow it are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::{cloud_diameter, PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::geom::{UnitVec3, Vec3};
use crate::scalar::Real;

const MM_TO_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::Ply(format!("unknown property type '{other}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: ScalarType,
    is_list: bool,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn parse_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<bool> {
        line.clear();
        let n = r
            .read_line(line)
            .map_err(|e| Error::Ply(format!("reading header: {e}")))?;
        Ok(n > 0)
    };
    if !next_line(&mut line)? || line.trim() != "ply" {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(&mut line)? {
            return Err(Error::Ply("unexpected end of header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", other, _] => {
                return Err(Error::Ply(format!("unsupported format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Ply(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before element".into()))?;
                el.props.push(Property {
                    name: name.to_string(),
                    ty: ScalarType::parse(ty)?,
                    is_list: true,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before element".into()))?;
                el.props.push(Property {
                    name: name.to_string(),
                    ty: ScalarType::parse(ty)?,
                    is_list: false,
                });
            }
            _ => return Err(Error::Ply(format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::Ply("missing format line".into()))?,
        elements,
    })
}

/// A loaded PLY cloud and its diameter (meters).
#[derive(Debug, Clone)]
pub struct PlyCloud<S> {
    pub cloud: PointCloud<S>,
    pub diameter: S,
}

struct VertexLayout {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
    color: Option<[usize; 3]>,
    color_is_float: bool,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    if el.props.iter().any(|p| p.is_list) {
        return Err(Error::Ply("list properties in vertex element are unsupported".into()));
    }
    let find = |n: &str| el.props.iter().position(|p| p.name == n);
    let find3 = |a: &str, b: &str, c: &str| Some([find(a)?, find(b)?, find(c)?]);
    let xyz = find3("x", "y", "z")
        .ok_or_else(|| Error::Ply("vertex element lacks x, y, z".into()))?;
    let normal = find3("nx", "ny", "nz");
    let color = find3("red", "green", "blue").or_else(|| find3("diffuse_red", "diffuse_green", "diffuse_blue"));
    let color_is_float = color.is_some_and(|c| el.props[c[0]].ty.is_float());
    Ok(VertexLayout {
        xyz,
        normal,
        color,
        color_is_float,
    })
}

/// Loads the vertices of a PLY file, converting millimeters to meters.
pub fn load_ply<S: Real>(path: &Path) -> Result<PlyCloud<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let header = parse_header(&mut r)?;
    let vpos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Ply("no vertex element".into()))?;

    // Elements before the vertex block must be skipped.
    for el in &header.elements[..vpos] {
        match header.format {
            Format::Ascii => {
                let mut line = String::new();
                for _ in 0..el.count {
                    line.clear();
                    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
                }
            }
            Format::BinaryLe => {
                if el.props.iter().any(|p| p.is_list) {
                    return Err(Error::Ply(format!(
                        "unsupported element layout: list element '{}' precedes vertices",
                        el.name
                    )));
                }
                let stride: usize = el.props.iter().map(|p| p.ty.size()).sum();
                let mut skip = vec![0u8; stride * el.count];
                r.read_exact(&mut skip).map_err(|e| Error::io(path, e))?;
            }
        }
    }

    let el = &header.elements[vpos];
    if el.count == 0 {
        return Err(Error::Ply("zero vertices".into()));
    }
    let layout = vertex_layout(el)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(el.count);
    match header.format {
        Format::Ascii => {
            let mut line = String::new();
            for i in 0..el.count {
                line.clear();
                let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
                if n == 0 {
                    return Err(Error::Ply(format!("file ends at vertex {i} of {}", el.count)));
                }
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Ply(format!("bad number in vertex {i}")))?;
                if vals.len() < el.props.len() {
                    return Err(Error::Ply(format!("vertex {i} has too few values")));
                }
                rows.push(vals);
            }
        }
        Format::BinaryLe => {
            let stride: usize = el.props.iter().map(|p| p.ty.size()).sum();
            let mut buf = vec![0u8; stride * el.count];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Ply("file ends inside vertex data".into()))?;
            for chunk in buf.chunks_exact(stride) {
                let mut off = 0;
                let mut row = Vec::with_capacity(el.props.len());
                for p in &el.props {
                    row.push(p.ty.decode_le(&chunk[off..off + p.ty.size()]));
                    off += p.ty.size();
                }
                rows.push(row);
            }
        }
    }

    let to_s = |v: f64| S::lit(v);
    let points: Vec<Vec3<S>> = rows
        .iter()
        .map(|r| {
            let [a, b, c] = layout.xyz;
            Vec3::new(to_s(r[a] * MM_TO_M), to_s(r[b] * MM_TO_M), to_s(r[c] * MM_TO_M))
        })
        .collect();
    let mut cloud = PointCloud::new(points).map_err(|e| Error::Ply(e.to_string()))?;
    if let Some([a, b, c]) = layout.normal {
        let normals = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                UnitVec3::new_normalize(Vec3::new(to_s(r[a]), to_s(r[b]), to_s(r[c])))
                    .map_err(|_| Error::Ply(format!("zero-length normal at vertex {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        cloud = cloud.with_normals(normals)?;
    }
    if let Some([a, b, c]) = layout.color {
        let scale = if layout.color_is_float { 255.0 } else { 1.0 };
        let q = |v: f64| (v * scale).round().clamp(0.0, 255.0) as u8;
        let colors: Vec<Rgb> = rows.iter().map(|r| [q(r[a]), q(r[b]), q(r[c])]).collect();
        cloud = cloud.with_colors(colors)?;
    }
    let diameter = cloud_diameter(cloud.points());
    Ok(PlyCloud { cloud, diameter })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Writes a cloud as PLY vertices in millimeters (float32 coordinates).
pub fn write_ply<S: Real>(path: &Path, cloud: &PointCloud<S>, encoding: PlyEncoding) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.has_normals() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if cloud.has_colors() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io)?;
    for i in 0..cloud.len() {
        let p = cloud.points()[i];
        let mut floats = vec![
            (p.x.as_f64() * 1e3) as f32,
            (p.y.as_f64() * 1e3) as f32,
            (p.z.as_f64() * 1e3) as f32,
        ];
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            floats.extend([n.x.as_f64() as f32, n.y.as_f64() as f32, n.z.as_f64() as f32]);
        }
        let color = cloud.colors().map(|c| c[i]);
        match encoding {
            PlyEncoding::Ascii => {
                let mut line: Vec<String> = floats.iter().map(|f| f.to_string()).collect();
                if let Some(c) = color {
                    line.extend(c.iter().map(|v| v.to_string()));
                }
                writeln!(w, "{}", line.join(" ")).map_err(io)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for f in floats {
                    w.write_all(&f.to_le_bytes()).map_err(io)?;
                }
                if let Some(c) = color {
                    w.write_all(&c).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write(dir: &Path, name: &str, body: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_vertex_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.ply",
            b"ply\nformat ascii 1.0\ncomment hand made\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1000 0 0\n0 1000 0\n3 0 1 2\n",
        );
        let m = load_ply::<f64>(&p).unwrap();
        assert_eq!(m.cloud.len(), 3);
        assert!(!m.cloud.has_normals());
        assert!((m.diameter - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.cloud.points()[1], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_ply::<f64>(&dir.path().join("missing.ply")),
            Err(Error::Io { .. })
        ));
        let p = write(
            dir.path(),
            "z.ply",
            b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        assert!(matches!(load_ply::<f64>(&p), Err(Error::Ply(_))));
        let p = write(
            dir.path(),
            "l.ply",
            b"ply\nformat binary_little_endian 1.0\nelement face 1\nproperty list uchar int vertex_indices\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        assert!(matches!(load_ply::<f64>(&p), Err(Error::Ply(_))));
        let p = write(
            dir.path(),
            "b.ply",
            b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        assert!(matches!(load_ply::<f64>(&p), Err(Error::Ply(_))));
    }

    #[test]
    fn binary_round_trip_with_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3<f64>> = (0..1000)
            .map(|_| Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)))
            .collect();
        let normals: Vec<_> = (0..1000)
            .map(|_| {
                UnitVec3::new_normalize(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0)).unwrap()
            })
            .collect();
        let colors: Vec<Rgb> = (0..1000).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let cloud = PointCloud::new(pts).unwrap().with_normals(normals).unwrap().with_colors(colors).unwrap();
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let p = dir.path().join(format!("{enc:?}.ply"));
            write_ply(&p, &cloud, enc).unwrap();
            let back = load_ply::<f64>(&p).unwrap().cloud;
            assert_eq!(back.len(), cloud.len());
            assert_eq!(back.colors(), cloud.colors());
            for (a, b) in back.points().iter().zip(cloud.points()) {
                // float32 millimeters
                assert!(a.distance(b) < 1e-7, "{a:?} {b:?}");
            }
            for (a, b) in back.normals().unwrap().iter().zip(cloud.normals().unwrap()) {
                assert!(a.distance(b) < 1e-6);
            }
        }
    }
}
