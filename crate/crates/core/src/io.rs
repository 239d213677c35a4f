//! File formats: PLY point clouds, PLY/OBJ meshes, raw image buffers with a
//! JSON header line, and small JSON/text helpers.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{self, Mesh};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Writes a binary little-endian PLY cloud with float32 coordinates and
/// optional uint8 colors. `comments` go into the header verbatim.
pub fn write_cloud_ply(path: &Path, points: &[[f64; 3]], colors: Option<&[[u8; 3]]>, comments: &[String]) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != points.len() {
            return Err(Error::DimensionMismatch("one color per point".into()));
        }
    }
    let mut out = Vec::with_capacity(64 + points.len() * 15);
    writeln!(out, "ply").unwrap();
    writeln!(out, "format binary_little_endian 1.0").unwrap();
    for c in comments {
        writeln!(out, "comment {}", c.replace('\n', " ")).unwrap();
    }
    writeln!(out, "element vertex {}", points.len()).unwrap();
    for a in ["x", "y", "z"] {
        writeln!(out, "property float {a}").unwrap();
    }
    if colors.is_some() {
        for a in ["red", "green", "blue"] {
            writeln!(out, "property uchar {a}").unwrap();
        }
    }
    writeln!(out, "end_header").unwrap();
    for (i, p) in points.iter().enumerate() {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(c) = colors {
            out.extend_from_slice(&c[i]);
        }
    }
    write_bytes(path, &out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
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

    fn read_le(self, b: &[u8]) -> f64 {
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

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Values of one element row: scalars as single-entry vectors.
type Row = Vec<Vec<f64>>;

struct PlyData {
    elements: Vec<(Element, Vec<Row>)>,
}

impl PlyData {
    fn element(&self, name: &str) -> Option<&(Element, Vec<Row>)> {
        self.elements.iter().find(|(e, _)| e.name == name)
    }
}

fn prop_index(e: &Element, name: &str) -> Option<usize> {
    e.props.iter().position(|p| match p {
        Property::Scalar(n, _) | Property::List(n, _, _) => n == name,
    })
}

fn parse_ply(path: &Path) -> Result<PlyData> {
    let bad = |m: &str| Error::format(path, m);
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let next_line = |reader: &mut BufReader<fs::File>, line: &mut String| -> Result<bool> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        Ok(n > 0)
    };
    next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(&mut reader, &mut line)? {
            return Err(bad("unterminated header"));
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(&format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, name] => {
                let (c, t) = (Scalar::parse(c), Scalar::parse(t));
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                match (c, t) {
                    (Some(c), Some(t)) => e.props.push(Property::List(name.to_string(), c, t)),
                    _ => return Err(bad("bad list property type")),
                }
            }
            ["property", t, name] => {
                let t = Scalar::parse(t).ok_or_else(|| bad("bad property type"))?;
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                e.props.push(Property::Scalar(name.to_string(), t));
            }
            ["end_header"] => break,
            _ => return Err(bad(&format!("unexpected header line {:?}", line.trim()))),
        }
    }
    let binary = binary.ok_or_else(|| bad("missing format line"))?;
    let mut out = Vec::new();
    if binary {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut pos = 0;
        let mut take = |t: Scalar| -> Result<f64> {
            let end = pos + t.size();
            if end > bytes.len() {
                return Err(bad("truncated binary body"));
            }
            let v = t.read_le(&bytes[pos..end]);
            pos = end;
            Ok(v)
        };
        for e in elements {
            let mut rows = Vec::with_capacity(e.count);
            for _ in 0..e.count {
                let mut row = Vec::with_capacity(e.props.len());
                for p in &e.props {
                    match p {
                        Property::Scalar(_, t) => row.push(vec![take(*t)?]),
                        Property::List(_, c, t) => {
                            let n = take(*c)? as usize;
                            row.push((0..n).map(|_| take(*t)).collect::<Result<_>>()?);
                        }
                    }
                }
                rows.push(row);
            }
            out.push((e, rows));
        }
    } else {
        let mut rest = String::new();
        reader.read_to_string(&mut rest).map_err(|e| Error::io(path, e))?;
        let mut lines = rest.lines().filter(|l| !l.trim().is_empty());
        for e in elements {
            let mut rows = Vec::with_capacity(e.count);
            for _ in 0..e.count {
                let l = lines.next().ok_or_else(|| bad("truncated ascii body"))?;
                let mut vals = l.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad("bad number")));
                let mut row = Vec::with_capacity(e.props.len());
                for p in &e.props {
                    match p {
                        Property::Scalar(..) => row.push(vec![vals.next().ok_or_else(|| bad("short row"))??]),
                        Property::List(..) => {
                            let n = vals.next().ok_or_else(|| bad("short row"))?? as usize;
                            row.push((0..n).map(|_| vals.next().ok_or_else(|| bad("short row"))?).collect::<Result<_>>()?);
                        }
                    }
                }
                rows.push(row);
            }
            out.push((e, rows));
        }
    }
    Ok(PlyData { elements: out })
}

fn ply_vertices(path: &Path, data: &PlyData) -> Result<Vec<[f64; 3]>> {
    let (e, rows) = data.element("vertex").ok_or_else(|| Error::format(path, "no vertex element"))?;
    let idx: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|n| prop_index(e, n).ok_or_else(|| Error::format(path, format!("vertex has no {n}"))))
        .collect::<Result<_>>()?;
    Ok(rows.iter().map(|r| [r[idx[0]][0], r[idx[1]][0], r[idx[2]][0]]).collect())
}

/// Reads a PLY point cloud (ASCII or binary little-endian), returning the
/// points and, when present, the uint8 colors.
pub fn read_cloud_ply(path: &Path) -> Result<(Vec<[f64; 3]>, Option<Vec<[u8; 3]>>)> {
    let data = parse_ply(path)?;
    let points = ply_vertices(path, &data)?;
    let (e, rows) = data.element("vertex").unwrap();
    let colors = match (prop_index(e, "red"), prop_index(e, "green"), prop_index(e, "blue")) {
        (Some(r), Some(g), Some(b)) => Some(rows.iter().map(|row| [row[r][0] as u8, row[g][0] as u8, row[b][0] as u8]).collect()),
        _ => None,
    };
    Ok((points, colors))
}

/// Fan-triangulates polygons.
fn triangulate(path: &Path, polys: &[Vec<usize>]) -> Result<Vec<[usize; 3]>> {
    let mut faces = Vec::new();
    for p in polys {
        if p.len() < 3 {
            return Err(Error::format(path, "face with fewer than 3 vertices"));
        }
        for i in 1..p.len() - 1 {
            faces.push([p[0], p[i], p[i + 1]]);
        }
    }
    Ok(faces)
}

fn read_mesh_ply(path: &Path, name: String) -> Result<Mesh> {
    let data = parse_ply(path)?;
    let vertices = ply_vertices(path, &data)?;
    let (e, rows) = data.element("face").ok_or_else(|| Error::format(path, "no face element"))?;
    let i = prop_index(e, "vertex_indices")
        .or_else(|| prop_index(e, "vertex_index"))
        .ok_or_else(|| Error::format(path, "face has no vertex_indices"))?;
    let polys: Vec<Vec<usize>> = rows.iter().map(|r| r[i].iter().map(|v| *v as usize).collect()).collect();
    Mesh::new(name, vertices, triangulate(path, &polys)?)
}

fn read_mesh_obj(path: &Path, name: String) -> Result<Mesh> {
    let text = read_text(path)?;
    let bad = |m: String| Error::format(path, m);
    let mut vertices = Vec::new();
    let mut polys = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse().map_err(|_| bad(format!("line {}: bad vertex", n + 1))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(format!("line {}: vertex needs 3 coordinates", n + 1)));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| bad(format!("line {}: bad face index", n + 1)))?;
                    // OBJ indices are 1-based; negative ones count from the end
                    let idx = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if idx < 0 {
                        return Err(bad(format!("line {}: face index out of range", n + 1)));
                    }
                    poly.push(idx as usize);
                }
                polys.push(poly);
            }
            _ => {}
        }
    }
    Mesh::new(name, vertices, triangulate(path, &polys)?)
}

/// Loads a mesh from `.ply` or `.obj`, or a library object given as
/// `lib:<name>`. The mesh name is the file stem.
pub fn load_mesh(spec: &str) -> Result<Mesh> {
    if let Some(name) = spec.strip_prefix("lib:") {
        return mesh::library_object(name).ok_or_else(|| Error::InvalidParameter(format!("no library object {name:?}")));
    }
    let path = Path::new(spec);
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => read_mesh_ply(path, name),
        Some("obj") => read_mesh_obj(path, name),
        _ => Err(Error::format(path, "expected a .ply or .obj mesh")),
    }
}

/// Writes an ASCII PLY mesh.
pub fn write_mesh_ply(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str(&format!("element face {}\n", mesh.faces.len()));
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in &mesh.vertices {
        out.push_str(&format!("{:?} {:?} {:?}\n", v[0], v[1], v[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    write_bytes(path, out.as_bytes())
}

/// Raw little-endian image buffer preceded by a one-line JSON header
/// `{"width":..,"height":..,"dtype":..}`.
pub fn write_raster(path: &Path, width: usize, height: usize, dtype: &str, body: &[u8], meta: &serde_json::Value) -> Result<()> {
    let header = serde_json::json!({"width": width, "height": height, "dtype": dtype, "order": "row-major", "meta": meta});
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(body);
    write_bytes(path, &out)
}

/// Reads a raster written by [`write_raster`], checking its dtype and size.
pub fn read_raster(path: &Path, dtype: &str, elem_size: usize) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::format(path, "missing header line"))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format(path, e.to_string()))?;
    let w = header["width"].as_u64().ok_or_else(|| Error::format(path, "header lacks width"))? as usize;
    let h = header["height"].as_u64().ok_or_else(|| Error::format(path, "header lacks height"))? as usize;
    if header["dtype"] != dtype {
        return Err(Error::format(path, format!("expected dtype {dtype}")));
    }
    let body = bytes[nl + 1..].to_vec();
    if body.len() != w * h * elem_size {
        return Err(Error::format(path, "body size does not match header"));
    }
    Ok((w, h, body))
}
