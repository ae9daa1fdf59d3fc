//! Binary little-endian PLY for scene clouds.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ScenePointCloud;
use crate::error::{Error, Result};

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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format(format!("unknown PLY scalar type '{other}'"))),
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
}

#[derive(Debug)]
struct Property {
    name: String,
    scalar: Scalar,
    is_list: bool,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Vec<Element>> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String> {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::format(format!("reading PLY header: {e}")))?;
        if n == 0 {
            return Err(Error::format("unexpected end of PLY header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };

    if next_line(reader)? != "ply" {
        return Err(Error::format("missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        let l = next_line(reader)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => saw_format = true,
            ["format", other, ..] => {
                return Err(Error::format(format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", _count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format("property before any element"))?;
                el.properties.push(Property {
                    name: name.to_string(),
                    scalar: Scalar::parse(item_ty)?,
                    is_list: true,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format("property before any element"))?;
                el.properties.push(Property {
                    name: name.to_string(),
                    scalar: Scalar::parse(ty)?,
                    is_list: false,
                });
            }
            _ => return Err(Error::format(format!("malformed PLY header line '{l}'"))),
        }
    }
    if !saw_format {
        return Err(Error::format("missing PLY format line"));
    }
    Ok(elements)
}

/// Parses a binary little-endian PLY stream.
pub fn read_cloud<R: BufRead>(mut reader: R) -> Result<ScenePointCloud> {
    let elements = read_header(&mut reader)?;
    let mut skip = 0usize;
    let mut vertex = None;
    for el in &elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        if el.properties.iter().any(|p| p.is_list) {
            return Err(Error::format("list-valued element before vertex data"));
        }
        skip += el.count * el.properties.iter().map(|p| p.scalar.size()).sum::<usize>();
    }
    let vertex = vertex.ok_or_else(|| Error::format("no vertex element"))?;
    if vertex.properties.iter().any(|p| p.is_list) {
        return Err(Error::format("vertex element has list properties"));
    }

    let mut offsets = Vec::with_capacity(vertex.properties.len());
    let mut stride = 0usize;
    for p in &vertex.properties {
        offsets.push(stride);
        stride += p.scalar.size();
    }
    let find = |name: &str| vertex.properties.iter().position(|p| p.name == name);
    let mut coord = [0usize; 3];
    for (slot, axis) in coord.iter_mut().zip(["x", "y", "z"]) {
        let idx = find(axis).ok_or_else(|| Error::format("missing coordinate property"))?;
        if vertex.properties[idx].scalar != Scalar::F32 {
            return Err(Error::format(format!("coordinate '{axis}' must be float32")));
        }
        *slot = offsets[idx];
    }
    let color = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b))
            if [r, g, b].iter().all(|&i| vertex.properties[i].scalar == Scalar::U8) =>
        {
            Some([offsets[r], offsets[g], offsets[b]])
        }
        _ => None,
    };

    if skip > 0 {
        std::io::copy(&mut (&mut reader).take(skip as u64), &mut std::io::sink())
            .map_err(|e| Error::format(format!("truncated PLY body: {e}")))?;
    }
    let mut body = vec![0u8; vertex.count * stride];
    reader
        .read_exact(&mut body)
        .map_err(|_| Error::format("truncated PLY vertex data"))?;

    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = color.map(|_| Vec::with_capacity(vertex.count));
    for rec in body.chunks_exact(stride.max(1)).take(vertex.count) {
        let f = |off: usize| f32::from_le_bytes(rec[off..off + 4].try_into().unwrap());
        points.push([f(coord[0]), f(coord[1]), f(coord[2])]);
        if let (Some(c), Some(offs)) = (colors.as_mut(), color) {
            c.push([rec[offs[0]], rec[offs[1]], rec[offs[2]]]);
        }
    }
    ScenePointCloud::new(points, colors)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<ScenePointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(BufReader::new(file))
}

pub fn write_cloud<W: Write>(
    mut w: W,
    points: &[[f32; 3]],
    colors: Option<&[[u8; 3]]>,
) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property float {axis}")?;
    }
    if colors.is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(w, "property uchar {c}")?;
        }
    }
    writeln!(w, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(c) = colors {
            w.write_all(&c[i])?;
        }
    }
    w.flush()
}

pub fn save_cloud(
    path: impl AsRef<Path>,
    points: &[[f32; 3]],
    colors: Option<&[[u8; 3]]>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cloud(BufWriter::new(file), points, colors).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(points: &[[f32; 3]], colors: Option<&[[u8; 3]]>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_cloud(&mut buf, points, colors).unwrap();
        buf
    }

    #[test]
    fn three_vertex_round_trip() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let cloud = read_cloud(&encode(&pts, None)[..]).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.points(), &pts);
        assert!(cloud.colors().is_none());
    }

    #[test]
    fn colors_are_read_when_present() {
        let pts = [[0.5, 0.25, -1.0]];
        let cols = [[10u8, 20, 30]];
        let cloud = read_cloud(&encode(&pts, Some(&cols))[..]).unwrap();
        assert_eq!(cloud.colors().unwrap(), &cols);
    }

    #[test]
    fn missing_z_is_an_error() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n".to_vec();
        buf.extend_from_slice(&[0u8; 8]);
        let err = read_cloud(&buf[..]).unwrap_err();
        assert!(err.to_string().contains("missing coordinate property"));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(read_cloud(&encode(&[[f32::NAN, 0.0, 0.0]], None)[..]).is_err());
        assert!(read_cloud(&encode(&[], None)[..]).is_err());
    }

    #[test]
    fn extra_properties_are_skipped() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 2\nproperty double nx\nproperty float x\nproperty float y\nproperty float z\nproperty uchar alpha\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for p in [[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]] {
            buf.extend_from_slice(&9.0f64.to_le_bytes());
            for v in p {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(255);
        }
        let cloud = read_cloud(&buf[..]).unwrap();
        assert_eq!(cloud.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }
}
