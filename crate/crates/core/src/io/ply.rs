//! PLY reader (ascii and binary little-endian) and ascii writer.

use std::io::Write;

use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(name: &str) -> Option<Self> {
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

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

/// Vertex positions and polygon faces read from a PLY file.
#[derive(Debug, Default)]
pub struct PlyData {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<u32>>,
}

pub fn parse(bytes: &[u8]) -> Result<PlyData, String> {
    let (elements, format, body_start) = parse_header(bytes)?;
    let body = &bytes[body_start..];
    match format {
        Format::Ascii => parse_ascii(&elements, body),
        Format::BinaryLe => parse_binary(&elements, body),
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, Format, usize), String> {
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or("missing end_header")?;
    let mut body_start = end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not utf-8")?;

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("not a PLY file".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", other, _] => return Err(format!("unsupported PLY format {other}")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count {count}"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let c = Scalar::parse(count_ty).ok_or(format!("unknown type {count_ty}"))?;
                let i = Scalar::parse(item_ty).ok_or(format!("unknown type {item_ty}"))?;
                el.properties.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let s = Scalar::parse(ty).ok_or(format!("unknown type {ty}"))?;
                el.properties.push(Property::Scalar(name.to_string(), s));
            }
            _ => return Err(format!("unrecognized header line: {line}")),
        }
    }
    let format = format.ok_or("missing format line")?;
    Ok((elements, format, body_start))
}

fn xyz_slots(el: &Element) -> Result<[usize; 3], String> {
    let find = |axis: &str| {
        el.properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or(format!("vertex element has no '{axis}' property"))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

fn is_face_list(el: &Element, p: &Property) -> bool {
    el.name == "face" && matches!(p, Property::List(n, _, _) if n == "vertex_indices" || n == "vertex_index")
}

fn parse_ascii(elements: &[Element], body: &[u8]) -> Result<PlyData, String> {
    let text = std::str::from_utf8(body).map_err(|_| "body is not utf-8")?;
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<f64, String> {
        let t = tokens.next().ok_or(format!("unexpected end of data reading {what}"))?;
        t.parse::<f64>().map_err(|_| format!("bad number '{t}' in {what}"))
    };
    let mut out = PlyData::default();
    for el in elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el)?) } else { None };
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for (k, p) in el.properties.iter().enumerate() {
                match p {
                    Property::Scalar(..) => {
                        let v = next(&el.name)?;
                        if let Some(s) = slots {
                            if let Some(a) = s.iter().position(|&i| i == k) {
                                xyz[a] = v;
                            }
                        }
                    }
                    Property::List(..) => {
                        let n = next(&el.name)? as usize;
                        let items = (0..n).map(|_| next(&el.name)).collect::<Result<Vec<_>, _>>()?;
                        if is_face_list(el, p) {
                            out.faces.push(items.iter().map(|&v| v as u32).collect());
                        }
                    }
                }
            }
            if slots.is_some() {
                out.vertices.push(Vec3::from(xyz));
            }
        }
    }
    Ok(out)
}

fn parse_binary(elements: &[Element], body: &[u8]) -> Result<PlyData, String> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], String> {
        let s = body.get(pos..pos + n).ok_or("unexpected end of binary data")?;
        pos += n;
        Ok(s)
    };
    let mut out = PlyData::default();
    for el in elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el)?) } else { None };
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for (k, p) in el.properties.iter().enumerate() {
                match p {
                    Property::Scalar(_, ty) => {
                        let v = ty.read_le(take(ty.size())?);
                        if let Some(s) = slots {
                            if let Some(a) = s.iter().position(|&i| i == k) {
                                xyz[a] = v;
                            }
                        }
                    }
                    Property::List(_, count_ty, item_ty) => {
                        let n = count_ty.read_le(take(count_ty.size())?) as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(item_ty.read_le(take(item_ty.size())?) as u32);
                        }
                        if is_face_list(el, p) {
                            out.faces.push(items);
                        }
                    }
                }
            }
            if slots.is_some() {
                out.vertices.push(Vec3::from(xyz));
            }
        }
    }
    Ok(out)
}

/// Ascii PLY with double-precision vertices and optional triangle faces.
pub fn write<W: Write>(mut w: W, vertices: &[Vec3], faces: &[[u32; 3]]) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if !faces.is_empty() {
        writeln!(w, "element face {}", faces.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    for v in vertices {
        writeln!(w, "{:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_mesh_with_extra_properties() {
        let src = b"ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 4\n\
property float x\nproperty float y\nproperty float z\nproperty uchar red\n\
element face 1\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0 255\n1 0 0 0\n1 1 0 0\n0 1 0 9\n4 0 1 2 3\n";
        let d = parse(src).unwrap();
        assert_eq!(d.vertices.len(), 4);
        assert_eq!(d.vertices[2], Vec3::new(1.0, 1.0, 0.0));
        assert_eq!(d.faces, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn binary_little_endian() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
property double x\nproperty double y\nproperty float z\n\
element face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for v in [[1.5f64, -2.0], [0.25, 8.0]] {
            bytes.extend(v[0].to_le_bytes());
            bytes.extend(v[1].to_le_bytes());
            bytes.extend(3.0f32.to_le_bytes());
        }
        bytes.push(3);
        for i in [0u32, 1, 1] {
            bytes.extend(i.to_le_bytes());
        }
        let d = parse(&bytes).unwrap();
        assert_eq!(d.vertices, vec![Vec3::new(1.5, -2.0, 3.0), Vec3::new(0.25, 8.0, 3.0)]);
        assert_eq!(d.faces, vec![vec![0, 1, 1]]);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
property float x\nproperty float y\nproperty float z\nend_header\n\x00\x00";
        assert!(parse(bytes).is_err());
    }

    #[test]
    fn writer_output_reads_back_exactly() {
        let v = vec![Vec3::new(0.1, 1.0 / 3.0, -7e-9), Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()];
        let mut buf = Vec::new();
        write(&mut buf, &v, &[[0, 1, 2]]).unwrap();
        let d = parse(&buf).unwrap();
        assert_eq!(d.vertices, v);
        assert_eq!(d.faces, vec![vec![0, 1, 2]]);
    }
}
