//! PLY (ASCII and binary little-endian) and OBJ readers, plus a PLY writer
//! for point clouds.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::{GeometryError, PartCloud, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    /// Guess the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self, GeometryError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ply") => Ok(MeshFormat::Ply),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(GeometryError::UnsupportedFormat(path.to_path_buf())),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh, GeometryError> {
    let bytes = fs::read(path).map_err(|e| GeometryError::io(path, e))?;
    match format {
        MeshFormat::Ply => parse_ply(&bytes),
        MeshFormat::Obj => {
            let text = std::str::from_utf8(&bytes).map_err(|e| GeometryError::Format {
                position: e.valid_up_to(),
                message: "OBJ file is not valid UTF-8".into(),
            })?;
            parse_obj(text)
        }
    }
}

fn format_err(position: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Format { position, message: message.into() }
}

/// Polygon -> triangles, fan-wise from the first corner.
fn fan(poly: &[u32]) -> impl Iterator<Item = [u32; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |i| [poly[0], poly[i], poly[i + 1]])
}

fn finish_mesh(
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    face_offsets: &[usize],
) -> Result<TriangleMesh, GeometryError> {
    TriangleMesh::new(vertices, triangles).map_err(|e| match e {
        GeometryError::IndexOutOfRange { triangle, index, count } => format_err(
            face_offsets.get(triangle).copied().unwrap_or(0),
            format!("vertex index {index} out of range ({count} vertices)"),
        ),
        other => other,
    })
}

// ---------------------------------------------------------------- OBJ

pub fn parse_obj(text: &str) -> Result<TriangleMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut face_offsets = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let pos = offset;
        offset += line.len();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| format_err(pos, "bad vertex coordinate"))?;
                if coords.len() != 3 {
                    return Err(format_err(pos, "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let count = vertices.len() as i64;
                let poly = tokens
                    .map(|t| {
                        let idx: i64 = t.split('/').next()?.parse().ok()?;
                        let resolved = if idx < 0 { count + idx } else { idx - 1 };
                        (resolved >= 0).then_some(resolved as u32)
                    })
                    .collect::<Option<Vec<u32>>>()
                    .ok_or_else(|| format_err(pos, "bad face index"))?;
                if poly.len() < 3 {
                    return Err(format_err(pos, "face needs at least three vertices"));
                }
                for tri in fan(&poly) {
                    triangles.push(tri);
                    face_offsets.push(pos);
                }
            }
            _ => {}
        }
    }
    finish_mesh(vertices, triangles, &face_offsets)
}

// ---------------------------------------------------------------- PLY

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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

/// One decoded element instance: scalars in property order, lists flattened
/// into their own vectors.
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh, GeometryError> {
    let (encoding, elements, body_start) = parse_ply_header(bytes)?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut face_offsets = Vec::new();

    let mut reader: Box<dyn ElementReader> = match encoding {
        Encoding::Ascii => Box::new(AsciiReader::new(bytes, body_start)),
        Encoding::BinaryLe => Box::new(BinaryReader { bytes, pos: body_start }),
    };

    for el in &elements {
        let xyz: Option<[usize; 3]> = (el.name == "vertex")
            .then(|| {
                let find = |n: &str| {
                    el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
                };
                Some([find("x")?, find("y")?, find("z")?])
            })
            .flatten();
        if el.name == "vertex" && xyz.is_none() {
            return Err(format_err(0, "vertex element lacks x/y/z properties"));
        }
        let face_list = (el.name == "face")
            .then(|| {
                el.props.iter().position(|p| {
                    matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
                })
            })
            .flatten();

        for _ in 0..el.count {
            let (pos, values) = reader.read(el)?;
            if let Some([ix, iy, iz]) = xyz {
                let get = |i: usize| match &values[i] {
                    Value::Scalar(v) => *v,
                    Value::List(_) => f64::NAN,
                };
                let p = Point3::new(get(ix), get(iy), get(iz));
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(format_err(pos, "non-finite vertex coordinate"));
                }
                vertices.push(p);
            }
            if let Some(li) = face_list {
                let Value::List(idx) = &values[li] else { unreachable!() };
                if idx.len() < 3 {
                    return Err(format_err(pos, "face needs at least three vertices"));
                }
                let poly = idx
                    .iter()
                    .map(|&v| (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32))
                    .collect::<Option<Vec<u32>>>()
                    .ok_or_else(|| format_err(pos, "bad face index"))?;
                for tri in fan(&poly) {
                    triangles.push(tri);
                    face_offsets.push(pos);
                }
            }
        }
    }
    reader.finish()?;
    finish_mesh(vertices, triangles, &face_offsets)
}

fn parse_ply_header(bytes: &[u8]) -> Result<(Encoding, Vec<Element>, usize), GeometryError> {
    let mut pos = 0;
    let mut next_line = || -> Option<(usize, &str)> {
        if pos >= bytes.len() {
            return None;
        }
        let start = pos;
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| pos + i);
        pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end]).ok()?;
        Some((start, line.trim_end_matches('\r')))
    };

    match next_line() {
        Some((_, "ply")) => {}
        _ => return Err(format_err(0, "missing `ply` magic")),
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (at, line) = next_line().ok_or_else(|| format_err(bytes.len(), "unterminated header"))?;
        let mut t = line.split_whitespace();
        match t.next() {
            Some("format") => {
                encoding = Some(match (t.next(), t.next()) {
                    (Some("ascii"), Some("1.0")) => Encoding::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Encoding::BinaryLe,
                    _ => return Err(format_err(at, format!("unsupported format line `{line}`"))),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = t.next().ok_or_else(|| format_err(at, "element without name"))?;
                let count = t
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format_err(at, "element without count"))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| format_err(at, "property before element"))?;
                let bad = || format_err(at, format!("bad property line `{line}`"));
                let prop = match t.next() {
                    Some("list") => {
                        let count = t.next().and_then(Scalar::parse).ok_or_else(bad)?;
                        let item = t.next().and_then(Scalar::parse).ok_or_else(bad)?;
                        let name = t.next().ok_or_else(bad)?.to_string();
                        Property::List { name, count, item }
                    }
                    Some(ty) => {
                        let ty = Scalar::parse(ty).ok_or_else(bad)?;
                        Property::Scalar { name: t.next().ok_or_else(bad)?.to_string(), ty }
                    }
                    None => return Err(bad()),
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(format_err(at, format!("unknown header keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| format_err(0, "missing format line"))?;
    Ok((encoding, elements, pos))
}

trait ElementReader {
    /// Reads one element instance; returns its byte offset and values.
    fn read(&mut self, el: &Element) -> Result<(usize, Vec<Value>), GeometryError>;
    fn finish(&mut self) -> Result<(), GeometryError>;
}

struct AsciiReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> AsciiReader<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    /// Next non-blank line with its starting offset.
    fn line(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.bytes.len() {
            let start = self.pos;
            let end = self.bytes[start..].iter().position(|&b| b == b'\n').map_or(self.bytes.len(), |i| start + i);
            self.pos = end + 1;
            let text = std::str::from_utf8(&self.bytes[start..end]).ok()?;
            if !text.trim().is_empty() {
                return Some((start, text));
            }
        }
        None
    }
}

impl ElementReader for AsciiReader<'_> {
    fn read(&mut self, el: &Element) -> Result<(usize, Vec<Value>), GeometryError> {
        let eof = self.bytes.len();
        let (at, line) = self
            .line()
            .ok_or_else(|| format_err(eof, format!("unexpected end of data in element `{}`", el.name)))?;
        let mut tokens = line.split_whitespace();
        let mut num = || -> Result<f64, GeometryError> {
            let tok = tokens
                .next()
                .ok_or_else(|| format_err(at, format!("too few values for element `{}`", el.name)))?;
            tok.parse::<f64>().map_err(|_| format_err(at, format!("bad number `{tok}`")))
        };
        let mut values = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Scalar { .. } => values.push(Value::Scalar(num()?)),
                Property::List { .. } => {
                    let n = num()?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(format_err(at, "bad list length"));
                    }
                    let items = (0..n as usize).map(|_| num()).collect::<Result<_, _>>()?;
                    values.push(Value::List(items));
                }
            }
        }
        if tokens.next().is_some() {
            return Err(format_err(at, format!("too many values for element `{}`", el.name)));
        }
        Ok((at, values))
    }

    fn finish(&mut self) -> Result<(), GeometryError> {
        match self.line() {
            Some((at, _)) => Err(format_err(at, "unexpected data after last element")),
            None => Ok(()),
        }
    }
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinaryReader<'_> {
    fn take(&mut self, ty: Scalar) -> Result<f64, GeometryError> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(format_err(self.pos, "unexpected end of binary data"));
        }
        let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

impl ElementReader for BinaryReader<'_> {
    fn read(&mut self, el: &Element) -> Result<(usize, Vec<Value>), GeometryError> {
        let at = self.pos;
        let mut values = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match *p {
                Property::Scalar { ty, .. } => values.push(Value::Scalar(self.take(ty)?)),
                Property::List { count, item, .. } => {
                    let n = self.take(count)?;
                    if n < 0.0 {
                        return Err(format_err(at, "bad list length"));
                    }
                    let items = (0..n as usize).map(|_| self.take(item)).collect::<Result<_, _>>()?;
                    values.push(Value::List(items));
                }
            }
        }
        Ok((at, values))
    }

    fn finish(&mut self) -> Result<(), GeometryError> {
        Ok(())
    }
}

/// ASCII PLY with vertex positions only. Output is a pure function of the
/// cloud, so identical clouds give identical files.
pub fn write_cloud_ply<W: Write>(cloud: &PartCloud, mut out: W) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    writeln!(out, "end_header")?;
    for p in &cloud.points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_HEADER: &str = "ply\nformat ascii 1.0\ncomment unit cube\nelement vertex 8\nproperty float x\nproperty float y\nproperty float z\nelement face 12\nproperty list uchar int vertex_indices\nend_header\n";
    const CUBE_VERTS: &str = "0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n";
    const CUBE_FACES: &str = "3 0 2 1\n3 0 3 2\n3 4 5 6\n3 4 6 7\n3 0 1 5\n3 0 5 4\n3 2 3 7\n3 2 7 6\n3 1 2 6\n3 1 6 5\n3 0 4 7\n3 0 7 3\n";

    #[test]
    fn ascii_cube() {
        let text = format!("{CUBE_HEADER}{CUBE_VERTS}{CUBE_FACES}");
        let m = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(m.triangles().len(), 12);
        assert!((m.area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn short_vertex_section_is_a_format_error() {
        let text = format!("{}{CUBE_VERTS}{CUBE_FACES}", CUBE_HEADER.replace("vertex 8", "vertex 10"));
        let err = parse_ply(text.as_bytes()).unwrap_err();
        match err {
            GeometryError::Format { position, .. } => {
                assert_eq!(position, CUBE_HEADER.len() + 1 + CUBE_VERTS.len());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_matches_ascii() {
        let mut bin = CUBE_HEADER.replace("ascii", "binary_little_endian").into_bytes();
        for line in CUBE_VERTS.lines() {
            for v in line.split_whitespace() {
                bin.extend_from_slice(&v.parse::<f32>().unwrap().to_le_bytes());
            }
        }
        for line in CUBE_FACES.lines() {
            let mut it = line.split_whitespace();
            bin.push(it.next().unwrap().parse::<u8>().unwrap());
            for v in it {
                bin.extend_from_slice(&v.parse::<i32>().unwrap().to_le_bytes());
            }
        }
        let a = parse_ply(format!("{CUBE_HEADER}{CUBE_VERTS}{CUBE_FACES}").as_bytes()).unwrap();
        let b = parse_ply(&bin).unwrap();
        assert_eq!(a, b);

        bin.truncate(bin.len() - 3);
        assert!(matches!(parse_ply(&bin), Err(GeometryError::Format { .. })));
    }

    #[test]
    fn obj_quad_is_two_triangles() {
        let m = parse_obj("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_negative_indices_and_errors() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n").unwrap_err();
        assert!(matches!(err, GeometryError::Format { position: 24, .. }), "{err:?}");
        assert!(matches!(parse_obj("v 0 0 0\n"), Err(GeometryError::EmptyMesh)));
    }

    #[test]
    fn cloud_export_reads_back() {
        let cloud = PartCloud::raw("p", vec![Point3::new(0.1, -2.0, 3.5), Point3::new(1.0, 0.0, 0.25)]);
        let mut buf = Vec::new();
        write_cloud_ply(&cloud, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("0.1 -2 3.5\n1 0 0.25\n"));
    }
}
