//! PLY reader and writer for colored point clouds.
//!
//! Reads ascii and binary-little-endian files whose `vertex` element carries
//! `x y z` (float or double) and `red green blue` (uchar). Other properties
//! and elements are skipped. Writes binary-little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
    scan_id: Option<String>,
    /// Byte length of the header including the `end_header` line.
    len: u64,
}

/// Offsets of the required fields within a vertex record.
#[derive(Debug, Clone, Copy)]
struct VertexLayout {
    xyz: [(usize, Scalar); 3],
    rgb: [(usize, Scalar); 3],
    /// Record stride in bytes for binary files, property count for ascii.
    stride: usize,
}

fn header_err(line: usize, msg: impl Into<String>) -> Error {
    Error::parse(format!("header line {line}"), msg)
}

fn next_line<R: BufRead>(r: &mut R, line: &mut String, len: &mut u64, line_no: &mut usize) -> Result<bool> {
    line.clear();
    *line_no += 1;
    let n = r.read_line(line).map_err(|e| header_err(*line_no, e.to_string()))?;
    *len += n as u64;
    Ok(n > 0)
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut len = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;

    if !next_line(r, &mut line, &mut len, &mut line_no)? || line.trim_end() != "ply" {
        return Err(header_err(1, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut scan_id = None;
    loop {
        if !next_line(r, &mut line, &mut len, &mut line_no)? {
            return Err(header_err(line_no, "unexpected end of file before `end_header`"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _version] => {
                format = Some(match *fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => {
                        return Err(header_err(line_no, format!("unsupported format `{other}`")))
                    }
                })
            }
            ["comment", "scan_id", id] => scan_id = Some(id.to_string()),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| header_err(line_no, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let count = Scalar::parse(count)
                    .ok_or_else(|| header_err(line_no, format!("unknown type `{count}`")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| header_err(line_no, format!("unknown type `{item}`")))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| header_err(line_no, format!("unknown type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => {
                return Err(header_err(
                    line_no,
                    format!("unrecognized header line `{}`", line.trim_end()),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| header_err(line_no, "missing `format` line"))?;
    Ok(Header {
        format,
        elements,
        scan_id,
        len,
    })
}

fn vertex_layout(el: &Element, format: Format) -> Result<VertexLayout> {
    let mut offset = 0usize;
    let mut found: [Option<(usize, Scalar)>; 6] = [None; 6];
    const NAMES: [&str; 6] = ["x", "y", "z", "red", "green", "blue"];
    for (index, p) in el.props.iter().enumerate() {
        match p {
            Property::Scalar { name, ty } => {
                if let Some(k) = NAMES.iter().position(|n| n == name) {
                    let pos = if format == Format::Ascii { index } else { offset };
                    found[k] = Some((pos, *ty));
                }
                offset += ty.size();
            }
            Property::List { .. } => {
                return Err(Error::parse(
                    "element vertex",
                    "list properties on vertices are not supported",
                ))
            }
        }
    }
    let mut get = |k: usize| -> Result<(usize, Scalar)> {
        found[k]
            .take()
            .ok_or_else(|| Error::parse("element vertex", format!("missing property `{}`", NAMES[k])))
    };
    let xyz = [get(0)?, get(1)?, get(2)?];
    let rgb = [get(3)?, get(4)?, get(5)?];
    for (k, (_, ty)) in xyz.iter().enumerate() {
        if !matches!(ty, Scalar::F32 | Scalar::F64) {
            return Err(Error::parse(
                "element vertex",
                format!("property `{}` must be float or double", NAMES[k]),
            ));
        }
    }
    for (k, (_, ty)) in rgb.iter().enumerate() {
        if *ty != Scalar::U8 {
            return Err(Error::parse(
                "element vertex",
                format!("property `{}` must be uchar", NAMES[k + 3]),
            ));
        }
    }
    let stride = if format == Format::Ascii {
        el.props.len()
    } else {
        offset
    };
    Ok(VertexLayout { xyz, rgb, stride })
}

/// Reads a PLY point cloud. The scan id comes from a `comment scan_id <id>`
/// header line when present, otherwise from the file stem.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let default_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_ply(&mut reader, default_id).map_err(|e| e.with_path(path))
}

/// Reads a PLY stream; see [`load_ply`].
pub fn read_ply<R: BufRead>(reader: &mut R, default_scan_id: String) -> Result<PointCloud> {
    let header = read_header(reader)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse("header", "no `vertex` element"))?;
    let vertex = &header.elements[vertex_idx];
    let layout = vertex_layout(vertex, header.format)?;
    let scan_id = header.scan_id.clone().unwrap_or(default_scan_id);
    let mut cloud = PointCloud::with_capacity(scan_id, vertex.count.min(1 << 22));

    match header.format {
        Format::Ascii => {
            let mut line = String::new();
            for el in &header.elements[..vertex_idx] {
                for i in 0..el.count {
                    line.clear();
                    let n = reader.read_line(&mut line).map_err(|e| {
                        Error::parse(format!("element {} {i}", el.name), e.to_string())
                    })?;
                    if n == 0 {
                        return Err(Error::parse(
                            format!("element {} {i}", el.name),
                            "truncated body",
                        ));
                    }
                }
            }
            read_ascii_vertices(reader, vertex.count, &layout, &mut cloud)?;
        }
        Format::BinaryLe => {
            let mut offset = header.len;
            for el in &header.elements[..vertex_idx] {
                offset = skip_binary_element(reader, el, offset)?;
            }
            read_binary_vertices(reader, vertex.count, &layout, offset, &mut cloud)?;
        }
    }
    Ok(cloud)
}

fn skip_binary_element<R: Read>(r: &mut R, el: &Element, mut offset: u64) -> Result<u64> {
    let trunc = |offset: u64| {
        Error::parse(
            format!("byte {offset} (element {})", el.name),
            "truncated body",
        )
    };
    let mut buf = [0u8; 8];
    for _ in 0..el.count {
        for p in &el.props {
            match p {
                Property::Scalar { ty, .. } => {
                    r.read_exact(&mut buf[..ty.size()]).map_err(|_| trunc(offset))?;
                    offset += ty.size() as u64;
                }
                Property::List { count, item } => {
                    r.read_exact(&mut buf[..count.size()]).map_err(|_| trunc(offset))?;
                    offset += count.size() as u64;
                    let n = count.read_le(&buf);
                    if !(n >= 0.0) {
                        return Err(Error::parse(
                            format!("byte {offset} (element {})", el.name),
                            "negative list length",
                        ));
                    }
                    let bytes = n as u64 * item.size() as u64;
                    let copied = std::io::copy(&mut r.by_ref().take(bytes), &mut std::io::sink())
                        .map_err(|_| trunc(offset))?;
                    if copied != bytes {
                        return Err(trunc(offset + copied));
                    }
                    offset += bytes;
                }
            }
        }
    }
    Ok(offset)
}

const CHUNK_VERTICES: usize = 1 << 18;

fn read_binary_vertices<R: Read>(
    r: &mut R,
    count: usize,
    layout: &VertexLayout,
    body_offset: u64,
    cloud: &mut PointCloud,
) -> Result<()> {
    let stride = layout.stride;
    let mut buf = vec![0u8; CHUNK_VERTICES.min(count.max(1)) * stride];
    let mut done = 0usize;
    while done < count {
        let n = CHUNK_VERTICES.min(count - done);
        let bytes = &mut buf[..n * stride];
        let chunk_offset = body_offset + (done * stride) as u64;
        read_fully(r, bytes).map_err(|got| {
            Error::parse(
                format!(
                    "byte {} (element vertex {})",
                    chunk_offset + got as u64,
                    done + got / stride
                ),
                format!("truncated body: header declares {count} vertices"),
            )
        })?;
        let decoded: Vec<([f64; 3], [u8; 3])> = bytes
            .par_chunks_exact(stride)
            .map(|rec| {
                let p = [
                    layout.xyz[0].1.read_le(&rec[layout.xyz[0].0..]),
                    layout.xyz[1].1.read_le(&rec[layout.xyz[1].0..]),
                    layout.xyz[2].1.read_le(&rec[layout.xyz[2].0..]),
                ];
                let c = [rec[layout.rgb[0].0], rec[layout.rgb[1].0], rec[layout.rgb[2].0]];
                (p, c)
            })
            .collect();
        for (k, (p, c)) in decoded.into_iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                let i = done + k;
                return Err(Error::parse(
                    format!("byte {} (element vertex {i})", body_offset + (i * stride) as u64),
                    "non-finite coordinate",
                ));
            }
            cloud.push(p, c);
        }
        done += n;
    }
    Ok(())
}

/// Like `read_exact`, but reports how many bytes were read before EOF.
fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> std::result::Result<(), usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => return Err(got),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(_) => return Err(got),
        }
    }
    Ok(())
}

fn read_ascii_vertices<R: BufRead>(
    r: &mut R,
    count: usize,
    layout: &VertexLayout,
    cloud: &mut PointCloud,
) -> Result<()> {
    let mut line = String::new();
    let mut i = 0usize;
    while i < count {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| Error::parse(format!("element vertex {i}"), e.to_string()))?;
        if n == 0 {
            return Err(Error::parse(
                format!("element vertex {i}"),
                format!("truncated body: header declares {count} vertices, found {i}"),
            ));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < layout.stride {
            return Err(Error::parse(
                format!("element vertex {i}"),
                format!("expected {} values, found {}", layout.stride, toks.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            toks[k].parse::<f64>().map_err(|_| {
                Error::parse(format!("element vertex {i}"), format!("`{}` is not a number", toks[k]))
            })
        };
        let mut p = [0.0; 3];
        for (a, (idx, ty)) in layout.xyz.iter().enumerate() {
            let v = num(*idx)?;
            p[a] = if *ty == Scalar::F32 { v as f32 as f64 } else { v };
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(format!("element vertex {i}"), "non-finite coordinate"));
        }
        let mut c = [0u8; 3];
        for (a, (idx, _)) in layout.rgb.iter().enumerate() {
            c[a] = toks[*idx].parse::<u8>().map_err(|_| {
                Error::parse(
                    format!("element vertex {i}"),
                    format!("`{}` is not a uchar", toks[*idx]),
                )
            })?;
        }
        cloud.push(p, c);
        i += 1;
    }
    Ok(())
}

/// Writes a binary-little-endian PLY. Coordinates are stored as float when
/// that is lossless for every point, otherwise as double.
pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud.is_empty() {
        return Err(Error::invalid("cannot write an empty point cloud"));
    }
    cloud.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    write_ply(cloud, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_ply<W: Write>(cloud: &PointCloud, w: &mut W) -> std::io::Result<()> {
    let single = cloud.is_f32_exact();
    let ty = if single { "float" } else { "double" };
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    if !cloud.scan_id.is_empty() && !cloud.scan_id.contains(char::is_whitespace) {
        writeln!(w, "comment scan_id {}", cloud.scan_id)?;
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property {ty} {axis}")?;
    }
    for ch in ["red", "green", "blue"] {
        writeln!(w, "property uchar {ch}")?;
    }
    writeln!(w, "end_header")?;
    let stride = if single { 15 } else { 27 };
    let mut rec = Vec::with_capacity(stride * 4096);
    for (p, c) in cloud.positions.chunks(4096).zip(cloud.colors.chunks(4096)) {
        rec.clear();
        for (p, c) in p.iter().zip(c) {
            for v in p {
                if single {
                    rec.extend_from_slice(&(*v as f32).to_le_bytes());
                } else {
                    rec.extend_from_slice(&v.to_le_bytes());
                }
            }
            rec.extend_from_slice(c);
        }
        w.write_all(&rec)?;
    }
    Ok(())
}
