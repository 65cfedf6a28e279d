//! OBJ and PLY ingestion/emission plus the `.labels` sidecar.
//!
//! Positions are written with the shortest decimal representation that
//! round-trips an `f64` (ASCII) or as little-endian doubles (binary PLY), so
//! save followed by load reproduces vertices bit-exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{BodyPart, Mesh, Sequence};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
    PlyBinary,
}

impl MeshFormat {
    /// Guess from the file extension (`.ply` loads either PLY encoding).
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::PlyBinary),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::PlyAscii | MeshFormat::PlyBinary => "ply",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" | "ply-binary" => Ok(MeshFormat::PlyBinary),
            "ply-ascii" => Ok(MeshFormat::PlyAscii),
            _ => Err(Error::Config(format!("unknown mesh format {s:?}"))),
        }
    }
}

/// Sidecar path: the mesh path with its extension replaced by `labels`.
pub fn labels_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension("labels")
}

/// Loads a mesh and, when present, its label sidecar.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let mut mesh = match format {
        MeshFormat::Obj => parse_obj(BufReader::new(fs::File::open(path)?))?,
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => {
            parse_ply(&mut BufReader::new(fs::File::open(path)?))?
        }
    };
    let sidecar = labels_path(path);
    if sidecar.exists() {
        let labels = load_labels(&sidecar)?;
        if labels.len() != mesh.vertex_count() {
            return Err(Error::LabelMismatch {
                expected: mesh.vertex_count(),
                found: labels.len(),
            });
        }
        mesh.labels = Some(labels);
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Writes the mesh, plus a label sidecar when the mesh is labeled.
pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    mesh.validate()?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        MeshFormat::Obj => write_obj(mesh, &mut out)?,
        MeshFormat::PlyAscii => write_ply(mesh, &mut out, false)?,
        MeshFormat::PlyBinary => write_ply(mesh, &mut out, true)?,
    }
    out.flush()?;
    if let Some(labels) = &mesh.labels {
        save_labels(labels, &labels_path(path))?;
    }
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<BodyPart>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let ordinal: u8 = t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad label {t:?}"),
        })?;
        labels.push(BodyPart::from_ordinal(ordinal).ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("label ordinal {ordinal} out of range"),
        })?);
    }
    Ok(labels)
}

pub fn save_labels(labels: &[BodyPart], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(out, "{}", l.ordinal())?;
    }
    out.flush()?;
    Ok(())
}

/// Mesh files (`.obj`, `.ply`) directly inside `dir`, in file-name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && MeshFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every frame of a directory as a sequence at `frame_rate`.
pub fn load_sequence(dir: &Path, frame_rate: f64) -> Result<Sequence> {
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::Config(format!("no .obj or .ply frames in {}", dir.display())));
    }
    let frames = paths
        .iter()
        .map(|p| load_mesh(p, MeshFormat::from_path(p).expect("filtered by extension")))
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(frames, frame_rate)
}

/// Writes `frame_0000.<ext>`, `frame_0001.<ext>`, ... into `dir` (created if
/// missing) and returns the written mesh paths.
pub fn save_sequence(seq: &Sequence, dir: &Path, format: MeshFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let width = seq.len().saturating_sub(1).to_string().len().max(4);
    seq.frames
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let path = dir.join(format!("frame_{i:0width$}.{}", format.extension()));
            save_mesh(m, &path, format)?;
            Ok(path)
        })
        .collect()
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_obj(reader: impl BufRead) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = tok
                        .next()
                        .ok_or_else(|| parse_err(lineno, "vertex needs 3 coordinates"))?;
                    *slot = t
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad coordinate {t:?}")))?;
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for t in tok {
                    let head = t.split('/').next().unwrap_or_default();
                    let raw: i64 = head
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad face index {t:?}")))?;
                    let resolved = if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        raw - 1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(
                            lineno,
                            format!("face index {raw} out of range for {} vertices", vertices.len()),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(Mesh {
        vertices,
        faces,
        labels: None,
    })
}

fn write_obj(mesh: &Mesh, out: &mut impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
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
    fn parse(name: &str, line: usize) -> Result<Scalar> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(parse_err(line, format!("unknown PLY type {name:?}"))),
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

    fn read_le(self, r: &mut impl Read) -> Result<f64> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf[..self.size()])
            .map_err(|_| parse_err(0, "unexpected end of binary PLY body"))?;
        Ok(match self {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
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
    props: Vec<Property>,
}

fn parse_ply(reader: &mut impl BufRead) -> Result<Mesh> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<usize> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(parse_err(lineno, "unexpected end of PLY header"));
        }
        lineno += 1;
        Ok(lineno)
    };

    let n = next_line(reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(parse_err(n, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let n = next_line(reader, &mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => {
                return Err(parse_err(n, format!("unsupported PLY format {other:?}")))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(n, format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(n, "property before element"))?
                .props
                .push(Property::List(
                    name.to_string(),
                    Scalar::parse(count_ty, n)?,
                    Scalar::parse(item_ty, n)?,
                )),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(n, "property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty, n)?)),
            ["end_header"] => break,
            _ => {}
        }
    }
    let binary = binary.ok_or_else(|| parse_err(lineno, "missing format line"))?;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut body_line = lineno;
    for el in &elements {
        for _ in 0..el.count {
            let mut scalars: Vec<(&str, f64)> = Vec::new();
            let mut lists: Vec<(&str, Vec<f64>)> = Vec::new();
            if binary {
                for p in &el.props {
                    match p {
                        Property::Scalar(name, ty) => scalars.push((name, ty.read_le(reader)?)),
                        Property::List(name, cty, ity) => {
                            let len = cty.read_le(reader)? as usize;
                            let items = (0..len)
                                .map(|_| ity.read_le(reader))
                                .collect::<Result<Vec<_>>>()?;
                            lists.push((name, items));
                        }
                    }
                }
            } else {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(parse_err(body_line, "unexpected end of PLY body"));
                }
                body_line += 1;
                let mut tok = line.split_whitespace();
                let mut num = |what: &str| -> Result<f64> {
                    let t = tok
                        .next()
                        .ok_or_else(|| parse_err(body_line, format!("missing {what}")))?;
                    t.parse()
                        .map_err(|_| parse_err(body_line, format!("bad number {t:?}")))
                };
                for p in &el.props {
                    match p {
                        Property::Scalar(name, _) => scalars.push((name, num(name)?)),
                        Property::List(name, _, _) => {
                            let len = num(name)? as usize;
                            let items = (0..len).map(|_| num(name)).collect::<Result<Vec<_>>>()?;
                            lists.push((name, items));
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let get = |key: &str| {
                        scalars
                            .iter()
                            .find(|(n, _)| *n == key)
                            .map(|(_, v)| *v)
                            .ok_or_else(|| parse_err(body_line, format!("vertex lacks {key}")))
                    };
                    vertices.push(Vec3::new(get("x")?, get("y")?, get("z")?));
                }
                "face" => {
                    let idx = lists
                        .iter()
                        .find(|(n, _)| *n == "vertex_indices" || *n == "vertex_index")
                        .map(|(_, v)| v)
                        .ok_or_else(|| parse_err(body_line, "face lacks vertex_indices"))?;
                    if idx.len() < 3 {
                        return Err(parse_err(body_line, "face needs at least 3 vertices"));
                    }
                    let count = elements
                        .iter()
                        .find(|e| e.name == "vertex")
                        .map_or(0, |e| e.count);
                    let mut ids = Vec::with_capacity(idx.len());
                    for &i in idx {
                        if i < 0.0 || i as usize >= count {
                            return Err(parse_err(body_line, format!("face index {i} out of range")));
                        }
                        ids.push(i as u32);
                    }
                    for k in 1..ids.len() - 1 {
                        faces.push([ids[0], ids[k], ids[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(Mesh {
        vertices,
        faces,
        labels: None,
    })
}

fn write_ply(mesh: &Mesh, out: &mut impl Write, binary: bool) -> Result<()> {
    writeln!(out, "ply")?;
    writeln!(
        out,
        "format {} 1.0",
        if binary { "binary_little_endian" } else { "ascii" }
    )?;
    writeln!(out, "element vertex {}", mesh.vertices.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    writeln!(out, "element face {}", mesh.faces.len())?;
    writeln!(out, "property list uchar uint vertex_indices")?;
    writeln!(out, "end_header")?;
    if binary {
        for v in &mesh.vertices {
            for c in v.iter() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        for f in &mesh.faces {
            out.write_all(&[3u8])?;
            for i in f {
                out.write_all(&i.to_le_bytes())?;
            }
        }
    } else {
        for v in &mesh.vertices {
            writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z)?;
        }
        for f in &mesh.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    Ok(())
}
