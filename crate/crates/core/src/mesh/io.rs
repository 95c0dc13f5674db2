//! ASCII OFF and OBJ readers and writers.
//!
//! Writers print coordinates with 17 significant digits so a write/read
//! cycle reproduces every vertex bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, SurfaceMesh};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl std::str::FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Reads and validates a mesh file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh> {
    let text = fs::read_to_string(path)?;
    read_mesh(&text, format, path)
}

/// Parses mesh text; `origin` is only used in error messages.
pub fn read_mesh(text: &str, format: MeshFormat, origin: &Path) -> Result<SurfaceMesh> {
    let (v, f) = match format {
        MeshFormat::Off => parse_off(text, origin)?,
        MeshFormat::Obj => parse_obj(text, origin)?,
    };
    SurfaceMesh::new(v, f)
}

pub fn write_mesh(mesh: &SurfaceMesh, path: &Path, format: MeshFormat) -> Result<()> {
    fs::write(path, format_mesh(mesh, format))?;
    Ok(())
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_mesh(mesh: &SurfaceMesh, format: MeshFormat) -> String {
    let mut s = String::new();
    match format {
        MeshFormat::Off => {
            s.push_str("OFF\n");
            writeln!(s, "{} {} 0", mesh.vertex_count(), mesh.triangle_count()).unwrap();
            for p in mesh.vertices() {
                writeln!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])).unwrap();
            }
            for t in mesh.triangles() {
                writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
            }
        }
        MeshFormat::Obj => {
            for p in mesh.vertices() {
                writeln!(s, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])).unwrap();
            }
            for t in mesh.triangles() {
                writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
            }
        }
    }
    s
}

fn parse_err(origin: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, origin: &Path, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(origin, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(origin, line, format!("cannot parse {what} from `{tok}`")))
}

fn parse_off(text: &str, origin: &Path) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    // Tokens of non-empty, non-comment lines, tagged with 1-based line numbers.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty file"))?;
    let mut header_rest = header.strip_prefix("OFF").ok_or_else(|| parse_err(origin, hline, "missing OFF header"))?.trim();
    let (cline, counts) = if header_rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(origin, hline, "missing counts line"))?
    } else {
        (hline, std::mem::take(&mut header_rest))
    };
    let mut toks = counts.split_whitespace();
    let nv: usize = parse_num(toks.next(), origin, cline, "vertex count")?;
    let nf: usize = parse_num(toks.next(), origin, cline, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(origin, cline, format!("expected {nv} vertices")))?;
        let mut t = l.split_whitespace();
        let p = [
            parse_num(t.next(), origin, ln, "x")?,
            parse_num(t.next(), origin, ln, "y")?,
            parse_num(t.next(), origin, ln, "z")?,
        ];
        vertices.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(origin, cline, format!("expected {nf} faces")))?;
        let mut t = l.split_whitespace();
        let k: usize = parse_num(t.next(), origin, ln, "face size")?;
        if k != 3 {
            return Err(parse_err(origin, ln, format!("only triangles are supported, found a {k}-gon")));
        }
        faces.push([
            parse_num(t.next(), origin, ln, "index")?,
            parse_num(t.next(), origin, ln, "index")?,
            parse_num(t.next(), origin, ln, "index")?,
        ]);
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str, origin: &Path) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => vertices.push([
                parse_num(t.next(), origin, ln, "x")?,
                parse_num(t.next(), origin, ln, "y")?,
                parse_num(t.next(), origin, ln, "z")?,
            ]),
            Some("f") => {
                let idx: Vec<&str> = t.collect();
                if idx.len() != 3 {
                    return Err(parse_err(origin, ln, format!("only triangles are supported, found {} indices", idx.len())));
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(idx) {
                    // `i/t/n` forms keep only the position index.
                    let raw: i64 = parse_num(tok.split('/').next(), origin, ln, "index")?;
                    let resolved = match raw {
                        r if r > 0 => r - 1,
                        r if r < 0 => vertices.len() as i64 + r,
                        _ => return Err(parse_err(origin, ln, "OBJ indices are 1-based")),
                    };
                    if resolved < 0 {
                        return Err(parse_err(origin, ln, format!("relative index {raw} out of range")));
                    }
                    *slot = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}
