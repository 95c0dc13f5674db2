use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::TimeSpaceField;
use crate::mesh::{fmt_f64, SurfaceMesh};
use crate::timespace::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Vtk,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "vtk" => Ok(OutputFormat::Vtk),
            other => Err(Error::Config(format!("unknown output format '{other}' (expected csv or vtk)"))),
        }
    }
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Vtk => "vtk",
        })
    }
}

pub const MANIFEST: &str = "manifest.csv";

fn slice_name(j: usize, format: OutputFormat) -> String {
    format!("density_{j:04}.{format}")
}

fn csv_slice(mesh: &SurfaceMesh, values: &[f64]) -> String {
    let mut s = String::from("vertex_index,x,y,z,value\n");
    for (i, (p, v)) in mesh.vertices().iter().zip(values).enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]), fmt_f64(*v));
    }
    s
}

fn vtk_slice(mesh: &SurfaceMesh, values: &[f64], t: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "density t={}", fmt_f64(t));
    let _ = writeln!(s, "ASCII\nDATASET POLYDATA");
    let _ = writeln!(s, "POINTS {} double", mesh.vertex_count());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    let nt = mesh.triangle_count();
    let _ = writeln!(s, "POLYGONS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.vertex_count());
    let _ = writeln!(s, "SCALARS density double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(s, "{}", fmt_f64(*v));
    }
    s
}

/// Writes one file per time slice plus a manifest of `t_j`. Returns every
/// path written.
pub fn write_trajectory(fields: &TimeSpaceField, mesh: &SurfaceMesh, grid: &TimeGrid, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fields.check_shape(grid.len(), mesh.vertex_count())?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(fields.n_time() + 1);
    let mut manifest = String::from("index,t,file\n");
    let result = (|| {
        for (j, row) in fields.rows().enumerate() {
            let name = slice_name(j, format);
            let body = match format {
                OutputFormat::Csv => csv_slice(mesh, row),
                OutputFormat::Vtk => vtk_slice(mesh, row, grid.node(j)),
            };
            let path = dir.join(&name);
            fs::write(&path, body)?;
            written.push(path);
            let _ = writeln!(manifest, "{j},{},{name}", fmt_f64(grid.node(j)));
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest)?;
        written.push(path);
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            remove_files(&written);
            Err(e)
        }
    }
}

pub(crate) fn remove_files(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}

/// Values column of a CSV slice written by [`write_trajectory`].
pub fn read_csv_slice(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let field = line.rsplit(',').next().unwrap_or("");
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
