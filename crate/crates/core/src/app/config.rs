use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::admm::AdmmConfig;
use crate::error::{Error, Result};
use crate::mesh::{generate_geodesic_sphere, generate_icosphere, generate_square_mesh, load_mesh, MeshFormat, SurfaceMesh};

use super::density::{DensitySpec, SQUARE_MU0, SQUARE_MU1, SQUARE_SIGMA};
use super::output::OutputFormat;

/// `square:N`, `icosphere:LEVEL`, `geodesic:FREQ`, or a path to an OFF/OBJ
/// file.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    Square(usize),
    Icosphere(usize),
    Geodesic(usize),
    File(PathBuf),
}

impl FromStr for MeshSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let count = |v: &str, what: &str| v.trim().parse::<usize>().map_err(|e| Error::Config(format!("{what}: {e}")));
        Ok(match s.split_once(':') {
            Some(("square", n)) => {
                let n = count(n, "square")?;
                if n < 2 {
                    return Err(Error::Config("square mesh needs at least 2 vertices per side".into()));
                }
                MeshSource::Square(n)
            }
            Some(("icosphere", k)) => {
                let k = count(k, "icosphere")?;
                if k > 7 {
                    return Err(Error::Config("icosphere level above 7 is not supported".into()));
                }
                MeshSource::Icosphere(k)
            }
            Some(("geodesic", f)) => {
                let f = count(f, "geodesic")?;
                if f == 0 {
                    return Err(Error::Config("geodesic frequency must be at least 1".into()));
                }
                MeshSource::Geodesic(f)
            }
            _ => MeshSource::File(PathBuf::from(s)),
        })
    }
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSource::Square(n) => write!(f, "square:{n}"),
            MeshSource::Icosphere(k) => write!(f, "icosphere:{k}"),
            MeshSource::Geodesic(v) => write!(f, "geodesic:{v}"),
            MeshSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl MeshSource {
    pub fn load(&self) -> Result<SurfaceMesh> {
        match self {
            MeshSource::Square(n) => Ok(generate_square_mesh(*n)),
            MeshSource::Icosphere(k) => Ok(generate_icosphere(*k)),
            MeshSource::Geodesic(v) => Ok(generate_geodesic_sphere(*v)),
            MeshSource::File(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("mesh file {} does not exist", p.display())));
                }
                load_mesh(p, MeshFormat::from_path(p)?)
            }
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, MeshSource::Icosphere(_) | MeshSource::Geodesic(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Fast,
    Direct,
    Both,
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fast" => Ok(SolverChoice::Fast),
            "direct" => Ok(SolverChoice::Direct),
            "both" => Ok(SolverChoice::Both),
            other => Err(Error::Config(format!("unknown solver '{other}' (expected fast, direct or both)"))),
        }
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverChoice::Fast => "fast",
            SolverChoice::Direct => "direct",
            SolverChoice::Both => "both",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportFlags {
    pub errors: bool,
    pub energy: bool,
    pub timings: bool,
}

impl Default for ReportFlags {
    fn default() -> Self {
        Self {
            errors: true,
            energy: true,
            timings: true,
        }
    }
}

impl FromStr for ReportFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut flags = ReportFlags {
            errors: false,
            energy: false,
            timings: false,
        };
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item {
                "errors" => flags.errors = true,
                "energy" => flags.energy = true,
                "timings" => flags.timings = true,
                "all" => flags = ReportFlags::default(),
                "none" => {}
                other => return Err(Error::Config(format!("unknown report flag '{other}'"))),
            }
        }
        Ok(flags)
    }
}

impl fmt::Display for ReportFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.errors, "errors"), (self.energy, "energy"), (self.timings, "timings")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    /// `None` picks `2N` on `square:N` and `2⌊√N_s⌋` otherwise.
    pub n_t: Option<usize>,
    /// `None` uses `alpha_r`.
    pub r: Option<f64>,
    pub alpha_r: f64,
    pub max_iter: usize,
    pub residual_tol: Option<f64>,
    /// `None` picks the benchmark density for the mesh kind.
    pub rho0: Option<DensitySpec>,
    pub rho1: Option<DensitySpec>,
    pub output_dir: PathBuf,
    pub output_format: Option<OutputFormat>,
    pub solver: SolverChoice,
    pub report: ReportFlags,
    /// Square sizes for a convergence study; empty for a single run.
    pub refine: Vec<usize>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::Square(15),
            n_t: None,
            r: None,
            alpha_r: 0.02,
            max_iter: 51,
            residual_tol: None,
            rho0: None,
            rho1: None,
            output_dir: PathBuf::from("out"),
            output_format: Some(OutputFormat::Csv),
            solver: SolverChoice::Fast,
            report: ReportFlags::default(),
            refine: Vec::new(),
            threads: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "none" && v != "auto").then_some(v)
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys match the long CLI flags;
    /// underscores and dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        match key.as_str() {
            "mesh" => self.mesh = value.parse()?,
            "nt" | "n-t" => self.n_t = optional(value).map(|v| parse("nt", v)).transpose()?,
            "r" => self.r = optional(value).map(|v| parse("r", v)).transpose()?,
            "alpha-r" => self.alpha_r = parse("alpha-r", value)?,
            "iters" | "max-iter" => self.max_iter = parse("iters", value)?,
            "residual-tol" => self.residual_tol = optional(value).map(|v| parse("residual-tol", v)).transpose()?,
            "rho0" => self.rho0 = optional(value).map(str::parse).transpose()?,
            "rho1" => self.rho1 = optional(value).map(str::parse).transpose()?,
            "out" | "output-dir" => self.output_dir = PathBuf::from(value.trim()),
            "format" => self.output_format = optional(value).map(str::parse).transpose()?,
            "solver" => self.solver = value.parse()?,
            "report" => self.report = value.parse()?,
            "refine" => {
                self.refine = value
                    .split(',')
                    .map(str::trim)
                    .filter(|x| !x.is_empty())
                    .map(|x| parse("refine", x))
                    .collect::<Result<_>>()?
            }
            "threads" => self.threads = optional(value).map(|v| parse("threads", v)).transpose()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                msg: "expected key = value".into(),
            })?;
            cfg.set(key, value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text, path)
    }

    /// Serializes to the file format read by [`RunConfig::parse_str`].
    pub fn to_config_string(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let refine: Vec<String> = self.refine.iter().map(usize::to_string).collect();
        [
            format!("mesh = {}", self.mesh),
            format!("nt = {}", opt(self.n_t.map(|v| v.to_string()))),
            format!("r = {}", opt(self.r.map(|v| v.to_string()))),
            format!("alpha-r = {}", self.alpha_r),
            format!("iters = {}", self.max_iter),
            format!("residual-tol = {}", opt(self.residual_tol.map(|v| v.to_string()))),
            format!("rho0 = {}", opt(self.rho0.as_ref().map(|v| v.to_string()))),
            format!("rho1 = {}", opt(self.rho1.as_ref().map(|v| v.to_string()))),
            format!("out = {}", self.output_dir.display()),
            format!("format = {}", self.output_format.map_or("none".into(), |f| f.to_string())),
            format!("solver = {}", self.solver),
            format!("report = {}", self.report),
            format!("refine = {}", refine.join(",")),
            format!("threads = {}", opt(self.threads.map(|v| v.to_string()))),
        ]
        .join("\n")
            + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(nt) = self.n_t {
            if nt < 2 {
                return Err(Error::Config(format!("nt must be at least 2, got {nt}")));
            }
        }
        if let MeshSource::File(p) = &self.mesh {
            if !p.exists() {
                return Err(Error::Config(format!("mesh file {} does not exist", p.display())));
            }
        }
        for spec in [&self.rho0, &self.rho1].into_iter().flatten() {
            spec.validate()?;
            if let DensitySpec::FromFile(p) = spec {
                if !p.exists() {
                    return Err(Error::Config(format!("density file {} does not exist", p.display())));
                }
            }
        }
        if self.refine.iter().any(|&n| n < 3) {
            return Err(Error::Config("refine sizes must be at least 3".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.admm_config().validate()
    }

    pub fn admm_config(&self) -> AdmmConfig {
        AdmmConfig {
            r: self.r.unwrap_or(self.alpha_r),
            alpha_r: self.alpha_r,
            max_iter: self.max_iter,
            residual_tol: self.residual_tol,
        }
    }

    pub fn time_intervals(&self, mesh: &SurfaceMesh) -> usize {
        self.n_t.unwrap_or(match self.mesh {
            MeshSource::Square(n) => 2 * n,
            _ => 2 * (mesh.vertex_count() as f64).sqrt().floor() as usize,
        })
    }

    /// Configured densities, or the benchmark pair for the mesh kind.
    pub fn densities(&self) -> (DensitySpec, DensitySpec) {
        let (d0, d1) = if matches!(self.mesh, MeshSource::Square(_)) {
            (
                DensitySpec::PlanarGaussian { mu: SQUARE_MU0, sigma: SQUARE_SIGMA },
                DensitySpec::PlanarGaussian { mu: SQUARE_MU1, sigma: SQUARE_SIGMA },
            )
        } else {
            (
                DensitySpec::SphericalGaussian { mu: [0.0, 0.0, 1.0], sigma: 0.1 },
                DensitySpec::SphericalGaussian { mu: [0.0, 0.0, -1.0], sigma: 0.1 },
            )
        };
        (self.rho0.clone().unwrap_or(d0), self.rho1.clone().unwrap_or(d1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_format_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("mesh", "icosphere:3").unwrap();
        cfg.set("alpha_r", "0.0001").unwrap();
        cfg.set("rho0", "spherical_gaussian:0,0,1,0.1").unwrap();
        cfg.set("format", "vtk").unwrap();
        cfg.set("solver", "both").unwrap();
        cfg.set("refine", "15, 29").unwrap();
        cfg.set("report", "energy,timings").unwrap();
        let text = cfg.to_config_string();
        assert_eq!(RunConfig::parse_str(&text, Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg = RunConfig::parse_str("# benchmark\nmesh = square:7  # small\n\nnt = 14\n", Path::new("c.txt")).unwrap();
        assert_eq!(cfg.mesh, MeshSource::Square(7));
        assert_eq!(cfg.n_t, Some(14));
        let err = RunConfig::parse_str("mesh = square:7\nbogus = 1\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(RunConfig::parse_str("mesh square:7\n", Path::new("c.txt")).is_err());
        assert!("square:1".parse::<MeshSource>().is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_t = Some(1);
        assert!(cfg.validate().is_err());
        cfg.n_t = None;
        cfg.alpha_r = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha_r = 0.02;
        cfg.mesh = MeshSource::File(PathBuf::from("/nonexistent/mesh.off"));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn defaults_follow_the_mesh() {
        let cfg = RunConfig::default();
        let mesh = cfg.mesh.load().unwrap();
        assert_eq!(cfg.time_intervals(&mesh), 30);
        assert_eq!(cfg.admm_config().r, 0.02);
        let sphere = RunConfig {
            mesh: MeshSource::Geodesic(9),
            ..RunConfig::default()
        };
        let mesh = sphere.mesh.load().unwrap();
        assert_eq!(sphere.time_intervals(&mesh), 56);
        assert!(matches!(sphere.densities().0, DensitySpec::SphericalGaussian { .. }));
    }
}
