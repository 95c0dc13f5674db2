use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::lumped_mass;
use crate::mesh::{norm, Point3, SurfaceMesh};

/// Mean of the initial Gaussian of the square benchmark.
pub const SQUARE_MU0: [f64; 2] = [0.3, 0.3];
/// Mean of the terminal Gaussian of the square benchmark.
pub const SQUARE_MU1: [f64; 2] = [0.7, 0.7];
/// Standard deviation of the square benchmark Gaussians.
pub const SQUARE_SIGMA: f64 = 0.01;

/// Uniform floor added after normalization, relative to `1/area`.
pub const DENSITY_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    All,
    Box { min: Point3, max: Point3 },
    Ball { center: Point3, radius: f64 },
}

impl Region {
    fn contains(&self, p: Point3) -> bool {
        match self {
            Region::All => true,
            Region::Box { min, max } => (0..3).all(|d| p[d] >= min[d] && p[d] <= max[d]),
            Region::Ball { center, radius } => norm([p[0] - center[0], p[1] - center[1], p[2] - center[2]]) <= *radius,
        }
    }
}

/// Source of an endpoint density.
///
/// Text form, as used in config files and on the command line:
/// `planar_gaussian:MX,MY,SIGMA`, `spherical_gaussian:MX,MY,MZ,SIGMA`,
/// `indicator:all`, `indicator:box:X0,Y0,Z0,X1,Y1,Z1`,
/// `indicator:ball:CX,CY,CZ,R`, `file:PATH`.
#[derive(Clone, Debug, PartialEq)]
pub enum DensitySpec {
    PlanarGaussian { mu: [f64; 2], sigma: f64 },
    SphericalGaussian { mu: Point3, sigma: f64 },
    Indicator(Region),
    FromFile(PathBuf),
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("{what}: {e}")))?;
    if v.len() != n {
        return Err(Error::Config(format!("{what}: expected {n} numbers, got {}", v.len())));
    }
    Ok(v)
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let spec = match kind.trim() {
            "planar_gaussian" => {
                let v = numbers(rest, 3, "planar_gaussian")?;
                DensitySpec::PlanarGaussian { mu: [v[0], v[1]], sigma: v[2] }
            }
            "spherical_gaussian" => {
                let v = numbers(rest, 4, "spherical_gaussian")?;
                DensitySpec::SphericalGaussian {
                    mu: [v[0], v[1], v[2]],
                    sigma: v[3],
                }
            }
            "indicator" => {
                let (shape, params) = rest.split_once(':').unwrap_or((rest, ""));
                match shape.trim() {
                    "all" | "uniform" => DensitySpec::Indicator(Region::All),
                    "box" => {
                        let v = numbers(params, 6, "indicator:box")?;
                        DensitySpec::Indicator(Region::Box {
                            min: [v[0], v[1], v[2]],
                            max: [v[3], v[4], v[5]],
                        })
                    }
                    "ball" => {
                        let v = numbers(params, 4, "indicator:ball")?;
                        DensitySpec::Indicator(Region::Ball {
                            center: [v[0], v[1], v[2]],
                            radius: v[3],
                        })
                    }
                    other => return Err(Error::Config(format!("unknown indicator region '{other}'"))),
                }
            }
            "file" => DensitySpec::FromFile(PathBuf::from(rest.trim())),
            other => return Err(Error::Config(format!("unknown density kind '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::PlanarGaussian { mu, sigma } => write!(f, "planar_gaussian:{},{},{}", mu[0], mu[1], sigma),
            DensitySpec::SphericalGaussian { mu, sigma } => write!(f, "spherical_gaussian:{},{},{},{}", mu[0], mu[1], mu[2], sigma),
            DensitySpec::Indicator(Region::All) => write!(f, "indicator:all"),
            DensitySpec::Indicator(Region::Box { min, max }) => {
                write!(f, "indicator:box:{},{},{},{},{},{}", min[0], min[1], min[2], max[0], max[1], max[2])
            }
            DensitySpec::Indicator(Region::Ball { center, radius }) => {
                write!(f, "indicator:ball:{},{},{},{}", center[0], center[1], center[2], radius)
            }
            DensitySpec::FromFile(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::PlanarGaussian { sigma, .. } | DensitySpec::SphericalGaussian { sigma, .. } if !(*sigma > 0.0) => {
                Err(Error::Config(format!("gaussian sigma must be positive, got {sigma}")))
            }
            DensitySpec::SphericalGaussian { mu, .. } if (norm(*mu) - 1.0).abs() > 1e-10 => {
                Err(Error::Config(format!("spherical gaussian mean must be a unit vector, got {mu:?}")))
            }
            DensitySpec::Indicator(Region::Ball { radius, .. }) if !(*radius > 0.0) => Err(Error::Config("ball radius must be positive".into())),
            _ => Ok(()),
        }
    }
}

fn is_unit_sphere(mesh: &SurfaceMesh) -> bool {
    mesh.vertices().iter().all(|&p| (norm(p) - 1.0).abs() <= 1e-6)
}

fn planar_gaussian(mesh: &SurfaceMesh, mu: [f64; 2], sigma: f64) -> Result<Vec<f64>> {
    if !mesh.is_flat_xy() {
        return Err(Error::IncompatibleSpec("planar gaussian requires a flat z = 0 mesh".into()));
    }
    Ok(mesh
        .vertices()
        .iter()
        .map(|p| (-((p[0] - mu[0]).powi(2) + (p[1] - mu[1]).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect())
}

/// Nodal values, floored at zero, normalized to unit lumped mass, then
/// lifted by a uniform `DENSITY_FLOOR / area` and renormalized.
pub fn build_density(spec: &DensitySpec, mesh: &SurfaceMesh) -> Result<Vec<f64>> {
    spec.validate()?;
    let raw = match spec {
        DensitySpec::PlanarGaussian { mu, sigma } => planar_gaussian(mesh, *mu, *sigma)?,
        DensitySpec::SphericalGaussian { mu, sigma } => {
            let geodesic = is_unit_sphere(mesh);
            if !geodesic {
                log::warn!("spherical gaussian on a non-spherical mesh: using chordal distance");
            }
            mesh.vertices()
                .iter()
                .map(|&p| {
                    let d = if geodesic {
                        let c = (p[0] * mu[0] + p[1] * mu[1] + p[2] * mu[2]) / norm(p);
                        c.clamp(-1.0, 1.0).acos()
                    } else {
                        norm([p[0] - mu[0], p[1] - mu[1], p[2] - mu[2]])
                    };
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        }
        DensitySpec::Indicator(region) => mesh.vertices().iter().map(|&p| if region.contains(p) { 1.0 } else { 0.0 }).collect(),
        DensitySpec::FromFile(path) => read_density_file(path, mesh.vertex_count())?,
    };
    normalize_density(raw, mesh)
}

pub fn normalize_density(mut rho: Vec<f64>, mesh: &SurfaceMesh) -> Result<Vec<f64>> {
    let lumped = lumped_mass(mesh);
    let mass = |rho: &[f64]| rho.iter().zip(&lumped).map(|(a, b)| a * b).sum::<f64>();
    if rho.iter().any(|x| !x.is_finite()) {
        return Err(Error::IncompatibleSpec("density has non-finite values".into()));
    }
    rho.iter_mut().for_each(|x| *x = x.max(0.0));
    let m = mass(&rho);
    if !(m > 0.0) {
        return Err(Error::IncompatibleSpec("density has no positive mass on this mesh".into()));
    }
    let floor = DENSITY_FLOOR / mesh.total_area();
    rho.iter_mut().for_each(|x| *x = *x / m + floor);
    let m = mass(&rho);
    rho.iter_mut().for_each(|x| *x /= m);
    Ok(rho)
}

/// One value per line; for comma-separated lines the last field is used,
/// so trajectory slices can be read back directly.
fn read_density_file(path: &std::path::Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(n);
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("vertex_index") {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        let v = field.parse::<f64>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        values.push(v);
    }
    if values.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} density values"),
            found: format!("{} in {}", values.len(), path.display()),
        });
    }
    Ok(values)
}

/// Translating Gaussian of the square benchmark at time `t`, normalized
/// like [`build_density`].
pub fn exact_gaussian_path(t: f64, mesh: &SurfaceMesh) -> Result<Vec<f64>> {
    let mu = [0, 1].map(|d| (1.0 - t) * SQUARE_MU0[d] + t * SQUARE_MU1[d]);
    build_density(&DensitySpec::PlanarGaussian { mu, sigma: SQUARE_SIGMA }, mesh)
}
