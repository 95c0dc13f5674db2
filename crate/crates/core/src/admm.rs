//! Gradient-enhanced ALG2 for dynamic optimal transport on a surface.
//!
//! Each iteration solves a time-space Poisson problem for the potential `u`,
//! projects `∇u + σ/r` nodewise onto `A = {(a, b) : a + |b|²/2 ≤ 0}`, and
//! takes a dual ascent step on `σ = (ρ, m)`. All derivatives are recovered
//! gradients, so `u`, `q` and `σ` live on the same space-time nodes.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, lumped_mass};
use crate::field::{TimeSpaceField, TimeSpaceFlux};
use crate::mesh::{Point3, SurfaceMesh};
use crate::recovery::{build_spatial_recovery, build_temporal_recovery, recovered_divergence, recovered_gradient, SpatialRecovery, TemporalRecovery};
use crate::sparse::SparseMatrix;
use crate::timespace::{build_neumann_rhs, NeumannData, PoissonSolver, TimeGrid};

/// Mesh, time grid and every operator the iteration needs, built once.
pub struct Discretization {
    pub mesh: SurfaceMesh,
    pub grid: TimeGrid,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
    pub stiffness: SparseMatrix,
    pub temporal: TemporalRecovery,
    pub spatial: SpatialRecovery,
}

impl Discretization {
    pub fn new(mesh: SurfaceMesh, grid: TimeGrid) -> Result<Self> {
        let temporal = build_temporal_recovery(&grid)?;
        let spatial = build_spatial_recovery(&mesh)?;
        Ok(Self {
            mass: assemble_mass(&mesh),
            lumped: lumped_mass(&mesh),
            stiffness: assemble_stiffness(&mesh),
            mesh,
            grid,
            temporal,
            spatial,
        })
    }

    pub fn n_time(&self) -> usize {
        self.grid.len()
    }

    pub fn n_space(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// `sqrt(Σ_j w_j Σ_c f_cᵀ M f_c)` over the given components.
    pub fn space_time_norm(&self, comps: &[&TimeSpaceField]) -> f64 {
        let w = self.grid.trapezoid_weights();
        let mut sum = 0.0;
        for c in comps {
            for (wj, row) in w.iter().zip(c.rows()) {
                sum += wj * self.mass.bilinear(row, row);
            }
        }
        sum.sqrt()
    }

    /// M-weighted L² norm of one spatial slice.
    pub fn slice_norm(&self, v: &[f64]) -> f64 {
        self.mass.bilinear(v, v).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    /// Augmentation weight.
    pub r: f64,
    /// Dual step size.
    pub alpha_r: f64,
    pub max_iter: usize,
    pub residual_tol: Option<f64>,
}

impl AdmmConfig {
    /// `r` defaults to the dual step.
    pub fn new(alpha_r: f64, max_iter: usize) -> Self {
        Self {
            r: alpha_r,
            alpha_r,
            max_iter,
            residual_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be positive, got {}", self.r)));
        }
        if !(self.alpha_r > 0.0 && self.alpha_r.is_finite()) {
            return Err(Error::Config(format!("alpha_r must be positive, got {}", self.alpha_r)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let Some(tol) = self.residual_tol {
            if !(tol >= 0.0) {
                return Err(Error::Config(format!("residual_tol must be nonnegative, got {tol}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub u: TimeSpaceField,
    pub q: TimeSpaceFlux,
    pub sigma: TimeSpaceFlux,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    pub iteration: usize,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// Wall time of each Step 1 solve, seconds.
    pub solve_seconds: Vec<f64>,
}

impl AdmmState {
    /// Density trajectory, one row per time node.
    pub fn density(&self) -> &TimeSpaceField {
        &self.sigma.temporal
    }
}

/// Relative mismatch allowed between the masses of the endpoint densities.
pub const MASS_TOL: f64 = 1e-10;

/// Linear density interpolation with zero momentum, `q = 0`, `u = 0`.
pub fn initialize(rho0: &[f64], rho1: &[f64], disc: &Discretization) -> Result<AdmmState> {
    let ns = disc.n_space();
    for rho in [rho0, rho1] {
        if rho.len() != ns {
            return Err(Error::ShapeMismatch {
                expected: format!("density of length {ns}"),
                found: format!("length {}", rho.len()),
            });
        }
        if let Some(i) = rho.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidDensity(i));
        }
    }
    let mass = |rho: &[f64]| rho.iter().zip(&disc.lumped).map(|(a, b)| a * b).sum::<f64>();
    let (mass0, mass1) = (mass(rho0), mass(rho1));
    if (mass0 - mass1).abs() > MASS_TOL * mass0.abs().max(mass1.abs()) {
        return Err(Error::MassMismatch { mass0, mass1 });
    }
    let nt = disc.n_time();
    let mut sigma = TimeSpaceFlux::zeros(nt, ns);
    for j in 0..nt {
        let t = disc.grid.node(j);
        let row = sigma.temporal.row_mut(j);
        if j == 0 {
            row.copy_from_slice(rho0);
        } else if j == nt - 1 {
            row.copy_from_slice(rho1);
        } else {
            for ((d, a), b) in row.iter_mut().zip(rho0).zip(rho1) {
                *d = (1.0 - t) * a + t * b;
            }
        }
    }
    Ok(AdmmState {
        u: TimeSpaceField::zeros(nt, ns),
        q: TimeSpaceFlux::zeros(nt, ns),
        sigma,
        rho0: rho0.to_vec(),
        rho1: rho1.to_vec(),
        iteration: 0,
        residual_history: Vec::new(),
        energy_history: Vec::new(),
        solve_seconds: Vec::new(),
    })
}

/// Step 1: `-rΔ u = div(σ - r q)` with
/// `r ∂_t u = ρ_0 - ρ(0) + r a(0)` at `t = 0` and the analogue at `t = 1`.
///
/// The solver works on the unscaled operator, so the data is divided by `r`.
pub fn step1_solve_potential(state: &AdmmState, config: &AdmmConfig, disc: &Discretization, solver: &dyn PoissonSolver) -> Result<TimeSpaceField> {
    let mut f = state.sigma.clone();
    f.axpy(-config.r, &state.q);
    let div = recovered_divergence(&disc.temporal, &disc.spatial, &f)?;
    let last = disc.grid.intervals();
    // Outward normal data: -r ∂_t u(0) and r ∂_t u(1).
    let data = NeumannData {
        u0_data: state.rho0.iter().zip(f.temporal.row(0)).map(|(p, c)| -(p - c)).collect(),
        u1_data: state.rho1.iter().zip(f.temporal.row(last)).map(|(p, c)| p - c).collect(),
    };
    let mut load = build_neumann_rhs(&disc.grid, &data)?;
    load.axpy(1.0, &div);
    let inv_r = 1.0 / config.r;
    let mut rhs = TimeSpaceField::zeros(disc.n_time(), disc.n_space());
    rhs.rows_mut()
        .zip(load.rows())
        .collect::<Vec<_>>()
        .into_par_iter()
        .for_each(|(dst, src)| {
            disc.mass.mul_vec_into(src, dst);
            dst.iter_mut().for_each(|x| *x *= inv_r);
        });
    solver.solve(&rhs)
}

/// Feasibility slack accepted after projection.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Euclidean projection of `(α, β)` onto `A = {a + |b|²/2 ≤ 0}`.
///
/// Outside `A` the multiplier `λ ≥ 0` is the nonnegative root of
/// `-λ³ + (α-2)λ² + (2α-1)λ + α + |β|²/2`, which is unique because
/// `α - λ + |β|²/(2(1+λ)²)` is strictly decreasing on `λ > -1`.
pub fn project_onto_a(alpha: f64, beta: Point3) -> Result<(f64, Point3)> {
    let nb2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
    let c = alpha + 0.5 * nb2;
    if c <= 0.0 {
        return Ok((alpha, beta));
    }
    if !c.is_finite() {
        return Err(Error::NoRootFound { alpha, beta_norm: nb2.sqrt() });
    }
    let g = |l: f64| alpha - l + 0.5 * nb2 / ((1.0 + l) * (1.0 + l));
    let dist = |l: f64| {
        let s = l / (1.0 + l);
        l * l + nb2 * s * s
    };

    // Monic form λ³ + (2-α)λ² + (1-2α)λ - c = 0.
    let mut best: Option<f64> = None;
    for root in real_cubic_roots(2.0 - alpha, 1.0 - 2.0 * alpha, -c) {
        if root < -1e-14 {
            continue;
        }
        let l = newton_polish(root.max(0.0), alpha, nb2);
        if best.is_none_or(|b| dist(l) < dist(b)) {
            best = Some(l);
        }
    }
    // g(0) = c > 0 and g(c) ≤ 0 bracket the root.
    let lambda = match best {
        Some(l) if g(l).abs() <= 1e-10 * (1.0 + c) => l,
        _ => bisect(g, 0.0, c).ok_or(Error::NoRootFound { alpha, beta_norm: nb2.sqrt() })?,
    };
    let s = 1.0 / (1.0 + lambda);
    let b = [beta[0] * s, beta[1] * s, beta[2] * s];
    let half_b2 = 0.5 * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    Ok(((alpha - lambda).min(-half_b2), b))
}

fn newton_polish(mut l: f64, alpha: f64, nb2: f64) -> f64 {
    let c = alpha + 0.5 * nb2;
    for _ in 0..3 {
        let p = ((-l + (alpha - 2.0)) * l + (2.0 * alpha - 1.0)) * l + c;
        let dp = (-3.0 * l + 2.0 * (alpha - 2.0)) * l + (2.0 * alpha - 1.0);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        l = (l - step).max(0.0);
        if step.abs() <= 1e-14 * (1.0 + l) {
            break;
        }
    }
    l
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    if !(g(lo) >= 0.0 && g(hi) <= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Real roots of `x³ + a x² + b x + c`.
fn real_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if p.abs() < f64::EPSILON * (1.0 + a * a + b.abs()) && q.abs() < f64::EPSILON * (1.0 + c.abs()) {
        return vec![-shift];
    }
    if disc > 0.0 {
        let sq = disc.sqrt();
        let t = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
        vec![t - shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = if m == 0.0 { 0.0 } else { (3.0 * q / (p * m)).clamp(-1.0, 1.0) };
        let theta = arg.acos() / 3.0;
        (0..3).map(|k| m * (theta - 2.0 * PI * k as f64 / 3.0).cos() - shift).collect()
    }
}

/// Step 2: `q = P_A(∇u + σ/r)` at every node, spatial part kept tangent.
pub fn step2_project(state: &AdmmState, config: &AdmmConfig, grad: &TimeSpaceFlux, disc: &Discretization) -> Result<TimeSpaceFlux> {
    let (nt, ns) = grad.shape();
    state.sigma.check_shape(nt, ns)?;
    let inv_r = 1.0 / config.r;
    let rows = (0..nt)
        .into_par_iter()
        .map(|j| {
            let mut out = [vec![0.0; ns], vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]];
            for i in 0..ns {
                let alpha = grad.temporal.get(j, i) + inv_r * state.sigma.temporal.get(j, i);
                let g = grad.spatial_at(j, i);
                let s = state.sigma.spatial_at(j, i);
                let beta = disc.spatial.tangential(i, [g[0] + inv_r * s[0], g[1] + inv_r * s[1], g[2] + inv_r * s[2]]);
                let (a, b) = project_onto_a(alpha, beta)?;
                out[0][i] = a;
                for d in 0..3 {
                    out[d + 1][i] = b[d];
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut q = TimeSpaceFlux::zeros(nt, ns);
    for (j, out) in rows.into_iter().enumerate() {
        for (comp, vals) in q.components_mut().into_iter().zip(out) {
            comp.row_mut(j).copy_from_slice(&vals);
        }
    }
    Ok(q)
}

/// Step 3: `σ += α_r (∇u - q)` with the momentum re-projected onto the
/// vertex tangent planes. Stores the new `σ` and appends
/// `‖∇u - q‖` to the residual history, returning it.
pub fn step3_dual_update(state: &mut AdmmState, config: &AdmmConfig, grad: &TimeSpaceFlux, q_new: &TimeSpaceFlux, disc: &Discretization) -> Result<f64> {
    let (nt, ns) = grad.shape();
    q_new.check_shape(nt, ns)?;
    state.sigma.check_shape(nt, ns)?;
    let mut diff = grad.clone();
    diff.axpy(-1.0, q_new);
    let residual = disc.space_time_norm(&diff.components());
    state.sigma.axpy(config.alpha_r, &diff);
    for j in 0..nt {
        for i in 0..ns {
            let m = state.sigma.spatial_at(j, i);
            state.sigma.set_spatial_at(j, i, disc.spatial.tangential(i, m));
        }
    }
    state.residual_history.push(residual);
    Ok(residual)
}

/// Quadrature of `|m|²/(2ρ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    /// Sum over regular nodes.
    pub value: f64,
    /// Nodes with `ρ ≤ ε_ρ` but `|m| > ε_m`, where the integrand is infinite.
    pub singular_nodes: usize,
}

impl EnergyReport {
    pub fn is_finite(&self) -> bool {
        self.singular_nodes == 0
    }
}

/// Lumped mass in space, trapezoid rule in time.
pub fn transport_energy(sigma: &TimeSpaceFlux, lumped: &[f64], grid: &TimeGrid) -> EnergyReport {
    let peak = sigma.temporal.as_slice().iter().fold(0.0f64, |a, &b| a.max(b));
    let eps_rho = 1e-12 * peak;
    let eps_m = 1e-12;
    let w = grid.trapezoid_weights();
    let mut report = EnergyReport::default();
    for (j, wj) in w.iter().enumerate() {
        for (i, li) in lumped.iter().enumerate() {
            let rho = sigma.temporal.get(j, i);
            let m = sigma.spatial_at(j, i);
            let m2 = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
            if rho <= eps_rho {
                if m2.sqrt() > eps_m {
                    report.singular_nodes += 1;
                }
                continue;
            }
            report.value += wj * li * m2 / (2.0 * rho);
        }
    }
    report
}

/// Runs iterations until `max_iter` or the residual tolerance.
pub fn run(config: &AdmmConfig, disc: &Discretization, solver: &dyn PoissonSolver, state: AdmmState) -> Result<AdmmState> {
    run_with_observer(config, disc, solver, state, |_| {})
}

/// As [`run`], calling `observe` after every iteration.
pub fn run_with_observer(config: &AdmmConfig, disc: &Discretization, solver: &dyn PoissonSolver, mut state: AdmmState, mut observe: impl FnMut(&AdmmState)) -> Result<AdmmState> {
    config.validate()?;
    for _ in 0..config.max_iter {
        let iteration = state.iteration + 1;
        let start = Instant::now();
        let u = step1_solve_potential(&state, config, disc, solver).map_err(|e| match e {
            Error::Factorization(_) if !state.sigma.is_finite() => Error::DivergenceDetected { iteration },
            e => e,
        })?;
        state.solve_seconds.push(start.elapsed().as_secs_f64());
        if !u.is_finite() {
            return Err(Error::DivergenceDetected { iteration });
        }
        let grad = recovered_gradient(&disc.temporal, &disc.spatial, &u)?;
        let q = step2_project(&state, config, &grad, disc).map_err(|e| match e {
            Error::NoRootFound { .. } => Error::DivergenceDetected { iteration },
            e => e,
        })?;
        state.u = u;
        let residual = step3_dual_update(&mut state, config, &grad, &q, disc)?;
        state.q = q;
        state.iteration = iteration;
        let energy = transport_energy(&state.sigma, &disc.lumped, &disc.grid);
        state.energy_history.push(energy.value);
        if !residual.is_finite() || !energy.value.is_finite() || !state.sigma.is_finite() {
            return Err(Error::DivergenceDetected { iteration });
        }
        observe(&state);
        if config.residual_tol.is_some_and(|tol| residual <= tol) {
            break;
        }
    }
    Ok(state)
}
