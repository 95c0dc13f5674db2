use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::admm::{initialize, run_with_observer, transport_energy, AdmmConfig, AdmmState, Discretization, EnergyReport};
use crate::error::{Error, Result};
use crate::fem::{discrete_lp_norm, LpNorm};
use crate::field::TimeSpaceField;
use crate::mesh::{fmt_f64, generate_square_mesh};
use crate::timespace::{DirectPoissonSolver, FastPoissonSolver, PoissonSolver, TimeGrid};

use super::config::{MeshSource, RunConfig, SolverChoice};
use super::density::{build_density, exact_gaussian_path, DensitySpec, SQUARE_MU0, SQUARE_MU1, SQUARE_SIGMA};
use super::output::{remove_files, write_trajectory};

pub const REPORT_FILE: &str = "report.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Fast,
    Direct,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Fast => "fast",
            SolverKind::Direct => "direct",
        }
    }
}

/// One ADMM run with a given Step 1 solver.
#[derive(Clone, Debug)]
pub struct SolverRun {
    pub kind: SolverKind,
    pub setup_seconds: f64,
    pub total_seconds: f64,
    pub iteration_seconds: Vec<f64>,
    pub state: AdmmState,
}

impl SolverRun {
    pub fn mean_iteration_seconds(&self) -> f64 {
        self.iteration_seconds.iter().sum::<f64>() / self.iteration_seconds.len().max(1) as f64
    }
}

/// Builds the solver, initializes from the endpoint densities and iterates.
pub fn run_admm(disc: &Discretization, rho0: &[f64], rho1: &[f64], config: &AdmmConfig, kind: SolverKind) -> Result<SolverRun> {
    let start = Instant::now();
    let solver: Box<dyn PoissonSolver> = match kind {
        SolverKind::Fast => Box::new(FastPoissonSolver::new(&disc.mass, &disc.stiffness, &disc.grid)?),
        SolverKind::Direct => Box::new(DirectPoissonSolver::new(&disc.mass, &disc.stiffness, &disc.grid)?),
    };
    let setup_seconds = start.elapsed().as_secs_f64();
    let state = initialize(rho0, rho1, disc)?;
    let mut iteration_seconds = Vec::with_capacity(config.max_iter);
    let mut last = Instant::now();
    let state = run_with_observer(config, disc, solver.as_ref(), state, |_| {
        iteration_seconds.push(last.elapsed().as_secs_f64());
        last = Instant::now();
    })?;
    Ok(SolverRun {
        kind,
        setup_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        iteration_seconds,
        state,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryErrors {
    pub l1: f64,
    pub l2: f64,
}

/// Discrete L¹/L² errors of a density trajectory against the translating
/// Gaussian of the square benchmark.
pub fn trajectory_errors(density: &TimeSpaceField, disc: &Discretization) -> Result<TrajectoryErrors> {
    let rows = (0..disc.n_time())
        .map(|j| exact_gaussian_path(disc.grid.node(j), &disc.mesh))
        .collect::<Result<Vec<_>>>()?;
    let mut err = TimeSpaceField::from_rows(&rows)?;
    err.scale(-1.0);
    err.axpy(1.0, density);
    let tau = disc.grid.tau();
    Ok(TrajectoryErrors {
        l1: discrete_lp_norm(&err, &disc.mass, tau, LpNorm::L1),
        l2: discrete_lp_norm(&err, &disc.mass, tau, LpNorm::L2),
    })
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub n: usize,
    pub n_t: usize,
    pub errors: TrajectoryErrors,
    pub energy: EnergyReport,
    pub final_residual: f64,
    pub seconds: f64,
}

/// Square benchmark at one size `N` with `N_t = 2N`.
pub fn square_level(n: usize, config: &AdmmConfig) -> Result<LevelResult> {
    let start = Instant::now();
    let disc = Discretization::new(generate_square_mesh(n), TimeGrid::new(2 * n)?)?;
    let rho0 = build_density(&DensitySpec::PlanarGaussian { mu: SQUARE_MU0, sigma: SQUARE_SIGMA }, &disc.mesh)?;
    let rho1 = build_density(&DensitySpec::PlanarGaussian { mu: SQUARE_MU1, sigma: SQUARE_SIGMA }, &disc.mesh)?;
    let run = run_admm(&disc, &rho0, &rho1, config, SolverKind::Fast)?;
    Ok(LevelResult {
        n,
        n_t: 2 * n,
        errors: trajectory_errors(run.state.density(), &disc)?,
        energy: transport_energy(&run.state.sigma, &disc.lumped, &disc.grid),
        final_residual: run.state.residual_history.last().copied().unwrap_or(f64::NAN),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn square_convergence_study(sizes: &[usize], config: &AdmmConfig) -> Result<Vec<LevelResult>> {
    sizes.iter().map(|&n| square_level(n, config)).collect()
}

/// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` with `h = 1/(N-1)`.
pub fn observed_orders(levels: &[LevelResult], error: impl Fn(&TrajectoryErrors) -> f64) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| (error(&w[0].errors) / error(&w[1].errors)).ln() / ((w[1].n - 1) as f64 / (w[0].n - 1) as f64).ln())
        .collect()
}

/// Ordered `key = value` lines of `report.txt`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkReport {
    pub entries: Vec<(String, String)>,
}

impl BenchmarkReport {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Runs the configured benchmark inside `config.output_dir` and writes
/// `report.txt` plus trajectory slices. On error, files written by this
/// call are removed.
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    let created_dir = !config.output_dir.exists();
    let mut written = Vec::new();
    let result = pool.install(|| benchmark_inner(config, &mut written));
    if result.is_err() {
        remove_files(&written);
        if created_dir {
            let _ = fs::remove_dir(&config.output_dir);
        }
    }
    result
}

fn write_report(report: &BenchmarkReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(REPORT_FILE);
    fs::write(&path, report.render())?;
    written.push(path);
    Ok(())
}

fn benchmark_inner(config: &RunConfig, written: &mut Vec<PathBuf>) -> Result<BenchmarkReport> {
    let admm = config.admm_config();
    let mut report = BenchmarkReport::default();
    report.push("alpha_r", fmt_f64(admm.alpha_r));
    report.push("r", fmt_f64(admm.r));
    report.push("max_iter", admm.max_iter);

    if !config.refine.is_empty() {
        let levels = square_convergence_study(&config.refine, &admm)?;
        for l in &levels {
            let p = format!("level_{}", l.n);
            report.push(format!("{p}_nt"), l.n_t);
            if config.report.errors {
                report.push_f64(format!("{p}_error_l1"), l.errors.l1);
                report.push_f64(format!("{p}_error_l2"), l.errors.l2);
            }
            if config.report.energy {
                report.push_f64(format!("{p}_energy"), l.energy.value);
                report.push(format!("{p}_energy_singular_nodes"), l.energy.singular_nodes);
            }
            report.push_f64(format!("{p}_final_residual"), l.final_residual);
            if config.report.timings {
                report.push_f64(format!("{p}_seconds"), l.seconds);
            }
        }
        if config.report.errors {
            for (w, (o1, o2)) in levels.windows(2).zip(observed_orders(&levels, |e| e.l1).into_iter().zip(observed_orders(&levels, |e| e.l2))) {
                report.push_f64(format!("order_l1_{}_{}", w[0].n, w[1].n), o1);
                report.push_f64(format!("order_l2_{}_{}", w[0].n, w[1].n), o2);
            }
        }
        write_report(&report, &config.output_dir, written)?;
        return Ok(report);
    }

    let mesh = config.mesh.load()?;
    let grid = TimeGrid::new(config.time_intervals(&mesh))?;
    let (spec0, spec1) = config.densities();
    let rho0 = build_density(&spec0, &mesh)?;
    let rho1 = build_density(&spec1, &mesh)?;
    let exact_applies = matches!(config.mesh, MeshSource::Square(_))
        && spec0 == DensitySpec::PlanarGaussian { mu: SQUARE_MU0, sigma: SQUARE_SIGMA }
        && spec1 == DensitySpec::PlanarGaussian { mu: SQUARE_MU1, sigma: SQUARE_SIGMA };
    let disc = Discretization::new(mesh, grid)?;
    report.push("mesh", &config.mesh);
    report.push("vertices", disc.n_space());
    report.push("triangles", disc.mesh.triangle_count());
    report.push("nt", disc.grid.intervals());

    let kinds: &[SolverKind] = match config.solver {
        SolverChoice::Fast => &[SolverKind::Fast],
        SolverChoice::Direct => &[SolverKind::Direct],
        SolverChoice::Both => &[SolverKind::Fast, SolverKind::Direct],
    };
    let runs = kinds.iter().map(|&k| run_admm(&disc, &rho0, &rho1, &admm, k)).collect::<Result<Vec<_>>>()?;
    let main = &runs[0];
    let state = &main.state;
    report.push("iterations", state.iteration);
    report.push_f64("final_residual", state.residual_history.last().copied().unwrap_or(f64::NAN));
    if config.report.energy {
        let e = transport_energy(&state.sigma, &disc.lumped, &disc.grid);
        report.push_f64("energy", e.value);
        report.push("energy_singular_nodes", e.singular_nodes);
    }
    if config.report.errors && exact_applies {
        let e = trajectory_errors(state.density(), &disc)?;
        report.push_f64("error_l1", e.l1);
        report.push_f64("error_l2", e.l2);
    }
    let endpoint = |row: usize, target: &[f64]| {
        let d: Vec<f64> = state.density().row(row).iter().zip(target).map(|(a, b)| a - b).collect();
        disc.slice_norm(&d)
    };
    report.push_f64("endpoint_error_t0", endpoint(0, &rho0));
    report.push_f64("endpoint_error_t1", endpoint(disc.grid.intervals(), &rho1));
    if runs.len() == 2 {
        let mut d = runs[0].state.u.clone();
        d.axpy(-1.0, &runs[1].state.u);
        report.push_f64("fast_direct_potential_discrepancy", d.frobenius_norm() / runs[1].state.u.frobenius_norm().max(f64::MIN_POSITIVE));
    }
    if config.report.timings {
        for run in &runs {
            let l = run.kind.label();
            report.push_f64(format!("{l}_setup_seconds"), run.setup_seconds);
            report.push_f64(format!("{l}_total_seconds"), run.total_seconds);
            report.push_f64(format!("{l}_mean_iteration_seconds"), run.mean_iteration_seconds());
            let solve: f64 = run.state.solve_seconds.iter().sum::<f64>() / run.state.solve_seconds.len().max(1) as f64;
            report.push_f64(format!("{l}_mean_step1_seconds"), solve);
        }
        if runs.len() == 2 {
            report.push_f64("speedup_per_iteration", runs[1].mean_iteration_seconds() / runs[0].mean_iteration_seconds());
        }
    }
    if let Some(format) = config.output_format {
        written.extend(write_trajectory(state.density(), &disc.mesh, &disc.grid, format, &config.output_dir.join("trajectory"))?);
    }
    write_report(&report, &config.output_dir, written)?;
    Ok(report)
}
