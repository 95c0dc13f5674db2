use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use surface_ot::app::{run_benchmark, RunConfig};
use surface_ot::Error;

/// Dynamic optimal transport between two densities on a triangulated surface.
///
/// Every flag mirrors a key of the config file; flags override the file.
#[derive(Parser, Debug)]
#[command(name = "surface-ot", version)]
struct Cli {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// square:N, icosphere:LEVEL, geodesic:FREQ, or an .off/.obj path.
    #[arg(long)]
    mesh: Option<String>,
    /// Number of time intervals (default 2N on square:N, 2⌊√N_s⌋ otherwise).
    #[arg(long)]
    nt: Option<String>,
    /// Dual step size.
    #[arg(long = "alpha-r")]
    alpha_r: Option<String>,
    /// Augmentation weight (default: alpha-r).
    #[arg(long)]
    r: Option<String>,
    /// Number of ADMM iterations.
    #[arg(long)]
    iters: Option<String>,
    /// Stop early once the residual drops below this value.
    #[arg(long = "residual-tol")]
    residual_tol: Option<String>,
    /// Initial density, e.g. planar_gaussian:0.3,0.3,0.01.
    #[arg(long)]
    rho0: Option<String>,
    /// Terminal density.
    #[arg(long)]
    rho1: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Trajectory format: csv, vtk or none.
    #[arg(long)]
    format: Option<String>,
    /// Step 1 solver: fast, direct or both.
    #[arg(long)]
    solver: Option<String>,
    /// Comma-separated subset of errors,energy,timings.
    #[arg(long)]
    report: Option<String>,
    /// Square sizes for a convergence study, e.g. 15,29,57.
    #[arg(long)]
    refine: Option<String>,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    threads: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("mesh", &self.mesh),
            ("nt", &self.nt),
            ("alpha-r", &self.alpha_r),
            ("r", &self.r),
            ("iters", &self.iters),
            ("residual-tol", &self.residual_tol),
            ("rho0", &self.rho0),
            ("rho1", &self.rho1),
            ("out", &self.out),
            ("format", &self.format),
            ("solver", &self.solver),
            ("report", &self.report),
            ("refine", &self.refine),
            ("threads", &self.threads),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DivergenceDetected { .. } => 3,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnsupportedFormat(_)
        | Error::IncompatibleSpec(_)
        | Error::Validation(_)
        | Error::MassMismatch { .. }
        | Error::InvalidDensity(_)
        | Error::SizeGuard { .. }
        | Error::GridTooSmall(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for (k, v) in cli.overrides() {
            cfg.set(k, v)?;
        }
        run_benchmark(&cfg)
    })();
    match result {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
