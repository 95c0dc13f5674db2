//! Configuration, density generators, benchmark driver and output writers.

pub mod benchmark;
pub mod config;
pub mod density;
pub mod output;

pub use benchmark::{observed_orders, run_admm, run_benchmark, square_convergence_study, square_level, trajectory_errors, BenchmarkReport, LevelResult, SolverKind, SolverRun, TrajectoryErrors, REPORT_FILE};
pub use config::{MeshSource, ReportFlags, RunConfig, SolverChoice};
pub use density::{build_density, exact_gaussian_path, normalize_density, DensitySpec, Region};
pub use output::{read_csv_slice, write_trajectory, OutputFormat};
