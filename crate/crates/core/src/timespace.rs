//! Neumann time-space Poisson problem.
//!
//! Time is discretized by a ghost-point second difference `E`, space by
//! linear surface elements, giving `(E⊗M + I⊗S) U = F`. The fast solver
//! diagonalizes `E` in its cosine eigenbasis so the system splits into
//! `N_t + 1` independent elliptic solves with matrices `γ_i M + S`, each
//! factorized once up front.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::TimeSpaceField;
use crate::sparse::SparseMatrix;

/// Uniform partition of `[0, 1]` into `N_t` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    intervals: usize,
}

impl TimeGrid {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::GridTooSmall(intervals));
        }
        Ok(Self { intervals })
    }

    /// Grid without the `N_t ≥ 2` check, for exercising error paths.
    pub fn new_unchecked(intervals: usize) -> Self {
        Self { intervals }
    }

    /// `N_t`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `N_t + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|j| self.node(j)).collect()
    }

    /// Trapezoidal quadrature weights `τ·(1/2, 1, …, 1, 1/2)`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let tau = self.tau();
        (0..=self.intervals)
            .map(|j| if j == 0 || j == self.intervals { 0.5 * tau } else { tau })
            .collect()
    }
}

/// Ghost-point second-difference matrix with Neumann closure:
/// rows `(2, -2)/τ²`, `(-1, 2, -1)/τ²`, `(-2, 2)/τ²`.
pub fn build_difference_matrix(grid: &TimeGrid) -> DMatrix<f64> {
    let n = grid.len();
    let inv = 1.0 / (grid.tau() * grid.tau());
    let mut e = DMatrix::zeros(n, n);
    e[(0, 0)] = 2.0 * inv;
    e[(0, 1)] = -2.0 * inv;
    for j in 1..n - 1 {
        e[(j, j - 1)] = -inv;
        e[(j, j)] = 2.0 * inv;
        e[(j, j + 1)] = -inv;
    }
    e[(n - 1, n - 2)] = -2.0 * inv;
    e[(n - 1, n - 1)] = 2.0 * inv;
    e
}

/// Cosine eigenbasis of the difference matrix.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    /// `γ_i = (2 - 2cos(iπτ)) / τ²`.
    pub eigenvalues: Vec<f64>,
    /// Columns `e_i / ‖e_i‖` with `(e_i)_j = cos(iπ t_j)`.
    pub h: DMatrix<f64>,
    /// `(HᵀH)⁻¹`.
    pub gram_inverse: DMatrix<f64>,
    /// `(HᵀH)⁻¹ Hᵀ`, mapping time profiles to modal coefficients.
    analysis: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(grid: &TimeGrid) -> Self {
        let n = grid.len();
        let tau = grid.tau();
        let eigenvalues = (0..n)
            .map(|i| (2.0 - 2.0 * (i as f64 * PI * tau).cos()) / (tau * tau))
            .collect();
        let mut h = DMatrix::from_fn(n, n, |j, i| (i as f64 * PI * grid.node(j)).cos());
        for mut col in h.column_iter_mut() {
            let nrm = col.norm();
            col /= nrm;
        }
        let gram_inverse = (h.transpose() * &h)
            .try_inverse()
            .expect("cosine basis is linearly independent");
        let analysis = &gram_inverse * h.transpose();
        Self {
            eigenvalues,
            h,
            gram_inverse,
            analysis,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Modal coefficients `R` with `F = Σ_i h_i R_iᵀ` (time-major rows).
    pub fn analyze(&self, f: &TimeSpaceField) -> TimeSpaceField {
        mix_rows(&self.analysis, f)
    }

    /// Inverse of [`Self::analyze`]: `U = H W`.
    pub fn synthesize(&self, w: &TimeSpaceField) -> TimeSpaceField {
        mix_rows(&self.h, w)
    }
}

/// `out_j = Σ_k a[j,k] · f_k` over time rows.
fn mix_rows(a: &DMatrix<f64>, f: &TimeSpaceField) -> TimeSpaceField {
    let (nt, ns) = f.shape();
    assert_eq!(a.ncols(), nt);
    let mut out = TimeSpaceField::zeros(a.nrows(), ns);
    out.rows_mut()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .for_each(|(j, dst)| {
            for k in 0..nt {
                let w = a[(j, k)];
                if w != 0.0 {
                    for (d, s) in dst.iter_mut().zip(f.row(k)) {
                        *d += w * s;
                    }
                }
            }
        });
    out
}

/// Neumann data in outward-normal form: `u0_data = -∂_t u(0,·)` and
/// `u1_data = ∂_t u(1,·)`.
#[derive(Clone, Debug)]
pub struct NeumannData {
    pub u0_data: Vec<f64>,
    pub u1_data: Vec<f64>,
}

/// Ghost-point forcing: `2·u0_data/τ` in the first time row,
/// `2·u1_data/τ` in the last, zero elsewhere.
pub fn build_neumann_rhs(grid: &TimeGrid, data: &NeumannData) -> Result<TimeSpaceField> {
    let ns = data.u0_data.len();
    if data.u1_data.len() != ns {
        return Err(Error::ShapeMismatch {
            expected: format!("u1_data of length {ns}"),
            found: format!("length {}", data.u1_data.len()),
        });
    }
    let scale = 2.0 / grid.tau();
    let mut f = TimeSpaceField::zeros(grid.len(), ns);
    for (d, s) in f.row_mut(0).iter_mut().zip(&data.u0_data) {
        *d = scale * s;
    }
    for (d, s) in f.row_mut(grid.intervals()).iter_mut().zip(&data.u1_data) {
        *d = scale * s;
    }
    Ok(f)
}

/// Solver for `(E⊗M + I⊗S) U = F` with the zero-mean gauge
/// `Σ_j w_j 1ᵀ M U_j = 0` (`w` = trapezoid weights).
pub trait PoissonSolver {
    fn solve(&self, rhs: &TimeSpaceField) -> Result<TimeSpaceField>;
}

/// Outcome of the `i = 0` compatibility projection.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveDiagnostics {
    /// `1ᵀR_0`, the part of the data removed to make the system solvable.
    pub compatibility_defect: f64,
    /// The same relative to `Σ|R_0|`.
    pub relative_defect: f64,
}

type Factor = Llt<usize, f64>;

/// Spectral solver with one prefactorized `γ_i M + S` per temporal mode.
pub struct FastPoissonSolver {
    basis: SpectralBasis,
    factors: Vec<Factor>,
    /// `S` with `PINNED` removed; its solution is shifted to zero M-mean.
    zero_mode: Factor,
    mass_ones: Vec<f64>,
    n_space: usize,
}

const PINNED: usize = 0;

fn cholesky(a: &SparseMatrix, symbolic: Option<&SymbolicLlt<usize>>) -> Result<(Factor, SymbolicLlt<usize>)> {
    let fa = a.to_faer()?;
    let sym = match symbolic {
        Some(s) => s.clone(),
        None => SymbolicLlt::try_new(fa.symbolic(), Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))?,
    };
    let llt = Llt::try_new_with_symbolic(sym.clone(), fa.as_ref(), Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    Ok((llt, sym))
}

fn solve_with(factor: &Factor, rhs: &[f64]) -> Vec<f64> {
    let mut x = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
    factor.solve_in_place(x.as_mat_mut());
    (0..rhs.len()).map(|i| x[i]).collect()
}

impl FastPoissonSolver {
    /// Factorizes every `γ_i M + S`, `i ≥ 1`, and the pinned `S` once.
    pub fn new(mass: &SparseMatrix, stiffness: &SparseMatrix, grid: &TimeGrid) -> Result<Self> {
        let basis = SpectralBasis::new(grid);
        let n_space = mass.nrows();
        let pattern = mass.linear_combination(1.0, stiffness, 1.0);
        let (_, symbolic) = cholesky(&pattern, None)?;
        let factors = basis.eigenvalues[1..]
            .par_iter()
            .map(|&g| cholesky(&mass.linear_combination(g, stiffness, 1.0), Some(&symbolic)).map(|(f, _)| f))
            .collect::<Result<Vec<_>>>()?;
        let (zero_mode, _) = cholesky(&stiffness.without_index(PINNED), None)?;
        let mass_ones = mass.mul_vec(&vec![1.0; n_space]);
        Ok(Self {
            basis,
            factors,
            zero_mode,
            mass_ones,
            n_space,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn solve_with_diagnostics(&self, rhs: &TimeSpaceField) -> Result<(TimeSpaceField, SolveDiagnostics)> {
        rhs.check_shape(self.basis.len(), self.n_space)?;
        let mut r = self.basis.analyze(rhs);

        let area: f64 = self.mass_ones.iter().sum();
        let r0 = r.row_mut(0);
        let defect: f64 = r0.iter().sum();
        let scale: f64 = r0.iter().map(|x| x.abs()).sum();
        for (x, m) in r0.iter_mut().zip(&self.mass_ones) {
            *x -= defect / area * m;
        }
        let diagnostics = SolveDiagnostics {
            compatibility_defect: defect,
            relative_defect: if scale > 0.0 { defect.abs() / scale } else { 0.0 },
        };

        let mut w = TimeSpaceField::zeros(self.basis.len(), self.n_space);
        let modes: Vec<Vec<f64>> = (0..self.basis.len())
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    self.solve_zero_mode(r.row(0))
                } else {
                    solve_with(&self.factors[i - 1], r.row(i))
                }
            })
            .collect();
        for (i, m) in modes.into_iter().enumerate() {
            w.row_mut(i).copy_from_slice(&m);
        }
        let u = self.basis.synthesize(&w);
        if !u.is_finite() {
            return Err(Error::Factorization("non-finite solution".into()));
        }
        Ok((u, diagnostics))
    }

    fn solve_zero_mode(&self, r0: &[f64]) -> Vec<f64> {
        let reduced: Vec<f64> = r0
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != PINNED)
            .map(|(_, &x)| x)
            .collect();
        let y = solve_with(&self.zero_mode, &reduced);
        let mut x = Vec::with_capacity(r0.len());
        x.extend_from_slice(&y[..PINNED]);
        x.push(0.0);
        x.extend_from_slice(&y[PINNED..]);
        let area: f64 = self.mass_ones.iter().sum();
        let mean = x.iter().zip(&self.mass_ones).map(|(a, m)| a * m).sum::<f64>() / area;
        x.iter_mut().for_each(|v| *v -= mean);
        x
    }
}

impl PoissonSolver for FastPoissonSolver {
    fn solve(&self, rhs: &TimeSpaceField) -> Result<TimeSpaceField> {
        self.solve_with_diagnostics(rhs).map(|(u, _)| u)
    }
}

pub fn solve_fast(solver: &FastPoissonSolver, rhs: &TimeSpaceField) -> Result<TimeSpaceField> {
    solver.solve(rhs)
}

/// Largest `(N_t+1)·N_s` accepted by the direct solver.
pub const DIRECT_SIZE_LIMIT: usize = 200_000;

/// Assembles the full Kronecker system and factorizes it on every call.
///
/// `A` is singular with kernel `1⊗1` and left kernel `w⊗1`. The data is
/// made compatible by removing `λ (1_t ⊗ M1)` (the same component the
/// spectral path discards), one unknown is pinned to zero, and the solution
/// is shifted onto the gauge afterwards.
pub struct DirectPoissonSolver {
    system: SparseColMat<usize, f64>,
    weights: Vec<f64>,
    mass_ones: Vec<f64>,
    mass: SparseMatrix,
    n_time: usize,
    n_space: usize,
}

/// Unknown removed from the Kronecker system.
const PINNED_UNKNOWN: usize = 0;

impl DirectPoissonSolver {
    pub fn new(mass: &SparseMatrix, stiffness: &SparseMatrix, grid: &TimeGrid) -> Result<Self> {
        let (nt, ns) = (grid.len(), mass.nrows());
        let n = nt * ns;
        if n > DIRECT_SIZE_LIMIT {
            return Err(Error::SizeGuard {
                size: n,
                limit: DIRECT_SIZE_LIMIT,
            });
        }
        let e = build_difference_matrix(grid);
        // Index shift that drops the pinned unknown.
        let idx = |k: usize| if k > PINNED_UNKNOWN { Some(k - 1) } else if k < PINNED_UNKNOWN { Some(k) } else { None };
        let mut t = Vec::with_capacity(nt * (3 * mass.nnz() + stiffness.nnz()));
        let mut push = |r: usize, c: usize, v: f64| {
            if let (Some(r), Some(c)) = (idx(r), idx(c)) {
                t.push(Triplet::new(r, c, v));
            }
        };
        for j in 0..nt {
            for k in j.saturating_sub(1)..(j + 2).min(nt) {
                let ejk = e[(j, k)];
                for (i, l, m) in mass.triplets() {
                    push(j * ns + i, k * ns + l, ejk * m);
                }
            }
            for (i, l, s) in stiffness.triplets() {
                push(j * ns + i, j * ns + l, s);
            }
        }
        let system = SparseColMat::try_new_from_triplets(n - 1, n - 1, &t).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            system,
            weights: grid.trapezoid_weights(),
            mass_ones: mass.mul_vec(&vec![1.0; ns]),
            mass: mass.clone(),
            n_time: nt,
            n_space: ns,
        })
    }

    /// Solution and the multiplier `λ` of the removed component, so that
    /// `A U = F - λ (1_t ⊗ M1)`.
    pub fn solve_bordered(&self, rhs: &TimeSpaceField) -> Result<(TimeSpaceField, f64)> {
        rhs.check_shape(self.n_time, self.n_space)?;
        let ns = self.n_space;
        let n = self.n_time * ns;
        let area: f64 = self.mass_ones.iter().sum();
        let total_w: f64 = self.weights.iter().sum();
        let lambda = self.weights.iter().zip(rhs.rows()).map(|(w, r)| w * r.iter().sum::<f64>()).sum::<f64>() / (total_w * area);

        let lu = self.system.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let f = rhs.as_slice();
        let mut x = Col::<f64>::from_fn(n - 1, |k| {
            let g = if k >= PINNED_UNKNOWN { k + 1 } else { k };
            f[g] - lambda * self.mass_ones[g % ns]
        });
        lu.solve_in_place(x.as_mat_mut());
        let mut u = TimeSpaceField::zeros(self.n_time, ns);
        for (k, v) in u.as_mut_slice().iter_mut().enumerate() {
            *v = match k.cmp(&PINNED_UNKNOWN) {
                std::cmp::Ordering::Less => x[k],
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => x[k - 1],
            };
        }
        let ones = vec![1.0; ns];
        let mean = self.weights.iter().zip(u.rows()).map(|(w, r)| w * self.mass.bilinear(&ones, r)).sum::<f64>() / (total_w * area);
        u.as_mut_slice().iter_mut().for_each(|v| *v -= mean);
        if !u.is_finite() {
            return Err(Error::Factorization("non-finite solution".into()));
        }
        Ok((u, lambda))
    }
}

impl PoissonSolver for DirectPoissonSolver {
    fn solve(&self, rhs: &TimeSpaceField) -> Result<TimeSpaceField> {
        self.solve_bordered(rhs).map(|(u, _)| u)
    }
}

pub fn solve_direct(mass: &SparseMatrix, stiffness: &SparseMatrix, grid: &TimeGrid, rhs: &TimeSpaceField) -> Result<TimeSpaceField> {
    DirectPoissonSolver::new(mass, stiffness, grid)?.solve(rhs)
}

/// `(E⊗M + I⊗S) U`, time-major.
pub fn apply_system(mass: &SparseMatrix, stiffness: &SparseMatrix, grid: &TimeGrid, u: &TimeSpaceField) -> TimeSpaceField {
    let e = build_difference_matrix(grid);
    let (nt, ns) = u.shape();
    let mu: Vec<Vec<f64>> = u.rows().map(|r| mass.mul_vec(r)).collect();
    TimeSpaceField::from_rows(
        &(0..nt)
            .map(|j| {
                let mut row = stiffness.mul_vec(u.row(j));
                for k in j.saturating_sub(1)..(j + 2).min(nt) {
                    for i in 0..ns {
                        row[i] += e[(j, k)] * mu[k][i];
                    }
                }
                row
            })
            .collect::<Vec<_>>(),
    )
    .expect("rows share a length")
}

/// Gauge functional `Σ_j w_j 1ᵀ M U_j`.
pub fn space_time_mean(mass: &SparseMatrix, grid: &TimeGrid, u: &TimeSpaceField) -> f64 {
    let ones = vec![1.0; mass.nrows()];
    grid.trapezoid_weights()
        .iter()
        .zip(u.rows())
        .map(|(w, row)| w * mass.bilinear(&ones, row))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::mesh::{generate_icosphere, generate_square_mesh, SurfaceMesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrices(mesh: &SurfaceMesh) -> (SparseMatrix, SparseMatrix) {
        (assemble_mass(mesh), assemble_stiffness(mesh))
    }

    fn random_field(rng: &mut ChaCha8Rng, nt: usize, ns: usize) -> TimeSpaceField {
        TimeSpaceField::from_fn(nt, ns, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rel_diff(a: &TimeSpaceField, b: &TimeSpaceField) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn difference_matrix_small() {
        let g = TimeGrid::new(2).unwrap();
        let e = build_difference_matrix(&g);
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -1.0, 2.0, -1.0, 0.0, -2.0, 2.0]) * 4.0;
        assert_eq!(e, expected);
        let ones = DMatrix::from_element(3, 1, 1.0);
        assert!((&e * ones).iter().all(|&x| x == 0.0));
        let c = DMatrix::from_fn(3, 1, |j, _| (PI * g.node(j)).cos());
        let basis = SpectralBasis::new(&g);
        assert!((basis.eigenvalues[1] - 8.0).abs() < 1e-12);
        assert!((&e * &c - &c * 8.0).norm() < 1e-12);
    }

    #[test]
    fn spectral_identity() {
        for nt in [2, 4, 8, 16, 64] {
            let g = TimeGrid::new(nt).unwrap();
            let e = build_difference_matrix(&g);
            let b = SpectralBasis::new(&g);
            let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.eigenvalues.clone()));
            assert!((&e * &b.h - &b.h * gamma).norm() <= 1e-10 * e.norm(), "N_t = {nt}");
            assert_eq!(b.eigenvalues[0], 0.0);
            assert!(b.eigenvalues.windows(2).all(|w| w[1] > w[0]));
            let gram = b.h.transpose() * &b.h;
            assert!((gram * &b.gram_inverse - DMatrix::identity(nt + 1, nt + 1)).norm() < 1e-10);
        }
    }

    #[test]
    fn neumann_rhs() {
        let g = TimeGrid::new(4).unwrap();
        let zero = NeumannData {
            u0_data: vec![0.0; 3],
            u1_data: vec![0.0; 3],
        };
        assert_eq!(build_neumann_rhs(&g, &zero).unwrap().max_abs(), 0.0);
        let f = build_neumann_rhs(
            &g,
            &NeumannData {
                u0_data: vec![1.0; 3],
                u1_data: vec![0.0; 3],
            },
        )
        .unwrap();
        assert_eq!(f.row(0), &[8.0; 3]);
        assert!(f.rows().skip(1).all(|r| r.iter().all(|&x| x == 0.0)));
        let f = build_neumann_rhs(
            &g,
            &NeumannData {
                u0_data: vec![0.0; 3],
                u1_data: vec![0.5, 1.0, -1.0],
            },
        )
        .unwrap();
        assert!(f.rows().take(4).all(|r| r.iter().all(|&x| x == 0.0)));
        assert_eq!(f.row(4), &[4.0, 8.0, -8.0]);
        let bad = NeumannData {
            u0_data: vec![0.0; 3],
            u1_data: vec![0.0; 2],
        };
        assert!(matches!(build_neumann_rhs(&g, &bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = generate_square_mesh(5);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(4).unwrap();
        let f = TimeSpaceField::zeros(5, 25);
        let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
        assert_eq!(fast.solve(&f).unwrap().max_abs(), 0.0);
        assert_eq!(solve_direct(&m, &s, &g, &f).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn prefactorized_residuals() {
        let mesh = generate_icosphere(2);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(8).unwrap();
        let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (i, &gamma) in fast.basis().eigenvalues.iter().enumerate().skip(1) {
            let a = m.linear_combination(gamma, &s, 1.0);
            let x: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = solve_with(&fast.factors[i - 1], &a.mul_vec(&x));
            let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nrm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * nrm, "mode {i}: {err}");
        }
    }

    #[test]
    fn fast_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases: [(SurfaceMesh, usize); 3] = [(generate_square_mesh(5), 4), (generate_square_mesh(7), 6), (generate_icosphere(1), 5)];
        for (mesh, nt) in cases {
            let (m, s) = matrices(&mesh);
            let g = TimeGrid::new(nt).unwrap();
            let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
            let direct = DirectPoissonSolver::new(&m, &s, &g).unwrap();
            for _ in 0..3 {
                let f = random_field(&mut rng, nt + 1, mesh.vertex_count());
                let (uf, diag) = fast.solve_with_diagnostics(&f).unwrap();
                let (ud, lambda) = direct.solve_bordered(&f).unwrap();
                assert!(rel_diff(&uf, &ud) <= 1e-10, "{}", rel_diff(&uf, &ud));
                assert!(diag.compatibility_defect.is_finite());

                // Residual of the bordered system: A U = F - λ (1 ⊗ M1).
                let au = apply_system(&m, &s, &g, &ud);
                let m1 = m.mul_vec(&vec![1.0; mesh.vertex_count()]);
                let mut target = f.clone();
                for row in target.rows_mut() {
                    for (x, w) in row.iter_mut().zip(&m1) {
                        *x -= lambda * w;
                    }
                }
                assert!(rel_diff(&au, &target) <= 1e-9);

                for u in [&uf, &ud] {
                    assert!(space_time_mean(&m, &g, u).abs() <= 1e-10 * u.frobenius_norm());
                }
            }
        }
    }

    #[test]
    fn compatible_data_is_untouched() {
        let mesh = generate_icosphere(1);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = random_field(&mut rng, 5, mesh.vertex_count());
        let f = apply_system(&m, &s, &g, &target);
        let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
        let (u, diag) = fast.solve_with_diagnostics(&f).unwrap();
        assert!(diag.relative_defect < 1e-12);
        // Solutions agree up to the constant fixed by the gauge.
        let shift = space_time_mean(&m, &g, &target) / space_time_mean(&m, &g, &TimeSpaceField::from_fn(5, mesh.vertex_count(), |_, _| 1.0));
        let mut expected = target.clone();
        expected.as_mut_slice().iter_mut().for_each(|x| *x -= shift);
        assert!(rel_diff(&u, &expected) < 1e-10);
    }

    #[test]
    fn time_reflection() {
        let mesh = generate_square_mesh(6);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(6).unwrap();
        let ns = mesh.vertex_count();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
        let solve = |u0: &[f64], u1: &[f64]| {
            let hat = build_neumann_rhs(
                &g,
                &NeumannData {
                    u0_data: u0.to_vec(),
                    u1_data: u1.to_vec(),
                },
            )
            .unwrap();
            let rows: Vec<Vec<f64>> = hat.rows().map(|r| m.mul_vec(r)).collect();
            fast.solve(&TimeSpaceField::from_rows(&rows).unwrap()).unwrap()
        };
        let u = solve(&a, &b);
        let v = solve(&b, &a);
        assert!(rel_diff(&v, &u.reversed_in_time()) <= 1e-10);
    }

    /// Relative discrete L² error for u = cos(πt)cos(πx)cos(πy), whose
    /// strong-form data is 3π²·u with homogeneous Neumann conditions.
    fn manufactured_error(n: usize, nt: usize) -> f64 {
        let mesh = generate_square_mesh(n);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(nt).unwrap();
        let exact = TimeSpaceField::from_fn(nt + 1, mesh.vertex_count(), |j, i| {
            let p = mesh.vertex(i);
            (PI * g.node(j)).cos() * (PI * p[0]).cos() * (PI * p[1]).cos()
        });
        let rows: Vec<Vec<f64>> = exact
            .rows()
            .map(|r| m.mul_vec(&r.iter().map(|x| 3.0 * PI * PI * x).collect::<Vec<_>>()))
            .collect();
        let fast = FastPoissonSolver::new(&m, &s, &g).unwrap();
        let u = fast.solve(&TimeSpaceField::from_rows(&rows).unwrap()).unwrap();
        let mut err = u.clone();
        err.axpy(-1.0, &exact);
        let norm = |f: &TimeSpaceField| {
            g.trapezoid_weights()
                .iter()
                .zip(f.rows())
                .map(|(w, r)| w * m.bilinear(r, r))
                .sum::<f64>()
                .sqrt()
        };
        norm(&err) / norm(&exact)
    }

    #[test]
    fn manufactured_solution_is_second_order() {
        let errs: Vec<f64> = [(5, 4), (9, 8), (17, 16), (33, 32)].iter().map(|&(n, nt)| manufactured_error(n, nt)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "errors {errs:?}");
        }
    }

    #[test]
    fn direct_size_guard() {
        let mesh = generate_square_mesh(101);
        let (m, s) = matrices(&mesh);
        let g = TimeGrid::new(20).unwrap();
        assert!(matches!(DirectPoissonSolver::new(&m, &s, &g), Err(Error::SizeGuard { .. })));
    }
}
