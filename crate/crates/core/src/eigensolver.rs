//! Lowest-eigenpair solvers.
//!
//! The composite Hamiltonian conserves the upper-level occupancy parity
//! `(-1)^(k_f + k_b)`. Strongly correlated LMG sectors have nearly
//! degenerate ground doublets of opposite parity whose witness values differ
//! completely (cat state vs. broken-symmetry product), so both parity blocks
//! are solved separately and the lower one is kept. Exact ties go to the
//! even block, which contains the noninteracting ground state.

use std::fmt;
use std::str::FromStr;

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{CompositeBasis, Restriction};
use crate::error::{Error, Result};
use crate::model::{build_collective_hamiltonian, expand_collective, ModelInstance};
use crate::secondq::{dot, StateVector, TermOperator};

pub const DEFAULT_SEED: u64 = 0x5eed_0d1e;

/// Which Hilbert space the ground state is computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Complete Fock space of both sectors (oracle).
    Full,
    /// One particle per column in each sector.
    #[default]
    Column,
    /// Permutation-symmetric Dicke states, `(n_f+1)(n_b+1)` dimensions.
    Collective,
}

impl SolverPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPath::Full => "full",
            SolverPath::Column => "column",
            SolverPath::Collective => "collective",
        }
    }
}

impl fmt::Display for SolverPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SolverPath::Full),
            "column" => Ok(SolverPath::Column),
            "collective" => Ok(SolverPath::Collective),
            _ => Err(Error::param(format!(
                "unknown solver path '{s}' (expected full, column or collective)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reorthogonalization {
    #[default]
    Full,
    None,
}

impl FromStr for Reorthogonalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Reorthogonalization::Full),
            "none" => Ok(Reorthogonalization::None),
            _ => Err(Error::param(format!("unknown reorthogonalization '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Bound on `||H psi - E psi||`.
    pub tolerance: f64,
    /// Total matrix-vector products allowed per parity block.
    pub max_iterations: usize,
    pub reorthogonalization: Reorthogonalization,
    pub seed: u64,
    pub path: SolverPath,
    /// Parity blocks up to this dimension are diagonalized densely.
    pub dense_limit: usize,
    /// Cap on Lanczos basis storage in bytes.
    pub memory_budget: usize,
    /// Let the matrix-free action use the rayon pool.
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-10,
            max_iterations: 500,
            reorthogonalization: Reorthogonalization::Full,
            seed: DEFAULT_SEED,
            path: SolverPath::Column,
            dense_limit: 400,
            memory_budget: 2 << 30,
            parallel: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::param(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Lanczos,
}

/// Lowest eigenpair of the composite Hamiltonian on some basis.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: StateVector,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Upper-occupancy parity of the returned state.
    pub parity: i8,
    pub method: Method,
}

/// Exact minimal eigenpair of a (numerically) symmetric matrix.
pub fn lowest_eigenpair_dense(matrix: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::param(format!(
            "expected a non-empty square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    let scale = matrix.amax().max(1.0);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::param(format!("matrix not symmetric (max deviation {asym:e})")));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (k, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    fix_sign(&mut v);
    Ok((value, DVector::from_vec(v)))
}

/// Make the first non-negligible amplitude positive.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Result of a Lanczos run on one invariant subspace.
#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Lowest eigenpair by restarted Lanczos starting from `start`.
///
/// The Krylov basis holds at most `max_basis` vectors; when it fills up the
/// iteration restarts from the current Ritz vector. Convergence is judged on
/// the true residual of the Ritz vector.
pub fn lanczos_lowest<F>(apply: F, start: Vec<f64>, opts: &SolveOptions, max_basis: usize) -> Result<LanczosOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = start.len();
    let mut x = start;
    if normalize(&mut x) == 0.0 {
        return Err(Error::param("Lanczos start vector is zero"));
    }
    let max_basis = max_basis.clamp(2, n.max(2));
    let mut iterations = 0usize;
    let mut w = vec![0.0; n];
    let mut hx = vec![0.0; n];

    loop {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz;

        loop {
            let j = basis.len() - 1;
            apply(&basis[j], &mut w);
            iterations += 1;
            let alpha = dot(&basis[j], &w);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= alpha * vi;
            }
            if j > 0 {
                let b = betas[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= b * vi;
                }
            }
            if opts.reorthogonalization == Reorthogonalization::Full {
                for _ in 0..2 {
                    for v in &basis {
                        let c = dot(v, &w);
                        for (wi, vi) in w.iter_mut().zip(v) {
                            *wi -= c * vi;
                        }
                    }
                }
            }
            alphas.push(alpha);
            let beta = dot(&w, &w).sqrt();
            let m = alphas.len();

            let scale = alphas.iter().fold(1.0f64, |s, a| s.max(a.abs()));
            let invariant = beta <= 1e-13 * scale;
            let full = m >= max_basis || m >= n || iterations >= opts.max_iterations;
            let check = invariant || full || m <= 20 || m % 5 == 0;
            if check {
                ritz = tridiagonal_lowest(&alphas, &betas);
                let estimate = beta * ritz.1[m - 1].abs();
                if invariant || full || estimate < 0.1 * opts.tolerance {
                    break;
                }
            }
            betas.push(beta);
            basis.push(w.iter().map(|wi| wi / beta).collect());
        }

        x.iter_mut().for_each(|xi| *xi = 0.0);
        for (v, &c) in basis.iter().zip(&ritz.1) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
        normalize(&mut x);
        apply(&x, &mut hx);
        let value = dot(&x, &hx);
        let residual = hx
            .iter()
            .zip(&x)
            .map(|(h, xi)| (h - value * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        debug!(
            "lanczos cycle: basis {} iterations {} value {value:.12} residual {residual:.3e}",
            basis.len(),
            iterations
        );
        if residual <= opts.tolerance || iterations >= opts.max_iterations {
            fix_sign(&mut x);
            return Ok(LanczosOutcome {
                value,
                vector: x,
                residual,
                iterations,
                converged: residual <= opts.tolerance,
            });
        }
    }
}

/// Lowest eigenpair of the symmetric tridiagonal matrix (alphas, betas).
fn tridiagonal_lowest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (k, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (value, eig.eigenvectors.column(k).iter().copied().collect())
}

struct BlockSolution {
    energy: f64,
    vector: Vec<f64>,
    iterations: usize,
    converged: bool,
    method: Method,
}

fn random_start(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

const SPARSE_ENTRY_BYTES: usize = 12;

/// Ground state of `model` on a bit-string basis (full or column).
pub fn solve_ground(model: &ModelInstance, basis: &CompositeBasis, opts: &SolveOptions) -> Result<GroundState> {
    opts.validate()?;
    if basis.fermion.n_particles() != model.layout.n_f || basis.boson.n_particles() != model.layout.n_b {
        return Err(Error::param("basis does not match the model layout"));
    }
    let op = TermOperator::new(&model.terms(), basis)?.with_parallel(opts.parallel);
    let dim = basis.dimension();
    let start = random_start(dim, opts.seed);

    let mut sparse = None;
    let mut blocks = Vec::new();
    for parity in [1i8, -1] {
        let indices: Vec<usize> = (0..dim).filter(|&i| basis.parity(i) == parity).collect();
        if indices.is_empty() {
            continue;
        }
        let solution = if indices.len() <= opts.dense_limit {
            let k = indices.len();
            let m = DMatrix::from_row_slice(k, k, &op.dense_block(&indices));
            let (energy, v) = lowest_eigenpair_dense(&m)?;
            let mut vector = vec![0.0; dim];
            for (&i, &a) in indices.iter().zip(v.iter()) {
                vector[i] = a;
            }
            BlockSolution {
                energy,
                vector,
                iterations: 0,
                converged: true,
                method: Method::Dense,
            }
        } else {
            let bytes_per_vector = dim * std::mem::size_of::<f64>();
            let max_basis = (opts.memory_budget / bytes_per_vector.max(1)).min(300);
            if max_basis < 20.min(indices.len()) {
                return Err(Error::Resource(format!(
                    "dimension {dim} leaves room for only {max_basis} Lanczos vectors in {} bytes",
                    opts.memory_budget
                )));
            }
            let mut masked = vec![0.0; dim];
            for &i in &indices {
                masked[i] = start[i];
            }
            if sparse.is_none() {
                sparse = Some(op.to_sparse(opts.memory_budget / 4 / SPARSE_ENTRY_BYTES));
            }
            let out = match sparse.as_ref().and_then(|s| s.as_ref()) {
                Some(s) => lanczos_lowest(|x, y| s.apply(x, y), masked, opts, max_basis)?,
                None => lanczos_lowest(|x, y| op.apply(x, y), masked, opts, max_basis)?,
            };
            BlockSolution {
                energy: out.value,
                vector: out.vector,
                iterations: out.iterations,
                converged: out.converged,
                method: Method::Lanczos,
            }
        };
        blocks.push((parity, solution));
    }
    finish(&op, blocks, opts)
}

fn finish(op: &TermOperator<'_>, blocks: Vec<(i8, BlockSolution)>, opts: &SolveOptions) -> Result<GroundState> {
    let iterations = blocks.iter().map(|(_, b)| b.iterations).sum();
    let converged = blocks.iter().all(|(_, b)| b.converged);
    let tie = 10.0 * opts.tolerance;
    let (parity, best) = blocks
        .into_iter()
        .reduce(|a, b| if b.1.energy < a.1.energy - tie { b } else { a })
        .ok_or_else(|| Error::param("empty basis"))?;

    let mut vector = best.vector;
    normalize(&mut vector);
    fix_sign(&mut vector);
    let mut hv = vec![0.0; vector.len()];
    op.apply(&vector, &mut hv);
    let energy = dot(&vector, &hv);
    let residual = hv
        .iter()
        .zip(&vector)
        .map(|(h, v)| (h - energy * v).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(GroundState {
        energy,
        vector: StateVector::new(vector),
        residual,
        iterations,
        converged: converged && residual <= opts.tolerance.max(1e-9 * energy.abs().max(1.0)),
        parity,
        method: best.method,
    })
}

/// Ground state from the collective Hamiltonian, expanded onto `basis`
/// (which must be column-restricted).
pub fn solve_collective(model: &ModelInstance, basis: &CompositeBasis, opts: &SolveOptions) -> Result<GroundState> {
    opts.validate()?;
    if basis.restriction() != Restriction::Column {
        return Err(Error::param("collective solutions expand onto the column basis"));
    }
    let h = build_collective_hamiltonian(&model.params)?;
    let db = model.params.n_b + 1;
    let mut blocks = Vec::new();
    for parity in [1i8, -1] {
        let indices: Vec<usize> = (0..h.nrows())
            .filter(|&i| if (i / db + i % db) % 2 == 0 { parity == 1 } else { parity == -1 })
            .collect();
        if indices.is_empty() {
            continue;
        }
        let block = h.select_rows(&indices).select_columns(&indices);
        let (energy, v) = lowest_eigenpair_dense(&block)?;
        let mut coeffs = vec![0.0; h.nrows()];
        for (&i, &a) in indices.iter().zip(v.iter()) {
            coeffs[i] = a;
        }
        blocks.push((
            parity,
            BlockSolution {
                energy,
                vector: expand_collective(&coeffs, basis)?,
                iterations: 0,
                converged: true,
                method: Method::Dense,
            },
        ));
    }
    let op = TermOperator::new(&model.terms(), basis)?.with_parallel(opts.parallel);
    finish(&op, blocks, opts)
}

/// Dispatch on `opts.path`, building the matching basis.
pub fn solve_path(model: &ModelInstance, opts: &SolveOptions) -> Result<(CompositeBasis, GroundState)> {
    let restriction = match opts.path {
        SolverPath::Full => Restriction::Full,
        SolverPath::Column | SolverPath::Collective => Restriction::Column,
    };
    let basis = model.basis(restriction)?;
    let ground = match opts.path {
        SolverPath::Collective => solve_collective(model, &basis, opts)?,
        _ => solve_ground(model, &basis, opts)?,
    };
    Ok((basis, ground))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemParams;

    #[test]
    fn dense_pauli_x() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (value, v) = lowest_eigenpair_dense(&m).unwrap();
        assert!((value + 1.0).abs() < 1e-14);
        let h = 1.0 / 2f64.sqrt();
        assert!((v[0] - h).abs() < 1e-14 && (v[1] + h).abs() < 1e-14);
    }

    #[test]
    fn dense_scaled_identity() {
        let m = DMatrix::identity(4, 4) * 2.5;
        let (value, v) = lowest_eigenpair_dense(&m).unwrap();
        assert!((value - 2.5).abs() < 1e-14);
        assert!((v.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dense_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(lowest_eigenpair_dense(&m), Err(Error::Parameter(_))));
        assert!(lowest_eigenpair_dense(&DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn dense_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
        let m = &a + a.transpose();
        let (value, v) = lowest_eigenpair_dense(&m).unwrap();
        assert!((&m * &v - &v * value).norm() <= 1e-10);
    }

    #[test]
    fn lanczos_matches_dense_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(120, 120, |_, _| rng.random_range(-1.0..1.0));
        let m = &a + a.transpose();
        let (exact, _) = lowest_eigenpair_dense(&m).unwrap();
        let opts = SolveOptions::default();
        let apply = |x: &[f64], y: &mut [f64]| {
            let r = &m * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        };
        let out = lanczos_lowest(apply, random_start(120, 3), &opts, 300).unwrap();
        assert!(out.converged);
        assert!((out.value - exact).abs() < 1e-9);
        // restarted with a small basis
        let out = lanczos_lowest(apply, random_start(120, 3), &SolveOptions { max_iterations: 5000, ..opts }, 25).unwrap();
        assert!(out.converged, "residual {}", out.residual);
        assert!((out.value - exact).abs() < 1e-9);
    }

    #[test]
    fn lanczos_reports_nonconvergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(200, 200, |_, _| rng.random_range(-1.0..1.0));
        let m = &a + a.transpose();
        let opts = SolveOptions { max_iterations: 4, ..Default::default() };
        let apply = |x: &[f64], y: &mut [f64]| {
            y.copy_from_slice((&m * DVector::from_column_slice(x)).as_slice());
        };
        let out = lanczos_lowest(apply, random_start(200, 1), &opts, 300).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 4);
    }

    #[test]
    fn n1_ground_state_is_all_lower() {
        let p = SystemParams { n_f: 1, n_b: 1, mu: 0.5, ..Default::default() };
        let model = ModelInstance::new(p).unwrap();
        for path in [SolverPath::Full, SolverPath::Column, SolverPath::Collective] {
            let opts = SolveOptions { path, ..Default::default() };
            let (basis, g) = solve_path(&model, &opts).unwrap();
            assert!((g.energy + 1.0).abs() < 1e-12, "{path}: {}", g.energy);
            let lower = basis.rank(0b01, 0b01).unwrap();
            assert!((g.vector.amplitudes[lower] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noninteracting_filling_energy() {
        let p = SystemParams { n_f: 3, n_b: 2, eps_f: 1.3, eps_b: 0.4, ..Default::default() };
        let model = ModelInstance::new(p).unwrap();
        let (_, g) = solve_path(&model, &SolveOptions::default()).unwrap();
        assert!((g.energy + (3.0 * 1.3 + 2.0 * 0.4) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_and_dense_paths_agree() {
        let p = SystemParams { n_f: 3, n_b: 3, eps_f: 1.1, eps_b: 0.7, v_f: -0.6, v_b: 0.4, mu: 0.35 };
        let model = ModelInstance::new(p).unwrap();
        let basis = model.basis(Restriction::Full).unwrap();
        let dense = solve_ground(&model, &basis, &SolveOptions::default()).unwrap();
        assert_eq!(dense.method, Method::Dense);
        let lanczos = solve_ground(&model, &basis, &SolveOptions { dense_limit: 0, ..Default::default() }).unwrap();
        assert_eq!(lanczos.method, Method::Lanczos);
        assert!(lanczos.converged);
        assert!((dense.energy - lanczos.energy).abs() < 1e-9);
        assert_eq!(dense.parity, lanczos.parity);
        // Rayleigh quotient of the returned vector is the reported energy
        let op = TermOperator::new(&model.terms(), &basis).unwrap();
        let mut hv = vec![0.0; basis.dimension()];
        op.apply(&lanczos.vector.amplitudes, &mut hv);
        assert!((dot(&lanczos.vector.amplitudes, &hv) - lanczos.energy).abs() < 1e-12);
        assert!((lanczos.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_determinism() {
        let p = SystemParams { n_f: 3, n_b: 3, v_f: -0.9, v_b: -0.2, mu: 0.4, ..Default::default() };
        let model = ModelInstance::new(p).unwrap();
        let opts = SolveOptions { dense_limit: 0, ..Default::default() };
        let (_, a) = solve_path(&model, &opts).unwrap();
        let (_, b) = solve_path(&model, &opts).unwrap();
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.iterations, b.iterations);
    }
}
