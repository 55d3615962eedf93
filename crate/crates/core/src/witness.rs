//! Reduced density matrices and the particle-hole ODLRO witness.
//!
//! For a sector with `r` modes the centered particle-hole RDM is
//!
//! ```text
//! G[(i,j),(l,k)] = <psi| (c†_i c_j - D_ij)† (c†_l c_k - D_lk) |psi>
//!                = <c†_j c_i c†_l c_k> - D_ji D_lk
//! ```
//!
//! with row index `i*r + j` and column index `l*r + k` (0-based local
//! modes). The witness `lambda_G` is its largest eigenvalue.
//!
//! `G` is assembled as the Gram matrix of the vectors
//! `phi_lk = (c†_l c_k - D_lk) psi`. Sector operators leave the other sector
//! untouched, so each `phi_lk` is stored as a sparse map from sector
//! configurations of the full sector Fock space (excitations may leave a
//! restricted subspace) to source configurations of `psi`, and inner
//! products are taken through the sector density matrix `rho = Psi Psi^T`
//! obtained by tracing out the other sector.

use log::{info, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_sector, CompositeBasis, Restriction, Sector, SectorBasis};
use crate::eigensolver::{solve_path, Method, SolveOptions, SolverPath};
use crate::error::{Error, Result};
use crate::model::{ModelInstance, SystemParams};
use crate::secondq::{apply_excitation, ladder, ExcitationOp, StateVector};
use crate::basis::OccupationState;

/// Largest sector size covered by the full-space oracle in `validate`.
pub const VALIDATED_MAX_N: usize = 4;

const NORM_TOLERANCE: f64 = 1e-8;
const PSD_ERROR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OneParticleRDM {
    pub sector: Sector,
    /// `D[i][j] = <c†_i c_j>`.
    pub matrix: DMatrix<f64>,
}

impl OneParticleRDM {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigenvalue_range(&self) -> (f64, f64) {
        spectrum_range(&self.matrix)
    }
}

#[derive(Debug, Clone)]
pub struct ParticleHoleRDM {
    pub sector: Sector,
    /// Number of sector modes; the matrix is `r² x r²`.
    pub r: usize,
    pub matrix: DMatrix<f64>,
}

impl ParticleHoleRDM {
    /// Flattened index of the pair `(i, j)`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        i * self.r + j
    }
}

fn spectrum_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

/// Sector view of a composite state: the sector density matrix over the
/// restricted configurations plus the full sector Fock space for
/// intermediate states.
struct SectorReduction<'a> {
    restricted: &'a SectorBasis,
    full: std::borrow::Cow<'a, SectorBasis>,
    /// restricted rank -> full rank
    embed: Vec<u32>,
    rho: DMatrix<f64>,
    statistics: crate::secondq::Statistics,
}

fn check_norm(psi: &StateVector) -> Result<()> {
    let norm_sq = psi.dot(psi);
    if !psi.is_finite() || (norm_sq - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Normalization {
            norm_sq,
            tolerance: NORM_TOLERANCE,
        });
    }
    Ok(())
}

impl<'a> SectorReduction<'a> {
    fn new(basis: &'a CompositeBasis, psi: &StateVector, sector: Sector) -> Result<Self> {
        if psi.len() != basis.dimension() {
            return Err(Error::param(format!(
                "state of length {} does not match basis dimension {}",
                psi.len(),
                basis.dimension()
            )));
        }
        check_norm(psi)?;
        let restricted = basis.sector(sector);
        let full = match restricted.restriction() {
            Restriction::Full => std::borrow::Cow::Borrowed(restricted),
            Restriction::Column => std::borrow::Cow::Owned(enumerate_sector(
                restricted.n_modes(),
                restricted.n_particles(),
                Restriction::Full,
            )?),
        };
        let embed = restricted
            .states()
            .iter()
            .map(|&s| full.rank(s).expect("restricted state missing from full sector") as u32)
            .collect();
        let psi_m = DMatrix::from_row_slice(basis.fermion.len(), basis.boson.len(), &psi.amplitudes);
        let rho = match sector {
            Sector::Fermion => &psi_m * psi_m.transpose(),
            Sector::Boson => psi_m.transpose() * &psi_m,
        };
        Ok(SectorReduction {
            restricted,
            full,
            embed,
            rho,
            statistics: sector.statistics(),
        })
    }

    fn r(&self) -> usize {
        self.restricted.n_modes()
    }

    fn one_particle(&self) -> DMatrix<f64> {
        let r = self.r();
        let mut d = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                let mut acc = 0.0;
                for (s2, &bits) in self.restricted.states().iter().enumerate() {
                    let (t, sign) = apply_excitation(ExcitationOp::new(i, j, self.statistics), OccupationState(bits));
                    if sign == 0 {
                        continue;
                    }
                    if let Some(s1) = self.restricted.rank(t.0) {
                        acc += f64::from(sign) * self.rho[(s1, s2)];
                    }
                }
                d[(i, j)] = acc;
            }
        }
        d
    }

    /// Sparse form of `(c†_l c_k - D_lk) psi` as sorted
    /// `(full target, restricted source, coefficient)` entries.
    fn centered_vector(&self, l: usize, k: usize, d_lk: f64) -> Vec<(u32, u32, f64)> {
        let mut entries = Vec::with_capacity(2 * self.restricted.len());
        for (s, &bits) in self.restricted.states().iter().enumerate() {
            let (t, sign) = apply_excitation(ExcitationOp::new(l, k, self.statistics), OccupationState(bits));
            if sign != 0 {
                let target = self.full.rank(t.0).expect("number-conserving excitation") as u32;
                entries.push((target, s as u32, f64::from(sign)));
            }
            if d_lk != 0.0 {
                entries.push((self.embed[s], s as u32, -d_lk));
            }
        }
        entries.sort_unstable_by_key(|&(t, s, _)| (t, s));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        merged
    }

    /// `<phi_a | phi_b>` through the sector density matrix.
    fn gram(&self, a: &[(u32, u32, f64)], b: &[(u32, u32, f64)]) -> f64 {
        let (mut ia, mut ib) = (0, 0);
        let mut acc = 0.0;
        while ia < a.len() && ib < b.len() {
            let (ta, tb) = (a[ia].0, b[ib].0);
            if ta < tb {
                ia += 1;
            } else if tb < ta {
                ib += 1;
            } else {
                let ea = a[ia..].iter().take_while(|e| e.0 == ta).count();
                let eb = b[ib..].iter().take_while(|e| e.0 == tb).count();
                for &(_, s1, c1) in &a[ia..ia + ea] {
                    for &(_, s2, c2) in &b[ib..ib + eb] {
                        acc += c1 * c2 * self.rho[(s1 as usize, s2 as usize)];
                    }
                }
                ia += ea;
                ib += eb;
            }
        }
        acc
    }

    fn particle_hole(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.r();
        let phis: Vec<Vec<(u32, u32, f64)>> = (0..r * r)
            .map(|x| self.centered_vector(x / r, x % r, d[(x / r, x % r)]))
            .collect();
        let mut g = DMatrix::zeros(r * r, r * r);
        for x in 0..r * r {
            for y in x..r * r {
                let v = self.gram(&phis[x], &phis[y]);
                g[(x, y)] = v;
                g[(y, x)] = v;
            }
        }
        g
    }
}

/// `D[i][j] = <psi| c†_i c_j |psi>` for one sector; the other sector is
/// traced out.
pub fn one_particle_rdm(basis: &CompositeBasis, psi: &StateVector, sector: Sector) -> Result<OneParticleRDM> {
    let red = SectorReduction::new(basis, psi, sector)?;
    Ok(OneParticleRDM {
        sector,
        matrix: red.one_particle(),
    })
}

/// Centered particle-hole RDM of one sector.
pub fn particle_hole_rdm(
    basis: &CompositeBasis,
    psi: &StateVector,
    sector: Sector,
    d: &OneParticleRDM,
) -> Result<ParticleHoleRDM> {
    let red = SectorReduction::new(basis, psi, sector)?;
    let r = red.r();
    if d.sector != sector || d.matrix.nrows() != r {
        return Err(Error::param("one-particle RDM does not belong to this sector"));
    }
    Ok(ParticleHoleRDM {
        sector,
        r,
        matrix: red.particle_hole(&d.matrix),
    })
}

/// Apply `ops` (right to left) to the sector part of every composite
/// configuration and return `<psi| ops |psi>`.
fn brute_expectation(basis: &CompositeBasis, psi: &StateVector, sector: Sector, ops: &[(usize, bool)]) -> f64 {
    let stats = sector.statistics();
    let mut acc = 0.0;
    for (idx, &amp) in psi.amplitudes.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let (f, b) = basis.bits(idx);
        let mut bits = match sector {
            Sector::Fermion => f,
            Sector::Boson => b,
        };
        let mut negative = false;
        let mut alive = true;
        for &(mode, create) in ops.iter().rev() {
            match ladder(bits, mode, create, stats) {
                Some((next, neg)) => {
                    bits = next;
                    negative ^= neg;
                }
                None => {
                    alive = false;
                    break;
                }
            }
        }
        if !alive {
            continue;
        }
        let target = match sector {
            Sector::Fermion => basis.rank(bits, b),
            Sector::Boson => basis.rank(f, bits),
        };
        if let Some(t) = target {
            acc += psi.amplitudes[t] * amp * if negative { -1.0 } else { 1.0 };
        }
    }
    acc
}

/// Oracle construction: the uncentered matrix `<c†_j c_i c†_l c_k>` evaluated
/// by direct operator application on the composite vector, with `D ⊗ D`
/// subtracted afterwards. Quadratic in the basis size per element; meant for
/// small systems.
pub fn particle_hole_rdm_subtract_after(
    basis: &CompositeBasis,
    psi: &StateVector,
    sector: Sector,
) -> Result<ParticleHoleRDM> {
    check_norm(psi)?;
    let r = basis.sector(sector).n_modes();
    let d = DMatrix::from_fn(r, r, |i, j| brute_expectation(basis, psi, sector, &[(i, true), (j, false)]));
    let mut g = DMatrix::zeros(r * r, r * r);
    for i in 0..r {
        for j in 0..r {
            for l in 0..r {
                for k in 0..r {
                    let u = brute_expectation(
                        basis,
                        psi,
                        sector,
                        &[(j, true), (i, false), (l, true), (k, false)],
                    );
                    g[(i * r + j, l * r + k)] = u - d[(j, i)] * d[(l, k)];
                }
            }
        }
    }
    Ok(ParticleHoleRDM { sector, r, matrix: g })
}

/// `lambda_G`: the largest eigenvalue of a particle-hole RDM.
pub fn largest_eigenvalue(g: &ParticleHoleRDM) -> Result<f64> {
    let (min, max) = spectrum_range(&g.matrix);
    if min < -PSD_ERROR_TOLERANCE {
        return Err(Error::Integrity(format!(
            "{} particle-hole RDM has eigenvalue {min:e} < 0",
            g.sector.label()
        )));
    }
    Ok(max.max(0.0))
}

/// Upper bound `N (r - N) / r` on `lambda_G`.
pub fn theoretical_bound(n: usize, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::param("the bound needs at least one mode"));
    }
    if n > r {
        return Err(Error::param(format!("{n} particles exceed {r} modes")));
    }
    Ok((n * (r - n)) as f64 / r as f64)
}

/// Witness data and integrity diagnostics for one sector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorWitness {
    pub sector: Sector,
    pub particles: usize,
    pub modes: usize,
    pub lambda_g: f64,
    pub bound: f64,
    pub trace_d: f64,
    pub d_min_eigenvalue: f64,
    pub d_max_eigenvalue: f64,
    pub g_min_eigenvalue: f64,
}

impl SectorWitness {
    fn empty(sector: Sector) -> Self {
        SectorWitness {
            sector,
            particles: 0,
            modes: 0,
            lambda_g: 0.0,
            bound: 0.0,
            trace_d: 0.0,
            d_min_eigenvalue: 0.0,
            d_max_eigenvalue: 0.0,
            g_min_eigenvalue: 0.0,
        }
    }

    /// `lambda_G` exceeds the uncorrelated (product-state) value of 1.
    pub fn above_baseline(&self) -> bool {
        self.lambda_g > 1.0 + 1e-6
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub path: SolverPath,
    pub method: Method,
    pub dimension: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub parity: i8,
    /// A restricted path was used beyond the sizes checked by `validate`.
    pub unvalidated_fast_path: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessResult {
    pub params: SystemParams,
    pub energy: f64,
    pub fermion: SectorWitness,
    pub boson: SectorWitness,
    pub diagnostics: Diagnostics,
}

impl WitnessResult {
    pub fn lambda_g_f(&self) -> f64 {
        self.fermion.lambda_g
    }

    pub fn lambda_g_b(&self) -> f64 {
        self.boson.lambda_g
    }

    pub fn bound_f(&self) -> f64 {
        self.fermion.bound
    }

    pub fn bound_b(&self) -> f64 {
        self.boson.bound
    }

    pub fn sector(&self, sector: Sector) -> &SectorWitness {
        match sector {
            Sector::Fermion => &self.fermion,
            Sector::Boson => &self.boson,
        }
    }
}

/// Witness of one sector of an already-solved state, with integrity checks.
pub fn sector_witness(basis: &CompositeBasis, psi: &StateVector, sector: Sector) -> Result<SectorWitness> {
    let n = basis.sector(sector).n_particles();
    if n == 0 {
        return Ok(SectorWitness::empty(sector));
    }
    let red = SectorReduction::new(basis, psi, sector)?;
    let r = red.r();
    let d = red.one_particle();
    let g = ParticleHoleRDM {
        sector,
        r,
        matrix: red.particle_hole(&d),
    };
    let trace_d = d.trace();
    if (trace_d - n as f64).abs() > 1e-9 {
        return Err(Error::Integrity(format!(
            "{} one-particle RDM trace {trace_d} != {n}",
            sector.label()
        )));
    }
    let (d_min, d_max) = spectrum_range(&d);
    if d_min < -1e-9 || d_max > 1.0 + 1e-9 {
        return Err(Error::Integrity(format!(
            "{} one-particle RDM eigenvalues [{d_min}, {d_max}] outside [0, 1]",
            sector.label()
        )));
    }
    let (g_min, _) = spectrum_range(&g.matrix);
    let lambda_g = largest_eigenvalue(&g)?;
    let bound = theoretical_bound(n, r)?;
    if lambda_g > bound + 1e-6 {
        if n >= 3 {
            return Err(Error::Integrity(format!(
                "{} lambda_G = {lambda_g} exceeds the bound {bound}",
                sector.label()
            )));
        }
        info!(
            "{} lambda_G = {lambda_g:.6} exceeds N(r-N)/r = {bound} at N = {n}; the bound is not binding below N = 3",
            sector.label()
        );
    }
    Ok(SectorWitness {
        sector,
        particles: n,
        modes: r,
        lambda_g,
        bound,
        trace_d,
        d_min_eigenvalue: d_min,
        d_max_eigenvalue: d_max,
        g_min_eigenvalue: g_min,
    })
}

/// Solve for the ground state and evaluate both sector witnesses.
pub fn compute_witness(params: &SystemParams, opts: &SolveOptions) -> Result<WitnessResult> {
    let model = ModelInstance::new(*params)?;
    let (basis, ground) = solve_path(&model, opts)?;
    if !ground.vector.is_finite() {
        return Err(Error::Integrity("ground state has non-finite amplitudes".into()));
    }
    if !ground.converged {
        warn!(
            "ground state not converged: residual {:.3e} after {} iterations",
            ground.residual, ground.iterations
        );
    }
    let fermion = sector_witness(&basis, &ground.vector, Sector::Fermion)?;
    let boson = sector_witness(&basis, &ground.vector, Sector::Boson)?;
    Ok(WitnessResult {
        params: *params,
        energy: ground.energy,
        fermion,
        boson,
        diagnostics: Diagnostics {
            path: opts.path,
            method: ground.method,
            dimension: basis.dimension(),
            iterations: ground.iterations,
            residual: ground.residual,
            converged: ground.converged,
            parity: ground.parity,
            unvalidated_fast_path: opts.path != SolverPath::Full
                && params.n_f.max(params.n_b) > VALIDATED_MAX_N,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ModeLayout;

    fn product_state(n_f: usize, n_b: usize) -> (CompositeBasis, StateVector) {
        let basis = CompositeBasis::new(ModeLayout::new(n_f, n_b).unwrap(), Restriction::Column).unwrap();
        let mut v = vec![0.0; basis.dimension()];
        let lower = |n: usize| (1u64 << n) - 1;
        v[basis.rank(lower(n_f), lower(n_b)).unwrap()] = 1.0;
        (basis, StateVector::new(v))
    }

    #[test]
    fn filled_lower_level_rdm() {
        let (basis, psi) = product_state(6, 6);
        let d = one_particle_rdm(&basis, &psi, Sector::Fermion).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j && i < 6 { 1.0 } else { 0.0 };
                assert_eq!(d.matrix[(i, j)], expect);
            }
        }
        assert_eq!(d.trace(), 6.0);
    }

    #[test]
    fn product_state_particle_hole_structure() {
        let (basis, psi) = product_state(2, 2);
        for sector in [Sector::Fermion, Sector::Boson] {
            let d = one_particle_rdm(&basis, &psi, sector).unwrap();
            let g = particle_hole_rdm(&basis, &psi, sector, &d).unwrap();
            let n = |m: usize| if m < 2 { 1.0 } else { 0.0 };
            for i in 0..4 {
                for j in 0..4 {
                    for l in 0..4 {
                        for k in 0..4 {
                            let expect = if i == l && j == k { n(j) * (1.0 - n(i)) } else { 0.0 };
                            assert_eq!(g.matrix[(g.pair_index(i, j), g.pair_index(l, k))], expect);
                        }
                    }
                }
            }
            assert!((largest_eigenvalue(&g).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_witness() {
        let g = ParticleHoleRDM {
            sector: Sector::Fermion,
            r: 2,
            matrix: DMatrix::zeros(4, 4),
        };
        assert_eq!(largest_eigenvalue(&g).unwrap(), 0.0);
    }

    #[test]
    fn negative_matrix_is_integrity_error() {
        let g = ParticleHoleRDM {
            sector: Sector::Boson,
            r: 1,
            matrix: DMatrix::from_element(1, 1, -0.1),
        };
        assert!(matches!(largest_eigenvalue(&g), Err(Error::Integrity(_))));
    }

    #[test]
    fn bounds() {
        assert_eq!(theoretical_bound(6, 12).unwrap(), 3.0);
        assert_eq!(theoretical_bound(4, 8).unwrap(), 2.0);
        assert_eq!(theoretical_bound(5, 5).unwrap(), 0.0);
        assert!(matches!(theoretical_bound(7, 6), Err(Error::Parameter(_))));
    }

    #[test]
    fn unnormalized_state_rejected() {
        let (basis, mut psi) = product_state(2, 1);
        psi.amplitudes[0] += 0.5;
        assert!(matches!(
            one_particle_rdm(&basis, &psi, Sector::Fermion),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn centered_matches_subtract_after_on_correlated_state() {
        let p = SystemParams { n_f: 2, n_b: 2, eps_f: 1.0, eps_b: 0.6, v_f: -0.9, v_b: 0.5, mu: 0.4 };
        for path in [SolverPath::Full, SolverPath::Column] {
            let model = ModelInstance::new(p).unwrap();
            let opts = SolveOptions { path, ..Default::default() };
            let (basis, g) = solve_path(&model, &opts).unwrap();
            for sector in [Sector::Fermion, Sector::Boson] {
                let d = one_particle_rdm(&basis, &g.vector, sector).unwrap();
                let centered = particle_hole_rdm(&basis, &g.vector, sector, &d).unwrap();
                let oracle = particle_hole_rdm_subtract_after(&basis, &g.vector, sector).unwrap();
                let diff = (&centered.matrix - &oracle.matrix).amax();
                assert!(diff < 1e-12, "{path} {sector:?}: {diff}");
            }
        }
    }

    #[test]
    fn strong_pairing_n2_reaches_one() {
        let p = SystemParams { n_f: 2, n_b: 0, eps_f: 1.0, v_f: -50.0, ..Default::default() };
        let w = compute_witness(&p, &SolveOptions { path: SolverPath::Full, ..Default::default() }).unwrap();
        assert!((w.lambda_g_f() - 1.0).abs() < 1e-2);
        assert_eq!(w.boson.lambda_g, 0.0);
        // lower-level occupations equal by permutation symmetry
        let model = ModelInstance::new(p).unwrap();
        let (basis, g) = solve_path(&model, &SolveOptions::default()).unwrap();
        let d = one_particle_rdm(&basis, &g.vector, Sector::Fermion).unwrap();
        assert!((d.matrix[(0, 0)] - d.matrix[(1, 1)]).abs() < 1e-12);
        assert!((d.matrix[(2, 2)] - d.matrix[(3, 3)]).abs() < 1e-12);
    }
}
