//! Second-quantized operators acting on occupation bit strings.
//!
//! Fermionic ladder operators carry the Jordan-Wigner sign
//! `(-1)^(occupied modes strictly below the target)`; hard-core bosonic
//! ladder operators carry no sign. Operators from different sectors commute
//! (every term holds an even number of fermionic factors), so a composite
//! state is handled as a pair of independent sector bit strings.

use rayon::prelude::*;

use crate::basis::{CompositeBasis, OccupationState, Sector};
use crate::error::{Error, Result};

/// Commutation behaviour of a sector's ladder operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistics {
    Fermion,
    HardcoreBoson,
}

/// Particle-hole excitation `c†_create c_annihilate` on local sector modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExcitationOp {
    pub create: usize,
    pub annihilate: usize,
    pub statistics: Statistics,
}

impl ExcitationOp {
    pub fn new(create: usize, annihilate: usize, statistics: Statistics) -> Self {
        ExcitationOp {
            create,
            annihilate,
            statistics,
        }
    }
}

#[inline]
fn below_parity(bits: u64, mode: usize) -> bool {
    (bits & ((1u64 << mode) - 1)).count_ones() & 1 == 1
}

/// Create (`create = true`) or annihilate a particle in `mode`.
///
/// Returns the new bits and whether the sign is negative, or `None` when the
/// state is annihilated.
#[inline]
pub fn ladder(bits: u64, mode: usize, create: bool, statistics: Statistics) -> Option<(u64, bool)> {
    let mask = 1u64 << mode;
    let occupied = bits & mask != 0;
    if occupied == create {
        return None;
    }
    let negative = statistics == Statistics::Fermion && below_parity(bits, mode);
    Some((bits ^ mask, negative))
}

/// Apply `c†_create c_annihilate` to a sector configuration.
///
/// Returns the resulting configuration and a sign in `{+1, -1}`, or sign `0`
/// (with the input state echoed back) when the action vanishes.
pub fn apply_excitation(op: ExcitationOp, state: OccupationState) -> (OccupationState, i8) {
    let Some((mid, n1)) = ladder(state.0, op.annihilate, false, op.statistics) else {
        return (state, 0);
    };
    let Some((out, n2)) = ladder(mid, op.create, true, op.statistics) else {
        return (state, 0);
    };
    (OccupationState(out), if n1 ^ n2 { -1 } else { 1 })
}

/// One creation or annihilation operator in a Hamiltonian term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderOp {
    pub sector: Sector,
    /// Local (0-based) mode within the sector.
    pub mode: usize,
    pub create: bool,
}

impl LadderOp {
    pub fn create(sector: Sector, mode: usize) -> Self {
        LadderOp {
            sector,
            mode,
            create: true,
        }
    }

    pub fn annihilate(sector: Sector, mode: usize) -> Self {
        LadderOp {
            sector,
            mode,
            create: false,
        }
    }

    pub fn dagger(self) -> Self {
        LadderOp {
            create: !self.create,
            ..self
        }
    }
}

/// `coefficient * F_1 F_2 ... F_m`; factors act on kets right to left.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub coefficient: f64,
    pub factors: Vec<LadderOp>,
}

impl HamiltonianTerm {
    pub fn new(coefficient: f64, factors: Vec<LadderOp>) -> Self {
        HamiltonianTerm {
            coefficient,
            factors,
        }
    }

    /// `coefficient * c†_mode c_mode`.
    pub fn number(sector: Sector, mode: usize, coefficient: f64) -> Self {
        Self::excitation(sector, mode, mode, coefficient)
    }

    /// `coefficient * c†_create c_annihilate`.
    pub fn excitation(sector: Sector, create: usize, annihilate: usize, coefficient: f64) -> Self {
        HamiltonianTerm::new(
            coefficient,
            vec![
                LadderOp::create(sector, create),
                LadderOp::annihilate(sector, annihilate),
            ],
        )
    }

    /// Hermitian conjugate (real coefficient).
    pub fn adjoint(&self) -> Self {
        HamiltonianTerm {
            coefficient: self.coefficient,
            factors: self.factors.iter().rev().map(|f| f.dagger()).collect(),
        }
    }

    pub fn fermion_factor_count(&self) -> usize {
        self.factors
            .iter()
            .filter(|f| f.sector == Sector::Fermion)
            .count()
    }

    /// True if the term maps every configuration onto itself (or zero).
    pub fn is_diagonal(&self) -> bool {
        [Sector::Fermion, Sector::Boson].iter().all(|&s| {
            let mut created: Vec<usize> = Vec::new();
            let mut removed: Vec<usize> = Vec::new();
            for f in self.factors.iter().filter(|f| f.sector == s) {
                if f.create {
                    created.push(f.mode);
                } else {
                    removed.push(f.mode);
                }
            }
            created.sort_unstable();
            removed.sort_unstable();
            created == removed
        })
    }

    /// Apply the operator product (without coefficient) to a composite
    /// configuration. Returns `(fermion_bits, boson_bits, sign)`.
    #[inline]
    pub fn act(&self, fermion: u64, boson: u64) -> Option<(u64, u64, f64)> {
        act_sequence(self.factors.iter().rev().copied(), fermion, boson)
    }

    fn check(&self, basis: &CompositeBasis) -> Result<()> {
        for f in &self.factors {
            let modes = basis.sector(f.sector).n_modes();
            if f.mode >= modes {
                return Err(Error::param(format!(
                    "{} mode {} outside sector with {} modes",
                    f.sector.label(),
                    f.mode,
                    modes
                )));
            }
        }
        Ok(())
    }
}

/// Apply ladder operators in iteration order.
#[inline]
fn act_sequence(
    ops: impl Iterator<Item = LadderOp>,
    mut fermion: u64,
    mut boson: u64,
) -> Option<(u64, u64, f64)> {
    let mut negative = false;
    for op in ops {
        let (bits, stats) = match op.sector {
            Sector::Fermion => (&mut fermion, Statistics::Fermion),
            Sector::Boson => (&mut boson, Statistics::HardcoreBoson),
        };
        let (next, neg) = ladder(*bits, op.mode, op.create, stats)?;
        *bits = next;
        negative ^= neg;
    }
    Some((fermion, boson, if negative { -1.0 } else { 1.0 }))
}

/// Real amplitudes over a composite (or single-sector) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<f64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<f64>) -> Self {
        StateVector { amplitudes }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector {
            amplitudes: vec![0.0; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.amplitudes, &self.amplitudes).sqrt()
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        dot(&self.amplitudes, &other.amplitudes)
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(basis: &CompositeBasis, len: usize) -> Result<()> {
    if basis.dimension() != len {
        return Err(Error::param(format!(
            "vector of length {len} does not match basis dimension {}",
            basis.dimension()
        )));
    }
    Ok(())
}

/// Apply a single term to `psi`, scattering each input amplitude forward.
///
/// Contributions that leave the basis are dropped; Hamiltonian terms never
/// leave the column subspace.
pub fn apply_term(term: &HamiltonianTerm, basis: &CompositeBasis, psi: &StateVector) -> Result<StateVector> {
    term.check(basis)?;
    check_dim(basis, psi.len())?;
    let mut out = vec![0.0; psi.len()];
    for (idx, &amp) in psi.amplitudes.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let (f, b) = basis.bits(idx);
        if let Some((f2, b2, sign)) = term.act(f, b) {
            if let Some(target) = basis.rank(f2, b2) {
                out[target] += term.coefficient * sign * amp;
            }
        }
    }
    Ok(StateVector::new(out))
}

/// `H psi = sum_terms apply_term(term, psi)`, without materializing `H`.
pub fn matvec(terms: &[HamiltonianTerm], basis: &CompositeBasis, psi: &StateVector) -> Result<StateVector> {
    check_dim(basis, psi.len())?;
    let op = TermOperator::new(terms, basis)?;
    let mut out = vec![0.0; psi.len()];
    op.apply(&psi.amplitudes, &mut out);
    Ok(StateVector::new(out))
}

/// Matrix-free Hamiltonian action on a fixed basis.
///
/// Diagonal terms are folded into a precomputed diagonal. Off-diagonal terms
/// are evaluated by gathering: output amplitude `y[out]` receives
/// `c * <out|T|in> x[in]`, with `|in>` found by applying `T†` to `|out>`.
/// Each output entry is computed independently in a fixed term order, so the
/// result does not depend on how outputs are split across threads.
#[derive(Debug, Clone)]
pub struct TermOperator<'a> {
    basis: &'a CompositeBasis,
    diagonal: Vec<f64>,
    /// (coefficient, adjoint factors in application order)
    off_diagonal: Vec<(f64, Vec<LadderOp>)>,
    parallel: bool,
}

const PARALLEL_MIN_DIM: usize = 1 << 13;

impl<'a> TermOperator<'a> {
    pub fn new(terms: &[HamiltonianTerm], basis: &'a CompositeBasis) -> Result<Self> {
        let dim = basis.dimension();
        let mut diagonal = vec![0.0; dim];
        let mut off_diagonal = Vec::new();
        for term in terms {
            term.check(basis)?;
            if term.coefficient == 0.0 {
                continue;
            }
            if term.is_diagonal() {
                for (idx, d) in diagonal.iter_mut().enumerate() {
                    let (f, b) = basis.bits(idx);
                    if let Some((_, _, sign)) = term.act(f, b) {
                        *d += term.coefficient * sign;
                    }
                }
            } else {
                // T† applied right-to-left is F_1†, F_2†, ..., F_m† in order.
                let adjoint: Vec<LadderOp> = term.factors.iter().map(|f| f.dagger()).collect();
                off_diagonal.push((term.coefficient, adjoint));
            }
        }
        Ok(TermOperator {
            basis,
            diagonal,
            off_diagonal,
            parallel: false,
        })
    }

    /// Allow the action to fan out over the rayon pool for large bases.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn basis(&self) -> &CompositeBasis {
        self.basis
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    #[inline]
    fn row(&self, out: usize, x: &[f64]) -> f64 {
        let (f, b) = self.basis.bits(out);
        let mut acc = self.diagonal[out] * x[out];
        for (coef, ops) in &self.off_diagonal {
            if let Some((f2, b2, sign)) = act_sequence(ops.iter().copied(), f, b) {
                if let Some(src) = self.basis.rank(f2, b2) {
                    acc += coef * sign * x[src];
                }
            }
        }
        acc
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dimension());
        assert_eq!(y.len(), self.dimension());
        if self.parallel && y.len() >= PARALLEL_MIN_DIM {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(out, yo)| *yo = self.row(out, x));
        } else {
            for (out, yo) in y.iter_mut().enumerate() {
                *yo = self.row(out, x);
            }
        }
    }

    /// Compressed-row copy with entries stored in the same order `apply`
    /// sums them, so products agree bit for bit. `None` once more than
    /// `max_entries` entries would be needed.
    pub fn to_sparse(&self, max_entries: usize) -> Option<SparseOperator> {
        let dim = self.dimension();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for out in 0..dim {
            cols.push(out as u32);
            vals.push(self.diagonal[out]);
            let (f, b) = self.basis.bits(out);
            for (coef, ops) in &self.off_diagonal {
                if let Some((f2, b2, sign)) = act_sequence(ops.iter().copied(), f, b) {
                    if let Some(src) = self.basis.rank(f2, b2) {
                        cols.push(src as u32);
                        vals.push(coef * sign);
                    }
                }
            }
            if cols.len() > max_entries {
                return None;
            }
            row_ptr.push(cols.len());
        }
        Some(SparseOperator {
            row_ptr,
            cols,
            vals,
            parallel: self.parallel,
        })
    }

    /// Materialize the dense matrix restricted to `indices` (row-major).
    pub fn dense_block(&self, indices: &[usize]) -> Vec<f64> {
        let n = indices.len();
        let mut local = vec![usize::MAX; self.dimension()];
        for (k, &i) in indices.iter().enumerate() {
            local[i] = k;
        }
        let mut m = vec![0.0; n * n];
        for (row, &out) in indices.iter().enumerate() {
            m[row * n + row] += self.diagonal[out];
            let (f, b) = self.basis.bits(out);
            for (coef, ops) in &self.off_diagonal {
                if let Some((f2, b2, sign)) = act_sequence(ops.iter().copied(), f, b) {
                    if let Some(src) = self.basis.rank(f2, b2) {
                        let col = local[src];
                        if col != usize::MAX {
                            m[row * n + col] += coef * sign;
                        }
                    }
                }
            }
        }
        m
    }
}

/// Precomputed form of a [`TermOperator`].
#[derive(Debug, Clone)]
pub struct SparseOperator {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    parallel: bool,
}

impl SparseOperator {
    pub fn dimension(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn row(&self, out: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[out], self.row_ptr[out + 1]);
        let mut acc = self.vals[lo] * x[self.cols[lo] as usize];
        for k in lo + 1..hi {
            acc += self.vals[k] * x[self.cols[k] as usize];
        }
        acc
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dimension());
        assert_eq!(y.len(), self.dimension());
        if self.parallel && y.len() >= PARALLEL_MIN_DIM {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(out, yo)| *yo = self.row(out, x));
        } else {
            for (out, yo) in y.iter_mut().enumerate() {
                *yo = self.row(out, x);
            }
        }
    }
}
