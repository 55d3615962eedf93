//! Occupation-number bases for the two particle sectors.
//!
//! Every sector is a two-level system with `N` degenerate states per level,
//! i.e. `r = 2N` modes. Within a sector, local mode `m` is stored in bit `m`
//! of a `u64`; modes `0..N` form the lower level and `N..2N` the upper
//! level, so column `p` is the mode pair `(p, p + N)`.
//!
//! Global (1-based) mode numbering follows [`ModeLayout`]: fermions occupy
//! `1..=2n_f`, the lower bosonic level `2n_f+1..=2n_f+n_b` and the upper
//! bosonic level `2n_f+n_b+1..=2n_f+2n_b`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::secondq::{apply_excitation, ExcitationOp, Statistics};

/// Largest sector supported by the `u64` bit representation.
pub const MAX_SECTOR_MODES: usize = 64;

/// Sectors with at most this many modes use a dense rank lookup table.
const RANK_TABLE_MAX_MODES: usize = 24;

/// Particle sector tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Fermion,
    Boson,
}

impl Sector {
    pub fn statistics(self) -> Statistics {
        match self {
            Sector::Fermion => Statistics::Fermion,
            Sector::Boson => Statistics::HardcoreBoson,
        }
    }

    pub fn other(self) -> Sector {
        match self {
            Sector::Fermion => Sector::Boson,
            Sector::Boson => Sector::Fermion,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sector::Fermion => "fermion",
            Sector::Boson => "boson",
        }
    }
}

/// Mode bookkeeping for a composite system of `n_f` fermions and `n_b`
/// hard-core bosons, each in a two-level sector with `2N` modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeLayout {
    pub n_f: usize,
    pub n_b: usize,
}

impl ModeLayout {
    pub fn new(n_f: usize, n_b: usize) -> Result<Self> {
        if n_f == 0 && n_b == 0 {
            return Err(Error::param("at least one sector must contain particles"));
        }
        if 2 * n_f > MAX_SECTOR_MODES || 2 * n_b > MAX_SECTOR_MODES {
            return Err(Error::param(format!(
                "sector sizes ({n_f}, {n_b}) exceed the {MAX_SECTOR_MODES}-mode limit"
            )));
        }
        Ok(ModeLayout { n_f, n_b })
    }

    pub fn particles(&self, sector: Sector) -> usize {
        match sector {
            Sector::Fermion => self.n_f,
            Sector::Boson => self.n_b,
        }
    }

    /// Number of modes `r` in a sector.
    pub fn modes(&self, sector: Sector) -> usize {
        2 * self.particles(sector)
    }

    pub fn total_modes(&self) -> usize {
        2 * (self.n_f + self.n_b)
    }

    /// Map a 1-based global mode index to its sector and local (0-based) mode.
    pub fn locate(&self, global: usize) -> Result<(Sector, usize)> {
        let nf_modes = 2 * self.n_f;
        match global {
            0 => Err(Error::param("mode indices are 1-based")),
            g if g <= nf_modes => Ok((Sector::Fermion, g - 1)),
            g if g <= self.total_modes() => Ok((Sector::Boson, g - 1 - nf_modes)),
            g => Err(Error::param(format!(
                "mode {g} outside layout with {} modes",
                self.total_modes()
            ))),
        }
    }

    /// Inverse of [`ModeLayout::locate`].
    pub fn global(&self, sector: Sector, local: usize) -> usize {
        match sector {
            Sector::Fermion => local + 1,
            Sector::Boson => 2 * self.n_f + local + 1,
        }
    }
}

/// Which occupation strings a sector basis keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    /// All `C(r, N)` strings with `N` particles.
    Full,
    /// Exactly one particle in every column `(p, p + N)`; `2^N` strings.
    Column,
}

/// A single Fock-space configuration within one sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationState(pub u64);

impl OccupationState {
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn population(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_occupied(self, mode: usize) -> bool {
        (self.0 >> mode) & 1 == 1
    }

    /// Build from a list of occupied local modes.
    pub fn from_modes(modes: &[usize]) -> Self {
        OccupationState(modes.iter().fold(0u64, |acc, &m| acc | (1u64 << m)))
    }

    pub fn occupied_modes(self) -> Vec<usize> {
        (0..64).filter(|&m| self.is_occupied(m)).collect()
    }
}

#[derive(Debug, Clone)]
enum RankIndex {
    Table(Vec<u32>),
    Map(HashMap<u64, u32>),
}

const NO_RANK: u32 = u32::MAX;

/// Ordered occupation basis of one sector with a rank/unrank bijection.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n_modes: usize,
    n_particles: usize,
    restriction: Restriction,
    states: Vec<u64>,
    index: RankIndex,
}

impl SectorBasis {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, rank: usize) -> OccupationState {
        OccupationState(self.states[rank])
    }

    /// Dense index of `bits`, or `None` if the string is not in this basis.
    #[inline]
    pub fn rank(&self, bits: u64) -> Option<usize> {
        match &self.index {
            RankIndex::Table(table) => {
                let r = *table.get(bits as usize)?;
                (r != NO_RANK).then_some(r as usize)
            }
            RankIndex::Map(map) => map.get(&bits).map(|&r| r as usize),
        }
    }

    /// Number of excited columns (upper-level occupancy) of a state.
    pub fn excitations(&self, bits: u64) -> usize {
        let half = self.n_modes / 2;
        (bits >> half).count_ones() as usize
    }
}

/// Enumerate a sector basis in increasing (lexicographic) bit-string order.
pub fn enumerate_sector(
    n_modes: usize,
    n_particles: usize,
    restriction: Restriction,
) -> Result<SectorBasis> {
    if n_particles > n_modes {
        return Err(Error::param(format!(
            "{n_particles} particles do not fit in {n_modes} modes"
        )));
    }
    if n_modes > MAX_SECTOR_MODES {
        return Err(Error::param(format!(
            "{n_modes} modes exceed the {MAX_SECTOR_MODES}-mode limit"
        )));
    }
    let mut states = match restriction {
        Restriction::Full => combinations(n_modes, n_particles),
        Restriction::Column => {
            if n_modes != 2 * n_particles {
                return Err(Error::param(format!(
                    "column restriction needs n_modes = 2 n_particles, got {n_modes} modes and {n_particles} particles"
                )));
            }
            if n_particles >= 32 {
                return Err(Error::param("column basis too large to enumerate"));
            }
            (0u64..1 << n_particles)
                .map(|excited| {
                    (0..n_particles).fold(0u64, |acc, p| {
                        if (excited >> p) & 1 == 1 {
                            acc | 1 << (p + n_particles)
                        } else {
                            acc | 1 << p
                        }
                    })
                })
                .collect()
        }
    };
    states.sort_unstable();
    if states.len() >= NO_RANK as usize {
        return Err(Error::Resource(format!(
            "sector basis with {} states exceeds the index range",
            states.len()
        )));
    }

    let index = if n_modes <= RANK_TABLE_MAX_MODES {
        let mut table = vec![NO_RANK; 1usize << n_modes];
        for (k, &s) in states.iter().enumerate() {
            table[s as usize] = k as u32;
        }
        RankIndex::Table(table)
    } else {
        RankIndex::Map(
            states
                .iter()
                .enumerate()
                .map(|(k, &s)| (s, k as u32))
                .collect(),
        )
    };

    Ok(SectorBasis {
        n_modes,
        n_particles,
        restriction,
        states,
        index,
    })
}

/// All `n_modes`-bit strings with `k` set bits, increasing (Gosper's hack).
fn combinations(n_modes: usize, k: usize) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    let limit: u128 = 1u128 << n_modes;
    let mut out = Vec::new();
    let mut s: u64 = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    loop {
        out.push(s);
        let c = s & s.wrapping_neg();
        let r = s.wrapping_add(c);
        if r == 0 {
            break;
        }
        let next = (((r ^ s) >> 2) / c) | r;
        if (next as u128) >= limit {
            break;
        }
        s = next;
    }
    out
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Product basis of a fermion and a boson sector.
///
/// Composite index = `fermion_rank * |boson| + boson_rank`.
#[derive(Debug, Clone)]
pub struct CompositeBasis {
    pub fermion: SectorBasis,
    pub boson: SectorBasis,
}

impl CompositeBasis {
    pub fn new(layout: ModeLayout, restriction: Restriction) -> Result<Self> {
        let fermion = enumerate_sector(2 * layout.n_f, layout.n_f, restriction)?;
        let boson = enumerate_sector(2 * layout.n_b, layout.n_b, restriction)?;
        Ok(CompositeBasis { fermion, boson })
    }

    pub fn sector(&self, sector: Sector) -> &SectorBasis {
        match sector {
            Sector::Fermion => &self.fermion,
            Sector::Boson => &self.boson,
        }
    }

    pub fn restriction(&self) -> Restriction {
        self.fermion.restriction()
    }

    pub fn dimension(&self) -> usize {
        self.fermion.len() * self.boson.len()
    }

    #[inline]
    pub fn index(&self, fermion_rank: usize, boson_rank: usize) -> usize {
        fermion_rank * self.boson.len() + boson_rank
    }

    #[inline]
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.boson.len(), index % self.boson.len())
    }

    /// Bit strings `(fermion, boson)` of a composite basis state.
    #[inline]
    pub fn bits(&self, index: usize) -> (u64, u64) {
        let (f, b) = self.split(index);
        (self.fermion.states[f], self.boson.states[b])
    }

    /// Composite index of a pair of bit strings, if both are in the basis.
    #[inline]
    pub fn rank(&self, fermion_bits: u64, boson_bits: u64) -> Option<usize> {
        Some(self.index(
            self.fermion.rank(fermion_bits)?,
            self.boson.rank(boson_bits)?,
        ))
    }

    /// Upper-level occupancy parity `(-1)^(k_f + k_b)` of a composite state.
    ///
    /// Every Hamiltonian term conserves this quantity.
    pub fn parity(&self, index: usize) -> i8 {
        let (f, b) = self.bits(index);
        let k = self.fermion.excitations(f) + self.boson.excitations(b);
        if k % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Sign of the column state `bits` relative to `prod_p J+_p |all lower>`,
/// where `J+_p = c†_{p+N} c_p` runs over the excited columns.
///
/// Always `+1` for hard-core bosons; fermions pick up Jordan-Wigner signs.
pub fn collective_sign(bits: u64, n: usize, statistics: Statistics) -> f64 {
    if statistics == Statistics::HardcoreBoson {
        return 1.0;
    }
    let mut state = if n == 0 { 0 } else { (1u64 << n) - 1 };
    let mut sign = 1.0;
    for p in 0..n {
        if (bits >> (p + n)) & 1 == 1 {
            let op = ExcitationOp::new(p + n, p, statistics);
            let (next, s) = apply_excitation(op, OccupationState(state));
            debug_assert!(s != 0);
            state = next.0;
            sign *= f64::from(s);
        }
    }
    sign
}

/// Spread collective (Dicke) weights `w_k` over a column-restricted sector.
///
/// Column state with `k` excited columns receives `w_k / sqrt(C(N, k))`,
/// multiplied by the fermionic ordering sign for fermion sectors.
pub fn dicke_expand(
    weights: &[f64],
    sector: &SectorBasis,
    statistics: Statistics,
) -> Result<Vec<f64>> {
    if sector.restriction() != Restriction::Column {
        return Err(Error::param("dicke_expand requires a column-restricted sector"));
    }
    let n = sector.n_particles();
    if weights.len() != n + 1 {
        return Err(Error::param(format!(
            "expected {} collective weights, got {}",
            n + 1,
            weights.len()
        )));
    }
    let norm_sq: f64 = weights.iter().map(|w| w * w).sum();
    if (norm_sq - 1.0).abs() > 1e-10 {
        return Err(Error::Normalization {
            norm_sq,
            tolerance: 1e-10,
        });
    }
    Ok(sector
        .states()
        .iter()
        .map(|&bits| {
            let k = sector.excitations(bits);
            weights[k] / binomial(n, k).sqrt() * collective_sign(bits, n, statistics)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sector_sizes() {
        assert_eq!(enumerate_sector(4, 2, Restriction::Full).unwrap().len(), 6);
        assert_eq!(enumerate_sector(12, 6, Restriction::Full).unwrap().len(), 924);
        assert_eq!(enumerate_sector(12, 6, Restriction::Column).unwrap().len(), 64);
        assert_eq!(enumerate_sector(0, 0, Restriction::Column).unwrap().len(), 1);
        assert_eq!(enumerate_sector(5, 0, Restriction::Full).unwrap().len(), 1);
        assert_eq!(enumerate_sector(5, 5, Restriction::Full).unwrap().len(), 1);
    }

    #[test]
    fn ordering_is_lexicographic() {
        let b = enumerate_sector(4, 2, Restriction::Full).unwrap();
        assert_eq!(b.states(), &[0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        let c = enumerate_sector(4, 2, Restriction::Column).unwrap();
        assert_eq!(c.states(), &[0b0011, 0b0110, 0b1001, 0b1100]);
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(matches!(
            enumerate_sector(3, 4, Restriction::Full),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            enumerate_sector(6, 2, Restriction::Column),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn hashed_rank_for_large_sectors() {
        let b = enumerate_sector(26, 13, Restriction::Column).unwrap();
        assert_eq!(b.len(), 1 << 13);
        for k in [0, 17, 4000, 8191] {
            assert_eq!(b.rank(b.states()[k]), Some(k));
        }
        assert_eq!(b.rank(0), None);
    }

    #[test]
    fn layout_index_ranges() {
        let layout = ModeLayout::new(3, 3).unwrap();
        assert_eq!(layout.locate(1).unwrap(), (Sector::Fermion, 0));
        assert_eq!(layout.locate(6).unwrap(), (Sector::Fermion, 5));
        // lower bosonic level 2N+1..3N, upper 3N+1..4N
        assert_eq!(layout.locate(7).unwrap(), (Sector::Boson, 0));
        assert_eq!(layout.locate(10).unwrap(), (Sector::Boson, 3));
        assert_eq!(layout.locate(12).unwrap(), (Sector::Boson, 5));
        assert!(layout.locate(13).is_err());
        assert!(layout.locate(0).is_err());
        for g in 1..=12 {
            let (s, l) = layout.locate(g).unwrap();
            assert_eq!(layout.global(s, l), g);
        }
    }

    #[test]
    fn composite_index_round_trip() {
        let basis = CompositeBasis::new(ModeLayout::new(2, 3).unwrap(), Restriction::Full).unwrap();
        assert_eq!(basis.dimension(), 6 * 20);
        for idx in 0..basis.dimension() {
            let (f, b) = basis.split(idx);
            assert_eq!(basis.index(f, b), idx);
            let (fb, bb) = basis.bits(idx);
            assert_eq!(basis.rank(fb, bb), Some(idx));
        }
    }

    #[test]
    fn dicke_single_component() {
        let sector = enumerate_sector(12, 6, Restriction::Column).unwrap();
        let mut w = vec![0.0; 7];
        w[0] = 1.0;
        let amps = dicke_expand(&w, &sector, Statistics::Fermion).unwrap();
        let lower = sector.rank(0b111111).unwrap();
        for (k, a) in amps.iter().enumerate() {
            assert_eq!(*a, if k == lower { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn dicke_single_excitation() {
        let sector = enumerate_sector(4, 2, Restriction::Column).unwrap();
        let amps = dicke_expand(&[0.0, 1.0, 0.0], &sector, Statistics::HardcoreBoson).unwrap();
        let h = 1.0 / 2f64.sqrt();
        // states: 0011 (k=0), 0110 (k=1), 1001 (k=1), 1100 (k=2)
        assert_eq!(amps, vec![0.0, h, h, 0.0]);
    }

    #[test]
    fn dicke_rejects_bad_input() {
        let sector = enumerate_sector(4, 2, Restriction::Column).unwrap();
        assert!(matches!(
            dicke_expand(&[1.0, 1.0, 0.0], &sector, Statistics::Fermion),
            Err(Error::Normalization { .. })
        ));
        let full = enumerate_sector(4, 2, Restriction::Full).unwrap();
        assert!(dicke_expand(&[1.0, 0.0, 0.0], &full, Statistics::Fermion).is_err());
    }

    fn arb_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n + 1)
            .prop_filter("nonzero", |w| w.iter().any(|x| x.abs() > 1e-3))
            .prop_map(|w| {
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                w.into_iter().map(|x| x / norm).collect()
            })
    }

    proptest! {
        #[test]
        fn rank_unrank_bijection(n in 0usize..6, full in any::<bool>()) {
            let restriction = if full { Restriction::Full } else { Restriction::Column };
            let b = enumerate_sector(2 * n, n, restriction).unwrap();
            for (k, &s) in b.states().iter().enumerate() {
                prop_assert_eq!(b.rank(s), Some(k));
                prop_assert_eq!(s.count_ones() as usize, n);
            }
        }

        #[test]
        fn column_states_are_full_states(n in 0usize..6) {
            let full = enumerate_sector(2 * n, n, Restriction::Full).unwrap();
            let col = enumerate_sector(2 * n, n, Restriction::Column).unwrap();
            for &s in col.states() {
                prop_assert!(full.rank(s).is_some());
            }
        }

        #[test]
        fn dicke_output_normalized(w in arb_weights(3), fermion in any::<bool>()) {
            let sector = enumerate_sector(6, 3, Restriction::Column).unwrap();
            let stats = if fermion { Statistics::Fermion } else { Statistics::HardcoreBoson };
            let amps = dicke_expand(&w, &sector, stats).unwrap();
            let norm: f64 = amps.iter().map(|a| a * a).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn dicke_permutation_symmetric(w in arb_weights(4), p in 0usize..4, q in 0usize..4) {
            let n = 4;
            let sector = enumerate_sector(2 * n, n, Restriction::Column).unwrap();
            let amps = dicke_expand(&w, &sector, Statistics::HardcoreBoson).unwrap();
            let famps = dicke_expand(&w, &sector, Statistics::Fermion).unwrap();
            let swap = |bits: u64| {
                let col = |c: usize| ((bits >> c) & 1, (bits >> (c + n)) & 1);
                let (pl, pu) = col(p);
                let (ql, qu) = col(q);
                let mask = !(1u64 << p | 1 << (p + n) | 1 << q | 1 << (q + n));
                (bits & mask) | ql << p | qu << (p + n) | pl << q | pu << (q + n)
            };
            for (k, &s) in sector.states().iter().enumerate() {
                let j = sector.rank(swap(s)).unwrap();
                prop_assert_eq!(amps[k], amps[j]);
                // fermion amplitudes agree up to the ordering sign
                prop_assert!((famps[k].abs() - famps[j].abs()).abs() < 1e-15);
            }
        }
    }
}
