//! Mixed fermion/hard-core-boson Lipkin-Meshkov-Glick Hamiltonian.
//!
//! `H = H_f + H_b + H_i` with
//!
//! ```text
//! H_f = eps_f/2 [sum_upper n - sum_lower n] + V_f/2 sum_{p!=q} (f†_p f†_q f_{q+N} f_{p+N} + h.c.)
//! H_b = same structure with hard-core bosons b
//! H_i = mu/2 sum_{p,q} (f†_{p+N} f_p b†_{q+2N} b_{q+3N} + h.c.)
//! ```
//!
//! Mode labels here are global and 1-based; the builders emit local sector
//! modes. The `p = q` pairing terms vanish for both statistics and are not
//! emitted.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{binomial, collective_sign, CompositeBasis, ModeLayout, Restriction, Sector};
use crate::error::{Error, Result};
use crate::secondq::{HamiltonianTerm, LadderOp};

/// All model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_f: usize,
    pub n_b: usize,
    pub eps_f: f64,
    pub eps_b: f64,
    pub v_f: f64,
    pub v_b: f64,
    pub mu: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            n_f: 2,
            n_b: 2,
            eps_f: 1.0,
            eps_b: 1.0,
            v_f: 0.0,
            v_b: 0.0,
            mu: 0.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        ModeLayout::new(self.n_f, self.n_b)?;
        for (name, value) in [
            ("eps_f", self.eps_f),
            ("eps_b", self.eps_b),
            ("v_f", self.v_f),
            ("v_b", self.v_b),
            ("mu", self.mu),
        ] {
            if !value.is_finite() {
                return Err(Error::param(format!("{name} must be finite, got {value}")));
            }
        }
        if self.mu != 0.0 && self.n_f != self.n_b {
            return Err(Error::param(format!(
                "mu != 0 couples equal sectors only, got n_f = {} and n_b = {}",
                self.n_f, self.n_b
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<ModeLayout> {
        ModeLayout::new(self.n_f, self.n_b)
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::VF => self.v_f,
            ParamName::VB => self.v_b,
            ParamName::Mu => self.mu,
            ParamName::EpsF => self.eps_f,
            ParamName::EpsB => self.eps_b,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::VF => self.v_f = value,
            ParamName::VB => self.v_b = value,
            ParamName::Mu => self.mu = value,
            ParamName::EpsF => self.eps_f = value,
            ParamName::EpsB => self.eps_b = value,
        }
    }

    /// Exchange the roles of the two sectors.
    pub fn swapped(&self) -> Self {
        SystemParams {
            n_f: self.n_b,
            n_b: self.n_f,
            eps_f: self.eps_b,
            eps_b: self.eps_f,
            v_f: self.v_b,
            v_b: self.v_f,
            mu: self.mu,
        }
    }
}

/// Continuous parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    VF,
    VB,
    Mu,
    EpsF,
    EpsB,
}

impl ParamName {
    pub const ALL: [ParamName; 5] = [
        ParamName::VF,
        ParamName::VB,
        ParamName::Mu,
        ParamName::EpsF,
        ParamName::EpsB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::VF => "v_f",
            ParamName::VB => "v_b",
            ParamName::Mu => "mu",
            ParamName::EpsF => "eps_f",
            ParamName::EpsB => "eps_b",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "v_f" | "vf" => Ok(ParamName::VF),
            "v_b" | "vb" => Ok(ParamName::VB),
            "mu" => Ok(ParamName::Mu),
            "eps_f" | "epsf" => Ok(ParamName::EpsF),
            "eps_b" | "epsb" => Ok(ParamName::EpsB),
            _ => Err(Error::param(format!(
                "unknown sweep parameter '{s}' (expected one of v_f, v_b, mu, eps_f, eps_b)"
            ))),
        }
    }
}

fn lmg_sector_terms(sector: Sector, n: usize, eps: f64, v: f64) -> Vec<HamiltonianTerm> {
    let mut terms = Vec::with_capacity(2 * n + 2 * n * n.saturating_sub(1));
    for i in 0..n {
        terms.push(HamiltonianTerm::number(sector, i, -eps / 2.0));
    }
    for i in n..2 * n {
        terms.push(HamiltonianTerm::number(sector, i, eps / 2.0));
    }
    if v != 0.0 {
        for p in 0..n {
            for q in (0..n).filter(|&q| q != p) {
                let lower = HamiltonianTerm::new(
                    v / 2.0,
                    vec![
                        LadderOp::create(sector, p),
                        LadderOp::create(sector, q),
                        LadderOp::annihilate(sector, q + n),
                        LadderOp::annihilate(sector, p + n),
                    ],
                );
                terms.push(lower.adjoint());
                terms.push(lower);
            }
        }
    }
    terms
}

/// Fermionic LMG terms: level energies `∓eps_f/2` and pair scattering `V_f`.
pub fn build_fermion_terms(params: &SystemParams) -> Vec<HamiltonianTerm> {
    lmg_sector_terms(Sector::Fermion, params.n_f, params.eps_f, params.v_f)
}

/// Hard-core bosonic LMG terms, same structure as the fermionic ones.
pub fn build_boson_terms(params: &SystemParams) -> Vec<HamiltonianTerm> {
    lmg_sector_terms(Sector::Boson, params.n_b, params.eps_b, params.v_b)
}

/// Cross-sector exchange: fermion excitation paired with boson de-excitation.
pub fn build_interaction_terms(params: &SystemParams) -> Result<Vec<HamiltonianTerm>> {
    if params.mu == 0.0 {
        return Ok(Vec::new());
    }
    if params.n_f != params.n_b {
        return Err(Error::param(format!(
            "interaction needs n_f = n_b, got {} and {}",
            params.n_f, params.n_b
        )));
    }
    let n = params.n_f;
    let mut terms = Vec::with_capacity(2 * n * n);
    for p in 0..n {
        for q in 0..n {
            let t = HamiltonianTerm::new(
                params.mu / 2.0,
                vec![
                    LadderOp::create(Sector::Fermion, p + n),
                    LadderOp::annihilate(Sector::Fermion, p),
                    LadderOp::create(Sector::Boson, q),
                    LadderOp::annihilate(Sector::Boson, q + n),
                ],
            );
            terms.push(t.adjoint());
            terms.push(t);
        }
    }
    Ok(terms)
}

/// A fully specified composite Hamiltonian.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub params: SystemParams,
    pub layout: ModeLayout,
    pub fermion_terms: Vec<HamiltonianTerm>,
    pub boson_terms: Vec<HamiltonianTerm>,
    pub interaction_terms: Vec<HamiltonianTerm>,
}

impl ModelInstance {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(ModelInstance {
            params,
            layout: params.layout()?,
            fermion_terms: build_fermion_terms(&params),
            boson_terms: build_boson_terms(&params),
            interaction_terms: build_interaction_terms(&params)?,
        })
    }

    /// All terms of `H_f + H_b + H_i`.
    pub fn terms(&self) -> Vec<HamiltonianTerm> {
        self.fermion_terms
            .iter()
            .chain(&self.boson_terms)
            .chain(&self.interaction_terms)
            .cloned()
            .collect()
    }

    pub fn basis(&self, restriction: Restriction) -> Result<CompositeBasis> {
        CompositeBasis::new(self.layout, restriction)
    }
}

/// `<k+1| J+ |k>` for spin `J = n/2` with `k` excited columns.
fn raise(n: usize, k: usize) -> f64 {
    (((k + 1) * (n - k)) as f64).sqrt()
}

fn collective_sector(n: usize, eps: f64, v: f64) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n + 1, n + 1);
    for k in 0..=n {
        h[(k, k)] = eps * (k as f64 - n as f64 / 2.0);
    }
    for k in 0..n.saturating_sub(1) {
        // <k+2| J+^2 |k>
        let m = v / 2.0 * raise(n, k) * raise(n, k + 1);
        h[(k + 2, k)] = m;
        h[(k, k + 2)] = m;
    }
    h
}

/// Dense Hamiltonian in the product Dicke basis `|k_f, k_b>`, where `k`
/// counts excited columns; index `k_f * (n_b + 1) + k_b`.
///
/// `H = eps_f J_z^f + V_f/2 (J+^f² + J-^f²) + (same for b)
///      + mu/2 (J+^f J-^b + J-^f J+^b)` with `J = N/2` per sector.
pub fn build_collective_hamiltonian(params: &SystemParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let (nf, nb) = (params.n_f, params.n_b);
    let hf = collective_sector(nf, params.eps_f, params.v_f);
    let hb = collective_sector(nb, params.eps_b, params.v_b);
    let db = nb + 1;
    let dim = (nf + 1) * db;
    let mut h = hf.kronecker(&DMatrix::identity(db, db)) + DMatrix::identity(nf + 1, nf + 1).kronecker(&hb);
    if params.mu != 0.0 {
        for kf in 0..nf {
            for kb in 1..=nb {
                // J+^f J-^b : |kf, kb> -> |kf+1, kb-1>
                let m = params.mu / 2.0 * raise(nf, kf) * raise(nb, kb - 1);
                let from = kf * db + kb;
                let to = (kf + 1) * db + kb - 1;
                h[(to, from)] += m;
                h[(from, to)] += m;
            }
        }
    }
    debug_assert_eq!(h.nrows(), dim);
    Ok(h)
}

/// Map collective amplitudes `c[k_f * (n_b+1) + k_b]` onto the
/// column-restricted composite basis.
pub fn expand_collective(coeffs: &[f64], basis: &CompositeBasis) -> Result<Vec<f64>> {
    if basis.restriction() != Restriction::Column {
        return Err(Error::param("collective states expand onto the column basis only"));
    }
    let (nf, nb) = (basis.fermion.n_particles(), basis.boson.n_particles());
    if coeffs.len() != (nf + 1) * (nb + 1) {
        return Err(Error::param(format!(
            "expected {} collective amplitudes, got {}",
            (nf + 1) * (nb + 1),
            coeffs.len()
        )));
    }
    let factors = |sector: Sector| -> Vec<(usize, f64)> {
        let sb = basis.sector(sector);
        let n = sb.n_particles();
        sb.states()
            .iter()
            .map(|&bits| {
                let k = sb.excitations(bits);
                (k, collective_sign(bits, n, sector.statistics()) / binomial(n, k).sqrt())
            })
            .collect()
    };
    let ff = factors(Sector::Fermion);
    let fb = factors(Sector::Boson);
    let mut out = Vec::with_capacity(basis.dimension());
    for &(kf, af) in &ff {
        for &(kb, ab) in &fb {
            out.push(coeffs[kf * (nb + 1) + kb] * af * ab);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secondq::{apply_term, matvec, StateVector, TermOperator};

    fn params(n: usize) -> SystemParams {
        SystemParams {
            n_f: n,
            n_b: n,
            ..Default::default()
        }
    }

    fn basis_vec(dim: usize, k: usize) -> StateVector {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        StateVector::new(v)
    }

    #[test]
    fn n1_has_only_level_terms() {
        let p = SystemParams { v_f: -3.0, v_b: 2.0, ..params(1) };
        let f = build_fermion_terms(&p);
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|t| t.is_diagonal()));
        assert_eq!(f[0].coefficient, -0.5);
        assert_eq!(f[1].coefficient, 0.5);
        assert_eq!(build_boson_terms(&p).len(), 2);
    }

    #[test]
    fn term_counts() {
        let p = SystemParams { v_f: -1.0, v_b: -1.0, mu: 0.3, ..params(6) };
        assert_eq!(build_fermion_terms(&p).len(), 12 + 2 * 30);
        assert_eq!(build_boson_terms(&p).len(), 12 + 2 * 30);
        assert_eq!(build_interaction_terms(&p).unwrap().len(), 72);
        assert!(build_interaction_terms(&SystemParams { mu: 0.0, ..p }).unwrap().is_empty());
    }

    #[test]
    fn hermitian_closed_and_even_fermion_parity() {
        let p = SystemParams { v_f: -1.0, v_b: 0.7, mu: 0.3, ..params(3) };
        let terms = ModelInstance::new(p).unwrap().terms();
        for t in &terms {
            assert_eq!(t.fermion_factor_count() % 2, 0);
            let adj = t.adjoint();
            assert!(terms.contains(&adj), "missing h.c. of {t:?}");
        }
    }

    #[test]
    fn interaction_size_mismatch() {
        let p = SystemParams { n_f: 2, n_b: 3, mu: 0.5, ..Default::default() };
        assert!(matches!(build_interaction_terms(&p), Err(Error::Parameter(_))));
        assert!(ModelInstance::new(p).is_err());
    }

    // N = 2 fermions, global modes 1..4: f†_1 f†_2 f_4 f_3 |{3,4}> = +|{1,2}>
    // (no occupied mode lies below any target), and f†_2 f†_1 f_3 f_4 is the
    // same operator, so <{1,2}|H_f|{3,4}> = 2 * V/2 = V.
    #[test]
    fn fermion_pair_element_n2() {
        let p = SystemParams { n_f: 2, n_b: 0, v_f: -1.0, ..Default::default() };
        let basis = CompositeBasis::new(p.layout().unwrap(), Restriction::Full).unwrap();
        let terms = build_fermion_terms(&p);
        let upper = basis.rank(0b1100, 0).unwrap();
        let lower = basis.rank(0b0011, 0).unwrap();
        let out = matvec(&terms, &basis, &basis_vec(basis.dimension(), upper)).unwrap();
        assert_eq!(out.amplitudes[lower], -1.0);
        assert_eq!(out.amplitudes[upper], 1.0); // +eps/2 * 2
    }

    #[test]
    fn boson_pair_element_n2() {
        let p = SystemParams { n_f: 0, n_b: 2, v_b: -1.0, ..Default::default() };
        let basis = CompositeBasis::new(p.layout().unwrap(), Restriction::Full).unwrap();
        let upper = basis.rank(0, 0b1100).unwrap();
        let lower = basis.rank(0, 0b0011).unwrap();
        let out = matvec(&build_boson_terms(&p), &basis, &basis_vec(basis.dimension(), upper)).unwrap();
        assert_eq!(out.amplitudes[lower], -1.0);
    }

    #[test]
    fn interaction_element_n1() {
        let p = SystemParams { mu: 0.5, ..params(1) };
        let basis = CompositeBasis::new(p.layout().unwrap(), Restriction::Full).unwrap();
        let terms = build_interaction_terms(&p).unwrap();
        assert_eq!(terms.len(), 2);
        // fermion lower = bit 0, boson upper = bit 1
        let f_l_b_u = basis.rank(0b01, 0b10).unwrap();
        let f_u_b_l = basis.rank(0b10, 0b01).unwrap();
        let psi = basis_vec(basis.dimension(), f_l_b_u);
        let out = apply_term(&terms[1], &basis, &psi).unwrap();
        assert_eq!(out.amplitudes[f_u_b_l], 0.25);
        let out = matvec(&terms, &basis, &psi).unwrap();
        assert_eq!(out.amplitudes[f_u_b_l], 0.25);
        assert_eq!(out.amplitudes.iter().filter(|a| **a != 0.0).count(), 1);
    }

    #[test]
    fn noninteracting_ladder_n6() {
        let p = SystemParams { n_f: 6, n_b: 0, eps_f: 1.5, ..Default::default() };
        let h = build_collective_hamiltonian(&p).unwrap();
        for k in 0..=6 {
            assert_eq!(h[(k, k)], 1.5 * (k as f64 - 3.0));
        }
        // the column basis is diagonal too, with the same ladder
        let basis = CompositeBasis::new(p.layout().unwrap(), Restriction::Column).unwrap();
        let op = TermOperator::new(&build_fermion_terms(&p), &basis).unwrap();
        for (idx, d) in op.diagonal().iter().enumerate() {
            let k = basis.fermion.excitations(basis.bits(idx).0) as f64;
            assert!((d - 1.5 * (k - 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn collective_is_symmetric_and_diagonal_without_coupling() {
        let p = SystemParams { eps_f: 2.0, eps_b: 0.5, ..params(3) };
        let h = build_collective_hamiltonian(&p).unwrap();
        assert_eq!(h.nrows(), 16);
        for kf in 0..4 {
            for kb in 0..4 {
                let i = kf * 4 + kb;
                assert_eq!(h[(i, i)], 2.0 * (kf as f64 - 1.5) + 0.5 * (kb as f64 - 1.5));
            }
        }
        let q = SystemParams { v_f: -0.8, v_b: 1.1, mu: 0.6, ..p };
        let h = build_collective_hamiltonian(&q).unwrap();
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn param_names_parse() {
        for name in ParamName::ALL {
            assert_eq!(name.as_str().parse::<ParamName>().unwrap(), name);
        }
        assert_eq!("vf".parse::<ParamName>().unwrap(), ParamName::VF);
        assert!("n_f".parse::<ParamName>().is_err());
    }
}
