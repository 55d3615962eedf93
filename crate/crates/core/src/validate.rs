//! Oracle battery: solver paths against each other, both particle-hole RDM
//! constructions, RDM integrity and the operator sign convention.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{enumerate_sector, Restriction, Sector};
use crate::eigensolver::{solve_path, SolveOptions, SolverPath};
use crate::error::{Error, Result};
use crate::model::{ModelInstance, SystemParams};
use crate::secondq::{apply_excitation, ExcitationOp, Statistics, TermOperator};
use crate::basis::OccupationState;
use crate::witness::{
    compute_witness, one_particle_rdm, particle_hole_rdm, particle_hole_rdm_subtract_after, WitnessResult,
    VALIDATED_MAX_N,
};

pub const STATISTICS_CHECK: &str = "statistics discrimination";

const PATH_TOLERANCE: f64 = 1e-8;
const CONSTRUCTION_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Sign of `c†_i c_j` on `bits` (0 when it vanishes).
pub type SignFn = fn(u64, usize, usize, Statistics) -> i8;

pub fn production_sign(bits: u64, i: usize, j: usize, statistics: Statistics) -> i8 {
    apply_excitation(ExcitationOp::new(i, j, statistics), OccupationState(bits)).1
}

/// Reference: fermions pick up `(-1)^k` for the `k` occupied modes strictly
/// between `i` and `j`; hard-core bosons never change sign.
fn reference_sign(bits: u64, i: usize, j: usize, statistics: Statistics) -> i8 {
    let occupied = |m: usize| bits >> m & 1 == 1;
    let target_free = !occupied(i) || i == j;
    if !occupied(j) || !target_free {
        return 0;
    }
    match statistics {
        Statistics::HardcoreBoson => 1,
        Statistics::Fermion => {
            let (lo, hi) = (i.min(j), i.max(j));
            let between = (lo + 1..hi).filter(|&m| occupied(m)).count();
            if between % 2 == 0 {
                1
            } else {
                -1
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Observations reported without pass/fail.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        for n in &self.notes {
            writeln!(f, "note {n}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Fixed points for `n` particles per sector plus `random_points` drawn from
/// `seed`.
pub fn battery(n: usize, random_points: usize, seed: u64) -> Vec<SystemParams> {
    let base = SystemParams {
        n_f: n,
        n_b: n,
        ..Default::default()
    };
    let mut out = vec![
        base,
        SystemParams { v_f: -50.0, v_b: -50.0, ..base },
        SystemParams { eps_f: 1.0, eps_b: 0.6, v_f: -0.9, v_b: 0.5, mu: 0.4, ..base },
        SystemParams { eps_f: 3.0, eps_b: 0.3, v_f: -0.08, v_b: 0.0, mu: 0.7, ..base },
    ];
    if n >= 2 {
        out.push(SystemParams { n_b: n - 1, v_f: -0.7, v_b: -1.3, ..base });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32));
    for _ in 0..random_points {
        out.push(SystemParams {
            eps_f: rng.random_range(0.2..3.0),
            eps_b: rng.random_range(0.2..3.0),
            v_f: rng.random_range(-2.0..2.0),
            v_b: rng.random_range(-2.0..2.0),
            mu: rng.random_range(-1.0..1.0),
            ..base
        });
    }
    out
}

fn describe(p: &SystemParams) -> String {
    format!(
        "n_f={} n_b={} eps_f={} eps_b={} v_f={} v_b={} mu={}",
        p.n_f, p.n_b, p.eps_f, p.eps_b, p.v_f, p.v_b, p.mu
    )
}

fn check_signs(report: &mut ValidationReport, sign: SignFn) {
    let mut mismatches = Vec::new();
    for statistics in [Statistics::Fermion, Statistics::HardcoreBoson] {
        let sector = enumerate_sector(6, 3, Restriction::Full).expect("small sector");
        for &bits in sector.states() {
            for i in 0..6 {
                for j in 0..6 {
                    let (got, want) = (sign(bits, i, j, statistics), reference_sign(bits, i, j, statistics));
                    if got != want {
                        mismatches.push(format!("{statistics:?} c†_{i} c_{j} on {bits:06b}: {got} vs {want}"));
                    }
                }
            }
        }
    }
    let detail = match mismatches.first() {
        None => "excitation signs match the reference for fermions and hard-core bosons".to_string(),
        Some(first) => format!("{} mismatches, first {first}", mismatches.len()),
    };
    report.push(STATISTICS_CHECK, mismatches.is_empty(), detail);
}

fn witness_on(p: &SystemParams, path: SolverPath, opts: &SolveOptions) -> Result<WitnessResult> {
    compute_witness(p, &SolveOptions { path, ..*opts })
}

fn check_point(report: &mut ValidationReport, p: &SystemParams, opts: &SolveOptions) {
    let label = describe(p);
    let mut results = Vec::new();
    for path in [SolverPath::Full, SolverPath::Column, SolverPath::Collective] {
        match witness_on(p, path, opts) {
            Ok(w) => {
                let conv = w.diagnostics.converged;
                report.push(
                    format!("integrity [{path}]"),
                    conv,
                    format!(
                        "{label}: trace D = ({:.12}, {:.12}), min eig G = ({:.2e}, {:.2e}){}",
                        w.fermion.trace_d,
                        w.boson.trace_d,
                        w.fermion.g_min_eigenvalue,
                        w.boson.g_min_eigenvalue,
                        if conv { "" } else { ", not converged" }
                    ),
                );
                results.push((path, w));
            }
            Err(e) => report.push(format!("integrity [{path}]"), false, format!("{label}: {e}")),
        }
    }
    if let Some((_, reference)) = results.first() {
        for (path, w) in &results[1..] {
            let de = (w.energy - reference.energy).abs();
            let df = (w.lambda_g_f() - reference.lambda_g_f()).abs();
            let db = (w.lambda_g_b() - reference.lambda_g_b()).abs();
            report.push(
                format!("path agreement [full vs {path}]"),
                de.max(df).max(db) <= PATH_TOLERANCE,
                format!("{label}: |dE| = {de:.1e}, |d lambda_f| = {df:.1e}, |d lambda_b| = {db:.1e}"),
            );
        }
    }

    // Both G constructions on the full-space ground state.
    let constructions = (|| -> Result<f64> {
        let model = ModelInstance::new(*p)?;
        let (basis, ground) = solve_path(&model, &SolveOptions { path: SolverPath::Full, ..*opts })?;
        let mut worst = 0.0f64;
        for sector in [Sector::Fermion, Sector::Boson] {
            if basis.sector(sector).n_particles() == 0 {
                continue;
            }
            let d = one_particle_rdm(&basis, &ground.vector, sector)?;
            let centered = particle_hole_rdm(&basis, &ground.vector, sector, &d)?;
            let oracle = particle_hole_rdm_subtract_after(&basis, &ground.vector, sector)?;
            worst = worst.max((&centered.matrix - &oracle.matrix).amax());
        }
        Ok(worst)
    })();
    match constructions {
        Ok(diff) => report.push(
            "centered vs subtract-after",
            diff <= CONSTRUCTION_TOLERANCE,
            format!("{label}: max |dG| = {diff:.1e}"),
        ),
        Err(e) => report.push("centered vs subtract-after", false, format!("{label}: {e}")),
    }

    if p.n_f.max(p.n_b) <= 3 {
        let symmetry = (|| -> Result<f64> {
            let model = ModelInstance::new(*p)?;
            let basis = model.basis(Restriction::Full)?;
            let op = TermOperator::new(&model.terms(), &basis)?;
            let all: Vec<usize> = (0..basis.dimension()).collect();
            let n = all.len();
            let h = DMatrix::from_row_slice(n, n, &op.dense_block(&all));
            Ok((&h - h.transpose()).amax())
        })();
        match symmetry {
            Ok(asym) => report.push(
                "hamiltonian symmetry",
                asym <= SYMMETRY_TOLERANCE,
                format!("{label}: max |H - H^T| = {asym:.1e}"),
            ),
            Err(e) => report.push("hamiltonian symmetry", false, format!("{label}: {e}")),
        }
    }

    if p.n_f == p.n_b {
        let swapped = p.swapped();
        match (witness_on(p, SolverPath::Column, opts), witness_on(&swapped, SolverPath::Column, opts)) {
            (Ok(a), Ok(b)) => {
                let d = (a.lambda_g_f() - b.lambda_g_b())
                    .abs()
                    .max((a.lambda_g_b() - b.lambda_g_f()).abs());
                report.push(
                    "sector exchange",
                    d <= PATH_TOLERANCE,
                    format!("{label}: max |d lambda| = {d:.1e}"),
                );
            }
            (Err(e), _) | (_, Err(e)) => report.push("sector exchange", false, format!("{label}: {e}")),
        }
    }

    if p.v_f == -50.0 && p.mu == 0.0 {
        if let Some((_, w)) = results.first() {
            let n = p.n_f;
            let half = n as f64 / 2.0;
            let msg = format!("{label}: lambda_f = {:.6}, N/2 = {half}", w.lambda_g_f());
            if n == 2 {
                report.push("strong-coupling saturation", (w.lambda_g_f() - half).abs() <= 1e-2, msg);
            } else {
                report.notes.push(format!("strong coupling, {msg}"));
            }
        }
    }
}

/// Run the battery for every `N <= max_n` with `random_points` random
/// parameter sets per `N`, using `sign` as the excitation sign convention
/// under test.
pub fn validate_with(max_n: usize, random_points: usize, opts: &SolveOptions, sign: SignFn) -> Result<ValidationReport> {
    if max_n == 0 || max_n > VALIDATED_MAX_N {
        return Err(Error::param(format!(
            "validation covers 1 <= N <= {VALIDATED_MAX_N}, got {max_n}"
        )));
    }
    opts.validate()?;
    let mut report = ValidationReport::default();
    check_signs(&mut report, sign);
    for n in 1..=max_n {
        for p in battery(n, random_points, opts.seed) {
            check_point(&mut report, &p, opts);
        }
    }
    Ok(report)
}

pub fn validate(max_n: usize, random_points: usize, opts: &SolveOptions) -> Result<ValidationReport> {
    validate_with(max_n, random_points, opts, production_sign)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boson_like(bits: u64, i: usize, j: usize, statistics: Statistics) -> i8 {
        production_sign(bits, i, j, statistics).abs()
    }

    #[test]
    fn reference_agrees_with_production() {
        let mut r = ValidationReport::default();
        check_signs(&mut r, production_sign);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn corrupted_signs_fail_by_name() {
        let mut r = ValidationReport::default();
        check_signs(&mut r, boson_like);
        let failed: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec![STATISTICS_CHECK]);
    }

    #[test]
    fn max_n_limit() {
        assert!(validate(5, 0, &SolveOptions::default()).is_err());
        assert!(validate(0, 0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn battery_n2_passes() {
        let r = validate(2, 2, &SolveOptions::default()).unwrap();
        assert!(r.passed(), "{r}");
    }
}
