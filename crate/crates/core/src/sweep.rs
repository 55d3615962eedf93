//! Parameter grids over `compute_witness`, and their CSV / JSON-lines form.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Sector;
use crate::eigensolver::SolveOptions;
use crate::error::{Error, Result};
use crate::model::{ParamName, SystemParams};
use crate::witness::{compute_witness, theoretical_bound};

pub const CSV_HEADER: &str =
    "n_f,n_b,eps_f,eps_b,v_f,v_b,mu,energy,lambda_g_f,lambda_g_b,bound_f,bound_b,converged,iterations,wall_time_ms";

/// Environment variable capping the sweep worker pool.
pub const WORKERS_ENV: &str = "MPW_WORKERS";

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: ParamName,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(name: ParamName, start: f64, stop: f64, step: f64) -> Result<Self> {
        let axis = Axis { name, start, stop, step };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.start, self.stop, self.step].iter().all(|v| v.is_finite()) {
            return Err(Error::param(format!("axis {} has non-finite bounds", self.name)));
        }
        if self.step <= 0.0 {
            return Err(Error::param(format!("axis {} needs step > 0", self.name)));
        }
        if self.stop < self.start {
            return Err(Error::param(format!("axis {} needs stop >= start", self.name)));
        }
        Ok(())
    }

    /// Inclusive point count `floor((stop - start) / step) + 1`, tolerant of
    /// steps that do not divide the range exactly in binary.
    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + GRID_EPS).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    /// `NAME=START:STOP:STEP`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("malformed axis '{s}', expected NAME=START:STOP:STEP"));
        let (name, range) = s.split_once('=').ok_or_else(bad)?;
        let name: ParamName = name.trim().parse()?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0.0; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("malformed axis '{s}': bad number '{part}'")))?;
        }
        Axis::new(name, v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SystemParams,
    /// Outer axis first.
    pub axes: Vec<Axis>,
    pub options: SolveOptions,
}

impl SweepSpec {
    pub fn new(base: SystemParams, axes: Vec<Axis>, options: SolveOptions) -> Result<Self> {
        let spec = SweepSpec { base, axes, options };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::param("a sweep takes one or two axes"));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if self.axes.len() == 2 && self.axes[0].name == self.axes[1].name {
            return Err(Error::param(format!("axis {} given twice", self.axes[0].name)));
        }
        self.options.validate()?;
        for p in self.points() {
            p.validate()?;
        }
        Ok(())
    }

    /// Grid points with the outer axis varying slowest.
    pub fn points(&self) -> Vec<SystemParams> {
        let mut out = vec![self.base];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for p in &out {
                for v in axis.values() {
                    let mut q = *p;
                    q.set(axis.name, v);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_f: usize,
    pub n_b: usize,
    pub eps_f: f64,
    pub eps_b: f64,
    pub v_f: f64,
    pub v_b: f64,
    pub mu: f64,
    pub energy: f64,
    pub lambda_g_f: f64,
    pub lambda_g_b: f64,
    pub bound_f: f64,
    pub bound_b: f64,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_ms: u64,
    #[serde(skip)]
    pub error: Option<String>,
    /// Worst-case RDM invariants of this point; absent for rows read back from CSV.
    #[serde(skip)]
    pub integrity: Option<RowIntegrity>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowIntegrity {
    /// max over sectors of `|trace D - N|`
    pub trace_error: f64,
    pub d_min_eigenvalue: f64,
    pub d_max_eigenvalue: f64,
    pub g_min_eigenvalue: f64,
}

impl RowIntegrity {
    fn of(w: &crate::witness::WitnessResult) -> Self {
        let sectors = [&w.fermion, &w.boson];
        let fold = |f: &dyn Fn(&crate::witness::SectorWitness) -> f64, min: bool| {
            sectors
                .iter()
                .filter(|s| s.particles > 0)
                .map(|s| f(s))
                .fold(if min { f64::INFINITY } else { f64::NEG_INFINITY }, |a, b| if min { a.min(b) } else { a.max(b) })
        };
        RowIntegrity {
            trace_error: fold(&|s| (s.trace_d - s.particles as f64).abs(), false),
            d_min_eigenvalue: fold(&|s| s.d_min_eigenvalue, true),
            d_max_eigenvalue: fold(&|s| s.d_max_eigenvalue, false),
            g_min_eigenvalue: fold(&|s| s.g_min_eigenvalue, true),
        }
    }
}

impl SweepRow {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            n_f: self.n_f,
            n_b: self.n_b,
            eps_f: self.eps_f,
            eps_b: self.eps_b,
            v_f: self.v_f,
            v_b: self.v_b,
            mu: self.mu,
        }
    }

    pub fn lambda_g(&self, sector: Sector) -> f64 {
        match sector {
            Sector::Fermion => self.lambda_g_f,
            Sector::Boson => self.lambda_g_b,
        }
    }

    fn failed(p: &SystemParams, error: String, wall_time_ms: u64) -> Self {
        SweepRow {
            n_f: p.n_f,
            n_b: p.n_b,
            eps_f: p.eps_f,
            eps_b: p.eps_b,
            v_f: p.v_f,
            v_b: p.v_b,
            mu: p.mu,
            energy: f64::NAN,
            lambda_g_f: f64::NAN,
            lambda_g_b: f64::NAN,
            bound_f: bound_or_nan(p.n_f),
            bound_b: bound_or_nan(p.n_b),
            converged: false,
            iterations: 0,
            wall_time_ms,
            error: Some(error),
            integrity: None,
        }
    }

    pub fn to_csv_line(&self, record_timing: bool) -> String {
        let mut s = format!("{},{}", self.n_f, self.n_b);
        for v in [
            self.eps_f,
            self.eps_b,
            self.v_f,
            self.v_b,
            self.mu,
            self.energy,
            self.lambda_g_f,
            self.lambda_g_b,
            self.bound_f,
            self.bound_b,
        ] {
            let _ = write!(s, ",{}", format_g12(v));
        }
        let _ = write!(
            s,
            ",{},{},{}",
            self.converged,
            self.iterations,
            if record_timing { self.wall_time_ms } else { 0 }
        );
        s
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 15 {
            return Err(Error::Config(format!("expected 15 CSV fields, got {}: '{line}'", f.len())));
        }
        let bad = |i: usize| Error::Config(format!("bad CSV field {} in '{line}'", i + 1));
        let num = |i: usize| -> Result<f64> { f[i].parse().map_err(|_| bad(i)) };
        let int = |i: usize| -> Result<usize> { f[i].parse().map_err(|_| bad(i)) };
        Ok(SweepRow {
            n_f: int(0)?,
            n_b: int(1)?,
            eps_f: num(2)?,
            eps_b: num(3)?,
            v_f: num(4)?,
            v_b: num(5)?,
            mu: num(6)?,
            energy: num(7)?,
            lambda_g_f: num(8)?,
            lambda_g_b: num(9)?,
            bound_f: num(10)?,
            bound_b: num(11)?,
            converged: f[12].parse().map_err(|_| bad(12))?,
            iterations: int(13)?,
            wall_time_ms: f[14].parse().map_err(|_| bad(14))?,
            error: None,
            integrity: None,
        })
    }
}

fn bound_or_nan(n: usize) -> f64 {
    theoretical_bound(n, 2 * n).unwrap_or(f64::NAN)
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros trimmed,
/// exponent form outside `[1e-5, 1e12)`.
pub fn format_g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Grid-coordinate key used for resuming.
fn point_key(p: &SystemParams) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        p.n_f,
        p.n_b,
        format_g12(p.eps_f),
        format_g12(p.eps_b),
        format_g12(p.v_f),
        format_g12(p.v_b),
        format_g12(p.mu)
    )
}

/// Worker count: `requested`, else `MPW_WORKERS`, else available cores.
pub fn worker_count(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

fn evaluate(p: &SystemParams, opts: &SolveOptions) -> SweepRow {
    let t0 = Instant::now();
    match compute_witness(p, opts) {
        Ok(w) => SweepRow {
            n_f: p.n_f,
            n_b: p.n_b,
            eps_f: p.eps_f,
            eps_b: p.eps_b,
            v_f: p.v_f,
            v_b: p.v_b,
            mu: p.mu,
            energy: w.energy,
            lambda_g_f: w.lambda_g_f(),
            lambda_g_b: w.lambda_g_b(),
            bound_f: w.bound_f(),
            bound_b: w.bound_b(),
            converged: w.diagnostics.converged,
            iterations: w.diagnostics.iterations,
            wall_time_ms: t0.elapsed().as_millis() as u64,
            error: None,
            integrity: Some(RowIntegrity::of(&w)),
        },
        Err(e) => {
            warn!("sweep point {} failed: {e}", point_key(p));
            SweepRow::failed(p, e.to_string(), t0.elapsed().as_millis() as u64)
        }
    }
}

/// Evaluate every grid point. Failures become rows with `converged = false`.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    resume_sweep(spec, &[], false, workers)
}

/// As [`run_sweep`], reusing rows of `previous` whose grid coordinates match.
/// Failed rows are reused too unless `retry_failed`.
pub fn resume_sweep(
    spec: &SweepSpec,
    previous: &[SweepRow],
    retry_failed: bool,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let known: HashMap<String, &SweepRow> = previous
        .iter()
        .filter(|r| !retry_failed || r.converged)
        .map(|r| (point_key(&r.params()), r))
        .collect();
    let opts = SolveOptions {
        parallel: false,
        ..spec.options
    };
    let points = spec.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(workers))
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|p| match known.get(&point_key(p)) {
                Some(r) => (*r).clone(),
                None => evaluate(p, &opts),
            })
            .collect()
    }))
}

pub fn to_csv(rows: &[SweepRow], record_timing: bool) -> String {
    let mut s = String::with_capacity(128 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line(record_timing));
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config("CSV header does not match the sweep format".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(SweepRow::from_csv_line).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn write_csv(path: &Path, rows: &[SweepRow], record_timing: bool) -> Result<()> {
    std::fs::write(path, to_csv(rows, record_timing)).map_err(|e| Error::io(path, e))
}

/// One JSON object per row with the CSV field names.
pub fn to_json_lines(rows: &[SweepRow], record_timing: bool) -> String {
    let mut s = String::new();
    for r in rows {
        let mut r = r.clone();
        if !record_timing {
            r.wall_time_ms = 0;
        }
        s.push_str(&serde_json::to_string(&r).expect("rows serialize"));
        s.push('\n');
    }
    s
}

/// Sidecar path: `out.csv` -> `out.meta.json`.
pub fn meta_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("meta.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMeta {
    pub version: String,
    pub seed: u64,
    pub solver: String,
    pub spec: SweepSpec,
    pub workers: usize,
    pub rows: usize,
    pub failed: Vec<FailedPoint>,
    pub total_wall_time_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedPoint {
    pub index: usize,
    pub params: SystemParams,
    pub error: String,
}

impl SweepMeta {
    pub fn new(spec: &SweepSpec, rows: &[SweepRow], workers: usize, total_wall_time_ms: u64) -> Self {
        SweepMeta {
            version: crate::VERSION.to_string(),
            seed: spec.options.seed,
            solver: spec.options.path.to_string(),
            spec: spec.clone(),
            workers,
            rows: rows.len(),
            failed: rows
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.converged)
                .map(|(index, r)| FailedPoint {
                    index,
                    params: r.params(),
                    error: r.error.clone().unwrap_or_else(|| "not converged".into()),
                })
                .collect(),
            total_wall_time_ms,
        }
    }
}

/// Smallest `mu` whose `sector` witness reaches `level`, for rows of a
/// single-axis sweep over `mu` sorted by `mu`.
pub fn onset_threshold(rows: &[SweepRow], sector: Sector, level: f64) -> Result<Option<f64>> {
    if let Some(first) = rows.first() {
        let mut fixed = first.params();
        for r in rows {
            let mut p = r.params();
            p.mu = 0.0;
            fixed.mu = 0.0;
            if p != fixed {
                return Err(Error::param("onset threshold needs a sweep over mu alone"));
            }
        }
    }
    if rows.windows(2).any(|w| w[1].mu < w[0].mu) {
        return Err(Error::param("rows must be sorted by mu"));
    }
    Ok(rows.iter().find(|r| r.lambda_g(sector) >= level).map(|r| r.mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu_spec(start: f64, stop: f64, step: f64) -> SweepSpec {
        SweepSpec::new(
            SystemParams { n_f: 2, n_b: 2, v_f: -0.5, v_b: -0.3, ..Default::default() },
            vec![Axis::new(ParamName::Mu, start, stop, step).unwrap()],
            SolveOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn grid_counts() {
        assert_eq!(Axis::new(ParamName::Mu, 0.0, 1.0, 0.25).unwrap().len(), 5);
        assert_eq!(Axis::new(ParamName::Mu, 0.0, 1.0, 0.02).unwrap().len(), 51);
        assert_eq!(Axis::new(ParamName::VF, -1.0, 0.0, 0.05).unwrap().len(), 21);
        assert_eq!(Axis::new(ParamName::Mu, 0.3, 0.3, 0.1).unwrap().len(), 1);
        assert_eq!(Axis::new(ParamName::Mu, 0.0, 1.0, 0.3).unwrap().values(), vec![0.0, 0.3, 0.6, 0.8999999999999999]);
    }

    #[test]
    fn axis_validation() {
        assert!(Axis::new(ParamName::Mu, 0.0, 1.0, 0.0).is_err());
        assert!(Axis::new(ParamName::Mu, 1.0, 0.0, 0.1).is_err());
        let a = mu_spec(0.0, 1.0, 0.5).axes[0];
        let dup = SweepSpec::new(SystemParams::default(), vec![a, a], SolveOptions::default());
        assert!(matches!(dup, Err(Error::Parameter(_))));
    }

    #[test]
    fn axis_parsing() {
        let a: Axis = "vf=-1:0:0.025".parse().unwrap();
        assert_eq!((a.name, a.start, a.stop, a.step), (ParamName::VF, -1.0, 0.0, 0.025));
        for bad in ["mu", "mu=0:1", "mu=0:x:0.1", "q=0:1:0.1", "mu=1:0:0.1"] {
            assert!(bad.parse::<Axis>().is_err(), "{bad}");
        }
        let msg = "mu=0:x:0.1".parse::<Axis>().unwrap_err().to_string();
        assert!(msg.contains("'x'"), "{msg}");
    }

    #[test]
    fn row_order_outer_slow() {
        let spec = SweepSpec::new(
            SystemParams::default(),
            vec![
                Axis::new(ParamName::VF, -1.0, 0.0, 0.5).unwrap(),
                Axis::new(ParamName::VB, 0.0, 1.0, 1.0).unwrap(),
            ],
            SolveOptions::default(),
        )
        .unwrap();
        let pts: Vec<(f64, f64)> = spec.points().iter().map(|p| (p.v_f, p.v_b)).collect();
        assert_eq!(pts, vec![(-1.0, 0.0), (-1.0, 1.0), (-0.5, 0.0), (-0.5, 1.0), (0.0, 0.0), (0.0, 1.0)]);
    }

    #[test]
    fn g12_format() {
        assert_eq!(format_g12(0.0), "0");
        assert_eq!(format_g12(-0.0), "0");
        assert_eq!(format_g12(3.0), "3");
        assert_eq!(format_g12(0.1 + 0.2), "0.3");
        assert_eq!(format_g12(-394.957_371_582_5), "-394.957371583");
        assert_eq!(format_g12(1.5e-7), "1.5e-07");
        assert_eq!(format_g12(2.5e13), "2.5e+13");
        assert_eq!(format_g12(123456789012.0), "123456789012");
        assert_eq!(format_g12(f64::NAN), "nan");
    }

    #[test]
    fn csv_round_trip_and_resume() {
        let spec = mu_spec(0.0, 0.5, 0.25);
        let rows = run_sweep(&spec, Some(1)).unwrap();
        assert_eq!(rows.len(), 3);
        let text = to_csv(&rows, false);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(to_csv(&parsed, false), text);

        // Drop a row and mark another as failed: only those are recomputed.
        let mut partial = vec![parsed[0].clone(), parsed[2].clone()];
        partial[0].lambda_g_f = 99.0;
        partial[1].converged = false;
        let resumed = resume_sweep(&spec, &partial, false, Some(1)).unwrap();
        assert_eq!(resumed[0].lambda_g_f, 99.0);
        assert!(!resumed[2].converged);
        assert_eq!(to_csv(&resumed[1..2], false), to_csv(&rows[1..2], false));
        let retried = resume_sweep(&spec, &partial, true, Some(1)).unwrap();
        assert!(retried[2].converged);
    }

    #[test]
    fn failures_are_recorded() {
        let mut spec = mu_spec(0.0, 0.5, 0.5);
        spec.options.max_iterations = 1;
        spec.options.dense_limit = 0;
        let rows = run_sweep(&spec, Some(1)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| !r.converged));
    }

    #[test]
    fn json_lines_fields() {
        let rows = run_sweep(&mu_spec(0.0, 0.0, 1.0), Some(1)).unwrap();
        let line = to_json_lines(&rows, false);
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut header: Vec<&str> = CSV_HEADER.split(',').collect();
        let mut keys_sorted = keys.clone();
        header.sort();
        keys_sorted.sort();
        assert_eq!(keys_sorted, header);
    }

    #[test]
    fn onset() {
        let mut rows = run_sweep(&mu_spec(0.0, 1.0, 0.5), Some(1)).unwrap();
        for (r, l) in rows.iter_mut().zip([0.5, 1.2, 1.6]) {
            r.lambda_g_f = l;
        }
        assert_eq!(onset_threshold(&rows, Sector::Fermion, 1.1).unwrap(), Some(0.5));
        assert_eq!(onset_threshold(&rows, Sector::Fermion, 2.0).unwrap(), None);
        rows[1].v_f = 0.3;
        assert!(matches!(onset_threshold(&rows, Sector::Fermion, 1.1), Err(Error::Parameter(_))));
        assert_eq!(onset_threshold(&[], Sector::Boson, 1.0).unwrap(), None);
    }
}
