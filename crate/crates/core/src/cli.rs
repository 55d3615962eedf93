//! The `mpw` command line.
//!
//! Settings are merged as defaults < `--config` file < flags. Exit codes:
//! 0 success, 1 usage or configuration error, 2 a run that did not converge
//! or failed a check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::basis::Sector;
use crate::eigensolver::{Reorthogonalization, SolveOptions, SolverPath};
use crate::error::{Error, Result};
use crate::model::{ParamName, SystemParams};
use crate::sweep::{self, Axis, SweepMeta, SweepSpec};
use crate::validate;
use crate::witness::{compute_witness, theoretical_bound, WitnessResult};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Gap below the bound that counts as maximal order in sweep reports.
const SATURATION_GAP: f64 = 0.05;

#[derive(Parser, Debug)]
#[command(name = "mpw", version, about = "Particle-hole ODLRO witness for coupled fermion/boson LMG systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground state and lambda_G of both sectors at one parameter point.
    Witness(RunArgs),
    /// Evaluate a one- or two-axis parameter grid into a CSV file.
    Sweep(SweepArgs),
    /// Run the oracle battery (paths, RDM constructions, invariants).
    Validate(ValidateArgs),
    /// Print the bound N(r-N)/r.
    Bound {
        n: usize,
        r: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    nf: Option<usize>,
    #[arg(long)]
    nb: Option<usize>,
    #[arg(long = "eps-f", allow_negative_numbers = true)]
    eps_f: Option<f64>,
    #[arg(long = "eps-b", allow_negative_numbers = true)]
    eps_b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    vf: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    vb: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// full, column or collective
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Decimal or 0x-prefixed hex.
    #[arg(long)]
    seed: Option<String>,
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Print the effective configuration and exit.
    #[arg(long = "print-config")]
    print_config: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// NAME=START:STOP:STEP, outer axis first; at most two.
    #[arg(long, allow_hyphen_values = true)]
    axis: Vec<String>,
    /// Recompute rows of an existing output that did not converge.
    #[arg(long = "retry-failed")]
    retry_failed: bool,
    /// Write measured wall times instead of 0 (output is then not reproducible byte for byte).
    #[arg(long = "record-timing")]
    record_timing: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long = "max-n", default_value_t = 3)]
    max_n: usize,
    /// Random parameter sets per N on top of the fixed battery.
    #[arg(long, default_value_t = 4)]
    points: usize,
}

/// Effective settings after merging defaults, a config file and flags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub params: SystemParams,
    pub options: SolveOptions,
    pub out: Option<PathBuf>,
}

fn parse_seed(v: &str) -> Result<u64> {
    let v = v.trim();
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => v.parse(),
    };
    parsed.map_err(|_| Error::Config(format!("bad seed '{v}'")))
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 16] = [
        "n_f",
        "n_b",
        "eps_f",
        "eps_b",
        "v_f",
        "v_b",
        "mu",
        "solver",
        "tol",
        "max_iter",
        "seed",
        "reorthogonalization",
        "dense_limit",
        "memory_budget",
        "parallel",
        "out",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let p = &mut self.params;
        let o = &mut self.options;
        match key.as_str() {
            "n_f" | "nf" => p.n_f = parse_value(&key, value)?,
            "n_b" | "nb" => p.n_b = parse_value(&key, value)?,
            "eps_f" => p.eps_f = parse_value(&key, value)?,
            "eps_b" => p.eps_b = parse_value(&key, value)?,
            "v_f" | "vf" => p.v_f = parse_value(&key, value)?,
            "v_b" | "vb" => p.v_b = parse_value(&key, value)?,
            "mu" => p.mu = parse_value(&key, value)?,
            "solver" => o.path = value.trim().parse::<SolverPath>().map_err(|e| Error::Config(e.to_string()))?,
            "tol" => o.tolerance = parse_value(&key, value)?,
            "max_iter" => o.max_iterations = parse_value(&key, value)?,
            "seed" => o.seed = parse_seed(value)?,
            "reorthogonalization" => {
                o.reorthogonalization = value
                    .trim()
                    .parse::<Reorthogonalization>()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "dense_limit" => o.dense_limit = parse_value(&key, value)?,
            "memory_budget" => o.memory_budget = parse_value(&key, value)?,
            "parallel" => o.parallel = parse_value(&key, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply `key = value` lines; blank lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{raw}'", no + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", no + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    /// The configuration in the file format; `merge_text` reads it back.
    pub fn render(&self) -> String {
        let p = &self.params;
        let o = &self.options;
        let mut s = format!("# mpw {VERSION}\n");
        let reorth = match o.reorthogonalization {
            Reorthogonalization::Full => "full",
            Reorthogonalization::None => "none",
        };
        for (k, v) in [
            ("n_f", p.n_f.to_string()),
            ("n_b", p.n_b.to_string()),
            ("eps_f", p.eps_f.to_string()),
            ("eps_b", p.eps_b.to_string()),
            ("v_f", p.v_f.to_string()),
            ("v_b", p.v_b.to_string()),
            ("mu", p.mu.to_string()),
            ("solver", o.path.to_string()),
            ("tol", format!("{:e}", o.tolerance)),
            ("max_iter", o.max_iterations.to_string()),
            ("seed", o.seed.to_string()),
            ("reorthogonalization", reorth.to_string()),
            ("dense_limit", o.dense_limit.to_string()),
            ("memory_budget", o.memory_budget.to_string()),
            ("parallel", o.parallel.to_string()),
        ] {
            s.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(out) = &self.out {
            s.push_str(&format!("out = {}\n", out.display()));
        }
        s
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Parameter(m) => m.clone(),
        other => other.to_string(),
    }
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &a.config {
        cfg.merge_file(path)?;
    }
    let p = &mut cfg.params;
    if let Some(v) = a.nf {
        p.n_f = v;
    }
    if let Some(v) = a.nb {
        p.n_b = v;
    }
    for (slot, v) in [
        (&mut p.eps_f, a.eps_f),
        (&mut p.eps_b, a.eps_b),
        (&mut p.v_f, a.vf),
        (&mut p.v_b, a.vb),
        (&mut p.mu, a.mu),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(s) = &a.solver {
        cfg.set("solver", s)?;
    }
    if let Some(v) = a.tol {
        cfg.options.tolerance = v;
    }
    if let Some(v) = a.max_iter {
        cfg.options.max_iterations = v;
    }
    if let Some(s) = &a.seed {
        cfg.options.seed = parse_seed(s)?;
    }
    if let Some(out) = &a.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Witness(a) => cmd_witness(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Validate(a) => cmd_validate(&a, out),
        Command::Bound { n, r, json } => cmd_bound(n, r, json, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn header(cfg: &RunConfig) -> String {
    format!("# mpw {VERSION} seed={} solver={}", cfg.options.seed, cfg.options.path)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_report(cfg: &RunConfig, text: &str, out: &mut dyn Write) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err)?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn witness_json(cfg: &RunConfig, w: &WitnessResult) -> serde_json::Value {
    json!({
        "version": VERSION,
        "seed": cfg.options.seed,
        "solver": cfg.options.path,
        "above_baseline": {
            "fermion": w.fermion.above_baseline(),
            "boson": w.boson.above_baseline(),
        },
        "result": w,
    })
}

fn witness_text(cfg: &RunConfig, w: &WitnessResult) -> String {
    let mut s = header(cfg) + "\n";
    for sw in [&w.fermion, &w.boson] {
        let flag = if sw.above_baseline() { "  above uncorrelated baseline" } else { "" };
        s.push_str(&format!(
            "{:<8} lambda_G = {:.10}  bound {}  (N = {}, r = {}){flag}\n",
            sw.sector.label(),
            sw.lambda_g,
            sweep::format_g12(sw.bound),
            sw.particles,
            sw.modes
        ));
    }
    let d = &w.diagnostics;
    s.push_str(&format!("energy   {}\n", sweep::format_g12(w.energy)));
    s.push_str(&format!(
        "solver   {:?}, dimension {}, iterations {}, residual {:.2e}, parity {:+}, converged {}\n",
        d.method, d.dimension, d.iterations, d.residual, d.parity, d.converged
    ));
    if d.unvalidated_fast_path {
        s.push_str(&format!(
            "warning: the {} path is validated against the full space only up to N = {}\n",
            d.path,
            crate::witness::VALIDATED_MAX_N
        ));
    }
    s
}

fn cmd_witness(a: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = build_config(a)?;
    if a.print_config {
        out.write_all(cfg.render().as_bytes()).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let w = compute_witness(&cfg.params, &cfg.options)?;
    let text = if a.json {
        serde_json::to_string_pretty(&witness_json(&cfg, &w)).expect("serializable") + "\n"
    } else {
        witness_text(&cfg, &w)
    };
    write_report(&cfg, &text, out)?;
    Ok(if w.diagnostics.converged { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = build_config(&a.run)?;
    let axes = a
        .axis
        .iter()
        .map(|s| s.parse::<Axis>())
        .collect::<Result<Vec<_>>>()?;
    if a.run.print_config {
        let mut text = cfg.render();
        for (s, ax) in a.axis.iter().zip(&axes) {
            text.push_str(&format!("# axis {s} ({} points)\n", ax.len()));
        }
        out.write_all(text.as_bytes()).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let path = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("sweep needs --out PATH".into()))?;
    let spec = SweepSpec::new(cfg.params, axes, cfg.options)?;

    let previous = if path.exists() {
        sweep::read_csv(&path).map_err(|e| {
            Error::Config(format!(
                "{} exists but cannot be resumed ({}); remove it or choose another --out",
                path.display(),
                strip_prefix(&e)
            ))
        })?
    } else {
        Vec::new()
    };
    let workers = sweep::worker_count(None);
    let t0 = Instant::now();
    let rows = sweep::resume_sweep(&spec, &previous, a.retry_failed, Some(workers))?;
    let elapsed = t0.elapsed().as_millis() as u64;

    sweep::write_csv(&path, &rows, a.record_timing)?;
    let meta = SweepMeta::new(&spec, &rows, workers, elapsed);
    let meta_path = sweep::meta_path(&path);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("serializable") + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;
    if a.run.json {
        let jl = path.with_extension("jsonl");
        std::fs::write(&jl, sweep::to_json_lines(&rows, a.record_timing)).map_err(|e| Error::io(&jl, e))?;
    }

    let failed = meta.failed.len();
    let mut s = header(&cfg) + "\n";
    s.push_str(&format!(
        "{} rows -> {} ({} failed, {workers} workers, {elapsed} ms)\n",
        rows.len(),
        path.display(),
        failed
    ));
    if spec.axes.len() == 1 && spec.axes[0].name == ParamName::Mu {
        for sector in [Sector::Fermion, Sector::Boson] {
            let n = spec.base.layout()?.particles(sector);
            if n == 0 {
                continue;
            }
            let level = theoretical_bound(n, 2 * n)? - SATURATION_GAP;
            let onset = sweep::onset_threshold(&rows, sector, level)?;
            s.push_str(&format!(
                "onset {:<7} lambda_G >= {}: mu* = {}\n",
                sector.label(),
                sweep::format_g12(level),
                onset.map_or("none".to_string(), sweep::format_g12)
            ));
        }
    }
    out.write_all(s.as_bytes()).map_err(io_err)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = build_config(&a.run)?;
    if a.run.print_config {
        let text = cfg.render() + &format!("# max_n = {}, points = {}\n", a.max_n, a.points);
        out.write_all(text.as_bytes()).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let report = validate::validate(a.max_n, a.points, &cfg.options)?;
    let text = if a.run.json {
        let checks: Vec<_> = report
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect();
        serde_json::to_string_pretty(&json!({
            "version": VERSION,
            "seed": cfg.options.seed,
            "max_n": a.max_n,
            "passed": report.passed(),
            "checks": checks,
            "notes": report.notes,
        }))
        .expect("serializable")
            + "\n"
    } else {
        let mut s = header(&cfg) + "\n";
        s.push_str(&format!("{report}\n"));
        s
    };
    write_report(&cfg, &text, out)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_bound(n: usize, r: usize, json: bool, out: &mut dyn Write) -> Result<i32> {
    let b = theoretical_bound(n, r)?;
    let seed = crate::eigensolver::DEFAULT_SEED;
    let text = if json {
        serde_json::to_string(&json!({"version": VERSION, "seed": seed, "n": n, "r": r, "bound": b})).expect("serializable")
            + "\n"
    } else {
        format!("# mpw {VERSION} seed={seed}\n{}\n", sweep::format_g12(b))
    };
    out.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_merge() {
        let mut c = RunConfig::default();
        c.merge_text("# comment\nn_f = 4  # trailing\n\nv_b=-2\nsolver = full\nseed = 0x10\n")
            .unwrap();
        assert_eq!(c.params.n_f, 4);
        assert_eq!(c.params.v_b, -2.0);
        assert_eq!(c.options.path, SolverPath::Full);
        assert_eq!(c.options.seed, 16);
    }

    #[test]
    fn config_rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        let e = c.merge_text("n_f = 2\nwobble = 3\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("wobble"), "{e}");
        assert!(c.merge_text("mu 0.3\n").is_err());
        assert!(c.merge_text("mu = abc\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.merge_text("n_b = 3\neps_f = 0.3\nmu = 0.125\ntol = 1e-9\nout = x.csv\n").unwrap();
        let mut d = RunConfig::default();
        d.merge_text(&c.render()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn usage_errors_exit_one() {
        let mut o = Vec::new();
        let mut e = Vec::new();
        assert_eq!(run(["mpw", "witness", "--nf", "x"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["mpw", "frobnicate"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["mpw", "bound", "7", "6"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["mpw", "--version"], &mut o, &mut e), EXIT_OK);
    }
}
