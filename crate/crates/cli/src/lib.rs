//! Command-line front end: problem files, named templates, parameter sweeps.

pub mod templates;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use ouq_core::conic::compile;
use ouq_core::duality::{CertificateReport, DualCertificate, VERIFY_TOL};
use ouq_core::model::OuqProblem;
use ouq_core::oracle::{GridBound, GridSpec};
use ouq_core::pipeline::{solve_bound, BoundOptions, RoundTrip, SolveStats};
use ouq_core::reduce::{reduce, DiscreteDistribution, DEFAULT_WEIGHT_FLOOR};
use ouq_core::solver::{SolverSettings, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Flags shared by every subcommand that solves.
#[derive(Args, Clone, Debug, Default)]
pub struct RunFlags {
    /// Feasibility and duality-gap tolerance of the solver.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<u32>,
    /// Cells lighter than this are dropped from the extremal distribution.
    #[arg(long = "weight-floor")]
    pub weight_floor: Option<f64>,
    /// Points per axis of the certificate grid.
    #[arg(long = "verify-grid")]
    pub verify_grid: Option<usize>,
    /// Certificate grid box: `lo hi` for every axis, or `lo… hi…` per axis.
    #[arg(long = "verify-box", num_args = 2.., allow_negative_numbers = true)]
    pub verify_box: Option<Vec<String>>,
    /// Points per axis of the grid oracle.
    #[arg(long = "oracle-grid")]
    pub oracle_grid: Option<usize>,
    #[arg(long = "oracle-box", num_args = 2.., allow_negative_numbers = true)]
    pub oracle_box: Option<Vec<String>>,
    /// Write the compiled cone program as text.
    #[arg(long = "dump-conic")]
    pub dump_conic: Option<PathBuf>,
    /// Write the JSON report to a file as well as stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_box(raw: &[String], d: usize, fallback: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if raw.is_empty() {
        return Ok((vec![fallback.0; d], vec![fallback.1; d]));
    }
    let v = raw
        .iter()
        .map(|s| templates::parse_value(s))
        .collect::<Result<Vec<f64>>>()?;
    match v.len() {
        2 => Ok((vec![v[0]; d], vec![v[1]; d])),
        n if n == 2 * d => Ok((v[..d].to_vec(), v[d..].to_vec())),
        n => bail!("box needs 2 or {} values, got {n}", 2 * d),
    }
}

impl RunFlags {
    pub fn options(&self, dimension: usize, default_box: (f64, f64)) -> Result<BoundOptions> {
        let mut settings = SolverSettings::default();
        if let Some(t) = self.tol {
            settings = settings.with_tol(t);
        }
        if let Some(m) = self.max_iter {
            settings.max_iterations = m;
        }
        settings.validate()?;
        let grid = |n: Option<usize>, raw: &Option<Vec<String>>| -> Result<Option<GridSpec>> {
            match n {
                None if raw.is_none() => Ok(None),
                n => {
                    let (lo, hi) =
                        parse_box(raw.as_deref().unwrap_or(&[]), dimension, default_box)?;
                    let per_axis = n.unwrap_or(match dimension {
                        1 => 100_001,
                        2 => 317,
                        _ => 47,
                    });
                    Ok(Some(GridSpec::new(lo, hi, per_axis)?))
                }
            }
        };
        let verify = grid(self.verify_grid, &self.verify_box)?;
        let oracle = grid(self.oracle_grid, &self.oracle_box)?;
        Ok(BoundOptions {
            settings,
            weight_floor: self.weight_floor.unwrap_or(DEFAULT_WEIGHT_FLOOR),
            verify,
            verify_tol: self.tol.map_or(VERIFY_TOL, |t| t.max(VERIFY_TOL)),
            oracle,
        })
    }
}

/// Reads a JSON problem file. Parse errors name the line, column and field.
pub fn parse_problem_file(path: &Path) -> Result<OuqProblem> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_problem_str(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_problem_str(text: &str) -> Result<OuqProblem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let problem: OuqProblem = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("field '{}': {}", path, e.into_inner())
    })?;
    let diags = problem.validate();
    if !diags.is_empty() {
        bail!("invalid problem:\n  {}", diags.join("\n  "));
    }
    Ok(problem)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDigest {
    pub dimension: usize,
    /// Objective pieces `K`.
    pub k: usize,
    /// Pieces per inequality `Lᵢ`.
    pub l: Vec<usize>,
    /// Equality rows.
    pub q: usize,
    /// Support components `S`.
    pub s: usize,
    pub cells: usize,
}

impl ProblemDigest {
    pub fn of(p: &OuqProblem) -> Self {
        ProblemDigest {
            dimension: p.dimension,
            k: p.objective.pieces.len(),
            l: p.inequalities.iter().map(|g| g.pieces.len()).collect(),
            q: p.equality.as_ref().map_or(0, |e| e.rows()),
            s: p.support.sets.len(),
            cells: p.cell_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: ProblemDigest,
    pub status: Status,
    pub bound: Option<f64>,
    pub distribution: Option<DiscreteDistribution>,
    pub round_trip: Option<RoundTrip>,
    pub certificate: Option<DualCertificate>,
    pub verification: Option<CertificateReport>,
    pub oracle: Option<GridBound>,
    pub oracle_bound: Option<f64>,
    pub infeasibility_ray: Option<Vec<f64>>,
    pub stats: SolveStats,
}

/// Exit code for a solver status.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Optimal => 0,
        Status::Infeasible => 2,
        Status::Unbounded => 3,
        Status::MaxIter | Status::Numerical => 4,
    }
}

/// Runs the full pipeline on one problem.
pub fn run(problem: &OuqProblem, flags: &RunFlags, default_box: (f64, f64)) -> Result<RunReport> {
    let opts = flags.options(problem.dimension, default_box)?;
    if let Some(path) = &flags.dump_conic {
        let cp = compile(&reduce(problem)?);
        fs::write(path, cp.dump()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let r = solve_bound(problem, &opts)?;
    let report = RunReport {
        problem: ProblemDigest::of(problem),
        status: r.status,
        bound: r.bound,
        distribution: r.distribution,
        round_trip: r.round_trip,
        certificate: r.certificate,
        verification: r.verification,
        oracle_bound: r.oracle.as_ref().map(|o| o.value.to_f64()),
        oracle: r.oracle,
        infeasibility_ray: r.infeasibility_ray,
        stats: r.stats,
    };
    if let Some(path) = &flags.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "parameter,bound,dual_mu,gap,grid_violation,status,wall_ms";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Solves the template once per value and returns CSV lines (header first),
/// in the order the values were given.
/// `fixed` holds other template parameters kept constant across the sweep.
pub fn sweep(
    template: &str,
    param: &str,
    values: &[f64],
    fixed: &[(String, f64)],
    flags: &RunFlags,
    jobs: Option<usize>,
) -> Result<Vec<String>> {
    let t = templates::find(template)?;
    t.check_param(param)?;
    for (k, _) in fixed {
        t.check_param(k)?;
    }
    if values.is_empty() {
        bail!("no sweep values given");
    }
    let mut local = flags.clone();
    local.report = None;
    local.dump_conic = None;
    let job = |v: &f64| -> String {
        let started = Instant::now();
        let mut overrides = fixed.to_vec();
        overrides.push((param.to_string(), *v));
        let outcome = t
            .build(&overrides)
            .and_then(|p| run(&p, &local, (t.lo, t.hi)));
        let ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(r) => {
                let cert = r.certificate.as_ref();
                format!(
                    "{v},{},{},{},{},{},{ms:.3}",
                    cell(r.bound),
                    cell(cert.map(|c| c.mu)),
                    cell(cert.map(|c| c.gap)),
                    cell(cert.and_then(|c| c.grid_violation)),
                    r.status
                )
            }
            Err(e) => format!("{v},,,,,error: {},{ms:.3}", e.to_string().replace(',', ";")),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    let rows: Vec<String> = pool.install(|| values.par_iter().map(job).collect());
    Ok(std::iter::once(CSV_HEADER.to_string())
        .chain(rows)
        .collect())
}
