//! Lagrange multipliers of the problem and their certification.
//!
//! With multipliers `λ ⪰ 0`, `ν` and `μ` satisfying
//! `f(θ) − λᵀg(θ) − νᵀh(θ) ≤ μ` for every `θ ∈ Θ`, every feasible
//! distribution has `E[f] ≤ μ`. The multipliers come from the conic dual; the
//! semi-infinite constraint is then checked on a grid. A passing grid check
//! can only falsify, never prove, the certificate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::ConcaveAtom;
use crate::conic::ConicProgram;
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::model::OuqProblem;
use crate::oracle::GridSpec;
use crate::reduce::ReducedProgram;
use crate::solver::{ConicSolution, Status};

/// Default tolerance on the grid slack.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    /// Certified bound `μ`.
    pub mu: f64,
    /// Raw dual of the simplex row; equals `μ + νᵀb` for `h = Aᵀθ + b`.
    pub simplex_dual: f64,
    /// `|primal bound − μ|`.
    pub gap: f64,
    pub grid_violation: Option<f64>,
}

/// Reads `(λ, ν, μ)` off the conic dual of an optimal solve.
pub fn extract_multipliers(
    program: &ReducedProgram,
    cp: &ConicProgram,
    sol: &ConicSolution,
) -> Result<DualCertificate> {
    if sol.status != Status::Optimal {
        return Err(OuqError::NotOptimal(sol.status.to_string()));
    }
    let lambda: Vec<f64> = cp
        .layout
        .inequality_rows
        .clone()
        .map(|i| sol.z[i].max(0.0))
        .collect();
    let nu: Vec<f64> = cp.layout.equality_rows.clone().map(|i| sol.z[i]).collect();
    let simplex_dual = cp.layout.simplex_row.map_or(0.0, |i| sol.z[i]);
    let shift = program
        .problem
        .equality
        .as_ref()
        .map_or(0.0, |eq| eq.b.iter().zip(&nu).map(|(b, n)| b * n).sum());
    let mu = simplex_dual - shift;
    let bound = -sol.primal_objective;
    Ok(DualCertificate {
        lambda,
        nu,
        mu,
        simplex_dual,
        gap: (bound - mu).abs(),
        grid_violation: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `max f − λᵀg − νᵀh − μ` over the checked points.
    pub max_slack: f64,
    pub argmax: Vec<f64>,
    pub points_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Lagrangian slack at one point; `None` where the point is outside the
/// support or `f = −∞` or some `gᵢ = +∞`.
pub fn lagrangian_slack(
    problem: &OuqProblem,
    cert: &DualCertificate,
    theta: &[f64],
) -> Result<Option<f64>> {
    if !problem.support.contains(theta)? {
        return Ok(None);
    }
    let ExtReal::Finite(mut v) = problem.objective.evaluate(theta)? else {
        return Ok(None);
    };
    for (g, l) in problem.inequalities.iter().zip(&cert.lambda) {
        match g.evaluate(theta)? {
            ExtReal::Finite(gv) => v -= l * gv,
            ExtReal::PosInf => return Ok(None),
            ExtReal::NegInf => {
                if *l > 0.0 {
                    return Ok(Some(f64::INFINITY));
                }
            }
        }
    }
    if let Some(eq) = &problem.equality {
        v -= eq
            .evaluate(theta)
            .iter()
            .zip(&cert.nu)
            .map(|(h, n)| h * n)
            .sum::<f64>();
    }
    Ok(Some(v - cert.mu))
}

/// Maximizes the Lagrangian slack over the grid points in the support.
pub fn verify_certificate(
    problem: &OuqProblem,
    cert: &DualCertificate,
    grid: &GridSpec,
    tolerance: f64,
) -> Result<CertificateReport> {
    if grid.is_empty() {
        return Err(OuqError::Grid("empty grid".into()));
    }
    if grid.dim() != problem.dimension {
        return Err(OuqError::DimensionMismatch {
            expected: problem.dimension,
            got: grid.dim(),
        });
    }
    let best = (0..grid.len())
        .into_par_iter()
        .map(|k| lagrangian_slack(problem, cert, &grid.point(k)).map(|s| s.map(|v| (v, k))))
        .try_fold(
            || (None::<(f64, usize)>, 0usize),
            |(acc, count), r| {
                r.map(|s| match s {
                    None => (acc, count),
                    Some(cur) => (Some(better(acc, cur)), count + 1),
                })
            },
        )
        .try_reduce(
            || (None, 0),
            |(a, ca), (b, cb)| {
                let m = match (a, b) {
                    (Some(x), Some(y)) => Some(better(Some(x), y)),
                    (x, None) => x,
                    (None, y) => y,
                };
                Ok((m, ca + cb))
            },
        )?;
    let (Some((max_slack, k)), points_checked) = best else {
        return Err(OuqError::Grid(
            "no grid point lies in the support with finite values".into(),
        ));
    };
    Ok(CertificateReport {
        max_slack,
        argmax: grid.point(k),
        points_checked,
        tolerance,
        passed: max_slack <= tolerance,
    })
}

/// Larger slack wins; ties go to the lower grid index so the argmax is
/// independent of the thread schedule.
fn better(acc: Option<(f64, usize)>, cur: (f64, usize)) -> (f64, usize) {
    match acc {
        Some(a) if a.0 > cur.0 || (a.0 == cur.0 && a.1 < cur.1) => a,
        _ => cur,
    }
}

/// Both sides of the piece-wise relaxation identity on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationValues {
    /// `max_{p ∈ simplex} Σ p_k · max_θ f⁽ᵏ⁾(θ)`, per-piece locations free.
    pub relaxed: f64,
    /// `max_θ max_k f⁽ᵏ⁾(θ)`.
    pub direct: f64,
}

pub fn simplex_relaxation_values(
    pieces: &[ConcaveAtom],
    grid: &GridSpec,
) -> Result<RelaxationValues> {
    if pieces.is_empty() {
        return Err(OuqError::InvalidArgument("no pieces".into()));
    }
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.point(k)).collect();
    let mut per_piece = Vec::with_capacity(pieces.len());
    for f in pieces {
        let mut best = f64::NEG_INFINITY;
        for th in &points {
            best = best.max(f.evaluate(th)?.to_f64());
        }
        per_piece.push(best);
    }
    let mut direct = f64::NEG_INFINITY;
    for th in &points {
        for f in pieces {
            direct = direct.max(f.evaluate(th)?.to_f64());
        }
    }
    // The relaxed objective is linear in p, so its maximum sits at a vertex
    // of the simplex.
    let relaxed = per_piece.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RelaxationValues { relaxed, direct })
}

/// Whether the two sides agree within `1e−9`.
pub fn simplex_relaxation_check(pieces: &[ConcaveAtom], grid: &GridSpec) -> Result<bool> {
    let v = simplex_relaxation_values(pieces, grid)?;
    Ok((v.relaxed - v.direct).abs() <= 1e-9)
}
