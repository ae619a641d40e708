//! End-to-end bound computation: reduce, compile, solve, recover, certify.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::compile;
use crate::duality::{
    extract_multipliers, verify_certificate, CertificateReport, DualCertificate, VERIFY_TOL,
};
use crate::error::Result;
use crate::model::OuqProblem;
use crate::oracle::{grid_bound, GridBound, GridSpec};
use crate::reduce::{recover_distribution, reduce, DiscreteDistribution, DEFAULT_WEIGHT_FLOOR};
use crate::solver::{solve, Residuals, SolverSettings, Status};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub settings: SolverSettings,
    pub weight_floor: f64,
    /// Grid for the certificate check, if any.
    pub verify: Option<GridSpec>,
    pub verify_tol: f64,
    /// Grid for the discretized lower bound, if any.
    pub oracle: Option<GridSpec>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            settings: SolverSettings::default(),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            verify: None,
            verify_tol: VERIFY_TOL,
            oracle: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub cells: usize,
    pub rows: usize,
    pub cols: usize,
    pub iterations: u32,
    pub residuals: Residuals,
    pub solve_ms: f64,
    pub total_ms: f64,
}

/// The recovered distribution evaluated with the full piecewise functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub objective: f64,
    pub max_violation: f64,
    pub support_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub status: Status,
    /// Worst-case expectation, present when optimal.
    pub bound: Option<f64>,
    pub distribution: Option<DiscreteDistribution>,
    pub round_trip: Option<RoundTrip>,
    pub certificate: Option<DualCertificate>,
    pub verification: Option<CertificateReport>,
    pub oracle: Option<GridBound>,
    /// Farkas ray over the program rows when infeasible.
    pub infeasibility_ray: Option<Vec<f64>>,
    pub stats: SolveStats,
}

pub fn solve_bound(problem: &OuqProblem, opts: &BoundOptions) -> Result<BoundReport> {
    let started = Instant::now();
    let program = reduce(problem)?;
    let cp = compile(&program);
    let sol = solve(&cp, &opts.settings)?;
    let mut report = BoundReport {
        status: sol.status,
        bound: None,
        distribution: None,
        round_trip: None,
        certificate: None,
        verification: None,
        oracle: None,
        infeasibility_ray: None,
        stats: SolveStats {
            cells: program.cells.len(),
            rows: cp.m(),
            cols: cp.n,
            iterations: sol.iterations,
            residuals: sol.residuals,
            solve_ms: sol.solve_ms,
            total_ms: 0.0,
        },
    };
    match sol.status {
        Status::Optimal => {
            report.bound = Some(-sol.primal_objective);
            let dist = recover_distribution(&program, &cp.cell_values(&sol.x), opts.weight_floor)?;
            let e = problem.evaluate_expectation(&dist)?;
            report.round_trip = Some(RoundTrip {
                objective: e.objective.to_f64(),
                max_violation: e.max_violation(),
                support_violations: e.support_violations,
            });
            report.distribution = Some(dist);
            let mut cert = extract_multipliers(&program, &cp, &sol)?;
            if let Some(grid) = &opts.verify {
                let rep = verify_certificate(problem, &cert, grid, opts.verify_tol)?;
                cert.grid_violation = Some(rep.max_slack);
                report.verification = Some(rep);
            }
            report.certificate = Some(cert);
        }
        Status::Infeasible => report.infeasibility_ray = Some(sol.z.clone()),
        _ => {}
    }
    if let Some(grid) = &opts.oracle {
        report.oracle = Some(grid_bound(problem, grid, &opts.settings)?);
    }
    report.stats.total_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
