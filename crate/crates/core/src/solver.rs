//! Interior-point solve of a [`ConicProgram`].
//!
//! The numerical core is the Clarabel homogeneous-embedding interior-point
//! method (Nesterov–Todd scaling, Mehrotra predictor-corrector, regularized
//! quasi-definite LDLᵀ with iterative refinement). This module equilibrates
//! the program, maps rotated cones onto second-order cones, and checks the
//! returned point against its own residuals before calling it optimal.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::cones::Cone;
use crate::conic::{presolve, ConicProgram, PresolveFlag};
use crate::error::{OuqError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: u32,
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub step_fraction: f64,
    pub static_regularization: f64,
    /// Run [`presolve`] before the interior-point method.
    pub presolve: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 200,
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            step_fraction: 0.99,
            static_regularization: 1e-9,
            presolve: true,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.feasibility_tol = tol;
        self.gap_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.feasibility_tol,
            self.gap_tol,
            self.step_fraction,
            self.static_regularization,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(OuqError::InvalidArgument(
                "solver settings must be positive".into(),
            ));
        }
        if self.feasibility_tol >= 1.0 || self.gap_tol >= 1.0 || self.step_fraction >= 1.0 {
            return Err(OuqError::InvalidArgument(
                "tolerances and step fraction must be below 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    Numerical,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIter => "max_iter",
            Status::Numerical => "numerical",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Residuals that do not apply to a certificate are NaN (`null` in JSON).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    #[serde(with = "nan_null")]
    pub primal: f64,
    #[serde(with = "nan_null")]
    pub dual: f64,
    #[serde(with = "nan_null")]
    pub gap: f64,
}

mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Primal-dual point. For `Infeasible`, `z` is a Farkas ray
/// (`Aᵀz = 0, bᵀz < 0, z ∈ K*`); for `Unbounded`, `x` is a descent ray
/// (`Ax ∈ −K, cᵀx < 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub residuals: Residuals,
    pub solve_ms: f64,
}

/// Rows of each rotated cone `(u, v, w)` become `((u+v)/√2, (u−v)/√2, w)`,
/// which lies in the second-order cone exactly when the original lies in the
/// rotated one. The map is its own inverse.
fn rotate_pairs(cp: &ConicProgram) -> Vec<usize> {
    cp.cone_ranges()
        .into_iter()
        .filter(|(k, _)| *k == Cone::Rsoc)
        .map(|(_, r)| r.start)
        .collect()
}

fn rotate(v: &mut [f64], starts: &[usize]) {
    for &i in starts {
        let (u, w) = (v[i], v[i + 1]);
        v[i] = (u + w) * FRAC_1_SQRT_2;
        v[i + 1] = (u - w) * FRAC_1_SQRT_2;
    }
}

fn clarabel_inputs(cp: &ConicProgram) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let starts = rotate_pairs(cp);
    let mut first = vec![false; cp.m()];
    for &i in &starts {
        first[i] = true;
    }
    let mut rows = Vec::with_capacity(cp.triplets.len() * 2);
    let mut cols = Vec::with_capacity(rows.capacity());
    let mut vals = Vec::with_capacity(rows.capacity());
    for &(i, j, v) in &cp.triplets {
        if first[i] {
            // row i → (row i + row i+1)/√2, row i+1 → (row i − row i+1)/√2
            rows.extend([i, i + 1]);
            cols.extend([j, j]);
            vals.extend([v * FRAC_1_SQRT_2, v * FRAC_1_SQRT_2]);
        } else if i > 0 && first[i - 1] {
            rows.extend([i - 1, i]);
            cols.extend([j, j]);
            vals.extend([v * FRAC_1_SQRT_2, -v * FRAC_1_SQRT_2]);
        } else {
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
    }
    let a = CscMatrix::new_from_triplets(cp.m(), cp.n, rows, cols, vals);
    let mut b = cp.b.clone();
    rotate(&mut b, &starts);
    let cones = cp
        .cones
        .iter()
        .map(|k| match k.cone {
            Cone::Zero => SupportedConeT::ZeroConeT(k.len),
            Cone::Nonneg => SupportedConeT::NonnegativeConeT(k.len),
            Cone::Soc | Cone::Rsoc => SupportedConeT::SecondOrderConeT(k.len),
        })
        .collect();
    (a, b, cones)
}

fn clarabel_settings(s: &SolverSettings) -> Result<DefaultSettings<f64>> {
    DefaultSettingsBuilder::default()
        .max_iter(s.max_iterations)
        .verbose(false)
        .max_step_fraction(s.step_fraction)
        .tol_feas(s.feasibility_tol)
        .tol_gap_abs(s.gap_tol)
        .tol_gap_rel(s.gap_tol)
        .static_regularization_constant(s.static_regularization)
        .presolve_enable(false)
        .max_threads(1)
        .build()
        .map_err(|e| OuqError::Solver(e.to_string()))
}

/// Residual norms of a primal-dual point. For rays the residual of the
/// certificate is reported in `dual` (infeasible: `‖Aᵀz‖∞ / |bᵀz|`) or
/// `primal` (unbounded: `max(Ax + s) / |cᵀx|`).
pub fn residuals(cp: &ConicProgram, sol: &ConicSolution) -> Residuals {
    match sol.status {
        Status::Infeasible => {
            let btz: f64 = cp.b.iter().zip(&sol.z).map(|(b, z)| b * z).sum();
            let atz = cp.mul_transpose(&sol.z);
            Residuals {
                primal: f64::NAN,
                dual: inf_norm(&atz) / btz.abs().max(f64::MIN_POSITIVE),
                gap: f64::NAN,
            }
        }
        Status::Unbounded => {
            let ctx: f64 = cp.c.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
            let ax = cp.mul(&sol.x);
            let r: Vec<f64> = ax.iter().zip(&sol.s).map(|(a, s)| a + s).collect();
            Residuals {
                primal: inf_norm(&r) / ctx.abs().max(f64::MIN_POSITIVE),
                dual: f64::NAN,
                gap: f64::NAN,
            }
        }
        _ => point_residuals(cp, &sol.x, &sol.s, &sol.z),
    }
}

fn point_residuals(cp: &ConicProgram, x: &[f64], s: &[f64], z: &[f64]) -> Residuals {
    let ax = cp.mul(x);
    let rp: Vec<f64> = ax
        .iter()
        .zip(s)
        .zip(&cp.b)
        .map(|((a, s), b)| a + s - b)
        .collect();
    let atz = cp.mul_transpose(z);
    let rd: Vec<f64> = atz.iter().zip(&cp.c).map(|(a, c)| a + c).collect();
    let ctx: f64 = cp.c.iter().zip(x).map(|(c, x)| c * x).sum();
    let btz: f64 = cp.b.iter().zip(z).map(|(b, z)| b * z).sum();
    Residuals {
        primal: inf_norm(&rp),
        dual: inf_norm(&rd),
        gap: (ctx + btz).abs(),
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `min cᵀx  s.t.  Ax + s = b,  s ∈ K`. Deterministic for identical
/// inputs; never panics on a well-formed program.
///
/// A presolved run that ends `Numerical` or `MaxIter` is repeated on the
/// unscaled program, and the repeat is kept if it does better.
pub fn solve(cp: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    let first = solve_once(cp, settings)?;
    if !settings.presolve || !matches!(first.status, Status::Numerical | Status::MaxIter) {
        return Ok(first);
    }
    let plain = SolverSettings {
        presolve: false,
        ..settings.clone()
    };
    let mut second = solve_once(cp, &plain)?;
    if matches!(second.status, Status::Numerical | Status::MaxIter) {
        return Ok(first);
    }
    second.iterations += first.iterations;
    second.solve_ms += first.solve_ms;
    Ok(second)
}

fn solve_once(cp: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    settings.validate()?;
    let started = Instant::now();
    if cp.c.len() != cp.n || cp.cones.iter().map(|k| k.len).sum::<usize>() != cp.m() {
        return Err(OuqError::Solver(
            "cone lengths or objective length do not match the matrix".into(),
        ));
    }
    let (work, pre) = if settings.presolve {
        let ps = presolve(cp);
        match ps.flag {
            PresolveFlag::Infeasible | PresolveFlag::Unbounded => {
                let status = if ps.flag == PresolveFlag::Infeasible {
                    Status::Infeasible
                } else {
                    Status::Unbounded
                };
                return Ok(ConicSolution {
                    status,
                    x: vec![0.0; cp.n],
                    s: cp.b.clone(),
                    z: vec![0.0; cp.m()],
                    primal_objective: f64::NAN,
                    dual_objective: f64::NAN,
                    iterations: 0,
                    residuals: Residuals {
                        primal: f64::NAN,
                        dual: f64::NAN,
                        gap: f64::NAN,
                    },
                    solve_ms: started.elapsed().as_secs_f64() * 1e3,
                });
            }
            PresolveFlag::None => (ps.program.clone(), Some(ps)),
        }
    } else {
        (cp.clone(), None)
    };

    let (a, b, cones) = clarabel_inputs(&work);
    let p = CscMatrix::zeros((work.n, work.n));
    let mut solver = DefaultSolver::new(&p, &work.c, &a, &b, &cones, clarabel_settings(settings)?)
        .map_err(|e| OuqError::Solver(format!("{e:?}")))?;
    solver.solve();
    let out = &solver.solution;
    let starts = rotate_pairs(&work);
    let (mut s, mut z) = (out.s.clone(), out.z.clone());
    rotate(&mut s, &starts);
    rotate(&mut z, &starts);
    let (x, s, z) = match &pre {
        Some(ps) => ps.restore(&out.x, &s, &z)?,
        None => (out.x.clone(), s, z),
    };

    let mut status = match out.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::MaxIter,
        _ => Status::Numerical,
    };
    let ctx: f64 = cp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let btz: f64 = cp.b.iter().zip(&z).map(|(b, z)| b * z).sum();
    let mut sol = ConicSolution {
        status,
        x,
        s,
        z,
        primal_objective: ctx,
        dual_objective: -btz,
        iterations: out.iterations,
        residuals: Residuals::default(),
        solve_ms: 0.0,
    };
    sol.residuals = residuals(cp, &sol);
    if status == Status::Optimal {
        let r = sol.residuals;
        let scale = 1.0 + ctx.abs();
        let loose = 1e3;
        if !(r.primal <= loose * settings.feasibility_tol * (1.0 + inf_norm(&cp.b))
            && r.dual <= loose * settings.feasibility_tol * (1.0 + inf_norm(&cp.c))
            && r.gap <= loose * settings.gap_tol * scale)
        {
            status = Status::Numerical;
        }
        if out.status == SolverStatus::AlmostSolved
            && !(r.primal <= settings.feasibility_tol * (1.0 + inf_norm(&cp.b))
                && r.gap <= settings.gap_tol * scale)
        {
            status = Status::Numerical;
        }
        sol.status = status;
    }
    sol.solve_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}
