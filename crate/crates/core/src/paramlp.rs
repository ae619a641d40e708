//! Optimal values of parameterized linear programs as piecewise-concave
//! objectives.
//!
//! For `f(θ) = min cᵀx  s.t.  Ax ⪯ u(θ),  Hx = v` with convex `u`, duality
//! gives `f(θ) = max_k −λ_kᵀu(θ) − μ_kᵀv` over the vertices `(λ_k, μ_k)` of
//! `{Aᵀλ + Hᵀμ + c = 0, λ ⪰ 0}` whenever the primal is feasible. Each piece is
//! concave because `λ_k ⪰ 0`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{ConcaveAtom, ConcaveKind, ConvexAtom, ConvexKind};
use crate::cones::Cone;
use crate::conic::{ConeSpec, ConicProgram, Layout};
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::linalg::{least_squares, rank};
use crate::model::PiecewiseConcave;
use crate::solver::{solve, SolverSettings, Status};

/// Largest `m + q` accepted by basis enumeration.
pub const MAX_DUAL_DIM: usize = 24;

const RESIDUAL_TOL: f64 = 1e-8;
const NONNEG_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-7;
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLP {
    pub dimension: usize,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "H", default)]
    pub h: Vec<Vec<f64>>,
    #[serde(default)]
    pub v: Vec<f64>,
    pub u: Vec<ConvexAtom>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualVertex {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualVertexSet {
    /// Lexicographically sorted.
    pub vertices: Vec<DualVertex>,
    /// The dual polyhedron has recession directions, so the primal is
    /// infeasible for some `θ`. Where it is feasible the vertex maximum is
    /// still exact.
    pub has_rays: bool,
}

impl ParamLP {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mut out = Vec::new();
        if self.a.iter().chain(&self.h).any(|r| r.len() != n) {
            out.push(format!("every row of A and H must have length {n}"));
        }
        if self.v.len() != self.q() {
            out.push("v must have one entry per row of H".into());
        }
        if self.u.len() != self.m() {
            out.push("u must have one atom per row of A".into());
        }
        for (i, atom) in self.u.iter().enumerate() {
            out.extend(atom.issues().into_iter().map(|m| format!("u[{i}]: {m}")));
            match atom.dim() {
                Some(d) if d != self.dimension => out.push(format!(
                    "u[{i}]: dimension {d}, expected {}",
                    self.dimension
                )),
                None if atom.min_dim() > self.dimension => {
                    out.push(format!("u[{i}]: index out of range"))
                }
                _ => {}
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(OuqError::InvalidProblem(out))
        }
    }

    /// `u(θ)`.
    pub fn rhs_at(&self, theta: &[f64]) -> Result<Vec<ExtReal>> {
        self.u.iter().map(|a| a.evaluate(theta)).collect()
    }
}

/// Enumerates the vertices of `{(λ, μ): Aᵀλ + Hᵀμ + c = 0, λ ⪰ 0}` by basis
/// enumeration.
pub fn enumerate_dual_vertices(lp: &ParamLP) -> Result<DualVertexSet> {
    lp.validate()?;
    let (n, m, q) = (lp.n(), lp.m(), lp.q());
    if m + q > MAX_DUAL_DIM {
        return Err(OuqError::VertexEnumeration(format!(
            "m + q = {} exceeds {MAX_DUAL_DIM}; basis enumeration is combinatorial, reduce the LP or split it",
            m + q
        )));
    }
    let at = DMatrix::from_fn(n, m, |r, i| lp.a[i][r]);
    let ht = DMatrix::from_fn(n, q, |r, j| lp.h[j][r]);
    if rank(&ht, RANK_TOL) < q {
        return Err(OuqError::VertexEnumeration(
            "rows of H are dependent, so μ has a free direction".into(),
        ));
    }
    let full = DMatrix::from_fn(
        n,
        m + q,
        |r, k| if k < m { at[(r, k)] } else { ht[(r, k - m)] },
    );
    let r = rank(&full, RANK_TOL);
    let rhs = DVector::from_iterator(n, lp.c.iter().map(|c| -c));
    let scale = 1.0 + rhs.amax();
    let bases: Vec<Vec<usize>> = (0..m).combinations(r - q).collect();
    let found: Vec<DualVertex> = bases
        .par_iter()
        .filter_map(|basis| {
            let cols = basis.len() + q;
            let sub = DMatrix::from_fn(n, cols, |row, k| {
                if k < basis.len() {
                    at[(row, basis[k])]
                } else {
                    ht[(row, k - basis.len())]
                }
            });
            if rank(&sub, RANK_TOL) < cols {
                return None;
            }
            let (y, res) = least_squares(&sub, &rhs)?;
            if res > RESIDUAL_TOL * scale || y.iter().take(basis.len()).any(|&l| l < -NONNEG_TOL) {
                return None;
            }
            let mut lambda = vec![0.0; m];
            for (k, &i) in basis.iter().enumerate() {
                lambda[i] = y[k].max(0.0);
            }
            let mu = y.iter().skip(basis.len()).copied().collect();
            Some(DualVertex { lambda, mu })
        })
        .collect();
    let mut keyed: Vec<(Vec<i64>, DualVertex)> = found
        .into_iter()
        .map(|v| {
            let key = v
                .lambda
                .iter()
                .chain(&v.mu)
                .map(|x| (x / DEDUP_TOL).round() as i64)
                .collect();
            (key, v)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    let mut vertices: Vec<DualVertex> = keyed.into_iter().map(|(_, v)| v).collect();
    vertices.sort_by(|a, b| {
        a.lambda
            .iter()
            .chain(&a.mu)
            .zip(b.lambda.iter().chain(&b.mu))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if vertices.is_empty() {
        return Err(OuqError::VertexEnumeration(
            "the dual polyhedron has no vertices, so the LP is unbounded or infeasible for every θ"
                .into(),
        ));
    }
    let has_rays = dual_has_rays(lp)?;
    Ok(DualVertexSet { vertices, has_rays })
}

/// Whether some `λ ⪰ 0`, `λ ≠ 0` has `Aᵀλ + Hᵀμ = 0`.
fn dual_has_rays(lp: &ParamLP) -> Result<bool> {
    let (n, m, q) = (lp.n(), lp.m(), lp.q());
    if m == 0 {
        return Ok(false);
    }
    let mut triplets = Vec::new();
    for r in 0..n {
        for i in 0..m {
            triplets.push((r, i, lp.a[i][r]));
        }
        for j in 0..q {
            triplets.push((r, m + j, lp.h[j][r]));
        }
    }
    for i in 0..m {
        triplets.push((n + i, i, -1.0));
        triplets.push((n + m, i, 1.0));
    }
    let mut b = vec![0.0; n + m];
    b.push(1.0);
    let mut c = vec![-1.0; m];
    c.extend(vec![0.0; q]);
    let cp = ConicProgram {
        n: m + q,
        c,
        triplets,
        b,
        cones: [
            ConeSpec {
                cone: Cone::Zero,
                len: n,
            },
            ConeSpec {
                cone: Cone::Nonneg,
                len: m + 1,
            },
        ]
        .into_iter()
        .filter(|k| k.len > 0)
        .collect(),
        layout: Layout::default(),
    };
    let sol = solve(&cp, &SolverSettings::default())?;
    match sol.status {
        Status::Optimal => Ok(sol.primal_objective < -1e-7),
        other => Err(OuqError::NotOptimal(other.to_string())),
    }
}

/// `−Σ λᵢ uᵢ(θ) − μᵀv` as one concave atom.
fn vertex_piece(lp: &ParamLP, vertex: &DualVertex) -> ConcaveAtom {
    let d = lp.dimension;
    let mut p = vec![vec![0.0; d]; d];
    let mut a = vec![0.0; d];
    let mut r = -vertex.mu.iter().zip(&lp.v).map(|(m, v)| m * v).sum::<f64>();
    let mut quadratic = false;
    for (atom, &l) in lp.u.iter().zip(&vertex.lambda) {
        if l == 0.0 {
            continue;
        }
        r -= l * atom.offset;
        match &atom.kind {
            ConvexKind::Affine { a: ai, b } => {
                for (x, y) in a.iter_mut().zip(ai) {
                    *x -= l * y;
                }
                r -= l * b;
            }
            ConvexKind::Constant { r: ri } => r -= l * ri,
            ConvexKind::ConvexQuadratic { p: pi, q, r: ri } => {
                quadratic = true;
                for (row, src) in p.iter_mut().zip(pi) {
                    for (x, y) in row.iter_mut().zip(src) {
                        *x += l * y;
                    }
                }
                for (x, y) in a.iter_mut().zip(q) {
                    *x -= l * y;
                }
                r -= l * ri;
            }
            _ => unreachable!("checked by to_piecewise_concave"),
        }
    }
    if quadratic {
        ConcaveAtom::new(ConcaveKind::ConcaveQuadratic { p, q: a, r })
    } else {
        ConcaveAtom::affine(a, r)
    }
}

/// One concave piece per dual vertex.
pub fn to_piecewise_concave(lp: &ParamLP) -> Result<PiecewiseConcave> {
    let bad: Vec<String> =
        lp.u.iter()
            .enumerate()
            .filter(|(_, a)| {
                !matches!(
                    a.kind,
                    ConvexKind::Affine { .. }
                        | ConvexKind::ConvexQuadratic { .. }
                        | ConvexKind::Constant { .. }
                )
            })
            .map(|(i, _)| format!("u[{i}] must be affine or convex_quadratic"))
            .collect();
    if !bad.is_empty() {
        return Err(OuqError::InvalidProblem(bad));
    }
    let set = enumerate_dual_vertices(lp)?;
    Ok(PiecewiseConcave::new(
        set.vertices.iter().map(|v| vertex_piece(lp, v)).collect(),
    ))
}

/// Optimal value at `θ` by a direct solve; `+∞` when the LP is infeasible.
pub fn solve_lp_at(lp: &ParamLP, theta: &[f64], settings: &SolverSettings) -> Result<ExtReal> {
    lp.validate()?;
    let rhs = lp
        .rhs_at(theta)?
        .into_iter()
        .map(|v| {
            v.finite()
                .ok_or_else(|| OuqError::InvalidArgument("u(θ) must be finite".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (n, m, q) = (lp.n(), lp.m(), lp.q());
    let mut triplets = Vec::new();
    for (j, row) in lp.h.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            triplets.push((j, k, v));
        }
    }
    for (i, row) in lp.a.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            triplets.push((q + i, k, v));
        }
    }
    let mut b = lp.v.clone();
    b.extend(rhs);
    let cp = ConicProgram {
        n,
        c: lp.c.clone(),
        triplets,
        b,
        cones: [
            ConeSpec {
                cone: Cone::Zero,
                len: q,
            },
            ConeSpec {
                cone: Cone::Nonneg,
                len: m,
            },
        ]
        .into_iter()
        .filter(|k| k.len > 0)
        .collect(),
        layout: Layout::default(),
    };
    let sol = solve(&cp, settings)?;
    match sol.status {
        Status::Optimal => Ok(ExtReal::Finite(sol.primal_objective)),
        Status::Infeasible => Ok(ExtReal::PosInf),
        Status::Unbounded => Err(OuqError::UnboundedLp),
        other => Err(OuqError::NotOptimal(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps;

    fn one_d(u1: ConvexAtom, u2: ConvexAtom) -> ParamLP {
        // min −x  s.t.  x ≤ u₁(θ),  −x ≤ u₂(θ)
        ParamLP {
            dimension: 1,
            c: vec![-1.0],
            a: vec![vec![1.0], vec![-1.0]],
            h: vec![],
            v: vec![],
            u: vec![u1, u2],
        }
    }

    #[test]
    fn one_dimensional_sign_convention() {
        let lp = one_d(
            ConvexAtom::affine(vec![1.0], 2.0),
            ConvexAtom::constant(5.0),
        );
        let set = enumerate_dual_vertices(&lp).unwrap();
        assert_eq!(set.vertices.len(), 1);
        assert!(
            (set.vertices[0].lambda[0] - 1.0).abs() < 1e-12 && set.vertices[0].lambda[1] == 0.0
        );
        assert!(set.has_rays);
        let f = to_piecewise_concave(&lp).unwrap();
        for th in [-1.0, 0.0, 2.5] {
            let direct = solve_lp_at(&lp, &[th], &SolverSettings::default())
                .unwrap()
                .to_f64();
            assert!((direct - (-(th + 2.0))).abs() < 1e-7);
            assert!((f.evaluate(&[th]).unwrap().to_f64() - direct).abs() < 1e-7);
        }
        // x ≤ θ+2 and x ≥ 5 is infeasible for θ < 3
        assert_eq!(
            solve_lp_at(&lp, &[-10.0], &SolverSettings::default()).unwrap(),
            ExtReal::PosInf
        );
    }

    #[test]
    fn simplex_dual_has_three_vertices() {
        // min x  s.t.  x ≥ −uᵢ(θ): dual is {λ ⪰ 0, Σλ = 1}
        let lp = ParamLP {
            dimension: 1,
            c: vec![1.0],
            a: vec![vec![-1.0]; 3],
            h: vec![],
            v: vec![],
            u: vec![
                ConvexAtom::affine(vec![1.0], 0.0),
                ConvexAtom::affine(vec![-1.0], 0.0),
                ConvexAtom::constant(-0.5),
            ],
        };
        let set = enumerate_dual_vertices(&lp).unwrap();
        assert_eq!(set.vertices.len(), 3);
        assert!(!set.has_rays);
        let f = to_piecewise_concave(&lp).unwrap();
        assert_eq!(f.pieces.len(), 3);
        for th in [-2.0, -0.5, -0.3, 0.0, 0.4, 2.0] {
            let direct = solve_lp_at(&lp, &[th], &SolverSettings::default())
                .unwrap()
                .to_f64();
            assert!((direct - f64::max(th.abs(), 0.5)).abs() < 1e-7);
            assert!(
                (f.evaluate(&[th]).unwrap().to_f64() - direct).abs() < 1e-7,
                "θ={th}"
            );
        }
    }

    #[test]
    fn affine_components_give_affine_pieces() {
        let lp = one_d(
            ConvexAtom::affine(vec![2.0], 1.0),
            ConvexAtom::constant(3.0),
        );
        let f = to_piecewise_concave(&lp).unwrap();
        assert_eq!(f.pieces.len(), 1);
        let ConcaveKind::Affine { a, b } = &f.pieces[0].kind else {
            panic!("not affine")
        };
        assert!((a[0] + 2.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_components_give_quadratic_pieces() {
        let lp = one_d(
            ConvexAtom::convex_quadratic(vec![vec![1.0]], vec![0.0], 1.0).unwrap(),
            ConvexAtom::constant(10.0),
        );
        let f = to_piecewise_concave(&lp).unwrap();
        assert!(matches!(
            f.pieces[0].kind,
            ConcaveKind::ConcaveQuadratic { .. }
        ));
        assert!(f.pieces[0].issues().is_empty());
    }

    #[test]
    fn rejects_non_closed_components() {
        let lp = one_d(ConvexAtom::abs(0), ConvexAtom::constant(1.0));
        assert!(matches!(
            to_piecewise_concave(&lp),
            Err(OuqError::InvalidProblem(_))
        ));
    }

    #[test]
    fn empty_dual_is_an_error() {
        // min −x with x ≤ u and no lower bound on −x direction: dual λ = −1 < 0
        let lp = ParamLP {
            dimension: 1,
            c: vec![1.0],
            a: vec![vec![1.0]],
            h: vec![],
            v: vec![],
            u: vec![ConvexAtom::constant(1.0)],
        };
        assert!(matches!(
            enumerate_dual_vertices(&lp),
            Err(OuqError::VertexEnumeration(_))
        ));
        assert!(matches!(
            solve_lp_at(&lp, &[0.0], &SolverSettings::default()),
            Err(OuqError::UnboundedLp)
        ));
    }

    #[test]
    fn dimension_cap() {
        let m = 25;
        let lp = ParamLP {
            dimension: 1,
            c: vec![1.0],
            a: vec![vec![-1.0]; m],
            h: vec![],
            v: vec![],
            u: vec![ConvexAtom::constant(0.0); m],
        };
        let err = enumerate_dual_vertices(&lp).unwrap_err().to_string();
        assert!(err.contains("exceeds"));
    }

    #[test]
    fn dc_opf_breakpoints_agree() {
        let lp = apps::build_dc_opf(&apps::DcOpfNetwork::three_node_line()).unwrap();
        let f = to_piecewise_concave(&lp).unwrap();
        assert!(f.pieces.len() >= 2);
        // at θ = 0 the generator output is exactly at the cost kink
        let th = apps::DcOpfNetwork::three_node_line().kink_theta();
        let vals: Vec<f64> = f
            .pieces
            .iter()
            .map(|p| p.evaluate(&th).unwrap().to_f64())
            .collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            vals.iter().filter(|&&v| (v - top).abs() < 1e-7).count() >= 2,
            "{vals:?}"
        );
        let direct = solve_lp_at(&lp, &th, &SolverSettings::default())
            .unwrap()
            .to_f64();
        assert!((top - direct).abs() < 1e-7);
    }
}
