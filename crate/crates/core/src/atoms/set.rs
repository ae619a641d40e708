use serde::{Deserialize, Serialize};

use super::block::{ConeGroup, LinExpr, Local};
use crate::cones::{norm, Cone};
use crate::error::{OuqError, Result};
use crate::linalg::dot;

/// Convex set used for indicator atoms and support components.
///
/// A halfspace `{θ : aᵀθ ≤ b}`, a polytope `{θ : Aθ ⪯ b}`, a box `lo ⪯ θ ⪯ hi`
/// or a Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSetDesc {
    Polytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Halfspace {
        a: Vec<f64>,
        b: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

const BALL_TOL: f64 = 1e-12;

impl ConvexSetDesc {
    /// `{θ : θᵢ ≥ value}` in dimension `dim`.
    pub fn at_least(dim: usize, index: usize, value: f64) -> Self {
        let mut a = vec![0.0; dim];
        a[index] = -1.0;
        ConvexSetDesc::Halfspace { a, b: -value }
    }

    /// `{θ : θᵢ ≤ value}` in dimension `dim`.
    pub fn at_most(dim: usize, index: usize, value: f64) -> Self {
        let mut a = vec![0.0; dim];
        a[index] = 1.0;
        ConvexSetDesc::Halfspace { a, b: value }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        ConvexSetDesc::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSetDesc::Polytope { a, .. } => a.first().map_or(0, Vec::len),
            ConvexSetDesc::Halfspace { a, .. } => a.len(),
            ConvexSetDesc::Box { lo, .. } => lo.len(),
            ConvexSetDesc::Ball { center, .. } => center.len(),
        }
    }

    /// Violated invariants, empty when well formed.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ConvexSetDesc::Polytope { a, b } => {
                let d = self.dim();
                if a.len() != b.len() {
                    out.push(format!(
                        "polytope has {} rows but {} right-hand sides",
                        a.len(),
                        b.len()
                    ));
                }
                if a.iter().any(|r| r.len() != d) {
                    out.push("polytope rows have inconsistent lengths".into());
                }
                if a.iter().flatten().chain(b).any(|v| !v.is_finite()) {
                    out.push("polytope entries must be finite".into());
                }
            }
            ConvexSetDesc::Halfspace { a, b } => {
                if a.iter().chain(std::iter::once(b)).any(|v| !v.is_finite()) {
                    out.push("halfspace entries must be finite".into());
                }
                if a.iter().all(|v| *v == 0.0) {
                    out.push("halfspace normal is zero".into());
                }
            }
            ConvexSetDesc::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    out.push("box bounds have different lengths".into());
                } else if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    out.push("box requires lo <= hi componentwise".into());
                }
                if lo.iter().chain(hi).any(|v| !v.is_finite()) {
                    out.push("box bounds must be finite".into());
                }
            }
            ConvexSetDesc::Ball { center, radius } => {
                if !(*radius >= 0.0) || !radius.is_finite() {
                    out.push("ball radius must be finite and >= 0".into());
                }
                if center.iter().any(|v| !v.is_finite()) {
                    out.push("ball center must be finite".into());
                }
            }
        }
        out
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        if theta.len() != self.dim() {
            return Err(OuqError::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(match self {
            ConvexSetDesc::Polytope { a, b } => {
                a.iter().zip(b).all(|(row, bi)| dot(row, theta) <= *bi)
            }
            ConvexSetDesc::Halfspace { a, b } => dot(a, theta) <= *b,
            ConvexSetDesc::Box { lo, hi } => theta
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(t, (l, h))| l <= t && t <= h),
            ConvexSetDesc::Ball { center, radius } => {
                let diff: Vec<f64> = theta.iter().zip(center).map(|(t, c)| t - c).collect();
                norm(&diff) <= radius + BALL_TOL * radius.max(1.0)
            }
        })
    }

    /// Rows describing `arg ∈ scale · C`.
    pub fn scaled_membership(&self) -> Vec<ConeGroup> {
        let halfspace_row = |a: &[f64], b: f64| {
            let mut e = LinExpr::term(Local::Scale, b);
            for (j, &aj) in a.iter().enumerate() {
                e.push(Local::Arg(j), -aj);
            }
            e
        };
        match self {
            ConvexSetDesc::Polytope { a, b } => vec![ConeGroup::new(
                Cone::Nonneg,
                a.iter()
                    .zip(b)
                    .map(|(row, &bi)| halfspace_row(row, bi))
                    .collect(),
            )],
            ConvexSetDesc::Halfspace { a, b } => {
                vec![ConeGroup::new(Cone::Nonneg, vec![halfspace_row(a, *b)])]
            }
            ConvexSetDesc::Box { lo, hi } => {
                let mut rows = Vec::with_capacity(2 * lo.len());
                for (j, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                    rows.push(LinExpr::term(Local::Arg(j), 1.0).with(Local::Scale, -l));
                    rows.push(LinExpr::term(Local::Scale, h).with(Local::Arg(j), -1.0));
                }
                vec![ConeGroup::new(Cone::Nonneg, rows)]
            }
            ConvexSetDesc::Ball { center, radius } => {
                let mut rows = vec![LinExpr::term(Local::Scale, *radius)];
                for (j, &c) in center.iter().enumerate() {
                    rows.push(LinExpr::term(Local::Arg(j), 1.0).with(Local::Scale, -c));
                }
                vec![ConeGroup::new(Cone::Soc, rows)]
            }
        }
    }

    /// Approximate projection onto the set with a tiny inward margin, used to
    /// clean up solver round-off on recovered atom locations.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let mut x = theta.to_vec();
        match self {
            ConvexSetDesc::Halfspace { a, b } => project_halfspace(&mut x, a, *b),
            ConvexSetDesc::Polytope { a, b } => {
                for _ in 0..100 {
                    let mut moved = false;
                    for (row, &bi) in a.iter().zip(b) {
                        if dot(row, &x) > bi {
                            project_halfspace(&mut x, row, bi);
                            moved = true;
                        }
                    }
                    if !moved {
                        break;
                    }
                }
            }
            ConvexSetDesc::Box { lo, hi } => {
                for (xi, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                    *xi = xi.clamp(*l, *h);
                }
            }
            ConvexSetDesc::Ball { center, radius } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(t, c)| t - c).collect();
                let n = norm(&diff);
                if n > *radius {
                    for ((xi, di), c) in x.iter_mut().zip(&diff).zip(center) {
                        *xi = c + di * radius / n;
                    }
                }
            }
        }
        x
    }
}

fn project_halfspace(x: &mut [f64], a: &[f64], b: f64) {
    let excess = dot(a, x) - b;
    if excess <= 0.0 {
        return;
    }
    let nrm2: f64 = a.iter().map(|v| v * v).sum();
    let scale = x.iter().map(|v| v.abs()).fold(b.abs(), f64::max).max(1.0);
    let margin = 8.0 * f64::EPSILON * scale * nrm2.sqrt();
    let step = (excess + margin) / nrm2;
    for (xi, ai) in x.iter_mut().zip(a) {
        *xi -= step * ai;
    }
}
