//! Concave objective pieces and convex constraint pieces.
//!
//! Every atom evaluates exactly in the extended reals and compiles to a
//! [`ConicBlock`] describing its hypograph (concave) or epigraph (convex) in
//! homogeneous form. Each atom carries an additive `offset`, which is how
//! right-hand sides such as `E[θ²] ≤ M₂` are folded in (`θ² − M₂`).

mod block;
mod power;
mod set;

use serde::{Deserialize, Serialize};

pub use block::{ConeGroup, ConicBlock, LinExpr, Local};
pub use set::ConvexSetDesc;

use crate::cones::Cone;
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, is_square, max_asymmetry, min_eigenvalue, psd_factor, quad_form};
use power::PowerTree;

/// Tolerance on the smallest eigenvalue (and on asymmetry) of quadratic atoms.
pub const PSD_TOL: f64 = 1e-9;

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcaveKind {
    /// `aᵀθ + b`
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    /// `−θᵀPθ + qᵀθ + r` with `P ⪰ 0`
    ConcaveQuadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        r: f64,
    },
    /// Univariate `a(θ−b)² + c` for `θ ≤ b` and `c` beyond, with `a < 0`.
    CappedConcaveQuadratic {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `1` on the set, `−∞` off it.
    Indicator {
        set: ConvexSetDesc,
    },
    Constant {
        r: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcaveAtom {
    #[serde(flatten)]
    pub kind: ConcaveKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexKind {
    /// `aᵀθ + b`
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    /// `θᵀPθ + qᵀθ + r` with `P ⪰ 0`
    ConvexQuadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        r: f64,
    },
    /// `θᵢ^order`, order even and at least 2.
    Power {
        order: u32,
        #[serde(default)]
        index: usize,
    },
    /// `|θᵢ|`
    Abs {
        #[serde(default)]
        index: usize,
    },
    /// `0` on the set, `+∞` off it.
    Indicator {
        set: ConvexSetDesc,
    },
    Constant {
        r: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexAtom {
    #[serde(flatten)]
    pub kind: ConvexKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(OuqError::DimensionMismatch { expected, got })
    }
}

fn check_finite(theta: &[f64]) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OuqError::InvalidArgument(
            "evaluation point must be finite".into(),
        ))
    }
}

fn quadratic_issues(p: &[Vec<f64>], q: &[f64], r: f64) -> Vec<String> {
    let mut out = Vec::new();
    let d = q.len();
    if !is_square(p, d) {
        out.push(format!("P must be {d}x{d} to match q"));
        return out;
    }
    if p.iter().flatten().chain(q).any(|v| !v.is_finite()) || !r.is_finite() {
        out.push("quadratic coefficients must be finite".into());
        return out;
    }
    if max_asymmetry(p) > PSD_TOL {
        out.push("P is not symmetric".into());
    }
    let lam = min_eigenvalue(p);
    if lam < -PSD_TOL {
        out.push(format!("P is not PSD (smallest eigenvalue {lam:.3e})"));
    }
    out
}

/// Rows `Σ coefs·Arg + scale_coef·Scale` as a fresh expression.
fn affine_expr(a: &[f64], scale_coef: f64) -> LinExpr {
    let mut e = LinExpr::default();
    for (j, &aj) in a.iter().enumerate() {
        e.push(Local::Arg(j), aj);
    }
    e.push(Local::Scale, scale_coef);
    e
}

/// `2·scale·aux ≥ ‖Lᵀ arg‖²` where `L Lᵀ = P`; returns `None` when `P = 0`.
fn quadratic_cone(p: &[Vec<f64>], aux: usize) -> Option<ConeGroup> {
    let cols = psd_factor(p);
    if cols.is_empty() {
        return None;
    }
    let mut rows = vec![
        LinExpr::term(Local::Scale, 1.0),
        LinExpr::term(Local::Aux(aux), 1.0),
    ];
    for col in &cols {
        let mut e = LinExpr::default();
        for (j, &v) in col.iter().enumerate() {
            e.push(Local::Arg(j), v);
        }
        rows.push(e);
    }
    Some(ConeGroup::new(Cone::Rsoc, rows))
}

/// Tight value of `γᵀPγ / (2p)`, with the recession convention at `p = 0`.
fn quadratic_witness(p: &[Vec<f64>], arg: &[f64], scale: f64) -> f64 {
    let qf = quad_form(p, arg);
    if scale > 0.0 {
        qf / (2.0 * scale)
    } else if qf <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl ConcaveAtom {
    pub fn new(kind: ConcaveKind) -> Self {
        ConcaveAtom { kind, offset: 0.0 }
    }

    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        Self::new(ConcaveKind::Affine { a, b })
    }

    pub fn constant(r: f64) -> Self {
        Self::new(ConcaveKind::Constant { r })
    }

    pub fn indicator(set: ConvexSetDesc) -> Self {
        Self::new(ConcaveKind::Indicator { set })
    }

    pub fn concave_quadratic(p: Vec<Vec<f64>>, q: Vec<f64>, r: f64) -> Result<Self> {
        let issues = quadratic_issues(&p, &q, r);
        if !issues.is_empty() {
            return Err(OuqError::InvalidAtom(issues.join("; ")));
        }
        Ok(Self::new(ConcaveKind::ConcaveQuadratic { p, q, r }))
    }

    pub fn capped_concave_quadratic(a: f64, b: f64, c: f64) -> Result<Self> {
        let atom = Self::new(ConcaveKind::CappedConcaveQuadratic { a, b, c });
        match atom.issues().as_slice() {
            [] => Ok(atom),
            issues => Err(OuqError::InvalidAtom(issues.join("; "))),
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset += offset;
        self
    }

    /// Argument dimension the atom is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            ConcaveKind::Affine { a, .. } => Some(a.len()),
            ConcaveKind::ConcaveQuadratic { q, .. } => Some(q.len()),
            ConcaveKind::CappedConcaveQuadratic { .. } => Some(1),
            ConcaveKind::Indicator { set } => Some(set.dim()),
            ConcaveKind::Constant { .. } => None,
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = match &self.kind {
            ConcaveKind::Affine { a, b } => {
                if a.iter().chain(std::iter::once(b)).all(|v| v.is_finite()) {
                    vec![]
                } else {
                    vec!["affine coefficients must be finite".into()]
                }
            }
            ConcaveKind::ConcaveQuadratic { p, q, r } => quadratic_issues(p, q, *r),
            ConcaveKind::CappedConcaveQuadratic { a, b, c } => {
                let mut v = Vec::new();
                if !(*a < 0.0) {
                    v.push("capped quadratic requires a < 0".into());
                }
                if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                    v.push("capped quadratic coefficients must be finite".into());
                }
                v
            }
            ConcaveKind::Indicator { set } => set.issues(),
            ConcaveKind::Constant { r } => {
                if r.is_finite() {
                    vec![]
                } else {
                    vec!["constant must be finite".into()]
                }
            }
        };
        if !self.offset.is_finite() {
            out.push("offset must be finite".into());
        }
        out
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<ExtReal> {
        if let Some(d) = self.dim() {
            check_len(d, theta.len())?;
        }
        check_finite(theta)?;
        let core = match &self.kind {
            ConcaveKind::Affine { a, b } => ExtReal::Finite(dot(a, theta) + b),
            ConcaveKind::ConcaveQuadratic { p, q, r } => {
                ExtReal::Finite(-quad_form(p, theta) + dot(q, theta) + r)
            }
            ConcaveKind::CappedConcaveQuadratic { a, b, c } => {
                let t = theta[0];
                ExtReal::Finite(if t <= *b {
                    a * (t - b) * (t - b) + c
                } else {
                    *c
                })
            }
            ConcaveKind::Indicator { set } => {
                if set.contains(theta)? {
                    ExtReal::Finite(1.0)
                } else {
                    ExtReal::NegInf
                }
            }
            ConcaveKind::Constant { r } => ExtReal::Finite(*r),
        };
        Ok(core.shift(self.offset))
    }

    /// Homogeneous hypograph `{(γ, p, t) : t ≤ p·f(γ/p)}`.
    pub fn hypograph_block(&self) -> ConicBlock {
        let mut block = match &self.kind {
            ConcaveKind::Affine { a, b } => {
                let row = affine_expr(a, *b).with(Local::Value, -1.0);
                ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])])
            }
            ConcaveKind::Constant { r } => {
                let row = LinExpr::term(Local::Scale, *r).with(Local::Value, -1.0);
                ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])])
            }
            ConcaveKind::ConcaveQuadratic { p, q, r } => match quadratic_cone(p, 0) {
                // qᵀγ + r·p − 2u − t ≥ 0 with 2·p·u ≥ γᵀPγ
                Some(cone) => {
                    let row = affine_expr(q, *r)
                        .with(Local::Aux(0), -2.0)
                        .with(Local::Value, -1.0);
                    ConicBlock::new(1, vec![cone, ConeGroup::new(Cone::Nonneg, vec![row])])
                }
                None => {
                    let row = affine_expr(q, *r).with(Local::Value, -1.0);
                    ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])])
                }
            },
            ConcaveKind::CappedConcaveQuadratic { a, b, c } => {
                // f(θ) = max_{w ≤ θ} a(w−b)² + c; aux 0 = p·w, aux 1 ≥ (p·w − b·p)²/(2p)
                let below = LinExpr::term(Local::Arg(0), 1.0).with(Local::Aux(0), -1.0);
                let value = LinExpr::term(Local::Scale, *c)
                    .with(Local::Aux(1), 2.0 * a)
                    .with(Local::Value, -1.0);
                let cone = ConeGroup::new(
                    Cone::Rsoc,
                    vec![
                        LinExpr::term(Local::Scale, 1.0),
                        LinExpr::term(Local::Aux(1), 1.0),
                        LinExpr::term(Local::Aux(0), 1.0).with(Local::Scale, -b),
                    ],
                );
                ConicBlock::new(
                    2,
                    vec![ConeGroup::new(Cone::Nonneg, vec![below, value]), cone],
                )
            }
            ConcaveKind::Indicator { set } => {
                let cap = LinExpr::term(Local::Scale, 1.0).with(Local::Value, -1.0);
                let mut groups = vec![ConeGroup::new(Cone::Nonneg, vec![cap])];
                groups.extend(set.scaled_membership());
                ConicBlock::new(0, groups)
            }
        };
        block.shift_value(self.offset);
        block
    }

    /// Auxiliary values that make a hypograph point feasible whenever any
    /// auxiliary choice does.
    pub fn aux_witness(&self, arg: &[f64], scale: f64) -> Vec<f64> {
        match &self.kind {
            ConcaveKind::ConcaveQuadratic { p, .. } => {
                if psd_factor(p).is_empty() {
                    vec![]
                } else {
                    vec![quadratic_witness(p, arg, scale)]
                }
            }
            ConcaveKind::CappedConcaveQuadratic { b, .. } => {
                let w = arg[0].min(b * scale);
                let gap = w - b * scale;
                let u = if scale > 0.0 {
                    gap * gap / (2.0 * scale)
                } else if gap == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                vec![w, u]
            }
            _ => vec![],
        }
    }

    pub fn indicator_set(&self) -> Option<&ConvexSetDesc> {
        match &self.kind {
            ConcaveKind::Indicator { set } => Some(set),
            _ => None,
        }
    }
}

impl ConvexAtom {
    pub fn new(kind: ConvexKind) -> Self {
        ConvexAtom { kind, offset: 0.0 }
    }

    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        Self::new(ConvexKind::Affine { a, b })
    }

    pub fn constant(r: f64) -> Self {
        Self::new(ConvexKind::Constant { r })
    }

    pub fn indicator(set: ConvexSetDesc) -> Self {
        Self::new(ConvexKind::Indicator { set })
    }

    pub fn abs(index: usize) -> Self {
        Self::new(ConvexKind::Abs { index })
    }

    pub fn convex_quadratic(p: Vec<Vec<f64>>, q: Vec<f64>, r: f64) -> Result<Self> {
        let issues = quadratic_issues(&p, &q, r);
        if !issues.is_empty() {
            return Err(OuqError::InvalidAtom(issues.join("; ")));
        }
        Ok(Self::new(ConvexKind::ConvexQuadratic { p, q, r }))
    }

    /// `θᵢ^order`; the order must be even and at least 2.
    pub fn power(order: u32, index: usize) -> Result<Self> {
        let atom = Self::new(ConvexKind::Power { order, index });
        match atom.issues().as_slice() {
            [] => Ok(atom),
            issues => Err(OuqError::InvalidAtom(issues.join("; "))),
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset += offset;
        self
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            ConvexKind::Affine { a, .. } => Some(a.len()),
            ConvexKind::ConvexQuadratic { q, .. } => Some(q.len()),
            ConvexKind::Indicator { set } => Some(set.dim()),
            ConvexKind::Power { .. } | ConvexKind::Abs { .. } | ConvexKind::Constant { .. } => None,
        }
    }

    /// Smallest argument dimension the atom can be evaluated at.
    pub fn min_dim(&self) -> usize {
        match &self.kind {
            ConvexKind::Power { index, .. } | ConvexKind::Abs { index } => index + 1,
            _ => self.dim().unwrap_or(0),
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = match &self.kind {
            ConvexKind::Affine { a, b } => {
                if a.iter().chain(std::iter::once(b)).all(|v| v.is_finite()) {
                    vec![]
                } else {
                    vec!["affine coefficients must be finite".into()]
                }
            }
            ConvexKind::ConvexQuadratic { p, q, r } => quadratic_issues(p, q, *r),
            ConvexKind::Power { order, .. } => {
                if *order < 2 || order % 2 != 0 {
                    vec![format!("order must be even and >= 2 (got {order})")]
                } else {
                    vec![]
                }
            }
            ConvexKind::Abs { .. } => vec![],
            ConvexKind::Indicator { set } => set.issues(),
            ConvexKind::Constant { r } => {
                if r.is_finite() {
                    vec![]
                } else {
                    vec!["constant must be finite".into()]
                }
            }
        };
        if !self.offset.is_finite() {
            out.push("offset must be finite".into());
        }
        out
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<ExtReal> {
        if let Some(d) = self.dim() {
            check_len(d, theta.len())?;
        } else if theta.len() < self.min_dim() {
            return Err(OuqError::DimensionMismatch {
                expected: self.min_dim(),
                got: theta.len(),
            });
        }
        check_finite(theta)?;
        let core = match &self.kind {
            ConvexKind::Affine { a, b } => ExtReal::Finite(dot(a, theta) + b),
            ConvexKind::ConvexQuadratic { p, q, r } => {
                ExtReal::Finite(quad_form(p, theta) + dot(q, theta) + r)
            }
            ConvexKind::Power { order, index } => {
                ExtReal::Finite(theta[*index].powi(*order as i32))
            }
            ConvexKind::Abs { index } => ExtReal::Finite(theta[*index].abs()),
            ConvexKind::Indicator { set } => {
                if set.contains(theta)? {
                    ExtReal::ZERO
                } else {
                    ExtReal::PosInf
                }
            }
            ConvexKind::Constant { r } => ExtReal::Finite(*r),
        };
        Ok(core.shift(self.offset))
    }

    /// Homogeneous epigraph `{(γ, p, e) : e ≥ p·g(γ/p)}`.
    pub fn epigraph_block(&self) -> ConicBlock {
        let mut block = match &self.kind {
            ConvexKind::Affine { a, b } => {
                let mut row = affine_expr(a, *b);
                for t in &mut row.terms {
                    t.1 = -t.1;
                }
                row.push(Local::Value, 1.0);
                ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])])
            }
            ConvexKind::Constant { r } => {
                let row = LinExpr::term(Local::Value, 1.0).with(Local::Scale, -r);
                ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])])
            }
            ConvexKind::ConvexQuadratic { p, q, r } => {
                let mut row = affine_expr(q, *r);
                for t in &mut row.terms {
                    t.1 = -t.1;
                }
                row.push(Local::Value, 1.0);
                match quadratic_cone(p, 0) {
                    Some(cone) => {
                        row.push(Local::Aux(0), -2.0);
                        ConicBlock::new(1, vec![cone, ConeGroup::new(Cone::Nonneg, vec![row])])
                    }
                    None => ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![row])]),
                }
            }
            ConvexKind::Power { order, index } => PowerTree::new(*order).block(*index),
            ConvexKind::Abs { index } => {
                let up = LinExpr::term(Local::Value, 1.0).with(Local::Arg(*index), -1.0);
                let down = LinExpr::term(Local::Value, 1.0).with(Local::Arg(*index), 1.0);
                ConicBlock::new(0, vec![ConeGroup::new(Cone::Nonneg, vec![up, down])])
            }
            ConvexKind::Indicator { set } => {
                let floor = LinExpr::term(Local::Value, 1.0);
                let mut groups = vec![ConeGroup::new(Cone::Nonneg, vec![floor])];
                groups.extend(set.scaled_membership());
                ConicBlock::new(0, groups)
            }
        };
        block.shift_value(self.offset);
        block
    }

    /// Auxiliary values for an epigraph point; `value` is the epigraph value
    /// including the offset.
    pub fn aux_witness(&self, arg: &[f64], scale: f64, value: f64) -> Vec<f64> {
        match &self.kind {
            ConvexKind::ConvexQuadratic { p, .. } => {
                if psd_factor(p).is_empty() {
                    vec![]
                } else {
                    vec![quadratic_witness(p, arg, scale)]
                }
            }
            ConvexKind::Power { order, index } => {
                PowerTree::new(*order).witness(arg[*index], scale, value - self.offset * scale)
            }
            _ => vec![],
        }
    }

    pub fn indicator_set(&self) -> Option<&ConvexSetDesc> {
        match &self.kind {
            ConvexKind::Indicator { set } => Some(set),
            _ => None,
        }
    }
}
