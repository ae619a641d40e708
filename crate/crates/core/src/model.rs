//! The full problem: piecewise-concave objective, piecewise-convex
//! inequalities, an affine equality and a support made of convex pieces.

use serde::{Deserialize, Serialize};

use crate::atoms::{ConcaveAtom, ConvexAtom, ConvexSetDesc};
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::linalg::dot;
use crate::reduce::DiscreteDistribution;

/// Tolerance on the total mass of a distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weights at or below this count as absent when checking the support.
pub const SUPPORT_WEIGHT_TOL: f64 = 1e-9;

/// `f(θ) = max_k f⁽ᵏ⁾(θ)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConcave {
    pub pieces: Vec<ConcaveAtom>,
}

impl PiecewiseConcave {
    pub fn new(pieces: Vec<ConcaveAtom>) -> Self {
        PiecewiseConcave { pieces }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<ExtReal> {
        self.pieces
            .iter()
            .try_fold(ExtReal::NegInf, |acc, p| Ok(acc.max(p.evaluate(theta)?)))
    }

    /// Index of the first piece attaining the maximum (ties broken by order).
    pub fn active_piece(&self, theta: &[f64]) -> Result<usize> {
        let mut best = (0, ExtReal::NegInf);
        for (k, p) in self.pieces.iter().enumerate() {
            let v = p.evaluate(theta)?;
            if k == 0 || v > best.1 {
                best = (k, v);
            }
        }
        Ok(best.0)
    }
}

/// `g(θ) = min_l g⁽ˡ⁾(θ)`, right-hand side already folded into the pieces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConvex {
    pub pieces: Vec<ConvexAtom>,
}

impl PiecewiseConvex {
    pub fn new(pieces: Vec<ConvexAtom>) -> Self {
        PiecewiseConvex { pieces }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<ExtReal> {
        self.pieces
            .iter()
            .try_fold(ExtReal::PosInf, |acc, p| Ok(acc.min(p.evaluate(theta)?)))
    }

    pub fn active_piece(&self, theta: &[f64]) -> Result<usize> {
        let mut best = (0, ExtReal::PosInf);
        for (l, p) in self.pieces.iter().enumerate() {
            let v = p.evaluate(theta)?;
            if l == 0 || v < best.1 {
                best = (l, v);
            }
        }
        Ok(best.0)
    }
}

/// `h(θ) = Aᵀθ + b` with `A` stored as `d` rows of length `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineEquality {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl AffineEquality {
    /// Number of equality rows `q`.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn evaluate(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|j| {
                self.b[j]
                    + theta
                        .iter()
                        .zip(&self.a)
                        .map(|(t, row)| t * row[j])
                        .sum::<f64>()
            })
            .collect()
    }

    /// `E[θᵢ] = mᵢ` for every coordinate.
    pub fn means(means: &[f64]) -> Self {
        let d = means.len();
        AffineEquality {
            a: (0..d)
                .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
                .collect(),
            b: means.iter().map(|m| -m).collect(),
        }
    }
}

/// Union of convex components; no components means `Θ = ℝᵈ`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportDesc {
    #[serde(default)]
    pub sets: Vec<ConvexSetDesc>,
}

impl SupportDesc {
    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        if self.sets.is_empty() {
            return Ok(true);
        }
        for s in &self.sets {
            if s.contains(theta)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuqProblem {
    pub dimension: usize,
    pub objective: PiecewiseConcave,
    #[serde(default)]
    pub inequalities: Vec<PiecewiseConvex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality: Option<AffineEquality>,
    #[serde(default)]
    pub support: SupportDesc,
}

/// Objective value and constraint residuals of a distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub objective: ExtReal,
    /// `E[gᵢ]` per inequality; feasible when `≤ 0`.
    pub inequalities: Vec<ExtReal>,
    /// `E[h]`; feasible when zero.
    pub equality: Vec<f64>,
    /// Atoms with positive weight outside the support.
    pub support_violations: usize,
}

impl Expectation {
    pub fn max_violation(&self) -> f64 {
        let ineq = self
            .inequalities
            .iter()
            .map(|v| v.to_f64().max(0.0))
            .fold(0.0, f64::max);
        let eq = self.equality.iter().map(|v| v.abs()).fold(0.0, f64::max);
        ineq.max(eq)
    }
}

impl OuqProblem {
    /// Diagnostics naming each offending field; empty when well formed.
    pub fn validate(&self) -> Vec<String> {
        let d = self.dimension;
        let mut out = Vec::new();
        if d == 0 {
            out.push("dimension: must be at least 1".into());
        }
        if self.objective.pieces.is_empty() {
            out.push("objective: objective has no pieces".into());
        }
        for (k, atom) in self.objective.pieces.iter().enumerate() {
            let at = format!("objective.pieces[{k}]");
            out.extend(atom.issues().into_iter().map(|m| format!("{at}: {m}")));
            if let Some(ad) = atom.dim() {
                if ad != d {
                    out.push(format!(
                        "{at}: dimension {ad} does not match problem dimension {d}"
                    ));
                }
            }
        }
        for (i, g) in self.inequalities.iter().enumerate() {
            if g.pieces.is_empty() {
                out.push(format!("inequalities[{i}]: inequality has no pieces"));
            }
            for (l, atom) in g.pieces.iter().enumerate() {
                let at = format!("inequalities[{i}].pieces[{l}]");
                out.extend(atom.issues().into_iter().map(|m| format!("{at}: {m}")));
                match atom.dim() {
                    Some(ad) if ad != d => out.push(format!(
                        "{at}: dimension {ad} does not match problem dimension {d}"
                    )),
                    None if atom.min_dim() > d => out.push(format!(
                        "{at}: coordinate index out of range for dimension {d}"
                    )),
                    _ => {}
                }
            }
        }
        if let Some(eq) = &self.equality {
            if eq.a.len() != d {
                out.push(format!(
                    "equality.A: expected {d} rows, found {}",
                    eq.a.len()
                ));
            }
            if eq.a.iter().any(|r| r.len() != eq.b.len()) {
                out.push("equality.A: row length must equal the length of equality.b".into());
            }
            if eq.a.iter().flatten().chain(&eq.b).any(|v| !v.is_finite()) {
                out.push("equality: entries must be finite".into());
            }
        }
        for (s, set) in self.support.sets.iter().enumerate() {
            let at = format!("support.sets[{s}]");
            out.extend(set.issues().into_iter().map(|m| format!("{at}: {m}")));
            if set.dim() != d {
                out.push(format!(
                    "{at}: dimension {} does not match problem dimension {d}",
                    set.dim()
                ));
            }
        }
        out
    }

    /// Number of Dirac masses in the reduced program:
    /// `K·∏Lᵢ`, times `S` when the support is restricted.
    pub fn cell_count(&self) -> usize {
        let k = self.objective.pieces.len();
        let l: usize = self.inequalities.iter().map(|g| g.pieces.len()).product();
        let s = self.support.sets.len().max(1);
        k * l * s
    }

    pub fn evaluate_expectation(&self, dist: &DiscreteDistribution) -> Result<Expectation> {
        let total: f64 = dist.atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL || dist.atoms.iter().any(|a| !(a.weight >= 0.0)) {
            return Err(OuqError::WeightSum(total));
        }
        let mut objective = ExtReal::ZERO;
        let mut inequalities = vec![ExtReal::ZERO; self.inequalities.len()];
        let q = self.equality.as_ref().map_or(0, AffineEquality::rows);
        let mut equality = vec![0.0; q];
        let mut mean = vec![0.0; self.dimension];
        let mut support_violations = 0;
        for atom in &dist.atoms {
            if atom.location.len() != self.dimension {
                return Err(OuqError::DimensionMismatch {
                    expected: self.dimension,
                    got: atom.location.len(),
                });
            }
            let w = atom.weight;
            objective = objective.add(self.objective.evaluate(&atom.location)?.weighted(w));
            for (acc, g) in inequalities.iter_mut().zip(&self.inequalities) {
                *acc = acc.add(g.evaluate(&atom.location)?.weighted(w));
            }
            for (m, x) in mean.iter_mut().zip(&atom.location) {
                *m += w * x;
            }
            if w > SUPPORT_WEIGHT_TOL && !self.support.contains(&atom.location)? {
                support_violations += 1;
            }
        }
        if let Some(eq) = &self.equality {
            for (j, e) in equality.iter_mut().enumerate() {
                let col: Vec<f64> = eq.a.iter().map(|row| row[j]).collect();
                *e = dot(&col, &mean) + eq.b[j];
            }
        }
        Ok(Expectation {
            objective,
            inequalities,
            equality,
            support_violations,
        })
    }
}
