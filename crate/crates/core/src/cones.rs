//! Cone kinds shared by conic blocks, the compiled program and the solver.

use serde::{Deserialize, Serialize};

/// Cone families supported end to end.
///
/// Rotated cones use the convention `{(u, v, w): 2uv ≥ ‖w‖², u, v ≥ 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    Zero,
    Nonneg,
    Soc,
    Rsoc,
}

impl Cone {
    /// Whether rows of this cone may be split or dropped individually.
    pub fn is_separable(self) -> bool {
        matches!(self, Cone::Zero | Cone::Nonneg)
    }

    /// Membership test for one cone block, within `tol`.
    pub fn contains(self, v: &[f64], tol: f64) -> bool {
        match self {
            Cone::Zero => v.iter().all(|x| x.abs() <= tol),
            Cone::Nonneg => v.iter().all(|&x| x >= -tol),
            Cone::Soc => {
                let Some((&head, tail)) = v.split_first() else {
                    return true;
                };
                head >= norm(tail) - tol
            }
            Cone::Rsoc => {
                if v.len() < 2 {
                    return false;
                }
                let (u, w) = (v[0], v[1]);
                let rest = &v[2..];
                let sq: f64 = rest.iter().map(|x| x * x).sum();
                u >= -tol && w >= -tol && 2.0 * u * w >= sq - tol * (1.0 + u.abs() + w.abs())
            }
        }
    }

    /// Membership in the dual cone. All supported cones are self-dual except
    /// the zero cone, whose dual is the whole space.
    pub fn dual_contains(self, v: &[f64], tol: f64) -> bool {
        match self {
            Cone::Zero => true,
            other => other.contains(v, tol),
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
