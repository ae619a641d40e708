//! Homogeneous conic descriptions of hypographs and epigraphs.
//!
//! A block lives over local variables: the atom argument (which becomes `γ`
//! after homogenization), a scale (the cell weight `p`), the hypograph or
//! epigraph value and private auxiliaries. Every row is linear in these, so
//! instantiating the block with `scale = p` yields the perspective
//! `p · f(γ / p)` without any further work.

use crate::cones::Cone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Local {
    Arg(usize),
    Scale,
    Value,
    Aux(usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Local, f64)>,
}

impl LinExpr {
    pub fn term(var: Local, coef: f64) -> Self {
        LinExpr {
            terms: vec![(var, coef)],
        }
    }

    pub fn with(mut self, var: Local, coef: f64) -> Self {
        self.push(var, coef);
        self
    }

    pub fn push(&mut self, var: Local, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    pub fn eval(&self, arg: &[f64], scale: f64, value: f64, aux: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(var, c)| {
                c * match var {
                    Local::Arg(i) => arg[i],
                    Local::Scale => scale,
                    Local::Value => value,
                    Local::Aux(i) => aux[i],
                }
            })
            .sum()
    }
}

/// Rows whose stacked values must lie in one cone.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeGroup {
    pub cone: Cone,
    pub rows: Vec<LinExpr>,
}

impl ConeGroup {
    pub fn new(cone: Cone, rows: Vec<LinExpr>) -> Self {
        ConeGroup { cone, rows }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicBlock {
    pub n_aux: usize,
    pub groups: Vec<ConeGroup>,
}

impl ConicBlock {
    pub fn new(n_aux: usize, groups: Vec<ConeGroup>) -> Self {
        ConicBlock { n_aux, groups }
    }

    /// Number of groups of a given cone kind.
    pub fn cone_count(&self, cone: Cone) -> usize {
        self.groups.iter().filter(|g| g.cone == cone).count()
    }

    /// Separable groups split into single rows, for inspection.
    pub fn rows(&self) -> impl Iterator<Item = (Cone, &LinExpr)> {
        self.groups
            .iter()
            .flat_map(|g| g.rows.iter().map(move |r| (g.cone, r)))
    }

    /// Replaces `Value` by `Value − offset · Scale` in every row, which turns
    /// a block for `f` into a block for `f + offset`.
    pub(crate) fn shift_value(&mut self, offset: f64) {
        if offset == 0.0 {
            return;
        }
        for group in &mut self.groups {
            for row in &mut group.rows {
                let coef: f64 = row
                    .terms
                    .iter()
                    .filter(|(v, _)| *v == Local::Value)
                    .map(|(_, c)| c)
                    .sum();
                if coef != 0.0 {
                    row.push(Local::Scale, -coef * offset);
                }
            }
        }
    }

    /// Whether the point satisfies every group within `tol`.
    pub fn contains(&self, arg: &[f64], scale: f64, value: f64, aux: &[f64], tol: f64) -> bool {
        debug_assert_eq!(aux.len(), self.n_aux);
        self.groups.iter().all(|g| {
            let vals: Vec<f64> = g
                .rows
                .iter()
                .map(|r| r.eval(arg, scale, value, aux))
                .collect();
            g.cone.contains(&vals, tol)
        })
    }
}
