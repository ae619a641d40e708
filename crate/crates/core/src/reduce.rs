//! Finite reduction: one weighted Dirac mass per combination of objective
//! piece, constraint pieces and support component.
//!
//! Each mass cell owns a weight `p` and a moment vector `γ = p·θ`. The cell's
//! objective piece enters as the perspective `p·f⁽ᵏ⁾(γ/p)`, each constraint
//! as `p·gᵢ⁽ˡⁱ⁾(γ/p)`, and the support component as `γ ∈ p·C⁽ˢ⁾`. The result
//! is a convex program with the same optimal value as the original problem.

use serde::{Deserialize, Serialize};

use crate::atoms::{ConeGroup, ConicBlock, ConvexSetDesc};
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::model::OuqProblem;

/// Default weight below which recovered cells are discarded.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-7;

/// Relative distance within which recovered locations are pulled back into
/// their cell's sets.
const SNAP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MassCell {
    pub objective_piece: usize,
    pub constraint_pieces: Vec<usize>,
    pub support: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub weight: f64,
    pub location: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub atoms: Vec<WeightedPoint>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<WeightedPoint>) -> Self {
        DiscreteDistribution { atoms }
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.atoms.first().map_or(0, |a| a.location.len());
        let mut m = vec![0.0; d];
        for a in &self.atoms {
            for (mi, x) in m.iter_mut().zip(&a.location) {
                *mi += a.weight * x;
            }
        }
        m
    }
}

/// Perspective-form aggregates of a candidate `(p, γ)` assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedValue {
    pub objective: ExtReal,
    pub inequalities: Vec<ExtReal>,
    pub equality: Vec<f64>,
    pub weight_sum: f64,
    /// Cells with positive weight whose location leaves their support piece.
    pub support_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedProgram {
    pub problem: OuqProblem,
    /// Lexicographic in `(k, l₁, …, l_p, s)`.
    pub cells: Vec<MassCell>,
}

/// Builds the reduced program of a validated problem.
pub fn reduce(problem: &OuqProblem) -> Result<ReducedProgram> {
    if problem.objective.pieces.is_empty() {
        return Err(OuqError::InvalidProblem(vec![
            "objective: objective has no pieces".into(),
        ]));
    }
    let diags = problem.validate();
    if !diags.is_empty() {
        return Err(OuqError::InvalidProblem(diags));
    }
    let supports: Vec<Option<usize>> = if problem.support.sets.is_empty() {
        vec![None]
    } else {
        (0..problem.support.sets.len()).map(Some).collect()
    };
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for g in &problem.inequalities {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..g.pieces.len()).map(move |l| {
                    let mut next = c.clone();
                    next.push(l);
                    next
                })
            })
            .collect();
    }
    let mut cells = Vec::with_capacity(problem.cell_count());
    for k in 0..problem.objective.pieces.len() {
        for ls in &combos {
            for &s in &supports {
                cells.push(MassCell {
                    objective_piece: k,
                    constraint_pieces: ls.clone(),
                    support: s,
                });
            }
        }
    }
    Ok(ReducedProgram {
        problem: problem.clone(),
        cells,
    })
}

impl ReducedProgram {
    pub fn dimension(&self) -> usize {
        self.problem.dimension
    }

    pub fn objective_block(&self, cell: &MassCell) -> ConicBlock {
        self.problem.objective.pieces[cell.objective_piece].hypograph_block()
    }

    pub fn constraint_block(&self, cell: &MassCell, i: usize) -> ConicBlock {
        self.problem.inequalities[i].pieces[cell.constraint_pieces[i]].epigraph_block()
    }

    pub fn support_groups(&self, cell: &MassCell) -> Vec<ConeGroup> {
        cell.support
            .map(|s| self.problem.support.sets[s].scaled_membership())
            .unwrap_or_default()
    }

    /// Sets a recovered atom of this cell must belong to.
    fn required_sets(&self, cell: &MassCell) -> Vec<&ConvexSetDesc> {
        let mut sets = Vec::new();
        if let Some(s) = cell.support {
            sets.push(&self.problem.support.sets[s]);
        }
        if let Some(set) = self.problem.objective.pieces[cell.objective_piece].indicator_set() {
            sets.push(set);
        }
        for (g, &l) in self
            .problem
            .inequalities
            .iter()
            .zip(&cell.constraint_pieces)
        {
            if let Some(set) = g.pieces[l].indicator_set() {
                sets.push(set);
            }
        }
        sets
    }

    /// Evaluates the reduced objective and constraints at `(pⱼ, γⱼ)` per cell,
    /// each cell using only its own pieces. Zero-weight cells contribute
    /// nothing.
    pub fn evaluate(&self, points: &[(f64, Vec<f64>)]) -> Result<ReducedValue> {
        if points.len() != self.cells.len() {
            return Err(OuqError::DimensionMismatch {
                expected: self.cells.len(),
                got: points.len(),
            });
        }
        let pr = &self.problem;
        let mut objective = ExtReal::ZERO;
        let mut inequalities = vec![ExtReal::ZERO; pr.inequalities.len()];
        let mut sum_gamma = vec![0.0; pr.dimension];
        let mut weight_sum = 0.0;
        let mut support_violations = 0;
        for (cell, (p, gamma)) in self.cells.iter().zip(points) {
            weight_sum += p;
            for (s, g) in sum_gamma.iter_mut().zip(gamma) {
                *s += g;
            }
            if *p <= 0.0 {
                continue;
            }
            let theta: Vec<f64> = gamma.iter().map(|g| g / p).collect();
            let f = pr.objective.pieces[cell.objective_piece].evaluate(&theta)?;
            objective = objective.add(f.weighted(*p));
            for (i, acc) in inequalities.iter_mut().enumerate() {
                let g = pr.inequalities[i].pieces[cell.constraint_pieces[i]].evaluate(&theta)?;
                *acc = acc.add(g.weighted(*p));
            }
            if let Some(s) = cell.support {
                if !pr.support.sets[s].contains(&theta)? {
                    support_violations += 1;
                }
            }
        }
        let equality = match &pr.equality {
            Some(eq) => (0..eq.rows())
                .map(|j| {
                    eq.b[j]
                        + eq.a
                            .iter()
                            .zip(&sum_gamma)
                            .map(|(row, g)| row[j] * g)
                            .sum::<f64>()
                })
                .collect(),
            None => vec![],
        };
        Ok(ReducedValue {
            objective,
            inequalities,
            equality,
            weight_sum,
            support_violations,
        })
    }
}

/// Turns optimal cell values `(p, γ)` into atoms `(p, γ/p)`, dropping cells
/// lighter than `weight_floor` and renormalizing. Locations that miss one of
/// their cell's sets by solver round-off are projected back onto it.
pub fn recover_distribution(
    program: &ReducedProgram,
    cell_values: &[(f64, Vec<f64>)],
    weight_floor: f64,
) -> Result<DiscreteDistribution> {
    if cell_values.len() != program.cells.len() {
        return Err(OuqError::DimensionMismatch {
            expected: program.cells.len(),
            got: cell_values.len(),
        });
    }
    let mut atoms = Vec::new();
    for (cell, (p, gamma)) in program.cells.iter().zip(cell_values) {
        if !(*p >= weight_floor) {
            continue;
        }
        let mut theta: Vec<f64> = gamma.iter().map(|g| g / p).collect();
        for set in program.required_sets(cell) {
            if set.contains(&theta)? {
                continue;
            }
            let snapped = set.project(&theta);
            let moved = snapped
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = theta.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if moved <= SNAP_TOL * scale {
                theta = snapped;
            }
        }
        atoms.push(WeightedPoint {
            weight: *p,
            location: theta,
        });
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if atoms.is_empty() || total <= 0.0 {
        return Err(OuqError::DegenerateSolution(weight_floor));
    }
    for a in &mut atoms {
        a.weight /= total;
    }
    Ok(DiscreteDistribution { atoms })
}

/// Replaces atoms `i` and `j` by one atom carrying their total weight at their
/// weighted mean. The merged atom takes the lower of the two positions.
pub fn merge_masses(d: &DiscreteDistribution, i: usize, j: usize) -> Result<DiscreteDistribution> {
    let n = d.atoms.len();
    if i == j || i >= n || j >= n {
        return Err(OuqError::Merge(
            i,
            j,
            format!("indices must be distinct and below {n}"),
        ));
    }
    let (a, b) = (&d.atoms[i], &d.atoms[j]);
    let q = a.weight + b.weight;
    if !(q > 0.0) {
        return Err(OuqError::Merge(i, j, "total weight is zero".into()));
    }
    let location = a
        .location
        .iter()
        .zip(&b.location)
        .map(|(x, y)| (a.weight * x + b.weight * y) / q)
        .collect();
    let merged = WeightedPoint {
        weight: q,
        location,
    };
    let (lo, hi) = (i.min(j), i.max(j));
    let mut atoms = Vec::with_capacity(n - 1);
    for (k, atom) in d.atoms.iter().enumerate() {
        if k == lo {
            atoms.push(merged.clone());
        } else if k != hi {
            atoms.push(atom.clone());
        }
    }
    Ok(DiscreteDistribution { atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps;

    fn pt(weight: f64, x: f64) -> WeightedPoint {
        WeightedPoint {
            weight,
            location: vec![x],
        }
    }

    #[test]
    fn markov_cells() {
        let prog = reduce(&apps::build_markov(1.0, 4.0).unwrap()).unwrap();
        assert_eq!(prog.cells.len(), 2);
        assert_eq!(
            prog.cells[0],
            MassCell {
                objective_piece: 0,
                constraint_pieces: vec![],
                support: Some(0)
            }
        );
        // indicator cell: objective block carries γ ≥ 4p, support carries γ ≥ 0
        let block = prog.objective_block(&prog.cells[1]);
        let rows: Vec<_> = block
            .rows()
            .map(|(_, r)| r.eval(&[4.0], 1.0, 1.0, &[]))
            .collect();
        assert!(rows.iter().all(|&v| v.abs() < 1e-12), "{rows:?}");
        let sup = prog.support_groups(&prog.cells[1]);
        assert_eq!(sup[0].rows[0].eval(&[0.0], 1.0, 0.0, &[]), 0.0);
        let value = prog
            .evaluate(&[(0.75, vec![0.0]), (0.25, vec![1.0])])
            .unwrap();
        assert_eq!(value.objective, ExtReal::Finite(0.25));
        assert!(value.equality[0].abs() < 1e-15);
    }

    #[test]
    fn seesaw_cells() {
        let prog = reduce(&apps::build_seesaw(-1.0, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!(prog.cells.len(), 2);
        for cell in &prog.cells {
            let groups = prog.support_groups(cell);
            // a·p ≤ γ ≤ b·p
            assert_eq!(groups[0].rows.len(), 2);
            assert_eq!(groups[0].rows[0].eval(&[-0.5], 0.5, 0.0, &[]), 0.0);
            assert_eq!(groups[0].rows[1].eval(&[1.0], 0.5, 0.0, &[]), 0.0);
        }
    }

    #[test]
    fn revenue_cells_and_tail_rows() {
        let prob = apps::build_revenue(&apps::RevenueParams::default()).unwrap();
        let prog = reduce(&prob).unwrap();
        assert_eq!(prog.cells.len(), 12);
        assert_eq!(prog.cells.len(), prob.cell_count());
        let mut seen = std::collections::HashSet::new();
        assert!(prog.cells.iter().all(|c| seen.insert(c.clone())));
        let cell = &prog.cells[0];
        assert_eq!(cell.constraint_pieces, vec![0, 0, 0]);
        // "constant 1" piece, shifted by −δ: e ≥ p·(1 − δ)
        let block = prog.constraint_block(cell, 0);
        let row = block.rows().next().unwrap().1;
        assert!((row.eval(&[0.0], 1.0, 0.9, &[])).abs() < 1e-12);
        // indicator piece: membership θ ≥ θL becomes γ ≥ p·θL
        let cell = prog
            .cells
            .iter()
            .find(|c| c.constraint_pieces == vec![1, 0, 0])
            .unwrap();
        let block = prog.constraint_block(cell, 0);
        let rows: Vec<f64> = block
            .rows()
            .map(|(_, r)| r.eval(&[2.0], 2.0, -0.2, &[]))
            .collect();
        assert!(rows.iter().any(|v| v.abs() < 1e-12), "{rows:?}");
    }

    #[test]
    fn cell_count_matches_application_suite() {
        for prob in apps::application_suite() {
            assert_eq!(reduce(&prob).unwrap().cells.len(), prob.cell_count());
        }
    }

    #[test]
    fn recovery_drops_tiny_cells() {
        let prog = reduce(&apps::build_markov(1.0, 4.0).unwrap()).unwrap();
        let d = recover_distribution(
            &prog,
            &[(1.0, vec![1.0]), (1e-12, vec![4e-12])],
            DEFAULT_WEIGHT_FLOOR,
        )
        .unwrap();
        assert_eq!(d.atoms.len(), 1);
        assert_eq!(d.atoms[0].weight, 1.0);
        let err = recover_distribution(
            &prog,
            &[(1e-9, vec![0.0]), (1e-12, vec![0.0])],
            DEFAULT_WEIGHT_FLOOR,
        );
        assert!(matches!(err, Err(OuqError::DegenerateSolution(_))));
    }

    #[test]
    fn recovery_snaps_round_off() {
        let prog = reduce(&apps::build_markov(1.0, 4.0).unwrap()).unwrap();
        let d = recover_distribution(
            &prog,
            &[(0.75, vec![-1e-11]), (0.25, vec![0.25 * (4.0 - 1e-9)])],
            DEFAULT_WEIGHT_FLOOR,
        )
        .unwrap();
        assert!(d.atoms[0].location[0] >= 0.0);
        assert!(d.atoms[1].location[0] >= 4.0);
        let e = prog.problem.evaluate_expectation(&d).unwrap();
        assert!((e.objective.to_f64() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn merge_examples() {
        let d = DiscreteDistribution::new(vec![pt(0.5, 0.0), pt(0.5, 2.0)]);
        assert_eq!(merge_masses(&d, 0, 1).unwrap().atoms, vec![pt(1.0, 1.0)]);
        let d = DiscreteDistribution::new(vec![pt(0.25, 4.0), pt(0.75, 0.0)]);
        assert_eq!(merge_masses(&d, 1, 0).unwrap().atoms, vec![pt(1.0, 1.0)]);
        let d = DiscreteDistribution::new(vec![pt(0.3, 5.0), pt(0.0, 9.0), pt(0.7, 1.0)]);
        let m = merge_masses(&d, 0, 1).unwrap();
        assert_eq!(m.atoms, vec![pt(0.3, 5.0), pt(0.7, 1.0)]);
        let z = DiscreteDistribution::new(vec![pt(0.0, 1.0), pt(0.0, 2.0), pt(1.0, 0.0)]);
        assert!(merge_masses(&z, 0, 1).is_err());
        assert!(merge_masses(&z, 1, 1).is_err());
    }
}
