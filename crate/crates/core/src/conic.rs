//! Standard-form cone program `min cᵀx  s.t.  Ax + s = b,  s ∈ K`.
//!
//! Column layout per mass cell: weight `p`, moment vector `γ`, objective
//! hypograph value `t` and its auxiliaries, then for every inequality the
//! epigraph value `e` and its auxiliaries. Row layout: the simplex row, the
//! equality rows, `p ⪰ 0`, the aggregated inequality rows `Σ e ≤ 0`, then the
//! blocks of each cell in cell order.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::atoms::{ConeGroup, ConicBlock, Local};
use crate::cones::Cone;
use crate::error::{OuqError, Result};
use crate::reduce::ReducedProgram;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub cone: Cone,
    pub len: usize,
}

/// Columns owned by one mass cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellColumns {
    pub weight: usize,
    pub gamma: Range<usize>,
    pub objective_value: usize,
    pub objective_aux: Range<usize>,
    pub constraint_values: Vec<usize>,
    pub constraint_aux: Vec<Range<usize>>,
}

/// Where the structural rows and columns of a compiled program live.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layout {
    pub cells: Vec<CellColumns>,
    pub simplex_row: Option<usize>,
    pub equality_rows: Range<usize>,
    pub inequality_rows: Range<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    pub n: usize,
    pub c: Vec<f64>,
    /// `(row, col, value)`; repeated entries add up.
    pub triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeSpec>,
    pub layout: Layout,
}

impl ConicProgram {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn cone_count(&self, cone: Cone) -> usize {
        self.cones.iter().filter(|c| c.cone == cone).count()
    }

    /// Row ranges of the cone blocks.
    pub fn cone_ranges(&self) -> Vec<(Cone, Range<usize>)> {
        let mut start = 0;
        self.cones
            .iter()
            .map(|c| {
                let r = start..start + c.len;
                start += c.len;
                (c.cone, r)
            })
            .collect()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for &(i, j, v) in &self.triplets {
            out[i] += v * x[j];
        }
        out
    }

    pub fn mul_transpose(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.triplets {
            out[j] += v * z[i];
        }
        out
    }

    /// `s = b − Ax`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.mul(x)
            .iter()
            .zip(&self.b)
            .map(|(ax, b)| b - ax)
            .collect()
    }

    /// Whether `s` lies in `K` within `tol`, cone by cone.
    pub fn in_cone(&self, s: &[f64], tol: f64) -> bool {
        self.cone_ranges()
            .into_iter()
            .all(|(k, r)| k.contains(&s[r], tol))
    }

    pub fn in_dual_cone(&self, z: &[f64], tol: f64) -> bool {
        self.cone_ranges()
            .into_iter()
            .all(|(k, r)| k.dual_contains(&z[r], tol))
    }

    /// Weight and moment vector of every cell from a primal point.
    pub fn cell_values(&self, x: &[f64]) -> Vec<(f64, Vec<f64>)> {
        self.layout
            .cells
            .iter()
            .map(|c| (x[c.weight], x[c.gamma.clone()].to_vec()))
            .collect()
    }

    /// Plain-text dump: `A row col value`, `b row value`, `c col value` and
    /// `K kind len` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# rows {} cols {} nnz {}",
            self.m(),
            self.n,
            self.triplets.len()
        );
        for &(i, j, v) in &self.triplets {
            let _ = writeln!(out, "A {i} {j} {v:e}");
        }
        for (i, v) in self.b.iter().enumerate() {
            let _ = writeln!(out, "b {i} {v:e}");
        }
        for (j, v) in self.c.iter().enumerate() {
            let _ = writeln!(out, "c {j} {v:e}");
        }
        for k in &self.cones {
            let kind = match k.cone {
                Cone::Zero => "zero",
                Cone::Nonneg => "nonneg",
                Cone::Soc => "soc",
                Cone::Rsoc => "rsoc",
            };
            let _ = writeln!(out, "K {kind} {}", k.len);
        }
        out
    }

    /// Primal point for given cell weights, moments, objective values and
    /// epigraph values, with auxiliaries filled by the atoms' witnesses.
    pub fn assemble_point(
        &self,
        program: &ReducedProgram,
        cells: &[(f64, Vec<f64>)],
        objective_values: &[f64],
        constraint_values: &[Vec<f64>],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (ci, (cell, cols)) in program.cells.iter().zip(&self.layout.cells).enumerate() {
            let (p, gamma) = &cells[ci];
            x[cols.weight] = *p;
            x[cols.gamma.clone()].copy_from_slice(gamma);
            x[cols.objective_value] = objective_values[ci];
            let piece = &program.problem.objective.pieces[cell.objective_piece];
            let aux = piece.aux_witness(gamma, *p);
            x[cols.objective_aux.clone()].copy_from_slice(&aux);
            for (i, &l) in cell.constraint_pieces.iter().enumerate() {
                let e = constraint_values[ci][i];
                x[cols.constraint_values[i]] = e;
                let atom = &program.problem.inequalities[i].pieces[l];
                let aux = atom.aux_witness(gamma, *p, e);
                x[cols.constraint_aux[i].clone()].copy_from_slice(&aux);
            }
        }
        x
    }
}

struct Builder {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<ConeSpec>,
}

impl Builder {
    fn alloc(&mut self, k: usize) -> Range<usize> {
        let r = self.n..self.n + k;
        self.n += k;
        r
    }

    /// Appends rows `rhs − Σ coef·x ∈ cone`.
    fn rows(&mut self, cone: Cone, rows: Vec<(Vec<(usize, f64)>, f64)>) {
        if rows.is_empty() {
            return;
        }
        let len = rows.len();
        for (coefs, rhs) in rows {
            let i = self.b.len();
            for (j, v) in coefs {
                if v != 0.0 {
                    self.triplets.push((i, j, v));
                }
            }
            self.b.push(rhs);
        }
        match self.cones.last_mut() {
            Some(last) if last.cone == cone && cone.is_separable() => last.len += len,
            _ => self.cones.push(ConeSpec { cone, len }),
        }
    }

    /// Appends a block group: the row expressions themselves lie in the cone.
    fn group(&mut self, group: &ConeGroup, map: &dyn Fn(Local) -> usize) {
        let rows = group
            .rows
            .iter()
            .map(|e| (e.terms.iter().map(|&(v, c)| (map(v), -c)).collect(), 0.0))
            .collect();
        self.rows(group.cone, rows);
    }
}

fn block_map(cols: &CellColumns, value: usize, aux: Range<usize>) -> impl Fn(Local) -> usize + '_ {
    move |v| match v {
        Local::Arg(j) => cols.gamma.start + j,
        Local::Scale => cols.weight,
        Local::Value => value,
        Local::Aux(i) => aux.start + i,
    }
}

/// Compiles the reduced program; the objective is negated so the program is a
/// minimization.
pub fn compile(program: &ReducedProgram) -> ConicProgram {
    let pr = &program.problem;
    let d = pr.dimension;
    let mut bld = Builder {
        n: 0,
        triplets: vec![],
        b: vec![],
        cones: vec![],
    };
    let mut obj_blocks: Vec<ConicBlock> = Vec::with_capacity(program.cells.len());
    let mut con_blocks: Vec<Vec<ConicBlock>> = Vec::with_capacity(program.cells.len());
    let mut cells = Vec::with_capacity(program.cells.len());
    for cell in &program.cells {
        let ob = program.objective_block(cell);
        let cbs: Vec<ConicBlock> = (0..pr.inequalities.len())
            .map(|i| program.constraint_block(cell, i))
            .collect();
        let weight = bld.alloc(1).start;
        let gamma = bld.alloc(d);
        let objective_value = bld.alloc(1).start;
        let objective_aux = bld.alloc(ob.n_aux);
        let mut constraint_values = Vec::new();
        let mut constraint_aux = Vec::new();
        for cb in &cbs {
            constraint_values.push(bld.alloc(1).start);
            constraint_aux.push(bld.alloc(cb.n_aux));
        }
        cells.push(CellColumns {
            weight,
            gamma,
            objective_value,
            objective_aux,
            constraint_values,
            constraint_aux,
        });
        obj_blocks.push(ob);
        con_blocks.push(cbs);
    }

    let simplex: Vec<(usize, f64)> = cells.iter().map(|c| (c.weight, 1.0)).collect();
    bld.rows(Cone::Zero, vec![(simplex, 1.0)]);
    let eq_start = bld.b.len();
    if let Some(eq) = &pr.equality {
        let rows = (0..eq.rows())
            .map(|j| {
                let coefs = cells
                    .iter()
                    .flat_map(|c| (0..d).map(move |i| (c.gamma.start + i, eq.a[i][j])))
                    .collect();
                (coefs, -eq.b[j])
            })
            .collect();
        bld.rows(Cone::Zero, rows);
    }
    let eq_end = bld.b.len();
    bld.rows(
        Cone::Nonneg,
        cells
            .iter()
            .map(|c| (vec![(c.weight, -1.0)], 0.0))
            .collect(),
    );
    let ineq_start = bld.b.len();
    let ineq_rows = (0..pr.inequalities.len())
        .map(|i| {
            (
                cells
                    .iter()
                    .map(|c| (c.constraint_values[i], 1.0))
                    .collect(),
                0.0,
            )
        })
        .collect();
    bld.rows(Cone::Nonneg, ineq_rows);
    let ineq_end = bld.b.len();

    for (ci, cols) in cells.iter().enumerate() {
        let map = block_map(cols, cols.objective_value, cols.objective_aux.clone());
        for g in &obj_blocks[ci].groups {
            bld.group(g, &map);
        }
        for (i, cb) in con_blocks[ci].iter().enumerate() {
            let map = block_map(
                cols,
                cols.constraint_values[i],
                cols.constraint_aux[i].clone(),
            );
            for g in &cb.groups {
                bld.group(g, &map);
            }
        }
        let map = block_map(cols, cols.objective_value, 0..0);
        for g in program.support_groups(&program.cells[ci]) {
            bld.group(&g, &map);
        }
    }

    let mut c = vec![0.0; bld.n];
    for cols in &cells {
        c[cols.objective_value] = -1.0;
    }
    ConicProgram {
        n: bld.n,
        c,
        triplets: bld.triplets,
        b: bld.b,
        cones: bld.cones,
        layout: Layout {
            cells,
            simplex_row: Some(0),
            equality_rows: eq_start..eq_end,
            inequality_rows: ineq_start..ineq_end,
        },
    }
}

/// Outcome of presolve checks that decide the problem without a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresolveFlag {
    None,
    Infeasible,
    Unbounded,
}

/// A reduced and equilibrated program with the maps needed to undo both.
#[derive(Clone, Debug)]
pub struct Presolved {
    pub program: ConicProgram,
    pub flag: PresolveFlag,
    pub kept_rows: Vec<usize>,
    pub kept_cols: Vec<usize>,
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
    original_m: usize,
    original_n: usize,
    original_b: Vec<f64>,
}

/// Number of Ruiz equilibration passes.
pub const RUIZ_PASSES: usize = 3;

/// Drops empty separable rows and empty columns, then equilibrates with
/// Ruiz scaling. Rows inside a second-order or rotated cone share one scale so
/// the cone is preserved.
pub fn presolve(cp: &ConicProgram) -> Presolved {
    let (m, n) = (cp.m(), cp.n);
    let mut row_nnz = vec![0usize; m];
    let mut col_nnz = vec![0usize; n];
    for &(i, j, v) in &cp.triplets {
        if v != 0.0 {
            row_nnz[i] += 1;
            col_nnz[j] += 1;
        }
    }
    let mut flag = PresolveFlag::None;
    let mut kept_rows = Vec::new();
    let mut cones = Vec::new();
    for (cone, range) in cp.cone_ranges() {
        if cone.is_separable() {
            let mut len = 0;
            for i in range {
                if row_nnz[i] == 0 {
                    let ok = match cone {
                        Cone::Zero => cp.b[i] == 0.0,
                        _ => cp.b[i] >= 0.0,
                    };
                    if !ok {
                        flag = PresolveFlag::Infeasible;
                    }
                    continue;
                }
                kept_rows.push(i);
                len += 1;
            }
            if len > 0 {
                cones.push(ConeSpec { cone, len });
            }
        } else {
            cones.push(ConeSpec {
                cone,
                len: range.len(),
            });
            kept_rows.extend(range);
        }
    }
    let mut kept_cols = Vec::new();
    for (j, &nnz) in col_nnz.iter().enumerate() {
        if nnz == 0 {
            if cp.c[j] != 0.0 && flag == PresolveFlag::None {
                flag = PresolveFlag::Unbounded;
            }
            continue;
        }
        kept_cols.push(j);
    }
    let mut row_new = vec![usize::MAX; m];
    for (k, &i) in kept_rows.iter().enumerate() {
        row_new[i] = k;
    }
    let mut col_new = vec![usize::MAX; n];
    for (k, &j) in kept_cols.iter().enumerate() {
        col_new[j] = k;
    }
    let mut triplets: Vec<(usize, usize, f64)> = cp
        .triplets
        .iter()
        .filter(|&&(i, j, v)| v != 0.0 && row_new[i] != usize::MAX && col_new[j] != usize::MAX)
        .map(|&(i, j, v)| (row_new[i], col_new[j], v))
        .collect();
    let mut reduced = ConicProgram {
        n: kept_cols.len(),
        c: kept_cols.iter().map(|&j| cp.c[j]).collect(),
        triplets: vec![],
        b: kept_rows.iter().map(|&i| cp.b[i]).collect(),
        cones,
        layout: Layout::default(),
    };

    let (mr, nr) = (reduced.m(), reduced.n);
    let mut row_scale = vec![1.0; mr];
    let mut col_scale = vec![1.0; nr];
    let groups = reduced.cone_ranges();
    for _ in 0..RUIZ_PASSES {
        let mut rmax = vec![0.0f64; mr];
        let mut cmax = vec![0.0f64; nr];
        for &(i, j, v) in &triplets {
            rmax[i] = rmax[i].max(v.abs());
            cmax[j] = cmax[j].max(v.abs());
        }
        let mut dr = vec![1.0; mr];
        for (cone, range) in &groups {
            if cone.is_separable() {
                for i in range.clone() {
                    dr[i] = inv_sqrt(rmax[i]);
                }
            } else {
                let g = range.clone().map(|i| rmax[i]).fold(0.0, f64::max);
                for i in range.clone() {
                    dr[i] = inv_sqrt(g);
                }
            }
        }
        let dc: Vec<f64> = cmax.iter().map(|&v| inv_sqrt(v)).collect();
        for t in &mut triplets {
            t.2 *= dr[t.0] * dc[t.1];
        }
        for i in 0..mr {
            row_scale[i] *= dr[i];
        }
        for j in 0..nr {
            col_scale[j] *= dc[j];
        }
    }
    for (i, bi) in reduced.b.iter_mut().enumerate() {
        *bi *= row_scale[i];
    }
    for (j, cj) in reduced.c.iter_mut().enumerate() {
        *cj *= col_scale[j];
    }
    reduced.triplets = triplets;
    Presolved {
        program: reduced,
        flag,
        kept_rows,
        kept_cols,
        row_scale,
        col_scale,
        original_m: m,
        original_n: n,
        original_b: cp.b.clone(),
    }
}

fn inv_sqrt(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        1.0 / v.sqrt()
    } else {
        1.0
    }
}

impl Presolved {
    /// Maps `(x, s, z)` of the presolved program back to the original one.
    /// Dropped rows get `s = b` and `z = 0`; dropped columns get `x = 0`.
    pub fn restore(
        &self,
        x: &[f64],
        s: &[f64],
        z: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if x.len() != self.kept_cols.len() || s.len() != self.kept_rows.len() || z.len() != s.len()
        {
            return Err(OuqError::DimensionMismatch {
                expected: self.kept_rows.len(),
                got: s.len(),
            });
        }
        let mut xf = vec![0.0; self.original_n];
        for (k, &j) in self.kept_cols.iter().enumerate() {
            xf[j] = x[k] * self.col_scale[k];
        }
        let mut sf = self.original_b.clone();
        let mut zf = vec![0.0; self.original_m];
        for (k, &i) in self.kept_rows.iter().enumerate() {
            sf[i] = s[k] / self.row_scale[k];
            zf[i] = z[k] * self.row_scale[k];
        }
        Ok((xf, sf, zf))
    }
}
