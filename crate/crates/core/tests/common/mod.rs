#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ouq_core::atoms::{ConcaveAtom, ConvexAtom, ConvexSetDesc};
use ouq_core::model::{AffineEquality, OuqProblem, PiecewiseConcave, PiecewiseConvex, SupportDesc};
use ouq_core::paramlp::ParamLP;
use ouq_core::reduce::{DiscreteDistribution, WeightedPoint};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.gen_range(lo..hi)
}

pub fn point(r: &mut ChaCha8Rng, d: usize, half: f64) -> Vec<f64> {
    (0..d).map(|_| uniform(r, -half, half)).collect()
}

pub fn psd(r: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let b = DMatrix::from_fn(d, d, |_, _| uniform(r, -1.0, 1.0));
    let p = &b * b.transpose();
    (0..d)
        .map(|i| (0..d).map(|j| p[(i, j)]).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    ConcaveAffine,
    ConcaveQuadratic,
    CappedQuadratic,
    ConcaveIndicator,
    ConcaveConstant,
    ConvexAffine,
    ConvexQuadratic,
    Power,
    Abs,
    ConvexIndicator,
    ConvexConstant,
}

pub const FAMILIES: [Family; 11] = [
    Family::ConcaveAffine,
    Family::ConcaveQuadratic,
    Family::CappedQuadratic,
    Family::ConcaveIndicator,
    Family::ConcaveConstant,
    Family::ConvexAffine,
    Family::ConvexQuadratic,
    Family::Power,
    Family::Abs,
    Family::ConvexIndicator,
    Family::ConvexConstant,
];

fn random_set(r: &mut ChaCha8Rng, d: usize) -> ConvexSetDesc {
    match r.gen_range(0..3) {
        0 => ConvexSetDesc::Ball {
            center: point(r, d, 1.0),
            radius: uniform(r, 0.8, 2.0),
        },
        1 => {
            let lo = point(r, d, 1.5);
            let hi = lo.iter().map(|l| l + uniform(r, 0.5, 2.5)).collect();
            ConvexSetDesc::Box { lo, hi }
        }
        _ => ConvexSetDesc::Halfspace {
            a: point(r, d, 1.0),
            b: uniform(r, 0.0, 1.0),
        },
    }
}

pub fn concave_piece(r: &mut ChaCha8Rng, f: Family, d: usize) -> ConcaveAtom {
    let off = uniform(r, -1.0, 1.0);
    match f {
        Family::ConcaveQuadratic => {
            ConcaveAtom::concave_quadratic(psd(r, d), point(r, d, 1.0), uniform(r, -1.0, 1.0))
                .unwrap()
        }
        Family::CappedQuadratic => ConcaveAtom::capped_concave_quadratic(
            -uniform(r, 0.2, 2.0),
            uniform(r, -1.0, 1.0),
            uniform(r, -1.0, 1.0),
        )
        .unwrap(),
        Family::ConcaveIndicator => ConcaveAtom::indicator(random_set(r, d)),
        Family::ConcaveConstant => ConcaveAtom::constant(uniform(r, -2.0, 2.0)),
        _ => ConcaveAtom::affine(point(r, d, 1.0), uniform(r, -1.0, 1.0)),
    }
    .with_offset(off)
}

pub fn convex_piece(r: &mut ChaCha8Rng, f: Family, d: usize) -> ConvexAtom {
    let off = uniform(r, -1.0, 1.0);
    match f {
        Family::ConvexQuadratic => {
            ConvexAtom::convex_quadratic(psd(r, d), point(r, d, 1.0), uniform(r, -1.0, 1.0))
                .unwrap()
        }
        Family::Power => ConvexAtom::power(2 * r.gen_range(1..4), r.gen_range(0..d)).unwrap(),
        Family::Abs => ConvexAtom::abs(r.gen_range(0..d)),
        Family::ConvexIndicator => ConvexAtom::indicator(random_set(r, d)),
        Family::ConvexConstant => ConvexAtom::constant(uniform(r, -2.0, 2.0)),
        _ => ConvexAtom::affine(point(r, d, 1.0), uniform(r, -1.0, 1.0)),
    }
    .with_offset(off)
}

fn is_concave_family(f: Family) -> bool {
    matches!(
        f,
        Family::ConcaveAffine
            | Family::ConcaveQuadratic
            | Family::CappedQuadratic
            | Family::ConcaveIndicator
            | Family::ConcaveConstant
    )
}

/// A problem whose objective (or inequality) pieces come from the family,
/// with the other slot filled by generic pieces.
pub fn family_problem(r: &mut ChaCha8Rng, f: Family) -> OuqProblem {
    let d = if f == Family::CappedQuadratic {
        1
    } else {
        r.gen_range(1..4)
    };
    let (obj, con) = if is_concave_family(f) {
        (f, Family::ConvexQuadratic)
    } else {
        (Family::ConcaveQuadratic, f)
    };
    let k = r.gen_range(1..4);
    let l = r.gen_range(1..4);
    OuqProblem {
        dimension: d,
        objective: PiecewiseConcave::new((0..k).map(|_| concave_piece(r, obj, d)).collect()),
        inequalities: vec![PiecewiseConvex::new(
            (0..l).map(|_| convex_piece(r, con, d)).collect(),
        )],
        equality: Some(AffineEquality {
            a: vec![point(r, d, 1.0)],
            b: vec![uniform(r, -1.0, 1.0)],
        }),
        support: SupportDesc { sets: vec![] },
    }
}

pub struct MergeCase {
    pub problem: OuqProblem,
    pub dist: DiscreteDistribution,
    pub i: usize,
    pub j: usize,
}

fn finite_here(p: &OuqProblem, th: &[f64]) -> Option<(usize, Vec<usize>)> {
    p.objective.evaluate(th).ok()?.finite()?;
    let mut ls = Vec::new();
    for g in &p.inequalities {
        g.evaluate(th).ok()?.finite()?;
        ls.push(g.active_piece(th).ok()?);
    }
    Some((p.objective.active_piece(th).ok()?, ls))
}

/// Random distribution with two atoms sharing objective and constraint pieces.
pub fn merge_case(r: &mut ChaCha8Rng, f: Family) -> MergeCase {
    loop {
        let problem = family_problem(r, f);
        let d = problem.dimension;
        let n = r.gen_range(2..6);
        let mut atoms = Vec::new();
        let mut tries = 0;
        while atoms.len() < n && tries < 2000 {
            tries += 1;
            let th = point(r, d, 2.5);
            if finite_here(&problem, &th).is_some() {
                atoms.push(WeightedPoint {
                    weight: uniform(r, 0.05, 1.0),
                    location: th,
                });
            }
        }
        if atoms.len() < n {
            continue;
        }
        let i = r.gen_range(0..n);
        let key = finite_here(&problem, &atoms[i].location).unwrap();
        let mut found = None;
        for _ in 0..2000 {
            let th = point(r, d, 2.5);
            if finite_here(&problem, &th).as_ref() == Some(&key) {
                found = Some(th);
                break;
            }
        }
        let Some(th) = found else { continue };
        let j = (i + 1 + r.gen_range(0..n - 1)) % n;
        atoms[j].location = th;
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        for a in &mut atoms {
            a.weight /= total;
        }
        return MergeCase {
            problem,
            dist: DiscreteDistribution::new(atoms),
            i,
            j,
        };
    }
}

/// `(Σp f, Σp gᵢ, Σp h)` evaluated point by point.
pub fn aggregates(p: &OuqProblem, d: &DiscreteDistribution) -> (f64, Vec<f64>, Vec<f64>) {
    let mut f = 0.0;
    let mut g = vec![0.0; p.inequalities.len()];
    let q = p.equality.as_ref().map_or(0, |e| e.b.len());
    let mut h = vec![0.0; q];
    for a in &d.atoms {
        f += a.weight * p.objective.evaluate(&a.location).unwrap().to_f64();
        for (gi, c) in g.iter_mut().zip(&p.inequalities) {
            *gi += a.weight * c.evaluate(&a.location).unwrap().to_f64();
        }
        if let Some(eq) = &p.equality {
            for (r, row) in eq.a.iter().enumerate() {
                let v: f64 = row.iter().zip(&a.location).map(|(x, y)| x * y).sum::<f64>() + eq.b[r];
                h[r] += a.weight * v;
            }
        }
    }
    (f, g, h)
}

/// Worst merge defect: positive when merging hurts.
pub fn merge_defect(case: &MergeCase, merged: &DiscreteDistribution) -> f64 {
    let (f0, g0, h0) = aggregates(&case.problem, &case.dist);
    let (f1, g1, h1) = aggregates(&case.problem, merged);
    let mut worst = f0 - f1;
    for (a, b) in g0.iter().zip(&g1) {
        worst = worst.max(b - a);
    }
    for (a, b) in h0.iter().zip(&h1) {
        worst = worst.max((a - b).abs());
    }
    worst
}

/// Random bounded, feasible parameterized LP: `x` in a box plus random rows
/// whose right-hand sides stay positive on `[-1, 1]^d`.
pub fn random_param_lp(r: &mut ChaCha8Rng) -> ParamLP {
    let n = r.gen_range(1..4);
    let d = r.gen_range(1..3);
    let extra = r.gen_range(1..4);
    let mut a = Vec::new();
    let mut u = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        a.push(e.clone());
        u.push(ConvexAtom::affine(point(r, d, 0.5), 2.0));
        e[j] = -1.0;
        a.push(e);
        u.push(ConvexAtom::affine(point(r, d, 0.5), 2.0));
    }
    for _ in 0..extra {
        a.push(point(r, n, 1.0));
        let atom = if r.gen_bool(0.5) {
            ConvexAtom::affine(point(r, d, 0.5), uniform(r, 1.5, 3.0))
        } else {
            ConvexAtom::convex_quadratic(psd(r, d), point(r, d, 0.5), uniform(r, 1.5, 3.0)).unwrap()
        };
        u.push(atom);
    }
    ParamLP {
        dimension: d,
        c: point(r, n, 1.0),
        a,
        h: vec![],
        v: vec![],
        u,
    }
}

/// Minimum of `cᵀx` over `Ax ≤ rhs` by enumerating basic solutions.
pub fn brute_force_lp(c: &[f64], a: &[Vec<f64>], rhs: &[f64]) -> Option<f64> {
    let n = c.len();
    let m = a.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mat = DMatrix::from_fn(n, n, |i, j| a[idx[i]][j]);
        let b = DVector::from_fn(n, |i, _| rhs[idx[i]]);
        if let Some(x) = mat.lu().solve(&b) {
            let ok = (0..m).all(|i| {
                a[i].iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= rhs[i] + 1e-9
            });
            if ok && x.iter().all(|v| v.is_finite()) {
                let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for t in k + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}
