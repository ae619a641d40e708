//! Independent cross-checks: the grid LP and closed-form baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::Cone;
use crate::conic::{ConeSpec, ConicProgram, Layout};
use crate::error::{OuqError, Result};
use crate::extended::ExtReal;
use crate::model::OuqProblem;
use crate::solver::{solve, SolverSettings, Status};

/// Largest number of grid points accepted.
pub const MAX_GRID_POINTS: usize = 2_000_000;

/// Half-width of the band replacing each equality in the grid LP.
pub const EQUALITY_BAND: f64 = 1e-7;

/// Tensor grid over a box, `points_per_axis` evenly spaced points per axis
/// including both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        let g = GridSpec {
            lo,
            hi,
            points_per_axis,
        };
        g.check()?;
        Ok(g)
    }

    /// Interval grid in one dimension.
    pub fn interval(lo: f64, hi: f64, points: usize) -> Result<Self> {
        GridSpec::new(vec![lo], vec![hi], points)
    }

    /// Roughly `total` points spread evenly over `d` axes.
    pub fn with_total(lo: Vec<f64>, hi: Vec<f64>, total: usize) -> Result<Self> {
        let d = lo.len().max(1) as f64;
        let per = (total as f64).powf(1.0 / d).ceil() as usize;
        GridSpec::new(lo, hi, per.max(2))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn check(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(OuqError::Grid(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
        {
            return Err(OuqError::Grid(
                "box needs finite lo < hi on every axis".into(),
            ));
        }
        if self.points_per_axis < 2 {
            return Err(OuqError::Grid("at least 2 points per axis".into()));
        }
        let total = (self.points_per_axis as f64).powi(self.dim() as i32);
        if total > MAX_GRID_POINTS as f64 {
            return Err(OuqError::Grid(format!(
                "{total} points exceeds the cap of {MAX_GRID_POINTS}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point number `k`, first axis varying fastest.
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let last = (n - 1) as f64;
        (0..self.dim())
            .map(|ax| {
                let i = k % n;
                k /= n;
                let (lo, hi) = (self.lo[ax], self.hi[ax]);
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / last
                }
            })
            .collect()
    }
}

/// Point values used by the grid LP.
struct Column {
    f: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

fn admissible(problem: &OuqProblem, theta: &[f64]) -> Result<Option<Column>> {
    if !problem.support.contains(theta)? {
        return Ok(None);
    }
    let f = problem.objective.evaluate(theta)?;
    let ExtReal::Finite(f) = f else {
        return Ok(None);
    };
    let mut g = Vec::with_capacity(problem.inequalities.len());
    for gi in &problem.inequalities {
        match gi.evaluate(theta)? {
            ExtReal::Finite(v) => g.push(v),
            ExtReal::NegInf => return Err(OuqError::Grid("constraint evaluates to -inf".into())),
            ExtReal::PosInf => return Ok(None),
        }
    }
    let h = problem
        .equality
        .as_ref()
        .map(|eq| eq.evaluate(theta))
        .unwrap_or_default();
    Ok(Some(Column { f, g, h }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBound {
    /// `−∞` when no grid distribution satisfies the constraints.
    pub value: ExtReal,
    pub points_used: usize,
    pub status: Status,
}

/// Best expectation over distributions supported on the grid points inside
/// the support. A lower bound on the true supremum up to the equality band.
pub fn grid_bound(
    problem: &OuqProblem,
    grid: &GridSpec,
    settings: &SolverSettings,
) -> Result<GridBound> {
    if grid.dim() != problem.dimension {
        return Err(OuqError::DimensionMismatch {
            expected: problem.dimension,
            got: grid.dim(),
        });
    }
    let cols: Vec<Column> = (0..grid.len())
        .into_par_iter()
        .map(|k| admissible(problem, &grid.point(k)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if cols.is_empty() {
        return Err(OuqError::Grid("no admissible grid points".into()));
    }
    let n = cols.len();
    let (p, q) = (problem.inequalities.len(), cols[0].h.len());
    let mut triplets = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    // Σw = 1
    for j in 0..n {
        triplets.push((0, j, 1.0));
    }
    b.push(1.0);
    cones.push(ConeSpec {
        cone: Cone::Zero,
        len: 1,
    });
    let mut row = 1;
    for j in 0..n {
        triplets.push((row + j, j, -1.0));
        b.push(0.0);
    }
    row += n;
    for i in 0..p {
        for (j, c) in cols.iter().enumerate() {
            triplets.push((row, j, c.g[i]));
        }
        b.push(0.0);
        row += 1;
    }
    for i in 0..q {
        for (j, c) in cols.iter().enumerate() {
            triplets.push((row, j, c.h[i]));
            triplets.push((row + 1, j, -c.h[i]));
        }
        b.extend([EQUALITY_BAND, EQUALITY_BAND]);
        row += 2;
    }
    cones.push(ConeSpec {
        cone: Cone::Nonneg,
        len: row - 1,
    });
    let cp = ConicProgram {
        n,
        c: cols.iter().map(|c| -c.f).collect(),
        triplets,
        b,
        cones,
        layout: Layout::default(),
    };
    let sol = solve(&cp, settings)?;
    let value = match sol.status {
        Status::Optimal => ExtReal::Finite(-sol.primal_objective),
        Status::Infeasible => ExtReal::NegInf,
        other => return Err(OuqError::NotOptimal(other.to_string())),
    };
    Ok(GridBound {
        value,
        points_used: n,
        status: sol.status,
    })
}

/// `P(θ ≥ a) ≤ min(1, mean/a)` for nonnegative `θ`.
pub fn markov_bound(mean: f64, a: f64) -> Result<f64> {
    if !(mean > 0.0 && a > 0.0) {
        return Err(OuqError::InvalidArgument(
            "mean and threshold must be positive".into(),
        ));
    }
    Ok((mean / a).min(1.0))
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Switch point between the series and the continued fraction.
pub const ERFC_SWITCH: f64 = 3.0;

/// `erfc` by the series `erf x = 2x/√π e^{−x²} Σ (2x²)ⁿ / (1·3⋯(2n+1))`.
pub fn erfc_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    1.0 - FRAC_2_SQRT_PI * x * (-x2).exp() * sum
}

/// `erfc x = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))` for
/// `x > 0`, by the modified Lentz method.
pub fn erfc_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= ERFC_SWITCH {
        erfc_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// `P(θ ≥ a)` for a standard normal `θ`.
pub fn gaussian_tail_exact(a: f64) -> f64 {
    0.5 * erfc(a / std::f64::consts::SQRT_2)
}

/// `E|θ| = √(2/π)` for a standard normal `θ`.
pub fn gaussian_abs_moment() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// `2∫₀^∞ θφ(θ)dθ` by adaptive Simpson on unit panels of `[0, 40]`.
pub fn gaussian_abs_moment_quadrature() -> f64 {
    let phi = |t: f64| t * (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    2.0 * (0..40)
        .map(|k| adaptive_simpson(&phi, k as f64, k as f64 + 1.0, 1e-14))
        .sum::<f64>()
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps;

    #[test]
    fn grid_points_hit_ends() {
        let g = GridSpec::interval(0.0, 40.0, 4001).unwrap();
        assert_eq!(g.point(0), vec![0.0]);
        assert_eq!(g.point(400), vec![4.0]);
        assert_eq!(g.point(4000), vec![40.0]);
        let g = GridSpec::interval(-5.0, 5.0, 10001).unwrap();
        assert_eq!(g.point(5750), vec![0.75]);
        assert!(GridSpec::interval(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(vec![0.0; 3], vec![1.0; 3], 200).is_err());
    }

    #[test]
    fn markov_grid() {
        let p = apps::build_markov(1.0, 4.0).unwrap();
        let g = grid_bound(
            &p,
            &GridSpec::interval(0.0, 40.0, 4001).unwrap(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((g.value.to_f64() - 0.25).abs() < 1e-6, "{:?}", g.value);
    }

    #[test]
    fn seesaw_grid() {
        let p = apps::build_seesaw(-1.0, 2.0, 1.0).unwrap();
        let g = grid_bound(
            &p,
            &GridSpec::interval(-1.0, 2.0, 301).unwrap(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((g.value.to_f64() - 0.5).abs() < 1e-6, "{:?}", g.value);
    }

    #[test]
    fn infeasible_grid_is_neg_inf() {
        let p = apps::build_gaussian_tail(0.75, 0.0, -1.0, f64::INFINITY).unwrap();
        let g = grid_bound(
            &p,
            &GridSpec::interval(-5.0, 5.0, 101).unwrap(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(g.value, ExtReal::NegInf);
    }

    #[test]
    fn markov_closed_form() {
        assert_eq!(markov_bound(1.0, 4.0).unwrap(), 0.25);
        assert_eq!(markov_bound(2.0, 2.0).unwrap(), 1.0);
        assert!((markov_bound(0.5, 5.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(markov_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn erfc_reference_values() {
        assert!((gaussian_tail_exact(0.75) - 0.226_627_352_376_868_26).abs() < 1e-12);
        assert_eq!(format!("{:.4}", gaussian_tail_exact(0.75)), "0.2266");
        assert!((gaussian_tail_exact(0.0) - 0.5).abs() < 1e-15);
        assert!(gaussian_tail_exact(40.0) < 1e-300);
        // erfc(1), erfc(2), erfc(5) to 15 digits
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-14);
        assert!((erfc(2.0) - 0.004_677_734_981_047_266).abs() < 1e-14);
        assert!((erfc(5.0) - 1.537_459_794_428_034_8e-12).abs() < 1e-24);
        assert!((erfc(-1.0) - (2.0 - 0.157_299_207_050_285_13)).abs() < 1e-14);
    }

    #[test]
    fn erfc_branches_agree_at_switch() {
        for x in [2.5, 2.9, ERFC_SWITCH, 3.1, 3.5] {
            let (s, c) = (erfc_series(x), erfc_continued_fraction(x));
            assert!((s - c).abs() < 1e-12, "x={x}: {s} vs {c}");
        }
    }

    #[test]
    fn abs_moment_closed_form_and_quadrature() {
        assert!((gaussian_abs_moment() - 0.797_884_560_8).abs() < 1e-10);
        let q = gaussian_abs_moment_quadrature();
        assert!((gaussian_abs_moment() - q).abs() < 1e-10, "{q}");
        let m2: f64 = (-40..40)
            .map(|k| {
                adaptive_simpson(
                    &|t: f64| t * t * (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
                    k as f64,
                    k as f64 + 1.0,
                    1e-14,
                )
            })
            .sum();
        assert!((m2 - 1.0).abs() < 1e-10);
    }
}
