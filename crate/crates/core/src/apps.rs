//! Builders for the worked problems.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::atoms::{ConcaveAtom, ConcaveKind, ConvexAtom, ConvexKind, ConvexSetDesc};
use crate::error::{OuqError, Result};
use crate::model::{AffineEquality, OuqProblem, PiecewiseConcave, PiecewiseConvex, SupportDesc};
use crate::oracle::gaussian_abs_moment;
use crate::paramlp::{to_piecewise_concave, ParamLP};

fn invalid(msg: impl Into<String>) -> OuqError {
    OuqError::InvalidArgument(msg.into())
}

/// `max{0, I(θ ≥ a)}`: the tail indicator as two concave pieces.
fn tail_objective(a: f64) -> PiecewiseConcave {
    PiecewiseConcave::new(vec![
        ConcaveAtom::constant(0.0),
        ConcaveAtom::indicator(ConvexSetDesc::at_least(1, 0, a)),
    ])
}

/// `sup P(θ ≥ a)` over `θ ≥ 0` with `E[θ] = mean`.
pub fn build_markov(mean: f64, a: f64) -> Result<OuqProblem> {
    if !(mean > 0.0 && a > 0.0) || !mean.is_finite() || !a.is_finite() {
        return Err(invalid("markov: mean and a must be positive"));
    }
    Ok(OuqProblem {
        dimension: 1,
        objective: tail_objective(a),
        inequalities: vec![],
        equality: Some(AffineEquality::means(&[mean])),
        support: SupportDesc {
            sets: vec![ConvexSetDesc::at_least(1, 0, 0.0)],
        },
    })
}

/// `sup P(θ ≥ γ)` over `a ≤ θ ≤ b` with `E[θ] = 0`.
pub fn build_seesaw(a: f64, b: f64, gamma: f64) -> Result<OuqProblem> {
    if !(a < 0.0 && 0.0 <= gamma && gamma < b) || !b.is_finite() || !a.is_finite() {
        return Err(invalid("seesaw: need a < 0 <= gamma < b"));
    }
    Ok(OuqProblem {
        dimension: 1,
        objective: tail_objective(gamma),
        inequalities: vec![],
        equality: Some(AffineEquality::means(&[0.0])),
        support: SupportDesc {
            sets: vec![ConvexSetDesc::interval(a, b)],
        },
    })
}

/// `sup P(θ ≥ a)` with `E[θ] = M₁`, `E[θ²] ≤ M₂` and `E|θ| ≤ M₁⁺`. An
/// infinite `M₂` or `M₁⁺` drops that constraint. Inconsistent moments are
/// accepted; the solve reports infeasibility.
pub fn build_gaussian_tail(a: f64, m1: f64, m2: f64, m1abs: f64) -> Result<OuqProblem> {
    if !a.is_finite() || !m1.is_finite() || m2.is_nan() || m1abs.is_nan() {
        return Err(invalid("gaussian-tail: a and M1 must be finite"));
    }
    let mut inequalities = Vec::new();
    if m2 < f64::INFINITY {
        inequalities.push(PiecewiseConvex::new(vec![
            ConvexAtom::power(2, 0)?.with_offset(-m2)
        ]));
    }
    if m1abs < f64::INFINITY {
        inequalities.push(PiecewiseConvex::new(vec![
            ConvexAtom::abs(0).with_offset(-m1abs)
        ]));
    }
    Ok(OuqProblem {
        dimension: 1,
        objective: tail_objective(a),
        inequalities,
        equality: Some(AffineEquality::means(&[m1])),
        support: SupportDesc::default(),
    })
}

/// The standard-normal instance: `M₁ = 0`, `M₂ = 1`, `M₁⁺ = √(2/π)`.
pub fn gaussian_tail_standard(a: f64) -> Result<OuqProblem> {
    build_gaussian_tail(a, 0.0, 1.0, gaussian_abs_moment())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevenueParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: f64,
    /// Infinite drops the second-moment constraint.
    pub sigma: f64,
    pub theta_l: f64,
    pub theta_h: f64,
    pub delta_l: f64,
    pub delta_h: f64,
}

impl Default for RevenueParams {
    fn default() -> Self {
        RevenueParams {
            a: vec![-1.0, -2.0, -3.0],
            b: vec![1.0, 2.0, 3.0],
            c: vec![10.0, 12.0, 15.0],
            mu: 2.0,
            sigma: 1.0,
            theta_l: 1.0,
            theta_h: 3.0,
            delta_l: 0.1,
            delta_h: 0.1,
        }
    }
}

/// `P(θ ∉ C) − δ` as `min{1, I⁰∞(θ ∈ C)} − δ`.
fn outside_probability(set: ConvexSetDesc, delta: f64) -> PiecewiseConvex {
    PiecewiseConvex::new(vec![
        ConvexAtom::constant(1.0).with_offset(-delta),
        ConvexAtom::indicator(set).with_offset(-delta),
    ])
}

/// Worst-case best revenue over customer types: `f = max_k` of the capped
/// quadratics, with mean, second moment and both tail probabilities
/// constrained.
pub fn build_revenue(p: &RevenueParams) -> Result<OuqProblem> {
    let k = p.a.len();
    if k == 0 || p.b.len() != k || p.c.len() != k {
        return Err(invalid(
            "revenue: a, b and c must be nonempty and of equal length",
        ));
    }
    if p.a.iter().any(|&v| !(v < 0.0)) {
        return Err(invalid("revenue: every a_k must be negative"));
    }
    if !(p.theta_l < p.theta_h) {
        return Err(invalid("revenue: need theta_l < theta_h"));
    }
    if !(0.0..=1.0).contains(&p.delta_l) || !(0.0..=1.0).contains(&p.delta_h) {
        return Err(invalid("revenue: deltas must lie in [0, 1]"));
    }
    if !p.mu.is_finite() || !(p.sigma >= 0.0) {
        return Err(invalid("revenue: mu must be finite and sigma nonnegative"));
    }
    let pieces = (0..k)
        .map(|i| ConcaveAtom::capped_concave_quadratic(p.a[i], p.b[i], p.c[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut inequalities = vec![
        outside_probability(ConvexSetDesc::at_least(1, 0, p.theta_l), p.delta_l),
        outside_probability(ConvexSetDesc::at_most(1, 0, p.theta_h), p.delta_h),
    ];
    if p.sigma < f64::INFINITY {
        let m2 = p.mu * p.mu + p.sigma * p.sigma;
        inequalities.push(PiecewiseConvex::new(vec![
            ConvexAtom::power(2, 0)?.with_offset(-m2)
        ]));
    }
    Ok(OuqProblem {
        dimension: 1,
        objective: PiecewiseConcave::new(pieces),
        inequalities,
        equality: Some(AffineEquality::means(&[p.mu])),
        support: SupportDesc::default(),
    })
}

/// The revenue objective without the caps, as a parameterized LP
/// `min t  s.t.  −t ≤ −f⁽ᵏ⁾(θ)`.
pub fn revenue_param_lp(p: &RevenueParams) -> Result<ParamLP> {
    let u = (0..p.a.len())
        .map(|i| {
            // −(a(θ−b)² + c) = |a|θ² − 2|a|bθ + |a|b² − c
            let s = -p.a[i];
            ConvexAtom::convex_quadratic(
                vec![vec![s]],
                vec![-2.0 * s * p.b[i]],
                s * p.b[i] * p.b[i] - p.c[i],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamLP {
        dimension: 1,
        c: vec![1.0],
        a: vec![vec![-1.0]; u.len()],
        h: vec![],
        v: vec![],
        u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub node: usize,
    /// Cost is `max_r (slope_r · s + intercept_r)`.
    pub cost: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcOpfNetwork {
    pub nodes: usize,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// One concave demand per node (affine or concave quadratic).
    pub demands: Vec<ConcaveAtom>,
    pub dimension: usize,
}

impl DcOpfNetwork {
    /// Nodes `0 - 1 - 2`, one generator at node 0 with a cost kink at output
    /// 0.6, demands `dᵢ(θ) = αᵢθᵢ + βᵢ`.
    pub fn three_node_line() -> Self {
        let demand = |i: usize, alpha: f64, beta: f64| {
            let mut a = vec![0.0; 3];
            a[i] = alpha;
            ConcaveAtom::affine(a, beta)
        };
        DcOpfNetwork {
            nodes: 3,
            lines: vec![
                Line {
                    from: 0,
                    to: 1,
                    susceptance: 10.0,
                    limit: 1.0,
                },
                Line {
                    from: 1,
                    to: 2,
                    susceptance: 10.0,
                    limit: 0.25,
                },
            ],
            generators: vec![Generator {
                node: 0,
                cost: vec![(1.0, 0.0), (3.0, -1.2)],
            }],
            demands: vec![
                demand(0, 0.1, 0.1),
                demand(1, 0.2, 0.2),
                demand(2, 0.1, 0.1),
            ],
            dimension: 3,
        }
    }

    /// A parameter where total demand equals the cost kink of
    /// [`three_node_line`](Self::three_node_line).
    pub fn kink_theta(&self) -> Vec<f64> {
        vec![0.5; self.dimension]
    }

    fn connected(&self) -> bool {
        if self.nodes == 0 {
            return false;
        }
        let mut adj = vec![vec![]; self.nodes];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; self.nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Negation of a concave demand as a convex right-hand side.
fn negate(atom: &ConcaveAtom) -> Result<ConvexAtom> {
    let kind = match &atom.kind {
        ConcaveKind::Affine { a, b } => ConvexKind::Affine {
            a: a.iter().map(|v| -v).collect(),
            b: -b,
        },
        ConcaveKind::Constant { r } => ConvexKind::Constant { r: -r },
        ConcaveKind::ConcaveQuadratic { p, q, r } => ConvexKind::ConvexQuadratic {
            p: p.clone(),
            q: q.iter().map(|v| -v).collect(),
            r: -r,
        },
        _ => {
            return Err(invalid(
                "dc-opf: demands must be affine, constant or concave quadratic",
            ))
        }
    };
    Ok(ConvexAtom {
        kind,
        offset: -atom.offset,
    })
}

/// Minimum dispatch cost as a parameterized LP over
/// `x = (c_g, s_g, q_e, α_i, p_i)`.
///
/// Inequalities: `±q_e ≤ q̄_e`, `−p_i ≤ −d_i(θ)`, `slope·s_g − c_g ≤ −intercept`.
/// Equalities: `q_e − B_e(α_from − α_to) = 0` and
/// `p_i − s_i − Σ_{e→i} q_e + Σ_{i→e} q_e = 0`.
pub fn build_dc_opf(net: &DcOpfNetwork) -> Result<ParamLP> {
    let (nn, ne, ng) = (net.nodes, net.lines.len(), net.generators.len());
    if net.demands.len() != nn {
        return Err(invalid("dc-opf: one demand per node"));
    }
    if net
        .lines
        .iter()
        .any(|l| l.from >= nn || l.to >= nn || l.from == l.to)
        || net
            .generators
            .iter()
            .any(|g| g.node >= nn || g.cost.is_empty())
    {
        return Err(invalid(
            "dc-opf: line or generator refers to a missing node",
        ));
    }
    if !net.connected() {
        return Err(invalid("dc-opf: network is disconnected"));
    }
    let n = 2 * ng + ne + 2 * nn;
    let col_c = |g: usize| g;
    let col_s = |g: usize| ng + g;
    let col_q = |e: usize| 2 * ng + e;
    let col_alpha = |i: usize| 2 * ng + ne + i;
    let col_p = |i: usize| 2 * ng + ne + nn + i;
    let unit = |entries: &[(usize, f64)]| {
        let mut r = vec![0.0; n];
        for &(j, v) in entries {
            r[j] += v;
        }
        r
    };
    let mut a = Vec::new();
    let mut u = Vec::new();
    for (e, l) in net.lines.iter().enumerate() {
        a.push(unit(&[(col_q(e), 1.0)]));
        u.push(ConvexAtom::constant(l.limit));
        a.push(unit(&[(col_q(e), -1.0)]));
        u.push(ConvexAtom::constant(l.limit));
    }
    for (i, d) in net.demands.iter().enumerate() {
        a.push(unit(&[(col_p(i), -1.0)]));
        u.push(negate(d)?);
    }
    for (g, gen) in net.generators.iter().enumerate() {
        for &(slope, intercept) in &gen.cost {
            a.push(unit(&[(col_s(g), slope), (col_c(g), -1.0)]));
            u.push(ConvexAtom::constant(-intercept));
        }
    }
    let mut h = Vec::new();
    for (e, l) in net.lines.iter().enumerate() {
        h.push(unit(&[
            (col_q(e), 1.0),
            (col_alpha(l.from), -l.susceptance),
            (col_alpha(l.to), l.susceptance),
        ]));
    }
    for i in 0..nn {
        let mut entries = vec![(col_p(i), 1.0)];
        for (g, gen) in net.generators.iter().enumerate() {
            if gen.node == i {
                entries.push((col_s(g), -1.0));
            }
        }
        for (e, l) in net.lines.iter().enumerate() {
            if l.to == i {
                entries.push((col_q(e), -1.0));
            }
            if l.from == i {
                entries.push((col_q(e), 1.0));
            }
        }
        h.push(unit(&entries));
    }
    let mut c = vec![0.0; n];
    for g in 0..ng {
        c[col_c(g)] = 1.0;
    }
    let v = vec![0.0; h.len()];
    let lp = ParamLP {
        dimension: net.dimension,
        c,
        a,
        h,
        v,
        u,
    };
    lp.validate()?;
    Ok(lp)
}

/// Worst-case expected dispatch cost with demands parameterized on the unit
/// box and known parameter means.
pub fn build_dc_opf_ouq(net: &DcOpfNetwork, means: &[f64]) -> Result<OuqProblem> {
    if means.len() != net.dimension {
        return Err(OuqError::DimensionMismatch {
            expected: net.dimension,
            got: means.len(),
        });
    }
    let lp = build_dc_opf(net)?;
    let objective = to_piecewise_concave(&lp)?;
    let d = net.dimension;
    Ok(OuqProblem {
        dimension: d,
        objective,
        inequalities: vec![],
        equality: Some(AffineEquality::means(means)),
        support: SupportDesc {
            sets: vec![ConvexSetDesc::Box {
                lo: vec![0.0; d],
                hi: vec![1.0; d],
            }],
        },
    })
}

/// A worked problem with a box large enough for grid checks.
#[derive(Clone, Debug)]
pub struct Application {
    pub name: &'static str,
    pub problem: OuqProblem,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn applications() -> Vec<Application> {
    let one = |name, problem, lo: f64, hi: f64| Application {
        name,
        problem,
        lo: vec![lo],
        hi: vec![hi],
    };
    let no_abs = build_gaussian_tail(0.75, 0.0, 1.0, f64::INFINITY).expect("valid parameters");
    let net = DcOpfNetwork::three_node_line();
    vec![
        one(
            "markov",
            build_markov(1.0, 4.0).expect("valid parameters"),
            0.0,
            40.0,
        ),
        one(
            "seesaw",
            build_seesaw(-1.0, 2.0, 1.0).expect("valid parameters"),
            -1.0,
            2.0,
        ),
        one(
            "gaussian-tail",
            gaussian_tail_standard(0.75).expect("valid parameters"),
            -5.0,
            5.0,
        ),
        one("gaussian-tail-no-abs", no_abs, -5.0, 5.0),
        one(
            "revenue",
            build_revenue(&RevenueParams::default()).expect("valid parameters"),
            -2.0,
            8.0,
        ),
        Application {
            name: "dc-opf",
            problem: build_dc_opf_ouq(&net, &[0.5, 0.4, 0.6]).expect("valid network"),
            lo: vec![0.0; 3],
            hi: vec![1.0; 3],
        },
    ]
}

pub fn application_suite() -> Vec<OuqProblem> {
    applications().into_iter().map(|a| a.problem).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::ExtReal;
    use crate::paramlp::solve_lp_at;
    use crate::pipeline::{solve_bound, BoundOptions};
    use crate::solver::SolverSettings;

    #[test]
    fn builders_validate() {
        for app in applications() {
            assert!(
                app.problem.validate().is_empty(),
                "{}: {:?}",
                app.name,
                app.problem.validate()
            );
        }
    }

    #[test]
    fn preconditions() {
        assert!(build_markov(0.0, 1.0).is_err());
        assert!(build_seesaw(1.0, 2.0, 1.5).is_err());
        assert!(build_seesaw(-1.0, 2.0, 2.0).is_err());
        let p = RevenueParams {
            theta_l: 5.0,
            ..RevenueParams::default()
        };
        assert!(build_revenue(&p).is_err());
        let mut p = RevenueParams::default();
        p.a[0] = 0.5;
        assert!(build_revenue(&p).is_err());
    }

    #[test]
    fn markov_and_seesaw_values() {
        let opts = BoundOptions::default();
        let r = solve_bound(&build_markov(1.0, 1.0).unwrap(), &opts).unwrap();
        assert!((r.bound.unwrap() - 1.0).abs() < 1e-8);
        let r = solve_bound(&build_seesaw(-1.0, 2.0, 0.0).unwrap(), &opts).unwrap();
        assert!((r.bound.unwrap() - 1.0).abs() < 1e-7);
        let r = solve_bound(&build_seesaw(-1.0, 2.0, 1.0).unwrap(), &opts).unwrap();
        assert!((r.bound.unwrap() - 0.5).abs() < 1e-7);
        let mut locs: Vec<f64> = r
            .distribution
            .unwrap()
            .atoms
            .iter()
            .map(|a| a.location[0])
            .collect();
        locs.sort_by(f64::total_cmp);
        assert!(
            (locs[0] + 1.0).abs() < 1e-6 && (locs[1] - 1.0).abs() < 1e-6,
            "{locs:?}"
        );
    }

    #[test]
    fn revenue_param_lp_matches_uncapped_pieces() {
        let p = RevenueParams::default();
        let lp = revenue_param_lp(&p).unwrap();
        let f = to_piecewise_concave(&lp).unwrap();
        assert_eq!(f.pieces.len(), 3);
        for th in [-1.0, 0.5, 1.7, 2.4, 4.0] {
            let direct = (0..3)
                .map(|k| p.a[k] * (th - p.b[k]).powi(2) + p.c[k])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((f.evaluate(&[th]).unwrap().to_f64() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_opf_zero_demand_and_overload() {
        let mut net = DcOpfNetwork::three_node_line();
        net.demands = vec![ConcaveAtom::affine(vec![0.0; 3], 0.0); 3];
        let lp = build_dc_opf(&net).unwrap();
        let v = solve_lp_at(&lp, &[0.3, 0.3, 0.3], &SolverSettings::default()).unwrap();
        // cost max(s, 3s − 1.2) at s = 0
        assert!(v.to_f64().abs() < 1e-7);
        let lp = build_dc_opf(&DcOpfNetwork::three_node_line()).unwrap();
        let v = solve_lp_at(&lp, &[0.0, 0.0, 10.0], &SolverSettings::default()).unwrap();
        assert_eq!(v, ExtReal::PosInf);
        let mut net = DcOpfNetwork::three_node_line();
        net.lines.pop();
        assert!(build_dc_opf(&net).is_err());
    }
}
