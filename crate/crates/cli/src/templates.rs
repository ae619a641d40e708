//! Named problem templates with numeric parameter overrides.

use anyhow::{bail, Context, Result};
use ouq_core::apps::{self, DcOpfNetwork, RevenueParams};
use ouq_core::model::OuqProblem;
use ouq_core::oracle::gaussian_abs_moment;

pub struct Template {
    pub name: &'static str,
    pub about: &'static str,
    /// Parameter names with defaults, in display order.
    pub params: Vec<(&'static str, f64)>,
    /// Box used for grid checks when none is given.
    pub lo: f64,
    pub hi: f64,
}

pub fn templates() -> Vec<Template> {
    let d = RevenueParams::default();
    vec![
        Template {
            name: "gaussian-tail",
            about: "sup P(θ ≥ a) with E[θ]=M1, E[θ²] ≤ M2, E|θ| ≤ M1abs (inf drops a constraint)",
            params: vec![
                ("a", 0.75),
                ("M1", 0.0),
                ("M2", 1.0),
                ("M1abs", gaussian_abs_moment()),
            ],
            lo: -10.0,
            hi: 10.0,
        },
        Template {
            name: "markov",
            about: "sup P(θ ≥ a) over θ ≥ 0 with E[θ]=mean",
            params: vec![("mean", 1.0), ("a", 4.0)],
            lo: 0.0,
            hi: 40.0,
        },
        Template {
            name: "seesaw",
            about: "sup P(θ ≥ gamma) over a ≤ θ ≤ b with E[θ]=0",
            params: vec![("a", -1.0), ("b", 2.0), ("gamma", 1.0)],
            lo: -1.0,
            hi: 2.0,
        },
        Template {
            name: "revenue",
            about: "worst-case best revenue over three customer types (inf sigma drops E[θ²])",
            params: vec![
                ("mu", d.mu),
                ("sigma", d.sigma),
                ("theta_l", d.theta_l),
                ("theta_h", d.theta_h),
                ("delta_l", d.delta_l),
                ("delta_h", d.delta_h),
            ],
            lo: -2.0,
            hi: 8.0,
        },
        Template {
            name: "dc-opf",
            about: "worst-case expected dispatch cost of a 3-node line network, demands on [0,1]³",
            params: vec![("m1", 0.5), ("m2", 0.4), ("m3", 0.6)],
            lo: 0.0,
            hi: 1.0,
        },
    ]
}

pub fn find(name: &str) -> Result<Template> {
    templates()
        .into_iter()
        .find(|t| t.name == name)
        .with_context(|| {
            let names: Vec<_> = templates().iter().map(|t| t.name).collect();
            format!(
                "unknown template '{name}' (available: {})",
                names.join(", ")
            )
        })
}

impl Template {
    pub fn check_param(&self, name: &str) -> Result<()> {
        if self.params.iter().any(|(p, _)| *p == name) {
            Ok(())
        } else {
            let names: Vec<_> = self.params.iter().map(|(p, _)| *p).collect();
            bail!(
                "template '{}' has no parameter '{name}' (parameters: {})",
                self.name,
                names.join(", ")
            )
        }
    }

    /// Builds the problem with the given overrides applied to the defaults.
    pub fn build(&self, overrides: &[(String, f64)]) -> Result<OuqProblem> {
        let mut values = self.params.clone();
        for (k, v) in overrides {
            self.check_param(k)?;
            values.iter_mut().find(|(p, _)| p == k).expect("checked").1 = *v;
        }
        let get = |k: &str| {
            values
                .iter()
                .find(|(p, _)| *p == k)
                .expect("template parameter")
                .1
        };
        let problem = match self.name {
            "gaussian-tail" => {
                apps::build_gaussian_tail(get("a"), get("M1"), get("M2"), get("M1abs"))?
            }
            "markov" => apps::build_markov(get("mean"), get("a"))?,
            "seesaw" => apps::build_seesaw(get("a"), get("b"), get("gamma"))?,
            "revenue" => apps::build_revenue(&RevenueParams {
                mu: get("mu"),
                sigma: get("sigma"),
                theta_l: get("theta_l"),
                theta_h: get("theta_h"),
                delta_l: get("delta_l"),
                delta_h: get("delta_h"),
                ..RevenueParams::default()
            })?,
            "dc-opf" => apps::build_dc_opf_ouq(
                &DcOpfNetwork::three_node_line(),
                &[get("m1"), get("m2"), get("m3")],
            )?,
            other => bail!("unknown template '{other}'"),
        };
        Ok(problem)
    }
}

/// Parses a number, accepting `inf`, `+inf` and `-inf`.
pub fn parse_value(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-Inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        t => t
            .parse::<f64>()
            .with_context(|| format!("'{s}' is not a number")),
    }
}
