use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, FitConfig, NodeFit, NodeProblem};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{ModelSpec, Skeleton};

/// How the two node-wise estimates of one undirected edge are reconciled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetrizationRule {
    /// Both endpoints select the edge.
    #[default]
    And,
    /// Either endpoint selects the edge.
    Or,
}

impl fmt::Display for SymmetrizationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymmetrizationRule::And => "and",
            SymmetrizationRule::Or => "or",
        })
    }
}

impl std::str::FromStr for SymmetrizationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(SymmetrizationRule::And),
            "or" => Ok(SymmetrizationRule::Or),
            other => Err(Error::Config(format!(
                "unknown symmetrization rule '{other}'"
            ))),
        }
    }
}

/// An estimated graph at one penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub lambda: f64,
    pub mu: f64,
    pub rule: SymmetrizationRule,
    /// Undirected edges keyed `(min, max)`.
    pub intra: BTreeMap<(usize, usize), f64>,
    /// Directed edges keyed `(source, target)`.
    pub inter: BTreeMap<(usize, usize), f64>,
    /// Indexed by node.
    pub node_fits: Vec<NodeFit>,
    pub warnings: Vec<String>,
}

impl GraphEstimate {
    /// Assembles an estimate from per-node fits ordered by node index.
    pub fn from_fits(
        skeleton: &Skeleton,
        lambda: f64,
        mu: f64,
        rule: SymmetrizationRule,
        node_fits: Vec<NodeFit>,
    ) -> Self {
        let mut intra = BTreeMap::new();
        let mut inter = BTreeMap::new();
        let mut warnings = Vec::new();
        for fit in &node_fits {
            let s = fit.node;
            if !fit.converged {
                warnings.push(format!(
                    "node '{}' did not converge in {} iterations",
                    skeleton.node(s).name,
                    fit.iterations
                ));
            }
            for &(t, w) in &fit.theta_inter {
                inter.insert((t, s), w);
            }
            for &(t, w) in &fit.theta_intra {
                if t < s {
                    continue;
                }
                let back = node_fits[t].intra_weight(s);
                let keep = match rule {
                    SymmetrizationRule::And => back != 0.0,
                    SymmetrizationRule::Or => true,
                };
                if keep {
                    let weight = if back != 0.0 { 0.5 * (w + back) } else { w };
                    intra.insert((s, t), weight);
                }
            }
            if rule == SymmetrizationRule::Or {
                for &(t, w) in &fit.theta_intra {
                    if t < s && node_fits[t].intra_weight(s) == 0.0 {
                        intra.insert((t, s), w);
                    }
                }
            }
        }
        GraphEstimate {
            lambda,
            mu,
            rule,
            intra,
            inter,
            node_fits,
            warnings,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.intra.len() + self.inter.len()
    }

    /// Converts the estimate to a model on the same skeleton. Node weights are
    /// the fitted intercepts.
    pub fn to_spec(&self, skeleton: &Skeleton) -> Result<ModelSpec> {
        let weights = self.node_fits.iter().map(|f| f.theta_s).collect();
        ModelSpec::from_skeleton(
            skeleton.clone(),
            weights,
            self.intra.iter().map(|(&k, &w)| (k, w)),
            self.inter.iter().map(|(&k, &w)| (k, w)),
        )
    }
}

pub(crate) fn build_problems(
    data: &Dataset,
    skeleton: &Skeleton,
    cfg: &FitConfig,
) -> Result<Vec<NodeProblem>> {
    data.check_skeleton(skeleton)?;
    (0..skeleton.n_nodes())
        .map(|s| NodeProblem::new(data, skeleton, s, cfg))
        .collect()
}

pub(crate) fn fit_problems(
    problems: &[NodeProblem],
    skeleton: &Skeleton,
    cfg: &FitConfig,
    rule: SymmetrizationRule,
    warm: Option<&[NodeFit]>,
) -> GraphEstimate {
    let fits: Vec<NodeFit> = problems
        .par_iter()
        .enumerate()
        .map(|(s, p)| solve(p, cfg, warm.map(|w| &w[s])))
        .collect();
    GraphEstimate::from_fits(skeleton, cfg.lambda, cfg.mu, rule, fits)
}

/// Runs every node-wise regression and assembles the graph.
pub fn fit_graph(
    data: &Dataset,
    skeleton: &Skeleton,
    cfg: &FitConfig,
    rule: SymmetrizationRule,
) -> Result<GraphEstimate> {
    cfg.validate()?;
    let problems = build_problems(data, skeleton, cfg)?;
    let est = fit_problems(&problems, skeleton, cfg, rule, None);
    for w in &est.warnings {
        log::warn!("{w}");
    }
    Ok(est)
}
