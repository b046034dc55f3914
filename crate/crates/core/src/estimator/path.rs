use serde::{Deserialize, Serialize};

use super::graph::{build_problems, fit_problems};
use super::{FitConfig, GraphEstimate, SymmetrizationRule};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Skeleton;

/// Grid values below this are treated as a collapsed grid.
const DEGENERATE_LAMBDA_MAX: f64 = 1e-12;

/// Penalty pairs ordered from the sparsest end down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub lambda_max: f64,
    /// Ratio `mu / lambda` shared by every grid point.
    pub coupling: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LambdaGrid {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// A grid from explicit values with the given coupling.
    pub fn from_lambdas(lambdas: Vec<f64>, coupling: f64) -> Self {
        let mus = lambdas.iter().map(|l| l * coupling).collect();
        let lambda_max = lambdas.iter().copied().fold(0.0, f64::max);
        LambdaGrid {
            lambdas,
            mus,
            lambda_max,
            coupling,
            warnings: Vec::new(),
        }
    }
}

/// `k` values from `max` down to `ratio * max`, equally spaced in log scale.
pub fn geometric_grid(max: f64, k: usize, ratio: f64) -> Result<Vec<f64>> {
    if k < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config("grid needs k >= 2 and 0 < ratio < 1".into()));
    }
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateGrid(format!("lambda_max = {max}")));
    }
    let step = ratio.ln() / (k - 1) as f64;
    let mut grid: Vec<f64> = (0..k).map(|i| max * (step * i as f64).exp()).collect();
    grid[0] = max;
    grid[k - 1] = max * ratio;
    Ok(grid)
}

/// `sqrt(ln q / ln p)` with `p` the largest block and `q` the largest parent
/// count; both are floored at 2. Equal to 1 when no block has parents.
pub fn mu_coupling(skeleton: &Skeleton) -> f64 {
    let p = skeleton.blocks().iter().map(Vec::len).max().unwrap_or(0);
    let q = (0..skeleton.n_blocks())
        .map(|b| skeleton.parent_count(b))
        .max()
        .unwrap_or(0);
    if q == 0 {
        return 1.0;
    }
    ((q.max(2) as f64).ln() / (p.max(2) as f64).ln()).sqrt()
}

/// `c * sqrt(ln p / n)`, floored at `p = 2`.
pub fn theory_lambda(n: usize, p: usize, c: f64) -> f64 {
    c * ((p.max(2) as f64).ln() / n.max(1) as f64).sqrt()
}

/// Data-driven grid: the top value is the smallest penalty at which every
/// node's fit is intercept-only.
pub fn lambda_grid(
    data: &Dataset,
    skeleton: &Skeleton,
    k: usize,
    ratio: f64,
) -> Result<LambdaGrid> {
    let coupling = mu_coupling(skeleton);
    let problems = build_problems(data, skeleton, &FitConfig::default())?;
    let mut lambda_max: f64 = 0.0;
    let mut constant = Vec::new();
    for p in &problems {
        let mut theta = vec![0.0; p.dim()];
        theta[0] = p.null_intercept();
        let (v, g) = p.objective_grad(&theta);
        if !v.is_finite() {
            return Err(Error::DegenerateGrid(format!(
                "intercept-only fit of node '{}' is infeasible",
                skeleton.node(p.node()).name
            )));
        }
        for (j, &t) in p.features().iter().enumerate() {
            let gj = g[j + 1].abs();
            if gj == 0.0 {
                let col = data.column(t);
                if col.iter().all(|&x| x == col[0]) {
                    constant.push(skeleton.node(t).name.clone());
                }
            }
            let scaled = if j < p.n_intra() { gj } else { gj / coupling };
            lambda_max = lambda_max.max(scaled);
        }
    }
    let mut warnings = Vec::new();
    constant.sort();
    constant.dedup();
    if !constant.is_empty() {
        let w = format!(
            "constant columns excluded from lambda_max: {}",
            constant.join(", ")
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    if lambda_max <= DEGENERATE_LAMBDA_MAX {
        return Err(Error::DegenerateGrid(format!(
            "lambda_max = {lambda_max:e}; no predictor is associated with any response"
        )));
    }
    let lambdas = geometric_grid(lambda_max, k, ratio)?;
    let mut grid = LambdaGrid::from_lambdas(lambdas, coupling);
    grid.lambda_max = lambda_max;
    grid.warnings = warnings;
    Ok(grid)
}

/// Fits every grid point in order, warm-starting each from the previous one.
pub fn fit_path(
    data: &Dataset,
    skeleton: &Skeleton,
    grid: &LambdaGrid,
    base: &FitConfig,
    rule: SymmetrizationRule,
) -> Result<Vec<GraphEstimate>> {
    base.validate()?;
    let problems = build_problems(data, skeleton, base)?;
    let mut out: Vec<GraphEstimate> = Vec::with_capacity(grid.len());
    for (&lambda, &mu) in grid.lambdas.iter().zip(&grid.mus) {
        let cfg = FitConfig {
            lambda,
            mu,
            ..base.clone()
        };
        cfg.validate()?;
        let warm = out.last().map(|e| e.node_fits.as_slice());
        let est = fit_problems(&problems, skeleton, &cfg, rule, warm);
        for w in &est.warnings {
            log::warn!("lambda {lambda:.4e}: {w}");
        }
        out.push(est);
    }
    Ok(out)
}
