//! Node-wise l1-penalized conditional maximum likelihood.
//!
//! For every node `s` in block `i` the estimator minimizes
//!
//! ```text
//! (1/n) sum_j nll(x_s^(j) | eta_j) + lambda |theta_intra|_1 + mu |theta_inter|_1
//! eta_j = theta_s + sum_{t in PA(i)} theta_st B_t(x_t^(j)) + sum_{s' in V_i \ s} theta_ss' B_s'(x_s'^(j))
//! ```
//!
//! with an accelerated proximal gradient method. The intercept is never
//! penalized. Nonzero coefficients define the estimated neighborhoods.

mod graph;
mod path;
mod stars;

pub use graph::{fit_graph, GraphEstimate, SymmetrizationRule};
pub use path::{fit_path, geometric_grid, lambda_grid, mu_coupling, theory_lambda, LambdaGrid};
pub use stars::{default_subsample_size, stars_select, StarsConfig, StarsResult};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::FamilyKind;
use crate::graph::Skeleton;

/// Coefficients with smaller magnitude are set to exactly zero after a fit.
pub const ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Penalty on intra-block coefficients.
    pub lambda: f64,
    /// Penalty on inter-block coefficients.
    pub mu: f64,
    pub max_iter: usize,
    /// Relative change of the penalized objective that ends the iteration.
    pub tol: f64,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
    pub init_step: f64,
    /// Scale predictor statistics to unit standard deviation.
    pub standardize: bool,
    /// Keep Poisson-Poisson intra coefficients nonpositive.
    pub project_nonpositive: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 0.0,
            mu: 0.0,
            max_iter: 2000,
            tol: 1e-7,
            backtrack: 0.5,
            init_step: 1.0,
            standardize: false,
            project_nonpositive: false,
        }
    }
}

impl FitConfig {
    pub fn with_penalties(lambda: f64, mu: f64) -> Self {
        FitConfig {
            lambda,
            mu,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return Err(Error::Config("penalties must be nonnegative".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.init_step > 0.0) {
            return Err(Error::Config(
                "line search needs 0 < backtrack < 1 and init_step > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one node-wise fit. Coefficient lists hold nonzero entries only,
/// keyed by node index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub node: usize,
    pub theta_s: f64,
    pub theta_intra: Vec<(usize, f64)>,
    pub theta_inter: Vec<(usize, f64)>,
    /// Penalized objective at the returned coefficients.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the optimality conditions.
    pub kkt_slack: f64,
    #[serde(skip)]
    pub(crate) internal: Vec<f64>,
}

impl NodeFit {
    pub fn intra_weight(&self, t: usize) -> f64 {
        self.theta_intra
            .iter()
            .find(|e| e.0 == t)
            .map_or(0.0, |e| e.1)
    }

    pub fn inter_weight(&self, t: usize) -> f64 {
        self.theta_inter
            .iter()
            .find(|e| e.0 == t)
            .map_or(0.0, |e| e.1)
    }
}

/// Precomputed data for one node's regression.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    node: usize,
    family: FamilyKind,
    n: usize,
    resp_stat: Vec<f64>,
    resp_base: Vec<f64>,
    /// Column-major `n x k` matrix of predictor statistics (scaled).
    design: Vec<f64>,
    features: Vec<usize>,
    n_intra: usize,
    scale: Vec<f64>,
    nonpositive: Vec<bool>,
}

impl NodeProblem {
    pub fn new(data: &Dataset, skeleton: &Skeleton, node: usize, cfg: &FitConfig) -> Result<Self> {
        data.check_skeleton(skeleton)?;
        if node >= skeleton.n_nodes() {
            return Err(Error::Config(format!("node index {node} out of range")));
        }
        let family = skeleton.family(node);
        let intra = skeleton.intra_candidates(node);
        let inter = skeleton.parent_candidates(node);
        let n_intra = intra.len();
        let features: Vec<usize> = intra.into_iter().chain(inter).collect();
        let n = data.n_rows();
        let k = features.len();
        let mut design = Vec::with_capacity(n * k);
        let mut scale = Vec::with_capacity(k);
        for &t in &features {
            let ft = skeleton.family(t);
            let col: Vec<f64> = (0..n).map(|r| ft.stat(data.get(r, t))).collect();
            let sc = if cfg.standardize {
                let m = col.iter().sum::<f64>() / n as f64;
                let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            } else {
                1.0
            };
            design.extend(col.iter().map(|v| v * sc));
            scale.push(sc);
        }
        let nonpositive = features
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                cfg.project_nonpositive
                    && j < n_intra
                    && family == FamilyKind::Poisson
                    && skeleton.family(t) == FamilyKind::Poisson
            })
            .collect();
        let resp_stat = (0..n).map(|r| family.stat(data.get(r, node))).collect();
        let resp_base = (0..n).map(|r| family.base(data.get(r, node))).collect();
        Ok(NodeProblem {
            node,
            family,
            n,
            resp_stat,
            resp_base,
            design,
            features,
            n_intra,
            scale,
            nonpositive,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    /// Predictor nodes: intra-block candidates first, then parents.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn n_intra(&self) -> usize {
        self.n_intra
    }

    /// Length of the coefficient vector (intercept first).
    pub fn dim(&self) -> usize {
        1 + self.features.len()
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.design[j * self.n..(j + 1) * self.n]
    }

    fn etas(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![theta[0]; self.n];
        for (j, &w) in theta[1..].iter().enumerate() {
            if w != 0.0 {
                for (e, z) in eta.iter_mut().zip(self.column(j)) {
                    *e += w * z;
                }
            }
        }
        eta
    }

    /// Smooth part of the objective; `+inf` outside the family's domain.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let eta = self.etas(theta);
        let mut total = 0.0;
        for i in 0..self.n {
            match self.family.partition_and_mean(eta[i]) {
                Some((d, _)) => total += d - eta[i] * self.resp_stat[i] - self.resp_base[i],
                None => return f64::INFINITY,
            }
        }
        total / self.n as f64
    }

    /// Smooth part of the objective and its gradient. The gradient is empty
    /// when the value is infinite.
    pub fn objective_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let eta = self.etas(theta);
        let mut total = 0.0;
        let mut resid = Vec::with_capacity(self.n);
        for i in 0..self.n {
            match self.family.partition_and_mean(eta[i]) {
                Some((d, m)) => {
                    total += d - eta[i] * self.resp_stat[i] - self.resp_base[i];
                    resid.push(m - self.resp_stat[i]);
                }
                None => return (f64::INFINITY, Vec::new()),
            }
        }
        let inv_n = 1.0 / self.n as f64;
        let mut grad = Vec::with_capacity(self.dim());
        grad.push(resid.iter().sum::<f64>() * inv_n);
        for j in 0..self.features.len() {
            let g: f64 = resid.iter().zip(self.column(j)).map(|(r, z)| r * z).sum();
            grad.push(g * inv_n);
        }
        (total * inv_n, grad)
    }

    fn penalty_weights(&self, cfg: &FitConfig) -> Vec<f64> {
        let mut w = vec![0.0; self.dim()];
        for j in 0..self.features.len() {
            w[j + 1] = if j < self.n_intra { cfg.lambda } else { cfg.mu };
        }
        w
    }

    /// Intercept of the intercept-only maximum likelihood fit.
    pub fn null_intercept(&self) -> f64 {
        let m = self.resp_stat.iter().sum::<f64>() / self.n as f64;
        self.family.mean_to_natural(m)
    }

    /// Coefficients in internal (possibly standardized) units from raw ones.
    fn to_internal(&self, theta_s: f64, raw: &[(usize, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[0] = theta_s;
        for &(t, w) in raw {
            if let Some(j) = self.features.iter().position(|&f| f == t) {
                v[j + 1] = w / self.scale[j];
            }
        }
        v
    }

    /// Evaluates the smooth objective at raw-unit coefficients laid out as
    /// `[intercept, features...]`.
    pub fn objective_grad_raw(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut internal = theta.to_vec();
        for j in 0..self.features.len() {
            internal[j + 1] = theta[j + 1] / self.scale[j];
        }
        let (v, mut g) = self.objective_grad(&internal);
        for j in 0..self.features.len() {
            if let Some(gj) = g.get_mut(j + 1) {
                *gj *= self.scale[j];
            }
        }
        (v, g)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Value and gradient of the smooth node objective at `theta` (layout
/// `[intercept, intra candidates..., parent candidates...]`).
pub fn node_objective_grad(
    data: &Dataset,
    skeleton: &Skeleton,
    node: usize,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let problem = NodeProblem::new(data, skeleton, node, &FitConfig::default())?;
    if theta.len() != problem.dim() {
        return Err(Error::Config(format!(
            "expected {} coefficients, got {}",
            problem.dim(),
            theta.len()
        )));
    }
    Ok(problem.objective_grad(theta))
}

/// Fits one node from scratch.
pub fn fit_node(
    data: &Dataset,
    skeleton: &Skeleton,
    node: usize,
    cfg: &FitConfig,
) -> Result<NodeFit> {
    cfg.validate()?;
    let problem = NodeProblem::new(data, skeleton, node, cfg)?;
    Ok(solve(&problem, cfg, None))
}

/// Accelerated proximal gradient with backtracking and restart on any
/// objective increase. `warm` is a previous fit of the same problem.
pub fn solve(problem: &NodeProblem, cfg: &FitConfig, warm: Option<&NodeFit>) -> NodeFit {
    let pen = problem.penalty_weights(cfg);
    let dim = problem.dim();
    let penalty = |x: &[f64]| -> f64 { x.iter().zip(&pen).map(|(v, p)| p * v.abs()).sum() };
    let prox = |v: &[f64], step: f64| -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(j, &vj)| {
                let z = soft_threshold(vj, step * pen[j]);
                if j > 0 && problem.nonpositive[j - 1] {
                    z.min(0.0)
                } else {
                    z
                }
            })
            .collect()
    };

    let mut x = match warm {
        Some(w) if w.internal.len() == dim && problem.objective(&w.internal).is_finite() => {
            w.internal.clone()
        }
        _ => {
            let mut v = vec![0.0; dim];
            v[0] = problem.null_intercept();
            v
        }
    };
    let mut fx = problem.objective(&x) + penalty(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut step = cfg.init_step;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let (mut fy, mut gy) = problem.objective_grad(&y);
        if !fy.is_finite() {
            y.clone_from(&x);
            t = 1.0;
            (fy, gy) = problem.objective_grad(&y);
        }
        let mut z;
        let mut fz;
        loop {
            let v: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - step * gi).collect();
            z = prox(&v, step);
            fz = problem.objective(&z);
            if fz.is_finite() {
                let mut lin = 0.0;
                let mut quad = 0.0;
                for j in 0..dim {
                    let d = z[j] - y[j];
                    lin += gy[j] * d;
                    quad += d * d;
                }
                if fz <= fy + lin + quad / (2.0 * step) + 1e-15 * fy.abs() {
                    break;
                }
            }
            step *= cfg.backtrack;
            if step < 1e-30 {
                break;
            }
        }
        let fz_pen = fz + penalty(&z);
        if !(fz_pen <= fx) {
            // Momentum overshot; restart from the last accepted point.
            if t > 1.0 {
                t = 1.0;
                y.clone_from(&x);
                continue;
            }
            break;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = z
            .iter()
            .zip(&x)
            .map(|(zi, xi)| zi + beta * (zi - xi))
            .collect();
        let change = (fx - fz_pen).abs();
        x = z;
        fx = fz_pen;
        t = t_next;
        if change <= cfg.tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    for v in x.iter_mut().skip(1) {
        if v.abs() < ZERO_THRESHOLD {
            *v = 0.0;
        }
    }
    let (f_final, g_final) = problem.objective_grad(&x);
    let objective = f_final + penalty(&x);
    let mut kkt_slack: f64 = g_final.first().map_or(0.0, |g| g.abs());
    for j in 1..dim {
        let g = g_final.get(j).copied().unwrap_or(f64::INFINITY);
        let viol = if x[j] == 0.0 {
            if problem.nonpositive[j - 1] {
                // Constrained to the nonpositive half-line.
                (-g - pen[j]).max(0.0)
            } else {
                (g.abs() - pen[j]).max(0.0)
            }
        } else {
            (g + pen[j] * x[j].signum()).abs()
        };
        kkt_slack = kkt_slack.max(viol);
    }

    let mut theta_intra = Vec::new();
    let mut theta_inter = Vec::new();
    for (j, &t) in problem.features.iter().enumerate() {
        let w = x[j + 1];
        if w != 0.0 {
            let raw = w * problem.scale[j];
            if j < problem.n_intra {
                theta_intra.push((t, raw));
            } else {
                theta_inter.push((t, raw));
            }
        }
    }
    NodeFit {
        node: problem.node,
        theta_s: x[0],
        theta_intra,
        theta_inter,
        objective,
        iterations,
        converged,
        kkt_slack,
        internal: x,
    }
}

impl NodeProblem {
    /// Penalized objective at raw coefficients of a fit.
    pub fn penalized_objective(&self, fit: &NodeFit, cfg: &FitConfig) -> f64 {
        let mut raw: Vec<(usize, f64)> = fit.theta_intra.clone();
        raw.extend_from_slice(&fit.theta_inter);
        let x = self.to_internal(fit.theta_s, &raw);
        let pen = self.penalty_weights(cfg);
        self.objective(&x) + x.iter().zip(&pen).map(|(v, p)| p * v.abs()).sum::<f64>()
    }
}
