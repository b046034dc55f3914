//! Block-ordered Gibbs sampling and an exact enumeration oracle for small
//! finite-domain models.
//!
//! A joint draw visits blocks in index order. Each block runs its own Gibbs
//! chain over the node conditionals, conditioned on the already drawn parent
//! blocks. By default every row of a dataset comes from an independent chain
//! with a fresh burn-in, so rows are i.i.d.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{FamilyKind, NaturalParam};
use crate::graph::ModelSpec;
use crate::normalize::check_normalizability;
use crate::rng;

/// Largest state space `enumerate_exact` accepts.
pub const MAX_ENUMERATED_STATES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Sweeps before the first retained state of a chain.
    pub burn_in: usize,
    /// Sweeps between retained states when a chain emits several rows.
    pub thin: usize,
    pub seed: u64,
    pub init: Init,
    /// Rows emitted per chain; 1 gives i.i.d. rows.
    pub rows_per_chain: usize,
    /// Visit nodes of each block in reverse index order.
    pub reverse_visit: bool,
    /// Sample even when the normalizability check fails.
    pub force: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 500,
            thin: 10,
            seed: 0,
            init: Init::Zero,
            rows_per_chain: 1,
            reverse_visit: false,
            force: false,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.rows_per_chain < 1 {
            return Err(Error::Config("rows_per_chain must be at least 1".into()));
        }
        Ok(())
    }
}

struct ChainState {
    x: Vec<f64>,
    stats: Vec<f64>,
}

impl ChainState {
    fn new<R: Rng>(spec: &ModelSpec, init: Init, rng: &mut R) -> Self {
        let x: Vec<f64> = (0..spec.n_nodes())
            .map(|s| {
                let f = spec.family(s);
                match init {
                    Init::Zero => f.initial_value(),
                    Init::Random => random_value(f, rng),
                }
            })
            .collect();
        let stats = x
            .iter()
            .enumerate()
            .map(|(s, &v)| spec.family(s).stat(v))
            .collect();
        ChainState { x, stats }
    }

    fn set(&mut self, spec: &ModelSpec, s: usize, v: f64) {
        self.x[s] = v;
        self.stats[s] = spec.family(s).stat(v);
    }
}

fn random_value<R: Rng>(f: FamilyKind, rng: &mut R) -> f64 {
    match f {
        FamilyKind::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        FamilyKind::BernoulliPm => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        FamilyKind::Poisson => f64::from(rng.random_range(0u32..4)),
        FamilyKind::TruncatedPoisson { r } => f64::from(rng.random_range(0..=r)),
        FamilyKind::Exponential => rng.random_range(0.1..2.0),
    }
}

fn sweep<R: Rng>(
    spec: &ModelSpec,
    block: usize,
    state: &mut ChainState,
    reverse: bool,
    rng: &mut R,
) -> Result<()> {
    let nodes = spec.skeleton().block(block);
    let mut visit = |s: usize, state: &mut ChainState| -> Result<()> {
        let eta = spec.eta_from_stats(s, &state.stats);
        let f = spec.family(s);
        let v = f
            .sample(NaturalParam(eta), rng)
            .map_err(|_| Error::SamplerAbort {
                node: spec.skeleton().node(s).name.clone(),
                reason: format!("conditional non-normalizable at state (eta = {eta})"),
            })?;
        state.set(spec, s, v);
        Ok(())
    };
    if reverse {
        for &s in nodes.iter().rev() {
            visit(s, state)?;
        }
    } else {
        for &s in nodes {
            visit(s, state)?;
        }
    }
    Ok(())
}

fn require_normalizable(spec: &ModelSpec, config: &SamplerConfig) -> Result<()> {
    config.validate()?;
    if !config.force {
        let report = check_normalizability(spec);
        if !report.is_normalizable() {
            return Err(Error::NotNormalizable(report.summary()));
        }
    }
    Ok(())
}

/// Draws one state of block `block` given the parent values in
/// `parent_values` (a full-length assignment; only parent nodes are read).
pub fn gibbs_block<R: Rng>(
    spec: &ModelSpec,
    block: usize,
    parent_values: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    require_normalizable(spec, config)?;
    if parent_values.len() != spec.n_nodes() {
        return Err(Error::Config(
            "parent assignment must cover every node".into(),
        ));
    }
    let mut state = ChainState::new(spec, config.init, rng);
    for &pb in spec.skeleton().block_parents(block) {
        for &t in spec.skeleton().block(pb) {
            spec.family(t).check_domain(parent_values[t])?;
            state.set(spec, t, parent_values[t]);
        }
    }
    for _ in 0..config.burn_in {
        sweep(spec, block, &mut state, config.reverse_visit, rng)?;
    }
    Ok(spec
        .skeleton()
        .block(block)
        .iter()
        .map(|&s| state.x[s])
        .collect())
}

fn run_chain(
    spec: &ModelSpec,
    rows: usize,
    config: &SamplerConfig,
    chain: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream(config.seed, "gibbs", chain);
    let mut state = ChainState::new(spec, config.init, &mut rng);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let sweeps = if r == 0 { config.burn_in } else { config.thin };
        for b in 0..spec.skeleton().n_blocks() {
            for _ in 0..sweeps {
                sweep(spec, b, &mut state, config.reverse_visit, &mut rng)?;
            }
        }
        out.push(state.x.clone());
    }
    Ok(out)
}

/// Draws `n` rows from the model. Deterministic in `config.seed` regardless
/// of the number of worker threads.
pub fn sample_bdmrf(spec: &ModelSpec, n: usize, config: &SamplerConfig) -> Result<Dataset> {
    require_normalizable(spec, config)?;
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let per = config.rows_per_chain;
    let chains = n.div_ceil(per);
    let rows: Vec<Vec<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| run_chain(spec, per.min(n - c * per), config, c as u64))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = rows.into_iter().flatten().flatten().collect();
    Dataset::new(spec.skeleton().nodes().to_vec(), values)
}

/// Exact joint pmf of a finite-domain model.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub states: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    /// `block_log_partitions[k][b]` is the log-partition of block `b`'s
    /// conditional at the parent values of state `k`.
    pub block_log_partitions: Vec<Vec<f64>>,
    index: HashMap<Vec<i64>, usize>,
}

fn state_key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|&v| v as i64).collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mixed-radix enumeration of the product of `supports` (last index fastest).
fn for_each_config(supports: &[Vec<f64>], mut f: impl FnMut(&[f64])) {
    let mut digits = vec![0usize; supports.len()];
    let mut cur: Vec<f64> = supports.iter().map(|s| s[0]).collect();
    loop {
        f(&cur);
        let mut i = supports.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < supports[i].len() {
                cur[i] = supports[i][digits[i]];
                break;
            }
            digits[i] = 0;
            cur[i] = supports[i][0];
        }
    }
}

/// Enumerates the joint pmf block by block.
pub fn enumerate_exact(spec: &ModelSpec) -> Result<ExactDistribution> {
    let p = spec.n_nodes();
    let mut supports = Vec::with_capacity(p);
    let mut total: usize = 1;
    for s in 0..p {
        let f = spec.family(s);
        let sup = f.support().ok_or_else(|| {
            Error::NotEnumerable(format!(
                "node {} has infinite-domain family {f}",
                spec.skeleton().node(s).name
            ))
        })?;
        total = total
            .checked_mul(sup.len())
            .filter(|&t| t <= MAX_ENUMERATED_STATES)
            .ok_or_else(|| {
                Error::NotEnumerable(format!("more than {MAX_ENUMERATED_STATES} states"))
            })?;
        supports.push(sup);
    }

    let sk = spec.skeleton();
    let parent_nodes: Vec<Vec<usize>> = (0..sk.n_blocks())
        .map(|b| {
            let mut v: Vec<usize> = sk
                .block_parents(b)
                .iter()
                .flat_map(|&pb| sk.block(pb).iter().copied())
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    let mut caches: Vec<HashMap<Vec<i64>, f64>> = vec![HashMap::new(); sk.n_blocks()];

    let mut states = Vec::with_capacity(total);
    let mut log_probs = Vec::with_capacity(total);
    let mut block_log_partitions = Vec::with_capacity(total);
    for_each_config(&supports, |x| {
        let stats: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(s, &v)| spec.family(s).stat(v))
            .collect();
        let mut lp = 0.0;
        let mut parts = Vec::with_capacity(sk.n_blocks());
        for b in 0..sk.n_blocks() {
            let key: Vec<i64> = parent_nodes[b].iter().map(|&t| x[t] as i64).collect();
            let a = *caches[b].entry(key).or_insert_with(|| {
                let members = sk.block(b);
                let block_supports: Vec<Vec<f64>> =
                    members.iter().map(|&s| supports[s].clone()).collect();
                let mut xx = x.to_vec();
                let mut ss = stats.clone();
                let mut terms = Vec::new();
                for_each_config(&block_supports, |cfg| {
                    for (&s, &v) in members.iter().zip(cfg) {
                        xx[s] = v;
                        ss[s] = spec.family(s).stat(v);
                    }
                    terms.push(spec.block_term(b, &xx, &ss));
                });
                log_sum_exp(&terms)
            });
            lp += spec.block_term(b, x, &stats) - a;
            parts.push(a);
        }
        states.push(x.to_vec());
        log_probs.push(lp);
        block_log_partitions.push(parts);
    });
    let index = states
        .iter()
        .enumerate()
        .map(|(i, x)| (state_key(x), i))
        .collect();
    Ok(ExactDistribution {
        states,
        log_probs,
        block_log_partitions,
        index,
    })
}

impl ExactDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn prob_of(&self, x: &[f64]) -> f64 {
        self.index
            .get(&state_key(x))
            .map_or(0.0, |&i| self.log_probs[i].exp())
    }

    /// Total variation distance between the empirical distribution of the
    /// rows of `data` and this pmf.
    pub fn tv_distance(&self, data: &Dataset) -> f64 {
        let n = data.n_rows() as f64;
        let mut counts = vec![0usize; self.states.len()];
        let mut outside = 0usize;
        for r in 0..data.n_rows() {
            match self.index.get(&state_key(data.row(r))) {
                Some(&i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let inside: f64 = counts
            .iter()
            .zip(&self.log_probs)
            .map(|(&c, lp)| (c as f64 / n - lp.exp()).abs())
            .sum();
        0.5 * (inside + outside as f64 / n)
    }

    /// Largest pointwise gap between node conditionals read off the joint and
    /// the family pmf at the model's natural parameter.
    ///
    /// For a node in block `b`, blocks after `b` are marginalized out; the
    /// conditional given the remaining nodes of blocks `0..=b` must equal the
    /// univariate family at `natural_param`.
    pub fn max_conditional_deviation(&self, spec: &ModelSpec) -> Result<f64> {
        let sk = spec.skeleton();
        let mut worst: f64 = 0.0;
        for b in 0..sk.n_blocks() {
            let prefix: Vec<usize> = (0..=b)
                .flat_map(|pb| sk.block(pb).iter().copied())
                .collect();
            let mut marginal: HashMap<Vec<i64>, f64> = HashMap::new();
            for (x, lp) in self.states.iter().zip(&self.log_probs) {
                let key: Vec<i64> = prefix.iter().map(|&t| x[t] as i64).collect();
                *marginal.entry(key).or_insert(0.0) += lp.exp();
            }
            for &s in sk.block(b) {
                let pos = prefix
                    .iter()
                    .position(|&t| t == s)
                    .expect("node in its own prefix");
                let support = spec.family(s).support().expect("enumerable");
                for (key, &p_joint) in &marginal {
                    let mut alt = key.clone();
                    let denom: f64 = support
                        .iter()
                        .map(|&v| {
                            alt[pos] = v as i64;
                            marginal.get(&alt).copied().unwrap_or(0.0)
                        })
                        .sum();
                    let conditional = p_joint / denom;
                    let assignment: HashMap<usize, f64> = prefix
                        .iter()
                        .zip(key)
                        .filter(|(&t, _)| t != s)
                        .map(|(&t, &v)| (t, v as f64))
                        .collect();
                    let eta = spec.natural_param(s, &assignment)?;
                    let formula = spec.family(s).log_density(eta, key[pos] as f64)?.exp();
                    worst = worst.max((conditional - formula).abs());
                }
            }
        }
        Ok(worst)
    }
}
