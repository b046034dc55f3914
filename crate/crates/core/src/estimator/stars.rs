use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{build_problems, fit_problems};
use super::{FitConfig, GraphEstimate, LambdaGrid, SymmetrizationRule};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Skeleton;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StarsConfig {
    pub beta: f64,
    pub subsamples: usize,
    /// Rows per subsample; `None` uses [`default_subsample_size`].
    pub subsample_size: Option<usize>,
    pub seed: u64,
    pub rule: SymmetrizationRule,
}

impl Default for StarsConfig {
    fn default() -> Self {
        StarsConfig {
            beta: 0.01,
            subsamples: 20,
            subsample_size: None,
            seed: 0,
            rule: SymmetrizationRule::And,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarsResult {
    /// Index of the chosen grid point.
    pub index: usize,
    pub lambda: f64,
    pub mu: f64,
    pub subsample_size: usize,
    /// Raw instability per grid point.
    pub instability: Vec<f64>,
    /// Running supremum of the instability from the sparsest end.
    pub monotone: Vec<f64>,
    pub warning: Option<String>,
}

/// `min(floor(10 sqrt n), floor(0.8 n))`, at least 2.
pub fn default_subsample_size(n: usize) -> usize {
    let a = (10.0 * (n as f64).sqrt()).floor() as usize;
    let b = (0.8 * n as f64).floor() as usize;
    a.min(b).max(2)
}

fn edge_set(est: &GraphEstimate) -> BTreeSet<(bool, usize, usize)> {
    est.intra
        .keys()
        .map(|&(a, b)| (false, a, b))
        .chain(est.inter.keys().map(|&(t, s)| (true, t, s)))
        .collect()
}

fn candidate_count(skeleton: &Skeleton) -> usize {
    let intra: usize = skeleton
        .blocks()
        .iter()
        .map(|b| b.len() * b.len().saturating_sub(1) / 2)
        .sum();
    let inter: usize = (0..skeleton.n_nodes())
        .map(|s| skeleton.parent_candidates(s).len())
        .sum();
    intra + inter
}

/// Stability-based choice of the penalty: the smallest grid penalty whose
/// monotonized edge instability stays at or below `beta`.
pub fn stars_select(
    data: &Dataset,
    skeleton: &Skeleton,
    grid: &LambdaGrid,
    base: &FitConfig,
    cfg: &StarsConfig,
) -> Result<StarsResult> {
    if cfg.subsamples < 2 {
        return Err(Error::Config("stars needs at least 2 subsamples".into()));
    }
    if !(cfg.beta > 0.0 && cfg.beta < 0.5) {
        return Err(Error::Config("stars beta must lie in (0, 0.5)".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty penalty grid".into()));
    }
    base.validate()?;
    let n = data.n_rows();
    let b = cfg
        .subsample_size
        .unwrap_or_else(|| default_subsample_size(n));
    if b > n || b < 2 {
        return Err(Error::Config(format!(
            "subsample size {b} is invalid for {n} rows"
        )));
    }

    let selections: Vec<Vec<BTreeSet<(bool, usize, usize)>>> = (0..cfg.subsamples)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = stream(cfg.seed, "stars", i as u64);
            let mut rows = sample(&mut rng, n, b).into_vec();
            rows.sort_unstable();
            let sub = data.select_rows(&rows);
            let problems = build_problems(&sub, skeleton, base)?;
            let mut prev: Option<GraphEstimate> = None;
            let mut sets = Vec::with_capacity(grid.len());
            for (&lambda, &mu) in grid.lambdas.iter().zip(&grid.mus) {
                let fc = FitConfig {
                    lambda,
                    mu,
                    ..base.clone()
                };
                let est = fit_problems(
                    &problems,
                    skeleton,
                    &fc,
                    cfg.rule,
                    prev.as_ref().map(|e| e.node_fits.as_slice()),
                );
                sets.push(edge_set(&est));
                prev = Some(est);
            }
            Ok(sets)
        })
        .collect::<Result<_>>()?;

    let total = candidate_count(skeleton).max(1) as f64;
    let m = cfg.subsamples as f64;
    let instability: Vec<f64> = (0..grid.len())
        .map(|k| {
            let mut counts = std::collections::BTreeMap::new();
            for sets in &selections {
                for e in &sets[k] {
                    *counts.entry(*e).or_insert(0usize) += 1;
                }
            }
            counts
                .values()
                .map(|&c| {
                    let xi = c as f64 / m;
                    2.0 * xi * (1.0 - xi)
                })
                .sum::<f64>()
                / total
        })
        .collect();

    let mut monotone = Vec::with_capacity(grid.len());
    let mut sup: f64 = 0.0;
    for &v in &instability {
        sup = sup.max(v);
        monotone.push(sup);
    }
    let (index, warning) = match monotone.iter().rposition(|&v| v <= cfg.beta) {
        Some(k) => (k, None),
        None => {
            let k = instability
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            let w = format!(
                "no grid point reaches instability <= {}; using the most stable point (index {k})",
                cfg.beta
            );
            log::warn!("{w}");
            (k, Some(w))
        }
    };
    Ok(StarsResult {
        index,
        lambda: grid.lambdas[index],
        mu: grid.mus[index],
        subsample_size: b,
        instability,
        monotone,
        warning,
    })
}
