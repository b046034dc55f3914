//! Model specification for block directed Markov random fields.
//!
//! Nodes are partitioned into ordered blocks `V_0, .., V_{m-1}`. Each block
//! lists its parent blocks, which must all carry a lower index, so block
//! order is always a topological order of the block DAG. Undirected edges
//! live inside a block, directed edges point from a parent block into a
//! child block.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilyKind, NaturalParam};

pub const SPEC_FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub family: FamilyKind,
    pub block: usize,
}

/// Block structure and node families without any parameters.
///
/// This is all the estimator gets to see.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    nodes: Vec<Node>,
    blocks: Vec<Vec<usize>>,
    block_dag: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Skeleton {
    /// Builds a skeleton from nodes (with their block index) and the parent
    /// map over blocks. Blocks list their nodes in node-index order.
    pub fn new(nodes: Vec<Node>, block_dag: Vec<Vec<usize>>) -> Result<Self> {
        let blocks: Vec<Vec<String>> = (0..block_dag.len())
            .map(|b| {
                nodes
                    .iter()
                    .filter(|n| n.block == b)
                    .map(|n| n.name.clone())
                    .collect()
            })
            .collect();
        let parts = SpecParts {
            format_version: SPEC_FORMAT_VERSION.into(),
            nodes,
            blocks,
            block_dag,
            intra_edges: vec![],
            inter_edges: vec![],
            params: Params::default(),
        };
        Ok(ModelSpec::try_from(parts)?.skeleton)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, s: usize) -> &Node {
        &self.nodes[s]
    }

    pub fn family(&self, s: usize) -> FamilyKind {
        self.nodes[s].family
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.nodes[s].block
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_parents(&self, b: usize) -> &[usize] {
        &self.block_dag[b]
    }

    pub fn block_dag(&self) -> &[Vec<usize>] {
        &self.block_dag
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Candidate intra-block neighbors of `s`: the rest of its block.
    pub fn intra_candidates(&self, s: usize) -> Vec<usize> {
        self.blocks[self.block_of(s)]
            .iter()
            .copied()
            .filter(|&t| t != s)
            .collect()
    }

    /// Candidate parents of `s`: every node of every parent block, sorted.
    pub fn parent_candidates(&self, s: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.block_dag[self.block_of(s)]
            .iter()
            .flat_map(|&b| self.blocks[b].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Number of nodes in the parent blocks of block `b`.
    pub fn parent_count(&self, b: usize) -> usize {
        self.block_dag[b]
            .iter()
            .map(|&pb| self.blocks[pb].len())
            .sum()
    }

    /// True when `t -> s` is an admissible directed edge.
    pub fn is_inter_candidate(&self, t: usize, s: usize) -> bool {
        self.block_dag[self.block_of(s)].contains(&self.block_of(t))
    }
}

/// Unvalidated, name-keyed form of a model. This is exactly the on-disk
/// schema of a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecParts {
    pub format_version: String,
    pub nodes: Vec<Node>,
    pub blocks: Vec<Vec<String>>,
    pub block_dag: Vec<Vec<usize>>,
    pub intra_edges: Vec<(String, String)>,
    pub inter_edges: Vec<(String, String)>,
    pub params: Params,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Node weights; missing nodes default to zero.
    #[serde(default)]
    pub node: BTreeMap<String, f64>,
    /// Keyed `"a--b"`.
    #[serde(default)]
    pub intra: BTreeMap<String, f64>,
    /// Keyed `"t->s"`.
    #[serde(default)]
    pub inter: BTreeMap<String, f64>,
}

pub fn intra_key(a: &str, b: &str) -> String {
    format!("{a}--{b}")
}

pub fn inter_key(t: &str, s: &str) -> String {
    format!("{t}->{s}")
}

/// Checks every structural invariant of a spec and names each violation.
pub fn validate(parts: &SpecParts) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    if parts.nodes.is_empty() {
        errs.push("model has no nodes".to_string());
    }
    let mut index = HashMap::new();
    for (i, n) in parts.nodes.iter().enumerate() {
        if index.insert(n.name.as_str(), i).is_some() {
            errs.push(format!("duplicate node name {}", n.name));
        }
        if let Err(e) = n.family.validate() {
            errs.push(format!("node {}: {e}", n.name));
        }
        if n.block >= parts.blocks.len() {
            errs.push(format!(
                "node {} refers to missing block {}",
                n.name, n.block
            ));
        }
    }
    if parts.block_dag.len() != parts.blocks.len() {
        errs.push(format!(
            "block_dag has {} entries but there are {} blocks",
            parts.block_dag.len(),
            parts.blocks.len()
        ));
    }
    for (b, parents) in parts.block_dag.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &p in parents {
            if p >= b {
                errs.push(format!(
                    "block {b} lists parent block {p}, which does not precede it"
                ));
            }
            if !seen.insert(p) {
                errs.push(format!("block {b} lists parent block {p} twice"));
            }
        }
    }

    // Partition: each node in exactly one block, matching its block field.
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (b, members) in parts.blocks.iter().enumerate() {
        for name in members {
            match index.get(name.as_str()) {
                None => errs.push(format!("block {b} lists unknown node {name}")),
                Some(&i) => {
                    if let Some(prev) = owner.insert(name.as_str(), b) {
                        errs.push(format!(
                            "partition violated: node {name} is in blocks {prev} and {b}"
                        ));
                    } else if parts.nodes[i].block != b {
                        errs.push(format!(
                            "partition violated: node {name} declares block {} but is listed in block {b}",
                            parts.nodes[i].block
                        ));
                    }
                }
            }
        }
    }
    for n in &parts.nodes {
        if !owner.contains_key(n.name.as_str()) {
            errs.push(format!(
                "partition violated: node {} is in no block",
                n.name
            ));
        }
    }

    let block_of = |name: &str| index.get(name).map(|&i| parts.nodes[i].block);
    let mut intra_seen = BTreeSet::new();
    for (a, b) in &parts.intra_edges {
        if a == b {
            errs.push(format!("self-edge on {a}"));
            continue;
        }
        match (block_of(a), block_of(b)) {
            (Some(ba), Some(bb)) => {
                if ba != bb {
                    errs.push(format!("intra edge {a}--{b} joins blocks {ba} and {bb}"));
                }
            }
            _ => errs.push(format!("intra edge {a}--{b} refers to an unknown node")),
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if !intra_seen.insert(key) {
            errs.push(format!("intra edge {a}--{b} is listed twice"));
        }
        if !parts.params.intra.contains_key(&intra_key(a, b)) {
            errs.push(format!("intra edge {a}--{b} has no parameter"));
        }
    }
    let mut inter_seen = BTreeSet::new();
    for (t, s) in &parts.inter_edges {
        if t == s {
            errs.push(format!("self-edge on {t}"));
            continue;
        }
        match (block_of(t), block_of(s)) {
            (Some(bt), Some(bs)) => {
                let ok = parts.block_dag.get(bs).is_some_and(|ps| ps.contains(&bt));
                if !ok {
                    errs.push(format!(
                        "edge {t}->{s} violates block order (block {bt} is not a parent of block {bs})"
                    ));
                }
            }
            _ => errs.push(format!("inter edge {t}->{s} refers to an unknown node")),
        }
        if !inter_seen.insert((t, s)) {
            errs.push(format!("inter edge {t}->{s} is listed twice"));
        }
        if !parts.params.inter.contains_key(&inter_key(t, s)) {
            errs.push(format!("inter edge {t}->{s} has no parameter"));
        }
    }

    let intra_keys: BTreeSet<String> = parts
        .intra_edges
        .iter()
        .map(|(a, b)| intra_key(a, b))
        .collect();
    for (k, v) in &parts.params.intra {
        if !intra_keys.contains(k) {
            errs.push(format!("parameter {k} has no matching intra edge"));
        }
        if !v.is_finite() {
            errs.push(format!("parameter {k} is not finite"));
        }
    }
    let inter_keys: BTreeSet<String> = parts
        .inter_edges
        .iter()
        .map(|(t, s)| inter_key(t, s))
        .collect();
    for (k, v) in &parts.params.inter {
        if !inter_keys.contains(k) {
            errs.push(format!("parameter {k} has no matching inter edge"));
        }
        if !v.is_finite() {
            errs.push(format!("parameter {k} is not finite"));
        }
    }
    for (k, v) in &parts.params.node {
        if !index.contains_key(k.as_str()) {
            errs.push(format!("node parameter for unknown node {k}"));
        }
        if !v.is_finite() {
            errs.push(format!("node parameter {k} is not finite"));
        }
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// A validated model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    skeleton: Skeleton,
    node_weights: Vec<f64>,
    /// Keyed by `(min, max)` node index.
    intra: BTreeMap<(usize, usize), f64>,
    /// Keyed by `(source, target)`.
    inter: BTreeMap<(usize, usize), f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    parents: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<SpecParts> for ModelSpec {
    type Error = Error;

    fn try_from(parts: SpecParts) -> Result<Self> {
        validate(&parts).map_err(Error::InvalidModel)?;
        let index: HashMap<String, usize> = parts
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();
        let mut blocks: Vec<Vec<usize>> = parts
            .blocks
            .iter()
            .map(|m| m.iter().map(|name| index[name]).collect())
            .collect();
        for b in &mut blocks {
            b.sort_unstable();
        }
        let node_weights = parts
            .nodes
            .iter()
            .map(|n| parts.params.node.get(&n.name).copied().unwrap_or(0.0))
            .collect();
        let intra = parts
            .intra_edges
            .iter()
            .map(|(a, b)| {
                let (ia, ib) = (index[a], index[b]);
                (
                    (ia.min(ib), ia.max(ib)),
                    parts.params.intra[&intra_key(a, b)],
                )
            })
            .collect();
        let inter = parts
            .inter_edges
            .iter()
            .map(|(t, s)| ((index[t], index[s]), parts.params.inter[&inter_key(t, s)]))
            .collect();
        let skeleton = Skeleton {
            nodes: parts.nodes,
            blocks,
            block_dag: parts.block_dag,
            index,
        };
        Ok(ModelSpec::assemble(skeleton, node_weights, intra, inter))
    }
}

impl ModelSpec {
    fn assemble(
        skeleton: Skeleton,
        node_weights: Vec<f64>,
        intra: BTreeMap<(usize, usize), f64>,
        inter: BTreeMap<(usize, usize), f64>,
    ) -> Self {
        let p = skeleton.n_nodes();
        let mut neighbors = vec![Vec::new(); p];
        for (&(a, b), &w) in &intra {
            neighbors[a].push((b, w));
            neighbors[b].push((a, w));
        }
        let mut parents = vec![Vec::new(); p];
        for (&(t, s), &w) in &inter {
            parents[s].push((t, w));
        }
        for v in neighbors.iter_mut().chain(parents.iter_mut()) {
            v.sort_by_key(|e| e.0);
        }
        ModelSpec {
            skeleton,
            node_weights,
            intra,
            inter,
            neighbors,
            parents,
        }
    }

    /// Builds a model on an existing skeleton from index-keyed parameters.
    pub fn from_skeleton(
        skeleton: Skeleton,
        node_weights: Vec<f64>,
        intra: impl IntoIterator<Item = ((usize, usize), f64)>,
        inter: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Result<Self> {
        let mut errs = Vec::new();
        if node_weights.len() != skeleton.n_nodes() {
            errs.push(format!(
                "expected {} node weights, got {}",
                skeleton.n_nodes(),
                node_weights.len()
            ));
        }
        let intra: BTreeMap<(usize, usize), f64> = intra
            .into_iter()
            .map(|((a, b), w)| ((a.min(b), a.max(b)), w))
            .collect();
        let inter: BTreeMap<(usize, usize), f64> = inter.into_iter().collect();
        let p = skeleton.n_nodes();
        for &(a, b) in intra.keys() {
            if a == b || b >= p || skeleton.block_of(a) != skeleton.block_of(b) {
                errs.push(format!("invalid intra edge ({a}, {b})"));
            }
        }
        for &(t, s) in inter.keys() {
            if t >= p || s >= p || !skeleton.is_inter_candidate(t, s) {
                errs.push(format!("edge ({t} -> {s}) violates block order"));
            }
        }
        if !errs.is_empty() {
            return Err(Error::InvalidModel(errs));
        }
        Ok(ModelSpec::assemble(skeleton, node_weights, intra, inter))
    }

    pub fn to_parts(&self) -> SpecParts {
        let name = |i: usize| self.skeleton.nodes[i].name.clone();
        let mut params = Params::default();
        for (i, n) in self.skeleton.nodes.iter().enumerate() {
            params.node.insert(n.name.clone(), self.node_weights[i]);
        }
        let mut intra_edges = Vec::new();
        for (&(a, b), &w) in &self.intra {
            params.intra.insert(intra_key(&name(a), &name(b)), w);
            intra_edges.push((name(a), name(b)));
        }
        let mut inter_edges = Vec::new();
        for (&(t, s), &w) in &self.inter {
            params.inter.insert(inter_key(&name(t), &name(s)), w);
            inter_edges.push((name(t), name(s)));
        }
        SpecParts {
            format_version: SPEC_FORMAT_VERSION.into(),
            nodes: self.skeleton.nodes.clone(),
            blocks: self
                .skeleton
                .blocks
                .iter()
                .map(|b| b.iter().map(|&i| name(i)).collect())
                .collect(),
            block_dag: self.skeleton.block_dag.clone(),
            intra_edges,
            inter_edges,
            params,
        }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn n_nodes(&self) -> usize {
        self.skeleton.n_nodes()
    }

    pub fn family(&self, s: usize) -> FamilyKind {
        self.skeleton.family(s)
    }

    pub fn node_weight(&self, s: usize) -> f64 {
        self.node_weights[s]
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn intra_edges(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.intra
    }

    pub fn inter_edges(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.inter
    }

    /// Intra-block neighbors of `s` with their weights.
    pub fn neighbors(&self, s: usize) -> &[(usize, f64)] {
        &self.neighbors[s]
    }

    /// Parents of `s` with their weights.
    pub fn parents(&self, s: usize) -> &[(usize, f64)] {
        &self.parents[s]
    }

    pub fn intra_weight(&self, a: usize, b: usize) -> f64 {
        self.intra
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn inter_weight(&self, t: usize, s: usize) -> f64 {
        self.inter.get(&(t, s)).copied().unwrap_or(0.0)
    }

    /// Same structure with every parameter multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> ModelSpec {
        ModelSpec::assemble(
            self.skeleton.clone(),
            self.node_weights.iter().map(|w| w * alpha).collect(),
            self.intra.iter().map(|(&k, &w)| (k, w * alpha)).collect(),
            self.inter.iter().map(|(&k, &w)| (k, w * alpha)).collect(),
        )
    }

    /// Natural parameter of `s` given values for its neighbors and parents.
    pub fn natural_param(
        &self,
        s: usize,
        assignment: &HashMap<usize, f64>,
    ) -> Result<NaturalParam> {
        let mut eta = self.node_weights[s];
        for &(t, w) in self.parents[s].iter().chain(self.neighbors[s].iter()) {
            let node = &self.skeleton.nodes[t];
            let x = *assignment
                .get(&t)
                .ok_or_else(|| Error::MissingNeighbor(node.name.clone()))?;
            eta += w * node.family.sufficient_stat(x)?;
        }
        Ok(NaturalParam(eta))
    }

    /// Natural parameter of `s` from precomputed sufficient statistics of
    /// every node.
    #[inline]
    pub fn eta_from_stats(&self, s: usize, stats: &[f64]) -> f64 {
        let mut eta = self.node_weights[s];
        for &(t, w) in &self.parents[s] {
            eta += w * stats[t];
        }
        for &(t, w) in &self.neighbors[s] {
            eta += w * stats[t];
        }
        eta
    }

    /// Unnormalized log-density of block `b`'s conditional at a full
    /// assignment (statistics must already be computed).
    pub(crate) fn block_term(&self, b: usize, x: &[f64], stats: &[f64]) -> f64 {
        let mut total = 0.0;
        for &s in self.skeleton.block(b) {
            let mut lin = self.node_weights[s];
            for &(t, w) in &self.parents[s] {
                lin += w * stats[t];
            }
            total += lin * stats[s] + self.family(s).base(x[s]);
            for &(t, w) in &self.neighbors[s] {
                if t > s {
                    total += w * stats[s] * stats[t];
                }
            }
        }
        total
    }

    /// Sum over blocks of the unnormalized block-conditional log-densities,
    /// i.e. the log joint up to the per-block conditional log-partitions.
    pub fn log_joint_unnorm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_nodes() {
            return Err(Error::Config(format!(
                "assignment has {} values for {} nodes",
                x.len(),
                self.n_nodes()
            )));
        }
        let stats = x
            .iter()
            .enumerate()
            .map(|(s, &v)| self.family(s).sufficient_stat(v))
            .collect::<Result<Vec<f64>>>()?;
        Ok((0..self.skeleton.n_blocks())
            .map(|b| self.block_term(b, x, &stats))
            .sum())
    }

    pub fn graph_stats(&self) -> GraphStats {
        let sk = &self.skeleton;
        let mut stats = GraphStats::default();
        for b in 0..sk.n_blocks() {
            let members = sk.block(b);
            stats.p.push(members.len());
            stats.q.push(sk.parent_count(b));
            stats.d_intra.push(
                members
                    .iter()
                    .map(|&s| self.neighbors[s].len())
                    .max()
                    .unwrap_or(0),
            );
            stats.d_inter.push(
                members
                    .iter()
                    .map(|&s| self.parents[s].len())
                    .max()
                    .unwrap_or(0),
            );
        }
        stats
    }
}

/// Per-block size and degree summary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub d_intra: Vec<usize>,
    pub d_inter: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
}

/// 4-neighbor grid edges on `rows * cols` nodes in row-major order.
pub fn build_lattice(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges =
        Vec::with_capacity(rows * cols.saturating_sub(1) + cols * rows.saturating_sub(1));
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            edges.push((r * cols + c, r * cols + c + 1));
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            edges.push((r * cols + c, (r + 1) * cols + c));
        }
    }
    edges
}

/// Path graph `0 - 1 - .. - (p-1)`.
pub fn build_chain(p: usize) -> Vec<(usize, usize)> {
    (1..p).map(|i| (i - 1, i)).collect()
}
