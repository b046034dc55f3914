//! Ready-made simulation models on 2D lattices, plus small enumerable models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyKind;
use crate::graph::{build_chain, build_lattice, ModelSpec, Node, Skeleton};

/// Gaussian intra weight of the adjusted lattice models. Keeps the Gaussian
/// interaction matrix negative definite on lattices up to 6x6 (spectral radius
/// below 4).
pub const ADJUSTED_GAUSSIAN_WEIGHT: f64 = 0.25;

/// Truncation level used for truncated-Poisson lattice blocks.
pub const TPOISSON_LEVEL: u32 = 10;

/// Constant edge weights of a two-family lattice model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWayWeights {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

/// Which side of a two-family model is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// One block holding both families.
    Mixed,
    /// `X` is the root block, `Y` its child.
    XRoot,
    /// `Y` is the root block, `X` its child.
    YRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoWayModel {
    GaussianIsingMixed,
    GaussianMrfIsingCrf,
    GaussianCrfIsingMrf,
    PoissonIsingMixed,
    PoissonMrfIsingCrf,
    PoissonCrfIsingMrf,
    GaussianCrfTpoissonMrf,
    GaussianMrfPoissonCrf,
    GaussianCrfPoissonMrf,
}

impl TwoWayModel {
    pub const ALL: [TwoWayModel; 9] = [
        TwoWayModel::GaussianIsingMixed,
        TwoWayModel::GaussianMrfIsingCrf,
        TwoWayModel::GaussianCrfIsingMrf,
        TwoWayModel::PoissonIsingMixed,
        TwoWayModel::PoissonMrfIsingCrf,
        TwoWayModel::PoissonCrfIsingMrf,
        TwoWayModel::GaussianCrfTpoissonMrf,
        TwoWayModel::GaussianMrfPoissonCrf,
        TwoWayModel::GaussianCrfPoissonMrf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TwoWayModel::GaussianIsingMixed => "gaussian-ising-mixed",
            TwoWayModel::GaussianMrfIsingCrf => "gaussian-mrf-ising-crf",
            TwoWayModel::GaussianCrfIsingMrf => "gaussian-crf-ising-mrf",
            TwoWayModel::PoissonIsingMixed => "poisson-ising-mixed",
            TwoWayModel::PoissonMrfIsingCrf => "poisson-mrf-ising-crf",
            TwoWayModel::PoissonCrfIsingMrf => "poisson-crf-ising-mrf",
            TwoWayModel::GaussianCrfTpoissonMrf => "gaussian-crf-tpoisson-mrf",
            TwoWayModel::GaussianMrfPoissonCrf => "gaussian-mrf-poisson-crf",
            TwoWayModel::GaussianCrfPoissonMrf => "gaussian-crf-poisson-mrf",
        }
    }

    /// Reference simulation weights.
    pub fn weights(&self) -> TwoWayWeights {
        let w = |xx, yy, xy| TwoWayWeights { xx, yy, xy };
        match self {
            TwoWayModel::GaussianIsingMixed => w(0.2, 0.3, 0.1),
            TwoWayModel::GaussianMrfIsingCrf | TwoWayModel::GaussianCrfIsingMrf => w(0.5, 0.3, 0.1),
            TwoWayModel::PoissonIsingMixed
            | TwoWayModel::PoissonMrfIsingCrf
            | TwoWayModel::PoissonCrfIsingMrf => w(-0.8, 0.4, 0.6),
            TwoWayModel::GaussianCrfTpoissonMrf => w(0.1, 0.1, 0.2),
            TwoWayModel::GaussianMrfPoissonCrf | TwoWayModel::GaussianCrfPoissonMrf => {
                w(0.6, -1.0, 1.0)
            }
        }
    }

    /// Reference weights with the Gaussian intra weight lowered to
    /// [`ADJUSTED_GAUSSIAN_WEIGHT`] where it exceeds it.
    pub fn adjusted_weights(&self) -> TwoWayWeights {
        let mut w = self.weights();
        if matches!(self.families().0, FamilyKind::Gaussian { .. })
            && w.xx > ADJUSTED_GAUSSIAN_WEIGHT
        {
            w.xx = ADJUSTED_GAUSSIAN_WEIGHT;
        }
        w
    }

    fn families(&self) -> (FamilyKind, FamilyKind) {
        use FamilyKind::*;
        let g = FamilyKind::STANDARD_GAUSSIAN;
        match self {
            TwoWayModel::GaussianIsingMixed
            | TwoWayModel::GaussianMrfIsingCrf
            | TwoWayModel::GaussianCrfIsingMrf => (g, BernoulliPm),
            TwoWayModel::PoissonIsingMixed
            | TwoWayModel::PoissonMrfIsingCrf
            | TwoWayModel::PoissonCrfIsingMrf => (Poisson, BernoulliPm),
            TwoWayModel::GaussianCrfTpoissonMrf => (g, TruncatedPoisson { r: TPOISSON_LEVEL }),
            TwoWayModel::GaussianMrfPoissonCrf | TwoWayModel::GaussianCrfPoissonMrf => (g, Poisson),
        }
    }

    fn layout(&self) -> Layout {
        match self {
            TwoWayModel::GaussianIsingMixed | TwoWayModel::PoissonIsingMixed => Layout::Mixed,
            TwoWayModel::GaussianMrfIsingCrf
            | TwoWayModel::PoissonMrfIsingCrf
            | TwoWayModel::GaussianMrfPoissonCrf => Layout::XRoot,
            TwoWayModel::GaussianCrfIsingMrf
            | TwoWayModel::PoissonCrfIsingMrf
            | TwoWayModel::GaussianCrfTpoissonMrf
            | TwoWayModel::GaussianCrfPoissonMrf => Layout::YRoot,
        }
    }
}

impl fmt::Display for TwoWayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TwoWayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TwoWayModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown two-way model '{s}'")))
    }
}

fn lattice_nodes(prefix: &str, count: usize, family: FamilyKind, block: usize) -> Vec<Node> {
    (0..count)
        .map(|i| Node {
            name: format!("{prefix}{i}"),
            family,
            block,
        })
        .collect()
}

/// Two `side x side` lattices `x` and `y` joined position-wise (`x_k` with
/// `y_k`). Node order is all `x` then all `y`; all intercepts are zero.
pub fn two_way_spec(model: TwoWayModel, side: usize, w: TwoWayWeights) -> Result<ModelSpec> {
    let m = side * side;
    let (fx, fy) = model.families();
    let (bx, by, dag) = match model.layout() {
        Layout::Mixed => (0, 0, vec![vec![]]),
        Layout::XRoot => (0, 1, vec![vec![], vec![0]]),
        Layout::YRoot => (1, 0, vec![vec![], vec![0]]),
    };
    let mut nodes = lattice_nodes("x", m, fx, bx);
    nodes.extend(lattice_nodes("y", m, fy, by));
    let skeleton = Skeleton::new(nodes, dag)?;
    let lattice = build_lattice(side, side);
    let mut intra: Vec<((usize, usize), f64)> = Vec::new();
    intra.extend(lattice.iter().map(|&(a, b)| ((a, b), w.xx)));
    intra.extend(lattice.iter().map(|&(a, b)| ((m + a, m + b), w.yy)));
    let cross = (0..m).map(|k| (k, m + k));
    let mut inter = Vec::new();
    match model.layout() {
        Layout::Mixed => intra.extend(cross.map(|e| (e, w.xy))),
        Layout::XRoot => inter.extend(cross.map(|e| (e, w.xy))),
        Layout::YRoot => inter.extend(cross.map(|(a, b)| ((b, a), w.xy))),
    }
    ModelSpec::from_skeleton(skeleton, vec![0.0; 2 * m], intra, inter)
}

/// Constant edge weights of a three-family lattice model. `xz` and `yz` are
/// ignored where the block DAG has no such edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeWayWeights {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

/// Three-block models over Ising `x`, Gaussian `y` and Poisson `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreeWayModel {
    /// `P[X | Y, Z] P[Y | Z] P[Z]`
    XGivenYZ,
    /// `P[Y | X, Z] P[X | Z] P[Z]`
    YGivenXZ,
    /// `P[Y | X] P[X | Z] P[Z]`
    YGivenXChain,
}

impl ThreeWayModel {
    pub const ALL: [ThreeWayModel; 3] = [
        ThreeWayModel::XGivenYZ,
        ThreeWayModel::YGivenXZ,
        ThreeWayModel::YGivenXChain,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ThreeWayModel::XGivenYZ => "three-block-x-given-yz",
            ThreeWayModel::YGivenXZ => "three-block-y-given-xz",
            ThreeWayModel::YGivenXChain => "three-block-chain",
        }
    }

    pub fn weights(&self) -> ThreeWayWeights {
        ThreeWayWeights {
            xx: 0.1,
            yy: 0.3,
            zz: -0.8,
            xy: 0.1,
            xz: 0.1,
            yz: 0.1,
        }
    }

    pub fn adjusted_weights(&self) -> ThreeWayWeights {
        ThreeWayWeights {
            yy: ADJUSTED_GAUSSIAN_WEIGHT,
            ..self.weights()
        }
    }
}

impl fmt::Display for ThreeWayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThreeWayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThreeWayModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown three-way model '{s}'")))
    }
}

/// Three `side x side` lattices joined position-wise along the block DAG.
/// Node order is `x`, `y`, `z`; `z` is always the root block.
pub fn three_way_spec(model: ThreeWayModel, side: usize, w: ThreeWayWeights) -> Result<ModelSpec> {
    let m = side * side;
    // Block indices of (x, y, z) and the block DAG.
    let (bx, by, dag): (usize, usize, Vec<Vec<usize>>) = match model {
        ThreeWayModel::XGivenYZ => (2, 1, vec![vec![], vec![0], vec![0, 1]]),
        ThreeWayModel::YGivenXZ => (1, 2, vec![vec![], vec![0], vec![0, 1]]),
        ThreeWayModel::YGivenXChain => (1, 2, vec![vec![], vec![0], vec![1]]),
    };
    let mut nodes = lattice_nodes("x", m, FamilyKind::BernoulliPm, bx);
    nodes.extend(lattice_nodes("y", m, FamilyKind::STANDARD_GAUSSIAN, by));
    nodes.extend(lattice_nodes("z", m, FamilyKind::Poisson, 0));
    let skeleton = Skeleton::new(nodes, dag)?;
    let (x, y, z) = (0, m, 2 * m);
    let lattice = build_lattice(side, side);
    let mut intra = Vec::new();
    for (off, wt) in [(x, w.xx), (y, w.yy), (z, w.zz)] {
        intra.extend(lattice.iter().map(|&(a, b)| ((off + a, off + b), wt)));
    }
    let mut inter = Vec::new();
    let mut join =
        |from: usize, to: usize, wt: f64| inter.extend((0..m).map(|k| ((from + k, to + k), wt)));
    match model {
        ThreeWayModel::XGivenYZ => {
            join(z, y, w.yz);
            join(z, x, w.xz);
            join(y, x, w.xy);
        }
        ThreeWayModel::YGivenXZ => {
            join(z, x, w.xz);
            join(z, y, w.yz);
            join(x, y, w.xy);
        }
        ThreeWayModel::YGivenXChain => {
            join(z, x, w.xz);
            join(x, y, w.xy);
        }
    }
    ModelSpec::from_skeleton(skeleton, vec![0.0; 3 * m], intra, inter)
}

/// Single-block Gaussian path `g0 - g1 - ... ` with unit variances.
pub fn gaussian_chain(p: usize, theta: f64) -> Result<ModelSpec> {
    let skeleton = Skeleton::new(
        lattice_nodes("g", p, FamilyKind::STANDARD_GAUSSIAN, 0),
        vec![vec![]],
    )?;
    ModelSpec::from_skeleton(
        skeleton,
        vec![0.0; p],
        build_chain(p).into_iter().map(|e| (e, theta)),
        [],
    )
}

/// Single-block Ising lattice with zero intercepts.
pub fn ising_lattice(rows: usize, cols: usize, theta: f64) -> Result<ModelSpec> {
    let p = rows * cols;
    let skeleton = Skeleton::new(
        lattice_nodes("s", p, FamilyKind::BernoulliPm, 0),
        vec![vec![]],
    )?;
    ModelSpec::from_skeleton(
        skeleton,
        vec![0.0; p],
        build_lattice(rows, cols).into_iter().map(|e| (e, theta)),
        [],
    )
}

fn small(
    families: &[(FamilyKind, usize)],
    dag: Vec<Vec<usize>>,
    weights: Vec<f64>,
    intra: &[((usize, usize), f64)],
    inter: &[((usize, usize), f64)],
) -> ModelSpec {
    let nodes = families
        .iter()
        .enumerate()
        .map(|(i, &(family, block))| Node {
            name: format!("v{i}"),
            family,
            block,
        })
        .collect();
    let skeleton = Skeleton::new(nodes, dag).expect("valid preset skeleton");
    ModelSpec::from_skeleton(
        skeleton,
        weights,
        intra.iter().copied(),
        inter.iter().copied(),
    )
    .expect("valid preset model")
}

/// Small models whose joint distribution can be enumerated exactly.
pub fn enumerable_battery() -> Vec<(&'static str, ModelSpec)> {
    use FamilyKind::{BernoulliPm as I, TruncatedPoisson};
    let tp = TruncatedPoisson { r: 3 };
    let mut lattice = ising_lattice(2, 2, 0.4).expect("valid lattice");
    lattice = ModelSpec::from_skeleton(
        lattice.skeleton().clone(),
        vec![0.1, -0.2, 0.0, 0.15],
        lattice.intra_edges().iter().map(|(&k, &w)| (k, w)),
        [],
    )
    .expect("valid lattice");
    vec![
        ("ising-2x2", lattice),
        (
            "ising-ising",
            small(
                &[(I, 0), (I, 0), (I, 1), (I, 1)],
                vec![vec![], vec![0]],
                vec![0.2, -0.1, 0.0, 0.3],
                &[((0, 1), 0.3), ((2, 3), -0.4)],
                &[((0, 2), 0.5), ((1, 3), -0.3), ((0, 3), 0.2)],
            ),
        ),
        (
            "ising-tpoisson",
            small(
                &[(I, 0), (I, 0), (tp, 1), (tp, 1)],
                vec![vec![], vec![0]],
                vec![0.1, 0.0, -0.2, 0.1],
                &[((0, 1), 0.3), ((2, 3), 0.2)],
                &[((0, 2), 0.4), ((1, 3), -0.3)],
            ),
        ),
        (
            "ising-chain-3",
            small(
                &[(I, 0), (I, 0), (I, 1), (I, 1), (I, 2), (I, 2)],
                vec![vec![], vec![0], vec![1]],
                vec![0.1, -0.1, 0.2, 0.0, -0.2, 0.1],
                &[((0, 1), 0.4), ((2, 3), 0.3), ((4, 5), -0.35)],
                &[((0, 2), 0.5), ((1, 3), 0.2), ((2, 4), -0.4), ((3, 5), 0.3)],
            ),
        ),
        (
            "ising-tpoisson-mixed",
            small(
                &[(I, 0), (I, 0), (tp, 0), (tp, 0)],
                vec![vec![]],
                vec![0.1, -0.1, -0.3, 0.2],
                &[
                    ((0, 1), 0.3),
                    ((2, 3), -0.25),
                    ((0, 2), 0.3),
                    ((1, 3), -0.2),
                ],
                &[],
            ),
        ),
    ]
}

/// Every named lattice preset with its reference weights.
pub fn named_presets(side2: usize, side3: usize) -> Result<Vec<(String, ModelSpec)>> {
    let mut out = Vec::new();
    for m in TwoWayModel::ALL {
        out.push((m.name().to_string(), two_way_spec(m, side2, m.weights())?));
    }
    for m in ThreeWayModel::ALL {
        out.push((m.name().to_string(), three_way_spec(m, side3, m.weights())?));
    }
    Ok(out)
}

/// Looks up a preset by name. A `-adjusted` suffix selects the adjusted
/// Gaussian weight.
pub fn preset_by_name(name: &str, side: Option<usize>) -> Result<ModelSpec> {
    let (base, adjusted) = match name.strip_suffix("-adjusted") {
        Some(b) => (b, true),
        None => (name, false),
    };
    if let Ok(m) = base.parse::<TwoWayModel>() {
        let w = if adjusted {
            m.adjusted_weights()
        } else {
            m.weights()
        };
        return two_way_spec(m, side.unwrap_or(6), w);
    }
    if let Ok(m) = base.parse::<ThreeWayModel>() {
        let w = if adjusted {
            m.adjusted_weights()
        } else {
            m.weights()
        };
        return three_way_spec(m, side.unwrap_or(5), w);
    }
    if !adjusted {
        if let Some((_, spec)) = enumerable_battery().into_iter().find(|(n, _)| *n == name) {
            return Ok(spec);
        }
        if name == "gaussian-chain" {
            return gaussian_chain(side.unwrap_or(4), 0.4);
        }
    }
    Err(Error::Config(format!("unknown preset '{name}'")))
}

/// Names accepted by [`preset_by_name`].
pub fn preset_names() -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for m in TwoWayModel::ALL {
        v.push(m.name().into());
        v.push(format!("{}-adjusted", m.name()));
    }
    for m in ThreeWayModel::ALL {
        v.push(m.name().into());
        v.push(format!("{}-adjusted", m.name()));
    }
    v.extend(enumerable_battery().into_iter().map(|(n, _)| n.to_string()));
    v.push("gaussian-chain".into());
    v
}
