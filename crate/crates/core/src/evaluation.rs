//! Structure-recovery and parameter-error metrics.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{GraphEstimate, NodeFit};
use crate::graph::ModelSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    #[default]
    Pooled,
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    /// True positive rate; 1 when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio_or(self.tp, self.positives(), 1.0)
    }

    /// False positive rate; 0 when there are no negatives.
    pub fn fpr(&self) -> f64 {
        ratio_or(self.fp, self.negatives(), 0.0)
    }

    /// Precision; 1 when nothing is predicted.
    pub fn precision(&self) -> f64 {
        ratio_or(self.tp, self.tp + self.fp, 1.0)
    }

    pub fn recall(&self) -> f64 {
        self.tpr()
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn exact(&self) -> bool {
        self.fp == 0 && self.fn_ == 0
    }
}

fn ratio_or(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Per-class confusion counts of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeConfusion {
    pub intra: Confusion,
    pub inter: Confusion,
}

impl EdgeConfusion {
    pub fn class(&self, class: EdgeClass) -> Confusion {
        match class {
            EdgeClass::Pooled => self.intra.add(self.inter),
            EdgeClass::Intra => self.intra,
            EdgeClass::Inter => self.inter,
        }
    }
}

fn check_skeleton(truth: &ModelSpec, est: &GraphEstimate) -> Result<()> {
    let sk = truth.skeleton();
    if !est.node_fits.is_empty() && est.node_fits.len() != sk.n_nodes() {
        return Err(Error::SkeletonMismatch(format!(
            "estimate has {} node fits, truth has {} nodes",
            est.node_fits.len(),
            sk.n_nodes()
        )));
    }
    for &(a, b) in est.intra.keys() {
        if a >= b || b >= sk.n_nodes() || sk.block_of(a) != sk.block_of(b) {
            return Err(Error::SkeletonMismatch(format!(
                "intra edge ({a}, {b}) is not a candidate"
            )));
        }
    }
    for &(t, s) in est.inter.keys() {
        if t >= sk.n_nodes() || s >= sk.n_nodes() || !sk.is_inter_candidate(t, s) {
            return Err(Error::SkeletonMismatch(format!(
                "inter edge ({t} -> {s}) is not a candidate"
            )));
        }
    }
    Ok(())
}

/// Confusion counts over all intra (unordered, same block) and inter
/// (directed, parent block to child block) candidate edges.
pub fn confusion(truth: &ModelSpec, est: &GraphEstimate) -> Result<EdgeConfusion> {
    check_skeleton(truth, est)?;
    let sk = truth.skeleton();
    let mut intra = Confusion::default();
    for block in sk.blocks() {
        for (i, &a) in block.iter().enumerate() {
            for &b in &block[i + 1..] {
                let key = (a.min(b), a.max(b));
                tally(
                    &mut intra,
                    truth.intra_weight(a, b) != 0.0,
                    est.intra.contains_key(&key),
                );
            }
        }
    }
    let mut inter = Confusion::default();
    for s in 0..sk.n_nodes() {
        for t in sk.parent_candidates(s) {
            tally(
                &mut inter,
                truth.inter_weight(t, s) != 0.0,
                est.inter.contains_key(&(t, s)),
            );
        }
    }
    Ok(EdgeConfusion { intra, inter })
}

fn tally(c: &mut Confusion, truth: bool, predicted: bool) {
    match (truth, predicted) {
        (true, true) => c.tp += 1,
        (false, true) => c.fp += 1,
        (true, false) => c.fn_ += 1,
        (false, false) => c.tn += 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` in path order.
    pub points: Vec<(f64, f64)>,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub auc: f64,
    pub class: EdgeClass,
    pub intra_positives: usize,
    pub intra_negatives: usize,
    pub inter_positives: usize,
    pub inter_negatives: usize,
}

/// Trapezoid area under the step-completed curve through `points`, anchored
/// at (0,0) and (1,1). Points are sorted by FPR and TPR is made monotone.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(points);
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut best = 0.0f64;
    let mut prev = (0.0, 0.0);
    for &(x, y) in &pts {
        best = best.max(y);
        area += (x - prev.0) * (best + prev.1) * 0.5;
        prev = (x, best);
    }
    area.clamp(0.0, 1.0)
}

/// Pooled ROC curve over a regularization path.
pub fn roc(truth: &ModelSpec, path: &[GraphEstimate]) -> Result<RocCurve> {
    roc_class(truth, path, EdgeClass::Pooled)
}

pub fn roc_class(truth: &ModelSpec, path: &[GraphEstimate], class: EdgeClass) -> Result<RocCurve> {
    let mut points = Vec::with_capacity(path.len());
    let mut sizes = None;
    for est in path {
        let c = confusion(truth, est)?;
        sizes.get_or_insert(c);
        let k = c.class(class);
        points.push((k.fpr(), k.tpr()));
    }
    let sizes = match sizes {
        Some(c) => c,
        None => confusion(truth, &empty_estimate(truth))?,
    };
    Ok(RocCurve {
        auc: auc(&points),
        points,
        lambdas: path.iter().map(|e| e.lambda).collect(),
        mus: path.iter().map(|e| e.mu).collect(),
        class,
        intra_positives: sizes.intra.positives(),
        intra_negatives: sizes.intra.negatives(),
        inter_positives: sizes.inter.positives(),
        inter_negatives: sizes.inter.negatives(),
    })
}

fn empty_estimate(truth: &ModelSpec) -> GraphEstimate {
    GraphEstimate::from_fits(truth.skeleton(), 0.0, 0.0, Default::default(), Vec::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub lambda: f64,
    pub mu: f64,
    pub intra: Confusion,
    pub inter: Confusion,
    pub fpr: f64,
    pub tpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact: bool,
}

impl RecoveryRow {
    pub fn pooled(&self) -> Confusion {
        self.intra.add(self.inter)
    }
}

pub fn recovery_row(truth: &ModelSpec, est: &GraphEstimate) -> Result<RecoveryRow> {
    let c = confusion(truth, est)?;
    let pooled = c.class(EdgeClass::Pooled);
    Ok(RecoveryRow {
        lambda: est.lambda,
        mu: est.mu,
        intra: c.intra,
        inter: c.inter,
        fpr: pooled.fpr(),
        tpr: pooled.tpr(),
        precision: pooled.precision(),
        recall: pooled.recall(),
        f1: pooled.f1(),
        exact: c.intra.exact() && c.inter.exact(),
    })
}

pub fn recovery_summary(truth: &ModelSpec, path: &[GraphEstimate]) -> Result<Vec<RecoveryRow>> {
    path.iter().map(|e| recovery_row(truth, e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParamError {
    pub node: usize,
    pub intra: f64,
    pub inter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub per_node: Vec<NodeParamError>,
    pub max_intra: f64,
    pub max_inter: f64,
    /// Largest per-node `intra + inter`.
    pub max_total: f64,
}

/// Per-node l2 distance between fitted and true coefficients, split into the
/// intra-block and parent groups.
pub fn param_error(fits: &[NodeFit], truth: &ModelSpec) -> Result<ParamError> {
    let sk = truth.skeleton();
    if fits.len() != sk.n_nodes() {
        return Err(Error::SkeletonMismatch(format!(
            "{} node fits for {} nodes",
            fits.len(),
            sk.n_nodes()
        )));
    }
    let mut per_node = Vec::with_capacity(fits.len());
    for (s, fit) in fits.iter().enumerate() {
        if fit.node != s {
            return Err(Error::SkeletonMismatch(format!(
                "fit {s} belongs to node {}",
                fit.node
            )));
        }
        let intra_c = sk.intra_candidates(s);
        let inter_c = sk.parent_candidates(s);
        if fit.theta_intra.iter().any(|(t, _)| !intra_c.contains(t))
            || fit.theta_inter.iter().any(|(t, _)| !inter_c.contains(t))
        {
            return Err(Error::SkeletonMismatch(format!(
                "fit of node {s} has non-candidate coefficients"
            )));
        }
        let intra = intra_c
            .iter()
            .map(|&t| (fit.intra_weight(t) - truth.intra_weight(s, t)).powi(2))
            .sum::<f64>()
            .sqrt();
        let inter = inter_c
            .iter()
            .map(|&t| (fit.inter_weight(t) - truth.inter_weight(t, s)).powi(2))
            .sum::<f64>()
            .sqrt();
        per_node.push(NodeParamError {
            node: s,
            intra,
            inter,
        });
    }
    let max_of = |f: &dyn Fn(&NodeParamError) -> f64| per_node.iter().map(f).fold(0.0, f64::max);
    Ok(ParamError {
        max_intra: max_of(&|e| e.intra),
        max_inter: max_of(&|e| e.inter),
        max_total: max_of(&|e| e.intra + e.inter),
        per_node,
    })
}

pub const ROC_CSV_HEADER: &str = "lambda,mu,fpr,tpr,precision,recall,f1,exact";

/// Writes the recovery table followed by an `auc,<value>` line.
pub fn write_roc_csv<W: Write>(mut w: W, rows: &[RecoveryRow], auc: f64) -> Result<()> {
    writeln!(w, "{ROC_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.lambda, r.mu, r.fpr, r.tpr, r.precision, r.recall, r.f1, r.exact
        )?;
    }
    writeln!(w, "auc,{auc}")?;
    Ok(())
}

/// Minimal SVG line plot with one polyline per labelled curve.
pub fn roc_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    ];
    let map = |(x, y): (f64, f64)| (PAD + x * SIZE, PAD + (1.0 - y) * SIZE);
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{}" x2="{}" y2="{PAD}" stroke="#aaa" stroke-dasharray="4"/>"##,
        PAD + SIZE,
        PAD + SIZE
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">FPR</text>"#,
        PAD + SIZE / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {})">TPR</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let mut sorted = pts.clone();
        sorted.push((0.0, 0.0));
        sorted.push((1.0, 1.0));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let coords: Vec<String> = sorted
            .into_iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            PAD + SIZE - 90.0,
            PAD + SIZE - 10.0 - 14.0 * i as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilyKind;
    use crate::graph::{Node, Skeleton};

    fn truth() -> ModelSpec {
        let nodes = vec![
            Node {
                name: "a".into(),
                family: FamilyKind::BernoulliPm,
                block: 0,
            },
            Node {
                name: "b".into(),
                family: FamilyKind::BernoulliPm,
                block: 0,
            },
            Node {
                name: "c".into(),
                family: FamilyKind::BernoulliPm,
                block: 0,
            },
            Node {
                name: "d".into(),
                family: FamilyKind::BernoulliPm,
                block: 1,
            },
        ];
        let sk = Skeleton::new(nodes, vec![vec![], vec![0]]).unwrap();
        ModelSpec::from_skeleton(sk, vec![0.0; 4], [((0, 1), 0.5)], [((2, 3), 0.3)]).unwrap()
    }

    fn est(intra: &[(usize, usize)], inter: &[(usize, usize)]) -> GraphEstimate {
        GraphEstimate {
            lambda: 0.1,
            mu: 0.1,
            rule: Default::default(),
            intra: intra.iter().map(|&k| (k, 1.0)).collect(),
            inter: inter.iter().map(|&k| (k, 1.0)).collect(),
            node_fits: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn empty_and_complete_give_half() {
        let t = truth();
        let all_intra = [(0, 1), (0, 2), (1, 2)];
        let all_inter = [(0, 3), (1, 3), (2, 3)];
        let curve = roc(&t, &[est(&[], &[]), est(&all_intra, &all_inter)]).unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(curve.auc, 0.5);
        assert_eq!((curve.intra_positives, curve.intra_negatives), (1, 2));
        assert_eq!((curve.inter_positives, curve.inter_negatives), (1, 2));
    }

    #[test]
    fn exact_graph_gives_unit_auc() {
        let t = truth();
        let curve = roc(&t, &[est(&[(0, 1)], &[(2, 3)])]).unwrap();
        assert_eq!(curve.points, vec![(0.0, 1.0)]);
        assert_eq!(curve.auc, 1.0);
        let row = recovery_row(&t, &est(&[(0, 1)], &[(2, 3)])).unwrap();
        assert!(row.exact);
    }

    #[test]
    fn one_extra_edge_precision() {
        let t = truth();
        let row = recovery_row(&t, &est(&[(0, 1), (1, 2)], &[(2, 3)])).unwrap();
        assert!((row.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(row.recall, 1.0);
        assert!(!row.exact);
    }

    #[test]
    fn empty_truth_and_estimate() {
        let t = truth();
        let empty = ModelSpec::from_skeleton(t.skeleton().clone(), vec![0.0; 4], [], []).unwrap();
        let row = recovery_row(&empty, &est(&[], &[])).unwrap();
        assert_eq!(row.precision, 1.0);
        assert!(row.exact);
    }

    #[test]
    fn classes_do_not_mix() {
        let t = truth();
        let a = confusion(&t, &est(&[(0, 1)], &[])).unwrap();
        let b = confusion(&t, &est(&[(0, 1)], &[(0, 3), (1, 3)])).unwrap();
        assert_eq!(a.intra, b.intra);
        assert_ne!(a.inter, b.inter);
    }

    #[test]
    fn non_candidate_edge_is_mismatch() {
        let t = truth();
        assert!(matches!(
            confusion(&t, &est(&[(0, 3)], &[])),
            Err(Error::SkeletonMismatch(_))
        ));
        assert!(matches!(
            confusion(&t, &est(&[], &[(3, 0)])),
            Err(Error::SkeletonMismatch(_))
        ));
    }

    fn fits_from(t: &ModelSpec, zero: bool) -> Vec<NodeFit> {
        (0..t.n_nodes())
            .map(|s| {
                let w = |v: f64| if zero { 0.0 } else { v };
                NodeFit {
                    node: s,
                    theta_s: 0.0,
                    theta_intra: t
                        .neighbors(s)
                        .iter()
                        .map(|&(u, v)| (u, w(v)))
                        .filter(|e| e.1 != 0.0)
                        .collect(),
                    theta_inter: t
                        .parents(s)
                        .iter()
                        .map(|&(u, v)| (u, w(v)))
                        .filter(|e| e.1 != 0.0)
                        .collect(),
                    objective: 0.0,
                    iterations: 0,
                    converged: true,
                    kkt_slack: 0.0,
                    internal: vec![],
                }
            })
            .collect()
    }

    #[test]
    fn param_error_examples() {
        let t = truth();
        let exact = param_error(&fits_from(&t, false), &t).unwrap();
        assert_eq!((exact.max_intra, exact.max_inter), (0.0, 0.0));
        let zero = param_error(&fits_from(&t, true), &t).unwrap();
        assert_eq!(zero.per_node[0].intra, 0.5);
        assert_eq!(zero.per_node[3].inter, 0.3);
        assert_eq!(zero.max_total, 0.5);
    }

    #[test]
    fn csv_layout() {
        let t = truth();
        let rows = recovery_summary(&t, &[est(&[], &[])]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &rows, 0.75).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ROC_CSV_HEADER);
        assert_eq!(lines[1], "0.1,0.1,0,0,1,0,0,false");
        assert_eq!(lines[2], "auc,0.75");
    }

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let svg = roc_svg(&[("n=50".into(), vec![(0.2, 0.6)]), ("n<100".into(), vec![])]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("n&lt;100"));
    }
}
