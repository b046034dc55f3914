//! Ingestion of a binary aberration table and a count expression table into
//! a two-block dataset (aberrations first, expression conditioned on them).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::FamilyKind;
use crate::graph::{ModelSpec, Node, Skeleton};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionFamily {
    /// Truncated Poisson with the level set to the largest observed count.
    #[default]
    Tpoisson,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    /// Keep aberrations present in at least this fraction of samples.
    pub min_prevalence: f64,
    /// Keep this fraction of genes with the highest expression variance.
    pub top_variance: f64,
    pub expression_family: ExpressionFamily,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            min_prevalence: 0.1,
            top_variance: 0.02,
            expression_family: ExpressionFamily::Tpoisson,
        }
    }
}

impl PrepareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_prevalence) {
            return Err(Error::Config("min_prevalence must lie in [0, 1]".into()));
        }
        if !(self.top_variance > 0.0 && self.top_variance <= 1.0) {
            return Err(Error::Config("top_variance must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub samples_aberration: usize,
    pub samples_expression: usize,
    pub samples_common: usize,
    pub aberrations_in: usize,
    pub aberrations_kept: usize,
    pub genes_in: usize,
    pub genes_kept: usize,
    /// Truncation level of the expression block, if truncated.
    pub truncation_level: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    /// Parameter-free model on the prepared columns.
    pub skeleton: ModelSpec,
    pub data: Dataset,
    pub report: PrepareReport,
}

struct Table {
    columns: Vec<String>,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R, what: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("{what} header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Parse(format!(
            "{what}: need a sample id column and at least one feature"
        )));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{what} row {row}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::DatasetCell {
                row,
                col: 0,
                msg: format!("{what}: wrong field count"),
            });
        }
        ids.push(rec[0].to_string());
        let vals = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>().map_err(|_| Error::DatasetCell {
                    row,
                    col: col + 1,
                    msg: format!("{what}: '{f}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok(Table { columns, ids, rows })
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn prepare<A: Read, E: Read>(
    aberrations: A,
    expression: E,
    cfg: &PrepareConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    let ab = read_table(aberrations, "aberration table")?;
    let ex = read_table(expression, "expression table")?;
    let ab_index: HashMap<&str, usize> = ab
        .ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let common: Vec<(usize, usize)> = ex
        .ids
        .iter()
        .enumerate()
        .filter_map(|(ie, id)| ab_index.get(id.as_str()).map(|&ia| (ia, ie)))
        .collect();
    let n = common.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "only {n} samples are shared by both tables"
        )));
    }

    let mut kept_ab = Vec::new();
    for (j, _) in ab.columns.iter().enumerate() {
        let mut present = 0usize;
        for (row, &(ia, _)) in common.iter().enumerate() {
            match ab.rows[ia][j] {
                0.0 => {}
                1.0 => present += 1,
                v => {
                    return Err(Error::DatasetCell {
                        row,
                        col: j + 1,
                        msg: format!("aberration value {v} is not 0/1"),
                    });
                }
            }
        }
        if present < n && present as f64 >= cfg.min_prevalence * n as f64 {
            kept_ab.push(j);
        }
    }

    let mut variances = Vec::new();
    for (j, _) in ex.columns.iter().enumerate() {
        let col: Vec<f64> = common.iter().map(|&(_, ie)| ex.rows[ie][j]).collect();
        if let Some(row) = col.iter().position(|v| !(v.fract() == 0.0 && *v >= 0.0)) {
            return Err(Error::DatasetCell {
                row,
                col: j + 1,
                msg: format!("expression value {} is not a count", col[row]),
            });
        }
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            variances.push((j, var));
        }
    }
    variances.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_genes = ((cfg.top_variance * ex.columns.len() as f64).ceil() as usize)
        .max(1)
        .min(variances.len());
    let mut kept_ex: Vec<usize> = variances[..n_genes].iter().map(|v| v.0).collect();
    kept_ex.sort_unstable();
    if kept_ab.is_empty() || kept_ex.is_empty() {
        return Err(Error::Config(
            "filters removed every aberration or every gene".into(),
        ));
    }

    let max_count = kept_ex
        .iter()
        .flat_map(|&j| common.iter().map(move |&(_, ie)| (ie, j)))
        .map(|(ie, j)| ex.rows[ie][j])
        .fold(0.0, f64::max);
    let (expr_family, level) = match cfg.expression_family {
        ExpressionFamily::Tpoisson => {
            let r = (max_count as u32).max(1);
            (FamilyKind::TruncatedPoisson { r }, Some(r))
        }
        ExpressionFamily::Poisson => (FamilyKind::Poisson, None),
    };
    let mut nodes: Vec<Node> = kept_ab
        .iter()
        .map(|&j| Node {
            name: format!("ab_{}", sanitize(&ab.columns[j])),
            family: FamilyKind::BernoulliPm,
            block: 0,
        })
        .collect();
    nodes.extend(kept_ex.iter().map(|&j| Node {
        name: format!("ex_{}", sanitize(&ex.columns[j])),
        family: expr_family,
        block: 1,
    }));
    let mut values = Vec::with_capacity(n * nodes.len());
    for &(ia, ie) in &common {
        values.extend(kept_ab.iter().map(|&j| 2.0 * ab.rows[ia][j] - 1.0));
        values.extend(kept_ex.iter().map(|&j| ex.rows[ie][j]));
    }
    let skeleton = Skeleton::new(nodes.clone(), vec![vec![], vec![0]])?;
    let spec = ModelSpec::from_skeleton(skeleton, vec![0.0; nodes.len()], [], [])?;
    let data = Dataset::new(nodes, values)?;
    Ok(Prepared {
        skeleton: spec,
        data,
        report: PrepareReport {
            samples_aberration: ab.ids.len(),
            samples_expression: ex.ids.len(),
            samples_common: n,
            aberrations_in: ab.columns.len(),
            aberrations_kept: kept_ab.len(),
            genes_in: ex.columns.len(),
            genes_kept: kept_ex.len(),
            truncation_level: level,
        },
    })
}

/// Seed of the bundled lookalike tables.
pub const LOOKALIKE_SEED: u64 = 2024;

/// Small synthetic stand-in for an aberration/expression study: 50 shared
/// samples, 20 aberrations and 200 genes, a few of which respond to
/// aberrations. Returns `(aberration_csv, expression_csv)`.
pub fn synthetic_lookalike(seed: u64) -> (String, String) {
    const SHARED: usize = 50;
    const N_AB: usize = 20;
    const N_GENES: usize = 200;
    let mut rng = stream(seed, "lookalike", 0);
    let prevalence: Vec<f64> = (0..N_AB)
        .map(|j| {
            if j % 4 == 0 {
                0.04
            } else {
                0.15 + 0.02 * j as f64
            }
        })
        .collect();
    let ab: Vec<Vec<u8>> = (0..SHARED + 2)
        .map(|_| {
            prevalence
                .iter()
                .map(|&p| u8::from(rng.random::<f64>() < p))
                .collect()
        })
        .collect();
    let mut ab_csv = String::from("sample");
    for j in 0..N_AB {
        let _ = write!(ab_csv, ",GENE{j:03}");
    }
    ab_csv.push('\n');
    // Two extra samples without expression data.
    for (i, row) in ab.iter().enumerate() {
        let _ = write!(ab_csv, "P{:03}", i);
        for v in row {
            let _ = write!(ab_csv, ",{v}");
        }
        ab_csv.push('\n');
    }

    let mut ex_csv = String::from("sample");
    for g in 0..N_GENES {
        let _ = write!(ex_csv, ",G{g:03}");
    }
    ex_csv.push('\n');
    // Shared samples in reverse order, then three without aberration data.
    let order: Vec<usize> = (0..SHARED).rev().chain(SHARED + 2..SHARED + 5).collect();
    for &i in &order {
        let _ = write!(ex_csv, "P{:03}", i);
        for g in 0..N_GENES {
            let base = 0.5 + (g % 7) as f64 * 0.4;
            let mut log_rate = base.ln();
            if g < 10 && i < ab.len() {
                let driver = ab[i][1 + (g % (N_AB - 1))];
                log_rate += if g % 2 == 0 { 1.2 } else { -0.8 } * f64::from(driver);
            }
            let rate = log_rate.exp();
            let x: f64 = Poisson::new(rate)
                .map(|d| d.sample(&mut rng))
                .unwrap_or(0.0);
            let _ = write!(ex_csv, ",{}", x as u64);
        }
        ex_csv.push('\n');
    }
    (ab_csv, ex_csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_and_filter() {
        let ab = "sample,a,b,c\ns1,1,0,0\ns2,0,0,1\ns3,1,0,1\ns4,0,0,0\n";
        let ex = "sample,g1,g2,g3\ns4,1,5,2\ns3,2,0,2\ns9,0,0,0\ns1,1,9,2\n";
        let cfg = PrepareConfig {
            min_prevalence: 0.5,
            top_variance: 0.3,
            ..Default::default()
        };
        let p = prepare(ab.as_bytes(), ex.as_bytes(), &cfg).unwrap();
        assert_eq!(p.report.samples_common, 3);
        let names: Vec<&str> = p.data.schema().iter().map(|n| n.name.as_str()).collect();
        // `a` is present in 2/3, `c` in 1/3 (below 0.5), `b` never.
        assert_eq!(names, vec!["ab_a", "ex_g2"]);
        assert_eq!(p.data.column(0), vec![-1.0, 1.0, 1.0]);
        assert_eq!(p.data.column(1), vec![5.0, 0.0, 9.0]);
        assert_eq!(p.report.truncation_level, Some(9));
        assert_eq!(p.skeleton.skeleton().block_parents(1), &[0]);
    }

    #[test]
    fn rejects_bad_values() {
        let ab = "sample,a\ns1,2\ns2,0\n";
        let ex = "sample,g\ns1,1\ns2,3\n";
        assert!(prepare(ab.as_bytes(), ex.as_bytes(), &PrepareConfig::default()).is_err());
        let ab = "sample,a\ns1,1\ns2,0\n";
        let ex = "sample,g\ns1,1.5\ns2,3\n";
        assert!(prepare(ab.as_bytes(), ex.as_bytes(), &PrepareConfig::default()).is_err());
    }

    #[test]
    fn lookalike_prepares() {
        let (ab, ex) = synthetic_lookalike(7);
        let p = prepare(
            ab.as_bytes(),
            ex.as_bytes(),
            &PrepareConfig {
                top_variance: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p.report.samples_common, 50);
        assert_eq!(p.report.genes_kept, 20);
        assert!(p.report.aberrations_kept >= 10);
        assert_eq!(synthetic_lookalike(7), (ab, ex));
    }
}
