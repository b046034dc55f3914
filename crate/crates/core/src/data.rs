use crate::error::{Error, Result};
use crate::graph::{Node, Skeleton};

/// `n x p` mixed-type observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<Node>,
    values: Vec<f64>,
    n: usize,
}

impl Dataset {
    /// Builds a dataset, checking each value against its column's family.
    pub fn new(schema: Vec<Node>, values: Vec<f64>) -> Result<Self> {
        let p = schema.len();
        if p == 0 {
            return Err(Error::Config("dataset has no columns".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(p) {
            return Err(Error::Config(format!(
                "dataset needs at least one full row of {p} values, got {}",
                values.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            let (row, col) = (i / p, i % p);
            if !schema[col].family.domain_check(*v) {
                return Err(Error::DatasetCell {
                    row,
                    col,
                    msg: format!("{v} is outside the domain of {}", schema[col].family),
                });
            }
        }
        let n = values.len() / p;
        Ok(Dataset { schema, values, n })
    }

    pub fn from_rows(schema: Vec<Node>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = schema.len();
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Config(format!(
                "row {r} has {} values, expected {p}",
                rows[r].len()
            )));
        }
        Dataset::new(schema, rows.iter().flatten().copied().collect())
    }

    pub fn schema(&self) -> &[Node] {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.schema.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.schema.len();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, col)).collect()
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Dataset {
            schema: self.schema.clone(),
            values,
            n: rows.len(),
        }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let rows: Vec<usize> = (0..n.min(self.n)).collect();
        self.select_rows(&rows)
    }

    /// Checks that the columns match the skeleton's nodes one to one.
    pub fn check_skeleton(&self, skeleton: &Skeleton) -> Result<()> {
        if self.schema.as_slice() != skeleton.nodes() {
            let detail = if self.schema.len() != skeleton.n_nodes() {
                format!(
                    "dataset has {} columns, model has {} nodes",
                    self.schema.len(),
                    skeleton.n_nodes()
                )
            } else {
                let i = self
                    .schema
                    .iter()
                    .zip(skeleton.nodes())
                    .position(|(a, b)| a != b)
                    .unwrap_or(0);
                format!(
                    "column {i} is {:?}, model node is {:?}",
                    self.schema[i],
                    skeleton.node(i)
                )
            };
            return Err(Error::SkeletonMismatch(detail));
        }
        Ok(())
    }
}
