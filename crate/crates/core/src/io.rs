//! File formats: JSON model specs, fit results and manifests; CSV datasets.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{FitConfig, GraphEstimate, SymmetrizationRule};
use crate::experiment::GridConfig;
use crate::family::FamilyKind;
use crate::graph::{ModelSpec, Node, Skeleton, SpecParts, SPEC_FORMAT_VERSION};
use crate::sampler::SamplerConfig;

/// Major version accepted by every loader.
pub const FORMAT_MAJOR: &str = "1";

fn check_version(found: &str, what: &str) -> Result<()> {
    let major = found.split('.').next().unwrap_or("");
    if major != FORMAT_MAJOR {
        return Err(Error::FormatVersion(format!(
            "{what} has format_version '{found}', this build reads {FORMAT_MAJOR}.x"
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<serde_json::Value>,
}

/// Parses versioned JSON, checking the major version before the body.
fn parse_versioned<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    match probe.format_version {
        Some(serde_json::Value::String(v)) => check_version(&v, what)?,
        Some(other) => {
            return Err(Error::FormatVersion(format!(
                "{what}: format_version {other} is not a string"
            )))
        }
        None => return Err(Error::Parse(format!("{what}: missing format_version"))),
    }
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_spec(text: &str) -> Result<ModelSpec> {
    let parts: SpecParts = parse_versioned(text, "model spec")?;
    ModelSpec::try_from(parts)
}

pub fn spec_to_string(spec: &ModelSpec) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&spec.to_parts())?;
    s.push('\n');
    Ok(s)
}

pub fn load_spec(path: &Path) -> Result<ModelSpec> {
    parse_spec(&read_text(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_spec(spec: &ModelSpec, path: &Path) -> Result<()> {
    fs::write(path, spec_to_string(spec)?)?;
    Ok(())
}

/// Column header `name:block:family[:param]`.
pub fn column_header(node: &Node) -> String {
    match node.family {
        FamilyKind::Gaussian { sigma } => {
            format!("{}:{}:gaussian:{}", node.name, node.block, fmt_f64(sigma))
        }
        FamilyKind::TruncatedPoisson { r } => format!("{}:{}:tpoisson:{r}", node.name, node.block),
        f => format!("{}:{}:{}", node.name, node.block, f.tag()),
    }
}

pub fn parse_column_header(h: &str) -> Result<Node> {
    let parts: Vec<&str> = h.trim().split(':').collect();
    let bad = |msg: &str| Error::Parse(format!("column header '{h}': {msg}"));
    if parts.len() < 3 || parts.len() > 4 {
        return Err(bad("expected name:block:family[:param]"));
    }
    let name = parts[0].to_string();
    if name.is_empty() {
        return Err(bad("empty name"));
    }
    let block: usize = parts[1]
        .parse()
        .map_err(|_| bad("block is not a nonnegative integer"))?;
    let param = parts.get(3).copied();
    let family = match (parts[2], param) {
        ("gaussian", None) => FamilyKind::STANDARD_GAUSSIAN,
        ("gaussian", Some(p)) => FamilyKind::Gaussian {
            sigma: p
                .parse()
                .map_err(|_| bad("gaussian sigma is not a number"))?,
        },
        ("tpoisson", Some(p)) => FamilyKind::TruncatedPoisson {
            r: p.parse()
                .map_err(|_| bad("tpoisson level is not an integer"))?,
        },
        ("tpoisson", None) => return Err(bad("tpoisson needs a truncation level")),
        ("bernoulli_pm", None) => FamilyKind::BernoulliPm,
        ("poisson", None) => FamilyKind::Poisson,
        ("exponential", None) => FamilyKind::Exponential,
        ("bernoulli_pm" | "poisson" | "exponential", Some(_)) => {
            return Err(bad("family takes no parameter"))
        }
        (other, _) => return Err(bad(&format!("unknown family tag '{other}'"))),
    };
    family.validate()?;
    Ok(Node {
        name,
        family,
        block,
    })
}

/// Shortest text that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 && !(v == 0.0 && v.is_sign_negative()) {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetReadOptions {
    /// Map 0/1 in `bernoulli_pm` columns to -1/+1.
    pub recode01: bool,
}

pub fn read_dataset<R: Read>(reader: R, opts: DatasetReadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("dataset header: {e}")))?
        .clone();
    let schema: Vec<Node> = headers
        .iter()
        .map(parse_column_header)
        .collect::<Result<_>>()?;
    let p = schema.len();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("dataset row {row}: {e}")))?;
        if rec.len() != p {
            return Err(Error::DatasetCell {
                row,
                col: rec.len().min(p),
                msg: format!("row has {} fields, header has {p}", rec.len()),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let mut v: f64 = field.parse().map_err(|_| Error::DatasetCell {
                row,
                col,
                msg: format!("'{field}' is not a number"),
            })?;
            if opts.recode01 && schema[col].family == FamilyKind::BernoulliPm {
                v = match v {
                    0.0 => -1.0,
                    1.0 => 1.0,
                    _ => {
                        return Err(Error::DatasetCell {
                            row,
                            col,
                            msg: format!("{v} is not 0/1"),
                        });
                    }
                };
            }
            values.push(v);
        }
    }
    Dataset::new(schema, values)
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(data.schema().iter().map(column_header))
        .map_err(to_io)?;
    for r in 0..data.n_rows() {
        w.write_record(data.row(r).iter().map(|&v| fmt_f64(v)))
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path, opts: DatasetReadOptions) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    read_dataset(std::io::BufReader::new(file), opts)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub name: String,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_slack: f64,
    pub objective: f64,
    pub intercept: f64,
}

/// Per-node solver diagnostics written next to a fitted spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDiagnostics {
    pub format_version: String,
    pub lambda: f64,
    pub mu: f64,
    pub rule: SymmetrizationRule,
    pub nodes: Vec<NodeDiagnostics>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitDiagnostics {
    pub fn from_estimate(est: &GraphEstimate, skeleton: &Skeleton) -> Self {
        FitDiagnostics {
            format_version: SPEC_FORMAT_VERSION.into(),
            lambda: est.lambda,
            mu: est.mu,
            rule: est.rule,
            nodes: est
                .node_fits
                .iter()
                .map(|f| NodeDiagnostics {
                    name: skeleton.node(f.node).name.clone(),
                    iterations: f.iterations,
                    converged: f.converged,
                    kkt_slack: f.kkt_slack,
                    objective: f.objective,
                    intercept: f.theta_s,
                })
                .collect(),
            warnings: est.warnings.clone(),
        }
    }
}

/// Path of the diagnostics sidecar belonging to a fitted spec file.
pub fn diagnostics_path(spec_path: &Path) -> PathBuf {
    let stem = spec_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    spec_path.with_file_name(format!("{stem}.diagnostics.json"))
}

/// Saves an estimate as a model spec plus its diagnostics sidecar.
pub fn save_fit(est: &GraphEstimate, skeleton: &Skeleton, path: &Path) -> Result<PathBuf> {
    save_spec(&est.to_spec(skeleton)?, path)?;
    let diag = diagnostics_path(path);
    write_json(&diag, &FitDiagnostics::from_estimate(est, skeleton))?;
    Ok(diag)
}

pub fn load_fit_diagnostics(path: &Path) -> Result<FitDiagnostics> {
    parse_versioned(&read_text(path)?, &path.display().to_string())
}

fn default_replicates() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// Batch description: simulate, fit a path and score it for every
/// `(n, replicate)` pair. Run seeds are `seed_base + replicate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub format_version: String,
    /// Model spec, relative to the manifest's directory unless absolute.
    pub spec: PathBuf,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub n: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub rule: SymmetrizationRule,
    /// Results directory, relative to the manifest's directory unless absolute.
    pub output: PathBuf,
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::Config(
                "manifest n list must be nonempty and positive".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::Config("manifest replicates must be positive".into()));
        }
        self.sampler.validate()?;
        self.fit.validate()?;
        self.grid.validate()
    }
}

pub fn parse_manifest(text: &str) -> Result<ExperimentManifest> {
    let m: ExperimentManifest = parse_versioned(text, "experiment manifest")?;
    m.validate()?;
    Ok(m)
}

/// Loads a manifest, resolving its paths against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let mut m = parse_manifest(&read_text(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if m.spec.is_relative() {
        m.spec = base.join(&m.spec);
    }
    if m.output.is_relative() {
        m.output = base.join(&m.output);
    }
    if !m.spec.is_file() {
        return Err(Error::Config(format!(
            "manifest spec {} does not exist",
            m.spec.display()
        )));
    }
    Ok(m)
}

pub fn save_manifest(m: &ExperimentManifest, path: &Path) -> Result<()> {
    write_json(path, m)
}
