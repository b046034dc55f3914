//! Simulation studies: sample, fit a regularization path and score it,
//! repeated over sample sizes and replicates.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_path, lambda_grid, FitConfig, LambdaGrid, SymmetrizationRule};
use crate::evaluation::{recovery_summary, roc, roc_svg, write_roc_csv, RecoveryRow, RocCurve};
use crate::graph::{ModelSpec, SPEC_FORMAT_VERSION};
use crate::io::{load_spec, save_dataset, write_json, ExperimentManifest};
use crate::normalize::check_normalizability;
use crate::sampler::{sample_bdmrf, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Number of penalty values.
    pub k: usize,
    /// Smallest value as a fraction of the largest.
    pub ratio: f64,
    /// Fixed `mu / lambda`; `None` derives it from block sizes.
    pub coupling: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            k: 30,
            ratio: 0.01,
            coupling: None,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config("grid needs k >= 2 and 0 < ratio < 1".into()));
        }
        if let Some(c) = self.coupling {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config("grid coupling must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn build(&self, data: &crate::data::Dataset, spec: &ModelSpec) -> Result<LambdaGrid> {
        let mut grid = lambda_grid(data, spec.skeleton(), self.k, self.ratio)?;
        if let Some(c) = self.coupling {
            grid.coupling = c;
            grid.mus = grid.lambdas.iter().map(|l| l * c).collect();
        }
        Ok(grid)
    }
}

/// Settings shared by every run of a study.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSettings {
    pub sampler: SamplerConfig,
    pub fit: FitConfig,
    pub grid: GridConfig,
    pub rule: SymmetrizationRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub n: usize,
    pub seed: u64,
    pub rows: Vec<RecoveryRow>,
    pub roc: RocCurve,
    pub data: crate::data::Dataset,
}

/// One simulate, fit-path, score cycle with the sampler seeded by `seed`.
pub fn run_once(
    spec: &ModelSpec,
    n: usize,
    seed: u64,
    settings: &RunSettings,
) -> Result<RunResult> {
    let sampler = SamplerConfig {
        seed,
        ..settings.sampler.clone()
    };
    let data = sample_bdmrf(spec, n, &sampler)?;
    let grid = settings.grid.build(&data, spec)?;
    let path = fit_path(&data, spec.skeleton(), &grid, &settings.fit, settings.rule)?;
    let rows = recovery_summary(spec, &path)?;
    let roc = roc(spec, &path)?;
    Ok(RunResult {
        n,
        seed,
        rows,
        roc,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub completed: usize,
    pub mean_auc: Option<f64>,
    pub sd_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format_version: String,
    pub spec: PathBuf,
    pub runs: Vec<RunRecord>,
    pub sizes: Vec<SizeSummary>,
    pub failures: usize,
}

/// Mean curve over replicates, averaged per grid index.
fn mean_rows(results: &[&RunResult]) -> Vec<[f64; 5]> {
    let k = results.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    (0..k)
        .map(|i| {
            let mut acc = [0.0; 5];
            for r in results {
                let row = &r.rows[i];
                for (a, v) in
                    acc.iter_mut()
                        .zip([row.fpr, row.tpr, row.precision, row.recall, row.f1])
                {
                    *a += v;
                }
            }
            acc.map(|a| a / results.len() as f64)
        })
        .collect()
}

/// Runs a manifest, writing one directory per `(n, replicate)` plus
/// `aggregate_roc.csv`, `summary.json` and optionally `roc.svg` under the
/// manifest's output directory.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentSummary> {
    manifest.validate()?;
    let spec = load_spec(&manifest.spec)?;
    let report = check_normalizability(&spec);
    if !report.is_normalizable() && !manifest.sampler.force {
        return Err(Error::NotNormalizable(report.summary()));
    }
    let out = &manifest.output;
    fs::create_dir_all(out)?;
    let settings = RunSettings {
        sampler: manifest.sampler.clone(),
        fit: manifest.fit.clone(),
        grid: manifest.grid.clone(),
        rule: manifest.rule,
    };
    let jobs: Vec<(usize, usize)> = manifest
        .n
        .iter()
        .flat_map(|&n| (0..manifest.replicates).map(move |r| (n, r)))
        .collect();
    let outcomes: Vec<(RunRecord, Option<RunResult>)> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let seed = manifest.seed_base.wrapping_add(r as u64);
            let dir = out.join(format!("n{n}_rep{r}"));
            let res = run_once(&spec, n, seed, &settings).and_then(|res| {
                write_run(&dir, &res)?;
                Ok(res)
            });
            match res {
                Ok(res) => (
                    RunRecord {
                        n,
                        replicate: r,
                        seed,
                        dir: dir.clone(),
                        auc: Some(res.roc.auc),
                        error: None,
                    },
                    Some(res),
                ),
                Err(e) => {
                    log::error!("run n={n} replicate={r} failed: {e}");
                    (
                        RunRecord {
                            n,
                            replicate: r,
                            seed,
                            dir,
                            auc: None,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();

    let mut sizes = Vec::new();
    let mut agg = String::from("n,index,fpr,tpr,precision,recall,f1\n");
    let mut curves = Vec::new();
    for &n in &manifest.n {
        let done: Vec<&RunResult> = outcomes
            .iter()
            .filter_map(|o| o.1.as_ref())
            .filter(|r| r.n == n)
            .collect();
        let aucs: Vec<f64> = done.iter().map(|r| r.roc.auc).collect();
        let (mean, sd) = mean_sd(&aucs);
        sizes.push(SizeSummary {
            n,
            completed: done.len(),
            mean_auc: mean,
            sd_auc: sd,
        });
        let mean_curve = mean_rows(&done);
        for (i, m) in mean_curve.iter().enumerate() {
            agg.push_str(&format!(
                "{n},{i},{},{},{},{},{}\n",
                m[0], m[1], m[2], m[3], m[4]
            ));
        }
        curves.push((
            format!("n={n}"),
            mean_curve.iter().map(|m| (m[0], m[1])).collect(),
        ));
    }
    for s in &sizes {
        if let Some(m) = s.mean_auc {
            agg.push_str(&format!("auc,{},{m}\n", s.n));
        }
    }
    fs::write(out.join("aggregate_roc.csv"), agg)?;
    if manifest.svg {
        fs::write(out.join("roc.svg"), roc_svg(&curves))?;
    }
    let runs: Vec<RunRecord> = outcomes.into_iter().map(|o| o.0).collect();
    let failures = runs.iter().filter(|r| r.error.is_some()).count();
    let summary = ExperimentSummary {
        format_version: SPEC_FORMAT_VERSION.into(),
        spec: manifest.spec.clone(),
        runs,
        sizes,
        failures,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_run(dir: &Path, res: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_dataset(&res.data, &dir.join("data.csv"))?;
    let file = fs::File::create(dir.join("roc.csv"))?;
    write_roc_csv(std::io::BufWriter::new(file), &res.rows, res.roc.auc)
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    } else {
        None
    };
    (Some(m), sd)
}
