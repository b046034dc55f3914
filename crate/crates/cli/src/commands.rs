use std::fs;
use std::path::{Path, PathBuf};

use bdmrf::estimator::{
    fit_graph, fit_path, lambda_grid, mu_coupling, stars_select, FitConfig, GraphEstimate,
    LambdaGrid, StarsConfig, SymmetrizationRule,
};
use bdmrf::evaluation::{recovery_summary, roc_class, roc_svg, write_roc_csv, EdgeClass};
use bdmrf::experiment::run_experiment;
use bdmrf::io::{
    load_dataset, load_manifest, load_spec, save_dataset, save_fit, save_spec, write_json,
    DatasetReadOptions,
};
use bdmrf::prepare::{
    prepare, synthetic_lookalike, ExpressionFamily, PrepareConfig, LOOKALIKE_SEED,
};
use bdmrf::presets::{preset_by_name, preset_names};
use bdmrf::sampler::Init;
use bdmrf::{
    check_normalizability, enumerate_exact, sample_bdmrf, Dataset, ModelSpec, SamplerConfig,
};
use serde_json::{json, Value};

use crate::{Class, Cli, Command, DataArgs, ExprFamily, GridArgs, Rule, SolverArgs};

/// Module tolerances used by `oracle`.
const FORMULA_TOL: f64 = 1e-10;
const GIBBS_TV_TOL: f64 = 0.02;

pub struct Outcome {
    pub ok: bool,
    pub error: Option<String>,
    pub result: Value,
    pub summary_path: Option<PathBuf>,
}

type CmdResult = Result<(bool, Value), Box<dyn std::error::Error>>;

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate(_) => "simulate",
        Command::Check(_) => "check",
        Command::Fit(_) => "fit",
        Command::Path(_) => "path",
        Command::Roc(_) => "roc",
        Command::Stars(_) => "stars",
        Command::Oracle(_) => "oracle",
        Command::Prepare(_) => "prepare",
        Command::Experiment(_) => "experiment",
        Command::Preset(_) => "preset",
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn summary_path(cmd: &Command) -> Option<PathBuf> {
    match cmd {
        Command::Simulate(a) => Some(sibling(&a.out, "summary.json")),
        Command::Fit(a) => Some(sibling(&a.out, "summary.json")),
        Command::Path(a) => Some(sibling(&a.out, "summary.json")),
        Command::Roc(a) => Some(sibling(&a.out, "summary.json")),
        Command::Stars(a) => Some(sibling(&a.out, "summary.json")),
        Command::Prepare(a) => match (&a.write_lookalike, &a.out_data) {
            (Some(dir), _) => Some(dir.join("lookalike.summary.json")),
            (None, Some(out)) => Some(sibling(out, "summary.json")),
            _ => None,
        },
        Command::Experiment(_) | Command::Check(_) | Command::Oracle(_) | Command::Preset(_) => {
            None
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let mut summary = summary_path(&cli.command);
    let res = match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Check(a) => check(&a.spec),
        Command::Fit(a) => fit(a),
        Command::Path(a) => path(a),
        Command::Roc(a) => roc(a),
        Command::Stars(a) => stars(cli, a),
        Command::Oracle(a) => oracle(cli, a),
        Command::Prepare(a) => prepare_cmd(a),
        Command::Experiment(a) => experiment(&a.manifest, &mut summary),
        Command::Preset(a) => preset(a),
    };
    match res {
        Ok((ok, result)) => Outcome {
            ok,
            error: None,
            result,
            summary_path: summary,
        },
        Err(e) => Outcome {
            ok: false,
            error: Some(e.to_string()),
            result: Value::Null,
            summary_path: summary,
        },
    }
}

fn simulate(cli: &Cli, a: &crate::SimulateArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let report = check_normalizability(&spec);
    let cfg = SamplerConfig {
        burn_in: a.burn_in,
        thin: a.thin,
        seed: cli.seed,
        init: if a.random_init {
            Init::Random
        } else {
            Init::Zero
        },
        rows_per_chain: a.rows_per_chain,
        reverse_visit: false,
        force: a.force,
    };
    let data = sample_bdmrf(&spec, a.n as usize, &cfg)?;
    save_dataset(&data, &a.out)?;
    let meta = json!({ "sampler": cfg, "normalizability": report, "rows": data.n_rows(), "columns": data.n_cols() });
    let meta_path = sibling(&a.out, "meta.json");
    write_json(&meta_path, &meta)?;
    log::info!(
        "wrote {} rows x {} columns to {}",
        data.n_rows(),
        data.n_cols(),
        a.out.display()
    );
    Ok((
        true,
        json!({ "data": a.out, "meta": meta_path, "rows": data.n_rows(), "verdict": report.verdict }),
    ))
}

fn check(path: &Path) -> CmdResult {
    let spec = load_spec(path)?;
    let report = check_normalizability(&spec);
    eprintln!("{}", report.summary());
    Ok((report.is_normalizable(), serde_json::to_value(&report)?))
}

fn load_inputs(d: &DataArgs) -> Result<(ModelSpec, Dataset), Box<dyn std::error::Error>> {
    let spec = load_spec(&d.spec)?;
    let data = load_dataset(
        &d.data,
        DatasetReadOptions {
            recode01: d.recode01,
        },
    )?;
    data.check_skeleton(spec.skeleton())?;
    Ok((spec, data))
}

fn rule(r: Rule) -> SymmetrizationRule {
    match r {
        Rule::And => SymmetrizationRule::And,
        Rule::Or => SymmetrizationRule::Or,
    }
}

fn fit_config(s: &SolverArgs, lambda: f64, mu: f64) -> FitConfig {
    FitConfig {
        lambda,
        mu,
        max_iter: s.max_iter,
        tol: s.tol,
        standardize: s.standardize,
        project_nonpositive: s.project_nonpositive,
        ..FitConfig::default()
    }
}

fn build_grid(g: &GridArgs, data: &Dataset, spec: &ModelSpec) -> Result<LambdaGrid, bdmrf::Error> {
    let mut grid = lambda_grid(data, spec.skeleton(), g.k, g.ratio)?;
    if let Some(c) = g.coupling {
        grid.coupling = c;
        grid.mus = grid.lambdas.iter().map(|l| l * c).collect();
    }
    Ok(grid)
}

fn edge_lists(est: &GraphEstimate, spec: &ModelSpec) -> Value {
    let name = |i: usize| spec.skeleton().node(i).name.clone();
    json!({
        "lambda": est.lambda,
        "mu": est.mu,
        "intra": est.intra.iter().map(|(&(a, b), &w)| json!([name(a), name(b), w])).collect::<Vec<_>>(),
        "inter": est.inter.iter().map(|(&(t, s), &w)| json!([name(t), name(s), w])).collect::<Vec<_>>(),
        "warnings": est.warnings,
    })
}

fn fit(a: &crate::FitArgs) -> CmdResult {
    let (spec, data) = load_inputs(&a.data)?;
    let mu = a.mu.unwrap_or(a.lambda * mu_coupling(spec.skeleton()));
    let cfg = fit_config(&a.solver, a.lambda, mu);
    let est = fit_graph(&data, spec.skeleton(), &cfg, rule(a.solver.rule))?;
    let diag = save_fit(&est, spec.skeleton(), &a.out)?;
    Ok((
        true,
        json!({
            "out": a.out, "diagnostics": diag, "lambda": a.lambda, "mu": mu,
            "intra_edges": est.intra.len(), "inter_edges": est.inter.len(),
            "unconverged": est.node_fits.iter().filter(|f| !f.converged).count(),
        }),
    ))
}

fn path(a: &crate::PathArgs) -> CmdResult {
    let (spec, data) = load_inputs(&a.data)?;
    let grid = build_grid(&a.grid, &data, &spec)?;
    let base = fit_config(&a.solver, 0.0, 0.0);
    let path = fit_path(&data, spec.skeleton(), &grid, &base, rule(a.solver.rule))?;
    let doc = json!({
        "format_version": bdmrf::graph::SPEC_FORMAT_VERSION,
        "grid": grid,
        "points": path.iter().map(|e| edge_lists(e, &spec)).collect::<Vec<_>>(),
    });
    write_json(&a.out, &doc)?;
    Ok((
        true,
        json!({ "out": a.out, "points": path.len(), "lambda_max": grid.lambda_max }),
    ))
}

fn roc(a: &crate::RocArgs) -> CmdResult {
    let truth = load_spec(&a.truth)?;
    let data = load_dataset(
        &a.data,
        DatasetReadOptions {
            recode01: a.recode01,
        },
    )?;
    data.check_skeleton(truth.skeleton())?;
    let grid = build_grid(&a.grid, &data, &truth)?;
    let base = fit_config(&a.solver, 0.0, 0.0);
    let path = fit_path(&data, truth.skeleton(), &grid, &base, rule(a.solver.rule))?;
    let class = match a.class {
        Class::Pooled => EdgeClass::Pooled,
        Class::Intra => EdgeClass::Intra,
        Class::Inter => EdgeClass::Inter,
    };
    let curve = roc_class(&truth, &path, class)?;
    let mut rows = recovery_summary(&truth, &path)?;
    if class != EdgeClass::Pooled {
        for r in &mut rows {
            let c = if class == EdgeClass::Intra {
                r.intra
            } else {
                r.inter
            };
            r.fpr = c.fpr();
            r.tpr = c.tpr();
            r.precision = c.precision();
            r.recall = c.recall();
            r.f1 = c.f1();
            r.exact = c.exact();
        }
    }
    write_roc_csv(
        std::io::BufWriter::new(fs::File::create(&a.out)?),
        &rows,
        curve.auc,
    )?;
    if let Some(svg) = &a.svg {
        fs::write(
            svg,
            roc_svg(&[(format!("n={}", data.n_rows()), curve.points.clone())]),
        )?;
    }
    Ok((
        true,
        json!({ "out": a.out, "auc": curve.auc, "points": curve.points.len() }),
    ))
}

fn stars(cli: &Cli, a: &crate::StarsArgs) -> CmdResult {
    let (spec, data) = load_inputs(&a.data)?;
    let grid = build_grid(&a.grid, &data, &spec)?;
    let base = fit_config(&a.solver, 0.0, 0.0);
    let cfg = StarsConfig {
        beta: a.beta,
        subsamples: a.subsamples,
        subsample_size: a.subsample_size,
        seed: cli.seed,
        rule: rule(a.solver.rule),
    };
    let sel = stars_select(&data, spec.skeleton(), &grid, &base, &cfg)?;
    let est = fit_graph(
        &data,
        spec.skeleton(),
        &fit_config(&a.solver, sel.lambda, sel.mu),
        cfg.rule,
    )?;
    let diag = save_fit(&est, spec.skeleton(), &a.out)?;
    let report_path = sibling(&a.out, "stars.json");
    write_json(&report_path, &json!({ "grid": grid, "selection": sel }))?;
    Ok((
        true,
        json!({
            "out": a.out, "diagnostics": diag, "stars": report_path,
            "lambda": sel.lambda, "mu": sel.mu, "index": sel.index, "warning": sel.warning,
            "intra_edges": est.intra.len(), "inter_edges": est.inter.len(),
        }),
    ))
}

fn oracle(cli: &Cli, a: &crate::OracleArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let exact = enumerate_exact(&spec)?;
    match a.against {
        crate::Against::Formula => {
            let dev = exact.max_conditional_deviation(&spec)?;
            let pass = dev < FORMULA_TOL;
            eprintln!(
                "max conditional deviation {dev:.3e} (tolerance {FORMULA_TOL:e}): {}",
                verdict(pass)
            );
            Ok((
                pass,
                json!({ "against": "formula", "states": exact.states.len(), "max_deviation": dev, "tolerance": FORMULA_TOL, "pass": pass }),
            ))
        }
        crate::Against::Gibbs => {
            let cfg = SamplerConfig {
                burn_in: a.burn_in,
                ..SamplerConfig::with_seed(cli.seed)
            };
            let data = sample_bdmrf(&spec, a.samples, &cfg)?;
            let tv = exact.tv_distance(&data);
            let pass = tv < GIBBS_TV_TOL;
            eprintln!(
                "total variation {tv:.4} over {} rows (tolerance {GIBBS_TV_TOL}): {}",
                a.samples,
                verdict(pass)
            );
            Ok((
                pass,
                json!({ "against": "gibbs", "states": exact.states.len(), "samples": a.samples, "tv": tv, "tolerance": GIBBS_TV_TOL, "pass": pass }),
            ))
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn prepare_cmd(a: &crate::PrepareArgs) -> CmdResult {
    if let Some(dir) = &a.write_lookalike {
        fs::create_dir_all(dir)?;
        let (ab, ex) = synthetic_lookalike(LOOKALIKE_SEED);
        fs::write(dir.join("aberrations.csv"), ab)?;
        fs::write(dir.join("expression.csv"), ex)?;
        return Ok((true, json!({ "dir": dir, "seed": LOOKALIKE_SEED })));
    }
    let (Some(ab), Some(ex), Some(out_data), Some(out_spec)) =
        (&a.aberrations, &a.expression, &a.out_data, &a.out_spec)
    else {
        return Err("prepare needs --aberrations, --expression, --out-data and --out-spec".into());
    };
    let cfg = PrepareConfig {
        min_prevalence: a.min_prevalence,
        top_variance: a.top_variance,
        expression_family: match a.expression_family {
            ExprFamily::Tpoisson => ExpressionFamily::Tpoisson,
            ExprFamily::Poisson => ExpressionFamily::Poisson,
        },
    };
    let prepared = prepare(fs::File::open(ab)?, fs::File::open(ex)?, &cfg)?;
    save_dataset(&prepared.data, out_data)?;
    save_spec(&prepared.skeleton, out_spec)?;
    Ok((
        true,
        json!({ "data": out_data, "spec": out_spec, "report": prepared.report }),
    ))
}

fn experiment(manifest: &Path, summary: &mut Option<PathBuf>) -> CmdResult {
    let m = load_manifest(manifest)?;
    *summary = Some(m.output.join("run.summary.json"));
    let res = run_experiment(&m)?;
    for s in &res.sizes {
        match s.mean_auc {
            Some(a) => log::info!("n={}: mean AUC {a:.4} over {} runs", s.n, s.completed),
            None => log::warn!("n={}: no completed runs", s.n),
        }
    }
    Ok((
        res.failures == 0,
        json!({ "output": m.output, "failures": res.failures, "sizes": res.sizes }),
    ))
}

fn preset(a: &crate::PresetArgs) -> CmdResult {
    if a.list {
        return Ok((true, json!({ "presets": preset_names() })));
    }
    let (Some(name), Some(out)) = (&a.name, &a.out) else {
        return Err("preset needs --name and --out".into());
    };
    let spec = preset_by_name(name, a.side)?;
    save_spec(&spec, out)?;
    let report = check_normalizability(&spec);
    Ok((
        true,
        json!({ "out": out, "nodes": spec.n_nodes(), "verdict": report.verdict, "reasons": report.reasons }),
    ))
}
