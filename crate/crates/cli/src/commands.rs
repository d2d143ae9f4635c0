use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use esq_core::formats::{self, SummaryRow};
use esq_core::pce::PcExpansion;
use esq_core::workflow::{
    self, compare, fit_degree, fit_degree_with_values, fit_metadata, ratio_tag, resolve_oracle,
    select_rows, sobol_study, write_file, FitRun, Oracle, RunConfig, Target,
};
use esq_core::{Model, Recurrence};

use crate::{Cli, Command};

/// A problem with the command line or the configuration file.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| config_error(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.global.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("esq-out"));
    fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    Ok((cfg, out))
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Reproduce { target, trials } = &cli.command {
        return reproduce(cli, target, *trials);
    }
    let (mut cfg, out) = load_config(cli)?;
    match &cli.command {
        Command::Fit {
            emit_points,
            resume,
            oracle,
        } => {
            if let Some(path) = oracle {
                cfg.oracle.path = Some(path.clone());
            }
            if *emit_points {
                emit(&cfg, &out)
            } else {
                fit(&cfg, &out, resume.as_deref())
            }
        }
        Command::Compare { oracle } => {
            if let Some(path) = oracle {
                cfg.oracle.path = Some(path.clone());
            }
            run_compare(&cfg, &out)
        }
        Command::Sobol { coefficients, oracle } => {
            if let Some(path) = oracle {
                cfg.oracle.path = Some(path.clone());
            }
            sobol(&cfg, &out, coefficients.as_deref())
        }
        Command::Grid => grid(&cfg, &out),
        Command::Select => select(&cfg, &out),
        Command::Reproduce { .. } => unreachable!(),
    }
}

fn single_degree(cfg: &RunConfig, what: &str) -> Result<usize> {
    match cfg.degrees.as_slice() {
        [k] => Ok(*k),
        _ => Err(config_error(format!("{what} needs exactly one degree in the config"))),
    }
}

fn write_selection_files(cfg: &RunConfig, out: &Path, k: usize) -> Result<Vec<PathBuf>> {
    let problem = cfg.problem(k).context("step 1-2 (basis and grid)")?;
    let selection = select_rows(&problem, cfg.method, cfg.seed).context("step 3 (row selection)")?;
    if !selection.ties.is_empty() {
        log::info!("k = {k}: pivot ties at steps {:?}", selection.ties);
    }
    let rows = selection.selected_rows();
    let points: Vec<Vec<f64>> = rows.iter().map(|&r| cfg.model.to_physical(problem.grid.point(r))).collect();
    let sel_path = out.join(format!("selection_k{k}.csv"));
    write_file(&sel_path, |w| formats::write_selection_csv(w, rows))?;
    let pts_path = out.join(format!("points_k{k}.csv"));
    write_file(&pts_path, |w| formats::write_points_csv(w, rows, &points))?;
    Ok(vec![sel_path, pts_path])
}

fn emit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let k = single_degree(cfg, "fit --emit-points")?;
    let files = write_selection_files(cfg, out, k)?;
    println!(
        "evaluate the model at the points in {} and resume with `fit --resume <values.csv>`",
        files[1].display()
    );
    Ok(())
}

/// Missing input files count as missing external data.
fn open(path: &Path) -> Result<File> {
    File::open(path)
        .map_err(|e| anyhow::Error::from(esq_core::Error::Io(e)).context(format!("reading {}", path.display())))
}

fn oracle_for(cfg: &RunConfig) -> Result<Option<Oracle>> {
    resolve_oracle(cfg, &cfg.model).context("oracle coefficients")
}

fn write_fit_outputs(cfg: &RunConfig, out: &Path, run: &FitRun) -> Result<Vec<SummaryRow>> {
    let k = run.problem.k;
    let rows = run.selection.selected_rows();
    write_file(&out.join(format!("selection_k{k}.csv")), |w| formats::write_selection_csv(w, rows))?;
    write_file(&out.join(format!("points_k{k}.csv")), |w| {
        formats::write_points_csv(w, rows, &run.physical_points(&cfg.model))
    })?;
    write_file(&out.join(format!("values_k{k}.csv")), |w| formats::write_values_csv(w, &run.evaluations.0))?;
    let mut summary = Vec::new();
    for fit in &run.fits {
        let doc = formats::coefficients_json(&fit.report, fit_metadata(cfg, fit, run.evaluations.len()));
        let path = out.join(format!("coefficients_k{k}_{}.json", ratio_tag(fit.ratio)));
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        summary.push(fit.summary(cfg.method));
    }
    Ok(summary)
}

fn fit(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<()> {
    let oracle = oracle_for(cfg)?;
    let mut summary = Vec::new();
    if let Some(path) = resume {
        let k = single_degree(cfg, "fit --resume")?;
        let file = open(path)?;
        let values = formats::read_values_csv(file, path)?;
        let run = fit_degree_with_values(cfg, k, &values, oracle.as_ref()).context("step 4-5 (prune and solve)")?;
        summary.extend(write_fit_outputs(cfg, out, &run)?);
    } else {
        for &k in &cfg.degrees {
            let run = fit_degree(cfg, &cfg.model, k, oracle.as_ref()).with_context(|| format!("fit at k = {k}"))?;
            log::info!("k = {k}: {} model evaluations", run.evaluations.len());
            summary.extend(write_fit_outputs(cfg, out, &run)?);
        }
    }
    write_file(&out.join("summary.csv"), |w| formats::write_summary_csv(w, &summary))?;
    if let Some(o) = &oracle {
        let doc = o.to_json(serde_json::Map::new());
        fs::write(out.join("oracle.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(())
}

fn run_compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let oracle = oracle_for(cfg)?;
    if oracle.is_none() {
        log::warn!("no oracle: coefficient errors are left empty");
    }
    let cmp = compare(cfg, &cfg.model, oracle.as_ref())?;
    if cmp.rank_deficient_trials > 0 {
        log::warn!(
            "{} randomized fits were numerically rank deficient and solved in the minimum-norm sense",
            cmp.rank_deficient_trials
        );
    }
    write_file(&out.join("compare.csv"), |w| formats::write_compare_csv(w, &cmp.rows))?;
    let all: Vec<SummaryRow> = cmp.effective.iter().chain(&cmp.trials).cloned().collect();
    write_file(&out.join("summary.csv"), |w| formats::write_summary_csv(w, &all))?;
    Ok(())
}

fn sobol(cfg: &RunConfig, out: &Path, coefficients: Option<&Path>) -> Result<()> {
    if let Some(path) = coefficients {
        let file = open(path)?;
        let (set, x) = formats::read_coefficients_json(file, path)?;
        let recs = (0..set.dim())
            .map(|k| Recurrence::new(cfg.family, set.max_entry(k)))
            .collect();
        let report = PcExpansion::new(set, x, recs)?.sobol_indices(cfg.sobol_order)?;
        if !report.is_defined() {
            log::warn!("{}", esq_core::Error::ZeroVariance);
        }
        return write_file(&out.join("sobol.csv"), |w| formats::write_sobol_csv(w, &report)).map_err(Into::into);
    }

    let oracle = oracle_for(cfg)?;
    if let Some(o) = &oracle {
        let report = o.expansion(cfg.family)?.sobol_indices(cfg.sobol_order)?;
        write_file(&out.join("sobol_reference.csv"), |w| formats::write_sobol_csv(w, &report))?;
    }
    for &k in &cfg.degrees {
        let study = sobol_study(cfg, &cfg.model, k, oracle.as_ref(), true)?;
        if !study.effective.is_defined() {
            log::warn!("k = {k}: {}", esq_core::Error::ZeroVariance);
        }
        write_file(&out.join(format!("sobol_k{k}.csv")), |w| formats::write_sobol_csv(w, &study.effective))?;
        write_file(&out.join(format!("sobol_trials_k{k}.csv")), |w| {
            formats::write_sobol_trials_csv(w, &study.first_order_rows())
        })?;
    }
    Ok(())
}

fn grid(cfg: &RunConfig, out: &Path) -> Result<()> {
    for &k in &cfg.degrees {
        let p = cfg.points_per_dim.resolve(cfg.model.dim(), k)?;
        let grid = workflow::grid_for(cfg.family, &p)?;
        let all: Vec<usize> = (0..grid.len()).collect();
        let points: Vec<Vec<f64>> = all.iter().map(|&i| cfg.model.to_physical(grid.point(i))).collect();
        write_file(&out.join(format!("grid_k{k}.csv")), |w| formats::write_points_csv(w, &all, &points))?;
        write_file(&out.join(format!("weights_k{k}.csv")), |w| {
            writeln!(w, "index,weight")?;
            for (i, wt) in grid.weights().iter().enumerate() {
                writeln!(w, "{i},{}", formats::fmt_f64(*wt))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn select(cfg: &RunConfig, out: &Path) -> Result<()> {
    for &k in &cfg.degrees {
        write_selection_files(cfg, out, k)?;
    }
    Ok(())
}

fn reproduce(cli: &Cli, target: &str, trials: usize) -> Result<()> {
    let target: Target = target.parse().map_err(|e: esq_core::Error| config_error(e.to_string()))?;
    if trials == 0 {
        return Err(config_error("--trials must be at least 1"));
    }
    if cli.global.config.is_some() {
        log::warn!("reproduce uses the fixed configuration of {}; --config is ignored", target.name());
    }
    let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("esq-out"));
    let seed = cli.global.seed.unwrap_or(0);
    let files = workflow::reproduce(target, &out, seed, trials)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
