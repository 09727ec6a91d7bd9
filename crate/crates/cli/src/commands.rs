use std::path::{Path, PathBuf};

use pathcopula::copulas::{sample_elliptical_process, sample_fbm_process};
use pathcopula::kl::{fit_kl, tail_energy, truncate, KLDecomposition};
use pathcopula::robustness::{
    check_assumption, constant_k_parts, evaluate_bound, pareto_elliptical_experiment, AssumptionReport, ConstantK,
};
use pathcopula::rng::derive_seed;
use pathcopula::sklar::{check_moment_condition, merge, MomentReport};
use pathcopula::stats::{ks_pvalue, ks_uniform};
use pathcopula::transport::{coupling_cost, optimal_coupling, pathspace_wasserstein_same_copula};
use pathcopula::{CopulaModel, ProcessEnsemble};
use serde::Serialize;

use crate::config::*;
use crate::error::CliError;
use crate::output::{Outputs, Table};

pub fn simulate(cfg: &SimulateConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let grid = cfg.grid.build("grid")?;
    check_copula(&cfg.copula, &grid, "copula")?;
    check_paths(cfg.n_paths, 1, "n_paths")?;
    let family = cfg.marginal.as_ref().map(|f| f.build("marginal", base)).transpose()?;

    let copula = cfg.copula.sample(&grid, cfg.n_paths, cfg.seed)?;
    out.table("copula", &Table::paths(grid.points(), copula.paths()))?;
    if let Some(family) = family {
        let process = merge(&copula, &family)?;
        out.table("process", &Table::paths(grid.points(), process.paths()))?;
    }
    let pvalues: Vec<f64> = (0..grid.len())
        .map(|j| ks_pvalue(ks_uniform(&copula.paths().column(j)), cfg.n_paths))
        .collect();
    out.note("model", &copula.model);
    out.note("grid", &grid.points());
    out.note("ks_pvalues", &pvalues);
    Ok(())
}

pub fn simulate_inputs(cfg: &SimulateConfig, base: &Path) -> Vec<PathBuf> {
    cfg.marginal.iter().flat_map(|f| f.inputs(base)).collect()
}

pub fn wasserstein(cfg: &WassersteinConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let grid = cfg.grid.build("grid")?;
    check_order(cfg.p, "p")?;
    let a = cfg.a.build("a", base)?;
    let b = cfg.b.build("b", base)?;
    if let Some(mc) = &cfg.monte_carlo {
        check_copula(&mc.copula, &grid, "monte_carlo.copula")?;
        check_paths(mc.n_paths, 2, "monte_carlo.n_paths")?;
    }

    let mut report = pathspace_wasserstein_same_copula(&a, &b, &grid, cfg.p)?;
    if let Some(mc) = &cfg.monte_carlo {
        let copula = mc.copula.sample(&grid, mc.n_paths, cfg.seed)?;
        let (x, y) = optimal_coupling(&copula, &a, &b)?;
        report = report.with_monte_carlo(&coupling_cost(&x, &y, cfg.p as f64)?);
    }
    out.report("wasserstein", &report)?;
    let rows = grid.points().iter().zip(&report.per_t).map(|(t, w)| vec![*t, *w]).collect();
    out.table("per_t", &Table::new(["t", "W_p"], rows))
}

pub fn wasserstein_inputs(cfg: &WassersteinConfig, base: &Path) -> Vec<PathBuf> {
    [cfg.a.inputs(base), cfg.b.inputs(base)].concat()
}

pub fn robustness(cfg: &RobustnessConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    match &cfg.mode {
        RobustnessMode::Experiment(e) => {
            let mut e = e.clone();
            e.seed = cfg.seed;
            e.validate().map_err(|err| CliError::config("mode.experiment", err))?;
            let report = pareto_elliptical_experiment(&e)?;
            out.report("robustness", &report)?;
            let columns = [
                "n_keep",
                "lhs",
                "lhs_std_error",
                "marginal_term",
                "copula_term",
                "copula_distance",
                "K",
                "tail_energy",
                "truncation_error",
                "truncation_error_std_error",
                "closed_form_bound",
                "holds",
                "holds_closed_form",
            ];
            let rows = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n_keep as f64,
                        r.lhs,
                        r.lhs_std_error,
                        r.marginal_term,
                        r.copula_term,
                        r.copula_distance,
                        r.k,
                        r.tail_energy,
                        r.truncation_error,
                        r.truncation_error_std_error,
                        r.closed_form_bound,
                        f64::from(u8::from(r.holds)),
                        f64::from(u8::from(r.holds_closed_form)),
                    ]
                })
                .collect();
            out.table("rows", &Table::new(columns, rows))
        }
        RobustnessMode::Pair(p) => {
            let grid = p.grid.build("mode.pair.grid")?;
            check_paths(p.n_paths, 2, "mode.pair.n_paths")?;
            check_copula(&p.copula, &grid, "mode.pair.copula")?;
            if let Some(m) = &p.copula_y {
                check_copula(m, &grid, "mode.pair.copula_y")?;
            }
            let fx = p.family_x.build("mode.pair.family_x", base)?;
            let fy = p.family_y.build("mode.pair.family_y", base)?;
            p.params.validate().map_err(|e| CliError::config("mode.pair.params", e))?;

            let cx = p.copula.sample(&grid, p.n_paths, derive_seed(cfg.seed, 1))?;
            let cy = match &p.copula_y {
                Some(m) => Some(m.sample(&grid, p.n_paths, derive_seed(cfg.seed, 2))?),
                None => None,
            };
            let x = merge(&cx, &fx)?;
            let y = merge(cy.as_ref().unwrap_or(&cx), &fy)?;
            let report = evaluate_bound(&x, &fx, &y, &fy, &p.params, derive_seed(cfg.seed, 3))?;
            out.report("robustness", &report)
        }
    }
}

pub fn robustness_inputs(cfg: &RobustnessConfig, base: &Path) -> Vec<PathBuf> {
    match &cfg.mode {
        RobustnessMode::Experiment(_) => Vec::new(),
        RobustnessMode::Pair(p) => [p.family_x.inputs(base), p.family_y.inputs(base)].concat(),
    }
}

#[derive(Serialize)]
struct TruncationRow {
    n_keep: usize,
    tail_energy: f64,
    truncation_error: f64,
    truncation_error_std_error: f64,
}

#[derive(Serialize)]
struct KlReport<'a> {
    #[serde(flatten)]
    decomposition: &'a KLDecomposition,
    trace: f64,
    truncation: Vec<TruncationRow>,
}

fn check_hurst(h: f64, key: &str) -> Result<(), CliError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(CliError::config(key, format!("Hurst index must lie in (0, 1), got {h}")));
    }
    Ok(())
}

fn kl_source(source: &ProcessSource, seed: u64, base: &Path) -> Result<ProcessEnsemble, CliError> {
    Ok(match source {
        ProcessSource::Fbm { grid, n_paths, hurst } => {
            let grid = grid.build("source.fbm.grid")?;
            check_paths(*n_paths, 2, "source.fbm.n_paths")?;
            check_hurst(*hurst, "source.fbm.hurst")?;
            sample_fbm_process(&grid, *hurst, *n_paths, seed)?
        }
        ProcessSource::Elliptical { grid, n_paths, hurst, mixing } => {
            let grid = grid.build("source.elliptical.grid")?;
            check_paths(*n_paths, 2, "source.elliptical.n_paths")?;
            let model = CopulaModel::Elliptical { hurst: *hurst, mixing: mixing.clone() };
            check_copula(&model, &grid, "source.elliptical")?;
            sample_elliptical_process(&grid, *hurst, mixing, *n_paths, seed)?
        }
        ProcessSource::Merged { grid, n_paths, copula, marginal } => {
            let grid = grid.build("source.merged.grid")?;
            check_paths(*n_paths, 2, "source.merged.n_paths")?;
            check_copula(copula, &grid, "source.merged.copula")?;
            let family = marginal.build("source.merged.marginal", base)?;
            merge(&copula.sample(&grid, *n_paths, seed)?, &family)?
        }
        ProcessSource::Csv { path } => {
            let ens = read_process(&base.join(path), "source.csv.path")?;
            check_paths(ens.n_paths(), 2, "source.csv.path (rows)")?;
            ens
        }
    })
}

pub fn klexpand(cfg: &KlConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let ens = kl_source(&cfg.source, cfg.seed, base)?;
    if let Some(n) = cfg.n_keep.iter().find(|&&n| n > ens.n_times()) {
        return Err(CliError::config("n_keep", format!("entries must lie in 0..={}, got {n}", ens.n_times())));
    }

    let kl = fit_kl(&ens)?;
    let mut truncation = Vec::with_capacity(cfg.n_keep.len());
    for &n in &cfg.n_keep {
        let err = coupling_cost(&truncate(&ens, &kl, n)?, &ens, 2.0)?;
        truncation.push(TruncationRow {
            n_keep: n,
            tail_energy: tail_energy(&kl, n)?,
            truncation_error: err.mean,
            truncation_error_std_error: err.std_error,
        });
    }
    let rows = kl.eigenvalues.iter().enumerate().map(|(i, l)| vec![(i + 1) as f64, *l]).collect();
    out.table("eigenvalues", &Table::new(["index", "lambda"], rows))?;
    out.report("kl", &KlReport { decomposition: &kl, trace: kl.trace(), truncation })
}

pub fn klexpand_inputs(cfg: &KlConfig, base: &Path) -> Vec<PathBuf> {
    match &cfg.source {
        ProcessSource::Csv { path } => vec![base.join(path)],
        ProcessSource::Merged { marginal, .. } => marginal.inputs(base),
        _ => Vec::new(),
    }
}

#[derive(Serialize)]
struct CheckReport {
    moment: Option<MomentReport>,
    assumption: Option<AssumptionReport>,
    assumption_passed: Option<bool>,
    constant_k: Option<ConstantK>,
    /// Why `K` is unavailable although the density assumption holds.
    constant_k_error: Option<String>,
}

pub fn check(cfg: &CheckConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let grid = cfg.grid.build("grid")?;
    let family = cfg.family.build("family", base)?;
    if cfg.moment_p.is_none() && cfg.assumption.is_none() {
        return Err(CliError::config("moment_p", "set moment_p, assumption or both"));
    }
    if let Some(p) = cfg.moment_p {
        if p == 0 {
            return Err(CliError::config("moment_p", "must be at least 1"));
        }
    }
    if let Some(params) = &cfg.assumption {
        params.validate().map_err(|e| CliError::config("assumption", e))?;
    }

    let moment = cfg.moment_p.map(|p| check_moment_condition(&family, &grid, p)).transpose()?;
    let mut report = CheckReport { moment, assumption: None, assumption_passed: None, constant_k: None, constant_k_error: None };
    if let Some(params) = &cfg.assumption {
        let a = check_assumption(&family, params, &grid)?;
        report.assumption_passed = Some(a.passed());
        if a.passed() {
            match constant_k_parts(params, &family, &grid) {
                Ok(k) => report.constant_k = Some(k),
                Err(pathcopula::Error::AssumptionViolated(m)) => report.constant_k_error = Some(m),
                Err(e) => return Err(e.into()),
            }
        }
        report.assumption = Some(a);
    }
    out.report("check", &report)
}

pub fn check_inputs(cfg: &CheckConfig, base: &Path) -> Vec<PathBuf> {
    cfg.family.inputs(base)
}
