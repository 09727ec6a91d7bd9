//! Merging a copula ensemble with marginals and extracting it back.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{CopulaEnsemble, PathArray, ProcessEnsemble};
use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::marginals::{Law, Marginal, MarginalFamily};
use crate::quad::integral_or_infinite;
use crate::rng::path_rng;

/// `X_t = F_t^{[-1]}(U_t)` entrywise.
pub fn merge(copula: &CopulaEnsemble, family: &MarginalFamily) -> Result<ProcessEnsemble> {
    let margs = family.on_grid(copula.grid())?;
    let paths = push_through(copula.paths(), &margs);
    Ok(ProcessEnsemble::new(copula.grid().clone(), paths)?
        .with_tags(Some(family.tag()), Some(copula.model.clone())))
}

pub(crate) fn push_through(u: &PathArray, margs: &[Marginal<'_>]) -> PathArray {
    let m = u.n_times();
    let mut data = u.as_slice().to_vec();
    data.par_chunks_mut(m).for_each(|row| {
        for (x, f) in row.iter_mut().zip(margs) {
            *x = f.quantile(*x);
        }
    });
    PathArray::new(u.n_paths(), m, data).expect("shape preserved")
}

/// `U_t = F_t(X_t)`, or the distributional transform when `F_t` has atoms.
///
/// One auxiliary uniform per entry is always drawn from `(aux_seed, path)`,
/// so the stream does not depend on the family.
pub fn extract_copula(process: &ProcessEnsemble, family: &MarginalFamily, aux_seed: u64) -> Result<CopulaEnsemble> {
    let margs = family.on_grid(process.grid())?;
    let m = process.n_times();
    let mut data = process.paths().as_slice().to_vec();
    data.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(aux_seed, i as u64);
        for (x, f) in row.iter_mut().zip(&margs) {
            let v: f64 = rng.random();
            *x = f.distributional_transform(*x, v);
        }
    });
    let paths = PathArray::new(process.n_paths(), m, data)?;
    let model = process.copula_tag.clone().unwrap_or_else(|| "extracted".into());
    CopulaEnsemble::new(process.grid().clone(), paths, aux_seed, model)
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub p: u32,
    /// `∫_T E|X_t|^p dt`, `+∞` when any per-t moment diverges.
    pub integral: f64,
    pub satisfied: bool,
    pub per_t: Vec<f64>,
}

/// `E|X|^p = ∫₀¹ |F^{[-1]}(u)|^p du`, `+∞` when the quantile integral
/// diverges (see [`integral_or_infinite`]).
pub fn absolute_moment(marg: &Marginal<'_>, p: f64) -> f64 {
    if let Law::Empirical { sorted } = marg.law() {
        return sorted.iter().map(|x| x.abs().powf(p)).sum::<f64>() / sorted.len() as f64;
    }
    integral_or_infinite(|u, c| marg.quantile_split(u, c).abs().powf(p))
}

pub fn check_moment_condition(family: &MarginalFamily, grid: &TimeGrid, p: u32) -> Result<MomentReport> {
    if p < 1 {
        return invalid("moment order p must be at least 1");
    }
    let margs = family.on_grid(grid)?;
    let per_t: Vec<f64> = margs.par_iter().map(|f| absolute_moment(f, p as f64)).collect();
    let integral = if per_t.iter().any(|v| v.is_infinite()) {
        f64::INFINITY
    } else {
        grid.integrate_unchecked(&per_t)
    };
    Ok(MomentReport { p, integral, satisfied: integral.is_finite(), per_t })
}
