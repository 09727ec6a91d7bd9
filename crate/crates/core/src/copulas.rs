//! Samplers for copula processes on a time grid.
//!
//! Each sampler returns a [`CopulaEnsemble`] whose columns are
//! Uniform[0, 1]. Path `i` is drawn from the stream `(seed, i)`, so the
//! output does not depend on how rayon schedules the paths.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{CopulaEnsemble, PathArray, ProcessEnsemble};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::marginals::{check_hurst, norm_cdf, Mixing, MixtureTable, MIXTURE_NODES};
use crate::rng::{path_rng, PathRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaModel {
    Independence,
    Comonotone,
    /// Copula of fractional Brownian motion started at `grid.a > 0`.
    Fbm { hurst: f64 },
    /// Copula of `S·V`, `V` the unit-variance normalised fBm.
    Elliptical { hurst: f64, mixing: Mixing },
    Clayton { theta: f64 },
}

impl CopulaModel {
    pub fn sample(&self, grid: &TimeGrid, n: usize, seed: u64) -> Result<CopulaEnsemble> {
        match self {
            CopulaModel::Independence => sample_independence(grid, n, seed),
            CopulaModel::Comonotone => sample_comonotone(grid, n, seed),
            CopulaModel::Fbm { hurst } => sample_fbm_copula(grid, *hurst, n, seed),
            CopulaModel::Elliptical { hurst, mixing } => sample_elliptical_copula(grid, *hurst, mixing, n, seed),
            CopulaModel::Clayton { theta } => sample_archimedean_clayton(grid, *theta, n, seed),
        }
    }

    /// Parameter checks without sampling.
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        match self {
            CopulaModel::Independence | CopulaModel::Comonotone => Ok(()),
            CopulaModel::Fbm { hurst } => check_fbm_grid(grid, *hurst),
            CopulaModel::Elliptical { hurst, mixing } => {
                check_fbm_grid(grid, *hurst)?;
                mixing.validate()
            }
            CopulaModel::Clayton { theta } => check_theta(*theta),
        }
    }

    pub fn tag(&self) -> String {
        format!("{self:?}")
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        invalid("ensemble size must be at least 1")
    } else {
        Ok(())
    }
}

/// Fills an `n × m` array path by path from per-path streams.
pub(crate) fn fill_paths<F>(n: usize, m: usize, seed: u64, f: F) -> PathArray
where
    F: Fn(&mut PathRng, &mut [f64]) + Sync,
{
    let mut paths = PathArray::zeros(n, m);
    paths
        .as_mut_slice()
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = path_rng(seed, i as u64);
            f(&mut rng, row);
        });
    paths
}

pub fn sample_independence(grid: &TimeGrid, n: usize, seed: u64) -> Result<CopulaEnsemble> {
    check_count(n)?;
    let paths = fill_paths(n, grid.len(), seed, |rng, row| {
        for x in row.iter_mut() {
            *x = rng.random::<f64>();
        }
    });
    CopulaEnsemble::new(grid.clone(), paths, seed, CopulaModel::Independence.tag())
}

pub fn sample_comonotone(grid: &TimeGrid, n: usize, seed: u64) -> Result<CopulaEnsemble> {
    check_count(n)?;
    let paths = fill_paths(n, grid.len(), seed, |rng, row| {
        let u = rng.random::<f64>();
        row.fill(u);
    });
    CopulaEnsemble::new(grid.clone(), paths, seed, CopulaModel::Comonotone.tag())
}

/// `E[B_s B_t] = ½(s^{2H} + t^{2H} − |t − s|^{2H})` on the grid.
pub fn fbm_covariance(grid: &TimeGrid, hurst: f64) -> DMatrix<f64> {
    let t = grid.points();
    let two_h = 2.0 * hurst;
    DMatrix::from_fn(t.len(), t.len(), |i, j| {
        0.5 * (t[i].powf(two_h) + t[j].powf(two_h) - (t[i] - t[j]).abs().powf(two_h))
    })
}

/// Lower Cholesky factor, retrying with diagonal jitter
/// `1e-12·trace/m`, then ×10 twice.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = cov.nrows();
    let base = 1e-12 * cov.trace() / m as f64;
    let jitters = [0.0, base, 10.0 * base, 100.0 * base];
    for jitter in jitters {
        let mut a = cov.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            return Ok(ch.l());
        }
    }
    Err(Error::NumericFailure(
        "covariance is not positive definite even after jitter".into(),
    ))
}

/// Dense lower-triangular factor in row-major form for fast path synthesis.
struct LowerFactor {
    m: usize,
    rows: Vec<f64>,
}

impl LowerFactor {
    fn new(l: &DMatrix<f64>) -> Self {
        let m = l.nrows();
        let mut rows = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                rows[i * m + j] = l[(i, j)];
            }
        }
        Self { m, rows }
    }

    /// Writes `L z` into `out`, drawing `z` from `rng`.
    fn draw(&self, rng: &mut PathRng, z: &mut Vec<f64>, out: &mut [f64]) {
        z.clear();
        z.extend((0..self.m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.rows[i * self.m..i * self.m + i + 1];
            *o = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

fn check_fbm_grid(grid: &TimeGrid, hurst: f64) -> Result<()> {
    check_hurst(hurst)?;
    if grid.a() <= 0.0 {
        return invalid(format!("fBm copula needs a grid starting at t0 > 0, got a = {}", grid.a()));
    }
    Ok(())
}

/// Exact fBm paths on the grid via Cholesky factorisation.
pub fn sample_fbm_process(grid: &TimeGrid, hurst: f64, n: usize, seed: u64) -> Result<ProcessEnsemble> {
    check_count(n)?;
    check_hurst(hurst)?;
    let factor = LowerFactor::new(&cholesky_with_jitter(&fbm_covariance(grid, hurst))?);
    let paths = fill_paths(n, grid.len(), seed, |rng, row| {
        let mut z = Vec::with_capacity(row.len());
        factor.draw(rng, &mut z, row);
    });
    Ok(ProcessEnsemble::new(grid.clone(), paths)?
        .with_tags(Some(format!("gaussian(sigma=t^{hurst})")), Some(format!("fbm(H={hurst})"))))
}

/// Copula of fBm: `U_t = Φ(B_t / t^H)`.
pub fn sample_fbm_copula(grid: &TimeGrid, hurst: f64, n: usize, seed: u64) -> Result<CopulaEnsemble> {
    check_count(n)?;
    check_fbm_grid(grid, hurst)?;
    let process = sample_fbm_process(grid, hurst, n, seed)?;
    let scale: Vec<f64> = grid.points().iter().map(|t| t.powf(hurst)).collect();
    let mut data = process.paths().clone().into_vec();
    let m = grid.len();
    data.par_chunks_mut(m).for_each(|row| {
        for (x, s) in row.iter_mut().zip(&scale) {
            *x = norm_cdf(*x / s);
        }
    });
    let paths = PathArray::new(n, m, data)?;
    CopulaEnsemble::new(grid.clone(), paths, seed, CopulaModel::Fbm { hurst }.tag())
}

/// Correlation matrix of fBm on the grid (unit variance per time).
pub fn fbm_correlation(grid: &TimeGrid, hurst: f64) -> DMatrix<f64> {
    let cov = fbm_covariance(grid, hurst);
    let d: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / (d[i] * d[j])
        }
    })
}

/// Elliptical process `Ỹ = S·V` with `V` the unit-variance normalised fBm
/// and `S` drawn once per path from `mixing`.
pub fn sample_elliptical_process(
    grid: &TimeGrid,
    hurst: f64,
    mixing: &Mixing,
    n: usize,
    seed: u64,
) -> Result<ProcessEnsemble> {
    check_count(n)?;
    check_fbm_grid(grid, hurst)?;
    mixing.validate()?;
    let factor = LowerFactor::new(&cholesky_with_jitter(&fbm_correlation(grid, hurst))?);
    let paths = fill_paths(n, grid.len(), seed, |rng, row| {
        let s = mixing.sample(rng);
        let mut z = Vec::with_capacity(row.len());
        factor.draw(rng, &mut z, row);
        for x in row.iter_mut() {
            *x *= s;
        }
    });
    Ok(ProcessEnsemble::new(grid.clone(), paths)?
        .with_tags(Some(format!("scale_mixture({mixing:?})")), Some(format!("elliptical(H={hurst})"))))
}

/// Elliptical copula: `U_t = G(S·V_t)` with `G` the normal scale-mixture CDF
/// evaluated by Gauss–Legendre quadrature over the mixing law.
pub fn sample_elliptical_copula(
    grid: &TimeGrid,
    hurst: f64,
    mixing: &Mixing,
    n: usize,
    seed: u64,
) -> Result<CopulaEnsemble> {
    let process = sample_elliptical_process(grid, hurst, mixing, n, seed)?;
    let table = MixtureTable::new(mixing, MIXTURE_NODES)?;
    let paths = process.paths().map(|x| table.cdf(x));
    let model = CopulaModel::Elliptical { hurst, mixing: mixing.clone() };
    CopulaEnsemble::new(grid.clone(), paths, seed, model.tag())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return invalid(format!("Clayton theta must be positive, got {theta}"));
    }
    Ok(())
}

/// Clayton copula with generator `φ(u) = (u^{−θ} − 1)/θ` via gamma frailty:
/// `U_j = (1 + E_j / M)^{−1/θ}`, `E_j ~ Exp(1)`, `M ~ Gamma(1/θ, 1)`.
pub fn sample_archimedean_clayton(grid: &TimeGrid, theta: f64, n: usize, seed: u64) -> Result<CopulaEnsemble> {
    check_count(n)?;
    check_theta(theta)?;
    let frailty = Gamma::new(1.0 / theta, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let paths = fill_paths(n, grid.len(), seed, |rng, row| {
        let m: f64 = frailty.sample(rng);
        for x in row.iter_mut() {
            let e: f64 = Exp1.sample(rng);
            *x = (-(e / m).ln_1p() / theta).exp();
        }
    });
    CopulaEnsemble::new(grid.clone(), paths, seed, CopulaModel::Clayton { theta }.tag())
}

/// Fraction of paths with `U_{t_j} ≤ u_j` for all `j`.
pub fn empirical_copula_cdf(ens: &CopulaEnsemble, times: &[usize], point: &[f64]) -> Result<f64> {
    if times.len() != point.len() {
        return invalid("times and point must have the same length");
    }
    if let Some(&j) = times.iter().find(|&&j| j >= ens.n_times()) {
        return invalid(format!("time index {j} out of range (m = {})", ens.n_times()));
    }
    if let Some(u) = point.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return invalid(format!("copula argument {u} outside [0, 1]"));
    }
    let hits = ens
        .paths()
        .rows()
        .filter(|row| times.iter().zip(point).all(|(&j, &u)| row[j] <= u))
        .count();
    Ok(hits as f64 / ens.n_paths() as f64)
}
