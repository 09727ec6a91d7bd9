//! Karhunen–Loève expansion of an ensemble on a weighted grid.
//!
//! The covariance operator `(Cf)(s) = ∫ C(s,t) f(t) dt` is discretised with
//! the grid's trapezoid weights `W` and solved through the symmetric matrix
//! `W^{1/2} C W^{1/2}`, whose eigenvectors map back to weight-orthonormal
//! eigenfunctions.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{PathArray, ProcessEnsemble};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::io::write_numeric_csv;

#[derive(Clone, Debug, Serialize)]
pub struct KLDecomposition {
    pub grid: TimeGrid,
    /// Nonincreasing, clamped at 0.
    pub eigenvalues: Vec<f64>,
    /// Column `i` holds `e_i` on the grid.
    #[serde(skip)]
    pub eigenfunctions: DMatrix<f64>,
    pub mean: Vec<f64>,
}

fn column_means(paths: &PathArray) -> Vec<f64> {
    let (n, m) = (paths.n_paths(), paths.n_times());
    let mut mean = vec![0.0; m];
    for row in paths.rows() {
        for (s, x) in mean.iter_mut().zip(row) {
            *s += x;
        }
    }
    mean.iter_mut().for_each(|s| *s /= n as f64);
    mean
}

/// Unbiased sample covariance `(1/(n−1)) Σ (X_s − X̄_s)(X_t − X̄_t)`,
/// symmetrised.
pub fn empirical_covariance(ens: &ProcessEnsemble) -> Result<DMatrix<f64>> {
    let (n, m) = (ens.n_paths(), ens.n_times());
    if n < 2 {
        return invalid(format!("covariance needs at least 2 paths, got {n}"));
    }
    let mean = column_means(ens.paths());
    let centered = DMatrix::from_fn(n, m, |i, j| ens.paths().get(i, j) - mean[j]);
    let c = centered.tr_mul(&centered) / (n - 1) as f64;
    Ok((&c + c.transpose()) * 0.5)
}

/// Eigendecomposition of the covariance operator with kernel `cov`, for a
/// process with zero mean.
pub fn kl_expand(cov: &DMatrix<f64>, grid: &TimeGrid) -> Result<KLDecomposition> {
    let m = grid.len();
    if cov.nrows() != m || cov.ncols() != m {
        return invalid(format!("covariance is {}x{}, grid has {m} points", cov.nrows(), cov.ncols()));
    }
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-8 * scale {
        return invalid(format!("covariance is not symmetric (max asymmetry {asym:e})"));
    }
    if grid.weights().iter().any(|&w| w <= 0.0) {
        return invalid("the grid needs positive quadrature weights");
    }
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]) * sw[i] * sw[j]);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = -1e-10 * top.max(1.0);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = DMatrix::zeros(m, m);
    for (k, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        if lam < floor {
            return Err(Error::InvalidArgument(format!(
                "covariance is not positive semidefinite (eigenvalue {lam:e})"
            )));
        }
        eigenvalues.push(lam.max(0.0));
        for j in 0..m {
            eigenfunctions[(j, k)] = eig.eigenvectors[(j, i)] / sw[j];
        }
    }
    Ok(KLDecomposition { grid: grid.clone(), eigenvalues, eigenfunctions, mean: vec![0.0; m] })
}

/// Expansion of the ensemble about its sample mean.
pub fn fit_kl(ens: &ProcessEnsemble) -> Result<KLDecomposition> {
    let mut kl = kl_expand(&empirical_covariance(ens)?, ens.grid())?;
    kl.mean = column_means(ens.paths());
    Ok(kl)
}

fn check_keep(kl: &KLDecomposition, n_keep: usize) -> Result<()> {
    if n_keep > kl.eigenvalues.len() {
        invalid(format!("n_keep = {n_keep} exceeds the number of eigenpairs {}", kl.eigenvalues.len()))
    } else {
        Ok(())
    }
}

fn check_grid(ens: &ProcessEnsemble, kl: &KLDecomposition) -> Result<()> {
    if ens.grid().same_as(&kl.grid) {
        Ok(())
    } else {
        invalid("ensemble and decomposition live on different grids")
    }
}

/// Scores `Z_i = ⟨X − mean, e_i⟩` for `i < n_keep`, one row per path.
pub fn scores(ens: &ProcessEnsemble, kl: &KLDecomposition, n_keep: usize) -> Result<PathArray> {
    check_keep(kl, n_keep)?;
    check_grid(ens, kl)?;
    let (m, w, e) = (ens.n_times(), kl.grid.weights(), &kl.eigenfunctions);
    let data: Vec<f64> = ens
        .paths()
        .as_slice()
        .par_chunks(m)
        .flat_map_iter(|row| {
            (0..n_keep).map(move |i| (0..m).map(|j| w[j] * (row[j] - kl.mean[j]) * e[(j, i)]).sum::<f64>())
        })
        .collect();
    PathArray::new(ens.n_paths(), n_keep, data)
}

/// Reconstruction from the first `n_keep` eigenfunctions, mean re-added.
pub fn truncate(ens: &ProcessEnsemble, kl: &KLDecomposition, n_keep: usize) -> Result<ProcessEnsemble> {
    let z = scores(ens, kl, n_keep)?;
    let m = ens.n_times();
    let e = &kl.eigenfunctions;
    let mut data = vec![0.0; ens.n_paths() * m];
    data.par_chunks_mut(m).zip(z.as_slice().par_chunks(n_keep.max(1))).for_each(|(out, zi)| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = kl.mean[j] + (0..n_keep).map(|i| zi[i] * e[(j, i)]).sum::<f64>();
        }
    });
    let paths = PathArray::new(ens.n_paths(), m, data)?;
    let out = ProcessEnsemble::new(ens.grid().clone(), paths)?;
    Ok(out.with_tags(None, ens.copula_tag.as_ref().map(|c| format!("kl_truncated({c}, n={n_keep})"))))
}

/// `Σ_{i > n_keep} λ_i`
pub fn tail_energy(kl: &KLDecomposition, n_keep: usize) -> Result<f64> {
    check_keep(kl, n_keep)?;
    Ok(kl.eigenvalues[n_keep..].iter().sum())
}

impl KLDecomposition {
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Weighted projector `P = E_n E_nᵀ W` onto the first `n_keep`
    /// eigenfunctions, acting on grid vectors.
    pub fn projector(&self, n_keep: usize) -> Result<DMatrix<f64>> {
        check_keep(self, n_keep)?;
        let e = self.eigenfunctions.columns(0, n_keep);
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(self.grid.weights()));
        Ok(e * e.transpose() * w)
    }

    pub fn write_eigenvalues_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.eigenvalues.iter().enumerate().map(|(i, l)| vec![(i + 1) as f64, *l]);
        write_numeric_csv(out, &["index", "lambda"], rows)
    }
}
