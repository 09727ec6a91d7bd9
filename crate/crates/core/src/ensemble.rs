//! Monte Carlo path ensembles on a time grid.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::io::{fmt_f64, read_numeric_csv, write_numeric_csv};

/// Row-major `n × m` array of path values.
#[derive(Clone, Debug, PartialEq)]
pub struct PathArray {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl PathArray {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m {
            return invalid(format!("path array of {n}×{m} needs {} values, got {}", n * m, data.len()));
        }
        Ok(Self { n, m, data })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, data: vec![0.0; n * m] }
    }

    pub fn n_paths(&self) -> usize {
        self.n
    }

    pub fn n_times(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.m)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, m: self.m, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

fn write_paths<W: Write>(grid: &TimeGrid, paths: &PathArray, out: W) -> Result<()> {
    let header: Vec<String> = grid.points().iter().map(|t| fmt_f64(*t)).collect();
    write_numeric_csv(out, &header, paths.rows().map(|r| r.to_vec()))
}

fn read_paths<R: Read>(input: R) -> Result<(TimeGrid, PathArray)> {
    let (times, rows) = read_numeric_csv(input)?;
    let grid = TimeGrid::from_points(times)?;
    let m = grid.len();
    let n = rows.len();
    let data = rows.into_iter().flatten().collect();
    Ok((grid, PathArray::new(n, m, data)?))
}

/// Sample of copula-process paths; every entry lies in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct CopulaEnsemble {
    grid: TimeGrid,
    paths: PathArray,
    pub seed: u64,
    pub model: String,
}

impl CopulaEnsemble {
    pub fn new(grid: TimeGrid, paths: PathArray, seed: u64, model: impl Into<String>) -> Result<Self> {
        if paths.n_times() != grid.len() {
            return invalid("copula paths do not match the grid size");
        }
        if let Some(x) = paths.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return invalid(format!("copula value {x} outside [0, 1]"));
        }
        Ok(Self { grid, paths, seed, model: model.into() })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> &PathArray {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.n_paths()
    }

    pub fn n_times(&self) -> usize {
        self.paths.n_times()
    }

    /// CSV: first row the grid times, then one row per path.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_paths(&self.grid, &self.paths, out)
    }

    pub fn read_csv<R: Read>(input: R, seed: u64, model: &str) -> Result<Self> {
        let (grid, paths) = read_paths(input)?;
        Self::new(grid, paths, seed, model)
    }
}

/// Sample of real-valued process paths.
#[derive(Clone, Debug)]
pub struct ProcessEnsemble {
    grid: TimeGrid,
    paths: PathArray,
    pub marginal_tag: Option<String>,
    pub copula_tag: Option<String>,
}

impl ProcessEnsemble {
    pub fn new(grid: TimeGrid, paths: PathArray) -> Result<Self> {
        if paths.n_times() != grid.len() {
            return invalid("process paths do not match the grid size");
        }
        if paths.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure("process ensemble has non-finite entries".into()));
        }
        Ok(Self { grid, paths, marginal_tag: None, copula_tag: None })
    }

    pub fn with_tags(mut self, marginal: Option<String>, copula: Option<String>) -> Self {
        self.marginal_tag = marginal;
        self.copula_tag = copula;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> &PathArray {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.n_paths()
    }

    pub fn n_times(&self) -> usize {
        self.paths.n_times()
    }

    /// Entrywise affine image `c + k·X`, keeping tags.
    pub fn affine(&self, shift: f64, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            paths: self.paths.map(|x| shift + factor * x),
            marginal_tag: None,
            copula_tag: self.copula_tag.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_paths(&self.grid, &self.paths, out)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (grid, paths) = read_paths(input)?;
        Self::new(grid, paths)
    }

    /// Checks that two ensembles can be compared path by path.
    pub fn check_coupled(&self, other: &ProcessEnsemble) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return invalid("ensembles live on different grids");
        }
        if self.n_paths() != other.n_paths() {
            return invalid(format!(
                "ensembles have different path counts ({} vs {})",
                self.n_paths(),
                other.n_paths()
            ));
        }
        Ok(())
    }
}
