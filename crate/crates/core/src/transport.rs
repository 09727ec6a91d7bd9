//! Wasserstein distances between marginal laws and between path laws.
//!
//! In one dimension `W_p(F, G)^p = ∫₀¹ |F^{[-1]}(u) − G^{[-1]}(u)|^p du`.
//! When two processes share a copula, pushing that copula through both
//! quantile maps is an optimal coupling, so the path-space distance is the
//! time integral of the one-dimensional ones.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{CopulaEnsemble, ProcessEnsemble};
use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::io::write_numeric_csv;
use crate::marginals::{Law, Marginal, MarginalFamily};
use crate::quad::{gauss_legendre_unit, TanhSinh};
use crate::sklar::merge;
use crate::stats::MeanEstimate;

/// Window `(δ, 1 − δ)` of the quantile integral between continuous laws.
pub const QUANTILE_DELTA: f64 = 1e-9;
pub const MIN_NODES: usize = 16;

pub(crate) fn check_order(p: u32) -> Result<()> {
    if (1..=4).contains(&p) {
        Ok(())
    } else {
        invalid(format!("Wasserstein order p must be in 1..=4, got {p}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportReport {
    pub p: u32,
    pub per_t: Vec<f64>,
    /// `(∫_T W_p^p dt)^{1/p}`
    pub integrated: f64,
    /// `(E‖X − Y‖_{L^p(T)}^p)^{1/p}` over a coupled ensemble, if computed.
    pub mc_coupling_value: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub path_side: f64,
    pub basis_side: f64,
    pub gap: f64,
}

/// `W_p` between two families at time `t`.
///
/// `nodes` is the minimum number of integrand evaluations for continuous
/// laws; the rule refines past it until the relative change is below 1e-10.
pub fn wasserstein1d_quantile(a: &MarginalFamily, b: &MarginalFamily, t: f64, p: u32, nodes: usize) -> Result<f64> {
    check_order(p)?;
    if nodes < MIN_NODES {
        return invalid(format!("quantile quadrature needs at least {MIN_NODES} nodes, got {nodes}"));
    }
    Ok(w_pp(&a.at(t)?, &b.at(t)?, p as f64, nodes).powf(1.0 / p as f64))
}

/// `W_p^p` between two resolved marginals.
pub(crate) fn w_pp(a: &Marginal<'_>, b: &Marginal<'_>, pf: f64, nodes: usize) -> f64 {
    match (a.law(), b.law()) {
        (Law::Empirical { sorted: x }, Law::Empirical { sorted: y }) => empirical_pair(x, y, pf),
        (Law::Empirical { sorted }, _) => empirical_vs_law(sorted, b, pf),
        (_, Law::Empirical { sorted }) => empirical_vs_law(sorted, a, pf),
        _ => {
            let diff = |u: f64, c: f64| a.quantile_split(u, c) - b.quantile_split(u, c);
            let mut cuts = vec![(QUANTILE_DELTA, 1.0 - QUANTILE_DELTA)];
            cuts.extend(crossings(&diff));
            cuts.push((1.0 - QUANTILE_DELTA, QUANTILE_DELTA));
            let rule = TanhSinh { min_evaluations: nodes, ..TanhSinh::default() };
            cuts.windows(2)
                .map(|w| {
                    let ((lo, _), (hi, chi)) = (w[0], w[1]);
                    let len = hi - lo;
                    rule.integrate(|v, vc| diff(lo + len * v, chi + len * vc).abs().powf(pf)).value * len
                })
                .sum()
        }
    }
}

/// Points `(u, 1 − u)` where the two quantile functions cross, located by a
/// scan uniform in logit(u) followed by bisection. The integrand `|Δ|^p` has
/// a kink there, which would otherwise slow the rule down badly.
fn crossings(diff: &impl Fn(f64, f64) -> f64) -> Vec<(f64, f64)> {
    const SCAN: usize = 512;
    let s_max = (1.0 / QUANTILE_DELTA - 1.0).ln();
    let at = |s: f64| (1.0 / (1.0 + (-s).exp()), 1.0 / (1.0 + s.exp()));
    let mut out = Vec::new();
    let mut s_prev = -s_max;
    let (u, c) = at(s_prev);
    let mut d_prev = diff(u, c);
    for k in 1..=SCAN {
        let s = -s_max + 2.0 * s_max * k as f64 / SCAN as f64;
        let (u, c) = at(s);
        let d = diff(u, c);
        if d == 0.0 && k < SCAN {
            out.push((u, c));
        } else if d_prev != 0.0 && d != 0.0 && (d_prev < 0.0) != (d < 0.0) {
            let (mut lo, mut hi) = (s_prev, s);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (um, cm) = at(mid);
                let dm = diff(um, cm);
                if dm == 0.0 {
                    (lo, hi) = (mid, mid);
                    break;
                }
                if (dm < 0.0) == (d_prev < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(at(0.5 * (lo + hi)));
        }
        s_prev = s;
        d_prev = d;
    }
    out
}

/// Both quantile functions are step functions; integrate exactly over the
/// union of their breakpoints.
fn empirical_pair(x: &[f64], y: &[f64], p: f64) -> f64 {
    let (nx, ny) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut sum = 0.0;
    while i < nx && j < ny {
        // next breakpoints (i+1)/nx and (j+1)/ny compared exactly
        let (lx, ly) = ((i + 1) * ny, (j + 1) * nx);
        let next = lx.min(ly) as f64 / (nx * ny) as f64;
        sum += (next - prev) * (x[i] - y[j]).abs().powf(p);
        prev = next;
        if lx <= ly {
            i += 1;
        }
        if ly <= lx {
            j += 1;
        }
    }
    sum
}

const PIECE_NODES: usize = 6;

/// Piece `k` of the sample quantile is `(k/n, (k+1)/n]`. Each piece is split
/// where the continuous quantile crosses the sample value, so the integrand
/// is smooth on every sub-piece; interior pieces use Gauss–Legendre, the
/// two end pieces tanh-sinh for tail singularities.
fn empirical_vs_law(sorted: &[f64], law: &Marginal<'_>, p: f64) -> f64 {
    let n = sorted.len();
    let h = 1.0 / n as f64;
    let (gx, gw) = gauss_legendre_unit(PIECE_NODES);
    let piece = |k: usize| -> f64 {
        let s = sorted[k];
        let a = k as f64 * h;
        let b = (k + 1) as f64 * h;
        let cb = (n - k - 1) as f64 * h;
        let f = |u: f64, c: f64| (law.quantile_split(u, c) - s).abs().powf(p);
        let cross = law.cdf(s);
        let mut cuts = vec![(a, 1.0 - a)];
        if cross > a && cross < b {
            cuts.push((cross, 1.0 - cross));
        }
        cuts.push((b, cb));
        let tail = k == 0 || k == n - 1;
        cuts.windows(2)
            .map(|w| {
                let ((lo, _), (hi, chi)) = (w[0], w[1]);
                let len = hi - lo;
                if tail {
                    TanhSinh::default()
                        .integrate(|v, vc| f(lo + len * v, chi + len * vc))
                        .value
                        * len
                } else {
                    gx.iter().zip(&gw).map(|(x, wt)| {
                        let u = lo + len * x;
                        wt * f(u, 1.0 - u)
                    }).sum::<f64>() * len
                }
            })
            .sum()
    };
    let parts: Vec<f64> = (0..n).into_par_iter().map(piece).collect();
    parts.iter().sum()
}

/// Sorted-sample estimator `((1/n) Σ |a_(i) − b_(i)|^p)^{1/p}`.
pub fn wasserstein1d_empirical(a: &[f64], b: &[f64], p: u32) -> Result<f64> {
    check_order(p)?;
    if a.len() != b.len() {
        return invalid(format!("sample sizes differ: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return invalid("samples are empty");
    }
    Ok(empirical_w_pp(a, b, p as f64).powf(1.0 / p as f64))
}

fn empirical_w_pp(a: &[f64], b: &[f64], p: f64) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    x.iter().zip(&y).map(|(u, v)| (u - v).abs().powf(p)).sum::<f64>() / x.len() as f64
}

/// Path-space `W_p` between processes sharing a copula.
pub fn pathspace_wasserstein_same_copula(
    a: &MarginalFamily,
    b: &MarginalFamily,
    grid: &TimeGrid,
    p: u32,
) -> Result<TransportReport> {
    check_order(p)?;
    let (ma, mb) = (a.on_grid(grid)?, b.on_grid(grid)?);
    let pth: Vec<f64> = ma
        .par_iter()
        .zip(&mb)
        .map(|(x, y)| w_pp(x, y, p as f64, MIN_NODES))
        .collect();
    let integrated = grid.integrate(&pth)?.max(0.0).powf(1.0 / p as f64);
    let per_t = pth.iter().map(|v| v.powf(1.0 / p as f64)).collect();
    Ok(TransportReport { p, per_t, integrated, mc_coupling_value: None, mc_std_error: None, gap: None })
}

impl TransportReport {
    /// Adds the Monte Carlo cost of `(F_A^{[-1]}(U), F_B^{[-1]}(U))`.
    pub fn with_monte_carlo(mut self, cost: &MeanEstimate) -> Self {
        let root = cost.root(self.p as f64);
        self.mc_coupling_value = Some(root.mean);
        self.mc_std_error = Some(root.std_error);
        self.gap = Some((self.integrated - root.mean).abs());
        self
    }

    pub fn write_per_t_csv<W: Write>(&self, grid: &TimeGrid, out: W) -> Result<()> {
        if grid.len() != self.per_t.len() {
            return invalid("grid does not match the report");
        }
        let rows = grid.points().iter().zip(&self.per_t).map(|(t, w)| vec![*t, *w]);
        write_numeric_csv(out, &["t", "W_p"], rows)
    }
}

/// The coupling `(F_A^{[-1]}(U), F_B^{[-1]}(U))`.
pub fn optimal_coupling(
    copula: &CopulaEnsemble,
    a: &MarginalFamily,
    b: &MarginalFamily,
) -> Result<(ProcessEnsemble, ProcessEnsemble)> {
    Ok((merge(copula, a)?, merge(copula, b)?))
}

/// Per-path `∫_T |X_t − Y_t|^p dt`.
pub fn path_costs(x: &ProcessEnsemble, y: &ProcessEnsemble, p: f64) -> Result<Vec<f64>> {
    x.check_coupled(y)?;
    let grid = x.grid();
    Ok(x.paths()
        .as_slice()
        .par_chunks(x.n_times())
        .zip(y.paths().as_slice().par_chunks(y.n_times()))
        .map(|(a, b)| {
            let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v).abs().powf(p)).collect();
            grid.integrate_unchecked(&d)
        })
        .collect())
}

/// Monte Carlo estimate of `E ∫_T |X_t − Y_t|^p dt`.
pub fn coupling_cost(x: &ProcessEnsemble, y: &ProcessEnsemble, p: f64) -> Result<MeanEstimate> {
    Ok(MeanEstimate::from_samples(&path_costs(x, y, p)?))
}

/// Cosine functions on the grid, orthonormalised under the trapezoid
/// inner product (two Gram–Schmidt passes). Columns are basis vectors.
pub fn cosine_basis(grid: &TimeGrid) -> DMatrix<f64> {
    let m = grid.len();
    let (a, len) = (grid.a(), grid.length().max(f64::MIN_POSITIVE));
    let w = grid.weights();
    let mut e = DMatrix::from_fn(m, m, |j, k| {
        (k as f64 * std::f64::consts::PI * (grid.points()[j] - a) / len).cos()
    });
    let dot = |e: &DMatrix<f64>, i: usize, k: usize| -> f64 { (0..m).map(|j| w[j] * e[(j, i)] * e[(j, k)]).sum() };
    for k in 0..m {
        for _ in 0..2 {
            for i in 0..k {
                let c = dot(&e, i, k);
                for j in 0..m {
                    e[(j, k)] -= c * e[(j, i)];
                }
            }
        }
        let norm = dot(&e, k, k).sqrt();
        for j in 0..m {
            e[(j, k)] /= norm;
        }
    }
    e
}

/// Compares `∫_T Ŵ₂²(X_t, Y_t) dt` with `Σ_n Ŵ₂²(⟨X, e_n⟩, ⟨Y, e_n⟩)` for the
/// first `n_basis` elements of [`cosine_basis`].
pub fn basis_path_consistency_check(x: &ProcessEnsemble, y: &ProcessEnsemble, n_basis: usize) -> Result<ConsistencyReport> {
    x.check_coupled(y)?;
    let m = x.n_times();
    if n_basis > m {
        return invalid(format!("n_basis = {n_basis} exceeds the grid size {m}"));
    }
    let grid = x.grid();
    let per_t: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| empirical_w_pp(&x.paths().column(j), &y.paths().column(j), 2.0))
        .collect();
    let path_side = grid.integrate_unchecked(&per_t);
    let e = cosine_basis(grid);
    let w = grid.weights();
    let coefs = |ens: &ProcessEnsemble, k: usize| -> Vec<f64> {
        ens.paths()
            .rows()
            .map(|row| (0..m).map(|j| w[j] * row[j] * e[(j, k)]).sum())
            .collect()
    };
    let terms: Vec<f64> = (0..n_basis)
        .into_par_iter()
        .map(|k| empirical_w_pp(&coefs(x, k), &coefs(y, k), 2.0))
        .collect();
    let basis_side: f64 = terms.iter().sum();
    Ok(ConsistencyReport { path_side, basis_side, gap: (path_side - basis_side).abs() })
}
