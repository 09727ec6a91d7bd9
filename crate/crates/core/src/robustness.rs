//! Robustness of the copula construction: how far apart two processes can
//! be given the distance of their marginals and of their copulas.
//!
//! For `X = F_X^{[-1]}(U^X)`, `Y = F_Y^{[-1]}(U^Y)` with `F_Y` admitting a
//! density minorant `g`,
//!
//! ```text
//! ‖X − Y‖_{L^p(Ω×T)} ≤ ‖W_p(F_X, F_Y)‖_{L^p(T)} + K ‖U^X − U^Y‖_{L^q(Ω×T)}^ρ
//! ρ = εqβ / (p(p+ε)(q+β) − pqβ)
//! K = (λ^{−β} ∫_T 1{x₀ᵗ > 0} dt + 2 ‖g^{−β}(Y)‖_{L¹})^{ρ/β} (2 ‖Y‖_{L^{p+ε}})^{1−ρ}
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{fbm_correlation, sample_elliptical_process};
use crate::ensemble::{CopulaEnsemble, ProcessEnsemble};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::kl::{empirical_covariance, kl_expand, tail_energy, truncate};
use crate::marginals::{Law, Marginal, MarginalFamily, Mixing, MixtureTable, TimeFn, MIXTURE_NODES};
use crate::quad::integral_or_infinite;
use crate::rng::derive_seed;
use crate::sklar::{absolute_moment, extract_copula, merge};
use crate::stats::ols_slope;
use crate::transport::{check_order, coupling_cost, pathspace_wasserstein_same_copula};

/// Density minorant `g_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Minorant {
    /// `g = f`
    Density,
    /// `g = factor·f`
    Scaled { factor: f64 },
    /// `0` for `x < 0`, `λ` on `[0, x₀ᵗ)`, `f` from `x₀ᵗ` on; for laws on
    /// the half line.
    Piecewise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessParams {
    pub p: u32,
    pub epsilon: f64,
    pub q: f64,
    pub beta: f64,
    /// Floor `λ` of `g` on the central interval.
    pub lambda_floor: f64,
    /// Half-width `x₀ᵗ` of the central interval.
    pub x0: TimeFn,
    /// Center `m_t` of the central interval.
    pub center: TimeFn,
    pub minorant: Minorant,
}

impl RobustnessParams {
    /// `g = f`, `x₀ ≡ 0`, `m ≡ 0`, `λ = 1`.
    pub fn new(p: u32, epsilon: f64, q: f64, beta: f64) -> Self {
        Self {
            p,
            epsilon,
            q,
            beta,
            lambda_floor: 1.0,
            x0: TimeFn::constant(0.0),
            center: TimeFn::constant(0.0),
            minorant: Minorant::Density,
        }
    }

    pub fn with_minorant(mut self, minorant: Minorant) -> Self {
        self.minorant = minorant;
        self
    }

    pub fn with_interval(mut self, center: TimeFn, x0: TimeFn, lambda_floor: f64) -> Self {
        self.center = center;
        self.x0 = x0;
        self.lambda_floor = lambda_floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        rho(self.p, self.epsilon, self.q, self.beta)?;
        if !(self.lambda_floor.is_finite() && self.lambda_floor > 0.0) {
            return invalid(format!("lambda_floor must be positive, got {}", self.lambda_floor));
        }
        if let Minorant::Scaled { factor } = self.minorant {
            if !(factor.is_finite() && factor > 0.0) {
                return invalid(format!("minorant factor must be positive, got {factor}"));
            }
        }
        Ok(())
    }

    fn log_minorant_at(&self, marg: &Marginal<'_>, t: f64, x: f64) -> Result<f64> {
        Ok(match self.minorant {
            Minorant::Density => marg.log_pdf(x)?,
            Minorant::Scaled { factor } => factor.ln() + marg.log_pdf(x)?,
            Minorant::Piecewise => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else if x < self.x0.eval(t) {
                    self.lambda_floor.ln()
                } else {
                    marg.log_pdf(x)?
                }
            }
        })
    }

    fn minorant_at(&self, marg: &Marginal<'_>, t: f64, x: f64) -> Result<f64> {
        let f = marg.pdf(x)?;
        Ok(match self.minorant {
            Minorant::Density => f,
            Minorant::Scaled { factor } => factor * f,
            Minorant::Piecewise => {
                if x < 0.0 {
                    0.0
                } else if x < self.x0.eval(t) {
                    self.lambda_floor
                } else {
                    f
                }
            }
        })
    }
}

/// `ρ = εqβ / (p(p+ε)(q+β) − pqβ)`
pub fn rho(p: u32, epsilon: f64, q: f64, beta: f64) -> Result<f64> {
    if p < 1 {
        return invalid(format!("p must be at least 1, got {p}"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    if !(q.is_finite() && q >= 1.0) {
        return invalid(format!("q must be at least 1, got {q}"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return invalid(format!("beta must lie in (0, 1], got {beta}"));
    }
    let p = p as f64;
    Ok(epsilon * q * beta / (p * (p + epsilon) * (q + beta) - p * q * beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub minorant_ok: bool,
    pub floor_ok: bool,
    pub monotone_ok: bool,
    /// `∫_T ∫ f_t / g_t^β dx dt = ∫_T E[g_t^{−β}(Y_t)] dt`, possibly `+∞`.
    pub tail_integral: f64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.minorant_ok && self.floor_ok && self.monotone_ok && self.tail_integral.is_finite()
    }
}

/// Grid indices used for lattice checks (at most `k`, evenly spread).
fn lattice_indices(m: usize, k: usize) -> Vec<usize> {
    if m <= k {
        return (0..m).collect();
    }
    let mut v: Vec<usize> = (0..k).map(|i| i * (m - 1) / (k - 1)).collect();
    v.dedup();
    v
}

fn x_lattice(marg: &Marginal<'_>) -> Vec<f64> {
    let mut u: Vec<f64> = (1..200).map(|k| k as f64 / 200.0).collect();
    u.extend([1e-8, 1e-6, 1e-4, 1.0 - 1e-4, 1.0 - 1e-6, 1.0 - 1e-8]);
    let mut x: Vec<f64> = u.iter().map(|&u| marg.quantile(u)).collect();
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

/// `E[g_t^{−β}(Y_t)]` by quantile quadrature, `+∞` when divergent or when
/// `g` vanishes where `Y` has mass.
fn inverse_minorant_moment(params: &RobustnessParams, marg: &Marginal<'_>, t: f64) -> f64 {
    let beta = params.beta;
    integral_or_infinite(|u, c| {
        let x = marg.quantile_split(u, c);
        match params.log_minorant_at(marg, t, x) {
            Ok(lg) => (-beta * lg).exp(),
            Err(_) => f64::INFINITY,
        }
    })
}

/// Checks the density-minorant assumption for `famY` on a `(t, x)` lattice
/// and evaluates the tail integral.
pub fn check_assumption(fam_y: &MarginalFamily, params: &RobustnessParams, grid: &TimeGrid) -> Result<AssumptionReport> {
    params.validate()?;
    if !fam_y.has_density() {
        return invalid("the assumption needs a family with densities");
    }
    let margs = fam_y.on_grid(grid)?;
    let t = grid.points();
    let (mut minorant_ok, mut floor_ok, mut monotone_ok) = (true, true, true);
    for j in lattice_indices(grid.len(), 50) {
        let marg = &margs[j];
        let (lo, hi) = marg.support();
        let (center, x0) = (params.center.eval(t[j]), params.x0.eval(t[j]));
        let xs = x_lattice(marg);
        let mut g = Vec::with_capacity(xs.len());
        for &x in &xs {
            let gx = params.minorant_at(marg, t[j], x)?;
            let fx = marg.pdf(x)?;
            if x > lo && x < hi && !(gx > 0.0 && gx <= fx * (1.0 + 1e-12)) {
                minorant_ok = false;
            }
            g.push(gx);
        }
        if x0 > 0.0 {
            for k in 0..=20 {
                let x = center - x0 + 2.0 * x0 * k as f64 / 20.0;
                if x > lo && x < hi && params.minorant_at(marg, t[j], x)? < params.lambda_floor {
                    floor_ok = false;
                }
            }
        }
        let tol = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs());
        for k in 1..xs.len() {
            let (x_prev, x_next) = (xs[k - 1], xs[k]);
            if x_next <= center - x0 && g[k] < g[k - 1] - tol(g[k], g[k - 1]) {
                monotone_ok = false;
            }
            if x_prev >= center + x0 && g[k] > g[k - 1] + tol(g[k], g[k - 1]) {
                monotone_ok = false;
            }
        }
    }
    let per_t: Vec<f64> = margs
        .par_iter()
        .zip(t)
        .map(|(marg, &t)| inverse_minorant_moment(params, marg, t))
        .collect();
    let tail_integral = if per_t.iter().any(|v| v.is_infinite()) {
        f64::INFINITY
    } else {
        grid.integrate_unchecked(&per_t)
    };
    Ok(AssumptionReport { minorant_ok, floor_ok, monotone_ok, tail_integral })
}

/// Ingredients of `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantK {
    pub rho: f64,
    /// `∫_T 1{x₀ᵗ > 0} dt`
    pub interval_measure: f64,
    /// `‖g^{−β}(Y)‖_{L¹(Ω×T)}`
    pub minorant_term: f64,
    /// `‖Y‖_{L^{p+ε}(Ω×T)}`
    pub y_norm: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

pub fn constant_k_parts(params: &RobustnessParams, fam_y: &MarginalFamily, grid: &TimeGrid) -> Result<ConstantK> {
    let report = check_assumption(fam_y, params, grid)?;
    if !report.passed() {
        return Err(Error::AssumptionViolated(format!("density minorant assumption fails: {report:?}")));
    }
    let rho = rho(params.p, params.epsilon, params.q, params.beta)?;
    let beta = params.beta;
    let indicator: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| f64::from(u8::from(params.x0.eval(t) > 0.0)))
        .collect();
    let interval_measure = grid.integrate_unchecked(&indicator);
    let r = params.p as f64 + params.epsilon;
    let margs = fam_y.on_grid(grid)?;
    let moments: Vec<f64> = margs.par_iter().map(|m| absolute_moment(m, r)).collect();
    if moments.iter().any(|v| v.is_infinite()) {
        return Err(Error::AssumptionViolated(format!("Y is not in L^{r}")));
    }
    let y_norm = grid.integrate_unchecked(&moments).powf(1.0 / r);
    let minorant_term = report.tail_integral;
    let base = params.lambda_floor.powf(-beta) * interval_measure + 2.0 * minorant_term;
    let k = base.powf(rho / beta) * (2.0 * y_norm).powf(1.0 - rho);
    Ok(ConstantK { rho, interval_measure, minorant_term, y_norm, k })
}

/// The constant `K` of the robustness inequality.
pub fn constant_k(params: &RobustnessParams, fam_y: &MarginalFamily, grid: &TimeGrid) -> Result<f64> {
    Ok(constant_k_parts(params, fam_y, grid)?.k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    /// `‖X − Y‖_{L^p(Ω×T)}`
    pub lhs: f64,
    /// `‖X − Y‖_{L^p(Ω×T)}^p`
    pub lhs_pow: f64,
    pub lhs_std_error: f64,
    /// `‖W_p(F_X, F_Y)‖_{L^p(T)}`
    pub marginal_term: f64,
    /// `K ‖U^X − U^Y‖_{L^q}^ρ`
    pub copula_term: f64,
    pub copula_term_std_error: f64,
    /// `‖U^X − U^Y‖_{L^q(Ω×T)}`
    pub copula_distance: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub rho: f64,
    pub holds: bool,
    /// `marginal_term + copula_term − lhs`
    pub slack: f64,
}

fn as_process(c: &CopulaEnsemble) -> Result<ProcessEnsemble> {
    ProcessEnsemble::new(c.grid().clone(), c.paths().clone())
}

/// Combines the Monte Carlo pieces into a report.
fn assemble(
    x: &ProcessEnsemble,
    y: &ProcessEnsemble,
    ux: &ProcessEnsemble,
    uy: &ProcessEnsemble,
    marginal_term: f64,
    k: &ConstantK,
    params: &RobustnessParams,
) -> Result<RobustnessReport> {
    let p = params.p as f64;
    let cost = coupling_cost(x, y, p)?;
    let lhs = cost.root(p);
    let du = coupling_cost(ux, uy, params.q)?;
    let copula_distance = du.mean.max(0.0).powf(1.0 / params.q);
    let expo = k.rho / params.q;
    let copula_term = k.k * du.mean.max(0.0).powf(expo);
    // one-sided error of a concave power, safe when the mean is ~0
    let copula_term_std_error = k.k * (du.mean.max(0.0) + du.std_error).powf(expo) - copula_term;
    let se = lhs.std_error.hypot(copula_term_std_error);
    let rhs = marginal_term + copula_term;
    Ok(RobustnessReport {
        lhs: lhs.mean,
        lhs_pow: cost.mean,
        lhs_std_error: lhs.std_error,
        marginal_term,
        copula_term,
        copula_term_std_error,
        copula_distance,
        k: k.k,
        rho: k.rho,
        holds: lhs.mean <= rhs + 3.0 * se,
        slack: rhs - lhs.mean,
    })
}

/// Evaluates both sides of the robustness inequality on path-coupled
/// ensembles. Copulas are extracted with auxiliary uniforms from `aux_seed`.
pub fn evaluate_bound(
    ens_x: &ProcessEnsemble,
    fam_x: &MarginalFamily,
    ens_y: &ProcessEnsemble,
    fam_y: &MarginalFamily,
    params: &RobustnessParams,
    aux_seed: u64,
) -> Result<RobustnessReport> {
    ens_x.check_coupled(ens_y)?;
    check_order(params.p)?;
    let grid = ens_y.grid();
    let k = constant_k_parts(params, fam_y, grid)?;
    let marginal_term = pathspace_wasserstein_same_copula(fam_x, fam_y, grid, params.p)?.integrated;
    let ux = as_process(&extract_copula(ens_x, fam_x, aux_seed)?)?;
    let uy = as_process(&extract_copula(ens_y, fam_y, aux_seed)?)?;
    assemble(ens_x, ens_y, &ux, &uy, marginal_term, &k, params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CopulaBoundReport {
    /// `‖U^X − U^Y‖_{L^q(Ω×T)}`
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// `‖X̃ − Ỹ‖_{L^q(Ω×T)}`
    pub path_distance: f64,
    pub path_distance_std_error: f64,
    /// `(∫_T W_q^q(F_X̃, F_Ỹ) dt)^{1/q}`
    pub wasserstein_term: f64,
    /// `f_sup (‖X̃ − Ỹ‖ + (∫ W_q^q)^{1/q})`
    pub bound_two_term: f64,
    /// `2 f_sup ‖X̃ − Ỹ‖`
    pub bound_single: f64,
    /// Lattice maximum of the densities of `Ỹ`.
    pub f_sup: f64,
    /// Closed-form upper bound on the density, when available.
    pub f_sup_analytic: Option<f64>,
    pub holds_two_term: bool,
    pub holds_single: bool,
}

/// Analytic `sup_x f(x)` for the laws where it is known.
fn density_peak(marg: &Marginal<'_>) -> Option<f64> {
    match *marg.law() {
        Law::Uniform => Some(1.0),
        Law::Gaussian { sd, .. } if sd > 0.0 => Some(1.0 / ((2.0 * PI).sqrt() * sd)),
        Law::Exponential { scale } => Some(1.0 / scale),
        Law::Pareto { x_min, alpha } => Some(alpha / x_min),
        // f(z) ≤ E[S⁻¹]/√(2π) for S·N(0,1)
        Law::ScaleMixture { scale, table } => Some(table.mixing().inverse_moment() / ((2.0 * PI).sqrt() * scale)),
        _ => None,
    }
}

/// `sup_{t,x} f_t(x)` maximised over a lattice of about 10⁴ points: at most
/// 50 grid times by 200 quantile levels, plus each law's mode candidates.
pub fn density_sup(fam: &MarginalFamily, grid: &TimeGrid) -> Result<(f64, Option<f64>)> {
    if !fam.has_density() {
        return invalid("bounded density required; the family has atoms");
    }
    let margs = fam.on_grid(grid)?;
    let mut lattice = 0.0f64;
    for j in lattice_indices(grid.len(), 50) {
        let marg = &margs[j];
        let mut xs = x_lattice(marg);
        let (lo, _) = marg.support();
        if lo.is_finite() {
            xs.push(lo);
        }
        if let Law::Gaussian { mean, .. } = *marg.law() {
            xs.push(mean);
        }
        xs.push(0.0);
        for x in xs {
            let f = marg.pdf(x)?;
            if !f.is_finite() {
                return invalid(format!("density is unbounded at t = {}", grid.points()[j]));
            }
            lattice = lattice.max(f);
        }
    }
    let analytic = margs.iter().map(density_peak).try_fold(0.0f64, |a, b| b.map(|b| a.max(b)));
    Ok((lattice, analytic))
}

/// Bounds the copula distance of two path-coupled processes by the
/// distance of the processes themselves.
pub fn copula_distance_bound(
    tilde_x: &ProcessEnsemble,
    tilde_y: &ProcessEnsemble,
    fam_x: &MarginalFamily,
    fam_y: &MarginalFamily,
    q: f64,
    aux_seed: u64,
) -> Result<CopulaBoundReport> {
    tilde_x.check_coupled(tilde_y)?;
    if !(q.is_finite() && q >= 1.0) {
        return invalid(format!("q must be at least 1, got {q}"));
    }
    let grid = tilde_y.grid();
    let (f_sup, f_sup_analytic) = density_sup(fam_y, grid)?;
    let ux = as_process(&extract_copula(tilde_x, fam_x, aux_seed)?)?;
    let uy = as_process(&extract_copula(tilde_y, fam_y, aux_seed)?)?;
    let lhs = coupling_cost(&ux, &uy, q)?.root(q);
    let path = coupling_cost(tilde_x, tilde_y, q)?.root(q);
    let (mx, my) = (fam_x.on_grid(grid)?, fam_y.on_grid(grid)?);
    let wq: Vec<f64> = mx
        .par_iter()
        .zip(&my)
        .map(|(a, b)| crate::transport::w_pp(a, b, q, crate::transport::MIN_NODES))
        .collect();
    let wasserstein_term = grid.integrate(&wq)?.max(0.0).powf(1.0 / q);
    let bound_sup = f_sup_analytic.unwrap_or(f_sup).max(f_sup);
    let bound_two_term = bound_sup * (path.mean + wasserstein_term);
    let bound_single = 2.0 * bound_sup * path.mean;
    let se = lhs.std_error.hypot(bound_sup * path.std_error);
    Ok(CopulaBoundReport {
        lhs: lhs.mean,
        lhs_std_error: lhs.std_error,
        path_distance: path.mean,
        path_distance_std_error: path.std_error,
        wasserstein_term,
        bound_two_term,
        bound_single,
        f_sup,
        f_sup_analytic,
        holds_two_term: lhs.mean <= bound_two_term + 3.0 * se,
        holds_single: lhs.mean <= bound_single + 3.0 * se,
    })
}

/// Pareto marginals on an elliptical copula, approximated through a
/// truncated Karhunen–Loève expansion of the elliptical process. Missing
/// keys take the [`Default`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub m: usize,
    pub hurst: f64,
    pub mixing: Mixing,
    pub x_min: f64,
    pub alpha: TimeFn,
    /// Required margin `α_t ≥ 2 + γ`.
    pub gamma: f64,
    pub n_paths: usize,
    pub n_keep: Vec<usize>,
    pub seed: u64,
    /// Use the empirical marginals of the sample as `F_n` instead of the
    /// true Pareto family.
    pub empirical_marginals: bool,
    pub p: u32,
    pub epsilon: f64,
    pub q: f64,
    pub beta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_start: 1.0,
            t_end: 2.0,
            m: 65,
            hurst: 0.5,
            mixing: Mixing::LogNormal { mu: 0.0, sigma: 0.5 },
            x_min: 1.0,
            alpha: TimeFn::constant(4.0),
            gamma: 1.0,
            n_paths: 50_000,
            n_keep: (1..=16).collect(),
            seed: 2024,
            empirical_marginals: false,
            p: 1,
            epsilon: 1.0,
            q: 2.0,
            beta: 2.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n_keep: usize,
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub marginal_term: f64,
    pub copula_term: f64,
    pub copula_distance: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub rho: f64,
    pub tail_energy: f64,
    /// Monte Carlo `‖Ỹ^n − Ỹ‖²_{L²(Ω×T)}`
    pub truncation_error: f64,
    pub truncation_error_std_error: f64,
    /// `marginal_term + K (√(2/π) E[S⁻¹])^ρ tail_energy^{ρ/2}`
    pub closed_form_bound: f64,
    pub holds: bool,
    pub holds_closed_form: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rho: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// `K` with the `γ`-bounded moments, `(6/γ x_min^{2/3} ∫α^{1/3})^{1/2} (2/γ x_min² ∫α)^{2/3}`.
    pub k_gamma_bound: f64,
    pub inverse_mixing_moment: f64,
    pub rows: Vec<ExperimentRow>,
    /// Slope of `log copula_term` against `log tail_energy`.
    pub copula_slope: f64,
    /// Slope of `log lhs` against `log tail_energy`.
    pub lhs_slope: f64,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.t_start, self.t_end, self.m)
    }

    pub fn params(&self) -> RobustnessParams {
        RobustnessParams::new(self.p, self.epsilon, self.q, self.beta)
            .with_interval(TimeFn::constant(self.x_min), TimeFn::constant(0.0), 1.0)
    }

    pub fn validate(&self) -> Result<TimeGrid> {
        let grid = self.grid()?;
        self.params().validate()?;
        check_order(self.p)?;
        self.mixing.validate()?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return invalid(format!("gamma must be positive, got {}", self.gamma));
        }
        if let Some(t) = grid.points().iter().find(|&&t| self.alpha.eval(t) < 2.0 + self.gamma) {
            return invalid(format!(
                "alpha({t}) = {} violates alpha >= 2 + gamma = {}",
                self.alpha.eval(*t),
                2.0 + self.gamma
            ));
        }
        if self.n_paths < 2 {
            return invalid("n_paths must be at least 2");
        }
        if let Some(n) = self.n_keep.iter().find(|&&n| n == 0 || n > self.m) {
            return invalid(format!("n_keep entries must lie in 1..={}, got {n}", self.m));
        }
        Ok(grid)
    }
}

/// Runs the full pipeline: `Ỹ = S·V`, its copula `U`, `Y = F^{[-1]}(U)`;
/// for each `n`, the KL truncation `Ỹ^n`, its copula `U^n` and
/// `Y^n = F_n^{[-1]}(U^n)`, then both sides of the robustness inequality.
///
/// `Ỹ^n = P_n Ỹ` for the weighted projector `P_n`, so `Ỹ^n_t` is again a
/// scale mixture with scale `σ_n(t) = (P_n R P_nᵀ)_{tt}^{1/2}`, `R` the
/// correlation of `V`; `U^n` is extracted with that exact marginal.
pub fn pareto_elliptical_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let grid = cfg.validate()?;
    let params = cfg.params();
    let tilde_y = sample_elliptical_process(&grid, cfg.hurst, &cfg.mixing, cfg.n_paths, cfg.seed)?;
    let table = Arc::new(MixtureTable::new(&cfg.mixing, MIXTURE_NODES)?);
    let fam_tilde = MarginalFamily::scale_mixture_with_table(TimeFn::constant(1.0), table.clone());
    let u = extract_copula(&tilde_y, &fam_tilde, derive_seed(cfg.seed, 1))?;
    let fam_y = MarginalFamily::pareto(cfg.x_min, cfg.alpha.clone())?;
    let y = merge(&u, &fam_y)?;
    let fam_n = if cfg.empirical_marginals {
        MarginalFamily::empirical_from_ensemble(&y)?
    } else {
        fam_y.clone()
    };
    let k = constant_k_parts(&params, &fam_y, &grid)?;
    let marginal_term = pathspace_wasserstein_same_copula(&fam_n, &fam_y, &grid, cfg.p)?.integrated;
    let kl = kl_expand(&empirical_covariance(&tilde_y)?, &grid)?;
    let corr = fbm_correlation(&grid, cfg.hurst);
    let u_proc = as_process(&u)?;
    let inv_s = cfg.mixing.inverse_moment();
    let lipschitz = (2.0 / PI).sqrt() * inv_s;

    let mut rows = Vec::with_capacity(cfg.n_keep.len());
    for &n in &cfg.n_keep {
        let tilde_n = truncate(&tilde_y, &kl, n)?;
        let proj = kl.projector(n)?;
        let var = &proj * &corr * proj.transpose();
        let sigma: Vec<f64> = (0..grid.len()).map(|j| var[(j, j)].max(0.0).sqrt()).collect();
        if let Some(j) = sigma.iter().position(|&s| s <= 0.0) {
            return Err(Error::NumericFailure(format!(
                "truncated process has zero variance at t = {} for n_keep = {n}",
                grid.points()[j]
            )));
        }
        let fam_tilde_n = MarginalFamily::scale_mixture_with_table(
            TimeFn::table(grid.points().to_vec(), sigma)?,
            table.clone(),
        );
        let u_n = extract_copula(&tilde_n, &fam_tilde_n, derive_seed(cfg.seed, 2))?;
        let y_n = merge(&u_n, &fam_n)?;
        let report = assemble(&y_n, &y, &as_process(&u_n)?, &u_proc, marginal_term, &k, &params)?;
        let tail = tail_energy(&kl, n)?;
        let trunc = coupling_cost(&tilde_n, &tilde_y, 2.0)?;
        let closed_form = marginal_term + k.k * lipschitz.powf(k.rho) * tail.powf(k.rho / 2.0);
        let se = report.lhs_std_error;
        rows.push(ExperimentRow {
            n_keep: n,
            lhs: report.lhs,
            lhs_std_error: se,
            marginal_term,
            copula_term: report.copula_term,
            copula_distance: report.copula_distance,
            k: k.k,
            rho: k.rho,
            tail_energy: tail,
            truncation_error: trunc.mean,
            truncation_error_std_error: trunc.std_error,
            closed_form_bound: closed_form,
            holds: report.holds,
            holds_closed_form: report.lhs <= closed_form + 3.0 * se,
        });
    }

    let fit: Vec<&ExperimentRow> = rows
        .iter()
        .filter(|r| r.tail_energy > 0.0 && r.copula_term > 0.0 && r.lhs > 0.0)
        .collect();
    let log_tail: Vec<f64> = fit.iter().map(|r| r.tail_energy.ln()).collect();
    let slope = |v: Vec<f64>| if fit.len() >= 2 { ols_slope(&log_tail, &v) } else { f64::NAN };
    let copula_slope = slope(fit.iter().map(|r| r.copula_term.ln()).collect());
    let lhs_slope = slope(fit.iter().map(|r| r.lhs.ln()).collect());

    let alpha: Vec<f64> = grid.points().iter().map(|&t| cfg.alpha.eval(t)).collect();
    let int_alpha = grid.integrate(&alpha)?;
    let int_alpha_cbrt = grid.integrate(&alpha.iter().map(|a| a.cbrt()).collect::<Vec<_>>())?;
    let k_gamma_bound = (6.0 / cfg.gamma * cfg.x_min.powf(2.0 / 3.0) * int_alpha_cbrt).sqrt()
        * (2.0 / cfg.gamma * cfg.x_min * cfg.x_min * int_alpha).powf(2.0 / 3.0);

    Ok(ExperimentReport {
        rho: k.rho,
        k: k.k,
        k_gamma_bound,
        inverse_mixing_moment: inv_s,
        rows,
        copula_slope,
        lhs_slope,
    })
}
