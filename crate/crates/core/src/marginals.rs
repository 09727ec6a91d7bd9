//! Families `t ↦ F_t` of one-dimensional laws.
//!
//! A [`MarginalFamily`] is resolved at a time point into a [`Marginal`],
//! which carries concrete parameters and exposes the CDF, its left limit,
//! the generalized inverse `F⁻¹(u) = inf{x : F(x) ≥ u}`, the density and the
//! distributional transform. Ensemble-level code resolves each grid column
//! once and then works with the infallible [`Marginal`] methods.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::ensemble::ProcessEnsemble;
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::io::fmt_f64;
use crate::quad::gauss_legendre_unit;

/// Default probability at which quantiles of unbounded supports are clamped.
pub const DEFAULT_CLAMP: f64 = 1e-12;

/// Nodes of the Gauss–Legendre rule over the mixing law.
pub const MIXTURE_NODES: usize = 64;

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile at `u` (accurate for small `u`).
pub fn norm_quantile(u: f64) -> f64 {
    refine_lower(-SQRT_2 * erfc_inv(2.0 * u), u)
}

/// Standard normal quantile at `1 - c` (accurate for small `c`).
pub fn norm_quantile_upper(c: f64) -> f64 {
    -refine_lower(-SQRT_2 * erfc_inv(2.0 * c), c)
}

// One Halley step on Φ(z) = u; erfc_inv alone is only good to ~1e-10.
fn refine_lower(z: f64, u: f64) -> f64 {
    if !z.is_finite() || u <= 0.0 || u >= 1.0 {
        return z;
    }
    let d = norm_pdf(z);
    if d <= 0.0 {
        return z;
    }
    let e = (norm_cdf(z) - u) / d;
    z - e / (1.0 + 0.5 * z * e)
}

/// A real-valued function of time used for per-t parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFn {
    Constant { value: f64 },
    /// `coef · t^exponent`
    Power { coef: f64, exponent: f64 },
    /// Piecewise linear through `(times[i], values[i])`, flat outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl TimeFn {
    pub fn constant(value: f64) -> Self {
        TimeFn::Constant { value }
    }

    pub fn power(coef: f64, exponent: f64) -> Self {
        TimeFn::Power { coef, exponent }
    }

    pub fn table(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return invalid("tabulated function needs equally many times and values");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("tabulated function times must be strictly increasing");
        }
        Ok(TimeFn::Table { times, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant { value } => *value,
            TimeFn::Power { coef, exponent } => {
                if *exponent == 0.0 {
                    *coef
                } else {
                    coef * t.powf(*exponent)
                }
            }
            TimeFn::Table { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let (v0, v1) = (values[k - 1], values[k]);
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }
}

/// Law of the positive scalar `S` in an elliptical process `S·V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    Degenerate { value: f64 },
    /// `ln S ~ N(mu, sigma²)`
    LogNormal { mu: f64, sigma: f64 },
}

impl Mixing {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Mixing::Degenerate { value } if !(value.is_finite() && value > 0.0) => {
                invalid(format!("degenerate mixing needs a positive value, got {value}"))
            }
            Mixing::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) => {
                invalid(format!("lognormal mixing needs finite mu and sigma >= 0, got ({mu}, {sigma})"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Mixing::Degenerate { value } => value,
            Mixing::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Mixing::Degenerate { value } => value,
            Mixing::LogNormal { mu, sigma } => (mu + sigma * norm_quantile(u)).exp(),
        }
    }

    /// `E[S⁻¹]`
    pub fn inverse_moment(&self) -> f64 {
        match *self {
            Mixing::Degenerate { value } => 1.0 / value,
            Mixing::LogNormal { mu, sigma } => (-mu + 0.5 * sigma * sigma).exp(),
        }
    }

    /// `E[S²]`
    pub fn second_moment(&self) -> f64 {
        match *self {
            Mixing::Degenerate { value } => value * value,
            Mixing::LogNormal { mu, sigma } => (2.0 * mu + 2.0 * sigma * sigma).exp(),
        }
    }

    fn is_point_mass(&self) -> bool {
        matches!(self, Mixing::Degenerate { .. } | Mixing::LogNormal { sigma: 0.0, .. })
    }
}

/// Unit-scale normal scale mixture `G(z) = Σ w_k Φ(z / s_k)`.
///
/// The `(s_k, w_k)` come from Gauss–Legendre quadrature over the mixing
/// quantile function. `G` is additionally tabulated with cubic Hermite
/// interpolation on `[-zmax, zmax]` for fast bulk evaluation; outside the
/// table the sum is evaluated directly.
#[derive(Debug)]
pub struct MixtureTable {
    mixing: Mixing,
    scales: Vec<f64>,
    weights: Vec<f64>,
    zmax: f64,
    step: f64,
    cdf_table: Vec<f64>,
    pdf_table: Vec<f64>,
}

impl MixtureTable {
    pub fn new(mixing: &Mixing, nodes: usize) -> Result<Self> {
        mixing.validate()?;
        if nodes == 0 {
            return invalid("mixture quadrature needs at least one node");
        }
        let (scales, weights) = if mixing.is_point_mass() {
            (vec![mixing.quantile(0.5)], vec![1.0])
        } else {
            let (u, w) = gauss_legendre_unit(nodes);
            (u.iter().map(|&u| mixing.quantile(u)).collect(), w)
        };
        let s_max = scales.iter().cloned().fold(0.0, f64::max);
        let zmax = 9.0 * s_max;
        let step = (zmax / 10_000.0).min(0.004);
        let count = (2.0 * zmax / step).ceil() as usize;
        let step = 2.0 * zmax / count as f64;
        let mut table = Self {
            mixing: mixing.clone(),
            scales,
            weights,
            zmax,
            step,
            cdf_table: Vec::new(),
            pdf_table: Vec::new(),
        };
        let (cdf, pdf): (Vec<f64>, Vec<f64>) = (0..=count)
            .map(|i| {
                let z = -zmax + i as f64 * step;
                (table.cdf_exact(z), table.pdf(z))
            })
            .unzip();
        table.cdf_table = cdf;
        table.pdf_table = pdf;
        Ok(table)
    }

    pub fn mixing(&self) -> &Mixing {
        &self.mixing
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ w_k / s_k`, the quadrature value of `E[S⁻¹]`.
    pub fn inverse_moment(&self) -> f64 {
        self.scales.iter().zip(&self.weights).map(|(s, w)| w / s).sum()
    }

    /// `Σ w_k s_k²`, the quadrature value of `E[S²]`.
    pub fn second_moment(&self) -> f64 {
        self.scales.iter().zip(&self.weights).map(|(s, w)| w * s * s).sum()
    }

    pub fn cdf_exact(&self, z: f64) -> f64 {
        self.scales.iter().zip(&self.weights).map(|(s, w)| w * norm_cdf(z / s)).sum()
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.scales.iter().zip(&self.weights).map(|(s, w)| w * norm_pdf(z / s) / s).sum()
    }

    pub fn log_pdf(&self, z: f64) -> f64 {
        let terms: Vec<f64> = self
            .scales
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w.ln() - 0.5 * (z / s) * (z / s) - s.ln() - 0.5 * (2.0 * PI).ln())
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        if z <= -self.zmax || z >= self.zmax {
            return self.cdf_exact(z);
        }
        let x = (z + self.zmax) / self.step;
        let i = (x.floor() as usize).min(self.cdf_table.len() - 2);
        let s = x - i as f64;
        let (y0, y1) = (self.cdf_table[i], self.cdf_table[i + 1]);
        let (d0, d1) = (self.pdf_table[i] * self.step, self.pdf_table[i + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1;
        v.clamp(0.0, 1.0)
    }

    /// Solves `G(z) = p` for `p ∈ (0, 1/2]`, returning `z ≤ 0`.
    pub fn lower_quantile(&self, p: f64) -> f64 {
        if p >= 0.5 {
            return 0.0;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let target = p.ln();
        let mut hi = 0.0;
        let mut lo = -1.0;
        while self.cdf_exact(lo) >= p {
            hi = lo;
            lo *= 2.0;
            if lo < -1e300 {
                return lo;
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.cdf_exact(z);
            if g < p {
                lo = z;
            } else {
                hi = z;
            }
            let dens = self.pdf(z);
            let mut next = if g > 0.0 && dens > 0.0 { z - (g.ln() - target) * g / dens } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-14 * z.abs().max(1.0) || hi - lo <= 1e-14 * z.abs().max(1.0) {
                return next;
            }
            z = next;
        }
        z
    }
}

/// Concrete one-dimensional law obtained by resolving a family at a time.
#[derive(Clone, Copy, Debug)]
pub enum Law<'a> {
    Uniform,
    Gaussian { mean: f64, sd: f64 },
    Exponential { scale: f64 },
    Pareto { x_min: f64, alpha: f64 },
    ScaleMixture { scale: f64, table: &'a MixtureTable },
    Empirical { sorted: &'a [f64] },
}

#[derive(Clone, Copy, Debug)]
pub struct Marginal<'a> {
    law: Law<'a>,
    clamp: f64,
}

impl<'a> Marginal<'a> {
    pub fn new(law: Law<'a>, clamp: f64) -> Self {
        Self { law, clamp }
    }

    pub fn law(&self) -> &Law<'a> {
        &self.law
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.law, Law::Empirical { .. } | Law::Gaussian { sd: 0.0, .. })
    }

    pub fn has_density(&self) -> bool {
        self.is_continuous()
    }

    /// Closed support `[lo, hi]`, possibly infinite.
    pub fn support(&self) -> (f64, f64) {
        match self.law {
            Law::Uniform => (0.0, 1.0),
            Law::Gaussian { .. } | Law::ScaleMixture { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Law::Exponential { .. } => (0.0, f64::INFINITY),
            Law::Pareto { x_min, .. } => (x_min, f64::INFINITY),
            Law::Empirical { sorted } => (sorted[0], sorted[sorted.len() - 1]),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform => x.clamp(0.0, 1.0),
            Law::Gaussian { mean, sd: 0.0 } => f64::from(u8::from(x >= mean)),
            Law::Gaussian { mean, sd } => norm_cdf((x - mean) / sd),
            Law::Exponential { scale } => {
                if x > 0.0 {
                    -(-x / scale).exp_m1()
                } else {
                    0.0
                }
            }
            Law::Pareto { x_min, alpha } => {
                if x > x_min {
                    -(-alpha * (x / x_min).ln()).exp_m1()
                } else {
                    0.0
                }
            }
            Law::ScaleMixture { scale, table } => table.cdf(x / scale),
            Law::Empirical { sorted } => {
                sorted.partition_point(|&s| s <= x) as f64 / sorted.len() as f64
            }
        }
    }

    /// Left limit `F(x−)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self.law {
            Law::Empirical { sorted } => {
                sorted.partition_point(|&s| s < x) as f64 / sorted.len() as f64
            }
            Law::Gaussian { mean, sd: 0.0 } => f64::from(u8::from(x > mean)),
            _ => self.cdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(match self.law {
            Law::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Gaussian { sd: 0.0, .. } => {
                return Err(Error::Unsupported("a point mass has no density".into()))
            }
            Law::Gaussian { mean, sd } => norm_pdf((x - mean) / sd) / sd,
            Law::Exponential { scale } => {
                if x >= 0.0 {
                    (-x / scale).exp() / scale
                } else {
                    0.0
                }
            }
            Law::Pareto { x_min, alpha } => {
                if x >= x_min {
                    alpha / x_min * (-(alpha + 1.0) * (x / x_min).ln()).exp()
                } else {
                    0.0
                }
            }
            Law::ScaleMixture { scale, table } => table.pdf(x / scale) / scale,
            Law::Empirical { .. } => {
                return Err(Error::Unsupported("empirical marginals have no density".into()))
            }
        })
    }

    /// `ln f(x)`, finite far into tails where `f` itself underflows.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        Ok(match self.law {
            Law::Gaussian { mean, sd } if sd > 0.0 => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            Law::Exponential { scale } if x >= 0.0 => -x / scale - scale.ln(),
            Law::Pareto { x_min, alpha } if x >= x_min => {
                (alpha / x_min).ln() - (alpha + 1.0) * (x / x_min).ln()
            }
            Law::ScaleMixture { scale, table } => table.log_pdf(x / scale) - scale.ln(),
            _ => self.pdf(x)?.ln(),
        })
    }

    /// Generalized inverse at `u ∈ [0, 1]`; infinite endpoints are clamped
    /// to the quantiles at the configured clamp probability.
    pub fn quantile(&self, u: f64) -> f64 {
        if let Law::Uniform = self.law {
            return u.clamp(0.0, 1.0);
        }
        self.quantile_split(u, 1.0 - u)
    }

    /// Generalized inverse given both `u` and `c = 1 - u`; whichever is
    /// smaller is used, so upper-tail quantiles keep full precision.
    pub fn quantile_split(&self, u: f64, c: f64) -> f64 {
        if let Law::Empirical { sorted } = self.law {
            return empirical_quantile(sorted, u);
        }
        let (lo, hi) = self.support();
        if u <= 0.0 {
            return if lo.is_finite() { lo } else { self.lower_branch(self.clamp) };
        }
        if c <= 0.0 {
            return if hi.is_finite() { hi } else { self.upper_branch(self.clamp) };
        }
        if u <= 0.5 {
            self.lower_branch(u)
        } else {
            self.upper_branch(c)
        }
    }

    fn lower_branch(&self, u: f64) -> f64 {
        match self.law {
            Law::Uniform => u,
            Law::Gaussian { mean, sd } => mean + sd * norm_quantile(u),
            Law::Exponential { scale } => -scale * (-u).ln_1p(),
            Law::Pareto { x_min, alpha } => x_min * (-(-u).ln_1p() / alpha).exp(),
            Law::ScaleMixture { scale, table } => scale * table.lower_quantile(u),
            Law::Empirical { sorted } => empirical_quantile(sorted, u),
        }
    }

    fn upper_branch(&self, c: f64) -> f64 {
        match self.law {
            Law::Uniform => 1.0 - c,
            Law::Gaussian { mean, sd } => mean + sd * norm_quantile_upper(c),
            Law::Exponential { scale } => -scale * c.ln(),
            Law::Pareto { x_min, alpha } => x_min * (-c.ln() / alpha).exp(),
            Law::ScaleMixture { scale, table } => -scale * table.lower_quantile(c),
            Law::Empirical { sorted } => empirical_quantile(sorted, 1.0 - c),
        }
    }

    /// `F(x−) + v·(F(x) − F(x−))`; equals `F(x)` for continuous laws.
    pub fn distributional_transform(&self, x: f64, v: f64) -> f64 {
        let right = self.cdf(x);
        if self.is_continuous() {
            return right;
        }
        let left = self.cdf_left(x);
        left + v * (right - left)
    }
}

/// Left-continuous order-statistic inverse: the `⌈u·n⌉`-th order statistic,
/// with `u = 0` mapped to the minimum. The index is chosen so that
/// `k/n ≥ u` holds in the same floating-point arithmetic as the CDF.
fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    if u <= 0.0 {
        return sorted[0];
    }
    if u >= 1.0 {
        return sorted[n - 1];
    }
    let mut k = ((u * nf).ceil() as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64 / nf) >= u {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < u {
        k += 1;
    }
    sorted[k - 1]
}

#[derive(Clone, Debug)]
pub enum FamilyKind {
    Uniform,
    Gaussian { mean: TimeFn, sigma: TimeFn },
    Exponential { scale: TimeFn },
    Pareto { x_min: f64, alpha: TimeFn },
    ScaleMixture { sigma: TimeFn, table: Arc<MixtureTable> },
    /// Sorted samples per grid time.
    Empirical { times: Vec<f64>, columns: Vec<Vec<f64>> },
}

/// A family `t ↦ F_t` of one-dimensional laws.
#[derive(Clone, Debug)]
pub struct MarginalFamily {
    kind: FamilyKind,
    domain: Option<(f64, f64)>,
    clamp: f64,
}

impl MarginalFamily {
    fn with_kind(kind: FamilyKind) -> Self {
        Self { kind, domain: None, clamp: DEFAULT_CLAMP }
    }

    pub fn uniform() -> Self {
        Self::with_kind(FamilyKind::Uniform)
    }

    pub fn gaussian(mean: TimeFn, sigma: TimeFn) -> Self {
        Self::with_kind(FamilyKind::Gaussian { mean, sigma })
    }

    /// Centered Gaussian with standard deviation `σ_t`.
    pub fn gaussian_scale(sigma: TimeFn) -> Self {
        Self::gaussian(TimeFn::constant(0.0), sigma)
    }

    /// Marginals of fractional Brownian motion, `σ_t = t^H`, for `t ≥ t0 > 0`.
    pub fn fbm_gaussian(hurst: f64, t0: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if t0.is_nan() || t0 <= 0.0 {
            return invalid("fBm-matched marginals need t0 > 0");
        }
        Ok(Self::gaussian_scale(TimeFn::power(1.0, hurst)).with_domain(t0, f64::INFINITY))
    }

    pub fn exponential_scale(scale: TimeFn) -> Self {
        Self::with_kind(FamilyKind::Exponential { scale })
    }

    /// Exponential marginals with scale `θ_t = t^H`, `t ≥ t0 > 0`.
    pub fn fbm_exponential(hurst: f64, t0: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if t0.is_nan() || t0 <= 0.0 {
            return invalid("fBm-matched marginals need t0 > 0");
        }
        Ok(Self::exponential_scale(TimeFn::power(1.0, hurst)).with_domain(t0, f64::INFINITY))
    }

    pub fn pareto(x_min: f64, alpha: TimeFn) -> Result<Self> {
        if !(x_min.is_finite() && x_min > 0.0) {
            return invalid(format!("Pareto x_min must be positive, got {x_min}"));
        }
        Ok(Self::with_kind(FamilyKind::Pareto { x_min, alpha }))
    }

    /// Normal scale mixture `Σ w_k Φ(x / (σ_t s_k))` over the mixing law.
    pub fn scale_mixture(sigma: TimeFn, mixing: &Mixing) -> Result<Self> {
        let table = Arc::new(MixtureTable::new(mixing, MIXTURE_NODES)?);
        Ok(Self::scale_mixture_with_table(sigma, table))
    }

    pub fn scale_mixture_with_table(sigma: TimeFn, table: Arc<MixtureTable>) -> Self {
        Self::with_kind(FamilyKind::ScaleMixture { sigma, table })
    }

    /// Empirical family from samples per grid time (samples need not be sorted).
    pub fn empirical(times: Vec<f64>, mut columns: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != columns.len() {
            return invalid("empirical family needs one sample column per time");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("empirical family times must be strictly increasing");
        }
        for (j, col) in columns.iter_mut().enumerate() {
            if col.is_empty() {
                return invalid(format!("empirical column {j} is empty"));
            }
            if col.iter().any(|x| !x.is_finite()) {
                return invalid(format!("empirical column {j} has non-finite samples"));
            }
            col.sort_by(f64::total_cmp);
        }
        Ok(Self::with_kind(FamilyKind::Empirical { times, columns }))
    }

    /// Per-grid-point empirical marginals of an ensemble.
    pub fn empirical_from_ensemble(ens: &ProcessEnsemble) -> Result<Self> {
        if ens.n_paths() == 0 {
            return invalid("empirical family needs a nonempty ensemble");
        }
        let columns = (0..ens.n_times()).map(|j| ens.paths().column(j)).collect();
        Self::empirical(ens.grid().points().to_vec(), columns)
    }

    /// Restricts the admissible times to `[a, b]`.
    pub fn with_domain(mut self, a: f64, b: f64) -> Self {
        self.domain = Some((a, b));
        self
    }

    /// Probability at which quantiles of unbounded supports are clamped.
    pub fn with_clamp(mut self, clamp: f64) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.kind, FamilyKind::Empirical { .. })
    }

    pub fn is_continuous(&self) -> bool {
        self.has_density()
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            FamilyKind::Uniform => "uniform".into(),
            FamilyKind::Gaussian { .. } => "gaussian".into(),
            FamilyKind::Exponential { .. } => "exponential".into(),
            FamilyKind::Pareto { x_min, .. } => format!("pareto(x_min={x_min})"),
            FamilyKind::ScaleMixture { table, .. } => format!("scale_mixture({:?})", table.mixing()),
            FamilyKind::Empirical { columns, .. } => format!("empirical(n={})", columns[0].len()),
        }
    }

    /// Resolves the family at time `t`.
    pub fn at(&self, t: f64) -> Result<Marginal<'_>> {
        if !t.is_finite() {
            return invalid(format!("time {t} is not finite"));
        }
        if let Some((a, b)) = self.domain {
            let tol = 1e-12 * a.abs().max(1.0);
            if t < a - tol || t > b + tol {
                return invalid(format!("time {t} outside the family domain [{a}, {b}]"));
            }
        }
        let law = match &self.kind {
            FamilyKind::Uniform => Law::Uniform,
            FamilyKind::Gaussian { mean, sigma } => {
                let (mean, sd) = (mean.eval(t), sigma.eval(t));
                // sigma = 0 is allowed: the point mass at the mean (e.g. fBm at t = 0)
                if !(sd.is_finite() && sd >= 0.0) {
                    return invalid(format!("Gaussian sigma at t={t} must be nonnegative and finite, got {sd}"));
                }
                if !mean.is_finite() {
                    return invalid(format!("Gaussian mean at t={t} is not finite"));
                }
                Law::Gaussian { mean, sd }
            }
            FamilyKind::Exponential { scale } => {
                let scale = scale.eval(t);
                positive("exponential scale", t, scale)?;
                Law::Exponential { scale }
            }
            FamilyKind::Pareto { x_min, alpha } => {
                let alpha = alpha.eval(t);
                positive("Pareto alpha", t, alpha)?;
                Law::Pareto { x_min: *x_min, alpha }
            }
            FamilyKind::ScaleMixture { sigma, table } => {
                let scale = sigma.eval(t);
                positive("mixture scale", t, scale)?;
                Law::ScaleMixture { scale, table }
            }
            FamilyKind::Empirical { times, columns } => {
                let tol = 1e-12 * times[0].abs().max(times[times.len() - 1].abs()).max(1.0);
                let k = times.partition_point(|&s| s < t - tol);
                if k == times.len() || (times[k] - t).abs() > tol {
                    return invalid(format!("time {t} is not a sample time of the empirical family"));
                }
                Law::Empirical { sorted: &columns[k] }
            }
        };
        Ok(Marginal::new(law, self.clamp))
    }

    /// Resolves the family at every point of `grid`.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<Vec<Marginal<'_>>> {
        grid.points().iter().map(|&t| self.at(t)).collect()
    }

    pub fn cdf(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.at(t)?.cdf(x))
    }

    pub fn quantile(&self, t: f64, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return invalid(format!("probability {u} outside [0, 1]"));
        }
        Ok(self.at(t)?.quantile(u))
    }

    pub fn pdf(&self, t: f64, x: f64) -> Result<f64> {
        self.at(t)?.pdf(x)
    }

    pub fn distributional_transform(&self, t: f64, x: f64, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("auxiliary probability {v} outside [0, 1]"));
        }
        Ok(self.at(t)?.distributional_transform(x, v))
    }

    /// Writes an empirical family as CSV: header row of times, one row per
    /// sample index, one column per time.
    pub fn write_empirical_csv<W: Write>(&self, out: W) -> Result<()> {
        let FamilyKind::Empirical { times, columns } = &self.kind else {
            return Err(Error::Unsupported("only empirical families serialize to CSV".into()));
        };
        if columns.iter().any(|c| c.len() != columns[0].len()) {
            return Err(Error::Unsupported("CSV export needs equal sample counts per time".into()));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let to_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(times.iter().map(|t| fmt_f64(*t))).map_err(to_err)?;
        for i in 0..columns[0].len() {
            w.write_record(columns.iter().map(|c| fmt_f64(c[i]))).map_err(to_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_empirical_csv<R: Read>(input: R) -> Result<Self> {
        let (times, rows) = crate::io::read_numeric_csv(input)?;
        let columns = (0..times.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::empirical(times, columns)
    }
}

fn positive(what: &str, t: f64, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        invalid(format!("{what} at t={t} must be positive and finite, got {v}"))
    }
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        invalid(format!("Hurst parameter must lie in (0, 1), got {h}"))
    }
}
