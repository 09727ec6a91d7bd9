//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! quantity and the runtime against its budget. Exits nonzero on any FAIL.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use pathcopula::copulas::*;
use pathcopula::kl::{fit_kl, kl_expand, tail_energy, truncate};
use pathcopula::marginals::{norm_quantile, MarginalFamily, Mixing, TimeFn};
use pathcopula::robustness::*;
use pathcopula::sklar::{extract_copula, merge};
use pathcopula::stats::{ks_statistic, ks_uniform};
use pathcopula::transport::*;
use pathcopula::TimeGrid;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn samplers() -> Vec<CopulaModel> {
    let mut v = vec![CopulaModel::Independence, CopulaModel::Comonotone];
    v.extend([0.3, 0.5, 0.7].map(|hurst| CopulaModel::Fbm { hurst }));
    v.push(CopulaModel::Elliptical { hurst: 0.5, mixing: lognormal() });
    v.extend([0.5, 1.0, 2.0].map(|theta| CopulaModel::Clayton { theta }));
    v
}

fn lognormal() -> Mixing {
    Mixing::LogNormal { mu: 0.0, sigma: 0.5 }
}

fn grid(m: usize) -> TimeGrid {
    TimeGrid::uniform(1.0, 2.0, m).unwrap()
}

fn ks_bound(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

fn normal(mean: f64, sd: f64) -> MarginalFamily {
    MarginalFamily::gaussian(TimeFn::constant(mean), TimeFn::constant(sd))
}

fn pareto4() -> MarginalFamily {
    MarginalFamily::pareto(1.0, TimeFn::constant(4.0)).unwrap()
}

fn uniform_marginals() -> Outcome {
    let n = 100_000;
    let g = grid(33);
    let mut worst = (0.0, String::new());
    let (mut tests, mut over) = (0, 0);
    for (k, model) in samplers().iter().enumerate() {
        let e = model.sample(&g, n, 1000 + k as u64).unwrap();
        for j in 0..g.len() {
            let d = ks_uniform(&e.paths().column(j));
            tests += 1;
            over += usize::from(d > ks_bound(n));
            if d > worst.0 {
                worst = (d, format!("{} column {j}", model.tag()));
            }
        }
    }
    // Each column test has a 1% false-alarm rate, so a handful of
    // exceedances among hundreds of columns is what an exact sampler gives.
    let pass = worst.0 <= ks_bound(n);
    outcome(
        pass,
        format!(
            "max D = {:.5} ({}) vs 1.63/√n = {:.5}; {over} of {tests} column tests exceed",
            worst.0,
            worst.1,
            ks_bound(n)
        ),
    )
}

fn frechet_hoeffding() -> Outcome {
    let n = 100_000;
    let g = grid(33);
    let tol = 3.0 / (n as f64).sqrt();
    let lattice = [0.1, 0.3, 0.5, 0.7, 0.9];
    let pairs = [(0, 32), (8, 16), (15, 16)];
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_attain = 0.0f64;
    for (k, model) in samplers().iter().enumerate() {
        let e = model.sample(&g, n, 2000 + k as u64).unwrap();
        for (i, j) in pairs {
            for u in lattice {
                for v in lattice {
                    let c = empirical_copula_cdf(&e, &[i, j], &[u, v]).unwrap();
                    worst_excess = worst_excess.max(c - u.min(v));
                    if *model == CopulaModel::Comonotone {
                        worst_attain = worst_attain.max((c - u.min(v)).abs());
                    }
                }
            }
        }
    }
    let pass = worst_excess <= tol && worst_attain <= tol;
    outcome(
        pass,
        format!("max C − min u = {worst_excess:.5}, comonotone |C − min u| = {worst_attain:.5}, tol {tol:.5}"),
    )
}

fn sklar_round_trip() -> Outcome {
    let n = 100_000;
    let g = grid(33);
    let c = sample_fbm_copula(&g, 0.5, n, 3000).unwrap();
    let families = [
        ("gaussian", MarginalFamily::fbm_gaussian(0.5, 1.0).unwrap()),
        ("exponential", MarginalFamily::fbm_exponential(0.5, 1.0).unwrap()),
        ("pareto", pareto4()),
    ];
    let mut worst_err = 0.0f64;
    let mut worst_ks = 0.0f64;
    for (_, fam) in &families {
        let x = merge(&c, fam).unwrap();
        let back = extract_copula(&x, fam, 3001).unwrap();
        for (a, b) in c.paths().as_slice().iter().zip(back.paths().as_slice()) {
            worst_err = worst_err.max((a - b).abs());
        }
        for (j, &t) in g.points().iter().enumerate() {
            let m = fam.at(t).unwrap();
            worst_ks = worst_ks.max(ks_statistic(&x.paths().column(j), |v| m.cdf(v)));
        }
    }
    let pass = worst_err <= 1e-9 && worst_ks <= ks_bound(n);
    outcome(
        pass,
        format!("max |U − extract(merge(U))| = {worst_err:.2e}, max KS D = {worst_ks:.5} vs {:.5}", ks_bound(n)),
    )
}

fn distributional_transform() -> Outcome {
    let n = 100_000;
    let g = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
    // P(X = 0) = 0.3, P(X = 1) = 0.7
    let atoms: Vec<f64> = (0..10).map(|i| f64::from(u8::from(i >= 3))).collect();
    let fam = MarginalFamily::empirical(g.points().to_vec(), vec![atoms; 2]).unwrap();
    let x = merge(&sample_independence(&g, n, 4000).unwrap(), &fam).unwrap();
    let u = extract_copula(&x, &fam, 4001).unwrap();
    let d = (0..2).map(|j| ks_uniform(&u.paths().column(j))).fold(0.0, f64::max);
    outcome(d <= ks_bound(n), format!("KS D = {d:.5} vs {:.5}", ks_bound(n)))
}

fn optimal_coupling_equality() -> Outcome {
    let n = 100_000;
    let g = grid(33);
    let pairs = [("N(0,1)/N(0,4)", normal(0.0, 1.0), normal(0.0, 2.0)), (
        "Exp/Pareto",
        MarginalFamily::exponential_scale(TimeFn::constant(1.0)),
        pareto4(),
    )];
    let copulas = [sample_comonotone(&g, n, 5000).unwrap(), sample_fbm_copula(&g, 0.5, n, 5001).unwrap()];
    let mut pass = true;
    let mut worst = 0.0f64;
    for c in &copulas {
        for (_, a, b) in &pairs {
            let (x, y) = optimal_coupling(c, a, b).unwrap();
            for p in [1u32, 2] {
                let closed = pathspace_wasserstein_same_copula(a, b, &g, p).unwrap().integrated.powi(p as i32);
                let mc = coupling_cost(&x, &y, p as f64).unwrap();
                let z = (mc.mean - closed).abs() / mc.std_error;
                worst = worst.max(z);
                pass &= z <= 3.0;
            }
        }
    }
    let w2 = pathspace_wasserstein_same_copula(&normal(0.0, 1.0), &normal(0.0, 2.0), &g, 2).unwrap().integrated;
    pass &= (w2 - 1.0).abs() <= 1e-4;
    outcome(pass, format!("max |MC − ∫W_p^p| = {worst:.2} s.e.; Gaussian integrated W₂ = {w2:.9}"))
}

fn closed_form_w2() -> Outcome {
    let n = 100_000;
    let w = wasserstein1d_quantile(&normal(0.0, 1.0), &normal(1.0, 1.0), 0.0, 2, 64).unwrap();
    let g = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
    let u = sample_independence(&g, n, 6000).unwrap();
    let a: Vec<f64> = u.paths().column(0).iter().map(|&u| norm_quantile(u)).collect();
    let b: Vec<f64> = u.paths().column(1).iter().map(|&u| 1.0 + norm_quantile(u)).collect();
    let e = wasserstein1d_empirical(&a, &b, 2).unwrap();
    let pass = (w - 1.0).abs() <= 1e-6 && (e - w).abs() <= 0.03;
    outcome(pass, format!("quadrature W₂ = {w:.10}, sorted-sample W₂ = {e:.5}"))
}

fn kl_identity() -> Outcome {
    let g = grid(65);
    let e = sample_elliptical_process(&g, 0.5, &lognormal(), 50_000, 7000).unwrap();
    let kl = fit_kl(&e).unwrap();
    let mut pass = true;
    let mut worst = 0.0f64;
    for n_keep in [1, 2, 4, 8] {
        let err = coupling_cost(&truncate(&e, &kl, n_keep).unwrap(), &e, 2.0).unwrap();
        let tail = tail_energy(&kl, n_keep).unwrap();
        let z = (err.mean - tail).abs() / err.std_error;
        worst = worst.max(z);
        pass &= z <= 3.0;
    }
    let bg = TimeGrid::uniform(0.0, 1.0, 513).unwrap();
    let t = bg.points();
    let cov = nalgebra::DMatrix::from_fn(513, 513, |i, j| t[i].min(t[j]));
    let bk = kl_expand(&cov, &bg).unwrap();
    let mut worst_rel = 0.0f64;
    for i in 1..=5 {
        let exact = 1.0 / ((i as f64 - 0.5).powi(2) * PI * PI);
        worst_rel = worst_rel.max((bk.eigenvalues[i - 1] / exact - 1.0).abs());
    }
    pass &= worst_rel <= 0.02;
    outcome(pass, format!("max |MC − tail| = {worst:.2} s.e.; Brownian eigenvalues max rel. error {worst_rel:.2e}"))
}

fn constants() -> Outcome {
    let r = rho(1, 1.0, 2.0, 2.0 / 3.0).unwrap();
    let params = RobustnessParams::new(1, 1.0, 2.0, 2.0 / 3.0).with_interval(
        TimeFn::constant(1.0),
        TimeFn::constant(0.0),
        1.0,
    );
    let k = constant_k(&params, &pareto4(), &grid(65)).unwrap();
    // Pareto(1, α): E[f^{−β}(Y)] = α^{−β} α/(α − β(α+1)), E[Y²] = α/(α − 2)
    let (alpha, beta, rho3) = (4.0f64, 2.0 / 3.0, 1.0 / 3.0);
    let minorant = alpha.powf(-beta) * alpha / (alpha - beta * (alpha + 1.0));
    let y_norm = (alpha / (alpha - 2.0)).sqrt();
    let analytic = (2.0 * minorant).powf(rho3 / beta) * (2.0 * y_norm).powf(1.0 - rho3);
    let pass = (r - 1.0 / 3.0).abs() <= 1e-15
        && (k / 4.364 - 1.0).abs() <= 0.005
        && (k / analytic - 1.0).abs() <= 0.005;
    outcome(pass, format!("ρ = {r:.17}, K = {k:.6}, analytic K = {analytic:.6}"))
}

fn experiment() -> &'static ExperimentReport {
    static REPORT: OnceLock<ExperimentReport> = OnceLock::new();
    REPORT.get_or_init(|| pareto_elliptical_experiment(&ExperimentConfig::default()).unwrap())
}

fn robustness_inequality() -> Outcome {
    let g = grid(33);
    let c = sample_fbm_copula(&g, 0.5, 50_000, 9000).unwrap();
    let (fx, fy) = (normal(0.0, 1.0), normal(0.0, 2.0));
    let (x, y) = (merge(&c, &fx).unwrap(), merge(&c, &fy).unwrap());
    let params = RobustnessParams::new(1, 1.0, 2.0, 0.5);
    let a = evaluate_bound(&x, &fx, &y, &fy, &params, 9001).unwrap();
    let report = experiment();
    let rows: Vec<_> = report.rows.iter().filter(|r| [1, 2, 4, 8, 16].contains(&r.n_keep)).collect();
    let pass = a.holds && rows.len() == 5 && rows.iter().all(|r| r.holds);
    let min_slack = rows.iter().map(|r| r.marginal_term + r.copula_term - r.lhs).fold(f64::INFINITY, f64::min);
    outcome(
        pass,
        format!(
            "Gaussian pair lhs {:.5} vs rhs {:.5} (s.e. {:.1e}); pipeline holds for n_keep 1,2,4,8,16, min slack {min_slack:.4}",
            a.lhs,
            a.marginal_term + a.copula_term,
            a.lhs_std_error
        ),
    )
}

fn copula_distance() -> Outcome {
    let g = grid(33);
    let n = 50_000;
    let y = sample_fbm_process(&g, 0.5, n, 10_000).unwrap();
    let x = y.affine(0.1, 1.0);
    let fy = MarginalFamily::fbm_gaussian(0.5, 1.0).unwrap();
    let fx = MarginalFamily::gaussian(TimeFn::constant(0.1), TimeFn::power(1.0, 0.5));
    let shift = copula_distance_bound(&x, &y, &fx, &fy, 2.0, 10_001).unwrap();
    let mut pass = shift.holds_single;

    let g = grid(65);
    let mixing = lognormal();
    let y = sample_elliptical_process(&g, 0.5, &mixing, n, 10_002).unwrap();
    let kl = fit_kl(&y).unwrap();
    let corr = fbm_correlation(&g, 0.5);
    let fy = MarginalFamily::scale_mixture(TimeFn::constant(1.0), &mixing).unwrap();
    let mut worst_ratio = 0.0f64;
    let mut f_sup = (0.0, 0.0);
    for n_keep in [1, 2, 4, 8] {
        let x = truncate(&y, &kl, n_keep).unwrap();
        let p = kl.projector(n_keep).unwrap();
        let var = &p * &corr * p.transpose();
        let sigma: Vec<f64> = (0..g.len()).map(|j| var[(j, j)].sqrt()).collect();
        let fx = MarginalFamily::scale_mixture(TimeFn::table(g.points().to_vec(), sigma).unwrap(), &mixing).unwrap();
        let r = copula_distance_bound(&x, &y, &fx, &fy, 2.0, 10_003).unwrap();
        pass &= r.holds_single;
        worst_ratio = worst_ratio.max(r.lhs / r.bound_single);
        f_sup = (r.f_sup, r.f_sup_analytic.unwrap_or(f64::NAN));
    }
    let closed = 0.125f64.exp() / (2.0 * PI).sqrt();
    pass &= (f_sup.1 / closed - 1.0).abs() <= 1e-6 && f_sup.0 <= f_sup.1 + 1e-12;
    outcome(
        pass,
        format!(
            "mean shift lhs {:.1e} ≤ {:.4}; truncation max lhs/bound {worst_ratio:.3}; f_sup lattice {:.6}, E[S⁻¹]/√(2π) {:.8}, closed form {closed:.8}",
            shift.lhs, shift.bound_single, f_sup.0, f_sup.1
        ),
    )
}

fn rate() -> Outcome {
    let s = experiment().copula_slope;
    outcome((s - 1.0 / 6.0).abs() <= 0.05, format!("slope = {s:.4} (target 1/6, tolerance 0.05)"))
}

fn run_cli(cmd: &str, config: &Path, out: &Path, threads: u32) {
    let status = Command::new(env!("CARGO_BIN_EXE_pathcopula"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{cmd}: {}", String::from_utf8_lossy(&status.stderr));
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ("simulate", r#"{"seed": 1, "grid": {"start": 1, "end": 2, "m": 17}, "copula": {"type": "elliptical", "hurst": 0.6, "mixing": {"type": "log_normal", "mu": 0, "sigma": 0.5}}, "marginal": {"type": "pareto", "x_min": 1, "alpha": {"type": "constant", "value": 4}}, "n_paths": 5000}"#),
        ("wasserstein", r#"{"seed": 2, "grid": {"start": 1, "end": 2, "m": 17}, "a": {"type": "exponential", "scale": {"type": "constant", "value": 1}}, "b": {"type": "pareto", "x_min": 1, "alpha": {"type": "constant", "value": 4}}, "p": 2, "monte_carlo": {"copula": {"type": "clayton", "theta": 1}, "n_paths": 5000}}"#),
        ("robustness", r#"{"seed": 3, "mode": {"experiment": {"m": 17, "n_paths": 4000, "n_keep": [1, 2, 4]}}}"#),
        ("robustness", r#"{"seed": 4, "mode": {"pair": {"grid": {"start": 1, "end": 2, "m": 9}, "n_paths": 4000, "copula": {"type": "fbm", "hurst": 0.3}, "copula_y": {"type": "fbm", "hurst": 0.7}, "family_x": {"type": "exponential", "scale": {"type": "constant", "value": 1}}, "family_y": {"type": "gaussian", "sigma": {"type": "constant", "value": 1}}, "params": {"p": 1, "epsilon": 1, "q": 2, "beta": 0.5, "lambda_floor": 1, "x0": {"type": "constant", "value": 0}, "center": {"type": "constant", "value": 0}, "minorant": {"type": "density"}}}}}"#),
        ("klexpand", r#"{"seed": 5, "source": {"elliptical": {"grid": {"start": 1, "end": 2, "m": 33}, "n_paths": 4000, "hurst": 0.5, "mixing": {"type": "log_normal", "mu": 0, "sigma": 0.5}}}, "n_keep": [1, 4, 8], "format": "json"}"#),
        ("check", r#"{"grid": {"start": 1, "end": 2, "m": 9}, "family": {"type": "pareto", "x_min": 1, "alpha": {"type": "constant", "value": 4}}, "moment_p": 2, "assumption": {"p": 1, "epsilon": 1, "q": 2, "beta": 0.6666666666666666, "lambda_floor": 1, "x0": {"type": "constant", "value": 0}, "center": {"type": "constant", "value": 1}, "minorant": {"type": "density"}}}"#),
    ];
    let mut mismatches = Vec::new();
    for (k, (cmd, json)) in configs.iter().enumerate() {
        let config = tmp.path().join(format!("config{k}.json"));
        std::fs::write(&config, json).unwrap();
        let runs: Vec<_> = [1, 1, 4, 4]
            .iter()
            .enumerate()
            .map(|(r, &threads)| {
                let out = tmp.path().join(format!("out{k}_{r}"));
                run_cli(cmd, &config, &out, threads);
                dir_contents(&out)
            })
            .collect();
        if runs.iter().any(|r| r != &runs[0]) || runs[0].len() < 2 {
            mismatches.push(format!("{cmd}#{k}"));
        }
    }
    let pass = mismatches.is_empty();
    let detail = if pass {
        "6 configs × 5 commands, 2 runs each at --threads 1 and 4: byte-identical".to_string()
    } else {
        format!("outputs differ for {}", mismatches.join(", "))
    };
    outcome(pass, detail)
}

type Criterion = (&'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("uniform marginals", 60.0, uniform_marginals),
        ("Fréchet–Hoeffding bound", 30.0, frechet_hoeffding),
        ("Sklar round trip", 30.0, sklar_round_trip),
        ("distributional transform", 5.0, distributional_transform),
        ("optimal-coupling equality", 120.0, optimal_coupling_equality),
        ("closed-form 1-d Wasserstein", 10.0, closed_form_w2),
        ("KL truncation identity", 90.0, kl_identity),
        ("constants rho and K", 10.0, constants),
        ("robustness inequality", 300.0, robustness_inequality),
        ("copula-distance bound", 60.0, copula_distance),
        ("rate check", 120.0, rate),
        ("determinism", 60.0, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= *budget;
        let pass = result.pass && in_time;
        failed += usize::from(!pass);
        let timing = if in_time { String::new() } else { " OVER BUDGET".into() };
        println!(
            "{} {:>2}. {name}: {} [{secs:.1} s / {budget:.0} s{timing}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!("acceptance: {} of 12 criteria pass", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
