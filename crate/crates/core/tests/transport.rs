use pathcopula::copulas::{sample_comonotone, sample_fbm_copula, sample_independence};
use pathcopula::marginals::{MarginalFamily, TimeFn};
use pathcopula::rng::path_rng;
use pathcopula::transport::*;
use pathcopula::{PathArray, ProcessEnsemble, TimeGrid};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn normal(mean: f64, sd: f64) -> MarginalFamily {
    MarginalFamily::gaussian(TimeFn::constant(mean), TimeFn::constant(sd))
}

fn pareto4() -> MarginalFamily {
    MarginalFamily::pareto(1.0, TimeFn::constant(4.0)).unwrap()
}

fn exponential() -> MarginalFamily {
    MarginalFamily::exponential_scale(TimeFn::constant(1.0))
}

#[test]
fn scale_gap_by_quantile_scaling() {
    // W_p(N(0,σ₁²), N(0,σ₂²)) = |σ₁ − σ₂| · ‖Z‖_p
    for (p, zp) in [(1u32, (2.0 / std::f64::consts::PI).sqrt()), (2, 1.0)] {
        let w = wasserstein1d_quantile(&normal(0.0, 1.0), &normal(0.0, 3.0), 0.0, p, 64).unwrap();
        assert!((w - 2.0 * zp).abs() < 1e-7, "p={p}: {w}");
    }
}

#[test]
fn exponential_vs_pareto_against_direct_quadrature() {
    // independent oracle: composite Simpson in s = (1 − u)^{1/8} over the
    // same window u ∈ (δ, 1 − δ) that the quantile integral uses
    let oracle = |p: f64| {
        let n = 200_000;
        let (s0, s1) = (QUANTILE_DELTA.powf(0.125), (1.0 - QUANTILE_DELTA).powf(0.125));
        let h = (s1 - s0) / n as f64;
        let f = |s: f64| {
            let c: f64 = s.powi(8);
            let qe = -c.ln();
            let qp = c.powf(-0.25);
            (qp - qe).abs().powf(p) * 8.0 * s.powi(7)
        };
        let mut sum = f(s0) + f(s1);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(s0 + i as f64 * h);
        }
        sum * h / 3.0
    };
    for p in [1u32, 2] {
        let w = wasserstein1d_quantile(&exponential(), &pareto4(), 0.0, p, 64).unwrap();
        let exact = oracle(p as f64).powf(1.0 / p as f64);
        assert!((w / exact - 1.0).abs() < 1e-9, "p={p}: {w} vs {exact}");
        // the window drops about 2√δ of the 4/9 total for p = 2
        if p == 2 {
            assert!((w * w - 4.0 / 9.0).abs() < 1e-4);
        }
    }
}

#[test]
fn empirical_estimator_converges() {
    let n = 100_000;
    let mut rng = path_rng(1, 0);
    let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (0..n).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
    let w = wasserstein1d_empirical(&a, &b, 2).unwrap();
    assert!((w - 1.0).abs() < 0.03, "{w}");
}

#[test]
fn empirical_family_against_its_law() {
    // the sample quantile of n draws from N(0,1) is close to Φ⁻¹
    let n = 20_000;
    let mut rng = path_rng(2, 0);
    let sample: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let emp = MarginalFamily::empirical(vec![0.0], vec![sample.clone()]).unwrap();
    let w = wasserstein1d_quantile(&emp, &normal(0.0, 1.0), 0.0, 1, 16).unwrap();
    assert!(w < 0.02, "{w}");
    // symmetric in its arguments
    let v = wasserstein1d_quantile(&normal(0.0, 1.0), &emp, 0.0, 1, 16).unwrap();
    assert_eq!(w, v);
}

#[test]
fn optimal_coupling_matches_closed_form() {
    let g = TimeGrid::uniform(1.0, 2.0, 9).unwrap();
    let n = 50_000;
    let pairs = [(normal(0.0, 1.0), normal(0.0, 2.0)), (exponential(), pareto4())];
    for copula in [sample_comonotone(&g, n, 3).unwrap(), sample_fbm_copula(&g, 0.5, n, 4).unwrap()] {
        for (a, b) in &pairs {
            for p in [1u32, 2] {
                let report = pathspace_wasserstein_same_copula(a, b, &g, p).unwrap();
                let (x, y) = optimal_coupling(&copula, a, b).unwrap();
                let cost = coupling_cost(&x, &y, p as f64).unwrap();
                let gap = (cost.mean - report.integrated.powi(p as i32)).abs();
                assert!(gap <= 3.0 * cost.std_error, "{} p={p}: {gap} vs {}", copula.model, cost.std_error);
            }
        }
    }
}

#[test]
fn comonotone_scaling_cost_is_the_path_norm() {
    let g = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
    let c = sample_comonotone(&g, 100, 5).unwrap();
    let (x, y) = optimal_coupling(&c, &normal(0.0, 1.0), &normal(0.0, 2.0)).unwrap();
    let costs = path_costs(&x, &y, 2.0).unwrap();
    for (row, cost) in x.paths().rows().zip(costs) {
        let norm = g.integrate(&row.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap();
        assert!((cost - norm).abs() <= 1e-12 * norm.max(1.0));
    }
}

#[test]
fn recoupling_never_beats_the_optimum() {
    let g = TimeGrid::uniform(1.0, 2.0, 5).unwrap();
    let n = 20_000;
    let c = sample_fbm_copula(&g, 0.5, n, 6).unwrap();
    let (x, y) = optimal_coupling(&c, &exponential(), &pareto4()).unwrap();
    let best = coupling_cost(&x, &y, 2.0).unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut path_rng(7, 0));
    let mut data = Vec::with_capacity(n * g.len());
    for &i in &order {
        data.extend_from_slice(y.paths().row(i));
    }
    let shuffled = ProcessEnsemble::new(g.clone(), PathArray::new(n, g.len(), data).unwrap()).unwrap();
    let other = coupling_cost(&x, &shuffled, 2.0).unwrap();
    assert!(other.mean >= best.mean - 3.0 * other.std_error);
    // mismatched copulas also respect the per-coordinate lower bound
    let ind = sample_independence(&g, n, 8).unwrap();
    let y_ind = pathcopula::sklar::merge(&ind, &pareto4()).unwrap();
    let mixed = coupling_cost(&x, &y_ind, 2.0).unwrap();
    let lower = pathspace_wasserstein_same_copula(&exponential(), &pareto4(), &g, 2).unwrap().integrated.powi(2);
    assert!(mixed.mean >= lower - 3.0 * mixed.std_error);
}

#[test]
fn basis_and_path_sides_agree_for_comonotone_scaling() {
    let g = TimeGrid::uniform(0.0, 1.0, 17).unwrap();
    let c = sample_fbm_copula(&TimeGrid::uniform(1.0, 2.0, 17).unwrap(), 0.5, 5000, 9).unwrap();
    let c = pathcopula::CopulaEnsemble::new(g.clone(), c.paths().clone(), 9, "shifted").unwrap();
    let x = pathcopula::sklar::merge(&c, &normal(0.0, 1.0)).unwrap();
    let y = x.affine(0.0, 2.0);
    let r = basis_path_consistency_check(&x, &y, 17).unwrap();
    assert!(r.gap <= 1e-9 * r.path_side, "{r:?}");
    let same = basis_path_consistency_check(&x, &x, 17).unwrap();
    assert_eq!((same.path_side, same.basis_side), (0.0, 0.0));
    let mut last = 0.0;
    for k in 0..=17 {
        let b = basis_path_consistency_check(&x, &y, k).unwrap().basis_side;
        assert!(b >= last);
        last = b;
    }
    assert!(basis_path_consistency_check(&x, &y, 18).is_err());
}

#[test]
fn report_csv_has_two_columns() {
    let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
    let r = pathspace_wasserstein_same_copula(&normal(0.0, 1.0), &normal(1.0, 1.0), &g, 1).unwrap();
    let mut buf = Vec::new();
    r.write_per_t_csv(&g, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,W_p\n"));
    assert_eq!(text.lines().count(), 4);
}

fn family(i: usize) -> MarginalFamily {
    match i {
        0 => normal(0.0, 1.0),
        1 => normal(0.5, 2.0),
        2 => exponential(),
        3 => pareto4(),
        _ => MarginalFamily::exponential_scale(TimeFn::constant(0.5)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metric_axioms(a in 0usize..5, b in 0usize..5, c in 0usize..5, p in 1u32..=4) {
        let w = |i, j| wasserstein1d_quantile(&family(i), &family(j), 0.0, p, 16).unwrap();
        prop_assert_eq!(w(a, b), w(b, a));
        prop_assert!(w(a, c) <= w(a, b) + w(b, c) + 2e-8);
        if a == b {
            prop_assert_eq!(w(a, b), 0.0);
        }
    }

    #[test]
    fn empirical_estimator_is_symmetric(xs in prop::collection::vec(-10.0f64..10.0, 1..50), shift in -3.0f64..3.0) {
        let ys: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let w = wasserstein1d_empirical(&xs, &ys, 1).unwrap();
        prop_assert!((w - shift.abs()).abs() < 1e-9);
        prop_assert_eq!(w, wasserstein1d_empirical(&ys, &xs, 1).unwrap());
    }
}
