use pathcopula::copulas::{sample_comonotone, sample_fbm_copula, sample_fbm_process, sample_independence};
use pathcopula::marginals::{norm_cdf, MarginalFamily, TimeFn};
use pathcopula::sklar::{check_moment_condition, extract_copula, merge};
use pathcopula::stats::{ks_critical_1pct, ks_statistic, ks_uniform, MeanEstimate};
use pathcopula::TimeGrid;
use proptest::prelude::*;

fn families() -> Vec<MarginalFamily> {
    vec![
        MarginalFamily::gaussian_scale(TimeFn::power(1.0, 0.5)),
        MarginalFamily::fbm_exponential(0.5, 1.0).unwrap(),
        MarginalFamily::pareto(1.0, TimeFn::constant(4.0)).unwrap(),
        MarginalFamily::gaussian(TimeFn::power(0.5, 1.0), TimeFn::constant(2.0)),
    ]
}

#[test]
fn extract_inverts_merge() {
    let g = TimeGrid::uniform(1.0, 2.0, 9).unwrap();
    let c = sample_fbm_copula(&g, 0.5, 5000, 1).unwrap();
    for fam in families() {
        let x = merge(&c, &fam).unwrap();
        let back = extract_copula(&x, &fam, 99).unwrap();
        let worst = c
            .paths()
            .as_slice()
            .iter()
            .zip(back.paths().as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{}: {worst}", fam.tag());
    }
}

#[test]
fn merged_columns_follow_the_marginals() {
    let g = TimeGrid::uniform(1.0, 2.0, 5).unwrap();
    let n = 20_000;
    let c = sample_fbm_copula(&g, 0.3, n, 2).unwrap();
    for fam in families() {
        let x = merge(&c, &fam).unwrap();
        for (j, &t) in g.points().iter().enumerate() {
            let m = fam.at(t).unwrap();
            let d = ks_statistic(&x.paths().column(j), |v| m.cdf(v));
            assert!(d <= ks_critical_1pct(n), "{} at t={t}: {d}", fam.tag());
        }
    }
}

#[test]
fn comonotone_gaussian_is_normal() {
    let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
    let n = 20_000;
    let c = sample_comonotone(&g, n, 3).unwrap();
    let x = merge(&c, &MarginalFamily::gaussian_scale(TimeFn::constant(1.0))).unwrap();
    assert!(ks_statistic(&x.paths().column(1), norm_cdf) <= ks_critical_1pct(n));
}

#[test]
fn gaussian_process_extracts_to_uniform() {
    let g = TimeGrid::uniform(1.0, 2.0, 6).unwrap();
    let n = 20_000;
    let x = sample_fbm_process(&g, 0.6, n, 4).unwrap();
    let u = extract_copula(&x, &MarginalFamily::fbm_gaussian(0.6, 1.0).unwrap(), 5).unwrap();
    for j in 0..g.len() {
        assert!(ks_uniform(&u.paths().column(j)) <= ks_critical_1pct(n));
    }
}

#[test]
fn two_point_atoms_become_uniform() {
    let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
    let n = 20_000;
    // P(X = 0) = 0.3, P(X = 1) = 0.7
    let column: Vec<f64> = (0..10).map(|i| if i < 3 { 0.0 } else { 1.0 }).collect();
    let fam = MarginalFamily::empirical(g.points().to_vec(), vec![column; 3]).unwrap();
    let c = sample_independence(&g, n, 6).unwrap();
    let x = merge(&c, &fam).unwrap();
    let u = extract_copula(&x, &fam, 7).unwrap();
    for j in 0..3 {
        assert!(ks_uniform(&u.paths().column(j)) <= ks_critical_1pct(n));
    }
}

#[test]
fn one_auxiliary_uniform_per_entry() {
    // the same aux seed gives the same stream whatever the family
    let g = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
    let c = sample_independence(&g, 100, 8).unwrap();
    let atoms = MarginalFamily::empirical(g.points().to_vec(), vec![vec![0.0, 1.0]; 2]).unwrap();
    let x = merge(&c, &atoms).unwrap();
    let a = extract_copula(&x, &atoms, 11).unwrap();
    let b = extract_copula(&x, &atoms, 11).unwrap();
    assert_eq!(a.paths(), b.paths());
}

#[test]
fn moment_matches_monte_carlo() {
    let g = TimeGrid::uniform(1.0, 2.0, 9).unwrap();
    let n = 100_000;
    let fam = MarginalFamily::fbm_exponential(0.5, 1.0).unwrap();
    let report = check_moment_condition(&fam, &g, 2).unwrap();
    let c = sample_fbm_copula(&g, 0.5, n, 12).unwrap();
    let x = merge(&c, &fam).unwrap();
    let per_path: Vec<f64> = x
        .paths()
        .rows()
        .map(|r| g.integrate(&r.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap())
        .collect();
    let mc = MeanEstimate::from_samples(&per_path);
    // E[Y_t²] = 2 t^{2H} = 2t, ∫₁² 2t dt = 3
    assert!((report.integral - 3.0).abs() < 1e-8, "{}", report.integral);
    assert!((mc.mean - report.integral).abs() <= 3.0 * mc.std_error, "{mc:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn similarly_ordered_after_merge(seed in any::<u64>(), fa in 0usize..4, fb in 0usize..4) {
        let g = TimeGrid::uniform(1.0, 2.0, 4).unwrap();
        let c = sample_fbm_copula(&g, 0.5, 60, seed).unwrap();
        let fams = families();
        let x = merge(&c, &fams[fa]).unwrap();
        let y = merge(&c, &fams[fb]).unwrap();
        for j in 0..4 {
            let (xc, yc) = (x.paths().column(j), y.paths().column(j));
            for a in 0..60 {
                for b in 0..60 {
                    prop_assert!((xc[a] - xc[b]) * (yc[a] - yc[b]) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn shared_copula_is_recovered(seed in any::<u64>(), fa in 0usize..4, fb in 0usize..4) {
        let g = TimeGrid::uniform(1.0, 2.0, 4).unwrap();
        let c = sample_fbm_copula(&g, 0.7, 200, seed).unwrap();
        let fams = families();
        let ua = extract_copula(&merge(&c, &fams[fa]).unwrap(), &fams[fa], 1).unwrap();
        let ub = extract_copula(&merge(&c, &fams[fb]).unwrap(), &fams[fb], 1).unwrap();
        for (a, b) in ua.paths().as_slice().iter().zip(ub.paths().as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
