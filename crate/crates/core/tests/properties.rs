mod common;

use metareg::estimators::{fit_constrained, Constraint};
use metareg::inference::{deviance_test, profile_interval, wald_interval};
use metareg::model::{adjusted_score_psi, log_likelihood, penalized_log_likelihood, score};
use metareg::simulation::{gen_brockwell, BrockwellConfig};
use metareg::{fit_dl, fit_ml, fit_mpl, FitOptions, IntervalMethod, MetaDataset, Method, Theta};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn dataset_strategy() -> impl Strategy<Value = MetaDataset> {
    (any::<u64>(), 5usize..30, 1usize..=3).prop_map(|(seed, k, p)| {
        let mut rng = common::rng(seed);
        common::random_dataset(&mut rng, k, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn score_is_gradient_of_loglik(ds in dataset_strategy(), psi in 0.01f64..1.0, shift in -0.5f64..0.5) {
        let p = ds.p();
        let beta: Vec<f64> = (0..p).map(|j| shift + 0.1 * j as f64).collect();
        let theta = Theta::new(beta.clone(), psi);
        let s = score(&ds, &theta).unwrap();
        let h = 1e-5 * psi;
        let ll = |d: f64| log_likelihood(&ds, &Theta::new(beta.clone(), psi + d)).unwrap();
        let fd = (ll(h) - ll(-h)) / (2.0 * h);
        let scale = s.iter().fold(fd.abs(), |m, v| m.max(v.abs()));
        prop_assert!((s[p] - fd).abs() <= 1e-6 * scale);

        let pl = |d: f64| penalized_log_likelihood(&ds, &Theta::new(beta.clone(), psi + d)).unwrap();
        let fd_star = (pl(h) - pl(-h)) / (2.0 * h);
        let adj = adjusted_score_psi(&ds, &theta).unwrap();
        prop_assert!((adj - fd_star).abs() <= 1e-6 * scale.max(fd_star.abs()));
    }

    #[test]
    fn permutation_gives_identical_estimates(ds in dataset_strategy(), seed in any::<u64>()) {
        let mut studies = ds.studies().to_vec();
        studies.shuffle(&mut common::rng(seed));
        let perm = MetaDataset::new(studies).unwrap();
        let opts = FitOptions::default();
        let a = fit_mpl(&ds, &opts).unwrap();
        let b = fit_mpl(&perm, &opts).unwrap();
        prop_assert_eq!(a.beta_hat, b.beta_hat);
        prop_assert_eq!(a.psi_hat.to_bits(), b.psi_hat.to_bits());
        prop_assert_eq!(fit_dl(&ds).unwrap().psi_hat.to_bits(), fit_dl(&perm).unwrap().psi_hat.to_bits());
    }

    #[test]
    fn estimates_are_scale_equivariant(ds in dataset_strategy(), c in 0.05f64..20.0) {
        let scaled = ds.rescaled(c).unwrap();
        let opts = FitOptions::default();
        for method in [Method::Dl, Method::Ml, Method::Mpl] {
            let fit = |d: &MetaDataset| match method {
                Method::Dl => fit_dl(d).unwrap(),
                Method::Ml => fit_ml(d, &opts).unwrap(),
                Method::Mpl => fit_mpl(d, &opts).unwrap(),
            };
            let (a, b) = (fit(&ds), fit(&scaled));
            for (x, y) in a.beta_hat.iter().zip(&b.beta_hat) {
                prop_assert!((c * x - y).abs() <= 1e-8 * (c * x).abs().max(c));
            }
            prop_assert!((c * c * a.psi_hat - b.psi_hat).abs() <= 1e-8 * (c * c) * a.psi_hat.max(1e-3));
        }
    }

    #[test]
    fn nested_deviances_are_nonnegative(ds in dataset_strategy()) {
        prop_assume!(ds.p() >= 2);
        let opts = FitOptions::default();
        let slope = Constraint::new(vec![ds.p() - 1], vec![0.0]);
        for method in [Method::Ml, Method::Mpl] {
            let t = deviance_test(&ds, &slope, method, &opts).unwrap();
            prop_assert!(t.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&t.p_value));
        }
    }

    #[test]
    fn constrained_fit_respects_constraint(ds in dataset_strategy(), v in -1.0f64..1.0) {
        let c = Constraint::new(vec![0], vec![v]);
        let fit = fit_constrained(&ds, Method::Mpl, &c, &FitOptions::default(), None).unwrap();
        prop_assert_eq!(fit.beta_hat[0], v);
        prop_assert!(fit.psi_hat >= 0.0);
    }

    #[test]
    fn profile_interval_contains_estimate(ds in dataset_strategy()) {
        let opts = FitOptions::default();
        for method in [IntervalMethod::ProfileMpl, IntervalMethod::ProfileMl] {
            let ci = profile_interval(&ds, 0, 0.95, method, &opts).unwrap();
            prop_assert!(ci.lower < ci.estimate && ci.estimate < ci.upper);
        }
    }
}

#[test]
fn deviance_invariant_to_covariate_rescaling() {
    let mut rng = common::rng(17);
    let opts = FitOptions::default();
    for _ in 0..10 {
        let ds = common::random_dataset(&mut rng, 20, 3);
        let stretched = MetaDataset::new(
            ds.studies()
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.covariates[1] *= 250.0;
                    s.covariates[2] *= 0.004;
                    s
                })
                .collect(),
        )
        .unwrap();
        for idx in [vec![1], vec![2], vec![1, 2]] {
            let c = Constraint::new(idx.clone(), vec![0.0; idx.len()]);
            let a = deviance_test(&ds, &c, Method::Mpl, &opts)
                .unwrap()
                .statistic;
            let b = deviance_test(&stretched, &c, Method::Mpl, &opts)
                .unwrap()
                .statistic;
            assert!((a - b).abs() <= 1e-8 * a.max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn wald_and_profile_agree_for_many_studies() {
    let cfg = BrockwellConfig::new(10_000, 0.05, 1, 5);
    let ds = gen_brockwell(&cfg, 0).unwrap();
    let opts = FitOptions::default();
    let fit = fit_mpl(&ds, &opts).unwrap();
    let wald = wald_interval(&fit, 0, 0.95).unwrap();
    let profile = profile_interval(&ds, 0, 0.95, IntervalMethod::ProfileMpl, &opts).unwrap();
    let width = wald.width();
    assert!((wald.lower - profile.lower).abs() < 0.01 * width);
    assert!((wald.upper - profile.upper).abs() < 0.01 * width);
}

#[test]
fn psi_score_root_matches_equal_variance_closed_form() {
    let y = [0.3, -0.4, 1.1, 0.8, 0.05, -0.2, 0.6];
    let s2 = 0.1;
    let ds = MetaDataset::meta_analysis(&y, &[s2; 7]).unwrap();
    let mean = y.iter().sum::<f64>() / 7.0;
    let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let opts = FitOptions::default();
    let ml = fit_ml(&ds, &opts).unwrap();
    let mpl = fit_mpl(&ds, &opts).unwrap();
    assert!((ml.psi_hat - (ss / 7.0 - s2)).abs() < 1e-10);
    assert!((mpl.psi_hat - (ss / 6.0 - s2)).abs() < 1e-10);
    let theta = Theta::new(vec![mean], ml.psi_hat);
    assert!(score(&ds, &theta).unwrap()[1].abs() < 1e-8);
    let theta = Theta::new(vec![mean], mpl.psi_hat);
    assert!(adjusted_score_psi(&ds, &theta).unwrap().abs() < 1e-8);
}
