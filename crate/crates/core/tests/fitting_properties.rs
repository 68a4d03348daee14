use proptest::prelude::*;
use sizedist::fitting::{
    em_run, fit_lognormal, fit_mixture, fit_pareto, fit_stexp, log_likelihood, stexp_profile,
    EmConfig, FitConfig,
};
use sizedist::model::MixtureParams;
use sizedist::DistributionModel;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mixtures_nest_the_lognormal(mu in 2.0f64..8.0, sigma in 0.5f64..2.5, seed in any::<u64>()) {
        let s = DistributionModel::lognormal(mu, sigma).unwrap().sample(300, seed);
        let config = FitConfig { std_errors: false, ..FitConfig::default() };
        let ln = fit_lognormal(&s).unwrap().log_likelihood;
        let two = fit_mixture(&s, 2, &config, seed).unwrap().log_likelihood;
        let three = fit_mixture(&s, 3, &config, seed).unwrap().log_likelihood;
        prop_assert!(two >= ln - 1e-6, "2LN {two} < LN {ln}");
        prop_assert!(three >= two - 1e-6, "3LN {three} < 2LN {two}");
    }

    #[test]
    fn em_never_descends(
        seed in any::<u64>(),
        m1 in 0.0f64..5.0,
        m2 in 3.0f64..9.0,
        s1 in 0.3f64..3.0,
        s2 in 0.3f64..3.0,
        p in 0.1f64..0.9,
    ) {
        let data = DistributionModel::mixture(&[(3.0, 1.0), (6.0, 1.5)], &[0.4]).unwrap().sample(400, seed);
        let init = MixtureParams::new(&[(m1, s1), (m2, s2)], &[p]).unwrap();
        let run = em_run(data.logs(), &init, &EmConfig::default());
        for w in run.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stexp_fit_is_a_profile_maximum(g in 0.15f64..0.9, eta in 10.0f64..5e3, seed in any::<u64>()) {
        let s = DistributionModel::stexp(g, eta).unwrap().sample(800, seed);
        let fit = fit_stexp(&s, &FitConfig::default()).unwrap();
        let ps: Vec<f64> = fit.model.parameters().into_iter().map(|p| p.1).collect();
        let (ll, eta_hat) = stexp_profile(&s, ps[0]);
        prop_assert!((ll - fit.log_likelihood).abs() < 1e-6 * ll.abs());
        prop_assert!((eta_hat - ps[1]).abs() < 1e-8 * eta_hat);
        if !fit.diagnostics.boundary_fit {
            for d in [-1e-3, 1e-3] {
                let gg = (ps[0] + d).min(1.0);
                prop_assert!(stexp_profile(&s, gg).0 <= fit.log_likelihood + 1e-9 * ll.abs());
            }
        }
        prop_assert!((log_likelihood(&fit.model, &s).unwrap() - fit.log_likelihood).abs() < 1e-6 * ll.abs());
    }

    #[test]
    fn closed_forms_beat_perturbations(mu in -1.0f64..9.0, sigma in 0.2f64..3.0, seed in any::<u64>(), d in -0.05f64..0.05) {
        prop_assume!(d.abs() > 1e-4);
        let s = DistributionModel::lognormal(mu, sigma).unwrap().sample(500, seed);
        let fit = fit_lognormal(&s).unwrap();
        let theta: Vec<f64> = fit.model.parameters().into_iter().map(|p| p.1).collect();
        for i in 0..2 {
            let mut t = theta.clone();
            t[i] += d;
            let ll = log_likelihood(&fit.model.with_parameters(&t).unwrap(), &s).unwrap();
            prop_assert!(ll < fit.log_likelihood);
        }
    }

    #[test]
    fn hill_estimator_is_the_pareto_maximum(alpha in 1.2f64..3.5, x_min in 1.0f64..1e4, seed in any::<u64>(), d in -0.1f64..0.1) {
        prop_assume!(d.abs() > 1e-4);
        let s = DistributionModel::pareto(alpha, x_min).unwrap().sample(400, seed);
        let fit = fit_pareto(&s, x_min).unwrap();
        let a_hat = fit.model.parameters()[0].1;
        let n = s.len() as f64;
        let hill = 1.0 + n / s.logs().iter().map(|y| y - x_min.ln()).sum::<f64>();
        prop_assert!((a_hat - hill).abs() < 1e-10 * hill);
        let worse = DistributionModel::pareto(a_hat + d, x_min).unwrap();
        prop_assert!(log_likelihood(&worse, &s).unwrap() < fit.log_likelihood);
    }
}
