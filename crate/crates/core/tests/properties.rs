//! Randomized invariants of the samplers, the MCMC building blocks and the
//! scenario generator.

use gshrink::dist::{sample_gamma, sample_gig, sample_irb, sample_sb, GigParams};
use gshrink::mcmc::{miller_gamma_approx, nu_logpdf_irb, nu_logpdf_sb, run_chain, tau_logpdf_gl, McmcConfig};
use gshrink::model::conditional_lambda_posterior;
use gshrink::sim::{generate_scenario, ScenarioSpec};
use gshrink::{Observation, PriorFamily, PriorSpec, RngHandle};
use proptest::prelude::*;

type Target = Box<dyn Fn(f64) -> (f64, f64, f64)>;

/// Central differences of `f` and `f′` agree with the analytic derivatives.
fn check_derivatives(f: &Target, x: f64) -> Result<(), TestCaseError> {
    let h = 1e-5 * x;
    let (_, d1, d2) = f(x);
    let num1 = (f(x + h).0 - f(x - h).0) / (2.0 * h);
    let num2 = (f(x + h).1 - f(x - h).1) / (2.0 * h);
    prop_assert!((num1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "f' at {}: {} vs {}", x, d1, num1);
    prop_assert!((num2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "f'' at {}: {} vs {}", x, d2, num2);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samplers_are_deterministic_per_seed(seed in any::<u64>(), a in 0.1f64..10.0, b in 0.1f64..0.99) {
        let run = |seed: u64| {
            let mut rng = RngHandle::new(seed);
            let gig = GigParams::new(a - 5.0, b, a).unwrap();
            (0..50)
                .map(|_| {
                    [
                        sample_gamma(a, b, &mut rng).unwrap(),
                        sample_gig(gig, &mut rng).unwrap(),
                        sample_sb(a, b, &mut rng).unwrap(),
                        sample_irb(b, a, &mut rng).unwrap(),
                    ]
                })
                .collect::<Vec<_>>()
        };
        let first = run(seed);
        prop_assert_eq!(&first, &run(seed));
        prop_assert!(first.iter().flatten().all(|x| x.is_finite() && *x > 0.0));
    }

    #[test]
    fn target_derivatives_match_finite_differences(
        x in 0.05f64..20.0,
        t in 0.1f64..5.0,
        tau in 0.1f64..5.0,
        beta in 0.1f64..5.0,
        lambda in 0.1f64..20.0,
        s in 0.01f64..3.0,
        w in 0.01f64..3.0,
        z in 0.1f64..5.0,
    ) {
        let targets: [Target; 3] = [
            Box::new(move |v| nu_logpdf_sb(v, t, tau, beta, lambda, 2.0)),
            Box::new(move |v| nu_logpdf_irb(v, s, w, z, tau, beta, lambda)),
            Box::new(move |v| tau_logpdf_gl(v, &[lambda, 1.0 / lambda, beta], beta, 0.1, 0.1)),
        ];
        for f in &targets {
            check_derivatives(f, x)?;
        }
    }

    #[test]
    fn miller_is_exact_for_gamma_targets(shape in 0.2f64..200.0, rate in 0.01f64..100.0, start in 0.01f64..100.0) {
        // f = (A − 1) ln x − B x
        let fit = miller_gamma_approx(|x| (shape - 1.0) / x - rate, |x| -(shape - 1.0) / (x * x), start, &McmcConfig::default()).unwrap();
        prop_assert!(fit.converged && !fit.fallback);
        prop_assert!((fit.shape / shape - 1.0).abs() < 1e-9);
        prop_assert!((fit.rate / rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn conditional_mean_satisfies_shrinkage_identity(
        y in 0.01f64..100.0,
        delta in 0.5f64..20.0,
        eta in 0.2f64..5.0,
        nu in 0.01f64..50.0,
        beta in 0.01f64..50.0,
    ) {
        let obs = Observation::with_offset(y, delta, eta).unwrap();
        let mean = conditional_lambda_posterior(&obs, nu, beta).unwrap().mean().unwrap();
        let kappa = nu / (delta + nu);
        let expected = beta + (1.0 - kappa) * (y / eta - beta);
        prop_assert!((mean - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn scenarios_are_deterministic_and_positive(id in 1u8..=6, seed in any::<u64>(), n in 1usize..300) {
        let spec = ScenarioSpec { n, ..ScenarioSpec::standard(id, seed) };
        let a = generate_scenario(&spec, &mut RngHandle::new(seed)).unwrap();
        let b = generate_scenario(&spec, &mut RngHandle::new(seed)).unwrap();
        prop_assert_eq!(&a.y, &b.y);
        prop_assert_eq!(&a.lambda_true, &b.lambda_true);
        prop_assert_eq!(a.y.len(), n);
        prop_assert!(a.y.iter().chain(&a.lambda_true).all(|v| v.is_finite() && *v > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_chains_stay_in_the_support(
        ys in prop::collection::vec(0.01f64..200.0, 1..8),
        delta in 0.5f64..20.0,
        family in prop::sample::select(PriorFamily::ALL.to_vec()),
        seed in any::<u64>(),
    ) {
        let data: Vec<Observation> = ys.iter().map(|&y| Observation::new(y, delta).unwrap()).collect();
        let cfg = McmcConfig { burnin: 100, samples: 100, seed, ..McmcConfig::default() };
        let out = run_chain(&data, &PriorSpec::new(family, 2.0, 0.5), &cfg).unwrap();
        prop_assert!(out.lambda.iter().flatten().all(|l| l.is_finite() && *l > 0.0));
        prop_assert!(out.kappa.iter().flatten().all(|k| *k > 0.0 && *k < 1.0));
        prop_assert!(out.beta.iter().chain(&out.tau).all(|v| v.is_finite() && *v > 0.0));
        let again = run_chain(&data, &PriorSpec::new(family, 2.0, 0.5), &cfg).unwrap();
        prop_assert_eq!(out.lambda, again.lambda);
    }
}
