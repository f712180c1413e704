use gshrink::model::kl_neighborhood;
use gshrink::prior::{PriorFamily, PriorSpec};
use gshrink::quad::{
    integrate, marginal_prior_density, posterior_kappa_mean, posterior_lambda_moments, prior_kl_mass, QuadConfig,
};
use gshrink::special::{kappa_star, log_beta};
use proptest::prelude::*;

fn cfg() -> QuadConfig {
    QuadConfig::default()
}

fn sb() -> PriorSpec {
    PriorSpec::new(PriorFamily::Sb, 2.0, 0.5)
}

fn irb() -> PriorSpec {
    PriorSpec::new(PriorFamily::Irb, 2.0, 0.5)
}

fn gl() -> PriorSpec {
    PriorSpec::new(PriorFamily::Gl, 1.0, 1.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn density(lambda: f64, prior: &PriorSpec) -> f64 {
    marginal_prior_density(lambda, prior, &cfg()).unwrap()
}

fn slope(prior: &PriorSpec, l1: f64, l2: f64) -> f64 {
    (density(l2, prior).ln() - density(l1, prior).ln()) / (l2.ln() - l1.ln())
}

// Reference values: 30-digit mpmath integration over u of the unreduced formulas.
#[test]
fn marginal_density_matches_high_precision_reference() {
    let cases = [
        (0.01, 0.0147107787212166, 0.436145168669282),
        (0.5, 0.502092600771603, 0.471439007599201),
        (0.9, 1.2276162540582, 1.17565093650724),
        (3.0, 0.0100447174133665, 0.00955919271966016),
        (100.0, 4.41072715256826e-7, 6.40102514820056e-7),
    ];
    for (lambda, p_sb, p_irb) in cases {
        assert!(rel(density(lambda, &sb()), p_sb) < 1e-9, "sb at {lambda}");
        assert!(rel(density(lambda, &irb()), p_irb) < 1e-9, "irb at {lambda}");
    }
    let sb1 = PriorSpec::new(PriorFamily::Sb, 2.0, 1.0);
    assert!(rel(density(1.0, &sb1), 0.917320219357595) < 1e-9);
}

#[test]
fn marginal_density_normalizes() {
    // λ = e^t over t ∈ [-600, 60]; the IRB left tail below e^{-600} holds
    // about 1e-6 of the mass.
    let loose = QuadConfig {
        rel_tol: 1e-8,
        ..cfg()
    };
    for prior in [sb(), irb()] {
        let f = |t: f64| {
            let lambda = t.exp();
            marginal_prior_density(lambda, &prior, &loose).unwrap() * lambda
        };
        let total: f64 = [(-600.0, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 60.0)]
            .iter()
            .map(|&(a, b)| integrate(f, a, b, &loose).unwrap().value)
            .sum();
        assert!((total - 1.0).abs() < 1e-5, "{:?}: {total}", prior.family);
    }
}

#[test]
fn sb_left_tail_slope() {
    let s = slope(&sb(), 1e-4, 1e-2);
    assert!((s - 1.0).abs() < 0.15, "{s}");
}

#[test]
fn irb_right_tail_slope() {
    let s = slope(&irb(), 1e2, 1e4);
    assert!((s + 2.0).abs() < 0.3, "{s}");
}

/// `ln` of the tail equivalent `λ^{-2} ξ^{-2} π(1/ξ)`.
fn ln_tail_equivalent(lambda: f64, prior: &PriorSpec) -> f64 {
    let xi = 1.0 / lambda - 1.0 - (1.0 / lambda).ln();
    let u = 1.0 / xi;
    let ln_pi = prior.local_prior().ln_density(u);
    -2.0 * lambda.ln() - 2.0 * xi.ln() + ln_pi
}

#[test]
fn tail_slopes_follow_log_corrected_equivalent() {
    for prior in [sb(), irb()] {
        // Pre-asymptotic ranges get a wider band than the far tails.
        for (l1, l2, tol) in [(1e-4, 1e-2, 0.12), (1e2, 1e4, 0.12), (1e-12, 1e-10, 0.02), (1e10, 1e12, 0.02)] {
            let s = slope(&prior, l1, l2);
            let eq = (ln_tail_equivalent(l2, &prior) - ln_tail_equivalent(l1, &prior)) / (l2.ln() - l1.ln());
            assert!((s - eq).abs() < tol, "{:?} [{l1}, {l2}]: {s} vs {eq}", prior.family);
        }
    }
}

#[test]
fn tail_equivalent_constant() {
    // p / equivalent → Γ(α + 1): 2 for SB(a=2), 1 for IRB.
    let r_sb = (density(1e-40, &sb()).ln() - ln_tail_equivalent(1e-40, &sb())).exp();
    assert!((r_sb - 2.0).abs() < 0.05, "{r_sb}");
    let r_irb = (density(1e-200, &irb()).ln() - ln_tail_equivalent(1e-200, &irb())).exp();
    assert!((r_irb - 1.0).abs() < 0.1, "{r_irb}");
}

#[test]
fn spike_at_one_for_half_b() {
    let p = |l: f64| density(l, &sb());
    for side in [-1.0, 1.0] {
        let vals: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|h| p(1.0 + side * h)).collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
    }
    let irb_vals: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|h| density(1.0 - h, &irb())).collect();
    assert!(irb_vals[0] < irb_vals[1] && irb_vals[1] < irb_vals[2]);
}

#[test]
fn bounded_at_one_for_unit_b() {
    let prior = PriorSpec::new(PriorFamily::Sb, 2.0, 1.0);
    let p1 = density(1.0, &prior);
    for h in [0.1, 0.01, 0.001] {
        for l in [1.0 - h, 1.0 + h] {
            let p = density(l, &prior);
            assert!(p <= p1 * (1.0 + 1e-9) && p * l * l <= p1 * (1.0 + 1e-9));
        }
    }
    assert!(rel(density(1.0 + 1e-6, &prior), p1) < 1e-4);
}

// ---------------------------------------------------------------------------
// Posterior shrinkage.

#[test]
fn kappa_mean_matches_high_precision_reference() {
    let cases = [
        (0.5, 0.554973130626088, 0.553853188419776),
        (7.0, 0.217813010309549, 0.198144600469667),
        (50.0, 0.109948494767123, 0.0890104790349633),
    ];
    for (y, k_sb, k_irb) in cases {
        assert!(rel(posterior_kappa_mean(y, 5.0, &sb(), &cfg()).unwrap(), k_sb) < 1e-9);
        assert!(rel(posterior_kappa_mean(y, 5.0, &irb(), &cfg()).unwrap(), k_irb) < 1e-9);
    }
}

#[test]
fn gl_shrinkage_is_constant() {
    for delta in [1.0, 5.0, 10.0] {
        for y in [0.1, 1.0, 100.0] {
            let k = posterior_kappa_mean(y, delta, &gl(), &cfg()).unwrap();
            assert!((k - 1.0 / (delta + 1.0)).abs() < 1e-10);
        }
    }
}

#[test]
fn large_y_follows_kappa_star_for_sb() {
    let delta = 5.0;
    let k = posterior_kappa_mean(1e6 / delta, delta, &sb(), &cfg()).unwrap();
    let ratio = k * delta / (3.0 * kappa_star(1e6).unwrap());
    assert!((0.7..=1.3).contains(&ratio), "{ratio}");
}

#[test]
fn large_y_ratio_trends_to_one_for_irb() {
    // Log-log convergence; see the decisions ledger for the full table.
    let delta = 5.0;
    let ratio = |yp: f64| posterior_kappa_mean(yp / delta, delta, &irb(), &cfg()).unwrap() * delta / kappa_star(yp).unwrap();
    let r: Vec<f64> = [1e6, 1e20, 1e100].iter().map(|&yp| ratio(yp)).collect();
    assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 1.0, "{r:?}");
}

#[test]
fn shrinkage_decays_for_large_y() {
    let delta = 5.0;
    for prior in [sb(), irb()] {
        let k4 = posterior_kappa_mean(1e4 / delta, delta, &prior, &cfg()).unwrap();
        let k8 = posterior_kappa_mean(1e8 / delta, delta, &prior, &cfg()).unwrap();
        assert!(k8 < k4);
    }
}

#[test]
fn small_y_limits() {
    assert!(posterior_kappa_mean(1e-6, 5.0, &sb(), &cfg()).unwrap() < 0.01);
    let k4 = posterior_kappa_mean(1e-4, 1.0, &sb(), &cfg()).unwrap();
    let k6 = posterior_kappa_mean(1e-6, 1.0, &sb(), &cfg()).unwrap();
    assert!(rel(k4, k6) < 0.05 && k6 > 0.05, "{k4} {k6}");
    assert!(posterior_kappa_mean(1e-6, 5.0, &irb(), &cfg()).unwrap() < 0.05);
}

#[test]
fn lambda_moments_match_reference() {
    let m = posterior_lambda_moments(7.0, 5.0, &sb(), 1.0, &cfg()).unwrap();
    assert!(rel(m.mean, 5.69312193814271) < 1e-9);
    assert!(rel(m.variance.unwrap(), 6.98400070179394) < 1e-8);
    let m50 = posterior_lambda_moments(50.0, 5.0, &sb(), 5.0, &cfg()).unwrap();
    assert!(rel(m50.mean, 41.7574226384889) < 1e-9);
}

#[test]
fn mean_identity_through_independent_integrals() {
    for prior in [sb(), irb()] {
        for (y, beta) in [(0.5, 1.0), (7.0, 2.0), (50.0, 5.0), (1e4, 3.0)] {
            let m = posterior_lambda_moments(y, 5.0, &prior, beta, &cfg()).unwrap();
            let expected = beta + (1.0 - m.kappa_mean) * (y - beta);
            assert!(rel(m.mean, expected) < 1e-9, "{y} {beta}");
        }
    }
}

#[test]
fn large_signals_escape_shrinkage() {
    let m = posterior_lambda_moments(100.0, 5.0, &sb(), 5.0, &cfg()).unwrap();
    let gl_mean = posterior_lambda_moments(100.0, 5.0, &gl(), 5.0, &cfg()).unwrap().mean;
    assert!((gl_mean - (5.0 + 95.0 * 5.0 / 6.0)).abs() < 1e-12);
    assert!(m.mean > gl_mean);
    assert!(rel(m.mean, 86.5697734566) < 1e-9);
}

#[test]
fn tolerance_halving_is_self_consistent() {
    let coarse = QuadConfig {
        rel_tol: 1e-6,
        ..cfg()
    };
    let fine = QuadConfig {
        rel_tol: 5e-7,
        ..cfg()
    };
    for y in [0.5, 7.0, 1e5] {
        let a = posterior_kappa_mean(y, 5.0, &irb(), &coarse).unwrap();
        let b = posterior_kappa_mean(y, 5.0, &irb(), &fine).unwrap();
        assert!(rel(a, b) < 3e-6);
    }
    let a = marginal_prior_density(0.3, &sb(), &coarse).unwrap();
    let b = marginal_prior_density(0.3, &sb(), &fine).unwrap();
    assert!(rel(a, b) < 1e-6);
}

// ---------------------------------------------------------------------------
// KL neighbourhood mass. References from the swapped integration order
// ∫ π(u) [P(1+u, u/lo) − P(1+u, u/hi)] du.

#[test]
fn kl_mass_matches_swapped_order() {
    let cases = [
        (1.0, 1e-2, 0.23913700249420933),
        (1.0, 1e-3, 0.10305614463800218),
        (1.0, 1e-4, 0.041298464709411585),
        (3.0, 1e-2, 0.00382451368928141),
        (3.0, 1e-4, 0.00038118302117783547),
    ];
    for (l0, eps, want) in cases {
        let got = prior_kl_mass(l0, eps, 5.0, &sb(), &cfg()).unwrap();
        assert!(rel(got, want) < 1e-8, "{l0} {eps}: {got} vs {want}");
    }
}

#[test]
fn kl_mass_scales_with_root_eps() {
    let m = |l0: f64, eps: f64| prior_kl_mass(l0, eps, 5.0, &sb(), &cfg()).unwrap();
    let off: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| m(3.0, e) / e.sqrt()).collect();
    assert!(off.iter().all(|r| rel(*r, off[2]) < 0.01), "{off:?}");
    let at_one: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| m(1.0, e) / (e.sqrt() * (1.0 / e).ln())).collect();
    let (lo, hi) = at_one.iter().fold((f64::MAX, 0f64), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi / lo < 1.25, "{at_one:?}");
}

#[test]
fn kl_mass_vanishes_with_eps() {
    let m = prior_kl_mass(2.0, 1e-12, 5.0, &sb(), &cfg()).unwrap();
    assert!(m > 0.0 && m < 1e-5);
    let gl_mass = prior_kl_mass(1.0, 1e-3, 5.0, &gl(), &cfg()).unwrap();
    let nb = kl_neighborhood(1.0, 1e-3, 5.0).unwrap();
    let direct = integrate(|l: f64| l.powi(-3) * (-1.0 / l).exp(), nb.lo, nb.hi, &cfg()).unwrap().value;
    assert!(rel(gl_mass, direct) < 1e-9);
}

#[test]
fn irb_normalizer_consistent() {
    // B(b, a) used by the IRB density is symmetric in its arguments.
    assert!((log_beta(0.5, 2.0).unwrap() - log_beta(2.0, 0.5).unwrap()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kappa_mean_in_unit_interval(ln_y in -12f64..15.0, delta in 0.5f64..20.0, irb_family in any::<bool>()) {
        let prior = if irb_family { irb() } else { sb() };
        let k = posterior_kappa_mean(ln_y.exp(), delta, &prior, &cfg()).unwrap();
        prop_assert!(k > 0.0 && k < 1.0);
    }

    #[test]
    fn marginal_bounded_by_value_at_one(ln_l in -6f64..6.0) {
        let prior = PriorSpec::new(PriorFamily::Irb, 1.5, 1.0);
        let p1 = marginal_prior_density(1.0, &prior, &cfg()).unwrap();
        let l = ln_l.exp();
        let p = marginal_prior_density(l, &prior, &cfg()).unwrap();
        prop_assert!(p * l * l <= p1 * (1.0 + 1e-9));
    }

    #[test]
    fn kl_mass_is_probability(l0 in 0.2f64..5.0, ln_eps in -8f64..0.0) {
        let m = prior_kl_mass(l0, ln_eps.exp(), 5.0, &sb(), &QuadConfig { rel_tol: 1e-7, ..cfg() }).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }
}
