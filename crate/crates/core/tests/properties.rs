use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use riesz_lab::assumptions::sample_theorem_family;
use riesz_lab::bellman::{beta_derivs, BellmanParams};
use riesz_lab::harness::default_systems;
use riesz_lab::normest::{h_function, polarization_constant, skew_constant};
use riesz_lab::orthosys::AxisSystem;
use riesz_lab::quadgrid::{gauss_rule, lp_norm};
use riesz_lab::spectral::{gauss_grid, p_star, riesz_vector_with, synth_with, CoeffFn, GridTables, ProductSystem};
use riesz_lab::tolerances::Tolerances;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_star_is_symmetric_under_duality(p in 1.01f64..50.0) {
        let q = p / (p - 1.0);
        prop_assert!((p_star(p) - p_star(q)).abs() <= 1e-12 * p_star(p));
        prop_assert!(p_star(p) >= 2.0 - 1e-12);
    }

    #[test]
    fn h_stays_below_six(s in 1e-9f64..=1.0) {
        prop_assert!(h_function(s) < 6.0);
    }

    #[test]
    fn polarization_and_skew_are_dominated(lp in 2f64.ln()..1000f64.ln()) {
        let p = lp.exp();
        let cap = 6.0 * (p_star(p) - 1.0);
        prop_assert!(polarization_constant(p) <= cap);
        prop_assert!(skew_constant(p) <= cap);
    }

    #[test]
    fn beta_respects_size_and_monotonicity(
        p in 1.1f64..8.0,
        l1 in -4f64..3.0,
        l2 in -4f64..3.0,
    ) {
        let b = BellmanParams::new(p, 1, 1, 0.0).unwrap();
        let (s1, s2) = (l1.exp(), l2.exp());
        let d = beta_derivs(&b, s1, s2);
        let cap = (1.0 + b.gamma) * (s1.powf(b.p) + s2.powf(b.q));
        prop_assert!(d.value >= 0.0);
        prop_assert!(d.value <= cap * (1.0 + 1e-14));
        prop_assert!(d.d1 >= 0.0 && d.d2 >= 0.0);
    }

    #[test]
    fn sampled_systems_are_orthonormal(which in 0usize..7, seed in any::<u64>(), j in 0usize..=12, k in 0usize..=12) {
        let template = default_systems()[which];
        let fam = sample_theorem_family(template, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(fam.theorem_range());
        let s = AxisSystem::new(fam).unwrap();
        let rule = gauss_rule(&s, 26).unwrap();
        let ip = rule.integrate(|x| s.eval_phi(j, x).unwrap() * s.eval_phi(k, x).unwrap());
        let want = if j == k { 1.0 } else { 0.0 };
        prop_assert!((ip - want).abs() <= 1e-10, "{fam:?} j={j} k={k} ip={ip}");
    }

    #[test]
    fn ladder_norm_matches_spectral_gap(which in 0usize..7, k in 1usize..=15) {
        let s = AxisSystem::new(default_systems()[which]).unwrap();
        let rule = gauss_rule(&s, 30).unwrap();
        let n2 = rule.integrate(|x| s.eval_delta_phi(k, x).unwrap().powi(2));
        let want = s.lambda(k) - s.a;
        prop_assert!((n2 - want).abs() <= 1e-8 * want.max(1.0), "k={k} got {n2} want {want}");
    }

    #[test]
    fn riesz_vector_contracts_in_l2(which in 0usize..7, d in 1usize..=2, seed in any::<u64>()) {
        let sys = ProductSystem::uniform(default_systems()[which], d).unwrap();
        let n = 5;
        let t = GridTables::new(&sys, gauss_grid(&sys, 2 * n + 2).unwrap(), n).unwrap();
        let f = CoeffFn::random(&sys, n, false, &mut ChaCha8Rng::seed_from_u64(seed));
        let nf = lp_norm(&synth_with(&f, &t).unwrap(), 2.0).unwrap();
        let nr = lp_norm(&riesz_vector_with(&f, &t).unwrap(), 2.0).unwrap();
        prop_assert!(nr <= nf * (1.0 + 1e-10), "{nr} > {nf}");
    }

    #[test]
    fn tolerance_overrides_round_trip(v in 1e-15f64..1.0) {
        let mut t = Tolerances::default();
        t.apply_override(&format!("form1.relerr={v}")).unwrap();
        prop_assert_eq!(t.get("form1.relerr"), v);
        prop_assert!(t.apply_override("form1.relerr").is_err());
    }
}
