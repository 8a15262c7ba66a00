use heatbath::model::{
    apply_generator, carre_du_champ, energy, energy_generator, Eval, ModelParams, Smoothing, State4,
};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = State4> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c, d)| State4::new(a, b, c, d))
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64, 1.0..3.0f64)
        .prop_map(|(a, g, t, ti, k)| ModelParams::new(a, g, t, ti, k, Smoothing::Pure).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generator_of_energy(x in state(), m in params()) {
        let jet = Eval::energy(&x, &m).jet;
        let l = apply_generator(&jet, &x, &m);
        prop_assert!((l - energy_generator(&x, &m)).abs() < 1e-12);
        prop_assert!((jet.value - energy(&x, &m)).abs() == 0.0);
    }

    #[test]
    fn carre_du_champ_is_symmetric_and_nonnegative(x in state(), m in params()) {
        let f = Eval::energy(&x, &m).jet;
        let g = Eval::p1(&x, &m).powf(3.0).jet;
        let (fg, gf) = (carre_du_champ(&f, &g, &m), carre_du_champ(&g, &f, &m));
        prop_assert!((fg - gf).abs() <= 1e-15 * fg.abs());
        prop_assert!(carre_du_champ(&f, &f, &m) >= 0.0);
    }

    // L(f^2) = 2 f L f + 2 Gamma(f, f)
    #[test]
    fn square_obeys_chain_rule(x in state(), m in params()) {
        let f = Eval::energy(&x, &m);
        let sq = f.square();
        let want = 2.0 * f.jet.value * f.generator + 2.0 * carre_du_champ(&f.jet, &f.jet, &m);
        prop_assert!((sq.generator - want).abs() <= 1e-10 * (1.0 + want.abs()));
        let from_jet = apply_generator(&sq.jet, &x, &m);
        prop_assert!((sq.generator - from_jet).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn regularised_potential_is_even_and_smooth_beyond_one(q in 1.5..50.0f64, k in 0.3..3.0f64) {
        let m = ModelParams::new(1.0, 1.0, 1.0, 1.0, k, Smoothing::Regularized).unwrap();
        let p = m.potential();
        prop_assert_eq!(p.v(q), p.v(-q));
        prop_assert_eq!(p.dv(q), -p.dv(-q));
        let h = 1e-5 * q;
        let fd = (p.v(q + h) - p.v(q - h)) / (2.0 * h);
        prop_assert!((fd - p.dv(q)).abs() <= 1e-6 * (1.0 + p.dv(q).abs()));
    }
}

#[test]
fn pure_power_below_one_rejected() {
    assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.75, Smoothing::Pure).is_err());
    assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 2.0, Smoothing::Pure).is_err());
    assert!(ModelParams::new(1.0, 1.0, 1.0, f64::NAN, 2.0, Smoothing::Pure).is_err());
}
