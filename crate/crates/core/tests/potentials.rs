use linescatter::jost::scattering_at;
use linescatter::{Error, Potential, SampledGrid};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn piecewise() -> impl Strategy<Value = Potential> {
    (
        prop::collection::vec(-3.0..3.0f64, 1..5),
        -1.0..1.0f64,
        0.3..2.0f64,
    )
        .prop_map(|(values, x0, len)| {
            let n = values.len();
            let breaks = (0..=n).map(|i| x0 + len * i as f64 / n as f64).collect();
            Potential::piecewise(breaks, values).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_multiplies_norms(v in piecewise(), c in -4.0..4.0f64) {
        let (a, b) = (v.norms(), v.scaled(c).norms());
        prop_assert!((b.l2 - c.abs() * a.l2).abs() <= 1e-12 * (1.0 + a.l2));
        prop_assert!((b.integral - c * a.integral).abs() <= 1e-12 * (1.0 + a.integral.abs()));
        prop_assert!((v.scaled(c).max_abs() - c.abs() * v.max_abs()).abs() <= 1e-12 * (1.0 + v.max_abs()));
    }

    #[test]
    fn translation_keeps_transmission(v in piecewise(), s in -2.0..2.0f64, k in 0.2..6.0f64) {
        let moved = v.shifted(s);
        prop_assert!((moved.norms().l2 - v.norms().l2).abs() <= 1e-12 * (1.0 + v.norms().l2));
        let step = v.default_step();
        let (t, l, r) = scattering_at(&v, k, step).unwrap();
        let (ts, ls, rs) = scattering_at(&moved, k, step).unwrap();
        let phase = C::new(0.0, 2.0 * k * s).exp();
        prop_assert!((t - ts).norm() <= 1e-9);
        prop_assert!((ls - l * phase).norm() <= 1e-9);
        prop_assert!((rs - r / phase).norm() <= 1e-9);
    }

    #[test]
    fn json_roundtrip(v in piecewise()) {
        let back = Potential::from_json(&v.to_json()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn evaluate_vanishes_off_support(v in piecewise(), dx in 1e-6..5.0f64) {
        let (a, b) = v.support();
        prop_assert_eq!(v.evaluate(a - dx), 0.0);
        prop_assert_eq!(v.evaluate(b + dx), 0.0);
    }
}

#[test]
fn refinement_converges() {
    let bump = |x: f64| -6.0 * (std::f64::consts::PI * x).sin().powi(2);
    let k = 1.3;
    let t_at = |cells: usize| {
        let v = Potential::SampledGrid(SampledGrid::from_fn(0.0, 1.0, cells, bump).unwrap());
        scattering_at(&v, k, 1e-4).unwrap().0
    };
    let diffs: Vec<f64> = [16, 32, 64, 128]
        .windows(2)
        .map(|w| (t_at(w[0]) - t_at(w[1])).norm())
        .collect();
    assert!(diffs[1] < diffs[0] && diffs[2] < diffs[1], "{diffs:?}");
    assert!(diffs[2] < 1e-5, "{diffs:?}");
}

#[test]
fn grid_interpolation_is_linear() {
    let v = Potential::grid(0.0, 0.5, vec![1.0, 3.0, -1.0]).unwrap();
    assert_eq!(v.evaluate(0.25), 2.0);
    assert_eq!(v.evaluate(0.75), 1.0);
    assert_eq!(v.support(), (0.0, 1.0));
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(
        Potential::piecewise(vec![0.0, 1.0, 0.5], vec![1.0, 2.0]),
        Err(Error::InvalidPotential(_))
    ));
    assert!(matches!(
        Potential::piecewise(vec![0.0, 1.0], vec![f64::NAN]),
        Err(Error::InvalidPotential(_))
    ));
    assert!(Potential::grid(0.0, -0.1, vec![1.0, 2.0]).is_err());
    assert!(Potential::from_json(r#"{"form":"wavelet"}"#).is_err());
}

#[test]
fn square_well_json_form() {
    let v = Potential::from_json(r#"{"form":"squarewell","epsilon":5.0}"#).unwrap();
    assert_eq!(v.support(), (0.0, 1.0));
    assert_eq!(v.evaluate(0.5), -5.0);
    assert!((v.norms().l2 - 5.0).abs() < 1e-15);
}
