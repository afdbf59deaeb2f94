use std::f64::consts::PI;

use linescatter::jost::{
    bound_states, inverse_transmission, scattering_at, scattering_coefficients, solve_jost,
    zero_energy_info, zero_energy_logderivative, BoundStateData,
};
use linescatter::{Error, Potential};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn piecewise() -> impl Strategy<Value = Potential> {
    (
        prop::collection::vec(-4.0..4.0f64, 1..5),
        -1.0..1.0f64,
        0.3..2.0f64,
    )
        .prop_map(|(values, x0, len)| {
            let n = values.len();
            let breaks = (0..=n).map(|i| x0 + len * i as f64 / n as f64).collect();
            Potential::piecewise(breaks, values).unwrap()
        })
}

/// Square-well bound states from `q tan(q/2) = κ` (even) and
/// `−q cot(q/2) = κ` (odd), `q = √(ε − κ²)`, each bracketed per branch.
fn square_well_oracle(eps: f64) -> Vec<f64> {
    let f = |kappa: f64, even: bool| {
        let q = (eps - kappa * kappa).sqrt();
        let (s, c) = (0.5 * q).sin_cos();
        if even {
            q * s - kappa * c
        } else {
            q * c + kappa * s
        }
    };
    let mut roots = Vec::new();
    let n = 200_000;
    for even in [true, false] {
        for i in 0..n {
            let (a, b) = (
                eps.sqrt() * i as f64 / n as f64,
                eps.sqrt() * (i + 1) as f64 / n as f64,
            );
            let (fa, fb) = (f(a, even), f(b, even));
            if fa * fb < 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if f(lo, even) * f(m, even) <= 0.0 {
                        hi = m;
                    } else {
                        lo = m;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reality_symmetry(v in piecewise(), k in 0.1..8.0f64) {
        let step = v.default_step();
        let (t, l, r) = scattering_at(&v, k, step).unwrap();
        let (tm, lm, rm) = scattering_at(&v, -k, step).unwrap();
        prop_assert!((tm - t.conj()).norm() <= 1e-12);
        prop_assert!((lm - l.conj()).norm() <= 1e-12);
        prop_assert!((rm - r.conj()).norm() <= 1e-12);
    }

    #[test]
    fn unitarity(v in piecewise(), k in 0.05..8.0f64) {
        let s = scattering_coefficients(&v, &[k]).unwrap();
        prop_assert!(s.max_unitarity_residual() <= 1e-8);
        prop_assert!(s.max_reflection_asymmetry() <= 1e-8);
        // T L̄ + R T̄ = 0.
        prop_assert!((s.t[0] * s.l[0].conj() + s.r[0] * s.t[0].conj()).norm() <= 1e-8);
    }

    #[test]
    fn inverse_transmission_is_real_on_the_upper_axis(v in piecewise(), kappa in 0.05..4.0f64) {
        let z = inverse_transmission(&v, C::new(0.0, kappa), v.default_step()).unwrap();
        prop_assert!(z.im.abs() <= 1e-10 * (1.0 + z.re.abs()), "{z}");
    }

    #[test]
    fn wronskian_is_constant(v in piecewise(), re in -5.0..5.0f64, im in 0.0..3.0f64) {
        prop_assume!(re.abs() + im > 0.05);
        let pair = solve_jost(&v, C::new(re, im), v.default_step()).unwrap();
        prop_assert!(pair.wronskian_spread() <= 1e-9, "{}", pair.wronskian_spread());
    }

    #[test]
    fn bound_states_satisfy_the_sign_rule(v in piecewise()) {
        let bs = bound_states(&v).unwrap();
        prop_assert!(bs.sign_rule_holds(), "{bs:?}");
        for &kappa in &bs.kappas {
            let z = inverse_transmission(&v, C::new(0.0, kappa), v.default_step()).unwrap();
            prop_assert!(z.norm() <= 1e-7, "1/T({kappa}i) = {z}");
        }
    }
}

#[test]
fn free_line_is_transparent() {
    let s = scattering_coefficients(&Potential::zero(), &[0.5, 1.0, 3.0]).unwrap();
    for i in 0..3 {
        assert!((s.t[i] - 1.0).norm() < 1e-14);
        assert!(s.l[i].norm() < 1e-14 && s.r[i].norm() < 1e-14);
    }
}

#[test]
fn square_well_transmission_matches_closed_form() {
    let eps = 5.0;
    let v = Potential::square_well(eps).unwrap();
    let s = scattering_coefficients(&v, &[0.3, 1.0, 2.7]).unwrap();
    for (i, &k) in s.kgrid.iter().enumerate() {
        let q: f64 = (k * k + eps).sqrt();
        let inv_t = C::new(0.0, k).exp()
            * (C::new(q.cos(), 0.0) - C::new(0.0, (k * k + q * q) / (2.0 * k * q) * q.sin()));
        assert!((s.t[i] - 1.0 / inv_t).norm() < 1e-9, "k = {k}");
    }
}

#[test]
fn square_well_bound_states_match_the_transcendental_roots() {
    for eps in [5.0, 20.0, 130.0] {
        let found = bound_states(&Potential::square_well(eps).unwrap()).unwrap();
        let oracle = square_well_oracle(eps);
        assert_eq!(found.len(), oracle.len(), "eps = {eps}");
        for (a, b) in found.kappas.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "eps = {eps}: {a} vs {b}");
        }
        assert!(found.sign_rule_holds());
    }
}

#[test]
fn exceptional_well_has_transmission_at_zero() {
    let v = Potential::square_well(PI * PI).unwrap();
    let info = zero_energy_info(&v, v.default_step()).unwrap();
    assert!(info.exceptional);
    // f_l(0, x) = cos(π x) on the well, so A = −1 and T(0) = −1.
    assert!((info.t0 + 1.0).abs() < 1e-8, "{}", info.t0);
    let generic = zero_energy_info(&Potential::square_well(5.0).unwrap(), 1e-3).unwrap();
    assert!(!generic.exceptional && generic.t0 == 0.0);
}

#[test]
fn logderivative_contract() {
    assert!(matches!(
        zero_energy_logderivative(&Potential::square_well(5.0).unwrap()),
        Err(Error::NotExceptional { .. })
    ));
    assert!(matches!(
        zero_energy_logderivative(&Potential::square_well(PI * PI).unwrap()),
        Err(Error::HasBoundStates(1))
    ));
}

#[test]
fn rejects_coarse_steps_and_lower_half_plane() {
    let v = Potential::square_well(130.0).unwrap();
    assert!(matches!(
        scattering_at(&v, 1.0, 0.2),
        Err(Error::StepTooCoarse { .. })
    ));
    assert!(solve_jost(&v, C::new(1.0, -0.5), 1e-3).is_err());
    assert!(solve_jost(&v, C::new(0.0, 0.0), 1e-3).is_err());
}

#[test]
fn empty_bound_state_data() {
    let bs = BoundStateData {
        kappas: vec![],
        gammas: vec![],
    };
    assert!(bs.is_empty() && bs.sign_rule_holds());
    assert!(
        bound_states(&Potential::piecewise(vec![0.0, 1.0], vec![3.0]).unwrap())
            .unwrap()
            .is_empty()
    );
}
