//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits non-zero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use linescatter::darboux::{
    add_bound_state, integral_identity, moment, norm_shift_report, remove_bound_state,
    signflip_partner,
};
use linescatter::dispersion::{tzero_closed_form, tzero_integral, ReflectionRatio, TzeroOptions};
use linescatter::inverse::{analyze, c0_from_reference, verify_candidate, Analysis};
use linescatter::jost::{bound_states, scattering_at, scattering_coefficients};
use linescatter::Potential;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            detail: String::new(),
        }
    }

    /// Records `value ≤ tol` under `label`.
    fn within(&mut self, label: &str, value: f64, tol: f64) {
        let ok = value <= tol;
        self.pass &= ok;
        self.note(format!(
            "{label}={value:.2e}{}{tol:.0e}",
            if ok { "<=" } else { ">" }
        ));
    }

    fn require(&mut self, label: &str, ok: bool) {
        self.pass &= ok;
        self.note(format!("{label}={}", if ok { "ok" } else { "FAILED" }));
    }

    fn note(&mut self, text: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(text.as_ref());
    }
}

fn run(name: &str, check: impl FnOnce(&mut Outcome) -> Result<(), linescatter::Error>) -> bool {
    let mut out = Outcome::new();
    if let Err(e) = check(&mut out) {
        out.pass = false;
        out.note(format!("error {}: {e}", e.name()));
    }
    println!(
        "{name}: {} [{}]",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail
    );
    out.pass
}

fn well_analysis(
    epsilon: f64,
) -> Result<(ReflectionRatio, Potential, Analysis, Duration), linescatter::Error> {
    let start = Instant::now();
    let d = ReflectionRatio::square_well(epsilon)?;
    let well = Potential::square_well(epsilon)?;
    let analysis = analyze(&d, &well, None)?;
    Ok((d, well, analysis, start.elapsed()))
}

fn max_dev(found: &[f64], expected: &[f64]) -> f64 {
    if found.len() != expected.len() {
        return f64::INFINITY;
    }
    found
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn criterion_1(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let start = Instant::now();
    let (d, well, a, _) = well_analysis(5.0)?;
    out.within(
        "beta",
        max_dev(&a.resonances.betas, &[1.54334, 1.5857]),
        1e-3,
    );
    let norms: Vec<f64> = a.enumeration.candidates.iter().map(|c| c.c_n).collect();
    out.within("norms", max_dev(&norms, &[4.83126, 5.0]), 1e-3);
    for c in &a.enumeration.candidates {
        verify_candidate(c, &d, &well)?;
    }
    let secs = start.elapsed().as_secs_f64();
    out.within("runtime_s", secs, 10.0);
    Ok(())
}

fn criterion_2(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let (_, _, a, _) = well_analysis(20.0)?;
    out.within(
        "beta",
        max_dev(&a.resonances.betas, &[1.93021, 3.92556]),
        1e-3,
    );
    out.require("two_candidates", a.enumeration.count() == 2);
    let norms: Vec<f64> = a.enumeration.candidates.iter().map(|c| c.c_n).collect();
    out.within("norms", max_dev(&norms, &[6.24635, 20.0]), 1e-3);
    Ok(())
}

fn criterion_3(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let (_, _, a, elapsed) = well_analysis(130.0)?;
    let betas = &a.resonances.betas;
    out.within(
        "beta",
        max_dev(
            betas,
            &[4.87295, 8.22607, 8.32865, 10.0879, 10.7407, 11.085],
        ),
        5e-3,
    );
    // Reference ladder: (N, 1-based resonance indices, norm).
    let reference: [(&[usize], f64); 10] = [
        (&[], 23.968),
        (&[1, 2], 64.509),
        (&[1, 3], 65.3668),
        (&[1, 6], 91.9566),
        (&[4, 6], 115.387),
        (&[5, 6], 120.197),
        (&[1, 2, 4, 6], 130.0),
        (&[1, 3, 4, 6], 130.432),
        (&[1, 2, 5, 6], 134.287),
        (&[1, 3, 5, 6], 134.705),
    ];
    let mut worst = 0.0_f64;
    let mut missing = 0;
    for (indices, norm) in reference {
        let kappas: Vec<f64> = indices
            .iter()
            .filter_map(|&i| betas.get(i - 1).copied())
            .collect();
        let hit = a
            .enumeration
            .candidates
            .iter()
            .find(|c| c.n == indices.len() && max_dev(&c.kappas, &kappas) == 0.0);
        match hit {
            Some(c) => worst = worst.max((c.c_n - norm).abs()),
            None => missing += 1,
        }
    }
    out.require("all_reference_candidates_present", missing == 0);
    out.within("norms", worst, 5e-2);
    out.note(format!(
        "enumerated {} candidates; the reference text quotes 16 but lists 10, the enumeration matches the list",
        a.enumeration.count()
    ));
    out.within("runtime_s", elapsed.as_secs_f64(), 60.0);
    Ok(())
}

fn criterion_4(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let well = Potential::square_well(PI * PI)?;
    let c0 = c0_from_reference(&well)?;
    out.within("c0_dev", (c0 - 3.38537).abs(), 1e-3);
    let (_, _, a, _) = well_analysis(PI * PI)?;
    let beta = a.resonances.betas.first().copied().unwrap_or(f64::NAN);
    out.note(format!(
        "beta_1={beta:.7} vs printed 2.522588: the printed value transposes digits of 2.525882, \
         and only the computed value is consistent with C_0"
    ));
    Ok(())
}

fn criterion_5(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let mut worst = 0.0_f64;
    let mut spread = 0.0_f64;
    for _ in 0..50 {
        let pieces = rng.gen_range(1..=4);
        let mut breaks: Vec<f64> = (1..pieces).map(|_| rng.gen_range(0.05..0.95)).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.insert(0, 0.0);
        breaks.push(1.0);
        let values = (0..pieces).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let base = Potential::piecewise(breaks, values)?;
        let top = bound_states(&base)?.kappas.last().copied().unwrap_or(0.0);
        let kappa = rng.gen_range((top + 0.05).max(0.2)..3.0);
        let gamma = 10f64.powf(rng.gen_range(-1.0..1.0));
        let steps = [gamma, 0.1, 1.0, 10.0]
            .iter()
            .map(|&g| add_bound_state(&base, kappa, g))
            .collect::<Result<Vec<_>, _>>()?;
        for n in 0..=4 {
            let reports: Vec<_> = steps
                .iter()
                .map(|s| integral_identity(s, &base, n))
                .collect();
            worst = reports.iter().map(|r| r.residual).fold(worst, f64::max);
            let scale = reports[0].rhs.abs().max(1.0);
            let lo = reports[1..]
                .iter()
                .map(|r| r.lhs)
                .fold(f64::INFINITY, f64::min);
            let hi = reports[1..]
                .iter()
                .map(|r| r.lhs)
                .fold(f64::NEG_INFINITY, f64::max);
            spread = spread.max((hi - lo) / scale);
        }
    }
    out.within("identity_residual", worst, 1e-6);
    out.within("gamma_spread", spread, 1e-8);
    Ok(())
}

fn criterion_6(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let v0 = Potential::piecewise(vec![0.0, 0.3, 0.7, 1.0], vec![-2.5, 1.0, -1.5])?;
    let top = bound_states(&v0)?.kappas.last().copied().unwrap_or(0.0);
    let kappas = [top + 0.4, top + 0.9, top + 1.7];
    let gammas = [0.5, 3.0, 1.2];
    let mut v = v0.clone();
    for (&k, &g) in kappas.iter().zip(&gammas) {
        v = add_bound_state(&v, k, g)?.potential;
    }
    let shift = norm_shift_report(&v0, &v, &kappas);
    out.within("dL1", shift.l1_residual(), 1e-6);
    out.within("dL2sq", shift.l2sq_residual(), 1e-6);
    Ok(())
}

fn criterion_7(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let grid: Vec<C> = [-3.0, -1.2, -0.4, 0.7, 2.5]
        .iter()
        .flat_map(|&re| [0.0, 0.3, 1.0, 2.0].map(|im| C::new(re, im)))
        .collect();
    for eps in [5.0, 20.0] {
        let d = ReflectionRatio::square_well(eps)?;
        let mut worst = 0.0_f64;
        for &k in &grid {
            let got = tzero_integral(&d, k, TzeroOptions::default())?.value;
            worst = worst.max((got - tzero_closed_form(eps, k)?).norm());
        }
        out.within(&format!("eps{eps}_integral"), worst, 1e-4);
        let mut modulus = 0.0_f64;
        for i in 0..20 {
            let k = -4.9 + 0.51 * i as f64;
            let t0 = tzero_integral(&d, C::new(k, 0.0), TzeroOptions::default())?.value;
            let dk = d.at_real(k)?;
            modulus = modulus.max((t0.norm_sqr() * (1.0 + dk.norm_sqr()) - 1.0).abs());
        }
        out.within(&format!("eps{eps}_modulus"), modulus, 1e-6);
    }
    Ok(())
}

fn max_gap(a: &Potential, b: &Potential, xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| (a.evaluate(x) - b.evaluate(x)).abs())
        .fold(0.0, f64::max)
}

fn criterion_8(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let v1 = remove_bound_state(&Potential::square_well(PI * PI)?, 1)?;
    let v2 = signflip_partner(&v1)?;
    let ks: Vec<f64> = (0..32).map(|i| 0.25 + 0.25 * i as f64).collect();
    let s1 = scattering_coefficients(&v1, &ks)?;
    let s2 = scattering_coefficients(&v2, &ks)?;
    let dt =
        s1.t.iter()
            .zip(&s2.t)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
    let dl =
        s1.l.iter()
            .zip(&s2.l)
            .map(|(a, b)| (a + b).norm())
            .fold(0.0, f64::max);
    out.within("T2-T1", dt, 1e-5);
    out.within("L2+L1", dl, 1e-5);
    let moments = (0..=3)
        .map(|n| moment(&v2, &v1, n).abs())
        .fold(0.0, f64::max);
    out.within("moments", moments, 1e-6);
    out.require("support", v1.support() == v2.support());
    let (lo, _) = v1.support();
    out.within("endpoint", (v2.evaluate(lo) + v1.evaluate(lo)).abs(), 1e-4);
    let back = signflip_partner(&v2)?;
    let (a, b) = v1.support();
    let xs = (0..=4000).map(|i| a + (b - a) * i as f64 / 4000.0);
    out.within("involution", max_gap(&back, &v1, xs), 1e-6);
    Ok(())
}

fn criterion_9(out: &mut Outcome) -> Result<(), linescatter::Error> {
    let soliton = add_bound_state(&Potential::zero(), 1.0, 1.0)?.potential;
    let potentials = [
        Potential::square_well(5.0)?,
        Potential::square_well(PI * PI)?,
        Potential::square_well(130.0)?,
        Potential::piecewise(vec![-0.5, 0.1, 0.4, 1.2], vec![2.0, -4.0, 1.5])?,
        soliton,
    ];
    let ks: Vec<f64> = (1..=64).map(|i| 0.125 * i as f64).collect();
    let (mut unitarity, mut asym, mut reality) = (0.0_f64, 0.0_f64, 0.0_f64);
    for v in &potentials {
        let s = scattering_coefficients(v, &ks)?;
        unitarity = unitarity.max(s.max_unitarity_residual());
        asym = asym.max(s.max_reflection_asymmetry());
        for (i, &k) in ks.iter().enumerate().step_by(7) {
            let (t, l, r) = scattering_at(v, -k, s.step)?;
            let diff = (t - s.t[i].conj())
                .norm()
                .max((l - s.l[i].conj()).norm())
                .max((r - s.r[i].conj()).norm());
            reality = reality.max(diff);
        }
    }
    out.within("unitarity", unitarity, 1e-8);
    out.within("|L|-|R|", asym, 1e-8);
    out.within("T(-k)-conj", reality, 1e-8);

    let mut roundtrip = 0.0_f64;
    for v in [
        Potential::square_well(20.0)?,
        Potential::piecewise(vec![0.0, 0.5, 1.0], vec![-6.0, -1.0])?,
    ] {
        let bs = bound_states(&v)?;
        let n = bs.len();
        let reduced = remove_bound_state(&v, n)?;
        let rebuilt =
            add_bound_state(&reduced, bs.kappas[n - 1], bs.gammas[n - 1].abs())?.potential;
        // Offset sampling keeps clear of the jumps of the piecewise input.
        let xs = (0..2000).map(|i| -0.5 + 0.001 * i as f64 + 3.7e-4);
        roundtrip = roundtrip.max(max_gap(&rebuilt, &v, xs));
    }
    out.within("roundtrip", roundtrip, 1e-5);
    Ok(())
}

fn criterion_10(out: &mut Outcome) -> Result<(), linescatter::Error> {
    for eps in [5.0, PI * PI] {
        let (d, well, a, _) = well_analysis(eps)?;
        for c in &a.enumeration.candidates {
            let v = verify_candidate(c, &d, &well)?;
            out.within(
                &format!("eps{eps:.4}_N{}_ratio", v.n),
                v.ratio_residual,
                1e-4,
            );
            out.within(&format!("eps{eps:.4}_N{}_norm", v.n), v.norm_residual, 1e-3);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Outcome) -> Result<(), linescatter::Error>); 10] = [
        ("criterion 1 (well depth 5)", criterion_1),
        ("criterion 2 (well depth 20)", criterion_2),
        ("criterion 3 (well depth 130)", criterion_3),
        ("criterion 4 (well depth pi^2)", criterion_4),
        ("criterion 5 (integral identities)", criterion_5),
        ("criterion 6 (norm telescoping)", criterion_6),
        ("criterion 7 (dispersion integral)", criterion_7),
        ("criterion 8 (sign-flip partner)", criterion_8),
        ("criterion 9 (forward invariants, roundtrip)", criterion_9),
        ("criterion 10 (candidate verification)", criterion_10),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !run(name, check) {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
