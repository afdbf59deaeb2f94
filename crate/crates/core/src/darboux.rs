//! Bound-state surgery.
//!
//! Addition at `k = iκ` uses `χ = f_l(iκ,·) + |γ| f_r(iκ,·)` and
//! `V' = V − 2(ln χ)'' = −V − 2κ² + 2μ²` with `μ = χ'/χ`. Outside the old
//! support `χ` is a sum of two exponentials, so the new tails are written in
//! closed form and cut where `|μ ∓ κ| ≤ 1e-8`; integrals over the cut-off
//! remainder are added back analytically.
//!
//! Removal only ever strips the largest `κ` (the nodeless ground state), which
//! keeps the support compact. Removing a lower state strips every state above
//! it and re-adds them with their original `|γ|`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jost::{self, build_mesh, jost_pair, BoundStateData};
use crate::potentials::{Piece, Potential, SampledGrid};
use crate::quadrature::simpson;

/// Tails are cut once `|μ ∓ κ|` drops below this.
pub const TAIL_TOL: f64 = 1e-8;

/// Upper bound on the number of cells in one tail segment.
const MAX_TAIL_CELLS: usize = 65_536;

/// `χ` and `μ = χ'/χ` on one piece of the old support.
#[derive(Debug, Clone)]
pub struct DarbouxSegment {
    pub x: Vec<f64>,
    pub chi: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Result of adding one bound state.
#[derive(Debug, Clone)]
pub struct DarbouxStep {
    pub kappa: f64,
    pub gamma_abs: f64,
    /// The new potential, including its cut tails.
    pub potential: Potential,
    /// `χ`, `μ` over the support of the old potential.
    pub segments: Vec<DarbouxSegment>,
    /// `μ` at the left and right ends of the new support.
    pub mu_left: f64,
    pub mu_right: f64,
}

impl DarbouxStep {
    pub fn min_chi(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.chi.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Tail of `V'` beyond an edge where `χ = α e^{κt} + β e^{−κt}`, `t` the
/// distance from the edge; `u = (β/α) e^{−2κt}`.
struct Tail {
    length: f64,
    r: f64,
}

impl Tail {
    fn new(alpha: f64, beta: f64, kappa: f64) -> Self {
        let r = beta / alpha;
        let length = if r == 0.0 {
            0.0
        } else {
            ((r.abs() * (2.0 * kappa + TAIL_TOL) / TAIL_TOL).ln() / (2.0 * kappa)).max(0.0)
        };
        Tail { length, r }
    }

    fn u(&self, kappa: f64, t: f64) -> f64 {
        self.r * (-2.0 * kappa * t).exp()
    }

    fn value(&self, kappa: f64, t: f64) -> f64 {
        let u = self.u(kappa, t);
        -8.0 * kappa * kappa * u / ((1.0 + u) * (1.0 + u))
    }

    /// `|μ|` at distance `t`.
    fn mu_abs(&self, kappa: f64, t: f64) -> f64 {
        let u = self.u(kappa, t);
        kappa * (1.0 - u) / (1.0 + u)
    }

    fn cells(&self, step: f64) -> usize {
        ((self.length / step).ceil() as usize).clamp(2, MAX_TAIL_CELLS)
    }
}

fn validate_positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

fn ordering_violation(v: &Potential, kappa: f64) -> Error {
    let existing = jost::bound_states(v).map(|b| b.kappas).unwrap_or_default();
    Error::OrderingViolation { kappa, existing }
}

/// Adds a bound state at `κ` with dependency-constant magnitude `|γ|`.
pub fn add_bound_state(v: &Potential, kappa: f64, gamma_abs: f64) -> Result<DarbouxStep> {
    add_bound_state_with_step(v, kappa, gamma_abs, v.default_step())
}

pub fn add_bound_state_with_step(
    v: &Potential,
    kappa: f64,
    gamma_abs: f64,
    step: f64,
) -> Result<DarbouxStep> {
    validate_positive("kappa", kappa)?;
    validate_positive("gamma_abs", gamma_abs)?;
    let pair = jost_pair(v, Complex64::new(0.0, kappa), step)?;
    let mesh = build_mesh(v, step);
    let (a, b) = v.support();

    // κ lies above every bound state iff f_l(iκ,·) has no zero on the line.
    // Left of the support f_l = c1 e^{−κ(x−a)} + c2 e^{κ(x−a)}.
    let first = &pair.segments[0];
    let (p, dp) = (first.fl[0].re, first.fl_prime[0].re);
    let c1 = 0.5 * (p - dp / kappa);
    let nodeless = pair
        .segments
        .iter()
        .all(|s| s.fl.iter().all(|f| f.re > 0.0));
    if !nodeless || !(c1 > 0.0) {
        return Err(ordering_violation(v, kappa));
    }

    let mut segments = Vec::with_capacity(pair.segments.len());
    let mut grids = Vec::with_capacity(pair.segments.len() + 2);
    for (seg, piece) in pair.segments.iter().zip(&mesh) {
        let chi: Vec<f64> = seg
            .fl
            .iter()
            .zip(&seg.fr)
            .map(|(l, r)| l.re + gamma_abs * r.re)
            .collect();
        let dchi: Vec<f64> = seg
            .fl_prime
            .iter()
            .zip(&seg.fr_prime)
            .map(|(l, r)| l.re + gamma_abs * r.re)
            .collect();
        if let Some(i) = chi.iter().position(|c| !(*c > 0.0)) {
            return Err(Error::NonPositiveChi {
                x: seg.x[i],
                chi: chi[i],
            });
        }
        let mu: Vec<f64> = chi.iter().zip(&dchi).map(|(c, d)| d / c).collect();
        let dx = (seg.x[seg.x.len() - 1] - seg.x[0]) / (seg.x.len() - 1) as f64;
        grids.push(SampledGrid::new(
            seg.x[0],
            dx,
            added_samples(piece, &mu, kappa),
        )?);
        segments.push(DarbouxSegment {
            x: seg.x.clone(),
            chi,
            mu,
        });
    }

    let chi_edge = |si: usize, i: usize| {
        let s = &segments[si];
        (s.chi[i], s.mu[i] * s.chi[i])
    };
    let (chi_a, dchi_a) = chi_edge(0, 0);
    let last = segments.len() - 1;
    let (chi_b, dchi_b) = chi_edge(last, segments[last].x.len() - 1);

    // Right: χ = α e^{κt} + β e^{−κt}, t = x − b. Left: the same with t = a − x.
    let right = Tail::new(
        0.5 * (chi_b + dchi_b / kappa),
        0.5 * (chi_b - dchi_b / kappa),
        kappa,
    );
    let left = Tail::new(
        0.5 * (chi_a - dchi_a / kappa),
        0.5 * (chi_a + dchi_a / kappa),
        kappa,
    );
    for (tail, x, alpha) in [
        (&right, b, 0.5 * (chi_b + dchi_b / kappa)),
        (&left, a, 0.5 * (chi_a - dchi_a / kappa)),
    ] {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveChi { x, chi: alpha });
        }
        if !(tail.r > -1.0) {
            return Err(Error::NonPositiveChi {
                x,
                chi: 1.0 + tail.r,
            });
        }
    }

    let mut mu_left = -left.mu_abs(kappa, 0.0);
    let mut mu_right = right.mu_abs(kappa, 0.0);
    if left.length > 0.0 {
        let cells = left.cells(step);
        let lo = a - left.length;
        grids.insert(
            0,
            SampledGrid::from_fn(lo, a, cells, |x| left.value(kappa, (a - x).max(0.0)))?,
        );
        mu_left = -left.mu_abs(kappa, left.length);
    }
    if right.length > 0.0 {
        let cells = right.cells(step);
        grids.push(SampledGrid::from_fn(b, b + right.length, cells, |x| {
            right.value(kappa, (x - b).max(0.0))
        })?);
        mu_right = right.mu_abs(kappa, right.length);
    }

    Ok(DarbouxStep {
        kappa,
        gamma_abs,
        potential: Potential::segmented(grids)?,
        segments,
        mu_left,
        mu_right,
    })
}

fn added_samples(piece: &jost::MeshPiece<'_>, mu: &[f64], kappa: f64) -> Vec<f64> {
    mu.iter()
        .enumerate()
        .map(|(i, m)| -piece.v_node(i) - 2.0 * kappa * kappa + 2.0 * m * m)
        .collect()
}

/// Strips the bound state with the largest `κ`, which must be `kappa`.
/// `V'' = −V − 2κ² + 2ν²` with `ν` the log-derivative of the ground state;
/// the support is unchanged.
pub fn remove_top_state(v: &Potential, kappa: f64) -> Result<Potential> {
    validate_positive("kappa", kappa)?;
    let step = v.default_step();
    let pair = jost_pair(v, Complex64::new(0.0, kappa), step)?;
    let mesh = build_mesh(v, step);
    let (a, b) = v.support();
    let mid = 0.5 * (a + b);
    let grids = pair
        .segments
        .iter()
        .zip(&mesh)
        .map(|(seg, piece)| {
            let samples = (0..seg.x.len())
                .map(|i| {
                    // Each Jost solution is used where it is decaying away from its start.
                    let (f, df) = if seg.x[i] >= mid {
                        (seg.fl[i].re, seg.fl_prime[i].re)
                    } else {
                        (seg.fr[i].re, seg.fr_prime[i].re)
                    };
                    if !(f > 0.0) {
                        return Err(Error::NumericalFailure(format!(
                            "state at kappa = {kappa} has a node near x = {}; it is not the ground state",
                            seg.x[i]
                        )));
                    }
                    let nu = df / f;
                    Ok(-piece.v_node(i) - 2.0 * kappa * kappa + 2.0 * nu * nu)
                })
                .collect::<Result<Vec<_>>>()?;
            let dx = (seg.x[seg.x.len() - 1] - seg.x[0]) / (seg.x.len() - 1) as f64;
            SampledGrid::new(seg.x[0], dx, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Potential::segmented(grids)
}

/// Removes the `j`-th bound state (1-based, ascending `κ`).
pub fn remove_bound_state(v: &Potential, j: usize) -> Result<Potential> {
    let bs = jost::bound_states(v)?;
    remove_known_state(v, &bs, j)
}

/// As [`remove_bound_state`] with the bound states of `v` already known.
pub fn remove_known_state(v: &Potential, bs: &BoundStateData, j: usize) -> Result<Potential> {
    let n = bs.len();
    if j == 0 || j > n {
        return Err(Error::NoSuchBoundState { index: j, count: n });
    }
    let mut current = v.clone();
    for idx in (j..=n).rev() {
        current = remove_top_state(&current, bs.kappas[idx - 1])?;
    }
    for idx in j + 1..=n {
        current =
            add_bound_state(&current, bs.kappas[idx - 1], bs.gammas[idx - 1].abs())?.potential;
    }
    Ok(current)
}

/// Removes every bound state, top down.
pub fn remove_all(v: &Potential, bs: &BoundStateData) -> Result<Potential> {
    let mut current = v.clone();
    for &kappa in bs.kappas.iter().rev() {
        current = remove_top_state(&current, kappa)?;
    }
    Ok(current)
}

/// `(−1)^{n+1} 2^{2n+2} κ^{2n+1} n!/(2n+1)!!`.
pub fn identity_rhs(kappa: f64, n: u32) -> f64 {
    (1..=n).fold(-4.0 * kappa, |acc, m| {
        acc * (-4.0 * kappa * kappa * m as f64 / (2 * m + 1) as f64)
    })
}

/// Antiderivative of `(μ² − κ²)^n` vanishing at `μ = 0`.
fn tail_antiderivative(mu: f64, kappa: f64, n: u32) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for p in 0..=n {
        let sign = if (n - p) % 2 == 0 { 1.0 } else { -1.0 };
        total += binom * sign * kappa.powi(2 * (n - p) as i32) * mu.powi(2 * p as i32 + 1)
            / (2 * p + 1) as f64;
        binom = binom * (n - p) as f64 / (p + 1) as f64;
    }
    total
}

/// One identity check at order `n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IdentityReport {
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / max(1, |rhs|)`.
    pub residual: f64,
}

/// `∫ (V' − V)(V' + V)^n` over the whole line, with the cut tails of `V'`
/// restored in closed form, against its closed-form value.
pub fn integral_identity(step: &DarbouxStep, v_before: &Potential, n: u32) -> IdentityReport {
    let window = moment(&step.potential, v_before, n);
    let kappa = step.kappa;
    let scale = -(2f64).powi(n as i32 + 1);
    // V' − V = −2μ' and V' + V = 2(μ² − κ²) wherever V' comes from χ.
    let right = scale
        * (tail_antiderivative(kappa, kappa, n) - tail_antiderivative(step.mu_right, kappa, n));
    let left = scale
        * (tail_antiderivative(step.mu_left, kappa, n) - tail_antiderivative(-kappa, kappa, n));
    let lhs = window + left + right;
    let rhs = identity_rhs(kappa, n);
    IdentityReport {
        n,
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / rhs.abs().max(1.0),
    }
}

/// Reports for `n = 0..=n_max`.
pub fn integral_identities(
    step: &DarbouxStep,
    v_before: &Potential,
    n_max: u32,
) -> Vec<IdentityReport> {
    (0..=n_max)
        .into_par_iter()
        .map(|n| integral_identity(step, v_before, n))
        .collect()
}

/// TSV rows `n, lhs, rhs, residual` under a header line.
pub fn identity_tsv(reports: &[IdentityReport]) -> String {
    let mut out = String::from("n\tlhs\trhs\tresidual\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{:.16e}\t{:.16e}\t{:.16e}\n",
            r.n, r.lhs, r.rhs, r.residual
        ));
    }
    out
}

/// The piece of `v` whose interior contains `mid`, if any.
fn piece_at<'a>(pieces: &'a [Piece<'a>], mid: f64) -> Option<&'a Piece<'a>> {
    pieces.iter().find(|p| mid > p.lo() && mid < p.hi())
}

/// `∫ f(V_a, V_b)` by composite Simpson over the union of both supports,
/// split at every breakpoint of either potential so that each panel sees
/// smooth data.
pub fn integrate_pair(va: &Potential, vb: &Potential, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    let pa = va.pieces();
    let pb = vb.pieces();
    let mut cuts: Vec<f64> = pa
        .iter()
        .chain(&pb)
        .flat_map(|p| [p.lo(), p.hi()])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    let h = va.default_step().min(vb.default_step());
    cuts.windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let ea = piece_at(&pa, mid);
            let eb = piece_at(&pb, mid);
            if ea.is_none() && eb.is_none() {
                return 0.0;
            }
            let cells = ((hi - lo) / h * (1.0 - 1e-9)).ceil().max(2.0) as usize;
            let dx = (hi - lo) / cells as f64;
            let y: Vec<f64> = (0..=cells)
                .map(|i| {
                    let x = crate::potentials::node(lo, hi, cells, i);
                    let a = ea.map_or(0.0, |p| p.value_at(x));
                    let b = eb.map_or(0.0, |p| p.value_at(x));
                    f(a, b)
                })
                .collect();
            simpson(dx, &y)
        })
        .sum()
}

/// `∫ (V_a − V_b)(V_a + V_b)^n` over the union of the supports.
pub fn moment(va: &Potential, vb: &Potential, n: u32) -> f64 {
    integrate_pair(va, vb, |a, b| (a - b) * (a + b).powi(n as i32))
}

/// Changes in `∫V` and `∫V²` after a sequence of additions, with the values
/// predicted from the added `κ`s.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormShift {
    pub delta_l1: f64,
    pub delta_l2sq: f64,
    /// `−4 Σ κ_j`.
    pub expected_l1: f64,
    /// `(16/3) Σ κ_j³`.
    pub expected_l2sq: f64,
}

impl NormShift {
    pub fn l1_residual(&self) -> f64 {
        (self.delta_l1 - self.expected_l1).abs() / self.expected_l1.abs().max(1.0)
    }

    pub fn l2sq_residual(&self) -> f64 {
        (self.delta_l2sq - self.expected_l2sq).abs() / self.expected_l2sq.abs().max(1.0)
    }
}

pub fn norm_shift_report(v0: &Potential, vn: &Potential, kappas: &[f64]) -> NormShift {
    NormShift {
        delta_l1: integrate_pair(vn, v0, |a, b| a - b),
        delta_l2sq: integrate_pair(vn, v0, |a, b| a * a - b * b),
        expected_l1: -4.0 * kappas.iter().sum::<f64>(),
        expected_l2sq: 16.0 / 3.0 * kappas.iter().map(|k| k.powi(3)).sum::<f64>(),
    }
}

/// The partner `V₂ = 2ρ² − V₁` of an exceptional, bound-state-free `V₁`,
/// with `ρ` the zero-energy log-derivative. It shares `T` and flips the sign
/// of `L` and `R`.
pub fn signflip_partner(v1: &Potential) -> Result<Potential> {
    let rho = jost::zero_energy_logderivative(v1)?;
    let mesh = build_mesh(v1, v1.default_step());
    let grids = rho
        .segments
        .iter()
        .zip(&mesh)
        .map(|((xs, r), piece)| {
            let samples = r
                .iter()
                .enumerate()
                .map(|(i, rho)| 2.0 * rho * rho - piece.v_node(i))
                .collect();
            let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
            SampledGrid::new(xs[0], dx, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Potential::segmented(grids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jost::{bound_states, scattering_coefficients};
    use std::f64::consts::PI;

    fn sech2(x: f64) -> f64 {
        let c = x.cosh();
        1.0 / (c * c)
    }

    #[test]
    fn free_addition_is_the_one_soliton() {
        let step = add_bound_state(&Potential::zero(), 1.0, 1.0).unwrap();
        // χ = e^{-x} + e^{x} = 2cosh x, so V' = −2 sech² x.
        let (a, b) = step.potential.support();
        let mut worst = 0.0_f64;
        let mut x = a;
        while x <= b {
            worst = worst.max((step.potential.evaluate(x) + 2.0 * sech2(x)).abs());
            x += 0.01;
        }
        assert!(worst <= 1e-6, "max error {worst}");
        assert!((step.mu_right - 1.0).abs() <= 1e-6 && (step.mu_left + 1.0).abs() <= 1e-6);
        assert!(step.min_chi() > 0.0);
    }

    #[test]
    fn identity_constants() {
        assert_eq!(identity_rhs(1.0, 0), -4.0);
        assert!((identity_rhs(1.0, 1) - 16.0 / 3.0).abs() < 1e-15);
        assert!((identity_rhs(1.0, 2) + 128.0 / 15.0).abs() < 1e-14);
        assert!((identity_rhs(2.0, 1) - 16.0 / 3.0 * 8.0).abs() < 1e-13);
    }

    #[test]
    fn tail_antiderivative_matches_quadrature() {
        let kappa = 1.7;
        for n in 0..5 {
            let (q, _) = crate::quadrature::integrate_real(
                |m| (m * m - kappa * kappa).powi(n as i32),
                0.3,
                1.1,
                1e-14,
            );
            let h = tail_antiderivative(1.1, kappa, n) - tail_antiderivative(0.3, kappa, n);
            assert!((q - h).abs() < 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn soliton_identities() {
        let v0 = Potential::zero();
        let step = add_bound_state(&v0, 1.0, 1.0).unwrap();
        for r in integral_identities(&step, &v0, 3) {
            assert!(r.residual <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_ordering() {
        let v = Potential::square_well(20.0).unwrap();
        let bs = bound_states(&v).unwrap();
        match add_bound_state(&v, 0.5 * (bs.kappas[0] + bs.kappas[1]), 1.0) {
            Err(Error::OrderingViolation { existing, .. }) => assert_eq!(existing.len(), 2),
            other => panic!("expected an ordering violation, got {other:?}"),
        }
        assert!(matches!(
            add_bound_state(&v, 1.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn soliton_removal_gives_zero() {
        let soliton = add_bound_state(&Potential::zero(), 1.0, 1.0)
            .unwrap()
            .potential;
        let bs = bound_states(&soliton).unwrap();
        assert_eq!(bs.len(), 1);
        assert!((bs.kappas[0] - 1.0).abs() < 1e-8);
        let bare = remove_bound_state(&soliton, 1).unwrap();
        assert!(bare.max_abs() <= 1e-6, "{}", bare.max_abs());
        assert!(matches!(
            remove_bound_state(&soliton, 2),
            Err(Error::NoSuchBoundState { index: 2, count: 1 })
        ));
    }

    #[test]
    fn blaschke_factor_after_addition() {
        let v = Potential::piecewise(vec![0.0, 0.4, 1.0], vec![-1.0, 2.0]).unwrap();
        let kappa = 1.5;
        let step = add_bound_state(&v, kappa, 0.7).unwrap();
        let ks = [0.3, 1.0, 2.0, 4.0];
        let before = scattering_coefficients(&v, &ks).unwrap();
        let after = scattering_coefficients(&step.potential, &ks).unwrap();
        let i = Complex64::new(0.0, 1.0);
        for (j, &k) in ks.iter().enumerate() {
            let factor = (k + i * kappa) / (k - i * kappa);
            assert!((after.t[j] / factor - before.t[j]).norm() <= 1e-6);
            assert!((after.l[j] + before.l[j] * factor).norm() <= 1e-6);
        }
    }

    #[test]
    fn square_well_remove_then_readd() {
        let v = Potential::square_well(20.0).unwrap();
        let bs = bound_states(&v).unwrap();
        let reduced = remove_bound_state(&v, 2).unwrap();
        let rebuilt = add_bound_state(&reduced, bs.kappas[1], bs.gammas[1].abs())
            .unwrap()
            .potential;
        assert_eq!(rebuilt.support(), (0.0, 1.0));
        let mut worst = 0.0_f64;
        for i in 1..1000 {
            let x = i as f64 / 1000.0;
            worst = worst.max((rebuilt.evaluate(x) + 20.0).abs());
        }
        assert!(worst <= 1e-5, "max error {worst}");
    }

    #[test]
    fn exceptional_well_loses_its_state() {
        let v = Potential::square_well(PI * PI).unwrap();
        let bare = remove_bound_state(&v, 1).unwrap();
        assert!(bound_states(&bare).unwrap().is_empty());
        let info = jost::zero_energy_info(&bare, bare.default_step()).unwrap();
        assert!(info.exceptional);
        let kappa = bound_states(&v).unwrap().kappas[0];
        let c0 = (PI.powi(4) - 16.0 / 3.0 * kappa.powi(3)).sqrt();
        assert!((bare.l2_squared_simpson().sqrt() - c0).abs() < 1e-6);
    }
}
