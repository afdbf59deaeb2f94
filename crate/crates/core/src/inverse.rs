//! From ratio data to the discrete family of potentials that share it.
//!
//! Bound states of a compactly supported potential with data `D` must sit at
//! resonances `β` of the bound-state-free potential, i.e. zeros of `1/T⁰` on
//! the negative imaginary axis. Each admissible subset of resonances gives a
//! candidate whose `L²` norm follows from `C_0` by the norm ladder
//! `C_N² = C_0² + (16/3) Σ κ_j³`.

use std::io::Write;

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::darboux::{add_bound_state, remove_all, signflip_partner};
use crate::dispersion::{
    classify, odd_zeros, sign_changes, Classification, Kind, Parity, ReflectionRatio,
    MAX_SCAN_POINTS, MIN_SCAN_POINTS,
};
use crate::error::{Error, Result};
use crate::jost;
use crate::potentials::Potential;

/// Zeros `−iβ` of `1/T⁰` on the negative imaginary axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceSet {
    pub betas: Vec<f64>,
    pub source: String,
}

/// `Re 1/T⁰(−iβ)`, real for analytic models.
fn resonance_function(d: &ReflectionRatio, beta: f64) -> Result<f64> {
    Ok(d.inverse_t0(Complex64::new(0.0, -beta))?.re)
}

/// Resonances on `(0, window]`, by sign-change scan and bisection to machine
/// precision.
pub fn find_resonances(d: &ReflectionRatio, window: Option<f64>) -> Result<ResonanceSet> {
    find_resonances_with_tol(d, window, 0.0)
}

/// As [`find_resonances`], with bisection stopped at bracket width `tol`.
pub fn find_resonances_with_tol(
    d: &ReflectionRatio,
    window: Option<f64>,
    tol: f64,
) -> Result<ResonanceSet> {
    if !d.is_analytic() {
        return Err(Error::AnalyticModelRequired);
    }
    let hi = window
        .or(d.default_window())
        .ok_or(Error::AnalyticModelRequired)?;
    if !(hi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resonance window must be positive, got {hi}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "root tolerance must be nonnegative, got {tol}"
        )));
    }
    let betas = sign_changes(
        |b| resonance_function(d, b),
        0.0,
        hi,
        MIN_SCAN_POINTS,
        MAX_SCAN_POINTS,
        tol,
    )?;
    if betas.is_empty() && classify(d)?.kind == Kind::Generic(Parity::Odd) {
        return Err(Error::WindowTooSmall(format!(
            "no resonance on (0, {hi}] but the data require an odd count"
        )));
    }
    // A root off by δ leaves |g| ≈ δ/probe times its neighbours' size.
    let probe = hi / MIN_SCAN_POINTS as f64;
    let cut = 1e-8_f64.max(2.0 * tol / probe);
    for &b in &betas {
        let at = resonance_function(d, b)?.abs();
        let scale = resonance_function(d, b - probe)?
            .abs()
            .max(resonance_function(d, b + probe)?.abs());
        if at > cut * scale {
            return Err(Error::NumericalFailure(format!(
                "resonance at {b} leaves residual {at:.3e}"
            )));
        }
    }
    Ok(ResonanceSet {
        betas,
        source: d.describe(),
    })
}

/// Bound-state counts compatible with the classification and `Z`.
pub fn allowed_n(class: &Classification, z: usize) -> Vec<usize> {
    let all = 0..=z + 1;
    match class.kind {
        Kind::Exceptional => all.collect(),
        Kind::Generic(Parity::Even) => all.filter(|n| n % 2 == 0).collect(),
        Kind::Generic(Parity::Odd) => all.filter(|n| n % 2 == 1).collect(),
    }
}

/// One potential consistent with the data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub n: usize,
    pub kappas: Vec<f64>,
    /// `γ_j = D(iκ_j)`.
    pub gammas: Vec<f64>,
    pub c_n: f64,
}

impl Candidate {
    pub fn sign_rule_holds(&self) -> bool {
        self.gammas.iter().enumerate().all(|(j, g)| {
            if (self.n - 1 - j) % 2 == 0 {
                *g > 0.0
            } else {
                *g < 0.0
            }
        })
    }
}

/// `C_N = sqrt(C_0² + (16/3) Σ κ_j³)`.
pub fn ladder_norm(c0: f64, kappas: &[f64]) -> f64 {
    (c0 * c0 + 16.0 / 3.0 * kappas.iter().map(|k| k.powi(3)).sum::<f64>()).sqrt()
}

/// All candidates, sorted by `C_N`.
#[derive(Debug, Clone, Serialize)]
pub struct Enumeration {
    pub candidates: Vec<Candidate>,
    /// Whether the smallest `C_N` lies strictly below the next one.
    pub strict_gap: bool,
}

impl Enumeration {
    pub fn count(&self) -> usize {
        self.candidates.len()
    }

    /// TSV rows `N, kappas (semicolon-separated), C_N` under a header line.
    pub fn write_ladder(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "N\tkappas\tC_N")?;
        for c in &self.candidates {
            let ks = c.kappas.iter().map(|k| format!("{k:.16e}")).join(";");
            writeln!(w, "{}\t{}\t{:.16e}", c.n, ks, c.c_n)?;
        }
        Ok(())
    }
}

/// Every ascending `N`-subset of the resonances whose values `γ_j = D(iκ_j)`
/// satisfy `(−1)^{N−j} γ_j > 0`, for each allowed `N`.
pub fn enumerate_candidates(
    d: &ReflectionRatio,
    resonances: &ResonanceSet,
    allowed: &[usize],
    c0: f64,
) -> Result<Enumeration> {
    if !(c0 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C_0 must be nonnegative, got {c0}"
        )));
    }
    let betas = &resonances.betas;
    let values = betas
        .par_iter()
        .map(|&b| d.on_imaginary_axis(b))
        .collect::<Result<Vec<_>>>()?;
    let mut candidates = Vec::new();
    for &n in allowed {
        for subset in (0..betas.len()).combinations(n) {
            let ok = subset.iter().enumerate().all(|(j, &m)| {
                if (n - 1 - j) % 2 == 0 {
                    values[m] > 0.0
                } else {
                    values[m] < 0.0
                }
            });
            if ok {
                let kappas: Vec<f64> = subset.iter().map(|&m| betas[m]).collect();
                let gammas = subset.iter().map(|&m| values[m]).collect();
                let c_n = ladder_norm(c0, &kappas);
                candidates.push(Candidate {
                    n,
                    kappas,
                    gammas,
                    c_n,
                });
            }
        }
    }
    candidates.sort_by(|a, b| a.c_n.total_cmp(&b.c_n));
    let strict_gap = candidates.len() < 2 || candidates[0].c_n < candidates[1].c_n;
    Ok(Enumeration {
        candidates,
        strict_gap,
    })
}

/// `C_0 = sqrt(‖V_ref‖² − (16/3) Σ κ_j³)` over the bound states of `V_ref`.
pub fn c0_from_reference(v_ref: &Potential) -> Result<f64> {
    let bs = jost::bound_states(v_ref)?;
    let value =
        v_ref.l2_squared_simpson() - 16.0 / 3.0 * bs.kappas.iter().map(|k| k.powi(3)).sum::<f64>();
    if value < 0.0 {
        return Err(Error::NegativeDiscriminant { value });
    }
    Ok(value.sqrt())
}

/// Relative slack in `C_N ≤ C`, absorbing round-off in `C_N`.
pub const BOUND_SLACK: f64 = 1e-12;

/// Outcome of selecting by a norm bound `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum Disambiguation {
    Unique(Candidate),
    Ambiguous(Vec<Candidate>),
    NoneBelow,
}

#[derive(Serialize)]
struct DisambiguationJson<'a> {
    status: &'static str,
    candidates: &'a [Candidate],
}

impl Disambiguation {
    pub fn status(&self) -> &'static str {
        match self {
            Disambiguation::Unique(_) => "unique",
            Disambiguation::Ambiguous(_) => "ambiguous",
            Disambiguation::NoneBelow => "none",
        }
    }

    pub fn candidates(&self) -> &[Candidate] {
        match self {
            Disambiguation::Unique(c) => std::slice::from_ref(c),
            Disambiguation::Ambiguous(cs) => cs,
            Disambiguation::NoneBelow => &[],
        }
    }

    /// `{"status": "unique"|"ambiguous"|"none", "candidates": [...]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DisambiguationJson {
            status: self.status(),
            candidates: self.candidates(),
        })
        .expect("candidates serialize")
    }
}

/// Candidates with `C_N ≤ C`.
pub fn disambiguate(candidates: &[Candidate], bound: f64) -> Disambiguation {
    let limit = bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE;
    let mut qualifying: Vec<Candidate> = candidates
        .iter()
        .filter(|c| c.c_n <= limit)
        .cloned()
        .collect();
    match qualifying.len() {
        0 => Disambiguation::NoneBelow,
        1 => Disambiguation::Unique(qualifying.remove(0)),
        _ => Disambiguation::Ambiguous(qualifying),
    }
}

/// Full-stack check of one candidate.
#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub n: usize,
    pub kappas: Vec<f64>,
    pub c_n: f64,
    /// Quadrature `L²` norm of the constructed potential.
    pub l2: f64,
    /// `|l2 − C_N| / C_N`.
    pub norm_residual: f64,
    /// `max |D_built − D| / max(1, |D|)` on the check grid.
    pub ratio_residual: f64,
    /// Bound states found in the constructed potential.
    pub bound_kappas: Vec<f64>,
    /// Support of the constructed potential.
    pub support: (f64, f64),
    pub passed: bool,
}

/// Tolerances of [`verify_candidate`].
pub const RATIO_TOL: f64 = 1e-4;
pub const NORM_TOL: f64 = 1e-3;

/// Builds the candidate's potential from a reference potential with the
/// same data: strip the reference's bound states, switch to the sign-flip
/// partner when the bound-state counts differ in parity, then add the
/// candidate's states with `|γ_j|`. Checks the forward `D` and the norm.
pub fn build_candidate(candidate: &Candidate, v_ref: &Potential) -> Result<Potential> {
    let bs = jost::bound_states(v_ref)?;
    let mut current = remove_all(v_ref, &bs)?;
    if (candidate.n + bs.len()) % 2 == 1 {
        current = signflip_partner(&current)?;
    }
    for (&kappa, &gamma) in candidate.kappas.iter().zip(&candidate.gammas) {
        current = add_bound_state(&current, kappa, gamma.abs())?.potential;
    }
    Ok(current)
}

pub fn verify_candidate(
    candidate: &Candidate,
    d: &ReflectionRatio,
    v_ref: &Potential,
) -> Result<Verification> {
    let built = build_candidate(candidate, v_ref)?;
    let kgrid: Vec<f64> = (0..32)
        .map(|i| 0.25 + i as f64 * (8.0 - 0.25) / 31.0)
        .collect();
    let ratio = jost::ratio_d(&built, &kgrid)?;
    let mut ratio_residual = 0.0_f64;
    for (&k, r) in kgrid.iter().zip(&ratio) {
        let expected = d.at_real(k)?;
        ratio_residual = ratio_residual.max((r - expected).norm() / expected.norm().max(1.0));
    }
    let l2 = built.l2_squared_simpson().sqrt();
    let norm_residual = (l2 - candidate.c_n).abs() / candidate.c_n.max(f64::MIN_POSITIVE);
    let bound_kappas = jost::bound_states(&built)?.kappas;
    let passed = ratio_residual <= RATIO_TOL && norm_residual <= NORM_TOL;
    Ok(Verification {
        n: candidate.n,
        kappas: candidate.kappas.clone(),
        c_n: candidate.c_n,
        l2,
        norm_residual,
        ratio_residual,
        bound_kappas,
        support: built.support(),
        passed,
    })
}

/// Everything derived from the data and a reference potential.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub classification: Classification,
    /// Odd-multiplicity zeros of `D(iκ)`.
    pub zeros: Vec<f64>,
    pub resonances: ResonanceSet,
    pub allowed: Vec<usize>,
    pub c0: f64,
    pub enumeration: Enumeration,
}

/// Classification, `Z`, resonances, `C_0` and the candidate ladder.
pub fn analyze(d: &ReflectionRatio, v_ref: &Potential, window: Option<f64>) -> Result<Analysis> {
    analyze_with_tol(d, v_ref, window, 0.0)
}

/// As [`analyze`], with the resonance bisection stopped at width `root_tol`.
pub fn analyze_with_tol(
    d: &ReflectionRatio,
    v_ref: &Potential,
    window: Option<f64>,
    root_tol: f64,
) -> Result<Analysis> {
    let classification = classify(d)?;
    let zeros = odd_zeros(d, window)?;
    let resonances = find_resonances_with_tol(d, window, root_tol)?;
    let allowed = allowed_n(&classification, zeros.len());
    let c0 = c0_from_reference(v_ref)?;
    let enumeration = enumerate_candidates(d, &resonances, &allowed, c0)?;
    Ok(Analysis {
        classification,
        zeros,
        resonances,
        allowed,
        c0,
        enumeration,
    })
}
