//! The ratio data `D(k) = L(k)/T(k)` and what can be built from it alone.
//!
//! `2ik·D(k)` is entire for compactly supported potentials, so models that
//! can evaluate it off the real axis (the closed-form square well, or a
//! potential solved through [`crate::jost`]) support classification, zero
//! counting and resonance finding on the imaginary axis. Sampled data only
//! supports real-axis operations.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jost::{self, BoundStateData};
use crate::potentials::Potential;
use crate::quadrature::integrate;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// `cos √z`, entire in `z`.
fn cos_sqrt(z: C) -> C {
    if z.norm() < 1e-4 {
        1.0 - z / 2.0 + z * z / 24.0 - z * z * z / 720.0
    } else {
        z.sqrt().cos()
    }
}

/// `sin √z / √z`, entire in `z`.
fn sinc_sqrt(z: C) -> C {
    if z.norm() < 1e-4 {
        1.0 - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0
    } else {
        let w = z.sqrt();
        w.sin() / w
    }
}

/// Parses a well depth, accepting the literal `pi^2`.
pub fn parse_epsilon(text: &str) -> Result<f64> {
    let t = text.trim();
    let eps = match t {
        "pi^2" | "pi**2" | "π²" => PI * PI,
        _ => t
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("cannot parse well depth {t:?}")))?,
    };
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "well depth must be positive, got {eps}"
        )));
    }
    Ok(eps)
}

/// Closed-form data of the unit square well `V = −ε` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct SquareWellModel {
    pub epsilon: f64,
    /// Bound states `ξ_1 < … < ξ_{Z+1}` of the well, polished on the closed form.
    pub xi: Vec<f64>,
}

impl SquareWellModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        let well = Potential::square_well(epsilon)?;
        let mut model = SquareWellModel {
            epsilon,
            xi: Vec::new(),
        };
        let rough = jost::bound_states(&well)?.kappas;
        model.xi = rough.into_iter().map(|x| model.polish_xi(x)).collect();
        Ok(model)
    }

    /// `1/τ(iκ)`, real.
    fn inverse_tau_imag(&self, kappa: f64) -> f64 {
        self.inverse_tau(C::new(0.0, kappa)).re
    }

    /// Bisection on the closed form inside a small bracket around `x`.
    fn polish_xi(&self, x: f64) -> f64 {
        let mut width = 1e-7 * x.max(1.0);
        for _ in 0..20 {
            let (lo, hi) = ((x - width).max(0.0), x + width);
            let (glo, ghi) = (self.inverse_tau_imag(lo), self.inverse_tau_imag(hi));
            if glo * ghi < 0.0 {
                return bisect(|k| self.inverse_tau_imag(k), lo, hi, glo, 0.0);
            }
            width *= 4.0;
        }
        x
    }

    /// `1/τ(k) = e^{ik}[cos q + (2k²+ε)/(2ikq) sin q]`, `q = √(k²+ε)`.
    pub fn inverse_tau(&self, k: C) -> C {
        let z = k * k + self.epsilon;
        (I * k).exp() * (cos_sqrt(z) + (2.0 * k * k + self.epsilon) / (2.0 * I * k) * sinc_sqrt(z))
    }

    /// `2ik·D(k) = −ε e^{ik} sin q / q`.
    pub fn two_ik_ratio(&self, k: C) -> C {
        -self.epsilon * (I * k).exp() * sinc_sqrt(k * k + self.epsilon)
    }

    /// `1/T⁰(k) = (1/τ(k)) Π (k + iξ_j)/(k − iξ_j)`.
    pub fn inverse_t0(&self, k: C) -> C {
        self.xi.iter().fold(self.inverse_tau(k), |acc, &x| {
            acc * (k + I * x) / (k - I * x)
        })
    }
}

/// `T⁰` of the square-well data in closed form.
pub fn tzero_closed_form(epsilon: f64, k: C) -> Result<C> {
    Ok(1.0 / SquareWellModel::new(epsilon)?.inverse_t0(k))
}

/// Ratio data of a potential, computed through the forward solver.
#[derive(Debug, Clone)]
pub struct PotentialModel {
    pub potential: Potential,
    pub bound: BoundStateData,
    pub step: f64,
}

impl PotentialModel {
    pub fn new(potential: Potential) -> Result<Self> {
        let bound = jost::bound_states(&potential)?;
        let step = potential.default_step();
        Ok(PotentialModel {
            potential,
            bound,
            step,
        })
    }
}

/// Real-axis samples of `D` on ascending positive wavenumbers. `D(−k)` is
/// `conj D(k)`; beyond the last sample `D` is taken as 0.
#[derive(Debug, Clone)]
pub struct SampledRatio {
    kgrid: Vec<f64>,
    values: Vec<C>,
    /// `2ik·D` at the nodes, with its `k → 0` limit prepended at `k = 0`.
    nodes: Vec<f64>,
    f: Vec<C>,
    zero_limit: C,
    zero_spread: f64,
}

impl SampledRatio {
    pub fn new(kgrid: Vec<f64>, values: Vec<C>) -> Result<Self> {
        if kgrid.len() != values.len() || kgrid.len() < 6 {
            return Err(Error::InvalidArgument(
                "sampled ratio needs at least 6 aligned samples".into(),
            ));
        }
        if kgrid.iter().any(|k| !(k.is_finite() && *k > 0.0))
            || kgrid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(
                "sampled wavenumbers must be positive and ascending".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sampled ratio has non-finite values".into(),
            ));
        }
        let f_data: Vec<C> = kgrid
            .iter()
            .zip(&values)
            .map(|(&k, &d)| 2.0 * I * k * d)
            .collect();
        let (zero_limit, zero_spread) = neville_at_zero(&kgrid[..6], &f_data[..6]);
        let mut nodes = vec![0.0];
        nodes.extend_from_slice(&kgrid);
        let mut f = vec![zero_limit];
        f.extend(f_data);
        Ok(SampledRatio {
            kgrid,
            values,
            nodes,
            f,
            zero_limit,
            zero_spread,
        })
    }

    pub fn kgrid(&self) -> &[f64] {
        &self.kgrid
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    /// Reads the CSV `k,reD,imD`.
    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "k,reD,imD" {
            return Err(Error::InvalidArgument(format!(
                "expected header k,reD,imD, got {header:?}"
            )));
        }
        let (mut ks, mut ds) = (Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("row {}: {e}", n + 2)))?;
            if cols.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "row {} needs 3 columns",
                    n + 2
                )));
            }
            ks.push(cols[0]);
            ds.push(C::new(cols[1], cols[2]));
        }
        Self::new(ks, ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "k,reD,imD")?;
        for (k, d) in self.kgrid.iter().zip(&self.values) {
            writeln!(w, "{k:.16e},{:.16e},{:.16e}", d.re, d.im)?;
        }
        Ok(())
    }

    /// `2ik·D(k)` for `0 ≤ k ≤ k_max` by four-point Lagrange interpolation.
    fn f_at(&self, k: f64) -> C {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&x| x <= k).clamp(1, n - 1);
        let start = i.saturating_sub(2).min(n - 4);
        let xs = &self.nodes[start..start + 4];
        let ys = &self.f[start..start + 4];
        let mut total = C::new(0.0, 0.0);
        for j in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != j {
                    w *= (k - xs[m]) / (xs[j] - xs[m]);
                }
            }
            total += ys[j] * w;
        }
        total
    }

    fn at_real(&self, k: f64) -> C {
        let ka = k.abs();
        if ka > self.kgrid[self.kgrid.len() - 1] {
            return C::new(0.0, 0.0);
        }
        if let Ok(i) = self.kgrid.binary_search_by(|x| x.total_cmp(&ka)) {
            let d = self.values[i];
            return if k < 0.0 { d.conj() } else { d };
        }
        let d = self.f_at(ka) / (2.0 * I * ka);
        if k < 0.0 {
            d.conj()
        } else {
            d
        }
    }
}

/// Source of the ratio data.
#[derive(Debug, Clone)]
pub enum ReflectionRatio {
    SquareWell(SquareWellModel),
    FromPotential(PotentialModel),
    Sampled(SampledRatio),
}

impl ReflectionRatio {
    pub fn square_well(epsilon: f64) -> Result<Self> {
        SquareWellModel::new(epsilon).map(ReflectionRatio::SquareWell)
    }

    pub fn from_potential(potential: Potential) -> Result<Self> {
        PotentialModel::new(potential).map(ReflectionRatio::FromPotential)
    }

    /// Parses `squarewell:EPS`, `potential:FILE.json` or `sampled:FILE.csv`.
    pub fn from_spec_str(spec: &str) -> Result<Self> {
        let (kind, arg) = spec
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("model spec {spec:?} lacks a ':'")))?;
        match kind {
            "squarewell" => Self::square_well(parse_epsilon(arg)?),
            "potential" => Self::from_potential(Potential::load(arg)?),
            "sampled" => Ok(ReflectionRatio::Sampled(SampledRatio::load(arg)?)),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?}"
            ))),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, ReflectionRatio::Sampled(_))
    }

    pub fn describe(&self) -> String {
        match self {
            ReflectionRatio::SquareWell(m) => format!("square well, depth {}", m.epsilon),
            ReflectionRatio::FromPotential(m) => {
                let (a, b) = m.potential.support();
                format!("potential on [{a}, {b}]")
            }
            ReflectionRatio::Sampled(s) => format!("{} real-axis samples", s.kgrid.len()),
        }
    }

    /// Default `κ`/`β` window: twice the square root of the deepest well.
    pub fn default_window(&self) -> Option<f64> {
        match self {
            ReflectionRatio::SquareWell(m) => Some(2.0 * m.epsilon.sqrt()),
            ReflectionRatio::FromPotential(m) => Some(2.0 * m.potential.max_abs().sqrt().max(1.0)),
            ReflectionRatio::Sampled(_) => None,
        }
    }

    /// `2ik·D(k)`.
    pub fn two_ik_ratio(&self, k: C) -> Result<C> {
        match self {
            ReflectionRatio::SquareWell(m) => Ok(m.two_ik_ratio(k)),
            ReflectionRatio::FromPotential(m) => jost::two_ik_ratio(&m.potential, k, m.step),
            ReflectionRatio::Sampled(s) => {
                if k.im != 0.0 {
                    return Err(Error::AnalyticModelRequired);
                }
                if k.re == 0.0 {
                    return Ok(s.zero_limit);
                }
                Ok(2.0 * I * k * s.at_real(k.re))
            }
        }
    }

    /// `D(k)` for `k ≠ 0`; off the real axis only for analytic models.
    pub fn at(&self, k: C) -> Result<C> {
        match self {
            ReflectionRatio::Sampled(s) if k.im == 0.0 => Ok(s.at_real(k.re)),
            _ => Ok(self.two_ik_ratio(k)? / (2.0 * I * k)),
        }
    }

    pub fn at_real(&self, k: f64) -> Result<C> {
        self.at(c(k))
    }

    /// `D(iκ)`, real for analytic models.
    pub fn on_imaginary_axis(&self, kappa: f64) -> Result<f64> {
        Ok(self.at(C::new(0.0, kappa))?.re)
    }

    /// `1/T⁰(k)` continued to all of ℂ.
    pub fn inverse_t0(&self, k: C) -> Result<C> {
        match self {
            ReflectionRatio::SquareWell(m) => Ok(m.inverse_t0(k)),
            ReflectionRatio::FromPotential(m) => {
                let inv_t = jost::inverse_transmission(&m.potential, k, m.step)?;
                Ok(m.bound
                    .kappas
                    .iter()
                    .fold(inv_t, |acc, &x| acc * (k + I * x) / (k - I * x)))
            }
            ReflectionRatio::Sampled(_) => Err(Error::AnalyticModelRequired),
        }
    }
}

/// Generic-case parity of the bound-state count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Kind {
    Generic(Parity),
    Exceptional,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Classification {
    pub kind: Kind,
    /// `lim_{k→0} 2ik·D(k)`.
    pub zero_limit: f64,
    /// `max |2ik·D|` over the probe points; the exceptional cut is relative to it.
    pub scale: f64,
}

impl Classification {
    pub fn is_exceptional(&self) -> bool {
        self.kind == Kind::Exceptional
    }
}

/// Relative cut below which the zero-frequency limit counts as zero.
pub const EXCEPTIONAL_CUT: f64 = 1e-6;

/// Neville extrapolation of `(x_i, y_i)` to `x = 0`; returns the estimate and
/// the change made by the last order.
fn neville_at_zero(xs: &[f64], ys: &[C]) -> (C, f64) {
    let n = xs.len();
    let mut p = ys.to_vec();
    let mut prev = p[n - 1];
    let mut spread = f64::INFINITY;
    for j in 1..n {
        for i in (j..n).rev() {
            p[i] = (xs[i] * p[i - 1] - xs[i - j] * p[i]) / (xs[i] - xs[i - j]);
        }
        spread = (p[n - 1] - prev).norm();
        prev = p[n - 1];
    }
    (prev, spread)
}

/// Generic/exceptional classification from the `k → 0` limit of `2ik·D(k)`,
/// estimated by Neville extrapolation along `k = 0.2·2^{−m}`.
pub fn classify(d: &ReflectionRatio) -> Result<Classification> {
    let (limit, spread, scale) = match d {
        ReflectionRatio::Sampled(s) => {
            let scale = s.f.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            (s.zero_limit, s.zero_spread, scale)
        }
        _ => {
            let xs: Vec<f64> = (0..8).map(|m| 0.2 * 0.5f64.powi(m)).collect();
            let ys = xs
                .iter()
                .map(|&k| d.two_ik_ratio(c(k)))
                .collect::<Result<Vec<_>>>()?;
            let (limit, spread) = neville_at_zero(&xs, &ys);
            let probes = (1..=32)
                .into_par_iter()
                .map(|j| d.two_ik_ratio(c(0.25 * j as f64)).map(|z| z.norm()))
                .collect::<Result<Vec<_>>>()?;
            let scale = probes
                .into_iter()
                .chain(ys.iter().map(|z| z.norm()))
                .fold(0.0, f64::max);
            (limit, spread, scale)
        }
    };
    if spread > EXCEPTIONAL_CUT * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InconclusiveLimit { spread });
    }
    let zero_limit = limit.re;
    let kind = if zero_limit.abs() <= EXCEPTIONAL_CUT * scale {
        Kind::Exceptional
    } else if zero_limit < 0.0 {
        Kind::Generic(Parity::Odd)
    } else {
        Kind::Generic(Parity::Even)
    };
    Ok(Classification {
        kind,
        zero_limit,
        scale,
    })
}

/// Bisection of a sign change of `g` on `[lo, hi]`, `g(lo)` given, down to
/// `tol` (or the floating-point limit when `tol` is 0).
pub(crate) fn bisect(
    mut g: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    glo: f64,
    tol: f64,
) -> f64 {
    let slo = glo.signum();
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            return mid;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Sign changes of `g` on `(lo, hi]`, scanned on `n = min_points` equally
/// spaced points and doubled until two successive scans agree (at most
/// `max_points`), then refined by bisection to width `tol` (0 runs to
/// machine precision).
pub(crate) fn sign_changes(
    g: impl Fn(f64) -> Result<f64> + Sync,
    lo: f64,
    hi: f64,
    min_points: usize,
    max_points: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let scan = |n: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let xs: Vec<f64> = (1..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let gs = xs.par_iter().map(|&x| g(x)).collect::<Result<Vec<_>>>()?;
        Ok((xs, gs))
    };
    let brackets = |xs: &[f64], gs: &[f64]| -> Vec<(f64, f64, f64)> {
        (0..xs.len() - 1)
            .filter(|&i| gs[i] != 0.0 && gs[i].signum() != gs[i + 1].signum())
            .map(|i| (xs[i], xs[i + 1], gs[i]))
            .collect()
    };
    let mut n = min_points;
    let (xs, gs) = scan(n)?;
    let mut found = brackets(&xs, &gs);
    loop {
        if 2 * n > max_points {
            return Err(Error::ScanTooCoarse(format!(
                "sign-change count still changing at {n} scan points on ({lo}, {hi}]"
            )));
        }
        n *= 2;
        let (xs, gs) = scan(n)?;
        let finer = brackets(&xs, &gs);
        let settled = finer.len() == found.len();
        found = finer;
        if settled {
            break;
        }
    }
    let g = &g;
    found
        .par_iter()
        .map(|&(a, b, ga)| {
            let mut err = None;
            let root = bisect(
                |x| match g(x) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                a,
                b,
                ga,
                tol,
            );
            err.map_or(Ok(root), Err)
        })
        .collect()
}

/// Minimum scan density for imaginary-axis searches.
pub const MIN_SCAN_POINTS: usize = 2048;
/// Scan densities are doubled up to this many points.
pub const MAX_SCAN_POINTS: usize = 1 << 16;

/// Zeros of `D(iκ)` of odd multiplicity on `(0, window]`.
pub fn odd_zeros(d: &ReflectionRatio, window: Option<f64>) -> Result<Vec<f64>> {
    if !d.is_analytic() {
        return Err(Error::AnalyticModelRequired);
    }
    let hi = window
        .or(d.default_window())
        .ok_or(Error::AnalyticModelRequired)?;
    if !(hi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window must be positive, got {hi}"
        )));
    }
    // 2ik·D(iκ) = −2κ·D(iκ): the sign-flipped, bounded form scans the same zeros.
    sign_changes(
        |kap| Ok(-d.two_ik_ratio(C::new(0.0, kap))?.re),
        0.0,
        hi,
        MIN_SCAN_POINTS,
        MAX_SCAN_POINTS,
        0.0,
    )
}

/// `Z`: the number of odd-multiplicity zeros of `D` on `I⁺` within the window.
pub fn count_odd_zeros(d: &ReflectionRatio, window: Option<f64>) -> Result<usize> {
    odd_zeros(d, window).map(|z| z.len())
}

/// Options for [`tzero_integral`].
#[derive(Debug, Clone, Copy)]
pub struct TzeroOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// `|D|` below which the real line is truncated.
    pub tail_tol: f64,
    pub max_panels: usize,
}

impl Default for TzeroOptions {
    fn default() -> Self {
        TzeroOptions {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            tail_tol: 1e-4,
            max_panels: 200_000,
        }
    }
}

/// `T⁰(k)` with an error estimate covering quadrature and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tzero {
    pub value: C,
    pub error: f64,
    pub radius: f64,
}

/// Truncation radius: the smallest scanned `S` beyond which `|D| < tail_tol`,
/// doubled. Returns the radius and the largest `|D|` seen beyond it.
fn truncation_radius(d: &ReflectionRatio, tail_tol: f64) -> Result<(f64, f64)> {
    let s_max = match d {
        ReflectionRatio::SquareWell(_) => 1e6,
        ReflectionRatio::FromPotential(m) => 0.4 / m.step,
        ReflectionRatio::Sampled(s) => s.kgrid[s.kgrid.len() - 1],
    };
    let mut grid = Vec::new();
    let mut s = 0.25_f64.min(0.5 * s_max);
    while s < s_max {
        grid.push(s);
        s *= 1.01;
    }
    grid.push(s_max);
    let mags = grid
        .par_iter()
        .map(|&s| d.at_real(s).map(|z| z.norm()))
        .collect::<Result<Vec<_>>>()?;
    let last = mags.len() - 1;
    if mags[last] >= tail_tol {
        return Err(Error::TailTooFat {
            value: mags[last],
            radius: s_max,
            tol: tail_tol,
        });
    }
    let mut idx = last;
    while idx > 0 && mags[idx - 1] < tail_tol {
        idx -= 1;
    }
    let radius = (2.0 * grid[idx]).min(s_max);
    let beyond = grid
        .iter()
        .zip(&mags)
        .filter(|(s, _)| **s >= radius)
        .map(|(_, m)| *m)
        .fold(0.0, f64::max);
    Ok((radius, beyond))
}

/// `T⁰(k) = exp(−(2πi)⁻¹ ∫ log(1 + |D(s)|²)/(s − k − i0⁺) ds)` for `Im k ≥ 0`.
///
/// With `k = k_r + i k_i` and `s = k_r ± t` the integral becomes
/// `∫₀ᵀ [t(f₊ − f₋) + i k_i (f₊ + f₋ − 2f₀)]/(t² + k_i²) dt + 2i f₀ atan(T/k_i)`,
/// where `f₀ = f(k_r)`; at `k_i = 0` the last term is the `iπ f(k)` of the
/// `−i0⁺` prescription and the first integrand is regular.
pub fn tzero_integral(d: &ReflectionRatio, k: C, opts: TzeroOptions) -> Result<Tzero> {
    if k.im < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "T0 needs Im k >= 0, got {k}"
        )));
    }
    if k.im > 0.0 && !d.is_analytic() {
        return Err(Error::AnalyticModelRequired);
    }
    if k.norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "T0 integral is evaluated at k != 0".into(),
        ));
    }
    let (radius, beyond) = truncation_radius(d, opts.tail_tol)?;
    let (kr, ki) = (k.re, k.im);
    let f = |s: f64| -> f64 {
        if s == 0.0 {
            return f64::INFINITY;
        }
        match d.at_real(s) {
            Ok(z) => z.norm_sqr().ln_1p(),
            Err(_) => f64::NAN,
        }
    };
    // On the imaginary axis f(k_r) = f(0) may be infinite; drop the subtraction there.
    let subtract = kr != 0.0;
    let f0 = if subtract { f(kr) } else { 0.0 };
    let t_end = radius + kr.abs();
    let integrand = |t: f64| -> C {
        let (fp, fm) = (f(kr + t), f(kr - t));
        let den = t * t + ki * ki;
        C::new(t * (fp - fm), ki * (fp + fm - 2.0 * f0)) / den
    };
    let mut points = vec![0.0, t_end];
    if kr != 0.0 && kr.abs() < t_end {
        points.push(kr.abs());
    }
    if ki > 0.0 && ki < t_end {
        points.push(ki);
    }
    let pieces = t_end.ceil() as usize;
    points.extend((1..pieces).map(|j| t_end * j as f64 / pieces as f64));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let quad = integrate(
        integrand,
        &points,
        opts.abs_tol,
        opts.rel_tol,
        opts.max_panels,
    );
    if !quad.value.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "T0 integral is not finite at k = {k}"
        )));
    }
    let closing = if subtract {
        if ki == 0.0 {
            C::new(0.0, PI * f0)
        } else {
            C::new(0.0, 2.0 * f0 * (t_end / ki).atan())
        }
    } else {
        C::new(0.0, 0.0)
    };
    let j = quad.value + closing;
    // |D| = O(1/s) beyond the radius, so f ≤ f_R R²/s² there.
    let f_r = beyond.powi(2).ln_1p().max(opts.tail_tol.powi(2));
    let margin = (radius - k.norm()).max(0.5 * radius);
    let tail = 2.0 * f_r * radius * radius / margin / radius;
    let value = (I * j / (2.0 * PI)).exp();
    let error = value.norm() * (quad.error + tail) / (2.0 * PI);
    Ok(Tzero {
        value,
        error,
        radius,
    })
}

/// Scattering coefficients recovered from `D`, `T⁰` and a bound-state set.
#[derive(Debug, Clone)]
pub struct RecoveredCoefficients {
    pub kgrid: Vec<f64>,
    /// `T⁰ Π (k + iκ_j)/(k − iκ_j)`.
    pub t: Vec<C>,
    /// `D T⁰ Π (k + iκ_j)/(k − iκ_j)`.
    pub l: Vec<C>,
    /// `−D(−k) T⁰ Π (k + iκ_j)/(k − iκ_j)`.
    pub r: Vec<C>,
    /// Coefficients of the bound-state-free potential: one branch in the
    /// generic case, the two sign branches `(T⁰, ±D T⁰, ∓D(−k) T⁰)` in the
    /// exceptional case.
    pub bare: Vec<BareBranch>,
}

#[derive(Debug, Clone)]
pub struct BareBranch {
    pub t: Vec<C>,
    pub l: Vec<C>,
    pub r: Vec<C>,
}

/// Recovers `T`, `L`, `R` on a real grid. `t0` must be aligned with `kgrid`.
pub fn reflection_from_d(
    d: &ReflectionRatio,
    class: &Classification,
    kgrid: &[f64],
    t0: &[C],
    kappas: &[f64],
) -> Result<RecoveredCoefficients> {
    if kgrid.len() != t0.len() {
        return Err(Error::InvalidArgument(
            "T0 values must align with the wavenumber grid".into(),
        ));
    }
    let n = kappas.len();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    if let Kind::Generic(parity) = class.kind {
        let expected = if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        };
        if parity != expected {
            return Err(Error::ParityMismatch(format!(
                "{n} bound state(s) but the data require {parity:?} parity"
            )));
        }
    }
    let mut out = RecoveredCoefficients {
        kgrid: kgrid.to_vec(),
        t: Vec::new(),
        l: Vec::new(),
        r: Vec::new(),
        bare: Vec::new(),
    };
    let mut bare = [
        BareBranch {
            t: Vec::new(),
            l: Vec::new(),
            r: Vec::new(),
        },
        BareBranch {
            t: Vec::new(),
            l: Vec::new(),
            r: Vec::new(),
        },
    ];
    for (&k, &t0k) in kgrid.iter().zip(t0) {
        let blaschke = kappas
            .iter()
            .fold(c(1.0), |acc, &x| acc * (k + I * x) / (k - I * x));
        let dk = d.at_real(k)?;
        let dm = d.at_real(-k)?;
        out.t.push(t0k * blaschke);
        out.l.push(dk * t0k * blaschke);
        out.r.push(-dm * t0k * blaschke);
        // Generic: L⁰ = (−1)^N D T⁰, R⁰ = (−1)^{N−1} D(−k) T⁰.
        let s = if class.is_exceptional() { 1.0 } else { sign };
        for (branch, bs) in bare.iter_mut().zip([s, -s]) {
            branch.t.push(t0k);
            branch.l.push(bs * dk * t0k);
            branch.r.push(-bs * dm * t0k);
        }
    }
    let [first, second] = bare;
    out.bare.push(first);
    if class.is_exceptional() {
        out.bare.push(second);
    }
    Ok(out)
}
