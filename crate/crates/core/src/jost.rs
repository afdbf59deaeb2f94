//! Forward scattering engine.
//!
//! The Jost solutions of `ψ'' + k²ψ = Vψ` are pure exponentials outside the
//! support, so only the support is integrated: `f_l` leftward from the right
//! edge and `f_r` rightward from the left edge, with fixed-step classical RK4
//! on a mesh aligned with the pieces of the potential. Everything else
//! (transmission and reflection coefficients, bound states, dependency
//! constants, the zero-energy solution) is read off these two sweeps.

use std::io::Write;
use std::ops::{Add, DivAssign, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potentials::{node, Piece, Potential};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Largest `|√(k² − V)| · h` the integrator accepts.
pub const ALIASING_LIMIT: f64 = 0.5;

/// Solution values the integrator can carry: complex in general, real on
/// the imaginary `k` axis where `k²` is real.
trait Amplitude:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + DivAssign<f64>
{
    fn real(x: f64) -> Self;
    fn size(self) -> f64;
}

impl Amplitude for f64 {
    fn real(x: f64) -> Self {
        x
    }
    fn size(self) -> f64 {
        self.abs()
    }
}

impl Amplitude for C {
    fn real(x: f64) -> Self {
        C::new(x, 0.0)
    }
    fn size(self) -> f64 {
        self.norm()
    }
}

pub(crate) struct MeshPiece<'a> {
    piece: Piece<'a>,
    lo: f64,
    hi: f64,
    cells: usize,
    substeps: usize,
}

impl MeshPiece<'_> {
    pub(crate) fn node(&self, i: usize) -> f64 {
        node(self.lo, self.hi, self.cells, i)
    }

    pub(crate) fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    /// Value at node `i`, one-sided at the piece ends.
    pub(crate) fn v_node(&self, i: usize) -> f64 {
        match self.piece {
            Piece::Constant { value, .. } => value,
            Piece::Grid(g) => g.samples()[i],
        }
    }

    fn v_at(&self, x: f64) -> f64 {
        self.piece.value_at(x)
    }
}

/// Mesh over the support: constant pieces get `ceil(len / step)` cells,
/// sampled pieces keep their own nodes with `ceil(dx / step)` RK4 sub-steps
/// per cell.
pub(crate) fn build_mesh(v: &Potential, step: f64) -> Vec<MeshPiece<'_>> {
    v.pieces()
        .into_iter()
        .map(|piece| {
            let (lo, hi) = (piece.lo(), piece.hi());
            match piece {
                Piece::Constant { .. } => MeshPiece {
                    piece,
                    lo,
                    hi,
                    cells: ((hi - lo) / step).ceil().max(1.0) as usize,
                    substeps: 1,
                },
                Piece::Grid(g) => MeshPiece {
                    piece,
                    lo,
                    hi,
                    cells: g.cells(),
                    substeps: (g.dx() / step * (1.0 - 1e-12)).ceil().max(1.0) as usize,
                },
            }
        })
        .collect()
}

fn check_step(mesh: &[MeshPiece<'_>], k: C) -> Result<()> {
    for p in mesh {
        let h = (p.hi - p.lo) / (p.cells * p.substeps) as f64;
        let wavenumber = (k.norm_sqr() + p.piece.max_abs()).sqrt();
        if wavenumber * h > ALIASING_LIMIT {
            return Err(Error::StepTooCoarse {
                wavenumber,
                step: h,
            });
        }
    }
    Ok(())
}

#[inline]
fn rk4<T: Amplitude>(psi: T, dpsi: T, h: f64, q0: T, qm: T, q1: T) -> (T, T) {
    let half = 0.5 * h;
    let k1a = dpsi;
    let k1b = q0 * psi;
    let k2a = dpsi + k1b * half;
    let k2b = qm * (psi + k1a * half);
    let k3a = dpsi + k2b * half;
    let k3b = qm * (psi + k2a * half);
    let k4a = dpsi + k3b * h;
    let k4b = q1 * (psi + k3a * h);
    let sixth = h / 6.0;
    (
        psi + (k1a + (k2a + k3a) * 2.0 + k4a) * sixth,
        dpsi + (k1b + (k2b + k3b) * 2.0 + k4b) * sixth,
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sweep {
    /// From the right edge toward the left edge (`f_l`).
    Leftward,
    /// From the left edge toward the right edge (`f_r`).
    Rightward,
}

/// State after a sweep. With renormalization the true state is
/// `e^{log_scale}` times the stored one.
struct SweepEnd<T> {
    psi: T,
    dpsi: T,
    log_scale: f64,
}

/// Integrates `ψ'' = (V − k²) ψ` across the mesh. `visit(piece, node, ψ, ψ')`
/// is called at every node, piece boundaries included on both sides. With
/// `renormalize`, the state is rescaled whenever it grows past 1e150; visited
/// values are then only meaningful up to a positive factor.
fn sweep<T: Amplitude>(
    mesh: &[MeshPiece<'_>],
    k2: T,
    dir: Sweep,
    start: (T, T),
    renormalize: bool,
    mut visit: impl FnMut(usize, usize, T, T),
) -> SweepEnd<T> {
    let (mut psi, mut dpsi) = start;
    let mut log_scale = 0.0;
    let order: Vec<usize> = match dir {
        Sweep::Leftward => (0..mesh.len()).rev().collect(),
        Sweep::Rightward => (0..mesh.len()).collect(),
    };
    for pi in order {
        let p = &mesh[pi];
        let hcell = (p.hi - p.lo) / p.cells as f64;
        let m = p.substeps;
        let hs = hcell / m as f64;
        let (first, sign) = match dir {
            Sweep::Leftward => (p.cells, -1.0),
            Sweep::Rightward => (0, 1.0),
        };
        visit(pi, first, psi, dpsi);
        for step in 0..p.cells {
            let i0 = if dir == Sweep::Leftward {
                p.cells - step
            } else {
                step
            };
            let i1 = if dir == Sweep::Leftward {
                i0 - 1
            } else {
                i0 + 1
            };
            let x0 = p.node(i0);
            let h = sign * hs;
            match p.piece {
                Piece::Constant { value, .. } => {
                    let q = T::real(value) - k2;
                    for _ in 0..m {
                        (psi, dpsi) = rk4(psi, dpsi, h, q, q, q);
                    }
                }
                Piece::Grid(_) => {
                    let mut qa = T::real(p.v_node(i0)) - k2;
                    for s in 0..m {
                        let xs = x0 + h * s as f64;
                        let qb = if s + 1 == m {
                            T::real(p.v_node(i1)) - k2
                        } else {
                            T::real(p.v_at(xs + h)) - k2
                        };
                        let qm = T::real(p.v_at(xs + 0.5 * h)) - k2;
                        (psi, dpsi) = rk4(psi, dpsi, h, qa, qm, qb);
                        qa = qb;
                    }
                }
            }
            if renormalize {
                let size = psi.size().max(dpsi.size());
                if size > 1e150 {
                    psi /= size;
                    dpsi /= size;
                    log_scale += size.ln();
                }
            }
            visit(pi, i1, psi, dpsi);
        }
    }
    SweepEnd {
        psi,
        dpsi,
        log_scale,
    }
}

fn fl_start(b: f64, k: C) -> (C, C) {
    let e = (I * k * b).exp();
    (e, I * k * e)
}

fn fr_start(a: f64, k: C) -> (C, C) {
    let e = (-I * k * a).exp();
    (e, -I * k * e)
}

fn validate_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "integration step must be positive, got {step}"
        )));
    }
    Ok(())
}

/// `(f_l(k, a), f_l'(k, a))` at the left support edge. Valid for every
/// complex `k` because the support is compact.
pub(crate) fn fl_at_left_edge(v: &Potential, k: C, step: f64) -> Result<(C, C)> {
    validate_step(step)?;
    let mesh = build_mesh(v, step);
    check_step(&mesh, k)?;
    let (_, b) = v.support();
    let end = sweep(
        &mesh,
        k * k,
        Sweep::Leftward,
        fl_start(b, k),
        false,
        |_, _, _, _| {},
    );
    finite_pair(end.psi, end.dpsi)
}

/// `(f_r(k, b), f_r'(k, b))` at the right support edge.
pub(crate) fn fr_at_right_edge(v: &Potential, k: C, step: f64) -> Result<(C, C)> {
    validate_step(step)?;
    let mesh = build_mesh(v, step);
    check_step(&mesh, k)?;
    let (a, _) = v.support();
    let end = sweep(
        &mesh,
        k * k,
        Sweep::Rightward,
        fr_start(a, k),
        false,
        |_, _, _, _| {},
    );
    finite_pair(end.psi, end.dpsi)
}

fn finite_pair(psi: C, dpsi: C) -> Result<(C, C)> {
    if psi.is_finite() && dpsi.is_finite() {
        Ok((psi, dpsi))
    } else {
        Err(Error::NumericalFailure("Jost solution overflowed".into()))
    }
}

/// `1/T(k)` for any complex `k ≠ 0`, analytically continued through the
/// compact support.
pub fn inverse_transmission(v: &Potential, k: C, step: f64) -> Result<C> {
    let (a, _) = v.support();
    let (p, dp) = fl_at_left_edge(v, k, step)?;
    Ok((-I * k * a).exp() * (I * k * p + dp) / (2.0 * I * k))
}

/// `2ik · D(k) = 2ik · L(k)/T(k)`, entire in `k` for compact support.
pub fn two_ik_ratio(v: &Potential, k: C, step: f64) -> Result<C> {
    let (a, _) = v.support();
    let (p, dp) = fl_at_left_edge(v, k, step)?;
    Ok((I * k * a).exp() * (I * k * p - dp))
}

/// `D(k) = L(k)/T(k)` for any complex `k ≠ 0`.
pub fn ratio_at(v: &Potential, k: C, step: f64) -> Result<C> {
    Ok(two_ik_ratio(v, k, step)? / (2.0 * I * k))
}

/// Jost solutions sampled on the support mesh.
#[derive(Debug, Clone)]
pub struct JostPair {
    pub k: C,
    pub segments: Vec<JostSegment>,
}

/// Samples on one smooth piece of the potential.
#[derive(Debug, Clone)]
pub struct JostSegment {
    pub x: Vec<f64>,
    pub fl: Vec<C>,
    pub fl_prime: Vec<C>,
    pub fr: Vec<C>,
    pub fr_prime: Vec<C>,
}

impl JostPair {
    /// `W[f_l, f_r] = f_l f_r' − f_l' f_r` at every node.
    pub fn wronskians(&self) -> impl Iterator<Item = C> + '_ {
        self.segments.iter().flat_map(|s| {
            (0..s.x.len()).map(move |i| s.fl[i] * s.fr_prime[i] - s.fl_prime[i] * s.fr[i])
        })
    }

    /// `max |W − W_mean| / max |W|` over the nodes.
    pub fn wronskian_spread(&self) -> f64 {
        let w: Vec<C> = self.wronskians().collect();
        let mean = w.iter().sum::<C>() / w.len() as f64;
        let scale = w.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let spread = w.iter().fold(0.0_f64, |m, z| m.max((z - mean).norm()));
        if scale == 0.0 {
            0.0
        } else {
            spread / scale
        }
    }

    /// `γ` with `f_l = γ f_r`, as the least-squares ratio over all nodes so
    /// that interior zeros of the eigenfunction do no harm.
    pub fn dependency_constant(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for s in &self.segments {
            for (fl, fr) in s.fl.iter().zip(&s.fr) {
                num += fl.re * fr.re;
                den += fr.re * fr.re;
            }
        }
        num / den
    }

    /// `(x, f_l, f_l', f_r, f_r')` at the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> (f64, C, C, C, C) {
        let mut best = (f64::INFINITY, 0, 0);
        for (si, s) in self.segments.iter().enumerate() {
            for (i, xi) in s.x.iter().enumerate() {
                let d = (xi - x).abs();
                if d < best.0 {
                    best = (d, si, i);
                }
            }
        }
        let s = &self.segments[best.1];
        let i = best.2;
        (s.x[i], s.fl[i], s.fl_prime[i], s.fr[i], s.fr_prime[i])
    }
}

pub(crate) fn jost_pair(v: &Potential, k: C, step: f64) -> Result<JostPair> {
    validate_step(step)?;
    let mesh = build_mesh(v, step);
    check_step(&mesh, k)?;
    let (a, b) = v.support();
    let zero = C::new(0.0, 0.0);
    let mut segments: Vec<JostSegment> = mesh
        .iter()
        .map(|p| JostSegment {
            x: p.nodes(),
            fl: vec![zero; p.cells + 1],
            fl_prime: vec![zero; p.cells + 1],
            fr: vec![zero; p.cells + 1],
            fr_prime: vec![zero; p.cells + 1],
        })
        .collect();
    sweep(
        &mesh,
        k * k,
        Sweep::Leftward,
        fl_start(b, k),
        false,
        |pi, i, psi, dpsi| {
            segments[pi].fl[i] = psi;
            segments[pi].fl_prime[i] = dpsi;
        },
    );
    sweep(
        &mesh,
        k * k,
        Sweep::Rightward,
        fr_start(a, k),
        false,
        |pi, i, psi, dpsi| {
            segments[pi].fr[i] = psi;
            segments[pi].fr_prime[i] = dpsi;
        },
    );
    let finite = segments.iter().all(|s| {
        s.fl.iter()
            .chain(&s.fr)
            .chain(&s.fl_prime)
            .chain(&s.fr_prime)
            .all(|z| z.is_finite())
    });
    if !finite {
        return Err(Error::NumericalFailure(format!(
            "Jost solutions overflowed at k = {k}"
        )));
    }
    Ok(JostPair { k, segments })
}

/// Left and right Jost solutions on the support mesh for `Im k ≥ 0`.
pub fn solve_jost(v: &Potential, k: C, step: f64) -> Result<JostPair> {
    if k.im < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Jost solutions need Im k >= 0, got {k}"
        )));
    }
    if k == C::new(0.0, 0.0) {
        return Err(Error::InvalidArgument(
            "k = 0 needs the zero-energy solver".into(),
        ));
    }
    jost_pair(v, k, step)
}

/// `(T, L, R)` at one real wavenumber `k ≠ 0`.
pub fn scattering_at(v: &Potential, k: f64, step: f64) -> Result<(C, C, C)> {
    if k == 0.0 || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scattering needs real k != 0, got {k}"
        )));
    }
    let kc = C::new(k, 0.0);
    let (a, b) = v.support();
    let (p, dp) = fl_at_left_edge(v, kc, step)?;
    let (q, dq) = fr_at_right_edge(v, kc, step)?;
    let two_ik = 2.0 * I * kc;
    let inv_t = (-I * kc * a).exp() * (I * kc * p + dp) / two_ik;
    let l_over_t = (I * kc * a).exp() * (I * kc * p - dp) / two_ik;
    let r_over_t = (-I * kc * b).exp() * (I * kc * q + dq) / two_ik;
    let t = 1.0 / inv_t;
    Ok((t, l_over_t * t, r_over_t * t))
}

/// `T`, `L`, `R` aligned with a positive, ascending wavenumber grid.
#[derive(Debug, Clone)]
pub struct ScatteringCoefficients {
    pub kgrid: Vec<f64>,
    pub t: Vec<C>,
    pub l: Vec<C>,
    pub r: Vec<C>,
    /// Integration step the values were accepted at.
    pub step: f64,
}

impl ScatteringCoefficients {
    /// `max | |T|² + |L|² − 1 |`.
    pub fn max_unitarity_residual(&self) -> f64 {
        self.t
            .iter()
            .zip(&self.l)
            .map(|(t, l)| (t.norm_sqr() + l.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max | |L| − |R| |`.
    pub fn max_reflection_asymmetry(&self) -> f64 {
        self.l
            .iter()
            .zip(&self.r)
            .map(|(l, r)| (l.norm() - r.norm()).abs())
            .fold(0.0, f64::max)
    }

    /// `D = L/T` on the grid.
    pub fn ratio(&self) -> Vec<C> {
        self.l.iter().zip(&self.t).map(|(l, t)| l / t).collect()
    }

    /// CSV with header `k,reT,imT,reL,imL,reR,imR`, 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "k,reT,imT,reL,imL,reR,imR")?;
        for i in 0..self.kgrid.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.kgrid[i],
                self.t[i].re,
                self.t[i].im,
                self.l[i].re,
                self.l[i].im,
                self.r[i].re,
                self.r[i].im
            )?;
        }
        Ok(())
    }
}

fn validate_kgrid(kgrid: &[f64]) -> Result<()> {
    if kgrid.is_empty() {
        return Err(Error::InvalidArgument("empty wavenumber grid".into()));
    }
    if kgrid.iter().any(|k| !(k.is_finite() && *k > 0.0)) || kgrid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidArgument(
            "wavenumber grid must be positive and ascending".into(),
        ));
    }
    Ok(())
}

/// Coefficients at a fixed integration step.
pub fn scattering_with_step(
    v: &Potential,
    kgrid: &[f64],
    step: f64,
) -> Result<ScatteringCoefficients> {
    validate_kgrid(kgrid)?;
    let rows = kgrid
        .par_iter()
        .map(|&k| scattering_at(v, k, step))
        .collect::<Result<Vec<_>>>()?;
    let (mut t, mut l, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for (ti, li, ri) in rows {
        t.push(ti);
        l.push(li);
        r.push(ri);
    }
    Ok(ScatteringCoefficients {
        kgrid: kgrid.to_vec(),
        t,
        l,
        r,
        step,
    })
}

/// Tolerance for successive step halvings in [`scattering_coefficients`].
pub const STEP_AGREEMENT: f64 = 1e-8;

/// Coefficients with self-validated step: starting at the default step, the
/// step is halved until two successive `T` values agree to 1e-8.
pub fn scattering_coefficients(v: &Potential, kgrid: &[f64]) -> Result<ScatteringCoefficients> {
    let mut step = v.default_step();
    let mut prev = scattering_with_step(v, kgrid, step)?;
    for _ in 0..8 {
        step *= 0.5;
        let next = scattering_with_step(v, kgrid, step)?;
        let diff = prev
            .t
            .iter()
            .zip(&next.t)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        prev = next;
        if diff <= STEP_AGREEMENT {
            return Ok(prev);
        }
    }
    Err(Error::NumericalFailure(
        "step halving did not reach 1e-8 agreement in T".into(),
    ))
}

/// `D(k) = L(k)/T(k)` on a real grid.
pub fn ratio_d(v: &Potential, kgrid: &[f64]) -> Result<Vec<C>> {
    Ok(scattering_coefficients(v, kgrid)?.ratio())
}

/// Bound states `κ_1 < … < κ_N` with dependency constants `γ_j`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundStateData {
    pub kappas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl BoundStateData {
    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    /// `(−1)^{N−j} γ_j > 0` for every `j` (1-based).
    pub fn sign_rule_holds(&self) -> bool {
        let n = self.gammas.len();
        self.gammas.iter().enumerate().all(|(j, g)| {
            if (n - 1 - j) % 2 == 0 {
                *g > 0.0
            } else {
                *g < 0.0
            }
        })
    }
}

/// `f_l(iκ, ·)` swept leftward from `(1, −κ)` at the right edge, a positive
/// multiple of the Jost solution.
#[derive(Clone, Copy)]
struct Decaying {
    /// Zeros on the whole line. By Sturm oscillation this is the number of
    /// bound states strictly above `κ`.
    count: usize,
    /// `κ f_l(a) − f_l'(a)`, a positive multiple of `W[f_l, f_r](iκ)` once
    /// multiplied by `e^{log_scale}`.
    w: f64,
    log_scale: f64,
}

/// Sign changes of the renormalized sweep at the nodes, and its end state.
fn interior_zeros(mesh: &[MeshPiece<'_>], kappa: f64) -> (usize, SweepEnd<f64>) {
    let mut changes = 0usize;
    let mut last = 0.0_f64;
    let end = sweep(
        mesh,
        -kappa * kappa,
        Sweep::Leftward,
        (1.0, -kappa),
        true,
        |_, _, psi, _| {
            if psi != 0.0 {
                let s = psi.signum();
                if last != 0.0 && s != last {
                    changes += 1;
                }
                last = s;
            }
        },
    );
    (changes, end)
}

fn decaying(mesh: &[MeshPiece<'_>], kappa: f64) -> Decaying {
    let (mut count, end) = interior_zeros(mesh, kappa);
    let w = kappa * end.psi - end.dpsi;
    // Left of the support f_l = α e^{κ(x−a)} + β e^{−κ(x−a)} with 2κβ = w:
    // one more zero when β and f_l(a) differ in sign.
    if w * end.psi < 0.0 {
        count += 1;
    }
    Decaying {
        count,
        w,
        log_scale: end.log_scale,
    }
}

/// Zero-energy data: `f_l(0, ·)` at the left edge and the node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroEnergyInfo {
    /// `f_l(0, a)`.
    pub fl_left: f64,
    /// `f_l'(0, a)`; zero exactly in the exceptional case.
    pub fl_prime_left: f64,
    pub exceptional: bool,
    /// `T(0)`: `2A/(1 + A²)` in the exceptional case, 0 otherwise.
    pub t0: f64,
    /// Zeros of `f_l(0, ·)` on the whole line, which equals the number of
    /// bound states.
    pub node_count: usize,
}

/// Relative size of `f_l'(0, a)` below which the potential counts as exceptional.
pub const EXCEPTIONAL_TOL: f64 = 1e-7;

pub fn zero_energy_info(v: &Potential, step: f64) -> Result<ZeroEnergyInfo> {
    validate_step(step)?;
    let mesh = build_mesh(v, step);
    check_step(&mesh, C::new(0.0, 0.0))?;
    let (a, b) = v.support();
    let (mut changes, end) = interior_zeros(&mesh, 0.0);
    let scale = end.log_scale.exp();
    let (fa, dfa) = (end.psi * scale, end.dpsi * scale);
    let exceptional = dfa.abs() * (b - a).max(1.0) <= EXCEPTIONAL_TOL * fa.abs();
    // Left of the support f_l(0,x) = A + B (x − a) has one more zero when A/B > 0.
    if !exceptional && fa * dfa > 0.0 {
        changes += 1;
    }
    let t0 = if exceptional {
        2.0 / (fa + 1.0 / fa)
    } else {
        0.0
    };
    Ok(ZeroEnergyInfo {
        fl_left: fa,
        fl_prime_left: dfa,
        exceptional,
        t0,
        node_count: changes,
    })
}

/// Brackets `[lo, hi]` holding exactly one bound state each, by bisection
/// on the Sturm count.
fn isolate(
    mesh: &[MeshPiece<'_>],
    lo: (f64, Decaying),
    hi: (f64, Decaying),
    out: &mut Vec<((f64, Decaying), (f64, Decaying))>,
) -> Result<()> {
    let inside = lo.1.count.checked_sub(hi.1.count).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "Sturm count rises from {} to {} on [{}, {}]",
            lo.1.count, hi.1.count, lo.0, hi.0
        ))
    })?;
    match inside {
        0 => Ok(()),
        1 => {
            out.push((lo, hi));
            Ok(())
        }
        _ => {
            let mid = 0.5 * (lo.0 + hi.0);
            if !(mid > lo.0 && mid < hi.0) || hi.0 - lo.0 <= 1e-13 * hi.0 {
                return Err(Error::ScanTooCoarse(format!(
                    "{inside} bound states unresolved near κ = {mid}"
                )));
            }
            let at_mid = (mid, decaying(mesh, mid));
            isolate(mesh, lo, at_mid, out)?;
            isolate(mesh, at_mid, hi, out)
        }
    }
}

/// The single bound state in an isolating bracket: Illinois regula falsi on
/// the rescaled Wronskian, safeguarded by bisection, with the Sturm count
/// deciding the side.
fn polish(mesh: &[MeshPiece<'_>], lo: (f64, Decaying), hi: (f64, Decaying)) -> f64 {
    let upper = lo.1.count - 1;
    let reference = lo.1.log_scale.max(hi.1.log_scale);
    let value = |d: &Decaying| d.w * (d.log_scale - reference).exp();
    let (mut a, mut fa) = (lo.0, value(&lo.1));
    let (mut b, mut fb) = (hi.0, value(&hi.1));
    let mut side = 0;
    let mut width = f64::INFINITY;
    for _ in 0..200 {
        if b - a <= 1e-14 * b {
            break;
        }
        // A step that failed to halve the bracket is followed by a bisection.
        let stalled = b - a > 0.5 * width;
        width = b - a;
        let falsi = (a * fb - b * fa) / (fb - fa);
        let x = if !stalled && fa * fb < 0.0 && falsi > a && falsi < b {
            falsi
        } else {
            0.5 * (a + b)
        };
        if x <= a || x >= b {
            break;
        }
        let d = decaying(mesh, x);
        let fx = value(&d);
        if d.count > upper {
            (a, fa) = (x, fx);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            (b, fb) = (x, fx);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fx == 0.0 {
            return x;
        }
    }
    0.5 * (a + b)
}

/// Bound states with `κ` in `(0, kappa_max)`. The number of zeros of
/// `f_l(iκ, ·)` counts the states above `κ`, so bisection on that count
/// isolates every state before it is polished on the Wronskian.
pub fn find_bound_states(v: &Potential, kappa_max: f64) -> Result<BoundStateData> {
    find_bound_states_with_step(v, kappa_max, v.default_step())
}

pub fn find_bound_states_with_step(
    v: &Potential,
    kappa_max: f64,
    step: f64,
) -> Result<BoundStateData> {
    let depth = v.max_well_depth();
    if !(kappa_max.is_finite() && kappa_max >= depth.sqrt()) {
        return Err(Error::InvalidArgument(format!(
            "kappa_max {kappa_max} must be at least sqrt(max|V|) = {}",
            depth.sqrt()
        )));
    }
    let info = zero_energy_info(v, step)?;
    if depth == 0.0 || info.node_count == 0 {
        return Ok(BoundStateData {
            kappas: vec![],
            gammas: vec![],
        });
    }
    let mesh = build_mesh(v, step);
    let kappa_max = kappa_max.max(1e-12);
    check_step(&mesh, C::new(0.0, kappa_max))?;
    let mut zero = decaying(&mesh, 0.0);
    // The exterior zero of the linear solution at κ = 0 lies at −∞ in the
    // exceptional case; the zero-energy count settles it.
    zero.count = info.node_count;
    let mut brackets = Vec::with_capacity(info.node_count);
    isolate(
        &mesh,
        (0.0, zero),
        (kappa_max, decaying(&mesh, kappa_max)),
        &mut brackets,
    )?;
    let kappas: Vec<f64> = brackets
        .par_iter()
        .map(|&(lo, hi)| polish(&mesh, lo, hi))
        .collect();
    let gammas = kappas
        .par_iter()
        .map(|&kap| Ok(jost_pair(v, C::new(0.0, kap), step)?.dependency_constant()))
        .collect::<Result<Vec<_>>>()?;
    let data = BoundStateData { kappas, gammas };
    if !data.sign_rule_holds() {
        return Err(Error::NumericalFailure(format!(
            "dependency constants {:?} violate the sign rule",
            data.gammas
        )));
    }
    Ok(data)
}

/// All bound states, with the scan ceiling taken just above `sqrt(max(−V))`.
pub fn bound_states(v: &Potential) -> Result<BoundStateData> {
    let kmax = v.max_well_depth().sqrt() * (1.0 + 1e-9) + 1e-12;
    find_bound_states(v, kmax)
}

/// `ρ(x) = f_l'(0,x)/f_l(0,x)` on the support mesh of an exceptional,
/// bound-state-free potential; zero outside the support.
#[derive(Debug, Clone)]
pub struct LogDerivative {
    pub segments: Vec<(Vec<f64>, Vec<f64>)>,
    /// Smallest value of the zero-energy solution used, normalized to 1 at
    /// the far edge; strictly positive.
    pub min_solution: f64,
}

impl LogDerivative {
    pub fn evaluate(&self, x: f64) -> f64 {
        for (xs, rho) in &self.segments {
            let (lo, hi) = (xs[0], xs[xs.len() - 1]);
            if x >= lo && x <= hi {
                let i = xs.partition_point(|&xi| xi <= x).clamp(1, xs.len() - 1);
                let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                return rho[i - 1] * (1.0 - w) + rho[i] * w;
            }
        }
        0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|(_, r)| r.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Threshold on `|T(0)|` separating exceptional from generic potentials.
pub const T0_THRESHOLD: f64 = 1e-6;

/// Zero-energy logarithmic derivative. Uses `f_l(0,·)` on the right half of
/// the support and `f_r(0,·)` on the left half; the two agree in the
/// exceptional case and each is integrated in its stable direction.
pub fn zero_energy_logderivative(v: &Potential) -> Result<LogDerivative> {
    let step = v.default_step();
    let info = zero_energy_info(v, step)?;
    if !info.exceptional || info.t0.abs() < T0_THRESHOLD {
        return Err(Error::NotExceptional { t0: info.t0.abs() });
    }
    if info.node_count > 0 {
        return Err(Error::HasBoundStates(info.node_count));
    }
    let pair = jost_pair(v, C::new(0.0, 0.0), step)?;
    let (a, b) = v.support();
    let mid = 0.5 * (a + b);
    let fr_scale = 1.0 / info.fl_left;
    let mut min_solution = f64::INFINITY;
    let segments = pair
        .segments
        .iter()
        .map(|s| {
            let rho = (0..s.x.len())
                .map(|i| {
                    let (f, df) = if s.x[i] >= mid {
                        (s.fl[i].re, s.fl_prime[i].re)
                    } else {
                        // f_l = A f_r in the exceptional case.
                        (s.fr[i].re / fr_scale, s.fr_prime[i].re / fr_scale)
                    };
                    min_solution = min_solution.min(f);
                    df / f
                })
                .collect();
            (s.x.clone(), rho)
        })
        .collect();
    if !(min_solution > 0.0) {
        return Err(Error::NumericalFailure(
            "zero-energy solution is not strictly positive".into(),
        ));
    }
    Ok(LogDerivative {
        segments,
        min_solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn free_jost_solutions_are_exponentials() {
        let v = Potential::zero();
        let k = C::new(1.3, 0.2);
        let pair = solve_jost(&v, k, v.default_step()).unwrap();
        for s in &pair.segments {
            for (i, &x) in s.x.iter().enumerate() {
                assert!(close(s.fl[i], (I * k * x).exp(), 1e-13));
                assert!(close(s.fr[i], (-I * k * x).exp(), 1e-13));
            }
        }
    }

    #[test]
    fn square_well_matches_layer_solution() {
        // Inside V = -ε on [0,1]: f_l = e^{ik}[cos q(x-1) + ik sin q(x-1)/q], q = √(k²+ε).
        let eps = 5.0;
        let k = C::new(1.0, 0.0);
        let v = Potential::square_well(eps).unwrap();
        let pair = solve_jost(&v, k, v.default_step()).unwrap();
        let q = (k * k + eps).sqrt();
        let mut worst = 0.0_f64;
        for s in &pair.segments {
            for (i, &x) in s.x.iter().enumerate() {
                let exact =
                    (I * k).exp() * ((q * (x - 1.0)).cos() + I * k * (q * (x - 1.0)).sin() / q);
                worst = worst.max((s.fl[i] - exact).norm());
            }
        }
        assert!(worst <= 1e-6, "max error {worst}");
        assert!(pair.wronskian_spread() <= 1e-8);
    }

    #[test]
    fn rejects_lower_half_plane_and_coarse_steps() {
        let v = Potential::square_well(5.0).unwrap();
        assert!(matches!(
            solve_jost(&v, C::new(1.0, -0.1), 1e-3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_jost(&v, C::new(1.0, 0.0), 0.4),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn free_scattering() {
        let s = scattering_coefficients(&Potential::zero(), &[0.5, 1.0, 2.0]).unwrap();
        for i in 0..3 {
            assert!(close(s.t[i], C::new(1.0, 0.0), 1e-14));
            assert!(s.l[i].norm() < 1e-14 && s.r[i].norm() < 1e-14);
        }
    }

    #[test]
    fn square_well_transmission_matches_closed_form() {
        let eps = 20.0;
        let v = Potential::square_well(eps).unwrap();
        let ks = [0.3, 1.0, 2.5, 7.0];
        let s = scattering_coefficients(&v, &ks).unwrap();
        for (i, &k) in ks.iter().enumerate() {
            let kc = C::new(k, 0.0);
            let q = (kc * kc + eps).sqrt();
            let inv_tau =
                (I * kc).exp() * (q.cos() + (2.0 * kc * kc + eps) / (2.0 * I * kc * q) * q.sin());
            assert!(close(s.t[i], 1.0 / inv_tau, 1e-9));
            let d = -eps * (I * kc).exp() * q.sin() / (2.0 * I * kc * q);
            assert!(close(s.l[i] / s.t[i], d, 1e-9));
        }
        assert!(s.max_unitarity_residual() < 1e-8);
        assert!(s.max_reflection_asymmetry() < 1e-8);
    }

    #[test]
    fn zero_energy_limit_of_ratio() {
        let eps = 5.0_f64;
        let v = Potential::square_well(eps).unwrap();
        let f = two_ik_ratio(&v, C::new(1e-7, 0.0), v.default_step()).unwrap();
        let expected = -eps.sqrt() * eps.sqrt().sin();
        assert!(expected > -2.0 && expected < 0.0);
        assert!((f.re - expected).abs() < 1e-6);
    }

    #[test]
    fn bound_state_counts_for_wells() {
        for eps in [2.0, 5.0, 20.0, 50.0, 130.0] {
            let v = Potential::square_well(eps).unwrap();
            let bs = bound_states(&v).unwrap();
            let expected = (eps.sqrt() / PI).floor() as usize + 1;
            assert_eq!(bs.len(), expected, "eps = {eps}");
            assert!(bs.sign_rule_holds());
        }
    }

    #[test]
    fn free_potential_has_no_bound_states_and_is_exceptional() {
        let v = Potential::zero();
        assert!(bound_states(&v).unwrap().is_empty());
        let info = zero_energy_info(&v, v.default_step()).unwrap();
        assert!(info.exceptional);
        assert!((info.t0 - 1.0).abs() < 1e-14);
        let rho = zero_energy_logderivative(&v).unwrap();
        assert_eq!(rho.max_abs(), 0.0);
    }

    #[test]
    fn generic_potential_is_not_exceptional() {
        let v = Potential::square_well(5.0).unwrap();
        assert!(matches!(
            zero_energy_logderivative(&v),
            Err(Error::NotExceptional { .. })
        ));
        let rep = Potential::piecewise(vec![0.0, 1.0], vec![2.0]).unwrap();
        assert!(matches!(
            zero_energy_logderivative(&rep),
            Err(Error::NotExceptional { .. })
        ));
    }

    #[test]
    fn exceptional_well_with_bound_state_is_rejected() {
        let v = Potential::square_well(PI * PI).unwrap();
        assert!(matches!(
            zero_energy_logderivative(&v),
            Err(Error::HasBoundStates(1))
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let s = scattering_coefficients(&Potential::zero(), &[1.0, 2.0]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,reT,imT,reL,imL,reR,imR");
        assert_eq!(lines.len(), 3);
        let row: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], 1.0);
        assert!((row[1] - 1.0).abs() < 1e-14);
    }
}
