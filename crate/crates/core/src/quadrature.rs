//! Quadrature rules: composite Simpson on uniform samples and an adaptive
//! Gauss–Kronrod (7/15) integrator for complex-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

/// Composite Simpson on uniformly spaced samples. Odd cell counts close with
/// the 3/8 rule on the last three cells; a single cell falls back to the
/// trapezoid.
pub fn simpson(dx: f64, y: &[f64]) -> f64 {
    let cells = y.len().saturating_sub(1);
    match cells {
        0 => 0.0,
        1 => 0.5 * dx * (y[0] + y[1]),
        2 => dx / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        3 => 3.0 * dx / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]),
        _ => {
            let even = if cells % 2 == 0 { cells } else { cells - 3 };
            let mut s = y[0] + y[even];
            for (i, v) in y.iter().enumerate().take(even).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = dx / 3.0 * s;
            if even != cells {
                let t = &y[even..];
                total += 3.0 * dx / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
            }
            total
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).norm();
    (value, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss–Kronrod over `[points[0], points[last]]`, split
/// initially at every interior point. Bisects the panel with the largest
/// error estimate until the total estimate drops below
/// `max(abs_tol, rel_tol * |I|)` or `max_panels` is reached.
pub fn integrate(
    f: impl Fn(f64) -> Complex64,
    points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, e) = gk15(&f, w[0], w[1]);
            total += value;
            err += e;
            heap.push(Panel {
                a: w[0],
                b: w[1],
                value,
                err: e,
            });
        }
    }
    while err > abs_tol.max(rel_tol * total.norm()) && heap.len() < max_panels {
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    // Re-sum to shed the drift of the running updates.
    let panels = heap.len();
    let (value, error) = heap
        .into_iter()
        .fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), p| {
            (v + p.value, e + p.err)
        });
    Integral {
        value,
        error,
        panels,
    }
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> (f64, f64) {
    let r = integrate(|x| Complex64::new(f(x), 0.0), &[a, b], abs_tol, 0.0, 4096);
    (r.value.re, r.error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        for cells in [2usize, 3, 4, 5, 7, 10] {
            let dx = 1.0 / cells as f64;
            let y: Vec<f64> = (0..=cells).map(|i| (i as f64 * dx).powi(3)).collect();
            assert!((simpson(dx, &y) - 0.25).abs() < 1e-14, "cells = {cells}");
        }
    }

    #[test]
    fn gauss_kronrod_handles_log_endpoint() {
        // ∫_0^1 ln x dx = -1
        let (v, _) = integrate_real(|x| x.ln(), 0.0, 1.0, 1e-13);
        assert!((v + 1.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_kronrod_lorentzian() {
        let w = 1e-3;
        let r = integrate(
            |x| Complex64::new(w / (x * x + w * w), 0.0),
            &[-1.0, 0.0, 1.0],
            1e-12,
            0.0,
            4000,
        );
        let exact = 2.0 * (1.0 / w).atan();
        assert!((r.value.re - exact).abs() < 1e-10);
    }
}
