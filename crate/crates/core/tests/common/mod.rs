//! Brute-force quadrature oracles shared by the integration tests.
//!
//! Everything here integrates the raw heat kernel with adaptive Gauss-Kronrod
//! in both time and arc parameter; nothing goes through the closed-form time
//! integrals or the assembled operators.

#![allow(dead_code)]

use std::f64::consts::TAU;

use heatbie::kernel::{heat_kernel, Dimension};
use heatbie::quadrature::integrate;
use heatbie::{BoundaryCurve, Point};

pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    integrate(f, a, b, rel, 1e-300, 20_000).value
}

/// `∫_a^b s^{-k} S_n(s, r) ds` by adaptive quadrature.
pub fn kernel_moment_oracle(dim: Dimension, k: i32, r: f64, a: f64, b: f64) -> f64 {
    adaptive(
        |s| {
            if s > 0.0 {
                s.powi(-k) * heat_kernel(dim, s, r * r)
            } else {
                0.0
            }
        },
        a,
        b,
        1e-14,
    )
}

/// Layer potential of a time-only density `c(s)` times a spatial profile `p(φ)`:
/// `∫_0^{2π} ∫_0^t c(s) p(φ) K(t - s, x, γ(φ)) |γ'(φ)| ds dφ`, with `c` piecewise
/// constant on cells of width `h` (value `c(k)` on cell `k >= 1`).
pub fn brute_layer(
    curve: &BoundaryCurve,
    t: f64,
    x: Point,
    double: bool,
    h: f64,
    c: &dyn Fn(usize) -> f64,
    p: &dyn Fn(f64) -> f64,
) -> f64 {
    let cells = (t / h).ceil() as usize;
    adaptive(
        |phi| {
            let y = curve.position(phi);
            let z = x - y;
            let r2 = z.norm_squared();
            let nu = curve.normal(phi);
            let kernel = |tau: f64| {
                if tau <= 0.0 {
                    return 0.0;
                }
                let s = heat_kernel(Dimension::Two, tau, r2);
                if double {
                    z.dot(&nu) / (2.0 * tau) * s
                } else {
                    s
                }
            };
            let mut acc = 0.0;
            for k in 1..=cells {
                let (lo, hi) = ((k - 1) as f64 * h, (k as f64 * h).min(t));
                if hi > lo {
                    acc += c(k) * adaptive(kernel, t - hi, t - lo, 1e-13);
                }
            }
            acc * p(phi) * curve.speed(phi)
        },
        0.0,
        TAU,
        1e-12,
    )
}

/// `ν(x)·∇_x` of the single layer on a disjoint target point with normal `nu`.
pub fn brute_normal_derivative(
    curve: &BoundaryCurve,
    t: f64,
    x: Point,
    nu: Point,
    h: f64,
    c: &dyn Fn(usize) -> f64,
    p: &dyn Fn(f64) -> f64,
) -> f64 {
    let cells = (t / h).ceil() as usize;
    adaptive(
        |phi| {
            let z = x - curve.position(phi);
            let r2 = z.norm_squared();
            let kernel = |tau: f64| {
                if tau <= 0.0 {
                    return 0.0;
                }
                -z.dot(&nu) / (2.0 * tau) * heat_kernel(Dimension::Two, tau, r2)
            };
            let mut acc = 0.0;
            for k in 1..=cells {
                let (lo, hi) = ((k - 1) as f64 * h, (k as f64 * h).min(t));
                if hi > lo {
                    acc += c(k) * adaptive(kernel, t - hi, t - lo, 1e-13);
                }
            }
            acc * p(phi) * curve.speed(phi)
        },
        0.0,
        TAU,
        1e-12,
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
