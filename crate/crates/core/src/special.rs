//! Special functions behind the closed-form kernel time integrals.
//!
//! Every time-integrated heat kernel reduces, after the substitution
//! `u = r^2 / (4 s)`, to a window of an incomplete gamma integral
//! `∫_lo^hi u^p e^{-u} du` with `p` an integer or half-integer. This module
//! evaluates those windows without catastrophic cancellation.

use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments of `e^{-u}` past this point underflow to zero (or subnormals).
pub const UNDERFLOW_ARGUMENT: f64 = 708.0;

const GL32_NODES: [f64; 16] = [
    0.04830766568773831,
    0.1444719615827965,
    0.23928736225213706,
    0.33186860228212767,
    0.42135127613063533,
    0.5068999089322294,
    0.5877157572407623,
    0.6630442669302152,
    0.7321821187402897,
    0.7944837959679424,
    0.84936761373257,
    0.8963211557660522,
    0.9349060759377397,
    0.9647622555875064,
    0.9856115115452684,
    0.9972638618494816,
];
const GL32_WEIGHTS: [f64; 16] = [
    0.09654008851472781,
    0.09563872007927483,
    0.09384439908080457,
    0.09117387869576386,
    0.08765209300440391,
    0.08331192422694685,
    0.07819389578707031,
    0.07234579410884845,
    0.06582222277636175,
    0.058684093478535704,
    0.050998059262376244,
    0.042835898022226426,
    0.034273862913021626,
    0.025392065309262427,
    0.016274394730905965,
    0.007018610009469298,
];

/// 32-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_32<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL32_NODES.iter().zip(GL32_WEIGHTS.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

/// Entire part of the exponential integral, `Ein(x) = ∫_0^x (1 - e^{-s}) / s ds`.
///
/// `E1(x) = -γ - ln x + Ein(x)` for `x > 0`.
pub fn ein(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= -x / kf;
            let contrib = -term / kf;
            sum += contrib;
            if contrib.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        exp_integral_e1(x) + EULER_GAMMA + x.ln()
    }
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-u}/u du` for `x > 0`.
///
/// Returns `+∞` at `x = 0` and exactly `0` once `e^{-x}` underflows.
pub fn exp_integral_e1(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "E1 requires a non-negative argument");
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x > UNDERFLOW_ARGUMENT {
        return 0.0;
    }
    if x <= 1.0 {
        return -EULER_GAMMA - x.ln() + ein(x);
    }
    // Modified Lentz evaluation of the continued fraction.
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Lower incomplete gamma `γ(s, x)` by its power series; intended for `x ≲ 2`.
fn lower_gamma_series(s: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / s;
    let mut sum = term;
    for k in 1..200 {
        term *= x / (s + k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum * (s * x.ln() - x).exp()
}

/// Upper incomplete gamma `Γ(s, x)` for `s ∈ {1/2, 1, 3/2, 2, 5/2}` (`twice_s` = 2s).
fn upper_gamma_small_order(twice_s: i32, x: f64) -> f64 {
    if x > UNDERFLOW_ARGUMENT {
        return 0.0;
    }
    let (mut order, mut value) = if twice_s % 2 == 1 {
        (0.5, PI.sqrt() * erfc(x.sqrt()))
    } else {
        (1.0, (-x).exp())
    };
    let target = twice_s as f64 / 2.0;
    while order < target - 0.25 {
        // Γ(s+1, x) = s Γ(s, x) + x^s e^{-x}
        value = order * value + (order * x.ln() - x).exp();
        order += 1.0;
    }
    value
}

const GL12_NODES: [f64; 6] = [
    0.1252334085114689,
    0.3678314989981802,
    0.5873179542866175,
    0.7699026741943047,
    0.9041172563704748,
    0.9815606342467192,
];
const GL12_WEIGHTS: [f64; 6] = [
    0.2491470458134027,
    0.23349253653835464,
    0.20316742672306565,
    0.1600783285433461,
    0.10693932599531888,
    0.04717533638651202,
];

fn integrand(twice_p: i32, u: f64) -> f64 {
    let e = (-u).exp();
    match twice_p {
        -2 => e / u,
        -1 => e / u.sqrt(),
        0 => e,
        1 => e * u.sqrt(),
        2 => e * u,
        _ => e * u * u.sqrt(),
    }
}

/// `δ - (1 - e^{-δ})` without cancellation for small `δ`.
fn exp_defect(delta: f64) -> f64 {
    if delta < 0.1 {
        // δ²/2 - δ³/6 + δ⁴/24 - ...
        let mut term = 0.5 * delta * delta;
        let mut sum = term;
        for k in 3..12 {
            term *= -delta / k as f64;
            sum += term;
        }
        sum
    } else {
        delta + (-delta).exp_m1()
    }
}

/// `∫_lo^hi u^p e^{-u} du` with `p = twice_p / 2 ∈ {-1, -1/2, 0, 1/2, 1, 3/2}`.
///
/// `hi` may be `f64::INFINITY`. Windows whose lower end underflows `e^{-u}`
/// return exactly zero.
pub fn gamma_window(twice_p: i32, lo: f64, hi: f64) -> f64 {
    debug_assert!((-2..=3).contains(&twice_p), "unsupported exponent");
    debug_assert!(lo >= 0.0 && hi >= lo);
    if lo >= UNDERFLOW_ARGUMENT || hi == lo {
        return 0.0;
    }
    let delta = hi - lo;
    match twice_p {
        0 => return (-lo).exp() * -(-delta).exp_m1(),
        2 => {
            // e^{-lo} [hi (1 - e^{-δ}) - (δ - (1 - e^{-δ}))]
            if !hi.is_finite() {
                return (1.0 + lo) * (-lo).exp();
            }
            return (-lo).exp() * (hi * -(-delta).exp_m1() - exp_defect(delta));
        }
        _ => {}
    }
    if hi <= 2.0 * lo && delta <= 1.0 {
        // Short window away from the origin: the integrand is analytic on a
        // Bernstein ellipse of parameter >= 3 + 2√2, so 12 nodes are exact
        // to rounding.
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * delta;
        let mut acc = 0.0;
        for (x, w) in GL12_NODES.iter().zip(GL12_WEIGHTS.iter()) {
            acc += w * (integrand(twice_p, mid - half * x) + integrand(twice_p, mid + half * x));
        }
        return acc * half;
    }
    let p = twice_p as f64 / 2.0;
    if twice_p == -2 {
        return exp_integral_e1(lo) - exp_integral_e1(hi);
    }
    let twice_s = twice_p + 2;
    let s = p + 1.0;
    if hi.is_finite() && hi <= 1.0 {
        lower_gamma_series(s, hi) - lower_gamma_series(s, lo)
    } else if lo < 1.0 && twice_p == -1 {
        // √π (erf(√hi) - erf(√lo)) keeps precision for small lo.
        let upper = if hi.is_finite() { erf(hi.sqrt()) } else { 1.0 };
        PI.sqrt() * (upper - erf(lo.sqrt()))
    } else {
        let tail = if hi.is_finite() {
            upper_gamma_small_order(twice_s, hi)
        } else {
            0.0
        };
        upper_gamma_small_order(twice_s, lo) - tail
    }
}
