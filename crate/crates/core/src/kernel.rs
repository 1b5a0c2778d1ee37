//! The heat kernel `S_n(t, x) = (4πt)^{-n/2} exp(-|x|²/(4t))` (zero for
//! `t <= 0`), its gradient, and exact integrals over a window of elapsed time.
//!
//! With `u = r²/(4s)` every window integral `∫_a^b s^{-k} S_n(s, r) ds` becomes
//! `(4π)^{-n/2} (r²/4)^{1-k-n/2} ∫_{r²/4b}^{r²/4a} u^{k+n/2-2} e^{-u} du`,
//! which [`crate::special::gamma_window`] evaluates in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma_window, UNDERFLOW_ARGUMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn n(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }

    pub fn from_n(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            _ => Err(Error::InvalidInput(format!("unsupported dimension {n}"))),
        }
    }
}

/// A point `(t, x)` of space-time where the kernel is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub dim: Dimension,
    pub t: f64,
    pub x: Vec<f64>,
}

impl KernelQuery {
    pub fn new(dim: Dimension, t: f64, x: &[f64]) -> Result<Self> {
        if x.len() != dim.n() {
            return Err(Error::InvalidInput(format!(
                "displacement has {} components, dimension is {}",
                x.len(),
                dim.n()
            )));
        }
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kernel query must be finite".into()));
        }
        if t == 0.0 && x.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput(
                "the heat kernel is undefined at (t, x) = (0, 0)".into(),
            ));
        }
        Ok(Self { dim, t, x: x.to_vec() })
    }

    fn radius_squared(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }
}

/// Kernel value from `t` and `|x|²`; no validation.
pub fn heat_kernel(dim: Dimension, t: f64, r2: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let arg = r2 / (4.0 * t);
    if arg > UNDERFLOW_ARGUMENT {
        return 0.0;
    }
    (4.0 * PI * t).powf(-(dim.n() as f64) / 2.0) * (-arg).exp()
}

pub fn eval_s(query: &KernelQuery) -> f64 {
    heat_kernel(query.dim, query.t, query.radius_squared())
}

/// `∇_x S_n(t, x) = -x / (2t) S_n(t, x)`; zero for `t <= 0`.
pub fn grad_s(query: &KernelQuery) -> Vec<f64> {
    if query.t <= 0.0 {
        return vec![0.0; query.x.len()];
    }
    let s = eval_s(query);
    query.x.iter().map(|v| -v / (2.0 * query.t) * s).collect()
}

/// Elapsed-time window `[a, b]` at spatial distance `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSlab {
    pub r: f64,
    pub a: f64,
    pub b: f64,
}

impl TimeSlab {
    pub fn new(r: f64, a: f64, b: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time-integrated kernel needs r > 0 (got {r}); the diagonal belongs to the quadrature layer"
            )));
        }
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b) {
            return Err(Error::InvalidInput(format!(
                "time window must satisfy 0 <= a <= b (got [{a}, {b}])"
            )));
        }
        Ok(Self { r, a, b })
    }
}

/// `∫_a^b s^{-k} S_n(s, r) ds` for `k ∈ {0, 1, 2}`, `r > 0`.
pub fn kernel_moment(dim: Dimension, k: i32, r: f64, a: f64, b: f64) -> f64 {
    debug_assert!((0..=2).contains(&k));
    if b <= a || b <= 0.0 {
        return 0.0;
    }
    let n = dim.n() as i32;
    let quarter_r2 = 0.25 * r * r;
    let lo = quarter_r2 / b;
    let hi = if a > 0.0 { quarter_r2 / a } else { f64::INFINITY };
    let window = gamma_window(2 * k + n - 4, lo, hi);
    if window == 0.0 {
        return 0.0;
    }
    let prefactor = match dim {
        Dimension::Two => 1.0 / (4.0 * PI),
        Dimension::Three => (4.0 * PI).powf(-1.5),
    };
    let power = 1 - k - n / 2;
    let scale = match dim {
        Dimension::Two => quarter_r2.powi(power),
        // n/2 = 3/2: (r²/4)^{1-k-3/2} = (r/2)^{-1-2k}
        Dimension::Three => (0.5 * r).powi(-1 - 2 * k),
    };
    prefactor * scale * window
}

/// `∫_a^b S_n(s, r) ds`.
pub fn slab_value(dim: Dimension, r: f64, a: f64, b: f64) -> f64 {
    kernel_moment(dim, 0, r, a, b)
}

/// `g` with `∫_a^b ∇S_n(s, z) ds = -z g(|z|, a, b)`.
pub fn slab_gradient_factor(dim: Dimension, r: f64, a: f64, b: f64) -> f64 {
    0.5 * kernel_moment(dim, 1, r, a, b)
}

/// `q` with `∫_a^b ∇∇S_n(s, z) ds = z zᵀ q - I g`; also `∂g/∂r = -r q`.
pub fn slab_hessian_factor(dim: Dimension, r: f64, a: f64, b: f64) -> f64 {
    0.25 * kernel_moment(dim, 2, r, a, b)
}

/// Limit of `∫_a^b S_2(s, r) ds` as `r -> 0` for `a > 0`.
pub fn slab_value_at_origin_2d(a: f64, b: f64) -> f64 {
    (b / a).ln() / (4.0 * PI)
}

/// `∫_a^b s^{-k} S_n(s, 0) ds`; infinite when `a = 0`.
pub fn kernel_moment_at_origin(dim: Dimension, k: i32, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let n = dim.n() as f64;
    let prefactor = (4.0 * PI).powf(-0.5 * n);
    let e = k as f64 + 0.5 * n;
    if e == 1.0 {
        prefactor * (b / a).ln()
    } else {
        prefactor * (a.powf(1.0 - e) - b.powf(1.0 - e)) / (e - 1.0)
    }
}

pub fn time_integrated_s(slab: &TimeSlab, dim: Dimension) -> f64 {
    slab_value(dim, slab.r, slab.a, slab.b)
}

pub fn time_integrated_grad_s(slab: &TimeSlab, dim: Dimension) -> f64 {
    slab_gradient_factor(dim, slab.r, slab.a, slab.b)
}

/// `|S_n(τ, z)| / e^{-|z|²/(8 t0)}` evaluated in log space.
pub fn decay_ratio(dim: Dimension, tau: f64, z_norm: f64, t0: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let n = dim.n() as f64;
    let z2 = z_norm * z_norm;
    (-0.5 * n * (4.0 * PI * tau).ln() - z2 / (4.0 * tau) + z2 / (8.0 * t0)).exp()
}

/// `|∇S_n(τ, z)| / e^{-|z|²/(8 t0)}`.
pub fn decay_ratio_gradient(dim: Dimension, tau: f64, z_norm: f64, t0: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    z_norm / (2.0 * tau) * decay_ratio(dim, tau, z_norm, t0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub k1: f64,
    pub k2: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples `(τ, |z|) ∈ (0, t0] × [1, 20]` on a tensor grid and returns the
/// smallest constants with `|S_n| <= K1 e^{-|z|²/(8t0)}` and
/// `|∇S_n| <= K2 e^{-|z|²/(8t0)}` on the samples.
pub fn check_decay_bounds(dim: Dimension, t0: f64, samples: usize) -> Result<DecayReport> {
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::InvalidInput(format!("t0 must be positive, got {t0}")));
    }
    let per_axis = ((samples as f64).sqrt().ceil() as usize).max(2);
    let (mut k1, mut k2) = (0.0f64, 0.0f64);
    for i in 1..=per_axis {
        let tau = t0 * i as f64 / per_axis as f64;
        for j in 0..per_axis {
            let z = 1.0 + 19.0 * j as f64 / (per_axis - 1) as f64;
            k1 = k1.max(decay_ratio(dim, tau, z, t0));
            k2 = k2.max(decay_ratio_gradient(dim, tau, z, t0));
        }
    }
    Ok(DecayReport {
        k1,
        k2,
        samples: per_axis * per_axis,
        pass: k1.is_finite() && k2.is_finite(),
    })
}
