//! Carleman weights `alpha(t,x) = M beta(x) / (t (T - t))` for the mode
//! equations, the constants of the Carleman chain, and numerical checks of
//! the resulting inequalities on computed adjoint trajectories.
//!
//! Regular regime (`1/2 <= gamma <= 1`): `beta'' = -1` outside `(a', b')`
//! plus a smooth positive bump inside, sized so that `beta'(-1) = -s` and
//! `beta'(1) = s`.
//!
//! Singular regime (`0 < gamma < 1/2`): `beta' = -sqrt(sign(x)|x|^{2 gamma} + C_1)`
//! on `(-eps, eps)`, continued by constant-curvature branches matching
//! `beta''` at `+-eps`, and the same bump inside `(a', b')`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bounds::certified_lower_constant;
use crate::error::{GrushinError, Result};
use crate::evolution::solve_adjoint_mode;
use crate::grid::{log_sum_exp, Grid1D, ProblemConfig, TimeGrid};
use crate::spectral::assemble_mode_operator;

/// Distance kept above the floor `beta >= 1`.
pub const DELTA_FLOOR: f64 = 1e-3;
/// End slope `|beta'(+-1)|` of the constructed weights.
pub const END_SLOPE: f64 = 0.5;
/// Relative slack allowed in the integrated checks.
pub const CHECK_TOL: f64 = 0.05;
/// Smallest `lambda` tried in the singular-regime search.
pub const LAMBDA_FLOOR: f64 = 1e-8;
const DENSE_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Regular,
    Singular,
}

impl Regime {
    pub fn of(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || gamma > 1.0 {
            return Err(GrushinError::Carleman(format!(
                "Carleman weights need 0 < gamma <= 1, got {gamma}"
            )));
        }
        Ok(if gamma < 0.5 { Regime::Singular } else { Regime::Regular })
    }
}

/// Quintic smoothstep and its antiderivative, extended by 0 / linearly.
fn smoothstep(u: f64) -> (f64, f64, f64) {
    // (integral, value, derivative)
    if u <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if u >= 1.0 {
        (0.5 + (u - 1.0), 1.0, 0.0)
    } else {
        let u2 = u * u;
        let int = u2 * u2 * (2.5 - 3.0 * u + u2);
        let val = u2 * u * (10.0 - 15.0 * u + 6.0 * u2);
        let der = 30.0 * u2 * (1.0 - u) * (1.0 - u);
        (int, val, der)
    }
}

/// Closed-form description of a weight; `eval` gives `(beta, beta', beta'')`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightShape {
    gamma: f64,
    regime: Regime,
    a_prime: f64,
    b_prime: f64,
    /// Total rise of `beta'` across `(a', b')`.
    bump: f64,
    /// Singular regime only.
    eps: f64,
    c1: f64,
    kappa_left: f64,
    kappa_right: f64,
    /// `int_0^{+-eps} beta'`.
    f_left: f64,
    f_right: f64,
    /// Additive constant (equals `C_0` in the singular regime).
    shift: f64,
}

impl WeightShape {
    fn bump_terms(&self, x: f64) -> (f64, f64, f64) {
        let l = self.b_prime - self.a_prime;
        let (i, s, d) = smoothstep((x - self.a_prime) / l);
        (self.bump * l * i, self.bump * s, self.bump * d / l)
    }

    fn inner_slope(&self, x: f64) -> f64 {
        -(x.signum() * x.abs().powf(2.0 * self.gamma) + self.c1).sqrt()
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (bi, bs, bd) = self.bump_terms(x);
        match self.regime {
            Regime::Regular => {
                let y = x + 1.0;
                (self.shift - END_SLOPE * y - 0.5 * y * y + bi, -END_SLOPE - y + bs, -1.0 + bd)
            }
            Regime::Singular => {
                let e = self.eps;
                if x.abs() < e {
                    let b1 = self.inner_slope(x);
                    let b2 = if x == 0.0 { f64::NEG_INFINITY } else { self.gamma * x.abs().powf(2.0 * self.gamma - 1.0) / b1 };
                    (self.shift + inner_integral(self, x), b1, b2)
                } else if x <= -e {
                    let d = x + e;
                    let s0 = self.inner_slope(-e);
                    (self.shift + self.f_left + s0 * d - 0.5 * self.kappa_left * d * d, s0 - self.kappa_left * d, -self.kappa_left)
                } else {
                    let d = x - e;
                    let s0 = self.inner_slope(e);
                    (
                        self.shift + self.f_right + s0 * d - 0.5 * self.kappa_right * d * d + bi,
                        s0 - self.kappa_right * d + bs,
                        -self.kappa_right + bd,
                    )
                }
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (1..=m)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `int_0^x beta'` on `|x| < eps`, by Gauss-Legendre on dyadic panels
/// accumulating at 0.
fn inner_integral(shape: &WeightShape, x: f64) -> f64 {
    thread_local! {
        static GL: Vec<(f64, f64)> = gauss_legendre(24);
    }
    if x == 0.0 {
        return 0.0;
    }
    GL.with(|gl| {
        let mut total = 0.0;
        let mut hi = x;
        for _ in 0..60 {
            let lo = 0.5 * hi;
            let (c, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            total += r * gl.iter().map(|&(t, w)| w * shape.inner_slope(c + r * t)).sum::<f64>();
            hi = lo;
        }
        // remaining panel [0, hi]: beta' is continuous there
        total + hi * shape.inner_slope(0.5 * hi)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightProfile {
    pub gamma: f64,
    pub gamma_regime: Regime,
    pub a_prime: f64,
    pub b_prime: f64,
    /// Grid nodes, boundary included.
    pub x: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    /// Value of `beta` at 0 in the singular form (0 in the regular regime).
    pub c0: f64,
    pub c1: f64,
    pub epsilon_nbhd: f64,
    shape: WeightShape,
}

impl WeightProfile {
    /// `(beta, beta', beta'')` at any `x` in `[-1, 1]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        self.shape.eval(x)
    }

    /// Nodes of `[-1, a'] u [b', 1]` (the origin excluded in the singular regime).
    fn outer(&self) -> impl Iterator<Item = usize> + '_ {
        let singular = self.gamma_regime == Regime::Singular;
        (0..self.x.len()).filter(move |&i| {
            let x = self.x[i];
            (x <= self.a_prime || x >= self.b_prime) && !(singular && x == 0.0)
        })
    }

    fn inner(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.x.len()).filter(move |&i| self.x[i] >= self.a_prime && self.x[i] <= self.b_prime)
    }
}

pub fn build_weight(gamma: f64, a_prime: f64, b_prime: f64, grid: &Grid1D) -> Result<WeightProfile> {
    let regime = Regime::of(gamma)?;
    if !(a_prime > 0.0 && a_prime < b_prime && b_prime < 1.0) {
        return Err(GrushinError::Carleman(format!("require 0 < a' < b' < 1, got a' = {a_prime}, b' = {b_prime}")));
    }
    let mut shape = WeightShape {
        gamma,
        regime,
        a_prime,
        b_prime,
        bump: 2.0 + 2.0 * END_SLOPE,
        eps: 0.0,
        c1: 0.0,
        kappa_left: 0.0,
        kappa_right: 0.0,
        f_left: 0.0,
        f_right: 0.0,
        shift: 0.0,
    };
    if regime == Regime::Singular {
        let eps = (0.5 * a_prime).min(0.1);
        let e2g = eps.powf(2.0 * gamma);
        let c1 = e2g + 2.0 * gamma * eps.powf(2.0 * gamma - 1.0) * (1.0 - eps);
        shape.eps = eps;
        shape.c1 = c1;
        shape.kappa_left = gamma * eps.powf(2.0 * gamma - 1.0) / (c1 - e2g).sqrt();
        shape.kappa_right = gamma * eps.powf(2.0 * gamma - 1.0) / (c1 + e2g).sqrt();
        shape.bump = END_SLOPE + (c1 + e2g).sqrt() + shape.kappa_right * (1.0 - eps);
        shape.f_left = inner_integral(&shape, -eps);
        shape.f_right = inner_integral(&shape, eps);
    }
    let min_beta = (0..=DENSE_SAMPLES)
        .map(|k| -1.0 + 2.0 * k as f64 / DENSE_SAMPLES as f64)
        .chain(grid.nodes().iter().cloned())
        .map(|x| shape.eval(x).0)
        .fold(f64::INFINITY, f64::min);
    shape.shift = 1.0 + DELTA_FLOOR - min_beta;

    let x = grid.nodes().to_vec();
    let vals: Vec<(f64, f64, f64)> = x.iter().map(|&x| shape.eval(x)).collect();
    let profile = WeightProfile {
        gamma,
        gamma_regime: regime,
        a_prime,
        b_prime,
        beta: vals.iter().map(|v| v.0).collect(),
        beta1: vals.iter().map(|v| v.1).collect(),
        beta2: vals.iter().map(|v| v.2).collect(),
        x,
        c0: if regime == Regime::Singular { shape.shift } else { 0.0 },
        c1: shape.c1,
        epsilon_nbhd: shape.eps,
        shape,
    };
    verify_hypotheses(&profile)?;
    Ok(profile)
}

/// Checks every hypothesis clause on the grid nodes; the error names the
/// first violated clause and node.
pub fn verify_hypotheses(p: &WeightProfile) -> Result<()> {
    let fail = |clause: &str, i: usize| {
        Err(GrushinError::Carleman(format!("hypothesis '{clause}' violated at x = {:.6}", p.x[i])))
    };
    for i in 0..p.x.len() {
        if !(p.beta[i] >= 1.0) {
            return fail("beta >= 1", i);
        }
    }
    for i in p.outer() {
        if !(p.beta1[i].abs() > 0.0) {
            return fail("|beta'| > 0 outside (a', b')", i);
        }
        if !(p.beta2[i] < 0.0) {
            return fail("beta'' < 0 outside (a', b')", i);
        }
    }
    let last = p.x.len() - 1;
    if !(p.beta1[0] < 0.0) {
        return fail("beta'(-1) < 0", 0);
    }
    if !(p.beta1[last] > 0.0) {
        return fail("beta'(1) > 0", last);
    }
    if p.gamma_regime == Regime::Singular {
        for i in 0..p.x.len() {
            let x = p.x[i];
            if x.abs() >= p.epsilon_nbhd {
                continue;
            }
            let target = x.signum() * x.abs().powf(2.0 * p.gamma) + p.c1;
            if (p.beta1[i] * p.beta1[i] - target).abs() > 1e-14 * target || !(p.beta1[i] < 0.0) {
                return fail("beta' = -sqrt(sign(x)|x|^{2 gamma} + C_1) near 0", i);
            }
        }
    }
    Ok(())
}

/// `M beta(x) / (t (T - t))`.
pub fn alpha_eval(profile: &WeightProfile, m: f64, horizon: f64, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t < horizon) {
        return Err(GrushinError::Carleman(format!("alpha needs 0 < t < T, got t = {t}, T = {horizon}")));
    }
    Ok(m * profile.eval(x).0 / (t * (horizon - t)))
}

/// Smooth cutoff equal to 1 on `(a', b')` and 0 outside `(a, b)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
}

fn transition(s: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (p, q) = (f(s), f(1.0 - s));
    if p + q == 0.0 { 0.0 } else { p / (p + q) }
}

impl Cutoff {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            0.0
        } else if x < self.a_prime {
            transition((x - self.a) / (self.a_prime - self.a))
        } else if x <= self.b_prime {
            1.0
        } else {
            transition((self.b - x) / (self.b - self.b_prime))
        }
    }

    /// `sup |rho''|`, from second differences of the transition profile.
    pub fn second_derivative_sup(&self) -> f64 {
        let k = 20_000;
        let h = 1.0 / k as f64;
        let psi2 = (1..k)
            .map(|i| {
                let s = i as f64 * h;
                ((transition(s + h) - 2.0 * transition(s) + transition(s - h)) / (h * h)).abs()
            })
            .fold(0.0, f64::max);
        let w = (self.a_prime - self.a).min(self.b - self.b_prime);
        psi2 / (w * w)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarlemanConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    pub c12: f64,
    /// `sup beta` on the outer set (lower-case `c_3`).
    pub beta_sup_outer: f64,
    pub m1: f64,
    pub m2: f64,
    pub m: f64,
    /// Singular regime: the small constant in `M = max(1, M_1, n T^2 / lambda)`.
    pub lambda_small: Option<f64>,
    /// Singular regime: `C_5 / 16`, the factor in `C_6(gamma) lambda^2`.
    pub c6_lambda: Option<f64>,
    /// Constant in front of `M^3 |z|^2` on the outer set in the integrated
    /// inequality (`C_3`, or `C_3 min |beta''| beta'^2` in the singular regime).
    pub c3_outer: f64,
    pub cal_c: f64,
    pub t_sharp: Option<f64>,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub rho_sup_second: f64,
}

/// `(t(T-t))^3 / M^3` times the zero-order Carleman coefficient.
fn borne_z_scaled(b: f64, b2: f64, b1: f64, m: f64, horizon: f64, t: f64) -> f64 {
    let tt = t * (horizon - t);
    (m * b * (3.0 * horizon * t - horizon * horizon - 3.0 * t * t)
        + m * m * ((2.0 * t - horizon) * b2 * b - 0.5 * tt * b2 * b2)
        - 3.0 * m.powi(3) * b2 * b1 * b1)
        / m.powi(3)
}

/// Lower bound of `borne_z_scaled` over `t in (0, T)`.
fn borne_z_worst(b: f64, b2: f64, b1: f64, m: f64, horizon: f64) -> f64 {
    -3.0 * b2 * b1 * b1 - (horizon * b2.abs() * b + horizon * horizon * b2 * b2 / 8.0) / m - b * horizon * horizon / (m * m)
}

fn borne_z_abs_sup(b: f64, b2: f64, b1: f64, m: f64, horizon: f64) -> f64 {
    3.0 * b2.abs() * b1 * b1 + (horizon * b2.abs() * b + horizon * horizon * b2 * b2 / 8.0) / m + b * horizon * horizon / (m * m)
}

pub fn extract_constants(profile: &WeightProfile, cfg: &ProblemConfig, n: usize) -> Result<CarlemanConstants> {
    if (profile.gamma - cfg.gamma).abs() > 0.0 || profile.a_prime != cfg.a_prime || profile.b_prime != cfg.b_prime {
        return Err(GrushinError::Carleman("profile does not match the configuration (gamma, a', b')".into()));
    }
    let gamma = profile.gamma;
    let horizon = cfg.horizon;
    let singular = profile.gamma_regime == Regime::Singular;
    let outer: Vec<usize> = profile.outer().collect();
    let inner: Vec<usize> = profile.inner().collect();
    let (b, b1, b2) = (&profile.beta, &profile.beta1, &profile.beta2);

    let c1 = outer.iter().map(|&i| -b2[i]).fold(f64::INFINITY, f64::min);
    let c2 = inner.iter().map(|&i| b2[i].abs()).fold(0.0, f64::max);
    let beta_sup_outer = outer.iter().map(|&i| b[i]).fold(f64::NEG_INFINITY, f64::max);
    let weight_of = |i: usize| if singular { b2[i].abs() * b1[i] * b1[i] } else { 1.0 };
    let c3 = if singular {
        1.5
    } else {
        0.5 * outer.iter().map(|&i| 3.0 * b2[i].abs() * b1[i] * b1[i]).fold(f64::INFINITY, f64::min)
    };
    if !(c1 > 0.0 && c3 > 0.0) {
        return Err(GrushinError::Carleman(format!("degenerate weight: C1 = {c1}, C3 = {c3}")));
    }

    let mut m1 = 1.0;
    let passes = |m: f64| outer.iter().all(|&i| borne_z_worst(b[i], b2[i], b1[i], m, horizon) >= c3 * weight_of(i));
    while !passes(m1) {
        m1 *= 2.0;
        if m1 > 1e12 {
            return Err(GrushinError::Carleman("M1 search exceeded 1e12".into()));
        }
    }
    let c4 = inner.iter().map(|&i| borne_z_abs_sup(b[i], b2[i], b1[i], m1, horizon)).fold(0.0, f64::max);

    let (c5, lambda_small, c6_lambda, inner_coupling) = if singular {
        let c5 = PI * PI * (2.0 * gamma + 1.0);
        let c6l = c5 / 16.0;
        let mut lam = 1.0;
        let clause = |lam: f64| -> Option<(usize, u8)> {
            for &i in &outer {
                let x = profile.x[i].abs();
                if c6l * lam * lam * x.powf(2.0 * gamma - 1.0) > 0.25 * c3 * b2[i].abs() * b1[i].abs() {
                    return Some((i, 1));
                }
                if c6l * lam * lam * x.powf(2.0 * gamma) > 0.25 * c3 * b1[i] * b1[i] {
                    return Some((i, 2));
                }
            }
            None
        };
        while let Some((i, which)) = clause(lam) {
            lam *= 0.5;
            if lam < LAMBDA_FLOOR {
                return Err(GrushinError::Carleman(format!(
                    "no lambda > {LAMBDA_FLOOR:e} satisfies clause {which} of the small-lambda conditions at x = {:.6}",
                    profile.x[i]
                )));
            }
        }
        let coupling = inner
            .iter()
            .map(|&i| {
                let x = profile.x[i].abs();
                c6l * lam * lam * (x.powf(2.0 * gamma - 1.0) * b1[i].abs() + x.powf(2.0 * gamma) * b2[i].abs())
            })
            .fold(0.0, f64::max);
        (c5, Some(lam), Some(c6l), coupling)
    } else {
        let c5 = PI
            * PI
            * profile
                .x
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let ax = x.abs();
                    2.0 * gamma * ax.powf(2.0 * gamma - 1.0) * b1[i].abs() + ax.powf(2.0 * gamma) * b2[i].abs()
                })
                .fold(0.0, f64::max);
        (c5, None, None, 0.5 * c3)
    };

    let c3_outer = if singular { c3 * outer.iter().map(|&i| weight_of(i)).fold(f64::INFINITY, f64::min) } else { c3 };
    let c6 = c4 + inner_coupling;
    let sup_b1_sq = inner.iter().map(|&i| b1[i] * b1[i]).fold(0.0, f64::max);
    let c7 = c6 + 2.0 * c2 * sup_b1_sq;
    let c8 = 2.0 * c2;
    let c9 = c7 * 27.0 / 8.0 * (-3.0f64).exp();
    let c10 = c8 * (-2.0f64).exp();
    let cut = Cutoff { a: cfg.a, b: cfg.b, a_prime: cfg.a_prime, b_prime: cfg.b_prime };
    let rho2 = cut.second_derivative_sup();
    let c11 = horizon + 0.5 * horizon * horizon * rho2;
    let c12 = 2.0 * (c9 + c10 * c11);

    let m2 = (2.0 * c5 / c3).sqrt() * n as f64 * (0.5 * horizon).powi(2);
    let m = match lambda_small {
        Some(l) => 1f64.max(m1).max(n as f64 * horizon * horizon / l),
        None => 1f64.max(m1).max(m2),
    };
    let cal_c = 0.5 * (c5 / (2.0 * c3)).sqrt();
    let t_sharp = if gamma == 1.0 { Some(27.0 * beta_sup_outer * cal_c / certified_lower_constant(1.0)?) } else { None };

    Ok(CarlemanConstants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c11,
        c12,
        beta_sup_outer,
        m1,
        m2,
        m,
        lambda_small,
        c6_lambda,
        c3_outer,
        cal_c,
        t_sharp,
        n,
        horizon,
        rho_sup_second: rho2,
    })
}

/// Time samples `T/8, 2T/8, ..., 7T/8`.
fn time_samples(horizon: f64) -> impl Iterator<Item = f64> {
    (1..8).map(move |k| k as f64 * horizon / 8.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseReport {
    /// `-alpha_xx >= C1 M / (t(T-t))` outside `(a', b')`, `|alpha_xx| <= C2 M / (t(T-t))` inside.
    pub second_derivative_pass: bool,
    /// Zero-order coefficient `>= C3 M^3 / (t(T-t))^3` (times `|beta''| beta'^2` when singular)
    /// outside, and `<= C4 M^3 / (t(T-t))^3` in absolute value inside, for
    /// `M in {M1, 2 M1, 4 M1}` and the time samples.
    pub zero_order_pass: bool,
    /// Singular regime only: both small-lambda clauses.
    pub lambda_clauses_pass: Option<bool>,
    /// Singular regime only: worst value of `C6(gamma) lambda^2 - (C3/4) gamma` on `(-eps, eps)`.
    pub lambda_reduced_gap: Option<f64>,
}

impl PointwiseReport {
    pub fn passed(&self) -> bool {
        self.second_derivative_pass && self.zero_order_pass && self.lambda_clauses_pass.unwrap_or(true)
    }
}

pub fn pointwise_check(profile: &WeightProfile, k: &CarlemanConstants) -> PointwiseReport {
    let horizon = k.horizon;
    let singular = profile.gamma_regime == Regime::Singular;
    let outer: Vec<usize> = profile.outer().collect();
    let inner: Vec<usize> = profile.inner().collect();
    let (b, b1, b2) = (&profile.beta, &profile.beta1, &profile.beta2);
    let m = k.m;
    let mut second = true;
    for t in time_samples(horizon) {
        let tt = t * (horizon - t);
        for &i in &outer {
            second &= -m * b2[i] / tt >= k.c1 * m / tt * (1.0 - 1e-14);
        }
        for &i in &inner {
            second &= (m * b2[i] / tt).abs() <= k.c2 * m / tt * (1.0 + 1e-14);
        }
    }
    let mut zero = true;
    for mm in [k.m1, 2.0 * k.m1, 4.0 * k.m1] {
        for t in time_samples(horizon) {
            for &i in &outer {
                let w = if singular { b2[i].abs() * b1[i] * b1[i] } else { 1.0 };
                zero &= borne_z_scaled(b[i], b2[i], b1[i], mm, horizon, t) >= k.c3 * w;
            }
            for &i in &inner {
                zero &= borne_z_scaled(b[i], b2[i], b1[i], mm, horizon, t).abs() <= k.c4 * (1.0 + 1e-12);
            }
        }
    }
    let (clauses, gap) = match (k.lambda_small, k.c6_lambda) {
        (Some(lam), Some(c6l)) => {
            let g = profile.gamma;
            let mut ok = true;
            let mut gap = f64::NEG_INFINITY;
            for &i in &outer {
                let x = profile.x[i].abs();
                ok &= c6l * lam * lam * x.powf(2.0 * g - 1.0) <= 0.25 * k.c3 * b2[i].abs() * b1[i].abs();
                ok &= c6l * lam * lam * x.powf(2.0 * g) <= 0.25 * k.c3 * b1[i] * b1[i];
                if x < profile.epsilon_nbhd {
                    // on (-eps, eps) the first clause reads C6 lambda^2 <= (C3/4) gamma
                    let reduced = 0.25 * k.c3 * b2[i].abs() * b1[i].abs() / x.powf(2.0 * g - 1.0);
                    gap = gap.max(c6l * lam * lam - reduced);
                }
            }
            (Some(ok), Some(gap))
        }
        _ => (None, None),
    };
    PointwiseReport { second_derivative_pass: second, zero_order_pass: zero, lambda_clauses_pass: clauses, lambda_reduced_gap: gap }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarlemanCheckReport {
    pub gamma: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// `z = g e^{-alpha}` at interior time nodes (rows `1..K`).
    #[serde(skip)]
    pub z: Vec<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// Share of `lhs` carried by the first and last interior time node.
    pub tail: f64,
    pub pointwise_pass: bool,
    pub integrated_pass: bool,
    pub margin: f64,
    pub constants: CarlemanConstants,
}

/// Integrated Carleman inequality on the adjoint trajectory started at `g0`.
pub fn integrated_check(
    profile: &WeightProfile,
    constants: &CarlemanConstants,
    g0: &[f64],
    cfg: &ProblemConfig,
    tg: TimeGrid,
) -> Result<CarlemanCheckReport> {
    let grid = cfg.grid()?;
    let op = assemble_mode_operator(constants.n, cfg.gamma, &grid);
    let traj = solve_adjoint_mode(&op, g0, tg)?;
    let xs = grid.interior();
    let h = grid.h();
    let horizon = tg.horizon;
    let m = constants.m;
    let beta: Vec<f64> = xs.iter().map(|&x| profile.eval(x).0).collect();
    let outer: Vec<bool> = xs.iter().map(|&x| x < profile.a_prime || x > profile.b_prime).collect();
    let strip = grid.strip_mask(cfg.a, cfg.b);

    // The weighted integrand underflows for realistic M, so both sides are
    // accumulated as logarithms.
    let mut z = Vec::with_capacity(tg.steps.saturating_sub(1));
    let mut log_terms = Vec::with_capacity(tg.steps.saturating_sub(1));
    let mut rhs = 0.0;
    let log_c = constants.c3_outer.ln() + 3.0 * m.ln() + h.ln();
    for k in 1..tg.steps {
        let t = tg.time(k);
        let tt = t * (horizon - t);
        let g = &traj.states[k];
        let w = tg.weight(k);
        let zk: Vec<f64> = g.iter().zip(&beta).map(|(g, b)| g * (-m * b / tt).exp()).collect();
        let node_logs = (0..xs.len())
            .filter(|&i| outer[i])
            .map(|i| 2.0 * g[i].abs().ln() - 2.0 * m * beta[i] / tt);
        log_terms.push(log_sum_exp(node_logs) + log_c - 3.0 * tt.ln() + w.ln());
        rhs += w * h * (0..xs.len()).filter(|&i| strip[i]).map(|i| g[i] * g[i]).sum::<f64>();
        z.push(zk);
    }
    rhs *= constants.c12;
    let log_lhs = log_sum_exp(log_terms.iter().cloned());
    let log_rhs = rhs.ln();
    let tail = match (log_terms.first(), log_terms.last()) {
        (Some(a), Some(b)) if log_lhs > f64::NEG_INFINITY => (a - log_lhs).exp() + (b - log_lhs).exp(),
        _ => 0.0,
    };
    let lhs = log_lhs.exp();
    let pointwise = pointwise_check(profile, constants).passed();
    let integrated_pass = log_lhs == f64::NEG_INFINITY || log_lhs <= log_rhs + CHECK_TOL.ln_1p();
    Ok(CarlemanCheckReport {
        gamma: cfg.gamma,
        n: constants.n,
        horizon,
        m,
        z,
        lhs,
        rhs,
        log_lhs,
        log_rhs,
        tail,
        pointwise_pass: pointwise,
        integrated_pass,
        margin: (log_rhs - log_lhs).exp_m1(),
        constants: constants.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaccioppoliReport {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub c11: f64,
    pub pass: bool,
    pub margin: f64,
}

/// `int int_{(a',b')} |g_x|^2 t(T-t) <= C11 int int_{(a,b)} g^2` on the
/// adjoint trajectory of mode `n` started at `g0`.
pub fn caccioppoli_check(n: usize, g0: &[f64], cfg: &ProblemConfig, tg: TimeGrid) -> Result<CaccioppoliReport> {
    let grid = cfg.grid()?;
    let op = assemble_mode_operator(n, cfg.gamma, &grid);
    let traj = solve_adjoint_mode(&op, g0, tg)?;
    let cut = Cutoff { a: cfg.a, b: cfg.b, a_prime: cfg.a_prime, b_prime: cfg.b_prime };
    let horizon = tg.horizon;
    let c11 = horizon + 0.5 * horizon * horizon * cut.second_derivative_sup();
    let h = grid.h();
    let xs = grid.interior();
    let nx = xs.len();
    let inner: Vec<usize> = (0..nx).filter(|&i| xs[i] > cfg.a_prime && xs[i] < cfg.b_prime).collect();
    let strip = grid.strip_mask(cfg.a, cfg.b);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..=tg.steps {
        let t = tg.time(k);
        let g = &traj.states[k];
        let w = tg.weight(k);
        let at = |i: isize| if i < 0 || i >= nx as isize { 0.0 } else { g[i as usize] };
        let grad: f64 = inner
            .iter()
            .map(|&i| {
                let d = (at(i as isize + 1) - at(i as isize - 1)) / (2.0 * h);
                d * d
            })
            .sum();
        lhs += w * t * (horizon - t) * h * grad;
        rhs += w * h * (0..nx).filter(|&i| strip[i]).map(|i| g[i] * g[i]).sum::<f64>();
    }
    rhs *= c11;
    Ok(CaccioppoliReport {
        n,
        lhs,
        rhs,
        c11,
        pass: lhs <= rhs * (1.0 + CHECK_TOL),
        margin: if lhs > 0.0 { rhs / lhs - 1.0 } else { f64::INFINITY },
    })
}
