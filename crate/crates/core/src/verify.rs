//! Diagnostics for a computed profile: equation residual, the ω remainder and its decay,
//! the log-derivative bound and the pointwise envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::default_beta;
use crate::grid::{gamma, Field, Side};
use crate::integral_ops::rhs_parts;
use crate::kernel::KernelSpec;
use crate::profile::{tail_exponent, tail_exponent_on, TailWindow};

/// Weight scale used by [`residual`].
pub const RESIDUAL_EPS: f64 = 0.1;

fn weight(x: f64, rho: f64, eps: f64, beta: f64, lam: f64) -> f64 {
    eps * gamma(x, rho, beta).exp() + lam.abs()
}

/// `max |(1+rho) lambda - rhs| / (eps e^gamma + |lambda|)` with the default `eps` and `beta`.
pub fn residual(lam: &Field, spec: &KernelSpec, rho: f64) -> Result<f64> {
    residual_with(lam, spec, rho, RESIDUAL_EPS, default_beta(rho))
}

pub fn residual_with(lam: &Field, spec: &KernelSpec, rho: f64, eps: f64, beta: f64) -> Result<f64> {
    let total = rhs_parts(lam, spec, rho)?.total();
    let g = lam.grid;
    Ok((0..g.n)
        .map(|i| {
            let l = lam.values[i];
            ((1.0 + rho) * l - total[i]).abs() / weight(g.point(i), rho, eps, beta, l)
        })
        .fold(0.0, f64::max))
}

/// The ω remainder and its decay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    /// `lambda - L U`.
    pub omega: Field,
    /// Excess plus corner minus `rho lambda`; equal to `omega` up to the residual.
    pub three_term: Field,
    /// Weighted sup of the difference of the two forms.
    pub identity_error: f64,
    /// Weighted residual of the equation at the same profile.
    pub residual: f64,
    /// Decay rate of `|omega|` over `window`; `None` when no usable window exists.
    pub fit_rate: Option<f64>,
    pub window: Option<(f64, f64)>,
}

/// Computes ω two ways and fits its right-side decay.
///
/// The fit runs from the first node past the bulk, where `lambda` has dropped below a tenth
/// of its peak, to the last node before `|omega|` comes within a factor 100 of the pointwise
/// residual.
pub fn omega_remainder(lam: &Field, spec: &KernelSpec, rho: f64) -> Result<OmegaReport> {
    let parts = rhs_parts(lam, spec, rho)?;
    let g = lam.grid;
    let beta = default_beta(rho);
    let mut omega = Vec::with_capacity(g.n);
    let mut three = Vec::with_capacity(g.n);
    let mut noise = Vec::with_capacity(g.n);
    let (mut identity_error, mut res) = (0.0f64, 0.0f64);
    for i in 0..g.n {
        let l = lam.values[i];
        let lu = parts.left[i] * parts.right[i];
        let o = l - lu;
        let t = parts.excess[i] + parts.corner[i] - rho * l;
        let num = (1.0 + rho) * l - (lu + parts.excess[i] + parts.corner[i]);
        let w = weight(g.point(i), rho, RESIDUAL_EPS, beta, l);
        identity_error = identity_error.max((o - t).abs() / w);
        res = res.max(num.abs() / w);
        omega.push(o);
        three.push(t);
        noise.push(num.abs());
    }
    if identity_error > 10.0 * res + 1e-13 {
        return Err(Error::Inconsistent(format!("omega forms differ by {identity_error:e}, residual is {res:e}")));
    }
    let omega = Field::new(g, omega)?;
    let three_term = Field::new(g, three)?;

    let peak = lam.values.iter().copied().fold(0.0, f64::max);
    let start = (0..g.n).find(|&i| g.point(i) > 0.0 && lam.values[i] < 0.1 * peak);
    let mut window = None;
    let mut fit_rate = None;
    if let Some(s) = start {
        let sign = omega.values[s].signum();
        let mut e = s;
        while e + 1 < g.n && omega.values[e + 1].abs() > 100.0 * noise[e + 1] && omega.values[e + 1].signum() == sign {
            e += 1;
        }
        if e >= s + 8 {
            let (lo, hi) = (g.point(s), g.point(e));
            let abs = Field::new(g, omega.values.iter().map(|v| v.abs()).collect())?;
            fit_rate = Some(tail_exponent_on(&abs, Side::Right, lo, hi)?);
            window = Some((lo, hi));
        }
    }
    Ok(OmegaReport { omega, three_term, identity_error, residual: res, fit_rate, window })
}

/// `|lambda'/lambda|` at every node, by fourth-order differences (one-sided at the ends).
pub fn derivative_ratios(lam: &Field) -> Result<Vec<f64>> {
    let g = lam.grid;
    let v = &lam.values;
    if let Some(i) = v.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::NotPositive { x: g.point(i) });
    }
    if g.n < 5 {
        return Err(Error::Degenerate("derivative needs at least 5 nodes".into()));
    }
    let h = g.h();
    let n = g.n;
    Ok((0..n)
        .map(|i| {
            let d = if i >= 2 && i + 2 < n {
                (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / 12.0
            } else if i < 2 {
                let j = i;
                let s: [f64; 5] = match j {
                    0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
                    _ => [-3.0, -10.0, 18.0, -6.0, 1.0],
                };
                (0..5).map(|k| s[k] * v[k]).sum::<f64>() / 12.0
            } else {
                let s: [f64; 5] = match n - 1 - i {
                    0 => [3.0, -16.0, 36.0, -48.0, 25.0],
                    _ => [-1.0, 6.0, -18.0, 10.0, 3.0],
                };
                (0..5).map(|k| s[k] * v[n - 5 + k]).sum::<f64>() / 12.0
            };
            (d / h).abs() / v[i]
        })
        .collect())
}

/// `sup |lambda'|/lambda` over the grid.
pub fn derivative_ratio(lam: &Field) -> Result<f64> {
    Ok(derivative_ratios(lam)?.into_iter().fold(0.0, f64::max))
}

/// Worst ratios of the envelope checks; a margin of at least 1 passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMargins {
    /// `min lambda / (e^{x/(1+rho)}/16)` over `x < 0`.
    pub lower: Option<f64>,
    /// `min 2e^{x/(1+rho)} / lambda` over `x < 0`.
    pub upper_left: Option<f64>,
    /// `min 2e^{-beta x} / |lambda|` over `x > 0`.
    pub upper_right: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub pass: bool,
    pub margins: EnvelopeMargins,
}

pub fn envelope_check(lam: &Field, rho: f64, beta: f64) -> EnvelopeReport {
    let g = lam.grid;
    let fold = |acc: Option<f64>, r: f64| Some(acc.map_or(r, |a| a.min(r)));
    let mut m = EnvelopeMargins { lower: None, upper_left: None, upper_right: None };
    for i in 0..g.n {
        let x = g.point(i);
        let l = lam.values[i];
        if x < 0.0 {
            let e = (x / (1.0 + rho)).exp();
            m.lower = fold(m.lower, l / (e / 16.0));
            if l > 0.0 {
                m.upper_left = fold(m.upper_left, 2.0 * e / l);
            }
        } else if x > 0.0 && l != 0.0 {
            m.upper_right = fold(m.upper_right, 2.0 * (-beta * x).exp() / l.abs());
        }
    }
    let ok = |v: Option<f64>| v.is_none_or(|v| v >= 1.0);
    EnvelopeReport { pass: ok(m.lower) && ok(m.upper_left) && ok(m.upper_right), margins: m }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRates {
    /// Growth rate of `lambda` as `x -> -inf`.
    pub left: f64,
    /// Decay rate of `lambda` on the ω-quiet part of `x > 0`.
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residual: f64,
    pub omega_fit_rate: Option<f64>,
    pub derivative_ratio: f64,
    pub envelope: EnvelopeReport,
    pub tails: TailRates,
}

/// Nodes with `x > 0` and `|omega| < 1e-3 lambda`, as the range they span from the first one.
pub fn omega_quiet_window(lam: &Field, omega: &Field) -> Option<(f64, f64)> {
    let g = lam.grid;
    let first = (0..g.n).find(|&i| g.point(i) > 0.0 && omega.values[i].abs() < 1e-3 * lam.values[i])?;
    Some((g.point(first), g.x_max))
}

/// Right-tail decay rate of `lambda` over the ω-quiet window.
pub fn right_tail_rate(lam: &Field, omega: &Field) -> Result<f64> {
    let (lo, hi) = omega_quiet_window(lam, omega)
        .ok_or_else(|| Error::Degenerate("no node with omega below 1e-3 lambda".into()))?;
    tail_exponent_on(lam, Side::Right, lo, hi)
}

/// Runs every check on a profile.
pub fn verify_profile(lam: &Field, spec: &KernelSpec, rho: f64, beta: f64) -> Result<VerificationReport> {
    let om = omega_remainder(lam, spec, rho)?;
    Ok(VerificationReport {
        residual: om.residual,
        omega_fit_rate: om.fit_rate,
        derivative_ratio: derivative_ratio(lam)?,
        envelope: envelope_check(lam, rho, beta),
        tails: TailRates {
            left: tail_exponent(lam, Side::Left, TailWindow::default())?,
            right: right_tail_rate(lam, &om.omega)?,
        },
    })
}
