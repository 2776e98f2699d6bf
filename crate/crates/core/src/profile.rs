//! Mass-coordinate profiles `g`, the exponent relations between `rho`, `b` and the tails,
//! and tail regressions.
//!
//! A [`MassProfile`] is stored as `xi g(xi)` on a uniform grid in `u = ln xi`. For
//! `lambda_to_g` this grid is the image of the `lambda` grid under `u = x/rho`, so no
//! resampling happens and `xi` itself, which overflows for small `rho`, is never needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{linear_fit, Field, LogGrid, Side, Tail};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassProfile {
    /// `xi g(xi)` over `u = ln xi`, with exponential tails in `u`.
    pub xi_g: Field,
    /// Exponent of the log-coordinate profile this came from; `None` for synthetic densities.
    pub rho: Option<f64>,
    /// `int g dxi`.
    pub mass: f64,
}

impl MassProfile {
    /// Wraps samples of `xi g` over `ln xi`. Both tails must be set.
    pub fn from_xi_g(xi_g: Field, rho: Option<f64>) -> Result<Self> {
        let mass = xi_g.integrate(f64::NEG_INFINITY, f64::INFINITY)?;
        Ok(Self { xi_g, rho, mass })
    }

    /// Samples a density `g(xi)` on the `ln xi` grid `u`. Tails are fitted; a side that is
    /// identically zero gets a zero tail.
    pub fn from_density(u: LogGrid, g: impl Fn(f64) -> f64) -> Result<Self> {
        let field = Field::from_fn(u, |u| {
            let xi = u.exp();
            xi * g(xi)
        })?
        .with_fitted_tails();
        Self::from_xi_g(field, None)
    }

    pub fn n(&self) -> usize {
        self.xi_g.grid.n
    }

    pub fn log_xi(&self, i: usize) -> f64 {
        self.xi_g.grid.point(i)
    }

    pub fn xi(&self, i: usize) -> f64 {
        self.log_xi(i).exp()
    }

    pub fn g(&self, i: usize) -> f64 {
        self.xi_g.values[i] * (-self.log_xi(i)).exp()
    }

    pub fn xi_values(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.xi(i)).collect()
    }

    pub fn g_values(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.g(i)).collect()
    }

    /// `xi g(xi)` at `u = ln xi`.
    pub fn xi_g_at_log(&self, u: f64) -> Result<f64> {
        self.xi_g.interpolate(u)
    }

    pub fn g_at(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::Domain(format!("xi must be positive, got {xi}")));
        }
        let u = xi.ln();
        Ok(self.xi_g_at_log(u)? * (-u).exp())
    }

    /// `int_(R, inf) g dxi`.
    pub fn mass_above(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("R must be positive, got {r}")));
        }
        self.xi_g.integrate(r.ln(), f64::INFINITY)
    }

    /// `int_(0, x) g dxi`.
    pub fn mass_below(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        self.xi_g.integrate(f64::NEG_INFINITY, x.ln())
    }

    /// Power `p` with `g ~ xi^{-p}` on one side, fitted in `ln xi`.
    pub fn tail_exponent(&self, side: Side, window: TailWindow) -> Result<f64> {
        let idx = window.indices(self.n(), side)?;
        let mut us = Vec::with_capacity(idx.len());
        let mut ys = Vec::with_capacity(idx.len());
        for i in idx {
            let v = self.xi_g.values[i];
            if !(v > 0.0) {
                return Err(Error::Domain(format!("nonpositive density at node {i} in the tail window")));
            }
            let u = self.log_xi(i);
            us.push(u);
            ys.push(v.ln() - u);
        }
        let (slope, _) = linear_fit(&us, &ys).ok_or_else(|| Error::Degenerate("tail window too small".into()))?;
        Ok(-slope)
    }
}

/// `g(xi) = rho lambda(rho ln xi) / xi`, held as `xi g = rho lambda` over `u = x/rho`.
pub fn lambda_to_g(lam: &Field, rho: f64) -> Result<MassProfile> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let g = lam.grid;
    let u = LogGrid::new(g.x_min / rho, g.x_max / rho, g.n)?;
    let scale = |t: Option<Tail>| t.map(|t| Tail { rate: t.rate * rho, coef: t.coef * rho });
    let field = Field::new(u, lam.values.iter().map(|v| rho * v).collect())?
        .with_tails(scale(lam.left_tail), scale(lam.right_tail));
    MassProfile::from_xi_g(field, Some(rho))
}

/// Inverse of [`lambda_to_g`].
pub fn g_to_lambda(profile: &MassProfile) -> Result<Field> {
    let rho = profile.rho.ok_or_else(|| Error::Precondition("profile carries no rho".into()))?;
    let u = profile.xi_g.grid;
    let x = LogGrid::new(u.x_min * rho, u.x_max * rho, u.n)?;
    let scale = |t: Option<Tail>| t.map(|t| Tail { rate: t.rate / rho, coef: t.coef / rho });
    Ok(Field::new(x, profile.xi_g.values.iter().map(|v| v / rho).collect())?
        .with_tails(scale(profile.xi_g.left_tail), scale(profile.xi_g.right_tail)))
}

/// `(b, a)` with `b = M(1+rho)/rho` and the origin exponent `a = rho/(1+rho)`.
pub fn heuristic_b(rho: f64, m: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if !(m > 0.0) {
        return Err(Error::Domain(format!("mass must be positive, got {m}")));
    }
    Ok((m * (1.0 + rho) / rho, rho / (1.0 + rho)))
}

/// Which nodes a tail regression uses: the outer `fraction` of one side minus the
/// outermost `skip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    pub fraction: f64,
    pub skip: f64,
}

impl Default for TailWindow {
    fn default() -> Self {
        Self { fraction: 0.15, skip: 0.02 }
    }
}

impl TailWindow {
    /// The whole outer `fraction`.
    pub fn outer(fraction: f64) -> Self {
        Self { fraction, skip: 0.0 }
    }

    fn indices(&self, n: usize, side: Side) -> Result<Vec<usize>> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0 && self.skip >= 0.0 && self.skip < self.fraction) {
            return Err(Error::Config(format!("bad tail window {self:?}")));
        }
        let m = ((n as f64 * self.fraction).round() as usize).min(n);
        let s = (n as f64 * self.skip).round() as usize;
        if m < s + 2 {
            return Err(Error::Degenerate(format!("tail window holds {} points", m.saturating_sub(s))));
        }
        Ok(match side {
            Side::Left => (s..m).collect(),
            Side::Right => (n - m..n - s).collect(),
        })
    }
}

fn fit_log_slope(f: &Field, idx: impl Iterator<Item = usize>) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in idx {
        let v = f.values[i];
        if !(v > 0.0) {
            return Err(Error::Domain(format!("nonpositive value {v} at node {i} in the tail window")));
        }
        xs.push(f.grid.point(i));
        ys.push(v.ln());
    }
    linear_fit(&xs, &ys).map(|(s, _)| s).ok_or_else(|| Error::Degenerate("tail window too small".into()))
}

/// Decay rate of `f` on one side: the slope of `ln f` on the left, minus it on the right.
pub fn tail_exponent(f: &Field, side: Side, window: TailWindow) -> Result<f64> {
    let slope = fit_log_slope(f, window.indices(f.grid.n, side)?.into_iter())?;
    Ok(match side {
        Side::Left => slope,
        Side::Right => -slope,
    })
}

/// As [`tail_exponent`] but over the nodes in `[lo, hi]`.
pub fn tail_exponent_on(f: &Field, side: Side, lo: f64, hi: f64) -> Result<f64> {
    let g = f.grid;
    let slope = fit_log_slope(f, (0..g.n).filter(|&i| (lo..=hi).contains(&g.point(i))))?;
    Ok(match side {
        Side::Left => slope,
        Side::Right => -slope,
    })
}

/// `f(xi, t) = e^{-bt} g(xi e^{-bt}) / xi`.
pub fn selfsim_density(profile: &MassProfile, b: f64, xi: f64, t: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("xi must be positive, got {xi}")));
    }
    let u = xi.ln();
    // e^{-bt} (xi g)(u') / (xi' xi) with xi' = xi e^{-bt} collapses to (xi g)(u') / xi^2
    Ok(profile.xi_g_at_log(u - b * t)? * (-2.0 * u).exp())
}

/// `A(t) = e^{M(1+rho)t}`.
pub fn tail_amplitude(rho: f64, m: f64, t: f64) -> f64 {
    (m * (1.0 + rho) * t).exp()
}

/// `x^{alpha-1} e^{-x^alpha/(beta0 alpha M_alpha)}`.
pub fn beta0_tail_prediction(alpha: f64, beta0: f64, m_alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if !(beta0 > 0.0) || !(m_alpha > 0.0) || !(x > 0.0) {
        return Err(Error::Domain("beta0, M_alpha and x must be positive".into()));
    }
    Ok(x.powf(alpha - 1.0) * (-x.powf(alpha) / (beta0 * alpha * m_alpha)).exp())
}
