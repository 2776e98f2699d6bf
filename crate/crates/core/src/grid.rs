//! Uniform log-mass grids, sampled fields with exponential tails, and the weighted norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Uniform grid on `[x_min, x_max]` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    #[serde(rename = "xmin")]
    pub x_min: f64,
    #[serde(rename = "xmax")]
    pub x_max: f64,
    pub n: usize,
}

impl LogGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {n}")));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Config(format!("grid needs finite x_min < x_max, got [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// `[-40, 40]` with 2048 points.
    pub fn default_grid() -> Self {
        Self { x_min: -40.0, x_max: 40.0, n: 2048 }
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Same span, `2n - 1` points (every old node is kept).
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n - 1, ..*self }
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.x_min) / self.h()).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// `coef * exp(rate * x)` on the left or `coef * exp(-rate * x)` on the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub rate: f64,
    pub coef: f64,
}

impl Tail {
    pub fn zero() -> Self {
        Self { rate: 1.0, coef: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Samples on a [`LogGrid`] plus exponential extrapolation beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: LogGrid,
    pub values: Vec<f64>,
    pub left_tail: Option<Tail>,
    pub right_tail: Option<Tail>,
}

/// Fraction of outer points used when tails are refitted.
pub const TAIL_FIT_FRACTION: f64 = 0.10;

impl Field {
    pub fn new(grid: LogGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Config(format!("{} values for a grid of {} points", values.len(), grid.n)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values, left_tail: None, right_tail: None })
    }

    pub fn from_fn(grid: LogGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn zeros(grid: LogGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n], left_tail: Some(Tail::zero()), right_tail: Some(Tail::zero()) }
    }

    pub fn with_tails(mut self, left: Option<Tail>, right: Option<Tail>) -> Self {
        self.left_tail = left;
        self.right_tail = right;
        self
    }

    /// Refits both tails by log-linear regression over the outer [`TAIL_FIT_FRACTION`] of nodes.
    ///
    /// Windows with mixed signs or a non-decaying fit get a zero tail.
    pub fn with_fitted_tails(self) -> Self {
        let left = fit_tail(&self, Side::Left, TAIL_FIT_FRACTION).unwrap_or(Tail::zero());
        let right = fit_tail(&self, Side::Right, TAIL_FIT_FRACTION).unwrap_or(Tail::zero());
        self.with_tails(Some(left), Some(right))
    }

    fn tail_value(&self, side: Side, x: f64) -> Result<f64> {
        match side {
            Side::Left => {
                let t = self.left_tail.ok_or(Error::MissingTail("left"))?;
                Ok(if t.coef == 0.0 { 0.0 } else { t.coef * (t.rate * x).exp() })
            }
            Side::Right => {
                let t = self.right_tail.ok_or(Error::MissingTail("right"))?;
                Ok(if t.coef == 0.0 { 0.0 } else { t.coef * (-t.rate * x).exp() })
            }
        }
    }

    /// Local cubic interpolation inside the grid, tail formula outside.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let g = &self.grid;
        if x < g.x_min {
            return self.tail_value(Side::Left, x);
        }
        if x > g.x_max {
            return self.tail_value(Side::Right, x);
        }
        let s = (x - g.x_min) / g.h();
        let k = s.round();
        if (s - k).abs() < 1e-9 {
            return Ok(self.values[k as usize]);
        }
        let j = (s.floor() as usize).min(g.n - 2);
        let theta = s - j as f64;
        let w = 4.min(g.n);
        let start = quad::cell_stencil_start(j, g.n, w);
        let nodes: Vec<f64> = (0..w).map(|k| (start + k) as f64 - j as f64).collect();
        let mut basis = [0.0; 4];
        quad::lagrange_values(&nodes, theta, &mut basis[..w]);
        Ok((0..w).map(|k| basis[k] * self.values[start + k]).sum())
    }

    /// Integral of the interpolating polynomial of cell `j` over `[t0, t1]` (cell units).
    fn cell_partial(&self, j: usize, t0: f64, t1: f64) -> f64 {
        let n = self.grid.n;
        let w = quad::CELL_STENCIL.min(n);
        let start = quad::cell_stencil_start(j, n, w);
        let nodes: Vec<f64> = (0..w).map(|k| (start + k) as f64 - j as f64).collect();
        let mut wts = [0.0; quad::CELL_STENCIL];
        quad::lagrange_integrals(&nodes, t0, t1, &mut wts[..w]);
        self.grid.h() * (0..w).map(|k| wts[k] * self.values[start + k]).sum::<f64>()
    }

    /// Integrals of each grid cell.
    pub fn cell_integrals(&self) -> Vec<f64> {
        cell_integrals(&self.values, self.grid.h())
    }

    fn tail_integral(&self, side: Side, x: f64) -> Result<f64> {
        match side {
            Side::Left => {
                let t = self.left_tail.ok_or(Error::MissingTail("left"))?;
                if t.coef == 0.0 {
                    return Ok(0.0);
                }
                if !(t.rate > 0.0) {
                    return Err(Error::Domain("left tail rate must be positive".into()));
                }
                Ok(t.coef * (t.rate * x).exp() / t.rate)
            }
            Side::Right => {
                let t = self.right_tail.ok_or(Error::MissingTail("right"))?;
                if t.coef == 0.0 {
                    return Ok(0.0);
                }
                if !(t.rate > 0.0) {
                    return Err(Error::Domain("right tail rate must be positive".into()));
                }
                Ok(t.coef * (-t.rate * x).exp() / t.rate)
            }
        }
    }

    /// Integral over `[a, b]`; infinite endpoints use the closed-form tail integrals.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() {
            return Err(Error::Domain("integration limits must not be NaN".into()));
        }
        if a == b {
            return Ok(0.0);
        }
        if a > b {
            return Err(Error::Domain(format!("integration limits out of order: {a} > {b}")));
        }
        let g = self.grid;
        let mut total = 0.0;
        // left tail part
        if a < g.x_min {
            let upper = b.min(g.x_min);
            total += self.tail_integral(Side::Left, upper)?;
            if a.is_finite() {
                total -= self.tail_integral(Side::Left, a)?;
            }
        }
        // right tail part
        if b > g.x_max {
            let lower = a.max(g.x_max);
            total += self.tail_integral(Side::Right, lower)?;
            if b.is_finite() {
                total -= self.tail_integral(Side::Right, b)?;
            }
        }
        let lo = a.max(g.x_min);
        let hi = b.min(g.x_max);
        if lo < hi {
            total += self.grid_integral(lo, hi);
        }
        Ok(total)
    }

    fn grid_integral(&self, lo: f64, hi: f64) -> f64 {
        let g = self.grid;
        let h = g.h();
        let sl = (lo - g.x_min) / h;
        let sh = (hi - g.x_min) / h;
        let jl = (sl.floor() as usize).min(g.n - 2);
        let jh = (sh.floor() as usize).min(g.n - 2);
        if jl == jh {
            return self.cell_partial(jl, sl - jl as f64, sh - jh as f64);
        }
        let mut sum = self.cell_partial(jl, sl - jl as f64, 1.0);
        let cells = self.cell_integrals();
        for c in &cells[jl + 1..jh] {
            sum += c;
        }
        sum + self.cell_partial(jh, 0.0, sh - jh as f64)
    }

    /// `int_{-inf}^{x_i}` at every node.
    ///
    /// Running sums are compensated: one-sided integrals of a mean-zero perturbation are
    /// tiny differences of O(1) partial sums in the far tails.
    pub fn cumulative_left(&self) -> Result<Vec<f64>> {
        let cells = self.cell_integrals();
        let mut out = Vec::with_capacity(self.grid.n);
        let mut acc = Compensated::new(self.tail_integral(Side::Left, self.grid.x_min)?);
        out.push(acc.value());
        for c in cells {
            acc.add(c);
            out.push(acc.value());
        }
        Ok(out)
    }

    /// `int_{x_i}^{inf}` at every node.
    pub fn cumulative_right(&self) -> Result<Vec<f64>> {
        let cells = self.cell_integrals();
        let mut out = vec![0.0; self.grid.n];
        let mut acc = Compensated::new(self.tail_integral(Side::Right, self.grid.x_max)?);
        out[self.grid.n - 1] = acc.value();
        for (j, &c) in cells.iter().enumerate().rev() {
            acc.add(c);
            out[j] = acc.value();
        }
        Ok(out)
    }

    /// `int_{-inf}^{x}` for arbitrary `x`.
    pub fn cumulative_left_at(&self, x: f64) -> Result<f64> {
        self.integrate(f64::NEG_INFINITY, x)
    }

    /// Pointwise combination on the same grid; tails are left unset.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::Config("fields live on different grids".into()));
        }
        let v = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Field::new(self.grid, v)
    }

    pub fn scaled(&self, c: f64) -> Field {
        let scale = |t: Option<Tail>| t.map(|t| Tail { rate: t.rate, coef: c * t.coef });
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            left_tail: scale(self.left_tail),
            right_tail: scale(self.right_tail),
        }
    }
}

/// Neumaier running sum.
pub(crate) struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub(crate) fn new(x: f64) -> Self {
        Self { sum: x, carry: 0.0 }
    }

    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Integrals of each cell of unit-spaced samples scaled by `h`, using the six-point
/// interpolating polynomial of each cell (one-sided near the ends).
pub fn cell_integrals(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    if n < quad::CELL_STENCIL {
        let nodes: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let mut w = vec![0.0; n];
        return (0..n - 1)
            .map(|j| {
                quad::lagrange_integrals(&nodes, j as f64, j as f64 + 1.0, &mut w);
                h * w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
    }
    let mut out = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let start = quad::cell_stencil_start(j, n, quad::CELL_STENCIL);
        let w = quad::cell_rule(j - start);
        let s: f64 = w.iter().zip(&values[start..start + quad::CELL_STENCIL]).map(|(a, b)| a * b).sum();
        out.push(h * s);
    }
    out
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Exponential tail fitted to the outer `fraction` of nodes on one side.
pub fn fit_tail(f: &Field, side: Side, fraction: f64) -> Option<Tail> {
    let n = f.grid.n;
    let m = ((n as f64 * fraction).round() as usize).clamp(2, n);
    let idx: Vec<usize> = match side {
        Side::Left => (0..m).collect(),
        Side::Right => (n - m..n).collect(),
    };
    let first = f.values[idx[0]];
    if first == 0.0 {
        return None;
    }
    let sign = first.signum();
    if idx.iter().any(|&i| f.values[i] == 0.0 || f.values[i].signum() != sign) {
        return None;
    }
    let xs: Vec<f64> = idx.iter().map(|&i| f.grid.point(i)).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| f.values[i].abs().ln()).collect();
    let (slope, icpt) = linear_fit(&xs, &ys)?;
    let rate = match side {
        Side::Left => slope,
        Side::Right => -slope,
    };
    if !(rate > 0.0) || !icpt.is_finite() {
        return None;
    }
    Some(Tail { rate, coef: sign * icpt.exp() })
}

/// The weight exponent: `x/(1+rho)` for `x < 0`, `-beta x` otherwise.
pub fn gamma(x: f64, rho: f64, beta: f64) -> f64 {
    if x < 0.0 {
        x / (1.0 + rho)
    } else {
        -beta * x
    }
}

/// A field viewed as an element of the weighted perturbation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub field: Field,
    pub rho: f64,
    pub eps: f64,
    pub beta: f64,
}

impl Perturbation {
    pub fn new(field: Field, rho: f64, eps: f64, beta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!("rho must lie in (0,1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps must be positive, got {eps}")));
        }
        if !(beta > 0.5 && beta < 1.0 / (1.0 + rho)) {
            return Err(Error::Domain(format!("beta must lie in (1/2, 1/(1+rho)), got {beta}")));
        }
        Ok(Self { field, rho, eps, beta })
    }

    pub fn zero(grid: LogGrid, rho: f64, eps: f64, beta: f64) -> Result<Self> {
        Self::new(Field::zeros(grid), rho, eps, beta)
    }

    /// Same space, different samples.
    pub fn with_field(&self, field: Field) -> Self {
        Self { field, ..self.clone() }
    }
}

/// `max_i |psi(x_i)| / (eps e^{gamma(x_i)})`.
pub fn weighted_norm(p: &Perturbation) -> f64 {
    weighted_sup(&p.field.values, &p.field.grid, p.rho, p.eps, p.beta)
}

/// Weighted sup of raw samples.
pub fn weighted_sup(values: &[f64], grid: &LogGrid, rho: f64, eps: f64, beta: f64) -> f64 {
    values.iter().enumerate().map(|(i, v)| v.abs() * (-gamma(grid.point(i), rho, beta)).exp() / eps).fold(0.0, f64::max)
}
