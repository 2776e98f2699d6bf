//! Collision integrals of the log-variable profile equation.
//!
//! The right-hand side at `x` splits into
//!
//! * the rectangle `y < x < z`, written as `L(x) U(x)` plus the kernel excess term
//!   `int [K - 1] lambda(y) lambda(z)`, and
//! * the corner `(x, x) + {y, z <= 0, e^{y/rho} + e^{z/rho} >= 1}`.
//!
//! The excess term is integrated in the separation `t = z - y` against product weights
//! for `K(e^{-t/rho}, 1) - 1`. The corner is cut along `y = z = -rho ln 2` into two strips
//! and a square. On each strip the variable that runs off to `-inf` stays outer and the
//! bounded one is mapped to `[0, 1]`, which keeps every integrand bounded and smooth.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixedpoint::{lambda_bar, lambda_bar_field};
use crate::grid::{cell_integrals, Field, Perturbation, Tail};
use crate::kernel::KernelSpec;
use crate::quad;

const CHUNK: usize = 64;
const OUTER_GL: usize = 8;
const INNER_GL: usize = 8;
const SQUARE_GL: usize = 16;
const CELL_GL: usize = 16;

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("rho must lie in (0,1), got {rho}")))
    }
}

fn require_tails(f: &Field) -> Result<()> {
    f.left_tail.ok_or(Error::MissingTail("left"))?;
    f.right_tail.ok_or(Error::MissingTail("right"))?;
    Ok(())
}

/// Cubic interpolation of a field at `x_i + delta` for every node `i`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Shift {
    delta: f64,
    k: isize,
    w: [f64; 4],
}

impl Shift {
    pub(crate) fn new(delta: f64, h: f64) -> Self {
        let s = delta / h;
        let k = s.floor();
        let mut w = [0.0; 4];
        quad::lagrange_values(&[-1.0, 0.0, 1.0, 2.0], s - k, &mut w);
        Self { delta, k: k as isize, w }
    }

    #[inline]
    pub(crate) fn at(&self, f: &Field, i: usize) -> f64 {
        let j = i as isize + self.k;
        let n = f.grid.n as isize;
        if j >= 1 && j + 2 < n {
            let j = j as usize;
            let v = &f.values[j - 1..j + 3];
            self.w[0] * v[0] + self.w[1] * v[1] + self.w[2] * v[2] + self.w[3] * v[3]
        } else {
            f.interpolate(f.grid.point(i) + self.delta).unwrap_or(0.0)
        }
    }
}

/// GL nodes on `[a, b]` split into panels no wider than `width`.
fn panels(a: f64, b: f64, width: f64, order: usize) -> Vec<(f64, f64)> {
    if !(b > a) {
        return Vec::new();
    }
    let count = ((b - a) / width).ceil().max(1.0) as usize;
    let step = (b - a) / count as f64;
    let mut out = Vec::with_capacity(count * order);
    for p in 0..count {
        let lo = a + p as f64 * step;
        let hi = if p + 1 == count { b } else { lo + step };
        out.extend(quad::gauss_legendre_on(order, lo, hi));
    }
    out
}

/// One outer quadrature node of a corner strip.
struct StripNode {
    weight: f64,
    outer: Shift,
    inner: Vec<(f64, Shift)>,
}

struct CornerPlan {
    strips: Vec<StripNode>,
    square: Vec<Shift>,
    square_w: Vec<f64>,
    far_steps: usize,
    far_depth: f64,
    far_factor: f64,
}

impl CornerPlan {
    fn new(spec: &KernelSpec, rho: f64, h: f64) -> Self {
        let ln2r = rho * std::f64::consts::LN_2;
        let alpha = spec.alpha.clamp(0.05, 1.0);
        let (tau, tau_w): (Vec<f64>, Vec<f64>) = quad::gauss_legendre_on(INNER_GL, 0.0, 1.0).into_iter().unzip();

        let far_steps = ((32.0 * rho / alpha) / h).ceil().max(1.0) as usize;
        let far_depth = far_steps as f64 * h;
        let mut strips = Vec::new();

        // z runs to -inf, y in [rho ln(1 - e^{z/rho}), 0] with e^{y/rho} = 1 - w tau
        let width_d = (0.5 * rho / alpha).min(0.25);
        for (z, wz) in panels(-far_depth.max(2.0 * ln2r), -ln2r, width_d, OUTER_GL) {
            let w = (z / rho).exp();
            let inner = tau
                .iter()
                .zip(&tau_w)
                .map(|(&t, &wt)| {
                    let s = 1.0 - w * t;
                    let c = spec.reduced_unchecked(s / w) * (w / s);
                    (wt * c, Shift::new(rho * (-w * t).ln_1p(), h))
                })
                .collect();
            strips.push(StripNode { weight: rho * wz, outer: Shift::new(z, h), inner });
        }

        // y runs to -inf, z in [rho ln(1 - e^{y/rho}), 0] with e^{z/rho} = 1 - v tau
        let depth_c = (40.0 * rho / (1.0 - rho)).max(2.0 * ln2r);
        let width_c = (0.5 * rho).min(0.25);
        for (y, wy) in panels(-depth_c, -ln2r, width_c, OUTER_GL) {
            let v = (y / rho).exp();
            let inner = tau
                .iter()
                .zip(&tau_w)
                .map(|(&t, &wt)| {
                    let sig = 1.0 - v * t;
                    let r = v / sig;
                    (wt * spec.reduced_unchecked(r) * r, Shift::new(rho * (-v * t).ln_1p(), h))
                })
                .collect();
            strips.push(StripNode { weight: rho * wy, outer: Shift::new(y, h), inner });
        }

        let sq = quad::gauss_legendre_on(SQUARE_GL, -ln2r, 0.0);
        let square: Vec<Shift> = sq.iter().map(|&(y, _)| Shift::new(y, h)).collect();
        let mut square_w = Vec::with_capacity(SQUARE_GL * SQUARE_GL);
        for &(y, wy) in &sq {
            for &(z, wz) in &sq {
                square_w.push(wy * wz * spec.reduced_unchecked(((y - z) / rho).exp()));
            }
        }
        Self { strips, square, square_w, far_steps, far_depth, far_factor: spec.reduced_unchecked(0.0) }
    }
}

/// Corner contribution at every node.
pub(crate) fn corner_term(lam: &Field, spec: &KernelSpec, rho: f64, left_cum: &[f64]) -> Vec<f64> {
    let n = lam.grid.n;
    let mut out = vec![0.0; n];
    if spec.corner_suppressed() {
        return out;
    }
    let plan = CornerPlan::new(spec, rho, lam.grid.h());
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        let len = chunk.len();
        let mut inner = vec![0.0; len];
        let mut sqv = vec![0.0; SQUARE_GL * len];
        for node in &plan.strips {
            inner.iter_mut().for_each(|v| *v = 0.0);
            for (cw, sh) in &node.inner {
                for (k, v) in inner.iter_mut().enumerate() {
                    *v += cw * sh.at(lam, base + k);
                }
            }
            for (k, o) in chunk.iter_mut().enumerate() {
                *o += node.weight * node.outer.at(lam, base + k) * inner[k];
            }
        }
        for (p, sh) in plan.square.iter().enumerate() {
            for k in 0..len {
                sqv[p * len + k] = sh.at(lam, base + k);
            }
        }
        for (k, o) in chunk.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in 0..SQUARE_GL {
                let mut row = 0.0;
                for q in 0..SQUARE_GL {
                    row += plan.square_w[p * SQUARE_GL + q] * sqv[q * len + k];
                }
                s += sqv[p * len + k] * row;
            }
            let i = base + k;
            let far_l = if i >= plan.far_steps {
                left_cum[i - plan.far_steps]
            } else {
                lam.cumulative_left_at(lam.grid.point(i) - plan.far_depth).unwrap_or(0.0)
            };
            *o += s + rho * plan.far_factor * lam.values[i] * far_l;
        }
    });
    out
}

/// Largest separation at which the kernel excess is still resolved, in grid steps.
fn excess_steps(spec: &KernelSpec, rho: f64, h: f64, n: usize) -> usize {
    let top = spec.reduced_excess(1.0).abs().max(f64::MIN_POSITIVE);
    let mut m = 1usize;
    while m < n - 1 {
        let t = m as f64 * h;
        if spec.reduced_excess((-t / rho).exp()).abs() <= 1e-18 * top {
            break;
        }
        m += 1;
    }
    m.max(5).min(n.saturating_sub(1).max(5))
}

/// Product weights `int k(t) phi_m(t) dt` for the piecewise six-point interpolant in `t`.
fn excess_weights(spec: &KernelSpec, rho: f64, h: f64, steps: usize) -> Vec<f64> {
    let nodes_n = steps + 1;
    let mut w = vec![0.0; nodes_n];
    let gl = quad::gauss_legendre_on(CELL_GL, 0.0, 1.0);
    let mut basis = [0.0; quad::CELL_STENCIL];
    for c in 0..steps {
        let start = quad::cell_stencil_start(c, nodes_n, quad::CELL_STENCIL);
        let nodes: Vec<f64> = (0..quad::CELL_STENCIL).map(|k| (start + k) as f64 - c as f64).collect();
        for &(theta, wt) in &gl {
            let t = (c as f64 + theta) * h;
            let kv = spec.reduced_excess((-t / rho).exp());
            quad::lagrange_values(&nodes, theta, &mut basis);
            for k in 0..quad::CELL_STENCIL {
                w[start + k] += h * wt * kv * basis[k];
            }
        }
    }
    w
}

/// `int_{y < x < z} [K(e^{(y-z)/rho}, 1) - 1] lambda(y) lambda(z)` at every node.
pub(crate) fn excess_term(lam: &Field, spec: &KernelSpec, rho: f64) -> Result<Vec<f64>> {
    let g = lam.grid;
    let n = g.n;
    let h = g.h();
    if spec.reduced_excess(1.0) == 0.0 && spec.reduced_excess(0.5) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let lt = lam.left_tail.ok_or(Error::MissingTail("left"))?;
    let rt = lam.right_tail.ok_or(Error::MissingTail("right"))?;
    let steps = excess_steps(spec, rho, h, n);
    let wts = excess_weights(spec, rho, h, steps);

    // padded samples: index p corresponds to node p - pad
    let pad = steps + 4;
    let total = n + 2 * pad;
    let xs = |p: usize| g.x_min + (p as f64 - pad as f64) * h;
    let padded: Vec<f64> = (0..total)
        .map(|p| if p < pad || p >= pad + n { lam.interpolate(xs(p)).unwrap_or(0.0) } else { lam.values[p - pad] })
        .collect();

    const BLOCK: usize = 16;
    let blocks: Vec<Vec<f64>> = (0..=steps)
        .collect::<Vec<_>>()
        .par_chunks(BLOCK)
        .map(|ms| {
            let mut acc = vec![0.0; n];
            for &m in ms {
                if m == 0 || wts[m] == 0.0 {
                    continue;
                }
                let len = total - m;
                let prod: Vec<f64> = (0..len).map(|p| padded[p] * padded[p + m]).collect();
                let cells = cell_integrals(&prod, h);
                // cumulative from the left, starting at padded node 0
                let x0 = xs(0);
                let lcoef = lt.coef * lt.coef * (lt.rate * m as f64 * h).exp();
                let mut cl = vec![0.0; len];
                cl[0] = if lcoef == 0.0 { 0.0 } else { lcoef * (2.0 * lt.rate * x0).exp() / (2.0 * lt.rate) };
                for p in 1..len {
                    cl[p] = cl[p - 1] + cells[p - 1];
                }
                let xe = xs(len - 1);
                let rcoef = rt.coef * rt.coef * (-rt.rate * m as f64 * h).exp();
                let mut cr = vec![0.0; len];
                cr[len - 1] = if rcoef == 0.0 { 0.0 } else { rcoef * (-2.0 * rt.rate * xe).exp() / (2.0 * rt.rate) };
                for p in (0..len - 1).rev() {
                    cr[p] = cr[p + 1] + cells[p];
                }
                let t = m as f64 * h;
                for (i, a) in acc.iter_mut().enumerate() {
                    let hi = i + pad;
                    let lo = hi - m;
                    let q = if g.point(i) < -0.5 * t { cl[hi] - cl[lo] } else { cr[lo] - cr[hi] };
                    *a += wts[m] * q;
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; n];
    for b in blocks {
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
    }
    Ok(out)
}

/// Pieces of the right-hand side evaluated on the nodes of a profile.
#[derive(Debug, Clone)]
pub struct RhsParts {
    /// `int_{-inf}^x lambda`
    pub left: Vec<f64>,
    /// `int_x^inf lambda`
    pub right: Vec<f64>,
    pub excess: Vec<f64>,
    pub corner: Vec<f64>,
}

impl RhsParts {
    pub fn total(&self) -> Vec<f64> {
        (0..self.left.len()).map(|i| self.left[i] * self.right[i] + self.excess[i] + self.corner[i]).collect()
    }
}

pub fn rhs_parts(lam: &Field, spec: &KernelSpec, rho: f64) -> Result<RhsParts> {
    check_rho(rho)?;
    require_tails(lam)?;
    let left = lam.cumulative_left()?;
    let right = lam.cumulative_right()?;
    let excess = excess_term(lam, spec, rho)?;
    let corner = corner_term(lam, spec, rho, &left);
    Ok(RhsParts { left, right, excess, corner })
}

/// The full collision integral at every node, as a field with refitted tails.
pub fn rhs_full(lam: &Field, spec: &KernelSpec, rho: f64) -> Result<Field> {
    let parts = rhs_parts(lam, spec, rho)?;
    Ok(Field::new(lam.grid, parts.total())?.with_fitted_tails())
}

/// The three remainder pieces of the perturbation equation.
#[derive(Debug, Clone)]
pub struct Remainder {
    /// Product of the one-sided integrals of the perturbation.
    pub r1: Field,
    /// Kernel-excess integral of the full profile.
    pub r2: Field,
    /// Corner integral of the full profile.
    pub r3: Field,
}

impl Remainder {
    pub fn total(&self) -> Vec<f64> {
        (0..self.r1.values.len()).map(|i| self.r1.values[i] + self.r2.values[i] + self.r3.values[i]).collect()
    }
}

/// The closed-form profile plus the perturbation, with tails refitted on the sum.
pub fn full_profile(psi: &Perturbation) -> Result<Field> {
    let base = lambda_bar_field(psi.rho, psi.field.grid);
    let lam = base.zip_with(&psi.field, |a, b| a + b)?;
    Ok(lam.with_fitted_tails())
}

pub fn remainder_terms(psi: &Perturbation, spec: &KernelSpec, rho: f64) -> Result<Remainder> {
    check_rho(rho)?;
    require_tails(&psi.field)?;
    let lam = full_profile(psi)?;
    let g = lam.grid;
    let lp = psi.field.cumulative_left()?;
    let up = psi.field.cumulative_right()?;
    let r1: Vec<f64> = lp.iter().zip(&up).map(|(a, b)| a * b).collect();
    let left = lam.cumulative_left()?;
    let r2 = excess_term(&lam, spec, rho)?;
    let r3 = corner_term(&lam, spec, rho, &left);
    Ok(Remainder {
        r1: Field::new(g, r1)?.with_fitted_tails(),
        r2: Field::new(g, r2)?.with_fitted_tails(),
        r3: Field::new(g, r3)?.with_fitted_tails(),
    })
}

/// `Psi(x) = lambda_bar(x)/(1+rho) int_0^x R/lambda_bar`.
pub fn big_psi(r: &Field, rho: f64) -> Result<Field> {
    let g = r.grid;
    if !(g.x_min <= 0.0 && g.x_max >= 0.0) {
        return Err(Error::Domain("grid must contain x = 0".into()));
    }
    let lb: Vec<f64> = g.points().iter().map(|&x| lambda_bar(rho, x)).collect();
    let ratio = Field::new(g, r.values.iter().zip(&lb).map(|(a, b)| a / b).collect())?;
    let cells = ratio.cell_integrals();
    let mut cum = vec![0.0; g.n];
    for j in 1..g.n {
        cum[j] = cum[j - 1] + cells[j - 1];
    }
    let zero_at = ratio.integrate(g.x_min, 0.0)?;
    let j0 = g.nearest(0.0);
    let vals: Vec<f64> = (0..g.n)
        .map(|i| {
            let integral = if i == j0 && g.point(i) == 0.0 { 0.0 } else { cum[i] - zero_at };
            lb[i] / (1.0 + rho) * integral
        })
        .collect();
    let out = Field::new(g, vals)?;
    let left = crate::grid::fit_tail(&out, crate::grid::Side::Left, crate::grid::TAIL_FIT_FRACTION);
    let right = crate::grid::fit_tail(&out, crate::grid::Side::Right, crate::grid::TAIL_FIT_FRACTION);
    Ok(out.with_tails(Some(left.unwrap_or(Tail::zero())), Some(right.unwrap_or(Tail::zero()))))
}
