//! The duality machinery behind nonexistence for `b` close to 1: characteristics of the
//! transport subsolution, the schedule of constants of the iteration, the adjoint
//! operator, moment normalisation and tail-mass certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_integrals, Field, Tail};
use crate::kernel::KernelSpec;
use crate::profile::MassProfile;

/// `x(t; z) = (z^alpha - Gamma t)^{1/alpha}`.
pub fn characteristics(z: f64, t: f64, alpha: f64, gamma: f64) -> Result<f64> {
    let za = z.powf(alpha);
    let gt = gamma * t;
    if za < gt {
        return Err(Error::CharacteristicExhausted { z_alpha: za, gamma_t: gt });
    }
    if gt == 0.0 {
        return Ok(z);
    }
    Ok((za - gt).powf(1.0 / alpha))
}

/// Foot of the characteristic through `(x, t)`: `z(x, t) = (x^alpha + Gamma t)^{1/alpha}`.
pub fn characteristic_origin(x: f64, t: f64, alpha: f64, gamma: f64) -> f64 {
    if gamma * t == 0.0 {
        return x;
    }
    (x.powf(alpha) + gamma * t).powf(1.0 / alpha)
}

/// `phi0(s) = (1 - 1/s)^+`.
pub fn phi0(s: f64) -> f64 {
    if s > 1.0 {
        1.0 - 1.0 / s
    } else {
        0.0
    }
}

/// `phi0(z(x, t) / R)`.
pub fn subsolution_value(x: f64, t: f64, r: f64, alpha: f64, gamma: f64) -> f64 {
    phi0(characteristic_origin(x.max(0.0), t.max(0.0), alpha, gamma) / r)
}

/// Constants of the iteration over shrinking radii `R_k = delta_k R0`. Sequences are indexed
/// by `k = 0..=n_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualitySchedule {
    pub alpha: f64,
    pub beta0: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub delta: Vec<f64>,
    pub eps: Vec<f64>,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    pub n_bar: usize,
    /// Partial product of `1 - eps_k`; the infinite product lies in `[q e^{-2 q_tail}, q]`.
    pub q: f64,
    /// Bound on the remaining `sum eps_k` after the last factor taken.
    pub q_tail: f64,
    /// Number of factors in `q`.
    pub q_terms: usize,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "M_dual")]
    pub m_dual: f64,
    #[serde(rename = "omega_R0")]
    pub omega_r0: f64,
}

pub fn schedule_delta(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

/// `2^{1/alpha} / (k+1)^{(1+alpha)/alpha}`, written as `(2/(k+1))^{1/alpha} / (k+1)` so that
/// `eps_1 = 1/2` exactly.
pub fn schedule_eps(k: usize, alpha: f64) -> f64 {
    let k1 = k as f64 + 1.0;
    (2.0 / k1).powf(1.0 / alpha) / k1
}

/// Target for the remaining `sum eps_k` when `q` is truncated.
pub const Q_TAIL_TARGET: f64 = 1e-12;
/// Hard cap on the number of factors in `q`; only slow for `alpha` near 1.
pub const Q_MAX_TERMS: usize = 50_000_000;

/// `sum_{k > K} eps_k <= 2^{1/alpha} (K+1)^{1-p} / (p-1)`, `p = (1+alpha)/alpha`.
fn eps_tail_bound(k: usize, alpha: f64) -> f64 {
    let p = (1.0 + alpha) / alpha;
    2f64.powf(1.0 / alpha) * (k as f64 + 1.0).powf(1.0 - p) / (p - 1.0)
}

fn product_q(alpha: f64) -> (f64, f64, usize) {
    let mut log_q = 0.0;
    let mut k = 0;
    loop {
        k += 1;
        log_q += (-schedule_eps(k, alpha)).ln_1p();
        let tail = eps_tail_bound(k, alpha);
        if tail < Q_TAIL_TARGET || k >= Q_MAX_TERMS {
            return (log_q.exp(), tail, k);
        }
    }
}

pub fn duality_schedule(r0: f64, alpha: f64, beta0: f64, a: f64) -> Result<DualitySchedule> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(beta0 > 0.0) {
        return Err(Error::Domain(format!("beta0 must be positive, got {beta0}")));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("A must be positive, got {a}")));
    }
    let floor = 2f64.powf((1.0 + alpha) / alpha) * a;
    if !(r0 > floor) {
        return Err(Error::Precondition(format!("R0 = {r0} must exceed 2^((1+alpha)/alpha) A = {floor}")));
    }
    let gamma = alpha * beta0 / 2.0;
    let (mut delta, mut eps, mut radii, mut times) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut k = 0;
    loop {
        let d = schedule_delta(k);
        let r = d * r0;
        delta.push(d);
        eps.push(schedule_eps(k, alpha));
        radii.push(r);
        times.push((r.powf(alpha) - a.powf(alpha)) / gamma);
        if r <= floor {
            break;
        }
        k += 1;
    }
    let n_bar = k;
    let (q, q_tail, q_terms) = product_q(alpha);
    let sum: f64 = (1..=n_bar).map(|k| delta[k - 1].powf(1.0 + alpha)).sum();
    let omega_r0 = 2.0 * r0.powf(1.0 + alpha) / (q * gamma * a.powf(1.0 + alpha)) * sum;
    Ok(DualitySchedule {
        alpha,
        beta0,
        gamma,
        a,
        r0,
        delta,
        eps,
        radii,
        times,
        n_bar,
        q,
        q_tail,
        q_terms,
        d: 2f64.powf((2.0 * alpha + 1.0) / alpha) * a,
        m_dual: 2.0 / q,
        omega_r0,
    })
}

impl DualitySchedule {
    /// Checks the structural invariants; the error names the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Inconsistent(m));
        if self.eps.len() > 1 && self.eps[1] != 0.5 {
            return bad(format!("eps_1 = {}", self.eps[1]));
        }
        for k in 1..self.delta.len() {
            if self.delta[k] / self.delta[k - 1] < 0.5 {
                return bad(format!("delta_{k}/delta_{} < 1/2", k - 1));
            }
        }
        let floor = 2f64.powf(1.0 / self.alpha) * self.a;
        if let Some(k) = self.radii.iter().position(|&r| r < floor) {
            return bad(format!("R_{k} = {} below 2^(1/alpha) A = {floor}", self.radii[k]));
        }
        if let Some(k) = self.times.iter().position(|&t| t < 0.0) {
            return bad(format!("T_{k} = {} is negative", self.times[k]));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q = {} outside (0,1)", self.q));
        }
        Ok(())
    }
}

/// Worst case of `(1 - eps_k)^alpha >= delta_k / delta_{k-1}` over `k = 1..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step3Report {
    pub holds: bool,
    pub worst_k: usize,
    /// `min_k (1 - eps_k)^alpha - delta_k / delta_{k-1}`.
    pub worst_margin: f64,
}

pub fn step3_check(alpha: f64, k_max: usize) -> Step3Report {
    let mut worst = (0, f64::INFINITY);
    for k in 1..=k_max {
        let m = (1.0 - schedule_eps(k, alpha)).powf(alpha) - schedule_delta(k) / schedule_delta(k - 1);
        if m < worst.1 {
            worst = (k, m);
        }
    }
    Step3Report { holds: worst.1 >= 0.0, worst_k: worst.0, worst_margin: worst.1 }
}

/// `M_alpha = int xi^alpha g dxi`.
pub fn alpha_moment(g: &MassProfile, alpha: f64) -> Result<f64> {
    let f = &g.xi_g;
    let grid = f.grid;
    let vals = (0..grid.n)
        .map(|i| {
            let v = f.values[i];
            if v == 0.0 {
                0.0
            } else {
                v.signum() * (alpha * grid.point(i) + v.abs().ln()).exp()
            }
        })
        .collect();
    let left = f.left_tail.ok_or(Error::MissingTail("left"))?;
    let right = f.right_tail.ok_or(Error::MissingTail("right"))?;
    let shift = |t: Tail, d: f64| if t.coef == 0.0 { t } else { Tail { rate: t.rate + d, coef: t.coef } };
    let (left, right) = (shift(left, alpha), shift(right, -alpha));
    if right.coef != 0.0 && !(right.rate > 0.0) {
        return Err(Error::Domain(format!("the {alpha}-moment diverges: right tail decays too slowly")));
    }
    Field::new(grid, vals)?.with_tails(Some(left), Some(right)).integrate(f64::NEG_INFINITY, f64::INFINITY)
}

/// `g_l(xi) = l g(l xi)`: same mass, `M_alpha` divided by `l^alpha`. On the `ln xi` grid this
/// is a shift by `-ln l`.
pub fn rescale(g: &MassProfile, l: f64) -> Result<MassProfile> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {l}")));
    }
    let s = l.ln();
    let f = &g.xi_g;
    let grid = crate::grid::LogGrid::new(f.grid.x_min - s, f.grid.x_max - s, f.grid.n)?;
    let left = f.left_tail.map(|t| Tail { coef: t.coef * (t.rate * s).exp(), ..t });
    let right = f.right_tail.map(|t| Tail { coef: t.coef * (-t.rate * s).exp(), ..t });
    let field = Field { grid, values: f.values.clone(), left_tail: left, right_tail: right };
    Ok(MassProfile { xi_g: field, rho: g.rho, mass: g.mass })
}

/// Rescales so that `M_alpha = 1`.
pub fn normalize_moment(g: &MassProfile, alpha: f64) -> Result<MassProfile> {
    let m = alpha_moment(g, alpha)?;
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!("alpha-moment is {m}")));
    }
    rescale(g, m.powf(1.0 / alpha))
}

/// Relative tolerance on `M_alpha = 1` for operations that require a normalised profile.
pub const NORMALIZED_TOL: f64 = 1e-6;

fn require_normalized(g: &MassProfile, alpha: f64) -> Result<()> {
    let m = alpha_moment(g, alpha)?;
    if (m - 1.0).abs() > NORMALIZED_TOL {
        return Err(Error::Precondition(format!("profile has M_alpha = {m}, normalize it first")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs > rhs`: the profile violates the necessary inequality at this `b`.
    pub flag: bool,
    pub b_hat: f64,
    /// `int_(R0, inf) g`.
    pub far_mass: f64,
}

/// Compares `int_(D,inf) g` with `M_dual int_(R0,inf) g + (b-1) omega(R0)`.
pub fn duality_gap(g: &MassProfile, sched: &DualitySchedule, b: f64) -> Result<GapReport> {
    require_normalized(g, sched.alpha)?;
    let lhs = g.mass_above(sched.d)?;
    let far = g.mass_above(sched.r0)?;
    let rhs = sched.m_dual * far + (b - 1.0) * sched.omega_r0;
    Ok(GapReport { lhs, rhs, flag: lhs > rhs, b_hat: 1.0 + (lhs - sched.m_dual * far) / sched.omega_r0, far_mass: far })
}

/// `d_t phi + b x d_x phi - int K(x,z)/z g(z) [phi(x+z,t) - phi(x,t)] dz`.
///
/// Derivatives are central differences; the integral uses the nodes of `g`'s `ln xi` grid.
pub fn adjoint_operator(
    phi: &dyn Fn(f64, f64) -> f64,
    g: &MassProfile,
    spec: &KernelSpec,
    b: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    let hx = 1e-5 * x.abs().max(1.0);
    let ht = 1e-5 * t.abs().max(1.0);
    let dt = (phi(x, t + ht) - phi(x, t - ht)) / (2.0 * ht);
    let dx = (phi(x + hx, t) - phi(x - hx, t)) / (2.0 * hx);
    let p = phi(x, t);
    let f = &g.xi_g;
    let grid = f.grid;
    let mut integrand = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let v = f.values[i];
        if v == 0.0 {
            integrand.push(0.0);
            continue;
        }
        let z = grid.point(i).exp();
        integrand.push(spec.evaluate(x, z)? / z * v * (phi(x + z, t) - p));
    }
    let integral: f64 = cell_integrals(&integrand, grid.h()).iter().sum();
    Ok(dt + b * x * dx - integral)
}

/// One value of `A` tried by [`search_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTrial {
    #[serde(rename = "A")]
    pub a: f64,
    /// Largest `L_1(phi_bar)` over the sample set.
    pub max_adjoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    /// First `A` whose sample set satisfies the bound; `None` if the search ran out.
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub trials: Vec<ThresholdTrial>,
}

/// Radii, in units of `A`, of the subsolutions sampled by [`search_threshold`].
pub const SEARCH_RADII: [f64; 2] = [8.0, 32.0];
/// Sample times as fractions of `T = (R^alpha - A^alpha)/Gamma`.
pub const SEARCH_TIMES: [f64; 4] = [0.0, 0.25, 0.5, 0.75];
/// Sample points as multiples of `x(t; R)`.
pub const SEARCH_POINTS: [f64; 5] = [1.1, 1.5, 2.0, 4.0, 8.0];

/// Doubles `A` from 1 until `L_1(phi_bar) <= tol` on the whole sample set.
pub fn search_threshold(g: &MassProfile, spec: &KernelSpec, tol: f64, max_doublings: usize) -> Result<ThresholdSearch> {
    let (alpha, beta0) = (spec.alpha, spec.beta0);
    if !(alpha > 0.0 && alpha < 1.0 && beta0 > 0.0) {
        return Err(Error::Precondition(format!(
            "kernel {} needs alpha in (0,1) and beta0 > 0, has alpha = {alpha}, beta0 = {beta0}",
            spec.name()
        )));
    }
    let gamma = alpha * beta0 / 2.0;
    let mut trials = Vec::new();
    let mut a = 1.0;
    for _ in 0..=max_doublings {
        let mut worst = f64::NEG_INFINITY;
        for &rf in &SEARCH_RADII {
            let r = rf * a;
            let big_t = (r.powf(alpha) - a.powf(alpha)) / gamma;
            let phi = move |x: f64, t: f64| subsolution_value(x, t, r, alpha, gamma);
            for &tf in &SEARCH_TIMES {
                let t = tf * big_t;
                let front = characteristics(r, t, alpha, gamma)?;
                for &xf in &SEARCH_POINTS {
                    worst = worst.max(adjoint_operator(&phi, g, spec, 1.0, xf * front, t)?);
                }
            }
        }
        trials.push(ThresholdTrial { a, max_adjoint: worst });
        if worst <= tol {
            return Ok(ThresholdSearch { a: Some(a), trials });
        }
        a *= 2.0;
    }
    Ok(ThresholdSearch { a: None, trials })
}

/// `xi g = (1+alpha) xi^{-(1+alpha)}` on `xi >= 1`, i.e. unit mass and `g ~ xi^{-(2+alpha)}`,
/// sampled on `n` points of `ln xi in [0, u_max]`. Not yet moment-normalised.
pub fn power_law_profile(alpha: f64, u_max: f64, n: usize) -> Result<MassProfile> {
    let grid = crate::grid::LogGrid::new(0.0, u_max, n)?;
    let p = 1.0 + alpha;
    let field =
        Field::from_fn(grid, |u| p * (-p * u).exp())?.with_tails(Some(Tail::zero()), Some(Tail { rate: p, coef: p }));
    MassProfile::from_xi_g(field, None)
}

/// One radius of the far-side certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarTailEntry {
    #[serde(rename = "R")]
    pub r: f64,
    pub mass_above: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarTailReport {
    pub entries: Vec<FarTailEntry>,
    pub all_hold: bool,
}

/// Checks `int_(R,inf) g <= R^{-alpha}` at each radius, allowing `rel_tol` of the bound.
pub fn tail_mass_far(g: &MassProfile, alpha: f64, radii: &[f64], rel_tol: f64) -> Result<FarTailReport> {
    require_normalized(g, alpha)?;
    let mut entries = Vec::with_capacity(radii.len());
    for &r in radii {
        let m = g.mass_above(r)?;
        let bound = r.powf(-alpha);
        entries.push(FarTailEntry { r, mass_above: m, bound, holds: m <= bound * (1.0 + rel_tol) });
    }
    let all_hold = entries.iter().all(|e| e.holds);
    Ok(FarTailReport { entries, all_hold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginTailReport {
    /// Slope of `ln int_(0,x) g` against `ln x` over the sample points.
    pub fitted_exponent: f64,
    pub gamma: f64,
    /// The fitted growth is at least `gamma`.
    pub consistent: bool,
}

/// Fits the growth exponent of the mass near the origin and compares it with `gamma`.
pub fn tail_mass_origin(g: &MassProfile, gamma: f64, points: &[f64]) -> Result<OriginTailReport> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &x in points {
        let m = g.mass_below(x)?;
        if !(m > 0.0) {
            return Err(Error::Degenerate(format!("no mass below {x}")));
        }
        xs.push(x.ln());
        ys.push(m.ln());
    }
    let (slope, _) = crate::grid::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Degenerate("need at least two distinct sample points".into()))?;
    Ok(OriginTailReport { fitted_exponent: slope, gamma, consistent: slope >= gamma })
}

/// `sum_{k=1}^n (1-eps)^{2k-1} (1-eta)^k / b^k`, summed term by term.
pub fn decay_exponent_sum(eps: f64, eta: f64, b: f64, n: usize) -> f64 {
    (1..=n as i32).map(|k| (1.0 - eps).powi(2 * k - 1) * ((1.0 - eta) / b).powi(k)).sum()
}

/// Closed form of [`decay_exponent_sum`]: `r(1-r^n)/((1-eps)(1-r))`, `r = (1-eps)^2(1-eta)/b`.
pub fn decay_exponent_sum_closed(eps: f64, eta: f64, b: f64, n: usize) -> f64 {
    let r = (1.0 - eps).powi(2) * (1.0 - eta) / b;
    if r == 1.0 {
        return n as f64 / (1.0 - eps);
    }
    r * (1.0 - r.powi(n as i32)) / ((1.0 - eps) * (1.0 - r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_examples() {
        assert_eq!(characteristics(3.0, 0.0, 0.4, 1.5).unwrap(), 3.0);
        assert!((characteristics(3.0, 0.5, 1.0, 1.5).unwrap() - 2.25).abs() < 1e-15);
        assert!(matches!(characteristics(1.0, 2.0, 0.5, 1.0), Err(Error::CharacteristicExhausted { .. })));
        let z0 = 17.0;
        let x = characteristics(z0, 3.0, 1.0 / 3.0, 0.5).unwrap();
        assert!((characteristic_origin(x, 3.0, 1.0 / 3.0, 0.5) - z0).abs() < 1e-12 * z0);
    }

    #[test]
    fn subsolution_examples() {
        let (r, a, g) = (5.0, 0.5, 0.75);
        assert_eq!(subsolution_value(r, 0.0, r, a, g), 0.0);
        assert!((subsolution_value(2.0 * r, 0.0, r, a, g) - 0.5).abs() < 1e-15);
        // x = 0 at the time the front reaches the origin
        let t = r.powf(a) / g;
        assert!(subsolution_value(0.0, t, r, a, g).abs() < 1e-12);
    }

    #[test]
    fn schedule_examples() {
        for alpha in [0.2, 1.0 / 3.0, 0.7] {
            let s = duality_schedule(1e4, alpha, 1.0, 1.0).unwrap();
            assert!((s.eps[1] - 0.5).abs() < 1e-15);
            s.check_invariants().unwrap();
            let floor = 2f64.powf((1.0 + alpha) / alpha);
            assert!(s.radii[s.n_bar] <= floor);
            assert!(s.radii[s.n_bar - 1] > floor);
        }
        assert!(matches!(duality_schedule(1.0, 0.5, 1.0, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn decay_sum_examples() {
        assert_eq!(decay_exponent_sum(0.0, 0.0, 1.0, 3), 3.0);
        assert_eq!(decay_exponent_sum_closed(0.0, 0.0, 1.0, 3), 3.0);
        let (a, b) = (decay_exponent_sum(0.1, 0.05, 1.01, 10), decay_exponent_sum_closed(0.1, 0.05, 1.01, 10));
        assert!((a - b).abs() < 1e-14 * a);
    }
}
