//! Coagulation kernels of homogeneity one and checks of their structural assumptions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Additive,
    Shear,
    Param { a: f64, c: f64 },
    Unit,
    Custom(KernelFn),
}

/// A rate kernel `K(x, y)` together with its small-argument constants.
///
/// `alpha` and `beta0` describe `K(s, 1) = 1 + beta0 s^alpha + ...` as `s -> 0`,
/// `big_k0` bounds `|K(s,1) - 1| / s^alpha` on `[0, 1]` and `k0` bounds `K(1, s)` from below.
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    kind: Kind,
    pub alpha: f64,
    pub big_k0: f64,
    pub beta0: f64,
    pub k0: f64,
    suppress_corner: bool,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("K0", &self.big_k0)
            .field("beta0", &self.beta0)
            .field("k0", &self.k0)
            .field("suppress_corner", &self.suppress_corner)
            .finish()
    }
}

/// Names accepted by [`KernelSpec::from_name`].
pub const KERNEL_NAMES: &[&str] = &["additive", "shear", "param:a=<a>,c=<c>", "unit-test"];

impl KernelSpec {
    /// `K(x, y) = x + y`.
    pub fn additive() -> Self {
        Self::builtin("additive", Kind::Additive, 1.0, 1.0, 1.0, 1.0)
    }

    /// `K(x, y) = (x^{1/3} + y^{1/3})^3`.
    pub fn shear() -> Self {
        Self::builtin("shear", Kind::Shear, 1.0 / 3.0, 7.0, 3.0, 1.0)
    }

    /// `K(x, y) = M (1 + c (m/M)^a)` with `M = max(x, y)`, `m = min(x, y)`.
    pub fn param(a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Domain(format!("param kernel needs a in (0,1], got {a}")));
        }
        if !(c > -1.0) || !c.is_finite() {
            return Err(Error::Domain(format!("param kernel needs c > -1, got {c}")));
        }
        let name = format!("param:a={a},c={c}");
        Ok(Self::builtin(&name, Kind::Param { a, c }, a, c.abs(), c, c.min(0.0) + 1.0))
    }

    /// Reduced kernel forced to one, with the corner region switched off.
    ///
    /// Not homogeneous; it keeps only the leading product term of the equation so that
    /// the closed-form profile is an exact fixed point.
    pub fn unit_test() -> Self {
        let mut k = Self::builtin("unit-test", Kind::Unit, 1.0, 0.0, 0.0, 1.0);
        k.suppress_corner = true;
        k
    }

    /// Wraps an arbitrary function. The caller supplies the constants.
    pub fn custom<F>(name: &str, f: F, alpha: f64, big_k0: f64, beta0: f64, k0: f64) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::builtin(name, Kind::Custom(Arc::new(f)), alpha, big_k0, beta0, k0)
    }

    fn builtin(name: &str, kind: Kind, alpha: f64, big_k0: f64, beta0: f64, k0: f64) -> Self {
        Self { name: name.to_string(), kind, alpha, big_k0, beta0, k0, suppress_corner: false }
    }

    /// Parses `additive`, `shear`, `unit-test` or `param:a=<a>,c=<c>`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "additive" => return Ok(Self::additive()),
            "shear" => return Ok(Self::shear()),
            "unit-test" => return Ok(Self::unit_test()),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("param:") {
            let (mut a, mut c) = (None, None);
            for part in rest.split(',') {
                let (key, val) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("malformed kernel parameter '{part}'")))?;
                let v: f64 =
                    val.trim().parse().map_err(|_| Error::Config(format!("kernel parameter {key} is not a number")))?;
                match key.trim() {
                    "a" => a = Some(v),
                    "c" => c = Some(v),
                    other => return Err(Error::Config(format!("unknown kernel parameter '{other}'"))),
                }
            }
            return match (a, c) {
                (Some(a), Some(c)) => Self::param(a, c),
                _ => Err(Error::Config("param kernel needs both a and c".into())),
            };
        }
        Err(Error::Config(format!("unknown kernel '{name}'; available kernels: {}", KERNEL_NAMES.join(", "))))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether the corner region of the collision integral is dropped.
    pub fn corner_suppressed(&self) -> bool {
        self.suppress_corner
    }

    pub fn with_corner_suppressed(mut self, suppress: bool) -> Self {
        self.suppress_corner = suppress;
        self
    }

    fn raw(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            Kind::Additive => x + y,
            Kind::Shear => {
                let s = x.cbrt() + y.cbrt();
                s * s * s
            }
            Kind::Param { a, c } => {
                let (big, small) = if x >= y { (x, y) } else { (y, x) };
                if big == 0.0 {
                    0.0
                } else {
                    big * (1.0 + c * (small / big).powf(*a))
                }
            }
            Kind::Unit => 1.0,
            Kind::Custom(f) => f(x, y),
        }
    }

    /// `K(x, y)` for nonnegative masses.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return Err(Error::Domain(format!("kernel arguments must be nonnegative, got ({x}, {y})")));
        }
        Ok(self.raw(x, y))
    }

    /// `K(s, 1)`.
    pub fn reduced(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("reduced kernel argument must be nonnegative, got {s}")));
        }
        Ok(self.reduced_unchecked(s))
    }

    pub(crate) fn reduced_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Unit => 1.0,
            Kind::Additive => s + 1.0,
            _ if s > 1.0 => s * self.raw(1.0, 1.0 / s),
            _ => self.raw(s, 1.0),
        }
    }

    /// `K(s, 1) - 1`, computed without cancellation for the built-in kernels.
    pub fn reduced_excess(&self, s: f64) -> f64 {
        if s > 1.0 {
            return self.reduced_unchecked(s) - 1.0;
        }
        match &self.kind {
            Kind::Additive => s,
            Kind::Shear => {
                let r = s.cbrt();
                r * (3.0 + r * (3.0 + r))
            }
            Kind::Param { a, c } => c * s.powf(*a),
            Kind::Unit => 0.0,
            Kind::Custom(_) => self.raw(s, 1.0) - 1.0,
        }
    }

    /// Log-log least squares fit of `K(1, s) - 1` on a geometric sample of `[1e-8, 1e-2]`.
    pub fn fit_small_argument(&self, sample_count: usize) -> Result<SmallArgumentFit> {
        if sample_count < 2 {
            return Err(Error::Config("need at least two samples".into()));
        }
        let (lo, hi) = (1e-8f64.ln(), 1e-2f64.ln());
        let mut pts = Vec::with_capacity(sample_count);
        let mut sign = 0.0;
        for k in 0..sample_count {
            let ls = lo + (hi - lo) * k as f64 / (sample_count - 1) as f64;
            let s = ls.exp();
            let d = self.reduced_excess(s);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Indeterminate(format!("K(1,s) - 1 vanishes at s = {s:e}")));
            }
            if sign == 0.0 {
                sign = d.signum();
            } else if d.signum() != sign {
                return Err(Error::Indeterminate("K(1,s) - 1 changes sign on the sample".into()));
            }
            pts.push((ls, d.abs().ln(), s, d));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let alpha = sxy / sxx;
        let beta0 = sign * (my - alpha * mx).exp();
        let big_k0 = pts.iter().map(|p| p.3.abs() / p.2.powf(alpha)).fold(0.0, f64::max);
        Ok(SmallArgumentFit { alpha, beta0, big_k0 })
    }

    /// Samples the structural assumptions and reports the worst defects.
    pub fn check_assumptions(&self, tol: f64) -> Result<AssumptionReport> {
        if !(tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut sym: f64 = 0.0;
        let mut hom: f64 = 0.0;
        for _ in 0..64 {
            let x = 10f64.powf(rng.gen_range(-3.0..3.0));
            let y = 10f64.powf(rng.gen_range(-3.0..3.0));
            let a = 10f64.powf(rng.gen_range(-2.0..2.0));
            let kxy = self.raw(x, y);
            let scale = kxy.abs().max(f64::MIN_POSITIVE);
            sym = sym.max((kxy - self.raw(y, x)).abs() / scale);
            hom = hom.max((self.raw(a * x, a * y) - a * kxy).abs() / (a * scale));
        }
        let mut small: f64 = 0.0;
        for k in 0..=80 {
            let s = 10f64.powf(-8.0 * k as f64 / 80.0);
            let d = (self.raw(s, 1.0) - 1.0).abs();
            let bound = self.big_k0 * s.powf(self.alpha);
            small = small.max(if bound > 0.0 {
                d / bound
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
        let mut min_k = self.raw(1.0, 0.0);
        for k in 0..=120 {
            let s = 10f64.powf(-6.0 + 9.0 * k as f64 / 120.0);
            min_k = min_k.min(self.raw(1.0, s));
        }
        Ok(AssumptionReport {
            symmetry_defect: sym,
            homogeneity_defect: hom,
            small_argument_ratio: small,
            min_k1s: min_k,
            symmetric: sym <= tol,
            homogeneous: hom <= tol,
            small_argument_bound: small <= 1.0 + tol,
            lower_bound: min_k >= self.k0 - tol,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallArgumentFit {
    pub alpha: f64,
    pub beta0: f64,
    pub big_k0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub symmetry_defect: f64,
    pub homogeneity_defect: f64,
    /// Largest `|K(s,1) - 1| / (K0 s^alpha)` seen on `[1e-8, 1]`.
    pub small_argument_ratio: f64,
    pub min_k1s: f64,
    pub symmetric: bool,
    pub homogeneous: bool,
    pub small_argument_bound: bool,
    pub lower_bound: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.symmetric && self.homogeneous && self.small_argument_bound && self.lower_bound
    }
}
