//! Independent reference integrals: adaptive Gauss-Kronrod on closed-form integrands,
//! with the corner written directly in log coordinates (no substitution shared with
//! the library).

#![allow(clippy::excessive_precision)]

use coagself::KernelSpec;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]`: bisects the interval with the
/// largest error estimate until the summed estimate meets the tolerance.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, e) = gk15(f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > (rel * total.abs()).max(abs) && parts.len() < 400 {
        let (k, _) =
            parts.iter().enumerate().fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, pv, pe) = parts.swap_remove(k);
        let m = 0.5 * (lo + hi);
        let l = gk15(f, lo, m);
        let r = gk15(f, m, hi);
        total += l.0 + r.0 - pv;
        err += l.1 + r.1 - pe;
        parts.push((lo, m, l.0, l.1));
        parts.push((m, hi, r.0, r.1));
    }
    parts.iter().map(|p| p.2).sum()
}

/// Integral over consecutive breakpoints.
pub fn integrate_pieces(f: &mut dyn FnMut(f64) -> f64, breaks: &[f64], rel: f64, abs: f64) -> f64 {
    breaks.windows(2).map(|w| integrate(f, w[0], w[1], rel, abs)).sum()
}

const REL: f64 = 1e-11;
const ABS: f64 = 1e-300;

fn half_line(f: &mut dyn FnMut(f64) -> f64, len: f64) -> f64 {
    let mut br = vec![0.0, 0.25, 1.0, 3.0, 8.0];
    let mut b = 16.0;
    while b < len {
        br.push(b);
        b *= 2.0;
    }
    br.push(len);
    integrate_pieces(f, &br, REL, ABS)
}

/// `int_{-inf}^x f`.
pub fn left_integral(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    half_line(&mut |u| f(x - u), 200.0)
}

/// `int_x^inf f`.
pub fn right_integral(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    half_line(&mut |v| f(x + v), 200.0)
}

/// `int_{y<x<z} [K(e^{(y-z)/rho},1) - 1] f(y) f(z)` by nested quadrature.
pub fn excess(f: &dyn Fn(f64) -> f64, spec: &KernelSpec, rho: f64, x: f64) -> f64 {
    let reach = 60.0 * rho / spec.alpha;
    half_line(
        &mut |u| {
            let fy = f(x - u);
            if fy == 0.0 {
                return 0.0;
            }
            let inner = half_line(
                &mut |v| {
                    let s = (-(u + v) / rho).exp();
                    spec.reduced_excess(s) * f(x + v)
                },
                (reach - u).max(1e-3),
            );
            fy * inner
        },
        reach,
    )
}

/// Separable form of the excess term for the additive kernel.
pub fn excess_additive(f: &dyn Fn(f64) -> f64, rho: f64, x: f64) -> f64 {
    let a = half_line(&mut |u| (-u / rho).exp() * f(x - u), 200.0);
    let b = half_line(&mut |v| (-v / rho).exp() * f(x + v), 200.0);
    a * b
}

fn ell(yp: f64, rho: f64) -> f64 {
    rho * (-(yp / rho).exp_m1()).ln()
}

/// Corner integral `int_{y'<0} int_{ell(y')}^0 K(e^{(y'-z')/rho},1) f(x+y') f(x+z')` in the
/// original log coordinates. Near `y' = 0` the outer variable is `y' = -rho e^{-u}` and the
/// kernel is factored by homogeneity to keep intermediate values finite.
pub fn corner(f: &dyn Fn(f64) -> f64, spec: &KernelSpec, rho: f64, x: f64) -> f64 {
    let inner_breaks = |lo: f64| {
        let mut br = vec![lo];
        let mut d = 0.25 * rho;
        while lo + d < 0.0 {
            br.push(lo + d);
            d *= 2.0;
        }
        br.push(0.0);
        br
    };
    // y' in [-deep, -rho]
    let deep = 60.0 * rho / (1.0 - rho) + 1.0;
    let mut outer_a = |yp: f64| {
        let lo = ell(yp, rho);
        let fy = f(x + yp);
        let mut g = |zp: f64| spec.reduced(((yp - zp) / rho).exp()).unwrap() * f(x + zp);
        fy * integrate_pieces(&mut g, &inner_breaks(lo), REL, ABS)
    };
    let mut br = vec![-deep];
    let mut b = -deep;
    while b + 0.5 * rho < -rho {
        b += 0.5 * rho;
        br.push(b);
    }
    br.push(-rho);
    let part_a = integrate_pieces(&mut outer_a, &br, REL, ABS);

    // y' = -rho e^{-u}, u in [0, umax]
    let umax = (x.max(0.0) + 50.0) / rho;
    let mut outer_b = |u: f64| {
        let yp = -rho * (-u).exp();
        // ell(y') written in u so that it stays finite after e^{-u} underflows
        let lo = if u < 30.0 { rho * (-(-(-u).exp()).exp_m1()).ln() } else { -rho * (u + 0.5 * (-u).exp()) };
        let fy = f(x + yp);
        let mut g = |zp: f64| {
            let a = (yp - zp) / rho;
            // K(e^a,1) e^{-u} = e^{a-u} K(1, e^{-a})
            let k = if a > 0.0 {
                (a - u).exp() * spec.evaluate(1.0, (-a).exp()).unwrap()
            } else {
                spec.reduced(a.exp()).unwrap() * (-u).exp()
            };
            k * f(x + zp)
        };
        rho * fy * integrate_pieces(&mut g, &inner_breaks(lo), REL, ABS)
    };
    let mut br = vec![0.0];
    let mut b = 0.0;
    while b + 2.0 < umax {
        b += 2.0;
        br.push(b);
    }
    br.push(umax);
    part_a + integrate_pieces(&mut outer_b, &br, REL, ABS)
}

/// The corner with the inner limit cut at depth `depth` below `x`, plus the leading-order
/// contribution of the strip beyond the cut.
pub fn corner_truncated(f: &dyn Fn(f64) -> f64, spec: &KernelSpec, rho: f64, x: f64, depth: f64) -> f64 {
    let cut = -depth;
    // y' where ell(y') = cut
    let y_cut = rho * (-(cut / rho).exp()).ln_1p();
    let inner = |yp: f64| {
        let lo = ell(yp, rho).max(cut);
        let mut g = |zp: f64| spec.reduced(((yp - zp) / rho).exp()).unwrap() * f(x + zp);
        let mut br = vec![lo];
        let mut d = 0.25 * rho;
        while lo + d < 0.0 {
            br.push(lo + d);
            d *= 2.0;
        }
        br.push(0.0);
        f(x + yp) * integrate_pieces(&mut g, &br, REL, ABS)
    };
    let deep = 60.0 * rho / (1.0 - rho) + 1.0;
    let mut o = |yp: f64| inner(yp);
    let mut br = vec![-deep];
    let mut b = -deep;
    while b + 0.5 * rho < y_cut {
        b += 0.5 * rho;
        br.push(b);
    }
    br.push(y_cut);
    // beyond y_cut the inner range is [cut, 0]; the integrand is smooth but steep near y' = 0
    let mut d = (y_cut).abs();
    let mut yb = y_cut;
    while d > 1e-16 {
        d *= 0.5;
        yb = -d;
        br.push(yb);
    }
    let _ = yb;
    br.push(0.0);
    let main = integrate_pieces(&mut o, &br, REL, ABS);
    main + rho * f(x) * left_integral(f, x + cut)
}

/// Whole right-hand side at `x`.
pub fn rhs(f: &dyn Fn(f64) -> f64, spec: &KernelSpec, rho: f64, x: f64) -> f64 {
    let lu = left_integral(f, x) * right_integral(f, x);
    let c = if spec.corner_suppressed() { 0.0 } else { corner(f, spec, rho, x) };
    lu + excess(f, spec, rho, x) + c
}

/// Closed-form base profile.
pub fn lambda_bar(rho: f64, x: f64) -> f64 {
    let e = (x / (1.0 + rho)).exp();
    if e.is_infinite() {
        let e = (-x / (1.0 + rho)).exp();
        return e / ((1.0 + e) * (1.0 + e) * (1.0 + rho));
    }
    e / ((1.0 + e) * (1.0 + e) * (1.0 + rho))
}

/// Derivative of [`lambda_bar`].
pub fn lambda_bar_prime(rho: f64, x: f64) -> f64 {
    let t = (0.5 * x / (1.0 + rho)).tanh();
    -lambda_bar(rho, x) * t / (1.0 + rho)
}
