use coagself::nonexist::{
    adjoint_operator, alpha_moment, characteristics, duality_gap, duality_schedule, normalize_moment,
    power_law_profile, schedule_eps, search_threshold, step3_check, subsolution_value, tail_mass_far, tail_mass_origin,
};
use coagself::profile::MassProfile;
use coagself::{Error, Field, KernelSpec, LogGrid, Tail};

const ALPHA: f64 = 1.0 / 3.0;

fn synthetic() -> MassProfile {
    normalize_moment(&power_law_profile(ALPHA, 60.0, 2048).unwrap(), ALPHA).unwrap()
}

#[test]
fn synthetic_profile_is_normalised() {
    let raw = power_law_profile(ALPHA, 60.0, 2048).unwrap();
    assert!((raw.mass - 1.0).abs() < 1e-9);
    assert!((alpha_moment(&raw, ALPHA).unwrap() - (1.0 + ALPHA)).abs() < 1e-9);
    let g = synthetic();
    assert!((alpha_moment(&g, ALPHA).unwrap() - 1.0).abs() < 1e-8);
    assert!((g.mass - 1.0).abs() < 1e-9);
}

#[test]
fn narrow_bump_has_unit_moment() {
    let u = LogGrid::new(-0.5, 0.5, 4001).unwrap();
    let w: f64 = 0.02;
    let c = 1.0 / (w * std::f64::consts::PI.sqrt());
    let g = MassProfile::from_density(u, |xi: f64| c * (-((xi - 1.0) / w).powi(2)).exp()).unwrap();
    assert!((g.mass - 1.0).abs() < 1e-9);
    for alpha in [0.1, 0.5, 0.9] {
        assert!((alpha_moment(&g, alpha).unwrap() - 1.0).abs() < 1e-3);
    }
}

#[test]
fn zero_profile_cannot_be_normalised() {
    let u = LogGrid::new(-5.0, 5.0, 101).unwrap();
    let g = MassProfile::from_density(u, |_| 0.0).unwrap();
    assert!(matches!(normalize_moment(&g, ALPHA), Err(Error::Degenerate(_))));
}

#[test]
fn far_tail_certificate() {
    let g = synthetic();
    let rep = tail_mass_far(&g, ALPHA, &[1.0, 10.0, 100.0], 1e-8).unwrap();
    assert!(rep.all_hold, "{rep:?}");
    // int_(R,inf) of the rescaled power law is (l R)^{-(1+alpha)} with l = (1+alpha)^{1/alpha}
    let l = (1.0 + ALPHA).powf(1.0 / ALPHA);
    for e in &rep.entries {
        let want = (l * e.r).powf(-(1.0 + ALPHA));
        assert!((e.mass_above - want).abs() < 1e-8 * want, "{e:?}");
    }
    let raw = power_law_profile(ALPHA, 60.0, 2048).unwrap();
    assert!(matches!(tail_mass_far(&raw, ALPHA, &[1.0], 0.0), Err(Error::Precondition(_))));
}

#[test]
fn origin_growth_exponent() {
    // xi g = xi^{0.4} near the origin, so the mass below x grows like x^{0.4}
    let u = LogGrid::new(-40.0, 10.0, 2048).unwrap();
    let g = MassProfile::from_density(u, |xi: f64| xi.powf(-0.6) * (-xi).exp()).unwrap();
    let rep = tail_mass_origin(&g, 0.3, &[1e-8, 1e-6, 1e-4]).unwrap();
    assert!((rep.fitted_exponent - 0.4).abs() < 1e-3, "{rep:?}");
    assert!(rep.consistent);
}

#[test]
fn gap_examples() {
    let g = synthetic();
    let a = 2.0;
    let d = 2f64.powf((2.0 * ALPHA + 1.0) / ALPHA) * a;
    let s = duality_schedule(100.0 * d, ALPHA, 3.0, a).unwrap();
    assert_eq!(s.d, d);
    let rep = duality_gap(&g, &s, 1.01).unwrap();
    assert!(rep.lhs > 0.0 && rep.rhs > 0.0);
    let excess = rep.b_hat - 1.0;
    assert!(excess > 0.0, "{rep:?}");
    assert!(duality_gap(&g, &s, 1.0 + 0.5 * excess).unwrap().flag);
    assert!(!duality_gap(&g, &s, 1.0 + 2.0 * excess).unwrap().flag);
    assert!(!duality_gap(&g, &s, 1e6).unwrap().flag);

    // all of g below D
    let u = LogGrid::new(-2.0, d.ln() - 1.0, 512).unwrap();
    let bump = Field::from_fn(u, |u: f64| (1.0 - u * u).max(0.0).powi(3))
        .unwrap()
        .with_tails(Some(Tail::zero()), Some(Tail::zero()));
    let inner = MassProfile::from_xi_g(bump, None).unwrap();
    let inner = normalize_moment(&inner, ALPHA).unwrap();
    assert!(inner.xi_g.grid.x_max < d.ln());
    let rep = duality_gap(&inner, &s, 1.01).unwrap();
    assert_eq!(rep.lhs, 0.0);
    assert!(!rep.flag);

    let raw = power_law_profile(ALPHA, 60.0, 2048).unwrap();
    assert!(matches!(duality_gap(&raw, &s, 1.01), Err(Error::Precondition(_))));
}

#[test]
fn schedule_at_one_third() {
    let s = duality_schedule(102400.0, ALPHA, 3.0, 2.0).unwrap();
    assert_eq!(schedule_eps(1, ALPHA), 0.5);
    assert_eq!(s.eps[1], 0.5);
    assert!(s.q > 0.0 && s.q < 1.0);
    assert!(s.q_tail < 1e-12);
    s.check_invariants().unwrap();
    let floor = 2f64.powf((1.0 + ALPHA) / ALPHA) * 2.0;
    let first = (1..).find(|&k| 102400.0 / (k as f64 + 1.0) <= floor).unwrap();
    assert_eq!(s.n_bar, first);
    assert_eq!(s.m_dual, 2.0 / s.q);
    let rep = step3_check(ALPHA, 10_000);
    assert!(rep.holds, "{rep:?}");
}

#[test]
fn adjoint_annihilates_constants() {
    let g = synthetic();
    let spec = KernelSpec::shear();
    for (x, t) in [(0.5, 0.0), (3.0, 1.0), (40.0, 7.5)] {
        let v = adjoint_operator(&|_, _| 2.5, &g, &spec, 1.3, x, t).unwrap();
        assert!(v.abs() < 1e-12, "({x}, {t}): {v:e}");
    }
}

#[test]
fn adjoint_without_coagulation_is_transport() {
    let u = LogGrid::new(-5.0, 5.0, 101).unwrap();
    let g = MassProfile::from_density(u, |_| 0.0).unwrap();
    let phi = |x: f64, t: f64| x * x * (1.0 + t);
    let (b, x, t) = (1.2, 3.0, 0.5);
    let v = adjoint_operator(&phi, &g, &KernelSpec::additive(), b, x, t).unwrap();
    let want = x * x + b * x * 2.0 * x * (1.0 + t);
    assert!((v - want).abs() < 1e-6 * want, "{v} vs {want}");
}

#[test]
fn subsolution_is_a_subsolution_beyond_the_front() {
    let g = synthetic();
    let spec = KernelSpec::shear();
    let search = search_threshold(&g, &spec, 1e-8, 20).unwrap();
    let a = search.a.expect("threshold found");
    assert!(a >= 1.0);
    assert_eq!(search.trials.last().unwrap().a, a);
    assert!(search.trials.last().unwrap().max_adjoint <= 1e-8);

    let gamma = ALPHA * spec.beta0 / 2.0;
    let r = 16.0 * a;
    let phi = move |x: f64, t: f64| subsolution_value(x, t, r, ALPHA, gamma);
    let t = 0.3 * (r.powf(ALPHA) - a.powf(ALPHA)) / gamma;
    let front = characteristics(r, t, ALPHA, gamma).unwrap();
    for m in [1.2, 3.0] {
        let v = adjoint_operator(&phi, &g, &spec, 1.0, m * front, t).unwrap();
        assert!(v <= 1e-8, "x = {}: {v:e}", m * front);
    }
}
