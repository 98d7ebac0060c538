use dynvertex::specfun::*;
use dynvertex::Error;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    rel_diff(a, b, 1e-300) < tol
}

/// Jacobi triple product for theta_1 with nome e^{i pi tau}.
fn theta_product(z: C64, tau: C64) -> C64 {
    let nome = (C64::i() * PI * tau).exp();
    let mut p = 2.0 * (C64::i() * PI * tau / 4.0).exp() * (PI * z).sin();
    let cos2 = (2.0 * PI * z).cos();
    let mut q2n = c(1.0);
    for _ in 1..200 {
        q2n *= nome * nome;
        p *= (1.0 - q2n) * (1.0 - 2.0 * q2n * cos2 + q2n * q2n);
        if q2n.norm() < 1e-18 {
            break;
        }
    }
    p
}

#[test]
fn q_pochhammer_examples() {
    assert_eq!(q_pochhammer(c(0.7), c(0.3), 0).unwrap(), c(1.0));
    assert!(close(q_pochhammer(c(0.5), c(0.5), 2).unwrap(), c(0.375), 1e-15));
    assert!(close(q_pochhammer(c(0.25), c(0.5), -1).unwrap(), c(2.0), 1e-15));
}

#[test]
fn q_pochhammer_negative_pole() {
    // (a;q)_{-1} with a = q has the factor 1 - a/q = 0
    assert!(matches!(q_pochhammer(c(0.5), c(0.5), -1), Err(Error::SingularParameter(_))));
}

#[test]
fn rational_pochhammer_examples() {
    assert_eq!(rational_pochhammer(c(2.7), 0).unwrap(), c(1.0));
    assert!(close(rational_pochhammer(c(3.0), 2).unwrap(), c(12.0), 1e-15));
    let mut fact = 1.0;
    for m in 1..8 {
        fact *= m as f64;
        assert!(close(rational_pochhammer(c(1.0), m).unwrap(), c(fact), 1e-14));
    }
    assert!(close(rational_pochhammer(c(3.5), -2).unwrap(), c(1.0 / (2.5 * 1.5)), 1e-15));
}

#[test]
fn rational_pochhammer_is_q_limit() {
    let a = 2.3;
    for k in 0..5 {
        let q: f64 = 1.0 - 1e-6;
        let lim = q_pochhammer(c(q.powf(a)), c(q), k).unwrap() / (1.0 - q).powi(k as i32);
        assert!(close(lim, rational_pochhammer(c(a), k).unwrap(), 1e-4));
    }
}

#[test]
fn theta_examples() {
    let ctx = EllipticContext::elliptic(C64::i(), c(0.07)).unwrap();
    assert!(theta1(c(0.0), &ctx).unwrap().norm() < 1e-12);
    let z = c(0.3);
    assert!(close(theta1(z + 1.0, &ctx).unwrap(), -theta1(z, &ctx).unwrap(), 1e-13));
    let tau = C64::new(0.0, 10.0);
    let ctx10 = EllipticContext::elliptic(tau, c(0.07)).unwrap();
    let lhs = (-C64::i() * PI * tau / 4.0).exp() * theta1(z, &ctx10).unwrap();
    assert!((lhs - 2.0 * (0.3 * PI).sin()).norm() < 1e-8);
    assert!((lhs.re - 1.618034).abs() < 1e-5);
}

#[test]
fn theta_matches_triple_product() {
    for &tau in &[C64::i(), C64::new(0.0, 1.3), C64::new(0.3, 0.8), C64::new(-0.2, 0.05)] {
        let ctx = EllipticContext::elliptic(tau, c(0.07)).unwrap();
        for &z in &[c(0.13), C64::new(0.41, 0.2), C64::new(-0.77, -0.35), C64::new(2.2, 0.6)] {
            assert!(close(theta1(z, &ctx).unwrap(), theta_product(z, tau), 1e-11), "tau={tau} z={z}");
        }
    }
}

#[test]
fn theta_requires_elliptic_mode() {
    let ctx = EllipticContext::trigonometric(c(0.07));
    assert_eq!(theta1(c(0.1), &ctx), Err(Error::ModeError));
}

#[test]
fn trigonometric_degeneration_is_monotone() {
    let z = C64::new(0.37, 0.1);
    let mut last = f64::INFINITY;
    for t in [2.0, 4.0, 8.0, 16.0] {
        let tau = C64::new(0.0, t);
        let ctx = EllipticContext::elliptic(tau, c(0.05)).unwrap();
        let d = ((-C64::i() * PI * tau / 4.0).exp() * theta1(z, &ctx).unwrap() - 2.0 * (PI * z).sin()).norm();
        assert!(d < last || d < 1e-15, "Im tau={t}: {d} vs {last}");
        last = d;
    }
    assert!(last < 1e-15);
}

#[test]
fn context_validation() {
    assert!(EllipticContext::elliptic(c(1.0), c(0.1)).is_err());
    assert!(EllipticContext::new(Mode::Trigonometric, c(0.1), 1e-3, 100).is_err());
    assert!(EllipticContext::new(Mode::Trigonometric, c(0.1), 1e-10, 10).is_err());
    let ctx = EllipticContext::trigonometric(c(0.1));
    assert!(close(ctx.q(), (-4.0 * PI * C64::i() * 0.1).exp(), 1e-15));
}

#[test]
fn f_eval_examples() {
    let trig = EllipticContext::trigonometric(c(0.07));
    assert!(close(f_eval(c(0.5), &trig), c(1.0), 1e-15));
    let ell = EllipticContext::elliptic(C64::i(), c(0.07)).unwrap();
    assert!(f_eval(c(0.0), &ell).norm() < 1e-12);
}

fn riemann_residual(ctx: &EllipticContext, w: C64, x: C64, y: C64, z: C64) -> f64 {
    let f = |u: C64| ctx.f(u);
    let lhs = f(x + z) * f(x - z) * f(y + w) * f(y - w);
    let t1 = f(x + y) * f(x - y) * f(z + w) * f(z - w);
    let t2 = f(x + w) * f(x - w) * f(y + z) * f(y - z);
    (lhs - t1 - t2).norm() / lhs.norm().max(t1.norm()).max(t2.norm())
}

#[test]
fn riemann_identity_example() {
    let ctx = EllipticContext::elliptic(C64::new(0.0, 1.3), c(0.07)).unwrap();
    let r = riemann_residual(&ctx, c(0.11), c(0.23), c(0.37), C64::new(0.41, 0.2));
    assert!(r < 1e-10, "{r}");
}

#[test]
fn elliptic_pochhammer_examples() {
    let ctx = EllipticContext::elliptic(C64::i(), c(0.07)).unwrap();
    let eta = ctx.eta();
    let a = c(0.31);
    assert_eq!(ctx.ep(a, 0).unwrap(), c(1.0));
    let m = 3;
    let lhs = ctx.ep(a, m).unwrap();
    let rhs = ctx.ep(2.0 * eta * (m as f64 - 1.0) - a, m).unwrap() * (-1.0f64).powi(m as i32);
    assert!(close(lhs, rhs, 1e-12));
    let (m, k) = (4, 2);
    let lhs = ctx.ep(a, m - k).unwrap() * ctx.ep(a - 2.0 * eta * k as f64, k).unwrap();
    assert!(close(lhs, ctx.ep(a, m).unwrap(), 1e-12));
}

#[test]
fn elliptic_pochhammer_negative_index() {
    let ctx = EllipticContext::trigonometric(c(0.07));
    let a = C64::new(0.31, 0.05);
    let v = ctx.ep(a, -2).unwrap();
    let expect = 1.0 / (ctx.f(a + 0.14) * ctx.f(a + 0.28));
    assert!(close(v, expect, 1e-14));
}

/// Corrected forms of the three elliptic Pochhammer identities for all integer m, k.
#[test]
fn elliptic_pochhammer_identities_all_integers() {
    for ctx in [
        EllipticContext::elliptic(C64::i(), C64::new(0.061, 0.0)).unwrap(),
        EllipticContext::elliptic(C64::new(0.0, 1.3), C64::new(0.043, 0.01)).unwrap(),
        EllipticContext::trigonometric(C64::new(0.052, 0.0)),
    ] {
        let eta = ctx.eta();
        let a = C64::new(0.317, 0.04);
        for m in -3i64..=5 {
            let first = (-1.0f64).powi(m as i32) * ctx.ep(2.0 * eta * (m - 1) as f64 - a, m).unwrap();
            assert!(close(ctx.ep(a, m).unwrap(), first, 1e-11), "first m={m}");
            for k in -3i64..=5 {
                let am = ctx.ep(a, m).unwrap();
                let mid = am / ctx.ep(a - 2.0 * eta * (m - k) as f64, k).unwrap();
                let right = (-1.0f64).powi(k as i32) * am / ctx.ep(2.0 * eta * (m - 1) as f64 - a, k).unwrap();
                let lhs = ctx.ep(a, m - k).unwrap();
                assert!(close(lhs, mid, 1e-11), "second m={m} k={k}");
                assert!(close(lhs, right, 1e-11), "second' m={m} k={k}");
                let third = ctx.ep(a, k).unwrap() * ctx.ep(a - 2.0 * eta * (k + 1) as f64, m - k).unwrap();
                let third_r = ctx.ep(a, m + 1).unwrap() / ctx.f(a - 2.0 * eta * k as f64);
                assert!(close(third, third_r, 1e-11), "third m={m} k={k}");
            }
        }
    }
}

/// The displayed third identity (ascending shifts) fails; the descending form above holds.
#[test]
fn elliptic_third_identity_ascending_shift_fails() {
    let ctx = EllipticContext::trigonometric(c(0.052));
    let eta = ctx.eta();
    let a = c(0.317);
    let (m, k) = (3i64, 1i64);
    let ascending = ctx.ep(a, k).unwrap() * ctx.ep(a + 2.0 * eta * (k + 1) as f64, m - k).unwrap();
    let rhs = ctx.ep(a, m + 1).unwrap() / ctx.f(a + 2.0 * eta * k as f64);
    assert!(rel_diff(ascending, rhs, 1e-300) > 1e-3);
}

/// The product of (a;q)_k and (-a;q)_k has base q^2, not the displayed base q.
#[test]
fn q_square_identity_base() {
    let (a, q) = (c(0.3), c(0.5));
    let lhs = q_pochhammer(a, q, 2).unwrap() * q_pochhammer(-a, q, 2).unwrap();
    assert!(close(lhs, q_pochhammer(a * a, q * q, 2).unwrap(), 1e-14));
    assert!(rel_diff(lhs, q_pochhammer(a * a, q, 2).unwrap(), 1e-300) > 1e-3);
}

#[test]
fn akhypergeometric_bridge() {
    let eta = c(0.047);
    let ctx = EllipticContext::trigonometric(eta);
    let q = ctx.q();
    for &a in &[C64::new(0.21, 0.03), C64::new(-0.33, 0.1), C64::new(0.05, -0.2)] {
        let big_a = (2.0 * PI * C64::i() * a).exp();
        let sqrt_a = big_a.sqrt();
        for k in -3i64..=5 {
            let qpow = (-4.0 * PI * C64::i() * eta * (-(k * (k - 1)) as f64 / 4.0)).exp();
            let rhs = (C64::i() / (2.0 * sqrt_a)).powi(k as i32) * qpow * q_pochhammer(big_a, q, k).unwrap();
            assert!(close(ctx.ep(a, k).unwrap(), rhs, 1e-10), "a={a} k={k}");
        }
    }
}

#[test]
fn basic_hyp_examples() {
    let q = c(0.4);
    assert_eq!(basic_hyp(&[c(0.3), c(0.2)], &[c(0.5)], q, c(0.0), None).unwrap(), c(1.0));
    assert!(close(basic_hyp(&[c(1.0), c(0.2)], &[c(0.5)], q, c(0.7), None).unwrap(), c(1.0), 1e-15));
    // terminating 2phi1 with numerator q^{-2}: explicit three-term sum
    let (a, b, d, z) = (q.powi(-2), c(0.3), c(0.5), c(0.7));
    let t1 = z * (1.0 - a) * (1.0 - b) / ((1.0 - q) * (1.0 - d));
    let t2 = t1 * z * (1.0 - a * q) * (1.0 - b * q) / ((1.0 - q * q) * (1.0 - d * q));
    let expect = 1.0 + t1 + t2;
    assert!(close(basic_hyp(&[a, b], &[d], q, z, None).unwrap(), expect, 1e-13));
    assert!(close(basic_hyp(&[a, b], &[d], q, z, Some(2)).unwrap(), expect, 1e-13));
}

#[test]
fn basic_hyp_q_binomial_theorem() {
    // 1phi0(a;;q,z) = (az;q)_inf/(z;q)_inf
    let (a, q, z) = (C64::new(0.3, 0.1), c(0.45), C64::new(0.2, -0.1));
    let inf = |x: C64| q_pochhammer(x, q, 200).unwrap();
    let expect = inf(a * z) / inf(z);
    assert!(close(basic_hyp(&[a], &[], q, z, None).unwrap(), expect, 1e-13));
}

fn rogers_rhs(a: C64, b: C64, cc: C64, q: C64, n: i64) -> C64 {
    q_pochhammer(a * q, q, n).unwrap() * q_pochhammer(a * q / (b * cc), q, n).unwrap()
        / (q_pochhammer(a * q / b, q, n).unwrap() * q_pochhammer(a * q / cc, q, n).unwrap())
}

#[test]
fn rogers_identity_example() {
    let (a, b, cc, q) = (c(0.2), c(0.45), c(0.6), c(0.35));
    for n in 0..=5i64 {
        let z = a * q.powi(n as i32 + 1) / (b * cc);
        let lhs = vwp_basic_w(a, &[b, cc, q.powi(-(n as i32))], q, z, Some(n as usize)).unwrap();
        assert!(close(lhs, rogers_rhs(a, b, cc, q, n), 1e-12), "n={n}");
        let auto = vwp_basic_w(a, &[b, cc, q.powi(-(n as i32))], q, z, None).unwrap();
        assert!(close(auto, lhs, 1e-14));
    }
    assert!(close(vwp_basic_w(a, &[b, cc, c(1.0)], q, c(0.77), None).unwrap(), c(1.0), 1e-15));
}

#[test]
fn rogers_n1_hand_expansion() {
    let (a, b, cc, q) = (c(0.2), c(0.45), c(0.6), c(0.35));
    let z = a * q * q / (b * cc);
    let qm1 = 1.0 / q;
    let hand = 1.0
        + z * (1.0 - a) * (1.0 - a * q * q) * (1.0 - b) * (1.0 - cc) * (1.0 - qm1)
            / ((1.0 - q) * (1.0 - a) * (1.0 - q * a / b) * (1.0 - q * a / cc) * (1.0 - q * q * a));
    assert!(close(hand, rogers_rhs(a, b, cc, q, 1), 1e-13));
    assert!(close(vwp_basic_w(a, &[b, cc, qm1], q, z, Some(1)).unwrap(), hand, 1e-13));
}

fn jackson_check(ctx: &EllipticContext, a: C64, b: C64, cc: C64, d: C64, n: usize) -> f64 {
    let eta = ctx.eta();
    let nf = n as f64;
    let e = 2.0 * a - 2.0 * eta - b - cc - d - 2.0 * eta * nf;
    let lhs = vwp_elliptic_v(a, &[b, cc, d, e, 2.0 * eta * nf], c(1.0), Some(n), ctx).unwrap();
    let ep = |x: C64| ctx.ep(x, n as i64).unwrap();
    let e2 = 2.0 * eta;
    let rhs = ep(a - e2) * ep(a - b - cc - e2) * ep(a - b - d - e2) * ep(a - cc - d - e2)
        / (ep(a - b - e2) * ep(a - cc - e2) * ep(a - d - e2) * ep(a - b - cc - d - e2));
    rel_diff(lhs, rhs, 1e-300)
}

#[test]
fn jackson_identity_example() {
    let ctx = EllipticContext::elliptic(C64::new(0.0, 1.1), c(0.06)).unwrap();
    for n in 0..=4 {
        let r = jackson_check(&ctx, c(0.9), c(0.21), c(0.17), c(0.13), n);
        assert!(r < 1e-10, "n={n} r={r}");
    }
    let trig = EllipticContext::trigonometric(c(0.06));
    assert!(jackson_check(&trig, c(0.9), c(0.21), c(0.17), c(0.13), 3) < 1e-10);
}

#[test]
fn elliptic_series_requires_termination() {
    let ctx = EllipticContext::trigonometric(c(0.06));
    assert_eq!(vwp_elliptic_v(c(0.5), &[c(0.1)], c(1.0), None, &ctx), Err(Error::NonTerminating));
    assert_eq!(vwp_elliptic_v(c(0.5), &[c(0.1), c(0.0)], c(1.0), Some(0), &ctx).unwrap(), c(1.0));
}

fn arb_c(lo: f64, hi: f64) -> impl Strategy<Value = C64> {
    (lo..hi, -0.3f64..0.3).prop_map(|(r, i)| C64::new(r, i))
}

fn arb_q() -> impl Strategy<Value = C64> {
    (0.2f64..0.8, -1.0f64..1.0).prop_map(|(m, t)| C64::from_polar(m, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splicing(a in arb_c(0.2, 2.0), q in arb_q(), k in -4i64..=4, m in -4i64..=4) {
        let lhs = q_pochhammer(a, q, k + m);
        let rhs = q_pochhammer(a, q, k).and_then(|x| Ok(x * q_pochhammer(a * q.powi(k as i32), q, m)?));
        if let (Ok(l), Ok(r)) = (lhs, rhs) {
            prop_assert!(close(l, r, 1e-12));
        }
    }

    #[test]
    fn q_identities(a in arb_c(0.2, 2.0), q in arb_q(), k in -3i64..=3, m in -3i64..=3) {
        let p = |x: C64, n: i64| q_pochhammer(x, q, n).unwrap();
        let qp = |n: i64| q.powi(n as i32);
        // second: shifted products
        if (1.0 - qp(2 * m - 2 * k) * a).norm() > 1e-3 && k >= 0 && m - k >= 0 {
            let lhs = p(qp(m - k) * a, m - k) * p(qp(2 * m - 2 * k + 1) * a, k);
            let rhs = p(qp(m - k) * a, m + 1) / (1.0 - qp(2 * m - 2 * k) * a);
            prop_assert!(close(lhs, rhs, 1e-11));
        }
        // third and fourth, for nonnegative m, k
        if k >= 0 && m >= 0 {
            let den = p(1.0 / (qp(m - 1) * a), k);
            prop_assume!(den.norm() > 1e-6);
            let lhs = p(qp(-k) * a, m);
            let rhs = p(a, m) * p(q / a, k) / (qp(m * k) * den);
            prop_assert!(close(lhs, rhs, 1e-10));
            if m >= k {
                let lhs = p(a, m - k);
                let rhs = q.powi(((k + 1) * k / 2 - m * k) as i32) / (-a).powi(k as i32) * p(a, m) / p(1.0 / (a * qp(m - 1)), k);
                prop_assert!(close(lhs, rhs, 1e-10));
            }
        }
        // fifth and sixth
        if k >= 0 {
            let q2 = q * q;
            prop_assert!(close(p(a, k) * p(-a, k), q_pochhammer(a * a, q2, k).unwrap(), 1e-12));
            let lhs = q_pochhammer(q2 * a, q2, k).unwrap() / q_pochhammer(a, q2, k).unwrap();
            prop_assert!(close(lhs, (1.0 - qp(2 * k) * a) / (1.0 - a), 1e-11));
            prop_assert!(close(lhs, (1.0 / a - qp(2 * k)) / (1.0 / a - 1.0), 1e-11));
        }
    }

    #[test]
    fn riemann_identity_random(w in arb_c(-1.0, 1.0), x in arb_c(-1.0, 1.0), y in arb_c(-1.0, 1.0), z in arb_c(-1.0, 1.0), ell in any::<bool>()) {
        let ctx = if ell {
            EllipticContext::elliptic(C64::new(0.0, 1.3), c(0.07)).unwrap()
        } else {
            EllipticContext::trigonometric(c(0.07))
        };
        prop_assert!(riemann_residual(&ctx, w, x, y, z) < 1e-10);
    }

    #[test]
    fn jackson_random(a in arb_c(0.5, 1.2), b in arb_c(0.05, 0.3), cc in arb_c(0.05, 0.3), d in arb_c(0.05, 0.3), eta in 0.03f64..0.1, n in 0usize..=4, ell in any::<bool>()) {
        let ctx = if ell {
            EllipticContext::elliptic(C64::i(), c(eta)).unwrap()
        } else {
            EllipticContext::trigonometric(c(eta))
        };
        prop_assert!(jackson_check(&ctx, a, b, cc, d, n) < 1e-9);
    }

    #[test]
    fn rogers_random(a in arb_c(0.1, 0.9), b in arb_c(0.2, 0.9), cc in arb_c(0.2, 0.9), q in arb_q(), n in 0i64..=5) {
        let z = a * q.powi(n as i32 + 1) / (b * cc);
        let lhs = vwp_basic_w(a, &[b, cc, q.powi(-(n as i32))], q, z, Some(n as usize)).unwrap();
        prop_assert!(close(lhs, rogers_rhs(a, b, cc, q, n), 1e-9));
    }
}

#[test]
fn randomized_suites() {
    for suite in SpecfunSuite::ALL {
        let rep = verify_suite(suite, 2024).unwrap();
        for c in &rep.checks {
            eprintln!("{} {:e}", c.name, c.residual);
        }
        assert!(rep.pass(), "{rep:?}");
    }
}
