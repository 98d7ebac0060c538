mod common;

use dynvertex::specfun::EllipticContext;
use dynvertex::symfun::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
}

/// Trigonometric column spec from multiplicative parameters `q`, `s`, `u`.
fn stochastic_spec(q: f64, s: f64, u: f64, lambda: C64, rows: &[u32], columns: usize) -> ColumnSpec {
    let i = C64::i();
    let eta = i * q.ln() / (4.0 * PI);
    let ctx = EllipticContext::trigonometric(eta);
    let spin = C64::new(s, 0.0).ln() / (2.0 * PI * i) / eta;
    let v = -C64::new(u, 0.0).ln() / (2.0 * PI * i);
    ColumnSpec {
        lambda,
        z: vec![C64::new(0.0, 0.0); columns],
        spins: vec![spin; columns],
        rows: rows.iter().map(|&j| RowSpec { w: v + eta, j }).collect(),
        ctx,
    }
}

#[test]
fn empty_boundaries_give_one() {
    let mut r = common::rng(1);
    for elliptic in [false, true] {
        let spec = random_column_spec(&mut r, elliptic, &[], 4).unwrap();
        let e = Signature::empty();
        assert!(close(b_munu(&e, &e, &spec).unwrap(), C64::new(1.0, 0.0), 1e-14));
        assert!(close(d_munu(&e, &e, &spec).unwrap(), C64::new(1.0, 0.0), 1e-14));
    }
}

#[test]
fn structural_suites_pass() {
    for suite in [SymfunSuite::Symmetry, SymfunSuite::Branching, SymfunSuite::Fusion, SymfunSuite::StochasticB] {
        for seed in [0u64, 7, 2024] {
            let rep = verify_suite(suite, seed).unwrap();
            assert!(!rep.checks.is_empty());
            let bad: Vec<_> = rep.checks.iter().filter(|c| !c.pass).collect();
            assert!(bad.is_empty(), "{suite:?} seed {seed}: {bad:?}");
        }
    }
}

#[test]
fn d_rho_vanishes_when_last_part_is_zero() {
    let ctx = EllipticContext::trigonometric(C64::new(0.1, 0.02));
    let spins = vec![C64::new(1.3, 0.1); 4];
    let lam = C64::new(0.2, 0.1);
    assert_eq!(d_rho(&Signature::new(vec![2, 0]), lam, &spins, &ctx).unwrap(), C64::new(0.0, 0.0));
    assert_ne!(d_rho(&Signature::new(vec![2, 1]), lam, &spins, &ctx).unwrap(), C64::new(0.0, 0.0));
}

#[test]
fn signature_helpers() {
    let s = Signature::new(vec![1, 3, 3, 0]);
    assert_eq!(s.parts(), &[3, 3, 1, 0]);
    assert_eq!((s.first(), s.last(), s.size(), s.multiplicity(3)), (3, 0, 7, 2));
    assert_eq!(Signature::all(2, 0, 2).len(), 6);
}

#[test]
fn stochastic_mass_matches_term_sum() {
    let lam = C64::new(0.1, 0.3);
    for rows in [vec![1u32], vec![2], vec![1, 1]] {
        let spec = stochastic_spec(0.5, -0.5, 0.3, lam, &rows, 8);
        let rho = RhoSpecialization::from_spec(&spec).unwrap();
        let m = spec.height() as usize;
        let cutoff = 4;
        let mut sum = C64::new(0.0, 0.0);
        for mu in Signature::all(m, 0, cutoff) {
            sum += b_stochastic(&mu, &Signature::empty(), &spec, &rho).unwrap();
        }
        let mass = b_stochastic_mass(&Signature::empty(), &spec, cutoff).unwrap();
        assert!(close(mass, sum, 1e-10), "{rows:?}: {mass} vs {sum}");
    }
}

#[test]
fn stochastic_mass_tends_to_one() {
    let lam = C64::new(0.1, 0.3);
    for (q, s, u) in [(0.5, -0.5, 0.3), (0.4, -0.3, 0.5), (0.5, 0.5, 0.2)] {
        for rows in [vec![1u32], vec![2], vec![1, 1]] {
            let spec = stochastic_spec(q, s, u, lam, &rows, 31);
            let mass = b_stochastic_mass(&Signature::empty(), &spec, 30).unwrap();
            assert!((mass - 1.0).norm() < 1e-6, "q={q} s={s} u={u} rows={rows:?}: {mass}");
        }
    }
}

#[test]
fn stochastic_b_requires_trigonometric_mode() {
    let mut r = common::rng(3);
    let spec = random_column_spec(&mut r, true, &[C64::new(0.1, 0.0)], 3).unwrap();
    let e = Signature::empty();
    assert!(b_stochastic_vertex_form(&Signature::new(vec![1]), &e, &spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn symmetry_holds_at_random_seeds(seed in any::<u64>()) {
        let rep = verify_suite(SymfunSuite::Symmetry, seed).unwrap();
        prop_assert!(rep.pass(), "{:?}", rep.worst());
    }

    #[test]
    fn branching_holds_at_random_seeds(seed in any::<u64>()) {
        let rep = verify_suite(SymfunSuite::Branching, seed).unwrap();
        prop_assert!(rep.pass(), "{:?}", rep.worst());
    }
}
