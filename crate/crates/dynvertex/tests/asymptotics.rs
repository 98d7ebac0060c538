use dynvertex::asymptotics::*;
use dynvertex::error::Error;
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::f64::consts::PI;

/// Independent oracle: `(J + 1) [-s Phi(-s / sigma) + sigma phi(s / sigma)]`, `sigma = sqrt(rJ) / (J + 1)`.
fn heat_closed(s: f64, r: f64, j: u32) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let c = (j + 1) as f64;
    let sigma = (r * j as f64).sqrt() / c;
    c * (-s * n.cdf(-s / sigma) + sigma * n.pdf(s / sigma))
}

#[test]
fn heat_profile_at_zero() {
    for (r, j) in [(1.0, 1), (2.0, 3)] {
        let h = heat_profile(0.0, r, j).unwrap();
        assert!((h - (r * j as f64 / (2.0 * PI)).sqrt()).abs() < 1e-8, "r {r} J {j}: {h}");
    }
}

#[test]
fn heat_profile_frozen_values() {
    // frozen from the closed-form oracle
    for (s, r, j, v) in [(0.0, 1.0, 1, 0.398_942_280_4), (0.0, 2.0, 3, 0.977_205_023_8), (-0.5, 1.0, 1, 1.083_315_470_6), (0.5, 1.0, 1, 0.083_315_470_6)] {
        let h = heat_profile(s, r, j).unwrap();
        assert!((h - v).abs() < 1e-9, "({s}, {r}, {j}): {h} vs {v}");
        assert!((h - heat_closed(s, r, j)).abs() < 1e-10);
    }
}

#[test]
fn heat_profile_initial_data_and_tail() {
    for j in [1, 2] {
        for s in [-0.5, -1.0] {
            let h = heat_profile(s, 1e-4, j).unwrap();
            assert!((h - (j + 1) as f64 * s.abs()).abs() < 1e-3, "J {j} s {s}: {h}");
        }
    }
    assert!(heat_profile(5.0, 1.0, 1).unwrap() < 1e-4);
    assert!(matches!(heat_profile(0.0, 0.0, 1), Err(Error::InadmissibleParameters(_))));
}

#[test]
fn heat_equation_by_finite_differences() {
    let h = 1e-3;
    for j in [1, 2, 3] {
        for &s in &[-0.7, -0.2, 0.0, 0.3, 0.8] {
            for &r in &[0.5, 1.0, 2.0] {
                let f = |s, r| heat_profile(s, r, j).unwrap();
                let dr = (f(s, r + h) - f(s, r - h)) / (2.0 * h);
                let dss = (f(s + h, r) - 2.0 * f(s, r) + f(s - h, r)) / (h * h);
                let c = (j + 1) as f64;
                let resid = 2.0 * c * c * dr - j as f64 * dss;
                assert!(resid.abs() < 1e-4, "J {j} s {s} r {r}: {resid}");
            }
        }
    }
}

#[test]
fn gamma_moments() {
    let law = GammaLaw::new(3.0, 2.5).unwrap();
    assert_eq!(gamma_moment(&law, 0), 1.0);
    assert!((gamma_moment(&law, 1) - 3.0 / 2.5).abs() < 1e-15);
    assert!((gamma_moment(&law, 2) - 12.0 / 6.25).abs() < 1e-14);
    let d = GammaLaw::dynamical(3.0, 1.0, 1).unwrap();
    assert!((gamma_moment(&d, 1) - 3.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
    assert!(GammaLaw::new(0.0, 1.0).is_err());
    let rep = gamma_sampler_check(&d, 3, 200_000, 12).unwrap();
    assert!(rep.pass(), "{rep:?}");
}

#[test]
fn quartic_moments_expand_the_square() {
    let law = GammaLaw::new(3.0, 2.0).unwrap();
    // E[4 (s^2 + chi)] and E[16 (s^2 + chi)^2]
    let s: f64 = 0.7;
    assert!((quartic_moment(&law, s, 1) - 4.0 * (s * s + 1.5)).abs() < 1e-13);
    let m2 = 16.0 * (s.powi(4) + 2.0 * s * s * 1.5 + 3.0);
    assert!((quartic_moment(&law, s, 2) - m2).abs() < 1e-12);
}

#[test]
fn shape_edge_values() {
    for q in [0.25, 0.5, 0.8] {
        let p = 1.0 / (1.0 + q);
        assert!(lln_shapes(q, Shape::CurrentMean, p).unwrap().abs() < 1e-15);
        assert!((lln_shapes(q, Shape::CurrentMean, 1.0 - p).unwrap() - (2.0 * p - 1.0)).abs() < 1e-14);
        for s in [0.5 - p, p - 0.5] {
            assert!((lln_shapes(q, Shape::HeightMean, s).unwrap() - 2.0 * s.abs()).abs() < 1e-12);
        }
        assert!(lln_shapes(q, Shape::CurrentScale, p).unwrap() < 1e-9);
        assert!(matches!(lln_shapes(q, Shape::CurrentMean, p + 0.01), Err(Error::OutOfDomain(_))));
        assert!(matches!(lln_shapes(q, Shape::HeightScale, 0.5), Err(Error::OutOfDomain(_))));
    }
    assert!(lln_shapes(1.0, Shape::CurrentMean, 0.5).is_err());
}

#[test]
fn corner_shapes_are_the_pep_shapes() {
    // zeta_T(sT) = 2 h_T(eta T) + 2 eta T - T at eta = s + 1/2
    let q = 0.25;
    for s in [-0.2, 0.0, 0.25] {
        let eta = s + 0.5;
        let m = lln_shapes(q, Shape::CurrentMean, eta).unwrap();
        let big_m = lln_shapes(q, Shape::HeightMean, s).unwrap();
        assert!((big_m - (2.0 * m + 2.0 * eta - 1.0)).abs() < 1e-12, "s {s}");
        let f = lln_shapes(q, Shape::CurrentScale, eta).unwrap();
        let big_f = lln_shapes(q, Shape::HeightScale, s).unwrap();
        assert!((big_f - 2.0 * f).abs() < 1e-12);
    }
}

#[test]
fn config_parsing() {
    let c = ExperimentConfig::from_json(ExperimentKind::HeatLln, r#"{"T": 100, "samples": 50}"#).unwrap();
    match &c {
        ExperimentConfig::HeatLln(h) => assert_eq!((h.t, h.samples, h.j), (100, 50, 1)),
        _ => panic!("{c:?}"),
    }
    assert_eq!(c.kind(), ExperimentKind::HeatLln);
    assert!(matches!(ExperimentConfig::from_json(ExperimentKind::HeatLln, r#"{"Tee": 1}"#), Err(Error::Config(_))));
    assert!(matches!(ExperimentConfig::from_json(ExperimentKind::HeatLln, r#"{"experiment": "f_collapse"}"#), Err(Error::Config(_))));
    let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn small_experiments_run_and_are_reproducible() {
    let heat = ExperimentConfig::HeatLln(HeatConfig { t: 100, samples: 400, moments: vec![1, 2], tolerance: 0.5, ..Default::default() });
    let a = experiment(&heat, 3, true).unwrap();
    let b = experiment(&heat, 3, false).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.checks.iter().any(|c| c.name == "heat_profile_at_zero" && c.pass));
    assert!(a.diagnostics.contains_key("site_plus_one"));

    let gamma = ExperimentConfig::DynamicGamma(GammaConfig { t: 256, drift: vec![16, 81], samples: 300, ..Default::default() });
    let g = experiment(&gamma, 5, true).unwrap();
    assert_eq!(g.checks.len(), 2);
    assert_eq!(g.diagnostics["drift"].as_array().unwrap().len(), 6);

    let asym = AsymConfig { t: vec![50, 100, 200], samples: 200, ..Default::default() };
    let k = experiment(&ExperimentConfig::KpzExponent(asym.clone()), 7, true).unwrap();
    let f = experiment(&ExperimentConfig::FCollapse(asym.clone()), 7, true).unwrap();
    let both = appendix_asym_pep(&asym, 7, false).unwrap();
    assert_eq!(both.checks.len(), 3 + 3 + 3);
    for c in k.checks.iter().chain(&f.checks) {
        assert!(both.checks.contains(c), "{c:?}");
    }

    let corner = ExperimentConfig::CornerQuartic(CornerConfig { t: 256, samples: 300, gamma_samples: 20_000, ..Default::default() });
    let c = experiment(&corner, 9, true).unwrap();
    assert!(c.checks.iter().any(|c| c.name == "gamma_moment_m2"));
}

#[test]
fn experiment_preconditions() {
    let bad = ExperimentConfig::DynamicGamma(GammaConfig { gamma: 1.5, ..Default::default() });
    assert!(matches!(experiment(&bad, 0, false), Err(Error::Config(_))));
    let bad = ExperimentConfig::FCollapse(AsymConfig { eta: vec![0.9], ..Default::default() });
    assert!(matches!(experiment(&bad, 0, false), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_profile_matches_closed_form(s in -2.0f64..2.0, r in 0.05f64..4.0, j in 1u32..4) {
        let h = heat_profile(s, r, j).unwrap();
        prop_assert!((h - heat_closed(s, r, j)).abs() < 1e-9 * h.abs().max(1.0));
        prop_assert!(h > 0.0);
        // H(s) - H(-s) = -(J + 1) s
        let m = heat_profile(-s, r, j).unwrap();
        prop_assert!((h - m + (j + 1) as f64 * s).abs() < 1e-9);
    }

    #[test]
    fn current_shapes_are_positive_inside(q in 0.05f64..0.95, u in 0.01f64..0.99) {
        let (lo, hi) = shape_domain(q, Shape::CurrentMean);
        let eta = lo + u * (hi - lo);
        let m = lln_shapes(q, Shape::CurrentMean, eta).unwrap();
        prop_assert!(m >= 0.0 && m <= 1.0 - eta);
        prop_assert!(lln_shapes(q, Shape::CurrentScale, eta).unwrap() > 0.0);
    }
}
