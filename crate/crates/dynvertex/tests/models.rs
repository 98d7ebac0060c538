use dynvertex::models::*;
use dynvertex::specfun::C64;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn total_variation(a: &ExactLaw, b: &ExactLaw) -> f64 {
    let mut m: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (k, p) in &a.support {
        *m.entry(k.clone()).or_default() += p;
    }
    for (k, p) in &b.support {
        *m.entry(k.clone()).or_default() -= p;
    }
    0.5 * m.values().map(|v| v.abs()).sum::<f64>()
}

fn qhahn(q: f64, delta: f64) -> ModelSpec {
    // b_x = q^{-A_x - J}, the admissible family
    ModelSpec::Qhahn { q, delta, b: vec![q.powi(-2), q.powi(-3), q.powi(-2)], j: vec![1] }
}

/// General model with `xi_x u_y = s_x`, which reduces to `qhahn` with `b = s^2`.
fn general_matching(q: f64, delta: f64) -> ModelSpec {
    let s: Vec<C64> = [q.powi(-2), q.powi(-3), q.powi(-2)].iter().map(|b| c(b.sqrt())).collect();
    ModelSpec::General { q: c(q), delta: c(delta), u: vec![c(1.0)], xi: s.clone(), s, j: vec![1] }
}

#[test]
fn first_pep_step_fills_site_one() {
    for j in 1..4 {
        let spec = ModelSpec::JgammaPep { j, gamma: Some(j as f64 + 3.0) };
        let mut st = SystemState::new(&spec, 1);
        step(&mut st, &spec).unwrap();
        assert_eq!(st.configuration(), vec![j]);
    }
}

#[test]
fn qhahn_first_step_is_deterministic() {
    let law = exact_law(&qhahn(0.5, -0.5), 1, 100).unwrap();
    assert_eq!(law.support, vec![(vec![1], 1.0)]);
}

#[test]
fn current_left_of_origin_is_total() {
    let spec = ModelSpec::JgammaPep { j: 2, gamma: None };
    let mut st = SystemState::new(&spec, 3);
    for _ in 0..20 {
        step(&mut st, &spec).unwrap();
    }
    assert_eq!(st.current(0), 40);
    assert_eq!(st.current(1), 40);
    assert_eq!(st.current(st.time + 2), 0);
}

#[test]
fn pep_two_step_probability() {
    let gamma = 10.0;
    let spec = ModelSpec::JgammaPep { j: 1, gamma: Some(gamma) };
    let law = exact_law(&spec, 2, 100).unwrap();
    let p = law.expectation(|c| config_current(c, 2) as f64);
    assert!((p - gamma / (2.0 * (gamma + 1.0))).abs() < 1e-14);
}

#[test]
fn general_reduces_to_qhahn() {
    for delta in [0.0, -0.5] {
        let qh = qhahn(0.5, delta);
        for (config, t0) in [(vec![], 0), (vec![1, 1], 2), (vec![2, 0, 1], 3)] {
            let a = exact_law_from(&qh, &config, t0, 2, 10_000).unwrap();
            assert!((a.total - 1.0).abs() < 1e-12);
            if delta != 0.0 {
                let b = exact_law_from(&general_matching(0.5, delta), &config, t0, 2, 10_000).unwrap();
                let tv = total_variation(&a, &b);
                assert!(tv < 1e-10, "delta {delta} config {config:?}: tv {tv}");
            }
        }
    }
}

#[test]
fn general_model_rejects_zero_delta() {
    assert!(general_matching(0.5, 0.0).validate().is_err());
}

#[test]
fn asymmetric_pep_is_a_qhahn_degeneration() {
    for (q, delta) in [(0.5, 0.0), (0.5, -0.5), (0.3, -2.0)] {
        let pep = exact_law(&ModelSpec::AsymPep { q, delta }, 4, 10_000).unwrap();
        let qh = exact_law(&ModelSpec::Qhahn { q, delta, b: vec![q.powi(-2)], j: vec![1] }, 4, 10_000).unwrap();
        let tv = total_variation(&pep, &qh);
        assert!(tv < 1e-12, "q {q} delta {delta}: tv {tv}");
    }
}

fn mc_matches_exact(spec: &ModelSpec, steps: usize, samples: usize, seed: u64) {
    let law = exact_law(spec, steps, 100_000).unwrap();
    let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    for i in 0..samples {
        let mut st = SystemState::new(spec, trajectory_seed(seed, i as u64));
        for _ in 0..steps {
            step(&mut st, spec).unwrap();
        }
        *counts.entry(st.configuration()).or_default() += 1;
    }
    for (k, n) in &counts {
        assert!(law.probability(k) > 0.0, "{spec:?}: sampled {k:?} outside the exact support");
        let _ = n;
    }
    for (k, p) in &law.support {
        let freq = *counts.get(k).unwrap_or(&0) as f64 / samples as f64;
        let sd = (p * (1.0 - p) / samples as f64).sqrt();
        assert!((freq - p).abs() <= 5.0 * sd + 1e-12, "{spec:?} config {k:?}: freq {freq} vs {p}");
    }
}

#[test]
fn sampler_matches_exact_law() {
    let specs = [
        ModelSpec::JgammaPep { j: 2, gamma: Some(5.0) },
        ModelSpec::JgammaPep { j: 1, gamma: None },
        ModelSpec::AsymPep { q: 0.5, delta: -0.5 },
        qhahn(0.5, -0.5),
        ModelSpec::Qhahn { q: 0.3, delta: 0.0, b: vec![0.3f64.powi(-4)], j: vec![2, 1] },
        general_matching(0.5, -0.5),
    ];
    for (i, spec) in specs.iter().enumerate() {
        mc_matches_exact(spec, 3, 100_000, 11 + i as u64);
    }
}

#[test]
fn constant_observable() {
    let spec = ModelSpec::JgammaPep { j: 1, gamma: Some(4.0) };
    let r = run_ensemble(&spec, 10, 200, 5, &[Observable::Constant], false).unwrap();
    assert_eq!(r.estimates[0][0].mean, 1.0);
    assert_eq!(r.estimates[0][0].stderr, 0.0);
    assert_eq!(r.estimates[0][0].n_samples, 200);
}

#[test]
fn ensembles_are_reproducible() {
    let spec = ModelSpec::AsymPep { q: 0.6, delta: -1.0 };
    let obs = [Observable::Current { x: 5 }, Observable::Height { x: 0.0 }];
    let a = run_ensemble_at(&spec, &[20, 40], 300, 9, &obs, true).unwrap();
    let b = run_ensemble_at(&spec, &[40, 20], 300, 9, &obs, false).unwrap();
    assert_eq!(a, b);
    let c = run_ensemble_at(&spec, &[20, 40], 300, 10, &obs, true).unwrap();
    assert_ne!(a.estimates, c.estimates);
}

#[test]
fn corner_view_starts_from_the_wedge() {
    let spec = ModelSpec::JgammaPep { j: 1, gamma: Some(3.0) };
    let mut st = SystemState::new(&spec, 0);
    assert_eq!(corner_view(&st, &spec).unwrap(), vec![(0.0, 0)]);
    step(&mut st, &spec).unwrap();
    assert_eq!(corner_view(&st, &spec).unwrap(), vec![(-0.5, 1), (0.5, 1)]);
    assert!(corner_view(&SystemState::new(&ModelSpec::Corner { p: 0.5 }, 0), &ModelSpec::Corner { p: 0.5 }).is_err());
}

/// Corner-model layout of a `J = 1` PEP configuration at time `t`.
fn pep_profile(config: &[u32], t: usize) -> Vec<i64> {
    let mut v = vec![(t + 2) as i64];
    for x in 1..=t + 1 {
        v.push(2 * config_current(config, x) as i64 + 2 * (x as i64 - 1) - t as i64);
    }
    v.push((t + 2) as i64);
    v
}

fn assert_corner_matches(corner: &ModelSpec, pep: &ModelSpec, t: usize) {
    let cl = corner_exact_law(corner, t, 100_000).unwrap();
    let pl = exact_law(pep, t, 100_000).unwrap();
    let mut m: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for (k, p) in &pl.support {
        *m.entry(pep_profile(k, t)).or_default() += p;
    }
    for (k, p) in &cl.support {
        *m.entry(k.clone()).or_default() -= p;
    }
    let tv: f64 = m.values().map(|v| v.abs()).sum();
    assert!(tv < 1e-12, "{corner:?} vs {pep:?} at t={t}: {tv}");
}

#[test]
fn corner_models_match_pep_views() {
    for t in 0..=4 {
        assert_corner_matches(&ModelSpec::Corner { p: 0.5 }, &ModelSpec::JgammaPep { j: 1, gamma: None }, t);
        assert_corner_matches(&ModelSpec::CornerDyn { gamma: 2.5 }, &ModelSpec::JgammaPep { j: 1, gamma: Some(2.5) }, t);
        assert_corner_matches(&ModelSpec::Corner { p: 1.0 / 1.4 }, &ModelSpec::AsymPep { q: 0.4, delta: 0.0 }, t);
    }
}

#[test]
fn height_observable_interpolates() {
    let spec = ModelSpec::JgammaPep { j: 1, gamma: None };
    let mut st = SystemState::new(&spec, 2);
    for _ in 0..6 {
        step(&mut st, &spec).unwrap();
    }
    let view = corner_view(&st, &spec).unwrap();
    for &(x, z) in &view {
        assert_eq!(Observable::Height { x }.eval(&st, &spec).unwrap(), z as f64);
    }
    let mid = Observable::Height { x: view[2].0 + 0.5 }.eval(&st, &spec).unwrap();
    assert_eq!(mid, 0.5 * (view[2].1 + view[3].1) as f64);
    assert_eq!(Observable::Height { x: -10.0 }.eval(&st, &spec).unwrap(), 20.0);
}

#[test]
fn observable_parsing() {
    assert_eq!("one".parse::<Observable>().unwrap(), Observable::Constant);
    assert_eq!("current:3".parse::<Observable>().unwrap(), Observable::Current { x: 3 });
    assert_eq!("height:-0.5".parse::<Observable>().unwrap(), Observable::Height { x: -0.5 });
    assert!("current".parse::<Observable>().is_err());
    assert!("nope:1".parse::<Observable>().is_err());
}

#[test]
fn spec_validation_and_serde() {
    assert!(ModelSpec::JgammaPep { j: 2, gamma: Some(3.0) }.validate().is_err());
    assert!(ModelSpec::AsymPep { q: 0.5, delta: 0.5 }.validate().is_err());
    assert!(ModelSpec::Corner { p: 1.5 }.validate().is_err());
    assert!(ModelSpec::CornerDyn { gamma: 1.0 }.validate().is_err());
    let spec: ModelSpec = serde_json::from_str(r#"{"model":"jgamma_pep","J":2,"gamma":7.5}"#).unwrap();
    assert_eq!(spec, ModelSpec::JgammaPep { j: 2, gamma: Some(7.5) });
    let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&qhahn(0.5, -0.5)).unwrap()).unwrap();
    assert_eq!(back, qhahn(0.5, -0.5));
}

#[test]
fn inadmissible_weights_are_reported() {
    // b < 0 leaves the positive region once delta != 0
    let spec = ModelSpec::Qhahn { q: 0.5, delta: -0.5, b: vec![-3.0], j: vec![1] };
    let mut err = None;
    for seed in 0..50 {
        let mut st = SystemState::new(&spec, seed);
        for _ in 0..6 {
            if let Err(e) = step(&mut st, &spec) {
                err = Some(e);
                break;
            }
        }
        if err.is_some() {
            break;
        }
    }
    assert!(matches!(err, Some(dynvertex::error::Error::InadmissibleWeights(_))), "{err:?}");
}

fn pep_spec() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        (1u32..4, proptest::option::of(0.1f64..20.0)).prop_map(|(j, g)| ModelSpec::JgammaPep { j, gamma: g.map(|g| g + (j + 1) as f64) }),
        (0.05f64..0.95, -5.0f64..=0.0).prop_map(|(q, delta)| ModelSpec::AsymPep { q, delta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pep_invariants(spec in pep_spec(), seed in any::<u64>(), steps in 1usize..60) {
        let mut st = SystemState::new(&spec, seed);
        let cap = match spec { ModelSpec::JgammaPep { j, .. } => j + 1, _ => 2 };
        let jin = spec.entering(1).unwrap() as u64;
        let mut prev: Vec<u64> = vec![0; steps + 3];
        for t in 1..=steps {
            step(&mut st, &spec).unwrap();
            prop_assert_eq!(st.total_particles, jin * t as u64);
            prop_assert_eq!(st.occupancy.iter().map(|&n| n as u64).sum::<u64>(), st.total_particles);
            prop_assert!(st.occupancy.iter().all(|&n| n <= cap));
            prop_assert!(st.configuration().len() <= t);
            for x in 1..steps + 3 {
                let h = st.current(x);
                prop_assert!(h >= prev[x - 1]);
                prev[x - 1] = h;
            }
            if cap == 2 && jin == 1 {
                let v = corner_view(&st, &spec).unwrap();
                for w in v.windows(2) {
                    prop_assert!([0, 2].contains(&(w[0].1 - w[1].1).abs()));
                }
                prop_assert!(v.iter().all(|&(x, z)| z as f64 >= 2.0 * x.abs()));
            }
        }
    }

    #[test]
    fn corner_invariants(p in 0.0f64..=1.0, gamma in proptest::option::of(1.01f64..10.0), seed in any::<u64>(), steps in 0usize..60) {
        let spec = match gamma { Some(g) => ModelSpec::CornerDyn { gamma: g }, None => ModelSpec::Corner { p } };
        let mut st = SystemState::new(&spec, seed);
        for _ in 0..steps {
            step(&mut st, &spec).unwrap();
        }
        prop_assert_eq!(st.heights.len(), steps + 3);
        for w in st.heights.windows(2) {
            prop_assert!([0, 2].contains(&(w[0] - w[1]).abs()));
        }
        for (x, z) in corner_profile(&st) {
            prop_assert!(z as f64 >= 2.0 * x.abs());
        }
    }

    #[test]
    fn qhahn_conserves_particles(seed in any::<u64>(), a in 1i32..3, j in 1u32..3, delta in -1.0f64..=0.0, steps in 1usize..15) {
        let q = 0.5;
        let spec = ModelSpec::Qhahn { q, delta, b: vec![q.powi(-a - j as i32)], j: vec![j] };
        let mut st = SystemState::new(&spec, seed);
        for t in 1..=steps {
            step(&mut st, &spec).unwrap();
            prop_assert_eq!(st.occupancy.iter().map(|&n| n as u64).sum::<u64>(), j as u64 * t as u64);
            prop_assert!(st.configuration().len() <= t);
        }
    }
}
