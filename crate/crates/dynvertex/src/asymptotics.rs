//! Limit objects of the PEP current (heat profile, Gamma moments, asymmetric LLN shapes)
//! and finite-`T` Monte Carlo experiments comparing ensembles with them.

use crate::error::{Error, Result};
use crate::models::{run_ensemble_with, MCEstimate, ModelSpec, Observable, SystemState};
use crate::report::{Check, Report};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;
use std::str::FromStr;

/// Envelope below which the heat-profile integrand is truncated.
pub const HEAT_TRUNCATION: f64 = 1e-14;
/// Relative step-halving tolerance of the heat-profile quadrature.
const HEAT_TOL: f64 = 1e-13;
const HEAT_MAX_HALVINGS: usize = 12;

/// `H(s, r) = (1 / 2 pi i) int exp(r J z^2 / 2 - s (J + 1) z) dz / z^2` over `Re z = 1`,
/// by the trapezoid rule in `z = 1 + i t`, halving the step until stable.
/// The line is traversed upward, which makes `H` the positive heat solution.
pub fn heat_profile(s: f64, r: f64, j: u32) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() || !s.is_finite() || j == 0 {
        return Err(Error::InadmissibleParameters(format!("heat_profile needs r > 0, J >= 1 (s = {s}, r = {r}, J = {j})")));
    }
    let (rj, c) = (r * j as f64, s * (j + 1) as f64);
    // |integrand| <= exp(rJ/2 - c) exp(-rJ t^2 / 2) / (1 + t^2)
    let log_front = 0.5 * rj - c;
    let envelope = |t: f64| (log_front - 0.5 * rj * t * t).exp() / (1.0 + t * t);
    let mut lim = 1.0;
    while envelope(lim) >= HEAT_TRUNCATION {
        lim *= 1.25;
        if lim > 1e9 {
            return Err(Error::NotConverged(envelope(lim)));
        }
    }
    // the real part is even in t
    let f = |t: f64| {
        let z = crate::specfun::C64::new(1.0, t);
        ((0.5 * rj * z * z - c * z).exp() / (z * z)).re
    };
    let trap = |h: f64| -> f64 {
        let n = (lim / h).ceil() as usize;
        let terms: Vec<f64> = (1..=n).map(|i| f(i as f64 * h)).collect();
        h * (0.5 * f(0.0) + crate::models::pairwise_sum(&terms)) / PI
    };
    let mut h = 0.25;
    let mut prev = trap(h);
    for _ in 0..HEAT_MAX_HALVINGS {
        h *= 0.5;
        let next = trap(h);
        let diff = (next - prev).abs();
        if diff <= HEAT_TOL * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NotConverged((trap(h * 0.5) - prev).abs()))
}

/// `(a, b)`-Gamma law with density `b^a x^{a-1} e^{-b x} / Gamma(a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub a: f64,
    pub b: f64,
}

impl GammaLaw {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InadmissibleParameters(format!("Gamma law needs a, b > 0 (a = {a}, b = {b})")));
        }
        Ok(Self { a, b })
    }

    /// Limit law of the dynamical PEP: `a = gamma`, `b = sqrt(2 pi / (r J))`.
    pub fn dynamical(gamma: f64, r: f64, j: u32) -> Result<Self> {
        Self::new(gamma, (2.0 * PI / (r * j as f64)).sqrt())
    }
}

/// `E[chi^m] = b^{-m} (a)_m`.
pub fn gamma_moment(law: &GammaLaw, m: u32) -> f64 {
    (0..m).map(|i| (law.a + i as f64) / law.b).product()
}

/// Sample moments `E[chi^m]`, `m = 1..=m_max`, from a direct Gamma sampler.
pub fn gamma_sample_moments(law: &GammaLaw, m_max: u32, samples: usize, seed: u64) -> Result<Vec<MCEstimate>> {
    let dist = Gamma::new(law.a, 1.0 / law.b).map_err(|e| Error::InadmissibleParameters(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..samples).map(|_| dist.sample(&mut rng)).collect();
    Ok((1..=m_max).map(|m| MCEstimate::from_values(&draws.iter().map(|x| x.powi(m as i32)).collect::<Vec<_>>(), seed)).collect())
}

/// Sampler moments against [`gamma_moment`] at 4 standard errors.
pub fn gamma_sampler_check(law: &GammaLaw, m_max: u32, samples: usize, seed: u64) -> Result<Report> {
    let mut rep = Report::new("gamma_sampler");
    for (i, est) in gamma_sample_moments(law, m_max, samples, seed)?.iter().enumerate() {
        rep.push(sigma_check(&format!("gamma_moment_m{}", i + 1), est, gamma_moment(law, i as u32 + 1), 4.0));
    }
    Ok(rep)
}

fn sigma_check(name: &str, est: &MCEstimate, target: f64, sigmas: f64) -> Check {
    let resid = (est.mean - target).abs();
    Check::new(name, resid, sigmas * est.stderr).with_detail(json!({ "mean": est.mean, "stderr": est.stderr, "target": target, "samples": est.n_samples }))
}

/// Closed-form shapes of the `(q; 1)`-asymmetric PEP and the asymmetric corner growth model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// `m(eta)`: limit of `h_T(eta T) / T`.
    #[serde(rename = "m")]
    CurrentMean,
    /// `f(eta)`: fluctuation scale of `h_T(eta T)`.
    #[serde(rename = "f")]
    CurrentScale,
    /// `M(s)`: limit of `zeta_T(s T) / T`.
    #[serde(rename = "M")]
    HeightMean,
    /// `F(s)`: fluctuation scale of `zeta_T(s T)`.
    #[serde(rename = "F")]
    HeightScale,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Shape::CurrentMean),
            "f" => Ok(Shape::CurrentScale),
            "M" => Ok(Shape::HeightMean),
            "F" => Ok(Shape::HeightScale),
            _ => Err(Error::Config(format!("unknown shape {s:?} (expected m, f, M or F)"))),
        }
    }
}

/// Rarefaction interval of `shape`: `(1 - p, p)` for `eta`, `(-(2p - 1)/2, (2p - 1)/2)` for `s`,
/// with `p = 1 / (1 + q)`.
pub fn shape_domain(q: f64, shape: Shape) -> (f64, f64) {
    let p = 1.0 / (1.0 + q);
    match shape {
        Shape::CurrentMean | Shape::CurrentScale => (1.0 - p, p),
        Shape::HeightMean | Shape::HeightScale => (0.5 - p, p - 0.5),
    }
}

/// Evaluates a limit shape. The closed interval is accepted; the edges are the continuous limits.
pub fn lln_shapes(q: f64, shape: Shape, point: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InadmissibleParameters(format!("shapes need q in (0, 1), got {q}")));
    }
    let (lo, hi) = shape_domain(q, shape);
    let slack = 1e-12 * (hi - lo);
    if !(point >= lo - slack && point <= hi + slack) {
        return Err(Error::OutOfDomain(format!("{shape:?} at {point} outside [{lo}, {hi}] for q = {q}")));
    }
    let point = point.clamp(lo, hi);
    let sq = |x: f64| x.max(0.0).sqrt();
    Ok(match shape {
        Shape::CurrentMean => {
            let d = sq(1.0 - point) - sq(q * point);
            d * d / (1.0 - q)
        }
        Shape::CurrentScale => {
            let e = point;
            let a = (sq(e) - sq(q * (1.0 - e))).max(0.0);
            let b = (sq(1.0 - e) - sq(q * e)).max(0.0);
            q.cbrt() * a.powf(2.0 / 3.0) * b.powf(2.0 / 3.0) / ((1.0 - q).powf(4.0 / 3.0) * q.powf(1.0 / 6.0) * (e * (1.0 - e)).powf(1.0 / 6.0))
        }
        Shape::HeightMean => (q + 1.0 - 2.0 * sq(q * (1.0 - 4.0 * point * point))) / (1.0 - q),
        Shape::HeightScale => {
            let (l, r) = (0.5 - point, 0.5 + point);
            let a = (sq(l) - sq(q * r)).max(0.0);
            let b = (sq(r) - sq(q * l)).max(0.0);
            2.0 * q.cbrt() * a.powf(2.0 / 3.0) * b.powf(2.0 / 3.0) / ((1.0 - q).powf(4.0 / 3.0) * q.powf(1.0 / 6.0) * (r * l).powf(1.0 / 6.0))
        }
    })
}

/// Experiment kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Non-dynamical PEP current against `H(s, r)`.
    #[value(name = "heat")]
    HeatLln,
    /// Dynamical PEP factorial-moment product against Gamma moments.
    #[value(name = "gamma")]
    DynamicGamma,
    /// Fluctuation exponent of the asymmetric PEP current.
    KpzExponent,
    /// `f(eta)`-normalized fluctuations across `eta`.
    FCollapse,
    /// LLN, exponent and collapse from one asymmetric PEP ensemble.
    AsymPep,
    /// Dynamical corner height against `2 sqrt(s^2 + chi)`.
    CornerQuartic,
}

/// Heat LLN: `E[H_T(s, r)^m]` for the `(J; infinity)`-PEP against `H(s, r)^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatConfig {
    #[serde(rename = "J")]
    pub j: u32,
    pub r: f64,
    pub s: Vec<f64>,
    #[serde(rename = "T")]
    pub t: usize,
    pub samples: usize,
    pub moments: Vec<u32>,
    /// Relative tolerance of each moment.
    pub tolerance: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self { j: 1, r: 1.0, s: vec![-0.5, 0.0, 0.5], t: 1600, samples: 20_000, moments: vec![1], tolerance: 0.05 }
    }
}

/// Dynamical Gamma limit of the `(J; gamma)`-PEP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    #[serde(rename = "J")]
    pub j: u32,
    pub gamma: f64,
    pub r: f64,
    pub s: f64,
    /// Gated `T`.
    #[serde(rename = "T")]
    pub t: usize,
    /// Extra ungated `T` values recorded for the drift table.
    pub drift: Vec<usize>,
    pub samples: usize,
    pub moments: Vec<u32>,
    pub tolerance: f64,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self { j: 1, gamma: 3.0, r: 1.0, s: 0.0, t: 10_000, drift: vec![625, 1296, 2401, 4096, 6561], samples: 10_000, moments: vec![1, 2], tolerance: 0.15 }
    }
}

/// Asymmetric PEP ensemble shared by the exponent and collapse experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymConfig {
    pub q: f64,
    pub delta: f64,
    pub eta: Vec<f64>,
    /// Times `T`; the largest carries the LLN and collapse checks.
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    pub samples: usize,
    /// Relative LLN tolerance at the largest `T`.
    pub lln_tolerance: f64,
    pub slope_range: (f64, f64),
    /// Pairwise `max / min - 1` bound of the normalized stds.
    pub collapse_tolerance: f64,
}

impl Default for AsymConfig {
    fn default() -> Self {
        Self {
            q: 0.25,
            delta: 0.0,
            eta: vec![0.4, 0.5, 0.6],
            t: vec![500, 1000, 2000, 4000],
            samples: 4000,
            lln_tolerance: 0.02,
            slope_range: (0.23, 0.43),
            collapse_tolerance: 0.12,
        }
    }
}

/// `T^{-1/4} zeta_{rT}(s T^{1/4})` of the `J = 1` dynamical PEP against `2 sqrt(s^2 + chi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerConfig {
    pub gamma: f64,
    pub r: f64,
    pub s: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub samples: usize,
    /// Even moments `E[Z^{2m}]` compared.
    pub moments: Vec<u32>,
    pub tolerance: f64,
    /// Draws of the direct Gamma sampler check.
    pub gamma_samples: usize,
}

impl Default for CornerConfig {
    fn default() -> Self {
        Self { gamma: 3.0, r: 1.0, s: 0.0, t: 4096, samples: 4000, moments: vec![1, 2], tolerance: 0.15, gamma_samples: 200_000 }
    }
}

/// One experiment with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    HeatLln(HeatConfig),
    DynamicGamma(GammaConfig),
    KpzExponent(AsymConfig),
    FCollapse(AsymConfig),
    AsymPep(AsymConfig),
    CornerQuartic(CornerConfig),
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::HeatLln => Self::HeatLln(HeatConfig::default()),
            ExperimentKind::DynamicGamma => Self::DynamicGamma(GammaConfig::default()),
            ExperimentKind::KpzExponent => Self::KpzExponent(AsymConfig::default()),
            ExperimentKind::FCollapse => Self::FCollapse(AsymConfig::default()),
            ExperimentKind::AsymPep => Self::AsymPep(AsymConfig::default()),
            ExperimentKind::CornerQuartic => Self::CornerQuartic(CornerConfig::default()),
        }
    }

    /// Parses a JSON config for `kind`; missing fields take defaults, a mismatched tag is an error.
    pub fn from_json(kind: ExperimentKind, text: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let obj = v.as_object_mut().ok_or_else(|| Error::Config("experiment config must be a JSON object".into()))?;
        let tag = serde_json::to_value(Self::default_for(kind)).expect("serializable")["experiment"].clone();
        match obj.get("experiment") {
            None => {
                obj.insert("experiment".into(), tag);
            }
            Some(t) if *t == tag => {}
            Some(t) => return Err(Error::Config(format!("config is for experiment {t}, not {tag}"))),
        }
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::HeatLln(_) => ExperimentKind::HeatLln,
            Self::DynamicGamma(_) => ExperimentKind::DynamicGamma,
            Self::KpzExponent(_) => ExperimentKind::KpzExponent,
            Self::FCollapse(_) => ExperimentKind::FCollapse,
            Self::AsymPep(_) => ExperimentKind::AsymPep,
            Self::CornerQuartic(_) => ExperimentKind::CornerQuartic,
        }
    }
}

/// Runs one experiment. `parallel` does not change the numbers.
pub fn experiment(config: &ExperimentConfig, seed: u64, parallel: bool) -> Result<Report> {
    let mut rep = match config {
        ExperimentConfig::HeatLln(c) => heat_lln(c, seed, parallel)?,
        ExperimentConfig::DynamicGamma(c) => dynamic_gamma(c, seed, parallel)?,
        ExperimentConfig::KpzExponent(c) => asym_pep(c, seed, parallel, true, false)?,
        ExperimentConfig::FCollapse(c) => asym_pep(c, seed, parallel, false, true)?,
        ExperimentConfig::AsymPep(c) => appendix_asym_pep(c, seed, parallel)?,
        ExperimentConfig::CornerQuartic(c) => corner_quartic(c, seed, parallel)?,
    };
    rep.diagnostic("seed", json!(seed));
    Ok(rep)
}

fn need(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

/// `floor(J r T / (J + 1) + s T^scale)`, at least 1.
fn scaled_site(j: u32, r: f64, t: usize, s: f64, quarter: bool) -> usize {
    let tf = t as f64;
    let w = if quarter { tf.sqrt().sqrt() } else { tf.sqrt() };
    let x = (j as f64 * r * tf / (j as f64 + 1.0) + s * w).floor();
    x.max(1.0) as usize
}

fn scaled_time(r: f64, t: usize) -> usize {
    (r * t as f64).floor() as usize
}

/// Runs the ensemble and returns `values[trajectory][k][i] = h_{times[k]}(sites[k][i])`.
fn currents(spec: &ModelSpec, plan: &[(usize, Vec<usize>)], samples: usize, seed: u64, parallel: bool) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut times: Vec<usize> = plan.iter().map(|p| p.0).collect();
    times.sort_unstable();
    times.dedup();
    let (raw, _) = run_ensemble_with(spec, &times, samples, seed, parallel, |st: &SystemState| {
        Ok(plan.iter().filter(|p| p.0 == st.time).flat_map(|p| p.1.iter().map(|&x| st.current(x) as f64)).collect())
    })?;
    // regroup the flat per-time rows by plan entry
    Ok(raw
        .into_iter()
        .map(|rows| {
            let mut cursor = vec![0usize; times.len()];
            plan.iter()
                .map(|(t, sites)| {
                    let k = times.binary_search(t).expect("time recorded");
                    let out = rows[k][cursor[k]..cursor[k] + sites.len()].to_vec();
                    cursor[k] += sites.len();
                    out
                })
                .collect()
        })
        .collect())
}

fn estimate(values: impl Iterator<Item = f64>, seed: u64) -> MCEstimate {
    MCEstimate::from_values(&values.collect::<Vec<_>>(), seed)
}

fn est_json(e: &MCEstimate) -> serde_json::Value {
    json!({ "mean": e.mean, "stderr": e.stderr, "ci95": [e.mean - 1.96 * e.stderr, e.mean + 1.96 * e.stderr], "samples": e.n_samples })
}

fn rel_check(name: String, est: &MCEstimate, target: f64, tol: f64) -> Check {
    Check::new(name, (est.mean - target).abs() / target.abs(), tol).with_detail(json!({ "estimate": est_json(est), "target": target }))
}

fn heat_lln(c: &HeatConfig, seed: u64, parallel: bool) -> Result<Report> {
    need(c.j >= 1 && c.r > 0.0 && c.t >= 1 && c.samples >= 2 && !c.s.is_empty() && !c.moments.is_empty(), "heat_lln needs J >= 1, r > 0, T >= 1, samples >= 2, nonempty s and moments")?;
    let mut rep = Report::new("heat_lln");
    let closed = (c.r * c.j as f64 / (2.0 * PI)).sqrt();
    let h0 = heat_profile(0.0, c.r, c.j)?;
    rep.push(Check::new("heat_profile_at_zero", (h0 - closed).abs(), 1e-8).with_detail(json!({ "quadrature": h0, "closed": closed })));
    let spec = ModelSpec::JgammaPep { j: c.j, gamma: None };
    let time = scaled_time(c.r, c.t);
    let sites: Vec<usize> = c.s.iter().flat_map(|&s| {
        let x = scaled_site(c.j, c.r, c.t, s, false);
        [x, x + 1]
    }).collect();
    let vals = currents(&spec, &[(time, sites.clone())], c.samples, seed, parallel)?;
    let norm = (c.t as f64).sqrt();
    let mut profile = Vec::new();
    let mut shifted = Vec::new();
    for (i, &s) in c.s.iter().enumerate() {
        let target = heat_profile(s, c.r, c.j)?;
        let mut row = json!({ "s": s, "site": sites[2 * i], "H": target });
        for &m in &c.moments {
            let est = estimate(vals.iter().map(|v| (v[0][2 * i] / norm).powi(m as i32)), seed);
            let alt = estimate(vals.iter().map(|v| (v[0][2 * i + 1] / norm).powi(m as i32)), seed);
            let tm = target.powi(m as i32);
            rep.push(rel_check(format!("heat_lln_s{s}_m{m}"), &est, tm, c.tolerance));
            row[format!("mean_m{m}")] = json!(est.mean);
            row[format!("stderr_m{m}")] = json!(est.stderr);
            shifted.push(json!({ "s": s, "m": m, "site": sites[2 * i + 1], "estimate": est_json(&alt), "relative_error": (alt.mean - tm).abs() / tm }));
        }
        profile.push(row);
    }
    rep.diagnostic("profile", json!(profile));
    rep.diagnostic("site_plus_one", json!(shifted));
    rep.diagnostic("config", json!(c));
    Ok(rep)
}

/// `prod_{i<m} (H - i w)(H + c + w (gamma + i))` with `H = w h`, `w = T^{-1/4}`.
fn gamma_product(h: f64, w: f64, c: f64, gamma: f64, m: u32) -> f64 {
    let hh = w * h;
    (0..m).map(|i| (hh - i as f64 * w) * (hh + c + w * (gamma + i as f64))).product()
}

fn dynamic_gamma(c: &GammaConfig, seed: u64, parallel: bool) -> Result<Report> {
    need(c.j >= 1 && c.r > 0.0 && c.t >= 1 && c.samples >= 2 && !c.moments.is_empty(), "dynamic_gamma needs J >= 1, r > 0, T >= 1, samples >= 2, nonempty moments")?;
    need(c.gamma > (c.j + 1) as f64, "dynamic_gamma needs gamma > J + 1")?;
    let mut rep = Report::new("dynamic_gamma");
    let law = GammaLaw::dynamical(c.gamma, c.r, c.j)?;
    let spec = ModelSpec::JgammaPep { j: c.j, gamma: Some(c.gamma) };
    let mut ts: Vec<usize> = c.drift.iter().copied().filter(|&t| t != c.t && t >= 1).collect();
    ts.push(c.t);
    let plan: Vec<(usize, Vec<usize>)> = ts.iter().map(|&t| (scaled_time(c.r, t), vec![scaled_site(c.j, c.r, t, c.s, true)])).collect();
    let mut seen: Vec<usize> = plan.iter().map(|p| p.0).collect();
    seen.sort_unstable();
    seen.dedup();
    need(seen.len() == plan.len(), "dynamic_gamma drift times must give distinct floor(rT)")?;
    let vals = currents(&spec, &plan, c.samples, seed, parallel)?;
    let (jf, cs) = (c.j as f64, c.s * (c.j + 1) as f64);
    let mut drift = Vec::new();
    for (k, &t) in ts.iter().enumerate() {
        let w = 1.0 / (t as f64).sqrt().sqrt();
        let (n, x) = (plan[k].0 as f64, plan[k].1[0] as f64);
        // exact finite-T companion: the LHS of the PEP identity at site x
        let c_exact = w * ((jf + 1.0) * (x - 1.0) - n * jf);
        for &m in &c.moments {
            let target = gamma_moment(&law, m);
            let est = estimate(vals.iter().map(|v| gamma_product(v[k][0], w, cs, c.gamma, m)), seed);
            let exact = estimate(vals.iter().map(|v| gamma_product(v[k][0], w, c_exact, c.gamma, m)), seed);
            if t == c.t {
                rep.push(rel_check(format!("gamma_product_m{m}"), &est, target, c.tolerance));
            }
            drift.push(json!({
                "T": t, "m": m, "site": plan[k].1[0], "target": target,
                "estimate": est_json(&est), "relative_error": (est.mean - target) / target,
                "exact_site_form": est_json(&exact), "exact_site_relative_error": (exact.mean - target) / target,
            }));
        }
    }
    rep.diagnostic("drift", json!(drift));
    rep.diagnostic("gamma_law", json!(law));
    rep.diagnostic("config", json!(c));
    Ok(rep)
}

/// Sample standard deviation with a delta-method standard error.
fn std_with_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = crate::models::pairwise_sum(v) / n;
    let d2: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    let d4: Vec<f64> = d2.iter().map(|x| x * x).collect();
    let var = crate::models::pairwise_sum(&d2) / (n - 1.0);
    let m4 = crate::models::pairwise_sum(&d4) / n;
    let var_se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    let sd = var.sqrt();
    (sd, if sd > 0.0 { var_se / (2.0 * sd) } else { f64::NAN })
}

/// OLS slope of `y` on `x` with the standard error propagated from `y_se`.
fn slope(x: &[f64], y: &[f64], y_se: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let b = x.iter().zip(y).map(|(a, c)| (a - xm) * (c - ym)).sum::<f64>() / sxx;
    let var: f64 = x.iter().zip(y_se).map(|(a, s)| ((a - xm) / sxx).powi(2) * s * s).sum();
    (b, var.sqrt())
}

fn asym_pep(c: &AsymConfig, seed: u64, parallel: bool, exponent: bool, collapse: bool) -> Result<Report> {
    need(c.samples >= 4 && !c.eta.is_empty() && !c.t.is_empty(), "asymmetric PEP experiment needs samples >= 4, nonempty eta and T")?;
    need(!exponent || c.t.len() >= 2, "kpz_exponent needs at least two T values")?;
    let spec = ModelSpec::AsymPep { q: c.q, delta: c.delta };
    spec.validate()?;
    let mut ts = c.t.clone();
    ts.sort_unstable();
    ts.dedup();
    let (lo, hi) = shape_domain(c.q, Shape::CurrentMean);
    for &e in &c.eta {
        need(e > lo && e < hi, &format!("eta {e} outside ({lo}, {hi})"))?;
    }
    let plan: Vec<(usize, Vec<usize>)> = ts.iter().map(|&t| (t, c.eta.iter().map(|&e| ((e * t as f64).floor() as usize).max(1)).collect())).collect();
    let vals = currents(&spec, &plan, c.samples, seed, parallel)?;
    let mut rep = Report::new(match (exponent, collapse) {
        (true, false) => "kpz_exponent",
        (false, true) => "f_collapse",
        _ => "asymmetric_pep",
    });
    let kmax = ts.len() - 1;
    let mut table = Vec::new();
    let mut normalized = Vec::new();
    for (i, &e) in c.eta.iter().enumerate() {
        let m = lln_shapes(c.q, Shape::CurrentMean, e)?;
        let f = lln_shapes(c.q, Shape::CurrentScale, e)?;
        let mut log_t = Vec::new();
        let mut log_sd = Vec::new();
        let mut log_se = Vec::new();
        for (k, &t) in ts.iter().enumerate() {
            let v: Vec<f64> = vals.iter().map(|r| r[k][i]).collect();
            let mean = MCEstimate::from_values(&v.iter().map(|h| h / t as f64).collect::<Vec<_>>(), seed);
            let (sd, sd_se) = std_with_error(&v);
            let tf = t as f64;
            table.push(json!({
                "eta": e, "T": t, "site": plan[k].1[i], "mean_over_T": est_json(&mean), "m": m,
                "std": sd, "std_stderr": sd_se, "std_ci95": [sd - 1.96 * sd_se, sd + 1.96 * sd_se],
                "normalized_std": sd / (f * tf.cbrt()),
                "normalized_mean_shift": (m * tf - mean.mean * tf) / (f * tf.cbrt()),
            }));
            log_t.push(tf.ln());
            log_sd.push(sd.ln());
            log_se.push(sd_se / sd);
            if k == kmax {
                rep.push(rel_check(format!("lln_eta{e}"), &mean, m, c.lln_tolerance));
                normalized.push((e, sd / (f * tf.cbrt()), sd_se / (f * tf.cbrt())));
            }
        }
        if exponent {
            let (b, se) = slope(&log_t, &log_sd, &log_se);
            let (a, z) = c.slope_range;
            let resid = if b < a { a - b } else if b > z { b - z } else { 0.0 };
            rep.push(Check::new(format!("exponent_eta{e}"), resid, 0.0).with_detail(json!({ "slope": b, "stderr": se, "ci95": [b - 1.96 * se, b + 1.96 * se], "range": [a, z] })));
        }
    }
    if collapse {
        for a in 0..normalized.len() {
            for b in a + 1..normalized.len() {
                let (ea, va, sa) = normalized[a];
                let (eb, vb, sb) = normalized[b];
                let ratio = va.max(vb) / va.min(vb) - 1.0;
                rep.push(Check::new(format!("collapse_eta{ea}_eta{eb}"), ratio, c.collapse_tolerance).with_detail(json!({ "values": [va, vb], "stderr": [sa, sb] })));
            }
        }
    }
    rep.diagnostic("table", json!(table));
    rep.diagnostic("config", json!(c));
    Ok(rep)
}

/// Runs the asymmetric PEP ensemble once and returns both exponent and collapse checks.
pub fn appendix_asym_pep(c: &AsymConfig, seed: u64, parallel: bool) -> Result<Report> {
    asym_pep(c, seed, parallel, true, true)
}

/// `E[(2 sqrt(s^2 + chi))^{2m}] = 4^m sum_i C(m, i) s^{2(m - i)} E[chi^i]`.
pub fn quartic_moment(law: &GammaLaw, s: f64, m: u32) -> f64 {
    let mut binom = 1.0;
    let mut sum = 0.0;
    for i in 0..=m {
        sum += binom * (s * s).powi((m - i) as i32) * gamma_moment(law, i);
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    4f64.powi(m as i32) * sum
}

fn corner_quartic(c: &CornerConfig, seed: u64, parallel: bool) -> Result<Report> {
    need(c.r > 0.0 && c.t >= 1 && c.samples >= 2 && !c.moments.is_empty(), "corner_quartic needs r > 0, T >= 1, samples >= 2, nonempty moments")?;
    need(c.gamma > 2.0, "corner_quartic needs gamma > 2")?;
    let mut rep = Report::new("corner_quartic");
    let law = GammaLaw::dynamical(c.gamma, c.r, 1)?;
    let spec = ModelSpec::JgammaPep { j: 1, gamma: Some(c.gamma) };
    let w = (c.t as f64).sqrt().sqrt();
    let obs = Observable::Height { x: c.s * w };
    let (vals, _) = run_ensemble_with(&spec, &[scaled_time(c.r, c.t)], c.samples, seed, parallel, |st| Ok(vec![obs.eval(st, &spec)?]))?;
    for &m in &c.moments {
        let est = estimate(vals.iter().map(|v| (v[0][0] / w).powi(2 * m as i32)), seed);
        rep.push(rel_check(format!("corner_moment_2m{}", 2 * m), &est, quartic_moment(&law, c.s, m), c.tolerance));
    }
    let m_max = c.moments.iter().copied().max().unwrap_or(1);
    rep.extend(gamma_sampler_check(&law, m_max, c.gamma_samples, seed ^ 0x6a09_e667_f3bc_c909)?);
    rep.suite = "corner_quartic".into();
    rep.diagnostic("gamma_law", json!(law));
    rep.diagnostic("config", json!(c));
    Ok(rep)
}
