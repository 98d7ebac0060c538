//! Seeded samplers for the dynamical particle systems and an exact small-system oracle.
//!
//! Sites are `1, 2, ...`; `occupancy[k - 1]` holds the particle count at site `k`.
//! Row-update models process row `y = t + 1` at time step `t -> t + 1`, sweeping sites
//! left to right with the vertex `(x, y)` using `kappa_{x, y - 1}`.

use crate::error::{Error, Result};
use crate::specfun::C64;
use crate::weights::{phi_row_real, psi, ArrowConfig, PsiParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

/// Negative weights down to `-NEG_TOL` are clamped to zero.
pub const NEG_TOL: f64 = 1e-12;
/// Allowed deviation of a local weight vector from total mass one.
pub const SUM_TOL: f64 = 1e-10;
/// Allowed imaginary part of a complex weight.
pub const IMAG_TOL: f64 = 1e-10;
/// Hard cap on the number of sites a row sweep may visit.
pub const MAX_SITES: usize = 1 << 20;

/// Model variant and parameters. Per-index lists (`b`, `J`, `u`, `xi`, `s`) are 1-based;
/// indices past the end reuse the last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Dynamical stochastic higher spin vertex model with `psi` weights.
    General {
        q: C64,
        delta: C64,
        u: Vec<C64>,
        xi: Vec<C64>,
        s: Vec<C64>,
        #[serde(rename = "J")]
        j: Vec<u32>,
    },
    /// Dynamical q-Hahn boson model, `c_y = q^{J_y}`, `a_{x,y} = b_x c_y`.
    Qhahn {
        q: f64,
        delta: f64,
        b: Vec<f64>,
        #[serde(rename = "J")]
        j: Vec<u32>,
    },
    /// Dynamical `(J; gamma)`-PEP; `gamma = None` is the `(J; infinity)`-PEP.
    JgammaPep {
        #[serde(rename = "J")]
        j: u32,
        gamma: Option<f64>,
    },
    /// Dynamical `(q; 1; delta)`-asymmetric PEP.
    AsymPep { q: f64, delta: f64 },
    /// Midpoint corner growth with up-probability `p`.
    Corner { p: f64 },
    /// Dynamical midpoint corner growth, up-probability `(1 - (gamma + zeta)^{-1}) / 2`.
    CornerDyn { gamma: f64 },
}

fn at<T: Copy>(v: &[T], k: usize) -> T {
    v[(k.max(1) - 1).min(v.len() - 1)]
}

impl ModelSpec {
    /// Static admissibility; weight positivity is checked lazily while sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InadmissibleParameters(m.into()));
        match self {
            ModelSpec::General { q, delta, u, xi, s, j } => {
                if u.is_empty() || xi.is_empty() || s.is_empty() || j.is_empty() {
                    return bad("parameter lists must be nonempty");
                }
                if j.contains(&0) {
                    return bad("J_y must be positive");
                }
                if delta.norm() == 0.0 {
                    return bad("psi weights need kappa != 0; use delta != 0");
                }
                if !(q.norm() > 0.0 && q.norm() < 1.0) {
                    return bad("need 0 < |q| < 1");
                }
            }
            ModelSpec::Qhahn { q, delta, b, j } => {
                if b.is_empty() || j.is_empty() {
                    return bad("parameter lists must be nonempty");
                }
                if j.contains(&0) {
                    return bad("J_y must be positive");
                }
                if !(*q > 0.0 && *q < 1.0) || !delta.is_finite() || b.iter().any(|x| !x.is_finite() || *x == 0.0) {
                    return bad("need 0 < q < 1, finite delta and nonzero finite b");
                }
            }
            ModelSpec::JgammaPep { j, gamma } => {
                if *j == 0 {
                    return bad("J must be positive");
                }
                if let Some(g) = gamma {
                    if !(*g > (*j + 1) as f64) {
                        return bad("need gamma > J + 1");
                    }
                }
            }
            ModelSpec::AsymPep { q, delta } => {
                if !(*q > 0.0 && *q < 1.0) || !(*delta <= 0.0) {
                    return bad("need 0 < q < 1 and delta <= 0");
                }
            }
            ModelSpec::Corner { p } => {
                if !(0.0..=1.0).contains(p) {
                    return bad("need p in [0, 1]");
                }
            }
            ModelSpec::CornerDyn { gamma } => {
                if !(*gamma > 1.0) {
                    return bad("need gamma > 1");
                }
            }
        }
        Ok(())
    }

    fn is_corner(&self) -> bool {
        matches!(self, ModelSpec::Corner { .. } | ModelSpec::CornerDyn { .. })
    }

    /// `J_y` entering at row `y`, when defined.
    pub fn entering(&self, y: usize) -> Option<u32> {
        match self {
            ModelSpec::General { j, .. } | ModelSpec::Qhahn { j, .. } => Some(at(j, y)),
            ModelSpec::JgammaPep { j, .. } => Some(*j),
            ModelSpec::AsymPep { .. } => Some(1),
            _ => None,
        }
    }
}

/// One trajectory. Particle models use `occupancy`; corner models use `heights`.
#[derive(Clone, Debug)]
pub struct SystemState {
    pub time: usize,
    /// `occupancy[k - 1]` = particles at site `k`; trailing zeros allowed.
    pub occupancy: Vec<u32>,
    pub total_particles: u64,
    /// Corner models: `heights[i]` = `zeta_t(x)` at `2x = -(t + 2) + 2i`.
    pub heights: Vec<i64>,
    pub rng: ChaCha8Rng,
    /// Number of negative weights clamped to zero so far.
    pub clamped: u64,
    /// PEP models: sites `1..=full_prefix` are at capacity.
    full_prefix: usize,
}

impl SystemState {
    pub fn new(spec: &ModelSpec, seed: u64) -> Self {
        let heights = if spec.is_corner() { vec![2, 0, 2] } else { Vec::new() };
        Self { time: 0, occupancy: Vec::new(), total_particles: 0, heights, rng: ChaCha8Rng::seed_from_u64(seed), clamped: 0, full_prefix: 0 }
    }

    /// Current `h_t(x)`: particles at or to the right of site `x >= 1`.
    pub fn current(&self, x: usize) -> u64 {
        let x = x.max(1);
        self.occupancy.iter().skip(x - 1).map(|&n| n as u64).sum()
    }

    pub fn occupancy_at(&self, x: usize) -> u32 {
        if x == 0 {
            return 0;
        }
        self.occupancy.get(x - 1).copied().unwrap_or(0)
    }

    /// Occupancy with trailing zeros removed.
    pub fn configuration(&self) -> Vec<u32> {
        trim(&self.occupancy)
    }

    /// `zeta_t(x)` of a corner model, linear between vertices.
    pub fn corner_height(&self, x: f64) -> f64 {
        corner_height(self.time, &self.heights, x)
    }
}

fn trim(v: &[u32]) -> Vec<u32> {
    let n = v.iter().rposition(|&k| k != 0).map_or(0, |i| i + 1);
    v[..n].to_vec()
}

fn corner_height(t: usize, heights: &[i64], x: f64) -> f64 {
    let lo = -((t + 2) as f64) / 2.0;
    let hi = lo + (heights.len() - 1) as f64;
    if x <= lo || x >= hi {
        return 2.0 * x.abs();
    }
    let u = x - lo;
    let i = u.floor() as usize;
    let frac = u - i as f64;
    if frac == 0.0 {
        return heights[i] as f64;
    }
    heights[i] as f64 * (1.0 - frac) + heights[i + 1] as f64 * frac
}

/// Validates a local weight vector, clamps tiny negatives and renormalizes.
fn normalize(w: &mut [f64], clamped: &mut u64, what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for x in w.iter_mut() {
        if !x.is_finite() || *x < -NEG_TOL {
            return Err(Error::InadmissibleWeights(format!("{} weights {:?}", what(), w_fmt(*x))));
        }
        if *x < 0.0 {
            *x = 0.0;
            *clamped += 1;
        }
        sum += *x;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InadmissibleWeights(format!("{} weights sum to {sum}", what())));
    }
    for x in w.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

fn w_fmt(x: f64) -> String {
    format!("contain {x:e}")
}

fn sample_index(w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    w.iter().rposition(|&p| p > 0.0).unwrap_or(w.len() - 1)
}

/// Exponent `e` with `kappa_{x, y} = q^e delta prod_{k<x} b_k`, from the current.
pub fn kappa_exponent_closed(current: u64, entered: u64) -> i64 {
    entered as i64 - 2 * current as i64
}

/// Local law of one row-update vertex: weights of `j2 = 0, 1, ...`.
struct RowSite<'a> {
    spec: &'a ModelSpec,
    x: usize,
    y: usize,
    i1: u32,
    j1: u32,
    /// `kappa_{x, y-1} = q^e * delta * prod`, with `prod = prod_{k<x} b_k` (or `s_k^2`).
    e: i64,
    prod: C64,
}

impl RowSite<'_> {
    fn weights(&self, out: &mut Vec<f64>) -> Result<()> {
        match self.spec {
            ModelSpec::Qhahn { q, delta, b, j } => {
                let bx = at(b, self.x);
                let a = bx * q.powi(at(j, self.y) as i32);
                let kappa = if *delta == 0.0 { 0.0 } else { delta * q.powi(self.e as i32) * self.prod.re };
                phi_row_real(self.i1, *q, a, bx, kappa, out)
            }
            ModelSpec::General { q, delta, u, xi, s, j } => {
                let jy = at(j, self.y);
                let kappa = delta * q.powi(self.e as i32) * self.prod;
                let p = PsiParams { u: at(xi, self.x) * at(u, self.y), s: at(s, self.x), q: *q, j: jy, kappa };
                out.clear();
                for j2 in 0..=jy.min(self.i1 + self.j1) {
                    let cfg = ArrowConfig::new(self.i1, self.j1, self.i1 + self.j1 - j2, j2);
                    let w = psi(cfg, &p)?;
                    if w.im.abs() > IMAG_TOL * w.norm().max(1.0) {
                        return Err(Error::InadmissibleWeights(format!("psi{cfg:?} = {w} is not real at site {} row {}", self.x, self.y)));
                    }
                    out.push(w.re);
                }
                Ok(())
            }
            _ => unreachable!("row sites exist only for row-update models"),
        }
    }

    fn describe(&self) -> String {
        format!("site {} row {} (i1={}, j1={}, kappa exponent {})", self.x, self.y, self.i1, self.j1, self.e)
    }
}

/// Multiplier of `prod` when moving from column `x` to `x + 1`.
fn column_factor(spec: &ModelSpec, x: usize) -> C64 {
    match spec {
        ModelSpec::Qhahn { b, .. } => C64::new(at(b, x), 0.0),
        ModelSpec::General { s, .. } => at(s, x) * at(s, x),
        _ => C64::new(1.0, 0.0),
    }
}

/// Probability `P[X_k = eta_k - 1]` for the PEP-type models.
fn pep_p_low(spec: &ModelSpec, eta: u32, k: usize, h_old: u64, t: usize) -> f64 {
    match *spec {
        ModelSpec::JgammaPep { j, gamma } => {
            let (e, cap) = (eta as f64, (j + 1) as f64);
            let inv_ups = match gamma {
                None => 0.0,
                Some(g) => 1.0 / (g + 2.0 * h_old as f64 + cap * (k - 1) as f64 - (j as f64) * t as f64),
            };
            e / cap * (1.0 + (cap - e) * inv_ups)
        }
        ModelSpec::AsymPep { q, delta } => match eta {
            0 => 0.0,
            2 => 1.0,
            _ => {
                if delta == 0.0 {
                    return q / (1.0 + q);
                }
                // kappa = delta q^{-zeta}, zeta = 2h + 2(k-1) - t
                let zeta = 2 * h_old as i64 + 2 * (k as i64 - 1) - t as i64;
                let r = q.powi(zeta as i32) / delta;
                if r.abs() < 1.0 {
                    (q * r - 1.0) / ((q + 1.0) * (r - 1.0))
                } else {
                    let kappa = 1.0 / r;
                    (q - kappa) / ((q + 1.0) * (1.0 - kappa))
                }
            }
        },
        _ => unreachable!("PEP probabilities exist only for PEP models"),
    }
}

fn pep_capacity(spec: &ModelSpec) -> u32 {
    match spec {
        ModelSpec::JgammaPep { j, .. } => j + 1,
        _ => 2,
    }
}

fn check_p(p: f64, what: impl Fn() -> String) -> Result<f64> {
    if !p.is_finite() || p < -NEG_TOL || p > 1.0 + NEG_TOL {
        return Err(Error::InadmissibleWeights(format!("{}: probability {p}", what())));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Midpoint up-probability of the corner models at horizontal height `zeta`.
fn corner_p_up(spec: &ModelSpec, zeta: i64) -> f64 {
    match *spec {
        ModelSpec::Corner { p } => p,
        ModelSpec::CornerDyn { gamma } => 0.5 * (1.0 - 1.0 / (gamma + zeta as f64)),
        _ => unreachable!(),
    }
}

/// One time step.
pub fn step(state: &mut SystemState, spec: &ModelSpec) -> Result<()> {
    match spec {
        ModelSpec::General { .. } | ModelSpec::Qhahn { .. } => step_row(state, spec)?,
        ModelSpec::JgammaPep { .. } | ModelSpec::AsymPep { .. } => step_pep(state, spec)?,
        ModelSpec::Corner { .. } | ModelSpec::CornerDyn { .. } => step_corner(state, spec)?,
    }
    state.time += 1;
    Ok(())
}

fn step_row(state: &mut SystemState, spec: &ModelSpec) -> Result<()> {
    let y = state.time + 1;
    let jy = spec.entering(y).unwrap_or(0);
    let mut j1 = jy;
    let mut e = -(state.total_particles as i64);
    let mut prod = C64::new(1.0, 0.0);
    let mut w = Vec::new();
    let mut x = 1usize;
    loop {
        let old_len = state.occupancy.len();
        if x > old_len && j1 == 0 {
            break;
        }
        if x > MAX_SITES {
            return Err(Error::SizeLimit(format!("row {y} sweep passed {MAX_SITES} sites")));
        }
        if x > old_len {
            state.occupancy.push(0);
        }
        let i1 = state.occupancy[x - 1];
        debug_assert_eq!(e, kappa_exponent_closed(state.occupancy[x - 1..].iter().map(|&n| n as u64).sum(), state.total_particles));
        let site = RowSite { spec, x, y, i1, j1, e, prod };
        site.weights(&mut w)?;
        normalize(&mut w, &mut state.clamped, || site.describe())?;
        let j2 = sample_index(&w, &mut state.rng) as u32;
        state.occupancy[x - 1] = i1 + j1 - j2;
        j1 = j2;
        e += 2 * i1 as i64;
        prod *= column_factor(spec, x);
        x += 1;
    }
    state.total_particles += jy as u64;
    Ok(())
}

fn step_pep(state: &mut SystemState, spec: &ModelSpec) -> Result<()> {
    let t = state.time;
    let jin = spec.entering(t + 1).unwrap_or(0);
    let cap = pep_capacity(spec);
    let occ = &mut state.occupancy;
    while state.full_prefix < occ.len() && occ[state.full_prefix] == cap {
        state.full_prefix += 1;
    }
    let start = state.full_prefix + 1;
    let last = occ.iter().rposition(|&n| n != 0).map_or(0, |i| i + 1);
    let mut prefix_old = cap as u64 * state.full_prefix as u64;
    let mut x_prev = jin;
    for k in start..=last + 1 {
        if k > occ.len() {
            occ.push(0);
        }
        let eta = occ[k - 1];
        let h_old = state.total_particles - prefix_old;
        let xk = if eta == 0 {
            0
        } else {
            let p = check_p(pep_p_low(spec, eta, k, h_old, t), || format!("site {k} time {t} eta {eta}"))?;
            if state.rng.random::<f64>() < p {
                eta - 1
            } else {
                eta
            }
        };
        prefix_old += eta as u64;
        occ[k - 1] = x_prev + eta - xk;
        x_prev = xk;
    }
    debug_assert_eq!(x_prev, 0);
    state.total_particles += jin as u64;
    Ok(())
}

fn step_corner(state: &mut SystemState, spec: &ModelSpec) -> Result<()> {
    let t = state.time;
    let h = &state.heights;
    let mut next = Vec::with_capacity(h.len() + 1);
    // 2x of the new left boundary is -(t + 3)
    next.push((t + 3) as i64);
    for i in 0..h.len() - 1 {
        let (a, b) = (h[i], h[i + 1]);
        if (a - b).abs() == 2 {
            next.push((a + b) / 2);
        } else {
            let p = check_p(corner_p_up(spec, a), || format!("corner midpoint at time {t} height {a}"))?;
            next.push(if state.rng.random::<f64>() < p { a + 1 } else { a - 1 });
        }
    }
    next.push((t + 3) as i64);
    state.heights = next;
    Ok(())
}

/// `zeta_t(x - t/2 - 1) = 2 h_t(x) + 2(x - 1) - t` for a `J = 1` PEP state,
/// as `(x - t/2 - 1, height)` for `x = 1..=t + 1`.
pub fn corner_view(state: &SystemState, spec: &ModelSpec) -> Result<Vec<(f64, i64)>> {
    match spec {
        ModelSpec::JgammaPep { j: 1, .. } | ModelSpec::AsymPep { .. } => {}
        _ => return Err(Error::InadmissibleParameters("corner_view needs a J = 1 PEP".into())),
    }
    let t = state.time;
    let mut h = state.total_particles as i64;
    let mut out = Vec::with_capacity(t + 1);
    for x in 1..=t + 1 {
        out.push((x as f64 - t as f64 / 2.0 - 1.0, 2 * h + 2 * (x as i64 - 1) - t as i64));
        h -= state.occupancy_at(x) as i64;
    }
    Ok(out)
}

/// Height profile of a corner model on its vertex grid, same layout as [`corner_view`]
/// restricted to positions `>= -t/2`.
pub fn corner_profile(state: &SystemState) -> Vec<(f64, i64)> {
    let t = state.time;
    (0..=t).map(|i| {
        let x = i as f64 - t as f64 / 2.0;
        (x, state.corner_height(x) as i64)
    }).collect()
}

/// Exact distribution over configurations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactLaw<K: Ord = Vec<u32>> {
    pub support: Vec<(K, f64)>,
    pub total: f64,
}

impl<K: Ord> ExactLaw<K> {
    fn from_map(m: BTreeMap<K, f64>) -> Self {
        let total = m.values().sum();
        Self { support: m.into_iter().collect(), total }
    }

    pub fn expectation(&self, f: impl Fn(&K) -> f64) -> f64 {
        self.support.iter().map(|(k, p)| p * f(k)).sum()
    }

    pub fn probability(&self, k: &K) -> f64 {
        self.support.binary_search_by(|(c, _)| c.cmp(k)).map_or(0.0, |i| self.support[i].1)
    }
}

/// `h(x)` of a trimmed configuration.
pub fn config_current(config: &[u32], x: usize) -> u64 {
    config.iter().skip(x.max(1) - 1).map(|&n| n as u64).sum()
}

/// Exact law of the particle configuration after `steps` steps; `bound` caps the support.
pub fn exact_law(spec: &ModelSpec, steps: usize, bound: usize) -> Result<ExactLaw> {
    exact_law_from(spec, &[], 0, steps, bound)
}

/// Exact law after `steps` further steps from `config` at time `t0`.
pub fn exact_law_from(spec: &ModelSpec, config: &[u32], t0: usize, steps: usize, bound: usize) -> Result<ExactLaw> {
    spec.validate()?;
    if spec.is_corner() {
        return Err(Error::InadmissibleParameters("use corner_exact_law for corner models".into()));
    }
    let mut law: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    law.insert(trim(config), 1.0);
    let mut entered: u64 = (1..=t0).map(|y| spec.entering(y).unwrap_or(0) as u64).sum();
    for t in t0..t0 + steps {
        let mut next = BTreeMap::new();
        for (config, p) in &law {
            let mut branches = Vec::new();
            match spec {
                ModelSpec::General { .. } | ModelSpec::Qhahn { .. } => row_branches(spec, config, entered, t + 1, &mut branches)?,
                _ => pep_branches(spec, config, t, &mut branches)?,
            }
            for (c, w) in branches {
                *next.entry(trim(&c)).or_insert(0.0) += p * w;
            }
            if next.len() > bound {
                return Err(Error::SizeLimit(format!("more than {bound} configurations at time {}", t + 1)));
            }
        }
        entered += spec.entering(t + 1).unwrap_or(0) as u64;
        law = next;
    }
    Ok(ExactLaw::from_map(law))
}

fn row_branches(spec: &ModelSpec, config: &[u32], entered: u64, y: usize, out: &mut Vec<(Vec<u32>, f64)>) -> Result<()> {
    struct Partial {
        occ: Vec<u32>,
        j1: u32,
        e: i64,
        prod: C64,
        w: f64,
    }
    let jy = spec.entering(y).unwrap_or(0);
    let total: u64 = config.iter().map(|&n| n as u64).sum();
    let mut stack = vec![Partial { occ: Vec::with_capacity(config.len() + 1), j1: jy, e: kappa_exponent_closed(total, entered), prod: C64::new(1.0, 0.0), w: 1.0 }];
    let mut weights = Vec::new();
    let mut clamped = 0u64;
    while let Some(pt) = stack.pop() {
        let x = pt.occ.len() + 1;
        if x > config.len() && pt.j1 == 0 {
            out.push((pt.occ, pt.w));
            continue;
        }
        if x > MAX_SITES {
            return Err(Error::SizeLimit(format!("row {y} expansion passed {MAX_SITES} sites")));
        }
        let i1 = config.get(x - 1).copied().unwrap_or(0);
        let site = RowSite { spec, x, y, i1, j1: pt.j1, e: pt.e, prod: pt.prod };
        site.weights(&mut weights)?;
        normalize(&mut weights, &mut clamped, || site.describe())?;
        let prod = pt.prod * column_factor(spec, x);
        for (j2, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut occ = pt.occ.clone();
            occ.push(i1 + pt.j1 - j2 as u32);
            stack.push(Partial { occ, j1: j2 as u32, e: pt.e + 2 * i1 as i64, prod, w: pt.w * w });
        }
    }
    Ok(())
}

fn pep_branches(spec: &ModelSpec, config: &[u32], t: usize, out: &mut Vec<(Vec<u32>, f64)>) -> Result<()> {
    let jin = spec.entering(t + 1).unwrap_or(0);
    let last = config.len();
    // choices per site: (x_k, probability)
    let mut choices: Vec<Vec<(u32, f64)>> = Vec::with_capacity(last);
    let total: u64 = config.iter().map(|&n| n as u64).sum();
    let mut prefix = 0u64;
    for k in 1..=last {
        let eta = config[k - 1];
        let h_old = total - prefix;
        let c = if eta == 0 {
            vec![(0, 1.0)]
        } else {
            let p = check_p(pep_p_low(spec, eta, k, h_old, t), || format!("site {k} time {t} eta {eta}"))?;
            [(eta - 1, p), (eta, 1.0 - p)].into_iter().filter(|&(_, w)| w > 0.0).collect()
        };
        choices.push(c);
        prefix += eta as u64;
    }
    let mut stack: Vec<(usize, Vec<u32>, f64)> = vec![(0, Vec::with_capacity(last), 1.0)];
    while let Some((k, xs, w)) = stack.pop() {
        if k == last {
            let mut occ = vec![0u32; last + 1];
            let mut prev = jin;
            for i in 0..last {
                occ[i] = prev + config[i] - xs[i];
                prev = xs[i];
            }
            occ[last] = prev;
            out.push((occ, w));
            continue;
        }
        for &(xk, p) in &choices[k] {
            let mut nx = xs.clone();
            nx.push(xk);
            stack.push((k + 1, nx, w * p));
        }
    }
    Ok(())
}

/// Exact law of the corner height profile (`heights` layout of [`SystemState`]).
pub fn corner_exact_law(spec: &ModelSpec, steps: usize, bound: usize) -> Result<ExactLaw<Vec<i64>>> {
    spec.validate()?;
    if !spec.is_corner() {
        return Err(Error::InadmissibleParameters("corner_exact_law needs a corner model".into()));
    }
    let mut law: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    law.insert(vec![2, 0, 2], 1.0);
    for t in 0..steps {
        let mut next = BTreeMap::new();
        for (h, p) in &law {
            let mut partial: Vec<(Vec<i64>, f64)> = vec![(vec![(t + 3) as i64], *p)];
            for i in 0..h.len() - 1 {
                let (a, b) = (h[i], h[i + 1]);
                let opts: Vec<(i64, f64)> = if (a - b).abs() == 2 {
                    vec![((a + b) / 2, 1.0)]
                } else {
                    let pu = check_p(corner_p_up(spec, a), || format!("corner midpoint at time {t} height {a}"))?;
                    vec![(a + 1, pu), (a - 1, 1.0 - pu)]
                };
                let mut np = Vec::with_capacity(partial.len() * opts.len());
                for (v, w) in &partial {
                    for &(z, pz) in &opts {
                        if pz > 0.0 {
                            let mut v2 = v.clone();
                            v2.push(z);
                            np.push((v2, w * pz));
                        }
                    }
                }
                partial = np;
            }
            for (mut v, w) in partial {
                v.push((t + 3) as i64);
                *next.entry(v).or_insert(0.0) += w;
            }
            if next.len() > bound {
                return Err(Error::SizeLimit(format!("more than {bound} profiles at time {}", t + 1)));
            }
        }
        law = next;
    }
    Ok(ExactLaw::from_map(law))
}

/// Named scalar observables read at the final time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// The constant 1.
    Constant,
    /// `h_t(x)`.
    Current { x: usize },
    /// Particles at site `x`.
    Occupancy { x: usize },
    /// Total particles.
    Particles,
    /// `zeta_t(x)`: corner models directly, `J = 1` PEP models through [`corner_view`].
    Height { x: f64 },
}

impl FromStr for Observable {
    type Err = Error;

    /// `one`, `particles`, `current:X`, `occupancy:X`, `height:X`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        let int = |a: Option<&str>| -> Result<usize> {
            a.and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Config(format!("observable {s:?} needs a site index")))
        };
        match name.trim() {
            "one" | "constant" => Ok(Observable::Constant),
            "particles" => Ok(Observable::Particles),
            "current" => Ok(Observable::Current { x: int(arg)? }),
            "occupancy" => Ok(Observable::Occupancy { x: int(arg)? }),
            "height" => {
                let x = arg.and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Config(format!("observable {s:?} needs a position")))?;
                Ok(Observable::Height { x })
            }
            _ => Err(Error::Config(format!("unknown observable {s:?}"))),
        }
    }
}

impl Observable {
    pub fn eval(&self, state: &SystemState, spec: &ModelSpec) -> Result<f64> {
        Ok(match *self {
            Observable::Constant => 1.0,
            Observable::Current { x } => state.current(x) as f64,
            Observable::Occupancy { x } => state.occupancy_at(x) as f64,
            Observable::Particles => state.total_particles as f64,
            Observable::Height { x } => {
                if spec.is_corner() {
                    state.corner_height(x)
                } else {
                    corner_view(state, spec)?;
                    // zeta_t(x) = 2 h_t(k) + 2(k - 1) - t at x = k - t/2 - 1, linear in between
                    let t = state.time as f64;
                    let pos = x + t / 2.0 + 1.0;
                    if pos <= 1.0 {
                        2.0 * x.abs()
                    } else {
                        let zeta = |k: usize| 2.0 * state.current(k) as f64 + 2.0 * (k as f64 - 1.0) - t;
                        let k = pos.floor() as usize;
                        let frac = pos - k as f64;
                        if frac == 0.0 {
                            zeta(k)
                        } else {
                            zeta(k) * (1.0 - frac) + zeta(k + 1) * frac
                        }
                    }
                }
            }
        })
    }
}

/// Monte Carlo mean with standard error `sample std / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub base_seed: u64,
}

impl MCEstimate {
    /// Aggregates with pairwise summation; the result depends only on the value order.
    pub fn from_values(values: &[f64], base_seed: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n_samples: 0, base_seed };
        }
        let mean = pairwise_sum(values) / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        };
        Self { mean, stderr, n_samples: n, base_seed }
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: `splitmix64(base_seed ^ splitmix64(index))`.
pub fn trajectory_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Ensemble output: one estimate per observable and checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleResult {
    /// `estimates[c][o]`: checkpoint `c`, observable `o`.
    pub estimates: Vec<Vec<MCEstimate>>,
    pub checkpoints: Vec<usize>,
    /// Clamped negative weights over all trajectories.
    pub clamped: u64,
}

/// Runs `samples` independent trajectories and records `f(state)` at each checkpoint time.
/// `parallel = false` runs on the calling thread; results are identical either way.
pub fn run_ensemble_with<F>(spec: &ModelSpec, checkpoints: &[usize], samples: usize, base_seed: u64, parallel: bool, f: F) -> Result<(Vec<Vec<Vec<f64>>>, u64)>
where
    F: Fn(&SystemState) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let one = |i: usize| -> Result<(Vec<Vec<f64>>, u64)> {
        let mut st = SystemState::new(spec, trajectory_seed(base_seed, i as u64));
        let mut out = Vec::with_capacity(cps.len());
        for &cp in &cps {
            while st.time < cp {
                step(&mut st, spec).map_err(|e| annotate(e, i))?;
            }
            out.push(f(&st).map_err(|e| annotate(e, i))?);
        }
        Ok((out, st.clamped))
    };
    let runs: Vec<Result<(Vec<Vec<f64>>, u64)>> =
        if parallel { (0..samples).into_par_iter().map(one).collect() } else { (0..samples).map(one).collect() };
    let mut values = Vec::with_capacity(samples);
    let mut clamped = 0;
    for r in runs {
        let (v, c) = r?;
        values.push(v);
        clamped += c;
    }
    Ok((values, clamped))
}

fn annotate(e: Error, i: usize) -> Error {
    match e {
        Error::InadmissibleWeights(m) => Error::InadmissibleWeights(format!("trajectory {i}: {m}")),
        Error::SizeLimit(m) => Error::SizeLimit(format!("trajectory {i}: {m}")),
        other => other,
    }
}

/// Ensemble estimates of named observables at time `steps` (and optional extra checkpoints).
pub fn run_ensemble(spec: &ModelSpec, steps: usize, samples: usize, base_seed: u64, observables: &[Observable], parallel: bool) -> Result<EnsembleResult> {
    run_ensemble_at(spec, &[steps], samples, base_seed, observables, parallel)
}

/// As [`run_ensemble`], recording every checkpoint time.
pub fn run_ensemble_at(spec: &ModelSpec, checkpoints: &[usize], samples: usize, base_seed: u64, observables: &[Observable], parallel: bool) -> Result<EnsembleResult> {
    let (values, clamped) = run_ensemble_with(spec, checkpoints, samples, base_seed, parallel, |st| observables.iter().map(|o| o.eval(st, spec)).collect())?;
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let estimates = (0..cps.len())
        .map(|c| (0..observables.len()).map(|o| MCEstimate::from_values(&values.iter().map(|v| v[c][o]).collect::<Vec<_>>(), base_seed)).collect())
        .collect();
    Ok(EnsembleResult { estimates, checkpoints: cps, clamped })
}
