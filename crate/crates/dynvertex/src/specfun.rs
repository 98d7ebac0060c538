//! Pochhammer symbols, the first Jacobi theta function and (very-well-poised)
//! basic and elliptic hypergeometric series.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type C64 = Complex64;

/// Denominators with smaller magnitude are treated as poles.
pub const POLE_TOL: f64 = 1e-13;
/// Default relative truncation tolerance for infinite series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-16;
/// Default hard cap on the number of series terms.
pub const DEFAULT_MAX_TERMS: usize = 4096;
/// Relative tolerance used to detect `a = q^{-r}` in `basic_hyp`.
pub const TERMINATION_DETECT_TOL: f64 = 1e-12;

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Returns `1/d`, or `SingularParameter` when `|d| < POLE_TOL`.
pub fn checked_inv(d: C64, what: &str) -> Result<C64> {
    if !(d.norm() >= POLE_TOL) {
        return Err(Error::SingularParameter(format!("{what}: denominator {d}")));
    }
    Ok(d.inv())
}

/// Elliptic (theta) or trigonometric (sine) evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Mode {
    Elliptic { tau: C64 },
    Trigonometric,
}

/// Evaluation context: mode, crossing parameter `eta` and series controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticContext {
    mode: Mode,
    eta: C64,
    q: C64,
    series_tol: f64,
    max_terms: usize,
}

impl EllipticContext {
    pub fn new(mode: Mode, eta: C64, series_tol: f64, max_terms: usize) -> Result<Self> {
        if let Mode::Elliptic { tau } = mode {
            if !(tau.im > 0.0) {
                return Err(Error::InadmissibleParameters(format!("Im tau must be positive, got {tau}")));
            }
        }
        if !(series_tol > 0.0 && series_tol <= 1e-6) {
            return Err(Error::InadmissibleParameters(format!("series_tol {series_tol} outside (0, 1e-6]")));
        }
        if max_terms < 64 {
            return Err(Error::InadmissibleParameters(format!("max_terms {max_terms} < 64")));
        }
        if !(eta.re.is_finite() && eta.im.is_finite()) {
            return Err(Error::InadmissibleParameters("eta must be finite".into()));
        }
        let q = (-4.0 * PI * I * eta).exp();
        Ok(Self { mode, eta, q, series_tol, max_terms })
    }

    pub fn elliptic(tau: C64, eta: C64) -> Result<Self> {
        Self::new(Mode::Elliptic { tau }, eta, DEFAULT_SERIES_TOL, DEFAULT_MAX_TERMS)
    }

    pub fn trigonometric(eta: C64) -> Self {
        Self { mode: Mode::Trigonometric, eta, q: (-4.0 * PI * I * eta).exp(), series_tol: DEFAULT_SERIES_TOL, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_trigonometric(&self) -> bool {
        matches!(self.mode, Mode::Trigonometric)
    }

    pub fn eta(&self) -> C64 {
        self.eta
    }

    /// `q = exp(-4 pi i eta)`.
    pub fn q(&self) -> C64 {
        self.q
    }

    pub fn series_tol(&self) -> f64 {
        self.series_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// `f(z)`: theta in elliptic mode, `sin(pi z)` in trigonometric mode.
    pub fn f(&self, z: C64) -> C64 {
        f_eval(z, self)
    }

    /// Elliptic Pochhammer symbol `[a]_k`.
    pub fn ep(&self, a: C64, k: i64) -> Result<C64> {
        elliptic_pochhammer(a, k, self)
    }
}

/// Symmetric theta sum; the flag reports whether the tolerance was met.
fn theta_sum(z: C64, tau: C64, tol: f64, max_terms: usize) -> (C64, bool) {
    // theta(z) = -2 sum_{m>=0} exp(pi i tau n^2) cos(2 pi n (z + 1/2)), n = m + 1/2
    let w = z + 0.5;
    let peak = (w.im.abs() / tau.im).ceil() as usize + 1;
    let mut sum = C64::new(0.0, 0.0);
    let mut scale = 0.0f64;
    let mut small_run = 0;
    for m in 0..max_terms {
        let n = m as f64 + 0.5;
        let term = (PI * I * tau * n * n).exp() * (2.0 * PI * n * w).cos();
        sum += term;
        scale += term.norm();
        if m >= peak && term.norm() <= tol * scale {
            small_run += 1;
            if small_run >= 2 {
                return (-2.0 * sum, true);
            }
        } else {
            small_run = 0;
        }
    }
    (-2.0 * sum, false)
}

/// First Jacobi theta function. Requires elliptic mode.
pub fn theta1(z: C64, ctx: &EllipticContext) -> Result<C64> {
    match ctx.mode {
        Mode::Elliptic { tau } => {
            let (v, ok) = theta_sum(z, tau, ctx.series_tol, ctx.max_terms);
            if ok {
                Ok(v)
            } else {
                Err(Error::NonConvergent(ctx.max_terms))
            }
        }
        Mode::Trigonometric => Err(Error::ModeError),
    }
}

/// `f(z)` in the mode of `ctx`.
pub fn f_eval(z: C64, ctx: &EllipticContext) -> C64 {
    match ctx.mode {
        Mode::Elliptic { tau } => theta_sum(z, tau, ctx.series_tol, ctx.max_terms).0,
        Mode::Trigonometric => (PI * z).sin(),
    }
}

/// `(a; q)_k`, with `(a; q)_{-n} = prod_{j=1}^{n} 1/(1 - a q^{-j})`.
pub fn q_pochhammer(a: C64, q: C64, k: i64) -> Result<C64> {
    let mut p = c(1.0);
    if k >= 0 {
        let mut x = a;
        for _ in 0..k {
            p *= 1.0 - x;
            x *= q;
        }
        Ok(p)
    } else {
        let qi = checked_inv(q, "q")?;
        let mut x = a * qi;
        for _ in 0..(-k) {
            p *= checked_inv(1.0 - x, "(a;q)_k, k<0")?;
            x *= qi;
        }
        Ok(p)
    }
}

/// `(a)_k`, with `(a)_{-n} = prod_{j=1}^{n} 1/(a - j)`.
pub fn rational_pochhammer(a: C64, k: i64) -> Result<C64> {
    let mut p = c(1.0);
    if k >= 0 {
        for j in 0..k {
            p *= a + j as f64;
        }
    } else {
        for j in 1..=(-k) {
            p *= checked_inv(a - j as f64, "(a)_k, k<0")?;
        }
    }
    Ok(p)
}

/// `[a]_k = prod_{j<k} f(a - 2 eta j)`, with `[a]_{-n} = prod_{j=1}^{n} 1/f(a + 2 eta j)`.
pub fn elliptic_pochhammer(a: C64, k: i64, ctx: &EllipticContext) -> Result<C64> {
    let step = 2.0 * ctx.eta;
    let mut p = c(1.0);
    if k >= 0 {
        for j in 0..k {
            p *= ctx.f(a - step * j as f64);
        }
    } else {
        for j in 1..=(-k) {
            p *= checked_inv(ctx.f(a + step * j as f64), "[a]_k, k<0")?;
        }
    }
    Ok(p)
}

fn detect_termination(numer: &[C64], q: C64, max_terms: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &a in numer {
        let mut x = a;
        for r in 0..max_terms.min(512) {
            if (x - 1.0).norm() <= TERMINATION_DETECT_TOL {
                best = Some(best.map_or(r, |b| b.min(r)));
                break;
            }
            x *= q;
        }
    }
    best
}

/// Sums `sum_k t_k` given a term-ratio callback, either to a fixed index or to convergence.
fn sum_series(
    termination: Option<usize>,
    tol: f64,
    max_terms: usize,
    mut next_ratio: impl FnMut(usize) -> Result<C64>,
    mut weight: impl FnMut(usize) -> Result<C64>,
) -> Result<C64> {
    let mut term = c(1.0);
    let mut sum = weight(0)?;
    match termination {
        Some(n) => {
            for k in 0..n {
                term *= next_ratio(k)?;
                sum += term * weight(k + 1)?;
            }
            Ok(sum)
        }
        None => {
            let mut scale = sum.norm();
            let mut small_run = 0;
            for k in 0..max_terms {
                term *= next_ratio(k)?;
                let t = term * weight(k + 1)?;
                sum += t;
                scale = scale.max(sum.norm());
                if t.norm() <= tol * scale {
                    small_run += 1;
                    if small_run >= 3 {
                        return Ok(sum);
                    }
                } else {
                    small_run = 0;
                }
            }
            Err(Error::NonConvergent(max_terms))
        }
    }
}

/// Basic hypergeometric series `_p phi_r(numer; denom | q, z)` without the
/// `(-1)^k q^{binom(k,2)}` factor. A supplied termination index is authoritative;
/// otherwise numerator parameters equal to `q^{-r}` are detected, and failing that
/// the series is summed to convergence.
pub fn basic_hyp(numer: &[C64], denom: &[C64], q: C64, z: C64, termination: Option<usize>) -> Result<C64> {
    if z == c(0.0) {
        return Ok(c(1.0));
    }
    let n = termination.or_else(|| detect_termination(numer, q, DEFAULT_MAX_TERMS));
    sum_series(
        n,
        DEFAULT_SERIES_TOL,
        DEFAULT_MAX_TERMS,
        |k| {
            let qk = q.powi(k as i32);
            let mut r = z * checked_inv(1.0 - qk * q, "(q;q)_k")?;
            for &a in numer {
                r *= 1.0 - a * qk;
            }
            for &b in denom {
                r *= checked_inv(1.0 - b * qk, "denominator Pochhammer")?;
            }
            Ok(r)
        },
        |_| Ok(c(1.0)),
    )
}

/// Very-well-poised series `_{r+1}W_r(a1; rest; q, z)`.
pub fn vwp_basic_w(a1: C64, rest: &[C64], q: C64, z: C64, termination: Option<usize>) -> Result<C64> {
    let n = termination.or_else(|| detect_termination(rest, q, DEFAULT_MAX_TERMS));
    let inv_1ma = checked_inv(1.0 - a1, "1 - a1")?;
    sum_series(
        n,
        DEFAULT_SERIES_TOL,
        DEFAULT_MAX_TERMS,
        |k| {
            let qk = q.powi(k as i32);
            let mut r = z * (1.0 - a1 * qk) * checked_inv(1.0 - qk * q, "(q;q)_k")?;
            for &a in rest {
                let den = 1.0 - q * a1 * checked_inv(a, "a_j")? * qk;
                r *= (1.0 - a * qk) * checked_inv(den, "(q a1/a_j; q)_k")?;
            }
            Ok(r)
        },
        |k| Ok((1.0 - a1 * q.powi(2 * k as i32)) * inv_1ma),
    )
}

/// Very-well-poised elliptic series `_{r+1}v_r(a1; rest; z)`, summed over `k <= n`.
/// The termination index `n` must be supplied from integer structure.
pub fn vwp_elliptic_v(a1: C64, rest: &[C64], z: C64, n: Option<usize>, ctx: &EllipticContext) -> Result<C64> {
    let n = n.ok_or(Error::NonTerminating)?;
    let eta2 = 2.0 * ctx.eta;
    let inv_fa1 = checked_inv(ctx.f(a1), "f(a1)")?;
    sum_series(
        Some(n),
        ctx.series_tol,
        ctx.max_terms,
        |k| {
            let kf = k as f64;
            let mut r = z * ctx.f(a1 - eta2 * kf) * checked_inv(ctx.f(-eta2 - eta2 * kf), "[-2eta]_k")?;
            for &a in rest {
                r *= ctx.f(a - eta2 * kf) * checked_inv(ctx.f(a1 - a - eta2 - eta2 * kf), "[a1 - a_j - 2eta]_k")?;
            }
            Ok(r)
        },
        |k| Ok(ctx.f(a1 - 2.0 * eta2 * k as f64) * inv_fa1),
    )
}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: C64, b: C64, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

/// Identity families of the randomized verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpecfunSuite {
    /// The seven q-Pochhammer identities.
    QPochhammer,
    /// The three elliptic Pochhammer identities.
    EllipticPochhammer,
    /// The quartic theta relation.
    Riemann,
    /// The terminating `6W5` summation, `n <= 5`.
    Rogers,
    /// The terminating elliptic `10v9` summation, `n <= 4`.
    Jackson,
}

impl SpecfunSuite {
    pub const ALL: [SpecfunSuite; 5] = [Self::QPochhammer, Self::EllipticPochhammer, Self::Riemann, Self::Rogers, Self::Jackson];
}

/// Random points per identity.
pub const SUITE_POINTS: usize = 100;
/// Relative tolerance of the suite.
pub const SUITE_TOL: f64 = 1e-10;
/// Draws are rejected when a Pochhammer factor comes this close to a pole.
const SUITE_GUARD: f64 = 1e-3;

/// Collects the worst residual of `point` over `SUITE_POINTS` accepted draws.
/// `point` returns `None` for a rejected (near-singular) draw.
fn grid_check(
    name: &str,
    rng: &mut rand_chacha::ChaCha8Rng,
    mut point: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<Option<f64>>,
) -> Result<crate::report::Check> {
    let (mut worst, mut accepted, mut tries) = (0.0f64, 0usize, 0usize);
    while accepted < SUITE_POINTS {
        tries += 1;
        if tries > 100 * SUITE_POINTS {
            return Err(Error::InadmissibleParameters(format!("{name}: too many rejected draws")));
        }
        match point(rng) {
            Ok(Some(r)) => {
                worst = if r.is_nan() { f64::NAN } else { worst.max(r) };
                accepted += 1;
            }
            Ok(None) | Err(Error::SingularParameter(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(crate::report::Check::new(name, worst, SUITE_TOL).with_detail(serde_json::json!({ "points": accepted, "draws": tries })))
}

fn rand_c(rng: &mut impl rand::Rng, re: (f64, f64), im: (f64, f64)) -> C64 {
    C64::new(rng.random_range(re.0..re.1), rng.random_range(im.0..im.1))
}

fn rand_q(rng: &mut impl rand::Rng) -> C64 {
    C64::from_polar(rng.random_range(0.2..0.8), rng.random_range(-1.0..1.0))
}

/// `(a; q)_k` with every factor kept away from zero.
fn guarded_qp(a: C64, q: C64, k: i64) -> Result<Option<C64>> {
    let (lo, hi) = if k >= 0 { (0, k) } else { (k, 0) };
    for j in lo..hi {
        if (1.0 - a * q.powi(j as i32)).norm() < SUITE_GUARD {
            return Ok(None);
        }
    }
    q_pochhammer(a, q, k).map(Some)
}

/// `lim_{q -> 1} (1 - q)^{-k} (q^a; q)_k` by Richardson extrapolation in `1 - q`.
fn q_limit(a: C64, k: i64) -> Result<C64> {
    let steps = 7;
    let eps: Vec<f64> = (0..steps).map(|i| 0.02 / 2f64.powi(i)).collect();
    let mut t: Vec<C64> = Vec::with_capacity(steps as usize);
    for &e in &eps {
        let q = c(1.0 - e);
        t.push(q_pochhammer(q.powc(a), q, k)? / c(e).powi(k as i32));
    }
    // Neville tableau at eps = 0
    for m in 1..t.len() {
        for i in (m..t.len()).rev() {
            t[i] = (t[i] * eps[i - m] - t[i - 1] * eps[i]) / (eps[i - m] - eps[i]);
        }
    }
    Ok(t[t.len() - 1])
}

fn riemann_residual(ctx: &EllipticContext, w: C64, x: C64, y: C64, z: C64) -> f64 {
    let f = |u: C64| ctx.f(u);
    let lhs = f(x + z) * f(x - z) * f(y + w) * f(y - w);
    let t1 = f(x + y) * f(x - y) * f(z + w) * f(z - w);
    let t2 = f(x + w) * f(x - w) * f(y + z) * f(y - z);
    (lhs - t1 - t2).norm() / lhs.norm().max(t1.norm()).max(t2.norm())
}

/// Runs one identity family on random grids of `SUITE_POINTS` points each.
pub fn verify_suite(suite: SpecfunSuite, seed: u64) -> Result<crate::report::Report> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rep = crate::report::Report::new(format!("specfun/{}", serde_json::to_value(suite).expect("serializable").as_str().unwrap_or("")));
    let rel = |a: C64, b: C64| rel_diff(a, b, 1e-300);
    let contexts = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<EllipticContext> {
        let eta = rand_c(rng, (0.03, 0.1), (-0.01, 0.01));
        match rng.random_range(0..3) {
            0 => Ok(EllipticContext::trigonometric(eta)),
            1 => EllipticContext::elliptic(I, eta),
            _ => EllipticContext::elliptic(C64::new(0.0, 1.3), eta),
        }
    };
    match suite {
        SpecfunSuite::QPochhammer => {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| (rand_c(rng, (0.2, 2.0), (-0.3, 0.3)), rand_q(rng), rng.random_range(-4i64..=4), rng.random_range(-4i64..=4));
            rep.push(grid_check("splicing", &mut rng, |r| {
                let (a, q, k, m) = draw(r);
                let (Some(l), Some(x), Some(y)) = (guarded_qp(a, q, k + m)?, guarded_qp(a, q, k)?, guarded_qp(a * q.powi(k as i32), q, m)?) else { return Ok(None) };
                Ok(Some(rel(l, x * y)))
            })?);
            rep.push(grid_check("shifted_product", &mut rng, |r| {
                let (a, q, k, m) = draw(r);
                let qp = |n: i64| q.powi(n as i32);
                let den = 1.0 - qp(2 * m - 2 * k) * a;
                if den.norm() < SUITE_GUARD {
                    return Ok(None);
                }
                let (Some(x), Some(y), Some(z)) = (guarded_qp(qp(m - k) * a, q, m - k)?, guarded_qp(qp(2 * m - 2 * k + 1) * a, q, k)?, guarded_qp(qp(m - k) * a, q, m + 1)?) else { return Ok(None) };
                Ok(Some(rel(x * y, z / den)))
            })?);
            rep.push(grid_check("negative_shift", &mut rng, |r| {
                let (a, q, k, m) = draw(r);
                let qp = |n: i64| q.powi(n as i32);
                let (Some(l), Some(x), Some(y), Some(d)) = (guarded_qp(qp(-k) * a, q, m)?, guarded_qp(a, q, m)?, guarded_qp(q / a, q, k)?, guarded_qp(1.0 / (qp(m - 1) * a), q, k)?) else { return Ok(None) };
                Ok(Some(rel(l, x * y / (qp(m * k) * d))))
            })?);
            rep.push(grid_check("difference_index", &mut rng, |r| {
                let (a, q, k, m) = draw(r);
                let qp = |n: i64| q.powi(n as i32);
                let (Some(l), Some(x), Some(d)) = (guarded_qp(a, q, m - k)?, guarded_qp(a, q, m)?, guarded_qp(1.0 / (a * qp(m - 1)), q, k)?) else { return Ok(None) };
                let pre = q.powi(((k + 1) * k / 2 - m * k) as i32) / (-a).powi(k as i32);
                Ok(Some(rel(l, pre * x / d)))
            })?);
            rep.push(grid_check("square_base", &mut rng, |r| {
                let (a, q, k, _) = draw(r);
                let (Some(x), Some(y), Some(z)) = (guarded_qp(a, q, k)?, guarded_qp(-a, q, k)?, guarded_qp(a * a, q * q, k)?) else { return Ok(None) };
                Ok(Some(rel(x * y, z)))
            })?);
            rep.push(grid_check("telescoping_ratio", &mut rng, |r| {
                let (a, q, k, _) = draw(r);
                let q2 = q * q;
                if (1.0 - a).norm() < SUITE_GUARD {
                    return Ok(None);
                }
                let (Some(x), Some(y)) = (guarded_qp(q2 * a, q2, k)?, guarded_qp(a, q2, k)?) else { return Ok(None) };
                let lhs = x / y;
                let r1 = (1.0 - q2.powi(k as i32) * a) / (1.0 - a);
                let r2 = (1.0 / a - q2.powi(k as i32)) / (1.0 / a - 1.0);
                Ok(Some(rel(lhs, r1).max(rel(lhs, r2))))
            })?);
            rep.push(grid_check("rational_limit", &mut rng, |r| {
                let a = rand_c(r, (0.2, 3.0), (-0.5, 0.5));
                let k = r.random_range(0i64..=5);
                Ok(Some(rel(q_limit(a, k)?, rational_pochhammer(a, k)?)))
            })?);
        }
        SpecfunSuite::EllipticPochhammer => {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<(EllipticContext, C64, i64, i64)> {
                Ok((contexts(rng)?, rand_c(rng, (0.1, 0.6), (-0.1, 0.1)), rng.random_range(-3i64..=5), rng.random_range(-3i64..=5)))
            };
            rep.push(grid_check("reflection", &mut rng, |r| {
                let (ctx, a, m, _) = draw(r)?;
                let eta = ctx.eta();
                Ok(Some(rel(ctx.ep(a, m)?, (-1.0f64).powi(m as i32) * ctx.ep(2.0 * eta * (m - 1) as f64 - a, m)?)))
            })?);
            rep.push(grid_check("difference_index", &mut rng, |r| {
                let (ctx, a, m, k) = draw(r)?;
                let eta = ctx.eta();
                let am = ctx.ep(a, m)?;
                let lhs = ctx.ep(a, m - k)?;
                let mid = am / ctx.ep(a - 2.0 * eta * (m - k) as f64, k)?;
                let right = (-1.0f64).powi(k as i32) * am / ctx.ep(2.0 * eta * (m - 1) as f64 - a, k)?;
                Ok(Some(rel(lhs, mid).max(rel(lhs, right))))
            })?);
            rep.push(grid_check("peeling", &mut rng, |r| {
                let (ctx, a, m, k) = draw(r)?;
                let eta = ctx.eta();
                let lhs = ctx.ep(a, k)? * ctx.ep(a - 2.0 * eta * (k + 1) as f64, m - k)?;
                let rhs = ctx.ep(a, m + 1)? / ctx.f(a - 2.0 * eta * k as f64);
                Ok(Some(rel(lhs, rhs)))
            })?);
        }
        SpecfunSuite::Riemann => {
            rep.push(grid_check("riemann", &mut rng, |r| {
                let ctx = contexts(r)?;
                let mut v = || rand_c(r, (-1.0, 1.0), (-0.3, 0.3));
                let (w, x, y, z) = (v(), v(), v(), v());
                Ok(Some(riemann_residual(&ctx, w, x, y, z)))
            })?);
        }
        SpecfunSuite::Rogers => {
            rep.push(grid_check("rogers", &mut rng, |r| {
                let a = rand_c(r, (0.1, 0.9), (-0.3, 0.3));
                let b = rand_c(r, (0.2, 0.9), (-0.3, 0.3));
                let cc = rand_c(r, (0.2, 0.9), (-0.3, 0.3));
                let q = rand_q(r);
                let n = r.random_range(0i64..=5);
                let z = a * q.powi(n as i32 + 1) / (b * cc);
                let lhs = vwp_basic_w(a, &[b, cc, q.powi(-(n as i32))], q, z, Some(n as usize))?;
                let (Some(p1), Some(p2), Some(p3), Some(p4)) = (guarded_qp(a * q, q, n)?, guarded_qp(a * q / (b * cc), q, n)?, guarded_qp(a * q / b, q, n)?, guarded_qp(a * q / cc, q, n)?) else { return Ok(None) };
                Ok(Some(rel(lhs, p1 * p2 / (p3 * p4))))
            })?);
        }
        SpecfunSuite::Jackson => {
            rep.push(grid_check("jackson", &mut rng, |r| {
                let ctx = contexts(r)?;
                let mut v = |lo, hi| rand_c(r, (lo, hi), (-0.3, 0.3));
                let (a, b, cc, d) = (v(0.5, 1.2), v(0.05, 0.3), v(0.05, 0.3), v(0.05, 0.3));
                let n = r.random_range(0usize..=4);
                let eta = ctx.eta();
                let nf = n as f64;
                let e = 2.0 * a - 2.0 * eta - b - cc - d - 2.0 * eta * nf;
                let lhs = vwp_elliptic_v(a, &[b, cc, d, e, 2.0 * eta * nf], c(1.0), Some(n), &ctx)?;
                let ep = |x: C64| ctx.ep(x, n as i64);
                let e2 = 2.0 * eta;
                let rhs = ep(a - e2)? * ep(a - b - cc - e2)? * ep(a - b - d - e2)? * ep(a - cc - d - e2)?
                    / (ep(a - b - e2)? * ep(a - cc - e2)? * ep(a - d - e2)? * ep(a - b - cc - d - e2)?);
                Ok(Some(rel(lhs, rhs)))
            })?);
        }
    }
    Ok(rep)
}
