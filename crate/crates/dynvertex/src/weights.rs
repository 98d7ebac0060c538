//! Vertex weights: unfused `W_1`, column weights, fused `W_J` (recursion, closed
//! form, factored special cases), stochastic corrections `C_J`, stochastic weights
//! `sigma_J`, the `psi` and `phi` families and the degenerate particle-system weights.

use crate::error::{Error, Result};
use crate::specfun::{
    c, checked_inv, elliptic_pochhammer, q_pochhammer, vwp_basic_w, EllipticContext, C64, POLE_TOL,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Arrow configuration `(i1, j1; i2, j2)`: vertical in, horizontal in, vertical out, horizontal out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrowConfig {
    pub i1: u32,
    pub j1: u32,
    pub i2: u32,
    pub j2: u32,
}

impl ArrowConfig {
    pub const fn new(i1: u32, j1: u32, i2: u32, j2: u32) -> Self {
        Self { i1, j1, i2, j2 }
    }

    /// `i1 + j1 == i2 + j2`.
    pub fn conserving(&self) -> bool {
        self.i1 + self.j1 == self.i2 + self.j2
    }

    /// The conserving configuration with inputs `(i1, j1)` and horizontal output `j2`, if `i2 >= 0`.
    pub fn from_inputs(i1: u32, j1: u32, j2: u32) -> Option<Self> {
        (i1 + j1).checked_sub(j2).map(|i2| Self::new(i1, j1, i2, j2))
    }
}

/// Parameters of the unfused weights: spectral `v`, dynamical `lambda`, spin `Lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnfusedWeightParams {
    pub v: C64,
    pub lambda: C64,
    /// The spin `Lambda`.
    pub spin: C64,
    pub ctx: EllipticContext,
}

impl UnfusedWeightParams {
    pub fn new(v: C64, lambda: C64, spin: C64, ctx: EllipticContext) -> Self {
        Self { v, lambda, spin, ctx }
    }

    fn eta(&self) -> C64 {
        self.ctx.eta()
    }

    fn with_v_lambda(&self, v: C64, lambda: C64) -> Self {
        Self { v, lambda, ..*self }
    }
}

fn f(p: &UnfusedWeightParams, z: C64) -> C64 {
    p.ctx.f(z)
}

/// Unfused weight `W_1(i1, j1; i2, j2 | v, lambda)`.
pub fn w1(cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    if !cfg.conserving() || cfg.j1 > 1 || cfg.j2 > 1 {
        return Ok(c(0.0));
    }
    let eta = p.eta();
    let (v, lam, big) = (p.v, p.lambda, p.spin);
    let k = cfg.i1 as f64;
    let den = checked_inv(f(p, eta * big - v) * f(p, lam), "f(eta Lambda - v) f(lambda)")?;
    let val = match (cfg.j1, cfg.j2) {
        (0, 0) => f(p, eta * (big - 2.0 * k) - v) * f(p, lam + 2.0 * k * eta),
        (1, 0) => f(p, v + lam + eta * (2.0 * k + 2.0 - big)) * f(p, 2.0 * eta),
        (0, 1) => {
            let inv2 = checked_inv(f(p, 2.0 * eta), "f(2 eta)")?;
            f(p, lam - v + eta * (2.0 * k - 2.0 - big)) * f(p, 2.0 * eta * (big + 1.0 - k)) * f(p, 2.0 * k * eta) * inv2
        }
        _ => f(p, eta * (2.0 * k - big) - v) * f(p, lam + 2.0 * eta * (k - big)),
    };
    Ok(val * den)
}

/// Weight of one column of `J = j1_bits.len()` unfused rows. Row `k` (1-based, from
/// the bottom) has spectral parameter `p.v + 2 eta (k - 1)`; `p.lambda` is the
/// dynamical parameter of the top row, and moving down one row shifts it by `-2 eta`
/// when the upper row has horizontal input 0 and by `+2 eta` when it has input 1.
/// Vertical arrows flow upward: `i1` enters the bottom row and `i2` leaves the top.
pub fn column_weight(i1: u32, j1_bits: &[u8], i2: u32, j2_bits: &[u8], p: &UnfusedWeightParams) -> Result<C64> {
    let jn = j1_bits.len();
    if j2_bits.len() != jn {
        return Err(Error::InadmissibleParameters("column bit vectors differ in length".into()));
    }
    if j1_bits.iter().chain(j2_bits).any(|&b| b > 1) {
        return Err(Error::InadmissibleParameters("column bits must be 0 or 1".into()));
    }
    let eta = p.eta();
    let mut phi = vec![c(0.0); jn];
    if jn > 0 {
        phi[jn - 1] = p.lambda;
        for k in (0..jn - 1).rev() {
            let shift = if j1_bits[k + 1] == 1 { 2.0 } else { -2.0 };
            phi[k] = phi[k + 1] + shift * eta;
        }
    }
    let mut vert = i1 as i64;
    let mut w = c(1.0);
    for k in 0..jn {
        let next = vert + j1_bits[k] as i64 - j2_bits[k] as i64;
        if next < 0 {
            return Ok(c(0.0));
        }
        let cfg = ArrowConfig::new(vert as u32, j1_bits[k] as u32, next as u32, j2_bits[k] as u32);
        let pk = p.with_v_lambda(p.v + 2.0 * eta * k as f64, phi[k]);
        w *= w1(cfg, &pk)?;
        if w == c(0.0) {
            return Ok(w);
        }
        vert = next;
    }
    Ok(if vert == i2 as i64 { w } else { c(0.0) })
}

/// All 0-1 vectors of length `n` with `weight` ones, in lexicographic order.
pub fn bit_vectors(n: usize, weight: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize == weight {
            out.push((0..n).map(|k| ((mask >> k) & 1) as u8).collect());
        }
    }
    out
}

/// `hat W_J` by direct enumeration of column microstates.
pub fn w_hat_enumerated(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    let n = jn as usize;
    if cfg.j1 > jn || cfg.j2 > jn || !cfg.conserving() {
        return Ok(c(0.0));
    }
    let mut s = c(0.0);
    for a in bit_vectors(n, cfg.j1 as usize) {
        for b in bit_vectors(n, cfg.j2 as usize) {
            s += column_weight(cfg.i1, &a, cfg.i2, &b, p)?;
        }
    }
    Ok(s)
}

/// Binomial coefficient as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for t in 0..k {
        r = r * (n - t) as f64 / (t + 1) as f64;
    }
    r
}

/// Memo table for the fused recursion at one parameter point.
pub struct FusedMemo {
    p: UnfusedWeightParams,
    table: HashMap<(u32, u32, u32, u32, u32, i32), C64>,
}

impl FusedMemo {
    pub fn new(p: UnfusedWeightParams) -> Self {
        Self { p, table: HashMap::new() }
    }

    /// `hat W_J(i1, j1; i2, j2 | v, lambda + 2 eta off)`.
    fn w_hat(&mut self, jn: u32, i1: i64, j1: i64, i2: i64, j2: i64, off: i32) -> Result<C64> {
        if i1 < 0 || j1 < 0 || i2 < 0 || j2 < 0 {
            return Ok(c(0.0));
        }
        if jn == 0 {
            return Ok(if j1 == 0 && j2 == 0 && i1 == i2 { c(1.0) } else { c(0.0) });
        }
        if j1 > jn as i64 || j2 > jn as i64 || i1 + j1 != i2 + j2 {
            return Ok(c(0.0));
        }
        let key = (jn, i1 as u32, j1 as u32, i2 as u32, j2 as u32, off);
        if let Some(&v) = self.table.get(&key) {
            return Ok(v);
        }
        let eta = self.p.eta();
        let top = self.p.with_v_lambda(self.p.v + 2.0 * eta * (jn - 1) as f64, self.p.lambda + 2.0 * eta * off as f64);
        let mut s = c(0.0);
        for a in 0..=1i64 {
            for b in 0..=1i64 {
                let mid = i2 + b - a;
                if j1 < a || j2 < b || mid < 0 {
                    continue;
                }
                let lower = self.w_hat(jn - 1, i1, j1 - a, mid, j2 - b, off + if a == 1 { 1 } else { -1 })?;
                if lower == c(0.0) {
                    continue;
                }
                s += lower * w1(ArrowConfig::new(mid as u32, a as u32, i2 as u32, b as u32), &top)?;
            }
        }
        self.table.insert(key, s);
        Ok(s)
    }

    /// Fused weight `W_J = hat W_J / binom(J, j2)`.
    pub fn w_fused(&mut self, jn: u32, cfg: ArrowConfig) -> Result<C64> {
        if jn == 0 {
            return Err(Error::InadmissibleParameters("J must be positive".into()));
        }
        if cfg.j1 > jn || cfg.j2 > jn || !cfg.conserving() {
            return Ok(c(0.0));
        }
        let h = self.w_hat(jn, cfg.i1 as i64, cfg.j1 as i64, cfg.i2 as i64, cfg.j2 as i64, 0)?;
        Ok(h / binomial(jn, cfg.j2))
    }
}

/// Fused weight `W_J` via the four-term recursion with `hat W_1 = W_1`.
pub fn w_fused_recursive(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    FusedMemo::new(*p).w_fused(jn, cfg)
}

/// `W_J` from the closed form, falling back to the recursion where the series has
/// removable poles (special spins).
pub fn w_fused(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    match w_fused_closed(jn, cfg, p) {
        Err(Error::SingularParameter(_)) => w_fused_recursive(jn, cfg, p),
        r => r,
    }
}

/// Argument `l*lambda + v_c*v + s_c*eta*Lambda + 2 eta (c0 + ci*i1 + cj*J)`, kept
/// symbolic so that structural zeros of `f` can be paired with structural poles.
#[derive(Clone, Copy, Debug)]
struct Arg {
    lam: i32,
    v: i32,
    spin: i32,
    n: i64,
    /// Sensitivity of `n` to the joint perturbation `i1 -> i1 + e`, `J -> J + e`.
    s: i64,
}

impl std::ops::Sub for Arg {
    type Output = Arg;
    fn sub(self, o: Arg) -> Arg {
        Arg { lam: self.lam - o.lam, v: self.v - o.v, spin: self.spin - o.spin, n: self.n - o.n, s: self.s - o.s }
    }
}

impl Arg {
    fn shift(self, dn: i64) -> Arg {
        Arg { n: self.n + dn, ..self }
    }
}

/// Value times `e^ord` in the perturbation parameter.
#[derive(Clone, Copy, Debug)]
struct Lv {
    val: C64,
    ord: i32,
}

impl Lv {
    fn one() -> Self {
        Lv { val: c(1.0), ord: 0 }
    }
    fn mul(self, o: Lv) -> Lv {
        Lv { val: self.val * o.val, ord: self.ord + o.ord }
    }
    fn div(self, o: Lv, what: &str) -> Result<Lv> {
        Ok(Lv { val: self.val * checked_inv(o.val, what)?, ord: self.ord - o.ord })
    }
}

struct ArgEval<'a> {
    p: &'a UnfusedWeightParams,
    i1: i64,
    jn: i64,
}

impl ArgEval<'_> {
    /// `l*lambda + vc*v + sc*eta*Lambda + 2 eta (c0 + ci*i1 + cj*J)`.
    fn arg(&self, lam: i32, vc: i32, sc: i32, c0: i64, ci: i64, cj: i64) -> Arg {
        Arg { lam, v: vc, spin: sc, n: c0 + ci * self.i1 + cj * self.jn, s: ci + cj }
    }

    fn value(&self, a: Arg) -> C64 {
        let eta = self.p.eta();
        self.p.lambda * a.lam as f64 + self.p.v * a.v as f64 + eta * self.p.spin * a.spin as f64 + 2.0 * eta * a.n as f64
    }

    fn f(&self, a: Arg) -> Lv {
        if a.lam == 0 && a.v == 0 && a.spin == 0 && a.n == 0 {
            // f(2 eta s e) ~ 2 eta s f'(0) e; the common factor 2 eta f'(0) cancels
            // between paired zeros and poles, leaving the sensitivity s.
            return Lv { val: c(a.s as f64), ord: if a.s == 0 { 0 } else { 1 } };
        }
        Lv { val: self.p.ctx.f(self.value(a)), ord: 0 }
    }

    /// Elliptic Pochhammer `[a]_k` with structural zero tracking.
    fn ep(&self, a: Arg, k: i64) -> Result<Lv> {
        let mut r = Lv::one();
        if k >= 0 {
            for j in 0..k {
                r = r.mul(self.f(a.shift(-j)));
            }
        } else {
            for j in 1..=(-k) {
                r = r.div(self.f(a.shift(j)), "[a]_k, k<0")?;
            }
        }
        Ok(r)
    }
}

/// Fused weight `W_J` via the closed form: prefactor times a terminating `12v11`
/// with termination index `min(j1, j2)`. Zero/pole pairs that appear when `i1 < j2` or
/// `j1 + j2 > J` are resolved as the joint limit `i1 -> i1 + e`, `J -> J + e`.
pub fn w_fused_closed(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    if jn == 0 {
        return Err(Error::InadmissibleParameters("J must be positive".into()));
    }
    if cfg.j1 > jn || cfg.j2 > jn || !cfg.conserving() {
        return Ok(c(0.0));
    }
    let (i1, j1, i2, j2, jj) = (cfg.i1 as i64, cfg.j1 as i64, cfg.i2 as i64, cfg.j2 as i64, jn as i64);
    let e = ArgEval { p, i1, jn: jj };
    let a = |l, v, s, c0, ci, cj| e.arg(l, v, s, c0, ci, cj);

    let f2 = p.ctx.f(2.0 * p.eta());
    let mut num = Lv { val: f2.powi((i2 - i1) as i32), ord: 0 };
    let mut den = Lv::one();
    // [2 eta Lambda]_{i1} / [2 eta Lambda]_{i2}
    num = num.mul(e.ep(a(0, 0, 2, 0, 0, 0), i1)?);
    den = den.mul(e.ep(a(0, 0, 2, 0, 0, 0), i2)?);
    num = num.mul(e.ep(a(0, 0, 0, 0, 1, 0), j2)?);
    num = num.mul(e.ep(a(0, 0, 0, -j2, 0, 1), j1)?);
    num = num.mul(e.ep(a(0, -1, 1, -j1, -1, 0), jj - j1 - j2)?);
    num = num.mul(e.ep(a(0, 0, 2, j2, -1, 0), j1)?);
    den = den.mul(e.ep(a(0, 0, 0, j1, 0, 0), j1)?);
    den = den.mul(e.ep(a(0, -1, 1, 0, 0, 0), jj)?);
    num = num.mul(e.ep(a(1, 0, 0, j1 - j2, 1, 0), jj - j1 - j2)?);
    num = num.mul(e.ep(a(1, -1, -1, 2 * j1, 1, -1), j2)?);
    num = num.mul(e.ep(a(1, 1, -1, 2 * j1 - 1, 1, 0), j1)?);
    den = den.mul(e.ep(a(1, 0, 0, 2 * j1 + j2, 0, -1), j2)?);
    den = den.mul(e.ep(a(1, 0, 0, j1, 0, 0), jj - j1 - j2)?);
    den = den.mul(e.ep(a(1, 0, 0, 2 * j1 + j2 - 1, 0, -1), j1)?);
    let pre = num.div(den, "fused prefactor")?;

    let a1 = a(1, 0, 0, 2 * j1 + j2, 0, -1);
    let rest = [
        a(0, 0, 0, j1, 0, 0),
        a(0, 0, 0, j2, 0, 0),
        a(1, 0, 0, j1, 0, 0),
        a(1, 0, -2, 2 * j1 - 1, 1, -1),
        a(0, 1, 1, j2 - 1, -1, 0),
        a(0, -1, 1, j2, -1, -1),
        a(1, 0, 0, 2 * j1, 1, -1),
    ];
    let minus2eta = a(0, 0, 0, -1, 0, 0);
    let fa1 = e.f(a1);
    let mut total = c(0.0);
    for k in 0..=j1.min(j2) {
        let mut t = e.ep(a1, k)?.div(e.ep(minus2eta, k)?, "[-2 eta]_k")?;
        t = t.mul(e.f(a1.shift(-2 * k))).div(fa1, "f(a1)")?;
        for &aj in &rest {
            t = t.mul(e.ep(aj, k)?).div(e.ep(a1 - aj - a(0, 0, 0, 1, 0, 0), k)?, "[a1 - a_j - 2 eta]_k")?;
        }
        let term = pre.mul(t);
        match term.ord {
            0 => total += term.val,
            o if o > 0 => {}
            _ => return Err(Error::SingularParameter("unpaired pole in fused closed form".into())),
        }
    }
    Ok(total)
}

/// Patterns with fully factored fused weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialCase {
    /// `(i, J; i + J - j, j)`.
    JEqualsJ1,
    /// `(i, j; i + j, 0)`.
    J2Zero,
    /// `(i, j; i + j - J, J)`.
    J2Full,
    /// `v = -eta Lambda`, any configuration.
    VLambda,
}

/// Factored fused weight for a special pattern.
pub fn w_fused_special(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams, case: SpecialCase) -> Result<C64> {
    let ctx = &p.ctx;
    let eta = p.eta();
    let (v, lam, big) = (p.v, p.lambda, p.spin);
    let ep = |a: C64, k: i64| elliptic_pochhammer(a, k, ctx);
    let f2 = ctx.f(2.0 * eta);
    let jj = jn as i64;
    let e2 = 2.0 * eta;
    let bin = |j: i64| -> Result<C64> { Ok(ep(e2 * jj as f64, jj)? / (ep(e2 * (jj - j) as f64, jj - j)? * ep(e2 * j as f64, j)?)) };
    match case {
        SpecialCase::JEqualsJ1 => {
            if cfg.j1 != jn || !cfg.conserving() || cfg.j2 > jn {
                return Err(Error::PatternMismatch(format!("{cfg:?} is not (i, J; i+J-j, j)")));
            }
            let (i, j) = (cfg.i1 as f64, cfg.j2 as i64);
            let jf = jj as f64;
            let jv = j as f64;
            let num = f2.powi((jj - j) as i32)
                * ep(e2 * i - eta * big - v, j)?
                * ep(v + lam - eta * big + e2 * (i + 2.0 * jf - jv - 1.0), jj - j)?
                * ep(lam + e2 * (i + jf - big - 1.0), j)?;
            let den = ep(eta * big - v, jj)? * ep(lam + e2 * (jf - 1.0), jj)?;
            Ok(num * checked_inv(den, "wjjj denominator")?)
        }
        SpecialCase::J2Zero => {
            if cfg.j2 != 0 || !cfg.conserving() || cfg.j1 > jn {
                return Err(Error::PatternMismatch(format!("{cfg:?} is not (i, j; i+j, 0)")));
            }
            let (i, j) = (cfg.i1 as f64, cfg.j1 as i64);
            let jv = j as f64;
            let num = f2.powi(j as i32)
                * bin(j)?
                * ep(lam + e2 * (i + jv), jj - j)?
                * ep(v + lam + e2 * (i + 2.0 * jv - 1.0) - eta * big, j)?
                * ep(eta * big - e2 * (i + jv) - v, jj - j)?;
            let den = ep(eta * big - v, jj)? * ep(lam + e2 * jv, jj - j)? * ep(lam + e2 * (2.0 * jv - jj as f64 - 1.0), j)?;
            Ok(num * checked_inv(den, "wjj20 denominator")?)
        }
        SpecialCase::J2Full => {
            if cfg.j2 != jn || !cfg.conserving() || cfg.j1 > jn {
                return Err(Error::PatternMismatch(format!("{cfg:?} is not (i, j; i+j-J, J)")));
            }
            let (i, j) = (cfg.i1 as f64, cfg.j1 as i64);
            let (jv, jf) = (j as f64, jj as f64);
            let num = f2.powi((j - jj) as i32)
                * bin(j)?
                * ep(e2 * i, jj - j)?
                * ep(e2 * (i + jv - jf) - eta * big - v, j)?
                * ep(e2 * (big - i - jv + jf), jj - j)?
                * ep(lam + e2 * (i + jv - jf) - eta * big - v, jj - j)?
                * ep(lam + e2 * (i + 2.0 * jv - jf - big - 1.0), j)?;
            let den = ep(eta * big - v, jj)? * ep(lam + e2 * jv, jj - j)? * ep(lam + e2 * (2.0 * jv - jf - 1.0), j)?;
            Ok(num * checked_inv(den, "wjj2j denominator")?)
        }
        SpecialCase::VLambda => {
            if (v + eta * big).norm() > 1e-12 * (1.0 + (eta * big).norm()) {
                return Err(Error::PatternMismatch("v must equal -eta Lambda".into()));
            }
            if cfg.j1 > jn || cfg.j2 > jn || !cfg.conserving() {
                return Ok(c(0.0));
            }
            if cfg.i1 < cfg.j2 {
                return Ok(c(0.0));
            }
            let (i1, i2, j1, j2) = (cfg.i1 as i64, cfg.i2 as i64, cfg.j1 as i64, cfg.j2 as i64);
            let (i1f, i2f, j1f, jf) = (i1 as f64, i2 as f64, j1 as f64, jj as f64);
            let num = f2.powi((i2 - i1) as i32)
                * ep(e2 * jf, jj)?
                * ep(e2 * big, i1)?
                * ep(e2 * i1f, j2)?
                * ep(e2 * (big - i1f), jj - j2)?
                * ep(lam + e2 * i2f, jj - j1)?
                * ep(lam + e2 * (i2f + j1f - big - 1.0), j1)?;
            let den = ep(e2 * j1f, j1)?
                * ep(e2 * (jf - j1f), jj - j1)?
                * ep(e2 * big, i2)?
                * ep(e2 * big, jj)?
                * ep(lam + e2 * j1f, jj - j1)?
                * ep(lam + e2 * (2.0 * j1f - jf - 1.0), j1)?;
            Ok(num * checked_inv(den, "vLambda denominator")?)
        }
    }
}

/// Stochastic correction `C_J(i1, j1; i2, j2 | lambda, Lambda)`.
pub fn c_correction(jn: u32, cfg: ArrowConfig, lambda: C64, spin: C64, ctx: &EllipticContext) -> Result<C64> {
    let eta = ctx.eta();
    let e2 = 2.0 * eta;
    let ep = |a: C64, k: i64| elliptic_pochhammer(a, k, ctx);
    let (i1, j1, i2, j2, jj) = (cfg.i1 as i64, cfg.j1 as i64, cfg.i2 as i64, cfg.j2 as i64, jn as i64);
    let (i1f, j1f, j2f, jf) = (i1 as f64, j1 as f64, j2 as f64, jj as f64);
    let l = lambda;
    let num = ctx.f(e2).powi((j2 - j1) as i32)
        * ep(e2 * spin, i2)?
        * ep(l + e2 * (i1f + 2.0 * j1f - jf), j2)?
        * ep(l + e2 * (i1f + 2.0 * j1f - j2f - 1.0 - spin), jj - j2)?
        * ep(l + e2 * j1f, jj - j1)?
        * ep(l + e2 * (2.0 * j1f - jf - 1.0), j1)?;
    let den = ep(e2 * spin, i1)?
        * ep(l + e2 * (i1f + j1f - j2f), jj - j1)?
        * ep(l + e2 * (i1f + 2.0 * j1f - j2f - 1.0 - spin), j1)?
        * ep(l + e2 * (2.0 * i1f + 2.0 * j1f - j2f - spin), j2)?
        * ep(l + e2 * (2.0 * i1f + 2.0 * j1f - 2.0 * j2f - 1.0 - spin), jj - j2)?;
    Ok(num * checked_inv(den, "stochastic correction denominator")?)
}

/// Elliptic binomial `[2 eta J]_J / ([2 eta j]_j [2 eta (J - j)]_{J - j})`.
pub fn elliptic_binomial(jn: u32, j: u32, ctx: &EllipticContext) -> Result<C64> {
    let e2 = 2.0 * ctx.eta();
    let (jj, j) = (jn as i64, j as i64);
    let num = elliptic_pochhammer(e2 * jj as f64, jj, ctx)?;
    let den = elliptic_pochhammer(e2 * j as f64, j, ctx)? * elliptic_pochhammer(e2 * (jj - j) as f64, jj - j, ctx)?;
    Ok(num * checked_inv(den, "elliptic binomial")?)
}

/// Stochastic weight `sigma_J = C_J W_J EB(j2) / EB(j1)`.
pub fn sigma(jn: u32, cfg: ArrowConfig, p: &UnfusedWeightParams) -> Result<C64> {
    if cfg.j1 > jn || cfg.j2 > jn || !cfg.conserving() {
        return Ok(c(0.0));
    }
    let w = w_fused(jn, cfg, p)?;
    if w == c(0.0) {
        return Ok(w);
    }
    let corr = c_correction(jn, cfg, p.lambda, p.spin, &p.ctx)?;
    let eb = elliptic_binomial(jn, cfg.j2, &p.ctx)? * checked_inv(elliptic_binomial(jn, cfg.j1, &p.ctx)?, "elliptic binomial")?;
    Ok(corr * w * eb)
}

/// Parameters of the `psi` weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiParams {
    pub u: C64,
    pub s: C64,
    pub q: C64,
    #[serde(rename = "J")]
    pub j: u32,
    pub kappa: C64,
}

/// Parameters of the `phi` weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiParams {
    pub q: C64,
    pub a: C64,
    pub b: C64,
    pub kappa: C64,
}

const TWO_PI_I: C64 = C64 { re: 0.0, im: 2.0 * PI };

/// Trigonometric weight parameters realising `psi(cfg | kappa)` as `sigma_J`:
/// `q = e^{-4 pi i eta}`, `s = e^{2 pi i eta Lambda}`, `u = e^{-2 pi i v}` and
/// `kappa = q^{2 j1 - J} e^{-2 pi i lambda}`.
pub fn psi_to_sigma_params(cfg: ArrowConfig, p: &PsiParams) -> Result<UnfusedWeightParams> {
    if p.q.norm() < POLE_TOL || p.s.norm() < POLE_TOL || p.u.norm() < POLE_TOL {
        return Err(Error::SingularParameter("q, s and u must be nonzero".into()));
    }
    if p.kappa.norm() < POLE_TOL {
        return Err(Error::SingularParameter("kappa = 0 has no additive dynamical parameter".into()));
    }
    let eta = -p.q.ln() / (2.0 * TWO_PI_I);
    if eta.norm() < POLE_TOL {
        return Err(Error::SingularParameter("q = 1".into()));
    }
    let eta_spin = p.s.ln() / TWO_PI_I;
    let spin = eta_spin / eta;
    let v = -p.u.ln() / TWO_PI_I;
    let lambda = -2.0 * eta * (2.0 * cfg.j1 as f64 - p.j as f64) - p.kappa.ln() / TWO_PI_I;
    Ok(UnfusedWeightParams::new(v, lambda, spin, EllipticContext::trigonometric(eta)))
}

/// `psi_{u; s; q; J}(i1, j1; i2, j2 | kappa)`, evaluated as `sigma_J` in trigonometric mode.
pub fn psi(cfg: ArrowConfig, p: &PsiParams) -> Result<C64> {
    if p.j == 0 {
        return Err(Error::InadmissibleParameters("J must be positive".into()));
    }
    if cfg.j1 > p.j || cfg.j2 > p.j || !cfg.conserving() {
        return Ok(c(0.0));
    }
    let sp = psi_to_sigma_params(cfg, p)?;
    sigma(p.j, cfg, &sp)
}

/// The `10W9` form of `psi` with the series argument `z` left explicit.
pub fn psi_vwp_form(cfg: ArrowConfig, p: &PsiParams, z: C64) -> Result<C64> {
    if cfg.j1 > p.j || cfg.j2 > p.j || !cfg.conserving() {
        return Ok(c(0.0));
    }
    let (i1, j1, j2, jj) = (cfg.i1 as i32, cfg.j1 as i32, cfg.j2 as i32, p.j as i32);
    let (q, u, s) = (p.q, p.u, p.s);
    let ki = checked_inv(p.kappa, "kappa")?;
    let qp = |n: i32| q.powi(n);
    let poch = |a: C64, k: i32| q_pochhammer(a, q, k as i64);
    let num = qp((j2 - i1) * jj)
        * (u / s).powi(j1)
        * poch(qp(i1 - j2 + 1), j2)?
        * poch(qp(j2 - jj), j1)?
        * poch(s * u * qp(jj), i1 - j2)?
        * poch(s * s * qp(i1 - j2), j1)?
        * poch(u / s * ki * qp(-i1), j2)?
        * poch(qp(1 - i1 - jj) / (u * s) * ki, j1)?
        * poch(q * ki, j1)?
        * poch(qp(j2 - 2 * i1 + 1) / (s * s) * ki, i1 - j2)?;
    let den = poch(s * u, i1 + j1)?
        * poch(q, j2)?
        * poch(qp(j2 - jj), j1 - j2)?
        * poch(qp(1 - j2) * ki, j1)?
        * poch(qp(j2 - i1 - jj + 1) / (s * s) * ki, j1)?
        * poch(qp(j2 - 2 * i1 - jj) / (s * s) * ki, j2)?
        * poch(qp(2 * j2 - 2 * i1 - jj + 1) / (s * s) * ki, i1 - j2)?;
    let series = vwp_basic_w(
        qp(-j2) * ki,
        &[qp(-j1), qp(-j2), qp(j1 - jj) * ki, qp(1 - i1) / (s * s) * ki, s / u * qp(i1 - j2 + 1), u * s * qp(i1 - j2 + jj), qp(-i1) * ki],
        q,
        z,
        Some(cfg.j1.min(cfg.j2) as usize),
    )?;
    Ok(num * checked_inv(den, "10W9 prefactor")? * series)
}

/// `phi_{q, a, b, kappa}(j | i)`.
pub fn phi(j: u32, i: u32, p: &PhiParams) -> Result<C64> {
    if j > i {
        return Ok(c(0.0));
    }
    let PhiParams { q, a, b, kappa } = *p;
    let (i, j) = (i as i64, j as i64);
    let poch = |x: C64, k: i64| q_pochhammer(x, q, k);
    let qp = |n: i64| q.powi(n as i32);
    let num = [poch(q, i)?, poch(b * checked_inv(a, "a")?, j)?, poch(a, i - j)?, poch(qp(i) * b * kappa, i - j)?, poch(qp(i - j + 1) * kappa, j)?];
    let den = [poch(q, j)?, poch(q, i - j)?, poch(b, i)?, poch(qp(i - j) * a * kappa, i - j)?, poch(qp(2 * i - 2 * j + 1) * a * kappa, j)?];
    let mut r = a.powi(j as i32);
    for (n, d) in num.iter().zip(&den) {
        r *= n * checked_inv(*d, "phi denominator")?;
    }
    Ok(r)
}

/// Real `phi(j | i)` for `j = 0..=i` with real parameters, used by the samplers.
pub fn phi_row_real(i: u32, q: f64, a: f64, b: f64, kappa: f64, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    let poch = |x: f64, k: u32| -> f64 {
        let mut p = 1.0;
        let mut y = x;
        for _ in 0..k {
            p *= 1.0 - y;
            y *= q;
        }
        p
    };
    let qi = poch(q, i);
    let bi = poch(b, i);
    let mut qpow = vec![1.0f64; 2 * i as usize + 2];
    for t in 1..qpow.len() {
        qpow[t] = qpow[t - 1] * q;
    }
    for j in 0..=i {
        let r = i - j;
        let num = [qi, poch(b / a, j), poch(a, r), poch(qpow[i as usize] * b * kappa, r), poch(qpow[r as usize + 1] * kappa, j)];
        let den = [poch(q, j), poch(q, r), bi, poch(qpow[r as usize] * a * kappa, r), poch(qpow[2 * r as usize + 1] * a * kappa, j)];
        let mut w = a.powi(j as i32);
        for (n, d) in num.iter().zip(&den) {
            if !(d.abs() >= POLE_TOL) {
                return Err(Error::SingularParameter(format!("phi({j}|{i}) denominator {d}")));
            }
            w *= n / d;
        }
        out.push(w);
    }
    Ok(())
}

/// Degenerate particle-system weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degeneration {
    /// Discrete-time AIP: `phi(j | i)` in the limit `a = 1 - A e`, `b = (1 - B e) a`.
    Aip { rate_a: f64, rate_b: f64, i: u32, j: u32 },
    /// Dynamical `(q; 1; delta)`-asymmetric PEP: `phi` with `a = 1/q`, `b = 1/q^2`.
    AsymPep { q: f64, kappa: f64, i: u32, j: u32 },
    /// Dynamical `(A, J; gamma)`-PEP with Hahn weights, `kappa = q^{-kappa_hat}`, `q -> 1`.
    HahnPep { a_cap: u32, j_cap: u32, kappa_hat: f64, i: u32, j: u32 },
    /// Dynamical `(J; gamma)`-PEP: probability that `x` particles leave a site holding `occupancy`.
    JgammaPep { j_cap: u32, upsilon: f64, occupancy: u32, x: u32 },
    /// Dynamical totally asymmetric MADM jump rate.
    MadmRate { q: f64, kappa_hat: f64, i: u32, j: u32 },
}

fn rising(a: f64, k: i64) -> f64 {
    crate::specfun::rational_pochhammer(c(a), k).map(|z| z.re).unwrap_or(f64::NAN)
}

/// Closed-form probability or rate of a degenerate model.
pub fn degeneration_weight(kind: &Degeneration) -> Result<f64> {
    match *kind {
        Degeneration::Aip { rate_a, rate_b, i, j } => {
            if !(rate_a > 0.0 && rate_b > 0.0) {
                return Err(Error::InadmissibleParameters("AIP rates must be positive".into()));
            }
            Ok(if i == 0 {
                if j == 0 { 1.0 } else { 0.0 }
            } else if j == 0 {
                rate_a / (rate_a + rate_b)
            } else if j == i {
                rate_b / (rate_a + rate_b)
            } else {
                0.0
            })
        }
        Degeneration::AsymPep { q, kappa, i, j } => {
            if !(q > 0.0 && q < 1.0 && kappa <= 0.0) {
                return Err(Error::InadmissibleParameters("asym PEP needs q in (0,1) and kappa <= 0".into()));
            }
            if i > 2 {
                return Err(Error::InadmissibleParameters("asym PEP site capacity is 2".into()));
            }
            let v = phi(j, i, &PhiParams { q: c(q), a: c(1.0 / q), b: c(1.0 / (q * q)), kappa: c(kappa) })?;
            Ok(v.re)
        }
        Degeneration::HahnPep { a_cap, j_cap, kappa_hat, i, j } => {
            if !(kappa_hat > 2.0 * (a_cap + j_cap) as f64) {
                return Err(Error::InadmissibleParameters("Hahn PEP needs kappa_hat > 2A + 2J".into()));
            }
            if i > a_cap + j_cap {
                return Err(Error::InadmissibleParameters("occupancy exceeds A + J".into()));
            }
            if j > i || j > j_cap || i - j > a_cap {
                return Ok(0.0);
            }
            let (a, jc, k) = (a_cap as f64, j_cap as f64, kappa_hat);
            let (ii, jj) = (i as i64, j as i64);
            let (fi, fj) = (i as f64, j as f64);
            let binom = binomial(j_cap, j) * binomial(a_cap, i - j) / binomial(a_cap + j_cap, i);
            let num = rising(fi - a - jc - k, ii - jj) * rising(fi - fj - k + 1.0, jj);
            let den = rising(fi - fj - a - k, ii - jj) * rising(2.0 * fi - 2.0 * fj + 1.0 - a - k, jj);
            if !(den.abs() >= POLE_TOL) {
                return Err(Error::SingularParameter("Hahn PEP denominator".into()));
            }
            Ok(binom * num / den)
        }
        Degeneration::JgammaPep { j_cap, upsilon, occupancy, x } => {
            let jc = j_cap as f64;
            if !(upsilon >= jc + 1.0) {
                return Err(Error::InadmissibleParameters(format!("Upsilon = {upsilon} < J + 1")));
            }
            if occupancy > j_cap + 1 {
                return Err(Error::InadmissibleParameters("occupancy exceeds J + 1".into()));
            }
            let eta = occupancy as f64;
            Ok(if occupancy >= 1 && x + 1 == occupancy {
                eta / (jc + 1.0) * (1.0 + (jc + 1.0 - eta) / upsilon)
            } else if x == occupancy {
                (jc + 1.0 - eta) / (jc + 1.0) * (1.0 - eta / upsilon)
            } else {
                0.0
            })
        }
        Degeneration::MadmRate { q, kappa_hat, i, j } => {
            if j == 0 {
                return Err(Error::InadmissibleParameters("MADM rates are defined for j >= 1".into()));
            }
            if j > i {
                return Ok(0.0);
            }
            let (i, j) = (i as i32, j as i32);
            let den = (1.0 - q.powi(j)) * (1.0 - q.powi(2 * i - j + 1) * kappa_hat);
            if !(den.abs() >= POLE_TOL) {
                return Err(Error::SingularParameter("MADM denominator".into()));
            }
            Ok(q.powi(j) * (1.0 - q.powi(2 * i - 2 * j + 1) * kappa_hat) / den)
        }
    }
}

/// Weight families of the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    /// Enumeration, recursion, closed form and factored special cases of `W_J`.
    Fused,
    /// Row sums of `sigma_J` in trigonometric mode.
    Sigma,
    /// Row sums of `psi` and `psi(u = s) = phi`.
    Psi,
    /// Row sums of `phi`.
    Phi,
}

impl WeightFamily {
    pub const ALL: [WeightFamily; 4] = [Self::Fused, Self::Sigma, Self::Psi, Self::Phi];

    /// Default relative tolerance.
    pub fn default_tol(self) -> f64 {
        match self {
            Self::Fused => 1e-9,
            _ => 1e-10,
        }
    }
}

/// Sizes of the random parameter grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightGrid {
    /// Random points per evaluation mode (elliptic, trigonometric).
    pub points_per_mode: usize,
    /// Largest fusion level `J` of the fused family.
    pub max_j: u32,
    /// Largest vertical count `i1, i2`.
    pub max_i: u32,
    /// Random `psi` points per `J`.
    pub psi_points_per_j: usize,
    /// Largest `J` of the stochastic families.
    pub stochastic_max_j: u32,
    pub seed: u64,
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self { points_per_mode: 20, max_j: 4, max_i: 4, psi_points_per_j: 70, stochastic_max_j: 3, seed: 0 }
    }
}

/// Random generic parameters; elliptic mode when `elliptic`.
pub fn random_unfused_params(rng: &mut impl rand::Rng, elliptic: bool) -> Result<UnfusedWeightParams> {
    let mut cr = |a: f64, b: f64, ia: f64, ib: f64| C64::new(rng.random_range(a..b), rng.random_range(ia..ib));
    let eta = cr(0.05, 0.15, -0.04, 0.04);
    let ctx = if elliptic { EllipticContext::elliptic(cr(-0.3, 0.3, 0.8, 1.5), eta)? } else { EllipticContext::trigonometric(eta) };
    let v = cr(-0.4, 0.4, -0.3, 0.3);
    let lambda = cr(-0.4, 0.4, -0.3, 0.3);
    let spin = cr(0.5, 3.5, -0.5, 0.5);
    Ok(UnfusedWeightParams::new(v, lambda, spin, ctx))
}

/// Random `psi` parameters in the admissible sector used by the suite.
pub fn random_psi_params(rng: &mut impl rand::Rng, jn: u32) -> PsiParams {
    let mut cr = |a: f64, b: f64, ia: f64, ib: f64| C64::new(rng.random_range(a..b), rng.random_range(ia..ib));
    PsiParams { u: cr(0.2, 0.8, -0.2, 0.2), s: cr(-0.8, -0.2, -0.2, 0.2), q: cr(0.2, 0.7, -0.1, 0.1), j: jn, kappa: cr(-1.5, -0.2, -0.3, 0.3) }
}

/// Conserving configurations with `j1, j2 <= jn` and `i1, i2 <= imax`.
pub fn conserving_configs(jn: u32, imax: u32) -> Vec<ArrowConfig> {
    let mut out = Vec::new();
    for i1 in 0..=imax {
        for j1 in 0..=jn {
            for j2 in 0..=jn {
                if let Some(cfg) = ArrowConfig::from_inputs(i1, j1, j2) {
                    if cfg.i2 <= imax {
                        out.push(cfg);
                    }
                }
            }
        }
    }
    out
}

/// Worst-residual accumulator of one named check.
struct Worst {
    name: &'static str,
    value: f64,
    count: usize,
    at: Option<serde_json::Value>,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self { name, value: 0.0, count: 0, at: None }
    }

    fn add(&mut self, r: f64, at: impl FnOnce() -> serde_json::Value) {
        self.count += 1;
        if r.is_nan() || r > self.value {
            self.value = if r.is_nan() { f64::NAN } else { r };
            self.at = Some(at());
        }
    }

    fn check(self, tol: f64) -> crate::report::Check {
        crate::report::Check::new(self.name, self.value, tol).with_detail(serde_json::json!({ "comparisons": self.count, "worst_at": self.at }))
    }
}

fn rel(a: C64, b: C64) -> f64 {
    crate::specfun::rel_diff(a, b, 1e-300)
}

/// Runs one weight family on random grids; `tol` is relative.
pub fn verify_suite(family: WeightFamily, grid: &WeightGrid, tol: f64) -> Result<crate::report::Report> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(grid.seed);
    let mut rep = crate::report::Report::new(format!("weights/{}", serde_json::to_value(family).expect("serializable").as_str().unwrap_or("")));
    let one = C64::new(1.0, 0.0);
    match family {
        WeightFamily::Fused => {
            let mut chain = Worst::new("recursion_vs_closed_form");
            let mut enumer = Worst::new("enumeration_vs_recursion");
            let mut special = [Worst::new("special_j_equals_j1"), Worst::new("special_j2_zero"), Worst::new("special_j2_full")];
            let mut vl = Worst::new("special_v_lambda");
            let mut vl_closed = Worst::new("closed_form_at_v_lambda");
            for elliptic in [false, true] {
                for point in 0..grid.points_per_mode {
                    let p = random_unfused_params(&mut rng, elliptic)?;
                    let pv = UnfusedWeightParams::new(-p.ctx.eta() * p.spin, p.lambda, p.spin, p.ctx);
                    for jn in 1..=grid.max_j {
                        let mut memo = FusedMemo::new(p);
                        let mut memo_v = FusedMemo::new(pv);
                        for cfg in conserving_configs(jn, grid.max_i) {
                            let at = || serde_json::json!({ "elliptic": elliptic, "point": point, "J": jn, "config": cfg });
                            let rec = memo.w_fused(jn, cfg)?;
                            chain.add(rel(rec, w_fused_closed(jn, cfg, &p)?), at);
                            let en = w_hat_enumerated(jn, cfg, &p)? / binomial(jn, cfg.j2);
                            enumer.add(rel(en, rec), at);
                            let cases = [(cfg.j1 == jn, SpecialCase::JEqualsJ1), (cfg.j2 == 0, SpecialCase::J2Zero), (cfg.j2 == jn, SpecialCase::J2Full)];
                            for (k, (applies, case)) in cases.into_iter().enumerate() {
                                if applies {
                                    special[k].add(rel(w_fused_special(jn, cfg, &p, case)?, rec), at);
                                }
                            }
                            // v = -eta Lambda: weights with i1 < j2 vanish identically
                            let rec_v = memo_v.w_fused(jn, cfg)?;
                            let fact = w_fused_special(jn, cfg, &pv, SpecialCase::VLambda)?;
                            let scale = rec_v.norm().max(1e-3);
                            vl.add(if cfg.i1 < cfg.j2 { rec_v.norm() + fact.norm() } else { rel(fact, rec_v) }, at);
                            vl_closed.add((w_fused_closed(jn, cfg, &pv)? - rec_v).norm() / scale, at);
                        }
                    }
                }
            }
            rep.push(enumer.check(tol));
            rep.push(chain.check(tol));
            for w in special {
                rep.push(w.check(tol));
            }
            rep.push(vl.check(tol));
            rep.push(vl_closed.check(tol));
        }
        WeightFamily::Sigma => {
            let mut rows = Worst::new("sigma_row_sums");
            for point in 0..grid.points_per_mode {
                let p = random_unfused_params(&mut rng, false)?;
                for jn in 1..=grid.stochastic_max_j {
                    for i1 in 0..=grid.max_i {
                        for j1 in 0..=jn {
                            let mut s = C64::new(0.0, 0.0);
                            for j2 in 0..=jn {
                                if let Some(cfg) = ArrowConfig::from_inputs(i1, j1, j2) {
                                    s += sigma(jn, cfg, &p)?;
                                }
                            }
                            rows.add(rel(s, one), || serde_json::json!({ "point": point, "J": jn, "i1": i1, "j1": j1 }));
                        }
                    }
                }
            }
            rep.push(rows.check(tol));
        }
        WeightFamily::Psi => {
            let mut rows = Worst::new("psi_row_sums");
            let mut spec = Worst::new("psi_u_equals_s_is_phi");
            let mut points = 0;
            for jn in 1..=grid.stochastic_max_j {
                for point in 0..grid.psi_points_per_j {
                    let mut p = random_psi_params(&mut rng, jn);
                    for i1 in 0..=grid.max_i {
                        for j1 in 0..=jn {
                            let mut s = C64::new(0.0, 0.0);
                            for j2 in 0..=jn {
                                if let Some(cfg) = ArrowConfig::from_inputs(i1, j1, j2) {
                                    s += psi(cfg, &p)?;
                                }
                            }
                            rows.add(rel(s, one), || serde_json::json!({ "J": jn, "point": point, "i1": i1, "j1": j1 }));
                        }
                    }
                    p.u = p.s;
                    let s2 = p.s * p.s;
                    let pp = PhiParams { q: p.q, a: s2 * p.q.powi(jn as i32), b: s2, kappa: p.kappa };
                    for cfg in conserving_configs(jn, grid.max_i) {
                        let (a, b) = (psi(cfg, &p)?, phi(cfg.j2, cfg.i1, &pp)?);
                        spec.add((a - b).norm() / b.norm().max(1.0), || serde_json::json!({ "J": jn, "point": point, "config": cfg }));
                    }
                    points += 1;
                }
            }
            rep.push(rows.check(tol));
            rep.push(spec.check(tol));
            rep.diagnostic("psi_points", serde_json::json!(points));
        }
        WeightFamily::Phi => {
            let mut rows = Worst::new("phi_row_sums");
            let mut real_rows = Worst::new("phi_real_rows_nonnegative_and_stochastic");
            let mut buf = Vec::new();
            use rand::Rng;
            for jn in 1..=grid.stochastic_max_j {
                for point in 0..grid.psi_points_per_j {
                    let p = random_psi_params(&mut rng, jn);
                    let s2 = p.s * p.s;
                    let pp = PhiParams { q: p.q, a: s2 * p.q.powi(jn as i32), b: s2, kappa: p.kappa };
                    for i in 0..=grid.max_i + jn {
                        let s: C64 = (0..=i).map(|j| phi(j, i, &pp)).sum::<Result<C64>>()?;
                        rows.add(rel(s, one), || serde_json::json!({ "J": jn, "point": point, "i": i }));
                    }
                    // real sector 0 < b < a < 1, kappa < 0, where the rows are probability vectors
                    let (q, a) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
                    let (b, kappa) = (a * rng.random_range(0.05..0.95), rng.random_range(-3.0..0.0));
                    for i in 0..=grid.max_i + jn {
                        phi_row_real(i, q, a, b, kappa, &mut buf)?;
                        let neg = buf.iter().fold(0.0f64, |m, &x| m.max(-x));
                        let sum: f64 = buf.iter().sum();
                        real_rows.add((sum - 1.0).abs().max(neg), || serde_json::json!({ "q": q, "a": a, "b": b, "kappa": kappa, "i": i }));
                    }
                }
            }
            rep.push(rows.check(tol));
            rep.push(real_rows.check(tol));
        }
    }
    Ok(rep)
}
