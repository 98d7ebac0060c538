//! Elliptic weight functions `B_{mu/nu}`, `D_{mu/nu}`, their fused versions and the
//! stochastic modification `B^{(s)}`, as partition functions on a few rows.
//!
//! Coordinates: columns start at 0 (paths from the left enter at column 0), rows are
//! numbered from 1 at the bottom, and `Phi_{0,0}` sits below column 0.

use crate::error::{Error, Result};
use crate::report::{Check, Report};
use crate::specfun::{c, checked_inv, rel_diff, EllipticContext, C64};
use crate::weights::{sigma, w1, w_fused, ArrowConfig, UnfusedWeightParams};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest column index handled by the partition-function DP.
pub const MAX_COLUMN: u32 = 12;
/// Largest number of unfused rows.
pub const MAX_ROWS: u32 = 6;

/// Weakly decreasing list of nonnegative parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    parts: Vec<u32>,
}

impl Signature {
    /// Sorts the parts into weakly decreasing order.
    pub fn new(mut parts: Vec<u32>) -> Self {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Self { parts }
    }

    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `m_j`: number of parts equal to `j`.
    pub fn multiplicity(&self, j: u32) -> u32 {
        self.parts.iter().filter(|&&p| p == j).count() as u32
    }

    pub fn first(&self) -> u32 {
        self.parts.first().copied().unwrap_or(0)
    }

    pub fn last(&self) -> u32 {
        self.parts.last().copied().unwrap_or(0)
    }

    pub fn size(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// All signatures with `len` parts in `[lo, hi]`.
    pub fn all(len: usize, lo: u32, hi: u32) -> Vec<Signature> {
        fn rec(len: usize, lo: u32, hi: u32, prefix: &mut Vec<u32>, out: &mut Vec<Signature>) {
            if prefix.len() == len {
                out.push(Signature { parts: prefix.clone() });
                return;
            }
            for p in (lo..=hi).rev() {
                prefix.push(p);
                rec(len, lo, p, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if lo <= hi || len == 0 {
            rec(len, lo, hi, &mut Vec::new(), &mut out);
        }
        out
    }
}

/// One (possibly fused) row: first spectral parameter `w` and fusion size `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub w: C64,
    pub j: u32,
}

/// Parameters of a partition function: `lambda` is the argument of `B`/`D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSpec {
    pub lambda: C64,
    pub z: Vec<C64>,
    pub spins: Vec<C64>,
    /// Rows from bottom to top.
    pub rows: Vec<RowSpec>,
    pub ctx: EllipticContext,
}

impl ColumnSpec {
    /// Unfused rows with spectral parameters `w`, listed from the bottom row up.
    pub fn unfused(lambda: C64, z: Vec<C64>, spins: Vec<C64>, w: &[C64], ctx: EllipticContext) -> Self {
        let rows = w.iter().map(|&w| RowSpec { w, j: 1 }).collect();
        Self { lambda, z, spins, rows, ctx }
    }

    /// Total number of unfused rows.
    pub fn height(&self) -> u32 {
        self.rows.iter().map(|r| r.j).sum()
    }

    /// Each fused row `(w, J)` replaced by unfused rows `w, w + 2 eta, ..., w + 2 eta (J - 1)`.
    pub fn expanded(&self) -> Self {
        let eta = self.ctx.eta();
        let rows = self
            .rows
            .iter()
            .flat_map(|r| (0..r.j).map(move |k| RowSpec { w: r.w + 2.0 * eta * k as f64, j: 1 }))
            .collect();
        Self { rows, ..self.clone() }
    }

    fn with_rows(&self, rows: Vec<RowSpec>, lambda: C64) -> Self {
        Self { rows, lambda, ..self.clone() }
    }
}

/// The specialization `rho` used by `B^{(s)}`; trigonometric mode only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoSpecialization {
    pub z0: C64,
    pub spin0: C64,
}

impl RhoSpecialization {
    pub fn from_spec(spec: &ColumnSpec) -> Result<Self> {
        match (spec.z.first(), spec.spins.first()) {
            (Some(&z0), Some(&spin0)) => Ok(Self { z0, spin0 }),
            _ => Err(Error::InadmissibleParameters("z_0 and Lambda_0 are required".into())),
        }
    }

    /// `p_0 = z_0 + eta (1 - Lambda_0)`.
    pub fn p0(&self, eta: C64) -> C64 {
        self.z0 + eta * (1.0 - self.spin0)
    }

    /// `q_0 = z_0 + eta (1 + Lambda_0)`.
    pub fn q0(&self, eta: C64) -> C64 {
        self.z0 + eta * (1.0 + self.spin0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    B,
    D,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VertexWeights {
    Fused,
    Stochastic,
}

/// Column-sweep transfer over per-row horizontal occupancies.
fn partition(kind: Kind, mu: &Signature, nu: &Signature, spec: &ColumnSpec, weights: VertexWeights) -> Result<C64> {
    sweep(kind, Some(mu), mu.first().max(nu.first()), nu, spec, weights, MAX_COLUMN)
}

/// Transfer sweep over columns `0..=last`; `mu = None` sums over all top boundaries.
fn sweep(kind: Kind, mu: Option<&Signature>, last: u32, nu: &Signature, spec: &ColumnSpec, weights: VertexWeights, max_column: u32) -> Result<C64> {
    let height = spec.height();
    let nrows = spec.rows.len();
    if let Some(mu) = mu {
        match kind {
            Kind::B if mu.len() != nu.len() + height as usize => return Ok(c(0.0)),
            Kind::D if mu.len() != nu.len() => return Ok(c(0.0)),
            _ => {}
        }
        if nu.first() > mu.first() && !nu.is_empty() {
            return Ok(c(0.0));
        }
    }
    if height > MAX_ROWS {
        return Err(Error::SizeLimit(format!("{height} rows exceed {MAX_ROWS}")));
    }
    if last > max_column {
        return Err(Error::SizeLimit(format!("column {last} exceeds {max_column}")));
    }
    if spec.z.len() <= last as usize || spec.spins.len() <= last as usize {
        return Err(Error::InadmissibleParameters(format!("Z and L must cover columns 0..={last}")));
    }
    if spec.rows.iter().any(|r| r.j == 0) {
        return Err(Error::InadmissibleParameters("fusion sizes must be positive".into()));
    }
    let eta = spec.ctx.eta();
    // Phi_{0,0} from the argument of B / D
    let phi00 = match kind {
        Kind::B => spec.lambda + 2.0 * eta * height as f64,
        Kind::D => spec.lambda - 2.0 * eta * height as f64,
    };
    let start: Vec<u32> = match kind {
        Kind::B => spec.rows.iter().map(|r| r.j).collect(),
        Kind::D => vec![0; nrows],
    };
    let mut states: BTreeMap<Vec<u32>, C64> = BTreeMap::from([(start, c(1.0))]);
    let mut phi_bottom = phi00;
    for x in 0..=last {
        let bottom_in = nu.multiplicity(x);
        let top_out = mu.map(|m| m.multiplicity(x));
        let mut next: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
        for (h, &wt) in &states {
            let mut out = vec![0u32; nrows];
            column_dp(spec, weights, x, 0, bottom_in, top_out, phi_bottom, h, &mut out, wt, &mut next)?;
        }
        states = next;
        phi_bottom += 4.0 * eta * bottom_in as f64 - 2.0 * eta * spec.spins[x as usize];
    }
    Ok(states.get(&vec![0u32; nrows]).copied().unwrap_or(c(0.0)))
}

#[allow(clippy::too_many_arguments)]
fn column_dp(
    spec: &ColumnSpec,
    weights: VertexWeights,
    x: u32,
    y: usize,
    vert: u32,
    top_out: Option<u32>,
    phi_below: C64,
    h_in: &[u32],
    h_out: &mut Vec<u32>,
    acc: C64,
    next: &mut BTreeMap<Vec<u32>, C64>,
) -> Result<()> {
    if y == spec.rows.len() {
        if top_out.is_none_or(|t| t == vert) {
            *next.entry(h_out.clone()).or_insert(c(0.0)) += acc;
        }
        return Ok(());
    }
    let eta = spec.ctx.eta();
    let row = spec.rows[y];
    let j1 = h_in[y];
    let phi = phi_below + 2.0 * eta * row.j as f64 - 4.0 * eta * j1 as f64;
    let v = row.w - spec.z[x as usize] - eta;
    let p = UnfusedWeightParams::new(v, phi, spec.spins[x as usize], spec.ctx);
    for j2 in 0..=row.j.min(vert + j1) {
        let cfg = ArrowConfig::new(vert, j1, vert + j1 - j2, j2);
        let w = match weights {
            VertexWeights::Fused if row.j == 1 => w1(cfg, &p)?,
            VertexWeights::Fused => w_fused(row.j, cfg, &p)?,
            VertexWeights::Stochastic if x == 0 => {
                if cfg == ArrowConfig::new(0, row.j, 0, row.j) {
                    c(1.0)
                } else {
                    c(0.0)
                }
            }
            VertexWeights::Stochastic => sigma(row.j, cfg, &p)?,
        };
        if w == c(0.0) {
            continue;
        }
        h_out[y] = j2;
        column_dp(spec, weights, x, y + 1, cfg.i2, top_out, phi, h_in, h_out, acc * w, next)?;
    }
    Ok(())
}

fn require_unfused(spec: &ColumnSpec) -> Result<()> {
    if spec.rows.iter().any(|r| r.j != 1) {
        return Err(Error::InadmissibleParameters("unfused rows required; use b_fused".into()));
    }
    Ok(())
}

/// `B_{mu/nu}(w_1, ..., w_M | lambda)` over unfused rows.
pub fn b_munu(mu: &Signature, nu: &Signature, spec: &ColumnSpec) -> Result<C64> {
    require_unfused(spec)?;
    partition(Kind::B, mu, nu, spec, VertexWeights::Fused)
}

/// `B_{mu/nu}(varpi_1, ..., varpi_r | lambda)` with fused rows carrying `W_{J_y}` weights.
pub fn b_fused(mu: &Signature, nu: &Signature, spec: &ColumnSpec) -> Result<C64> {
    partition(Kind::B, mu, nu, spec, VertexWeights::Fused)
}

/// `D_{mu/nu}(w_1, ..., w_N | lambda)`.
pub fn d_munu(mu: &Signature, nu: &Signature, spec: &ColumnSpec) -> Result<C64> {
    require_unfused(spec)?;
    partition(Kind::D, mu, nu, spec, VertexWeights::Fused)
}

/// Normalized `D^{(n)} = D prod_{k<N} f(lambda + 2 eta k)`.
pub fn d_normalized(mu: &Signature, nu: &Signature, spec: &ColumnSpec) -> Result<C64> {
    let eta = spec.ctx.eta();
    let norm: C64 = (0..spec.height()).map(|k| spec.ctx.f(spec.lambda + 2.0 * eta * k as f64)).product();
    Ok(d_munu(mu, nu, spec)? * norm)
}

/// `D^{(n)}_mu(rho | lambda)` in closed form; zero when the last part of `mu` vanishes.
pub fn d_rho(mu: &Signature, lambda: C64, spins: &[C64], ctx: &EllipticContext) -> Result<C64> {
    let m = mu.len();
    if m == 0 {
        return Ok(c(1.0));
    }
    if mu.last() == 0 {
        return Ok(c(0.0));
    }
    if spins.len() <= mu.first() as usize {
        return Err(Error::InadmissibleParameters("L must cover the columns of mu".into()));
    }
    let eta = ctx.eta();
    let f = |z: C64| ctx.f(z);
    let mut num: C64 = (0..m).map(|j| f(lambda + 2.0 * eta * (j as f64 + 1.0 - spins[0]))).product();
    if m % 2 == 1 {
        num = -num;
    }
    // c_mu without the pi^{-M} f(2 eta)^M prod f(lambda + 2 eta j)^{-1} factor, which cancels
    let mut cmu = c(1.0);
    let mut m_before = 0.0;
    let mut spin_before = c(0.0);
    for i in 0..=mu.first() {
        let mi = mu.multiplicity(i);
        let spin_through = spin_before + spins[i as usize];
        for j in 0..mi {
            let jf = j as f64;
            cmu *= f(lambda + 2.0 * eta * (2.0 * m_before + mi as f64 + jf - spin_through))
                * f(lambda + 2.0 * eta * (2.0 * m_before + jf + 1.0 - spin_before))
                * checked_inv(f(2.0 * eta * (spins[i as usize] - jf)), "f(2 eta (Lambda_i - j))")?;
        }
        m_before += mi as f64;
        spin_before = spin_through;
    }
    Ok(num * checked_inv(cmu, "c_mu")?)
}

/// `B^{(s)}_{mu/nu}(u_1, ..., u_r | lambda)` from the `D^{(n)}(rho)` ratio and `B_{mu/nu}`.
pub fn b_stochastic(mu: &Signature, nu: &Signature, spec: &ColumnSpec, rho: &RhoSpecialization) -> Result<C64> {
    if !spec.ctx.is_trigonometric() {
        return Err(Error::ModeError);
    }
    let rho0 = RhoSpecialization::from_spec(spec)?;
    if rho0 != *rho {
        return Err(Error::InadmissibleParameters("rho must use z_0 and Lambda_0 of the column spec".into()));
    }
    let eta = spec.ctx.eta();
    let f = |z: C64| spec.ctx.f(z);
    let unfused = spec.expanded();
    let r = unfused.rows.len();
    let mut pre = c(1.0);
    for (j, row) in unfused.rows.iter().enumerate() {
        pre *= -f(row.w - rho.q0(eta)) * f(spec.lambda + 2.0 * eta * j as f64) * checked_inv(f(2.0 * eta) * f(row.w - rho.p0(eta)), "B^(s) prefactor")?;
    }
    let dmu = d_rho(mu, spec.lambda, &spec.spins, &spec.ctx)?;
    if dmu == c(0.0) {
        return Ok(dmu);
    }
    let dnu = d_rho(nu, spec.lambda + 2.0 * eta * r as f64, &spec.spins, &spec.ctx)?;
    let b = b_fused(mu, nu, spec)?;
    Ok(pre * dmu * checked_inv(dnu, "D^(n)_nu(rho)")? * b)
}

/// `B^{(s)}_{mu/nu}` as a partition function of `sigma_J` weights, weight 1 in column 0.
pub fn b_stochastic_vertex_form(mu: &Signature, nu: &Signature, spec: &ColumnSpec) -> Result<C64> {
    if !spec.ctx.is_trigonometric() {
        return Err(Error::ModeError);
    }
    partition(Kind::B, mu, nu, spec, VertexWeights::Stochastic)
}

/// Largest cutoff accepted by [`b_stochastic_mass`].
pub const MAX_MASS_CUTOFF: u32 = 64;

/// `sum_{mu : mu_1 <= cutoff} B^{(s)}_{mu/nu}` from the `sigma_J` vertex form.
pub fn b_stochastic_mass(nu: &Signature, spec: &ColumnSpec, cutoff: u32) -> Result<C64> {
    if !spec.ctx.is_trigonometric() {
        return Err(Error::ModeError);
    }
    if nu.first() > cutoff {
        return Err(Error::InadmissibleParameters("nu exceeds the cutoff".into()));
    }
    sweep(Kind::B, None, cutoff, nu, spec, VertexWeights::Stochastic, MAX_MASS_CUTOFF)
}

/// Verification suites exposed through the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SymfunSuite {
    Symmetry,
    Branching,
    Fusion,
    StochasticB,
}

fn rel(a: C64, b: C64) -> f64 {
    rel_diff(a, b, 1e-300)
}

/// Random generic parameters for the suites.
pub fn random_column_spec(rng: &mut impl rand::Rng, elliptic: bool, w: &[C64], columns: usize) -> Result<ColumnSpec> {
    let mut cr = |a: f64, b: f64, ia: f64, ib: f64| C64::new(rng.random_range(a..b), rng.random_range(ia..ib));
    let eta = cr(0.05, 0.12, -0.03, 0.03);
    let ctx = if elliptic { EllipticContext::elliptic(cr(-0.2, 0.2, 0.9, 1.4), eta)? } else { EllipticContext::trigonometric(eta) };
    let lambda = cr(-0.4, 0.4, -0.2, 0.2);
    let z = (0..columns).map(|_| cr(-0.3, 0.3, -0.2, 0.2)).collect();
    let spins = (0..columns).map(|_| cr(0.5, 2.5, -0.3, 0.3)).collect();
    Ok(ColumnSpec::unfused(lambda, z, spins, w, ctx))
}

fn random_w(rng: &mut impl rand::Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.2..0.2))).collect()
}

/// All permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Runs one structural suite at the given seed; tolerance `1e-9` relative.
pub fn verify_suite(suite: SymfunSuite, seed: u64) -> Result<Report> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9;
    let cutoff = 8u32;
    let mut report = Report::new(format!("symfun/{}", serde_json::to_value(suite).expect("serializable").as_str().unwrap_or("")));
    match suite {
        SymfunSuite::Symmetry => {
            for elliptic in [false, true] {
                for m in 1..=3usize {
                    let w = random_w(&mut rng, m);
                    let spec = random_column_spec(&mut rng, elliptic, &w, cutoff as usize + 1)?;
                    let nu = if m == 1 { Signature::new(vec![1]) } else { Signature::empty() };
                    for mu in Signature::all(nu.len() + m, 0, 3) {
                        if mu.size() > 6 {
                            continue;
                        }
                        let base = b_munu(&mu, &nu, &spec)?;
                        let dspec = ColumnSpec { rows: spec.rows.clone(), ..spec.clone() };
                        let dmu = Signature::new(mu.parts()[..m].to_vec());
                        let dnu = Signature::new(vec![0; m]);
                        let dbase = d_munu(&dmu, &dnu, &dspec)?;
                        let mut worst: f64 = 0.0;
                        for perm in permutations(m).into_iter().skip(1) {
                            let pw: Vec<C64> = perm.iter().map(|&k| w[k]).collect();
                            let ps = ColumnSpec::unfused(spec.lambda, spec.z.clone(), spec.spins.clone(), &pw, spec.ctx);
                            worst = worst.max(rel(b_munu(&mu, &nu, &ps)?, base));
                            worst = worst.max(rel(d_munu(&dmu, &dnu, &ps)?, dbase));
                        }
                        report.push(Check::new(format!("symmetry elliptic={elliptic} M={m} mu={:?}", mu.parts()), worst, tol));
                    }
                }
            }
        }
        SymfunSuite::Branching => {
            for elliptic in [false, true] {
                for m in 1..=2usize {
                    let w = random_w(&mut rng, m + 1);
                    let spec = random_column_spec(&mut rng, elliptic, &w, cutoff as usize + 1)?;
                    let eta = spec.ctx.eta();
                    for nlen in 0..=1usize {
                        for nu in Signature::all(nlen, 0, 2) {
                            for mu in Signature::all(nlen + m + 1, 0, cutoff) {
                                if mu.size() > 6 {
                                    continue;
                                }
                                let lhs = b_munu(&mu, &nu, &spec)?;
                                let upper = spec.with_rows(spec.rows[..m].to_vec(), spec.lambda);
                                let lower = spec.with_rows(vec![spec.rows[m]], spec.lambda + 2.0 * eta * m as f64);
                                let mut rhs = c(0.0);
                                for kappa in Signature::all(nlen + 1, 0, mu.first()) {
                                    let a = b_munu(&mu, &kappa, &upper)?;
                                    if a == c(0.0) {
                                        continue;
                                    }
                                    rhs += a * b_munu(&kappa, &nu, &lower)?;
                                }
                                report.push(Check::new(
                                    format!("branching elliptic={elliptic} m={m} mu={:?} nu={:?}", mu.parts(), nu.parts()),
                                    rel(lhs, rhs),
                                    tol,
                                ));
                            }
                        }
                    }
                }
            }
        }
        SymfunSuite::Fusion => {
            for elliptic in [false, true] {
                for js in [vec![2u32], vec![1, 2], vec![2, 1], vec![3]] {
                    let w = random_w(&mut rng, js.len());
                    let mut spec = random_column_spec(&mut rng, elliptic, &w, cutoff as usize + 1)?;
                    for (row, &j) in spec.rows.iter_mut().zip(&js) {
                        row.j = j;
                    }
                    let height: u32 = js.iter().sum();
                    for nlen in 0..=1usize {
                        for nu in Signature::all(nlen, 0, 1) {
                            for mu in Signature::all(nlen + height as usize, 0, 3) {
                                if mu.size() > 6 {
                                    continue;
                                }
                                let fused = b_fused(&mu, &nu, &spec)?;
                                let unfused = b_munu(&mu, &nu, &spec.expanded())?;
                                report.push(Check::new(
                                    format!("fusion elliptic={elliptic} J={js:?} mu={:?} nu={:?}", mu.parts(), nu.parts()),
                                    rel(fused, unfused),
                                    tol,
                                ));
                            }
                        }
                    }
                }
            }
        }
        SymfunSuite::StochasticB => {
            for js in [vec![1u32], vec![2], vec![1, 1], vec![1, 2]] {
                let w = random_w(&mut rng, js.len());
                let mut spec = random_column_spec(&mut rng, false, &w, cutoff as usize + 1)?;
                for (row, &j) in spec.rows.iter_mut().zip(&js) {
                    row.j = j;
                }
                let rho = RhoSpecialization::from_spec(&spec)?;
                let height: u32 = js.iter().sum();
                for nlen in 0..=1usize {
                    for nu in Signature::all(nlen, 1, 2) {
                        for mu in Signature::all(nlen + height as usize, 1, 4) {
                            if mu.size() > 6 {
                                continue;
                            }
                            let formula = b_stochastic(&mu, &nu, &spec, &rho)?;
                            let vertex = b_stochastic_vertex_form(&mu, &nu, &spec)?;
                            report.push(Check::new(
                                format!("stochastic-b J={js:?} mu={:?} nu={:?}", mu.parts(), nu.parts()),
                                rel(formula, vertex),
                                tol,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
