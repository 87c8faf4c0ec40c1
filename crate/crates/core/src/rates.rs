//! Rate functions `beta(s)` of weak Poincare and weak log-Sobolev
//! inequalities, and the transforms that produce them.
//!
//! A rate is non-increasing on `(0, 1/4]`. Closed forms are kept exact;
//! numerically produced rates are tabulated as piecewise-linear functions of
//! `(ln s, ln beta)` on 128 log-spaced nodes in `[1e-8, 1/4]` and
//! extrapolated linearly from the end segments.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Potential};
use crate::levelset::LevelSets;
use crate::lyapunov::{perturbed_drift, verification_grid, LyapunovCertificate, Variant};
use crate::measures::Measure;

pub const S_MIN: f64 = 1e-8;
pub const S_MAX: f64 = 0.25;
pub const TABLE_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    WeakPoincare,
    WeakLogSobolev,
}

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Power { c: f64, p: f64 },
    LogPower { c: f64, q: f64 },
    Constant { c: f64 },
    Table(Arc<Table>),
    Map(RateFn),
}

struct Table {
    s: Vec<f64>,
    beta: Vec<f64>,
    ls: Vec<f64>,
    lb: Vec<f64>,
}

impl Table {
    fn new(s: Vec<f64>, beta: Vec<f64>) -> Self {
        let ls = s.iter().map(|v| v.ln()).collect();
        let lb = beta.iter().map(|v| v.ln()).collect();
        Self { s, beta, ls, lb }
    }

    fn eval(&self, s: f64) -> f64 {
        let x = s.ln();
        let n = self.ls.len();
        if n == 1 {
            return self.beta[0];
        }
        let k = self.ls.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.ls[k - 1], self.ls[k]);
        let (y0, y1) = (self.lb[k - 1], self.lb[k]);
        if x == x0 {
            return self.beta[k - 1];
        }
        if x == x1 {
            return self.beta[k];
        }
        (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).exp()
    }
}

/// A non-increasing rate function.
#[derive(Clone)]
pub struct RateFunction {
    repr: Repr,
    kind: RateKind,
    provenance: String,
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match &self.repr {
            Repr::Power { c, p } => format!("{c}*s^-{p}"),
            Repr::LogPower { c, q } => format!("{c}*ln(1/s)^{q}"),
            Repr::Constant { c } => format!("{c}"),
            Repr::Table(t) => format!("table[{}]", t.s.len()),
            Repr::Map(_) => "transform".to_string(),
        };
        write!(f, "RateFunction({r}, {:?}, {})", self.kind, self.provenance)
    }
}

/// Serializable form. Transforms are written as tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "repr", rename_all = "snake_case")]
pub enum RateRepr {
    Power { c: f64, p: f64 },
    LogPower { c: f64, q: f64 },
    Constant { c: f64 },
    Tabulated { s: Vec<f64>, beta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateData {
    pub kind: RateKind,
    pub provenance: String,
    #[serde(flatten)]
    pub repr: RateRepr,
}

/// The 128 log-spaced tabulation nodes in `[1e-8, 1/4]`.
pub fn s_grid() -> Vec<f64> {
    log_grid(S_MIN, S_MAX, TABLE_NODES)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn check_monotone(s: &[f64], beta: &[f64]) -> Result<()> {
    for i in 1..s.len() {
        if beta[i] > beta[i - 1] * (1.0 + 1e-12) {
            return Err(Error::NotMonotone { s: s[i] });
        }
    }
    Ok(())
}

impl RateFunction {
    fn with(repr: Repr, kind: RateKind, provenance: impl Into<String>) -> Self {
        Self { repr, kind, provenance: provenance.into() }
    }

    /// `c s^{-p}`.
    pub fn power(c: f64, p: f64, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        if !(c > 0.0) || !(p >= 0.0) || !c.is_finite() || !p.is_finite() {
            return Err(Error::BadParameter(format!("power rate needs c > 0, p >= 0, got c = {c}, p = {p}")));
        }
        Ok(Self::with(Repr::Power { c, p }, kind, provenance))
    }

    /// `c ln(1/s)^q` (zero exponent for `s >= 1`).
    pub fn log_power(c: f64, q: f64, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        if !(c > 0.0) || !(q >= 0.0) || !c.is_finite() || !q.is_finite() {
            return Err(Error::BadParameter(format!("log-power rate needs c > 0, q >= 0, got c = {c}, q = {q}")));
        }
        Ok(Self::with(Repr::LogPower { c, q }, kind, provenance))
    }

    /// A constant rate. `c = 0` is allowed (a Dirac factor).
    pub fn constant(c: f64, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::BadParameter(format!("constant rate needs c >= 0, got {c}")));
        }
        Ok(Self::with(Repr::Constant { c }, kind, provenance))
    }

    /// Tabulated rate from samples; rejects non-monotone input.
    pub fn from_table(s: Vec<f64>, beta: Vec<f64>, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        if s.is_empty() || s.len() != beta.len() {
            return Err(Error::BadParameter("table needs matching, non-empty s and beta".into()));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) || s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::BadParameter("table nodes must be positive and strictly increasing".into()));
        }
        if let Some(i) = beta.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::BadParameter(format!("table value {} at s = {} is not positive", beta[i], s[i])));
        }
        check_monotone(&s, &beta)?;
        Ok(Self::with(Repr::Table(Arc::new(Table::new(s, beta))), kind, provenance))
    }

    /// Tabulate `f` on [`s_grid`]; rejects non-monotone output.
    pub fn tabulate(f: impl Fn(f64) -> f64 + Sync, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        let s = s_grid();
        let beta: Vec<f64> = s.par_iter().map(|&v| f(v)).collect();
        Self::from_table(s, beta, kind, provenance)
    }

    /// Tabulate `f` and replace it by its smallest non-increasing majorant on
    /// the nodes, `b_i = max_{j >= i} f(s_j)`.
    pub fn tabulate_repaired(f: impl Fn(f64) -> f64 + Sync, kind: RateKind, provenance: impl Into<String>) -> Result<Self> {
        let s = s_grid();
        let mut beta: Vec<f64> = s.par_iter().map(|&v| f(v)).collect();
        for i in (0..beta.len() - 1).rev() {
            beta[i] = beta[i].max(beta[i + 1]);
        }
        Self::from_table(s, beta, kind, provenance)
    }

    /// Exact closure. The caller is responsible for monotonicity.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static, kind: RateKind, provenance: impl Into<String>) -> Self {
        Self::with(Repr::Map(Arc::new(f)), kind, provenance)
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    fn with_kind(mut self, kind: RateKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.repr, Repr::Table(_))
    }

    /// `beta(s)` for `s > 0`.
    pub fn eval(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Power { c, p } => c * s.powf(-p),
            Repr::LogPower { c, q } => {
                let l = (1.0 / s).ln().max(0.0);
                if *q == 0.0 {
                    *c
                } else {
                    c * l.powf(*q)
                }
            }
            Repr::Constant { c } => *c,
            Repr::Table(t) => t.eval(s),
            Repr::Map(f) => f(s),
        }
    }

    /// Generalized inverse `inf{s in (0, 1/4] : beta(s) <= y}`; infinite
    /// when the set is empty, zero when it is all of `(0, 1/4]`.
    pub fn inverse(&self, y: f64) -> f64 {
        if self.eval(S_MAX) > y {
            return f64::INFINITY;
        }
        if let Repr::Power { c, p } = self.repr {
            if p > 0.0 {
                return (c / y).powf(1.0 / p).min(S_MAX);
            }
        }
        let tiny = 1e-300;
        if self.eval(tiny) <= y {
            return 0.0;
        }
        let (mut lo, mut hi) = (tiny.ln(), S_MAX.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid.exp()) <= y {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        hi.exp()
    }

    /// The rate as tabulated samples on [`s_grid`].
    pub fn tabulated(&self) -> (Vec<f64>, Vec<f64>) {
        if let Repr::Table(t) = &self.repr {
            return (t.s.clone(), t.beta.clone());
        }
        let s = s_grid();
        let b = s.iter().map(|&v| self.eval(v)).collect();
        (s, b)
    }

    /// True when `beta` stays bounded as `s -> 0`.
    pub fn is_bounded_at_zero(&self) -> bool {
        match &self.repr {
            Repr::Power { p, .. } => *p == 0.0,
            Repr::LogPower { q, .. } => *q == 0.0,
            Repr::Constant { .. } => true,
            Repr::Table(t) => t.lb.len() < 2 || (t.lb[1] - t.lb[0]).abs() <= 1e-12 * t.lb[0].abs().max(1.0),
            Repr::Map(f) => f(1e-200) <= f(1e-8) * (1.0 + 1e-9),
        }
    }

    pub fn data(&self) -> RateData {
        let repr = match &self.repr {
            Repr::Power { c, p } => RateRepr::Power { c: *c, p: *p },
            Repr::LogPower { c, q } => RateRepr::LogPower { c: *c, q: *q },
            Repr::Constant { c } => RateRepr::Constant { c: *c },
            _ => {
                let (s, beta) = self.tabulated();
                RateRepr::Tabulated { s, beta }
            }
        };
        RateData { kind: self.kind, provenance: self.provenance.clone(), repr }
    }

    pub fn from_data(d: RateData) -> Result<Self> {
        match d.repr {
            RateRepr::Power { c, p } => Self::power(c, p, d.kind, d.provenance),
            RateRepr::LogPower { c, q } => Self::log_power(c, q, d.kind, d.provenance),
            RateRepr::Constant { c } => Self::constant(c, d.kind, d.provenance),
            RateRepr::Tabulated { s, beta } => Self::from_table(s, beta, d.kind, d.provenance),
        }
    }

    /// Least-squares slope of `ln beta` against `ln s` on `n` log-spaced points.
    pub fn loglog_slope(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let s = log_grid(lo, hi, n);
        let x: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = s.iter().map(|&v| self.eval(v).ln()).collect();
        linear_fit(&x, &y).0
    }
}

/// `(slope, intercept, r^2)` of an ordinary least-squares line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Prefactor `C(d)` of the ball Poincare bound: `4/pi^2` on the line,
/// `(d + 2) / (d (d - 1))` otherwise.
pub fn ball_prefactor(d: usize) -> f64 {
    if d <= 1 {
        4.0 / (PI * PI)
    } else {
        let d = d as f64;
        (d + 2.0) / (d * (d - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BuiltinFamily {
    Cauchy { alpha: f64 },
    Subbotin { alpha: f64 },
}

/// `c s^{-2/alpha}` (cauchy) or `c ln(1/s)^{2(1-alpha)/alpha}` (subbotin).
pub fn builtin_rate(family: BuiltinFamily, c: f64) -> Result<RateFunction> {
    match family {
        BuiltinFamily::Cauchy { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::BadParameter(format!("cauchy rate needs alpha > 0, got {alpha}")));
            }
            RateFunction::power(c, 2.0 / alpha, RateKind::WeakPoincare, format!("cauchy({alpha}) closed form"))
        }
        BuiltinFamily::Subbotin { alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::BadParameter(format!("subbotin rate needs alpha in (0, 1), got {alpha}")));
            }
            RateFunction::log_power(c, 2.0 * (1.0 - alpha) / alpha, RateKind::WeakPoincare, format!("subbotin({alpha}) closed form"))
        }
    }
}

/// Rate of `lambda Z`: `lambda^2 beta`.
pub fn rate_scale(beta: &RateFunction, lambda: f64) -> Result<RateFunction> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::BadParameter(format!("scale needs a finite nonzero lambda, got {lambda}")));
    }
    let l2 = lambda * lambda;
    let prov = format!("{} | scaled by {lambda}", beta.provenance);
    if l2 == 1.0 {
        return Ok(beta.clone().with_provenance(prov));
    }
    let b = beta.clone();
    Ok(RateFunction::from_fn(move |s| l2 * b.eval(s), beta.kind, prov))
}

fn require_nonempty(rates: &[RateFunction]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::BadParameter("need at least one rate".into()));
    }
    Ok(())
}

fn joined(rates: &[RateFunction], op: &str) -> String {
    let parts: Vec<&str> = rates.iter().map(|r| r.provenance.as_str()).collect();
    format!("{op}({})", parts.join("; "))
}

/// Rate of `(Z_1, ..., Z_n)`: `max_j beta_j(s / n)`.
pub fn rate_tensorize(rates: &[RateFunction]) -> Result<RateFunction> {
    require_nonempty(rates)?;
    if rates.len() == 1 {
        return Ok(rates[0].clone());
    }
    let rs = rates.to_vec();
    let n = rs.len() as f64;
    Ok(RateFunction::from_fn(
        move |s| rs.iter().map(|r| r.eval(s / n)).fold(f64::NEG_INFINITY, f64::max),
        rates[0].kind,
        joined(rates, "tensorize"),
    ))
}

/// Rate of `Z_1 + Z_2`: `beta_1(s/2) + beta_2(s/2)`.
pub fn rate_convolve(b1: &RateFunction, b2: &RateFunction) -> RateFunction {
    let (x, y) = (b1.clone(), b2.clone());
    RateFunction::from_fn(move |s| x.eval(s / 2.0) + y.eval(s / 2.0), b1.kind, joined(&[b1.clone(), b2.clone()], "convolve"))
}

/// Log-Sobolev rate of `sum_i Z_i`: `sum_i beta_i(s / n)`.
pub fn wls_convolve(rates: &[RateFunction]) -> Result<RateFunction> {
    require_nonempty(rates)?;
    if rates.len() == 1 {
        return Ok(rates[0].clone().with_kind(RateKind::WeakLogSobolev));
    }
    let rs = rates.to_vec();
    let n = rs.len() as f64;
    Ok(RateFunction::from_fn(move |s| rs.iter().map(|r| r.eval(s / n)).sum(), RateKind::WeakLogSobolev, joined(rates, "ls-convolve")))
}

/// Log-Sobolev rate of the product: `max_i beta_i(s / n)`.
pub fn wls_tensorize(rates: &[RateFunction]) -> Result<RateFunction> {
    Ok(rate_tensorize(rates)?.with_kind(RateKind::WeakLogSobolev))
}

/// `C(d) R(s)^2 exp(Osc_{B(0,R(s))} V)` with `R(s) = G^{-1}(1/(1+s))`,
/// `G(u) = mu(B(0,u))`.
pub fn rate_from_local_oscillation(measure: &Measure) -> Result<RateFunction> {
    let c = ball_prefactor(measure.dim());
    // surface oscillation errors before tabulating
    measure.osc_ball(1.0)?;
    let f = |s: f64| -> f64 {
        let r = measure.tail_inverse(s / (1.0 + s), 0.0).unwrap_or(f64::INFINITY);
        let osc = measure.osc_ball(r).unwrap_or(f64::INFINITY);
        c * r * r * osc.exp()
    };
    let out = RateFunction::tabulate_repaired(f, RateKind::WeakPoincare, "local oscillation on the mass ball")?;
    if out.tabulated().1.iter().any(|b| !b.is_finite()) {
        return Err(Error::OscillationUnavailable("ball oscillation is not finite".into()));
    }
    Ok(out)
}

/// `Theta(u) = inf{s in (0, 1/4] : u >= 4 sqrt(beta(s)) ln(1/s)}`.
#[derive(Debug, Clone)]
pub struct ConcentrationProfile {
    pub rate: RateFunction,
}

pub fn concentration_profile(beta: &RateFunction) -> ConcentrationProfile {
    ConcentrationProfile { rate: beta.clone() }
}

impl ConcentrationProfile {
    fn g(&self, s: f64) -> f64 {
        4.0 * self.rate.eval(s).sqrt() * (1.0 / s).ln()
    }

    pub fn theta(&self, u: f64) -> f64 {
        // g is non-increasing in s, so the admissible set is [theta, 1/4]
        if !(self.g(S_MAX) <= u) {
            return S_MAX;
        }
        let (mut lo, mut hi) = ((1e-300f64).ln(), S_MAX.ln());
        if self.g(lo.exp()) <= u {
            return lo.exp();
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.g(mid.exp()) <= u {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        hi.exp()
    }

    /// `mu(|G - m_G| > a) <= min(1, 6 Theta(a / L))` for `L`-Lipschitz `G`.
    pub fn tail_bound(&self, a: f64, lipschitz: f64) -> f64 {
        (6.0 * self.theta(a / lipschitz)).min(1.0)
    }
}

/// Bounded perturbation: `e^{osc} beta(e^{m_U} s)`.
pub fn perturb_rate_holley_stroock(beta: &RateFunction, osc_u: f64, m_u: f64) -> Result<RateFunction> {
    if !(osc_u >= 0.0) || !m_u.is_finite() {
        return Err(Error::BadParameter(format!("need osc >= 0 and finite m_U, got {osc_u}, {m_u}")));
    }
    let prov = format!("{} | bounded perturbation osc = {osc_u}, m_U = {m_u}", beta.provenance);
    if osc_u == 0.0 && m_u == 0.0 {
        return Ok(beta.clone().with_provenance(prov));
    }
    let (b, e_osc, e_m) = (beta.clone(), osc_u.exp(), m_u.exp());
    Ok(RateFunction::from_fn(move |s| e_osc * b.eval(e_m * s), beta.kind, prov))
}

/// Perturbation by a potential bounded below:
/// `2 e^{Osc_{B(0,R)} U} beta(e^{m_U} s / 7)` with
/// `R = 1 + med + 4 sqrt(beta(u)) ln(1/u)`, `u = s / (1 + 2 beta(s))`.
pub fn perturb_rate_lower_bounded(beta: &RateFunction, nu: &Measure, u: &Potential) -> Result<RateFunction> {
    let lb = u.lower_bound().ok_or_else(|| Error::BadParameter(format!("{} is not bounded below", u.label())))?;
    let m_u = lb.value;
    let mut prov = format!("{} | perturbed by {} (m_U = {m_u:?}", beta.provenance, u.label());
    if !lb.certified {
        prov.push_str(", grid estimate");
    }
    prov.push(')');
    if u.is_constant() {
        let b = beta.clone();
        let e_m = m_u.exp();
        return Ok(RateFunction::from_fn(move |s| 2.0 * b.eval(e_m * s / 7.0), beta.kind, prov));
    }
    let med = nu.median_abs()?;
    let radial = nu.is_radial();
    let osc = |r: f64| if radial { u.osc_ball_radial(r) } else { u.osc_ball(r) };
    osc(1.0)?;
    let e_m = m_u.exp();
    let f = |s: f64| {
        let bs = beta.eval(s);
        let uu = s / (1.0 + 2.0 * bs);
        let r = 1.0 + med + 4.0 * beta.eval(uu).sqrt() * (1.0 / uu).ln();
        let o = osc(r).unwrap_or(f64::INFINITY);
        2.0 * o.exp() * beta.eval(e_m * s / 7.0)
    };
    RateFunction::tabulate_repaired(f, beta.kind, prov)
}

/// Shared construction for Lyapunov rates, perturbed or not: with
/// `U_eff = U + ln int e^{-U} d nu` and a drift `phi~` equal to `phi_U`
/// outside `B(0, R')` and clamped from below inside,
/// `beta = (1 + C(d) b' R'^2 e^{Osc V_mu}) h^{-1}(s)`,
/// `h(r) = e^{-min_{phi~ <= 1/r} U_eff} nu(phi~ <= 1/r)`.
fn lyapunov_rate(cert: &LyapunovCertificate, nu: &Measure, u: &Potential, provenance: String) -> Result<RateFunction> {
    if cert.variant != Variant::Weak {
        return Err(Error::CertificateInvalid("rate needs a weak drift certificate".into()));
    }
    if !cert.is_verified() {
        return Err(Error::CertificateInvalid("certificate has not been verified".into()));
    }
    let trivial = u.is_constant();
    let (mu, u_eff) = if trivial {
        (nu.clone(), None)
    } else {
        let mu = Measure::perturbed(nu, u.clone())?;
        let log_z = (mu.normalize() / nu.normalize()).ln();
        (mu, Some(u.field().plus(&Field::constant(log_z))))
    };
    let drift = perturbed_drift(cert, u, nu)?;
    let phi_u = drift.phi_u.clone();
    let r_prime = cert.radius.max(drift.positive_beyond);
    // clamp only when phi_U fails to be positive inside the ball
    let grid: Vec<f64> = verification_grid(nu, r_prime.max(1e-300)).into_iter().filter(|x| x.abs() <= r_prime).collect();
    let inner_min = grid.iter().map(|&x| phi_u.value(x)).fold(f64::INFINITY, f64::min);
    let (phi_t, b_prime) = if inner_min > 0.0 || grid.is_empty() {
        (phi_u, cert.b)
    } else {
        let m = phi_u.value(r_prime).max(phi_u.value(-r_prime)).max(1e-12);
        let excess = grid.iter().map(|&x| (m - phi_u.value(x)).max(0.0)).fold(0.0, f64::max);
        let p = phi_u.clone();
        let clamped = Field::new(format!("clamp({})", p.label()), move |x| {
            let v = p.apply(x);
            if x.v.abs() <= r_prime && v.v < m {
                crate::dual::Dual2::constant(m)
            } else {
                v
            }
        });
        (clamped, cert.b + excess)
    };
    let osc = mu.osc_ball(r_prime)?;
    let pref = 1.0 + ball_prefactor(nu.dim()) * b_prime * r_prime * r_prime * osc.exp();
    let sets = LevelSets::new(nu, phi_t, u_eff);
    let prov = format!("{provenance}; prefactor {pref:?}, R = {r_prime:?}, b = {b_prime:?}");
    RateFunction::tabulate_repaired(|s| pref * sets.h_inverse(s), RateKind::WeakPoincare, prov)
}

/// `beta(s) = (1 + C(d) b R^2 e^{Osc_{B(0,R)} V}) h_phi^{-1}(s)`,
/// `h_phi(r) = mu(phi <= 1/r)`.
pub fn rate_from_lyapunov(cert: &LyapunovCertificate, measure: &Measure) -> Result<RateFunction> {
    lyapunov_rate(cert, measure, &Potential::zero(), format!("drift certificate F = {}", cert.f.label()))
}

/// Rate for `d mu = e^{-U} d nu` from a drift certificate of `nu`.
pub fn rate_from_perturbed_lyapunov(cert: &LyapunovCertificate, u: &Potential, nu: &Measure) -> Result<RateFunction> {
    let prov = if u.is_constant() {
        format!("drift certificate F = {}", cert.f.label())
    } else {
        format!("drift certificate F = {} perturbed by {}", cert.f.label(), u.label())
    };
    lyapunov_rate(cert, nu, u, prov)
}

/// p-weak rate: `beta(s^{p/(p-2)} / 2^{(3p-2)/(p-2)})`.
pub fn p_weak_rate(beta: &RateFunction, p: f64) -> Result<RateFunction> {
    if !(p > 2.0) {
        return Err(Error::BadParameter(format!("p-weak rate needs p > 2, got {p}")));
    }
    let e = p / (p - 2.0);
    let div = 2f64.powf((3.0 * p - 2.0) / (p - 2.0));
    let b = beta.clone();
    Ok(RateFunction::from_fn(move |s| b.eval(s.powf(e) / div), beta.kind, format!("{} | {p}-weak", beta.provenance)))
}

/// Defaults for the unspecified universal constants of the WP -> WLS step.
pub const WLS_DEFAULT_C: f64 = 1.0;
pub const WLS_DEFAULT_C_PRIME: f64 = 1.0;
pub const WLS_DEFAULT_S0: f64 = 0.25;

/// `c' beta(c s / ln(1/s)) ln(1/s)`, meant for `s <= s0`.
pub fn wls_from_wp(beta: &RateFunction, c: f64, c_prime: f64, s0: f64) -> Result<RateFunction> {
    if !(c > 0.0) || !(c_prime > 0.0) || !(s0 > 0.0 && s0 < 1.0) {
        return Err(Error::BadParameter(format!("need c, c' > 0 and s0 in (0, 1), got {c}, {c_prime}, {s0}")));
    }
    let b = beta.clone();
    let mut prov = format!("{} | log-Sobolev from weak Poincare (c = {c}, c' = {c_prime}, s0 = {s0})", beta.provenance);
    if c == WLS_DEFAULT_C && c_prime == WLS_DEFAULT_C_PRIME {
        prov.push_str(" [default constants, not derived]");
    }
    Ok(RateFunction::from_fn(
        move |s| {
            let l = (1.0 / s).ln();
            c_prime * b.eval(c * s / l) * l
        },
        RateKind::WeakLogSobolev,
        prov,
    ))
}

/// `24 beta_LS((s/2) ln(1 + 1/(2s))) / ln(1 + 1/(2s))`, provided the result
/// is non-increasing.
pub fn wp_from_wls(beta_ls: &RateFunction) -> Result<RateFunction> {
    let b = beta_ls.clone();
    let f = move |s: f64| {
        let l = (1.0 / (2.0 * s)).ln_1p();
        24.0 * b.eval(0.5 * s * l) / l
    };
    let s = s_grid();
    let vals: Vec<f64> = s.iter().map(|&v| f(v)).collect();
    if let Err(Error::NotMonotone { s }) = check_monotone(&s, &vals) {
        return Err(Error::NotApplicable(format!("the converted rate increases near s = {s:e}")));
    }
    Ok(RateFunction::from_fn(f, RateKind::WeakPoincare, format!("{} | weak Poincare from log-Sobolev", beta_ls.provenance)))
}
