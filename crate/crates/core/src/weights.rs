//! Weighted, converse weighted and weighted log-Sobolev constants: closed
//! forms for Cauchy measures, Lyapunov weights, perturbation transforms and
//! the capacity route from a weak rate to an explicit converse weight.
//!
//! Conventions: a `Direct` constant bounds `Var(f) <= C int |grad f|^2 w^2`,
//! a `Converse` constant bounds `inf_a int (g-a)^2 / w^2 <= C int |grad g|^2`,
//! a `LogSobolev` constant bounds `Ent(f^2) <= C int |grad f|^2 w^2`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dual::Dual2;
use crate::error::{Error, Result};
use crate::field::{Field, Potential};
use crate::levelset::LevelSets;
use crate::lyapunov::{verification_grid, LyapunovCertificate, Variant, WeightedGenerator, WeightedLyapunovReport};
use crate::measures::Measure;
use crate::rates::{ball_prefactor, log_grid, RateFunction, RateKind};

/// Points in the log grids used for free parameters.
pub const PARAM_GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTag {
    CauchyOptimal,
    SubbotinOptimal,
    CauchyLs,
    ConstructedFromRate,
    Lyapunov,
    Constant,
    Transformed,
    Custom,
}

/// Tabulated radial profile `w^2(r)`, `r = |x - center|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub center: f64,
    pub r: Vec<f64>,
    pub omega2: Vec<f64>,
}

impl RadialProfile {
    pub fn is_non_increasing(&self) -> bool {
        self.omega2.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
    }
}

/// A positive weight `w`, stored as a field of the coordinate (of the
/// radius for radial measures).
#[derive(Clone)]
pub struct Weight {
    pub tag: WeightTag,
    omega: Field,
    pub params: BTreeMap<String, f64>,
    pub profile: Option<RadialProfile>,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({:?}, {})", self.tag, self.omega.label())
    }
}

fn params(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl Weight {
    pub fn new(tag: WeightTag, omega: Field) -> Self {
        Self { tag, omega, params: BTreeMap::new(), profile: None }
    }

    /// `w = sqrt(1 + |x|^2)`.
    pub fn cauchy_optimal() -> Self {
        Self::new(WeightTag::CauchyOptimal, Field::new("sqrt(1+x^2)", |x| (x * x + 1.0).sqrt()))
    }

    /// `w^2 = 1 + (1 + |x|)^{2(1 - alpha)}`.
    pub fn subbotin_optimal(alpha: f64) -> Self {
        let e = 2.0 * (1.0 - alpha);
        let mut w = Self::new(
            WeightTag::SubbotinOptimal,
            Field::new(format!("sqrt(1+(1+|x|)^{e:?})"), move |x| ((x.abs() + 1.0).powf(e) + 1.0).sqrt()),
        );
        w.params = params(&[("alpha", alpha)]);
        w
    }

    /// `w^2 = (1 + |x|^2) ln(e + |x|^2)`.
    pub fn cauchy_ls() -> Self {
        Self::new(
            WeightTag::CauchyLs,
            Field::new("sqrt((1+x^2)ln(e+x^2))", |x| {
                let x2 = x * x;
                ((x2 + 1.0) * (x2 + std::f64::consts::E).ln()).sqrt()
            }),
        )
    }

    pub fn constant(c: f64) -> Self {
        let mut w = Self::new(WeightTag::Constant, Field::constant(c));
        w.params = params(&[("c", c)]);
        w
    }

    pub fn field(&self) -> &Field {
        &self.omega
    }

    pub fn label(&self) -> &str {
        self.omega.label()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.omega.value(x)
    }

    pub fn omega2(&self, x: f64) -> f64 {
        let w = self.omega.value(x);
        w * w
    }

    /// `w'(x)`.
    pub fn grad(&self, x: f64) -> f64 {
        self.omega.at(x).d1
    }

    /// `w^2` as a field.
    pub fn omega2_field(&self) -> Field {
        self.omega.map(format!("({})^2", self.omega.label()), |w| w * w)
    }

    fn transformed(&self, omega: Field) -> Self {
        Self { tag: WeightTag::Transformed, omega, params: self.params.clone(), profile: None }
    }

    /// `z -> w(z - x)`.
    pub fn shifted(&self, x: f64) -> Self {
        self.transformed(self.omega.shifted(x))
    }

    /// `z -> w(z / lambda)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        self.transformed(self.omega.dilated(lambda))
    }

    /// `z -> w(T^{-1}(z))`.
    pub fn composed(&self, t_inv: &Field) -> Self {
        let (w, t) = (self.omega.clone(), t_inv.clone());
        self.transformed(Field::new(format!("{}({})", w.label(), t.label()), move |z| w.apply(t.apply(z))))
    }

    /// `1 / w`, keeping the tag.
    pub fn reciprocal(&self) -> Self {
        let mut out = self.clone();
        out.omega = self.omega.map(format!("1/({})", self.omega.label()), |w| 1.0 / w);
        out.profile = None;
        out
    }

    /// `w e^{U/2}`.
    pub fn times_exp_half(&self, u: &Field) -> Self {
        let (w, u) = (self.omega.clone(), u.clone());
        self.transformed(Field::new(format!("{}*exp(({})/2)", w.label(), u.label()), move |x| w.apply(x) * (u.apply(x) * 0.5).exp()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    Direct,
    Converse,
    LogSobolev,
}

#[derive(Debug, Clone)]
pub struct WeightedConstant {
    pub weight: Weight,
    pub value: f64,
    pub kind: ConstantKind,
    pub provenance: String,
    /// Free parameters chosen while producing the value.
    pub params: BTreeMap<String, f64>,
}

/// JSON form of a [`WeightedConstant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedConstantData {
    pub weight_tag: WeightTag,
    pub weight: String,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub kind: ConstantKind,
    pub provenance: String,
}

impl WeightedConstant {
    pub fn new(weight: Weight, value: f64, kind: ConstantKind, provenance: impl Into<String>) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::BadParameter(format!("constant must be finite and positive, got {value}")));
        }
        Ok(Self { weight, value, kind, provenance: provenance.into(), params: BTreeMap::new() })
    }

    fn with_params(mut self, items: &[(&str, f64)]) -> Self {
        self.params.extend(params(items));
        self
    }

    pub fn data(&self) -> WeightedConstantData {
        let mut p = self.weight.params.clone();
        p.extend(self.params.clone());
        WeightedConstantData {
            weight_tag: self.weight.tag,
            weight: self.weight.label().to_string(),
            params: p,
            value: self.value,
            kind: self.kind,
            provenance: self.provenance.clone(),
        }
    }

    /// The same inequality for another weight: the constant picks up
    /// `sup w^2 / w'^2` over the verification grid.
    pub fn rebased(&self, target: &Weight, measure: &Measure) -> Result<Self> {
        let grid = verification_grid(measure, measure.r_trunc());
        let ratio = grid.iter().map(|&x| self.weight.omega2(x) / target.omega2(x)).fold(0.0, f64::max);
        WeightedConstant::new(
            target.clone(),
            self.value * ratio,
            self.kind,
            format!("{} | rebased to {} (ratio {ratio:?})", self.provenance, target.label()),
        )
        .map(|c| c.with_params(&[("ratio", ratio)]))
    }
}

/// One branch of the piecewise Cauchy weighted constant.
#[derive(Debug, Clone, Copy)]
pub struct HugBranch {
    pub lo: f64,
    pub hi: f64,
    pub formula: &'static str,
    eval: fn(f64, f64) -> f64,
}

impl HugBranch {
    pub fn value(&self, alpha: f64, d: usize) -> f64 {
        (self.eval)(alpha, d as f64)
    }
}

/// Branches of the weighted Poincare constant of `cauchy(alpha, d)` with
/// `w = sqrt(1 + |x|^2)`, in increasing `alpha`.
pub fn hug_branches(d: usize) -> Vec<HugBranch> {
    let four = HugBranch { lo: 0.0, hi: if d <= 1 { 2.0 } else { 4.0 }, formula: "4/alpha^2", eval: |a, _| 4.0 / (a * a) };
    if d <= 1 {
        return vec![four, HugBranch { lo: 2.0, hi: f64::INFINITY, formula: "1/(alpha-1)", eval: |a, _| 1.0 / (a - 1.0) }];
    }
    let df = d as f64;
    vec![
        four,
        HugBranch { lo: 4.0, hi: df + 2.0, formula: "1/(2(alpha-2))", eval: |a, _| 1.0 / (2.0 * (a - 2.0)) },
        HugBranch { lo: df + 2.0, hi: f64::INFINITY, formula: "1/(alpha+d-2)", eval: |a, d| 1.0 / (a + d - 2.0) },
    ]
}

fn check_cauchy(alpha: f64, d: usize) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() || d == 0 {
        return Err(Error::BadParameter(format!("cauchy needs alpha > 0 and d >= 1, got {alpha}, {d}")));
    }
    Ok(())
}

/// Weighted Poincare constant of `cauchy(alpha, d)` for `w = sqrt(1+|x|^2)`:
/// the piecewise bound, and `2/(alpha+d-2)` when `alpha > d` if smaller.
pub fn cauchy_weighted_constant(alpha: f64, d: usize) -> Result<WeightedConstant> {
    check_cauchy(alpha, d)?;
    let branch = hug_branches(d).into_iter().find(|b| alpha <= b.hi).unwrap();
    let mut value = branch.value(alpha, d);
    let mut prov = format!("piecewise bound, branch {}", branch.formula);
    let df = d as f64;
    if alpha > df {
        let bl = 2.0 / (alpha + df - 2.0);
        if bl < value {
            value = bl;
            prov = "2/(alpha+d-2)".into();
        }
    }
    Ok(WeightedConstant::new(Weight::cauchy_optimal(), value, ConstantKind::Direct, prov)?.with_params(&[("alpha", alpha), ("d", df)]))
}

/// `C / (1 - sqrt(C g^2))^2`, the optimized change of function `g = f / w`.
pub fn converse_from_direct(c: &WeightedConstant, grad_bound: f64) -> Result<WeightedConstant> {
    if c.kind != ConstantKind::Direct {
        return Err(Error::BadParameter("converse_from_direct needs a direct constant".into()));
    }
    let product = c.value * grad_bound * grad_bound;
    if !(product < 1.0) {
        return Err(Error::TrickInapplicable { product });
    }
    let v = c.value / (1.0 - product.sqrt()).powi(2);
    Ok(WeightedConstant::new(
        c.weight.clone(),
        v,
        ConstantKind::Converse,
        format!("{} | change of function, |grad w| <= {grad_bound}", c.provenance),
    )?
    .with_params(&[("grad_bound", grad_bound), ("lambda", 1.0 / product.sqrt())]))
}

/// Closed-form constants of the Lyapunov route for `cauchy(alpha, d)` with
/// `F = (1+|x|^2)^{k/2+1}`: the direct constant for `w^2 = 1+|x|^2` and the
/// converse constant `C / eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyLyapunovConstants {
    pub radius: f64,
    pub ball_constant: f64,
    pub direct: f64,
    pub converse: f64,
}

pub fn cauchy_lyapunov_constants(alpha: f64, d: usize, k: f64, eps: f64) -> Result<CauchyLyapunovConstants> {
    check_cauchy(alpha, d)?;
    if !(k > 0.0 && k < alpha.min(2.0)) || !(eps > 0.0 && eps < alpha - k) {
        return Err(Error::BadParameter(format!("need 0 < k < min(2, alpha) and 0 < eps < alpha - k, got k = {k}, eps = {eps}")));
    }
    let df = d as f64;
    let r2 = (df + eps) / (alpha - k - eps);
    let inner = (df + alpha - k) + eps * (1.0 + r2).powf(k / 2.0);
    let ball = ball_prefactor(d) * r2 * (1.0 + r2).powf((alpha + df) / 2.0);
    let c_direct = inner / eps * ball;
    let direct = c_direct.max(1.0) * (1.0 + eps * k) / (eps * k);
    let converse = (1.0 / (k + 2.0) + inner * ball) / eps;
    Ok(CauchyLyapunovConstants { radius: r2.sqrt(), ball_constant: ball, direct, converse })
}

/// Best Lyapunov converse constant over grids of `k` and `eps`.
fn cauchy_lyapunov_converse(alpha: f64, d: usize) -> Result<(f64, f64, f64)> {
    let kmax = alpha.min(2.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 1..=PARAM_GRID {
        let k = kmax * i as f64 / (PARAM_GRID + 1) as f64;
        for j in 1..=PARAM_GRID {
            let eps = (alpha - k) * j as f64 / (PARAM_GRID + 1) as f64;
            if let Ok(c) = cauchy_lyapunov_constants(alpha, d, k, eps) {
                if c.converse < best.0 {
                    best = (c.converse, k, eps);
                }
            }
        }
    }
    if best.0.is_finite() {
        Ok(best)
    } else {
        Err(Error::BadParameter(format!("no admissible (k, eps) for alpha = {alpha}")))
    }
}

/// Converse weighted constant of `cauchy(alpha, d)` for `w = sqrt(1+|x|^2)`:
/// the minimum of `1/(alpha+d)` (when `alpha >= d+2`) and the change of
/// function applied to the direct constant; the Lyapunov bound is used
/// when neither applies.
pub fn cauchy_converse_constant(alpha: f64, d: usize) -> Result<WeightedConstant> {
    check_cauchy(alpha, d)?;
    let df = d as f64;
    let mut cands: Vec<(f64, String, Vec<(&str, f64)>)> = Vec::new();
    if alpha >= df + 2.0 {
        cands.push((1.0 / (alpha + df), "1/(alpha+d)".into(), vec![]));
    }
    let direct = cauchy_weighted_constant(alpha, d)?;
    if let Ok(c) = converse_from_direct(&direct, 1.0) {
        cands.push((c.value, format!("change of function from C = {:?}", direct.value), vec![("direct", direct.value)]));
    }
    if cands.is_empty() {
        let (v, k, eps) = cauchy_lyapunov_converse(alpha, d)?;
        cands.push((v, "drift route (k, eps optimized)".into(), vec![("k", k), ("eps", eps)]));
    }
    let best = cands.into_iter().min_by(|a, b| a.0.total_cmp(&b.0));
    let (v, prov, extra) = best.unwrap();
    let mut p = vec![("alpha", alpha), ("d", df)];
    p.extend(extra);
    Ok(WeightedConstant::new(Weight::cauchy_optimal(), v, ConstantKind::Converse, prov)?.with_params(&p))
}

/// `C(d) R^2 e^{osc}`.
pub fn ball_poincare_value(d: usize, radius: f64, osc: f64) -> f64 {
    ball_prefactor(d) * radius * radius * osc.exp()
}

/// Upper bound on the Poincare constant of the measure restricted to `B(0,R)`.
pub fn ball_poincare_bound(measure: &Measure, radius: f64) -> Result<f64> {
    let osc = measure.osc_ball(radius)?;
    Ok(ball_poincare_value(measure.dim(), radius, osc))
}

/// The three weighted constants produced by a `phi`-drift certificate.
#[derive(Debug, Clone)]
pub struct LyapunovWeights {
    /// `w^2 = 1 + 1/phi'(F)`, constant `max(1, b C_R / phi(1))`.
    pub direct: WeightedConstant,
    /// `1/w^2 = phi(F)/F`, constant `1 + b C_R`.
    pub converse: WeightedConstant,
    /// `w^2 = 1 + |grad F|^2 / phi(F)^2`, constant `8 max(1, b C_R / phi(1))^2`.
    pub alternate: WeightedConstant,
    pub ball_constant: f64,
}

pub fn weight_from_phi_lyapunov(cert: &LyapunovCertificate, measure: &Measure, ball_constant: Option<f64>) -> Result<LyapunovWeights> {
    if cert.variant != Variant::Phi || !cert.is_verified() {
        return Err(Error::CertificateInvalid("need a verified phi-drift certificate".into()));
    }
    let c_r = match ball_constant {
        Some(c) => c,
        None => ball_poincare_bound(measure, cert.radius)?,
    };
    let phi1 = cert.phi.value(1.0);
    if !(phi1 > 0.0) {
        return Err(Error::CertificateInvalid(format!("phi(1) = {phi1} is not positive")));
    }
    let m = (cert.b * c_r / phi1).max(1.0);
    let (f, phi) = (cert.f.clone(), cert.phi.clone());
    let direct_w = Field::from_values(format!("sqrt(1+1/phi'({}))", f.label()), move |x| (1.0 + 1.0 / phi.at(f.value(x)).d1).sqrt());
    let (f, phi) = (cert.f.clone(), cert.phi.clone());
    let conv_w = Field::new(format!("sqrt({0}/phi({0}))", f.label()), move |x| {
        let fx = f.apply(x);
        (fx / phi.apply(fx)).sqrt()
    });
    let (f, phi) = (cert.f.clone(), cert.phi.clone());
    let alt_w = Field::from_values(format!("sqrt(1+|grad {0}|^2/phi({0})^2)", f.label()), move |x| {
        let fd = f.at(x);
        let p = phi.value(fd.v);
        (1.0 + fd.d1 * fd.d1 / (p * p)).sqrt()
    });
    let prov = format!("phi-drift certificate F = {}, b = {:?}, R = {:?}", cert.f.label(), cert.b, cert.radius);
    let p = [("b", cert.b), ("radius", cert.radius), ("ball_constant", c_r)];
    Ok(LyapunovWeights {
        direct: WeightedConstant::new(Weight::new(WeightTag::Lyapunov, direct_w), m, ConstantKind::Direct, prov.clone())?.with_params(&p),
        converse: WeightedConstant::new(
            Weight::new(WeightTag::Lyapunov, conv_w),
            1.0 + cert.b * c_r,
            ConstantKind::Converse,
            prov.clone(),
        )?
        .with_params(&p),
        alternate: WeightedConstant::new(Weight::new(WeightTag::Lyapunov, alt_w), 8.0 * m * m, ConstantKind::Direct, prov)?.with_params(&p),
        ball_constant: c_r,
    })
}

/// `e^{-m_U} C` with weight `w e^{U/2}`, or `e^{Osc U} C` with the same
/// weight when `U` is bounded.
pub fn perturb_bounded(c: &WeightedConstant, u: &Potential, m_u: f64, osc_u: Option<f64>) -> Result<WeightedConstant> {
    if c.kind == ConstantKind::Converse {
        return Err(Error::BadParameter("bounded perturbation applies to direct and log-Sobolev constants".into()));
    }
    if !(m_u <= 0.0) {
        return Err(Error::BadParameter(format!("m_U must be <= 0 for a probability perturbation, got {m_u}")));
    }
    match osc_u {
        Some(osc) => {
            if !(osc >= 0.0) {
                return Err(Error::BadParameter(format!("oscillation must be >= 0, got {osc}")));
            }
            WeightedConstant::new(
                c.weight.clone(),
                osc.exp() * c.value,
                c.kind,
                format!("{} | bounded perturbation by {}, osc = {osc:?}", c.provenance, u.label()),
            )
            .map(|w| w.with_params(&[("osc_u", osc)]))
        }
        None => WeightedConstant::new(
            c.weight.times_exp_half(u.field()),
            (-m_u).exp() * c.value,
            c.kind,
            format!("{} | perturbation by {} bounded below by {m_u:?}", c.provenance, u.label()),
        )
        .map(|w| w.with_params(&[("m_u", m_u)])),
    }
}

/// `sup_x |grad U|^2 w^2` on the verification grid.
pub fn sup_weighted_gradient(weight: &Weight, u: &Potential, measure: &Measure) -> f64 {
    verification_grid(measure, measure.r_trunc())
        .iter()
        .map(|&x| {
            let g = u.at(x).d1;
            g * g * weight.omega2(x)
        })
        .fold(0.0, f64::max)
}

fn too_large(s: f64) -> Error {
    Error::PerturbationTooLarge { s }
}

/// `(1 + 1/eps) C / (1 - s)`, `s = C (1+eps) G / 4`, `G = sup |grad U|^2 w^2`.
/// Without `eps` the best of the analytic optimum `eps = 1/sqrt(a) - 1`,
/// `a = C G / 4`, and a log grid is returned.
pub fn perturb_weighted_lipschitz(c: &WeightedConstant, sup_grad: f64, eps: Option<f64>) -> Result<WeightedConstant> {
    if !(sup_grad >= 0.0) {
        return Err(Error::BadParameter(format!("sup |grad U|^2 w^2 must be >= 0, got {sup_grad}")));
    }
    let a = c.value * sup_grad / 4.0;
    let eval = |e: f64| -> (f64, f64) {
        let s = a * (1.0 + e);
        (if e.is_infinite() { c.value / (1.0 - s) } else { (1.0 + 1.0 / e) * c.value / (1.0 - s) }, s)
    };
    let (value, e_best, s) = match eps {
        Some(e) => {
            if !(e > 0.0) {
                return Err(Error::BadParameter(format!("eps must be positive, got {e}")));
            }
            let (v, s) = eval(e);
            if !(s < 1.0) {
                return Err(too_large(s));
            }
            (v, e, s)
        }
        None => {
            if !(a < 1.0) {
                return Err(too_large(a));
            }
            let mut cands: Vec<f64> = log_grid(1e-3, 1e3, PARAM_GRID);
            cands.push(if a > 0.0 { 1.0 / a.sqrt() - 1.0 } else { f64::INFINITY });
            let mut best = (f64::INFINITY, 0.0, 1.0);
            for e in cands {
                if a == 0.0 && e.is_infinite() {
                    best = (c.value, e, 0.0);
                    break;
                }
                if !(e > 0.0) {
                    continue;
                }
                let (v, s) = eval(e);
                if s < 1.0 && v < best.0 {
                    best = (v, e, s);
                }
            }
            if !best.0.is_finite() {
                return Err(too_large(a));
            }
            best
        }
    };
    WeightedConstant::new(c.weight.clone(), value, c.kind, format!("{} | weighted Lipschitz perturbation, s = {s:?}", c.provenance))
        .map(|w| w.with_params(&[("eps", e_best), ("s", s)]))
}

/// `sup_x (|grad U|^2 w^2 / 2 + L^w_{U+W} U)_+` on the verification grid.
pub fn generator_sup_term(weight: &Weight, u: &Potential, nu: &Measure) -> Result<f64> {
    let v = nu.potential_field()?.plus(u.field());
    let gen = WeightedGenerator::from_parts(weight.omega2_field(), v, nu.dim());
    let mut sup: f64 = 0.0;
    for x in verification_grid(nu, nu.r_trunc()) {
        let g = u.at(x).d1;
        let t = 0.5 * g * g * weight.omega2(x) + gen.apply(u.field(), x);
        if t.is_nan() {
            return Err(Error::Domain { expr: u.label().to_string(), x });
        }
        sup = sup.max(t);
    }
    Ok(sup)
}

/// `C / (1 - s)` with `s = C T / 2`.
pub fn perturb_weighted_generator(c: &WeightedConstant, sup_term: f64) -> Result<WeightedConstant> {
    let t = sup_term.max(0.0);
    let s = 0.5 * c.value * t;
    if !(s < 1.0) {
        return Err(too_large(s));
    }
    WeightedConstant::new(
        c.weight.clone(),
        c.value / (1.0 - s),
        c.kind,
        format!("{} | weighted generator perturbation, s = {s:?}", c.provenance),
    )
    .map(|w| w.with_params(&[("s", s)]))
}

/// `(1 + C_R) / (theta - theta')`.
pub fn weighted_lyapunov_constant(theta: f64, theta_prime: f64, ball_constant: f64) -> Result<f64> {
    if !(theta_prime < theta) {
        return Err(Error::CertificateInvalid(format!("need theta' < theta, got {theta_prime} >= {theta}")));
    }
    Ok((1.0 + ball_constant) / (theta - theta_prime))
}

pub fn perturb_weighted_lyapunov(report: &WeightedLyapunovReport, weight: &Weight, ball_constant: f64) -> Result<WeightedConstant> {
    if !report.verified() {
        return Err(Error::CertificateInvalid(format!(
            "weighted drift check failed (drift {:?}, side {:?})",
            report.drift.status, report.side.status
        )));
    }
    let v = weighted_lyapunov_constant(report.theta, report.theta_prime, ball_constant)?;
    WeightedConstant::new(
        weight.clone(),
        v,
        ConstantKind::Direct,
        format!("weighted drift, theta = {:?}, theta' = {:?}", report.theta, report.theta_prime),
    )
    .map(|w| w.with_params(&[("theta", report.theta), ("theta_prime", report.theta_prime), ("ball_constant", ball_constant)]))
}

/// `int w^{-2} d mu`.
pub fn inverse_weight_mass(weight: &Weight, measure: &Measure) -> Result<f64> {
    let w = weight.field().clone();
    let u = Potential::from_field(w.map(format!("ln(({})^2)", w.label()), |v| (v * v).ln()));
    let z = Measure::perturbed(measure, u)
        .map_err(|e| Error::WeightNotIntegrable(format!("int w^-2 d mu for {}: {e}", weight.label())))?
        .normalize()
        / measure.normalize();
    if !z.is_finite() {
        return Err(Error::WeightNotIntegrable(format!("int w^-2 d mu = {z}")));
    }
    Ok(z)
}

/// `beta(s) = C / G(s)`, `G(s) = inf{u : mu(w^2 >= 1/u) > s}`.
pub fn weak_rate_from_converse(c: &WeightedConstant, measure: &Measure) -> Result<RateFunction> {
    if c.kind != ConstantKind::Converse {
        return Err(Error::BadParameter("weak_rate_from_converse needs a converse constant".into()));
    }
    inverse_weight_mass(&c.weight, measure)?;
    let w = c.weight.field().clone();
    let g = w.map("1/w^2", |v| 1.0 / (v * v));
    let sets = LevelSets::new(measure, g, None);
    let value = c.value;
    RateFunction::tabulate_repaired(
        |s| value / sets.level_above_mass(s),
        RateKind::WeakPoincare,
        format!("converse weighted constant {value:?} with w = {}", c.weight.label()),
    )
}

/// `a / (4 beta(a/4))` for `0 < a <= 1/2`.
pub fn capacity_lower_bound(beta: &RateFunction, a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(Error::BadParameter(format!("set measure must lie in (0, 1/2], got {a}")));
    }
    Ok(a / (4.0 * beta.eval(a / 4.0)))
}

/// `w^2(x) = 1 / (4 beta(s(|x - x0|)/4))` with the tail `s(r) = mu(|y - x0| > r)`.
pub fn explicit_weight_from_rate(beta: &RateFunction, measure: &Measure, x0: f64) -> Result<Weight> {
    if beta.is_bounded_at_zero() {
        return Err(Error::RateBoundedAtZero);
    }
    measure.tail(1.0, x0)?;
    let h = {
        let (b, m) = (beta.clone(), measure.clone());
        move |x: f64| -> f64 {
            let s = m.tail((x - x0).abs(), x0).unwrap_or(0.0).clamp(1e-300, 1.0);
            1.0 / (4.0 * b.eval(s / 4.0))
        }
    };
    let rt = measure.r_trunc();
    let r: Vec<f64> = (0..=256).map(|i| (rt.atan() * i as f64 / 256.0).tan()).collect();
    let omega2: Vec<f64> = r.iter().map(|&v| h(x0 + v)).collect();
    let hh = h.clone();
    let omega = Field::from_values(format!("sqrt(1/(4 beta(s(|x-{x0:?}|)/4)))"), move |x| hh(x).sqrt());
    let mut w = Weight::new(WeightTag::ConstructedFromRate, omega);
    w.params = params(&[("x0", x0)]);
    w.profile = Some(RadialProfile { center: x0, r, omega2 });
    Ok(w)
}

/// Converse constant `16 C` from `int_A w^2 d mu <= C Cap(A)`; the weight
/// is stored as `1/w` so the inequality reads `int (f-m)^2 w^2 <= 16 C int |grad f|^2`.
pub fn converse_weighted_from_capacity(weight: &Weight, c: f64) -> Result<WeightedConstant> {
    if !(c > 0.0) {
        return Err(Error::BadParameter(format!("capacity constant must be positive, got {c}")));
    }
    WeightedConstant::new(weight.reciprocal(), 16.0 * c, ConstantKind::Converse, format!("capacitary criterion with C = {c:?}"))
        .map(|w| w.with_params(&[("capacity_constant", c)]))
}

/// `int e^{alpha U} d mu` with `d mu = e^{-U} d nu / Z`.
pub fn exp_moment(nu: &Measure, u: &Potential, alpha: f64) -> Result<f64> {
    let diverges = |e: Error| Error::IntegralDiverges(format!("int e^({alpha} U) d mu: {e}"));
    let z = Measure::perturbed(nu, u.clone()).map_err(diverges)?.normalize();
    let uf = u.field().clone();
    let w = Potential::from_field(uf.scaled(-(alpha - 1.0)));
    let top = Measure::perturbed(nu, w).map_err(diverges)?.normalize();
    let v = top / z;
    if !v.is_finite() {
        return Err(Error::IntegralDiverges(format!("int e^({alpha} U) d mu = {v}")));
    }
    Ok(v)
}

/// `int e^{U^-} d nu` with `U^- = max(-U, 0)`.
pub fn neg_part_moment(nu: &Measure, u: &Potential) -> Result<f64> {
    let uf = u.field().clone();
    let w = Field::new(format!("min({},0)", uf.label()), move |x| {
        let v = uf.apply(x);
        if v.v < 0.0 {
            v
        } else {
            Dual2::constant(0.0)
        }
    });
    let m = Measure::perturbed(nu, Potential::from_field(w)).map_err(|e| Error::IntegralDiverges(format!("int e^(U^-) d nu: {e}")))?;
    Ok(m.normalize() / nu.normalize())
}

/// Inputs of the log-Sobolev perturbation cases.
pub enum LsCase<'a> {
    Bounded {
        u: &'a Potential,
        m_u: f64,
        osc_u: Option<f64>,
    },
    /// `sup_grad = sup |grad U|^2 w^2`; `moment(alpha) = int e^{alpha U} d mu`.
    Lipschitz {
        sup_grad: f64,
        moment: &'a (dyn Fn(f64) -> Result<f64> + Sync),
    },
    /// `neg_moment = int e^{U^-} d nu`.
    LipschitzAlt {
        u: &'a Potential,
        sup_grad: f64,
        neg_moment: f64,
    },
    Generator {
        sup_term: f64,
        moment: &'a (dyn Fn(f64) -> Result<f64> + Sync),
    },
    Lyapunov {
        report: &'a WeightedLyapunovReport,
    },
}

#[derive(Debug, Clone)]
pub enum LsOutcome {
    Constant(WeightedConstant),
    /// Existence without an explicit constant.
    Qualitative {
        exists: bool,
        note: String,
    },
}

/// `alpha/(alpha-1) [(1+1/eps) C_LS + (2 + beta + M/alpha)(1+1/eps') C_P / (1-s)]`.
#[allow(clippy::too_many_arguments)]
pub fn ls_lipschitz_value(c_ls: f64, c_p: f64, s: f64, beta: f64, moment: f64, alpha: f64, eps: f64, eps_prime: f64) -> f64 {
    alpha / (alpha - 1.0) * ((1.0 + 1.0 / eps) * c_ls + (2.0 + beta + moment / alpha) * (1.0 + 1.0 / eps_prime) * c_p / (1.0 - s))
}

/// `Z (1+1/eps)/(1-s) ((2-s) C_LS + (2 + ln Z) C_P)`, `Z = int e^{U^-} d nu`.
pub fn ls_lipschitz_alt_value(c_ls: f64, c_p: f64, s: f64, neg_moment: f64, eps: f64) -> f64 {
    neg_moment * (1.0 + 1.0 / eps) / (1.0 - s) * ((2.0 - s) * c_ls + (2.0 + neg_moment.ln()) * c_p)
}

/// `alpha/(alpha-1) [C_LS + (2 + beta + M/alpha) C_P / (1-s)]`.
pub fn ls_generator_value(c_ls: f64, c_p: f64, s: f64, beta: f64, moment: f64, alpha: f64) -> f64 {
    alpha / (alpha - 1.0) * (c_ls + (2.0 + beta + moment / alpha) * c_p / (1.0 - s))
}

fn alpha_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, PARAM_GRID).into_iter().map(|t| 1.0 + t).collect()
}

fn moments(moment: &(dyn Fn(f64) -> Result<f64> + Sync)) -> Result<Vec<(f64, f64)>> {
    let out: Vec<(f64, f64)> = alpha_grid().into_iter().filter_map(|a| moment(a).ok().filter(|m| m.is_finite()).map(|m| (a, m))).collect();
    if out.is_empty() {
        return Err(Error::IntegralDiverges("int e^{alpha U} d mu is infinite for every alpha on the grid".into()));
    }
    Ok(out)
}

pub fn ls_perturb(c_ls: &WeightedConstant, c_p: &WeightedConstant, case: LsCase<'_>) -> Result<LsOutcome> {
    if c_ls.kind != ConstantKind::LogSobolev || c_p.kind != ConstantKind::Direct {
        return Err(Error::BadParameter("ls_perturb needs a log-Sobolev and a direct Poincare constant".into()));
    }
    let (cl, cp) = (c_ls.value, c_p.value);
    let ls = |w: Weight, v: f64, prov: String, p: &[(&str, f64)]| -> Result<LsOutcome> {
        Ok(LsOutcome::Constant(WeightedConstant::new(w, v, ConstantKind::LogSobolev, prov)?.with_params(p)))
    };
    match case {
        LsCase::Bounded { u, m_u, osc_u } => perturb_bounded(c_ls, u, m_u, osc_u).map(LsOutcome::Constant),
        LsCase::Lipschitz { sup_grad, moment } => {
            let ms = moments(moment)?;
            let grid = log_grid(1e-3, 1e3, PARAM_GRID);
            let mut best = (f64::INFINITY, [0.0; 4]);
            let mut s_min = f64::INFINITY;
            for &e in &grid {
                let s = cp * (1.0 + e) / 4.0 * sup_grad;
                s_min = s_min.min(s);
                if !(s < 1.0) {
                    continue;
                }
                for &ep in &grid {
                    let beta = cl * (1.0 + ep) / 4.0 * sup_grad;
                    for &(a, m) in &ms {
                        let v = ls_lipschitz_value(cl, cp, s, beta, m, a, e, ep);
                        if v < best.0 {
                            best = (v, [e, ep, a, s]);
                        }
                    }
                }
            }
            if !best.0.is_finite() {
                return Err(too_large(s_min));
            }
            let [e, ep, a, s] = best.1;
            ls(
                c_ls.weight.clone(),
                best.0,
                format!("{} | weighted Lipschitz log-Sobolev perturbation", c_ls.provenance),
                &[("eps", e), ("eps_prime", ep), ("alpha", a), ("s", s)],
            )
        }
        LsCase::LipschitzAlt { u, sup_grad, neg_moment } => {
            if !(neg_moment >= 1.0) || !neg_moment.is_finite() {
                return Err(Error::BadParameter(format!("int e^(U^-) d nu must be finite and >= 1, got {neg_moment}")));
            }
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let mut s_min = f64::INFINITY;
            for e in log_grid(1e-3, 1e3, PARAM_GRID) {
                let s = cp * (1.0 + e) / 4.0 * sup_grad;
                s_min = s_min.min(s);
                if s < 1.0 {
                    let v = ls_lipschitz_alt_value(cl, cp, s, neg_moment, e);
                    if v < best.0 {
                        best = (v, e, s);
                    }
                }
            }
            if !best.0.is_finite() {
                return Err(too_large(s_min));
            }
            let uf = u.field().clone();
            let up = uf.map(format!("max({},0)", uf.label()), |v| if v.v > 0.0 { v } else { Dual2::constant(0.0) });
            let mut w = c_ls.weight.times_exp_half(&up);
            let k = neg_moment.sqrt();
            w.omega = w.omega.map(format!("{}/{k:?}", w.omega.label()), move |v| v / k);
            ls(
                w,
                best.0,
                format!("{} | weighted Lipschitz log-Sobolev perturbation, weight w e^(U+/2)", c_ls.provenance),
                &[("eps", best.1), ("s", best.2), ("m_u", neg_moment.ln())],
            )
        }
        LsCase::Generator { sup_term, moment } => {
            let t = sup_term.max(0.0);
            let s = 0.5 * cp * t;
            if !(s < 1.0) {
                return Err(too_large(s));
            }
            let beta = 0.5 * cl * t;
            let ms = moments(moment)?;
            let (v, a) = ms.iter().map(|&(a, m)| (ls_generator_value(cl, cp, s, beta, m, a), a)).fold((f64::INFINITY, 0.0), |x, y| {
                if y.0 < x.0 {
                    y
                } else {
                    x
                }
            });
            ls(
                c_ls.weight.clone(),
                v,
                format!("{} | weighted generator log-Sobolev perturbation", c_ls.provenance),
                &[("alpha", a), ("s", s), ("beta", beta)],
            )
        }
        LsCase::Lyapunov { report } => {
            if !report.verified() {
                return Err(Error::CertificateInvalid("weighted drift check failed".into()));
            }
            Ok(LsOutcome::Qualitative {
                exists: true,
                note: "weighted drift verified; the constant also needs a local super Poincare inequality and is not explicit".into(),
            })
        }
    }
}

pub enum AlgebraOp {
    Translate(f64),
    Scale(f64),
    /// `T` with Lipschitz constant `lipschitz` and inverse `inverse`.
    LipschitzMap {
        lipschitz: f64,
        inverse: Field,
    },
    Tensorize,
    Convolve,
}

#[derive(Debug, Clone)]
pub enum AlgebraResult {
    Constant(WeightedConstant),
    /// `max_i C_i` with the weights `w_i` acting on coordinate `i`.
    Tensorized {
        constant: f64,
        weights: Vec<Weight>,
        kind: ConstantKind,
    },
    /// Weighted gradient field `sum_i C_i w_i^2(z_i)`.
    Convolved {
        terms: Vec<(f64, Weight)>,
        kind: ConstantKind,
    },
}

impl AlgebraResult {
    /// `sum_i C_i w_i^2(z_i)` for a convolution descriptor.
    pub fn convolved_field(&self, z: &[f64]) -> Option<f64> {
        match self {
            AlgebraResult::Convolved { terms, .. } => Some(terms.iter().zip(z).map(|((c, w), &zi)| c * w.omega2(zi)).sum()),
            _ => None,
        }
    }
}

pub fn weighted_constant_algebra(op: AlgebraOp, inputs: &[WeightedConstant]) -> Result<AlgebraResult> {
    let first = inputs.first().ok_or_else(|| Error::BadParameter("need at least one constant".into()))?;
    let one = |w: Weight, v: f64, p: String| -> Result<AlgebraResult> {
        Ok(AlgebraResult::Constant(WeightedConstant {
            weight: w,
            value: v,
            kind: first.kind,
            provenance: format!("{} | {p}", first.provenance),
            params: first.params.clone(),
        }))
    };
    match op {
        AlgebraOp::Translate(x) => one(first.weight.shifted(x), first.value, format!("translated by {x:?}")),
        AlgebraOp::Scale(l) => {
            if l == 0.0 || !l.is_finite() {
                return Err(Error::BadParameter(format!("scale must be finite and nonzero, got {l}")));
            }
            one(first.weight.dilated(l), l * l * first.value, format!("scaled by {l:?}"))
        }
        AlgebraOp::LipschitzMap { lipschitz, inverse } => {
            if !(lipschitz > 0.0) {
                return Err(Error::BadParameter(format!("Lipschitz constant must be positive, got {lipschitz}")));
            }
            one(first.weight.composed(&inverse), lipschitz * lipschitz * first.value, format!("{lipschitz:?}-Lipschitz image"))
        }
        AlgebraOp::Tensorize => Ok(AlgebraResult::Tensorized {
            constant: inputs.iter().map(|c| c.value).fold(0.0, f64::max),
            weights: inputs.iter().map(|c| c.weight.clone()).collect(),
            kind: first.kind,
        }),
        AlgebraOp::Convolve => {
            Ok(AlgebraResult::Convolved { terms: inputs.iter().map(|c| (c.value, c.weight.clone())).collect(), kind: first.kind })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{cauchy_phi_certificate, verified};
    use std::f64::consts::{E, PI};

    fn direct(v: f64) -> WeightedConstant {
        WeightedConstant::new(Weight::cauchy_optimal(), v, ConstantKind::Direct, "test").unwrap()
    }

    #[test]
    fn cauchy_table() {
        assert_eq!(cauchy_weighted_constant(1.0, 1).unwrap().value, 4.0);
        assert_eq!(cauchy_weighted_constant(3.0, 1).unwrap().value, 0.5);
        assert!((cauchy_weighted_constant(5.0, 3).unwrap().value - 1.0 / 6.0).abs() < 1e-15);
        let b = hug_branches(3);
        assert!((b[1].value(5.0, 3) - b[2].value(5.0, 3)).abs() < 1e-15);
        assert!((cauchy_converse_constant(5.0, 3).unwrap().value - 0.125).abs() < 1e-15);
        assert_eq!(cauchy_converse_constant(3.0, 1).unwrap().value, 0.25);
        let c: f64 = 2.0 / 3.0;
        let v = cauchy_converse_constant(2.5, 1).unwrap().value;
        assert!((v - c / (1.0 - c.sqrt()).powi(2)).abs() < 1e-12 && (v - 19.798).abs() < 1e-3, "{v}");
        let low = cauchy_converse_constant(1.0, 1).unwrap();
        assert!(low.value.is_finite() && low.params.contains_key("k"));
    }

    #[test]
    fn change_of_function() {
        assert!((converse_from_direct(&direct(0.25), 1.0).unwrap().value - 1.0).abs() < 1e-15);
        assert!((converse_from_direct(&direct(1.0 / 9.0), 1.0).unwrap().value - 0.25).abs() < 1e-15);
        assert!(matches!(converse_from_direct(&direct(1.0), 1.0), Err(Error::TrickInapplicable { .. })));
        let mut prev = f64::INFINITY;
        for c in [1e-2, 1e-4, 1e-6, 1e-8] {
            let r = converse_from_direct(&direct(c), 1.0).unwrap().value / c;
            assert!(r < prev && r >= 1.0);
            prev = r;
        }
        assert!(prev - 1.0 < 1e-3);
    }

    #[test]
    fn lyapunov_route_closed_form() {
        let (a, k, e) = (1.0, 0.5, 0.25);
        let c = cauchy_lyapunov_constants(a, 1, k, e).unwrap();
        let r2: f64 = 5.0;
        let inner = 1.5 + 0.25 * 6f64.powf(0.25);
        let ball = 4.0 / (PI * PI) * r2 * 6.0;
        assert!((c.radius - r2.sqrt()).abs() < 1e-15);
        assert!((c.converse - (0.4 + inner * ball) / 0.25).abs() < 1e-12 * c.converse);
        assert!((c.direct - (inner / 0.25 * ball) * (1.125 / 0.125)).abs() < 1e-12 * c.direct);

        let m = Measure::cauchy(a, 1).unwrap();
        let cert = verified(cauchy_phi_certificate(a, 1, k, e).unwrap(), &m).unwrap();
        let lw = weight_from_phi_lyapunov(&cert, &m, None).unwrap();
        assert!((lw.ball_constant - c.ball_constant).abs() < 1e-9 * c.ball_constant);
        assert!((lw.converse.value * (1.0 / (k + 2.0)) / e - c.converse).abs() < 1e-8 * c.converse);
        for x in [0.0, 1.0, 10.0] {
            let w2 = lw.direct.weight.omega2(x);
            assert!((w2 - (1.0 + (1.0 + x * x) / (e * k))).abs() < 1e-9 * w2, "{x}");
            let cw = lw.converse.weight.omega2(x);
            assert!((cw - (1.0 + x * x) / (e * (k + 2.0))).abs() < 1e-9 * cw);
        }
    }

    #[test]
    fn linear_phi_gives_constant_weight() {
        let m = Measure::gaussian(1).unwrap();
        let f = Field::new("1+x^2", |x| x * x + 1.0);
        let phi = Field::new("u", |u| u);
        let cert = verified(LyapunovCertificate::phi_variant(f, phi, 4.0, 2.0), &m).unwrap();
        assert!(cert.is_verified(), "{:?}", cert.report);
        let lw = weight_from_phi_lyapunov(&cert, &m, Some(1.0)).unwrap();
        for x in [0.0, 0.7, 3.0] {
            assert!((lw.direct.weight.omega2(x) - 2.0).abs() < 1e-9);
        }
        assert_eq!(lw.direct.value, 4.0);
        assert_eq!(lw.alternate.value, 128.0);
    }

    #[test]
    fn ball_bounds() {
        let u = Measure::uniform_interval(-1.0, 1.0).unwrap();
        assert!((ball_poincare_bound(&u, 1.0).unwrap() - 4.0 / (PI * PI)).abs() < 1e-12);
        assert!((ball_poincare_value(3, 2.0, 0.0) - 10.0 / 3.0).abs() < 1e-15);
        assert!((ball_poincare_value(3, 2.0, 2f64.ln()) - 20.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn perturbation_examples() {
        let u = Potential::log_abs(1.0);
        let p = perturb_bounded(&direct(2.0), &u, -(3f64.ln()), None).unwrap();
        assert!((p.value - 6.0).abs() < 1e-14);
        let x: f64 = 2.0;
        assert!((p.weight.value(x) - (1.0 + x * x).sqrt() * (3f64.ln() / 2.0).exp()).abs() < 1e-12);
        assert_eq!(perturb_bounded(&direct(2.0), &u, 0.0, Some(0.0)).unwrap().value, 2.0);
        let ls = WeightedConstant::new(Weight::cauchy_ls(), 1.0, ConstantKind::LogSobolev, "ls").unwrap();
        assert!((perturb_bounded(&ls, &u, 0.0, Some(2f64.ln())).unwrap().value - 2.0).abs() < 1e-15);

        assert!((perturb_weighted_lipschitz(&direct(1.0), 1.0, Some(1.0)).unwrap().value - 4.0).abs() < 1e-15);
        let z = perturb_weighted_lipschitz(&direct(1.5), 0.0, None).unwrap();
        assert_eq!(z.value, 1.5);
        let c = 0.5;
        let eps = 1.0;
        let beta2: f64 = 4.0 / ((1.0 + eps) * c);
        let m = Measure::cauchy(3.0, 1).unwrap();
        let g = sup_weighted_gradient(&Weight::cauchy_optimal(), &Potential::log_abs(beta2.sqrt()), &m);
        assert!(g <= beta2 * (1.0 + 1e-12) && g > 0.9 * beta2, "{g}");
        assert!(matches!(perturb_weighted_lipschitz(&direct(c), beta2, Some(eps)), Err(Error::PerturbationTooLarge { .. })));
        let auto = perturb_weighted_lipschitz(&direct(1.0), 1.0, None).unwrap();
        assert!((auto.value - 1.0 / (1.0 - 0.5f64).powi(2)).abs() < 1e-12);

        assert_eq!(perturb_weighted_generator(&direct(1.5), 0.0).unwrap().value, 1.5);
        assert!((perturb_weighted_generator(&direct(1.0), 1.0).unwrap().value - 2.0).abs() < 1e-15);
        let t = generator_sup_term(&Weight::cauchy_optimal(), &Potential::log_abs(0.3), &m).unwrap();
        assert!(t.is_finite() && t >= 0.0);

        assert_eq!(weighted_lyapunov_constant(2.0, 1.0, 3.0).unwrap(), 4.0);
        assert_eq!(weighted_lyapunov_constant(2.0, 0.0, 3.0).unwrap(), 2.0);
        assert!(weighted_lyapunov_constant(1.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn perturbations_are_monotone_in_s() {
        let mut prev = 0.0;
        for g in [0.0, 0.5, 1.0, 2.0, 3.0, 3.9] {
            let v = perturb_weighted_lipschitz(&direct(1.0), g, None).unwrap().value;
            let w = perturb_weighted_generator(&direct(1.0), g / 2.0).unwrap().value;
            assert!(v >= prev && w >= 1.0);
            prev = v;
        }
    }

    #[test]
    fn weighted_lyapunov_example() {
        let base = Measure::cauchy(4.0, 1).unwrap();
        let cert = crate::lyapunov::verified(crate::lyapunov::cauchy_weighted_certificate(4.0, 2.0).unwrap(), &base).unwrap();
        let rep = crate::lyapunov::weighted_lyapunov_check(&cert, &base, &Potential::log_abs(-0.25), 0.5).unwrap();
        let c = perturb_weighted_lyapunov(&rep, &Weight::cauchy_optimal(), 3.0).unwrap();
        assert!((c.value - 4.0 / 1.5).abs() < 1e-14);
    }

    #[test]
    fn converse_to_weak_rate() {
        let m = Measure::cauchy(2.0, 1).unwrap();
        let c = cauchy_converse_constant(2.0, 1).unwrap();
        let r = weak_rate_from_converse(&c, &m).unwrap();
        let slope = r.loglog_slope(1e-6, 1e-3, 16);
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
        let k = WeightedConstant::new(Weight::constant(2.0), 3.0, ConstantKind::Converse, "c").unwrap();
        let rc = weak_rate_from_converse(&k, &m).unwrap();
        for s in [1e-7, 1e-3, 0.25] {
            assert!((rc.eval(s) - 12.0).abs() < 1e-9, "{}", rc.eval(s));
        }
        let bad = WeightedConstant::new(
            Weight::new(WeightTag::Custom, Field::new("|x|^(1/2)", |x| x.abs().sqrt())),
            1.0,
            ConstantKind::Converse,
            "bad",
        )
        .unwrap();
        assert!(matches!(weak_rate_from_converse(&bad, &m), Err(Error::WeightNotIntegrable(_))));
    }

    #[test]
    fn capacity_route() {
        let b = RateFunction::constant(10.0, RateKind::WeakPoincare, "c").unwrap();
        assert!((capacity_lower_bound(&b, 0.5).unwrap() - 1.0 / 80.0).abs() < 1e-15);
        let inv = RateFunction::power(1.0, 1.0, RateKind::WeakPoincare, "1/s").unwrap();
        assert!((capacity_lower_bound(&inv, 0.01).unwrap() - 1e-4 / 16.0).abs() < 1e-18);
        assert!(capacity_lower_bound(&inv, 0.6).is_err());

        let m = Measure::cauchy(2.0, 1).unwrap();
        let w = explicit_weight_from_rate(&inv, &m, 0.0).unwrap();
        for x in [0.0, 0.5, 3.0, 40.0] {
            let s = m.tail(x, 0.0).unwrap();
            assert!((w.omega2(x) - s / 16.0).abs() < 1e-12, "{x}");
        }
        assert!(w.profile.as_ref().unwrap().is_non_increasing());
        let c = RateFunction::constant(2.0, RateKind::WeakPoincare, "c").unwrap();
        assert!(matches!(explicit_weight_from_rate(&c, &m, 0.0), Err(Error::RateBoundedAtZero)));
        assert_eq!(converse_weighted_from_capacity(&w, 1.0).unwrap().value, 16.0);
        assert_eq!(converse_weighted_from_capacity(&w, 0.5).unwrap().value, 8.0);
    }

    #[test]
    fn log_sobolev_cases() {
        let v = ls_lipschitz_value(1.0, 1.0, 0.5, 1.0, E, 2.0, 1.0, 1.0);
        assert!((v - (28.0 + 4.0 * E)).abs() < 1e-12);
        let ls = WeightedConstant::new(Weight::cauchy_ls(), 1.0, ConstantKind::LogSobolev, "ls").unwrap();
        let u = Potential::zero();
        match ls_perturb(&ls, &direct(1.0), LsCase::Bounded { u: &u, m_u: 0.0, osc_u: Some(0.0) }).unwrap() {
            LsOutcome::Constant(c) => assert_eq!(c.value, 1.0),
            o => panic!("{o:?}"),
        }
        let u = Potential::log_abs(0.5);
        let alt = ls_lipschitz_alt_value(1.0, 2.0, 0.25, 1.0, 1.0);
        assert!((alt - 2.0 / 0.75 * (1.75 + 4.0)).abs() < 1e-12);
        match ls_perturb(&ls, &direct(1.0), LsCase::LipschitzAlt { u: &u, sup_grad: 0.5, neg_moment: 1.0 }).unwrap() {
            LsOutcome::Constant(c) => {
                assert!(c.value.is_finite());
                let x: f64 = 3.0;
                let expect = Weight::cauchy_ls().value(x) * (0.5 * u.value(x)).exp();
                assert!((c.weight.value(x) - expect).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
        let nu = Measure::cauchy(3.0, 1).unwrap();
        let moment = |a: f64| exp_moment(&nu, &u, a);
        let sg = sup_weighted_gradient(&Weight::cauchy_ls(), &u, &nu);
        let out = ls_perturb(&ls, &direct(0.5), LsCase::Lipschitz { sup_grad: sg.min(1.0), moment: &moment });
        assert!(matches!(out, Ok(LsOutcome::Constant(_))), "{out:?}");
        let heavy = Potential::power_abs(1.0, 2.0).unwrap();
        let m2 = |a: f64| exp_moment(&nu, &heavy, a);
        assert!(matches!(ls_perturb(&ls, &direct(0.5), LsCase::Generator { sup_term: 0.1, moment: &m2 }), Err(Error::IntegralDiverges(_))));
        assert!((exp_moment(&nu, &Potential::zero(), 2.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((neg_part_moment(&nu, &Potential::log_abs(1.0)).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn algebra() {
        let c = direct(2.0);
        match weighted_constant_algebra(AlgebraOp::Scale(3.0), std::slice::from_ref(&c)).unwrap() {
            AlgebraResult::Constant(s) => {
                assert_eq!(s.value, 18.0);
                assert!((s.weight.value(3.0) - 2f64.sqrt()).abs() < 1e-14);
            }
            _ => panic!(),
        }
        match weighted_constant_algebra(AlgebraOp::Translate(1.5), std::slice::from_ref(&c)).unwrap() {
            AlgebraResult::Constant(s) => {
                assert_eq!(s.value, 2.0);
                assert_eq!(s.weight.value(1.5), 1.0);
            }
            _ => panic!(),
        }
        let conv = weighted_constant_algebra(AlgebraOp::Convolve, &[c.clone(), direct(0.5)]).unwrap();
        assert!((conv.convolved_field(&[1.0, 2.0]).unwrap() - (2.0 * 2.0 + 0.5 * 5.0)).abs() < 1e-12);
        match weighted_constant_algebra(AlgebraOp::Tensorize, &[c, direct(0.5)]).unwrap() {
            AlgebraResult::Tensorized { constant, weights, .. } => assert!(constant == 2.0 && weights.len() == 2),
            _ => panic!(),
        }
    }

    #[test]
    fn serializes() {
        let c = cauchy_weighted_constant(3.0, 1).unwrap();
        let j = serde_json::to_value(c.data()).unwrap();
        assert_eq!(j["weight_tag"], "cauchy_optimal");
        assert_eq!(j["kind"], "direct");
        assert_eq!(j["value"], 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn branches_meet_at_seams(d in 1usize..8) {
                let b = hug_branches(d);
                for w in b.windows(2) {
                    let a = w[0].hi;
                    prop_assert!((w[0].value(a, d) - w[1].value(a, d)).abs() < 1e-12);
                }
            }

            #[test]
            fn weighted_constant_is_positive(alpha in 0.05f64..40.0, d in 1usize..6) {
                let c = cauchy_weighted_constant(alpha, d).unwrap().value;
                let v = cauchy_converse_constant(alpha, d).unwrap().value;
                prop_assert!(c > 0.0 && c.is_finite() && v > 0.0 && v.is_finite());
            }

            #[test]
            fn perturbations_grow_with_s(c in 0.01f64..2.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
                let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
                let k = direct(c);
                let scale = 3.9 / c;
                let a = perturb_weighted_lipschitz(&k, lo * scale, None).unwrap().value;
                let b = perturb_weighted_lipschitz(&k, hi * scale, None).unwrap().value;
                prop_assert!(b >= a * (1.0 - 1e-12));
                let a = perturb_weighted_generator(&k, lo * 1.9 / c).unwrap().value;
                let b = perturb_weighted_generator(&k, hi * 1.9 / c).unwrap().value;
                prop_assert!(b >= a);
            }

            #[test]
            fn scale_rule(c in 0.01f64..10.0, l in -5.0f64..5.0) {
                prop_assume!(l.abs() > 1e-3);
                match weighted_constant_algebra(AlgebraOp::Scale(l), &[direct(c)]).unwrap() {
                    AlgebraResult::Constant(s) => prop_assert!((s.value - l * l * c).abs() <= 1e-12 * s.value),
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
