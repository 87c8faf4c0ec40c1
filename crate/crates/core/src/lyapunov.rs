//! Lyapunov drift certificates and the weighted generator
//! `L^w f = w^2 Lap f + (grad w^2 - w^2 grad V) . grad f`.
//!
//! Everything is evaluated along the measure's coordinate: `x` in dimension
//! one, the radius for radial measures. Certificates are checked on a
//! tangent grid covering `[0, R_trunc]` (both signs on the line); a check is
//! numerical evidence on that grid, not a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::Dual2;
use crate::error::{Error, Result};
use crate::field::{Field, Potential};
use crate::measures::{Geometry, Measure, MeasureKind};

pub const DEFAULT_TOL: f64 = 1e-9;
const GRID_POINTS: usize = 4096;

/// Laplacian from value/derivatives along the coordinate. At the origin of a
/// radial coordinate `f'/r -> f''`.
fn lap(f: Dual2, x: f64, dim: usize) -> f64 {
    if dim <= 1 {
        f.d2
    } else if x == 0.0 {
        dim as f64 * f.d2
    } else {
        f.d2 + (dim as f64 - 1.0) * f.d1 / x
    }
}

/// `L^w` for a weight `w^2` and potential `V`.
#[derive(Debug, Clone)]
pub struct WeightedGenerator {
    omega2: Field,
    v: Field,
    dim: usize,
}

impl WeightedGenerator {
    pub fn new(omega2: Field, measure: &Measure) -> Result<Self> {
        Ok(Self { omega2, v: measure.potential_field()?.clone(), dim: measure.dim() })
    }

    /// The unweighted operator `L_V = Lap - grad V . grad`.
    pub fn plain(measure: &Measure) -> Result<Self> {
        Self::new(Field::constant(1.0), measure)
    }

    pub fn from_parts(omega2: Field, v: Field, dim: usize) -> Self {
        Self { omega2, v, dim }
    }

    pub fn omega2(&self) -> &Field {
        &self.omega2
    }

    pub fn potential(&self) -> &Field {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(L^w f)(x)`.
    pub fn apply(&self, f: &Field, x: f64) -> f64 {
        self.apply_dual(f.at(x), x)
    }

    pub(crate) fn apply_dual(&self, f: Dual2, x: f64) -> f64 {
        let w = self.omega2.at(x);
        let mut out = w.v * lap(f, x, self.dim);
        if f.d1 != 0.0 {
            out += self.drift(x) * f.d1;
        }
        out
    }

    /// Drift `(w^2)' - w^2 V'` along the coordinate.
    pub fn drift(&self, x: f64) -> f64 {
        let w = self.omega2.at(x);
        let v = self.v.at(x);
        w.d1 - w.v * v.d1
    }

    /// Diffusion coefficient `sqrt(2 w^2)`.
    pub fn diffusion(&self, x: f64) -> f64 {
        (2.0 * self.omega2.value(x)).sqrt()
    }
}

/// `L f` at `x`, the plain operator when `gen` is built with `w = 1`.
pub fn apply_generator(gen: &WeightedGenerator, f: &Field, x: f64) -> f64 {
    gen.apply(f, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `L_V F / F <= -phi + b 1_{B(0,R)}`, `phi` a function of `x`.
    Weak,
    /// `L_V F <= -phi(F) + b 1_{B(0,R)}`, `phi` a function of `F`.
    Phi,
    /// `L^w F <= -theta F + b 1_{B(0,R)}`.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Verified,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub status: Status,
    pub max_violation: f64,
    /// Grid point of the worst violation.
    pub witness: f64,
    pub grid_points: usize,
    pub r_trunc: f64,
    pub tolerance: f64,
}

impl VerificationReport {
    pub fn verified(&self) -> bool {
        self.status == Status::Verified
    }
}

#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub variant: Variant,
    pub f: Field,
    pub phi: Field,
    pub b: f64,
    pub radius: f64,
    pub theta: f64,
    /// `w^2` for the weighted variant.
    pub omega2: Option<Field>,
    pub report: Option<VerificationReport>,
    pub provenance: String,
}

/// JSON view of a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub variant: Variant,
    pub f: String,
    pub phi: String,
    pub b: f64,
    pub radius: f64,
    pub theta: f64,
    pub omega2: Option<String>,
    pub report: Option<VerificationReport>,
    pub provenance: String,
}

impl LyapunovCertificate {
    pub fn weak(f: Field, phi: Field, b: f64, radius: f64) -> Self {
        Self { variant: Variant::Weak, f, phi, b, radius, theta: 0.0, omega2: None, report: None, provenance: String::new() }
    }

    pub fn phi_variant(f: Field, phi_of_f: Field, b: f64, radius: f64) -> Self {
        Self { variant: Variant::Phi, phi: phi_of_f, ..Self::weak(f, Field::constant(0.0), b, radius) }
    }

    pub fn weighted(f: Field, omega2: Field, theta: f64, b: f64, radius: f64) -> Self {
        Self { variant: Variant::Weighted, theta, omega2: Some(omega2), ..Self::weak(f, Field::constant(0.0), b, radius) }
    }

    pub fn is_verified(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.verified())
    }

    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            variant: self.variant,
            f: self.f.label().to_string(),
            phi: self.phi.label().to_string(),
            b: self.b,
            radius: self.radius,
            theta: self.theta,
            omega2: self.omega2.as_ref().map(|w| w.label().to_string()),
            report: self.report.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// `(LHS, RHS)` of the drift inequality at `x`.
    fn sides(&self, gen: &WeightedGenerator, x: f64) -> (f64, f64) {
        let fd = self.f.at(x);
        let inside = if x.abs() <= self.radius { self.b } else { 0.0 };
        match self.variant {
            Variant::Weak => (gen.apply_dual(fd, x) / fd.v, -self.phi.value(x) + inside),
            Variant::Phi => (gen.apply_dual(fd, x), -self.phi.value(fd.v) + inside),
            Variant::Weighted => (gen.apply_dual(fd, x), -self.theta * fd.v + inside),
        }
    }

    fn generator(&self, measure: &Measure) -> Result<WeightedGenerator> {
        match (&self.variant, &self.omega2) {
            (Variant::Weighted, Some(w)) => WeightedGenerator::new(w.clone(), measure),
            (Variant::Weighted, None) => Err(Error::CertificateInvalid("weighted certificate without a weight".into())),
            _ => WeightedGenerator::plain(measure),
        }
    }
}

/// Verification grid: `x = tan(theta)` with `theta` uniform, covering
/// `[0, upto]`, mirrored for line measures and clipped to the support.
pub fn verification_grid(measure: &Measure, upto: f64) -> Vec<f64> {
    let top = upto.atan();
    let pos: Vec<f64> = (0..GRID_POINTS).map(|i| (top * i as f64 / (GRID_POINTS - 1) as f64).tan()).collect();
    let (lo, hi) = measure.support();
    let mut g = Vec::with_capacity(2 * GRID_POINTS);
    if let Geometry::Line { .. } = measure.geometry() {
        g.extend(pos.iter().rev().map(|x| -x).filter(|&x| x < 0.0));
    }
    g.extend(pos.iter().copied());
    g.retain(|&x| x >= lo && x <= hi);
    g
}

fn rel_violation(lhs: f64, rhs: f64) -> f64 {
    let v = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(1.0);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Check the certificate's drift inequality on the grid.
pub fn verify_certificate(cert: &LyapunovCertificate, measure: &Measure, tol: f64) -> Result<VerificationReport> {
    let gen = cert.generator(measure)?;
    let rt = measure.r_trunc();
    let grid = verification_grid(measure, rt);
    let viol: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            let (l, r) = cert.sides(&gen, x);
            let below_one = 1.0 - cert.f.value(x);
            rel_violation(l, r).max(if below_one > tol { below_one } else { f64::NEG_INFINITY })
        })
        .collect();
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0.0);
    for (&v, &x) in viol.iter().zip(&grid) {
        if v > worst {
            worst = v;
            at = x;
        }
    }
    Ok(VerificationReport {
        status: if worst <= tol { Status::Verified } else { Status::Failed },
        max_violation: worst,
        witness: at,
        grid_points: grid.len(),
        r_trunc: rt,
        tolerance: tol,
    })
}

/// Attach a fresh report to the certificate.
pub fn verified(mut cert: LyapunovCertificate, measure: &Measure) -> Result<LyapunovCertificate> {
    cert.report = Some(verify_certificate(&cert, measure, DEFAULT_TOL)?);
    Ok(cert)
}

/// Fit a weak certificate `phi = c * shape`: `c` is `margin` times the
/// smaller of the far-end value of `-(L F / F) / shape` and `q_limit`, `R`
/// the radius beyond which the inequality holds on the grid and `b` the
/// excess inside.
pub fn fit_weak_certificate(measure: &Measure, f: Field, shape: Field, q_limit: Option<f64>, margin: f64) -> Result<LyapunovCertificate> {
    let gen = WeightedGenerator::plain(measure)?;
    let grid = verification_grid(measure, measure.r_trunc());
    let lf: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            let fd = f.at(x);
            gen.apply_dual(fd, x) / fd.v
        })
        .collect();
    let q: Vec<f64> = lf.iter().zip(&grid).map(|(&l, &x)| -l / shape.value(x)).collect();
    let far = match measure.geometry() {
        Geometry::Line { .. } => q[0].min(q[q.len() - 1]),
        _ => q[q.len() - 1],
    };
    let c = margin * q_limit.map_or(far, |ql| far.min(ql));
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::CertificateInvalid(format!("no positive dissipation at the far end (q = {far:e})")));
    }
    let mut radius: f64 = 0.0;
    for (i, (&qi, &x)) in q.iter().zip(&grid).enumerate() {
        if !(qi >= c) {
            // step to the next grid point outward
            let next = if x >= 0.0 { grid.get(i + 1).copied().unwrap_or(x) } else { grid.get(i.wrapping_sub(1)).copied().unwrap_or(x) };
            radius = radius.max(x.abs()).max(next.abs());
        }
    }
    let phi = shape.scaled(c);
    let mut b: f64 = 0.0;
    for (&l, &x) in lf.iter().zip(&grid) {
        if x.abs() <= radius {
            b = b.max(l + phi.value(x));
        }
    }
    let b = b * (1.0 + 1e-9) + 1e-12;
    let mut cert = LyapunovCertificate::weak(f, phi, b, radius);
    cert.provenance = format!("weak drift fitted on grid, c = {c:?}, margin {margin}");
    let cert = verified(cert, measure)?;
    if !cert.is_verified() {
        let r = cert.report.as_ref().unwrap();
        return Err(Error::CertificateInvalid(format!("fitted certificate fails at x = {} (violation {:e})", r.witness, r.max_violation)));
    }
    Ok(cert)
}

/// `F = (1 + r^2)^k` with `k = 1 + alpha/4` and `phi = c / (1 + r^2)`.
pub fn cauchy_certificate(measure: &Measure) -> Result<LyapunovCertificate> {
    let alpha = match measure.kind() {
        MeasureKind::Cauchy { alpha } => *alpha,
        _ => return Err(Error::BadParameter("cauchy certificate needs a cauchy measure".into())),
    };
    let k = 1.0 + alpha / 4.0;
    let f = Field::new(format!("(1+r^2)^{k:?}"), move |x| (x * x + 1.0).powf(k));
    let shape = Field::new("1/(1+r^2)", |x| 1.0 / (x * x + 1.0));
    fit_weak_certificate(measure, f, shape, Some(k * alpha), 0.9)
}

/// `F = exp(gamma (1 + r^2)^{alpha/2})`, `gamma = 1/2`, and
/// `phi = c (1 + r^2)^{alpha - 1}`.
pub fn subbotin_certificate(measure: &Measure) -> Result<LyapunovCertificate> {
    let alpha = match measure.kind() {
        MeasureKind::Subbotin { alpha } => *alpha,
        _ => return Err(Error::BadParameter("subbotin certificate needs a subbotin measure".into())),
    };
    let gamma = 0.5;
    let f = Field::new(format!("exp({gamma:?}*(1+r^2)^{:?})", alpha / 2.0), move |x| ((x * x + 1.0).powf(alpha / 2.0) * gamma).exp());
    let shape = Field::new(format!("(1+r^2)^{:?}", alpha - 1.0), move |x| (x * x + 1.0).powf(alpha - 1.0));
    fit_weak_certificate(measure, f, shape, Some(gamma * (1.0 - gamma) * alpha * alpha), 0.9)
}

/// `F = e^{r^2/4}`, `phi = 1/4`, through the far-field normalization.
pub fn gaussian_certificate(measure: &Measure) -> Result<LyapunovCertificate> {
    if !matches!(measure.kind(), MeasureKind::Gaussian) {
        return Err(Error::BadParameter("gaussian certificate needs a gaussian measure".into()));
    }
    let d = measure.dim() as f64;
    let k = if measure.dim() == 1 { 2.0 } else { (2.0 * d + 2.0).sqrt() };
    let f = Field::new("exp(r^2/4)", |x| (x * x * 0.25).exp());
    normalize_far_field(measure, f, Field::constant(0.25), k)
}

/// Weak certificate for one of the builtin families.
pub fn certificate_for(measure: &Measure) -> Result<LyapunovCertificate> {
    match measure.kind() {
        MeasureKind::Cauchy { .. } => cauchy_certificate(measure),
        MeasureKind::Subbotin { .. } => subbotin_certificate(measure),
        MeasureKind::Gaussian => gaussian_certificate(measure),
        _ => Err(Error::Unsupported("no builtin Lyapunov certificate for this measure".into())),
    }
}

/// Turn `L F / F <= -phi` on `|x| >= K` into a global weak certificate with
/// `b = 2M`, `R = K`, `M` bounding `|L F / F|` and `|phi|` on the ball.
pub fn normalize_far_field(measure: &Measure, f: Field, phi: Field, k: f64) -> Result<LyapunovCertificate> {
    let rt = measure.r_trunc();
    if !(k >= 0.0) || k > rt {
        return Err(Error::BadParameter(format!("far-field radius {k} must lie in [0, R_trunc = {rt}]")));
    }
    let gen = WeightedGenerator::plain(measure)?;
    let mut m: f64 = 0.0;
    for x in verification_grid(measure, rt) {
        let fd = f.at(x);
        let l = gen.apply_dual(fd, x) / fd.v;
        let p = phi.value(x);
        if x.abs() >= k {
            let v = rel_violation(l, -p);
            if v > DEFAULT_TOL {
                return Err(Error::FarFieldViolated { x, excess: l + p });
            }
        } else {
            m = m.max(l.abs()).max(p.abs());
        }
    }
    // the ball boundary itself
    for x in [k, -k] {
        let fd = f.at(x);
        m = m.max((gen.apply_dual(fd, x) / fd.v).abs()).max(phi.value(x).abs());
    }
    let mut cert = LyapunovCertificate::weak(f, phi, 2.0 * m, k);
    cert.provenance = format!("far-field normalization at K = {k:?}");
    verified(cert, measure)
}

/// `phi_U = phi + <grad U, grad F> / F` with its positivity radius.
#[derive(Debug, Clone)]
pub struct PerturbedDrift {
    pub phi_u: Field,
    /// `phi_U > 0` on the grid for `|x|` beyond this radius.
    pub positive_beyond: f64,
    /// Smallest value of `phi_U` outside the certificate ball.
    pub min_outside_ball: f64,
}

pub fn perturbed_drift(cert: &LyapunovCertificate, u: &Potential, measure: &Measure) -> Result<PerturbedDrift> {
    if cert.variant != Variant::Weak {
        return Err(Error::CertificateInvalid("perturbed drift needs a weak certificate".into()));
    }
    if u.is_constant() {
        return Ok(PerturbedDrift { phi_u: cert.phi.clone(), positive_beyond: 0.0, min_outside_ball: f64::NAN });
    }
    let (phi, f, uf) = (cert.phi.clone(), cert.f.clone(), u.field().clone());
    let phi_u = Field::new(format!("{}+U'F'/F", phi.label()), move |x| {
        // only the value is needed downstream; derivatives are dropped
        let fd = f.at(x.v);
        let v = phi.value(x.v) + if fd.d1 == 0.0 { 0.0 } else { uf.at(x.v).d1 * fd.d1 / fd.v };
        Dual2::constant(v)
    });
    let grid = verification_grid(measure, measure.r_trunc());
    let vals: Vec<f64> = grid.iter().map(|&x| phi_u.value(x)).collect();
    let mut beyond: f64 = 0.0;
    let mut min_out = f64::INFINITY;
    let mut witness = (0.0, 0.0);
    for (&v, &x) in vals.iter().zip(&grid) {
        if !(v > 0.0) {
            if x.abs() >= beyond {
                witness = (x, v);
            }
            beyond = beyond.max(x.abs());
        }
        if x.abs() > cert.radius {
            min_out = min_out.min(v);
        }
    }
    let far = grid.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if beyond >= far * (1.0 - 1e-12) && far > 0.0 {
        return Err(Error::PhiUNotPositive { x: witness.0, value: witness.1 });
    }
    Ok(PerturbedDrift { phi_u, positive_beyond: beyond, min_outside_ball: min_out })
}

/// Outcome of the weighted Lyapunov check with its side condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedLyapunovReport {
    pub drift: VerificationReport,
    pub side: VerificationReport,
    pub theta: f64,
    pub theta_prime: f64,
    pub b: f64,
    pub radius: f64,
}

impl WeightedLyapunovReport {
    pub fn verified(&self) -> bool {
        self.drift.verified() && self.side.verified() && self.theta_prime < self.theta
    }
}

/// Check `L^w_W F <= -theta F + b 1_{|x| <= R}` for the base measure and
/// `-w^2 <grad U, grad F> <= theta' F`.
pub fn weighted_lyapunov_check(
    cert: &LyapunovCertificate,
    base: &Measure,
    u: &Potential,
    theta_prime: f64,
) -> Result<WeightedLyapunovReport> {
    if cert.variant != Variant::Weighted {
        return Err(Error::CertificateInvalid("weighted check needs a weighted certificate".into()));
    }
    if !(theta_prime < cert.theta) {
        return Err(Error::BadParameter(format!("need theta' < theta, got {theta_prime} >= {}", cert.theta)));
    }
    let drift = verify_certificate(cert, base, DEFAULT_TOL)?;
    let w = cert.omega2.clone().unwrap();
    let rt = base.r_trunc();
    let grid = verification_grid(base, rt);
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0.0);
    for &x in &grid {
        let fd = cert.f.at(x);
        let lhs = -w.value(x) * u.at(x).d1 * fd.d1;
        let v = rel_violation(lhs, theta_prime * fd.v);
        if v > worst {
            worst = v;
            at = x;
        }
    }
    let side = VerificationReport {
        status: if worst <= DEFAULT_TOL { Status::Verified } else { Status::Failed },
        max_violation: worst,
        witness: at,
        grid_points: grid.len(),
        r_trunc: rt,
        tolerance: DEFAULT_TOL,
    };
    Ok(WeightedLyapunovReport { drift, side, theta: cert.theta, theta_prime, b: cert.b, radius: cert.radius })
}

/// `F = w^2 = 1 + r^2` for a one-dimensional Cauchy base: the drift is
/// `L^w F = 2 w^2 - 4 (beta - 1) x^2`, `beta = (alpha + 1)/2`, so the
/// inequality holds outside `R^2 = (2 + theta) / (4 (beta - 1) - 2 - theta)`
/// with `b = (2 + theta) w^2(R)`.
pub fn cauchy_weighted_certificate(alpha: f64, theta: f64) -> Result<LyapunovCertificate> {
    let beta = (alpha + 1.0) / 2.0;
    let den = 4.0 * (beta - 1.0) - 2.0 - theta;
    if !(theta > 0.0) || !(den > 0.0) {
        return Err(Error::BadParameter(format!("weighted drift needs 0 < theta < 4(beta - 1) - 2, got theta = {theta}, beta = {beta}")));
    }
    let r2 = (2.0 + theta) / den;
    let w = Field::new("1+x^2", |x| x * x + 1.0);
    let mut cert = LyapunovCertificate::weighted(w.clone(), w, theta, (2.0 + theta) * (1.0 + r2), r2.sqrt());
    cert.provenance = format!("cauchy weighted drift, F = w^2 = 1+x^2, theta = {theta:?}");
    Ok(cert)
}

/// `F = (1+r^2)^{k/2+1}` with `phi(u) = eps (k+2) u^{k/(k+2)}`: outside
/// `R = sqrt((d+eps)/(alpha-k-eps))` the drift is below `-phi(F)`, and
/// `b = (k+2)((d+alpha-k) + eps (1+R^2)^{k/2})` covers the ball when `k <= 2`.
pub fn cauchy_phi_certificate(alpha: f64, d: usize, k: f64, eps: f64) -> Result<LyapunovCertificate> {
    if !(k > 0.0 && k <= 2.0 && k < alpha) || !(eps > 0.0 && eps < alpha - k) {
        return Err(Error::BadParameter(format!(
            "need 0 < k < min(2, alpha) and 0 < eps < alpha - k, got k = {k}, eps = {eps}, alpha = {alpha}"
        )));
    }
    let df = d as f64;
    let r2 = (df + eps) / (alpha - k - eps);
    let b = (k + 2.0) * ((df + alpha - k) + eps * (1.0 + r2).powf(k / 2.0));
    let e = k / 2.0 + 1.0;
    let f = Field::new(format!("(1+r^2)^{e:?}"), move |x| (x * x + 1.0).powf(e));
    let p = k / (k + 2.0);
    let c = eps * (k + 2.0);
    let phi = Field::new(format!("{c:?}*u^{p:?}"), move |u| u.powf(p) * c);
    let mut cert = LyapunovCertificate::phi_variant(f, phi, b, r2.sqrt());
    cert.provenance = format!("cauchy phi drift, k = {k:?}, eps = {eps:?}");
    Ok(cert)
}
