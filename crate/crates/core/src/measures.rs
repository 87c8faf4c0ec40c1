//! Reference measures and their numeric services.
//!
//! Every measure except products lives on one coordinate: `x` on (part of)
//! the real line when `d = 1`, or the radius `r` for radial measures in
//! dimension `d`. Integrals are taken along that coordinate against the
//! "line weight", which already contains the Jacobian `|S^{d-1}| r^{d-1}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::dual::Dual2;
use crate::error::{Error, Result};
use crate::field::{Field, Potential, PotentialSpec};
use crate::quad::{integrate, integrate_with_breaks, QuadOptions};

/// Serializable description of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeasureSpec {
    Cauchy { alpha: f64, d: usize },
    Subbotin { alpha: f64, d: usize },
    Gaussian { d: usize },
    UniformInterval { a: f64, b: f64 },
    Custom { potential: String, d: usize },
    Perturbed { base: Box<MeasureSpec>, u: PotentialSpec },
    Convolution { m1: Box<MeasureSpec>, m2: Box<MeasureSpec> },
    Product { factors: Vec<MeasureSpec> },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            MeasureSpec::Cauchy { alpha, d } => Measure::cauchy(*alpha, *d),
            MeasureSpec::Subbotin { alpha, d } => Measure::subbotin(*alpha, *d),
            MeasureSpec::Gaussian { d } => Measure::gaussian(*d),
            MeasureSpec::UniformInterval { a, b } => Measure::uniform_interval(*a, *b),
            MeasureSpec::Custom { potential, d } => Measure::custom(Potential::parse(potential)?, *d),
            MeasureSpec::Perturbed { base, u } => Measure::perturbed(&base.build()?, Potential::from_spec(u.clone())?),
            MeasureSpec::Convolution { m1, m2 } => Measure::convolution(&m1.build()?, &m2.build()?),
            MeasureSpec::Product { factors } => {
                let ms = factors.iter().map(|f| f.build()).collect::<Result<Vec<_>>>()?;
                Measure::product(ms)
            }
        }
    }
}

#[derive(Clone)]
pub enum MeasureKind {
    Cauchy { alpha: f64 },
    Subbotin { alpha: f64 },
    Gaussian,
    UniformInterval { a: f64, b: f64 },
    Custom { potential: Potential },
    Perturbed { base: Measure, u: Potential },
    Convolution { m1: Measure, m2: Measure },
    Product(Vec<Measure>),
}

/// Coordinate on which the measure is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// `d = 1`, support `[lo, hi]` (possibly infinite).
    Line { lo: f64, hi: f64 },
    /// Radial in dimension `dim`, coordinate `r >= 0`.
    Radial { dim: usize },
    /// Product of factors; no single coordinate.
    Product,
}

struct Inner {
    dim: usize,
    kind: MeasureKind,
    spec: MeasureSpec,
    geometry: Geometry,
    heavy: bool,
    /// Unnormalized potential along the coordinate.
    v: Option<Field>,
    z: OnceLock<f64>,
    v_potential: OnceLock<Potential>,
    cdf: OnceLock<CumTable>,
    rtrunc: OnceLock<f64>,
}

/// An immutable reference probability measure. Cloning is cheap.
#[derive(Clone)]
pub struct Measure {
    inner: Arc<Inner>,
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Measure({:?})", self.inner.spec)
    }
}

impl PartialEq for Measure {
    fn eq(&self, o: &Self) -> bool {
        self.inner.spec == o.inner.spec
    }
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn q_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-11, abs_tol: 1e-300, max_intervals: 600 }
}

impl Measure {
    fn build(dim: usize, kind: MeasureKind, spec: MeasureSpec, geometry: Geometry, heavy: bool, v: Option<Field>) -> Self {
        Self {
            inner: Arc::new(Inner {
                dim,
                kind,
                spec,
                geometry,
                heavy,
                v,
                z: OnceLock::new(),
                v_potential: OnceLock::new(),
                cdf: OnceLock::new(),
                rtrunc: OnceLock::new(),
            }),
        }
    }

    fn geometry_for(d: usize) -> Result<Geometry> {
        match d {
            0 => Err(Error::BadParameter("dimension must be at least 1".into())),
            1 => Ok(Geometry::Line { lo: f64::NEG_INFINITY, hi: f64::INFINITY }),
            _ => Ok(Geometry::Radial { dim: d }),
        }
    }

    /// Generalized Cauchy: density proportional to `(1 + |x|^2)^{-(alpha + d)/2}`.
    pub fn cauchy(alpha: f64, d: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::NonIntegrable(format!("cauchy needs alpha > 0, got {alpha}")));
        }
        let g = Self::geometry_for(d)?;
        let k = 0.5 * (alpha + d as f64);
        let v = Field::new(format!("{k:?}*ln(1+r^2)"), move |r| (r * r).ln_1p() * k);
        let m = Self::build(d, MeasureKind::Cauchy { alpha }, MeasureSpec::Cauchy { alpha, d }, g, true, Some(v));
        m.check_integrable()?;
        Ok(m)
    }

    /// Subbotin: density proportional to `exp(-|x|^alpha)`, `alpha in (0, 1]`.
    pub fn subbotin(alpha: f64, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::BadParameter(format!("subbotin needs alpha in (0, 1], got {alpha}")));
        }
        let g = Self::geometry_for(d)?;
        let v = Field::new(format!("|r|^{alpha:?}"), move |r| r.abs().powf(alpha));
        let m = Self::build(d, MeasureKind::Subbotin { alpha }, MeasureSpec::Subbotin { alpha, d }, g, false, Some(v));
        m.check_integrable()?;
        Ok(m)
    }

    pub fn gaussian(d: usize) -> Result<Self> {
        let g = Self::geometry_for(d)?;
        let v = Field::new("r^2/2", |r| r * r * 0.5);
        let m = Self::build(d, MeasureKind::Gaussian, MeasureSpec::Gaussian { d }, g, false, Some(v));
        m.check_integrable()?;
        Ok(m)
    }

    pub fn uniform_interval(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::BadParameter(format!("uniform interval needs finite a < b, got [{a}, {b}]")));
        }
        let v = Field::new("0", |_| Dual2::constant(0.0));
        let m = Self::build(
            1,
            MeasureKind::UniformInterval { a, b },
            MeasureSpec::UniformInterval { a, b },
            Geometry::Line { lo: a, hi: b },
            false,
            Some(v),
        );
        m.check_integrable()?;
        Ok(m)
    }

    /// Density proportional to `exp(-V)`; `V` is a function of `x` (`d = 1`)
    /// or of `r` (radial, `d >= 2`).
    pub fn custom(potential: Potential, d: usize) -> Result<Self> {
        let g = Self::geometry_for(d)?;
        let src = match potential.spec() {
            PotentialSpec::Expr { src } => src.clone(),
            _ => potential.label().to_string(),
        };
        let v = potential.field().clone();
        let m = Self::build(d, MeasureKind::Custom { potential }, MeasureSpec::Custom { potential: src, d }, g, false, Some(v));
        m.check_integrable()?;
        Ok(m)
    }

    /// `d mu = e^{-U} d nu`, renormalized.
    pub fn perturbed(base: &Measure, u: Potential) -> Result<Self> {
        let bv = base.inner.v.clone().ok_or_else(|| Error::Unsupported("perturbation of a product measure".into()))?;
        if matches!(base.inner.kind, MeasureKind::Convolution { .. }) {
            return Err(Error::Unsupported("perturbation of a convolution".into()));
        }
        let v = bv.plus(u.field());
        let spec = MeasureSpec::Perturbed { base: Box::new(base.inner.spec.clone()), u: u.spec().clone() };
        let m = Self::build(
            base.inner.dim,
            MeasureKind::Perturbed { base: base.clone(), u },
            spec,
            base.inner.geometry,
            base.inner.heavy,
            Some(v),
        );
        m.check_integrable()?;
        Ok(m)
    }

    /// Law of `X1 + X2` for independent one-dimensional factors.
    pub fn convolution(m1: &Measure, m2: &Measure) -> Result<Self> {
        let line = |m: &Measure| matches!(m.inner.geometry, Geometry::Line { .. });
        if !line(m1) || !line(m2) {
            return Err(Error::Unsupported("convolution is only available in dimension 1".into()));
        }
        let (a, b) = (m1.clone(), m2.clone());
        let v = Field::new("-ln(p1*p2)", move |x| {
            let p = conv_density_dual(&a, &b, x.v);
            let lp = -Dual2::new(p.v, p.d1, p.d2).ln();
            // compose with the seed direction of x
            Dual2::new(lp.v, lp.d1 * x.d1, lp.d2 * x.d1 * x.d1 + lp.d1 * x.d2)
        });
        let lo = sum_bound(m1.support().0, m2.support().0);
        let hi = sum_bound(m1.support().1, m2.support().1);
        let spec = MeasureSpec::Convolution { m1: Box::new(m1.inner.spec.clone()), m2: Box::new(m2.inner.spec.clone()) };
        let m = Self::build(
            1,
            MeasureKind::Convolution { m1: m1.clone(), m2: m2.clone() },
            spec,
            Geometry::Line { lo, hi },
            m1.inner.heavy || m2.inner.heavy,
            Some(v),
        );
        let _ = m.inner.z.set(1.0);
        Ok(m)
    }

    pub fn product(factors: Vec<Measure>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::BadParameter("empty product".into()));
        }
        let dim = factors.iter().map(|m| m.inner.dim).sum();
        let heavy = factors.iter().any(|m| m.inner.heavy);
        let spec = MeasureSpec::Product { factors: factors.iter().map(|m| m.inner.spec.clone()).collect() };
        let m = Self::build(dim, MeasureKind::Product(factors), spec, Geometry::Product, heavy, None);
        let z: f64 = match &m.inner.kind {
            MeasureKind::Product(fs) => fs.iter().map(|f| f.normalize()).product(),
            _ => unreachable!(),
        };
        let _ = m.inner.z.set(z);
        Ok(m)
    }

    fn check_integrable(&self) -> Result<()> {
        let z = self.compute_z()?;
        let _ = self.inner.z.set(z);
        Ok(())
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.inner.spec
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.inner.kind
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn geometry(&self) -> Geometry {
        self.inner.geometry
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.inner.geometry, Geometry::Radial { .. })
    }

    /// True for families with polynomial tails.
    pub fn is_heavy_tailed(&self) -> bool {
        self.inner.heavy
    }

    /// Coordinate support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match self.inner.geometry {
            Geometry::Line { lo, hi } => (lo, hi),
            Geometry::Radial { .. } => (0.0, f64::INFINITY),
            Geometry::Product => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn require_coordinate(&self) -> Result<()> {
        if matches!(self.inner.geometry, Geometry::Product) {
            return Err(Error::Unsupported("product measures have no single coordinate".into()));
        }
        Ok(())
    }

    /// Potential `V` along the coordinate (unnormalized).
    pub fn potential_field(&self) -> Result<&Field> {
        self.inner.v.as_ref().ok_or_else(|| Error::Unsupported("product measures have no radial potential".into()))
    }

    /// `V` at a coordinate value.
    pub fn v(&self, t: f64) -> f64 {
        match &self.inner.kind {
            MeasureKind::Convolution { m1, m2 } => -conv_density(m1, m2, t).ln(),
            _ => self.inner.v.as_ref().map(|f| f.value(t)).unwrap_or(f64::NAN),
        }
    }

    /// `V`, `V'`, `V''` along the coordinate.
    pub fn v_dual(&self, t: f64) -> Dual2 {
        self.inner.v.as_ref().map(|f| f.at(t)).unwrap_or(Dual2::new(f64::NAN, f64::NAN, f64::NAN))
    }

    fn jacobian(&self, t: f64) -> f64 {
        match self.inner.geometry {
            Geometry::Radial { dim } => sphere_area(dim) * t.powi(dim as i32 - 1),
            _ => 1.0,
        }
    }

    /// Unnormalized density along the coordinate, Jacobian included.
    pub fn line_weight(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return 0.0;
        }
        match &self.inner.kind {
            MeasureKind::Convolution { m1, m2 } => conv_density(m1, m2, t),
            MeasureKind::UniformInterval { .. } => 1.0,
            _ => {
                let w = self.jacobian(t) * (-self.v(t)).exp();
                if w.is_finite() {
                    w
                } else {
                    0.0
                }
            }
        }
    }

    /// Normalized density along the coordinate (integrates to 1 in `t`).
    pub fn line_density(&self, t: f64) -> f64 {
        self.line_weight(t) / self.normalize()
    }

    /// Normalized density of the measure at a point of the coordinate
    /// (without the radial Jacobian).
    pub fn density(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return 0.0;
        }
        match &self.inner.kind {
            MeasureKind::Convolution { m1, m2 } => conv_density(m1, m2, t),
            MeasureKind::UniformInterval { a, b } => {
                if t >= *a && t <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            _ => (-self.v(t)).exp() / self.normalize(),
        }
    }

    /// Breakpoints for quadrature along the coordinate.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mut b = vec![lo, hi];
        if lo < 0.0 && hi > 0.0 {
            b.push(0.0);
        }
        if let MeasureKind::Perturbed { base, .. } = &self.inner.kind {
            b.extend(base.breakpoints());
        }
        b.retain(|x| x.is_finite());
        b
    }

    fn compute_z(&self) -> Result<f64> {
        self.require_coordinate()?;
        let (lo, hi) = self.support();
        let r = integrate_with_breaks(|t| self.line_weight(t), lo, hi, &self.breakpoints(), q_opts());
        if !r.value.is_finite() || r.value <= 0.0 || (!r.converged && r.error > 1e-6 * r.value.abs()) {
            return Err(Error::NonIntegrable(format!("normalization quadrature gave {:e} (error {:e})", r.value, r.error)));
        }
        Ok(r.value)
    }

    /// Normalizing constant `Z = \int e^{-V}`, computed once by quadrature.
    pub fn normalize(&self) -> f64 {
        *self.inner.z.get_or_init(|| self.compute_z().unwrap_or(f64::NAN))
    }

    fn table(&self) -> &CumTable {
        self.inner.cdf.get_or_init(|| CumTable::build(self))
    }

    /// Nodes of the cumulative table, increasing along the coordinate.
    pub(crate) fn nodes(&self) -> &[f64] {
        &self.table().t
    }

    /// Probability of `{lo <= t <= hi}` along the coordinate.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if matches!(self.inner.geometry, Geometry::Product) {
            return f64::NAN;
        }
        self.table().mass(self, lo, hi)
    }

    /// `mu{|x - x0| > r}`. Radial measures require `x0 = 0`.
    pub fn tail(&self, r: f64, x0: f64) -> Result<f64> {
        self.require_coordinate()?;
        if r <= 0.0 {
            return Ok(1.0);
        }
        let t = self.table();
        match self.inner.geometry {
            Geometry::Line { .. } => Ok((t.left_of(self, x0 - r) + t.right_of(self, x0 + r)).min(1.0)),
            Geometry::Radial { .. } => {
                if x0 != 0.0 {
                    return Err(Error::Unsupported("off-center tails of radial measures".into()));
                }
                Ok(t.right_of(self, r))
            }
            Geometry::Product => unreachable!(),
        }
    }

    /// Generalized inverse of the tail: `inf{r >= 0 : tail(r) <= y}`.
    pub fn tail_inverse(&self, y: f64, x0: f64) -> Result<f64> {
        self.require_coordinate()?;
        if y >= 1.0 {
            return Ok(0.0);
        }
        if y <= 0.0 {
            return Ok(f64::INFINITY);
        }
        // bracket on a sinh ladder, then bisect
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        for j in 1..=800 {
            let r = (j as f64 * 0.05).sinh();
            if self.tail(r, x0)? <= y {
                hi = r;
                break;
            }
            lo = r;
        }
        if !hi.is_finite() {
            return Ok(f64::INFINITY);
        }
        for _ in 0..200 {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.tail(mid, x0)? <= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// A median of `|x|`.
    pub fn median_abs(&self) -> Result<f64> {
        self.tail_inverse(0.5, 0.0)
    }

    /// Radius beyond which the tail is negligible: `< 1e-8` for heavy tails,
    /// `< 1e-10` otherwise. Clipped to the support.
    pub fn r_trunc(&self) -> f64 {
        *self.inner.rtrunc.get_or_init(|| {
            let eps = if self.inner.heavy { 1e-8 } else { 1e-10 };
            let (lo, hi) = self.support();
            let edge = lo.abs().max(hi.abs());
            self.tail_inverse(eps, 0.0).unwrap_or(edge).min(edge)
        })
    }

    /// Cumulative distribution along the coordinate.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        self.require_coordinate()?;
        Ok(self.table().left_of(self, t))
    }

    /// `V` as a [`Potential`]: ball oscillations and bounds of the measure's
    /// own potential.
    pub fn potential(&self) -> Result<&Potential> {
        self.require_coordinate()?;
        Ok(self.inner.v_potential.get_or_init(|| match &self.inner.kind {
            MeasureKind::Cauchy { alpha } => Potential::half_log_sq(alpha + self.inner.dim as f64),
            MeasureKind::Subbotin { alpha } => Potential::power_abs(1.0, *alpha).unwrap(),
            MeasureKind::Gaussian => Potential::power_abs(0.5, 2.0).unwrap(),
            MeasureKind::UniformInterval { .. } => Potential::zero(),
            MeasureKind::Custom { potential } => potential.clone(),
            _ => Potential::from_field(self.inner.v.clone().unwrap()),
        }))
    }

    /// `Osc_{B(0,R)} V`.
    pub fn osc_ball(&self, radius: f64) -> Result<f64> {
        let p = self.potential()?;
        if self.is_radial() {
            p.osc_ball_radial(radius)
        } else {
            match self.inner.geometry {
                Geometry::Line { lo, hi } if lo.is_finite() || hi.is_finite() => {
                    // restrict to the support
                    let a = (-radius).max(lo);
                    let b = radius.min(hi);
                    if matches!(self.inner.kind, MeasureKind::UniformInterval { .. }) {
                        return Ok(0.0);
                    }
                    let n = 2048;
                    let (mut mx, mut mn) = (f64::NEG_INFINITY, f64::INFINITY);
                    for i in 0..=n {
                        let t = a + (b - a) * i as f64 / n as f64;
                        let v = p.value(t);
                        mx = mx.max(v);
                        mn = mn.min(v);
                    }
                    Ok(mx - mn)
                }
                _ => p.osc_ball(radius),
            }
        }
    }

    /// Inverse of the coordinate CDF at `u in (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.require_coordinate()?;
        Ok(self.table().invert(u))
    }

    /// `n` points drawn by inverse-CDF sampling; reproducible given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match &self.inner.kind {
            MeasureKind::Product(fs) => {
                let mut out = vec![Vec::with_capacity(self.inner.dim); n];
                for (j, f) in fs.iter().enumerate() {
                    let part = f.sample(n, seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(j as u64 + 1)))?;
                    for (o, p) in out.iter_mut().zip(part) {
                        o.extend(p);
                    }
                }
                Ok(out)
            }
            MeasureKind::Convolution { m1, m2 } => {
                let a = m1.sample(n, seed)?;
                let b = m2.sample(n, seed ^ 0x5851_f42d_4c95_7f2d)?;
                Ok(a.into_iter().zip(b).map(|(x, y)| vec![x[0] + y[0]]).collect())
            }
            MeasureKind::Custom { .. } | MeasureKind::Perturbed { .. } if self.inner.dim >= 2 && !self.is_radial() => {
                Err(Error::Unsupported("sampling non-radial measures in d >= 2".into()))
            }
            _ => {
                let table = self.table();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let t = table.invert(u);
                    match self.inner.geometry {
                        Geometry::Radial { dim } => {
                            let mut g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                            for c in g.iter_mut() {
                                *c *= t / norm;
                            }
                            out.push(g);
                        }
                        _ => out.push(vec![t]),
                    }
                }
                Ok(out)
            }
        }
    }

    /// One-dimensional samples (the coordinate itself).
    pub fn sample_1d(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if self.inner.dim != 1 {
            return Err(Error::Unsupported("sample_1d needs d = 1".into()));
        }
        Ok(self.sample(n, seed)?.into_iter().map(|p| p[0]).collect())
    }
}

fn sum_bound(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_nan() {
        f64::INFINITY
    } else {
        s
    }
}

/// Density of `m1 * m2` at `x` by quadrature.
fn conv_density(m1: &Measure, m2: &Measure, x: f64) -> f64 {
    let (lo, hi) = m2.support();
    let r = integrate_with_breaks(
        |y| m1.density(x - y) * m2.density(y),
        lo,
        hi,
        &[0.0, x],
        QuadOptions { rel_tol: 1e-11, abs_tol: 1e-300, max_intervals: 400 },
    );
    r.value
}

/// Density of `m1 * m2` and its first two derivatives in `x`.
fn conv_density_dual(m1: &Measure, m2: &Measure, x: f64) -> Dual2 {
    let (lo, hi) = m2.support();
    let opts = QuadOptions { rel_tol: 1e-11, abs_tol: 1e-300, max_intervals: 400 };
    let z1 = m1.normalize();
    let comp = |k: usize| {
        integrate_with_breaks(
            |y| {
                let v = m1.v_dual(x - y);
                let p = (-v.v).exp() / z1;
                let c = match k {
                    0 => p,
                    1 => -v.d1 * p,
                    _ => (v.d1 * v.d1 - v.d2) * p,
                };
                c * m2.density(y)
            },
            lo,
            hi,
            &[0.0, x],
            opts,
        )
        .value
    };
    Dual2::new(comp(0), comp(1), comp(2))
}

/// Nodes for the cumulative table: uniform on a bounded support, a sinh
/// ladder out to `1e15` otherwise.
fn coordinate_grid(lo: f64, hi: f64) -> Vec<f64> {
    const H: f64 = 0.005;
    const FAR: f64 = 1e15;
    if lo.is_finite() && hi.is_finite() {
        let n = 4096;
        return (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    }
    let ladder = |start: f64, dir: f64| -> Vec<f64> {
        let mut v = Vec::new();
        let mut k = 1;
        loop {
            let d = (k as f64 * H).sinh();
            v.push(start + dir * d);
            if d > FAR {
                break;
            }
            k += 1;
        }
        v
    };
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => {
            let mut t: Vec<f64> = ladder(0.0, -1.0).into_iter().rev().collect();
            t.push(0.0);
            t.extend(ladder(0.0, 1.0));
            t
        }
        (true, false) => {
            let mut t = vec![lo];
            t.extend(ladder(lo, 1.0));
            t
        }
        _ => {
            let mut t: Vec<f64> = ladder(hi, -1.0).into_iter().rev().collect();
            t.push(hi);
            t
        }
    }
}

/// Cumulative masses on a fixed grid, accumulated from both ends so small
/// tails keep their relative accuracy.
struct CumTable {
    t: Vec<f64>,
    /// normalized mass of `(lo, t_k]`
    left: Vec<f64>,
    /// normalized mass of `[t_k, hi)`
    right: Vec<f64>,
    z: f64,
    lo: f64,
    hi: f64,
    /// a point where both cumulative sums are about one half
    mid: f64,
}

fn cell_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-12, abs_tol: 1e-300, max_intervals: 80 }
}

impl CumTable {
    fn build(m: &Measure) -> CumTable {
        let (lo, hi) = m.support();
        let mut t = coordinate_grid(lo, hi);
        // drop far nodes where the weight has underflowed
        let wt: Vec<f64> = t.par_iter().map(|&x| m.line_weight(x)).collect();
        let first = wt.iter().position(|&w| w > 0.0).unwrap_or(0).saturating_sub(1);
        let last = (wt.iter().rposition(|&w| w > 0.0).unwrap_or(t.len() - 1) + 1).min(t.len() - 1);
        let cut_lo = first > 0;
        let cut_hi = last < t.len() - 1;
        t = t[first..=last].to_vec();
        let pieces: Vec<f64> = t.par_windows(2).map(|p| integrate(|x| m.line_weight(x), p[0], p[1], cell_opts()).value).collect();
        let n = t.len();
        let left_out = if !cut_lo && lo < t[0] { integrate(|x| m.line_weight(x), lo, t[0], q_opts()).value } else { 0.0 };
        let right_out = if !cut_hi && hi > t[n - 1] { integrate(|x| m.line_weight(x), t[n - 1], hi, q_opts()).value } else { 0.0 };
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        left[0] = left_out;
        for k in 0..n - 1 {
            left[k + 1] = left[k] + pieces[k];
        }
        right[n - 1] = right_out;
        for k in (0..n - 1).rev() {
            right[k] = right[k + 1] + pieces[k];
        }
        let z = left[n - 1] + right_out;
        for v in left.iter_mut().chain(right.iter_mut()) {
            *v /= z;
        }
        let k = left.partition_point(|&c| c < 0.5).min(n - 1);
        CumTable { mid: t[k], t, left, right, z, lo, hi }
    }

    fn seg(&self, m: &Measure, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        integrate(|x| m.line_weight(x), a, b, cell_opts()).value / self.z
    }

    /// Mass of `(lo, x]`.
    fn left_of(&self, m: &Measure, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        if x < self.t[0] {
            return self.seg(m, self.lo, x);
        }
        let k = self.t.partition_point(|&v| v <= x) - 1;
        (self.left[k] + self.seg(m, self.t[k], x)).min(1.0)
    }

    /// Mass of `[x, hi)`.
    fn right_of(&self, m: &Measure, x: f64) -> f64 {
        if x >= self.hi {
            return 0.0;
        }
        if x <= self.lo {
            return 1.0;
        }
        let n = self.t.len();
        if x > self.t[n - 1] {
            return self.seg(m, x, self.hi);
        }
        let k = self.t.partition_point(|&v| v < x);
        (self.right[k] + self.seg(m, x, self.t[k])).min(1.0)
    }

    fn mass(&self, m: &Measure, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.lo), b.min(self.hi));
        if !(a < b) {
            return 0.0;
        }
        let v = if b <= self.mid {
            self.left_of(m, b) - self.left_of(m, a)
        } else if a >= self.mid {
            self.right_of(m, a) - self.right_of(m, b)
        } else {
            1.0 - self.left_of(m, a) - self.right_of(m, b)
        };
        v.clamp(0.0, 1.0)
    }

    fn invert(&self, u: f64) -> f64 {
        let n = self.t.len();
        if u <= 0.5 {
            let k = self.left.partition_point(|&c| c < u);
            if k == 0 {
                return self.t[0];
            }
            if k >= n {
                return self.t[n - 1];
            }
            let (c0, c1) = (self.left[k - 1], self.left[k]);
            let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
            self.t[k - 1] + w * (self.t[k] - self.t[k - 1])
        } else {
            let v = 1.0 - u;
            // right is non-increasing
            let k = self.right.partition_point(|&c| c > v);
            if k == 0 {
                return self.t[0];
            }
            if k >= n {
                return self.t[n - 1];
            }
            let (c0, c1) = (self.right[k - 1], self.right[k]);
            let w = if c0 > c1 { (c0 - v) / (c0 - c1) } else { 0.0 };
            self.t[k - 1] + w * (self.t[k] - self.t[k - 1])
        }
    }
}

/// Bounded-perturbation certificate for a convolution of Cauchy laws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRatio {
    pub alpha_min: f64,
    pub sup: f64,
    pub inf: f64,
    pub at_zero: f64,
    /// Ratio at the far probes, ending with the extrapolated limit.
    pub tail_probes: Vec<(f64, f64)>,
    pub tail_limit: f64,
}

/// Sup and inf of `p_{m1 * m2} / p_{alpha_min}` over `grid` plus the tail
/// behavior, for one-dimensional Cauchy factors.
pub fn convolution_density_ratio(m1: &Measure, m2: &Measure, grid: &[f64]) -> Result<DensityRatio> {
    let alpha = |m: &Measure| match (m.kind(), m.dim()) {
        (MeasureKind::Cauchy { alpha }, 1) => Ok(*alpha),
        _ => Err(Error::Unsupported("density ratio needs two one-dimensional cauchy factors".into())),
    };
    let (a1, a2) = (alpha(m1)?, alpha(m2)?);
    let amin = a1.min(a2);
    let reference = Measure::cauchy(amin, 1)?;
    let ratio = |x: f64| conv_density(m1, m2, x) / reference.density(x);
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for &x in grid {
        let q = ratio(x);
        sup = sup.max(q);
        inf = inf.min(q);
    }
    let probes: Vec<(f64, f64)> = (0..9).map(|j| 50.0 * 4f64.powi(j)).map(|x| (x, ratio(x))).collect();
    let grows = probes.windows(2).all(|w| w[1].1 > w[0].1 * 1.5);
    if grows && probes.last().unwrap().1 > 1e6 {
        let &(x, value) = probes.last().unwrap();
        return Err(Error::RatioUnbounded { x, value });
    }
    // Richardson step assuming a 1/x correction
    let n = probes.len();
    let (x1, q1) = probes[n - 2];
    let (x2, q2) = probes[n - 1];
    let tail_limit = (x2 * q2 - x1 * q1) / (x2 - x1);
    Ok(DensityRatio { alpha_min: amin, sup, inf, at_zero: ratio(0.0), tail_probes: probes, tail_limit })
}
