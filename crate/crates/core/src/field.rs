//! Scalar fields of one coordinate and bounded-below potentials.
//!
//! A field is a function of `x` for one-dimensional measures, or of the radius
//! `r = |x|` for radial measures in any dimension. Evaluation goes through
//! [`Dual2`], so value, first and second derivative come together.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::dual::Dual2;
use crate::error::{Error, Result};
use crate::expr::Expr;

pub type FieldFn = Arc<dyn Fn(Dual2) -> Dual2 + Send + Sync>;

#[derive(Clone)]
pub struct Field {
    label: String,
    f: FieldFn,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.label)
    }
}

impl Field {
    pub fn new(label: impl Into<String>, f: impl Fn(Dual2) -> Dual2 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c:?}"), move |_| Dual2::constant(c))
    }

    pub fn from_expr(e: Expr) -> Self {
        let label = e.to_string();
        Self::new(label, move |x| e.eval_dual(x))
    }

    /// Field from a plain function; derivatives by central differences.
    pub fn from_values(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(label, move |x| {
            let v = f(x.v);
            if x.d1 == 0.0 && x.d2 == 0.0 {
                return Dual2::constant(v);
            }
            let h = 1e-4 * (1.0 + x.v.abs());
            let (a, b) = (f(x.v - h), f(x.v + h));
            x.chain(v, (b - a) / (2.0 * h), (b - 2.0 * v + a) / (h * h))
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn apply(&self, x: Dual2) -> Dual2 {
        (self.f)(x)
    }

    /// Value and derivatives at `x`.
    #[inline]
    pub fn at(&self, x: f64) -> Dual2 {
        (self.f)(Dual2::var(x))
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.f)(Dual2::constant(x)).v
    }

    /// Laplacian of the field seen as a function on R^d: the second derivative
    /// in one dimension and `f'' + (d - 1) f' / r` for radial fields.
    pub fn laplacian(&self, x: f64, dim: usize) -> f64 {
        let d = self.at(x);
        if dim <= 1 {
            d.d2
        } else {
            d.d2 + (dim as f64 - 1.0) * d.d1 / x
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        let f = self.f.clone();
        Self::new(format!("{c:?}*{}", self.label), move |x| f(x) * c)
    }

    pub fn plus(&self, other: &Field) -> Field {
        let (f, g) = (self.f.clone(), other.f.clone());
        Self::new(format!("{}+{}", self.label, other.label), move |x| f(x) + g(x))
    }

    /// `z -> self(z / lambda)`.
    pub fn dilated(&self, lambda: f64) -> Field {
        let f = self.f.clone();
        Self::new(format!("{}(z/{lambda:?})", self.label), move |x| f(x / lambda))
    }

    /// `z -> self(z - shift)`.
    pub fn shifted(&self, shift: f64) -> Field {
        let f = self.f.clone();
        Self::new(format!("{}(z-{shift:?})", self.label), move |x| f(x - shift))
    }

    pub fn map(&self, label: impl Into<String>, g: impl Fn(Dual2) -> Dual2 + Send + Sync + 'static) -> Field {
        let f = self.f.clone();
        Self::new(label, move |x| g(f(x)))
    }
}

/// Builtin potential shapes. All builtins are even in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant {
        c: f64,
    },
    /// `c ln(1 + |x|)`
    LogAbs {
        c: f64,
    },
    /// `(c / 2) ln(1 + x^2)`
    HalfLogSq {
        c: f64,
    },
    /// `c |x|^p`
    PowerAbs {
        c: f64,
        p: f64,
    },
    Expr {
        src: String,
    },
    /// A field assembled in code (for example a sum of potentials); it
    /// cannot be rebuilt from its label.
    Composite {
        label: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    /// Exact for builtins; grid-estimated bounds are not certified.
    pub certified: bool,
}

/// Running max/min of a field over `|x| <= r_k` on `r_k = sinh(k h)`.
#[derive(Debug)]
struct OscTable {
    r: Vec<f64>,
    both_max: Vec<f64>,
    both_min: Vec<f64>,
    both_ok: bool,
    pos_max: Vec<f64>,
    pos_min: Vec<f64>,
    pos_ok: bool,
    argmin: f64,
    argmin_edge: bool,
}

const OSC_STEP: f64 = 2e-3;
const OSC_REACH: f64 = 1e15;

impl OscTable {
    fn build(field: &Field) -> OscTable {
        let kmax = (OSC_REACH.asinh() / OSC_STEP).ceil() as usize;
        let mut r = Vec::with_capacity(kmax + 1);
        let mut both_max = Vec::with_capacity(kmax + 1);
        let mut both_min = Vec::with_capacity(kmax + 1);
        let mut pos_max = Vec::with_capacity(kmax + 1);
        let mut pos_min = Vec::with_capacity(kmax + 1);
        let (mut bmx, mut bmn) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut pmx, mut pmn) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut both_ok, mut pos_ok) = (true, true);
        let mut argmin = 0.0;
        let mut argmin_k = 0;
        for k in 0..=kmax {
            let rk = (k as f64 * OSC_STEP).sinh();
            let vp = field.value(rk);
            let vn = field.value(-rk);
            if vp.is_nan() {
                pos_ok = false;
            }
            if vn.is_nan() {
                both_ok = false;
            }
            if !vp.is_nan() {
                pmx = pmx.max(vp);
                pmn = pmn.min(vp);
            }
            let before = bmn;
            for v in [vp, vn] {
                if !v.is_nan() {
                    bmx = bmx.max(v);
                    bmn = bmn.min(v);
                }
            }
            if bmn < before {
                argmin = if vp <= vn || vn.is_nan() { rk } else { -rk };
                argmin_k = k;
            }
            r.push(rk);
            both_max.push(bmx);
            both_min.push(bmn);
            pos_max.push(pmx);
            pos_min.push(pmn);
        }
        both_ok &= pos_ok;
        OscTable { r, both_max, both_min, both_ok, pos_max, pos_min, pos_ok, argmin, argmin_edge: argmin_k == kmax }
    }

    fn index(&self, radius: f64) -> usize {
        self.r.partition_point(|&rk| rk < radius).min(self.r.len() - 1)
    }
}

/// A potential `U` with value, derivatives, lower bound and ball oscillation.
#[derive(Clone)]
pub struct Potential {
    spec: PotentialSpec,
    field: Field,
    table: Arc<OnceLock<OscTable>>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({:?})", self.spec)
    }
}

impl PartialEq for Potential {
    fn eq(&self, o: &Self) -> bool {
        self.spec == o.spec
    }
}

impl Potential {
    pub fn from_spec(spec: PotentialSpec) -> Result<Self> {
        let field = match &spec {
            PotentialSpec::Zero => Field::new("0", |_| Dual2::constant(0.0)),
            PotentialSpec::Constant { c } => Field::constant(*c),
            PotentialSpec::LogAbs { c } => {
                let c = *c;
                Field::new(format!("{c:?}*ln(1+|x|)"), move |x| x.abs().ln_1p() * c)
            }
            PotentialSpec::HalfLogSq { c } => {
                let c = *c;
                Field::new(format!("{:?}*ln(1+x^2)", c / 2.0), move |x| (x * x).ln_1p() * (0.5 * c))
            }
            PotentialSpec::PowerAbs { c, p } => {
                let (c, p) = (*c, *p);
                if p <= 0.0 {
                    return Err(Error::BadParameter(format!("power potential needs p > 0, got {p}")));
                }
                Field::new(format!("{c:?}*|x|^{p:?}"), move |x| x.abs().powf(p) * c)
            }
            PotentialSpec::Expr { src } => Field::from_expr(Expr::parse(src)?),
            PotentialSpec::Composite { label } => {
                return Err(Error::Unsupported(format!("composite potential `{label}` cannot be rebuilt from text")))
            }
        };
        Ok(Self { spec, field, table: Arc::new(OnceLock::new()) })
    }

    /// Wrap an arbitrary field. Bounds and oscillations come from the grid.
    pub fn from_field(field: Field) -> Self {
        let spec = PotentialSpec::Composite { label: field.label().to_string() };
        Self { spec, field, table: Arc::new(OnceLock::new()) }
    }

    pub fn zero() -> Self {
        Self::from_spec(PotentialSpec::Zero).unwrap()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_spec(PotentialSpec::Constant { c }).unwrap()
    }

    pub fn log_abs(c: f64) -> Self {
        Self::from_spec(PotentialSpec::LogAbs { c }).unwrap()
    }

    pub fn half_log_sq(c: f64) -> Self {
        Self::from_spec(PotentialSpec::HalfLogSq { c }).unwrap()
    }

    pub fn power_abs(c: f64, p: f64) -> Result<Self> {
        Self::from_spec(PotentialSpec::PowerAbs { c, p })
    }

    pub fn parse(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        Self::from_spec(PotentialSpec::Expr { src: e.to_string() })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn label(&self) -> &str {
        self.field.label()
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.field.value(x)
    }

    #[inline]
    pub fn at(&self, x: f64) -> Dual2 {
        self.field.at(x)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.spec, PotentialSpec::Zero)
            || matches!(self.spec, PotentialSpec::Constant { c } if c == 0.0)
            || matches!(self.spec, PotentialSpec::LogAbs { c } | PotentialSpec::HalfLogSq { c } if c == 0.0)
            || matches!(self.spec, PotentialSpec::PowerAbs { c, .. } if c == 0.0)
    }

    /// True when the potential is a constant function.
    pub fn is_constant(&self) -> bool {
        match &self.spec {
            PotentialSpec::Zero | PotentialSpec::Constant { .. } => true,
            PotentialSpec::Expr { src } => Expr::parse(src).map(|e| e.is_constant()).unwrap_or(false),
            _ => self.is_zero(),
        }
    }

    fn table(&self) -> &OscTable {
        self.table.get_or_init(|| OscTable::build(&self.field))
    }

    /// Builtin shapes are radial and monotone in `|x|`; returns the sign of
    /// the monotonicity (`+1` increasing, `-1` decreasing, `0` flat).
    fn builtin_monotone(&self) -> Option<f64> {
        match self.spec {
            PotentialSpec::Zero | PotentialSpec::Constant { .. } => Some(0.0),
            PotentialSpec::LogAbs { c } | PotentialSpec::HalfLogSq { c } | PotentialSpec::PowerAbs { c, .. } => Some(c.signum()),
            PotentialSpec::Expr { .. } | PotentialSpec::Composite { .. } => None,
        }
    }

    /// Lower bound `m_U`, or `None` if the potential is unbounded below.
    pub fn lower_bound(&self) -> Option<LowerBound> {
        match self.builtin_monotone() {
            Some(s) if s >= 0.0 => Some(LowerBound { value: self.value(0.0), certified: true }),
            Some(_) => None,
            None => {
                let t = self.table();
                if !t.both_ok || t.argmin_edge {
                    return None;
                }
                let x0 = t.argmin;
                let k = t.index(x0.abs());
                let hi = t.r[(k + 1).min(t.r.len() - 1)];
                let lo = if k == 0 { -t.r[1] } else { t.r[k - 1] };
                let (a, b) = if x0 >= 0.0 { (lo, hi) } else { (-hi, -lo) };
                let v = golden_min(|x| self.value(x), a, b, 80);
                let v = v.min(self.value(x0));
                Some(LowerBound { value: v, certified: false })
            }
        }
    }

    /// `Osc_{B(0,R)} U` for a one-dimensional potential (both signs of `x`).
    pub fn osc_ball(&self, radius: f64) -> Result<f64> {
        if let Some(s) = self.builtin_monotone() {
            if s == 0.0 {
                return Ok(0.0);
            }
            return Ok((self.value(radius) - self.value(0.0)).abs());
        }
        let t = self.table();
        if !t.both_ok {
            return Err(Error::OscillationUnavailable(format!("{} is not finite on the whole line", self.label())));
        }
        let k = t.index(radius);
        Ok(t.both_max[k] - t.both_min[k])
    }

    /// `Osc_{B(0,R)} U` for a radial potential (`r in [0, R]`).
    pub fn osc_ball_radial(&self, radius: f64) -> Result<f64> {
        if self.builtin_monotone().is_some() {
            return self.osc_ball(radius);
        }
        let t = self.table();
        if !t.pos_ok {
            return Err(Error::OscillationUnavailable(format!("{} is not finite on r >= 0", self.label())));
        }
        let k = t.index(radius);
        Ok(t.pos_max[k] - t.pos_min[k])
    }

    /// Total oscillation `sup U - inf U`; infinite for unbounded builtins.
    pub fn osc_total(&self) -> Result<f64> {
        match self.builtin_monotone() {
            Some(0.0) => Ok(0.0),
            Some(_) => Ok(f64::INFINITY),
            _ => self.osc_ball(f64::INFINITY),
        }
    }
}

/// Golden-section minimum of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Golden-section maximizer returning `(argmax, max)`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
