//! Numerical ground truth in d = 1 and for radial measures: finite-volume
//! Dirichlet forms, spectral and converse constants, capacities, entropy
//! quotients and direct checks of the inequalities on test functions.
//!
//! Grids are uniform on bounded supports and `x = a sinh(t)` with uniform
//! `t` otherwise, cut where the tail drops below `1e-12`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Geometry, Measure};
use crate::quad::{integrate_finite, integrate_with_breaks, QuadOptions};
use crate::rates::{p_weak_rate, RateFunction};
use crate::weights::Weight;

pub const DEFAULT_NODES: usize = 8192;
/// Relative tolerance of the pass flag in [`InequalityReport`].
pub const REPORT_TOL: f64 = 1e-8;
const TAIL_CUTOFF: f64 = 1e-12;
const REFINE_LIMIT: f64 = 0.01;

fn quad_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-11, abs_tol: 1e-22, max_intervals: 800 }
}

fn radial_dim(measure: &Measure) -> Option<usize> {
    match measure.geometry() {
        Geometry::Radial { dim } => Some(dim),
        _ => None,
    }
}

/// Coordinate range covered by the grids.
pub fn grid_range(measure: &Measure) -> Result<(f64, f64)> {
    if matches!(measure.geometry(), Geometry::Product) {
        return Err(Error::Unsupported("discretization needs d = 1 or a radial measure".into()));
    }
    let (lo, hi) = measure.support();
    if lo.is_finite() && hi.is_finite() {
        return Ok((lo, hi));
    }
    let reach = measure.tail_inverse(TAIL_CUTOFF, 0.0)?;
    Ok((if lo.is_finite() { lo } else { -reach }, if hi.is_finite() { hi } else { reach }))
}

/// Grid with `n` nodes.
pub fn grid(measure: &Measure, n: usize) -> Result<Vec<f64>> {
    if n < 8 {
        return Err(Error::BadParameter(format!("grid needs at least 8 nodes, got {n}")));
    }
    let (lo, hi) = grid_range(measure)?;
    let (slo, shi) = measure.support();
    let last = (n - 1) as f64;
    if slo.is_finite() && shi.is_finite() {
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / last).collect());
    }
    let a = measure.median_abs()?.max(1e-3);
    let (t0, t1) = ((lo / a).asinh(), (hi / a).asinh());
    let mut g: Vec<f64> = (0..n).map(|i| a * (t0 + (t1 - t0) * i as f64 / last).sinh()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    Ok(g)
}

/// Three-point finite-volume form: `sum k_i (f_{i+1} - f_i)^2` against the
/// lumped mass `sum m_i f_i^2`, natural boundary conditions.
#[derive(Debug, Clone)]
pub struct DiscretizedForm {
    pub nodes: Vec<f64>,
    pub mass: Vec<f64>,
    pub stiffness: Vec<f64>,
    /// Zero-order term, nonzero only for angular sectors.
    pub potential: Vec<f64>,
    base_mass: Vec<f64>,
}

impl DiscretizedForm {
    /// Stiffness density `stiff * rho`, mass density `mass_w * rho`.
    pub fn assemble(
        measure: &Measure,
        nodes: Vec<f64>,
        stiff: &(dyn Fn(f64) -> f64 + Sync),
        mass_w: &(dyn Fn(f64) -> f64 + Sync),
    ) -> Result<Self> {
        let n = nodes.len();
        if n < 3 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadParameter("grid nodes must be strictly increasing".into()));
        }
        let z = measure.normalize();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NonIntegrable("measure has no finite normalization".into()));
        }
        let cell = |i: usize| {
            let a = if i == 0 { nodes[0] } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let b = if i == n - 1 { nodes[n - 1] } else { 0.5 * (nodes[i] + nodes[i + 1]) };
            (a, b)
        };
        let cells: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (a, b) = cell(i);
                let o = QuadOptions { rel_tol: 1e-10, abs_tol: 1e-300, max_intervals: 50 };
                let base = integrate_finite(|x| measure.line_weight(x), a, b, o).value / z;
                let wm = integrate_finite(|x| measure.line_weight(x) * mass_w(x), a, b, o).value / z;
                (base, wm)
            })
            .collect();
        let base_mass: Vec<f64> = cells.iter().map(|c| c.0).collect();
        let mass: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let stiffness: Vec<f64> = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let m = 0.5 * (nodes[i] + nodes[i + 1]);
                measure.line_weight(m) / z * stiff(m) / (nodes[i + 1] - nodes[i])
            })
            .collect();
        if mass.iter().chain(&stiffness).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonIntegrable("non-finite entries in the discretized form".into()));
        }
        Ok(Self { potential: vec![0.0; n], nodes, mass, stiffness, base_mass })
    }

    /// Restrict to the angular sector `l`: adds `l(l+d-2) stiff(r)/r^2`.
    pub fn with_angular(mut self, dim: usize, l: usize, stiff: &dyn Fn(f64) -> f64) -> Self {
        let c = (l * (l + dim - 2)) as f64;
        if c == 0.0 {
            return self;
        }
        let top = self.stiffness.iter().fold(0.0f64, |m, &k| m.max(k));
        for i in 0..self.nodes.len() {
            let r = self.nodes[i];
            self.potential[i] = if r <= 0.0 { 1e20 * top.max(1.0) } else { c * stiff(r) / (r * r) * self.base_mass[i] };
        }
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `f^T K f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let grad: f64 = self.stiffness.iter().enumerate().map(|(i, k)| k * (f[i + 1] - f[i]).powi(2)).sum();
        grad + self.potential.iter().zip(f).map(|(q, v)| q * v * v).sum::<f64>()
    }

    fn symmetric(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let diag = (0..n)
            .map(|i| {
                let left = if i > 0 { self.stiffness[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.stiffness[i] } else { 0.0 };
                (left + right + self.potential[i]) / self.mass[i]
            })
            .collect();
        let off = (0..n - 1).map(|i| -self.stiffness[i] / (self.mass[i] * self.mass[i + 1]).sqrt()).collect();
        (diag, off)
    }

    /// `k`-th smallest generalized eigenvalue (0-based).
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        let (diag, off) = self.symmetric();
        bisect_eigenvalue(&diag, &off, k)
    }

    /// Eigenvalue and eigenvector in nodal values, scaled to `max |f| = 1`.
    pub fn eigenpair(&self, k: usize) -> Result<(f64, Vec<f64>)> {
        let (diag, off) = self.symmetric();
        let lam = bisect_eigenvalue(&diag, &off, k)?;
        let v = inverse_iteration(&diag, &off, lam);
        let mut f: Vec<f64> = v.iter().zip(&self.mass).map(|(x, m)| x / m.sqrt()).collect();
        let top = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if top > 0.0 && top.is_finite() {
            f.iter_mut().for_each(|x| *x /= top);
        }
        Ok((lam, f))
    }
}

fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let pivmin = f64::MIN_POSITIVE * off.iter().fold(1.0f64, |m, e| m.max(e * e));
    let mut count = 0;
    let mut q = diag[0] - x;
    for i in 0..diag.len() {
        if i > 0 {
            q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        }
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> Result<f64> {
    let n = diag.len();
    if k >= n {
        return Err(Error::BadParameter(format!("eigenvalue {k} of a {n}x{n} pencil")));
    }
    let mut hi = (0..n)
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i] + l + r
        })
        .fold(0.0f64, f64::max);
    let mut lo = (0..n)
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i] - l - r
        })
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    hi = hi * (1.0 + 1e-12) + 1e-300;
    for _ in 0..2000 {
        if hi - lo <= 1e-14 * hi.abs().max(lo.abs()) {
            break;
        }
        let mid = if lo > 0.0 && hi / lo > 16.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn inverse_iteration(diag: &[f64], off: &[f64], lam: f64) -> Vec<f64> {
    let n = diag.len();
    let shift = lam + 1e-10 * lam.abs().max(1e-300);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618).sin()).collect();
    for _ in 0..4 {
        // Thomas algorithm on T - shift I
        let mut c = vec![0.0; n];
        let mut y = vec![0.0; n];
        let tiny = 1e-300;
        let mut b = diag[0] - shift;
        if b.abs() < tiny {
            b = tiny;
        }
        c[0] = if n > 1 { off[0] / b } else { 0.0 };
        y[0] = x[0] / b;
        for i in 1..n {
            let mut b = diag[i] - shift - off[i - 1] * c[i - 1];
            if b.abs() < tiny {
                b = tiny;
            }
            if i + 1 < n {
                c[i] = off[i] / b;
            }
            y[i] = (x[i] - off[i - 1] * y[i - 1]) / b;
        }
        for i in (0..n - 1).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    x
}

/// Optimal constant from two resolutions and its Richardson extrapolation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub coarse: f64,
    pub fine: f64,
    /// `|value - fine|`.
    pub error: f64,
    pub nodes: usize,
    /// Angular sector of the extremal eigenfunction (always 0 in d = 1).
    pub sector: usize,
}

impl SpectralEstimate {
    /// Upper end of the estimate.
    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

fn lowest_gap(measure: &Measure, n: usize, stiff: &(dyn Fn(f64) -> f64 + Sync), mass_w: &(dyn Fn(f64) -> f64 + Sync)) -> Result<[f64; 2]> {
    let nodes = grid(measure, n)?;
    let form = DiscretizedForm::assemble(measure, nodes, stiff, mass_w)?;
    let l0 = form.eigenvalue(1)?;
    let l1 = match radial_dim(measure) {
        Some(d) if d >= 2 => form.with_angular(d, 1, stiff).eigenvalue(0)?,
        _ => f64::INFINITY,
    };
    Ok([l0, l1])
}

fn richardson(
    measure: &Measure,
    n: usize,
    stiff: &(dyn Fn(f64) -> f64 + Sync),
    mass_w: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<SpectralEstimate> {
    let coarse = lowest_gap(measure, n, stiff, mass_w)?;
    let fine = lowest_gap(measure, 2 * n, stiff, mass_w)?;
    let mut best: Option<SpectralEstimate> = None;
    for sector in 0..2 {
        let (lc, lf) = (coarse[sector], fine[sector]);
        if !lf.is_finite() {
            continue;
        }
        if !(lf > 0.0 && lc > 0.0) {
            return Err(Error::NotApplicable("discrete pencil has no positive gap".into()));
        }
        let lr = lf + (lf - lc) / 3.0;
        let value = 1.0 / lr;
        let est = SpectralEstimate { value, coarse: 1.0 / lc, fine: 1.0 / lf, error: (value - 1.0 / lf).abs(), nodes: n, sector };
        match best {
            Some(b) if est.value <= b.value => {}
            _ => best = Some(est),
        }
    }
    let est = best.ok_or_else(|| Error::NotApplicable("no sector produced a gap".into()))?;
    let change = est.error / est.value;
    if !(change <= REFINE_LIMIT) {
        return Err(Error::GridTooCoarse { relative_change: change });
    }
    Ok(est)
}

/// Best constant in `Var(f) <= C int |f'|^2 w^2 dmu` (`w = 1` if `None`).
pub fn spectral_constant(measure: &Measure, weight: Option<&Weight>) -> Result<SpectralEstimate> {
    spectral_constant_with(measure, weight, DEFAULT_NODES)
}

pub fn spectral_constant_with(measure: &Measure, weight: Option<&Weight>, n: usize) -> Result<SpectralEstimate> {
    let stiff = |x: f64| weight.map_or(1.0, |w| w.omega2(x));
    richardson(measure, n, &stiff, &|_| 1.0)
}

/// Best constant in `inf_a int (g - a)^2 / w^2 dmu <= C int |g'|^2 dmu`.
pub fn converse_quotient(measure: &Measure, weight: &Weight) -> Result<SpectralEstimate> {
    converse_quotient_with(measure, weight, DEFAULT_NODES)
}

pub fn converse_quotient_with(measure: &Measure, weight: &Weight, n: usize) -> Result<SpectralEstimate> {
    let inv = |x: f64| 1.0 / weight.omega2(x);
    richardson(measure, n, &|_| 1.0, &inv)
}

/// Test functions of the coordinate, all bounded with an explicit derivative.
#[derive(Debug, Clone)]
pub enum TestFunction {
    Constant(f64),
    /// `atan((x - center) / scale)`.
    Arctan {
        center: f64,
        scale: f64,
    },
    /// `clamp((x - r) / delta, 0, 1)`.
    Threshold {
        r: f64,
        delta: f64,
    },
    /// `clamp((|x| - r) / delta, 0, 1)`.
    TailRamp {
        r: f64,
        delta: f64,
    },
    /// `exp(lambda clamp(x, -cap, cap) / 2)`.
    Tilt {
        lambda: f64,
        cap: f64,
    },
    /// Piecewise-linear interpolation of nodal values, constant outside.
    Nodal {
        id: String,
        nodes: Arc<[f64]>,
        values: Arc<[f64]>,
    },
}

impl TestFunction {
    pub fn id(&self) -> String {
        match self {
            Self::Constant(c) => format!("constant({c})"),
            Self::Arctan { center, scale } => format!("arctan(center={center:e},scale={scale:e})"),
            Self::Threshold { r, delta } => format!("threshold(r={r:e},delta={delta:e})"),
            Self::TailRamp { r, delta } => format!("tail_ramp(r={r:e},delta={delta:e})"),
            Self::Tilt { lambda, cap } => format!("tilt(lambda={lambda:e},cap={cap:e})"),
            Self::Nodal { id, .. } => id.clone(),
        }
    }

    fn segment(nodes: &[f64], x: f64) -> Option<usize> {
        if !(x > nodes[0] && x < nodes[nodes.len() - 1]) {
            return None;
        }
        let j = nodes.partition_point(|&t| t <= x);
        Some(j - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Arctan { center, scale } => ((x - center) / scale).atan(),
            Self::Threshold { r, delta } => ((x - r) / delta).clamp(0.0, 1.0),
            Self::TailRamp { r, delta } => ((x.abs() - r) / delta).clamp(0.0, 1.0),
            Self::Tilt { lambda, cap } => (0.5 * lambda * x.clamp(-cap, *cap)).exp(),
            Self::Nodal { nodes, values, .. } => match Self::segment(nodes, x) {
                Some(i) => {
                    let w = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
                    values[i] + w * (values[i + 1] - values[i])
                }
                None if x <= nodes[0] => values[0],
                None => values[values.len() - 1],
            },
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Arctan { center, scale } => {
                let u = (x - center) / scale;
                1.0 / (scale * (1.0 + u * u))
            }
            Self::Threshold { r, delta } => {
                if x > *r && x < r + delta {
                    1.0 / delta
                } else {
                    0.0
                }
            }
            Self::TailRamp { r, delta } => {
                if x.abs() > *r && x.abs() < r + delta {
                    x.signum() / delta
                } else {
                    0.0
                }
            }
            Self::Tilt { lambda, cap } => {
                if x.abs() < *cap {
                    0.5 * lambda * self.value(x)
                } else {
                    0.0
                }
            }
            Self::Nodal { nodes, values, .. } => match Self::segment(nodes, x) {
                Some(i) => (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]),
                None => 0.0,
            },
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Self::Constant(_) | Self::Arctan { .. } => vec![],
            Self::Threshold { r, delta } => vec![*r, r + delta],
            Self::TailRamp { r, delta } => vec![-r - delta, -r, *r, r + delta],
            Self::Tilt { cap, .. } => vec![-cap, *cap],
            Self::Nodal { nodes, .. } => nodes.to_vec(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant(_) => true,
            Self::Tilt { lambda, .. } => *lambda == 0.0,
            Self::Nodal { values, .. } => values.iter().all(|v| *v == values[0]),
            _ => false,
        }
    }
}

/// Quadrature moments of one test function.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub var: f64,
    /// `Ent(f^2)` with `0 ln 0 = 0`.
    pub ent: f64,
    /// `int |f'|^2 w^2 dmu`.
    pub dirichlet: f64,
    /// `max - min` over grid nodes and kinks.
    pub osc: f64,
    /// `||f - mean||_p` when requested.
    pub lp: f64,
}

/// Moments of `f` under `measure`, Dirichlet form weighted by `weight`.
pub fn moments(measure: &Measure, f: &TestFunction, weight: Option<&Weight>, osc_nodes: &[f64], p: Option<f64>) -> Result<Moments> {
    let (lo, hi) = measure.support();
    let z = measure.normalize();
    let mut breaks = measure.breakpoints();
    let kinks = f.kinks();
    if kinks.len() < 64 {
        breaks.extend(kinks.iter().copied());
    } else {
        // nodal functions: split at a thinned subset; GK handles the rest
        breaks.extend(kinks.iter().step_by(kinks.len() / 64 + 1).copied());
    }
    let int = |g: &dyn Fn(f64) -> f64| -> f64 {
        integrate_with_breaks(
            |x| {
                let w = measure.line_weight(x);
                if w == 0.0 {
                    0.0
                } else {
                    g(x) * w
                }
            },
            lo,
            hi,
            &breaks,
            quad_opts(),
        )
        .value
            / z
    };
    let mean = int(&|x| f.value(x));
    let var = if f.is_constant() { 0.0 } else { int(&|x| (f.value(x) - mean).powi(2)) };
    let second = int(&|x| f.value(x).powi(2));
    let ent = if f.is_constant() || second <= 0.0 {
        0.0
    } else {
        int(&|x| {
            let v = f.value(x).powi(2);
            if v > 0.0 {
                v * (v / second).ln()
            } else {
                0.0
            }
        })
    };
    let dirichlet = if f.is_constant() {
        0.0
    } else {
        int(&|x| {
            let d = f.deriv(x);
            if d == 0.0 {
                0.0
            } else {
                d * d * weight.map_or(1.0, |w| w.omega2(x))
            }
        })
    };
    let (mut fmin, mut fmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in osc_nodes.iter().chain(kinks.iter()).filter(|x| **x >= lo && **x <= hi) {
        let v = f.value(x);
        fmin = fmin.min(v);
        fmax = fmax.max(v);
    }
    let osc = if fmax >= fmin { fmax - fmin } else { 0.0 };
    let lp = match p {
        Some(p) if !f.is_constant() => int(&|x| (f.value(x) - mean).abs().powf(p)).powf(1.0 / p),
        _ => 0.0,
    };
    Ok(Moments { mean, second, var, ent, dirichlet, osc, lp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    WeakPoincare,
    WeakLogSobolev,
    PWeakPoincare,
    WeightedPoincare,
    Capacity,
}

impl InequalityKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WeakPoincare => "weak_poincare",
            Self::WeakLogSobolev => "weak_log_sobolev",
            Self::PWeakPoincare => "p_weak_poincare",
            Self::WeightedPoincare => "weighted_poincare",
            Self::Capacity => "capacity",
        }
    }
}

/// One checked instance `LHS <= RHS`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub function: String,
    pub s: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl InequalityReport {
    pub fn new(kind: InequalityKind, function: impl Into<String>, s: Option<f64>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let pass = margin >= -REPORT_TOL * lhs.abs().max(rhs.abs());
        Self { kind, function: function.into(), s, lhs, rhs, margin, pass }
    }
}

/// One report per line.
pub fn write_jsonl<W: Write>(reports: &[InequalityReport], mut w: W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `kind,passes,failures,worst_margin`, one row per kind present.
pub fn summary_csv(reports: &[InequalityReport]) -> String {
    let mut kinds: Vec<InequalityKind> = vec![];
    for r in reports {
        if !kinds.contains(&r.kind) {
            kinds.push(r.kind);
        }
    }
    let mut out = String::from("kind,passes,failures,worst_margin\n");
    for k in kinds {
        let rs: Vec<&InequalityReport> = reports.iter().filter(|r| r.kind == k).collect();
        let passes = rs.iter().filter(|r| r.pass).count();
        let worst = rs.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        out.push_str(&format!("{},{},{},{:.16e}\n", k.name(), passes, rs.len() - passes, worst));
    }
    out
}

fn osc_grid(measure: &Measure) -> Result<Vec<f64>> {
    grid(measure, 2049)
}

fn all_moments(measure: &Measure, family: &[TestFunction], weight: Option<&Weight>, p: Option<f64>) -> Result<Vec<Moments>> {
    let nodes = osc_grid(measure)?;
    family.par_iter().map(|f| moments(measure, f, weight, &nodes, p)).collect()
}

fn check_s(s_grid: &[f64]) -> Result<()> {
    if s_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::BadParameter("s values must be positive and finite".into()));
    }
    Ok(())
}

/// `Var(f) <= beta(s) int |f'|^2 + s Osc(f)^2` for each `(f, s)`.
pub fn verify_weak_poincare(
    measure: &Measure,
    beta: &RateFunction,
    s_grid: &[f64],
    family: &[TestFunction],
) -> Result<Vec<InequalityReport>> {
    check_s(s_grid)?;
    let ms = all_moments(measure, family, None, None)?;
    let mut out = Vec::with_capacity(ms.len() * s_grid.len());
    for (f, m) in family.iter().zip(&ms) {
        for &s in s_grid {
            let rhs = beta.eval(s) * m.dirichlet + s * m.osc * m.osc;
            out.push(InequalityReport::new(InequalityKind::WeakPoincare, f.id(), Some(s), m.var, rhs));
        }
    }
    Ok(out)
}

/// `Ent(f^2) <= beta(s) int |f'|^2 + s Osc(f)^2`.
pub fn verify_weak_log_sobolev(
    measure: &Measure,
    beta: &RateFunction,
    s_grid: &[f64],
    family: &[TestFunction],
) -> Result<Vec<InequalityReport>> {
    check_s(s_grid)?;
    let ms = all_moments(measure, family, None, None)?;
    let mut out = Vec::with_capacity(ms.len() * s_grid.len());
    for (f, m) in family.iter().zip(&ms) {
        for &s in s_grid {
            let rhs = beta.eval(s) * m.dirichlet + s * m.osc * m.osc;
            out.push(InequalityReport::new(InequalityKind::WeakLogSobolev, f.id(), Some(s), m.ent, rhs));
        }
    }
    Ok(out)
}

/// `Var(f) <= beta_p(s) int |f'|^2 + s ||f - mu f||_p^2` with `beta_p`
/// built from the weak Poincare rate `beta`.
pub fn verify_p_weak_poincare(
    measure: &Measure,
    beta: &RateFunction,
    p: f64,
    s_grid: &[f64],
    family: &[TestFunction],
) -> Result<Vec<InequalityReport>> {
    check_s(s_grid)?;
    let bp = p_weak_rate(beta, p)?;
    let ms = all_moments(measure, family, None, Some(p))?;
    let mut out = Vec::with_capacity(ms.len() * s_grid.len());
    for (f, m) in family.iter().zip(&ms) {
        for &s in s_grid {
            let rhs = bp.eval(s) * m.dirichlet + s * m.lp * m.lp;
            out.push(InequalityReport::new(InequalityKind::PWeakPoincare, f.id(), Some(s), m.var, rhs));
        }
    }
    Ok(out)
}

/// `Var(f) <= C int |f'|^2 w^2`.
pub fn verify_weighted_poincare(measure: &Measure, weight: &Weight, c: f64, family: &[TestFunction]) -> Result<Vec<InequalityReport>> {
    let ms = all_moments(measure, family, Some(weight), None)?;
    Ok(family
        .iter()
        .zip(&ms)
        .map(|(f, m)| InequalityReport::new(InequalityKind::WeightedPoincare, f.id(), None, m.var, c * m.dirichlet))
        .collect())
}

/// `beta_emp(s) = max_f (Var - s Osc^2) / Dirichlet`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalRate {
    pub s: f64,
    pub value: f64,
    pub function: String,
}

pub fn beta_empirical(measure: &Measure, s_grid: &[f64], family: &[TestFunction]) -> Result<Vec<EmpiricalRate>> {
    check_s(s_grid)?;
    let ms = all_moments(measure, family, None, None)?;
    Ok(s_grid
        .iter()
        .map(|&s| {
            let mut best = EmpiricalRate { s, value: 0.0, function: "none".into() };
            for (f, m) in family.iter().zip(&ms) {
                if m.dirichlet > 0.0 {
                    let q = (m.var - s * m.osc * m.osc) / m.dirichlet;
                    if q > best.value {
                        best = EmpiricalRate { s, value: q, function: f.id() };
                    }
                }
            }
            best
        })
        .collect())
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Leading nontrivial eigenvectors of the unweighted form, as test functions.
pub fn eigenvector_functions(measure: &Measure, weight: Option<&Weight>, count: usize) -> Result<Vec<TestFunction>> {
    let nodes = grid(measure, 2049)?;
    let stiff = |x: f64| weight.map_or(1.0, |w| w.omega2(x));
    let form = DiscretizedForm::assemble(measure, nodes, &stiff, &|_| 1.0)?;
    let shared: Arc<[f64]> = form.nodes.clone().into();
    let mut out = vec![];
    for k in 1..=count {
        let (_, v) = form.eigenpair(k)?;
        out.push(TestFunction::Nodal { id: format!("eigenvector({k})"), nodes: shared.clone(), values: v.into() });
    }
    Ok(out)
}

/// Smoothed thresholds, leading discrete eigenvectors and arctan rescalings.
pub fn adversarial_family(measure: &Measure) -> Result<Vec<TestFunction>> {
    let (slo, shi) = measure.support();
    let radial = radial_dim(measure).is_some();
    let scale = measure.median_abs()?.max(1e-6);
    let mut fam = vec![];
    let mut radii = vec![];
    for p in logspace(1e-7, 0.9, 28) {
        let r = measure.tail_inverse(p, 0.0)?;
        if r.is_finite() {
            radii.push(r);
        }
    }
    let mut centers = vec![];
    for &r in &radii {
        centers.push(r);
        if !radial {
            centers.push(-r);
        }
    }
    centers.push(0.0);
    for &r in &centers {
        for frac in [1e-3, 0.05, 0.3, 1.0, 3.0] {
            let delta = frac * r.abs().max(scale);
            if r + delta > slo && r < shi {
                fam.push(TestFunction::Threshold { r, delta });
                if !radial {
                    // decreasing version through the mirrored threshold
                    fam.push(TestFunction::Threshold { r: -r - delta, delta });
                }
            }
        }
    }
    for k in [-2.0, 0.0, 2.0] {
        let center = if radial { 0.0 } else { k * scale };
        for sc in logspace(1e-2, 1e4, 13) {
            fam.push(TestFunction::Arctan { center, scale: sc * scale });
        }
        if radial {
            break;
        }
    }
    fam.extend(eigenvector_functions(measure, None, 3)?);
    Ok(fam)
}

/// Sets for [`estimate_capacity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CapacitySet {
    /// `{|x - center| > radius}`.
    Outside { center: f64, radius: f64 },
    /// `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl CapacitySet {
    fn contains(&self, x: f64) -> bool {
        match *self {
            Self::Outside { center, radius } => (x - center).abs() > radius,
            Self::Interval { lo, hi } => x >= lo && x <= hi,
        }
    }

    fn edges(&self) -> Vec<f64> {
        match *self {
            Self::Outside { center, radius } => vec![center - radius, center + radius],
            Self::Interval { lo, hi } => vec![lo, hi],
        }
    }

    pub fn mass(&self, measure: &Measure) -> Result<f64> {
        match *self {
            Self::Outside { center, radius } => measure.tail(radius, center),
            Self::Interval { lo, hi } => Ok(measure.mass(lo, hi)),
        }
    }
}

/// Admissible functions vanish on a set of measure at least 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapacityConvention {
    #[default]
    HalfMass,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub refined: f64,
    pub set_mass: f64,
}

/// Inserts `extra` into a sorted grid, dropping nodes that crowd them.
fn with_extra_nodes(mut g: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    let (lo, hi) = (g[0], g[g.len() - 1]);
    for &e in extra {
        if e > lo && e < hi {
            let j = g.partition_point(|&t| t < e);
            let h = (g[j] - g[j - 1]).abs();
            g.retain(|&t| (t - e).abs() > 1e-3 * h);
            g.push(e);
            g.sort_by(f64::total_cmp);
        }
    }
    g
}

fn capacity_on(measure: &Measure, set: &CapacitySet, n: usize) -> Result<f64> {
    let nodes = with_extra_nodes(grid(measure, n)?, &set.edges());
    let form = DiscretizedForm::assemble(measure, nodes, &|_| 1.0, &|_| 1.0)?;
    let n = form.len();
    let in_a: Vec<bool> = form.nodes.iter().map(|&x| set.contains(x)).collect();
    if !in_a.iter().any(|&b| b) {
        return Err(Error::BadParameter("set lies beyond the discretization range".into()));
    }
    let inv_k: Vec<f64> = form.stiffness.iter().map(|k| 1.0 / k).collect();
    // mu([x_i, x_j]): the zero set of the interpolant runs node to node
    let base = measure.cdf(form.nodes[0])?;
    let mut cum = Vec::with_capacity(n);
    for &x in &form.nodes {
        cum.push(measure.cdf(x)? - base);
    }
    let window = |i: usize, j: usize| cum[j] - cum[i];
    // Resistances are summed outward from the A side of each gap: a
    // global prefix sum loses everything to cancellation on heavy tails.
    let from_right = |b: usize, lo: usize| -> Vec<f64> {
        // r[j - lo] = sum_{e=j}^{b-1} 1/k_e
        let mut r = vec![0.0; b - lo + 1];
        for j in (lo..b).rev() {
            r[j - lo] = r[j + 1 - lo] + inv_k[j];
        }
        r
    };
    let from_left = |a: usize, hi: usize| -> Vec<f64> {
        // r[s - a] = sum_{e=a}^{s-1} 1/k_e
        let mut r = vec![0.0; hi - a + 1];
        for s in a + 1..=hi {
            r[s - a] = r[s - 1 - a] + inv_k[s - 1];
        }
        r
    };
    let mut best = f64::INFINITY;
    // With the zero set and A fixed, the free nodes carry the discrete
    // harmonic interpolant, which already satisfies 0 <= phi <= 1; its
    // energy is the reciprocal resistance of each gap.
    let mut i = 0;
    while i < n {
        if in_a[i] {
            i += 1;
            continue;
        }
        let g0 = i;
        while i + 1 < n && !in_a[i + 1] {
            i += 1;
        }
        let g1 = i;
        i += 1;
        let left = g0.checked_sub(1).map(|a| (a, from_left(a, g1)));
        let right = if g1 + 1 < n { Some((g1 + 1, from_right(g1 + 1, g0))) } else { None };
        let mut j = g0;
        for s in g0..=g1 {
            j = j.max(s);
            while j < g1 && window(s, j) < 0.5 {
                j += 1;
            }
            if window(s, j) < 0.5 {
                break;
            }
            let mut cost = 0.0;
            if let Some((a, r)) = &left {
                cost += 1.0 / r[s - a];
            }
            if let Some((_, r)) = &right {
                // the zero set only needs part of node j's cell
                let mut res = r[j - g0];
                if j > s {
                    let theta = (window(s, j) - 0.5) / window(j - 1, j);
                    res += theta.clamp(0.0, 1.0) * (r[j - 1 - g0] - res);
                }
                cost += 1.0 / res;
            }
            best = best.min(cost);
        }
    }
    // zero set split around a single block of A
    let first = in_a.iter().position(|&b| b).unwrap();
    let last = in_a.iter().rposition(|&b| b).unwrap();
    if first > 0 && last + 1 < n && in_a[first..=last].iter().all(|&b| b) {
        let rl = from_right(first, 0);
        let rr = from_left(last, n - 1);
        let mut j = last + 1;
        for s in 0..first {
            let need = 0.5 - window(0, s);
            while j + 1 < n && window(j + 1, n - 1) >= need {
                j += 1;
            }
            if window(j, n - 1) >= need {
                let mut res = rr[j - last];
                if j + 1 < n {
                    let theta = (window(j, n - 1) - need) / window(j, j + 1);
                    res += theta.clamp(0.0, 1.0) * (rr[j + 1 - last] - res);
                }
                best = best.min(1.0 / rl[s] + 1.0 / res);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Infeasible { mass: set.mass(measure)? });
    }
    Ok(best)
}

/// `inf { int |phi'|^2 dmu : 1_A <= phi <= 1, phi = 0 on a set of mass >= 1/2 }`.
pub fn estimate_capacity(measure: &Measure, set: &CapacitySet, convention: CapacityConvention) -> Result<CapacityEstimate> {
    let CapacityConvention::HalfMass = convention;
    let set_mass = set.mass(measure)?;
    if set_mass > 0.5 {
        return Err(Error::Infeasible { mass: set_mass });
    }
    // sets near half mass converge slowly, so allow one extra doubling
    let mut value = capacity_on(measure, set, DEFAULT_NODES)?;
    let mut refined = capacity_on(measure, set, 2 * DEFAULT_NODES)?;
    if (value - refined).abs() > REFINE_LIMIT * refined {
        value = refined;
        refined = capacity_on(measure, set, 4 * DEFAULT_NODES)?;
    }
    let change = (value - refined).abs() / refined;
    if !(change <= REFINE_LIMIT) {
        return Err(Error::GridTooCoarse { relative_change: change });
    }
    Ok(CapacityEstimate { value, refined, set_mass })
}

/// Maximum of `Ent(f^2) / int |f'|^2 w^2` over tilts, thresholds and
/// eigenvector seeds, with the tail sweep used for the trend flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyQuotient {
    pub value: f64,
    pub function: String,
    /// `(mu(tail), quotient)` along the tail ramps, heaviest tail first.
    pub sweep: Vec<(f64, f64)>,
    pub unbounded_trend: bool,
}

pub fn entropy_quotient(measure: &Measure, weight: Option<&Weight>) -> Result<EntropyQuotient> {
    let radial = radial_dim(measure).is_some();
    let (glo, ghi) = grid_range(measure)?;
    let cap = glo.abs().max(ghi.abs());
    let mut fam = vec![];
    for l in [0.02, 0.1, 0.3, 1.0, 2.0] {
        fam.push(TestFunction::Tilt { lambda: l, cap });
        if !radial {
            fam.push(TestFunction::Tilt { lambda: -l, cap });
        }
    }
    let scale = measure.median_abs()?.max(1e-6);
    for r in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for d in [0.3, 1.0, 3.0] {
            fam.push(TestFunction::Threshold { r: r * scale, delta: d * scale });
        }
    }
    for seed in eigenvector_functions(measure, weight, 2)? {
        if let TestFunction::Nodal { id, nodes, values } = &seed {
            let shifted: Vec<f64> = values.iter().map(|v| 1.0 + 0.5 * v).collect();
            fam.push(TestFunction::Nodal { id: format!("1+{id}/2"), nodes: nodes.clone(), values: shifted.into() });
        }
        fam.push(seed);
    }
    let probs = logspace(1e-8, 1e-1, 15);
    let mut radii = vec![];
    for &p in probs.iter().rev() {
        radii.push((p, measure.tail_inverse(p, 0.0)?));
    }
    let n_tail = radii.len();
    for &(_, r) in &radii {
        fam.push(TestFunction::TailRamp { r, delta: r.max(scale) });
    }
    let ms = all_moments(measure, &fam, weight, None)?;
    let q: Vec<f64> = ms.iter().map(|m| if m.dirichlet > 0.0 { m.ent / m.dirichlet } else { 0.0 }).collect();
    let (k, &value) = q.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let sweep: Vec<(f64, f64)> = radii.iter().zip(&q[q.len() - n_tail..]).map(|(&(p, _), &v)| (p, v)).collect();
    Ok(EntropyQuotient { value, function: fam[k].id(), unbounded_trend: grows_without_saturating(&sweep), sweep })
}

/// The last third of the sweep keeps increasing at a non-vanishing rate
/// in `ln(1/p)`.
fn grows_without_saturating(sweep: &[(f64, f64)]) -> bool {
    let n = sweep.len();
    if n < 6 {
        return false;
    }
    let tail = &sweep[2 * n / 3..];
    let increasing = tail.windows(2).all(|w| w[1].1 > w[0].1);
    let (p0, q0) = tail[0];
    let (p1, q1) = tail[tail.len() - 1];
    let (pm, qm) = sweep[n / 3];
    // slope of q against ln(1/p) in the last part versus the middle part
    let late = (q1 - q0) / (p0 / p1).ln();
    let early = (q0 - qm) / (pm / p0).ln();
    increasing && late > 0.5 * early.max(0.0) && q1 > 1.1 * q0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::weights::WeightTag;
    use std::f64::consts::PI;

    fn sqrt_one_plus() -> Weight {
        Weight::cauchy_optimal()
    }

    #[test]
    fn interval_gap_matches_the_cosine_mode() {
        let m = Measure::uniform_interval(-1.0, 1.0).unwrap();
        let e = spectral_constant(&m, None).unwrap();
        assert!((e.value - 4.0 / (PI * PI)).abs() < 1e-6, "{e:?}");
    }

    #[test]
    fn gaussian_gap_is_one() {
        let m = Measure::gaussian(1).unwrap();
        let e = spectral_constant(&m, None).unwrap();
        assert!((e.value - 1.0).abs() < 1e-4, "{e:?}");
    }

    #[test]
    fn radial_gaussian_gap_comes_from_the_first_sector() {
        let m = Measure::gaussian(3).unwrap();
        let e = spectral_constant_with(&m, None, 2048).unwrap();
        assert!((e.value - 1.0).abs() < 1e-3, "{e:?}");
        assert_eq!(e.sector, 1);
    }

    #[test]
    fn cauchy_four_is_below_one_third() {
        let m = Measure::cauchy(4.0, 1).unwrap();
        let e = spectral_constant_with(&m, Some(&sqrt_one_plus()), 4096).unwrap();
        assert!(e.value > 0.0 && e.value <= 1.0 / 3.0 + e.error, "{e:?}");
    }

    #[test]
    fn converse_with_unit_weight_is_spectral() {
        let m = Measure::gaussian(1).unwrap();
        let a = converse_quotient_with(&m, &Weight::constant(1.0), 2048).unwrap();
        let b = spectral_constant_with(&m, None, 2048).unwrap();
        assert!((a.value - b.value).abs() < 1e-12 * b.value);
    }

    #[test]
    fn interval_scaling_is_quadratic() {
        let base = spectral_constant_with(&Measure::uniform_interval(-1.0, 1.0).unwrap(), None, 1024).unwrap().value;
        for r in [2.0, 4.0] {
            let v = spectral_constant_with(&Measure::uniform_interval(-r, r).unwrap(), None, 1024).unwrap().value;
            assert!((v / base - r * r).abs() < 1e-3 * r * r);
        }
    }

    #[test]
    fn eigenvector_is_the_cosine() {
        let m = Measure::uniform_interval(0.0, 1.0).unwrap();
        let form = DiscretizedForm::assemble(&m, grid(&m, 513).unwrap(), &|_| 1.0, &|_| 1.0).unwrap();
        let (lam, v) = form.eigenpair(1).unwrap();
        assert!((lam - PI * PI).abs() < 1e-3 * PI * PI);
        let sign = v[0].signum();
        for (x, f) in form.nodes.iter().zip(&v) {
            assert!((sign * f - (PI * x).cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn capacity_of_the_top_quarter() {
        let m = Measure::uniform_interval(0.0, 1.0).unwrap();
        let c = estimate_capacity(&m, &CapacitySet::Interval { lo: 0.75, hi: 1.0 }, CapacityConvention::HalfMass).unwrap();
        assert!((c.value - 4.0).abs() < 4e-3, "{c:?}");
    }

    #[test]
    fn capacity_of_a_middle_interval_uses_both_tails() {
        // zero set [0, a] u [b, 1] with a + 1 - b = 1/2, ramps of widths
        // 0.45 - a and b - 0.55: optimum a = 1/4 - ..., energy 2 / 0.2 = 10
        let m = Measure::uniform_interval(0.0, 1.0).unwrap();
        let c = estimate_capacity(&m, &CapacitySet::Interval { lo: 0.45, hi: 0.55 }, CapacityConvention::HalfMass).unwrap();
        assert!((c.value - 10.0).abs() < 1e-2, "{c:?}");
    }

    #[test]
    fn capacity_rejects_heavy_sets() {
        let m = Measure::uniform_interval(0.0, 1.0).unwrap();
        let e = estimate_capacity(&m, &CapacitySet::Interval { lo: 0.2, hi: 0.9 }, CapacityConvention::HalfMass);
        assert!(matches!(e, Err(Error::Infeasible { .. })));
    }

    #[test]
    fn capacity_is_monotone_in_the_set() {
        let m = Measure::cauchy(2.0, 1).unwrap();
        let small = estimate_capacity(&m, &CapacitySet::Outside { center: 0.0, radius: 10.0 }, CapacityConvention::HalfMass).unwrap();
        let big = estimate_capacity(&m, &CapacitySet::Outside { center: 0.0, radius: 3.0 }, CapacityConvention::HalfMass).unwrap();
        assert!(small.value <= big.value);
    }

    #[test]
    fn constant_function_passes_trivially() {
        let m = Measure::cauchy(2.0, 1).unwrap();
        let beta = RateFunction::constant(1.0, crate::rates::RateKind::WeakPoincare, "c").unwrap();
        let reps = verify_weak_poincare(&m, &beta, &[0.1, 1e-3], &[TestFunction::Constant(3.0)]).unwrap();
        for r in reps {
            assert_eq!(r.lhs, 0.0);
            assert_eq!(r.rhs, 0.0);
            assert!(r.pass);
        }
    }

    #[test]
    fn gaussian_moments_of_arctan() {
        let m = Measure::gaussian(1).unwrap();
        let f = TestFunction::Arctan { center: 0.0, scale: 1.0 };
        let mo = moments(&m, &f, None, &grid(&m, 257).unwrap(), Some(4.0)).unwrap();
        assert!(mo.mean.abs() < 1e-12);
        // Var(atan X) for a standard normal X
        let exact = 0.4497009164349022;
        assert!((mo.var - exact).abs() < 1e-6, "{}", mo.var);
        let reach = grid_range(&m).unwrap().1;
        assert!((mo.osc - 2.0 * reach.atan()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_entropy_quotient_reaches_two() {
        let m = Measure::gaussian(1).unwrap();
        let q = entropy_quotient(&m, None).unwrap();
        assert!(q.value >= 2.0 - 1e-2 && q.value <= 2.0 + 1e-6, "{q:?}");
        assert!(!q.unbounded_trend);
    }

    #[test]
    fn cauchy_entropy_quotient_needs_the_log_factor() {
        let m = Measure::cauchy(4.0, 1).unwrap();
        let ls = entropy_quotient(&m, Some(&Weight::cauchy_ls())).unwrap();
        assert!(ls.value.is_finite() && !ls.unbounded_trend, "{ls:?}");
        let plain = Weight::new(WeightTag::Custom, Field::new("sqrt(1+x^2)", |x| (x * x + 1.0).sqrt()));
        let q = entropy_quotient(&m, Some(&plain)).unwrap();
        assert!(q.unbounded_trend, "{q:?}");
    }

    #[test]
    fn summary_counts_failures() {
        let reps = vec![
            InequalityReport::new(InequalityKind::WeakPoincare, "a", Some(0.1), 1.0, 2.0),
            InequalityReport::new(InequalityKind::WeakPoincare, "b", Some(0.1), 3.0, 2.0),
        ];
        let csv = summary_csv(&reps);
        assert!(csv.contains("weak_poincare,1,1,-1.0000000000000000e0"), "{csv}");
        let mut buf = vec![];
        write_jsonl(&reps, &mut buf).unwrap();
        let back: InequalityReport = serde_json::from_str(String::from_utf8(buf).unwrap().lines().nth(1).unwrap()).unwrap();
        assert!(!back.pass);
        assert_eq!(back.margin, -1.0);
    }
}
