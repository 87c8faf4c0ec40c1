//! Sublevel sets `{g <= y}` of a function of the coordinate, measured
//! against a reference measure.

use crate::field::Field;
use crate::measures::Measure;

pub(crate) struct LevelSets<'a> {
    m: &'a Measure,
    g: Field,
    u: Option<Field>,
    t: Vec<f64>,
    gt: Vec<f64>,
    ut: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Measure of a sublevel set and the minimum of `u` over it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LevelMass {
    pub mass: f64,
    pub u_min: f64,
}

impl<'a> LevelSets<'a> {
    pub fn new(m: &'a Measure, g: Field, u: Option<Field>) -> Self {
        let (lo, hi) = m.support();
        let t = m.nodes().to_vec();
        let gt = t.iter().map(|&x| g.value(x)).collect();
        let ut = match &u {
            Some(f) => t.iter().map(|&x| f.value(x)).collect(),
            None => vec![0.0; t.len()],
        };
        Self { m, g, u, t, gt, ut, lo, hi }
    }

    fn u_at(&self, x: f64) -> f64 {
        self.u.as_ref().map(|f| f.value(x)).unwrap_or(0.0)
    }

    /// Point between `a` (inside) and `b` (outside) where `g` crosses `y`.
    fn crossing(&self, a: f64, b: f64, y: f64) -> f64 {
        let (mut inn, mut out) = (a, b);
        for _ in 0..64 {
            let mid = 0.5 * (inn + out);
            if mid == inn || mid == out {
                break;
            }
            if self.g.value(mid) <= y {
                inn = mid;
            } else {
                out = mid;
            }
        }
        inn
    }

    pub fn at(&self, y: f64) -> LevelMass {
        let n = self.t.len();
        let mut mass = 0.0;
        let mut u_min = f64::INFINITY;
        let mut k = 0;
        while k < n {
            if !(self.gt[k] <= y) {
                k += 1;
                continue;
            }
            let start = k;
            while k + 1 < n && self.gt[k + 1] <= y {
                k += 1;
            }
            let end = k;
            let a = if start == 0 { self.lo } else { self.crossing(self.t[start], self.t[start - 1], y) };
            let b = if end == n - 1 { self.hi } else { self.crossing(self.t[end], self.t[end + 1], y) };
            mass += self.m.mass(a, b);
            for j in start..=end {
                u_min = u_min.min(self.ut[j]);
            }
            if a.is_finite() {
                u_min = u_min.min(self.u_at(a));
            }
            if b.is_finite() {
                u_min = u_min.min(self.u_at(b));
            }
            k += 1;
        }
        LevelMass { mass: mass.min(1.0), u_min }
    }

    pub fn g_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.gt {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// `inf{y : m(g <= y) > s}` for a positive `g`.
    pub fn level_above_mass(&self, s: f64) -> f64 {
        let (gmin, gmax) = self.g_range();
        let mut lo = gmin.max(1e-300) * 0.5;
        let mut hi = gmax * 2.0;
        if self.at(lo).mass > s {
            return lo;
        }
        while !(self.at(hi).mass > s) {
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            if hi / lo - 1.0 < 1e-13 {
                break;
            }
            let mid = (0.5 * (lo.ln() + hi.ln())).exp();
            if self.at(mid).mass > s {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// `h(r) = e^{-min u} m(g <= 1/r)`, written in `y = 1/r`.
    fn h_of_y(&self, y: f64) -> f64 {
        let l = self.at(y);
        if l.mass <= 0.0 {
            0.0
        } else {
            (-l.u_min).exp() * l.mass
        }
    }

    /// `h^{-1}(s) = inf{r : h(r) <= s}`.
    pub fn h_inverse(&self, s: f64) -> f64 {
        let (gmin, gmax) = self.g_range();
        let mut y_hi = gmax.max(1e-300) * 2.0;
        if self.h_of_y(y_hi) <= s {
            // the whole support qualifies
            return 0.0;
        }
        let mut y_lo = if gmin > 0.0 { gmin * 0.5 } else { 1e-300 };
        if self.h_of_y(y_lo) > s {
            return 1.0 / y_lo;
        }
        // h(1/y) is non-decreasing in y; find sup{y : h <= s} in log y
        for _ in 0..200 {
            if y_hi / y_lo - 1.0 < 1e-13 {
                break;
            }
            let mid = (0.5 * (y_lo.ln() + y_hi.ln())).exp();
            if self.h_of_y(mid) <= s {
                y_lo = mid;
            } else {
                y_hi = mid;
            }
        }
        1.0 / y_lo
    }
}
