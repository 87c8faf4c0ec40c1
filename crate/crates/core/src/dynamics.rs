//! Weighted overdamped Langevin dynamics
//! `dX = (w^2)'(X) - w^2 V'(X)) dt + sqrt(2) w(X) dB` in d = 1, simulated
//! with tamed Euler-Maruyama, and Monte Carlo checks of variance decay
//! and invariance.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::measures::Measure;
use crate::weights::Weight;

/// Taming may engage on at most this fraction of steps.
pub const MAX_TAMED_FRACTION: f64 = 0.01;
const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Starting points drawn from the measure.
    pub outer: usize,
    /// Noise paths per starting point.
    pub inner: usize,
    pub seed: u64,
    /// Per-step increments are capped at `taming * (1 + |x|)`.
    pub taming: f64,
    /// Number of recorded times after `t = 0`.
    pub records: usize,
    /// Negative control: drop the `(w^2)'` term from the drift.
    #[serde(default)]
    pub drop_weight_gradient: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 1.0, outer: 4096, inner: 64, seed: 0, taming: 1.0, records: 20, drop_weight_gradient: false }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::BadParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::BadParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.outer < 2 || self.inner < 1 {
            return Err(Error::BadParameter("need at least 2 starting points and 1 path each".into()));
        }
        if !(self.taming > 0.0) {
            return Err(Error::BadParameter("taming threshold must be positive".into()));
        }
        if self.records < 1 {
            return Err(Error::BadParameter("need at least one recorded time".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// Step indices at which values are recorded (0 included).
    fn record_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut v: Vec<usize> = (0..=self.records).map(|k| (k * n + self.records / 2) / self.records).collect();
        v.dedup();
        v
    }
}

type Coef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift and diffusion coefficients of the weighted generator.
#[derive(Clone)]
pub struct SdeFields {
    drift: Coef,
    diffusion: Coef,
}

impl SdeFields {
    pub fn new(measure: &Measure, weight: &Weight, drop_weight_gradient: bool) -> Result<Self> {
        if measure.dim() != 1 || measure.is_radial() {
            return Err(Error::Unsupported("the Langevin simulation is one-dimensional".into()));
        }
        let v = measure.potential_field()?.clone();
        let w: Field = weight.field().clone();
        let w2 = w.clone();
        let drift = Arc::new(move |x: f64| {
            let wd = w.at(x);
            let om2 = wd.v * wd.v;
            let grad = if drop_weight_gradient { 0.0 } else { 2.0 * wd.v * wd.d1 };
            grad - om2 * v.at(x).d1
        });
        let diffusion = Arc::new(move |x: f64| std::f64::consts::SQRT_2 * w2.value(x).abs());
        Ok(Self { drift, diffusion })
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
}

/// `Var_mu(P_t f)` along the recorded times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayTrajectory {
    pub times: Vec<f64>,
    pub var: Vec<f64>,
    /// Bootstrap 95% half-widths.
    pub ci: Vec<f64>,
    /// Exponential rate fitted to `ln Var` (NaN when no window qualifies).
    pub rate: f64,
    pub rate_ci: f64,
    pub fit_window: (f64, f64),
    pub tamed_fraction: f64,
}

impl DecayTrajectory {
    /// `t,var,ci` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,var,ci\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", self.times[i], self.var[i], self.ci[i]));
        }
        s
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One tamed Euler-Maruyama step; returns the new state and whether a cap
/// engaged.
fn step(fields: &SdeFields, x: f64, dt: f64, sqdt: f64, taming: f64, z: f64) -> (f64, bool) {
    let cap = taming * (1.0 + x.abs());
    let mut tamed = false;
    let mut a = fields.drift(x) * dt;
    if !(a.abs() <= cap) {
        a = if a.is_nan() { 0.0 } else { cap * a.signum() };
        tamed = true;
    }
    let mut b = fields.diffusion(x) * sqdt;
    if !(b.abs() <= cap) {
        b = if b.is_nan() { 0.0 } else { cap };
        tamed = true;
    }
    (x + a + b * z, tamed)
}

/// Bias-corrected between-start variance: `Var_i(mean_i) - E_i[s_i^2] / m`.
fn nested_variance(sum: &[f64], sumsq: &[f64], idx: &[usize], m: usize) -> f64 {
    let n = idx.len() as f64;
    let mf = m as f64;
    let means: Vec<f64> = idx.iter().map(|&i| sum[i] / mf).collect();
    let grand = means.iter().sum::<f64>() / n;
    let between = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (n - 1.0);
    if m < 2 {
        return between.max(0.0);
    }
    let within = idx.iter().map(|&i| ((sumsq[i] - sum[i] * sum[i] / mf) / (mf - 1.0)).max(0.0)).sum::<f64>() / n;
    (between - within / mf).max(0.0)
}

/// Least-squares rate of `ln var` on the leading window where the signal
/// stays above three half-widths.
fn fit_rate(times: &[f64], var: &[f64], ci: &[f64]) -> (f64, (f64, f64)) {
    let mut k = 0;
    while k < times.len() && var[k] > 0.0 && var[k] > 3.0 * ci[k] {
        k += 1;
    }
    if k < 3 {
        return (f64::NAN, (f64::NAN, f64::NAN));
    }
    let xs = &times[..k];
    let ys: Vec<f64> = var[..k].iter().map(|v| v.ln()).collect();
    let (slope, _, _) = crate::rates::linear_fit(xs, &ys);
    (-slope, (xs[0], xs[k - 1]))
}

/// Nested Monte Carlo estimate of `t -> Var_mu(P_t f)`.
pub fn simulate(measure: &Measure, weight: &Weight, f: &Field, config: &SdeConfig) -> Result<DecayTrajectory> {
    config.validate()?;
    let fields = SdeFields::new(measure, weight, config.drop_weight_gradient)?;
    let starts = measure.sample_1d(config.outer, config.seed)?;
    let rec = config.record_steps();
    let nrec = rec.len();
    let n_steps = config.steps();
    let (dt, sqdt, m) = (config.dt, config.dt.sqrt(), config.inner);
    // per start: sums and squared sums of f at each recorded time
    let per_start: Vec<(Vec<f64>, Vec<f64>, u64)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &x0)| {
            let mut sum = vec![0.0; nrec];
            let mut sumsq = vec![0.0; nrec];
            let mut tamed = 0u64;
            for j in 0..m {
                let mut rng = stream_rng(config.seed, (i * m + j) as u64);
                let mut x = x0;
                let mut r = 0;
                for s in 0..=n_steps {
                    if r < nrec && rec[r] == s {
                        let v = f.value(x);
                        sum[r] += v;
                        sumsq[r] += v * v;
                        r += 1;
                    }
                    if s == n_steps {
                        break;
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    let (nx, t) = step(&fields, x, dt, sqdt, config.taming, z);
                    x = nx;
                    tamed += t as u64;
                }
            }
            (sum, sumsq, tamed)
        })
        .collect();
    let total_steps = (config.outer * m * n_steps) as f64;
    let tamed_fraction = per_start.iter().map(|p| p.2 as f64).sum::<f64>() / total_steps;
    if tamed_fraction > MAX_TAMED_FRACTION {
        return Err(Error::StepTooLarge { fraction: tamed_fraction });
    }
    let times: Vec<f64> = rec.iter().map(|&s| s as f64 * dt).collect();
    let col =
        |r: usize| -> (Vec<f64>, Vec<f64>) { (per_start.iter().map(|p| p.0[r]).collect(), per_start.iter().map(|p| p.1[r]).collect()) };
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..nrec).map(col).collect();
    let all: Vec<usize> = (0..config.outer).collect();
    let var: Vec<f64> = cols.iter().map(|(s, q)| nested_variance(s, q, &all, m)).collect();
    // bootstrap over starting points, one index draw shared by all times
    let mut brng = stream_rng(config.seed ^ 0xb007_57a9, u64::MAX);
    let draws: Vec<Vec<usize>> =
        (0..BOOTSTRAP_RESAMPLES).map(|_| (0..config.outer).map(|_| brng.random_range(0..config.outer)).collect()).collect();
    let boot: Vec<Vec<f64>> = draws.par_iter().map(|idx| cols.iter().map(|(s, q)| nested_variance(s, q, idx, m)).collect()).collect();
    let sd = |vals: &[f64]| {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let ci: Vec<f64> = (0..nrec).map(|r| 1.96 * sd(&boot.iter().map(|b| b[r]).collect::<Vec<_>>())).collect();
    let (rate, fit_window) = fit_rate(&times, &var, &ci);
    let boot_rates: Vec<f64> = boot
        .iter()
        .filter_map(|b| {
            let (r, _) = fit_rate(&times, b, &ci);
            r.is_finite().then_some(r)
        })
        .collect();
    let rate_ci = if boot_rates.len() > 2 { 1.96 * sd(&boot_rates) } else { f64::NAN };
    Ok(DecayTrajectory { times, var, ci, rate, rate_ci, fit_window, tamed_fraction })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCheck {
    pub pass: bool,
    pub c_bound: f64,
    /// `2 / C`.
    pub predicted_rate: f64,
    pub fitted_rate: f64,
    /// Largest `Var(t) - e^{-2t/C} Var(0) - 3 CI(t)`.
    pub worst_excess: f64,
    pub worst_time: f64,
}

/// `Var(t) <= e^{-2t/C} Var(0) + 3 CI(t)` at every recorded time.
pub fn check_decay(traj: &DecayTrajectory, c_bound: f64) -> Result<DecayCheck> {
    if !(c_bound > 0.0) {
        return Err(Error::BadParameter(format!("C must be positive, got {c_bound}")));
    }
    let predicted_rate = 2.0 / c_bound;
    if c_bound.is_infinite() {
        return Ok(DecayCheck {
            pass: true,
            c_bound,
            predicted_rate,
            fitted_rate: traj.rate,
            worst_excess: f64::NEG_INFINITY,
            worst_time: 0.0,
        });
    }
    let v0 = traj.var[0];
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for i in 0..traj.times.len() {
        let t = traj.times[i];
        let excess = traj.var[i] - (-predicted_rate * t).exp() * v0 - 3.0 * traj.ci[i];
        if excess > worst.0 {
            worst = (excess, t);
        }
    }
    Ok(DecayCheck { pass: worst.0 <= 0.0, c_bound, predicted_rate, fitted_rate: traj.rate, worst_excess: worst.0, worst_time: worst.1 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityReport {
    pub ks: f64,
    /// 5% critical value `1.358 / sqrt(n)`.
    pub critical: f64,
    pub pass: bool,
}

/// Runs `outer` independent paths from mu-samples to the horizon and
/// compares the final marginal with mu by Kolmogorov-Smirnov.
pub fn stationarity_check(measure: &Measure, weight: &Weight, config: &SdeConfig) -> Result<StationarityReport> {
    config.validate()?;
    let fields = SdeFields::new(measure, weight, config.drop_weight_gradient)?;
    let starts = measure.sample_1d(config.outer, config.seed)?;
    let n_steps = config.steps();
    let (dt, sqdt) = (config.dt, config.dt.sqrt());
    let mut finals: Vec<f64> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &x0)| {
            let mut rng = stream_rng(config.seed, i as u64);
            let mut x = x0;
            for _ in 0..n_steps {
                let z: f64 = rng.sample(StandardNormal);
                x = step(&fields, x, dt, sqdt, config.taming, z).0;
            }
            x
        })
        .collect();
    finals.sort_by(f64::total_cmp);
    let n = finals.len() as f64;
    let mut ks: f64 = 0.0;
    for (k, &x) in finals.iter().enumerate() {
        let c = measure.cdf(x)?;
        ks = ks.max((c - k as f64 / n).abs()).max(((k + 1) as f64 / n - c).abs());
    }
    let critical = 1.358 / n.sqrt();
    Ok(StationarityReport { ks, critical, pass: ks <= critical })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SdeConfig {
        SdeConfig { outer: 512, inner: 16, records: 10, ..SdeConfig::default() }
    }

    fn plain_sq() -> Weight {
        Weight::cauchy_optimal()
    }

    #[test]
    fn cauchy_four_drift_is_minus_three_x() {
        let m = Measure::cauchy(4.0, 1).unwrap();
        let f = SdeFields::new(&m, &plain_sq(), false).unwrap();
        for x in [-50.0, -3.0, -0.2, 0.0, 0.7, 4.0, 1e3] {
            assert!((f.drift(x) + 3.0 * x).abs() <= 1e-10 * (1.0 + x.abs()), "{x}");
            let sig = (2.0 * (1.0 + x * x)).sqrt();
            assert!((f.diffusion(x) - sig).abs() <= 1e-10 * sig);
        }
        let g = SdeFields::new(&m, &plain_sq(), true).unwrap();
        assert!((g.drift(2.0) + 10.0).abs() < 1e-10);
    }

    #[test]
    fn constant_observable_has_no_variance() {
        let m = Measure::gaussian(1).unwrap();
        let t = simulate(&m, &Weight::constant(1.0), &Field::constant(2.5), &small()).unwrap();
        assert!(t.var.iter().all(|v| *v == 0.0));
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ou_variance_decays_at_rate_two() {
        let m = Measure::gaussian(1).unwrap();
        let f = Field::new("x", |x| x);
        let cfg = SdeConfig { outer: 2048, inner: 32, ..small() };
        let t = simulate(&m, &Weight::constant(1.0), &f, &cfg).unwrap();
        assert!((t.rate - 2.0).abs() < 0.2, "{t:?}");
        assert!(check_decay(&t, 1.0).unwrap().pass);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = Measure::cauchy(4.0, 1).unwrap();
        let f = Field::new("atan(x)", |x| x.atan());
        let cfg = SdeConfig { outer: 64, inner: 4, horizon: 0.1, ..small() };
        let a = simulate(&m, &plain_sq(), &f, &cfg).unwrap();
        let b = simulate(&m, &plain_sq(), &f, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn infinite_bound_is_vacuous_and_tiny_bound_fails() {
        let m = Measure::cauchy(4.0, 1).unwrap();
        let f = Field::new("atan(x)", |x| x.atan());
        let t = simulate(&m, &Weight::constant(1.0), &f, &small()).unwrap();
        assert!(check_decay(&t, f64::INFINITY).unwrap().pass);
        assert!(!check_decay(&t, 0.01).unwrap().pass);
    }

    #[test]
    fn large_steps_are_reported() {
        let m = Measure::gaussian(1).unwrap();
        let f = Field::new("x", |x| x);
        let cfg = SdeConfig { dt: 0.5, horizon: 5.0, outer: 64, inner: 2, taming: 0.1, ..small() };
        assert!(matches!(simulate(&m, &Weight::constant(1.0), &f, &cfg), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn gaussian_is_stationary() {
        let m = Measure::gaussian(1).unwrap();
        let cfg = SdeConfig { outer: 4096, ..small() };
        let r = stationarity_check(&m, &Weight::constant(1.0), &cfg).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
