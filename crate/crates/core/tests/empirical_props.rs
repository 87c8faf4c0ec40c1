use fiq_core::empirical::*;
use fiq_core::lyapunov::certificate_for;
use fiq_core::rates::{builtin_rate, rate_from_lyapunov, BuiltinFamily};
use fiq_core::weights::{capacity_lower_bound, cauchy_weighted_constant};
use fiq_core::{Measure, RateFunction, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn certified(m: &Measure) -> RateFunction {
    rate_from_lyapunov(&certificate_for(m).unwrap(), m).unwrap()
}

#[test]
fn interval_constant_scales_with_the_square_of_the_radius() {
    let c: Vec<f64> =
        [1.0, 2.0, 4.0].iter().map(|&r| spectral_constant(&Measure::uniform_interval(-r, r).unwrap(), None).unwrap().value).collect();
    for w in c.windows(2) {
        assert!((w[1] / w[0] - 4.0).abs() <= 1e-3, "{c:?}");
    }
}

#[test]
fn empirical_rate_is_non_increasing_in_s() {
    let s: Vec<f64> = (0..10).map(|k| 0.25 * 10f64.powf(-0.6 * k as f64)).collect();
    for m in [
        Measure::cauchy(1.0, 1).unwrap(),
        Measure::cauchy(3.0, 1).unwrap(),
        Measure::subbotin(0.5, 1).unwrap(),
        Measure::gaussian(1).unwrap(),
    ] {
        let family = adversarial_family(&m).unwrap();
        let emp = beta_empirical(&m, &s, &family).unwrap();
        for w in emp.windows(2) {
            assert!(w[1].s < w[0].s);
            assert!(
                w[1].value >= w[0].value * (1.0 - 1e-12),
                "{:?}: {} at {} vs {} at {}",
                m.spec(),
                w[1].value,
                w[1].s,
                w[0].value,
                w[0].s
            );
        }
    }
}

#[test]
fn empirical_rate_stays_below_certified_and_builtin_rates() {
    let s = [0.2, 1e-2, 1e-4, 1e-6];
    let m = Measure::cauchy(2.0, 1).unwrap();
    let family = adversarial_family(&m).unwrap();
    let emp = beta_empirical(&m, &s, &family).unwrap();
    for beta in [certified(&m), builtin_rate(BuiltinFamily::Cauchy { alpha: 2.0 }, 1.0).unwrap()] {
        for e in &emp {
            assert!(e.value <= beta.eval(e.s), "{}: {} > {}", e.s, e.value, beta.eval(e.s));
        }
    }
}

#[test]
fn capacity_respects_the_rate_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<(Measure, RateFunction)> = [
        Measure::cauchy(1.0, 1).unwrap(),
        Measure::cauchy(2.0, 1).unwrap(),
        Measure::cauchy(4.0, 1).unwrap(),
        Measure::subbotin(0.5, 1).unwrap(),
    ]
    .into_iter()
    .map(|m| {
        let b = certified(&m);
        (m, b)
    })
    .collect();
    for i in 0..20 {
        let (m, beta) = &pairs[i % pairs.len()];
        let set = if rng.random_bool(0.5) {
            let center: f64 = rng.random_range(-2.0..2.0);
            let radius = m.tail_inverse(10f64.powf(rng.random_range(-5.0..-0.35)), center).unwrap();
            CapacitySet::Outside { center, radius }
        } else {
            let lo = m.quantile(rng.random_range(0.01..0.9)).unwrap();
            let target = rng.random_range(1e-4..0.45f64);
            let hi = m.quantile((m.cdf(lo).unwrap() + target).min(0.999_999)).unwrap();
            CapacitySet::Interval { lo, hi }
        };
        let cap = estimate_capacity(m, &set, CapacityConvention::HalfMass).unwrap();
        let lb = capacity_lower_bound(beta, cap.set_mass).unwrap();
        assert!(cap.value >= lb, "{:?} {set:?}: {} < {lb}", m.spec(), cap.value);
    }
}

#[test]
fn capacity_grows_with_the_set() {
    let m = Measure::subbotin(0.5, 1).unwrap();
    let mut prev = 0.0;
    for r in [40.0, 20.0, 10.0, 5.0, 3.0] {
        let c = estimate_capacity(&m, &CapacitySet::Outside { center: 0.0, radius: r }, CapacityConvention::HalfMass).unwrap();
        assert!(c.value >= prev, "radius {r}: {} < {prev}", c.value);
        prev = c.value;
    }
    let u = Measure::uniform_interval(0.0, 1.0).unwrap();
    let inner = estimate_capacity(&u, &CapacitySet::Interval { lo: 0.8, hi: 0.9 }, CapacityConvention::HalfMass).unwrap();
    let outer = estimate_capacity(&u, &CapacitySet::Interval { lo: 0.7, hi: 0.95 }, CapacityConvention::HalfMass).unwrap();
    assert!(inner.value <= outer.value);
}

#[test]
fn spectral_estimates_stay_below_closed_forms() {
    let w = Weight::cauchy_optimal();
    for alpha in [1.5, 2.0, 5.0] {
        let m = Measure::cauchy(alpha, 1).unwrap();
        let est = spectral_constant(&m, Some(&w)).unwrap();
        assert!(est.value <= cauchy_weighted_constant(alpha, 1).unwrap().value + est.error);
    }
}

/// Sample variance and `Ent(f^2)` with delta-method standard errors.
fn monte_carlo(xs: &[f64], f: &TestFunction) -> ((f64, f64), (f64, f64)) {
    let n = xs.len() as f64;
    let v: Vec<f64> = xs.iter().map(|&x| f.value(x)).collect();
    let mean = v.iter().sum::<f64>() / n;
    let c2: Vec<f64> = v.iter().map(|y| (y - mean).powi(2)).collect();
    let var = c2.iter().sum::<f64>() / (n - 1.0);
    let var_se = (c2.iter().map(|c| (c - var).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();

    let g: Vec<f64> = v.iter().map(|y| y * y).collect();
    let eg = g.iter().sum::<f64>() / n;
    let glg = |g: f64| if g > 0.0 { g * g.ln() } else { 0.0 };
    let ent = g.iter().map(|&x| glg(x)).sum::<f64>() / n - eg * eg.ln();
    let y: Vec<f64> = g.iter().map(|&x| glg(x) - (eg.ln() + 1.0) * x).collect();
    let ym = y.iter().sum::<f64>() / n;
    let ent_se = (y.iter().map(|t| (t - ym).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    ((var, var_se), (ent, ent_se))
}

#[test]
fn quadrature_moments_agree_with_monte_carlo() {
    let cases = [
        (Measure::gaussian(1).unwrap(), TestFunction::Arctan { center: 0.3, scale: 1.0 }),
        (Measure::gaussian(1).unwrap(), TestFunction::Tilt { lambda: 1.0, cap: 3.0 }),
        (Measure::cauchy(2.0, 1).unwrap(), TestFunction::Arctan { center: 0.0, scale: 2.0 }),
        (Measure::cauchy(2.0, 1).unwrap(), TestFunction::TailRamp { r: 1.0, delta: 2.0 }),
        (Measure::cauchy(1.0, 1).unwrap(), TestFunction::Threshold { r: 0.5, delta: 5.0 }),
        (Measure::subbotin(0.5, 1).unwrap(), TestFunction::Arctan { center: 1.0, scale: 3.0 }),
    ];
    for (i, (m, f)) in cases.iter().enumerate() {
        let mo = moments(m, f, None, &grid(m, 257).unwrap(), None).unwrap();
        let xs = m.sample_1d(1_000_000, 100 + i as u64).unwrap();
        let ((var, var_se), (ent, ent_se)) = monte_carlo(&xs, f);
        assert!((mo.var - var).abs() <= 4.0 * var_se, "{:?} {}: Var {} vs {var} +- {var_se}", m.spec(), f.id(), mo.var);
        assert!((mo.ent - ent).abs() <= 4.0 * ent_se, "{:?} {}: Ent {} vs {ent} +- {ent_se}", m.spec(), f.id(), mo.ent);
    }
}
