use fiq_core::lyapunov::*;
use fiq_core::quad::{integrate_with_breaks, QuadOptions};
use fiq_core::{Dual2, Expr, Field, Measure, Potential};
use proptest::prelude::*;

/// Smooth bump `exp(-1/(1-u^2)) (a + b u)` on `|x - c| < w`.
fn bump(c: f64, w: f64, a: f64, b: f64) -> Field {
    Field::new("bump", move |x: Dual2| {
        let u = (x - c) / w;
        if u.v.abs() >= 1.0 {
            return Dual2::constant(0.0);
        }
        let one = Dual2::constant(1.0);
        (-(one / (one - u * u))).exp() * (u * b + a)
    })
}

fn integral(m: &Measure, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let opts = QuadOptions { rel_tol: 1e-11, abs_tol: 1e-300, max_intervals: 400 };
    integrate_with_breaks(|t| f(t) * m.line_density(t), lo, hi, &[], opts).value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn weighted_generator_is_symmetric(
        c1 in -3.0f64..3.0, w1 in 0.5f64..3.0, a1 in -2.0f64..2.0, b1 in -2.0f64..2.0,
        c2 in -3.0f64..3.0, w2 in 0.5f64..3.0, a2 in -2.0f64..2.0, b2 in -2.0f64..2.0,
    ) {
        let m = Measure::cauchy(3.0, 1).unwrap();
        let gen = WeightedGenerator::new(Field::new("1+x^2", |x| x * x + 1.0), &m).unwrap();
        let (f, g) = (bump(c1, w1, a1, b1), bump(c2, w2, a2, b2));
        let lo = (c1 - w1).min(c2 - w2);
        let hi = (c1 + w1).max(c2 + w2);
        let glf = integral(&m, lo, hi, |x| g.value(x) * gen.apply(&f, x));
        let flg = integral(&m, lo, hi, |x| f.value(x) * gen.apply(&g, x));
        let energy = -integral(&m, lo, hi, |x| (1.0 + x * x) * f.at(x).d1 * g.at(x).d1);
        let scale = 1.0 + energy.abs();
        prop_assert!((glf - flg).abs() <= 1e-6 * scale, "{glf} vs {flg}");
        prop_assert!((glf - energy).abs() <= 1e-6 * scale, "{glf} vs {energy}");
    }
}

proptest! {
    #[test]
    fn unit_weight_is_the_plain_operator(
        which in 0usize..4,
        src in prop::sample::select(vec!["x", "x^3 - x", "ln(1+x^2)", "exp(-x^2)", "sqrt(1+x^2)^3"]),
        x in -20.0f64..20.0,
    ) {
        let m = match which {
            0 => Measure::cauchy(2.0, 1),
            1 => Measure::gaussian(1),
            2 => Measure::subbotin(0.5, 1),
            _ => Measure::custom(Potential::parse("x^4/4").unwrap(), 1),
        }
        .unwrap();
        let f = Field::from_expr(Expr::parse(src).unwrap());
        let unit = WeightedGenerator::new(Field::constant(1.0), &m).unwrap();
        let plain = WeightedGenerator::plain(&m).unwrap();
        let a = apply_generator(&unit, &f, x);
        let b = apply_generator(&plain, &f, x);
        let d = f.at(x);
        let hand = d.d2 - m.v_dual(x).d1 * d.d1;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        prop_assert!((a - hand).abs() <= 1e-12 * (1.0 + hand.abs()), "{a} vs {hand}");
    }

    #[test]
    fn verification_is_monotone_in_b(which in 0usize..3, b0 in 0.0f64..3.0, k in 1.0f64..10.0) {
        let m = match which {
            0 => Measure::cauchy(2.0, 1),
            1 => Measure::subbotin(0.5, 1),
            _ => Measure::cauchy(1.0, 3),
        }
        .unwrap();
        let mut cert = certificate_for(&m).unwrap();
        let base = cert.b;
        cert.b = base * b0;
        let low = verify_certificate(&cert, &m, DEFAULT_TOL).unwrap();
        cert.b = base * b0 * k + 0.1;
        let high = verify_certificate(&cert, &m, DEFAULT_TOL).unwrap();
        prop_assert!(!low.verified() || high.verified());
    }
}

#[test]
fn zero_perturbation_returns_phi() {
    for m in [Measure::cauchy(2.0, 1).unwrap(), Measure::subbotin(0.5, 1).unwrap(), Measure::cauchy(3.0, 3).unwrap()] {
        let cert = certificate_for(&m).unwrap();
        for u in [Potential::zero(), Potential::constant(2.0), Potential::half_log_sq(0.0)] {
            let d = perturbed_drift(&cert, &u, &m).unwrap();
            for x in [0.0, 0.5, 3.0, 70.0, 1e4] {
                assert_eq!(d.phi_u.value(x).to_bits(), cert.phi.value(x).to_bits());
            }
        }
    }
}
