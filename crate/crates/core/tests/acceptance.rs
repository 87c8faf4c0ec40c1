//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p fiq-core --test acceptance`.

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use fiq_core::dynamics::{check_decay, simulate, SdeConfig, SdeFields};
use fiq_core::empirical::*;
use fiq_core::lyapunov::{apply_generator, cauchy_phi_certificate, certificate_for, verified, WeightedGenerator};
use fiq_core::rates::*;
use fiq_core::weights::*;
use fiq_core::{Error, Field, Measure, Potential, RateFunction, RateKind, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

const S_GRID: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
const WP: RateKind = RateKind::WeakPoincare;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T, D: std::fmt::Debug>(r: std::result::Result<T, D>) -> std::result::Result<T, String> {
    r.map_err(|d| format!("{d:?}"))
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> std::result::Result<(), String> {
    ensure((got - want).abs() <= tol * want.abs().max(1.0), format!("{what}: got {got:.17e}, want {want:.17e}"))
}

fn certified_rate(m: &Measure) -> std::result::Result<RateFunction, String> {
    let cert = e(certificate_for(m))?;
    e(rate_from_lyapunov(&cert, m))
}

fn interval_gap() -> Check {
    let m = e(Measure::uniform_interval(-1.0, 1.0))?;
    let t = Instant::now();
    let est = e(spectral_constant_with(&m, None, 8192))?;
    let secs = t.elapsed().as_secs_f64();
    let want = 4.0 / (PI * PI);
    ensure((est.value - want).abs() <= 1e-4, format!("C = {:.10}, want {want:.10}", est.value))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("C = {:.10} (4/pi^2 = {want:.10}) in {secs:.2} s", est.value))
}

fn gaussian_gap() -> Check {
    let m = e(Measure::gaussian(1))?;
    let est = e(spectral_constant(&m, None))?;
    ensure((est.value - 1.0).abs() <= 1e-3, format!("C = {}", est.value))?;
    let q = e(entropy_quotient(&m, None))?;
    ensure(q.value >= 2.0 - 1e-2, format!("entropy quotient {}", q.value))?;
    Ok(format!("C = {:.8}, entropy quotient {:.6}", est.value, q.value))
}

fn hug_domination() -> Check {
    let t = Instant::now();
    let w = Weight::cauchy_optimal();
    let mut parts = vec![];
    let cases = [(1, 1.0), (1, 2.0), (1, 3.0), (1, 4.0), (1, 8.0), (3, 3.0), (3, 5.0), (3, 7.0)];
    for (d, alpha) in cases {
        let m = e(Measure::cauchy(alpha, d))?;
        let est = e(spectral_constant(&m, Some(&w)))?;
        let bound = e(cauchy_weighted_constant(alpha, d))?.value;
        ensure(est.value <= bound + est.error, format!("d={d} alpha={alpha}: {} > {bound} + {}", est.value, est.error))?;
        parts.push(format!("d{d}a{alpha}: {:.4}<={:.4}", est.value, bound));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(format!("{} in {secs:.1} s", parts.join(" ")))
}

fn converse_domination() -> Check {
    let m = e(Measure::cauchy(5.0, 3))?;
    let est = e(converse_quotient(&m, &Weight::cauchy_optimal()))?;
    ensure(est.value <= 0.125 + est.error, format!("{} > 1/8 + {}", est.value, est.error))?;
    Ok(format!("converse quotient {:.12} (error {:.1e}) <= 1/8", est.value, est.error))
}

fn weak_rate_slopes() -> Check {
    let mut parts = vec![];
    for alpha in [1.0, 2.0, 4.0] {
        let m = e(Measure::cauchy(alpha, 1))?;
        let slope = certified_rate(&m)?.loglog_slope(1e-6, 1e-3, 32);
        ensure((slope + 2.0 / alpha).abs() <= 0.1, format!("alpha={alpha}: slope {slope}"))?;
        parts.push(format!("a{alpha}: {slope:.4}"));
    }
    let m = e(Measure::subbotin(0.5, 1))?;
    let beta = certified_rate(&m)?;
    let s = log_grid(1e-6, 1e-3, 32);
    let x: Vec<f64> = s.iter().map(|v| (1.0 / v).ln().powi(2)).collect();
    let y: Vec<f64> = s.iter().map(|&v| beta.eval(v)).collect();
    let (c, _, r2) = linear_fit(&x, &y);
    ensure(r2 >= 0.99 && c > 0.0, format!("subbotin fit c = {c}, R^2 = {r2}"))?;
    parts.push(format!("subbotin ln^2 fit R^2 = {r2:.5}"));
    Ok(parts.join(", "))
}

fn perturbation_slopes() -> Check {
    let mut parts = vec![];
    for (alpha, alpha_p) in [(1.0, 1.0), (2.0, 2.0)] {
        let nu = e(Measure::cauchy(alpha, 1))?;
        let cert = e(certificate_for(&nu))?;
        let u = Potential::half_log_sq(alpha_p);
        let beta = e(rate_from_perturbed_lyapunov(&cert, &u, &nu))?;
        let slope = beta.loglog_slope(1e-6, 1e-3, 32);
        let want = -2.0 / (alpha + alpha_p);
        ensure((slope - want).abs() <= 0.15, format!("({alpha},{alpha_p}): slope {slope}, want {want}"))?;
        parts.push(format!("({alpha},{alpha_p}): {slope:.4}"));
    }
    Ok(parts.join(", "))
}

fn check_non_increasing(emp: &[EmpiricalRate]) -> std::result::Result<(), String> {
    // s decreases along the grid, so beta_emp must not decrease
    for w in emp.windows(2) {
        ensure(w[1].value >= w[0].value * (1.0 - 1e-12), format!("beta_emp rises in s between {} and {}", w[1].s, w[0].s))?;
    }
    Ok(())
}

fn weak_poincare_suite() -> Check {
    let mut parts = vec![];
    for m in [e(Measure::cauchy(2.0, 1))?, e(Measure::subbotin(0.5, 1))?] {
        let beta = certified_rate(&m)?;
        let family = e(adversarial_family(&m))?;
        let reps = e(verify_weak_poincare(&m, &beta, &S_GRID, &family))?;
        let fails = reps.iter().filter(|r| !r.pass).count();
        ensure(fails == 0, format!("{fails} of {} reports fail", reps.len()))?;
        let emp = e(beta_empirical(&m, &S_GRID, &family))?;
        for r in &emp {
            ensure(r.value <= beta.eval(r.s), format!("beta_emp({}) = {} > beta = {}", r.s, r.value, beta.eval(r.s)))?;
        }
        check_non_increasing(&emp)?;
        parts.push(format!("{} reports, 0 failures", reps.len()));
    }
    Ok(parts.join("; "))
}

fn perturbed_weak_poincare() -> Check {
    let nu = e(Measure::cauchy(2.0, 1))?;
    let u = Potential::log_abs(1.0);
    let mu = e(Measure::perturbed(&nu, u.clone()))?;
    let b_nu = certified_rate(&nu)?;
    let beta = e(perturb_rate_lower_bounded(&b_nu, &nu, &u))?;
    let family = e(adversarial_family(&mu))?;
    let reps = e(verify_weak_poincare(&mu, &beta, &S_GRID, &family))?;
    let fails = reps.iter().filter(|r| !r.pass).count();
    ensure(fails == 0, format!("{fails} of {} reports fail", reps.len()))?;
    let zero = e(perturb_rate_lower_bounded(&b_nu, &nu, &Potential::zero()))?;
    for s in log_grid(1e-8, 0.25, 40) {
        ensure(zero.eval(s) == 2.0 * b_nu.eval(s / 7.0), format!("U = 0 transform differs at s = {s}"))?;
    }
    Ok(format!("{} reports, 0 failures; U = 0 gives 2 beta(s/7) exactly", reps.len()))
}

fn capacity_chain() -> Check {
    let m = e(Measure::uniform_interval(0.0, 1.0))?;
    let c = e(estimate_capacity(&m, &CapacitySet::Interval { lo: 0.75, hi: 1.0 }, CapacityConvention::HalfMass))?;
    ensure((c.value - 4.0).abs() <= 0.08, format!("Cap([3/4,1]) = {}", c.value))?;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = f64::INFINITY;
    for m in [e(Measure::cauchy(2.0, 1))?, e(Measure::subbotin(0.5, 1))?] {
        let beta = certified_rate(&m)?;
        for _ in 0..10 {
            let center: f64 = rng.random_range(-1.0..1.0);
            let mass = 10f64.powf(rng.random_range(-5.0..-0.4));
            let radius = e(m.tail_inverse(mass, center))?;
            let set = CapacitySet::Outside { center, radius };
            let cap = e(estimate_capacity(&m, &set, CapacityConvention::HalfMass))?;
            let lb = e(capacity_lower_bound(&beta, cap.set_mass))?;
            ensure(cap.value >= lb, format!("{set:?}: Cap {} < {lb}", cap.value))?;
            worst = worst.min(cap.value / lb);
        }
    }
    Ok(format!("Cap([3/4,1]) = {:.5}; 20 sets, smallest Cap/bound = {worst:.3}", c.value))
}

fn weight_construction() -> Check {
    let m = e(Measure::cauchy(4.0, 1))?;
    let beta = certified_rate(&m)?;
    let w = e(explicit_weight_from_rate(&beta, &m, 0.0))?;
    let c = e(converse_weighted_from_capacity(&w, 1.0))?;
    ensure(c.value == 16.0, format!("converse constant {}", c.value))?;
    let q = e(converse_quotient(&m, &c.weight))?;
    ensure(q.value <= 16.0, format!("empirical converse quotient {}", q.value))?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..=600 {
        let x = -30.0 + 0.1 * i as f64;
        let r = 1.0 / w.omega2(x) / (1.0 + x * x);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    ensure(lo > 0.0 && hi / lo <= 1e3, format!("c2/c1 = {}", hi / lo))?;
    Ok(format!("constant 16, empirical {:.3e}, c1 = {lo:.3e}, c2 = {hi:.3e}, c2/c1 = {:.3}", q.value, hi / lo))
}

fn langevin_decay() -> Check {
    let t = Instant::now();
    let m = e(Measure::cauchy(4.0, 1))?;
    let w = Weight::cauchy_optimal();
    let fields = e(SdeFields::new(&m, &w, false))?;
    let gen = e(WeightedGenerator::new(w.omega2_field(), &m))?;
    let id = Field::new("x", |x| x);
    for x in [-40.0, -2.5, -0.3, 0.0, 0.8, 3.0, 250.0] {
        let want = -3.0 * x;
        ensure((fields.drift(x) - want).abs() <= 1e-10 * (1.0 + x.abs()), format!("drift at {x}: {}", fields.drift(x)))?;
        let lf = apply_generator(&gen, &id, x);
        ensure((lf - want).abs() <= 1e-10 * (1.0 + x.abs()), format!("L x at {x}: {lf}"))?;
    }
    let cfg = SdeConfig { outer: 4096, inner: 64, dt: 1e-3, horizon: 1.0, ..SdeConfig::default() };
    let f = Field::new("atan(x)", |x| x.atan());
    let traj = e(simulate(&m, &w, &f, &cfg))?;
    let chk = e(check_decay(&traj, 1.0 / 3.0))?;
    ensure(chk.pass, format!("decay check fails: excess {} at t = {}", chk.worst_excess, chk.worst_time))?;
    let g = e(Measure::gaussian(1))?;
    let ou = e(simulate(&g, &Weight::constant(1.0), &id, &cfg))?;
    ensure((ou.rate - 2.0).abs() <= 0.2, format!("OU rate {}", ou.rate))?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.0} s"))?;
    Ok(format!("drift = -3x; fitted rate {:.3} +- {:.3} vs 2/C = 6; OU rate {:.4}; {secs:.0} s", traj.rate, traj.rate_ci, ou.rate))
}

fn algebra_exactness() -> Check {
    const TOL: f64 = 1e-12;
    let b = e(RateFunction::power(1.0, 1.0, WP, "1/s"))?;
    let b2 = e(RateFunction::power(1.0, 2.0, WP, "1/s^2"))?;
    let mut n = 0;
    let mut c = |got: f64, want: f64, what: &str| -> std::result::Result<(), String> {
        n += 1;
        close(got, want, TOL, what)
    };

    c(e(builtin_rate(BuiltinFamily::Cauchy { alpha: 2.0 }, 1.0))?.eval(0.01), 100.0, "builtin cauchy(2)")?;
    c(e(builtin_rate(BuiltinFamily::Subbotin { alpha: 0.5 }, 1.0))?.eval((-1.0f64).exp()), 1.0, "builtin subbotin")?;
    c(e(builtin_rate(BuiltinFamily::Cauchy { alpha: 4.0 }, 3.0))?.eval(0.25), 6.0, "builtin cauchy(4)")?;

    c(e(rate_scale(&b, 2.0))?.eval(0.1), 40.0, "rate_scale")?;
    for s in [1e-6, 0.1, 0.25] {
        c(e(rate_scale(&b, 1.0))?.eval(s), b.eval(s), "rate_scale identity")?;
        c(e(rate_scale(&b, -1.0))?.eval(s), b.eval(s), "rate_scale sign")?;
        c(e(rate_tensorize(std::slice::from_ref(&b)))?.eval(s), b.eval(s), "tensorize n=1")?;
        c(e(wls_convolve(std::slice::from_ref(&b)))?.eval(s), b.eval(s), "wls convolve n=1")?;
    }
    c(e(rate_tensorize(&[b.clone(), b.clone(), b.clone()]))?.eval(0.1), 30.0, "tensorize")?;
    c(e(rate_tensorize(&[b.clone(), b2.clone()]))?.eval(0.2), 100.0, "tensorize max")?;
    c(rate_convolve(&b, &b).eval(0.1), 40.0, "convolve")?;
    c(rate_convolve(&b, &b2).eval(0.1), 420.0, "convolve mixed")?;
    let dirac = e(RateFunction::constant(0.0, WP, "dirac"))?;
    c(rate_convolve(&b, &dirac).eval(0.1), b.eval(0.05), "convolve dirac")?;
    c(e(wls_convolve(&[b.clone(), b.clone()]))?.eval(0.1), 40.0, "wls convolve")?;

    let th = concentration_profile(&b);
    c(th.theta(8.0 * 4f64.ln()), 0.25, "theta boundary")?;
    let thc = concentration_profile(&e(RateFunction::constant(4.0, WP, "c"))?);
    c(thc.theta(30.0), (-30.0f64 / 8.0).exp(), "theta constant")?;

    c(e(perturb_rate_holley_stroock(&b, 2f64.ln(), -(2f64.ln())))?.eval(0.1), 40.0, "holley-stroock")?;
    c(e(perturb_rate_holley_stroock(&b, 0.0, 0.0))?.eval(0.1), b.eval(0.1), "holley-stroock identity")?;
    let nu = e(Measure::cauchy(2.0, 1))?;
    c(e(perturb_rate_lower_bounded(&b, &nu, &Potential::zero()))?.eval(1e-3), 2.0 * b.eval(1e-3 / 7.0), "lower bounded U=0")?;

    c(e(p_weak_rate(&b, 4.0))?.eval(0.1), 3200.0, "p-weak p=4")?;
    c(e(p_weak_rate(&b, 3.0))?.eval(0.3), 128.0 / 0.3f64.powi(3), "p-weak p=3")?;
    let w1 = e(wls_from_wp(&b, 1.0, 1.0, 0.25))?;
    c(w1.eval((-1.0f64).exp()), E, "wls_from_wp")?;
    c(e(wls_from_wp(&b, 1.0, 2.0, 0.25))?.eval(0.01), 2.0 * w1.eval(0.01), "wls c' linear")?;
    let k3 = e(RateFunction::constant(3.0, WP, "c"))?;
    c(e(wls_from_wp(&k3, 1.0, 1.0, 0.25))?.eval(0.01), 3.0 * 100f64.ln(), "wls constant")?;
    ensure(matches!(wp_from_wls(&k3), Err(Error::NotApplicable(_))), "wp_from_wls accepted a constant")?;

    let direct = |v: f64| WeightedConstant::new(Weight::cauchy_optimal(), v, fiq_core::ConstantKind::Direct, "t");
    c(e(converse_from_direct(&e(direct(0.25))?, 1.0))?.value, 1.0, "trick 1/4")?;
    c(e(converse_from_direct(&e(direct(1.0 / 9.0))?, 1.0))?.value, 0.25, "trick 1/9")?;
    ensure(matches!(converse_from_direct(&e(direct(1.0))?, 1.0), Err(Error::TrickInapplicable { .. })), "trick at C = 1")?;
    c(e(cauchy_converse_constant(3.0, 1))?.value, 0.25, "converse alpha=3")?;
    let two_thirds: f64 = 2.0 / 3.0;
    c(e(cauchy_converse_constant(2.5, 1))?.value, two_thirds / (1.0 - two_thirds.sqrt()).powi(2), "converse alpha=2.5")?;

    let (a, k, eps) = (1.0, 0.5, 0.25);
    let lc = e(cauchy_lyapunov_constants(a, 1, k, eps))?;
    let inner = 1.5 + 0.25 * 6f64.powf(0.25);
    let ball = 4.0 / (PI * PI) * 5.0 * 6.0;
    c(lc.radius, 5f64.sqrt(), "lyapunov R")?;
    c(lc.converse, (0.4 + inner * ball) / 0.25, "lyapunov converse")?;
    let lin = e(verified(e(cauchy_phi_certificate(a, 1, k, eps))?, &nu))?;
    ensure(lin.is_verified(), "phi certificate not verified")?;

    c(ball_poincare_value(3, 2.0, 0.0), 10.0 / 3.0, "ball d=3")?;
    c(ball_poincare_value(3, 2.0, 2f64.ln()), 20.0 / 3.0, "ball osc")?;

    let ul = Potential::log_abs(1.0);
    c(e(perturb_bounded(&e(direct(2.0))?, &ul, -(3f64.ln()), None))?.value, 6.0, "bounded")?;
    c(e(perturb_bounded(&e(direct(2.0))?, &ul, 0.0, Some(0.0)))?.value, 2.0, "bounded osc 0")?;
    let ls = e(WeightedConstant::new(Weight::cauchy_ls(), 1.0, fiq_core::ConstantKind::LogSobolev, "ls"))?;
    c(e(perturb_bounded(&ls, &ul, 0.0, Some(2f64.ln())))?.value, 2.0, "bounded LS")?;
    c(e(perturb_weighted_lipschitz(&e(direct(1.0))?, 1.0, Some(1.0)))?.value, 4.0, "lipschitz")?;
    c(e(perturb_weighted_lipschitz(&e(direct(1.5))?, 0.0, None))?.value, 1.5, "lipschitz sup 0")?;
    c(e(perturb_weighted_generator(&e(direct(1.5))?, 0.0))?.value, 1.5, "generator 0")?;
    c(e(perturb_weighted_generator(&e(direct(1.0))?, 1.0))?.value, 2.0, "generator 1")?;
    c(e(weighted_lyapunov_constant(2.0, 1.0, 3.0))?, 4.0, "weighted lyapunov")?;
    c(e(weighted_lyapunov_constant(2.0, 0.0, 3.0))?, 2.0, "weighted lyapunov theta'=0")?;
    c(ls_lipschitz_value(1.0, 1.0, 0.5, 1.0, E, 2.0, 1.0, 1.0), 28.0 + 4.0 * E, "LS lipschitz")?;

    c(e(capacity_lower_bound(&e(RateFunction::constant(10.0, WP, "c"))?, 0.5))?, 1.0 / 80.0, "capacity bound")?;
    c(e(capacity_lower_bound(&b, 0.01))?, 1e-4 / 16.0, "capacity bound 1/s")?;
    let w = e(explicit_weight_from_rate(&b, &nu, 0.0))?;
    for x in [0.0, 0.5, 3.0, 40.0] {
        c(w.omega2(x), e(nu.tail(x, 0.0))? / 16.0, "explicit weight")?;
    }
    c(e(converse_weighted_from_capacity(&w, 0.5))?.value, 8.0, "16 C")?;

    match e(weighted_constant_algebra(AlgebraOp::Scale(3.0), &[e(direct(2.0))?]))? {
        AlgebraResult::Constant(s) => {
            c(s.value, 18.0, "algebra scale")?;
            c(s.weight.value(3.0), 2f64.sqrt(), "algebra scaled weight")?;
        }
        _ => return Err("scale did not return a constant".into()),
    }
    match e(weighted_constant_algebra(AlgebraOp::Translate(1.5), &[e(direct(2.0))?]))? {
        AlgebraResult::Constant(s) => c(s.value, 2.0, "algebra translate")?,
        _ => return Err("translate did not return a constant".into()),
    }

    let g = e(Measure::gaussian(1))?;
    let ou = e(WeightedGenerator::plain(&g))?;
    c(apply_generator(&ou, &Field::new("x", |x| x), 2.0), -2.0, "OU generator")?;
    c(apply_generator(&ou, &Field::constant(3.0), 1.3), 0.0, "generator of a constant")?;
    Ok(format!("{n} hand values reproduced to {TOL:e}; wp_from_wls rejects constants"))
}

fn seam_continuity() -> Check {
    let mut parts = vec![];
    for (d, seam) in [(1usize, 2.0f64), (3, 4.0), (3, 5.0)] {
        let branches = hug_branches(d);
        let i = branches.iter().position(|b| b.hi == seam).ok_or_else(|| format!("no branch ends at {seam} for d = {d}"))?;
        let (l, r) = (branches[i].value(seam, d), branches[i + 1].value(seam, d));
        ensure((l - r).abs() <= 1e-12, format!("d={d} seam {seam}: {l} vs {r}"))?;
        let below = e(cauchy_weighted_constant(seam * (1.0 - 1e-15), d))?.value;
        let above = e(cauchy_weighted_constant(seam * (1.0 + 1e-15), d))?.value;
        ensure((below - above).abs() <= 1e-12, format!("d={d} seam {seam}: jump {}", below - above))?;
        parts.push(format!("d{d}@{seam}: {l:.15}"));
    }
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 13] = [
        ("interval spectral gap", interval_gap),
        ("gaussian gap and entropy", gaussian_gap),
        ("weighted bound domination", hug_domination),
        ("converse domination", converse_domination),
        ("weak-rate slopes", weak_rate_slopes),
        ("perturbation slopes", perturbation_slopes),
        ("weak Poincare suite", weak_poincare_suite),
        ("perturbed weak Poincare", perturbed_weak_poincare),
        ("capacity chain", capacity_chain),
        ("weight construction", weight_construction),
        ("Langevin decay", langevin_decay),
        ("algebra exactness", algebra_exactness),
        ("branch seams", seam_continuity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
