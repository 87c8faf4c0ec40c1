//! Subcommands. Each returns the process exit code: 0 on success, 2 when
//! a mathematical check failed (outputs are still written).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fiq_core::dynamics::{self, SdeConfig};
use fiq_core::empirical::{self, CapacityConvention, CapacitySet};
use fiq_core::rates::{self, BuiltinFamily};
use fiq_core::weights;
use fiq_core::{lyapunov, Expr, Field, RateFunction, RateKind};
use serde::Serialize;

use crate::io::{rate_csv, read_input, read_rate_csv, RunManifest};
use crate::spec::{parse_measure, parse_weight, ParsedMeasure};

#[derive(Parser, Debug)]
#[command(name = "fiq", version, about = "Weak, weighted and log-Sobolev functional inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate a weak Poincare rate.
    Rate(RateArgs),
    /// Weighted Poincare constants and constructed weights.
    Weight(WeightArgs),
    /// Transform a rate under a perturbation `e^{-U}`.
    Perturb(PerturbArgs),
    /// Check an inequality on the adversarial test-function family.
    Verify(VerifyArgs),
    /// Optimal (converse) weighted Poincare constant by discretization.
    Spectrum(SpectrumArgs),
    /// Capacity of a set under the half-mass convention.
    Capacity(CapacityArgs),
    /// Langevin variance decay under the weighted generator.
    Simulate(SimulateArgs),
}

/// `--measure` takes a spec such as `"family=cauchy alpha=2 d=1"` or
/// `@file` with one `key=value` per line.
fn load_measure(arg: &str, hashes: &mut BTreeMap<String, String>) -> Result<ParsedMeasure> {
    match arg.strip_prefix('@') {
        Some(p) => parse_measure(&read_input(Path::new(p), "measure", hashes)?),
        None => parse_measure(arg),
    }
}

fn load_rate(path: &Path, kind: RateKind, hashes: &mut BTreeMap<String, String>) -> Result<RateFunction> {
    let text = read_input(path, "beta", hashes)?;
    read_rate_csv(&text, kind, &format!("table read from {}", path.display()))
}

fn s_values(list: &Option<String>) -> Result<Vec<f64>> {
    match list {
        None => Ok(vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]),
        Some(s) => s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad s value {v:?}"))).collect(),
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RateMethod {
    /// From the builtin drift certificate (perturbed specs use the base
    /// certificate).
    Lyapunov,
    /// Closed-form family rate with prefactor `--c`.
    Builtin,
}

#[derive(Args, Debug, Serialize)]
pub struct RateArgs {
    #[arg(long)]
    pub measure: String,
    #[arg(long, value_enum, default_value = "lyapunov")]
    pub method: RateMethod,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn rate(a: &RateArgs) -> Result<u8> {
    let mut man = RunManifest::new("rate", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let beta = match a.method {
        RateMethod::Lyapunov => {
            let cert = lyapunov::certificate_for(&m.base)?;
            match &m.perturb {
                Some(u) => rates::rate_from_perturbed_lyapunov(&cert, u, &m.base)?,
                None => rates::rate_from_lyapunov(&cert, &m.base)?,
            }
        }
        RateMethod::Builtin => {
            let c = a.c.ok_or_else(|| anyhow!("--method builtin needs --c"))?;
            let alpha = m.alpha().ok_or_else(|| anyhow!("builtin rates need alpha"))?;
            let fam = match m.family() {
                "cauchy" => BuiltinFamily::Cauchy { alpha },
                "subbotin" => BuiltinFamily::Subbotin { alpha },
                f => bail!("no builtin rate for family {f}"),
            };
            rates::builtin_rate(fam, c)?
        }
    };
    man.emit(&a.out, rate_csv(&beta, &rates::s_grid()).as_bytes())?;
    man.finish(&a.out)?;
    Ok(0)
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum WeightConstruction {
    /// Weighted Poincare constant of a cauchy measure with `sqrt(1+|x|^2)`.
    Hug,
    /// Converse constant of a cauchy measure.
    Converse,
    /// Weight built from a rate (`--beta`) and its converse constant `16 C`.
    Explicit,
}

#[derive(Args, Debug, Serialize)]
pub struct WeightArgs {
    #[arg(long)]
    pub measure: String,
    #[arg(long, value_enum)]
    pub construct: WeightConstruction,
    /// Rate CSV for `explicit`.
    #[arg(long)]
    pub beta: Option<PathBuf>,
    /// Constant `C` of the capacity inequality for `explicit`.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn cauchy_params(m: &ParsedMeasure) -> Result<(f64, usize)> {
    if m.family() != "cauchy" || m.perturb.is_some() {
        bail!("this construction needs an unperturbed cauchy measure");
    }
    Ok((m.alpha().unwrap(), m.dim()))
}

pub fn weight(a: &WeightArgs) -> Result<u8> {
    let mut man = RunManifest::new("weight", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let c = match a.construct {
        WeightConstruction::Hug => {
            let (al, d) = cauchy_params(&m)?;
            weights::cauchy_weighted_constant(al, d)?
        }
        WeightConstruction::Converse => {
            let (al, d) = cauchy_params(&m)?;
            weights::cauchy_converse_constant(al, d)?
        }
        WeightConstruction::Explicit => {
            let p = a.beta.as_ref().ok_or_else(|| anyhow!("--construct explicit needs --beta"))?;
            let beta = load_rate(p, RateKind::WeakPoincare, &mut man.input_hashes)?;
            let w = weights::explicit_weight_from_rate(&beta, &m.measure, 0.0)?;
            weights::converse_weighted_from_capacity(&w, a.c)?
        }
    };
    let mut text = serde_json::to_string_pretty(&c.data())?;
    text.push('\n');
    man.emit(&a.out, text.as_bytes())?;
    man.finish(&a.out)?;
    println!("{:.16e}", c.value);
    Ok(0)
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PerturbMethod {
    /// `2 e^{Osc_B U} beta(e^{m_U} s / 7)` for `U` bounded below.
    LowerBounded,
    /// Bounded perturbation: `e^{Osc U}` times the rescaled rate.
    HolleyStroock,
}

#[derive(Args, Debug, Serialize)]
pub struct PerturbArgs {
    /// Reference measure `nu`.
    #[arg(long)]
    pub measure: String,
    /// Perturbation `U` as an expression in `x`.
    #[arg(long)]
    pub u: String,
    /// Rate of `nu`.
    #[arg(long)]
    pub beta: PathBuf,
    #[arg(long, value_enum, default_value = "lower_bounded")]
    pub method: PerturbMethod,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn perturb(a: &PerturbArgs) -> Result<u8> {
    let mut man = RunManifest::new("perturb", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let u = fiq_core::Potential::parse(&a.u)?;
    let beta = load_rate(&a.beta, RateKind::WeakPoincare, &mut man.input_hashes)?;
    let out = match a.method {
        PerturbMethod::LowerBounded => rates::perturb_rate_lower_bounded(&beta, &m.measure, &u)?,
        PerturbMethod::HolleyStroock => {
            let osc = u.osc_total()?;
            let lb = u.lower_bound().ok_or_else(|| anyhow!("U must be bounded"))?;
            rates::perturb_rate_holley_stroock(&beta, osc, lb.value)?
        }
    };
    man.emit(&a.out, rate_csv(&out, &rates::s_grid()).as_bytes())?;
    man.finish(&a.out)?;
    Ok(0)
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum InequalityArg {
    WeakPoincare,
    WeakLogSobolev,
    PWeak,
    WeightedPoincare,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub inequality: InequalityArg,
    #[arg(long)]
    pub measure: String,
    /// Rate CSV (weak forms; for `p_weak` the weak Poincare rate).
    #[arg(long)]
    pub beta: Option<PathBuf>,
    /// Comma-separated `s` values.
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    /// Weight and constant for `weighted_poincare`.
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long)]
    pub constant: Option<f64>,
    /// JSON-lines reports.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV summary (defaults to `<out>.summary.csv`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn verify(a: &VerifyArgs) -> Result<u8> {
    let mut man = RunManifest::new("verify", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let fam = empirical::adversarial_family(&m.measure)?;
    let s = s_values(&a.s)?;
    let kind = if a.inequality == InequalityArg::WeakLogSobolev { RateKind::WeakLogSobolev } else { RateKind::WeakPoincare };
    let beta = a.beta.as_ref().map(|p| load_rate(p, kind, &mut man.input_hashes)).transpose()?;
    let need_beta = |_kind| beta.clone().ok_or_else(|| anyhow!("--inequality {:?} needs --beta", a.inequality));
    let reports = match a.inequality {
        InequalityArg::WeakPoincare => empirical::verify_weak_poincare(&m.measure, &need_beta(RateKind::WeakPoincare)?, &s, &fam)?,
        InequalityArg::WeakLogSobolev => empirical::verify_weak_log_sobolev(&m.measure, &need_beta(RateKind::WeakLogSobolev)?, &s, &fam)?,
        InequalityArg::PWeak => empirical::verify_p_weak_poincare(&m.measure, &need_beta(RateKind::WeakPoincare)?, a.p, &s, &fam)?,
        InequalityArg::WeightedPoincare => {
            let w = parse_weight(a.weight.as_deref().unwrap_or("one"), &m)?;
            let c = a.constant.ok_or_else(|| anyhow!("--inequality weighted_poincare needs --constant"))?;
            empirical::verify_weighted_poincare(&m.measure, &w, c, &fam)?
        }
    };
    let mut buf = vec![];
    empirical::write_jsonl(&reports, &mut buf)?;
    man.emit(&a.out, &buf)?;
    let summary = a.summary.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".summary.csv");
        PathBuf::from(s)
    });
    man.emit(&summary, empirical::summary_csv(&reports).as_bytes())?;
    man.finish(&a.out)?;
    let fails = reports.iter().filter(|r| !r.pass).count();
    println!("{} reports, {} failures", reports.len(), fails);
    Ok(if fails > 0 { 2 } else { 0 })
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub measure: String,
    /// `one`, `cauchy_optimal`, `cauchy_ls`, `subbotin_optimal` or `expr:<w>`.
    #[arg(long, default_value = "one")]
    pub weight: String,
    /// Converse form (`1/w^2` on the variance side).
    #[arg(long)]
    pub converse: bool,
    #[arg(long, default_value_t = empirical::DEFAULT_NODES)]
    pub nodes: usize,
    /// Exit with 2 when the estimate exceeds this bound.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn spectrum(a: &SpectrumArgs) -> Result<u8> {
    let mut man = RunManifest::new("spectrum", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let w = parse_weight(&a.weight, &m)?;
    let est = if a.converse {
        empirical::converse_quotient_with(&m.measure, &w, a.nodes)?
    } else {
        empirical::spectral_constant_with(&m.measure, Some(&w), a.nodes)?
    };
    println!("{:.16e} +- {:.3e}", est.value, est.error);
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&est)?;
        text.push('\n');
        man.emit(out, text.as_bytes())?;
        man.finish(out)?;
    }
    Ok(match a.bound {
        Some(b) if est.value > b + est.error => 2,
        _ => 0,
    })
}

#[derive(Args, Debug, Serialize)]
pub struct CapacityArgs {
    #[arg(long)]
    pub measure: String,
    /// Set `{|x - center| > r}`.
    #[arg(long, conflicts_with = "interval")]
    pub outside: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub center: f64,
    /// Set `[lo,hi]`.
    #[arg(long)]
    pub interval: Option<String>,
    /// Rate CSV: also check `Cap >= a / (4 beta(a/4))`.
    #[arg(long)]
    pub beta: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn capacity(a: &CapacityArgs) -> Result<u8> {
    let mut man = RunManifest::new("capacity", a)?;
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let set = match (&a.outside, &a.interval) {
        (Some(r), None) => CapacitySet::Outside { center: a.center, radius: *r },
        (None, Some(iv)) => {
            let (lo, hi) = iv.split_once(',').ok_or_else(|| anyhow!("--interval takes lo,hi"))?;
            CapacitySet::Interval { lo: lo.trim().parse()?, hi: hi.trim().parse()? }
        }
        _ => bail!("give exactly one of --outside or --interval"),
    };
    let est = empirical::estimate_capacity(&m.measure, &set, CapacityConvention::HalfMass)?;
    println!("{:.16e}", est.value);
    let mut code = 0;
    let mut report = serde_json::json!({ "set": set, "estimate": est });
    if let Some(p) = &a.beta {
        let beta = load_rate(p, RateKind::WeakPoincare, &mut man.input_hashes)?;
        let lb = weights::capacity_lower_bound(&beta, est.set_mass)?;
        let pass = est.value >= lb;
        println!("lower bound {:.16e} {}", lb, if pass { "PASS" } else { "FAIL" });
        report["lower_bound"] = serde_json::json!(lb);
        report["pass"] = serde_json::json!(pass);
        if !pass {
            code = 2;
        }
    }
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        man.emit(out, text.as_bytes())?;
        man.finish(out)?;
    }
    Ok(code)
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub measure: String,
    #[arg(long, default_value = "one")]
    pub weight: String,
    /// Observable `f(x)`.
    #[arg(long, default_value = "x/sqrt(1+x^2)")]
    pub observable: String,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 4096)]
    pub outer: usize,
    #[arg(long, default_value_t = 64)]
    pub inner: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub records: usize,
    #[arg(long, default_value_t = 1.0)]
    pub taming: f64,
    /// Weighted Poincare constant to check the decay against.
    #[arg(long)]
    pub bound: Option<f64>,
    /// CSV `t,var,ci`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    let mut man = RunManifest::new("simulate", a)?;
    man.seeds.push(a.seed);
    let m = load_measure(&a.measure, &mut man.input_hashes)?;
    let w = parse_weight(&a.weight, &m)?;
    let f = Field::from_expr(Expr::parse(&a.observable)?);
    let cfg = SdeConfig {
        dt: a.dt,
        horizon: a.horizon,
        outer: a.outer,
        inner: a.inner,
        seed: a.seed,
        taming: a.taming,
        records: a.records,
        drop_weight_gradient: false,
    };
    let traj = dynamics::simulate(&m.measure, &w, &f, &cfg)?;
    man.emit(&a.out, traj.to_csv().as_bytes())?;
    man.finish(&a.out)?;
    println!("fitted rate {:.6} +- {:.3}", traj.rate, traj.rate_ci);
    if let Some(c) = a.bound {
        let chk = dynamics::check_decay(&traj, c)?;
        println!("decay against C = {c}: {}", if chk.pass { "PASS" } else { "FAIL" });
        if !chk.pass {
            return Ok(2);
        }
    }
    Ok(0)
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Rate(a) => rate(a),
        Command::Weight(a) => weight(a),
        Command::Perturb(a) => perturb(a),
        Command::Verify(a) => verify(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Capacity(a) => capacity(a),
        Command::Simulate(a) => simulate(a),
    }
}
