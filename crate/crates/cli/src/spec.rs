//! Flat `key=value` measure specs and named weights.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use fiq_core::weights::WeightTag;
use fiq_core::{Expr, Field, Measure, Potential, Weight};

const KEYS: [&str; 7] = ["family", "alpha", "d", "a", "b", "potential", "perturb"];

/// A parsed spec: the base measure, an optional perturbation `U`, and the
/// measure `e^{-U} base` (or the base itself).
#[derive(Clone)]
pub struct ParsedMeasure {
    pub pairs: BTreeMap<String, String>,
    pub base: Measure,
    pub perturb: Option<Potential>,
    pub measure: Measure,
}

impl ParsedMeasure {
    pub fn family(&self) -> &str {
        &self.pairs["family"]
    }

    pub fn alpha(&self) -> Option<f64> {
        self.pairs.get("alpha").and_then(|v| v.parse().ok())
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// Splits a spec into pairs: one per line when the text has several
/// lines, otherwise one per whitespace-separated token.
pub fn spec_pairs(src: &str) -> Result<BTreeMap<String, String>> {
    let items: Vec<&str> = if src.trim().contains('\n') {
        src.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
    } else {
        src.split_whitespace().collect()
    };
    let mut pairs = BTreeMap::new();
    for item in items {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {item:?}"))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            bail!("unknown measure key {k:?} (known: {})", KEYS.join(", "));
        }
        if pairs.insert(k.to_string(), v.to_string()).is_some() {
            bail!("duplicate measure key {k:?}");
        }
    }
    Ok(pairs)
}

fn num(pairs: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let v = pairs.get(key).ok_or_else(|| anyhow!("missing key {key:?}"))?;
    v.parse::<f64>().with_context(|| format!("{key}={v:?} is not a number"))
}

fn dim(pairs: &BTreeMap<String, String>) -> Result<usize> {
    match pairs.get("d") {
        None => Ok(1),
        Some(v) => v.parse::<usize>().with_context(|| format!("d={v:?} is not a dimension")),
    }
}

pub fn parse_measure(src: &str) -> Result<ParsedMeasure> {
    let pairs = spec_pairs(src)?;
    let family = pairs.get("family").ok_or_else(|| anyhow!("missing key \"family\""))?.clone();
    let allowed: &[&str] = match family.as_str() {
        "cauchy" | "subbotin" => &["family", "alpha", "d", "perturb"],
        "gaussian" => &["family", "d", "perturb"],
        "uniform" => &["family", "a", "b", "perturb"],
        "custom" => &["family", "potential", "d", "perturb"],
        other => bail!("unknown family {other:?} (cauchy, subbotin, gaussian, uniform, custom)"),
    };
    if let Some(k) = pairs.keys().find(|k| !allowed.contains(&k.as_str())) {
        bail!("key {k:?} does not apply to family {family}");
    }
    let base = match family.as_str() {
        "cauchy" => Measure::cauchy(num(&pairs, "alpha")?, dim(&pairs)?)?,
        "subbotin" => Measure::subbotin(num(&pairs, "alpha")?, dim(&pairs)?)?,
        "gaussian" => Measure::gaussian(dim(&pairs)?)?,
        "uniform" => Measure::uniform_interval(num(&pairs, "a")?, num(&pairs, "b")?)?,
        _ => {
            let src = pairs.get("potential").ok_or_else(|| anyhow!("missing key \"potential\""))?;
            Measure::custom(Potential::parse(src)?, dim(&pairs)?)?
        }
    };
    let perturb = pairs.get("perturb").map(|s| Potential::parse(s)).transpose()?;
    let measure = match &perturb {
        Some(u) => Measure::perturbed(&base, u.clone())?,
        None => base.clone(),
    };
    Ok(ParsedMeasure { pairs, base, perturb, measure })
}

/// `one`, `cauchy_optimal`, `cauchy_ls`, `subbotin_optimal` (alpha taken
/// from the measure) or `expr:<w(x)>`.
pub fn parse_weight(name: &str, measure: &ParsedMeasure) -> Result<Weight> {
    Ok(match name {
        "one" | "none" => Weight::constant(1.0),
        "cauchy_optimal" => Weight::cauchy_optimal(),
        "cauchy_ls" => Weight::cauchy_ls(),
        "subbotin_optimal" => {
            let a = measure.alpha().ok_or_else(|| anyhow!("subbotin_optimal needs alpha in the measure spec"))?;
            Weight::subbotin_optimal(a)
        }
        other => match other.strip_prefix("expr:") {
            Some(src) => Weight::new(WeightTag::Custom, Field::from_expr(Expr::parse(src)?)),
            None => bail!("unknown weight {other:?} (one, cauchy_optimal, cauchy_ls, subbotin_optimal, expr:<w>)"),
        },
    })
}
