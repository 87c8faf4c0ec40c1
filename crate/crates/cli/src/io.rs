//! File formats, atomic writes and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fiq_core::{RateFunction, RateKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a file and records its hash under `label`.
pub fn read_input(path: &Path, label: &str, hashes: &mut BTreeMap<String, String>) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    hashes.insert(label.to_string(), sha256_hex(&bytes));
    String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
}

/// `s,beta` rows, 17 significant digits.
pub fn rate_csv(rate: &RateFunction, s: &[f64]) -> String {
    let mut out = String::from("s,beta\n");
    for &x in s {
        out.push_str(&format!("{:.16e},{:.16e}\n", x, rate.eval(x)));
    }
    out
}

pub fn read_rate_csv(text: &str, kind: RateKind, provenance: &str) -> Result<RateFunction> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "beta"] {
        bail!("rate CSV must have the header s,beta");
    }
    let (mut s, mut b) = (vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse =
            |j: usize| -> Result<f64> { rec.get(j).unwrap_or("").parse::<f64>().with_context(|| format!("row {}: bad number", i + 2)) };
        s.push(parse(0)?);
        b.push(parse(1)?);
    }
    Ok(RateFunction::from_table(s, b, kind, provenance)?)
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seeds: vec![],
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Writes an output atomically and records its hash.
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// `<primary>.manifest.json`.
    pub fn path_for(primary: &Path) -> PathBuf {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn finish(&self, primary: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&Self::path_for(primary), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fiq_core::rates::{builtin_rate, s_grid, BuiltinFamily};

    #[test]
    fn rate_csv_round_trips_exactly() {
        let r = builtin_rate(BuiltinFamily::Cauchy { alpha: 2.0 }, 3.0).unwrap();
        let text = rate_csv(&r, &s_grid());
        let back = read_rate_csv(&text, RateKind::WeakPoincare, "file").unwrap();
        assert_eq!(rate_csv(&back, &s_grid()), text);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(read_rate_csv("x,y\n1,2\n", RateKind::WeakPoincare, "f").is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
