//! `key=value` configuration files supplying defaults for the shared flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::Shared;

pub fn read(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{line}`", no + 1);
        };
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

fn fill<T: std::str::FromStr>(slot: &mut Option<T>, map: &mut BTreeMap<String, String>, key: &str) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = map.remove(key) {
        if slot.is_none() {
            *slot = Some(v.parse().map_err(|e| anyhow::anyhow!("config key `{key}`: {e}"))?);
        }
    }
    Ok(())
}

/// Flags given on the command line win over the file.
pub fn merge(shared: &mut Shared, mut map: BTreeMap<String, String>) -> Result<()> {
    fill(&mut shared.eps, &mut map, "eps")?;
    fill(&mut shared.beta, &mut map, "beta")?;
    fill(&mut shared.din, &mut map, "din")?;
    fill(&mut shared.dout, &mut map, "dout")?;
    fill(&mut shared.alpha, &mut map, "alpha")?;
    fill(&mut shared.lambda, &mut map, "lambda")?;
    fill(&mut shared.huber_a, &mut map, "huber-a")?;
    fill(&mut shared.methods, &mut map, "methods")?;
    fill(&mut shared.out, &mut map, "out")?;
    fill(&mut shared.seed, &mut map, "seed")?;
    fill(&mut shared.seeds, &mut map, "seeds")?;
    fill(&mut shared.dim, &mut map, "dim")?;
    fill(&mut shared.target, &mut map, "target")?;
    if let Some(k) = map.keys().next() {
        bail!("unknown config key `{k}`");
    }
    Ok(())
}
