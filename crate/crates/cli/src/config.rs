//! Optional TOML defaults. Each command reads its own table; values act as
//! defaults and explicit command-line flags override them.

use anyhow::{Context, Result};
use std::path::Path;

pub fn load_table(path: Option<&Path>, command: &str) -> Result<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let root: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    Ok(root
        .get(command)
        .and_then(|v| v.as_table())
        .cloned()
        .unwrap_or_default())
}

pub fn get_f64(table: &toml::Table, key: &str) -> Option<f64> {
    table.get(key).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
}

pub fn get_usize(table: &toml::Table, key: &str) -> Option<usize> {
    table.get(key).and_then(|v| v.as_integer()).map(|i| i as usize)
}

pub fn get_string(table: &toml::Table, key: &str) -> Option<String> {
    table.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
}

/// Parse an SNR grid: `a:step:b`, a comma list, or a single value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Some((start, rest)) = spec.split_once(':') {
        let (step, end) = rest
            .split_once(':')
            .with_context(|| format!("grid {spec:?} must be start:step:end"))?;
        let (start, step, end): (f64, f64, f64) = (start.parse()?, step.parse()?, end.parse()?);
        anyhow::ensure!(step > 0.0 && end >= start, "grid {spec:?} must ascend");
        let mut v = Vec::new();
        let mut x = start;
        while x <= end + 1e-9 {
            v.push(x);
            x += step;
        }
        return Ok(v);
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0.5:1.5").unwrap(), vec![0.0, 0.5, 1.0, 1.5]);
        assert_eq!(parse_grid("40").unwrap(), vec![40.0]);
        assert_eq!(parse_grid("1,2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("5:-1:0").is_err());
    }
}
