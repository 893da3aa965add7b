//! TOML configuration: a `[params]` table overlaid on the defaults, plus
//! `[run]` and `[verify]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use bsq_core::verify::BatteryConfig;
use bsq_core::Params;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Start from eps = xi = phi = 0 instead of seeded data.
    pub zero_initial: bool,
    pub forcing: bool,
    pub coupling: bool,
    pub diffusion: bool,
    pub freeze_velocity: bool,
    pub lam_rate_override: Option<f64>,
    /// Snapshot every N steps (0 disables).
    pub snapshot_every: usize,
    /// Snapshots allowed in flight before the writer starts dropping them.
    pub snapshot_queue: usize,
    pub ledger_terms: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            zero_initial: false,
            forcing: true,
            coupling: true,
            diffusion: true,
            freeze_velocity: false,
            lam_rate_override: None,
            snapshot_every: 400,
            snapshot_queue: 4,
            ledger_terms: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub params: Params,
    pub run: RunSection,
    pub verify: BatteryConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    run: Option<RunSection>,
    #[serde(default)]
    verify: Option<toml::Table>,
}

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub resolution: Option<(usize, usize)>,
    pub seed: Option<u64>,
}

/// "128" or "128x64" (n_sigma x n_beta).
pub fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad resolution '{s}': {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, patch: toml::Table, what: &str) -> Result<T, CliError> {
    let mut table = toml::Table::try_from(base).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    for (k, v) in patch {
        if !table.contains_key(&k) {
            return Err(CliError::Config(format!("{what}: unknown key '{k}'")));
        }
        table.insert(k, v);
    }
    table.try_into().map_err(|e| CliError::Config(format!("{what}: {e}")))
}

pub fn parse_str(text: &str, ov: &Overrides) -> Result<Config, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let mut base = Params::default();
    let alpha = ov.alpha.or_else(|| raw.params.get("alpha").and_then(|v| v.as_float()));
    if let Some(a) = alpha {
        base.set_alpha(a);
    }
    let mut patch = raw.params;
    patch.remove("alpha");
    let mut params: Params = overlay(&base, patch, "params")?;
    if let Some((ns, nb)) = ov.resolution {
        params.n_sigma = ns;
        params.n_beta = nb;
    }
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut run = raw.run.unwrap_or_default();
    if let Some(seed) = ov.seed {
        run.seed = seed;
    }
    let mut verify: BatteryConfig = overlay(&BatteryConfig::default(), raw.verify.unwrap_or_default(), "verify")?;
    verify.seed = run.seed;
    Ok(Config { params, run, verify })
}

pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Config, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_str(&text, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = parse_str("", &Overrides::default()).unwrap();
        assert_eq!(c.params, Params::default());
        assert_eq!(c.run, RunSection::default());
    }

    #[test]
    fn alpha_moves_dependent_defaults() {
        let c = parse_str("[params]\nalpha = 0.05\nn_beta = 32\n", &Overrides::default()).unwrap();
        assert_eq!(c.params.alpha, 0.05);
        assert_eq!(c.params.delta, 0.05);
        assert_eq!(c.params.gamma, 1.005);
        assert_eq!(c.params.n_beta, 32);
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides { alpha: Some(0.2), resolution: Some((48, 24)), seed: Some(9) };
        let c = parse_str("[params]\nalpha = 0.05\n[run]\nseed = 1\n", &ov).unwrap();
        assert_eq!((c.params.alpha, c.params.n_sigma, c.params.n_beta, c.run.seed), (0.2, 48, 24, 9));
        assert_eq!(c.verify.seed, 9);
    }

    #[test]
    fn rejects_bad_input() {
        let ov = Overrides::default();
        for bad in ["[params]\nbogus = 1\n", "[params]\nalpha = -1.0\n", "[run]\nseeed = 2\n", "not toml ["] {
            assert!(matches!(parse_str(bad, &ov), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn resolution_forms() {
        assert_eq!(parse_resolution("64").unwrap(), (64, 64));
        assert_eq!(parse_resolution("128x32").unwrap(), (128, 32));
        assert!(parse_resolution("12y").is_err());
    }
}
