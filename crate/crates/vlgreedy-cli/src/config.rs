//! Experiment configuration: JSON schema, pre-flight validation, and the
//! config hash stamped on every output row.
//!
//! Validation runs to completion before anything touches the filesystem, so
//! a rejected config leaves no artifacts behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlgreedy_core::{
    BatteryParams, EstimatorOptions, ExponentField, ExponentRecipe, SearchBudget, Strategy,
};

use crate::CliError;

/// Grid guard: `depth * dimension <= 24` keeps every grid under 2^24 cells.
pub const MAX_DEPTH_TIMES_DIM: u32 = 24;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: u8,
    pub depth: u8,
    pub exponent: ExponentRecipe,
    pub experiment: Experiment,
    /// Required for greedy, democracy, and verify runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Norm(NormSpec),
    Greedy(GreedySpec),
    Democracy(DemocracySpec),
    Verify(VerifySpec),
    /// Placeholder so a config can name the report kind; `vlgreedy report`
    /// itself reads artifacts, not configs.
    Report(ReportSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedySpec {
    pub ns: Vec<usize>,
    #[serde(default = "one")]
    pub functions: usize,
    #[serde(default)]
    pub budget: SearchBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemocracySpec {
    pub ns: Vec<usize>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub options: EstimatorOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default)]
    pub params: BatteryParams,
    /// Per-check tolerance replacements, applied by check name after the
    /// batteries run. Explicit user action, recorded in the config echo and
    /// the config hash; the in-code defaults stay untouched.
    #[serde(default)]
    pub tolerance_overrides: BTreeMap<String, f64>,
}

impl Experiment {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Experiment::Norm(_) => "norm",
            Experiment::Greedy(_) => "greedy",
            Experiment::Democracy(_) => "democracy",
            Experiment::Verify(_) => "verify",
            Experiment::Report(_) => "report",
        }
    }

    fn randomized(&self) -> bool {
        matches!(
            self,
            Experiment::Greedy(_) | Experiment::Democracy(_) | Experiment::Verify(_)
        )
    }
}

/// A validated run: effective config (overrides applied), built exponent
/// field, output directory, and the hash carried by every output row.
#[derive(Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub field: ExponentField,
    pub out_dir: PathBuf,
    pub hash: String,
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        CliError::Config(format!(
            "config {}: at {}: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

fn validate_ns(ns: &[usize], what: &str) -> Result<(), CliError> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "{what}.ns must be positive and strictly increasing"
        )));
    }
    Ok(())
}

pub fn prepare(
    mut config: ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    subcommand: &str,
) -> Result<Prepared, CliError> {
    if config.experiment.kind_name() != subcommand {
        return Err(CliError::Config(format!(
            "config declares experiment kind '{}' but the subcommand is '{subcommand}'",
            config.experiment.kind_name()
        )));
    }
    if config.dimension == 0 {
        return Err(CliError::Config("dimension must be at least 1".into()));
    }
    if config.depth == 0 {
        return Err(CliError::Config("depth must be at least 1".into()));
    }
    let product = config.dimension as u32 * config.depth as u32;
    if product > MAX_DEPTH_TIMES_DIM {
        return Err(CliError::Config(format!(
            "depth * dimension = {product} exceeds {MAX_DEPTH_TIMES_DIM} \
             (cell count would pass 2^{MAX_DEPTH_TIMES_DIM})"
        )));
    }
    if let Some(s) = seed_override {
        config.seed = Some(s);
    }
    if let Some(o) = out_override {
        config.output_dir = Some(o);
    }
    if config.experiment.randomized() && config.seed.is_none() {
        return Err(CliError::Config(
            "randomized experiment needs a seed: set \"seed\" in the config or pass --seed"
                .into(),
        ));
    }
    match &config.experiment {
        Experiment::Norm(_) => {}
        Experiment::Greedy(spec) => {
            validate_ns(&spec.ns, "experiment")?;
            if spec.functions == 0 {
                return Err(CliError::Config(
                    "experiment.functions must be at least 1".into(),
                ));
            }
        }
        Experiment::Democracy(spec) => {
            validate_ns(&spec.ns, "experiment")?;
            if spec.strategies.is_empty() {
                return Err(CliError::Config(
                    "experiment.strategies must not be empty".into(),
                ));
            }
        }
        Experiment::Verify(_) => {}
        Experiment::Report(_) => {
            return Err(CliError::Config(
                "the report kind reads artifacts; run `vlgreedy report --out <dir>`".into(),
            ));
        }
    }
    let out_dir = config.output_dir.clone().ok_or_else(|| {
        CliError::Config("no output directory: set \"output_dir\" in the config or pass --out".into())
    })?;
    let field = ExponentField::build(config.dimension, config.depth, &config.exponent)
        .map_err(crate::core_err)?;
    let hash = config_hash(&config);
    Ok(Prepared {
        seed: config.seed,
        field,
        out_dir,
        hash,
        config,
    })
}

/// First 16 hex digits of the SHA-256 of the effective config, excluding
/// the output directory: the hash identifies what was computed, not where
/// it was stored, so the same experiment written to two directories yields
/// byte-identical CSV bodies.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.output_dir = None;
    let json = serde_json::to_string(&canonical).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_config(json: &str) -> Result<ExperimentConfig, CliError> {
        // per-call directory: the tests run in parallel threads
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, json).unwrap();
        load_config(&path)
    }

    #[test]
    fn parses_a_full_democracy_config() {
        let cfg = demo_config(
            r#"{
                "dimension": 1, "depth": 6,
                "exponent": {"kind": "piecewise", "pieces": [
                    {"lo": [0.0], "hi": [0.5], "p": 2.0},
                    {"lo": [0.5], "hi": [1.0], "p": 4.0}]},
                "experiment": {"kind": "democracy", "ns": [2, 4, 8],
                               "strategies": ["gamma1", "disjoint-in-G"]},
                "seed": 7, "output_dir": "results"
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.kind_name(), "democracy");
        let prep = prepare(cfg, None, None, "democracy").unwrap();
        assert_eq!(prep.seed, Some(7));
        assert_eq!(prep.hash.len(), 16);
    }

    #[test]
    fn unknown_fields_are_rejected_with_a_path() {
        let err = demo_config(
            r#"{
                "dimension": 1, "depth": 4,
                "exponent": {"kind": "constant", "p": 2.0},
                "experiment": {"kind": "greedy", "ns": [1, 2], "budgetx": {}},
                "seed": 1
            }"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("budgetx"), "message should name the bad field: {msg}");
    }

    #[test]
    fn grid_guard_fires_before_anything_else_runs() {
        let cfg = demo_config(
            r#"{
                "dimension": 3, "depth": 10,
                "exponent": {"kind": "constant", "p": 2.0},
                "experiment": {"kind": "norm"},
                "output_dir": "results"
            }"#,
        )
        .unwrap();
        let err = prepare(cfg, None, None, "norm").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("exceeds 24"));
    }

    #[test]
    fn seed_is_required_for_randomized_kinds_and_flag_satisfies_it() {
        let raw = r#"{
            "dimension": 1, "depth": 4,
            "exponent": {"kind": "constant", "p": 2.0},
            "experiment": {"kind": "greedy", "ns": [1, 2]},
            "output_dir": "results"
        }"#;
        let err = prepare(demo_config(raw).unwrap(), None, None, "greedy").unwrap_err();
        assert!(err.to_string().contains("seed"));
        let prep = prepare(demo_config(raw).unwrap(), Some(9), None, "greedy").unwrap();
        assert_eq!(prep.seed, Some(9));
    }

    #[test]
    fn kind_must_match_subcommand() {
        let raw = r#"{
            "dimension": 1, "depth": 4,
            "exponent": {"kind": "constant", "p": 2.0},
            "experiment": {"kind": "norm"},
            "output_dir": "results"
        }"#;
        let err = prepare(demo_config(raw).unwrap(), None, None, "greedy").unwrap_err();
        assert!(err.to_string().contains("does not match") || err.to_string().contains("subcommand"));
    }

    #[test]
    fn hash_ignores_output_dir_but_tracks_seed() {
        let base = r#"{
            "dimension": 1, "depth": 4,
            "exponent": {"kind": "constant", "p": 2.0},
            "experiment": {"kind": "greedy", "ns": [1, 2]},
            "seed": 7, "output_dir": "a"
        }"#;
        let a = prepare(demo_config(base).unwrap(), None, None, "greedy").unwrap();
        let b = prepare(
            demo_config(base).unwrap(),
            None,
            Some(PathBuf::from("elsewhere")),
            "greedy",
        )
        .unwrap();
        assert_eq!(a.hash, b.hash);
        let c = prepare(demo_config(base).unwrap(), Some(8), None, "greedy").unwrap();
        assert_ne!(a.hash, c.hash);
    }
}
