//! Experiment configuration.
//!
//! A benchmark run is described by one TOML file:
//!
//! ```toml
//! version = 1
//! name = "bobw-stochastic-trend"
//! master-seed = 42
//! episodes = 20              # or: seeds = [0, 3, 7]
//! t-grid = [1000, 10000]
//! # checks = "full"          # bandit runs only; default "cheap"
//! # certificates = ["budget-certificate", "regret-bound"]   # default: all
//!
//! [mab]                      # exactly one of [mab] / [partial-monitoring]
//! algo = "sparse-bobw"
//! k = 8
//! # c1-variant = "proof-t-squared"
//!
//! [mab.env]
//! kind = "stochastic-sparse"
//! means = [0.05, 0.25, 0.25, 0.25, 0.3, 0.3, 0.3, 0.3]
//! noise = "bernoulli"
//! ```
//!
//! or, for a monitoring game:
//!
//! ```toml
//! [partial-monitoring]
//! fixture = "mab2-as-pm"     # or: game-file = "path/to/game.pm"
//!
//! [partial-monitoring.env]
//! kind = "stochastic-outcomes"
//! probs = [0.3, 0.2, 0.3, 0.2]
//! ```
//!
//! Validation reports the offending field by name, and every horizon in the
//! grid is checked against the algorithm's preconditions *before* any
//! episode launches.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::certificates::KNOWN_FAMILIES;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::mab::{bobw_proof_variant_c1, Agent, AgentConfig, AlgoKind, CheckLevel};
use crate::pm::{analyze, AnalyzedGame, Game, PmAgent, PmEnvSpec};

/// Config schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

/// A monitoring game shipped inside the binary.
pub struct FixtureInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

/// All embedded game fixtures, including one deliberately invalid game used
/// to exercise the rejection path.
pub const FIXTURES: &[FixtureInfo] = &[
    FixtureInfo {
        name: "fi-2x2",
        summary: "matching pennies with the outcome revealed (full information)",
        text: include_str!("../../fixtures/fi-2x2.pm"),
    },
    FixtureInfo {
        name: "mab2-as-pm",
        summary: "two-armed bandit written as a monitoring game (bandit feedback)",
        text: include_str!("../../fixtures/mab2-as-pm.pm"),
    },
    FixtureInfo {
        name: "three-action-local",
        summary: "3x3 game with an uninformative middle action (locally observable)",
        text: include_str!("../../fixtures/three-action-local.pm"),
    },
    FixtureInfo {
        name: "duplicate-invalid",
        summary: "duplicated action rows; loading must fail (negative fixture)",
        text: include_str!("../../fixtures/duplicate-invalid.pm"),
    },
];

pub fn fixture(name: &str) -> Option<&'static FixtureInfo> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Which `c1` the implicit-rate agent uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum C1Variant {
    /// `sqrt(2 log(1 + T / beta_1))` — the default.
    Default,
    /// `sqrt(2 log(1 + T^2 / beta_1))` — the variant used in the analysis.
    ProofTSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MabSection {
    pub algo: AlgoKind,
    pub k: usize,
    #[serde(default)]
    pub c1_variant: Option<C1Variant>,
    pub env: EnvSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PmSection {
    /// Name of an embedded fixture. Exactly one of `fixture` / `game-file`.
    #[serde(default)]
    pub fixture: Option<String>,
    /// Path to a game file, resolved relative to the config file.
    #[serde(default)]
    pub game_file: Option<String>,
    pub env: PmEnvSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub master_seed: u64,
    /// Run episodes `0..episodes`. Exactly one of `episodes` / `seeds`.
    #[serde(default)]
    pub episodes: Option<u64>,
    /// Explicit episode indices.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub t_grid: Vec<usize>,
    /// Per-round check depth for bandit runs (default cheap).
    #[serde(default)]
    pub checks: Option<CheckLevel>,
    /// Certificate families to evaluate (default: all applicable).
    #[serde(default)]
    pub certificates: Option<Vec<String>>,
    #[serde(default)]
    pub mab: Option<MabSection>,
    #[serde(default)]
    pub partial_monitoring: Option<PmSection>,
}

/// The validated, ready-to-run form of a config.
#[derive(Debug)]
pub struct PreparedExperiment {
    pub episodes: Vec<u64>,
    pub kind: PreparedKind,
}

#[derive(Debug)]
pub enum PreparedKind {
    Mab {
        section: MabSection,
        checks: CheckLevel,
    },
    PartialMonitoring {
        analyzed: AnalyzedGame,
        env: PmEnvSpec,
        /// Fixture name or game-file path, recorded in sidecars.
        label: String,
    },
}

impl ExperimentConfig {
    /// Parse TOML text. Parse failures surface the offending key in the
    /// message (missing fields, unknown fields, type mismatches).
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 over the canonical JSON serialization of the parsed config;
    /// whitespace and comments in the TOML do not affect it.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// The episode indices this config runs.
    pub fn episode_list(&self) -> Vec<u64> {
        match (&self.episodes, &self.seeds) {
            (Some(n), None) => (0..*n).collect(),
            (None, Some(list)) => list.clone(),
            // validate() rejects every other combination.
            _ => Vec::new(),
        }
    }

    /// Effective `c1_override` for a bandit agent at one horizon.
    pub fn c1_override_for(section: &MabSection, horizon: usize) -> Option<f64> {
        match section.c1_variant {
            None | Some(C1Variant::Default) => None,
            Some(C1Variant::ProofTSquared) => {
                Some(bobw_proof_variant_c1(section.k, horizon))
            }
        }
    }

    /// Validate every field and build the run-ready form. `base` anchors
    /// relative `game-file` paths (use the config file's directory).
    pub fn prepare(&self, base: &Path) -> Result<PreparedExperiment> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported config version {} (this build reads {CONFIG_VERSION})", self.version),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::config(
                "name",
                format!(
                    "'{}' is not a valid experiment name (ASCII letters, digits, '-', '_')",
                    self.name
                ),
            ));
        }
        match (&self.episodes, &self.seeds) {
            (Some(0), None) => {
                return Err(Error::config("episodes", "need at least one episode"))
            }
            (Some(_), None) => {}
            (None, Some(list)) if list.is_empty() => {
                return Err(Error::config("seeds", "the seed list is empty"))
            }
            (None, Some(list)) => {
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != list.len() {
                    return Err(Error::config("seeds", "duplicate episode indices"));
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "episodes",
                    "give either `episodes` or `seeds`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "episodes",
                    "one of `episodes` or `seeds` is required",
                ))
            }
        }
        if self.t_grid.is_empty() {
            return Err(Error::config("t-grid", "the horizon grid is empty"));
        }
        if let Some(&t) = self.t_grid.iter().find(|&&t| t == 0) {
            return Err(Error::config("t-grid", format!("horizon {t} is not positive")));
        }
        if let Some(list) = &self.certificates {
            for fam in list {
                if !KNOWN_FAMILIES.contains(&fam.as_str()) {
                    return Err(Error::config(
                        "certificates",
                        format!(
                            "unknown certificate family '{fam}' (known: {})",
                            KNOWN_FAMILIES.join(", ")
                        ),
                    ));
                }
            }
        }

        let kind = match (&self.mab, &self.partial_monitoring) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "mab",
                    "give either [mab] or [partial-monitoring], not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "mab",
                    "one of [mab] or [partial-monitoring] is required",
                ))
            }
            (Some(section), None) => {
                section.env.validate()?;
                if section.env.k() != section.k {
                    return Err(Error::config(
                        "mab.k",
                        format!(
                            "agent has k = {} but the environment has k = {}",
                            section.k,
                            section.env.k()
                        ),
                    ));
                }
                if section.c1_variant == Some(C1Variant::ProofTSquared)
                    && section.algo != AlgoKind::SparseBobw
                {
                    return Err(Error::config(
                        "mab.c1-variant",
                        "proof-t-squared only applies to sparse-bobw",
                    ));
                }
                let checks = self.checks.unwrap_or(CheckLevel::Cheap);
                // Probe every grid horizon against the algorithm's
                // preconditions before anything launches.
                for &t in &self.t_grid {
                    let probe = AgentConfig {
                        algo: section.algo,
                        k: section.k,
                        horizon: t,
                        c1_override: Self::c1_override_for(section, t),
                        seed: self.master_seed,
                    };
                    Agent::new(&probe, checks).map_err(|e| {
                        Error::config("t-grid", format!("horizon {t}: {e}"))
                    })?;
                }
                PreparedKind::Mab {
                    section: section.clone(),
                    checks,
                }
            }
            (None, Some(section)) => {
                if self.checks.is_some() {
                    return Err(Error::config(
                        "checks",
                        "not applicable to partial-monitoring runs (always full)",
                    ));
                }
                let (game, label) = match (&section.fixture, &section.game_file) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "partial-monitoring.fixture",
                            "give either `fixture` or `game-file`, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(Error::config(
                            "partial-monitoring.fixture",
                            "one of `fixture` or `game-file` is required",
                        ))
                    }
                    (Some(name), None) => {
                        let fx = fixture(name).ok_or_else(|| {
                            Error::config(
                                "partial-monitoring.fixture",
                                format!(
                                    "unknown fixture '{name}' (embedded: {})",
                                    FIXTURES
                                        .iter()
                                        .map(|f| f.name)
                                        .collect::<Vec<_>>()
                                        .join(", ")
                                ),
                            )
                        })?;
                        (Game::parse(fx.text)?, name.clone())
                    }
                    (None, Some(rel)) => {
                        let path = base.join(rel);
                        (Game::from_file(&path)?, rel.clone())
                    }
                };
                let d = game.d();
                section.env.validate(d)?;
                let analyzed = analyze(game)?;
                for &t in &self.t_grid {
                    PmAgent::new(&analyzed, t, self.master_seed, 0).map_err(|e| {
                        Error::config("t-grid", format!("horizon {t}: {e}"))
                    })?;
                }
                PreparedKind::PartialMonitoring {
                    analyzed,
                    env: section.env.clone(),
                    label,
                }
            }
        };

        Ok(PreparedExperiment {
            episodes: self.episode_list(),
            kind,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAB_TOML: &str = r#"
version = 1
name = "exp3-smoke"
master-seed = 7
episodes = 3
t-grid = [64, 128]

[mab]
algo = "sparse-exp3"
k = 5

[mab.env]
kind = "adversarial-sparse"
k = 5
s = 2
range = "unit-interval"
pattern = "rotating"
pattern_seed = 11
"#;

    const PM_TOML: &str = r#"
version = 1
name = "pm-smoke"
master-seed = 5
seeds = [0, 2]
t-grid = [32]

[partial-monitoring]
fixture = "mab2-as-pm"

[partial-monitoring.env]
kind = "stochastic-outcomes"
probs = [0.3, 0.2, 0.3, 0.2]
"#;

    #[test]
    fn parses_and_prepares_both_artifact_kinds() {
        let cfg = ExperimentConfig::from_toml_str(MAB_TOML).unwrap();
        assert_eq!(cfg.episode_list(), vec![0, 1, 2]);
        let prep = cfg.prepare(Path::new(".")).unwrap();
        assert!(matches!(prep.kind, PreparedKind::Mab { .. }));

        let cfg = ExperimentConfig::from_toml_str(PM_TOML).unwrap();
        assert_eq!(cfg.episode_list(), vec![0, 2]);
        let prep = cfg.prepare(Path::new(".")).unwrap();
        match prep.kind {
            PreparedKind::PartialMonitoring { analyzed, label, .. } => {
                assert_eq!(label, "mab2-as-pm");
                assert_eq!(analyzed.game.k(), 2);
            }
            _ => panic!("expected a monitoring run"),
        }
    }

    #[test]
    fn missing_k_is_reported_by_field_name() {
        let broken = MAB_TOML.replace("k = 5\n\n[mab.env]", "\n[mab.env]");
        let err = ExperimentConfig::from_toml_str(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('k'), "error must name the missing field: {msg}");
    }

    #[test]
    fn field_level_validation_errors() {
        let cases: Vec<(&str, &str, &str)> = vec![
            ("version = 1", "version = 2", "version"),
            ("episodes = 3", "episodes = 0", "episodes"),
            ("t-grid = [64, 128]", "t-grid = []", "t-grid"),
            ("k = 5\n\n[mab.env]", "k = 4\n\n[mab.env]", "mab.k"),
        ];
        for (from, to, field) in cases {
            let text = MAB_TOML.replace(from, to);
            assert_ne!(text, MAB_TOML, "replacement '{from}' must apply");
            let err = match ExperimentConfig::from_toml_str(&text) {
                Err(e) => e,
                Ok(cfg) => cfg.prepare(Path::new(".")).unwrap_err(),
            };
            match err {
                Error::Config { field: f, .. } => {
                    assert_eq!(f, field, "wrong field for mutation '{to}'")
                }
                other => panic!("expected a config error, got {other}"),
            }
        }
    }

    #[test]
    fn episodes_and_seeds_are_mutually_exclusive() {
        let text = MAB_TOML.replace("episodes = 3", "episodes = 3\nseeds = [1]");
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("not both"), "{err}");
    }

    #[test]
    fn bobw_grid_preconditions_are_probed_before_launch() {
        let text = MAB_TOML
            .replace("sparse-exp3", "sparse-bobw")
            .replace("t-grid = [64, 128]", "t-grid = [64, 8]"); // 8 < 2k = 10
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("horizon 8"), "{msg}");
    }

    #[test]
    fn unknown_fixture_and_unknown_family_are_named() {
        let text = PM_TOML.replace("mab2-as-pm", "no-such-game");
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("no-such-game"), "{err}");

        let text = PM_TOML.replace(
            "t-grid = [32]",
            "t-grid = [32]\ncertificates = [\"no-such-family\"]",
        );
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("no-such-family"), "{err}");
    }

    #[test]
    fn duplicate_fixture_is_listed_but_rejected_on_load() {
        assert!(fixture("duplicate-invalid").is_some());
        let text = PM_TOML
            .replace("mab2-as-pm", "duplicate-invalid")
            .replace("probs = [0.3, 0.2, 0.3, 0.2]", "probs = [0.5, 0.5]");
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        assert!(
            matches!(err, Error::DuplicateActions { .. }),
            "expected the duplicate-action rejection, got {err}"
        );
    }

    #[test]
    fn hash_ignores_formatting_but_not_content() {
        let a = ExperimentConfig::from_toml_str(MAB_TOML).unwrap();
        let reformatted = MAB_TOML.replace("episodes = 3", "episodes   =   3   # comment");
        let b = ExperimentConfig::from_toml_str(&reformatted).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());

        let c = ExperimentConfig::from_toml_str(&MAB_TOML.replace("master-seed = 7", "master-seed = 8"))
            .unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn all_shipping_fixtures_parse_and_classify() {
        for fx in FIXTURES {
            let game = Game::parse(fx.text);
            if fx.name == "duplicate-invalid" {
                assert!(game.is_err());
                continue;
            }
            let analyzed = analyze(game.unwrap()).unwrap();
            let class = analyzed.class.to_string();
            match fx.name {
                "fi-2x2" => assert_eq!(class, "full-information"),
                "mab2-as-pm" => assert_eq!(class, "bandit"),
                "three-action-local" => assert_eq!(class, "locally-observable"),
                other => panic!("unexpected fixture {other}"),
            }
        }
    }
}
