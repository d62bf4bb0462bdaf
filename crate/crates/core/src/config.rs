//! One configuration file for the whole pipeline: world constants, reward
//! weights, planner weights, training hyperparameters, and benchmark
//! settings. Files may be TOML or JSON; identity is a SHA-256 over the
//! canonical JSON rendering, so hashes do not depend on which format or
//! key order a file happened to use.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::learn::LearnConfig;
use crate::params::WorldParams;
use crate::planners::PrecogConfig;
use crate::rewards::RewardConfig;

/// Benchmark section: repetition seeds, evaluation budget, artifact sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// At most this many episodes are scored per run; 0 means all given.
    pub episodes: usize,
    /// Crowd-reseeding seeds; every method sees the same per-episode seeds.
    pub seeds: Vec<u64>,
    /// Directory for reports, traces, checkpoints, and CSVs.
    pub out_dir: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { episodes: 0, seeds: vec![1, 2, 3], out_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldParams,
    pub rewards: RewardConfig,
    pub precog: PrecogConfig,
    pub learning: LearnConfig,
    pub bench: BenchConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path} must end in .toml or .json")]
    UnknownFormat { path: String },
    #[error("malformed TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("malformed JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config value out of range: {field} {why}")]
    Invalid { field: &'static str, why: String },
}

fn invalid(field: &'static str, why: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, why: why.into() }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive finite number, got {v}")))
    }
}

fn weight(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and non-negative, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load by extension: `.toml` or `.json`.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => RunConfig::from_toml_str(&text),
            Some("json") => RunConfig::from_json_str(&text),
            _ => Err(ConfigError::UnknownFormat { path: path.display().to_string() }),
        }
    }

    /// Fixed-field-order JSON rendering; the identity the hash covers.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config always serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    /// Hex SHA-256 of the canonical JSON. Recorded in every artifact;
    /// replay refuses traces whose hash disagrees with the live config.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_json().as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        positive("world.dt", w.dt)?;
        positive("world.v_robot_max", w.v_robot_max)?;
        positive("world.omega_max", w.omega_max)?;
        positive("world.robot_radius", w.robot_radius)?;
        positive("world.human_radius", w.human_radius)?;
        positive("world.d_succ", w.d_succ)?;
        positive("world.r_grid", w.r_grid)?;
        if w.max_steps == 0 {
            return Err(invalid("world.max_steps", "must be at least 1"));
        }
        if w.sensor.n_rays < 2 {
            return Err(invalid("world.sensor.n_rays", "need at least 2 rays"));
        }
        positive("world.sensor.d_max", w.sensor.d_max)?;
        if !(w.sensor.fov.is_finite()
            && w.sensor.fov > 0.0
            && w.sensor.fov <= 2.0 * std::f64::consts::PI)
        {
            return Err(invalid("world.sensor.fov", "must lie in (0, 2*pi]"));
        }
        positive("world.orca.tau", w.orca.tau)?;
        positive("world.orca.d_neighbor", w.orca.d_neighbor)?;
        if w.orca.max_neighbors == 0 {
            return Err(invalid("world.orca.max_neighbors", "must be at least 1"));
        }

        let r = &self.rewards;
        weight("rewards.beta_d", r.beta_d)?;
        weight("rewards.r_slack", r.r_slack)?;
        weight("rewards.beta_succ", r.beta_succ)?;
        weight("rewards.beta_s", r.beta_s)?;
        weight("rewards.beta_h", r.beta_h)?;
        weight("rewards.beta_prox", r.beta_prox)?;
        weight("rewards.beta_traj", r.beta_traj)?;
        if r.h == 0 {
            return Err(invalid("rewards.H", "forecast span must be at least 1 step"));
        }
        positive("rewards.d_prox_cutoff", r.d_prox_cutoff)?;
        positive("rewards.d_traj_cutoff", r.d_traj_cutoff)?;
        positive("rewards.d_goal_cancel", r.d_goal_cancel)?;

        let p = &self.precog;
        weight("precog.w_goal", p.w_goal)?;
        weight("precog.w_obs", p.w_obs)?;
        weight("precog.w_prox", p.w_prox)?;
        weight("precog.w_traj", p.w_traj)?;
        weight("precog.d_block", p.d_block)?;
        if p.horizon == 0 {
            return Err(invalid("precog.horizon", "must be at least 1"));
        }

        let l = &self.learning;
        for (field, n) in [
            ("learning.d_h", l.d_h),
            ("learning.d_slot", l.d_slot),
            ("learning.horizon", l.horizon),
            ("learning.max_slots", l.max_slots),
            ("learning.epochs", l.epochs),
            ("learning.minibatch_episodes", l.minibatch_episodes),
            ("learning.steps_per_update", l.steps_per_update),
        ] {
            if n == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !(l.gamma > 0.0 && l.gamma <= 1.0) {
            return Err(invalid("learning.gamma", format!("must lie in (0, 1], got {}", l.gamma)));
        }
        if !(l.gae_lambda >= 0.0 && l.gae_lambda <= 1.0) {
            return Err(invalid(
                "learning.gae_lambda",
                format!("must lie in [0, 1], got {}", l.gae_lambda),
            ));
        }
        positive("learning.clip", l.clip)?;
        weight("learning.entropy_coef", l.entropy_coef)?;
        weight("learning.value_coef", l.value_coef)?;
        positive("learning.lr", l.lr)?;
        weight("learning.beta_main", l.beta_main)?;
        weight("learning.beta_aux", l.beta_aux)?;
        positive("learning.grad_clip", l.grad_clip)?;
        if !l.init_log_std.is_finite() {
            return Err(invalid("learning.init_log_std", "must be finite"));
        }

        if self.bench.seeds.is_empty() {
            return Err(invalid("bench.seeds", "need at least one seed"));
        }
        if self.bench.out_dir.is_empty() {
            return Err(invalid("bench.out_dir", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips_both_formats() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();

        let toml_back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(toml_back, cfg);

        let json_back = RunConfig::from_json_str(&cfg.canonical_json()).unwrap();
        assert_eq!(json_back, cfg);
    }

    #[test]
    fn hash_ignores_source_format_and_key_order() {
        let cfg = RunConfig::default();
        let from_toml = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(from_toml.hash(), cfg.hash());

        // Same settings spelled out of order and partially.
        let sparse = RunConfig::from_json_str(r#"{"bench": {"seeds": [3, 2]}}"#).unwrap();
        let mut manual = RunConfig::default();
        manual.bench.seeds = vec![3, 2];
        assert_eq!(sparse.hash(), manual.hash());

        assert_eq!(cfg.hash().len(), 64);
        assert!(cfg.hash().chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn hash_separates_different_settings() {
        let base = RunConfig::default();
        let mut warped = RunConfig::default();
        warped.rewards.beta_prox *= 2.0;
        assert_ne!(base.hash(), warped.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json_str(r#"{"world": {"dtt": 0.25}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Json(_)), "got {err}");

        let err = RunConfig::from_toml_str("[leftover]\nx = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Toml(_)), "got {err}");
    }

    #[test]
    fn out_of_range_values_are_rejected_with_field_paths() {
        let cases = [
            (r#"{"world": {"dt": 0.0}}"#, "world.dt"),
            (r#"{"world": {"sensor": {"n_rays": 1}}}"#, "world.sensor.n_rays"),
            (r#"{"rewards": {"beta_h": -1.0}}"#, "rewards.beta_h"),
            (r#"{"learning": {"gamma": 1.5}}"#, "learning.gamma"),
            (r#"{"learning": {"lr": 0.0}}"#, "learning.lr"),
            (r#"{"bench": {"seeds": []}}"#, "bench.seeds"),
        ];
        for (text, field) in cases {
            match RunConfig::from_json_str(text) {
                Err(ConfigError::Invalid { field: got, .. }) => assert_eq!(got, field),
                other => panic!("{text} should fail on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn load_dispatches_on_extension() {
        let dir = std::env::temp_dir().join(format!("cfg-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg = RunConfig::default();

        let toml_path = dir.join("run.toml");
        fs::write(&toml_path, cfg.to_toml_string()).unwrap();
        assert_eq!(RunConfig::load(&toml_path).unwrap(), cfg);

        let json_path = dir.join("run.json");
        fs::write(&json_path, cfg.canonical_json()).unwrap();
        assert_eq!(RunConfig::load(&json_path).unwrap(), cfg);

        let odd_path = dir.join("run.yaml");
        fs::write(&odd_path, "x").unwrap();
        assert!(matches!(
            RunConfig::load(&odd_path),
            Err(ConfigError::UnknownFormat { .. })
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
