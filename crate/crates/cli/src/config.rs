//! Run configuration: one TOML file with a section per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use funnel_core::eval::{EvalConfig, EvalSettings};
use funnel_core::rl::{EnvConfig, EnvSettings, RewardConfig, TrainConfig};
use funnel_core::sim::{ScriptedGait, SimConfig};
use funnel_core::switch::{SwitchConfig, SwitchSettings};
use funnel_core::terrain::TerrainConfig;

use crate::CliError;

/// Environment variable that overrides `artifact_dir`.
pub const DIR_ENV: &str = "FUNNEL_SWITCH_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stream is derived from it.
    pub seed: u64,
    pub artifact_dir: PathBuf,
    pub sim: SimConfig,
    pub terrain: TerrainConfig,
    pub gait: ScriptedGait,
    pub reward: RewardConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub switch: SwitchConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            artifact_dir: PathBuf::from("runs/default"),
            sim: SimConfig::default(),
            terrain: TerrainConfig::default(),
            gait: ScriptedGait::default(),
            reward: RewardConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            switch: SwitchConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: funnel_core::Error| CliError::Usage(e.to_string());
        self.sim.validate().map_err(usage)?;
        self.terrain.validate().map_err(usage)?;
        self.reward.validate().map_err(usage)?;
        self.env.validate().map_err(usage)?;
        self.switch.validate().map_err(usage)?;
        if self.train.n_envs == 0 || self.train.ppo.minibatch == 0 {
            return Err(CliError::Usage("train: n_envs and minibatch must be positive".into()));
        }
        if self.eval.timeout <= 0.0 {
            return Err(CliError::Usage("eval: timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that shapes results. The seed and the artifact
    /// directory are recorded separately and left out.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            seed: 0,
            artifact_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn env_settings(&self) -> EnvSettings {
        EnvSettings {
            sim: self.sim.clone(),
            terrain: self.terrain.clone(),
            gait: self.gait.clone(),
            reward: self.reward.clone(),
            env: self.env.clone(),
        }
    }

    pub fn switch_settings(&self) -> SwitchSettings {
        SwitchSettings {
            sim: self.sim.clone(),
            terrain: self.terrain.clone(),
            gait: self.gait.clone(),
            switch: self.switch.clone(),
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            sim: self.sim.clone(),
            terrain: self.terrain.clone(),
            switch: self.switch.clone(),
            eval: self.eval.clone(),
            gait_stand_pose: self.gait.stand_pose,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn omitted_fields_take_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[switch]\nthreshold = 0.7\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.switch.threshold, 0.7);
        assert_eq!(c.terrain, TerrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 9\n"), Err(CliError::Usage(_))));
        assert!(matches!(
            RunConfig::from_toml("[terrain]\ngap_lenght = 0.5\n"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn hash_ignores_seed_and_directory_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 77,
            artifact_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.env.enforce_roa_overlap = false;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        assert!(matches!(
            RunConfig::from_toml("[terrain]\ndifficulty = 2.0\n"),
            Err(CliError::Usage(_))
        ));
    }
}
