//! Experiment configuration: TOML with `[schedule]` and `[agent]` sections.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::envs::{Env, Environment};
use crate::error::{Error, Result};
use crate::schedule::ScheduleConfig;

/// Overrides the root for relative `out_dir` values.
pub const OUT_ROOT_VAR: &str = "SPEQ_OUT_ROOT";

pub const PRECISIONS: [&str; 1] = ["f64"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run label; plots use it as the legend entry.
    pub name: String,
    pub env: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Monte-Carlo points per bias estimate; 0 writes NaN bias columns.
    pub bias_points: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_interval: u64,
    pub checkpoint_buffer: bool,
    pub precision: String,
    /// Record elapsed milliseconds in `wall_ms`; off keeps reruns bit-identical.
    pub log_wall_time: bool,
    pub schedule: ScheduleConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            env: "pendulum".into(),
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("runs/run"),
            eval_interval: 1_000,
            eval_episodes: 10,
            bias_points: 10,
            checkpoint_interval: 0,
            checkpoint_buffer: true,
            precision: "f64".into(),
            log_wall_time: false,
            schedule: ScheduleConfig::default(),
            agent: desk_agent(),
        }
    }
}

/// Agent defaults sized for single-core pendulum runs.
pub fn desk_agent() -> AgentConfig {
    AgentConfig {
        actor_hidden: vec![64, 64],
        critic_hidden: vec![64, 64],
        batch_size: 128,
        ..AgentConfig::default()
    }
}

impl ExperimentConfig {
    /// Parses, validates and resolves every default.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        raw.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        Env::from_name(&self.env).map_err(|e| Error::config(format!("env: {e}")))?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config(format!("seeds: duplicates in {:?}", self.seeds)));
        }
        if !PRECISIONS.contains(&self.precision.as_str()) {
            return Err(Error::config(format!(
                "precision: {:?} is not supported; valid tags: {}",
                self.precision,
                PRECISIONS.join(", ")
            )));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval: must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes: must be positive"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(format!("name: {:?} is not a valid run label", self.name)));
        }
        self.schedule.validate()?;
        self.agent.validate()?;
        if self.agent.batch_size > self.schedule.capacity() {
            return Err(Error::config("agent.batch_size: exceeds the replay capacity"));
        }
        Ok(())
    }

    /// Validates and fills every defaulted field with its concrete value.
    pub fn resolve(mut self) -> Result<Self> {
        self.validate()?;
        let act_dim = Env::from_name(&self.env)?.spec().act_dim;
        self.schedule = self.schedule.resolved();
        self.agent.target_entropy = Some(self.agent.target_entropy.unwrap_or(-(act_dim as f64)));
        Ok(self)
    }

    /// Canonical text of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    /// `out_dir`, placed under `$SPEQ_OUT_ROOT` when relative and the variable is set.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUT_ROOT_VAR) {
            Some(root) if self.out_dir.is_relative() => PathBuf::from(root).join(&self.out_dir),
            _ => self.out_dir.clone(),
        }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_root().join(format!("seed_{seed}"))
    }

    pub fn env(&self) -> Result<Env> {
        Env::from_name(&self.env)
    }
}
