//! Training loops: SPEQ, plain UTD-k, and batch reuse, plus the
//! closed-form gradient-budget accountant.
//!
//! Every schedule runs through [`Trainer`], which owns the environment
//! state, the replay buffer, the RNG streams and the counters. The learner
//! is abstract so the counting logic can be exercised with a stub.

use serde::{Deserialize, Serialize};

use crate::agent::SacAgent;
use crate::envs::{Env, EnvState, Environment};
use crate::error::{Error, Result};
use crate::numcore::RngStream;
use crate::replay::{Batch, ReplayBuffer, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Speq,
    UtdK,
    Smr,
}

impl Algo {
    pub const NAMES: [&'static str; 3] = ["speq", "utd_k", "smr"];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Speq => "speq",
            Algo::UtdK => "utd_k",
            Algo::Smr => "smr",
        }
    }
}

/// What a stabilization phase trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizeTarget {
    /// N critic updates, then the step's regular actor update.
    Critics,
    /// One critic update, then N actor updates.
    Policy,
    /// N rounds of (critic update, actor update).
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counting {
    CriticsPlusPolicy,
    CriticsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub algo: Algo,
    pub total_env_steps: u64,
    pub stabilization_period: u64,
    pub stabilization_length: u64,
    pub utd: u64,
    pub reuse: u64,
    /// Defaults to half the stabilization period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_random_steps: Option<u64>,
    pub stabilize_target: StabilizeTarget,
    /// Also step the temperature on the extra actor updates of a phase.
    pub update_alpha_in_stabilization: bool,
    /// Stop once counted critic+policy updates reach this many.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grad_updates: Option<u64>,
    /// Defaults to `total_env_steps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Speq,
            total_env_steps: 30_000,
            stabilization_period: 2_000,
            stabilization_length: 5_000,
            utd: 1,
            reuse: 1,
            warmup_random_steps: None,
            stabilize_target: StabilizeTarget::Critics,
            update_alpha_in_stabilization: false,
            max_grad_updates: None,
            buffer_capacity: None,
        }
    }
}

impl ScheduleConfig {
    pub fn warmup(&self) -> u64 {
        self.warmup_random_steps.unwrap_or(self.stabilization_period / 2)
    }

    pub fn capacity(&self) -> usize {
        self.buffer_capacity.unwrap_or(self.total_env_steps as usize)
    }

    /// Fills every defaulted field with its concrete value.
    pub fn resolved(&self) -> ScheduleConfig {
        ScheduleConfig {
            warmup_random_steps: Some(self.warmup()),
            buffer_capacity: Some(self.capacity()),
            ..self.clone()
        }
    }

    /// Whether SPEQ phases can fire at all.
    pub fn stabilizes(&self) -> bool {
        self.algo == Algo::Speq && self.stabilization_length > 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("schedule.{key}: {msg}")));
        for (key, v) in [
            ("total_env_steps", self.total_env_steps),
            ("stabilization_period", self.stabilization_period),
            ("utd", self.utd),
            ("reuse", self.reuse),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if self.warmup() > self.total_env_steps {
            return bad("warmup_random_steps", format!("{} exceeds total_env_steps", self.warmup()));
        }
        if self.capacity() == 0 {
            return bad("buffer_capacity", "must be positive".into());
        }
        match self.algo {
            Algo::Speq if self.utd != 1 => bad("utd", format!("speq runs at utd = 1, got {}", self.utd)),
            Algo::Speq | Algo::UtdK if self.reuse != 1 => {
                bad("reuse", format!("batch reuse needs algo = smr, got {}", self.algo.name()))
            }
            Algo::Speq if self.stabilization_length > 0 && self.stabilization_period > self.total_env_steps => bad(
                "stabilization_period",
                format!("{} exceeds total_env_steps {}", self.stabilization_period, self.total_env_steps),
            ),
            _ => Ok(()),
        }
    }
}

pub fn should_stabilize(m: u64, period: u64, warmup: u64) -> bool {
    period > 0 && m.is_multiple_of(period) && m > warmup
}

/// Updates a phase adds to (critic, policy) counts beyond the step it replaces.
fn phase_counts(cfg: &ScheduleConfig) -> (u64, u64) {
    let n = cfg.stabilization_length;
    match cfg.stabilize_target {
        StabilizeTarget::Critics => (n, 0),
        StabilizeTarget::Policy => (0, n),
        StabilizeTarget::Both => (n, n),
    }
}

fn combine(critic_per_net: u64, policy: u64, m_critics: u64, counting: Counting) -> u64 {
    critic_per_net * m_critics
        + match counting {
            Counting::CriticsPlusPolicy => policy,
            Counting::CriticsOnly => 0,
        }
}

/// Closed-form update count over `total_env_steps`, ignoring warmup.
pub fn grad_budget(cfg: &ScheduleConfig, m_critics: u64, counting: Counting) -> u64 {
    let m = cfg.total_env_steps;
    match cfg.algo {
        Algo::UtdK | Algo::Smr => combine(m * cfg.utd * cfg.reuse, m, m_critics, counting),
        Algo::Speq => {
            let phases = if cfg.stabilizes() { m / cfg.stabilization_period } else { 0 };
            let (pc, pp) = phase_counts(cfg);
            combine(m + phases * pc, m + phases * pp, m_critics, counting)
        }
    }
}

/// `grad_budget - correction` is exactly what a full run counts. Covers the
/// warmup steps, the single update each phase replaces, and phases whose
/// trigger step fell inside warmup.
pub fn budget_correction(cfg: &ScheduleConfig, m_critics: u64, counting: Counting) -> u64 {
    let w = cfg.warmup();
    match cfg.algo {
        Algo::UtdK | Algo::Smr => combine(w * cfg.utd * cfg.reuse, w, m_critics, counting),
        Algo::Speq => {
            if !cfg.stabilizes() {
                return combine(w, w, m_critics, counting);
            }
            let f = cfg.stabilization_period;
            let fired = cfg.total_env_steps / f - w / f;
            let suppressed = w / f;
            let (pc, pp) = phase_counts(cfg);
            let critic = w + suppressed * pc + if pc > 0 { fired } else { 0 };
            let policy = w + suppressed * pp + if pp > 0 { fired } else { 0 };
            combine(critic, policy, m_critics, counting)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub env_steps: u64,
    /// Every critic in the ensemble is stepped together, so one count covers all.
    pub critic_updates_per_network: u64,
    pub policy_updates: u64,
    pub alpha_updates: u64,
    pub stabilization_phases_completed: u64,
    pub buffer_version_at_phase_start: u64,
}

impl Counters {
    pub fn counted(&self, m_critics: u64, counting: Counting) -> u64 {
        combine(self.critic_updates_per_network, self.policy_updates, m_critics, counting)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseRecord {
    pub env_step: u64,
    pub version_at_start: u64,
    pub version_at_end: u64,
    pub critic_updates: u64,
    pub policy_updates: u64,
}

/// Most recent loss values, for the metrics stream.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LastLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha_loss: f64,
}

/// What a schedule needs from an agent.
pub trait Learner {
    /// Stochastic action for data collection.
    fn act(&mut self, obs: &[f64], rng: &mut RngStream) -> Result<Vec<f64>>;

    /// One update of every critic on `batch`; returns the mean loss.
    fn critic_update(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<f64>;

    /// One actor update; returns (actor loss, alpha loss).
    fn actor_update(&mut self, batch: &Batch, rng: &mut RngStream, update_alpha: bool) -> Result<(f64, f64)>;

    fn batch_size(&self) -> usize;

    fn n_critics(&self) -> usize;
}

impl Learner for SacAgent {
    fn act(&mut self, obs: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        SacAgent::act(self, obs, rng, false)
    }

    fn critic_update(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<f64> {
        self.critic_step(batch, rng)
    }

    fn actor_update(&mut self, batch: &Batch, rng: &mut RngStream, update_alpha: bool) -> Result<(f64, f64)> {
        self.actor_step(batch, rng, update_alpha)
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn n_critics(&self) -> usize {
        self.critics.len()
    }
}

/// Per-purpose random streams of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRngs {
    pub env: RngStream,
    pub explore: RngStream,
    pub policy: RngStream,
    pub replay: RngStream,
    pub update: RngStream,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            env: RngStream::new(seed, "env"),
            explore: RngStream::new(seed, "explore"),
            policy: RngStream::new(seed, "policy"),
            replay: RngStream::new(seed, "replay"),
            update: RngStream::new(seed, "update"),
        }
    }
}

pub struct Trainer<L> {
    pub cfg: ScheduleConfig,
    pub env: Env,
    pub learner: L,
    pub buffer: ReplayBuffer,
    pub env_state: EnvState,
    pub obs: Vec<f64>,
    pub rngs: TrainRngs,
    pub counters: Counters,
    pub last: LastLosses,
    /// Set when the update cap stopped the run early.
    pub capped: bool,
    /// Phases completed in this process; not persisted in checkpoints.
    pub phase_log: Vec<PhaseRecord>,
}

impl<L: Learner> Trainer<L> {
    pub fn new(cfg: ScheduleConfig, env: Env, learner: L, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rngs = TrainRngs::new(seed);
        let (env_state, obs) = env.reset(&mut rngs.env);
        let spec = env.spec();
        let buffer = ReplayBuffer::new(cfg.capacity(), spec.obs_dim, spec.act_dim)?;
        Ok(Self {
            cfg,
            env,
            learner,
            buffer,
            env_state,
            obs,
            rngs,
            counters: Counters::default(),
            last: LastLosses::default(),
            capped: false,
            phase_log: Vec::new(),
        })
    }

    pub fn finished(&self) -> bool {
        self.capped || self.counters.env_steps >= self.cfg.total_env_steps
    }

    /// Counted critic+policy updates so far.
    pub fn counted(&self) -> u64 {
        self.counters.counted(self.learner.n_critics() as u64, Counting::CriticsPlusPolicy)
    }

    /// Runs to completion, calling `after_step` once per env step.
    pub fn run(&mut self, mut after_step: impl FnMut(&Trainer<L>) -> Result<()>) -> Result<()> {
        while !self.finished() {
            self.step()?;
            after_step(self)?;
        }
        Ok(())
    }

    /// One env step and the updates the schedule assigns to it.
    pub fn step(&mut self) -> Result<()> {
        if self.finished() {
            return Err(Error::state("run already finished"));
        }
        let m = self.counters.env_steps + 1;
        let warmup = self.cfg.warmup();
        let action = if m <= warmup {
            let dim = self.env.spec().act_dim;
            (0..dim).map(|_| self.rngs.explore.uniform_range(-1.0, 1.0)).collect()
        } else {
            self.learner.act(&self.obs, &mut self.rngs.policy)?
        };
        let step = self.env.step(&self.env_state, &action)?;
        self.buffer.push(Transition {
            obs: std::mem::take(&mut self.obs),
            action,
            reward: step.reward,
            next_obs: step.obs.clone(),
            terminal: step.terminal,
        })?;
        if step.done() {
            (self.env_state, self.obs) = self.env.reset(&mut self.rngs.env);
        } else {
            self.env_state = step.state;
            self.obs = step.obs;
        }
        self.counters.env_steps = m;

        if m > warmup {
            if self.cfg.stabilizes() && should_stabilize(m, self.cfg.stabilization_period, warmup) {
                self.stabilize(m)?;
            } else {
                self.regular_updates()?;
            }
        }
        if let Some(cap) = self.cfg.max_grad_updates {
            if self.counted() >= cap {
                self.capped = true;
            }
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<Batch> {
        self.buffer.sample_uniform(self.learner.batch_size(), &mut self.rngs.replay)
    }

    fn critic_update(&mut self, batch: &Batch) -> Result<()> {
        self.last.critic = self.learner.critic_update(batch, &mut self.rngs.update)?;
        self.counters.critic_updates_per_network += 1;
        Ok(())
    }

    fn actor_update(&mut self, update_alpha: bool) -> Result<()> {
        let batch = self.sample()?;
        let (actor, alpha) = self.learner.actor_update(&batch, &mut self.rngs.update, update_alpha)?;
        self.last.actor = actor;
        self.counters.policy_updates += 1;
        if update_alpha {
            self.last.alpha_loss = alpha;
            self.counters.alpha_updates += 1;
        }
        Ok(())
    }

    fn regular_updates(&mut self) -> Result<()> {
        let reuse = if self.cfg.algo == Algo::Smr { self.cfg.reuse } else { 1 };
        for _ in 0..self.cfg.utd {
            let batch = self.sample()?;
            for _ in 0..reuse {
                self.critic_update(&batch)?;
            }
        }
        self.actor_update(true)
    }

    /// Offline phase on the buffer as it stands after step `m`'s push.
    fn stabilize(&mut self, m: u64) -> Result<()> {
        let version = self.buffer.version();
        self.counters.buffer_version_at_phase_start = version;
        let (c0, p0) = (self.counters.critic_updates_per_network, self.counters.policy_updates);
        let n = self.cfg.stabilization_length;
        let extra_alpha = self.cfg.update_alpha_in_stabilization;
        match self.cfg.stabilize_target {
            StabilizeTarget::Critics => {
                for _ in 0..n {
                    let batch = self.sample()?;
                    self.critic_update(&batch)?;
                }
                self.actor_update(true)?;
            }
            StabilizeTarget::Policy => {
                let batch = self.sample()?;
                self.critic_update(&batch)?;
                self.actor_update(true)?;
                for _ in 1..n {
                    self.actor_update(extra_alpha)?;
                }
            }
            StabilizeTarget::Both => {
                for i in 0..n {
                    let batch = self.sample()?;
                    self.critic_update(&batch)?;
                    self.actor_update(i == 0 || extra_alpha)?;
                }
            }
        }
        let end = self.buffer.version();
        if end != version {
            return Err(Error::state(format!(
                "replay buffer changed during the phase at step {m}: version {version} -> {end}"
            )));
        }
        self.counters.stabilization_phases_completed += 1;
        self.phase_log.push(PhaseRecord {
            env_step: m,
            version_at_start: version,
            version_at_end: end,
            critic_updates: self.counters.critic_updates_per_network - c0,
            policy_updates: self.counters.policy_updates - p0,
        });
        Ok(())
    }
}

fn require_algo<L>(t: &Trainer<L>, algo: Algo) -> Result<()> {
    if t.cfg.algo != algo {
        return Err(Error::config(format!(
            "schedule.algo is {}, expected {}",
            t.cfg.algo.name(),
            algo.name()
        )));
    }
    Ok(())
}

pub fn run_speq<L: Learner>(t: &mut Trainer<L>, after_step: impl FnMut(&Trainer<L>) -> Result<()>) -> Result<()> {
    require_algo(t, Algo::Speq)?;
    t.run(after_step)
}

pub fn run_utd<L: Learner>(t: &mut Trainer<L>, after_step: impl FnMut(&Trainer<L>) -> Result<()>) -> Result<()> {
    require_algo(t, Algo::UtdK)?;
    t.run(after_step)
}

pub fn run_smr<L: Learner>(t: &mut Trainer<L>, after_step: impl FnMut(&Trainer<L>) -> Result<()>) -> Result<()> {
    require_algo(t, Algo::Smr)?;
    t.run(after_step)
}
