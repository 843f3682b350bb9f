//! Desk-scale experiment sets on pendulum.
//!
//! Scale: M = 30,000 env steps, F = 2,000, N = 5,000, warmup 1,000, seeds
//! 1..=5. Runs land in `runs/<preset>/<run name>`.

use std::path::PathBuf;

use crate::agent::CriticVariant;
use crate::error::{Error, Result};
use crate::schedule::{budget_correction, grad_budget, Algo, Counting, ScheduleConfig, StabilizeTarget};

use super::config::ExperimentConfig;

pub const PRESET_NAMES: [&str; 7] = [
    "vary_N",
    "vary_F",
    "utd_sweep",
    "equal_budget",
    "baselines",
    "ablation_regularizer",
    "ablation_policy",
];

pub const DESK_STEPS: u64 = 30_000;
pub const DESK_WARMUP: u64 = 1_000;
pub const DESK_PERIOD: u64 = 2_000;
pub const DESK_LENGTH: u64 = 5_000;

fn base(name: &str, algo: Algo) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: name.into(),
        ..ExperimentConfig::default()
    };
    cfg.schedule = ScheduleConfig {
        algo,
        total_env_steps: DESK_STEPS,
        stabilization_period: DESK_PERIOD,
        stabilization_length: DESK_LENGTH,
        warmup_random_steps: Some(DESK_WARMUP),
        ..ScheduleConfig::default()
    };
    cfg
}

pub fn speq(name: &str) -> ExperimentConfig {
    base(name, Algo::Speq)
}

fn with_critic(mut cfg: ExperimentConfig, variant: CriticVariant, n_critics: usize) -> ExperimentConfig {
    cfg.agent.critic = variant;
    cfg.agent.n_critics = n_critics;
    cfg
}

pub fn sac(name: &str) -> ExperimentConfig {
    with_critic(base(name, Algo::UtdK), CriticVariant::DoubleQ, 2)
}

pub fn droq(name: &str, utd: u64) -> ExperimentConfig {
    let mut cfg = base(name, Algo::UtdK);
    cfg.schedule.utd = utd;
    cfg
}

pub fn redq(name: &str, utd: u64) -> ExperimentConfig {
    let mut cfg = with_critic(base(name, Algo::UtdK), CriticVariant::EnsembleQ, 20);
    cfg.schedule.utd = utd;
    cfg
}

fn smr(mut cfg: ExperimentConfig, utd: u64, reuse: u64) -> ExperimentConfig {
    cfg.schedule.algo = Algo::Smr;
    cfg.schedule.utd = utd;
    cfg.schedule.reuse = reuse;
    cfg
}

/// Counted updates of a full desk SPEQ run.
pub fn speq_budget() -> u64 {
    let s = speq("speq").schedule;
    let c = Counting::CriticsPlusPolicy;
    grad_budget(&s, 2, c) - budget_correction(&s, 2, c)
}

/// Caps the run at `cap` counted updates and stretches the horizon so the
/// cap, not the step limit, ends it.
fn capped(mut cfg: ExperimentConfig, cap: u64) -> ExperimentConfig {
    let s = &cfg.schedule;
    let per_step = if s.algo == Algo::Speq {
        None
    } else {
        Some(s.utd * s.reuse * cfg.agent.n_critics as u64 + 1)
    };
    if let Some(per_step) = per_step {
        cfg.schedule.total_env_steps = cfg.schedule.total_env_steps.max(DESK_WARMUP + cap.div_ceil(per_step));
    }
    cfg.schedule.max_grad_updates = Some(cap);
    cfg
}

fn finish(preset: &str, configs: Vec<ExperimentConfig>) -> Result<Vec<ExperimentConfig>> {
    configs
        .into_iter()
        .map(|mut cfg| {
            cfg.out_dir = PathBuf::from("runs").join(preset).join(&cfg.name);
            cfg.resolve()
        })
        .collect()
}

pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>> {
    let configs = match name {
        "vary_N" => [0, 1_250, 2_500, 5_000, 10_000]
            .into_iter()
            .map(|n| {
                let mut cfg = speq(&format!("speq_N{n}"));
                cfg.schedule.stabilization_length = n;
                cfg
            })
            .collect(),
        "vary_F" => [1_000, 2_000, 10_000, 20_000]
            .into_iter()
            .map(|f| {
                let mut cfg = speq(&format!("speq_F{f}"));
                cfg.schedule.stabilization_period = f;
                cfg
            })
            .collect(),
        "utd_sweep" => {
            let mut v: Vec<_> = [2, 3, 9, 20].into_iter().map(|u| droq(&format!("droq_utd{u}"), u)).collect();
            v.push(speq("speq"));
            v
        }
        "equal_budget" => {
            let cap = speq_budget();
            vec![
                speq("speq"),
                sac("sac"),
                droq("droq_utd20", 20),
                redq("redq_utd20", 20),
                smr(sac("smr_sac"), 1, 10),
                smr(redq("smr_redq", 20), 20, 5),
            ]
            .into_iter()
            .map(|cfg| capped(cfg, cap))
            .collect()
        }
        "baselines" => vec![
            sac("sac"),
            droq("droq_utd20", 20),
            redq("redq_utd20", 20),
            smr(sac("smr_sac"), 1, 10),
            speq("speq"),
        ],
        "ablation_regularizer" => vec![
            speq("speq"),
            with_critic(speq("speq_no_dropout"), CriticVariant::DoubleQ, 2),
            with_critic(speq("speq_ensemble"), CriticVariant::EnsembleQ, 20),
            redq("redq_utd20", 20),
            sac("sac"),
        ],
        "ablation_policy" => [
            ("speq_critics", StabilizeTarget::Critics),
            ("speq_policy", StabilizeTarget::Policy),
            ("speq_both", StabilizeTarget::Both),
        ]
        .into_iter()
        .map(|(n, target)| {
            let mut cfg = speq(n);
            cfg.schedule.stabilize_target = target;
            cfg
        })
        .collect(),
        other => {
            return Err(Error::config(format!(
                "unknown preset {other:?}; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    finish(name, configs)
}
