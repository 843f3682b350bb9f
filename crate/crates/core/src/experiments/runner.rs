//! Per-seed training runs and the multi-seed summary.
//!
//! Output layout under the config's output root:
//!
//! ```text
//! config.toml        resolved config echo
//! VERSION            code-version string
//! summary.csv        one row per completed seed
//! summary.txt        mean ± std, budget table, failures
//! seed_<s>/metrics.csv
//! seed_<s>/ckpt_<step>.bin, ckpt_final.bin
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::SacAgent;
use crate::diagnostics::{bias_horizon, estimate_bias, evaluate_policy, mean_and_std, read_metrics, MetricsRow, MetricsWriter};
use crate::envs::{Env, Environment};
use crate::error::{Error, Result};
use crate::numcore::RngStream;
use crate::schedule::{budget_correction, grad_budget, Counters, Counting, Trainer};

use super::checkpoint::{self, Snapshot};
use super::config::ExperimentConfig;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "ckpt_final.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub counters: Counters,
    pub n_critics: u64,
    pub capped: bool,
    pub metrics_path: PathBuf,
}

impl SeedResult {
    pub fn counted(&self, counting: Counting) -> u64 {
        self.counters.counted(self.n_critics, counting)
    }
}

/// Closed-form budget next to what a full, uncapped run must count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetLine {
    pub grad_budget: u64,
    pub correction: u64,
    pub predicted: u64,
}

pub fn budget_line(cfg: &ExperimentConfig, counting: Counting) -> BudgetLine {
    let m = cfg.agent.n_critics as u64;
    let grad_budget = grad_budget(&cfg.schedule, m, counting);
    let correction = budget_correction(&cfg.schedule, m, counting);
    BudgetLine {
        grad_budget,
        correction,
        predicted: grad_budget - correction,
    }
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub results: Vec<SeedResult>,
    pub failures: Vec<(u64, String)>,
}

#[derive(Serialize)]
struct SummaryRow {
    seed: u64,
    final_return_mean: f64,
    final_return_std: f64,
    env_steps: u64,
    critic_updates_total: u64,
    policy_updates_total: u64,
    counted_updates: u64,
    capped: bool,
}

impl Summary {
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Mean and sample std over seeds of the final evaluation return.
    pub fn final_return(&self) -> (f64, f64) {
        let finals: Vec<f64> = self.results.iter().map(|r| r.final_return_mean).collect();
        mean_and_std(&finals, 1.0)
    }

    pub fn to_text(&self) -> String {
        let cfg = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "run: {}", cfg.name);
        let _ = writeln!(s, "code: {CODE_VERSION}");
        let _ = writeln!(
            s,
            "algo: {} / {} x{} on {}",
            cfg.schedule.algo.name(),
            cfg.agent.critic.name(),
            cfg.agent.n_critics,
            cfg.env
        );
        let _ = writeln!(s, "seeds completed: {} of {}", self.results.len(), cfg.seeds.len());
        if self.partial() {
            let _ = writeln!(s, "PARTIAL RESULTS");
            for (seed, msg) in &self.failures {
                let _ = writeln!(s, "  seed {seed} failed: {msg}");
            }
        }
        if !self.results.is_empty() {
            let (mean, std) = self.final_return();
            let _ = writeln!(s, "final eval return: {mean:.3} ± {std:.3}");
        }
        for counting in [Counting::CriticsPlusPolicy, Counting::CriticsOnly] {
            let b = budget_line(cfg, counting);
            let _ = writeln!(s, "\nbudget ({})", counting_name(counting));
            let _ = writeln!(s, "  grad_budget       {}", b.grad_budget);
            let _ = writeln!(s, "  warmup correction {}", b.correction);
            let _ = writeln!(s, "  predicted         {}", b.predicted);
            if let Some(cap) = cfg.schedule.max_grad_updates {
                let _ = writeln!(s, "  cap               {cap}");
            }
            for r in &self.results {
                let note = if r.capped { " (capped)" } else { "" };
                let _ = writeln!(s, "  seed {:<5} counted {}{note}", r.seed, r.counted(counting));
            }
        }
        s
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join("summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::state(format!("{}: {e}", path.display())))?;
        for r in &self.results {
            w.serialize(SummaryRow {
                seed: r.seed,
                final_return_mean: r.final_return_mean,
                final_return_std: r.final_return_std,
                env_steps: r.counters.env_steps,
                critic_updates_total: r.counters.critic_updates_per_network * r.n_critics,
                policy_updates_total: r.counters.policy_updates,
                counted_updates: r.counted(Counting::CriticsPlusPolicy),
                capped: r.capped,
            })
            .map_err(|e| Error::state(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let text = root.join("summary.txt");
        fs::write(&text, self.to_text()).map_err(|e| Error::io(&text, e))
    }
}

pub fn counting_name(c: Counting) -> &'static str {
    match c {
        Counting::CriticsPlusPolicy => "critics_plus_policy",
        Counting::CriticsOnly => "critics_only",
    }
}

fn metrics_row(
    cfg: &ExperimentConfig,
    seed: u64,
    t: &Trainer<SacAgent>,
    eval_env: &Env,
    started: Instant,
) -> Result<MetricsRow> {
    let m = t.counters.env_steps;
    let agent = &t.learner;
    let (eval_mean, eval_std) =
        evaluate_policy(agent, eval_env, cfg.eval_episodes, &mut RngStream::new(seed, &format!("eval/{m}")))?;
    let (bias, normalized) = if cfg.bias_points > 0 {
        let gamma = cfg.agent.gamma;
        let est = estimate_bias(
            agent,
            eval_env,
            cfg.bias_points,
            bias_horizon(gamma),
            gamma,
            &mut RngStream::new(seed, &format!("bias/{m}")),
        )?;
        (est.mean_bias, est.normalized_mean)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(MetricsRow {
        env_step: m,
        critic_updates_total: t.counters.critic_updates_per_network * agent.critics.len() as u64,
        policy_updates_total: t.counters.policy_updates,
        eval_return_mean: eval_mean,
        eval_return_std: eval_std,
        q_bias_mean: bias,
        q_bias_normalized: normalized,
        critic_loss: t.last.critic,
        actor_loss: t.last.actor,
        alpha: agent.temp.alpha(),
        wall_ms: if cfg.log_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
    })
}

fn drive(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    mut t: Trainer<SacAgent>,
    mut writer: MetricsWriter,
) -> Result<SeedResult> {
    let eval_env = cfg.env()?;
    let started = Instant::now();
    let outcome = t.run(|t| {
        let m = t.counters.env_steps;
        if m % cfg.eval_interval == 0 || t.finished() {
            let row = metrics_row(cfg, seed, t, &eval_env, started)?;
            log::debug!("seed {seed} step {m}: return {:.2}", row.eval_return_mean);
            writer.write(&row)?;
        }
        if cfg.checkpoint_interval > 0 && m % cfg.checkpoint_interval == 0 {
            let path = dir.join(format!("ckpt_{m:08}.bin"));
            checkpoint::save(&path, &Snapshot::capture(t, seed, cfg.checkpoint_buffer), cfg)?;
        }
        Ok(())
    });
    if let Err(e) = outcome {
        let path = dir.join("ckpt_failed.bin");
        match checkpoint::save(&path, &Snapshot::capture(&t, seed, true), cfg) {
            Ok(()) => log::error!("seed {seed} failed at step {}: {e}; state saved to {}", t.counters.env_steps, path.display()),
            Err(save_err) => log::error!("seed {seed} failed: {e}; saving diagnostic state also failed: {save_err}"),
        }
        return Err(e);
    }
    checkpoint::save(&dir.join(FINAL_CHECKPOINT), &Snapshot::capture(&t, seed, cfg.checkpoint_buffer), cfg)?;

    let metrics_path = dir.join(METRICS_FILE);
    let rows = read_metrics(&metrics_path)?;
    let last = rows
        .last()
        .ok_or_else(|| Error::state(format!("{}: no evaluation rows", metrics_path.display())))?;
    Ok(SeedResult {
        seed,
        final_return_mean: last.eval_return_mean,
        final_return_std: last.eval_return_std,
        counters: t.counters.clone(),
        n_critics: t.learner.critics.len() as u64,
        capped: t.capped,
        metrics_path,
    })
}

/// Trains one seed from scratch into `seed_dir(seed)`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let dir = cfg.seed_dir(seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let env = cfg.env()?;
    let spec = env.spec().clone();
    let agent = SacAgent::new(cfg.agent.clone(), spec.obs_dim, spec.act_dim, &mut RngStream::new(seed, "init"))?;
    let trainer = Trainer::new(cfg.schedule.clone(), env, agent, seed)?;
    let writer = MetricsWriter::create(&dir.join(METRICS_FILE))?;
    log::info!("{}: seed {seed} started", cfg.name);
    drive(cfg, seed, &dir, trainer, writer)
}

/// Continues the run a checkpoint came from. The config is read from the
/// run root two levels up; metrics rows past the checkpoint are discarded.
pub fn resume(checkpoint_path: &Path) -> Result<SeedResult> {
    let dir = checkpoint_path
        .parent()
        .ok_or_else(|| Error::config(format!("{}: no seed directory", checkpoint_path.display())))?;
    let root = dir
        .parent()
        .ok_or_else(|| Error::config(format!("{}: no run directory", dir.display())))?;
    let cfg = ExperimentConfig::load(&root.join(CONFIG_FILE))?;
    let snap = checkpoint::load(checkpoint_path, &cfg)?;
    let seed = snap.seed;
    let through = snap.counters.env_steps;
    let trainer = snap.into_trainer(&cfg)?;
    let writer = MetricsWriter::resume(&dir.join(METRICS_FILE), through)?;
    log::info!("{}: seed {seed} resumed at step {through}", cfg.name);
    drive(&cfg, seed, dir, trainer, writer)
}

/// Writes the provenance files under the output root and returns it.
pub fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let root = cfg.output_root();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let config = root.join(CONFIG_FILE);
    fs::write(&config, cfg.to_toml()).map_err(|e| Error::io(&config, e))?;
    let version = root.join("VERSION");
    fs::write(&version, format!("{CODE_VERSION}\n")).map_err(|e| Error::io(&version, e))?;
    Ok(root)
}

/// Runs every seed (in parallel when threads are available) and writes the
/// summary. Failed seeds are logged and left out; the summary says so.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let root = prepare_output(cfg)?;
    let outcomes: Vec<(u64, Result<SeedResult>)> = cfg.seeds.par_iter().map(|&s| (s, run_seed(cfg, s))).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                log::error!("{}: seed {seed} excluded: {e}", cfg.name);
                failures.push((seed, e.to_string()));
            }
        }
    }
    let summary = Summary {
        config: cfg.clone(),
        results,
        failures,
    };
    summary.write(&root)?;
    Ok(summary)
}
