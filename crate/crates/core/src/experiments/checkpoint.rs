//! Binary checkpoints of a training run.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SPEQCKPT"
//! version    u32
//! digest     32 bytes  SHA-256 of the resolved config
//! precision  u8        bytes per float (8)
//! seed       u64
//! count      u32
//! count x entry:
//!   name_len u16, name (UTF-8)
//!   kind     u8        0 = f64, 1 = u64, 2 = u8
//!   len      u64       number of elements
//!   payload  len * element size
//! ```
//!
//! Parameters, optimizer moments, RNG states `[seed, stream, pos_lo, pos_hi]`,
//! counters, environment state and (optionally) the replay buffer are all
//! stored as named entries in a fixed order. A file is parsed completely
//! before any state is built from it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::agent::SacAgent;
use crate::envs::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::numcore::{AdamState, MlpParams, RngStream};
use crate::replay::ReplayBuffer;
use crate::schedule::{Counters, LastLosses, TrainRngs, Trainer};

use super::config::ExperimentConfig;

pub const MAGIC: &[u8; 8] = b"SPEQCKPT";
pub const FORMAT_VERSION: u32 = 1;
const PRECISION_BYTES: u8 = 8;

#[derive(Clone, Debug, PartialEq)]
enum Values {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub seed: u64,
    pub agent: SacAgent,
    pub env_state: EnvState,
    pub obs: Vec<f64>,
    pub rngs: TrainRngs,
    pub counters: Counters,
    pub last: LastLosses,
    pub capped: bool,
    pub buffer: Option<ReplayBuffer>,
}

impl Snapshot {
    pub fn capture(t: &Trainer<SacAgent>, seed: u64, with_buffer: bool) -> Snapshot {
        Snapshot {
            seed,
            agent: t.learner.clone(),
            env_state: t.env_state.clone(),
            obs: t.obs.clone(),
            rngs: t.rngs.clone(),
            counters: t.counters.clone(),
            last: t.last,
            capped: t.capped,
            buffer: with_buffer.then(|| t.buffer.clone()),
        }
    }

    /// Rebuilds a trainer; refuses snapshots saved without their buffer.
    pub fn into_trainer(self, cfg: &ExperimentConfig) -> Result<Trainer<SacAgent>> {
        let buffer = self
            .buffer
            .ok_or_else(|| Error::checkpoint("saved without the replay buffer; an exact resume is impossible"))?;
        Ok(Trainer {
            cfg: cfg.schedule.clone(),
            env: cfg.env()?,
            learner: self.agent,
            buffer,
            env_state: self.env_state,
            obs: self.obs,
            rngs: self.rngs,
            counters: self.counters,
            last: self.last,
            capped: self.capped,
            phase_log: Vec::new(),
        })
    }
}

struct Writer {
    entries: Vec<(String, Values)>,
}

impl Writer {
    fn f64s(&mut self, name: impl Into<String>, v: &[f64]) {
        self.entries.push((name.into(), Values::F64(v.to_vec())));
    }

    fn u64s(&mut self, name: impl Into<String>, v: &[u64]) {
        self.entries.push((name.into(), Values::U64(v.to_vec())));
    }

    fn net(&mut self, name: &str, p: &MlpParams) {
        self.f64s(name, &p.to_flat());
    }

    fn adam(&mut self, name: &str, a: &AdamState) {
        self.f64s(format!("adam/{name}/m"), &a.first_moment);
        self.f64s(format!("adam/{name}/v"), &a.second_moment);
        self.u64s(format!("adam/{name}/t"), &[a.step_count]);
    }

    fn rng(&mut self, name: &str, r: &RngStream) {
        let pos = r.counter();
        self.u64s(format!("rng/{name}"), &[r.seed(), r.stream_id(), pos as u64, (pos >> 64) as u64]);
    }
}

fn rng_slots(r: &TrainRngs) -> [(&'static str, &RngStream); 5] {
    [
        ("env", &r.env),
        ("explore", &r.explore),
        ("policy", &r.policy),
        ("replay", &r.replay),
        ("update", &r.update),
    ]
}

pub fn encode(snap: &Snapshot, digest: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer { entries: Vec::new() };
    let a = &snap.agent;
    w.net("actor", &a.actor.net);
    for (j, c) in a.critics.online.iter().enumerate() {
        w.net(&format!("critic/{j}"), c);
    }
    for (j, c) in a.critics.targets.iter().enumerate() {
        w.net(&format!("target/{j}"), c);
    }
    w.f64s("log_alpha", &[a.temp.log_alpha]);
    w.f64s("target_entropy", &[a.temp.target_entropy]);
    w.adam("actor", &a.actor_opt);
    for (j, o) in a.critic_opts.iter().enumerate() {
        w.adam(&format!("critic/{j}"), o);
    }
    w.adam("alpha", &a.temp.optimizer);
    w.u64s("agent/updates", &[a.policy_updates, a.alpha_updates]);
    w.u64s("critic/update_counts", &a.critics.update_counts);
    for (name, r) in rng_slots(&snap.rngs) {
        w.rng(name, r);
    }
    let c = &snap.counters;
    w.u64s(
        "counters",
        &[
            c.env_steps,
            c.critic_updates_per_network,
            c.policy_updates,
            c.alpha_updates,
            c.stabilization_phases_completed,
            c.buffer_version_at_phase_start,
            u64::from(snap.capped),
        ],
    );
    w.f64s("last_losses", &[snap.last.critic, snap.last.actor, snap.last.alpha_loss]);
    w.f64s("env/physics", &snap.env_state.physics);
    w.u64s("env/steps_elapsed", &[snap.env_state.steps_elapsed as u64]);
    w.f64s("env/obs", &snap.obs);
    if let Some(b) = &snap.buffer {
        let (obs, actions, rewards, next_obs, terminals) = b.raw_parts();
        w.u64s("buffer/meta", &[b.capacity() as u64, b.write_index() as u64, b.version()]);
        w.f64s("buffer/obs", obs);
        w.f64s("buffer/actions", actions);
        w.f64s("buffer/rewards", rewards);
        w.f64s("buffer/next_obs", next_obs);
        w.entries.push(("buffer/terminals".into(), Values::U8(terminals.iter().map(|&t| u8::from(t)).collect())));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.push(PRECISION_BYTES);
    out.extend_from_slice(&snap.seed.to_le_bytes());
    out.extend_from_slice(&(w.entries.len() as u32).to_le_bytes());
    for (name, values) in &w.entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        match values {
            Values::F64(v) => {
                out.push(0);
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            Values::U64(v) => {
                out.push(1);
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            Values::U8(v) => {
                out.push(2);
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                out.extend_from_slice(v);
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
}

/// Header fields plus the raw entries, fully validated for framing.
struct Parsed {
    digest: [u8; 32],
    seed: u64,
    entries: BTreeMap<String, Values>,
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::checkpoint("bad magic; not a checkpoint file"));
    }
    let version = c.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::checkpoint(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let digest: [u8; 32] = c.array("config digest")?;
    let precision = c.u8("precision")?;
    if precision != PRECISION_BYTES {
        return Err(Error::checkpoint(format!("unsupported precision of {precision} bytes per float")));
    }
    let seed = c.u64("seed")?;
    let count = c.u32("entry count")?;
    let mut entries = BTreeMap::new();
    for i in 0..count {
        let name_len = c.u16("entry name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "entry name")?)
            .map_err(|_| Error::checkpoint(format!("entry {i}: name is not UTF-8")))?
            .to_string();
        let kind = c.u8("entry kind")?;
        let len = c.u64("entry length")?;
        let width = match kind {
            0 | 1 => 8,
            2 => 1,
            k => return Err(Error::checkpoint(format!("{name}: unknown element kind {k}"))),
        };
        let n_bytes = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_mul(width))
            .ok_or_else(|| Error::checkpoint(format!("{name}: length {len} out of range")))?;
        let raw = c.take(n_bytes, &name)?;
        let values = match kind {
            0 => Values::F64(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
            1 => Values::U64(raw.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect()),
            _ => Values::U8(raw.to_vec()),
        };
        if entries.insert(name.clone(), values).is_some() {
            return Err(Error::checkpoint(format!("duplicate entry {name}")));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(Parsed { digest, seed, entries })
}

struct Reader {
    entries: BTreeMap<String, Values>,
}

impl Reader {
    fn f64s(&mut self, name: &str, len: Option<usize>) -> Result<Vec<f64>> {
        match self.entries.remove(name) {
            Some(Values::F64(v)) if len.is_none_or(|l| l == v.len()) => Ok(v),
            Some(_) => Err(Error::checkpoint(format!("{name}: wrong type or length"))),
            None => Err(Error::checkpoint(format!("missing entry {name}"))),
        }
    }

    fn u64s(&mut self, name: &str, len: usize) -> Result<Vec<u64>> {
        match self.entries.remove(name) {
            Some(Values::U64(v)) if v.len() == len => Ok(v),
            Some(_) => Err(Error::checkpoint(format!("{name}: wrong type or length"))),
            None => Err(Error::checkpoint(format!("missing entry {name}"))),
        }
    }

    fn scalar(&mut self, name: &str) -> Result<f64> {
        Ok(self.f64s(name, Some(1))?[0])
    }

    fn net(&mut self, name: &str, p: &mut MlpParams) -> Result<()> {
        let flat = self.f64s(name, Some(p.num_params()))?;
        p.set_flat(&flat)
    }

    fn adam(&mut self, name: &str, a: &mut AdamState) -> Result<()> {
        let n = a.first_moment.len();
        a.first_moment = self.f64s(&format!("adam/{name}/m"), Some(n))?;
        a.second_moment = self.f64s(&format!("adam/{name}/v"), Some(n))?;
        a.step_count = self.u64s(&format!("adam/{name}/t"), 1)?[0];
        Ok(())
    }

    fn rng(&mut self, name: &str) -> Result<RngStream> {
        let v = self.u64s(&format!("rng/{name}"), 4)?;
        Ok(RngStream::from_parts(v[0], v[1], u128::from(v[2]) | (u128::from(v[3]) << 64)))
    }
}

/// Decodes a checkpoint written for `cfg`. The config digest must match.
pub fn decode(bytes: &[u8], cfg: &ExperimentConfig) -> Result<Snapshot> {
    let parsed = parse(bytes)?;
    if parsed.digest != cfg.digest() {
        return Err(Error::checkpoint("config digest mismatch; the checkpoint belongs to a different config"));
    }
    let env = cfg.env()?;
    let spec = env.spec();
    let mut agent = SacAgent::new(
        cfg.agent.clone(),
        spec.obs_dim,
        spec.act_dim,
        &mut RngStream::new(parsed.seed, "init"),
    )?;
    let mut r = Reader { entries: parsed.entries };

    r.net("actor", &mut agent.actor.net)?;
    for (j, c) in agent.critics.online.iter_mut().enumerate() {
        r.net(&format!("critic/{j}"), c)?;
    }
    for (j, c) in agent.critics.targets.iter_mut().enumerate() {
        r.net(&format!("target/{j}"), c)?;
    }
    agent.temp.log_alpha = r.scalar("log_alpha")?;
    agent.temp.target_entropy = r.scalar("target_entropy")?;
    r.adam("actor", &mut agent.actor_opt)?;
    for (j, o) in agent.critic_opts.iter_mut().enumerate() {
        r.adam(&format!("critic/{j}"), o)?;
    }
    r.adam("alpha", &mut agent.temp.optimizer)?;
    let updates = r.u64s("agent/updates", 2)?;
    (agent.policy_updates, agent.alpha_updates) = (updates[0], updates[1]);
    agent.critics.update_counts = r.u64s("critic/update_counts", agent.critics.len())?;

    let rngs = TrainRngs {
        env: r.rng("env")?,
        explore: r.rng("explore")?,
        policy: r.rng("policy")?,
        replay: r.rng("replay")?,
        update: r.rng("update")?,
    };
    let c = r.u64s("counters", 7)?;
    let counters = Counters {
        env_steps: c[0],
        critic_updates_per_network: c[1],
        policy_updates: c[2],
        alpha_updates: c[3],
        stabilization_phases_completed: c[4],
        buffer_version_at_phase_start: c[5],
    };
    let l = r.f64s("last_losses", Some(3))?;
    let last = LastLosses {
        critic: l[0],
        actor: l[1],
        alpha_loss: l[2],
    };
    let physics = r.f64s("env/physics", None)?;
    let steps_elapsed = r.u64s("env/steps_elapsed", 1)?[0] as usize;
    let obs = r.f64s("env/obs", Some(spec.obs_dim))?;

    let buffer = if r.entries.contains_key("buffer/meta") {
        let meta = r.u64s("buffer/meta", 3)?;
        let terminals = match r.entries.remove("buffer/terminals") {
            Some(Values::U8(v)) if v.iter().all(|&b| b <= 1) => v.into_iter().map(|b| b == 1).collect(),
            _ => return Err(Error::checkpoint("buffer/terminals: missing or malformed")),
        };
        Some(ReplayBuffer::from_raw_parts(
            meta[0] as usize,
            spec.obs_dim,
            spec.act_dim,
            r.f64s("buffer/obs", None)?,
            r.f64s("buffer/actions", None)?,
            r.f64s("buffer/rewards", None)?,
            r.f64s("buffer/next_obs", None)?,
            terminals,
            meta[1] as usize,
            meta[2],
        )?)
    } else {
        None
    };
    if let Some(name) = r.entries.keys().next() {
        return Err(Error::checkpoint(format!("unexpected entry {name}")));
    }
    if counters.env_steps > cfg.schedule.total_env_steps {
        return Err(Error::checkpoint("counters run past the configured horizon"));
    }
    Ok(Snapshot {
        seed: parsed.seed,
        agent,
        env_state: EnvState { physics, steps_elapsed },
        obs,
        rngs,
        counters,
        last,
        capped: c[6] != 0,
        buffer,
    })
}

pub fn save(path: &Path, snap: &Snapshot, cfg: &ExperimentConfig) -> Result<()> {
    let bytes = encode(snap, &cfg.digest());
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, cfg: &ExperimentConfig) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, cfg).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Seed recorded in a checkpoint header, without decoding the body.
pub fn peek_seed(bytes: &[u8]) -> Result<u64> {
    Ok(parse(bytes)?.seed)
}
