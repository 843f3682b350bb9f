//! Bounded FIFO replay buffer with uniform sampling.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numcore::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// A mini-batch laid out row-per-transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 where the transition ended in a terminal state.
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_indices(mut self, indices: Vec<usize>) -> Batch {
        assert_eq!(indices.len(), self.indices.len());
        self.indices = indices;
        self
    }

    /// Builds a batch from explicit transitions (tests, hand-made data).
    pub fn from_transitions(ts: &[Transition]) -> Batch {
        let obs_dim = ts.first().map_or(0, |t| t.obs.len());
        let act_dim = ts.first().map_or(0, |t| t.action.len());
        let rows = |f: &dyn Fn(&Transition) -> &[f64], width: usize| {
            Array2::from_shape_vec((ts.len(), width), ts.iter().flat_map(|t| f(t).to_vec()).collect())
                .expect("uniform transition widths")
        };
        Batch {
            indices: (0..ts.len()).collect(),
            obs: rows(&|t| &t.obs, obs_dim),
            actions: rows(&|t| &t.action, act_dim),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: rows(&|t| &t.next_obs, obs_dim),
            terminals: ts.iter().map(|t| if t.terminal { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    terminals: Vec<bool>,
    write_index: usize,
    size: usize,
    /// Bumped on every push; lets callers prove the contents did not change.
    version: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            terminals: Vec::new(),
            write_index: 0,
            size: 0,
            version: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn write_index(&self) -> usize {
        self.write_index
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.obs_dim, self.act_dim)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(Error::config("transition dimensions do not match the buffer"));
        }
        let finite = t.reward.is_finite()
            && t.obs.iter().chain(&t.next_obs).chain(&t.action).all(|v| v.is_finite());
        if !finite {
            return Err(Error::numeric("transition has non-finite fields"));
        }
        if t.action.iter().any(|a| a.abs() > 1.0) {
            return Err(Error::config(format!("transition action {:?} outside [-1, 1]", t.action)));
        }

        let slot = self.write_index;
        if self.size < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.terminals.push(t.terminal);
            self.size += 1;
        } else {
            self.obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(&t.obs);
            self.actions[slot * self.act_dim..(slot + 1) * self.act_dim].copy_from_slice(&t.action);
            self.rewards[slot] = t.reward;
            self.next_obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
            self.terminals[slot] = t.terminal;
        }
        self.write_index = (slot + 1) % self.capacity;
        self.version += 1;
        Ok(())
    }

    /// Transition in physical slot `i` (`i < len()`).
    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.size, "replay index {i} out of range {}", self.size);
        Transition {
            obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.actions[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            reward: self.rewards[i],
            next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            terminal: self.terminals[i],
        }
    }

    /// Slots in insertion order, oldest first.
    pub fn iter_fifo(&self) -> impl Iterator<Item = Transition> + '_ {
        let start = if self.size < self.capacity { 0 } else { self.write_index };
        (0..self.size).map(move |k| self.get((start + k) % self.size.max(1)))
    }

    /// `batch_size` independent uniform draws with replacement.
    pub fn sample_uniform(&self, batch_size: usize, rng: &mut RngStream) -> Result<Batch> {
        if self.size == 0 {
            return Err(Error::state("cannot sample from an empty replay buffer"));
        }
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let indices: Vec<usize> = (0..batch_size).map(|_| rng.index(self.size)).collect();
        Ok(self.gather(indices))
    }

    pub fn gather(&self, indices: Vec<usize>) -> Batch {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let n = indices.len();
        let mut obs = Array2::zeros((n, od));
        let mut actions = Array2::zeros((n, ad));
        let mut next_obs = Array2::zeros((n, od));
        let mut rewards = Array1::zeros(n);
        let mut terminals = Array1::zeros(n);
        for (row, &i) in indices.iter().enumerate() {
            assert!(i < self.size, "replay index {i} out of range {}", self.size);
            obs.row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.obs[i * od..(i + 1) * od]);
            next_obs
                .row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.next_obs[i * od..(i + 1) * od]);
            actions
                .row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.actions[i * ad..(i + 1) * ad]);
            rewards[row] = self.rewards[i];
            terminals[row] = if self.terminals[i] { 1.0 } else { 0.0 };
        }
        Batch {
            indices,
            obs,
            actions,
            rewards,
            next_obs,
            terminals,
        }
    }

    /// Raw storage for checkpointing: (obs, actions, rewards, next_obs, terminals).
    pub fn raw_parts(&self) -> (&[f64], &[f64], &[f64], &[f64], &[bool]) {
        (&self.obs, &self.actions, &self.rewards, &self.next_obs, &self.terminals)
    }

    /// Inverse of [`raw_parts`](Self::raw_parts) plus the cursor fields.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw_parts(
        capacity: usize,
        obs_dim: usize,
        act_dim: usize,
        obs: Vec<f64>,
        actions: Vec<f64>,
        rewards: Vec<f64>,
        next_obs: Vec<f64>,
        terminals: Vec<bool>,
        write_index: usize,
        version: u64,
    ) -> Result<Self> {
        let size = rewards.len();
        let consistent = capacity > 0
            && size <= capacity
            && obs.len() == size * obs_dim
            && next_obs.len() == size * obs_dim
            && actions.len() == size * act_dim
            && terminals.len() == size
            && write_index < capacity
            && (size == capacity || write_index == size);
        if !consistent {
            return Err(Error::checkpoint("replay buffer fields are inconsistent"));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs,
            actions,
            rewards,
            next_obs,
            terminals,
            write_index,
            size,
            version,
        })
    }
}
