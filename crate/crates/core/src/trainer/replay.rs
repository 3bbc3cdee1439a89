use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::TensorArchive;
use crate::error::{Error, Result};
use crate::mdp::Transition;

/// Bounded FIFO transition store with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

/// Column-stacked transitions. `done` is 1 where the episode ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub constraints: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Structural("empty batch".into()))?;
        let (b, o, a, m) = (
            items.len(),
            first.state.len(),
            first.action.len(),
            first.constraint_values.len(),
        );
        let mut batch = Batch {
            obs: Array2::zeros((b, o)),
            actions: Array2::zeros((b, a)),
            rewards: Array1::zeros(b),
            constraints: Array2::zeros((b, m)),
            next_obs: Array2::zeros((b, o)),
            done: Array1::zeros(b),
        };
        for (i, tr) in items.iter().enumerate() {
            if tr.state.len() != o || tr.action.len() != a || tr.constraint_values.len() != m || tr.next_state.len() != o {
                return Err(Error::Structural(format!("transition {i} has mismatched dimensions")));
            }
            batch.obs.row_mut(i).assign(&Array1::from(tr.state.clone()));
            batch.actions.row_mut(i).assign(&Array1::from(tr.action.clone()));
            batch.rewards[i] = tr.reward;
            batch.constraints.row_mut(i).assign(&Array1::from(tr.constraint_values.clone()));
            batch.next_obs.row_mut(i).assign(&Array1::from(tr.next_state.clone()));
            batch.done[i] = if tr.done() { 1.0 } else { 0.0 };
        }
        Ok(batch)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::construction("buffer_capacity", "must be positive"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, tr: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::Structural("sampling from an empty buffer".into()));
        }
        let len = self.items.len();
        let picks: Vec<&Transition> = (0..n).map(|_| &self.items[self.rng.random_range(0..len)]).collect();
        Batch::from_transitions(&picks)
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Stores contents as `replay.*` columns.
    pub fn export(&self, archive: &mut TensorArchive) -> Result<()> {
        let n = self.items.len();
        let dims = self
            .items
            .front()
            .map(|t| (t.state.len(), t.action.len(), t.constraint_values.len()))
            .unwrap_or((0, 0, 0));
        let (o, a, m) = dims;
        let mut cols: [Vec<f64>; 6] = Default::default();
        for tr in &self.items {
            cols[0].extend_from_slice(&tr.state);
            cols[1].extend_from_slice(&tr.action);
            cols[2].push(tr.reward);
            cols[3].extend_from_slice(&tr.constraint_values);
            cols[4].extend_from_slice(&tr.next_state);
            cols[5].extend([tr.timestep as f64, tr.terminal as u8 as f64, tr.truncated as u8 as f64]);
        }
        let shapes = [vec![n, o], vec![n, a], vec![n], vec![n, m], vec![n, o], vec![n, 3]];
        for ((name, shape), col) in REPLAY_COLUMNS.iter().zip(shapes).zip(&cols) {
            archive.push(format!("replay.{name}"), shape, col)?;
        }
        Ok(())
    }

    /// Rebuilds contents from [`ReplayBuffer::export`] output.
    pub fn import(&mut self, archive: &TensorArchive) -> Result<()> {
        let mut cols = Vec::new();
        for name in REPLAY_COLUMNS {
            let key = format!("replay.{name}");
            let (shape, data) = archive
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
            cols.push((shape.to_vec(), data));
        }
        let n = cols[2].0[0];
        let width = |c: usize| if n == 0 { 0 } else { cols[c].1.len() / n };
        let (o, a, m) = (width(0), width(1), width(3));
        self.items.clear();
        for i in 0..n {
            let meta = &cols[5].1[i * 3..i * 3 + 3];
            self.push(Transition {
                state: cols[0].1[i * o..(i + 1) * o].to_vec(),
                action: cols[1].1[i * a..(i + 1) * a].to_vec(),
                reward: cols[2].1[i],
                constraint_values: cols[3].1[i * m..(i + 1) * m].to_vec(),
                next_state: cols[4].1[i * o..(i + 1) * o].to_vec(),
                timestep: meta[0] as usize,
                terminal: meta[1] != 0.0,
                truncated: meta[2] != 0.0,
            });
        }
        Ok(())
    }

    pub(crate) fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }
}

const REPLAY_COLUMNS: [&str; 6] = ["state", "action", "reward", "constraints", "next_state", "meta"];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sentinel(k: usize) -> Transition {
        Transition {
            state: vec![k as f64, 0.5],
            action: vec![-(k as f64)],
            reward: k as f64 * 0.1,
            constraint_values: vec![1.0 - k as f64],
            next_state: vec![k as f64 + 1.0, 0.5],
            timestep: k % 7,
            terminal: k % 5 == 0,
            truncated: k % 3 == 0,
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let mut a = ReplayBuffer::new(10, 3).unwrap();
        let mut b = ReplayBuffer::new(10, 3).unwrap();
        for k in 0..10 {
            a.push(sentinel(k));
            b.push(sentinel(k));
        }
        assert_eq!(a.sample(16).unwrap(), b.sample(16).unwrap());
    }

    #[test]
    fn batch_columns_follow_transitions() {
        let trs = [sentinel(3), sentinel(5)];
        let b = Batch::from_transitions(&[&trs[0], &trs[1]]).unwrap();
        assert_eq!(b.obs.row(1).to_vec(), vec![5.0, 0.5]);
        assert_eq!(b.done.to_vec(), vec![1.0, 1.0]);
        assert_eq!(b.constraints[[0, 0]], -2.0);
    }

    #[test]
    fn archive_round_trip() {
        let mut buf = ReplayBuffer::new(4, 0).unwrap();
        for k in 0..6 {
            buf.push(sentinel(k));
        }
        let mut ar = TensorArchive::new();
        buf.export(&mut ar).unwrap();
        let mut back = ReplayBuffer::new(4, 0).unwrap();
        back.import(&ar).unwrap();
        assert!(buf.iter().eq(back.iter()));
    }

    proptest! {
        #[test]
        fn fifo_eviction(capacity in 1usize..20, n in 0usize..60) {
            let mut buf = ReplayBuffer::new(capacity, 0).unwrap();
            for k in 0..n {
                buf.push(sentinel(k));
                prop_assert!(buf.len() <= capacity);
            }
            let kept: Vec<usize> = buf.iter().map(|t| t.state[0] as usize).collect();
            let expect: Vec<usize> = (n.saturating_sub(capacity)..n).collect();
            prop_assert_eq!(kept, expect);
        }
    }
}
