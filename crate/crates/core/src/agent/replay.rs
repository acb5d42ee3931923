use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<[f32]>,
    pub action: usize,
    pub reward: f32,
    /// Shared with the following transition's `state` within an episode.
    pub next_state: Arc<[f32]>,
    pub done: bool,
}

/// FIFO ring of transitions with uniform sampling (with replacement).
///
/// Single writer and single reader: callers serialize `push` and `sample`
/// through `&mut self`.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

/// A sampled mini-batch in tensor form.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub states: Tensor<T>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub next_states: Tensor<T>,
    pub dones: Vec<bool>,
}

impl<T: Real> Batch<T> {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let dim = ts.first().ok_or(Error::EmptyDataset)?.state.len();
        let flat = |f: &dyn Fn(&Transition) -> &[f32]| -> Result<Tensor<T>> {
            let mut data = Vec::with_capacity(ts.len() * dim);
            for t in ts {
                let s = f(t);
                if s.len() != dim {
                    return Err(Error::LengthMismatch { expected: dim, found: s.len() });
                }
                data.extend(s.iter().map(|&v| T::from_f64(v as f64)));
            }
            Tensor::new(&[ts.len(), dim], data)
        };
        Ok(Self {
            states: flat(&|t| &t.state)?,
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| T::from_f64(t.reward as f64)).collect(),
            next_states: flat(&|t| &t.next_state)?,
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
        }
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

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::invalid(format!("non-finite reward {}", t.reward)));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `None` while fewer than `batch` transitions are stored.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some((0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}
