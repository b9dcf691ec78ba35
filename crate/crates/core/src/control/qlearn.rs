use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{self, OpCounts};
use crate::sim::RngStream;

/// Single-cell moves as `(dx, dy)`, indexed N, S, E, W.
pub const ACTIONS: [(i32, i32); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, v: f64) {
        self.values[state * self.n_actions + action] = v;
    }

    /// Index of the largest entry in the row; ties go to the lowest index.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn positive_sum(&self) -> f64 {
        self.values.iter().filter(|v| **v > 0.0).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for QParams {
    fn default() -> Self {
        Self { alpha: 0.9, gamma: 0.99 }
    }
}

impl QParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// `epsilon = max(eps0 * decay^k, eps_min)` over the global step index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps0: f64,
    pub decay: f64,
    pub eps_min: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { eps0: 1.0, decay: 0.999, eps_min: 0.05 }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps0) || !(0.0..=1.0).contains(&self.eps_min) {
            return Err(Error::param("eps0", "eps0 and eps_min must lie in [0, 1]"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::param("decay", format!("must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }
}

/// Global step index is `episode * mission_time + step`.
pub fn epsilon_at(schedule: &EpsilonSchedule, episode: u64, step: u64, mission_time: u64) -> f64 {
    let k = episode * mission_time + step;
    let e = schedule.eps0 * schedule.decay.powf(k as f64);
    e.max(schedule.eps_min).min(schedule.eps0.max(schedule.eps_min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub uav_id: u32,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub step: u64,
}

pub fn q_select_action(table: &QTable, state: usize, epsilon: f64, rng: &mut RngStream) -> usize {
    let n = table.n_actions();
    if rng.bernoulli(epsilon) {
        return rng.index(n);
    }
    ops::record("q_select", OpCounts::new(0, n.saturating_sub(1) as u64));
    table.greedy(state)
}

pub fn q_update(table: &mut QTable, e: &Experience, params: &QParams) {
    let n = table.n_actions();
    let best_next = table.row(e.next_state).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let old = table.get(e.state, e.action);
    let td = e.reward + params.gamma * best_next - old;
    table.set(e.state, e.action, old + params.alpha * td);
    ops::record("q_update", OpCounts::new(2, n.saturating_sub(1) as u64 + 3));
}

/// Applies a batch in `(step, uav_id)` order.
pub fn fuse_experiences(table: &mut QTable, batch: &[Experience], params: &QParams) {
    let mut order: Vec<&Experience> = batch.iter().collect();
    order.sort_by_key(|e| (e.step, e.uav_id));
    for e in order {
        q_update(table, e, params);
    }
}
