//! Rollout storage and generalized advantage estimation.

use ndarray::Array2;

use crate::observation::{ACTION_DIM, OBS_DIM};

/// Transitions from `n_envs` synchronous streams over `n_steps` steps.
///
/// Entry `(t, e)` lives at flat index `t * n_envs + e`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_steps: usize,
    pub n_envs: usize,
    pub observations: Array2<f64>,
    /// Raw (unclamped) Gaussian samples.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// `true` when the transition ended its episode.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    len: usize,
}

impl RolloutBuffer {
    pub fn new(n_steps: usize, n_envs: usize) -> Self {
        let cap = n_steps * n_envs;
        Self {
            n_steps,
            n_envs,
            observations: Array2::zeros((cap, OBS_DIM)),
            actions: Array2::zeros((cap, ACTION_DIM)),
            log_probs: vec![0.0; cap],
            values: vec![0.0; cap],
            rewards: vec![0.0; cap],
            dones: vec![false; cap],
            advantages: vec![0.0; cap],
            returns: vec![0.0; cap],
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity()
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }

    /// Append the next transition; entries must arrive in `(t, e)` order.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        observation: &[f64; OBS_DIM],
        action: &[f64; ACTION_DIM],
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) {
        assert!(!self.is_full(), "rollout buffer overflow");
        let i = self.len;
        self.observations.row_mut(i).assign(&ndarray::ArrayView1::from(observation));
        self.actions.row_mut(i).assign(&ndarray::ArrayView1::from(action));
        self.log_probs[i] = log_prob;
        self.values[i] = value;
        self.rewards[i] = reward;
        self.dones[i] = done;
        self.len += 1;
    }

    /// Fill `advantages` and `returns`. `bootstrap[e]` is the value estimate of
    /// the state each stream is in after the last stored step.
    pub fn compute_gae(&mut self, bootstrap: &[f64], gamma: f64, lambda: f64) {
        assert!(self.is_full(), "GAE needs a full buffer");
        assert_eq!(bootstrap.len(), self.n_envs);
        for e in 0..self.n_envs {
            let idx = |t: usize| t * self.n_envs + e;
            let stream = |v: &[f64]| (0..self.n_steps).map(|t| v[idx(t)]).collect::<Vec<_>>();
            let rewards = stream(&self.rewards);
            let values = stream(&self.values);
            let dones: Vec<bool> = (0..self.n_steps).map(|t| self.dones[idx(t)]).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap[e], gamma, lambda);
            for t in 0..self.n_steps {
                self.advantages[idx(t)] = adv[t];
                self.returns[idx(t)] = ret[t];
            }
        }
    }
}

/// GAE over one stream of transitions.
///
/// `A_t = Σ_k (γλ)^k δ_{t+k}` with `δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t`,
/// truncated at episode ends; past the last step `V` is `bootstrap`.
/// Returns `(advantages, advantages + values)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Shift and scale to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}
