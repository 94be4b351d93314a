//! Proximal policy optimization for the avoidance policy.
//!
//! Each update collects `rollout_length` steps from `n_envs` episode streams
//! stepped in lockstep, computes GAE advantages, then runs several epochs of
//! minibatch descent on the clipped surrogate objective plus a squared-error
//! value loss. Collection is single-threaded, so a run is a pure function of
//! its seeds.

mod adam;
mod buffer;

pub use adam::Adam;
pub use buffer::{compute_gae, normalize_advantages, RolloutBuffer};

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{reset, step, EpisodeState, SimConfig, Status};
use crate::observation::{build_observation, ACTION_DIM, OBS_DIM};
use crate::policy::{save_model, ActionDistribution, PolicyModel, DEFAULT_HIDDEN};
use crate::Error;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub n_envs: usize,
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    pub hidden: Vec<usize>,
    /// Leading steps trained with separation violations disabled, counted
    /// within `total_steps`. The policy first learns to reach the goal, then
    /// learns to avoid. 0 trains on the full task throughout.
    pub curriculum_steps: usize,
    /// Write a checkpoint every this many updates; 0 disables.
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 2_000_000,
            n_envs: 8,
            rollout_length: 2048,
            minibatch_size: 256,
            epochs_per_update: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            hidden: DEFAULT_HIDDEN.to_vec(),
            curriculum_steps: 0,
            checkpoint_interval: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.rollout_length * self.n_envs
    }

    /// Whole updates that fit in `total_steps`; at least one.
    pub fn num_updates(&self) -> usize {
        (self.total_steps / self.batch_size()).max(1)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_envs == 0 || self.rollout_length == 0 || self.minibatch_size == 0 || self.epochs_per_update == 0 {
            return bad("n_envs, rollout_length, minibatch_size and epochs_per_update must be positive");
        }
        if self.batch_size() % self.minibatch_size != 0 {
            return bad("rollout_length * n_envs must be divisible by minibatch_size");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_range > 0.0) || !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("clip_range, learning_rate and max_grad_norm must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be non-empty and positive");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row per update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub update: usize,
    pub timestep: usize,
    pub episodes: usize,
    /// Mean return over the last 100 finished episodes.
    pub mean_episode_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Negative mean policy entropy.
    pub entropy_loss: f64,
    /// Mean `-ln π(a|s)` of the actions taken during collection.
    pub neg_log_prob: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub success_rate: f64,
    pub violation_rate: f64,
    pub timeout_rate: f64,
    pub out_of_bounds_rate: f64,
    pub std_turn: f64,
    pub std_accel: f64,
}

impl TrainMetrics {
    pub fn all_finite(&self) -> bool {
        [
            self.mean_episode_reward,
            self.policy_loss,
            self.value_loss,
            self.entropy_loss,
            self.neg_log_prob,
            self.approx_kl,
            self.clip_fraction,
            self.success_rate,
            self.violation_rate,
            self.timeout_rate,
            self.out_of_bounds_rate,
            self.std_turn,
            self.std_accel,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Borrowed view of one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub observations: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Scalar pieces of the minibatch loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossBreakdown {
    pub fn total(&self, cfg: &TrainConfig) -> f64 {
        self.policy_loss + cfg.value_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip_range: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip_range, 1.0 + clip_range) * advantage)
}

/// Loss and its gradient with respect to every model parameter.
///
/// `total = policy + value_coef * value - entropy_coef * entropy`, where the
/// policy term is the negated mean clipped surrogate and the value term the
/// mean squared error to `returns`.
pub fn ppo_loss(model: &PolicyModel, batch: &Minibatch<'_>, cfg: &TrainConfig) -> (LossBreakdown, PolicyModel) {
    let m = batch.observations.nrows();
    let inv_m = 1.0 / m as f64;
    let (means, actor_cache) = model.actor.forward_cached(batch.observations);
    let (values, critic_cache) = model.critic.forward_cached(batch.observations);
    let log_std: Vec<f64> = model.log_std.to_vec();
    let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();

    let mut grads = model.zeros_like();
    let mut d_mean = Array2::zeros((m, ACTION_DIM));
    let mut d_value = Array2::zeros((m, 1));
    let mut out = LossBreakdown::default();
    let eps = cfg.clip_range;

    for i in 0..m {
        let mut z = [0.0; ACTION_DIM];
        let mut log_prob = 0.0;
        for k in 0..ACTION_DIM {
            z[k] = (batch.actions[[i, k]] - means[[i, k]]) / std[k];
            log_prob += -0.5 * z[k] * z[k] - log_std[k] - HALF_LN_2PI;
        }
        let log_ratio = log_prob - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        out.policy_loss -= unclipped.min(clipped) * inv_m;
        out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;
        if (ratio - 1.0).abs() > eps {
            out.clip_fraction += inv_m;
        }
        // d(policy_loss)/d(log_prob); zero where the clipped branch is active.
        let g_lp = if unclipped <= clipped { -adv * ratio * inv_m } else { 0.0 };
        for k in 0..ACTION_DIM {
            d_mean[[i, k]] = g_lp * z[k] / std[k];
            grads.log_std[k] += g_lp * (z[k] * z[k] - 1.0);
        }

        let err = values[[i, 0]] - batch.returns[i];
        out.value_loss += err * err * inv_m;
        d_value[[i, 0]] = cfg.value_coef * 2.0 * err * inv_m;
    }
    out.entropy = log_std.iter().map(|l| l + 0.5 + HALF_LN_2PI).sum();
    for k in 0..ACTION_DIM {
        grads.log_std[k] -= cfg.entropy_coef;
    }
    model.actor.backward(&actor_cache, d_mean, &mut grads.actor);
    model.critic.backward(&critic_cache, d_value, &mut grads.critic);
    (out, grads)
}

/// Rescale the actor (with `log_std`) and critic gradients independently so
/// neither L2 norm exceeds `max_norm`. Returns the pre-clip norms.
pub fn clip_grad_norm(grads: &mut PolicyModel, max_norm: f64) -> (f64, f64) {
    fn norm(slices: &[&[f64]]) -> f64 {
        slices.iter().flat_map(|s| s.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }
    let mut actor = grads.actor.param_slices();
    actor.push(grads.log_std.as_slice().expect("standard layout"));
    let actor_norm = norm(&actor);
    let critic_norm = norm(&grads.critic.param_slices());
    let scale = |n: f64| if n > max_norm { max_norm / (n + 1e-12) } else { 1.0 };
    let (sa, sc) = (scale(actor_norm), scale(critic_norm));
    if sa != 1.0 {
        for s in grads.actor.param_slices_mut() {
            s.iter_mut().for_each(|g| *g *= sa);
        }
        grads.log_std.mapv_inplace(|g| g * sa);
    }
    if sc != 1.0 {
        for s in grads.critic.param_slices_mut() {
            s.iter_mut().for_each(|g| *g *= sc);
        }
    }
    (actor_norm, critic_norm)
}

/// Owns the model, optimizer, environments and buffer of one training run.
pub struct Trainer {
    pub model: PolicyModel,
    pub cfg: TrainConfig,
    /// The environment episodes are currently drawn from.
    pub sim: SimConfig,
    target: SimConfig,
    optimizer: Adam,
    rng: ChaCha8Rng,
    envs: Vec<EpisodeState>,
    episode_returns: Vec<f64>,
    recent: VecDeque<(f64, Status)>,
    buffer: RolloutBuffer,
    timestep: usize,
    updates: usize,
    episodes: usize,
}

impl Trainer {
    pub fn new(sim: SimConfig, model: PolicyModel, cfg: TrainConfig) -> Result<Self, Error> {
        cfg.validate()?;
        sim.validate()?;
        model.validate()?;
        let target = sim.clone();
        let sim = if cfg.curriculum_steps > 0 { sim.without_intruder() } else { sim };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let envs = (0..cfg.n_envs)
            .map(|_| reset(&sim, rng.gen()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            optimizer: Adam::new(&model, cfg.learning_rate),
            buffer: RolloutBuffer::new(cfg.rollout_length, cfg.n_envs),
            episode_returns: vec![0.0; cfg.n_envs],
            recent: VecDeque::with_capacity(100),
            envs,
            rng,
            model,
            cfg,
            sim,
            target,
            timestep: 0,
            updates: 0,
            episodes: 0,
        })
    }

    /// Fresh orthogonally initialized model with the configured widths.
    pub fn initial_model(sim: &SimConfig, cfg: &TrainConfig) -> PolicyModel {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_9011c7);
        PolicyModel::new(&cfg.hidden, crate::observation::NormalizationRanges::for_config(sim), &mut rng)
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    fn observations(&self) -> Array2<f64> {
        let mut obs = Array2::zeros((self.envs.len(), OBS_DIM));
        for (mut row, env) in obs.axis_iter_mut(Axis(0)).zip(&self.envs) {
            row.assign(&Array1::from(build_observation(env, &self.sim).to_array().to_vec()));
        }
        obs
    }

    /// Fill the rollout buffer with `rollout_length` lockstep steps of every
    /// stream, resetting streams as their episodes end.
    pub fn collect_rollouts(&mut self) -> Result<(), Error> {
        self.buffer.clear();
        let std = self.model.std();
        for _ in 0..self.cfg.rollout_length {
            let obs = self.observations();
            let (means, values) = self.model.forward_batch(obs.view());
            for e in 0..self.envs.len() {
                let dist = ActionDistribution {
                    mean: [means[[e, 0]], means[[e, 1]]],
                    std,
                };
                let action = dist.sample(&mut self.rng);
                let result = step(&mut self.envs[e], action.command, &self.sim)?;
                let o: [f64; OBS_DIM] = obs.row(e).to_vec().try_into().expect("fixed width");
                self.buffer
                    .push(&o, &action.raw, action.log_prob, values[e], result.reward, result.terminated);
                self.episode_returns[e] += result.reward;
                if result.terminated {
                    if self.recent.len() == 100 {
                        self.recent.pop_front();
                    }
                    self.recent.push_back((self.episode_returns[e], result.info.status));
                    self.episode_returns[e] = 0.0;
                    self.episodes += 1;
                    let seed = self.rng.gen();
                    self.envs[e] = reset(&self.sim, seed)?;
                }
            }
            self.timestep += self.envs.len();
        }
        let (_, bootstrap) = self.model.forward_batch(self.observations().view());
        self.buffer
            .compute_gae(bootstrap.as_slice().expect("contiguous"), self.cfg.gamma, self.cfg.gae_lambda);
        Ok(())
    }

    /// PPO epochs over the current buffer.
    pub fn ppo_update(&mut self) -> Result<TrainMetrics, Error> {
        let cfg = self.cfg.clone();
        let n = self.buffer.len();
        let mb = cfg.minibatch_size;
        let mut indices: Vec<usize> = (0..n).collect();
        let mut sums = LossBreakdown::default();
        let mut count = 0.0;
        for epoch in 0..cfg.epochs_per_update {
            indices.shuffle(&mut self.rng);
            for (b, chunk) in indices.chunks(mb).enumerate() {
                let obs = self.buffer.observations.select(Axis(0), chunk);
                let actions = self.buffer.actions.select(Axis(0), chunk);
                let old: Vec<f64> = chunk.iter().map(|&i| self.buffer.log_probs[i]).collect();
                let mut adv: Vec<f64> = chunk.iter().map(|&i| self.buffer.advantages[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| self.buffer.returns[i]).collect();
                if cfg.normalize_advantage {
                    normalize_advantages(&mut adv);
                }
                let batch = Minibatch {
                    observations: obs.view(),
                    actions: actions.view(),
                    old_log_probs: &old,
                    advantages: &adv,
                    returns: &ret,
                };
                let (loss, mut grads) = ppo_loss(&self.model, &batch, &cfg);
                if !loss.total(&cfg).is_finite() {
                    return Err(Error::NonFiniteLoss {
                        update: self.updates,
                        epoch,
                        minibatch: b,
                    });
                }
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
                self.optimizer.step(&mut self.model, &grads);
                sums.policy_loss += loss.policy_loss;
                sums.value_loss += loss.value_loss;
                sums.entropy += loss.entropy;
                sums.approx_kl += loss.approx_kl;
                sums.clip_fraction += loss.clip_fraction;
                count += 1.0;
            }
        }
        self.updates += 1;

        let neg_log_prob = -self.buffer.log_probs.iter().sum::<f64>() / n as f64;
        let rate = |pred: &dyn Fn(Status) -> bool| {
            if self.recent.is_empty() {
                0.0
            } else {
                self.recent.iter().filter(|(_, s)| pred(*s)).count() as f64 / self.recent.len() as f64
            }
        };
        let mean_reward = if self.recent.is_empty() {
            0.0
        } else {
            self.recent.iter().map(|(r, _)| r).sum::<f64>() / self.recent.len() as f64
        };
        let std = self.model.std();
        let metrics = TrainMetrics {
            update: self.updates,
            timestep: self.timestep,
            episodes: self.episodes,
            mean_episode_reward: mean_reward,
            policy_loss: sums.policy_loss / count,
            value_loss: sums.value_loss / count,
            entropy_loss: -sums.entropy / count,
            neg_log_prob,
            approx_kl: sums.approx_kl / count,
            clip_fraction: sums.clip_fraction / count,
            success_rate: rate(&|s| s == Status::GoalReached),
            violation_rate: rate(&|s| s == Status::SeparationViolated),
            timeout_rate: rate(&|s| s == Status::TimedOut),
            out_of_bounds_rate: rate(&|s| s == Status::OutOfBounds),
            std_turn: std[0],
            std_accel: std[1],
        };
        Ok(metrics)
    }

    /// Switch from the curriculum to the full task. Unfinished episodes are
    /// discarded and outcome statistics restart.
    fn enter_full_task(&mut self) -> Result<(), Error> {
        self.sim = self.target.clone();
        for env in &mut self.envs {
            *env = reset(&self.sim, self.rng.gen())?;
        }
        self.episode_returns.iter_mut().for_each(|r| *r = 0.0);
        self.recent.clear();
        Ok(())
    }

    /// Alternate collection and update until `total_steps`, calling
    /// `on_update` after each update.
    pub fn run(
        &mut self,
        mut on_update: impl FnMut(&TrainMetrics, &PolicyModel) -> Result<(), Error>,
    ) -> Result<Vec<TrainMetrics>, Error> {
        let mut history = Vec::with_capacity(self.cfg.num_updates());
        for _ in 0..self.cfg.num_updates() {
            if self.timestep >= self.cfg.curriculum_steps && self.sim != self.target {
                self.enter_full_task()?;
            }
            self.collect_rollouts()?;
            let metrics = self.ppo_update()?;
            on_update(&metrics, &self.model)?;
            history.push(metrics);
        }
        Ok(history)
    }
}

/// Train `model` on `sim`. With `output_dir`, writes `metrics.csv`, periodic
/// `checkpoint_<update>.json` files and the final `model.json` there.
pub fn train(
    sim: &SimConfig,
    model: PolicyModel,
    cfg: &TrainConfig,
    output_dir: Option<&Path>,
) -> Result<(PolicyModel, Vec<TrainMetrics>), Error> {
    let mut trainer = Trainer::new(sim.clone(), model, cfg.clone())?;
    let mut writer = match output_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(csv::Writer::from_path(dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let interval = cfg.checkpoint_interval;
    let history = trainer.run(|metrics, model| {
        if let (Some(w), Some(dir)) = (writer.as_mut(), output_dir) {
            w.serialize(metrics)?;
            w.flush().map_err(|e| Error::io(dir.join("metrics.csv"), e))?;
            if interval > 0 && metrics.update % interval == 0 {
                save_model(model, checkpoint_path(dir, metrics.update))?;
            }
        }
        Ok(())
    })?;
    if let Some(dir) = output_dir {
        save_model(&trainer.model, dir.join("model.json"))?;
    }
    Ok((trainer.model, history))
}

pub fn checkpoint_path(dir: &Path, update: usize) -> PathBuf {
    dir.join(format!("checkpoint_{update:05}.json"))
}
