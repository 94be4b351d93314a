//! Actor-critic policy: two independent tanh MLPs and a state-independent
//! Gaussian action head.
//!
//! The actor maps the 8-component observation to the mean of a diagonal
//! Gaussian over the two normalized controls; its spread comes from two free
//! `log_std` parameters. The critic maps the same observation to a scalar
//! state-value estimate.

mod file;
mod mlp;

pub use file::{load_model, model_from_str, model_to_string, save_model, ModelFile, FORMAT_NAME, FORMAT_VERSION};
pub use mlp::{Dense, ForwardCache, Mlp};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::observation::{ControlCommand, NormalizationRanges, Observation, ACTION_DIM, OBS_DIM};
use crate::Error;

/// Hidden layer widths used unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

/// `0.5 * ln(2π)`.
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Array1<f64>,
    /// Scaling the observations were built with; stored alongside the weights.
    pub normalization: NormalizationRanges,
}

impl PolicyModel {
    /// Fresh model with orthogonal initialization: gain √2 on hidden layers,
    /// 0.01 on the action-mean layer, 1 on the value layer, zero biases and
    /// `log_std = 0`.
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], normalization: NormalizationRanges, rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![OBS_DIM];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::orthogonal(&sizes(ACTION_DIM), 2f64.sqrt(), 0.01, rng);
        let critic = Mlp::orthogonal(&sizes(1), 2f64.sqrt(), 1.0, rng);
        Self {
            actor,
            critic,
            log_std: Array1::zeros(ACTION_DIM),
            normalization,
        }
    }

    /// Same shapes as `self`, every parameter zero. Used for gradient and
    /// optimizer-moment buffers.
    pub fn zeros_like(&self) -> Self {
        Self {
            actor: Mlp::zeros(&self.actor.sizes()),
            critic: Mlp::zeros(&self.critic.sizes()),
            log_std: Array1::zeros(self.log_std.len()),
            normalization: self.normalization,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.actor.num_parameters() + self.critic.num_parameters() + self.log_std.len()
    }

    /// Every parameter in a fixed order: actor layers, critic layers, log_std.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.actor.param_slices();
        v.extend(self.critic.param_slices());
        v.push(self.log_std.as_slice().expect("standard layout"));
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.actor.param_slices_mut();
        v.extend(self.critic.param_slices_mut());
        v.push(self.log_std.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<(), Error> {
        if values.len() != self.num_parameters() {
            return Err(Error::ShapeMismatch {
                what: "flat parameter vector".into(),
                expected: self.num_parameters().to_string(),
                found: values.len().to_string(),
            });
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    /// Checks layer shapes chain correctly and every parameter is finite.
    pub fn validate(&self) -> Result<(), Error> {
        for (name, net, out) in [("actor", &self.actor, ACTION_DIM), ("critic", &self.critic, 1)] {
            check_chain(name, net, out)?;
        }
        if self.log_std.len() != ACTION_DIM {
            return Err(Error::ShapeMismatch {
                what: "log_std".into(),
                expected: ACTION_DIM.to_string(),
                found: self.log_std.len().to_string(),
            });
        }
        if !self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFiniteParameter("model parameters".into()));
        }
        Ok(())
    }

    pub fn std(&self) -> [f64; ACTION_DIM] {
        [self.log_std[0].exp(), self.log_std[1].exp()]
    }

    pub fn actor_forward(&self, obs: &Observation) -> ActionDistribution {
        let x = obs.to_array();
        let out = self.actor.forward_one(ArrayView1::from(&x));
        ActionDistribution {
            mean: [out[0], out[1]],
            std: self.std(),
        }
    }

    pub fn critic_forward(&self, obs: &Observation) -> f64 {
        let x = obs.to_array();
        self.critic.forward_one(ArrayView1::from(&x))[0]
    }

    /// Action means and values for a batch of observations, one per row.
    pub fn forward_batch(&self, obs: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        let means = self.actor.forward(obs);
        let values = self.critic.forward(obs).column(0).to_owned();
        (means, values)
    }

    /// Gradient of `ln π(action | obs)` with respect to every actor parameter
    /// and `log_std`. Critic entries are zero.
    pub fn log_prob_gradient(&self, obs: &Observation, action: [f64; ACTION_DIM]) -> PolicyModel {
        let x = Array2::from_shape_vec((1, OBS_DIM), obs.to_array().to_vec()).expect("fixed shape");
        let (mean, cache) = self.actor.forward_cached(x.view());
        let mut grads = self.zeros_like();
        let mut d_mean = Array2::zeros((1, ACTION_DIM));
        for k in 0..ACTION_DIM {
            let std = self.log_std[k].exp();
            let z = (action[k] - mean[[0, k]]) / std;
            d_mean[[0, k]] = z / std;
            grads.log_std[k] = z * z - 1.0;
        }
        self.actor.backward(&cache, d_mean, &mut grads.actor);
        grads
    }

    /// Gradient of the critic output with respect to every critic parameter.
    pub fn value_gradient(&self, obs: &Observation) -> PolicyModel {
        let x = Array2::from_shape_vec((1, OBS_DIM), obs.to_array().to_vec()).expect("fixed shape");
        let (_, cache) = self.critic.forward_cached(x.view());
        let mut grads = self.zeros_like();
        self.critic.backward(&cache, Array2::ones((1, 1)), &mut grads.critic);
        grads
    }
}

fn check_chain(name: &str, net: &Mlp, out: usize) -> Result<(), Error> {
    let mismatch = |expected: String, found: String| Error::ShapeMismatch {
        what: name.to_string(),
        expected,
        found,
    };
    if net.layers.is_empty() {
        return Err(mismatch("at least one layer".into(), "none".into()));
    }
    if net.input_dim() != OBS_DIM {
        return Err(mismatch(format!("input width {OBS_DIM}"), net.input_dim().to_string()));
    }
    if net.output_dim() != out {
        return Err(mismatch(format!("output width {out}"), net.output_dim().to_string()));
    }
    for (k, pair) in net.layers.windows(2).enumerate() {
        if pair[0].outputs() != pair[1].inputs() {
            return Err(mismatch(
                format!("layer {} input width {}", k + 1, pair[0].outputs()),
                pair[1].inputs().to_string(),
            ));
        }
    }
    for (k, layer) in net.layers.iter().enumerate() {
        if layer.bias.len() != layer.outputs() {
            return Err(mismatch(
                format!("layer {k} bias length {}", layer.outputs()),
                layer.bias.len().to_string(),
            ));
        }
    }
    Ok(())
}

/// Diagonal Gaussian over the normalized controls `(turn, accel)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution {
    pub mean: [f64; ACTION_DIM],
    pub std: [f64; ACTION_DIM],
}

/// A draw from the policy: the clamped command sent to the environment, the
/// raw Gaussian sample and its log density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub command: ControlCommand,
    pub raw: [f64; ACTION_DIM],
    pub log_prob: f64,
}

impl ActionDistribution {
    pub fn log_prob(&self, action: &[f64; ACTION_DIM]) -> f64 {
        gaussian_log_prob(action, &self.mean, &self.std)
    }

    /// `Σ (ln σ + ½ ln 2πe)`.
    pub fn entropy(&self) -> f64 {
        self.std.iter().map(|s| s.ln() + 0.5 + HALF_LN_2PI).sum()
    }

    /// The mean, clamped into the action box.
    pub fn mode(&self) -> ControlCommand {
        ControlCommand::new(self.mean[0], self.mean[1])
    }

    /// Sample, then clamp the command. The log density is evaluated at the
    /// unclamped draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledAction {
        let mut raw = [0.0; ACTION_DIM];
        for k in 0..ACTION_DIM {
            let eps: f64 = rng.sample(StandardNormal);
            raw[k] = self.mean[k] + self.std[k] * eps;
        }
        SampledAction {
            command: ControlCommand::new(raw[0], raw[1]),
            raw,
            log_prob: self.log_prob(&raw),
        }
    }
}

/// Draw a command from `dist`; with `deterministic` the mean is returned.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, deterministic: bool, rng: &mut R) -> SampledAction {
    if deterministic {
        SampledAction {
            command: dist.mode(),
            raw: dist.mean,
            log_prob: dist.log_prob(&dist.mean),
        }
    } else {
        dist.sample(rng)
    }
}

pub fn gaussian_log_prob(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - HALF_LN_2PI
        })
        .sum()
}
