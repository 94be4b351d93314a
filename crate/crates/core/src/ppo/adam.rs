use crate::policy::PolicyModel;

/// Adam with bias correction, keeping moment buffers shaped like the model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: PolicyModel,
    v: PolicyModel,
}

impl Adam {
    pub fn new(model: &PolicyModel, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: model.zeros_like(),
            v: model.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// Descend along `grads`.
    pub fn step(&mut self, model: &mut PolicyModel, grads: &PolicyModel) {
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps);
        let bc2 = 1.0 - self.beta2.powi(self.steps);
        let step_size = self.learning_rate / bc1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in model
            .param_slices_mut()
            .into_iter()
            .zip(grads.param_slices())
            .zip(self.m.param_slices_mut())
            .zip(self.v.param_slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / ((v[i] / bc2).sqrt() + eps);
            }
        }
    }
}
