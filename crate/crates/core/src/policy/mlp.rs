//! Dense tanh networks with an explicit backward pass.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Fully connected layer. `weight` is `(out, in)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: orthogonal_matrix(outputs, inputs, rng) * gain,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

/// A random `(rows, cols)` matrix with orthonormal rows or columns, whichever
/// is the shorter side.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut q = Array2::from_shape_fn((tall, short), |_| rng.sample::<f64, _>(StandardNormal));
    // Modified Gram-Schmidt, applied twice for numerical orthogonality.
    for _ in 0..2 {
        for j in 0..short {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &qk);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
    if rows >= cols {
        q
    } else {
        q.reversed_axes().as_standard_layout().into_owned()
    }
}

/// Multi-layer perceptron: tanh on every hidden layer, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
/// `inputs[k]` is the input to layer `k`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden_gain`, the output
    /// layer `output_gain`.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let gain = if k + 1 == n { output_gain } else { hidden_gain };
                Dense::orthogonal(sizes[k], sizes[k + 1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h.view());
            if k < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    /// [`Mlp::forward`] for a single input. Matrix-vector products are
    /// several times faster than a one-row matrix product.
    pub fn forward_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.weight.dot(&h) + &layer.bias;
            if k < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&h.view());
            if k < last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            h = z;
        }
        (h, ForwardCache { inputs })
    }

    /// Accumulate parameter gradients into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>, grads: &mut Mlp) {
        let mut delta = grad_out;
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            let g = &mut grads.layers[k];
            g.weight += &delta.t().dot(input);
            g.bias += &delta.sum_axis(Axis(0));
            if k > 0 {
                let mut upstream = delta.dot(&self.layers[k].weight);
                // `input` is tanh output of the previous layer.
                ndarray::Zip::from(&mut upstream)
                    .and(input)
                    .for_each(|d, &h| *d *= 1.0 - h * h);
                delta = upstream;
            }
        }
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}
