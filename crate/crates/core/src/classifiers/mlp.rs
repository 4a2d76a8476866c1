//! Fully connected ReLU network with a softmax cross-entropy head, trained
//! by mini-batch gradient descent with seeded shuffling.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::calibration::softmax;

pub const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

impl MlpModel {
    fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let std = libm::sqrt(2.0 / inputs as f64);
                let normal = Normal::new(0.0, std).expect("positive std");
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        MlpModel { layers }
    }

    /// Activations of every layer, input first; hidden layers post-ReLU,
    /// the last entry holds raw logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(&acts[l], &mut out);
            if l != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Raw output activations (logits).
    pub fn decision_scores(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap_or_default()
    }
}

struct Gradients {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(model: &MlpModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
    }
}

fn accumulate(model: &MlpModel, x: &[f64], target: usize, grads: &mut Gradients) {
    let acts = model.activations(x);
    let logits = acts.last().expect("output layer");
    // d(loss)/d(logit) = softmax - onehot
    let mut delta = softmax(logits).unwrap_or_else(|_| vec![0.0; logits.len()]);
    delta[target] -= 1.0;

    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let input = &acts[l];
        for o in 0..layer.outputs {
            let d = delta[o];
            grads.bias[l][o] += d;
            let row = &mut grads.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
            row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
        }
        if l > 0 {
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += delta[o] * w);
            }
            // ReLU derivative on the hidden activation
            prev.iter_mut().zip(input).for_each(|(p, a)| {
                if *a <= 0.0 {
                    *p = 0.0
                }
            });
            delta = prev;
        }
    }
}

pub(crate) fn fit(params: &MlpParams, x: &[&[f64]], y: &[usize], n_classes: usize, seed: u64) -> MlpModel {
    let mut sizes = vec![x[0].len()];
    sizes.extend(params.hidden_layers.iter().copied().filter(|&w| w > 0));
    sizes.push(n_classes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(&sizes, &mut rng);
    let mut grads = Gradients::zeros(&model);
    let mut order: Vec<usize> = (0..x.len()).collect();

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH_SIZE) {
            grads.clear();
            for &i in batch {
                accumulate(&model, x[i], y[i], &mut grads);
            }
            let scale = params.learning_rate / batch.len() as f64;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                    *w -= scale * g + params.learning_rate * params.l2_penalty * *w;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grads.bias[l]) {
                    *b -= scale * g;
                }
            }
        }
    }
    model
}
