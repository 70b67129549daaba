//! Hand-differentiated multilayer perceptron with softmax cross-entropy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    /// Row-major (fan_out x fan_in).
    w: Vec<f64>,
    b: Vec<f64>,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn new(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Layer {
        // fan-in scaled uniform init
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Layer {
            w,
            b: vec![0.0; fan_out],
            fan_in,
            fan_out,
        }
    }
}

/// MLP over `dims = [input, hidden..., classes]`; the hidden layers use the
/// configured activation, the last layer is linear into softmax.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Gradients with the same layout as [`Mlp`] parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "need input and output dims");
        let layers = dims
            .windows(2)
            .map(|pair| Layer::new(pair[0], pair[1], rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    /// Per-layer post-activation outputs; the last entry holds raw logits.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out];
            for o in 0..layer.fan_out {
                let row = &layer.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                let mut acc = layer.b[o];
                for (wi, xi) in row.iter().zip(&cur) {
                    acc += wi * xi;
                }
                z[o] = acc;
            }
            let is_last = li + 1 == self.layers.len();
            if !is_last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            outs.push(z.clone());
            cur = z;
        }
        outs
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }

    /// Mean softmax cross-entropy over a batch.
    pub fn batch_loss(&self, batch: &[(Vec<f64>, usize)]) -> f64 {
        batch
            .iter()
            .map(|(x, y)| cross_entropy(&self.logits(x), *y))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean loss and its gradient over a batch.
    pub fn batch_loss_and_grad(&self, batch: &[(Vec<f64>, usize)]) -> (f64, Gradients) {
        let mut grads = Gradients {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut total_loss = 0.0;
        for (x, y) in batch {
            let outs = self.forward_trace(x);
            let logits = outs.last().unwrap();
            total_loss += cross_entropy(logits, *y);

            // delta at the softmax layer: p - onehot(y)
            let probs = softmax(logits);
            let mut delta: Vec<f64> = probs;
            delta[*y] -= 1.0;

            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input: &[f64] = if li == 0 { x } else { &outs[li - 1] };
                for o in 0..layer.fan_out {
                    let d = delta[o] * scale;
                    grads.b[li][o] += d;
                    let row = &mut grads.w[li][o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.fan_in];
                    for o in 0..layer.fan_out {
                        let row = &layer.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (p, wi) in prev.iter_mut().zip(row) {
                            *p += delta[o] * wi;
                        }
                    }
                    for (p, &h) in prev.iter_mut().zip(&outs[li - 1]) {
                        *p *= self.activation.derivative_from_output(h);
                    }
                    delta = prev;
                }
            }
        }
        // divide (not multiply by the reciprocal) so the result is
        // bit-identical to batch_loss on the same parameters
        (total_loss / batch.len() as f64, grads)
    }

    /// Momentum SGD step with weight decay applied to weights and biases.
    pub fn sgd_step(
        &mut self,
        grads: &Gradients,
        velocity: &mut Gradients,
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) {
        for li in 0..self.layers.len() {
            for (i, g) in grads.w[li].iter().enumerate() {
                let v = momentum * velocity.w[li][i] + g + weight_decay * self.layers[li].w[i];
                velocity.w[li][i] = v;
                self.layers[li].w[i] -= lr * v;
            }
            for (i, g) in grads.b[li].iter().enumerate() {
                let v = momentum * velocity.b[li][i] + g + weight_decay * self.layers[li].b[i];
                velocity.b[li][i] = v;
                self.layers[li].b[i] -= lr * v;
            }
        }
    }

    pub fn zero_velocity(&self) -> Gradients {
        Gradients {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter vector: weights then biases per layer, in layer order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
    }

    pub fn grad_flat(grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in grads.w.iter().zip(&grads.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[target]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Vec<(Vec<f64>, usize)> {
        (0..n)
            .map(|i| {
                let x = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, i % classes)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for &activation in &[Activation::Relu, Activation::Tanh] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mlp = Mlp::new(&[3, 5, 4, 2], activation, &mut rng);
            let data = batch(&mut rng, 6, 3, 2);
            let (_, grads) = mlp.batch_loss_and_grad(&data);
            let analytic = Mlp::grad_flat(&grads);
            let mut flat = mlp.params_flat();
            let h = 1e-5;
            for probe in 0..5 {
                let idx = (probe * 13 + 7) % flat.len();
                let orig = flat[idx];
                let mut m = mlp.clone();
                flat[idx] = orig + h;
                m.set_params_flat(&flat);
                let up = m.batch_loss(&data);
                flat[idx] = orig - h;
                m.set_params_flat(&flat);
                let down = m.batch_loss(&data);
                flat[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (analytic[idx] - numeric).abs() / numeric.abs().max(1e-8);
                assert!(
                    rel < 1e-4,
                    "{} coord {idx}: analytic={} numeric={numeric}",
                    activation.name(),
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn softmax_cross_entropy_consistency() {
        let logits = vec![1.0, -0.5, 2.0];
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ce = cross_entropy(&logits, 2);
        assert!((ce + p[2].ln()).abs() < 1e-12);
    }

    #[test]
    fn params_flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[2, 3, 2], Activation::Relu, &mut rng);
        let flat = mlp.params_flat();
        let mut copy = mlp.clone();
        copy.set_params_flat(&flat);
        assert_eq!(copy.params_flat(), flat);
    }
}
