//! Small fully connected network with ReLU hidden layers and one logistic
//! output per action class, trained with per-output binary cross-entropy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameters are stored layer by layer: the `out × in` weight matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// One supervised target: `target` for output unit `output` given `input`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub output: usize,
    pub target: f64,
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, stable for large |z|.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    /// Builds a network from explicit parameters.
    ///
    /// Panics if the parameter count does not match the layer sizes.
    pub fn from_params(layer_sizes: Vec<usize>, params: Vec<f64>) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        assert_eq!(param_count(&layer_sizes), params.len(), "parameter count mismatch");
        Self { layer_sizes, params }
    }

    pub fn zeros(layer_sizes: Vec<usize>) -> Self {
        let n = param_count(&layer_sizes);
        Self::from_params(layer_sizes, vec![0.0; n])
    }

    /// Uniform init in `[-r, r]` with `r = 1/sqrt(fan_in)`, weights and biases.
    pub fn init_uniform(layer_sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let r = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-r..=r));
            }
        }
        Self::from_params(layer_sizes, params)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Activations of every layer; the last entry holds output logits.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &acts[l];
            let next: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(prev).map(|(w, x)| w * x).sum::<f64>() + biases[o];
                    if l + 1 < n_layers {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(next);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn logits(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().unwrap()
    }

    pub fn predict(&self, input: &[f64], output: usize) -> f64 {
        sigmoid(self.logits(input)[output])
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &[Sample<'_>]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .map(|s| bce_with_logit(self.logits(s.input)[s.output], s.target))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        let mut total = 0.0;
        for s in batch {
            let acts = self.activations(s.input);
            let z = acts[n_layers][s.output];
            total += bce_with_logit(z, s.target);

            // dL/dz at the output layer: only the supervised unit contributes.
            let mut delta = vec![0.0; self.output_dim()];
            delta[s.output] = sigmoid(z) - s.target;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let base = offsets[l];
                let prev = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(prev) {
                        *g += d * x;
                    }
                    grad[base + n_in * n_out + o] += d;
                }
                if l == 0 {
                    break;
                }
                let weights = &self.params[base..base + n_in * n_out];
                let mut back = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (b, w) in back.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *b += d * w;
                    }
                }
                // ReLU derivative, taken as 0 at exactly 0.
                for (b, a) in back.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }

    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= learning_rate * g;
        }
    }
}

/// Below this magnitude gradients are compared by absolute difference.
pub const GRADIENT_ABS_FLOOR: f64 = 1e-7;

/// Largest disagreement between the analytic gradient and central finite
/// differences over all parameters. Relative error where either side exceeds
/// [`GRADIENT_ABS_FLOOR`], absolute error otherwise.
pub fn gradient_check(model: &Mlp, batch: &[Sample<'_>], epsilon: f64) -> f64 {
    let (_, analytic) = model.loss_and_grad(batch);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &grad) in analytic.iter().enumerate() {
        let original = probe.params[i];
        probe.params[i] = original + epsilon;
        let plus = probe.loss(batch);
        probe.params[i] = original - epsilon;
        let minus = probe.loss(batch);
        probe.params[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let scale = grad.abs().max(numeric.abs());
        let err = if scale < GRADIENT_ABS_FLOOR {
            (grad - numeric).abs()
        } else {
            (grad - numeric).abs() / scale
        };
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}
