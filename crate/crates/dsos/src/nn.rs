//! A small fully connected classifier with hand-written backpropagation.
//!
//! Everything runs in f64 on flat row-major buffers, single threaded, so a
//! fixed seed reproduces training bit for bit. The loss the network trains
//! under is
//!
//! ```text
//! L = (1/B) sum_i CE(p_i, t_i)  +  gamma * (1/B) sum_i v_i * H(p_i)
//! ```
//!
//! where `p` is the softmax output, `t` an arbitrary soft target, `H` the
//! Shannon entropy of the prediction and `v_i` per-sample weights. The
//! entropy term *rewards* confident predictions (its gradient pushes
//! entropy down); samples with `v_i = 0` are exempt from that push.
//! Gradients are exact: the softmax cross-entropy part contributes
//! `(p - t)/B` at the logits, the entropy part `-gamma * v_i/B *
//! p_k (ln p_k + H(p))`.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::{ln_clamped, softmax, SoftLabel};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// max(0, z); the derivative at exactly 0 is taken as 0.
    Relu,
}

/// Fully connected network. Layer `l` maps `layer_dims[l]` inputs to
/// `layer_dims[l+1]` outputs; every layer but the last applies the
/// activation, the last layer emits logits.
#[derive(Debug, Clone)]
pub struct Network {
    layer_dims: Vec<usize>,
    /// Row-major `out x in` weight matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

/// Per-layer gradient buffers, same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Extra loss terms beyond the soft cross entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms<'a> {
    /// Weight of the prediction-entropy penalty (0 disables it).
    pub entropy_weight: f64,
    /// Per-sample entropy weights; `None` means all ones.
    pub v_weights: Option<&'a [f64]>,
}

impl Network {
    /// Builds a network with zero biases and uniform Xavier weights,
    /// `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`, drawn from a
    /// seeded stream.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(
                "a network needs at least an input and an output layer".to_string(),
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("layer sizes must be positive".to_string()));
        }
        if layer_dims[layer_dims.len() - 1] < 2 {
            return Err(Error::Config(
                "the output layer needs at least 2 classes".to_string(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let fan_in = layer_dims[l];
            let fan_out = layer_dims[l + 1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new(-limit, limit);
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| dist.sample(&mut rng))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Network {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn check_features(&self, features: &[Vec<f64>]) -> Result<()> {
        for (i, x) in features.iter().enumerate() {
            if x.len() != self.input_dim() {
                return Err(Error::Input(format!(
                    "sample {i} has {} features, the network expects {}",
                    x.len(),
                    self.input_dim()
                )));
            }
        }
        Ok(())
    }

    /// Linear pass of one layer: `z = W a + b`.
    fn layer_forward(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let fan_in = self.layer_dims[l];
        let fan_out = self.layer_dims[l + 1];
        let w = &self.weights[l];
        let mut z = self.biases[l].clone();
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = 0.0;
            for (wi, ai) in row.iter().zip(a) {
                acc += wi * ai;
            }
            z[o] += acc;
        }
        z
    }

    /// All layer inputs plus the final logits for one sample. `acts[l]` is
    /// the input to layer `l`; `acts` keeps `num_layers + 1` entries where
    /// the last is the logits.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let mut z = self.layer_forward(l, acts.last().unwrap());
            if l + 1 < self.num_layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for a feature batch.
    pub fn forward(&self, features: &[Vec<f64>]) -> Result<Vec<SoftLabel>> {
        self.check_features(features)?;
        Ok(features
            .iter()
            .map(|x| {
                let trace = self.forward_trace(x);
                SoftLabel::from_logits(trace.last().unwrap())
            })
            .collect())
    }

    /// Flat copy of all parameters, layer by layer, weights before biases.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Overwrites all parameters from a flat buffer laid out like
    /// [`Network::flatten_params`].
    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for l in 0..self.weights.len() {
            for w in &mut self.weights[l] {
                *w = flat[k];
                k += 1;
            }
            for b in &mut self.biases[l] {
                *b = flat[k];
                k += 1;
            }
        }
        assert_eq!(k, flat.len(), "parameter buffer length mismatch");
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Mean loss and exact parameter gradients over a batch.
    ///
    /// Targets are treated as constants. The returned loss equals what
    /// [`batch_loss`] computes for the same inputs.
    pub fn backward(
        &self,
        features: &[Vec<f64>],
        targets: &[SoftLabel],
        terms: &LossTerms,
    ) -> Result<(f64, Gradients)> {
        self.check_features(features)?;
        if targets.len() != features.len() {
            return Err(Error::Input(format!(
                "{} targets for {} samples",
                targets.len(),
                features.len()
            )));
        }
        if let Some(v) = terms.v_weights {
            if v.len() != features.len() {
                return Err(Error::Input(format!(
                    "{} entropy weights for {} samples",
                    v.len(),
                    features.len()
                )));
            }
        }
        if features.is_empty() {
            return Err(Error::Input("empty batch".to_string()));
        }
        let c = self.output_dim();
        for (i, t) in targets.iter().enumerate() {
            if t.num_classes() != c {
                return Err(Error::Input(format!(
                    "target {i} has {} classes, the network emits {c}",
                    t.num_classes()
                )));
            }
        }

        let batch = features.len() as f64;
        let gamma = terms.entropy_weight;
        let mut grads = self.zero_gradients();
        let mut ce_sum = 0.0;
        let mut ent_sum = 0.0;

        for (i, x) in features.iter().enumerate() {
            let acts = self.forward_trace(x);
            let logits = acts.last().unwrap();
            let probs = softmax(logits);
            let target = targets[i].probs();
            let v = terms.v_weights.map_or(1.0, |vw| vw[i]);

            let mut entropy = 0.0;
            for &p in &probs {
                if p > 0.0 {
                    entropy -= p * ln_clamped(p);
                }
            }
            for k in 0..c {
                ce_sum -= target[k] * ln_clamped(probs[k]);
            }
            ent_sum += v * entropy;

            // Gradient at the logits: softmax cross entropy gives p - t;
            // the entropy term adds -p_k (ln p_k + H).
            let mut delta: Vec<f64> = (0..c)
                .map(|k| {
                    let ce = probs[k] - target[k];
                    let ent = -probs[k] * (ln_clamped(probs[k]) + entropy);
                    (ce + gamma * v * ent) / batch
                })
                .collect();

            for l in (0..self.num_layers()).rev() {
                let fan_in = self.layer_dims[l];
                let fan_out = self.layer_dims[l + 1];
                let a_in = &acts[l];
                for o in 0..fan_out {
                    let d = delta[o];
                    grads.biases[l][o] += d;
                    let row = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
                    for (g, ai) in row.iter_mut().zip(a_in) {
                        *g += d * ai;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; fan_in];
                    let w = &self.weights[l];
                    for o in 0..fan_out {
                        let d = delta[o];
                        let row = &w[o * fan_in..(o + 1) * fan_in];
                        for (p, wi) in prev.iter_mut().zip(row) {
                            *p += d * wi;
                        }
                    }
                    // ReLU mask: acts[l] is the layer input, already
                    // rectified, so positive entries mark active units.
                    for (p, &a) in prev.iter_mut().zip(a_in) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }

        let loss = ce_sum / batch + gamma * (ent_sum / batch);
        Ok((loss, grads))
    }
}

/// Soft cross entropy of one prediction against one soft target, with the
/// prediction clamped away from zero before the logarithm.
pub fn cross_entropy_soft(probs: &SoftLabel, target: &SoftLabel) -> f64 {
    assert_eq!(
        probs.num_classes(),
        target.num_classes(),
        "class count mismatch"
    );
    -target
        .probs()
        .iter()
        .zip(probs.probs())
        .map(|(t, p)| t * ln_clamped(*p))
        .sum::<f64>()
}

/// Forward pass plus loss, no gradients. Matches the loss returned by
/// [`Network::backward`] for identical inputs.
pub fn batch_loss(
    net: &Network,
    features: &[Vec<f64>],
    targets: &[SoftLabel],
    terms: &LossTerms,
) -> Result<f64> {
    let probs = net.forward(features)?;
    if targets.len() != probs.len() {
        return Err(Error::Input(format!(
            "{} targets for {} samples",
            targets.len(),
            probs.len()
        )));
    }
    let batch = probs.len() as f64;
    let mut ce_sum = 0.0;
    let mut ent_sum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        ce_sum += cross_entropy_soft(p, &targets[i]);
        let v = terms.v_weights.map_or(1.0, |vw| vw[i]);
        let mut entropy = 0.0;
        for &pk in p.probs() {
            if pk > 0.0 {
                entropy -= pk * ln_clamped(pk);
            }
        }
        ent_sum += v * entropy;
    }
    Ok(ce_sum / batch + terms.entropy_weight * (ent_sum / batch))
}

/// SGD-with-momentum state. The update per parameter is
///
/// ```text
/// velocity <- momentum * velocity + gradient + weight_decay * param
/// param    <- param - lr * velocity
/// ```
#[derive(Debug, Clone)]
pub struct OptimizerState {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(net: &Network, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay >= 0.0) || !weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            lr,
            momentum,
            weight_decay,
            velocity_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            velocity_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Adjusts the learning rate (used by the epoch schedule); momentum
    /// buffers are kept.
    pub fn set_lr(&mut self, lr: f64) {
        assert!(lr > 0.0 && lr.is_finite());
        self.lr = lr;
    }
}

/// Applies one optimizer step in place. Rejects non-finite gradients
/// before touching any parameter.
pub fn sgd_step(net: &mut Network, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    for l in 0..net.weights.len() {
        let finite = grads.weights[l].iter().all(|g| g.is_finite())
            && grads.biases[l].iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::NonFiniteGradient { layer: l });
        }
    }
    for l in 0..net.weights.len() {
        for (k, w) in net.weights[l].iter_mut().enumerate() {
            let vel = &mut state.velocity_w[l][k];
            *vel = state.momentum * *vel + grads.weights[l][k] + state.weight_decay * *w;
            *w -= state.lr * *vel;
        }
        for (k, b) in net.biases[l].iter_mut().enumerate() {
            let vel = &mut state.velocity_b[l][k];
            *vel = state.momentum * *vel + grads.biases[l][k] + state.weight_decay * *b;
            *b -= state.lr * *vel;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn random_batch(
        rng: &mut ChaCha8Rng,
        n: usize,
        dim: usize,
        classes: usize,
    ) -> (Vec<Vec<f64>>, Vec<SoftLabel>, Vec<f64>) {
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let targets: Vec<SoftLabel> = (0..n)
            .map(|_| {
                let logits: Vec<f64> = (0..classes).map(|_| rng.gen::<f64>() * 3.0).collect();
                SoftLabel::from_logits(&logits)
            })
            .collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        (features, targets, v)
    }

    #[test]
    fn init_respects_xavier_bounds_and_seed() {
        let net = Network::new(&[8, 16, 4], 42).unwrap();
        for l in 0..net.num_layers() {
            let limit =
                (6.0 / (net.layer_dims[l] + net.layer_dims[l + 1]) as f64).sqrt();
            assert!(net.weights[l].iter().all(|w| w.abs() <= limit));
            assert!(net.biases[l].iter().all(|&b| b == 0.0));
        }
        let again = Network::new(&[8, 16, 4], 42).unwrap();
        assert_eq!(net.flatten_params(), again.flatten_params());
        let other = Network::new(&[8, 16, 4], 43).unwrap();
        assert_ne!(net.flatten_params(), other.flatten_params());
    }

    #[test]
    fn new_rejects_degenerate_shapes() {
        assert!(Network::new(&[8], 0).is_err());
        assert!(Network::new(&[8, 0, 4], 0).is_err());
        assert!(Network::new(&[8, 1], 0).is_err());
    }

    #[test]
    fn zero_network_emits_uniform() {
        let mut net = Network::new(&[5, 7, 4], 1).unwrap();
        let zeros = vec![0.0; net.flatten_params().len()];
        net.set_params(&zeros);
        let probs = net.forward(&[vec![0.3, -0.2, 0.9, 0.0, 1.4]]).unwrap();
        for c in 0..4 {
            close(probs[0].get(c), 0.25, 1e-12);
        }
    }

    #[test]
    fn identity_single_layer_is_plain_softmax() {
        let mut net = Network::new(&[3, 3], 1).unwrap();
        net.set_params(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let x = vec![0.2, -1.0, 0.7];
        let probs = net.forward(&[x.clone()]).unwrap();
        let expected = softmax(&x);
        for c in 0..3 {
            close(probs[0].get(c), expected[c], 1e-15);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::new(&[4, 3], 1).unwrap();
        let err = net.forward(&[vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn forward_rows_are_distributions() {
        let net = Network::new(&[6, 12, 5], 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (features, _, _) = random_batch(&mut rng, 20, 6, 5);
        for p in net.forward(&features).unwrap() {
            let sum: f64 = p.probs().iter().sum();
            close(sum, 1.0, 1e-9);
        }
    }

    #[test]
    fn cross_entropy_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = SoftLabel::from_logits(&[rng.gen(), rng.gen(), rng.gen()]);
            let t = SoftLabel::from_logits(&[rng.gen(), rng.gen(), rng.gen()]);
            let mut expected = 0.0;
            for c in 0..3 {
                expected -= t.get(c) * p.get(c).max(1e-12).ln();
            }
            close(cross_entropy_soft(&p, &t), expected, 1e-12);
        }
    }

    #[test]
    fn cross_entropy_one_hot_target_is_negative_log_prob() {
        let p = SoftLabel::from_logits(&[1.0, 2.0, 0.5, -1.0]);
        let t = SoftLabel::one_hot(1, 4);
        close(cross_entropy_soft(&p, &t), -p.get(1).ln(), 1e-15);
        let exact = SoftLabel::one_hot(1, 4);
        assert_eq!(cross_entropy_soft(&exact, &t), 0.0);
    }

    /// Central finite differences over every parameter.
    fn assert_matches_fd(
        net: &Network,
        features: &[Vec<f64>],
        targets: &[SoftLabel],
        terms: &LossTerms,
    ) {
        let (loss, grads) = net.backward(features, targets, terms).unwrap();
        let direct = batch_loss(net, features, targets, terms).unwrap();
        close(loss, direct, 1e-12);

        let mut probe = net.clone();
        let params = net.flatten_params();
        let mut flat_grads = Vec::new();
        for l in 0..grads.weights.len() {
            flat_grads.extend_from_slice(&grads.weights[l]);
            flat_grads.extend_from_slice(&grads.biases[l]);
        }
        let h = 1e-5;
        for k in 0..params.len() {
            let mut plus = params.clone();
            plus[k] += h;
            probe.set_params(&plus);
            let up = batch_loss(&probe, features, targets, terms).unwrap();
            let mut minus = params.clone();
            minus[k] -= h;
            probe.set_params(&minus);
            let down = batch_loss(&probe, features, targets, terms).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let analytic = flat_grads[k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            assert!(
                (analytic - numeric).abs() / denom <= 1e-5,
                "param {k}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_ce_only() {
        let net = Network::new(&[3, 5, 4], 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (features, targets, _) = random_batch(&mut rng, 6, 3, 4);
        assert_matches_fd(&net, &features, &targets, &LossTerms::default());
    }

    #[test]
    fn gradients_match_finite_differences_with_entropy_term() {
        let net = Network::new(&[3, 6, 4], 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (features, targets, v) = random_batch(&mut rng, 6, 3, 4);
        let terms = LossTerms {
            entropy_weight: 0.4,
            v_weights: Some(&v),
        };
        assert_matches_fd(&net, &features, &targets, &terms);
        let heavier = LossTerms {
            entropy_weight: 1.3,
            v_weights: Some(&v),
        };
        assert_matches_fd(&net, &features, &targets, &heavier);
    }

    #[test]
    fn gradients_match_finite_differences_on_mixed_batch() {
        // Mixup-style inputs: convex feature and target blends.
        let net = Network::new(&[4, 8, 3], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (fa, ta, v) = random_batch(&mut rng, 5, 4, 3);
        let (fb, tb, _) = random_batch(&mut rng, 5, 4, 3);
        let lam = 0.3;
        let features: Vec<Vec<f64>> = fa
            .iter()
            .zip(&fb)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect())
            .collect();
        let targets: Vec<SoftLabel> = ta
            .iter()
            .zip(&tb)
            .map(|(a, b)| {
                let probs: Vec<f64> = a
                    .probs()
                    .iter()
                    .zip(b.probs())
                    .map(|(x, y)| lam * x + (1.0 - lam) * y)
                    .collect();
                SoftLabel::new(probs).unwrap()
            })
            .collect();
        let terms = LossTerms {
            entropy_weight: 0.4,
            v_weights: Some(&v),
        };
        assert_matches_fd(&net, &features, &targets, &terms);
    }

    #[test]
    fn logit_gradient_identity_on_single_layer() {
        // With one linear layer the bias gradient *is* the mean logit
        // gradient, which for pure cross entropy must equal mean(p - t).
        let net = Network::new(&[4, 3], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (features, targets, _) = random_batch(&mut rng, 5, 4, 3);
        let (_, grads) = net
            .backward(&features, &targets, &LossTerms::default())
            .unwrap();
        let probs = net.forward(&features).unwrap();
        for k in 0..3 {
            let mut expected = 0.0;
            for i in 0..5 {
                expected += (probs[i].get(k) - targets[i].get(k)) / 5.0;
            }
            close(grads.biases[0][k], expected, 1e-12);
        }
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let net = Network::new(&[3, 4, 3], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (features, targets, _) = random_batch(&mut rng, 4, 3, 3);
        let mut doubled_f = features.clone();
        doubled_f.extend(features.clone());
        let mut doubled_t = targets.clone();
        doubled_t.extend(targets.clone());
        let (_, g1) = net.backward(&features, &targets, &LossTerms::default()).unwrap();
        let (_, g2) = net
            .backward(&doubled_f, &doubled_t, &LossTerms::default())
            .unwrap();
        for l in 0..g1.weights.len() {
            for (a, b) in g1.weights[l].iter().zip(&g2.weights[l]) {
                close(*a, *b, 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_misaligned_batches() {
        let net = Network::new(&[3, 4, 3], 2).unwrap();
        let features = vec![vec![0.0; 3]; 2];
        let targets = vec![SoftLabel::uniform(3)];
        assert!(net
            .backward(&features, &targets, &LossTerms::default())
            .is_err());
        let bad_v = [1.0];
        let targets2 = vec![SoftLabel::uniform(3); 2];
        let terms = LossTerms {
            entropy_weight: 0.1,
            v_weights: Some(&bad_v),
        };
        assert!(net.backward(&features, &targets2, &terms).is_err());
    }

    #[test]
    fn plain_sgd_step_moves_against_gradient() {
        let mut net = Network::new(&[2, 2], 1).unwrap();
        net.set_params(&[0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
        let mut state = OptimizerState::new(&net, 0.1, 0.0, 0.0).unwrap();
        let grads = Gradients {
            weights: vec![vec![1.0, -2.0, 0.0, 0.5]],
            biases: vec![vec![0.25, 0.0]],
        };
        sgd_step(&mut net, &grads, &mut state).unwrap();
        let p = net.flatten_params();
        close(p[0], 0.5 - 0.1 * 1.0, 1e-15);
        close(p[1], 0.5 + 0.1 * 2.0, 1e-15);
        close(p[4], -0.1 * 0.25, 1e-15);
    }

    #[test]
    fn momentum_second_step_displacement() {
        // v1 = g, v2 = 0.9 g + g = 1.9 g, so the second step moves
        // parameters by exactly lr * 1.9 * g.
        let mut net = Network::new(&[2, 2], 1).unwrap();
        net.set_params(&[0.0; 6]);
        let mut state = OptimizerState::new(&net, 0.05, 0.9, 0.0).unwrap();
        let grads = Gradients {
            weights: vec![vec![1.0, -1.0, 2.0, 0.0]],
            biases: vec![vec![0.5, -0.5]],
        };
        sgd_step(&mut net, &grads, &mut state).unwrap();
        let after_one = net.flatten_params();
        sgd_step(&mut net, &grads, &mut state).unwrap();
        let after_two = net.flatten_params();
        for k in 0..after_one.len() {
            let g = [1.0, -1.0, 2.0, 0.0, 0.5, -0.5][k];
            close(after_one[k] - after_two[k], 0.05 * 1.9 * g, 1e-12);
        }
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut net = Network::new(&[2, 2], 1).unwrap();
        net.set_params(&[1.0, -1.0, 2.0, 0.5, 0.2, -0.4]);
        let mut state = OptimizerState::new(&net, 0.1, 0.0, 0.01).unwrap();
        let grads = Gradients {
            weights: vec![vec![0.0; 4]],
            biases: vec![vec![0.0; 2]],
        };
        sgd_step(&mut net, &grads, &mut state).unwrap();
        let p = net.flatten_params();
        close(p[0], 1.0 * (1.0 - 0.1 * 0.01), 1e-15);
        close(p[5], -0.4 * (1.0 - 0.1 * 0.01), 1e-15);
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let mut net = Network::new(&[3, 4, 3], 4).unwrap();
        let before = net.flatten_params();
        let mut state = OptimizerState::new(&net, 0.1, 0.9, 0.0).unwrap();
        let grads = Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        sgd_step(&mut net, &grads, &mut state).unwrap();
        assert_eq!(net.flatten_params(), before);
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let mut net = Network::new(&[3, 4, 3], 4).unwrap();
        let mut state = OptimizerState::new(&net, 0.1, 0.9, 0.0).unwrap();
        let mut grads = Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        grads.weights[1][2] = f64::NAN;
        let before = net.flatten_params();
        match sgd_step(&mut net, &grads, &mut state) {
            Err(Error::NonFiniteGradient { layer }) => assert_eq!(layer, 1),
            other => panic!("expected gradient error, got {other:?}"),
        }
        assert_eq!(net.flatten_params(), before, "no partial update applied");
    }

    #[test]
    fn optimizer_state_validates_hyperparameters() {
        let net = Network::new(&[2, 2], 1).unwrap();
        assert!(OptimizerState::new(&net, 0.0, 0.9, 0.0).is_err());
        assert!(OptimizerState::new(&net, 0.1, 1.0, 0.0).is_err());
        assert!(OptimizerState::new(&net, 0.1, 0.9, -0.1).is_err());
    }

    #[test]
    fn short_training_is_bitwise_deterministic() {
        let run = || {
            let mut net = Network::new(&[4, 6, 3], 77).unwrap();
            let mut state = OptimizerState::new(&net, 0.05, 0.9, 5e-4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let (features, targets, v) = random_batch(&mut rng, 16, 4, 3);
            for _ in 0..20 {
                let terms = LossTerms {
                    entropy_weight: 0.4,
                    v_weights: Some(&v),
                };
                let (_, grads) = net.backward(&features, &targets, &terms).unwrap();
                sgd_step(&mut net, &grads, &mut state).unwrap();
            }
            net.flatten_params()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
