//! Feed-forward network with exact gradients.
//!
//! A minimal multi-layer perceptron over flat parameter vectors: softmax
//! cross-entropy loss, optional L2 penalty, hand-derived backprop. All
//! arithmetic is f64 so trajectories stay bit-comparable across strategies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Hidden-layer nonlinearity. The output layer is always linear logits fed
/// into softmax cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Network shape: layer sizes from input to output, hidden nonlinearity.
/// The last entry is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let arch = MlpArch {
            layer_sizes,
            activation: Activation::default(),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_activation(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let mut arch = MlpArch::new(layer_sizes)?;
        arch.activation = activation;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("architecture needs at least input and output layers"));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Output width, i.e. the class count.
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// (weight offset, bias offset) of layer `l` in the flat vector.
    /// Layout per layer: row-major weights `[out × in]`, then biases `[out]`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.layer_sizes[k] * self.layer_sizes[k + 1] + self.layer_sizes[k + 1];
        }
        (off, off + self.layer_sizes[l] * self.layer_sizes[l + 1])
    }
}

/// SGD hyperparameters: learning rate η, momentum factor γ, L2 weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.005, momentum: 0.1, weight_decay: 1e-4 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::config("momentum must lie strictly between 0 and 1"));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        Ok(())
    }
}

/// Borrowed view of labeled samples: `features` is row-major with `dims`
/// columns, `labels[i]` is the class of row `i`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
    pub dims: usize,
}

impl<'a> Batch<'a> {
    pub fn new(features: &'a [f64], labels: &'a [usize], dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::config("batch feature dimension must be positive"));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::config(format!(
                "feature buffer holds {} values, expected {} rows × {} dims",
                features.len(),
                labels.len(),
                dims
            )));
        }
        Ok(Batch { features, labels, dims })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    fn check_against(&self, arch: &MlpArch) -> Result<()> {
        if self.is_empty() {
            return Err(Error::config("batch is empty"));
        }
        if self.dims != arch.input_dim() {
            return Err(Error::config(format!(
                "batch dimension {} does not match network input {}",
                self.dims,
                arch.input_dim()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= arch.output_dim()) {
            return Err(Error::config(format!(
                "label {} out of range for {} classes",
                bad,
                arch.output_dim()
            )));
        }
        Ok(())
    }
}

struct LayerView<'a> {
    w: &'a [f64],
    b: &'a [f64],
    rows: usize,
    cols: usize,
}

fn layer_views<'a>(params: &'a [f64], sizes: &[usize]) -> Vec<LayerView<'a>> {
    let mut views = Vec::with_capacity(sizes.len() - 1);
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (cols, rows) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + rows * cols];
        off += rows * cols;
        let b = &params[off..off + rows];
        off += rows;
        views.push(LayerView { w, b, rows, cols });
    }
    views
}

/// Scaled-uniform initialization: layer weights drawn from
/// U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))), biases zero.
/// Deterministic for a fixed seed.
pub fn init_params(arch: &MlpArch, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut p = vec![0.0; arch.param_count()];
    let mut off = 0;
    for w in arch.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            p[off] = rng.gen_range(-bound..bound);
            off += 1;
        }
        off += fan_out;
    }
    Ok(ParamVector(p))
}

fn forward(
    views: &[LayerView<'_>],
    activation: Activation,
    x: &[f64],
    acts: &mut [Vec<f64>],
    zs: &mut [Vec<f64>],
) {
    let lcount = views.len();
    acts[0].copy_from_slice(x);
    for l in 0..lcount {
        let v = &views[l];
        for r in 0..v.rows {
            let mut z = v.b[r];
            let wrow = &v.w[r * v.cols..(r + 1) * v.cols];
            for c in 0..v.cols {
                z += wrow[c] * acts[l][c];
            }
            zs[l][r] = z;
            acts[l + 1][r] = if l + 1 == lcount { z } else { activation.apply(z) };
        }
    }
}

/// Log-sum-exp of logits, max-subtracted for overflow safety.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy over the batch plus (weight_decay/2)·‖params‖²,
/// with its exact gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    arch: &MlpArch,
    batch: &Batch<'_>,
    weight_decay: f64,
) -> Result<(f64, ParamVector)> {
    arch.validate()?;
    batch.check_against(arch)?;
    if params.len() != arch.param_count() {
        return Err(Error::config(format!(
            "parameter vector length {} does not match architecture ({})",
            params.len(),
            arch.param_count()
        )));
    }
    if weight_decay < 0.0 || !weight_decay.is_finite() {
        return Err(Error::config("weight_decay must be nonnegative"));
    }

    let sizes = &arch.layer_sizes;
    let lcount = arch.layer_count();
    let views = layer_views(params.as_slice(), sizes);
    let mut acts: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut zs: Vec<Vec<f64>> = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
    let mut deltas: Vec<Vec<f64>> = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
    let mut grad = vec![0.0; params.len()];
    let mut loss_sum = 0.0;

    for s in 0..batch.len() {
        forward(&views, arch.activation, batch.row(s), &mut acts, &mut zs);
        let logits = &zs[lcount - 1];
        let label = batch.labels[s];
        let lse = log_sum_exp(logits);
        loss_sum += lse - logits[label];

        for r in 0..logits.len() {
            let softmax = (logits[r] - lse).exp();
            deltas[lcount - 1][r] = softmax - if r == label { 1.0 } else { 0.0 };
        }

        for l in (0..lcount).rev() {
            let v = &views[l];
            let (w_off, b_off) = arch.layer_offsets(l);
            for r in 0..v.rows {
                let d = deltas[l][r];
                let grow = &mut grad[w_off + r * v.cols..w_off + (r + 1) * v.cols];
                for c in 0..v.cols {
                    grow[c] += d * acts[l][c];
                }
                grad[b_off + r] += d;
            }
            if l > 0 {
                let (lo, hi) = deltas.split_at_mut(l);
                let dl = &hi[0];
                let dprev = &mut lo[l - 1];
                for c in 0..v.cols {
                    let mut da = 0.0;
                    for r in 0..v.rows {
                        da += v.w[r * v.cols + c] * dl[r];
                    }
                    dprev[c] = da * arch.activation.derivative(zs[l - 1][c]);
                }
            }
        }
    }

    let inv = 1.0 / batch.len() as f64;
    let mut loss = loss_sum * inv;
    for g in &mut grad {
        *g *= inv;
    }
    if weight_decay > 0.0 {
        loss += 0.5 * weight_decay * params.dot(params);
        for (g, &w) in grad.iter_mut().zip(params.as_slice()) {
            *g += weight_decay * w;
        }
    }
    Ok((loss, ParamVector(grad)))
}

/// Accuracy (argmax predictions, ties to the lowest class index) and mean
/// cross-entropy over the given samples. No L2 term: this measures fit, not
/// the training objective.
pub fn evaluate(params: &ParamVector, arch: &MlpArch, batch: &Batch<'_>) -> Result<(f64, f64)> {
    arch.validate()?;
    batch.check_against(arch)?;
    if params.len() != arch.param_count() {
        return Err(Error::config(format!(
            "parameter vector length {} does not match architecture ({})",
            params.len(),
            arch.param_count()
        )));
    }

    let sizes = &arch.layer_sizes;
    let lcount = arch.layer_count();
    let views = layer_views(params.as_slice(), sizes);
    let mut acts: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut zs: Vec<Vec<f64>> = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();

    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for s in 0..batch.len() {
        forward(&views, arch.activation, batch.row(s), &mut acts, &mut zs);
        let logits = &zs[lcount - 1];
        let lse = log_sum_exp(logits);
        loss_sum += lse - logits[batch.labels[s]];
        let mut best = 0;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = k;
            }
        }
        if best == batch.labels[s] {
            correct += 1;
        }
    }
    let n = batch.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_batch(rng: &mut ChaCha20Rng, n: usize, dims: usize, classes: usize) -> (Vec<f64>, Vec<usize>) {
        let features: Vec<f64> = (0..n * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        (features, labels)
    }

    fn fd_loss(params: &ParamVector, arch: &MlpArch, batch: &Batch<'_>, wd: f64) -> f64 {
        loss_and_grad(params, arch, batch, wd).unwrap().0
    }

    #[test]
    fn param_count_matches_hand_count() {
        let arch = MlpArch::new(vec![2, 3, 2]).unwrap();
        assert_eq!(arch.param_count(), 17);
        let (w1, b1) = arch.layer_offsets(1);
        assert_eq!((w1, b1), (9, 15));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let small = MlpArch::new(vec![2, 1]).unwrap();
        assert_eq!(init_params(&small, 7).unwrap(), init_params(&small, 7).unwrap());

        let square = MlpArch::new(vec![4, 4]).unwrap();
        assert_ne!(init_params(&square, 1).unwrap(), init_params(&square, 2).unwrap());
    }

    #[test]
    fn init_zeroes_biases_and_bounds_weights() {
        let arch = MlpArch::new(vec![3, 5, 2]).unwrap();
        let p = init_params(&arch, 42).unwrap();
        let (w0, b0) = arch.layer_offsets(0);
        let (w1, b1) = arch.layer_offsets(1);
        assert!(p.0[b0..w1].iter().all(|&v| v == 0.0));
        assert!(p.0[b1..].iter().all(|&v| v == 0.0));
        let bound0 = (6.0 / 8.0f64).sqrt();
        assert!(p.0[w0..b0].iter().all(|&v| v.abs() <= bound0 && v.is_finite()));
    }

    #[test]
    fn zero_weights_give_uniform_softmax_loss() {
        let arch = MlpArch::new(vec![3, 2]).unwrap();
        let params = ParamVector::zeros(arch.param_count());
        let features = vec![0.3, -0.1, 0.5, 1.0, 0.0, -2.0];
        let labels = vec![0, 1];
        let batch = Batch::new(&features, &labels, 3).unwrap();
        let (loss, _) = loss_and_grad(&params, &arch, &batch, 0.0).unwrap();
        assert_relative_eq!(loss, 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn duplicated_batch_matches_single_copy() {
        let arch = MlpArch::new(vec![2, 4, 3]).unwrap();
        let params = init_params(&arch, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (f, l) = random_batch(&mut rng, 4, 2, 3);
        let mut f2 = f.clone();
        f2.extend_from_slice(&f);
        let mut l2 = l.clone();
        l2.extend_from_slice(&l);
        let single = Batch::new(&f, &l, 2).unwrap();
        let double = Batch::new(&f2, &l2, 2).unwrap();
        let (loss1, grad1) = loss_and_grad(&params, &arch, &single, 0.0).unwrap();
        let (loss2, grad2) = loss_and_grad(&params, &arch, &double, 0.0).unwrap();
        assert_relative_eq!(loss1, loss2, max_relative = 1e-12);
        for (a, b) in grad1.0.iter().zip(&grad2.0) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let cases: &[(&[usize], Activation, f64)] = &[
            (&[3, 2], Activation::Relu, 0.0),
            (&[4, 5, 3], Activation::Relu, 0.1),
            (&[2, 6, 4, 3], Activation::Tanh, 0.0),
            (&[5, 4, 2], Activation::Tanh, 0.01),
        ];
        let h = 1e-5;
        let mut rng = ChaCha20Rng::seed_from_u64(91);
        let mut checked = 0;
        for &(sizes, act, wd) in cases {
            for _ in 0..5 {
                let arch = MlpArch::with_activation(sizes.to_vec(), act).unwrap();
                let mut params = init_params(&arch, rng.gen()).unwrap();
                // Nonzero biases so every coordinate participates.
                for v in &mut params.0 {
                    *v += rng.gen_range(-0.05..0.05);
                }
                let n = rng.gen_range(1..6);
                let (f, l) = random_batch(&mut rng, n, sizes[0], *sizes.last().unwrap());
                let batch = Batch::new(&f, &l, sizes[0]).unwrap();
                let (_, grad) = loss_and_grad(&params, &arch, &batch, wd).unwrap();
                let mut p = params.clone();
                for j in 0..p.len() {
                    let orig = p.0[j];
                    p.0[j] = orig + h;
                    let up = fd_loss(&p, &arch, &batch, wd);
                    p.0[j] = orig - h;
                    let down = fd_loss(&p, &arch, &batch, wd);
                    p.0[j] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let a = grad.0[j];
                    let tol = 1e-4 * a.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (a - fd).abs() <= tol,
                        "coordinate {j}: analytic {a} vs fd {fd} (sizes {sizes:?})"
                    );
                }
                checked += 1;
            }
        }
        assert_eq!(checked, 20);
    }

    #[test]
    fn loss_is_nonnegative_and_grad_finite() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..30 {
            let arch = MlpArch::new(vec![3, 4, 2]).unwrap();
            let mut params = init_params(&arch, rng.gen()).unwrap();
            for v in &mut params.0 {
                *v *= rng.gen_range(0.0..3.0);
            }
            let (f, l) = random_batch(&mut rng, 5, 3, 2);
            let batch = Batch::new(&f, &l, 3).unwrap();
            let (loss, grad) = loss_and_grad(&params, &arch, &batch, 0.05).unwrap();
            assert!(loss >= 0.0);
            assert!(loss.is_finite());
            assert!(grad.0.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn single_layer_descent_step_does_not_increase_loss() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..20 {
            let arch = MlpArch::new(vec![4, 3]).unwrap();
            let params = init_params(&arch, rng.gen()).unwrap();
            let (f, l) = random_batch(&mut rng, 8, 4, 3);
            let batch = Batch::new(&f, &l, 4).unwrap();
            let (loss, grad) = loss_and_grad(&params, &arch, &batch, 0.0).unwrap();
            let mut stepped = params.clone();
            stepped.axpy(-1e-3, &grad);
            let (loss2, _) = loss_and_grad(&stepped, &arch, &batch, 0.0).unwrap();
            assert!(loss2 <= loss + 1e-12, "loss rose from {loss} to {loss2}");
        }
    }

    #[test]
    fn evaluate_breaks_ties_toward_lowest_class() {
        let arch = MlpArch::new(vec![4, 10]).unwrap();
        let params = ParamVector::zeros(arch.param_count());
        let features: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let labels = vec![0, 3, 0, 7, 0, 0, 2, 0, 9, 0];
        let batch = Batch::new(&features, &labels, 4).unwrap();
        let (acc, loss) = evaluate(&params, &arch, &batch).unwrap();
        assert_relative_eq!(acc, 0.6);
        assert_relative_eq!(loss, 10.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn evaluate_is_perfect_on_hand_fitted_net() {
        // 1-D threshold task: negative → class 0, positive → class 1.
        let arch = MlpArch::new(vec![1, 2]).unwrap();
        let params = ParamVector(vec![-5.0, 5.0, 0.0, 0.0]);
        let features = vec![-2.0, -0.5, 0.5, 2.0];
        let labels = vec![0, 0, 1, 1];
        let batch = Batch::new(&features, &labels, 1).unwrap();
        let (acc, _) = evaluate(&params, &arch, &batch).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let arch = MlpArch::new(vec![3, 5, 4]).unwrap();
        let params = init_params(&arch, 11).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (f, l) = random_batch(&mut rng, 12, 3, 4);
        let batch = Batch::new(&f, &l, 3).unwrap();
        assert_eq!(
            evaluate(&params, &arch, &batch).unwrap(),
            evaluate(&params, &arch, &batch).unwrap()
        );
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let arch = MlpArch::new(vec![3, 2]).unwrap();
        let params = ParamVector::zeros(arch.param_count());
        let features = vec![0.0; 4];
        let labels = vec![0, 1];
        let batch = Batch::new(&features, &labels, 2).unwrap();
        assert!(matches!(
            loss_and_grad(&params, &arch, &batch, 0.0),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn sgd_config_validation() {
        let ok = SgdConfig { learning_rate: 0.005, momentum: 0.1, weight_decay: 1e-4 };
        assert!(ok.validate().is_ok());
        let bad_lr = SgdConfig { learning_rate: 0.0, ..ok };
        assert!(bad_lr.validate().is_err());
        let bad_m = SgdConfig { momentum: 1.0, ..ok };
        assert!(bad_m.validate().is_err());
        let bad_wd = SgdConfig { weight_decay: -0.1, ..ok };
        assert!(bad_wd.validate().is_err());
    }
}
