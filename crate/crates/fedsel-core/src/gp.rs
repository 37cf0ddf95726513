//! Local momentum training and the projection-based quality score.
//!
//! A client's descent direction is scored by its scalar projection onto the
//! server's global direction; scores are softmax-normalized into rewards and
//! adjusted by the round's accuracy/loss movement.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, Batch, MlpArch, SgdConfig};
use crate::param::ParamVector;

/// Which client vector is projected onto the global direction: the momentum
/// buffer after local training (default) or the last minibatch gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpSource {
    #[default]
    Momentum,
    LastGrad,
}

/// Per-client state carried across rounds. Bandit accounting (pull counts,
/// reward sums) lives in the selection layer; this holds what the client
/// itself owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub id: usize,
    pub momentum: ParamVector,
    pub gp_value: f64,
    pub last_reward: f64,
}

impl ClientState {
    pub fn new(id: usize, param_len: usize) -> Self {
        ClientState {
            id,
            momentum: ParamVector::zeros(param_len),
            gp_value: 0.0,
            last_reward: 0.0,
        }
    }
}

/// The server's reference descent direction with its cached norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDirection {
    pub vector: ParamVector,
    pub norm: f64,
}

impl GlobalDirection {
    pub fn new(vector: ParamVector) -> Self {
        let norm = vector.norm();
        GlobalDirection { vector, norm }
    }

    pub fn mean_of(vectors: &[&ParamVector]) -> Self {
        GlobalDirection::new(ParamVector::mean(vectors))
    }
}

/// One momentum update: d ← γ·d_prev + grad, w ← w_prev − η·d.
/// η = 0 is allowed so a zero-rate step degenerates to momentum bookkeeping.
pub fn mgd_step(
    params: &ParamVector,
    momentum: &ParamVector,
    grad: &ParamVector,
    gamma: f64,
    eta: f64,
) -> Result<(ParamVector, ParamVector)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config("momentum factor must lie strictly between 0 and 1"));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::config("learning rate must be nonnegative"));
    }
    if params.len() != momentum.len() || params.len() != grad.len() {
        return Err(Error::config("parameter, momentum, and gradient lengths differ"));
    }
    let mut d = momentum.scaled(gamma);
    d.add(grad);
    let mut w = params.clone();
    w.axpy(-eta, &d);
    Ok((w, d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainOutput {
    pub params: ParamVector,
    pub momentum: ParamVector,
    pub last_grad: ParamVector,
    pub steps: usize,
}

/// Run `epochs` passes of momentum SGD over the client's samples in seeded
/// shuffled minibatches. Returns None when the client holds no data (the
/// caller decides how loudly to warn).
pub fn local_train(
    ds: &Dataset,
    indices: &[usize],
    arch: &MlpArch,
    start_params: &ParamVector,
    start_momentum: &ParamVector,
    epochs: usize,
    batch_size: usize,
    sgd: &SgdConfig,
    rng: &mut ChaCha20Rng,
) -> Result<Option<LocalTrainOutput>> {
    if indices.is_empty() {
        return Ok(None);
    }
    if epochs == 0 {
        return Err(Error::config("local epochs must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut w = start_params.clone();
    let mut d = start_momentum.clone();
    let mut last_grad = ParamVector::zeros(start_params.len());
    let mut order = indices.to_vec();
    let mut feat = Vec::new();
    let mut lab = Vec::new();
    let mut steps = 0;
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            ds.gather(chunk, &mut feat, &mut lab);
            let batch = Batch::new(&feat, &lab, ds.dims)?;
            let (_, grad) = nn::loss_and_grad(&w, arch, &batch, sgd.weight_decay)?;
            let (nw, nd) = mgd_step(&w, &d, &grad, sgd.momentum, sgd.learning_rate)?;
            w = nw;
            d = nd;
            last_grad = grad;
            steps += 1;
        }
    }
    Ok(Some(LocalTrainOutput { params: w, momentum: d, last_grad, steps }))
}

/// Scalar projection of the client vector onto the global direction:
/// (v·g)/‖g‖.
pub fn gradient_projection(v: &ParamVector, global: &GlobalDirection) -> Result<f64> {
    if !(global.norm > 0.0) {
        return Err(Error::ProjectionUndefined);
    }
    if v.len() != global.vector.len() {
        return Err(Error::config("client vector length differs from global direction"));
    }
    Ok(v.dot(&global.vector) / global.norm)
}

/// Softmax over the participants' scores, max-subtracted for overflow
/// safety. Output sums to 1.
pub fn normalize_gp(values: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty(), "normalize_gp over zero participants");
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Reward adjustment by metric movement: when accuracy moved, scale by
/// 2·exp(ΔA); otherwise by exp(ΔF). Can exceed 1; the bandit layer clips at
/// recording time.
pub fn adjust_reward(c_tilde: f64, a_t: f64, a_prev: f64, f_t: f64, f_prev: f64) -> f64 {
    adjust_reward_eps(c_tilde, a_t, a_prev, f_t, f_prev, 0.0)
}

/// Same with an equality tolerance: accuracies within `eps` of each other
/// take the loss branch. `eps = 0` is exact equality.
pub fn adjust_reward_eps(c_tilde: f64, a_t: f64, a_prev: f64, f_t: f64, f_prev: f64, eps: f64) -> f64 {
    if (a_t - a_prev).abs() > eps {
        c_tilde * 2.0 * (a_t - a_prev).exp()
    } else {
        c_tilde * (f_t - f_prev).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn mgd_step_matches_hand_evaluation() {
        let (w, d) = mgd_step(
            &ParamVector(vec![1.0]),
            &ParamVector(vec![2.0]),
            &ParamVector(vec![1.0]),
            0.5,
            0.1,
        )
        .unwrap();
        assert_eq!(d.0, vec![2.0]);
        assert_eq!(w.0, vec![0.8]);
    }

    #[test]
    fn mgd_zero_grad_zero_momentum_is_a_fixed_point() {
        for gamma in [0.1, 0.5, 0.9] {
            let w0 = ParamVector(vec![1.5, -2.0]);
            let (w, d) = mgd_step(&w0, &ParamVector::zeros(2), &ParamVector::zeros(2), gamma, 0.3).unwrap();
            assert_eq!(w, w0);
            assert_eq!(d, ParamVector::zeros(2));
        }
    }

    #[test]
    fn two_constant_grad_steps_accumulate_momentum() {
        let g = ParamVector(vec![2.0, -1.0]);
        let gamma = 0.3;
        let w0 = ParamVector::zeros(2);
        let (w1, d1) = mgd_step(&w0, &ParamVector::zeros(2), &g, gamma, 0.1).unwrap();
        let (_, d2) = mgd_step(&w1, &d1, &g, gamma, 0.1).unwrap();
        // From zero momentum: d₂ = (1+γ)·g.
        for (a, b) in d2.0.iter().zip(&g.0) {
            assert_relative_eq!(a, &((1.0 + gamma) * b), epsilon = 1e-15);
        }
    }

    #[test]
    fn mgd_rejects_bad_hyperparameters() {
        let v = ParamVector(vec![1.0]);
        assert!(mgd_step(&v, &v, &v, 0.0, 0.1).is_err());
        assert!(mgd_step(&v, &v, &v, 1.0, 0.1).is_err());
        assert!(mgd_step(&v, &v, &v, 0.5, -0.1).is_err());
        assert!(mgd_step(&v, &ParamVector::zeros(2), &v, 0.5, 0.1).is_err());
    }

    fn toy_setup() -> (Dataset, MlpArch, ParamVector) {
        let ds = gen_synthetic(3, 12, 4, 3.0, 50).unwrap();
        let arch = MlpArch::new(vec![4, 5, 3]).unwrap();
        let params = nn::init_params(&arch, 1).unwrap();
        (ds, arch, params)
    }

    #[test]
    fn single_full_batch_epoch_equals_one_hand_step() {
        let (ds, arch, params) = toy_setup();
        let indices: Vec<usize> = (0..ds.len()).collect();
        let sgd = SgdConfig { learning_rate: 0.05, momentum: 0.2, weight_decay: 0.01 };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let out = local_train(&ds, &indices, &arch, &params, &ParamVector::zeros(params.len()), 1, ds.len(), &sgd, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(out.steps, 1);

        // Replay the epoch shuffle so the batch mean sums rows in the same
        // order, keeping the comparison bitwise.
        let mut replay = ChaCha20Rng::seed_from_u64(4);
        let mut order = indices.clone();
        order.shuffle(&mut replay);
        let mut feat = Vec::new();
        let mut lab = Vec::new();
        ds.gather(&order, &mut feat, &mut lab);
        let batch = Batch::new(&feat, &lab, ds.dims).unwrap();
        let (_, grad) = nn::loss_and_grad(&params, &arch, &batch, sgd.weight_decay).unwrap();
        let (w_hand, d_hand) = mgd_step(&params, &ParamVector::zeros(params.len()), &grad, 0.2, 0.05).unwrap();
        assert_eq!(out.params, w_hand);
        assert_eq!(out.momentum, d_hand);
        assert_eq!(out.last_grad, grad);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let (ds, arch, params) = toy_setup();
        let indices: Vec<usize> = (0..ds.len()).collect();
        let sgd = SgdConfig { learning_rate: 0.0, momentum: 0.2, weight_decay: 0.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let out = local_train(&ds, &indices, &arch, &params, &ParamVector::zeros(params.len()), 3, 5, &sgd, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(out.params, params);
    }

    #[test]
    fn local_train_is_seed_deterministic_and_counts_steps() {
        let (ds, arch, params) = toy_setup();
        let indices: Vec<usize> = (0..13).collect();
        let sgd = SgdConfig { learning_rate: 0.01, momentum: 0.1, weight_decay: 1e-4 };
        let zero = ParamVector::zeros(params.len());
        let mut r1 = ChaCha20Rng::seed_from_u64(9);
        let mut r2 = ChaCha20Rng::seed_from_u64(9);
        let a = local_train(&ds, &indices, &arch, &params, &zero, 2, 5, &sgd, &mut r1).unwrap().unwrap();
        let b = local_train(&ds, &indices, &arch, &params, &zero, 2, 5, &sgd, &mut r2).unwrap().unwrap();
        assert_eq!(a, b);
        // 2 epochs × ⌈13/5⌉ = 6 steps.
        assert_eq!(a.steps, 6);

        let mut r3 = ChaCha20Rng::seed_from_u64(10);
        let c = local_train(&ds, &indices, &arch, &params, &zero, 2, 5, &sgd, &mut r3).unwrap().unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn empty_client_is_skipped() {
        let (ds, arch, params) = toy_setup();
        let sgd = SgdConfig { learning_rate: 0.01, momentum: 0.1, weight_decay: 0.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let out = local_train(&ds, &[], &arch, &params, &ParamVector::zeros(params.len()), 1, 5, &sgd, &mut rng).unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn projection_matches_hand_cases() {
        let g = GlobalDirection::new(ParamVector(vec![0.0, 2.0]));
        assert_relative_eq!(
            gradient_projection(&ParamVector(vec![3.0, 4.0]), &g).unwrap(),
            4.0
        );
        assert_relative_eq!(
            gradient_projection(&ParamVector(vec![5.0, 0.0]), &g).unwrap(),
            0.0
        );
        let gg = GlobalDirection::new(ParamVector(vec![3.0, 4.0]));
        assert_relative_eq!(
            gradient_projection(&ParamVector(vec![3.0, 4.0]), &gg).unwrap(),
            5.0
        );
    }

    #[test]
    fn projection_on_zero_direction_is_undefined() {
        let g = GlobalDirection::new(ParamVector::zeros(3));
        assert!(matches!(
            gradient_projection(&ParamVector(vec![1.0, 0.0, 0.0]), &g),
            Err(Error::ProjectionUndefined)
        ));
    }

    proptest! {
        #[test]
        fn projection_is_linear_and_scale_invariant(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            v1 in proptest::collection::vec(-5.0f64..5.0, 4),
            v2 in proptest::collection::vec(-5.0f64..5.0, 4),
            g in proptest::collection::vec(-5.0f64..5.0, 4),
            s in 0.1f64..10.0,
        ) {
            let gv = ParamVector(g.clone());
            prop_assume!(gv.norm() > 1e-6);
            let gd = GlobalDirection::new(gv);
            let p1 = gradient_projection(&ParamVector(v1.clone()), &gd).unwrap();
            let p2 = gradient_projection(&ParamVector(v2.clone()), &gd).unwrap();
            let combo: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
            let pc = gradient_projection(&ParamVector(combo), &gd).unwrap();
            prop_assert!((pc - (a * p1 + b * p2)).abs() <= 1e-9 * (1.0 + pc.abs()));

            let scaled = GlobalDirection::new(ParamVector(g.iter().map(|x| x * s).collect()));
            let ps = gradient_projection(&ParamVector(v1), &scaled).unwrap();
            prop_assert!((ps - p1).abs() <= 1e-9 * (1.0 + p1.abs()));
        }

        #[test]
        fn normalized_scores_sum_to_one_and_keep_argmax(
            values in proptest::collection::vec(-50.0f64..50.0, 1..12)
        ) {
            let out = normalize_gp(&values);
            let sum: f64 = out.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            let argmax_in = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let argmax_out = out
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            prop_assert_eq!(argmax_in, argmax_out);
        }
    }

    #[test]
    fn normalize_matches_hand_softmax() {
        let two = normalize_gp(&[0.0, 0.0]);
        assert_eq!(two, vec![0.5, 0.5]);

        let big = normalize_gp(&[1000.0, 0.0]);
        assert!(big[0] > 1.0 - 1e-12 && big[1] < 1e-12);
        assert!(big.iter().all(|v| v.is_finite()));

        let hand = normalize_gp(&[0.0, 3.0f64.ln()]);
        assert_relative_eq!(hand[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(hand[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn reward_adjustment_matches_hand_cases() {
        assert_relative_eq!(adjust_reward(0.7, 0.5, 0.5, 1.3, 1.3), 0.7);
        assert_relative_eq!(
            adjust_reward(0.2, 0.6, 0.5, 1.0, 1.0),
            0.2 * 2.0 * 0.1f64.exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(adjust_reward(0.2, 0.6, 0.5, 1.0, 1.0), 0.442068, epsilon = 1e-6);
        assert_relative_eq!(
            adjust_reward(0.2, 0.4, 0.5, 1.0, 1.0),
            0.2 * 2.0 * (-0.1f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(adjust_reward(0.2, 0.4, 0.5, 1.0, 1.0), 0.361935, epsilon = 1e-6);
        // Equal accuracies fall back to the loss branch.
        assert_relative_eq!(
            adjust_reward(0.5, 0.5, 0.5, 1.0, 1.2),
            0.5 * (-0.2f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn reward_epsilon_widens_the_equality_branch() {
        // |ΔA| = 0.01 ≤ eps → loss branch.
        let mu = adjust_reward_eps(0.3, 0.51, 0.5, 1.0, 1.0, 0.02);
        assert_relative_eq!(mu, 0.3);
        // Exact mode takes the accuracy branch on the same inputs.
        let mu = adjust_reward_eps(0.3, 0.51, 0.5, 1.0, 1.0, 0.0);
        assert_relative_eq!(mu, 0.3 * 2.0 * 0.01f64.exp(), epsilon = 1e-15);
    }
}
