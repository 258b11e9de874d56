use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::config::PpoConfig;
use super::gae::normalize;
use super::optim::{clip_grad_norm, Adam};
use super::policy::{entropy, Policy};
use super::TrainError;

/// Flattened on-policy samples ready for optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// One observation per row.
    pub obs: DMatrix<f64>,
    /// Pre-squash actions, one per row.
    pub actions: DMatrix<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            obs: self.obs.select_rows(idx),
            actions: self.actions.select_rows(idx),
            old_log_prob: idx.iter().map(|&i| self.old_log_prob[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    /// Negated clipped surrogate.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

fn log_probs(policy: &Policy, mean: &DMatrix<f64>, actions: &DMatrix<f64>) -> Vec<f64> {
    let ls = policy.log_std();
    (0..mean.nrows())
        .map(|i| {
            let z: Vec<f64> = actions.row(i).iter().copied().collect();
            let m: Vec<f64> = mean.row(i).iter().copied().collect();
            super::policy::log_prob(&z, &m, ls)
        })
        .collect()
}

/// PPO loss `−E[min(ρA, clip(ρ)A)] + c_v E[(V−R)²] − c_e H` and its gradient.
pub fn loss_and_grad(policy: &Policy, batch: &Batch, cfg: &PpoConfig) -> (LossParts, Vec<f64>) {
    let n = batch.len() as f64;
    let act = policy.shape.act_dim;
    let fwd = policy.forward(&batch.obs);
    let lp = log_probs(policy, &fwd.mean, &batch.actions);
    let ls = policy.log_std().to_vec();
    let inv_var: Vec<f64> = ls.iter().map(|l| (-2.0 * l).exp()).collect();
    let (lo, hi) = (1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);

    let mut d_mean = DMatrix::zeros(batch.len(), act);
    let mut d_value = DVector::zeros(batch.len());
    let mut d_log_std = vec![0.0; act];
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0usize;
    for i in 0..batch.len() {
        let a = batch.advantages[i];
        let ratio = (lp[i] - batch.old_log_prob[i]).exp();
        let unclipped = ratio * a;
        let clipped_term = ratio.clamp(lo, hi) * a;
        surrogate += unclipped.min(clipped_term);
        if ratio < lo || ratio > hi {
            clipped += 1;
        }
        // The gradient flows only through the unclipped branch when it is the minimum.
        if unclipped <= clipped_term {
            let d_lp = -unclipped / n;
            for k in 0..act {
                let diff = batch.actions[(i, k)] - fwd.mean[(i, k)];
                d_mean[(i, k)] = d_lp * diff * inv_var[k];
                d_log_std[k] += d_lp * (diff * diff * inv_var[k] - 1.0);
            }
        }
        let err = fwd.value[i] - batch.returns[i];
        value_loss += err * err;
        d_value[i] = cfg.value_coef * 2.0 * err / n;
    }
    let h = entropy(&ls);
    for d in d_log_std.iter_mut() {
        *d -= cfg.entropy_coef;
    }
    let policy_loss = -surrogate / n;
    let value_loss = value_loss / n;
    let parts = LossParts {
        policy_loss,
        value_loss,
        entropy: h,
        clip_fraction: clipped as f64 / n,
        total: policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * h,
    };
    let grad = policy.backward(&fwd, &d_mean, &d_value, &d_log_std);
    (parts, grad)
}

/// Sample estimate of KL(old ‖ new): mean of `(ρ − 1) − log ρ`.
pub fn approx_kl(policy: &Policy, batch: &Batch) -> f64 {
    let fwd = policy.forward(&batch.obs);
    let lp = log_probs(policy, &fwd.mean, &batch.actions);
    let n = batch.len() as f64;
    lp.iter()
        .zip(&batch.old_log_prob)
        .map(|(new, old)| {
            let log_ratio = new - old;
            log_ratio.exp() - 1.0 - log_ratio
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// KL after the last retained epoch.
    pub approx_kl: f64,
    pub epochs: usize,
    pub early_stopped: bool,
    /// KL of the rejected epoch, if one was rolled back.
    pub rejected_kl: Option<f64>,
    pub grad_norm: f64,
}

/// Epochs of shuffled minibatch Adam steps. An epoch whose end-of-epoch KL
/// exceeds `kl_limit` is rolled back and ends the update.
pub fn ppo_update<R: Rng>(
    policy: &mut Policy,
    adam: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<UpdateStats, TrainError> {
    let mut batch = batch.clone();
    normalize(&mut batch.advantages);
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.n_epochs {
        let saved = (policy.params.clone(), adam.clone());
        order.shuffle(rng);
        let mut acc = LossParts::default();
        let mut norm_acc = 0.0;
        let mut count = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mb = batch.select(chunk);
            let (parts, mut grad) = loss_and_grad(policy, &mb, cfg);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged(format!("non-finite loss {parts:?}")));
            }
            norm_acc += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grad, lr);
            acc.policy_loss += parts.policy_loss;
            acc.value_loss += parts.value_loss;
            acc.entropy += parts.entropy;
            acc.clip_fraction += parts.clip_fraction;
            count += 1.0;
        }
        let kl = approx_kl(policy, &batch);
        if !kl.is_finite() || kl > cfg.kl_limit {
            policy.params = saved.0;
            *adam = saved.1;
            stats.early_stopped = true;
            stats.rejected_kl = Some(kl);
            break;
        }
        stats.epochs += 1;
        stats.approx_kl = kl;
        stats.policy_loss = acc.policy_loss / count;
        stats.value_loss = acc.value_loss / count;
        stats.entropy = acc.entropy / count;
        stats.clip_fraction = acc.clip_fraction / count;
        stats.grad_norm = norm_acc / count;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::policy::PolicyShape;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    fn toy(rng: &mut impl Rng) -> (Policy, Batch) {
        // 1 input, one hidden unit pair, 1 action: 11 parameters.
        let shape = PolicyShape {
            obs_dim: 1,
            act_dim: 1,
            hidden: vec![2],
        };
        let mut p = Policy::new(shape, -0.3, rng);
        for x in p.params.iter_mut() {
            *x += rng.random_range(-0.5..0.5);
        }
        let n = 16;
        let obs = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let fwd = p.forward(&obs);
        let actions = DMatrix::from_fn(n, 1, |i, _| fwd.mean[(i, 0)] + 0.7 * rng.sample::<f64, _>(StandardNormal));
        let lp = log_probs(&p, &fwd.mean, &actions);
        let old: Vec<f64> = lp.iter().map(|l| l + rng.random_range(-0.15..0.15)).collect();
        let batch = Batch {
            obs,
            actions,
            old_log_prob: old,
            advantages: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            returns: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        };
        (p, batch)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let cfg = PpoConfig {
            entropy_coef: 0.01,
            ..PpoConfig::default()
        };
        let mut checked = 0;
        for _ in 0..20 {
            let (p, b) = toy(&mut rng);
            assert_eq!(p.params.len(), 11);
            let (_, grad) = loss_and_grad(&p, &b, &cfg);
            for i in 0..p.params.len() {
                let h = 1e-6;
                let mut a = p.clone();
                let mut c = p.clone();
                a.params[i] += h;
                c.params[i] -= h;
                let fd = (loss_and_grad(&a, &b, &cfg).0.total - loss_and_grad(&c, &b, &cfg).0.total) / (2.0 * h);
                // Skip samples straddling a clip kink.
                let scale = fd.abs().max(grad[i].abs());
                if scale < 1e-8 {
                    continue;
                }
                let rel = (fd - grad[i]).abs() / scale;
                assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", grad[i]);
                checked += 1;
            }
        }
        assert!(checked > 150);
    }

    #[test]
    fn on_policy_surrogate_is_mean_advantage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (p, mut b) = toy(&mut rng);
        let fwd = p.forward(&b.obs);
        b.old_log_prob = log_probs(&p, &fwd.mean, &b.actions);
        let cfg = PpoConfig::default();
        let (parts, _) = loss_and_grad(&p, &b, &cfg);
        let mean_adv = b.advantages.iter().sum::<f64>() / b.len() as f64;
        assert!((parts.policy_loss + mean_adv).abs() < 1e-12);
        assert_eq!(parts.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantages_leave_only_value_and_entropy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let (p, mut b) = toy(&mut rng);
        b.advantages.fill(0.0);
        let cfg = PpoConfig {
            value_coef: 0.0,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let (_, grad) = loss_and_grad(&p, &b, &cfg);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn kl_early_stop_rolls_back() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut p, mut b) = toy(&mut rng);
        let fwd = p.forward(&b.obs);
        b.old_log_prob = log_probs(&p, &fwd.mean, &b.actions);
        let cfg = PpoConfig {
            batch_size: 4,
            n_epochs: 50,
            kl_limit: 1e-4,
            max_grad_norm: 0.0,
            ..PpoConfig::default()
        };
        let mut adam = Adam::new(p.params.len());
        let stats = ppo_update(&mut p, &mut adam, &b, &cfg, 0.05, &mut rng).unwrap();
        assert!(stats.early_stopped);
        assert!(stats.rejected_kl.unwrap() > cfg.kl_limit);
        assert!(stats.approx_kl <= cfg.kl_limit);
        assert!((approx_kl(&p, &b) - stats.approx_kl).abs() < 1e-15);
    }
}
