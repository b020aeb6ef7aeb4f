//! Clipped-surrogate policy optimisation with generalised advantage
//! estimation and a diagonal Gaussian policy.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Head, Mlp};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub entropy_coef: f64,
    pub steps_per_iter: usize,
    /// Gradient norm clip applied to each minibatch step.
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            lr_policy: 3e-4,
            lr_value: 3e-4,
            entropy_coef: 0.003,
            steps_per_iter: 4096,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: -0.7,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.lambda) || !(self.clip > 0.0) {
            return Err(Error::Config("ppo: gamma and lambda must lie in [0,1] and clip > 0".into()));
        }
        if self.minibatch == 0 || self.steps_per_iter == 0 || !(self.lr_policy > 0.0 && self.lr_value > 0.0) {
            return Err(Error::Config("ppo: minibatch, steps and learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Generalised advantage estimates for one trajectory.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap
/// value of the state after the final step. `dones[t]` marks a terminal
/// transition, which cuts both the bootstrap and the advantage trace.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values need a bootstrap entry");
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Standardise to zero mean and unit variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}

/// Per-sample clipped surrogate `min(rho A, clip(rho) A)` and whether the
/// unclipped branch is the one selected (the gradient flows through it).
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, bool) {
    let plain = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if plain <= clipped {
        (plain, true)
    } else {
        (clipped, false)
    }
}

/// Gaussian policy whose mean is an MLP of the normalized observation and
/// whose log standard deviation is a free parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

/// One minibatch worth of stored transitions.
pub struct Batch<'a> {
    pub obs: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_prob: &'a [f64],
    pub advantages: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyLoss {
    pub loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

const LOG_STD_RANGE: (f64, f64) = (-5.0, 1.0);

impl GaussianPolicy {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut Rng) -> Result<Self> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(act_dim);
        Ok(GaussianPolicy {
            net: Mlp::new(&dims, Head::Linear, 0.01, rng)?,
            log_std: vec![init_log_std; act_dim],
        })
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(obs)
    }

    /// Sample an action; returns the action and its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean(obs)?;
        let a: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s.exp() * z
            })
            .collect();
        let lp = log_prob(&mu, &self.log_std, &a);
        Ok((a, lp))
    }

    /// Entropy of the action distribution (independent of the state).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
    }

    /// Clipped surrogate loss (negated, averaged) minus the entropy bonus,
    /// with its gradient laid out as network parameters then log-stds.
    pub fn loss_and_grad(&self, batch: &Batch, clip: f64, entropy_coef: f64) -> Result<(PolicyLoss, Vec<f64>)> {
        let d = self.act_dim();
        let n = batch.advantages.len();
        if batch.actions.len() != n * d || batch.old_log_prob.len() != n {
            return Err(Error::Shape {
                expected: n * d,
                got: batch.actions.len(),
            });
        }
        let cache = self.net.forward_batch(batch.obs)?;
        let mu = cache.output();
        let inv_var: Vec<f64> = self.log_std.iter().map(|s| (-2.0 * s).exp()).collect();
        let mut dmu = vec![0.0; n * d];
        let mut dlog_std = vec![0.0; d];
        let mut total = 0.0;
        let mut clipped = 0usize;
        let mut kl = 0.0;
        for i in 0..n {
            let a = &batch.actions[i * d..(i + 1) * d];
            let m = &mu[i * d..(i + 1) * d];
            let lp = log_prob(m, &self.log_std, a);
            let ratio = (lp - batch.old_log_prob[i]).exp();
            let (s, flows) = clipped_surrogate(ratio, batch.advantages[i], clip);
            total -= s;
            kl += batch.old_log_prob[i] - lp;
            if !flows || (ratio - 1.0).abs() > clip {
                clipped += 1;
            }
            if flows {
                // d(-rho A / n) / d logp
                let g = -ratio * batch.advantages[i] / n as f64;
                for j in 0..d {
                    let diff = a[j] - m[j];
                    dmu[i * d + j] = g * diff * inv_var[j];
                    dlog_std[j] += g * (diff * diff * inv_var[j] - 1.0);
                }
            }
        }
        let entropy = self.entropy();
        let loss = total / n as f64 - entropy_coef * entropy;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!("policy loss is {loss}")));
        }
        let mut grad = vec![0.0; self.param_count()];
        let np = self.net.param_count();
        self.net.backward_into(&cache, &dmu, &mut grad[..np])?;
        for j in 0..d {
            grad[np + j] = dlog_std[j] - entropy_coef;
        }
        Ok((
            PolicyLoss {
                loss,
                entropy,
                clip_fraction: clipped as f64 / n as f64,
                approx_kl: kl / n as f64,
            },
            grad,
        ))
    }

    /// Apply an optimizer step to all parameters and keep log-stds bounded.
    pub fn apply(&mut self, opt: &mut Adam, grad: &[f64]) -> Result<()> {
        let np = self.net.param_count();
        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend_from_slice(self.net.params());
        flat.extend_from_slice(&self.log_std);
        opt.update(&mut flat, grad)?;
        self.net.params_mut().copy_from_slice(&flat[..np]);
        for (s, v) in self.log_std.iter_mut().zip(&flat[np..]) {
            *s = v.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1);
        }
        Ok(())
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) * (-s).exp();
            -0.5 * z * z - s - half_log_2pi
        })
        .sum()
}

/// Half mean squared error of a value network against its targets, with
/// the parameter gradient.
pub fn value_loss_and_grad(net: &Mlp, obs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let cache = net.forward_batch(obs)?;
    let n = targets.len();
    if cache.output().len() != n {
        return Err(Error::Shape {
            expected: n,
            got: cache.output().len(),
        });
    }
    let diff: Vec<f64> = cache.output().iter().zip(targets).map(|(v, t)| v - t).collect();
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!("value loss is {loss}")));
    }
    let dout: Vec<f64> = diff.iter().map(|d| d / n as f64).collect();
    Ok((loss, net.backward(&cache, &dout)?))
}

/// Scale `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    /// Direct double sum: A_t = sum_l (gamma lambda)^l delta_{t+l}, cut at
    /// the first terminal.
    fn brute_force(r: &[f64], v: &[f64], done: &[bool], g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let mut out = vec![0.0; n];
        for t in 0..n {
            let mut acc = 0.0;
            for k in t..n {
                let live = if done[k] { 0.0 } else { 1.0 };
                let delta = r[k] + g * live * v[k + 1] - v[k];
                acc += (g * l).powi((k - t) as i32) * delta;
                if done[k] {
                    break;
                }
            }
            out[t] = acc;
        }
        out
    }

    #[test]
    fn gae_two_step_example() {
        let (a, t) = gae(&[1.0, 1.0], &[0.5, 0.5, 0.0], &[false, true], 0.9, 0.95);
        let d0: f64 = 1.0 + 0.9 * 0.5 - 0.5;
        let d1: f64 = 1.0 - 0.5;
        assert!((a[1] - d1).abs() < 1e-12);
        assert!((a[0] - (d0 + 0.9 * 0.95 * d1)).abs() < 1e-12);
        assert!((t[0] - (a[0] + 0.5)).abs() < 1e-12);
        let b = brute_force(&[1.0, 1.0], &[0.5, 0.5, 0.0], &[false, true], 0.9, 0.95);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn gae_matches_brute_force_on_random_trajectories() {
        let mut r = rng::from_seed(21);
        for _ in 0..100 {
            let n = r.random_range(1..=50);
            let rew: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let val: Vec<f64> = (0..=n).map(|_| r.random_range(-5.0..5.0)).collect();
            let done: Vec<bool> = (0..n).map(|_| r.random_bool(0.1)).collect();
            let g = r.random_range(0.0..=1.0);
            let l = r.random_range(0.0..=1.0);
            let (a, _) = gae(&rew, &val, &done, g, l);
            let b = brute_force(&rew, &val, &done, g, l);
            for t in 0..n {
                assert!((a[t] - b[t]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gae_limits() {
        let rew = [0.3, -1.0, 2.0];
        let val = [1.0, 0.5, -0.2, 0.7];
        let done = [false; 3];
        let (a, _) = gae(&rew, &val, &done, 0.9, 0.0);
        for t in 0..3 {
            assert_eq!(a[t], rew[t] + 0.9 * val[t + 1] - val[t]);
        }
        let (a, _) = gae(&rew, &val, &done, 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(a[t], rew[t] - val[t]);
        }
    }

    #[test]
    fn clip_definition() {
        assert_eq!(clipped_surrogate(1.5, 2.0, 0.2), (1.2 * 2.0, false));
        assert_eq!(clipped_surrogate(1.0, -3.0, 0.2), (-3.0, true));
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), (-0.8, false));
    }

    fn tiny_policy(w: f64, b: f64, s: f64) -> GaussianPolicy {
        let mut net = Mlp::zeros(&[1, 1], Head::Linear).unwrap();
        net.params_mut().copy_from_slice(&[w, b]);
        GaussianPolicy { net, log_std: vec![s] }
    }

    #[test]
    fn unit_ratio_gives_advantage_weighted_objective() {
        let p = tiny_policy(0.4, -0.1, -0.3);
        let obs = [0.5, -1.0, 2.0];
        let acts = [0.2, 0.1, 0.9];
        let old: Vec<f64> = (0..3)
            .map(|i| log_prob(&[0.4 * obs[i] - 0.1], &[-0.3], &[acts[i]]))
            .collect();
        let adv = [1.0, -0.5, 0.25];
        let batch = Batch {
            obs: &obs,
            actions: &acts,
            old_log_prob: &old,
            advantages: &adv,
        };
        let (l, _) = p.loss_and_grad(&batch, 0.2, 0.0).unwrap();
        assert!((l.loss + adv.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_parameter_policy_gradient_matches_finite_differences() {
        let obs = [0.5, -1.0, 2.0];
        let acts = [0.2, 0.1, 0.9];
        let old = [-0.9, -1.4, -1.1];
        let adv = [1.0, -0.5, 0.25];
        let batch = Batch {
            obs: &obs,
            actions: &acts,
            old_log_prob: &old,
            advantages: &adv,
        };
        let theta = [0.4, -0.1, -0.3];
        let f = |th: &[f64; 3]| tiny_policy(th[0], th[1], th[2]).loss_and_grad(&batch, 0.2, 0.01).unwrap();
        let (_, g) = f(&theta);
        for k in 0..3 {
            let h = 1e-6;
            let mut tp = theta;
            tp[k] += h;
            let mut tm = theta;
            tm[k] -= h;
            let fd = (f(&tp).0.loss - f(&tm).0.loss) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn objective_invariant_to_advantage_shift() {
        let mut r = rng::from_seed(5);
        let p = GaussianPolicy::new(6, 2, &[8], -0.5, &mut r).unwrap();
        let n = 40;
        let obs: Vec<f64> = (0..n * 6).map(|_| r.random_range(-1.0..1.0)).collect();
        let acts: Vec<f64> = (0..n * 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let old: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..-1.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut a1 = raw.clone();
        let mut a2: Vec<f64> = raw.iter().map(|a| a + 37.5).collect();
        normalize_advantages(&mut a1);
        normalize_advantages(&mut a2);
        let loss = |adv: &[f64]| {
            p.loss_and_grad(
                &Batch {
                    obs: &obs,
                    actions: &acts,
                    old_log_prob: &old,
                    advantages: adv,
                },
                0.2,
                0.003,
            )
            .unwrap()
            .0
            .loss
        };
        assert!((loss(&a1) - loss(&a2)).abs() < 1e-9);
    }

    #[test]
    fn value_gradient_matches_finite_differences() {
        let mut r = rng::from_seed(2);
        let net = Mlp::new(&[3, 5, 1], Head::Linear, 1.0, &mut r).unwrap();
        let obs: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let tgt = [0.3, -1.0, 2.0, 0.5];
        let (_, g) = value_loss_and_grad(&net, &obs, &tgt).unwrap();
        let mut p = net.clone();
        for k in 0..net.param_count() {
            let h = 1e-6;
            let o = p.params()[k];
            p.params_mut()[k] = o + h;
            let lp = value_loss_and_grad(&p, &obs, &tgt).unwrap().0;
            p.params_mut()[k] = o - h;
            let lm = value_loss_and_grad(&p, &obs, &tgt).unwrap().0;
            p.params_mut()[k] = o;
            assert!(((lp - lm) / (2.0 * h) - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn sampled_log_prob_is_consistent() {
        let mut r = rng::from_seed(3);
        let p = GaussianPolicy::new(4, 3, &[8], -0.2, &mut r).unwrap();
        let obs = [0.1, 0.2, -0.3, 0.4];
        let (a, lp) = p.sample(&obs, &mut r).unwrap();
        let mu = p.mean(&obs).unwrap();
        assert_eq!(lp, log_prob(&mu, &p.log_std, &a));
    }
}
