//! Policy training loop: parallel rollouts, PPO updates and the curriculum.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{parse_hex_f64, read_file, shuffle, write_file, Adam, Head, Mlp, Normalizer};
use crate::rl::curriculum::{curriculum_advance, CurriculumConfig, CurriculumState, Stage};
use crate::rl::env::{Conditions, Env, EnvSettings};
use crate::rl::ppo::{clip_grad_norm, gae, normalize_advantages, value_loss_and_grad, Batch, GaussianPolicy, PpoConfig};
use crate::rng::{self, Rng};
use crate::sim::{NJ, OBS_DIM};
use crate::terrain::PolicyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub curriculum: CurriculumConfig,
    /// Rollout slots; each owns an episode stream, so results do not
    /// depend on the number of threads.
    pub n_envs: usize,
    pub max_iterations: usize,
    /// Iterations run after the curriculum completes.
    pub finetune_iterations: usize,
    /// Optional wall-clock limit; hitting it returns a partial policy.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ppo: PpoConfig::default(),
            curriculum: CurriculumConfig::default(),
            n_envs: 8,
            max_iterations: 1500,
            finetune_iterations: 50,
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.n_envs == 0 || self.ppo.steps_per_iter < self.n_envs {
            return Err(Error::Config("train: need at least one step per rollout slot".into()));
        }
        if self.curriculum.window == 0 || !(self.curriculum.threshold_frac > 0.0) {
            return Err(Error::Config("train: curriculum window and threshold must be positive".into()));
        }
        Ok(())
    }
}

/// A trained policy with its value function and frozen input statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub kind: PolicyKind,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub norm: Normalizer,
    pub action_scale: f64,
    /// The curriculum ran to completion within the budget.
    pub complete: bool,
    pub iterations: usize,
}

impl TrainedPolicy {
    /// Deterministic joint torques (mean action) for a raw observation.
    pub fn torques(&self, obs: &[f64], torque_limit: f64) -> Result<[f64; NJ]> {
        let mu = self.policy.mean(&self.norm.normalize(obs))?;
        Ok(std::array::from_fn(|j| (self.action_scale * mu[j]).clamp(-torque_limit, torque_limit)))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("policy v1\n");
        let _ = writeln!(s, "kind {}", self.kind.name());
        let _ = writeln!(s, "action_scale {:016x}", self.action_scale.to_bits());
        let _ = writeln!(s, "complete {}", self.complete as u8);
        let _ = writeln!(s, "iterations {}", self.iterations);
        s.push_str("log_std");
        for v in &self.policy.log_std {
            let _ = write!(s, " {:016x}", v.to_bits());
        }
        s.push_str("\n[policy]\n");
        s.push_str(&self.policy.net.to_text());
        s.push_str("[value]\n");
        s.push_str(&self.value.to_text());
        s.push_str("[normalizer]\n");
        s.push_str(&self.norm.to_text());
        s
    }

    pub fn from_text(text: &str) -> Result<TrainedPolicy> {
        const WHAT: &str = "policy file";
        let bad = |d: &str| Error::corrupt(WHAT, d.to_string());
        let mut sections = text.split("\n[");
        let head = sections.next().unwrap_or_default();
        let mut lines = head.lines();
        let first = lines.next().unwrap_or_default();
        if first != "policy v1" {
            return Err(Error::Version {
                what: WHAT.into(),
                found: first.into(),
            });
        }
        let mut field = |key: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let kind: PolicyKind = field("kind")?.parse().map_err(|_| bad("bad kind"))?;
        let action_scale = parse_hex_f64(&field("action_scale")?).ok_or_else(|| bad("bad action_scale"))?;
        let complete = field("complete")? == "1";
        let iterations = field("iterations")?.parse().map_err(|_| bad("bad iterations"))?;
        let log_std = field("log_std")?
            .split_whitespace()
            .map(|t| parse_hex_f64(t).ok_or_else(|| bad("bad log_std")))
            .collect::<Result<Vec<f64>>>()?;
        let mut body = |name: &str| -> Result<&str> {
            let sec = sections.next().ok_or_else(|| bad(&format!("missing [{name}]")))?;
            sec.strip_prefix(name)
                .and_then(|r| r.strip_prefix("]\n"))
                .ok_or_else(|| bad(&format!("expected [{name}]")))
        };
        let net = Mlp::from_text(body("policy")?)?;
        let value = Mlp::from_text(body("value")?)?;
        let norm = Normalizer::from_text(body("normalizer")?)?;
        if log_std.len() != net.output_dim() || norm.dim() != net.input_dim() {
            return Err(bad("inconsistent dimensions"));
        }
        Ok(TrainedPolicy {
            kind,
            policy: GaussianPolicy { net, log_std },
            value,
            norm,
            action_scale,
            complete,
            iterations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<TrainedPolicy> {
        TrainedPolicy::from_text(&read_file(path)?)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub avg_episode_reward: f64,
    pub stage: Stage,
    pub difficulty: f64,
    pub guidance_scale: f64,
    pub perturb_max: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str =
        "iter,avg_episode_reward,stage,difficulty,guidance_scale,perturb_max,policy_loss,value_loss";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6},{},{:.2},{:.2},{:.3},{:.6},{:.6}",
            self.iter,
            self.avg_episode_reward,
            self.stage.name(),
            self.difficulty,
            self.guidance_scale,
            self.perturb_max,
            self.policy_loss,
            self.value_loss
        )
    }
}

struct Slot {
    env: Option<Env>,
    rng: Rng,
}

#[derive(Default)]
struct Rollout {
    obs_raw: Vec<f64>,
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_prob: Vec<f64>,
    advantages: Vec<f64>,
    targets: Vec<f64>,
    episode_rewards: Vec<f64>,
}

struct Models<'a> {
    policy: &'a GaussianPolicy,
    value: &'a Mlp,
    norm: &'a Normalizer,
}

fn collect(
    slot: &mut Slot,
    settings: &EnvSettings,
    kind: PolicyKind,
    cond: Conditions,
    m: &Models,
    steps: usize,
    ppo: &PpoConfig,
) -> Result<Rollout> {
    let mut out = Rollout::default();
    let mut rewards = Vec::new();
    let mut values = Vec::new();
    let flush = |out: &mut Rollout, rewards: &mut Vec<f64>, values: &mut Vec<f64>, bootstrap: f64| {
        values.push(bootstrap);
        let dones = vec![false; rewards.len()];
        let (a, t) = gae(rewards, values, &dones, ppo.gamma, ppo.lambda);
        out.advantages.extend(a);
        out.targets.extend(t);
        rewards.clear();
        values.clear();
    };
    let mut nrm = [0.0; OBS_DIM];
    for _ in 0..steps {
        if slot.env.is_none() {
            slot.env = Some(Env::new(settings, kind, cond, &mut slot.rng)?);
        }
        let env = slot.env.as_mut().unwrap();
        let raw = env.observe(settings);
        m.norm.apply(&raw, &mut nrm);
        let (a, lp) = m.policy.sample(&nrm, &mut slot.rng)?;
        let v = m.value.forward(&nrm)?[0];
        let res = env.step(settings, &a, &mut slot.rng);
        out.obs_raw.extend_from_slice(&raw);
        out.obs.extend_from_slice(&nrm);
        out.actions.extend_from_slice(&a);
        out.log_prob.push(lp);
        rewards.push(res.reward);
        values.push(v);
        if res.terminal || res.truncated {
            let boot = if res.terminal {
                0.0
            } else {
                let next = m.norm.normalize(&env.observe(settings));
                m.value.forward(&next)?[0]
            };
            out.episode_rewards.push(env.episode_reward);
            slot.env = None;
            flush(&mut out, &mut rewards, &mut values, boot);
        }
    }
    if !rewards.is_empty() {
        let env = slot.env.as_ref().unwrap();
        let next = m.norm.normalize(&env.observe(settings));
        let boot = m.value.forward(&next)?[0];
        flush(&mut out, &mut rewards, &mut values, boot);
    }
    Ok(out)
}

/// Train the policy for `kind` through the full curriculum. `on_iter`
/// receives every log row as it is produced.
pub fn train_policy(
    kind: PolicyKind,
    settings: &EnvSettings,
    cfg: &TrainConfig,
    seed: u64,
    on_iter: &mut dyn FnMut(&LogRow),
) -> Result<TrainedPolicy> {
    cfg.validate()?;
    settings.env.validate()?;
    let started = Instant::now();
    let ppo = &cfg.ppo;
    let mut init_rng = rng::stream(seed, "init", kind.index() as u64);
    let mut policy = GaussianPolicy::new(OBS_DIM, NJ, &ppo.hidden, ppo.init_log_std, &mut init_rng)?;
    let mut vdims = vec![OBS_DIM];
    vdims.extend_from_slice(&ppo.hidden);
    vdims.push(1);
    let mut value = Mlp::new(&vdims, Head::Linear, 1.0, &mut init_rng)?;
    let mut norm = Normalizer::new(OBS_DIM);
    let mut popt = Adam::new(policy.param_count(), ppo.lr_policy);
    let mut vopt = Adam::new(value.param_count(), ppo.lr_value);

    let mut ccfg = cfg.curriculum.clone();
    if kind == PolicyKind::Walk {
        // flat ground has no difficulty parameter to ramp
        ccfg.initial_level = ccfg.levels;
    }
    let nominal_steps = (settings.env.episode_seconds / settings.sim.control_dt()).round();
    let threshold = ccfg.threshold_frac * settings.reward.max_step_reward() * nominal_steps;
    let mut cur = CurriculumState::new(&ccfg, threshold, settings.env.enforce_roa_overlap);
    let mut window: VecDeque<f64> = VecDeque::new();

    let mut slots: Vec<Slot> = (0..cfg.n_envs)
        .map(|i| Slot {
            env: None,
            rng: rng::stream(seed, "rollout", ((kind.index() as u64) << 32) | i as u64),
        })
        .collect();
    let per_slot = ppo.steps_per_iter / cfg.n_envs;
    let mut finetune = 0;
    let mut complete = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iterations {
        if let Some(limit) = cfg.time_budget_secs {
            if started.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        let (plin, pang) = cur.perturb_max(&ccfg, settings.sim.total_mass());
        let cond = Conditions {
            difficulty: cur.difficulty(),
            guidance: cur.guidance(),
            perturb_lin: plin,
            perturb_ang: pang,
        };
        let models = Models {
            policy: &policy,
            value: &value,
            norm: &norm,
        };
        let parts: Vec<Rollout> = slots
            .par_iter_mut()
            .map(|s| collect(s, settings, kind, cond, &models, per_slot, ppo))
            .collect::<Result<_>>()?;
        let mut data = Rollout::default();
        for p in parts {
            data.obs_raw.extend(p.obs_raw);
            data.obs.extend(p.obs);
            data.actions.extend(p.actions);
            data.log_prob.extend(p.log_prob);
            data.advantages.extend(p.advantages);
            data.targets.extend(p.targets);
            data.episode_rewards.extend(p.episode_rewards);
        }
        normalize_advantages(&mut data.advantages);

        // PPO epochs over shuffled minibatches
        let n = data.log_prob.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut upd_rng = rng::stream(seed, "update", ((kind.index() as u64) << 32) | iter as u64);
        let (mut ploss, mut vloss, mut nb) = (0.0, 0.0, 0.0);
        let mb = ppo.minibatch.min(n);
        for _ in 0..ppo.epochs {
            shuffle(&mut idx, &mut upd_rng);
            for chunk in idx.chunks(mb) {
                let gather = |src: &[f64], w: usize| -> Vec<f64> {
                    chunk.iter().flat_map(|&i| src[i * w..(i + 1) * w].iter().copied()).collect()
                };
                let obs = gather(&data.obs, OBS_DIM);
                let acts = gather(&data.actions, NJ);
                let old = gather(&data.log_prob, 1);
                let adv = gather(&data.advantages, 1);
                let tgt = gather(&data.targets, 1);
                let batch = Batch {
                    obs: &obs,
                    actions: &acts,
                    old_log_prob: &old,
                    advantages: &adv,
                };
                let (pl, mut pg) = policy.loss_and_grad(&batch, ppo.clip, ppo.entropy_coef)?;
                clip_grad_norm(&mut pg, ppo.max_grad_norm);
                policy.apply(&mut popt, &pg)?;
                let (vl, mut vg) = value_loss_and_grad(&value, &obs, &tgt)?;
                clip_grad_norm(&mut vg, ppo.max_grad_norm);
                vopt.update(value.params_mut(), &vg)?;
                ploss += pl.loss;
                vloss += vl;
                nb += 1.0;
            }
        }
        for row in data.obs_raw.chunks(OBS_DIM) {
            norm.update(row);
        }

        // curriculum
        for r in &data.episode_rewards {
            window.push_back(*r);
            if window.len() > ccfg.window {
                window.pop_front();
            }
        }
        let avg = if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        let row = LogRow {
            iter,
            avg_episode_reward: avg,
            stage: cur.stage,
            difficulty: cur.difficulty(),
            guidance_scale: cur.guidance(),
            perturb_max: plin,
            policy_loss: ploss / nb,
            value_loss: vloss / nb,
        };
        on_iter(&row);
        iterations = iter + 1;
        if cur.complete() {
            finetune += 1;
            if finetune >= cfg.finetune_iterations {
                complete = true;
                break;
            }
        } else if window.len() >= ccfg.window {
            let next = curriculum_advance(&cur, avg);
            if next != cur {
                window.clear();
                cur = next;
            }
        }
    }

    Ok(TrainedPolicy {
        kind,
        policy,
        value,
        norm,
        action_scale: settings.env.action_scale,
        complete,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::EnvConfig;
    use crate::rl::reward::RewardConfig;
    use crate::sim::{ScriptedGait, SimConfig};
    use crate::terrain::TerrainConfig;

    fn tiny() -> (EnvSettings, TrainConfig) {
        let settings = EnvSettings {
            sim: SimConfig::default(),
            terrain: TerrainConfig::default(),
            gait: ScriptedGait::default(),
            reward: RewardConfig::default(),
            env: EnvConfig {
                episode_seconds: 1.0,
                ..Default::default()
            },
        };
        let cfg = TrainConfig {
            ppo: PpoConfig {
                steps_per_iter: 256,
                minibatch: 64,
                epochs: 2,
                hidden: vec![16, 16],
                ..Default::default()
            },
            n_envs: 4,
            max_iterations: 3,
            ..Default::default()
        };
        (settings, cfg)
    }

    #[test]
    fn training_is_deterministic_and_logs_every_iteration() {
        let (s, c) = tiny();
        let mut rows_a = Vec::new();
        let a = train_policy(PolicyKind::Gap, &s, &c, 3, &mut |r| rows_a.push(r.to_csv())).unwrap();
        let mut rows_b = Vec::new();
        let b = train_policy(PolicyKind::Gap, &s, &c, 3, &mut |r| rows_b.push(r.to_csv())).unwrap();
        assert_eq!(rows_a.len(), 3);
        assert_eq!(rows_a, rows_b);
        assert_eq!(a.to_text(), b.to_text());
        assert!(!a.complete);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (s, c) = tiny();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| train_policy(PolicyKind::Step, &s, &c, 8, &mut |_| {}).unwrap().to_text())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn policy_file_round_trip() {
        let (s, c) = tiny();
        let p = train_policy(PolicyKind::Walk, &s, &c, 1, &mut |_| {}).unwrap();
        let back = TrainedPolicy::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        let obs = [0.1; OBS_DIM];
        assert_eq!(back.torques(&obs, 150.0).unwrap(), p.torques(&obs, 150.0).unwrap());
        let bad = p.to_text().replacen("policy v1", "policy v0", 1);
        assert!(matches!(TrainedPolicy::from_text(&bad), Err(Error::Version { .. })));
    }
}
