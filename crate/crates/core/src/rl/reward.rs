//! Tracking reward: five exponential kernels plus a torque penalty.

use serde::{Deserialize, Serialize};

use crate::sim::{Biped, SimConfig, LEFT, NJ, RIGHT};
use crate::terrain::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_goal: f64,
    pub w_pos: f64,
    pub w_vel: f64,
    pub w_com: f64,
    pub w_step: f64,
    pub c_goal: f64,
    pub c_pos: f64,
    pub c_vel: f64,
    pub c_com: f64,
    pub c_step: f64,
    /// Weight of the squared policy torque (negative).
    pub w_act: f64,
}

// Forward progress carries half the weight: with less, marching in place
// tracks the gait well enough to pass curriculum milestones.
impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_goal: 0.5,
            w_pos: 0.2,
            w_vel: 0.05,
            w_com: 0.15,
            w_step: 0.1,
            c_goal: -5.0,
            c_pos: -2.0,
            c_vel: -2.0,
            c_com: -2.0,
            c_step: -2.0,
            w_act: -1e-5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let w = [self.w_goal, self.w_pos, self.w_vel, self.w_com, self.w_step];
        let c = [self.c_goal, self.c_pos, self.c_vel, self.c_com, self.c_step];
        if w.iter().any(|v| !(*v >= 0.0)) || c.iter().any(|v| !(*v < 0.0)) || !(self.w_act <= 0.0) {
            return Err(crate::Error::Config(
                "reward: weights must be >= 0, sharpness < 0 and w_act <= 0".into(),
            ));
        }
        Ok(())
    }

    /// Reward with every error at zero and no torque.
    pub fn max_step_reward(&self) -> f64 {
        self.w_goal + self.w_pos + self.w_vel + self.w_com + self.w_step
    }
}

/// Squared errors fed to the reward kernels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardErrors {
    /// Forward CoM velocity against the commanded speed.
    pub goal: f64,
    /// Mean squared joint position error to the scripted gait.
    pub pos: f64,
    /// Mean squared joint velocity error to the scripted gait.
    pub vel: f64,
    /// CoM height error plus squared pitch.
    pub com: f64,
    /// Stance feet away from tread centres plus feet asymmetry about the CoM.
    pub step: f64,
}

pub fn compute_reward(e: &RewardErrors, policy_torque: &[f64; NJ], cfg: &RewardConfig) -> f64 {
    let k = |w: f64, c: f64, err: f64| w * (c * err).exp();
    k(cfg.w_goal, cfg.c_goal, e.goal)
        + k(cfg.w_pos, cfg.c_pos, e.pos)
        + k(cfg.w_vel, cfg.c_vel, e.vel)
        + k(cfg.w_com, cfg.c_com, e.com)
        + k(cfg.w_step, cfg.c_step, e.step)
        + cfg.w_act * policy_torque.iter().map(|a| a * a).sum::<f64>()
}

/// Treads shorter than this count as steps whose centre the feet aim for.
const TREAD_MAX: f64 = 0.5;

#[allow(clippy::too_many_arguments)]
pub fn reward_errors(
    sim: &SimConfig,
    biped: &Biped,
    track: &Track,
    target_pos: &[f64; NJ],
    target_vel: &[f64; NJ],
    target_speed: f64,
    nominal_com_height: f64,
) -> RewardErrors {
    let (com, com_vel) = biped.com(sim);
    let q = biped.joint_pos();
    let qd = biped.joint_vel();
    let mean_sq = |a: &[f64; NJ], b: &[f64; NJ]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / NJ as f64;
    let height = com[1] - track.height_at(com[0]).max(biped.support_z - 1.0);
    let feet = [biped.foot_pos(sim, LEFT), biped.foot_pos(sim, RIGHT)];
    let mut step = 0.0;
    for side in [LEFT, RIGHT] {
        if biped.contact[side] {
            if let Some(seg) = track.segment_at(feet[side][0]) {
                if seg.len < TREAD_MAX {
                    let mid = seg.x0 + 0.5 * seg.len;
                    step += (feet[side][0] - mid).powi(2);
                }
            }
        }
    }
    if biped.contact[LEFT] && biped.contact[RIGHT] {
        let centre = 0.5 * (feet[LEFT][0] + feet[RIGHT][0]);
        step += (centre - com[0]).powi(2);
    }
    RewardErrors {
        goal: (com_vel[0] - target_speed).powi(2),
        pos: mean_sq(&q, target_pos),
        vel: mean_sq(&qd, target_vel),
        com: (height - nominal_com_height).powi(2) + biped.pitch().powi(2),
        step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::CurriculumConfig;

    #[test]
    fn perfect_tracking_gives_weight_sum() {
        let c = RewardConfig::default();
        let r = compute_reward(&RewardErrors::default(), &[0.0; NJ], &c);
        assert!((r - 1.0).abs() < 1e-15);
        assert_eq!(r, c.max_step_reward());
    }

    #[test]
    fn huge_goal_error_removes_goal_term() {
        let c = RewardConfig::default();
        let e = RewardErrors {
            goal: 1e6,
            ..Default::default()
        };
        let r = compute_reward(&e, &[0.0; NJ], &c);
        assert!((r - (1.0 - c.w_goal)).abs() < 1e-15);
    }

    #[test]
    fn tracking_in_place_stays_below_milestone_fraction() {
        let c = RewardConfig::default();
        let still = RewardErrors {
            goal: 0.8 * 0.8,
            ..Default::default()
        };
        let r = compute_reward(&still, &[0.0; NJ], &c);
        assert!(r < CurriculumConfig::default().threshold_frac * c.max_step_reward(), "{r}");
    }

    #[test]
    fn torque_penalty_is_quadratic() {
        let c = RewardConfig::default();
        let base = compute_reward(&RewardErrors::default(), &[0.0; NJ], &c);
        let p1 = base - compute_reward(&RewardErrors::default(), &[10.0, -5.0, 2.0, 0.0], &c);
        let p2 = base - compute_reward(&RewardErrors::default(), &[20.0, -10.0, 4.0, 0.0], &c);
        assert!((p2 - 4.0 * p1).abs() < 1e-12);
        assert!(p1 > 0.0);
    }

    #[test]
    fn invalid_weights_rejected() {
        let c = RewardConfig {
            c_pos: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(RewardConfig::default().validate().is_ok());
    }
}
