//! Training episodes: spawn, stand hold, guided control steps and reward.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::reward::{compute_reward, reward_errors, RewardConfig};
use crate::rng::Rng;
use crate::sim::{
    check_termination, guidance_torque, sample_perturbation, Biped, ContactEvent, PdGains, RobotState,
    ScriptedGait, SimConfig, Stabilizer, Termination, Wrench, NJ, OBS_DIM,
};
use crate::terrain::{generate_track, PolicyKind, TerrainConfig, Track, TrackMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Training episode length before truncation (s).
    pub episode_seconds: f64,
    /// Range of the standing hold before the walk command (s).
    pub stand_hold: [f64; 2],
    /// Spawn every episode from the shared standing start. When false,
    /// episodes spawn with perturbed joints and walk immediately.
    pub enforce_roa_overlap: bool,
    /// Half-width of the uniform joint perturbation used when the shared
    /// start is not enforced (rad).
    pub spawn_joint_noise: f64,
    /// Torque per unit policy action (N m).
    pub action_scale: f64,
    /// Spawn position along the track (m).
    pub spawn_x: f64,
    pub gains: PdGains,
    pub stabilizer: Stabilizer,
    /// Height support of the stabilizer as a fraction of standing height.
    pub support_height_frac: f64,
    /// Mean impulse rate (Hz).
    pub perturb_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            episode_seconds: 12.0,
            stand_hold: [0.5, 2.0],
            enforce_roa_overlap: true,
            spawn_joint_noise: 0.2,
            action_scale: 100.0,
            spawn_x: 0.3,
            gains: PdGains::default(),
            stabilizer: Stabilizer::default(),
            support_height_frac: 0.9,
            perturb_rate: 2.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.episode_seconds > 0.0)
            || !(self.stand_hold[0] >= 0.0 && self.stand_hold[0] <= self.stand_hold[1])
            || !(self.action_scale > 0.0)
            || self.spawn_joint_noise < 0.0
            || self.perturb_rate < 0.0
        {
            return Err(Error::Config("env: invalid episode length, hold range, action scale or rates".into()));
        }
        Ok(())
    }
}

/// Everything a control step needs besides the robot.
#[derive(Debug, Clone)]
pub struct EnvSettings {
    pub sim: SimConfig,
    pub terrain: TerrainConfig,
    pub gait: ScriptedGait,
    pub reward: RewardConfig,
    pub env: EnvConfig,
}

/// Curriculum-controlled quantities for an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub difficulty: f64,
    pub guidance: f64,
    pub perturb_lin: f64,
    pub perturb_ang: f64,
}

impl Conditions {
    /// No guidance, no perturbations, full terrain.
    pub fn deployment() -> Self {
        Conditions {
            difficulty: 1.0,
            guidance: 0.0,
            perturb_lin: 0.0,
            perturb_ang: 0.0,
        }
    }
}

/// Guidance applied during a control step.
pub struct Guidance<'a> {
    pub gait: &'a ScriptedGait,
    pub gains: PdGains,
    pub stabilizer: &'a Stabilizer,
    /// Seconds since the walk command, `None` while standing.
    pub gait_time: Option<f64>,
    pub scale: f64,
    pub support_height: f64,
}

/// Random impulses applied during a control step.
pub struct Perturbation<'a> {
    pub rng: &'a mut Rng,
    pub max_lin: f64,
    pub max_ang: f64,
    pub rate: f64,
}

/// Run the physics steps of one control step with a constant policy
/// torque plus optional guidance and impulses.
pub fn control_step(
    sim: &SimConfig,
    track: &Track,
    biped: &mut Biped,
    policy_torque: &[f64; NJ],
    guidance: Option<&Guidance>,
    mut perturb: Option<&mut Perturbation>,
) -> Result<Vec<ContactEvent>> {
    let mut events = Vec::new();
    for k in 0..sim.decimation {
        let mut tau = *policy_torque;
        let mut wrench = Wrench::default();
        if let Some(g) = guidance.filter(|g| g.scale > 0.0) {
            let gt = g.gait_time.map(|t| t + k as f64 * sim.dt);
            let (target, _) = g.gait.target(gt);
            let pd = guidance_torque(&biped.joint_pos(), &biped.joint_vel(), &target, g.gains, g.scale);
            for j in 0..NJ {
                tau[j] += pd[j];
            }
            let speed = if gt.is_some() { g.gait.speed } else { 0.0 };
            wrench = g
                .stabilizer
                .wrench(biped, biped.torso_height(track), g.support_height, speed, g.scale);
        }
        if let Some(p) = perturb.as_deref_mut() {
            if let Some(imp) = sample_perturbation(p.rng, p.max_lin, p.max_ang, p.rate, sim.dt) {
                wrench.force[0] += imp.force[0];
                wrench.force[1] += imp.force[1];
                wrench.torque += imp.torque;
            }
        }
        let w = (!wrench.is_zero()).then_some(wrench);
        events.extend(biped.step(sim, track, &tau, w.as_ref())?);
    }
    Ok(events)
}

/// Joint angles of the shared standing start.
pub fn standing_start(gait: &ScriptedGait) -> [f64; NJ] {
    gait.stand_pose
}

/// Hip height and CoM height of the standing start on flat ground.
pub fn nominal_heights(sim: &SimConfig, gait: &ScriptedGait) -> (f64, f64) {
    let t = Track::flat(2.0);
    let b = Biped::standing(sim, &t, 0.5, standing_start(gait));
    let (com, _) = b.com(sim);
    (b.q[1], com[1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    /// The robot fell; no bootstrap.
    pub terminal: bool,
    /// Time limit or goal; bootstrap from the next state.
    pub truncated: bool,
}

/// One training episode in progress.
#[derive(Debug, Clone)]
pub struct Env {
    pub kind: PolicyKind,
    pub track: Track,
    pub biped: Biped,
    pub prev_contact: [bool; 2],
    /// Episode time (s).
    pub time: f64,
    /// Time of the walk command (s).
    pub hold: f64,
    pub episode_reward: f64,
    pub episode_steps: usize,
    pub conditions: Conditions,
    nominal_hip: f64,
    nominal_com: f64,
}

impl Env {
    pub fn new(settings: &EnvSettings, kind: PolicyKind, conditions: Conditions, rng: &mut Rng) -> Result<Env> {
        let terrain = settings.terrain.with_difficulty(conditions.difficulty);
        let seed: u64 = rng.random();
        let track = generate_track(&terrain, seed, TrackMode::Single(kind))?;
        let e = &settings.env;
        let mut joints = standing_start(&settings.gait);
        let hold = if e.enforce_roa_overlap {
            rng.random_range(e.stand_hold[0]..=e.stand_hold[1])
        } else {
            for j in joints.iter_mut() {
                *j += rng.random_range(-e.spawn_joint_noise..=e.spawn_joint_noise);
            }
            joints[1] = joints[1].max(settings.sim.knee_min);
            joints[3] = joints[3].max(settings.sim.knee_min);
            0.0
        };
        let biped = Biped::standing(&settings.sim, &track, e.spawn_x, joints);
        let (nominal_hip, nominal_com) = nominal_heights(&settings.sim, &settings.gait);
        Ok(Env {
            kind,
            prev_contact: biped.contact,
            track,
            biped,
            time: 0.0,
            hold,
            episode_reward: 0.0,
            episode_steps: 0,
            conditions,
            nominal_hip,
            nominal_com,
        })
    }

    pub fn vel_command(&self) -> f64 {
        if self.time >= self.hold {
            1.0
        } else {
            0.0
        }
    }

    fn gait_time(&self, t: f64) -> Option<f64> {
        (t >= self.hold).then_some(t - self.hold)
    }

    pub fn observe(&self, settings: &EnvSettings) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        RobotState::capture(&settings.sim, &self.biped, &self.track, self.prev_contact, self.vel_command())
            .write_into(&mut out);
        out
    }

    /// Apply a policy action for one control step.
    pub fn step(&mut self, settings: &EnvSettings, action: &[f64], rng: &mut Rng) -> StepResult {
        let e = &settings.env;
        let sim = &settings.sim;
        let lim = sim.torque_limit;
        let policy_torque: [f64; NJ] = std::array::from_fn(|j| (e.action_scale * action[j]).clamp(-lim, lim));
        let c = self.conditions;
        let guidance = Guidance {
            gait: &settings.gait,
            gains: e.gains,
            stabilizer: &e.stabilizer,
            gait_time: self.gait_time(self.time),
            scale: c.guidance,
            support_height: e.support_height_frac * self.nominal_hip,
        };
        let mut perturb = Perturbation {
            rng,
            max_lin: c.perturb_lin,
            max_ang: c.perturb_ang,
            rate: e.perturb_rate,
        };
        let contact_before = self.biped.contact;
        let stepped = control_step(
            sim,
            &self.track,
            &mut self.biped,
            &policy_torque,
            Some(&guidance),
            (c.perturb_lin > 0.0 || c.perturb_ang > 0.0).then_some(&mut perturb),
        );
        self.prev_contact = contact_before;
        self.time += sim.control_dt();
        self.episode_steps += 1;

        let status = match stepped {
            Ok(_) => check_termination(sim, &self.biped, &self.track),
            Err(_) => Termination::Fell,
        };
        let gt = self.gait_time(self.time);
        let (tp, tv) = settings.gait.target(gt);
        let speed = if gt.is_some() { settings.gait.speed } else { 0.0 };
        let reward = if status == Termination::Fell {
            0.0
        } else {
            let errs = reward_errors(sim, &self.biped, &self.track, &tp, &tv, speed, self.nominal_com);
            compute_reward(&errs, &policy_torque, &settings.reward)
        };
        self.episode_reward += reward;
        StepResult {
            reward,
            terminal: status == Termination::Fell,
            truncated: status == Termination::ReachedGoal || self.time >= e.episode_seconds - 1e-9,
        }
    }
}
