//! Three-stage milestone curriculum: terrain difficulty under guidance,
//! guidance annealing, then growing perturbations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Guided,
    Annealing,
    Perturbations,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Guided => "guided",
            Stage::Annealing => "annealing",
            Stage::Perturbations => "perturbations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Episodes averaged for the milestone test.
    pub window: usize,
    /// Milestone as a fraction of the best possible episode reward.
    pub threshold_frac: f64,
    /// Milestones per stage (each moves its quantity by 1/levels).
    pub levels: u32,
    /// Terrain difficulty level to start from.
    pub initial_level: u32,
    pub final_lin: f64,
    pub final_ang: f64,
    /// Reference mass the final perturbations are quoted for.
    pub reference_mass: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            window: 20,
            threshold_frac: 0.6,
            levels: 10,
            initial_level: 0,
            final_lin: 500.0,
            final_ang: 250.0,
            reference_mass: 54.0,
        }
    }
}

/// Progress through the curriculum, kept as integer levels so the
/// quantities land exactly on their end points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub stage: Stage,
    pub levels: u32,
    pub difficulty_level: u32,
    pub guidance_level: u32,
    pub perturb_level: u32,
    /// Average episode reward needed for the next milestone.
    pub threshold: f64,
    pub enforce_roa_overlap: bool,
    pub milestones: u32,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig, threshold: f64, enforce_roa_overlap: bool) -> Self {
        let levels = cfg.levels.max(1);
        let mut s = CurriculumState {
            stage: Stage::Guided,
            levels,
            difficulty_level: cfg.initial_level.min(levels),
            guidance_level: levels,
            perturb_level: 0,
            threshold,
            enforce_roa_overlap,
            milestones: 0,
        };
        if s.difficulty_level == levels {
            s.stage = Stage::Annealing;
        }
        s
    }

    pub fn difficulty(&self) -> f64 {
        self.difficulty_level as f64 / self.levels as f64
    }

    pub fn guidance(&self) -> f64 {
        self.guidance_level as f64 / self.levels as f64
    }

    /// Fraction of the final perturbation maxima currently applied.
    pub fn perturb_fraction(&self) -> f64 {
        self.perturb_level as f64 / self.levels as f64
    }

    /// Current (linear, angular) impulse maxima for a robot of `mass`.
    pub fn perturb_max(&self, cfg: &CurriculumConfig, mass: f64) -> (f64, f64) {
        let f = self.perturb_fraction() * mass / cfg.reference_mass;
        (f * cfg.final_lin, f * cfg.final_ang)
    }

    /// Every stage has run to its end.
    pub fn complete(&self) -> bool {
        self.stage == Stage::Perturbations && self.perturb_level == self.levels
    }
}

/// Advance one milestone when `avg_episode_reward` reaches the threshold.
pub fn curriculum_advance(cur: &CurriculumState, avg_episode_reward: f64) -> CurriculumState {
    let mut s = cur.clone();
    if !(avg_episode_reward >= cur.threshold) || cur.complete() {
        return s;
    }
    s.milestones += 1;
    match s.stage {
        Stage::Guided => {
            s.difficulty_level += 1;
            if s.difficulty_level >= s.levels {
                s.difficulty_level = s.levels;
                s.stage = Stage::Annealing;
            }
        }
        Stage::Annealing => {
            s.guidance_level -= 1;
            if s.guidance_level == 0 {
                s.stage = Stage::Perturbations;
            }
        }
        Stage::Perturbations => {
            s.perturb_level = (s.perturb_level + 1).min(s.levels);
        }
    }
    s
}
