//! Seeded trials over generated tracks, strategy comparison and reports.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sim::{
    check_termination, com_over_support, Biped, ContactKind, RobotState, SimConfig, Termination, NJ,
};
use crate::switch::{decide_switch, LookupTable, PolicySet, SwitchConfig, SwitchContext, SwitchEstimator, SwitchStrategy};
use crate::terrain::{generate_track, ArtifactKind, PolicyKind, TerrainConfig, Track, TrackMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Multi-artifact trials per strategy.
    pub n_trials: usize,
    /// Trials per single-terrain evaluation.
    pub single_trials: usize,
    /// Simulated seconds before a trial counts as failed.
    pub timeout: f64,
    pub spawn_x: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_trials: 2500,
            single_trials: 500,
            timeout: 60.0,
            spawn_x: 0.3,
        }
    }
}

/// Loaded artifacts a trial may consult.
#[derive(Debug, Clone, Default)]
pub struct Controllers {
    pub policies: PolicySet,
    pub estimators: [Option<SwitchEstimator>; 4],
    pub lookup: Option<LookupTable>,
}

impl Controllers {
    pub fn add_estimator(&mut self, e: SwitchEstimator) {
        let i = e.kind.index();
        self.estimators[i] = Some(e);
    }

    fn estimator(&self, kind: PolicyKind) -> Result<&SwitchEstimator> {
        self.estimators[kind.index()]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no switch estimator loaded for {}", kind.name())))
    }
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub sim: SimConfig,
    pub terrain: TerrainConfig,
    pub switch: SwitchConfig,
    pub eval: EvalConfig,
    pub gait_stand_pose: [f64; NJ],
}

/// How control is assigned during a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// One policy for the whole trial.
    Fixed(PolicyKind),
    /// Start with Walk and hand over according to the strategy.
    Switching(SwitchStrategy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: PolicyKind,
    pub to: PolicyKind,
    /// Remaining distance from the robot's front to the artifact (m).
    pub distance: f64,
    pub estimate: Option<f64>,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub track_seed: u64,
    pub n_artifacts: usize,
    pub track_length: f64,
    pub distance_fraction: f64,
    pub success: bool,
    pub failure_kind: Option<ArtifactKind>,
    pub timed_out: bool,
    pub duration: f64,
    pub switches: Vec<SwitchEvent>,
    /// Touchdowns on an artifact while a policy other than its specialist
    /// was in control.
    pub mismatched_contacts: usize,
}

/// One control step of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub com_x: f64,
    pub com_z: f64,
    pub pitch: f64,
    pub joint_pos: [f64; NJ],
    pub contact: [bool; 2],
    pub active: PolicyKind,
    pub estimate: Option<f64>,
}

impl TraceRow {
    pub const HEADER: &'static str = "t,com_x,com_z,pitch,hip_l,knee_l,hip_r,knee_r,contact_l,contact_r,active_policy,estimator";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{:.4},{:.6},{:.6},{:.6}", self.t, self.com_x, self.com_z, self.pitch);
        for q in self.joint_pos {
            let _ = write!(s, ",{q:.6}");
        }
        let _ = write!(
            s,
            ",{},{},{},",
            self.contact[0] as u8,
            self.contact[1] as u8,
            self.active.index()
        );
        if let Some(e) = self.estimate {
            let _ = write!(s, "{e:.6}");
        }
        s
    }
}

/// Artifact bookkeeping while walking along a track.
struct Progress {
    /// Next non-flat artifact not yet handed to its specialist.
    next: Option<usize>,
    /// Artifact most recently handed over.
    engaged: Option<usize>,
    pending: bool,
    random_distance: f64,
    touchdowns_past: usize,
}

fn next_nonflat(track: &Track, from: usize) -> Option<usize> {
    (from..track.artifacts.len()).find(|&i| track.artifacts[i].kind != ArtifactKind::Flat)
}

/// Most recently attempted artifact at `front_x`, else the next one ahead.
fn attribute(track: &Track, front_x: f64) -> Option<ArtifactKind> {
    let attempted = track.artifacts.iter().rev().find(|a| a.x_start <= front_x);
    attempted.or_else(|| track.artifacts.first()).map(|a| a.kind)
}

/// Run one trial from the standing start on `track`.
pub fn run_trial(
    settings: &EvalSettings,
    ctl: &Controllers,
    control: Control,
    track: &Track,
    seed: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<TrialRecord> {
    let sim = &settings.sim;
    let sw = &settings.switch;
    let mut rng: Rng = rng::stream(seed, "trial", 0);
    let (mut active, strategy) = match control {
        Control::Fixed(k) => (k, None),
        Control::Switching(s) => (PolicyKind::Walk, Some(s)),
    };
    ctl.policies.require(active)?;
    let mut biped = Biped::standing(sim, track, settings.eval.spawn_x, settings.gait_stand_pose);
    let mut prev = biped.contact;
    let mut max_x = biped.com(sim).0[0];
    let mut prog = Progress {
        next: strategy.and_then(|_| next_nonflat(track, 0)),
        engaged: None,
        pending: false,
        random_distance: 0.0,
        touchdowns_past: 0,
    };
    let mut switches = Vec::new();
    let mut mismatched = 0usize;
    let mut time = 0.0;
    let steps = (settings.eval.timeout / sim.control_dt()).round() as usize;
    let mut status = Termination::Running;
    let mut obs = vec![0.0; crate::sim::OBS_DIM];

    let do_switch = |prog: &mut Progress, active: &mut PolicyKind, switches: &mut Vec<SwitchEvent>, time: f64, dist: f64, estimate: Option<f64>, forced: bool| {
        let idx = prog.next.expect("pending artifact");
        let to = track.artifacts[idx].kind.policy();
        if to != *active {
            switches.push(SwitchEvent {
                time,
                from: *active,
                to,
                distance: dist,
                estimate,
                forced,
            });
            *active = to;
        }
        prog.engaged = Some(idx);
        prog.next = next_nonflat(track, idx + 1);
        prog.pending = false;
        prog.touchdowns_past = 0;
    };

    for _ in 0..steps {
        RobotState::capture(sim, &biped, track, prev, 1.0).write_into(&mut obs);
        let (com, _) = biped.com(sim);
        let front = biped.front_x(sim);
        let mut estimate = None;

        if let Some(strategy) = strategy {
            let cleared = prog
                .engaged
                .is_none_or(|e| com[0] >= track.artifacts[e].x_end);
            if let Some(n) = prog.next {
                let dist = track.artifacts[n].x_start - front;
                if !prog.pending && cleared && dist <= sw.detection_range {
                    prog.pending = true;
                    prog.random_distance = rng.random_range(0.0..=sw.detection_range);
                }
                if prog.pending {
                    let target = track.artifacts[n].kind.policy();
                    ctl.policies.require(target)?;
                    if strategy == SwitchStrategy::Estimator {
                        estimate = Some(ctl.estimator(target)?.predict(&obs)?);
                    }
                    let lookup_distance = if strategy == SwitchStrategy::Lookup {
                        let table = ctl
                            .lookup
                            .as_ref()
                            .ok_or_else(|| Error::Config("no lookup table loaded".into()))?;
                        Some(table.argmax_distance(active, target).ok_or_else(|| {
                            Error::Config(format!("lookup table has no entry for {active} -> {target}"))
                        })?)
                    } else {
                        None
                    };
                    let ctx = SwitchContext {
                        distance: dist,
                        random_distance: prog.random_distance,
                        com_over_support: strategy == SwitchStrategy::ComOverFeet && com_over_support(sim, &biped),
                        estimate,
                        lookup_distance,
                        threshold: sw.threshold,
                        force_distance: sw.force_switch_distance,
                    };
                    if target == active || decide_switch(strategy, &ctx) {
                        let forced = strategy.force_switches() && dist <= sw.force_switch_distance;
                        do_switch(&mut prog, &mut active, &mut switches, time, dist, estimate, forced);
                    }
                }
            }
            if let Some(e) = prog.engaged {
                if active != PolicyKind::Walk
                    && !prog.pending
                    && com[0] >= track.artifacts[e].x_end
                    && prog.touchdowns_past >= sw.switch_back_touchdowns
                {
                    switches.push(SwitchEvent {
                        time,
                        from: active,
                        to: PolicyKind::Walk,
                        distance: 0.0,
                        estimate: None,
                        forced: false,
                    });
                    active = PolicyKind::Walk;
                }
            }
        }

        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRow {
                t: time,
                com_x: com[0],
                com_z: com[1],
                pitch: biped.pitch(),
                joint_pos: biped.joint_pos(),
                contact: biped.contact,
                active,
                estimate,
            });
        }

        let mut tau = ctl.policies.require(active)?.torques(&obs, sim.torque_limit)?;
        prev = biped.contact;
        let mut diverged = false;
        for _ in 0..sim.decimation {
            if let (Some(s), Some(n), true) = (strategy, prog.next, prog.pending) {
                let dist = track.artifacts[n].x_start - biped.front_x(sim);
                if s.force_switches() && dist <= sw.force_switch_distance {
                    do_switch(&mut prog, &mut active, &mut switches, time, dist, estimate, true);
                    let mut o = vec![0.0; crate::sim::OBS_DIM];
                    RobotState::capture(sim, &biped, track, prev, 1.0).write_into(&mut o);
                    tau = ctl.policies.require(active)?.torques(&o, sim.torque_limit)?;
                }
            }
            let events = match biped.step(sim, track, &tau, None) {
                Ok(ev) => ev,
                Err(_) => {
                    diverged = true;
                    break;
                }
            };
            let com_x = biped.com(sim).0[0];
            for ev in events.iter().filter(|e| e.kind == ContactKind::Touchdown) {
                if let Some(i) = track.artifact_at(ev.x) {
                    let a = &track.artifacts[i];
                    if a.kind != ArtifactKind::Flat && a.kind.policy() != active {
                        mismatched += 1;
                    }
                }
                if prog.engaged.is_some_and(|e| com_x >= track.artifacts[e].x_end) {
                    prog.touchdowns_past += 1;
                }
            }
        }
        time += sim.control_dt();
        max_x = max_x.max(biped.com(sim).0[0]);
        status = if diverged {
            Termination::Fell
        } else {
            check_termination(sim, &biped, track)
        };
        if status != Termination::Running {
            break;
        }
    }

    let success = status == Termination::ReachedGoal;
    let len = track.total_length;
    let distance_fraction = if success { 1.0 } else { (max_x.clamp(0.0, len) / len).min(1.0) };
    Ok(TrialRecord {
        seed,
        track_seed: track.seed,
        n_artifacts: track.artifacts.len(),
        track_length: len,
        distance_fraction,
        success,
        failure_kind: if success { None } else { attribute(track, biped.front_x(sim)) },
        timed_out: status == Termination::Running,
        duration: time,
        switches,
        mismatched_contacts: mismatched,
    })
}

/// Track and trial seeds for trial `i`; shared by every strategy.
pub fn trial_seeds(master_seed: u64, i: usize) -> (u64, u64) {
    let mut r = rng::stream(master_seed, "eval", i as u64);
    (r.random(), r.random())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub strategy: String,
    pub n_trials: usize,
    pub pct_total_distance: f64,
    pub pct_success: f64,
    /// Failure percentages by responsible policy (walk, stairs, gap, step).
    pub pct_fail: [f64; 4],
    pub master_seed: u64,
    pub config_hash: String,
}

impl Report {
    pub const CSV_HEADER: &'static str =
        "strategy,n_trials,pct_total_distance,pct_success,pct_fail_gap,pct_fail_step,pct_fail_stairs,master_seed,config_hash,pct_fail_flat";

    pub fn from_trials(strategy: &str, trials: &[TrialRecord], master_seed: u64, config_hash: &str) -> Result<Report> {
        if trials.is_empty() {
            return Err(Error::Config("a report needs at least one trial".into()));
        }
        let n = trials.len() as f64;
        let mut fail = [0usize; 4];
        for t in trials.iter().filter(|t| !t.success) {
            let k = t.failure_kind.map_or(PolicyKind::Walk, ArtifactKind::policy);
            fail[k.index()] += 1;
        }
        Ok(Report {
            strategy: strategy.to_string(),
            n_trials: trials.len(),
            pct_total_distance: 100.0 * trials.iter().map(|t| t.distance_fraction).sum::<f64>() / n,
            pct_success: 100.0 * trials.iter().filter(|t| t.success).count() as f64 / n,
            pct_fail: fail.map(|c| 100.0 * c as f64 / n),
            master_seed,
            config_hash: config_hash.to_string(),
        })
    }

    pub fn fail(&self, kind: PolicyKind) -> f64 {
        self.pct_fail[kind.index()]
    }

    /// Success plus every failure share; 100 for a well-formed report.
    pub fn accounted(&self) -> f64 {
        self.pct_success + self.pct_fail.iter().sum::<f64>()
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{},{},{:.2}",
            self.strategy,
            self.n_trials,
            self.pct_total_distance,
            self.pct_success,
            self.fail(PolicyKind::Gap),
            self.fail(PolicyKind::Step),
            self.fail(PolicyKind::Stairs),
            self.master_seed,
            self.config_hash,
            self.fail(PolicyKind::Walk),
        )
    }
}

/// CSV with one row per report.
pub fn reports_csv(reports: &[Report]) -> String {
    let mut s = String::from(Report::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

/// Aligned text table with the same numbers as the CSV.
pub fn reports_table(reports: &[Report]) -> String {
    let mut s = format!(
        "{:<14} {:>8} {:>12} {:>10} {:>9} {:>9} {:>11} {:>9}\n",
        "strategy", "trials", "% total dist", "% success", "% fail gap", "% fail step", "% fail stairs", "% fail flat"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>12.2} {:>10.2} {:>9.2} {:>9.2} {:>11.2} {:>9.2}",
            r.strategy,
            r.n_trials,
            r.pct_total_distance,
            r.pct_success,
            r.fail(PolicyKind::Gap),
            r.fail(PolicyKind::Step),
            r.fail(PolicyKind::Stairs),
            r.fail(PolicyKind::Walk),
        );
    }
    s
}

/// Run `n_trials` seeded trials in parallel; results are ordered by trial.
pub fn run_trials(
    settings: &EvalSettings,
    ctl: &Controllers,
    control: Control,
    mode: TrackMode,
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let (track_seed, trial_seed) = trial_seeds(master_seed, i);
            let track = generate_track(&settings.terrain, track_seed, mode)?;
            run_trial(settings, ctl, control, &track, trial_seed, None)
        })
        .collect()
}

/// Multi-artifact evaluation of one switching strategy.
pub fn evaluate(
    settings: &EvalSettings,
    ctl: &Controllers,
    strategy: SwitchStrategy,
    n_trials: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<(Report, Vec<TrialRecord>)> {
    let trials = run_trials(settings, ctl, Control::Switching(strategy), TrackMode::Multi, n_trials, master_seed)?;
    Ok((Report::from_trials(strategy.name(), &trials, master_seed, config_hash)?, trials))
}

/// One policy on tracks made only of its own terrain, without switching.
pub fn single_terrain_eval(
    settings: &EvalSettings,
    ctl: &Controllers,
    kind: PolicyKind,
    n_trials: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<(Report, Vec<TrialRecord>)> {
    let trials = run_trials(settings, ctl, Control::Fixed(kind), TrackMode::Single(kind), n_trials, master_seed)?;
    Ok((
        Report::from_trials(&format!("single:{}", kind.name()), &trials, master_seed, config_hash)?,
        trials,
    ))
}

/// Paired comparison: every strategy sees the same track seeds.
pub fn compare(
    settings: &EvalSettings,
    ctl: &Controllers,
    strategies: &[SwitchStrategy],
    n_trials: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<Vec<Report>> {
    strategies
        .iter()
        .map(|&s| evaluate(settings, ctl, s, n_trials, master_seed, config_hash).map(|(r, _)| r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(success: bool, frac: f64, kind: Option<ArtifactKind>) -> TrialRecord {
        TrialRecord {
            seed: 0,
            track_seed: 0,
            n_artifacts: 7,
            track_length: 20.0,
            distance_fraction: frac,
            success,
            failure_kind: kind,
            timed_out: false,
            duration: 1.0,
            switches: Vec::new(),
            mismatched_contacts: 0,
        }
    }

    #[test]
    fn all_success_reports_exactly_hundred() {
        let t = vec![record(true, 1.0, None); 7];
        let r = Report::from_trials("x", &t, 1, "h").unwrap();
        assert_eq!((r.pct_total_distance, r.pct_success), (100.0, 100.0));
        assert_eq!(r.pct_fail, [0.0; 4]);
    }

    #[test]
    fn half_failure_on_a_gap() {
        let t = vec![record(true, 1.0, None), record(false, 0.5, Some(ArtifactKind::Gap))];
        let r = Report::from_trials("x", &t, 1, "h").unwrap();
        assert_eq!(r.pct_total_distance, 75.0);
        assert_eq!(r.pct_success, 50.0);
        assert_eq!(r.fail(PolicyKind::Gap), 50.0);
        assert_eq!(
            r.to_csv_row(),
            "x,2,75.00,50.00,50.00,0.00,0.00,1,h,0.00"
        );
    }

    #[test]
    fn empty_trials_rejected() {
        assert!(Report::from_trials("x", &[], 1, "h").is_err());
    }

    #[test]
    fn stairs_up_and_down_share_a_column() {
        let t = vec![
            record(false, 0.2, Some(ArtifactKind::StairsUp)),
            record(false, 0.2, Some(ArtifactKind::StairsDown)),
        ];
        let r = Report::from_trials("x", &t, 1, "h").unwrap();
        assert_eq!(r.fail(PolicyKind::Stairs), 100.0);
    }

    #[test]
    fn table_and_csv_carry_the_same_numbers() {
        let t = vec![
            record(true, 1.0, None),
            record(false, 0.31, Some(ArtifactKind::Step)),
            record(false, 0.12, Some(ArtifactKind::Gap)),
        ];
        let r = Report::from_trials("lookup", &t, 9, "abc").unwrap();
        let csv = reports_csv(std::slice::from_ref(&r));
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        let table = reports_table(std::slice::from_ref(&r));
        let cells: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(&cells[1..6], &[row[1], row[2], row[3], row[4], row[5]]);
    }

    proptest! {
        #[test]
        fn reports_account_for_every_trial(outcomes in proptest::collection::vec((any::<bool>(), 0usize..5, 0.0f64..1.0), 1..300)) {
            let trials: Vec<TrialRecord> = outcomes
                .iter()
                .map(|&(ok, k, f)| if ok { record(true, 1.0, None) } else { record(false, f, Some(ArtifactKind::ALL[k])) })
                .collect();
            let r = Report::from_trials("p", &trials, 0, "h").unwrap();
            prop_assert!((r.accounted() - 100.0).abs() <= 0.1);
            prop_assert!(r.pct_total_distance >= r.pct_success - 1e-9);
        }
    }

    fn untrained() -> Controllers {
        let mut ctl = Controllers::default();
        let mut r = rng::from_seed(5);
        for kind in PolicyKind::ALL {
            ctl.policies.insert(crate::rl::TrainedPolicy {
                kind,
                policy: crate::rl::GaussianPolicy::new(crate::sim::OBS_DIM, NJ, &[8], -0.7, &mut r).unwrap(),
                value: crate::nn::Mlp::new(&[crate::sim::OBS_DIM, 8, 1], crate::nn::Head::Linear, 1.0, &mut r).unwrap(),
                norm: crate::nn::Normalizer::new(crate::sim::OBS_DIM),
                action_scale: 100.0,
                complete: false,
                iterations: 0,
            });
        }
        ctl
    }

    fn settings() -> EvalSettings {
        EvalSettings {
            sim: SimConfig::default(),
            terrain: TerrainConfig::default(),
            switch: SwitchConfig::default(),
            eval: EvalConfig {
                timeout: 3.0,
                ..Default::default()
            },
            gait_stand_pose: crate::sim::ScriptedGait::default().stand_pose,
        }
    }

    /// Multi track moved so the first artifact starts `gap` ahead of the
    /// robot's front at spawn.
    fn track_at_front(s: &EvalSettings, gap: f64) -> Track {
        let t = generate_track(&s.terrain, 3, TrackMode::Multi).unwrap();
        let b = Biped::standing(&s.sim, &t, s.eval.spawn_x, s.gait_stand_pose);
        let front = b.front_x(&s.sim);
        t.translated(front + gap - t.artifacts[0].x_start)
    }

    #[test]
    fn trials_are_deterministic_and_thread_independent() {
        let s = settings();
        let ctl = untrained();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_trials(&s, &ctl, Control::Switching(SwitchStrategy::Random), TrackMode::Multi, 6, 42).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert!(a.iter().all(|t| (0.0..=1.0).contains(&t.distance_fraction)));
        assert_ne!(a[0].track_seed, a[1].track_seed);
    }

    #[test]
    fn estimator_force_switches_within_a_centimetre() {
        let s = settings();
        let mut ctl = untrained();
        let mut r = rng::from_seed(2);
        for kind in PolicyKind::SPECIALISTS {
            let net = crate::nn::Mlp::new(&[crate::sim::OBS_DIM, 4, 1], crate::nn::Head::Sigmoid, 1.0, &mut r).unwrap();
            ctl.add_estimator(SwitchEstimator {
                kind,
                net,
                norm: crate::nn::Normalizer::new(crate::sim::OBS_DIM),
                // never reached by a sigmoid output
                threshold: 1.0,
            });
        }
        let track = track_at_front(&s, 0.005);
        let rec = run_trial(&s, &ctl, Control::Switching(SwitchStrategy::Estimator), &track, 1, None).unwrap();
        let first = &rec.switches[0];
        assert!(first.forced);
        assert_eq!(first.time, 0.0);
        assert_eq!(first.to, track.artifacts[0].kind.policy());
        assert!(first.distance <= 0.01);
        assert_eq!(rec.mismatched_contacts, 0);
    }

    #[test]
    fn missing_estimator_is_a_config_error() {
        let s = settings();
        let track = track_at_front(&s, 0.5);
        let err = run_trial(&s, &untrained(), Control::Switching(SwitchStrategy::Estimator), &track, 1, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn detect_switches_on_first_detection_and_traces_each_step() {
        let s = settings();
        let track = track_at_front(&s, 0.5);
        let mut trace = Vec::new();
        let rec = run_trial(&s, &untrained(), Control::Switching(SwitchStrategy::OnDetection), &track, 1, Some(&mut trace)).unwrap();
        assert_eq!(rec.switches[0].time, 0.0);
        assert!(!rec.switches[0].forced);
        assert_eq!(trace.len(), (rec.duration / s.sim.control_dt()).round() as usize);
        assert_eq!(trace[0].active, track.artifacts[0].kind.policy());
        assert_eq!(trace[0].to_csv().split(',').count(), TraceRow::HEADER.split(',').count());
        assert!(!rec.success && rec.failure_kind.is_some());
    }

    #[test]
    fn attribution_uses_last_attempted_artifact() {
        let cfg = TerrainConfig::default();
        let track = generate_track(&cfg, 11, TrackMode::Multi).unwrap();
        let a0 = &track.artifacts[0];
        let a1 = &track.artifacts[1];
        assert_eq!(attribute(&track, 0.5), Some(a0.kind));
        assert_eq!(attribute(&track, (a0.x_start + a0.x_end) / 2.0), Some(a0.kind));
        // flat ground after an artifact belongs to it
        assert_eq!(attribute(&track, a0.x_end + 0.1), Some(a0.kind));
        assert_eq!(attribute(&track, a1.x_start + 0.01), Some(a1.kind));
    }
}
