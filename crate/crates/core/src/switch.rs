//! Switch estimators, switch data collection, the distance lookup table and
//! the runtime switching rule.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{parse_hex_f64, read_file, shuffle, write_file, Adam, Head, Mlp, Normalizer};
use crate::rl::env::{control_step, nominal_heights, standing_start};
use crate::rl::TrainedPolicy;
use crate::rng::{self, Rng};
use crate::sim::{
    check_termination, Biped, ContactKind, RobotState, ScriptedGait, SimConfig, Termination, OBS_DIM,
};
use crate::terrain::{generate_track, PolicyKind, TerrainConfig, Track, TrackMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SwitchStrategy {
    Random,
    OnDetection,
    Lookup,
    ComOverFeet,
    Estimator,
}

impl SwitchStrategy {
    pub const ALL: [SwitchStrategy; 5] = [
        SwitchStrategy::Random,
        SwitchStrategy::OnDetection,
        SwitchStrategy::Lookup,
        SwitchStrategy::ComOverFeet,
        SwitchStrategy::Estimator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SwitchStrategy::Random => "random",
            SwitchStrategy::OnDetection => "detect",
            SwitchStrategy::Lookup => "lookup",
            SwitchStrategy::ComOverFeet => "com",
            SwitchStrategy::Estimator => "estimator",
        }
    }

    /// Strategies that switch unconditionally on reaching the artifact.
    pub fn force_switches(self) -> bool {
        matches!(self, SwitchStrategy::ComOverFeet | SwitchStrategy::Estimator)
    }
}

impl fmt::Display for SwitchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SwitchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "random" => SwitchStrategy::Random,
            "detect" | "detection" | "on-detection" => SwitchStrategy::OnDetection,
            "lookup" => SwitchStrategy::Lookup,
            "com" | "com-over-feet" => SwitchStrategy::ComOverFeet,
            "estimator" => SwitchStrategy::Estimator,
            _ => return Err(Error::Config(format!("unknown strategy {s:?}"))),
        })
    }
}

/// When a switch sample counts as a success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    /// Cross the artifact, then complete two touchdowns without falling.
    TwoSteps,
    /// Reach 0.9 m past the artifact at nominal CoM speed and height.
    GoalZone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    pub detection_range: f64,
    pub threshold: f64,
    pub force_switch_distance: f64,
    pub label_rule: LabelRule,
    /// Samples collected per target kind.
    pub n_samples: usize,
    /// Flat ground before the artifact in collection episodes (m).
    pub collect_lead_in: f64,
    /// Flat ground after the artifact in collection episodes (m).
    pub collect_run_out: f64,
    /// Give up on a collection episode after this long (s).
    pub collect_timeout: f64,
    /// Touchdowns after an artifact before control returns to Walk.
    pub switch_back_touchdowns: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub validation_frac: f64,
    /// Episodes per distance bin when building the lookup table.
    pub per_bin_trials: usize,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            detection_range: 0.9,
            threshold: 0.85,
            force_switch_distance: 0.01,
            label_rule: LabelRule::TwoSteps,
            n_samples: 20_000,
            collect_lead_in: 2.0,
            collect_run_out: 2.0,
            collect_timeout: 20.0,
            switch_back_touchdowns: 2,
            epochs: 1500,
            minibatch: 256,
            lr: 1e-3,
            hidden: vec![128, 128],
            validation_frac: 0.1,
            per_bin_trials: 10,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.detection_range > 0.0)
            || !(0.0..1.0).contains(&self.threshold)
            || self.force_switch_distance < 0.0
            || self.minibatch < 2
            || !(0.0..1.0).contains(&self.validation_frac)
            || !(self.lr > 0.0)
        {
            return Err(Error::Config("switch: invalid range, threshold, batch or split".into()));
        }
        Ok(())
    }
}

/// Trained policies indexed by kind.
#[derive(Debug, Clone, Default)]
pub struct PolicySet {
    slots: [Option<TrainedPolicy>; 4],
}

impl PolicySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: TrainedPolicy) {
        let i = p.kind.index();
        self.slots[i] = Some(p);
    }

    pub fn get(&self, kind: PolicyKind) -> Option<&TrainedPolicy> {
        self.slots[kind.index()].as_ref()
    }

    pub fn require(&self, kind: PolicyKind) -> Result<&TrainedPolicy> {
        self.get(kind)
            .ok_or_else(|| Error::Config(format!("no trained {} policy loaded", kind.name())))
    }
}

/// Learned estimate of whether switching to `kind` now will succeed.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEstimator {
    pub kind: PolicyKind,
    pub net: Mlp,
    pub norm: Normalizer,
    pub threshold: f64,
}

impl SwitchEstimator {
    pub fn predict(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.norm.normalize(obs))?[0])
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "estimator v1\nkind {}\nthreshold {:016x}\n[net]\n",
            self.kind.name(),
            self.threshold.to_bits()
        );
        s.push_str(&self.net.to_text());
        s.push_str("[normalizer]\n");
        s.push_str(&self.norm.to_text());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "estimator file";
        let bad = |d: &str| Error::corrupt(WHAT, d.to_string());
        let mut parts = text.split("\n[");
        let mut head = parts.next().unwrap_or_default().lines();
        let first = head.next().unwrap_or_default();
        if first != "estimator v1" {
            return Err(Error::Version {
                what: WHAT.into(),
                found: first.into(),
            });
        }
        let kind: PolicyKind = head
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| bad("bad kind"))?;
        let threshold = head
            .next()
            .and_then(|l| l.strip_prefix("threshold "))
            .and_then(parse_hex_f64)
            .ok_or_else(|| bad("bad threshold"))?;
        let net = parts
            .next()
            .and_then(|p| p.strip_prefix("net]\n"))
            .ok_or_else(|| bad("missing [net]"))?;
        let norm = parts
            .next()
            .and_then(|p| p.strip_prefix("normalizer]\n"))
            .ok_or_else(|| bad("missing [normalizer]"))?;
        Ok(SwitchEstimator {
            kind,
            net: Mlp::from_text(net)?,
            norm: Normalizer::from_text(norm)?,
            threshold,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?)
    }
}

/// Five observations around a switch, sharing one label.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSample {
    pub from: PolicyKind,
    pub to: PolicyKind,
    /// Planned distance to the artifact at which the switch was made (m).
    pub switch_distance: f64,
    pub seed: u64,
    /// Observations at steps t-2, t-1, t, t+1, t+2 around the switch step t.
    pub obs: [Vec<f64>; 5],
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchDataset {
    pub kind: PolicyKind,
    pub samples: Vec<SwitchSample>,
    pub config_hash: String,
    pub seed: u64,
}

impl SwitchDataset {
    /// Sample counts keyed by source policy.
    pub fn counts_by_source(&self) -> BTreeMap<&'static str, usize> {
        let mut m = BTreeMap::new();
        for s in &self.samples {
            *m.entry(s.from.name()).or_insert(0) += 1;
        }
        m
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    /// Deterministic split into training and validation sample indices;
    /// the five points of a sample always stay together.
    pub fn split(&self, validation_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.samples.len()).collect();
        shuffle(&mut idx, &mut rng::stream(seed, "split", self.kind.index() as u64));
        let n_val = (self.samples.len() as f64 * validation_frac).round() as usize;
        let val = idx[..n_val].to_vec();
        let train = idx[n_val..].to_vec();
        (train, val)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "switchds v1 kind={} n={}\nprovenance config={} seed={}\n",
            self.kind.name(),
            self.samples.len(),
            self.config_hash,
            self.seed
        );
        for smp in &self.samples {
            let _ = writeln!(
                s,
                "sample from={} to={} dist={:016x} seed={}",
                smp.from.name(),
                smp.to.name(),
                smp.switch_distance.to_bits(),
                smp.seed
            );
            for o in &smp.obs {
                let line: Vec<String> = o.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
            let _ = writeln!(s, "label {}", smp.label as u8);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "switch dataset";
        let bad = |d: String| Error::corrupt(WHAT, d);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header.strip_prefix("switchds v1 ").ok_or_else(|| Error::Version {
            what: WHAT.into(),
            found: header.into(),
        })?;
        let kv = |line: &str, key: &str| -> Option<String> {
            line.split_whitespace()
                .find_map(|t| t.strip_prefix(&format!("{key}=")).map(str::to_string))
        };
        let kind: PolicyKind = kv(rest, "kind")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| bad("bad kind".into()))?;
        let n: usize = kv(rest, "n")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| bad("bad count".into()))?;
        let prov = lines.next().ok_or_else(|| bad("missing provenance".into()))?;
        let config_hash = kv(prov, "config").ok_or_else(|| bad("bad provenance".into()))?;
        let seed = kv(prov, "seed")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad provenance".into()))?;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let meta = lines.next().ok_or_else(|| bad(format!("truncated at sample {i}")))?;
            let from = kv(meta, "from").and_then(|v| v.parse().ok());
            let to = kv(meta, "to").and_then(|v| v.parse().ok());
            let dist = kv(meta, "dist").and_then(|v| parse_hex_f64(&v));
            let sseed = kv(meta, "seed").and_then(|v| v.parse().ok());
            let (Some(from), Some(to), Some(switch_distance), Some(sseed)) = (from, to, dist, sseed) else {
                return Err(bad(format!("bad metadata line {meta:?}")));
            };
            let mut obs: [Vec<f64>; 5] = Default::default();
            for o in obs.iter_mut() {
                let line = lines.next().ok_or_else(|| bad(format!("truncated at sample {i}")))?;
                *o = line
                    .split_whitespace()
                    .map(|t| parse_hex_f64(t).ok_or_else(|| bad(format!("bad value {t:?}"))))
                    .collect::<Result<_>>()?;
                if o.len() != OBS_DIM {
                    return Err(bad(format!("observation of length {}", o.len())));
                }
            }
            let label = match lines.next() {
                Some("label 1") => true,
                Some("label 0") => false,
                other => return Err(bad(format!("bad label line {other:?}"))),
            };
            samples.push(SwitchSample {
                from,
                to,
                switch_distance,
                seed: sseed,
                obs,
                label,
            });
        }
        Ok(SwitchDataset {
            kind,
            samples,
            config_hash,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?)
    }
}

/// Shared pieces of a collection or lookup episode.
#[derive(Debug, Clone)]
pub struct SwitchSettings {
    pub sim: SimConfig,
    pub terrain: TerrainConfig,
    pub gait: ScriptedGait,
    pub switch: SwitchConfig,
}

/// Outcome of one single-artifact switch episode.
#[derive(Debug, Clone)]
pub struct SwitchOutcome {
    pub window: [Vec<f64>; 5],
    pub success: bool,
}

/// Track with one artifact of `kind` for collection episodes.
pub fn single_artifact_track(settings: &SwitchSettings, kind: PolicyKind, seed: u64) -> Result<Track> {
    let terrain = TerrainConfig {
        n_artifacts: 1,
        start_flat: settings.switch.collect_lead_in,
        run_out: settings.switch.collect_run_out,
        ..settings.terrain.clone()
    };
    generate_track(&terrain, seed, TrackMode::Single(kind))
}

/// Run `from` toward the single artifact of `track` and hand over to `to`
/// once the remaining distance falls to `switch_at`. Returns `None` when
/// the artifact is never detected or the robot falls before switching.
pub fn switch_episode(
    settings: &SwitchSettings,
    policies: &PolicySet,
    from: PolicyKind,
    to: PolicyKind,
    track: &Track,
    switch_at: f64,
) -> Result<Option<SwitchOutcome>> {
    let sim = &settings.sim;
    let cfg = &settings.switch;
    let p_from = policies.require(from)?;
    let p_to = policies.require(to)?;
    let art = track
        .artifacts
        .first()
        .ok_or_else(|| Error::Config("switch episode needs an artifact".into()))?;
    let (_, nominal_com) = nominal_heights(sim, &settings.gait);
    let mut biped = Biped::standing(sim, track, 0.3, standing_start(&settings.gait));
    let mut prev = biped.contact;
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut switched_at: Option<usize> = None;
    let mut detected = false;
    let mut touchdowns_after = 0usize;
    let steps = (cfg.collect_timeout / sim.control_dt()).ceil() as usize;
    let mut success = false;

    for step in 0..steps {
        let obs = RobotState::capture(sim, &biped, track, prev, 1.0).to_vec();
        let dist = art.x_start - biped.front_x(sim);
        if !detected && dist <= cfg.detection_range {
            detected = true;
        }
        if detected && switched_at.is_none() && dist <= switch_at {
            switched_at = Some(step);
        }
        // A generator still short of the switch point halfway through the
        // budget is stalled; the sample is redrawn.
        if switched_at.is_none() && 2 * step >= steps {
            return Ok(None);
        }
        history.push(obs);
        if let Some(t) = switched_at {
            if step >= t + 2 && success {
                break;
            }
        }
        let active = if switched_at.is_some() { p_to } else { p_from };
        let tau = active.torques(history.last().unwrap(), sim.torque_limit)?;
        prev = biped.contact;
        let status = match control_step(sim, track, &mut biped, &tau, None, None) {
            Ok(events) => {
                let (com, vel) = biped.com(sim);
                if com[0] >= art.x_end {
                    touchdowns_after += events.iter().filter(|e| e.kind == ContactKind::Touchdown).count();
                }
                let status = check_termination(sim, &biped, track);
                if status != Termination::Fell && switched_at.is_some() && !success {
                    success = match cfg.label_rule {
                        LabelRule::TwoSteps => touchdowns_after >= 2,
                        LabelRule::GoalZone => {
                            let h = com[1] - track.height_at(com[0]);
                            com[0] >= art.x_end + 0.9 && (vel[0] - settings.gait.speed).abs() < 0.5 && (h - nominal_com).abs() < 0.15
                        }
                    };
                }
                status
            }
            Err(_) => Termination::Fell,
        };
        if status == Termination::Fell {
            if switched_at.is_none() {
                return Ok(None);
            }
            success = false;
            // keep the last state for any missing window entries
            break;
        }
        if status == Termination::ReachedGoal && switched_at.is_none() {
            return Ok(None);
        }
    }
    let Some(t) = switched_at else {
        return Ok(None);
    };
    if t < 2 {
        return Ok(None);
    }
    let last = history.len() - 1;
    let window: [Vec<f64>; 5] = std::array::from_fn(|k| history[(t + k - 2).min(last)].clone());
    Ok(Some(SwitchOutcome { window, success }))
}

/// Collect `n_samples` labelled switch samples toward artifacts of `kind`,
/// cycling through `generators` as source policies.
const ATTEMPTS_PER_GENERATOR: usize = 20;

pub fn collect_switch_data(
    settings: &SwitchSettings,
    policies: &PolicySet,
    kind: PolicyKind,
    n_samples: usize,
    seed: u64,
    generators: &[PolicyKind],
    config_hash: &str,
) -> Result<SwitchDataset> {
    settings.switch.validate()?;
    if kind == PolicyKind::Walk {
        return Err(Error::Config("switch data is collected for specialist kinds".into()));
    }
    let gens: Vec<PolicyKind> = generators.iter().copied().filter(|g| *g != kind).collect();
    if gens.is_empty() {
        return Err(Error::Config("no generator policy differs from the target".into()));
    }
    policies.require(kind)?;
    for g in &gens {
        policies.require(*g)?;
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &format!("switchdata/{}", kind.name()), i as u64);
            // A generator that cannot reach the artifact hands the sample to
            // the next one.
            for g in 0..gens.len() {
                let from = gens[(i + g) % gens.len()];
                for _ in 0..ATTEMPTS_PER_GENERATOR {
                    let track_seed: u64 = r.random();
                    let dist = r.random_range(0.0..=settings.switch.detection_range);
                    let track = single_artifact_track(settings, kind, track_seed)?;
                    if let Some(out) = switch_episode(settings, policies, from, kind, &track, dist)? {
                        return Ok(SwitchSample {
                            from,
                            to: kind,
                            switch_distance: dist,
                            seed: track_seed,
                            obs: out.window,
                            label: out.success,
                        });
                    }
                }
            }
            Err(Error::Config(format!(
                "no generator policy reached a detectable {} artifact",
                kind.name()
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchDataset {
        kind,
        samples,
        config_hash: config_hash.to_string(),
        seed,
    })
}

/// Minibatches with equal positive and negative counts (one extra negative
/// when the batch size is odd). Each class is drawn by cycling through its
/// shuffled indices.
pub fn balanced_batches(labels: &[bool], batch: usize, n_batches: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Vec::new();
    }
    shuffle(&mut pos, rng);
    shuffle(&mut neg, rng);
    let (mut ip, mut ineg) = (0, 0);
    let n_pos = batch / 2;
    let n_neg = batch - n_pos;
    (0..n_batches)
        .map(|_| {
            let mut b = Vec::with_capacity(batch);
            for _ in 0..n_pos {
                if ip == pos.len() {
                    shuffle(&mut pos, rng);
                    ip = 0;
                }
                b.push(pos[ip]);
                ip += 1;
            }
            for _ in 0..n_neg {
                if ineg == neg.len() {
                    shuffle(&mut neg, rng);
                    ineg = 0;
                }
                b.push(neg[ineg]);
                ineg += 1;
            }
            b
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
    pub train_points: usize,
    pub validation_points: usize,
}

/// Flatten samples into (points, labels).
fn points(ds: &SwitchDataset, idx: &[usize]) -> (Vec<f64>, Vec<bool>) {
    let mut x = Vec::with_capacity(idx.len() * 5 * OBS_DIM);
    let mut y = Vec::with_capacity(idx.len() * 5);
    for &i in idx {
        let s = &ds.samples[i];
        for o in &s.obs {
            x.extend_from_slice(o);
            y.push(s.label);
        }
    }
    (x, y)
}

fn squared_error(net: &Mlp, x: &[f64], y: &[bool]) -> Result<(f64, f64)> {
    if y.is_empty() {
        return Ok((0.0, 0.0));
    }
    let out = net.forward_batch(x)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (e, &l) in out.output().iter().zip(y) {
        let t = l as u8 as f64;
        loss += (e - t) * (e - t);
        if (*e >= 0.5) == l {
            correct += 1;
        }
    }
    Ok((loss / y.len() as f64, correct as f64 / y.len() as f64))
}

/// Fit an estimator to `ds` with squared error on the sigmoid output and
/// label-balanced minibatches. One epoch covers the training points once.
pub fn train_estimator(
    ds: &SwitchDataset,
    cfg: &SwitchConfig,
    epochs: usize,
    seed: u64,
) -> Result<(SwitchEstimator, EstimatorReport)> {
    cfg.validate()?;
    let pos = ds.positives();
    if pos == 0 || pos == ds.samples.len() {
        return Err(Error::Config(format!(
            "{} dataset has a single label class ({} of {} positive)",
            ds.kind.name(),
            pos,
            ds.samples.len()
        )));
    }
    let (train_idx, val_idx) = ds.split(cfg.validation_frac, seed);
    let (xt, yt) = points(ds, &train_idx);
    let (xv, yv) = points(ds, &val_idx);
    let mut norm = Normalizer::new(OBS_DIM);
    for row in xt.chunks(OBS_DIM) {
        norm.update(row);
    }
    let nt: Vec<f64> = xt.chunks(OBS_DIM).flat_map(|r| norm.normalize(r)).collect();
    let nv: Vec<f64> = xv.chunks(OBS_DIM).flat_map(|r| norm.normalize(r)).collect();

    let mut r = rng::stream(seed, "estimator", ds.kind.index() as u64);
    let mut dims = vec![OBS_DIM];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut net = Mlp::new(&dims, Head::Sigmoid, 1.0, &mut r)?;
    let mut opt = Adam::new(net.param_count(), cfg.lr);
    let per_epoch = yt.len().div_ceil(cfg.minibatch).max(1);
    let mut xb = Vec::with_capacity(cfg.minibatch * OBS_DIM);
    for _ in 0..epochs {
        for b in balanced_batches(&yt, cfg.minibatch, per_epoch, &mut r) {
            xb.clear();
            for &i in &b {
                xb.extend_from_slice(&nt[i * OBS_DIM..(i + 1) * OBS_DIM]);
            }
            let cache = net.forward_batch(&xb)?;
            let n = b.len() as f64;
            let dout: Vec<f64> = cache
                .output()
                .iter()
                .zip(&b)
                .map(|(e, &i)| 2.0 * (e - yt[i] as u8 as f64) / n)
                .collect();
            let g = net.backward(&cache, &dout)?;
            opt.update(net.params_mut(), &g)?;
        }
    }
    let (train_loss, _) = squared_error(&net, &nt, &yt)?;
    let (validation_loss, validation_accuracy) = squared_error(&net, &nv, &yv)?;
    Ok((
        SwitchEstimator {
            kind: ds.kind,
            net,
            norm,
            threshold: cfg.threshold,
        },
        EstimatorReport {
            train_loss,
            validation_loss,
            validation_accuracy,
            train_points: yt.len(),
            validation_points: yv.len(),
        },
    ))
}

pub const LOOKUP_BINS: usize = 90;
pub const LOOKUP_BIN_WIDTH: f64 = 0.01;

/// Per (from, to) pair, success counts over switch distances [0, 0.9) in
/// 1 cm bins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LookupTable {
    /// (successes, attempts) per bin.
    pub pairs: BTreeMap<(PolicyKind, PolicyKind), Vec<(u32, u32)>>,
}

pub fn bin_center(bin: usize) -> f64 {
    (bin as f64 + 0.5) * LOOKUP_BIN_WIDTH
}

/// Bin with the highest success rate; ties and empty tables go to the
/// smallest distance.
pub fn argmax_bin(bins: &[(u32, u32)]) -> usize {
    let rate = |(s, a): (u32, u32)| if a == 0 { 0.0 } else { s as f64 / a as f64 };
    let mut best = 0;
    for i in 1..bins.len() {
        if rate(bins[i]) > rate(bins[best]) {
            best = i;
        }
    }
    best
}

impl LookupTable {
    pub fn argmax_distance(&self, from: PolicyKind, to: PolicyKind) -> Option<f64> {
        self.pairs.get(&(from, to)).map(|b| bin_center(argmax_bin(b)))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("lookup v1 pairs={}\n", self.pairs.len());
        for ((f, t), bins) in &self.pairs {
            let _ = writeln!(s, "pair {} {}", f.name(), t.name());
            let cells: Vec<String> = bins.iter().map(|(a, b)| format!("{a}/{b}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "lookup table";
        let bad = |d: String| Error::corrupt(WHAT, d);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let n: usize = header
            .strip_prefix("lookup v1 pairs=")
            .ok_or_else(|| Error::Version {
                what: WHAT.into(),
                found: header.into(),
            })?
            .parse()
            .map_err(|_| bad("bad pair count".into()))?;
        let mut pairs = BTreeMap::new();
        for _ in 0..n {
            let p = lines.next().ok_or_else(|| bad("truncated".into()))?;
            let mut it = p.split_whitespace();
            let (Some("pair"), Some(f), Some(t)) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("bad pair line {p:?}")));
            };
            let f: PolicyKind = f.parse().map_err(|_| bad(format!("bad kind {f:?}")))?;
            let t: PolicyKind = t.parse().map_err(|_| bad(format!("bad kind {t:?}")))?;
            let cells = lines.next().ok_or_else(|| bad("truncated".into()))?;
            let bins = cells
                .split_whitespace()
                .map(|c| {
                    let (a, b) = c.split_once('/')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                })
                .collect::<Option<Vec<(u32, u32)>>>()
                .ok_or_else(|| bad("bad bin".into()))?;
            if bins.len() != LOOKUP_BINS {
                return Err(bad(format!("{} bins", bins.len())));
            }
            pairs.insert((f, t), bins);
        }
        Ok(LookupTable { pairs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?)
    }
}

/// Fill the lookup table for every ordered pair of loaded policies whose
/// target is a specialist, running `per_bin_trials` episodes per bin.
pub fn build_lookup(settings: &SwitchSettings, policies: &PolicySet, per_bin_trials: usize, seed: u64) -> Result<LookupTable> {
    let mut jobs = Vec::new();
    for to in PolicyKind::SPECIALISTS {
        if policies.get(to).is_none() {
            continue;
        }
        for from in PolicyKind::ALL {
            if from != to && policies.get(from).is_some() {
                for bin in 0..LOOKUP_BINS {
                    jobs.push((from, to, bin));
                }
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(from, to, bin)| {
            let mut r = rng::stream(
                seed,
                &format!("lookup/{}/{}", from.name(), to.name()),
                bin as u64,
            );
            let mut succ = 0u32;
            let mut att = 0u32;
            let mut tries = 0;
            while (att as usize) < per_bin_trials && tries < per_bin_trials * 10 {
                tries += 1;
                let track = single_artifact_track(settings, to, r.random())?;
                if let Some(o) = switch_episode(settings, policies, from, to, &track, bin_center(bin))? {
                    att += 1;
                    succ += o.success as u32;
                }
            }
            Ok(((from, to), bin, (succ, att)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = LookupTable::default();
    for (pair, bin, cell) in results {
        table
            .pairs
            .entry(pair)
            .or_insert_with(|| vec![(0, 0); LOOKUP_BINS])[bin] = cell;
    }
    Ok(table)
}

/// What the switching rule sees at one control step.
#[derive(Debug, Clone, Copy)]
pub struct SwitchContext {
    /// Remaining distance to the detected artifact (may be negative once
    /// the robot has reached it without switching).
    pub distance: f64,
    /// Random strategy: distance drawn at detection.
    pub random_distance: f64,
    pub com_over_support: bool,
    pub estimate: Option<f64>,
    pub lookup_distance: Option<f64>,
    pub threshold: f64,
    pub force_distance: f64,
}

pub fn decide_switch(strategy: SwitchStrategy, ctx: &SwitchContext) -> bool {
    if strategy.force_switches() && ctx.distance <= ctx.force_distance {
        return true;
    }
    match strategy {
        SwitchStrategy::Random => ctx.distance <= ctx.random_distance,
        SwitchStrategy::OnDetection => true,
        SwitchStrategy::Lookup => ctx.lookup_distance.is_none_or(|d| ctx.distance <= d),
        SwitchStrategy::ComOverFeet => ctx.com_over_support,
        SwitchStrategy::Estimator => ctx.estimate.is_some_and(|e| e >= ctx.threshold),
    }
}
