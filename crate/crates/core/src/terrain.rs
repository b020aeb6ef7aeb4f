//! Piecewise-box terrain tracks: generation, height queries, the egocentric
//! height scan and the exact next-artifact detector.
//!
//! A track is a sequence of boxes laid end to end along +x starting at the
//! robot spawn point `x = 0`. Each box is a half-open interval
//! `[x0, x0 + len)` with a constant top height. Outside the track the ground
//! continues flat at the start (resp. goal) elevation.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of samples in a height scan.
pub const SCAN_LEN: usize = 60;
/// Spacing between scan samples (m).
pub const SCAN_GRID: f64 = 0.025;
/// Distance behind the CoM covered by the first scan sample (m).
pub const SCAN_BEHIND: f64 = 0.6;
/// Height range mapped onto [0, 1] by the scan (m).
pub const SCAN_DEPTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Flat,
    StairsUp,
    StairsDown,
    Gap,
    Step,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Flat,
        ArtifactKind::StairsUp,
        ArtifactKind::StairsDown,
        ArtifactKind::Gap,
        ArtifactKind::Step,
    ];

    /// The specialist policy responsible for this kind of terrain.
    pub fn policy(self) -> PolicyKind {
        match self {
            ArtifactKind::Flat => PolicyKind::Walk,
            ArtifactKind::StairsUp | ArtifactKind::StairsDown => PolicyKind::Stairs,
            ArtifactKind::Gap => PolicyKind::Gap,
            ArtifactKind::Step => PolicyKind::Step,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Flat => "flat",
            ArtifactKind::StairsUp => "stairs_up",
            ArtifactKind::StairsDown => "stairs_down",
            ArtifactKind::Gap => "gap",
            ArtifactKind::Step => "step",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four controllers in the suite. `Step` is the "jump" specialist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Walk,
    Stairs,
    Gap,
    Step,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Walk,
        PolicyKind::Stairs,
        PolicyKind::Gap,
        PolicyKind::Step,
    ];
    pub const SPECIALISTS: [PolicyKind; 3] = [PolicyKind::Stairs, PolicyKind::Gap, PolicyKind::Step];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Walk => "walk",
            PolicyKind::Stairs => "stairs",
            PolicyKind::Gap => "gap",
            PolicyKind::Step => "step",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" | "flat" => Ok(PolicyKind::Walk),
            "stairs" => Ok(PolicyKind::Stairs),
            "gap" | "gaps" => Ok(PolicyKind::Gap),
            "step" | "jump" | "jumps" => Ok(PolicyKind::Step),
            other => Err(Error::Config(format!("unknown policy kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackMode {
    /// Every artifact is of the terrain type handled by the given policy
    /// (`Walk` produces flat ground; `Stairs` picks up or down per artifact).
    Single(PolicyKind),
    /// Artifacts drawn from stairs, gaps and steps with no two consecutive
    /// artifacts of the same type.
    Multi,
}

impl fmt::Display for TrackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackMode::Single(k) => write!(f, "single:{k}"),
            TrackMode::Multi => f.write_str("multi"),
        }
    }
}

impl FromStr for TrackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "multi" {
            return Ok(TrackMode::Multi);
        }
        match s.strip_prefix("single:") {
            Some(k) => Ok(TrackMode::Single(k.parse()?)),
            None => Err(Error::Config(format!("unknown track mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainConfig {
    pub n_artifacts: usize,
    /// Flat box and stair tread run range (m).
    pub flat_run: [f64; 2],
    /// Flat approach before every artifact after the first (m).
    pub lead_in: [f64; 2],
    /// Flat approach before the first artifact, measured from the spawn point (m).
    pub start_flat: f64,
    /// Flat ground after the last artifact; its end is the goal (m).
    pub run_out: f64,
    pub boxes_min: usize,
    pub boxes_max: usize,
    pub stair_rise: f64,
    pub gap_length: f64,
    /// Gap floor relative to the surrounding ground (m).
    pub gap_depth: f64,
    pub step_height: f64,
    pub step_run: f64,
    pub width: [f64; 2],
    /// Scales rise, gap length and step height; 1.0 gives full-size artifacts.
    pub difficulty: f64,
    pub detection_range: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            n_artifacts: 7,
            flat_run: [0.36, 0.44],
            lead_in: [0.9, 1.2],
            start_flat: 2.0,
            run_out: 1.0,
            boxes_min: 4,
            boxes_max: 9,
            stair_rise: 0.17,
            gap_length: 0.7,
            gap_depth: -2.0,
            step_height: 0.3,
            step_run: 0.16,
            width: [1.1, 1.7],
            difficulty: 1.0,
            detection_range: 0.9,
        }
    }
}

impl TerrainConfig {
    pub fn with_difficulty(&self, d: f64) -> Self {
        TerrainConfig {
            difficulty: d,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        let fail = |m: &str| Err(Error::Config(format!("terrain: {m}")));
        if self.n_artifacts == 0 {
            return fail("n_artifacts must be positive");
        }
        if !range_ok(self.flat_run) || !range_ok(self.lead_in) || !range_ok(self.width) {
            return fail("ranges must satisfy 0 < lo <= hi");
        }
        if self.boxes_min < 2 || self.boxes_min > self.boxes_max {
            return fail("box count range must satisfy 2 <= min <= max");
        }
        if !(self.start_flat > 0.0 && self.run_out >= 0.0) {
            return fail("start_flat must be positive and run_out non-negative");
        }
        if !(self.stair_rise > 0.0
            && self.gap_length > 0.0
            && self.step_height > 0.0
            && self.step_run > 0.0
            && self.gap_depth < 0.0)
        {
            return fail("artifact dimensions must be positive (gap depth negative)");
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return fail("difficulty must lie in [0, 1]");
        }
        if !(self.detection_range > 0.0) {
            return fail("detection range must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainBox {
    pub run: f64,
    /// Absolute top height (m).
    pub top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    pub boxes: Vec<TerrainBox>,
    pub lead_in_flat: f64,
    /// Absolute x of the leading edge (start of the first box).
    pub x_start: f64,
    pub x_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub len: f64,
    pub h: f64,
}

impl Segment {
    pub fn x1(&self) -> f64 {
        self.x0 + self.len
    }
}

/// A height discontinuity between two adjacent boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: f64,
    pub h_left: f64,
    pub h_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub seed: u64,
    pub mode: TrackMode,
    pub width: f64,
    pub artifacts: Vec<ArtifactSpec>,
    pub segments: Vec<Segment>,
    pub total_length: f64,
    pub goal_x: f64,
}

/// Generate a track. Identical inputs give bit-identical output.
pub fn generate_track(config: &TerrainConfig, seed: u64, mode: TrackMode) -> Result<Track> {
    config.validate()?;
    let mut rng = rng::stream(seed, "track", 0);
    let d = config.difficulty;
    let width = rng.random_range(config.width[0]..=config.width[1]);

    let mut segments = Vec::new();
    let mut artifacts = Vec::with_capacity(config.n_artifacts);
    let mut x = 0.0f64;
    let mut base = 0.0f64;
    let mut prev: Option<PolicyKind> = None;

    for i in 0..config.n_artifacts {
        let kind = match mode {
            TrackMode::Single(PolicyKind::Walk) => ArtifactKind::Flat,
            TrackMode::Single(PolicyKind::Stairs) => random_stairs(&mut rng),
            TrackMode::Single(PolicyKind::Gap) => ArtifactKind::Gap,
            TrackMode::Single(PolicyKind::Step) => ArtifactKind::Step,
            TrackMode::Multi => {
                let choices: Vec<PolicyKind> = PolicyKind::SPECIALISTS
                    .iter()
                    .copied()
                    .filter(|k| Some(*k) != prev)
                    .collect();
                match choices[rng.random_range(0..choices.len())] {
                    PolicyKind::Stairs => random_stairs(&mut rng),
                    PolicyKind::Gap => ArtifactKind::Gap,
                    _ => ArtifactKind::Step,
                }
            }
        };
        prev = Some(kind.policy());

        let lead_in = if i == 0 {
            config.start_flat
        } else {
            rng.random_range(config.lead_in[0]..=config.lead_in[1])
        };
        segments.push(Segment {
            x0: x,
            len: lead_in,
            h: base,
        });
        x += lead_in;

        let n_boxes = rng.random_range(config.boxes_min..=config.boxes_max);
        let mut boxes = Vec::with_capacity(n_boxes);
        let flat_run = |rng: &mut rng::Rng| rng.random_range(config.flat_run[0]..=config.flat_run[1]);
        match kind {
            ArtifactKind::Flat => {
                for _ in 0..n_boxes {
                    boxes.push(TerrainBox {
                        run: flat_run(&mut rng),
                        top: base,
                    });
                }
            }
            ArtifactKind::StairsUp | ArtifactKind::StairsDown => {
                let sign = if kind == ArtifactKind::StairsUp { 1.0 } else { -1.0 };
                let rise = sign * config.stair_rise * d;
                for j in 0..n_boxes {
                    boxes.push(TerrainBox {
                        run: flat_run(&mut rng),
                        top: base + rise * (j + 1) as f64,
                    });
                }
            }
            ArtifactKind::Gap => {
                boxes.push(TerrainBox {
                    run: config.gap_length * d,
                    top: base + config.gap_depth,
                });
                for _ in 1..n_boxes {
                    boxes.push(TerrainBox {
                        run: flat_run(&mut rng),
                        top: base,
                    });
                }
            }
            ArtifactKind::Step => {
                boxes.push(TerrainBox {
                    run: config.step_run,
                    top: base + config.step_height * d,
                });
                for _ in 1..n_boxes {
                    boxes.push(TerrainBox {
                        run: flat_run(&mut rng),
                        top: base,
                    });
                }
            }
        }

        let x_start = x;
        for b in &boxes {
            segments.push(Segment {
                x0: x,
                len: b.run,
                h: b.top,
            });
            x += b.run;
        }
        base = boxes.last().map(|b| b.top).unwrap_or(base);
        artifacts.push(ArtifactSpec {
            kind,
            boxes,
            lead_in_flat: lead_in,
            x_start,
            x_end: x,
        });
    }

    segments.push(Segment {
        x0: x,
        len: config.run_out,
        h: base,
    });
    let goal_x = x + config.run_out;

    Ok(Track {
        seed,
        mode,
        width,
        artifacts,
        segments,
        total_length: goal_x,
        goal_x,
    })
}

fn random_stairs(rng: &mut rng::Rng) -> ArtifactKind {
    if rng.random_bool(0.5) {
        ArtifactKind::StairsUp
    } else {
        ArtifactKind::StairsDown
    }
}

impl Track {
    /// A featureless flat track of the given length.
    pub fn flat(length: f64) -> Track {
        Track {
            seed: 0,
            mode: TrackMode::Single(PolicyKind::Walk),
            width: 1.4,
            artifacts: Vec::new(),
            segments: vec![Segment {
                x0: 0.0,
                len: length,
                h: 0.0,
            }],
            total_length: length,
            goal_x: length,
        }
    }

    /// Build a track directly from a list of segments (used for replay and tests).
    pub fn from_segments(seed: u64, mode: TrackMode, segments: Vec<Segment>) -> Track {
        let goal_x = segments.last().map(|s| s.x1()).unwrap_or(0.0);
        Track {
            seed,
            mode,
            width: 1.4,
            artifacts: Vec::new(),
            segments,
            total_length: goal_x,
            goal_x,
        }
    }

    fn segment_index(&self, x: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.x0 <= x);
        Some(i.saturating_sub(1))
    }

    /// Top height of the box containing `x`.
    pub fn height_at(&self, x: f64) -> f64 {
        match self.segment_index(x) {
            None => 0.0,
            Some(i) => self.segments[i].h,
        }
    }

    pub fn segment_at(&self, x: f64) -> Option<&Segment> {
        self.segment_index(x).map(|i| &self.segments[i])
    }

    /// Height discontinuities with `lo <= x <= hi`.
    pub fn edges_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = Edge> + '_ {
        let start = self.segments.partition_point(|s| s.x0 < lo).max(1);
        self.segments[start.min(self.segments.len())..]
            .iter()
            .enumerate()
            .take_while(move |(_, s)| s.x0 <= hi)
            .filter_map(move |(k, s)| {
                let left = &self.segments[start + k - 1];
                (left.h != s.h).then_some(Edge {
                    x: s.x0,
                    h_left: left.h,
                    h_right: s.h,
                })
            })
    }

    /// Kind and leading-edge distance of the nearest upcoming non-flat
    /// artifact, when it is within `range` of `robot_x`.
    pub fn detect_next(&self, robot_x: f64, range: f64) -> Option<(ArtifactKind, f64)> {
        self.next_artifact(robot_x)
            .map(|(_, a)| (a.kind, a.x_start - robot_x))
            .filter(|&(_, dist)| dist <= range)
    }

    /// Index and description of the nearest non-flat artifact whose leading edge
    /// lies at or ahead of `robot_x`.
    pub fn next_artifact(&self, robot_x: f64) -> Option<(usize, &ArtifactSpec)> {
        self.artifacts
            .iter()
            .enumerate()
            .find(|(_, a)| a.kind != ArtifactKind::Flat && a.x_start >= robot_x)
    }

    /// Index of the artifact whose boxes contain `x`, if any.
    pub fn artifact_at(&self, x: f64) -> Option<usize> {
        self.artifacts
            .iter()
            .position(|a| x >= a.x_start && x < a.x_end)
    }

    /// Egocentric terrain scan around the CoM.
    pub fn height_scan(&self, com_x: f64, com_z: f64) -> HeightScan {
        let mut values = [0.0; SCAN_LEN];
        for (i, v) in values.iter_mut().enumerate() {
            let x = com_x - SCAN_BEHIND + i as f64 * SCAN_GRID;
            *v = ((com_z - self.height_at(x)) / SCAN_DEPTH).clamp(0.0, 1.0);
        }
        HeightScan { values }
    }

    /// Return a copy shifted by `dx` along x.
    pub fn translated(&self, dx: f64) -> Track {
        let mut t = self.clone();
        for s in &mut t.segments {
            s.x0 += dx;
        }
        for a in &mut t.artifacts {
            a.x_start += dx;
            a.x_end += dx;
        }
        t.goal_x += dx;
        t
    }

    /// Serialize as the plain-text `track v1` format.
    pub fn to_text(&self) -> String {
        let mut out = format!("track v1 seed={} mode={}\n", self.seed, self.mode);
        for s in &self.segments {
            out.push_str(&format!("{} {} {}\n", fmt_g9(s.x0), fmt_g9(s.len), fmt_g9(s.h)));
        }
        out
    }
}

/// Header and boxes of a parsed `track v1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFile {
    pub seed: u64,
    pub mode: TrackMode,
    pub segments: Vec<Segment>,
}

pub fn parse_track_text(text: &str) -> Result<TrackFile> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::corrupt("track file", "empty"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("track") {
        return Err(Error::corrupt("track file", "missing `track` header"));
    }
    match parts.next() {
        Some("v1") => {}
        other => {
            return Err(Error::Version {
                what: "track file",
                found: other.unwrap_or("").to_string(),
            })
        }
    }
    let mut seed = None;
    let mut mode = None;
    for kv in parts {
        if let Some(v) = kv.strip_prefix("seed=") {
            seed = Some(
                v.parse::<u64>()
                    .map_err(|e| Error::corrupt("track file", format!("seed: {e}")))?,
            );
        } else if let Some(v) = kv.strip_prefix("mode=") {
            mode = Some(v.parse::<TrackMode>()?);
        }
    }
    let (seed, mode) = match (seed, mode) {
        (Some(s), Some(m)) => (s, m),
        _ => return Err(Error::corrupt("track file", "header lacks seed or mode")),
    };
    let mut segments = Vec::new();
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::corrupt("track file", format!("line {}: {e}", n + 2)))?;
        if vals.len() != 3 {
            return Err(Error::corrupt(
                "track file",
                format!("line {}: expected 3 fields", n + 2),
            ));
        }
        segments.push(Segment {
            x0: vals[0],
            len: vals[1],
            h: vals[2],
        });
    }
    Ok(TrackFile { seed, mode, segments })
}

/// Format like C's `%.9g`.
pub fn fmt_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightScan {
    pub values: [f64; SCAN_LEN],
}

impl HeightScan {
    /// Index of the first sample at or ahead of the CoM.
    pub const FIRST_FORWARD: usize = 24;
}

/// Check every structural invariant of a generated track.
pub fn validate_track(track: &Track, config: &TerrainConfig) -> std::result::Result<(), String> {
    const EPS: f64 = 1e-9;
    let d = config.difficulty;
    if track.artifacts.len() != config.n_artifacts {
        return Err(format!(
            "expected {} artifacts, found {}",
            config.n_artifacts,
            track.artifacts.len()
        ));
    }
    match track.segments.first() {
        Some(s) if s.x0 == 0.0 && s.h == 0.0 => {}
        _ => return Err("track must begin with flat ground at x=0".into()),
    }
    for w in track.segments.windows(2) {
        if (w[0].x1() - w[1].x0).abs() > EPS {
            return Err(format!("segments not contiguous at x={}", w[1].x0));
        }
    }
    if !(config.width[0]..=config.width[1]).contains(&track.width) {
        return Err(format!("width {} out of range", track.width));
    }
    let in_run = |r: f64| r >= config.flat_run[0] - EPS && r <= config.flat_run[1] + EPS;
    let mut base = 0.0;
    for (i, a) in track.artifacts.iter().enumerate() {
        if i > 0 {
            if a.lead_in_flat < config.lead_in[0] - EPS {
                return Err(format!("artifact {i}: lead-in {} too short", a.lead_in_flat));
            }
            if track.mode == TrackMode::Multi
                && a.kind.policy() == track.artifacts[i - 1].kind.policy()
            {
                return Err(format!("artifacts {} and {i} share a type", i - 1));
            }
        }
        if a.lead_in_flat < 0.9 - EPS {
            return Err(format!("artifact {i}: lead-in below 0.9 m"));
        }
        if let TrackMode::Single(p) = track.mode {
            if a.kind.policy() != p {
                return Err(format!("artifact {i}: kind {} in single:{p} track", a.kind));
            }
        }
        let n = a.boxes.len();
        if n < config.boxes_min || n > config.boxes_max {
            return Err(format!("artifact {i}: {n} boxes"));
        }
        let x_sum: f64 = a.boxes.iter().map(|b| b.run).sum();
        if (a.x_start + x_sum - a.x_end).abs() > 1e-6 {
            return Err(format!("artifact {i}: extent mismatch"));
        }
        if (track.height_at(a.x_start - 1e-6) - base).abs() > EPS {
            return Err(format!("artifact {i}: lead-in not at base height"));
        }
        match a.kind {
            ArtifactKind::Flat => {
                if a.boxes.iter().any(|b| !in_run(b.run) || b.top != base) {
                    return Err(format!("artifact {i}: bad flat box"));
                }
            }
            ArtifactKind::StairsUp | ArtifactKind::StairsDown => {
                let sign = if a.kind == ArtifactKind::StairsUp { 1.0 } else { -1.0 };
                let mut prev = base;
                for b in &a.boxes {
                    if !in_run(b.run) || ((b.top - prev) - sign * config.stair_rise * d).abs() > 1e-9
                    {
                        return Err(format!("artifact {i}: bad stair tread"));
                    }
                    prev = b.top;
                }
            }
            ArtifactKind::Gap | ArtifactKind::Step => {
                let (run, top) = if a.kind == ArtifactKind::Gap {
                    (config.gap_length * d, base + config.gap_depth)
                } else {
                    (config.step_run, base + config.step_height * d)
                };
                let first = a.boxes[0];
                if (first.run - run).abs() > EPS || (first.top - top).abs() > EPS {
                    return Err(format!("artifact {i}: bad {} box", a.kind));
                }
                if a.boxes[1..].iter().any(|b| !in_run(b.run) || b.top != base) {
                    return Err(format!("artifact {i}: bad landing box"));
                }
            }
        }
        base = a.boxes.last().map(|b| b.top).unwrap_or(base);
    }
    if (track.goal_x - track.segments.last().map(|s| s.x1()).unwrap_or(0.0)).abs() > EPS {
        return Err("goal is not at the end of the run-out".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TerrainConfig {
        TerrainConfig::default()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_track(&cfg(), 7, TrackMode::Multi).unwrap();
        let b = generate_track(&cfg(), 7, TrackMode::Multi).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn multi_mode_never_repeats_a_type() {
        for seed in 0..200 {
            let t = generate_track(&cfg(), seed, TrackMode::Multi).unwrap();
            for w in t.artifacts.windows(2) {
                assert_ne!(w[0].kind.policy(), w[1].kind.policy(), "seed {seed}");
            }
        }
    }

    #[test]
    fn single_gap_tracks_have_full_gaps() {
        for seed in 0..50 {
            let t = generate_track(&cfg(), seed, TrackMode::Single(PolicyKind::Gap)).unwrap();
            assert_eq!(t.artifacts.len(), 7);
            for a in &t.artifacts {
                assert_eq!(a.kind, ArtifactKind::Gap);
                assert!((a.boxes[0].run - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validator_accepts_generated_tracks() {
        for mode in [
            TrackMode::Multi,
            TrackMode::Single(PolicyKind::Walk),
            TrackMode::Single(PolicyKind::Stairs),
            TrackMode::Single(PolicyKind::Step),
        ] {
            for seed in 0..50 {
                let t = generate_track(&cfg(), seed, mode).unwrap();
                validate_track(&t, &cfg()).unwrap();
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg();
        c.flat_run = [0.5, 0.4];
        assert!(matches!(
            generate_track(&c, 1, TrackMode::Multi),
            Err(Error::Config(_))
        ));
        let mut c = cfg();
        c.difficulty = 1.5;
        assert!(generate_track(&c, 1, TrackMode::Multi).is_err());
    }

    #[test]
    fn flat_track_height_is_zero() {
        let t = Track::flat(10.0);
        for x in [-3.0, 0.0, 0.5, 9.99, 25.0] {
            assert_eq!(t.height_at(x), 0.0);
        }
        let w = generate_track(&cfg(), 3, TrackMode::Single(PolicyKind::Walk)).unwrap();
        assert!(w.segments.iter().all(|s| s.h == 0.0));
    }

    #[test]
    fn gap_interior_is_at_gap_depth() {
        let t = generate_track(&cfg(), 11, TrackMode::Single(PolicyKind::Gap)).unwrap();
        let a = &t.artifacts[0];
        assert_eq!(t.height_at(a.x_start + 0.35), -2.0);
        assert_eq!(t.height_at(a.x_start - 0.01), 0.0);
    }

    #[test]
    fn third_stair_tread_height() {
        let mut seed = 0;
        let t = loop {
            let t = generate_track(&cfg(), seed, TrackMode::Single(PolicyKind::Stairs)).unwrap();
            if t.artifacts[0].kind == ArtifactKind::StairsUp {
                break t;
            }
            seed += 1;
        };
        let a = &t.artifacts[0];
        let x = a.x_start + a.boxes[0].run + a.boxes[1].run + 0.5 * a.boxes[2].run;
        assert!((t.height_at(x) - 0.51).abs() < 1e-12);
    }

    #[test]
    fn detection_window() {
        let t = generate_track(&cfg(), 5, TrackMode::Multi).unwrap();
        let a = &t.artifacts[0];
        let (k, d) = t.detect_next(a.x_start - 0.5, 0.9).unwrap();
        assert_eq!(k, a.kind);
        assert!((d - 0.5).abs() < 1e-12);
        assert!(t.detect_next(a.x_start - 1.2, 0.9).is_none());
        assert!(t.detect_next(t.goal_x - 0.1, 0.9).is_none());
    }

    #[test]
    fn scan_values() {
        let t = Track::flat(5.0);
        let s = t.height_scan(1.0, 0.0);
        assert!(s.values.iter().all(|&v| v == 0.0));
        let s = t.height_scan(1.0, 1.0);
        assert!(s.values.iter().all(|&v| v == 0.5));
        let s = t.height_scan(1.0, 2.5);
        assert!(s.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn scan_saturates_over_gap() {
        let t = generate_track(&cfg(), 2, TrackMode::Single(PolicyKind::Gap)).unwrap();
        let a = &t.artifacts[0];
        let com_x = a.x_start + 0.35;
        let s = t.height_scan(com_x, 0.9);
        // samples at the CoM and just ahead lie over the gap floor
        for i in 20..30 {
            assert_eq!(s.values[i], 1.0);
        }
    }

    #[test]
    fn text_round_trip_of_boxes() {
        let t = generate_track(&cfg(), 9, TrackMode::Multi).unwrap();
        let text = t.to_text();
        assert!(text.starts_with("track v1 seed=9 mode=multi\n"));
        let parsed = parse_track_text(&text).unwrap();
        assert_eq!(parsed.seed, 9);
        assert_eq!(parsed.mode, TrackMode::Multi);
        assert_eq!(parsed.segments.len(), t.segments.len());
        for (a, b) in parsed.segments.iter().zip(&t.segments) {
            assert!((a.x0 - b.x0).abs() <= 1e-8 * b.x0.abs().max(1.0));
        }
        assert!(matches!(
            parse_track_text("track v2 seed=1 mode=multi\n"),
            Err(Error::Version { .. })
        ));
        assert!(parse_track_text("track v1 seed=1 mode=multi\n0 1\n").is_err());
    }

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(1.5), "1.5");
        assert_eq!(fmt_g9(-2.0), "-2");
        assert_eq!(fmt_g9(0.17), "0.17");
        assert_eq!(fmt_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g9(12345.678901234), "12345.6789");
        assert_eq!(fmt_g9(1.0e-5), "1e-05");
        assert_eq!(fmt_g9(3.0e10), "3e+10");
    }

    #[test]
    fn edges_are_found() {
        let t = Track::from_segments(
            0,
            TrackMode::Multi,
            vec![
                Segment { x0: 0.0, len: 1.0, h: 0.0 },
                Segment { x0: 1.0, len: 0.5, h: 0.2 },
                Segment { x0: 1.5, len: 0.5, h: 0.2 },
                Segment { x0: 2.0, len: 1.0, h: 0.0 },
            ],
        );
        let e: Vec<Edge> = t.edges_in(0.5, 2.5).collect();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0], Edge { x: 1.0, h_left: 0.0, h_right: 0.2 });
        assert_eq!(e[1].x, 2.0);
        assert_eq!(t.edges_in(1.2, 1.8).count(), 0);
    }
}
