//! Planar five-body biped: torso, two thighs, two shanks with point feet.
//!
//! Generalized coordinates are `[x, z, pitch, hip_l, knee_l, hip_r, knee_r]`
//! where `(x, z)` is the hip joint, `pitch` is the torso lean (positive
//! forward), hip angles are thigh flexion relative to the torso and knee
//! angles are flexion (>= 0, bending the shank backward).
//!
//! Integration is semi-implicit Euler. Contacts are inelastic point contacts
//! resolved at the velocity level with projected Gauss-Seidel (Coulomb
//! friction on treads, frictionless risers), followed by a position
//! projection that removes residual penetration.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::terrain::{HeightScan, Track, SCAN_LEN};

pub const NQ: usize = 7;
pub const NJ: usize = 4;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: f64,
    pub torso_mass: f64,
    pub torso_length: f64,
    /// Distance from hip to torso CoM along the torso axis.
    pub torso_com: f64,
    pub thigh_mass: f64,
    pub thigh_length: f64,
    pub shank_mass: f64,
    pub shank_length: f64,
    pub torque_limit: f64,
    pub friction: f64,
    pub knee_min: f64,
    pub knee_max: f64,
    /// Physics steps per control step.
    pub decimation: usize,
    /// Fall when torso height drops below this fraction of leg length.
    pub fall_height_frac: f64,
    pub fall_pitch: f64,
    /// Half length of the notional foot used for support-interval tests.
    pub foot_half_length: f64,
    /// Maximum horizontal foot separation for the CoM-over-feet test.
    pub feet_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 240.0,
            gravity: 9.81,
            torso_mass: 30.0,
            torso_length: 0.6,
            torso_com: 0.3,
            thigh_mass: 7.0,
            thigh_length: 0.45,
            shank_mass: 5.0,
            shank_length: 0.45,
            torque_limit: 150.0,
            friction: 0.9,
            knee_min: 0.0,
            knee_max: 2.6,
            decimation: 4,
            fall_height_frac: 0.4,
            fall_pitch: 1.0,
            foot_half_length: 0.1,
            feet_tolerance: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.dt,
            self.gravity,
            self.torso_mass,
            self.torso_length,
            self.thigh_mass,
            self.thigh_length,
            self.shank_mass,
            self.shank_length,
            self.torque_limit,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("sim: masses, lengths, dt and torque limit must be positive".into()));
        }
        if self.decimation == 0 || self.friction < 0.0 || self.knee_min >= self.knee_max {
            return Err(Error::Config("sim: invalid decimation, friction or knee range".into()));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 2.0 * (self.thigh_mass + self.shank_mass)
    }

    pub fn leg_length(&self) -> f64 {
        self.thigh_length + self.shank_length
    }

    pub fn control_dt(&self) -> f64 {
        self.dt * self.decimation as f64
    }
}

/// Force and torque applied to the torso for one physics step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Wrench {
    /// Linear force (x, z) applied at the torso CoM (N).
    pub force: [f64; 2],
    /// Pitch torque on the torso (N m), positive leaning forward.
    pub torque: f64,
}

impl Wrench {
    pub fn is_zero(&self) -> bool {
        self.force == [0.0, 0.0] && self.torque == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Touchdown,
    Liftoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub foot: usize,
    pub kind: ContactKind,
    pub x: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Running,
    Fell,
    ReachedGoal,
}

/// Full mechanical state of the biped.
#[derive(Debug, Clone, PartialEq)]
pub struct Biped {
    pub q: [f64; NQ],
    pub v: [f64; NQ],
    pub contact: [bool; 2],
    pub contact_prev: [bool; 2],
    pub time: f64,
    /// Terrain height under the most recent foot contact.
    pub support_z: f64,
    pub diverged: bool,
}

// ---------------------------------------------------------------------------
// kinematics

#[inline]
fn down(phi: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let (s, c) = phi.sin_cos();
    // u, du/dphi, d2u/dphi2 for u = (sin, -cos)
    ([s, -c], [c, s], [-s, c])
}

/// Absolute segment angles measured from the downward vertical.
#[inline]
fn segment_angles(q: &[f64; NQ]) -> [f64; 4] {
    let th = q[2];
    [q[3] - th, q[3] - th - q[4], q[5] - th, q[5] - th - q[6]]
}

const ANGLE_GRAD: [[f64; NQ]; 5] = [
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],   // torso
    [0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0],  // thigh l
    [0.0, 0.0, -1.0, 1.0, -1.0, 0.0, 0.0], // shank l
    [0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0],  // thigh r
    [0.0, 0.0, -1.0, 0.0, 0.0, 1.0, -1.0], // shank r
];

/// A point expressed as `hip + sum(l_i * u(phi_i))` (+ optional torso term).
#[derive(Clone, Copy)]
struct PointKin {
    pos: [f64; 2],
    jac: [[f64; NQ]; 2],
    bias: [f64; 2],
}

fn dot(a: &[f64; NQ], b: &[f64; NQ]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Kinematics {
    phi: [f64; 4],
    phidot: [f64; 4],
    theta: f64,
    thetadot: f64,
}

impl Kinematics {
    fn new(q: &[f64; NQ], v: &[f64; NQ]) -> Self {
        let phi = segment_angles(q);
        let mut phidot = [0.0; 4];
        for (k, pd) in phidot.iter_mut().enumerate() {
            *pd = dot(&ANGLE_GRAD[k + 1], v);
        }
        Kinematics {
            phi,
            phidot,
            theta: q[2],
            thetadot: v[2],
        }
    }

    /// Point at `lens[i]` along segment `segs[i]`, summed, plus optional torso offset.
    fn point(&self, q: &[f64; NQ], chain: &[(usize, f64)], torso: f64) -> PointKin {
        let mut pos = [q[0], q[1]];
        let mut jac = [[0.0; NQ]; 2];
        jac[0][0] = 1.0;
        jac[1][1] = 1.0;
        let mut bias = [0.0; 2];
        for &(seg, len) in chain {
            let (u, du, ddu) = down(self.phi[seg]);
            let w = self.phidot[seg];
            for a in 0..2 {
                pos[a] += len * u[a];
                bias[a] += len * ddu[a] * w * w;
                for (j, g) in ANGLE_GRAD[seg + 1].iter().enumerate() {
                    jac[a][j] += len * du[a] * g;
                }
            }
        }
        if torso != 0.0 {
            let (s, c) = self.theta.sin_cos();
            let w = self.thetadot;
            pos[0] += torso * s;
            pos[1] += torso * c;
            jac[0][2] += torso * c;
            jac[1][2] -= torso * s;
            bias[0] -= torso * s * w * w;
            bias[1] -= torso * c * w * w;
        }
        PointKin { pos, jac, bias }
    }
}

/// Leg segment indices into the `phi` array for each side: (thigh, shank).
const LEG_SEGS: [(usize, usize); 2] = [(0, 1), (2, 3)];

fn foot_chain(cfg: &SimConfig, side: usize) -> [(usize, f64); 2] {
    let (th, sh) = LEG_SEGS[side];
    [(th, cfg.thigh_length), (sh, cfg.shank_length)]
}

// ---------------------------------------------------------------------------
// small dense linear algebra

#[derive(Clone, Copy)]
struct Chol {
    l: [[f64; NQ]; NQ],
}

impl Chol {
    fn new(m: &[[f64; NQ]; NQ]) -> Option<Chol> {
        let mut l = [[0.0; NQ]; NQ];
        for i in 0..NQ {
            for j in 0..=i {
                let mut s = m[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(Chol { l })
    }

    fn solve(&self, b: &[f64; NQ]) -> [f64; NQ] {
        let mut y = [0.0; NQ];
        for i in 0..NQ {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i][k] * y[k];
            }
            y[i] = s / self.l[i][i];
        }
        let mut x = [0.0; NQ];
        for i in (0..NQ).rev() {
            let mut s = y[i];
            for k in i + 1..NQ {
                s -= self.l[k][i] * x[k];
            }
            x[i] = s / self.l[i][i];
        }
        x
    }
}

// ---------------------------------------------------------------------------
// constraint rows

const MAX_ROWS: usize = 12;

#[derive(Clone, Copy, Default)]
struct Row {
    j: [f64; NQ],
    /// Desired lower bound on `j . v'`.
    bias: f64,
    lo: f64,
    hi: f64,
    /// Friction rows take their bound from this normal row.
    friction_of: Option<usize>,
}

struct Rows {
    rows: [Row; MAX_ROWS],
    n: usize,
}

impl Rows {
    fn new() -> Self {
        Rows {
            rows: [Row::default(); MAX_ROWS],
            n: 0,
        }
    }

    fn push(&mut self, r: Row) -> usize {
        debug_assert!(self.n < MAX_ROWS);
        self.rows[self.n] = r;
        self.n += 1;
        self.n - 1
    }
}

/// Horizontal reach within which risers are considered for contact (m).
const WALL_MARGIN: f64 = 0.05;
/// Vertical gap within which a tread is considered for contact (m).
const FLOOR_MARGIN: f64 = 0.05;

impl Biped {
    /// Standing on flat ground at `x` with the given joint angles and the
    /// lower foot touching the ground.
    pub fn standing(cfg: &SimConfig, track: &Track, x: f64, joints: [f64; NJ]) -> Biped {
        let mut q = [x, 0.0, 0.0, joints[0], joints[1], joints[2], joints[3]];
        let v = [0.0; NQ];
        let kin = Kinematics::new(&q, &v);
        let mut lowest = f64::INFINITY;
        for side in [LEFT, RIGHT] {
            let p = kin.point(&q, &foot_chain(cfg, side), 0.0).pos;
            lowest = lowest.min(p[1] - track.height_at(p[0]));
        }
        q[1] = -lowest;
        let mut b = Biped {
            q,
            v,
            contact: [false; 2],
            contact_prev: [false; 2],
            time: 0.0,
            support_z: track.height_at(x),
            diverged: false,
        };
        for side in [LEFT, RIGHT] {
            let p = b.foot_pos(cfg, side);
            b.contact[side] = p[1] - track.height_at(p[0]) < 1e-9;
        }
        b.contact_prev = b.contact;
        b
    }

    pub fn joint_pos(&self) -> [f64; NJ] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_vel(&self) -> [f64; NJ] {
        [self.v[3], self.v[4], self.v[5], self.v[6]]
    }

    pub fn pitch(&self) -> f64 {
        self.q[2]
    }

    pub fn pitch_rate(&self) -> f64 {
        self.v[2]
    }

    pub fn hip(&self) -> [f64; 2] {
        [self.q[0], self.q[1]]
    }

    pub fn foot_pos(&self, cfg: &SimConfig, side: usize) -> [f64; 2] {
        let kin = Kinematics::new(&self.q, &self.v);
        kin.point(&self.q, &foot_chain(cfg, side), 0.0).pos
    }

    pub fn foot_vel(&self, cfg: &SimConfig, side: usize) -> [f64; 2] {
        let kin = Kinematics::new(&self.q, &self.v);
        let p = kin.point(&self.q, &foot_chain(cfg, side), 0.0);
        [dot(&p.jac[0], &self.v), dot(&p.jac[1], &self.v)]
    }

    pub fn knee_pos(&self, cfg: &SimConfig, side: usize) -> [f64; 2] {
        let kin = Kinematics::new(&self.q, &self.v);
        kin.point(&self.q, &[(LEG_SEGS[side].0, cfg.thigh_length)], 0.0).pos
    }

    fn bodies(&self, cfg: &SimConfig, kin: &Kinematics) -> [(f64, f64, PointKin); 5] {
        let q = &self.q;
        let it = |m: f64, l: f64| m * l * l / 12.0;
        [
            (
                cfg.torso_mass,
                it(cfg.torso_mass, cfg.torso_length),
                kin.point(q, &[], cfg.torso_com),
            ),
            (
                cfg.thigh_mass,
                it(cfg.thigh_mass, cfg.thigh_length),
                kin.point(q, &[(0, 0.5 * cfg.thigh_length)], 0.0),
            ),
            (
                cfg.shank_mass,
                it(cfg.shank_mass, cfg.shank_length),
                kin.point(q, &[(0, cfg.thigh_length), (1, 0.5 * cfg.shank_length)], 0.0),
            ),
            (
                cfg.thigh_mass,
                it(cfg.thigh_mass, cfg.thigh_length),
                kin.point(q, &[(2, 0.5 * cfg.thigh_length)], 0.0),
            ),
            (
                cfg.shank_mass,
                it(cfg.shank_mass, cfg.shank_length),
                kin.point(q, &[(2, cfg.thigh_length), (3, 0.5 * cfg.shank_length)], 0.0),
            ),
        ]
    }

    /// Whole-body centre of mass position and velocity.
    pub fn com(&self, cfg: &SimConfig) -> ([f64; 2], [f64; 2]) {
        let kin = Kinematics::new(&self.q, &self.v);
        let mut p = [0.0; 2];
        let mut v = [0.0; 2];
        let mut mt = 0.0;
        for (m, _, b) in self.bodies(cfg, &kin) {
            mt += m;
            for a in 0..2 {
                p[a] += m * b.pos[a];
                v[a] += m * dot(&b.jac[a], &self.v);
            }
        }
        ([p[0] / mt, p[1] / mt], [v[0] / mt, v[1] / mt])
    }

    /// Foremost point of the robot (CoM or either foot), used to measure
    /// the distance to upcoming terrain.
    pub fn front_x(&self, cfg: &SimConfig) -> f64 {
        let (com, _) = self.com(cfg);
        com[0]
            .max(self.foot_pos(cfg, LEFT)[0])
            .max(self.foot_pos(cfg, RIGHT)[0])
    }

    /// Kinetic plus gravitational potential energy.
    pub fn energy(&self, cfg: &SimConfig) -> f64 {
        let kin = Kinematics::new(&self.q, &self.v);
        let mut e = 0.0;
        for (k, (m, inertia, b)) in self.bodies(cfg, &kin).into_iter().enumerate() {
            let vx = dot(&b.jac[0], &self.v);
            let vz = dot(&b.jac[1], &self.v);
            let w = dot(&ANGLE_GRAD[k], &self.v);
            e += 0.5 * m * (vx * vx + vz * vz) + 0.5 * inertia * w * w + m * cfg.gravity * b.pos[1];
        }
        e
    }

    fn mass_matrix_and_forces(
        &self,
        cfg: &SimConfig,
        kin: &Kinematics,
        torques: &[f64; NJ],
        ext: &Wrench,
    ) -> ([[f64; NQ]; NQ], [f64; NQ]) {
        let mut m = [[0.0; NQ]; NQ];
        let mut f = [0.0; NQ];
        for (k, (mass, inertia, b)) in self.bodies(cfg, kin).into_iter().enumerate() {
            let a = &ANGLE_GRAD[k];
            for i in 0..NQ {
                for j in 0..=i {
                    let v = mass * (b.jac[0][i] * b.jac[0][j] + b.jac[1][i] * b.jac[1][j])
                        + inertia * a[i] * a[j];
                    m[i][j] += v;
                }
                // gravity and velocity-product terms
                f[i] += mass * (b.jac[0][i] * (-b.bias[0]) + b.jac[1][i] * (-cfg.gravity - b.bias[1]));
            }
            if k == 0 && !ext.is_zero() {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += b.jac[0][i] * ext.force[0] + b.jac[1][i] * ext.force[1] + a[i] * ext.torque;
                }
            }
        }
        for i in 0..NQ {
            for j in 0..i {
                m[j][i] = m[i][j];
            }
        }
        for (i, t) in torques.iter().enumerate() {
            f[3 + i] += t;
        }
        (m, f)
    }

    /// Advance one physics step. Torques are clamped to the configured limit.
    pub fn step(
        &mut self,
        cfg: &SimConfig,
        track: &Track,
        torques: &[f64; NJ],
        ext: Option<&Wrench>,
    ) -> Result<Vec<ContactEvent>> {
        if self.q.iter().chain(self.v.iter()).chain(torques.iter()).any(|x| !x.is_finite()) {
            return self.fail();
        }
        let dt = cfg.dt;
        let lim = cfg.torque_limit;
        let tau = torques.map(|t| t.clamp(-lim, lim));
        let ext = ext.copied().unwrap_or_default();

        let kin = Kinematics::new(&self.q, &self.v);
        let (mass, forces) = self.mass_matrix_and_forces(cfg, &kin, &tau, &ext);
        let chol = match Chol::new(&mass) {
            Some(c) => c,
            None => return self.fail(),
        };
        let acc = chol.solve(&forces);
        let mut v: [f64; NQ] = std::array::from_fn(|i| self.v[i] + dt * acc[i]);

        // constraint rows
        let mut rows = Rows::new();
        let mut foot_normal_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for side in [LEFT, RIGHT] {
            let p = kin.point(&self.q, &foot_chain(cfg, side), 0.0);
            let [fx, fz] = p.pos;
            let floor = track.height_at(fx);
            let gap = fz - floor;
            if gap < FLOOR_MARGIN && gap > -0.5 {
                let n = rows.push(Row {
                    j: p.jac[1],
                    bias: -gap.max(0.0) / dt,
                    lo: 0.0,
                    hi: f64::INFINITY,
                    friction_of: None,
                });
                foot_normal_rows[side].push(n);
                rows.push(Row {
                    j: p.jac[0],
                    bias: 0.0,
                    lo: 0.0,
                    hi: 0.0,
                    friction_of: Some(n),
                });
            }
            for e in track.edges_in(fx - WALL_MARGIN, fx + WALL_MARGIN) {
                let high = e.h_left.max(e.h_right);
                if fz >= high {
                    continue;
                }
                // riser faces the lower side; the foot must stay on its side
                let (sign, dist) = if e.h_right > e.h_left && fx <= e.x {
                    (-1.0, e.x - fx)
                } else if e.h_left > e.h_right && fx >= e.x {
                    (1.0, fx - e.x)
                } else {
                    continue;
                };
                let n = rows.push(Row {
                    j: p.jac[0].map(|x| sign * x),
                    bias: -dist.max(0.0) / dt,
                    lo: 0.0,
                    hi: f64::INFINITY,
                    friction_of: None,
                });
                foot_normal_rows[side].push(n);
            }
        }
        for (idx, _) in [(4usize, LEFT), (6usize, RIGHT)] {
            let k = self.q[idx];
            let mut j = [0.0; NQ];
            j[idx] = 1.0;
            if k - cfg.knee_min < 0.05 {
                rows.push(Row {
                    j,
                    bias: -(k - cfg.knee_min).max(0.0) / dt,
                    lo: 0.0,
                    hi: f64::INFINITY,
                    friction_of: None,
                });
            }
            if cfg.knee_max - k < 0.05 {
                rows.push(Row {
                    j: j.map(|x| -x),
                    bias: -(cfg.knee_max - k).max(0.0) / dt,
                    lo: 0.0,
                    hi: f64::INFINITY,
                    friction_of: None,
                });
            }
        }

        let lambda = solve_pgs(&chol, &rows, &mut v, cfg.friction);

        let mut contact = [false; 2];
        for side in [LEFT, RIGHT] {
            contact[side] = foot_normal_rows[side].iter().any(|&r| lambda[r] > 1e-12);
        }

        let prev_q = self.q;
        for i in 0..NQ {
            self.q[i] += dt * v[i];
        }
        self.v = v;
        self.time += dt;
        self.q[4] = self.q[4].clamp(cfg.knee_min, cfg.knee_max);
        self.q[6] = self.q[6].clamp(cfg.knee_min, cfg.knee_max);
        self.project_feet(cfg, track, &prev_q, &chol);

        if self.q.iter().chain(self.v.iter()).any(|x| !x.is_finite()) {
            return self.fail();
        }

        let mut events = Vec::new();
        self.contact_prev = self.contact;
        for side in [LEFT, RIGHT] {
            if contact[side] != self.contact_prev[side] {
                let fx = self.foot_pos(cfg, side)[0];
                events.push(ContactEvent {
                    foot: side,
                    kind: if contact[side] {
                        ContactKind::Touchdown
                    } else {
                        ContactKind::Liftoff
                    },
                    x: fx,
                    time: self.time,
                });
            }
            if contact[side] {
                let fx = self.foot_pos(cfg, side)[0];
                self.support_z = track.height_at(fx);
            }
        }
        self.contact = contact;
        Ok(events)
    }

    fn fail<T>(&mut self) -> Result<T> {
        self.diverged = true;
        Err(Error::SimDiverged { time: self.time })
    }

    /// Remove residual penetration by a mass-weighted configuration change.
    fn project_feet(&mut self, cfg: &SimConfig, track: &Track, prev_q: &[f64; NQ], chol: &Chol) {
        let zero = [0.0; NQ];
        let prev_kin = Kinematics::new(prev_q, &zero);
        for _ in 0..3 {
            let mut moved = false;
            for side in [LEFT, RIGHT] {
                let kin = Kinematics::new(&self.q, &zero);
                let p = kin.point(&self.q, &foot_chain(cfg, side), 0.0);
                let [fx, fz] = p.pos;
                let floor = track.height_at(fx);
                if fz >= floor {
                    continue;
                }
                let prev = prev_kin.point(prev_q, &foot_chain(cfg, side), 0.0).pos;
                // came from above: lift onto the tread; otherwise push back out of the riser
                let (j, depth) = if prev[1] >= floor - 1e-9 {
                    (p.jac[1], floor - fz)
                } else {
                    let edge = track
                        .edges_in(fx.min(prev[0]) - 1e-9, fx.max(prev[0]) + 1e-9)
                        .filter(|e| e.h_left.max(e.h_right) > fz)
                        .min_by(|a, b| (a.x - fx).abs().total_cmp(&(b.x - fx).abs()));
                    match edge {
                        Some(e) if prev[0] < e.x => (p.jac[0].map(|x| -x), fx - e.x),
                        Some(e) => (p.jac[0], e.x - fx),
                        None => (p.jac[1], floor - fz),
                    }
                };
                let w = chol.solve(&j);
                let d = dot(&j, &w);
                if d > 0.0 && depth > 0.0 {
                    let s = depth / d;
                    for i in 0..NQ {
                        self.q[i] += s * w[i];
                    }
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Depth of the deepest foot inside solid terrain (0 when clear).
    pub fn penetration(&self, cfg: &SimConfig, track: &Track) -> f64 {
        [LEFT, RIGHT]
            .iter()
            .map(|&s| penetration_depth(track, self.foot_pos(cfg, s)))
            .fold(0.0, f64::max)
    }

    /// Height of the torso (hip joint) above the reference ground: the
    /// terrain under the hip, or the last support height when the hip is
    /// above a pit.
    pub fn torso_height(&self, track: &Track) -> f64 {
        let under = track.height_at(self.q[0]);
        let reference = if under < self.support_z - 1.0 {
            self.support_z
        } else {
            under
        };
        self.q[1] - reference
    }
}

fn solve_pgs(chol: &Chol, rows: &Rows, v: &mut [f64; NQ], mu: f64) -> [f64; MAX_ROWS] {
    let n = rows.n;
    let mut lambda = [0.0; MAX_ROWS];
    if n == 0 {
        return lambda;
    }
    let mut w = [[0.0; NQ]; MAX_ROWS];
    let mut diag = [0.0; MAX_ROWS];
    for k in 0..n {
        w[k] = chol.solve(&rows.rows[k].j);
        diag[k] = dot(&rows.rows[k].j, &w[k]);
    }
    for _ in 0..200 {
        let mut change = 0.0f64;
        for k in 0..n {
            let r = &rows.rows[k];
            if diag[k] <= 1e-14 {
                continue;
            }
            let (lo, hi) = match r.friction_of {
                Some(nk) => (-mu * lambda[nk], mu * lambda[nk]),
                None => (r.lo, r.hi),
            };
            let residual = dot(&r.j, v) - r.bias;
            let new = (lambda[k] - residual / diag[k]).clamp(lo, hi);
            let d = new - lambda[k];
            if d != 0.0 {
                for i in 0..NQ {
                    v[i] += w[k][i] * d;
                }
                lambda[k] = new;
                change = change.max(d.abs() * diag[k].sqrt());
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    lambda
}

/// Distance a point lies inside the solid terrain, 0 when outside.
pub fn penetration_depth(track: &Track, p: [f64; 2]) -> f64 {
    let [x, z] = p;
    let floor = track.height_at(x);
    if z >= floor {
        return 0.0;
    }
    let vertical = floor - z;
    // horizontal distance to the nearest column whose top is below z
    let horizontal = track
        .edges_in(x - vertical, x + vertical)
        .filter(|e| e.h_left.min(e.h_right) <= z)
        .map(|e| (e.x - x).abs())
        .fold(f64::INFINITY, f64::min);
    vertical.min(horizontal)
}

/// Termination status of an episode.
pub fn check_termination(cfg: &SimConfig, biped: &Biped, track: &Track) -> Termination {
    if biped.diverged {
        return Termination::Fell;
    }
    if biped.torso_height(track) < cfg.fall_height_frac * cfg.leg_length()
        || biped.pitch().abs() > cfg.fall_pitch
    {
        return Termination::Fell;
    }
    for side in [LEFT, RIGHT] {
        let k = biped.knee_pos(cfg, side);
        if k[1] < track.height_at(k[0]) - 0.02 {
            return Termination::Fell;
        }
    }
    let (com, _) = biped.com(cfg);
    if com[0] >= track.goal_x {
        Termination::ReachedGoal
    } else {
        Termination::Running
    }
}

/// True when at least one foot is grounded, the CoM lies over the stance
/// foot's support interval and the feet are within the tolerance of each
/// other.
pub fn com_over_support(cfg: &SimConfig, biped: &Biped) -> bool {
    let (com, _) = biped.com(cfg);
    let feet = [biped.foot_pos(cfg, LEFT), biped.foot_pos(cfg, RIGHT)];
    support_test(
        com[0],
        feet[LEFT][0],
        feet[RIGHT][0],
        biped.contact,
        cfg.foot_half_length,
        cfg.feet_tolerance,
    )
}

/// Geometry behind [`com_over_support`].
pub fn support_test(
    com_x: f64,
    left_x: f64,
    right_x: f64,
    contact: [bool; 2],
    half_len: f64,
    tolerance: f64,
) -> bool {
    if !(contact[LEFT] || contact[RIGHT]) {
        return false;
    }
    if (left_x - right_x).abs() > tolerance {
        return false;
    }
    let over = |fx: f64| (fx - half_len..=fx + half_len).contains(&com_x);
    (contact[LEFT] && over(left_x)) || (contact[RIGHT] && over(right_x))
}

// ---------------------------------------------------------------------------
// observation

/// Proprioceptive entries ahead of the height scan in an observation.
pub const PROPRIO_DIM: usize = 20;
/// Observation length: proprioception followed by the 60-sample scan.
pub const OBS_DIM: usize = PROPRIO_DIM + SCAN_LEN;

/// Policy and estimator input. Flattened layout (version 1):
///
/// | index  | entry                                   |
/// |--------|-----------------------------------------|
/// | 0..4   | joint positions (hip_l, knee_l, hip_r, knee_r) |
/// | 4..8   | joint velocities                        |
/// | 8..11  | contact now: left, right, neither       |
/// | 11..14 | contact at the previous control step    |
/// | 14..16 | CoM velocity (x, z)                     |
/// | 16     | torso pitch rate                        |
/// | 17     | torso pitch                             |
/// | 18     | CoM height above the terrain under it   |
/// | 19     | velocity command (0 stand, 1 walk)      |
/// | 20..80 | height scan                             |
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub joint_pos: [f64; NJ],
    pub joint_vel: [f64; NJ],
    pub contact_now: [bool; 3],
    pub contact_prev: [bool; 3],
    pub com_lin_vel: [f64; 2],
    pub com_ang_vel: f64,
    pub pitch: f64,
    pub com_height: f64,
    pub vel_command: f64,
    pub scan: HeightScan,
}

fn contact_flags(c: [bool; 2]) -> [bool; 3] {
    [c[LEFT], c[RIGHT], !(c[LEFT] || c[RIGHT])]
}

impl RobotState {
    /// `prev_contact` is the foot contact at the previous control step.
    pub fn capture(
        cfg: &SimConfig,
        biped: &Biped,
        track: &Track,
        prev_contact: [bool; 2],
        vel_command: f64,
    ) -> RobotState {
        let (com, com_vel) = biped.com(cfg);
        RobotState {
            joint_pos: biped.joint_pos(),
            joint_vel: biped.joint_vel(),
            contact_now: contact_flags(biped.contact),
            contact_prev: contact_flags(prev_contact),
            com_lin_vel: com_vel,
            com_ang_vel: biped.pitch_rate(),
            pitch: biped.pitch(),
            com_height: com[1] - track.height_at(com[0]),
            vel_command,
            scan: track.height_scan(com[0], com[1]),
        }
    }

    pub fn write_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), OBS_DIM);
        out[0..4].copy_from_slice(&self.joint_pos);
        out[4..8].copy_from_slice(&self.joint_vel);
        for k in 0..3 {
            out[8 + k] = self.contact_now[k] as u8 as f64;
            out[11 + k] = self.contact_prev[k] as u8 as f64;
        }
        out[14..16].copy_from_slice(&self.com_lin_vel);
        out[16] = self.com_ang_vel;
        out[17] = self.pitch;
        out[18] = self.com_height;
        out[19] = self.vel_command;
        out[PROPRIO_DIM..].copy_from_slice(&self.scan.values);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; OBS_DIM];
        self.write_into(&mut v);
        v
    }
}

// ---------------------------------------------------------------------------
// scripted gait, guidance and perturbations

/// Hand-designed periodic joint trajectory shared by all policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedGait {
    pub hip_amplitude: f64,
    pub knee_mean: f64,
    pub knee_amplitude: f64,
    pub frequency: f64,
    /// Forward speed the gait is expected to produce (m/s).
    pub speed: f64,
    /// Joint angles held while the velocity command is 0.
    pub stand_pose: [f64; NJ],
}

impl Default for ScriptedGait {
    fn default() -> Self {
        ScriptedGait {
            hip_amplitude: 0.4,
            knee_mean: 0.6,
            knee_amplitude: 0.4,
            frequency: 1.25,
            speed: 0.8,
            stand_pose: [0.35, 0.3, -0.05, 0.3],
        }
    }
}

impl ScriptedGait {
    /// Target joint positions and velocities `gait_time` seconds after the
    /// walk command was issued (`None` while standing).
    pub fn target(&self, gait_time: Option<f64>) -> ([f64; NJ], [f64; NJ]) {
        let Some(t) = gait_time else {
            return (self.stand_pose, [0.0; NJ]);
        };
        let w = 2.0 * std::f64::consts::PI * self.frequency;
        // phase pi/2: left leg forward, right leg back, as in the stand pose
        let psi = w * t + std::f64::consts::FRAC_PI_2;
        let mut q = [0.0; NJ];
        let mut qd = [0.0; NJ];
        for (leg, off) in [(0usize, 0.0), (1usize, std::f64::consts::PI)] {
            let p = psi + off;
            q[2 * leg] = self.hip_amplitude * p.sin();
            qd[2 * leg] = self.hip_amplitude * w * p.cos();
            q[2 * leg + 1] = self.knee_mean + self.knee_amplitude * p.cos();
            qd[2 * leg + 1] = -self.knee_amplitude * w * p.sin();
        }
        (q, qd)
    }

    /// Expected stance flags (left, right) at the given gait time.
    pub fn stance(&self, gait_time: Option<f64>) -> [bool; 2] {
        let (_, qd) = self.target(gait_time);
        match gait_time {
            None => [true, true],
            Some(_) => [qd[0] <= 0.0, qd[2] <= 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains { kp: 500.0, kd: 40.0 }
    }
}

/// PD torques tracking the scripted gait, scaled by the guidance weight.
pub fn guidance_torque(
    joint_pos: &[f64; NJ],
    joint_vel: &[f64; NJ],
    target: &[f64; NJ],
    gains: PdGains,
    scale: f64,
) -> [f64; NJ] {
    std::array::from_fn(|i| {
        scale * (gains.kp * (target[i] - joint_pos[i]) - gains.kd * joint_vel[i])
    })
}

/// Virtual stabilizing wrench on the torso: keeps it upright, at the nominal
/// height and moving at the commanded speed. Scaled by the guidance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stabilizer {
    pub pitch_kp: f64,
    pub pitch_kd: f64,
    pub speed_k: f64,
    pub height_kp: f64,
    pub height_kd: f64,
}

impl Default for Stabilizer {
    fn default() -> Self {
        Stabilizer {
            pitch_kp: 1500.0,
            pitch_kd: 150.0,
            speed_k: 300.0,
            height_kp: 1500.0,
            height_kd: 150.0,
        }
    }
}

impl Stabilizer {
    pub fn wrench(&self, biped: &Biped, height: f64, target_height: f64, speed: f64, scale: f64) -> Wrench {
        if scale == 0.0 {
            return Wrench::default();
        }
        let lift = (self.height_kp * (target_height - height) - self.height_kd * biped.v[1]).max(0.0);
        Wrench {
            force: [
                scale * self.speed_k * (speed - biped.v[0]),
                scale * lift,
            ],
            torque: scale * (-self.pitch_kp * biped.pitch() - self.pitch_kd * biped.pitch_rate()),
        }
    }
}

/// Draw an impulse for this physics step: with probability `rate * dt` a
/// force and torque of uniformly random magnitude and sign.
pub fn sample_perturbation(
    rng: &mut Rng,
    max_lin: f64,
    max_ang: f64,
    rate: f64,
    dt: f64,
) -> Option<Wrench> {
    let p = (rate * dt).clamp(0.0, 1.0);
    if !rng.random_bool(p) {
        return None;
    }
    let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mag = if max_lin > 0.0 { rng.random_range(0.0..max_lin) } else { 0.0 };
    let torque = if max_ang > 0.0 { rng.random_range(-max_ang..max_ang) } else { 0.0 };
    Some(Wrench {
        force: [mag * dir.cos(), mag * dir.sin()],
        torque,
    })
}
