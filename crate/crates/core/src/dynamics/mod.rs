//! Planar seven-segment biped: trunk (head-arms-trunk), two thighs, two shanks
//! and two feet connected by hinge joints.
//!
//! Generalized coordinates (`NQ = 9`):
//!
//! | index | meaning |
//! |-------|---------|
//! | 0, 1  | hip joint position `x`, `y` (m, world frame, `y` up) |
//! | 2     | trunk pitch, positive leaning forward (rad) |
//! | 3, 6  | hip angle left/right, extension positive, 0 with thigh in line with trunk |
//! | 4, 7  | knee angle left/right, extension positive, 0 fully straight (flexion < 0) |
//! | 5, 8  | ankle angle left/right, plantarflexion positive, 0 with foot ⟂ shank |
//!
//! Joint angles are offsets of the classical reflex-model convention: the hip
//! and knee angles there are `π + q`, the ankle angle is `π/2 + q`.

pub mod contact;
pub mod integrator;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contact::{ContactForce, ContactParams, Terrain};

pub const NQ: usize = 9;
pub const GRAVITY: f64 = 9.81;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const ITRUNK: usize = 2;

/// Index of a leg's hip coordinate; knee and ankle follow.
#[inline]
pub const fn hip_index(side: Side) -> usize {
    match side {
        Side::Left => 3,
        Side::Right => 6,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// A link segment: mass, length, distance of its CoM from the proximal joint,
/// and moment of inertia about the CoM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mass: f64,
    pub length: f64,
    pub com: f64,
    pub inertia: f64,
}

/// Foot geometry measured along the heel–ball line from the ankle joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootGeometry {
    pub mass: f64,
    pub inertia: f64,
    /// Heel contact point, distance behind the ankle.
    pub heel: f64,
    /// Ball contact point, distance ahead of the ankle.
    pub ball: f64,
    /// Foot CoM, distance ahead of the ankle.
    pub com: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anthropometry {
    /// Head-arms-trunk; `com` is measured upward from the hip.
    pub trunk: Segment,
    pub thigh: Segment,
    pub shank: Segment,
    pub foot: FootGeometry,
}

impl Default for Anthropometry {
    fn default() -> Self {
        Self {
            trunk: Segment { mass: 53.5, length: 0.8, com: 0.35, inertia: 3.0 },
            thigh: Segment { mass: 8.5, length: 0.5, com: 0.2, inertia: 0.08 },
            shank: Segment { mass: 3.5, length: 0.5, com: 0.2, inertia: 0.05 },
            foot: FootGeometry { mass: 1.25, inertia: 0.005, heel: 0.04, ball: 0.16, com: 0.02 },
        }
    }
}

impl Anthropometry {
    pub fn total_mass(&self) -> f64 {
        self.trunk.mass + 2.0 * (self.thigh.mass + self.shank.mass + self.foot.mass)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidAnthropometry(format!("{name} must be positive, got {v}")))
            }
        };
        for (name, s) in [("trunk", &self.trunk), ("thigh", &self.thigh), ("shank", &self.shank)] {
            check(&format!("{name}.mass"), s.mass)?;
            check(&format!("{name}.length"), s.length)?;
            check(&format!("{name}.inertia"), s.inertia)?;
            if !(s.com.is_finite() && s.com >= 0.0 && s.com <= s.length) {
                return Err(Error::InvalidAnthropometry(format!(
                    "{name}.com must lie on the segment, got {}",
                    s.com
                )));
            }
        }
        check("foot.mass", self.foot.mass)?;
        check("foot.inertia", self.foot.inertia)?;
        check("foot.heel", self.foot.heel)?;
        check("foot.ball", self.foot.ball)?;
        if !self.foot.com.is_finite() || self.foot.com < -self.foot.heel || self.foot.com > self.foot.ball {
            return Err(Error::InvalidAnthropometry("foot.com must lie between heel and ball".into()));
        }
        Ok(())
    }
}

/// Soft exponential joint-limit torques.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// Maximum knee angle (hyperextension stop), rad.
    pub knee_max: f64,
    pub ankle_min: f64,
    pub ankle_max: f64,
    /// Initial stiffness of the limit torque, N·m/rad.
    pub stiffness: f64,
    /// Exponential length scale, rad.
    pub scale: f64,
    /// Angular speed normalizing the velocity-dependent damping, rad/s.
    pub damping_speed: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            knee_max: -5.0 * deg,
            ankle_min: -20.0 * deg,
            ankle_max: 40.0 * deg,
            stiffness: 0.3 / deg,
            scale: 5.0 * deg,
            damping_speed: 1.0 * deg,
        }
    }
}

impl JointLimits {
    /// Torque resisting penetration `depth > 0` beyond a stop while moving
    /// deeper at `depth_rate`.
    fn stop_torque(&self, depth: f64, depth_rate: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        let elastic = self.stiffness * self.scale * (depth / self.scale).exp_m1();
        (elastic * (1.0 + depth_rate / self.damping_speed)).max(0.0)
    }

    /// Limit torques for one leg's (hip, knee, ankle).
    pub fn torques(&self, angles: [f64; 3], rates: [f64; 3]) -> [f64; 3] {
        let knee = -self.stop_torque(angles[1] - self.knee_max, rates[1]);
        let ankle = self.stop_torque(self.ankle_min - angles[2], -rates[2])
            - self.stop_torque(angles[2] - self.ankle_max, rates[2]);
        [0.0, knee, ankle]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub t: f64,
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
}

impl ModelState {
    pub fn standing() -> Self {
        Self { t: 0.0, q: [0.0; NQ], qd: [0.0; NQ] }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }

    pub fn leg_angles(&self, side: Side) -> [f64; 3] {
        let i = hip_index(side);
        [self.q[i], self.q[i + 1], self.q[i + 2]]
    }

    pub fn leg_rates(&self, side: Side) -> [f64; 3] {
        let i = hip_index(side);
        [self.qd[i], self.qd[i + 1], self.qd[i + 2]]
    }

    /// Swaps the left and right leg coordinates.
    pub fn mirrored(&self) -> Self {
        let mut m = *self;
        for k in 0..3 {
            m.q.swap(3 + k, 6 + k);
            m.qd.swap(3 + k, 6 + k);
        }
        m
    }
}

/// Body segments in the order their orientations are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    Trunk,
    Thigh(Side),
    Shank(Side),
    Foot(Side),
}

impl Body {
    pub const ALL: [Body; 7] = [
        Body::Trunk,
        Body::Thigh(Side::Left),
        Body::Shank(Side::Left),
        Body::Foot(Side::Left),
        Body::Thigh(Side::Right),
        Body::Shank(Side::Right),
        Body::Foot(Side::Right),
    ];

    pub fn index(self) -> usize {
        match self {
            Body::Trunk => 0,
            Body::Thigh(s) => 1 + 3 * s.index(),
            Body::Shank(s) => 2 + 3 * s.index(),
            Body::Foot(s) => 3 + 3 * s.index(),
        }
    }
}

const NB: usize = 7;

/// A material point expressed as `hip + Σ c·e(γ_body)`, where `e(γ)` is the unit
/// vector of a body's axis direction.
#[derive(Debug, Clone, Copy)]
struct BodyPoint {
    terms: [(usize, f64); 3],
    len: usize,
}

impl BodyPoint {
    fn new(terms: &[(Body, f64)]) -> Self {
        let mut t = [(0, 0.0); 3];
        for (slot, (b, c)) in t.iter_mut().zip(terms) {
            *slot = (b.index(), *c);
        }
        Self { terms: t, len: terms.len() }
    }

    fn terms(&self) -> &[(usize, f64)] {
        &self.terms[..self.len]
    }
}

/// Landmarks of one leg.
#[derive(Debug, Clone, Copy)]
struct LegPoints {
    knee: BodyPoint,
    ankle: BodyPoint,
    heel: BodyPoint,
    ball: BodyPoint,
}

/// Evaluated orientations of every body for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    hip: [f64; 2],
    hip_vel: [f64; 2],
    cos: [f64; NB],
    sin: [f64; NB],
    rate: [f64; NB],
}

/// Position, velocity, Jacobian and velocity-product acceleration of a point.
#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub jac: [[f64; NQ]; 2],
    pub bias: [f64; 2],
}

/// The built, immutable biped model.
#[derive(Debug, Clone)]
pub struct Model {
    anthro: Anthropometry,
    pub contact: ContactParams,
    pub limits: JointLimits,
    pub gravity: f64,
    /// Orientation map `γ = γ0 + A q`.
    gamma0: [f64; NB],
    a: [[f64; NQ]; NB],
    com_points: [BodyPoint; NB],
    masses: [f64; NB],
    inertias: [f64; NB],
    legs: [LegPoints; 2],
    standing_com_height: f64,
}

/// Where the model is attached to the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Free,
    /// Hip joint fixed in space; only the seven joint/trunk angles move.
    PinnedHip,
}

impl Model {
    pub fn build(anthro: Anthropometry) -> Result<Self> {
        Self::with_params(anthro, ContactParams::default(), JointLimits::default())
    }

    pub fn with_params(anthro: Anthropometry, contact: ContactParams, limits: JointLimits) -> Result<Self> {
        anthro.validate()?;
        contact.validate()?;
        use std::f64::consts::FRAC_PI_2;

        let mut a = [[0.0; NQ]; NB];
        let mut gamma0 = [0.0; NB];
        a[Body::Trunk.index()][ITRUNK] = -1.0;
        gamma0[Body::Trunk.index()] = FRAC_PI_2;
        for side in Side::BOTH {
            let h = hip_index(side);
            let th = Body::Thigh(side).index();
            let sh = Body::Shank(side).index();
            let ft = Body::Foot(side).index();
            for (b, g0) in [(th, -FRAC_PI_2), (sh, -FRAC_PI_2), (ft, 0.0)] {
                a[b][ITRUNK] = -1.0;
                a[b][h] = -1.0;
                gamma0[b] = g0;
            }
            a[sh][h + 1] = 1.0;
            a[ft][h + 1] = 1.0;
            a[ft][h + 2] = -1.0;
        }

        let (t, th, sh, f) = (anthro.trunk, anthro.thigh, anthro.shank, anthro.foot);
        let leg_points = |side: Side| {
            let (bt, bs, bf) = (Body::Thigh(side), Body::Shank(side), Body::Foot(side));
            LegPoints {
                knee: BodyPoint::new(&[(bt, th.length)]),
                ankle: BodyPoint::new(&[(bt, th.length), (bs, sh.length)]),
                heel: BodyPoint::new(&[(bt, th.length), (bs, sh.length), (bf, -f.heel)]),
                ball: BodyPoint::new(&[(bt, th.length), (bs, sh.length), (bf, f.ball)]),
            }
        };
        let mut com_points = [BodyPoint::new(&[(Body::Trunk, t.com)]); NB];
        let mut masses = [t.mass; NB];
        let mut inertias = [t.inertia; NB];
        for side in Side::BOTH {
            let (bt, bs, bf) = (Body::Thigh(side), Body::Shank(side), Body::Foot(side));
            com_points[bt.index()] = BodyPoint::new(&[(bt, th.com)]);
            com_points[bs.index()] = BodyPoint::new(&[(bt, th.length), (bs, sh.com)]);
            com_points[bf.index()] = BodyPoint::new(&[(bt, th.length), (bs, sh.length), (bf, f.com)]);
            masses[bt.index()] = th.mass;
            masses[bs.index()] = sh.mass;
            masses[bf.index()] = f.mass;
            inertias[bt.index()] = th.inertia;
            inertias[bs.index()] = sh.inertia;
            inertias[bf.index()] = f.inertia;
        }

        let mut model = Self {
            anthro,
            contact,
            limits,
            gravity: GRAVITY,
            gamma0,
            a,
            com_points,
            masses,
            inertias,
            legs: [leg_points(Side::Left), leg_points(Side::Right)],
            standing_com_height: 0.0,
        };
        let stand = model.standing_state();
        let (com, _) = model.com_state(&stand);
        model.standing_com_height = com[1];
        Ok(model)
    }

    pub fn anthropometry(&self) -> &Anthropometry {
        &self.anthro
    }

    pub fn total_mass(&self) -> f64 {
        self.anthro.total_mass()
    }

    pub fn body_weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    /// Upright reference pose with both feet flat on `y = 0`.
    pub fn standing_state(&self) -> ModelState {
        let mut s = ModelState::standing();
        s.q[IY] = self.anthro.thigh.length + self.anthro.shank.length;
        s
    }

    /// CoM height above the feet in the standing reference pose.
    pub fn standing_com_height(&self) -> f64 {
        self.standing_com_height
    }

    pub fn kinematics(&self, s: &ModelState) -> Kinematics {
        let mut k = Kinematics {
            hip: [s.q[IX], s.q[IY]],
            hip_vel: [s.qd[IX], s.qd[IY]],
            cos: [0.0; NB],
            sin: [0.0; NB],
            rate: [0.0; NB],
        };
        for b in 0..NB {
            let mut g = self.gamma0[b];
            let mut r = 0.0;
            for j in 2..NQ {
                let aj = self.a[b][j];
                if aj != 0.0 {
                    g += aj * s.q[j];
                    r += aj * s.qd[j];
                }
            }
            let (sn, cs) = g.sin_cos();
            k.sin[b] = sn;
            k.cos[b] = cs;
            k.rate[b] = r;
        }
        k
    }

    /// World-frame orientation of a body's axis and its angular velocity (CCW).
    pub fn body_angle(&self, s: &ModelState, body: Body) -> (f64, f64) {
        let b = body.index();
        let mut g = self.gamma0[b];
        let mut r = 0.0;
        for j in 2..NQ {
            g += self.a[b][j] * s.q[j];
            r += self.a[b][j] * s.qd[j];
        }
        (g, r)
    }

    fn point_state(&self, k: &Kinematics, p: &BodyPoint) -> PointState {
        let mut ps = PointState {
            pos: k.hip,
            vel: k.hip_vel,
            jac: [[0.0; NQ]; 2],
            bias: [0.0; 2],
        };
        ps.jac[0][IX] = 1.0;
        ps.jac[1][IY] = 1.0;
        for &(b, c) in p.terms() {
            let (cs, sn, w) = (k.cos[b], k.sin[b], k.rate[b]);
            ps.pos[0] += c * cs;
            ps.pos[1] += c * sn;
            ps.vel[0] -= c * sn * w;
            ps.vel[1] += c * cs * w;
            ps.bias[0] -= c * cs * w * w;
            ps.bias[1] -= c * sn * w * w;
            for j in 2..NQ {
                let aj = self.a[b][j];
                if aj != 0.0 {
                    ps.jac[0][j] -= c * sn * aj;
                    ps.jac[1][j] += c * cs * aj;
                }
            }
        }
        ps
    }

    fn point_position(&self, k: &Kinematics, p: &BodyPoint) -> ([f64; 2], [f64; 2]) {
        let mut pos = k.hip;
        let mut vel = k.hip_vel;
        for &(b, c) in p.terms() {
            pos[0] += c * k.cos[b];
            pos[1] += c * k.sin[b];
            vel[0] -= c * k.sin[b] * k.rate[b];
            vel[1] += c * k.cos[b] * k.rate[b];
        }
        (pos, vel)
    }

    /// Heel and ball contact points of one foot: (heel, ball) positions and velocities.
    pub fn foot_points(&self, s: &ModelState, side: Side) -> [([f64; 2], [f64; 2]); 2] {
        let k = self.kinematics(s);
        self.foot_points_k(&k, side)
    }

    fn foot_points_k(&self, k: &Kinematics, side: Side) -> [([f64; 2], [f64; 2]); 2] {
        let leg = &self.legs[side.index()];
        [self.point_position(k, &leg.heel), self.point_position(k, &leg.ball)]
    }

    /// Positions of the hip, knee, ankle, heel and ball of one leg plus the
    /// trunk top, for drawing.
    pub fn skeleton(&self, s: &ModelState) -> Skeleton {
        let k = self.kinematics(s);
        let top = BodyPoint::new(&[(Body::Trunk, self.anthro.trunk.length)]);
        let leg = |side: Side| {
            let l = &self.legs[side.index()];
            [
                self.point_position(&k, &l.knee).0,
                self.point_position(&k, &l.ankle).0,
                self.point_position(&k, &l.heel).0,
                self.point_position(&k, &l.ball).0,
            ]
        };
        Skeleton {
            hip: k.hip,
            head: self.point_position(&k, &top).0,
            legs: [leg(Side::Left), leg(Side::Right)],
        }
    }

    /// Whole-body CoM position and velocity.
    pub fn com_state(&self, s: &ModelState) -> ([f64; 2], [f64; 2]) {
        let k = self.kinematics(s);
        self.com_state_k(&k)
    }

    fn com_state_k(&self, k: &Kinematics) -> ([f64; 2], [f64; 2]) {
        let mut pos = [0.0; 2];
        let mut vel = [0.0; 2];
        let mut m_tot = 0.0;
        for b in 0..NB {
            let (p, v) = self.point_position(k, &self.com_points[b]);
            let m = self.masses[b];
            for i in 0..2 {
                pos[i] += m * p[i];
                vel[i] += m * v[i];
            }
            m_tot += m;
        }
        for i in 0..2 {
            pos[i] /= m_tot;
            vel[i] /= m_tot;
        }
        (pos, vel)
    }

    /// Positions of every segment CoM together with their masses.
    pub fn segment_coms(&self, s: &ModelState) -> [([f64; 2], f64); NB] {
        let k = self.kinematics(s);
        let mut out = [([0.0; 2], 0.0); NB];
        for b in 0..NB {
            out[b] = (self.point_position(&k, &self.com_points[b]).0, self.masses[b]);
        }
        out
    }

    pub fn mass_matrix(&self, s: &ModelState) -> SMatrix<f64, NQ, NQ> {
        let k = self.kinematics(s);
        let mut m = SMatrix::<f64, NQ, NQ>::zeros();
        for b in 0..NB {
            let ps = self.point_state(&k, &self.com_points[b]);
            accumulate_mass(&mut m, self.masses[b], &ps.jac, self.inertias[b], &self.a[b]);
        }
        m
    }

    /// Kinetic plus gravitational potential energy (potential zero at `y = 0`).
    pub fn mechanical_energy(&self, s: &ModelState) -> f64 {
        let k = self.kinematics(s);
        let mut e = 0.0;
        for b in 0..NB {
            let (p, v) = self.point_position(&k, &self.com_points[b]);
            let m = self.masses[b];
            e += 0.5 * m * (v[0] * v[0] + v[1] * v[1]);
            e += 0.5 * self.inertias[b] * k.rate[b] * k.rate[b];
            e += m * self.gravity * p[1];
        }
        e
    }

    /// Generalized accelerations for given joint torques (generalized forces on
    /// coordinates 3..9) and external point forces.
    pub fn forward_dynamics(
        &self,
        s: &ModelState,
        joint_torques: &[f64; 6],
        contacts: &[ContactForce],
        support: Support,
    ) -> Result<[f64; NQ]> {
        let k = self.kinematics(s);
        let mut m = SMatrix::<f64, NQ, NQ>::zeros();
        let mut rhs = SVector::<f64, NQ>::zeros();
        for b in 0..NB {
            let ps = self.point_state(&k, &self.com_points[b]);
            let mass = self.masses[b];
            accumulate_mass(&mut m, mass, &ps.jac, self.inertias[b], &self.a[b]);
            // gravity minus velocity-product inertial terms
            let f = [-mass * ps.bias[0], -mass * (self.gravity + ps.bias[1])];
            for j in 0..NQ {
                rhs[j] += ps.jac[0][j] * f[0] + ps.jac[1][j] * f[1];
            }
        }
        for (j, tau) in joint_torques.iter().enumerate() {
            rhs[3 + j] += tau;
        }
        for c in contacts {
            let jac = self.jacobian_at(&k, c);
            for j in 0..NQ {
                rhs[j] += jac[0][j] * c.force[0] + jac[1][j] * c.force[1];
            }
        }
        match support {
            Support::Free => {
                let chol = m.cholesky().ok_or(Error::SingularMassMatrix)?;
                let qdd = chol.solve(&rhs);
                Ok(qdd.into())
            }
            Support::PinnedHip => {
                let sub = m.fixed_view::<7, 7>(2, 2).into_owned();
                let r = rhs.fixed_rows::<7>(2).into_owned();
                let chol = sub.cholesky().ok_or(Error::SingularMassMatrix)?;
                let x = chol.solve(&r);
                let mut out = [0.0; NQ];
                out[2..].copy_from_slice(x.as_slice());
                Ok(out)
            }
        }
    }

    fn jacobian_at(&self, k: &Kinematics, c: &ContactForce) -> [[f64; NQ]; 2] {
        let leg = &self.legs[c.side.index()];
        let p = match c.point {
            contact::ContactPoint::Heel => &leg.heel,
            contact::ContactPoint::Ball => &leg.ball,
        };
        self.point_state(k, p).jac
    }

    /// Joint-limit torques for both legs, ordered like `forward_dynamics` input.
    pub fn limit_torques(&self, s: &ModelState) -> [f64; 6] {
        let l = self.limits.torques(s.leg_angles(Side::Left), s.leg_rates(Side::Left));
        let r = self.limits.torques(s.leg_angles(Side::Right), s.leg_rates(Side::Right));
        [l[0], l[1], l[2], r[0], r[1], r[2]]
    }

    /// Contact forces at the four foot points.
    pub fn ground_contact(&self, s: &ModelState, terrain: &Terrain) -> Vec<ContactForce> {
        let k = self.kinematics(s);
        self.ground_contact_k(&k, terrain)
    }

    fn ground_contact_k(&self, k: &Kinematics, terrain: &Terrain) -> Vec<ContactForce> {
        let mut out = Vec::with_capacity(4);
        for side in Side::BOTH {
            let pts = self.foot_points_k(k, side);
            for (pt, (pos, vel)) in [contact::ContactPoint::Heel, contact::ContactPoint::Ball].into_iter().zip(pts) {
                out.push(ContactForce {
                    side,
                    point: pt,
                    position: pos,
                    force: self.contact.force(pos, vel, terrain),
                });
            }
        }
        out
    }
}

/// Drawing landmarks: per leg `[knee, ankle, heel, ball]`.
#[derive(Debug, Clone, Copy)]
pub struct Skeleton {
    pub hip: [f64; 2],
    pub head: [f64; 2],
    pub legs: [[[f64; 2]; 4]; 2],
}

fn accumulate_mass(m: &mut SMatrix<f64, NQ, NQ>, mass: f64, jac: &[[f64; NQ]; 2], inertia: f64, a: &[f64; NQ]) {
    for i in 0..NQ {
        for j in i..NQ {
            let v = mass * (jac[0][i] * jac[0][j] + jac[1][i] * jac[1][j]) + inertia * a[i] * a[j];
            if v != 0.0 {
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::build(Anthropometry::default()).unwrap()
    }

    #[test]
    fn default_mass_is_80_kg() {
        assert!((Anthropometry::default().total_mass() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let mut a = Anthropometry::default();
        a.thigh.mass = 0.0;
        assert!(Model::build(a).is_err());
        let mut a = Anthropometry::default();
        a.shank.length = -0.1;
        assert!(Model::build(a).is_err());
        let mut a = Anthropometry::default();
        a.foot.inertia = 0.0;
        assert!(Model::build(a).is_err());
    }

    #[test]
    fn standing_com_matches_weighted_sum() {
        let m = model();
        let a = Anthropometry::default();
        // hand-placed segment CoMs for the upright pose with the hip at 1.0 m
        let hip = a.thigh.length + a.shank.length;
        let parts = [
            (a.trunk.mass, 0.0, hip + a.trunk.com),
            (2.0 * a.thigh.mass, 0.0, hip - a.thigh.com),
            (2.0 * a.shank.mass, 0.0, hip - a.thigh.length - a.shank.com),
            (2.0 * a.foot.mass, a.foot.com, 0.0),
        ];
        let mt: f64 = parts.iter().map(|p| p.0).sum();
        let x: f64 = parts.iter().map(|p| p.0 * p.1).sum::<f64>() / mt;
        let y: f64 = parts.iter().map(|p| p.0 * p.2).sum::<f64>() / mt;
        let (com, vel) = m.com_state(&m.standing_state());
        assert!((com[0] - x).abs() < 1e-12);
        assert!((com[1] - y).abs() < 1e-12);
        assert_eq!(vel, [0.0, 0.0]);
        assert!((y - 87.925 / 80.0).abs() < 1e-12);
    }

    #[test]
    fn com_translates_with_state() {
        let m = model();
        let mut s = m.standing_state();
        s.q[ITRUNK] = 0.1;
        s.q[4] = -0.4;
        let (c0, _) = m.com_state(&s);
        s.q[IX] += 1.25;
        let (c1, _) = m.com_state(&s);
        assert!((c1[0] - c0[0] - 1.25).abs() < 1e-12);
        assert_eq!(c1[1], c0[1]);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let m = model();
        let mut s = m.standing_state();
        for (i, v) in [0.3, -0.2, 0.5, -0.7, 0.1, -0.4, -1.1, 0.3].iter().enumerate() {
            s.q[2 + i % 7] += v;
        }
        let mm = m.mass_matrix(&s);
        assert!((mm - mm.transpose()).norm() < 1e-12);
        assert!(mm.cholesky().is_some());
    }

    #[test]
    fn free_fall_com_acceleration_is_gravity() {
        let m = model();
        let mut s = m.standing_state();
        s.q[IY] += 0.5;
        s.q[ITRUNK] = 0.2;
        s.q[3] = -0.3;
        s.q[7] = -0.6;
        s.qd[ITRUNK] = 1.0;
        s.qd[4] = -2.0;
        let qdd = m.forward_dynamics(&s, &[0.0; 6], &[], Support::Free).unwrap();
        // CoM acceleration = Σ m (J qdd + bias) / M
        let k = m.kinematics(&s);
        let mut acc = [0.0; 2];
        for b in 0..NB {
            let ps = m.point_state(&k, &m.com_points[b]);
            for i in 0..2 {
                let mut a = ps.bias[i];
                for j in 0..NQ {
                    a += ps.jac[i][j] * qdd[j];
                }
                acc[i] += m.masses[b] * a;
            }
        }
        let mt = m.total_mass();
        assert!((acc[0] / mt).abs() < 1e-10);
        assert!((acc[1] / mt + GRAVITY).abs() < 1e-10);
    }

    #[test]
    fn pinned_equilibrium_has_zero_acceleration() {
        let m = model();
        let mut s = m.standing_state();
        // feet hanging so each foot CoM lies below its ankle
        s.q[5] = std::f64::consts::FRAC_PI_2;
        s.q[8] = std::f64::consts::FRAC_PI_2;
        let qdd = m.forward_dynamics(&s, &[0.0; 6], &[], Support::PinnedHip).unwrap();
        for v in qdd {
            assert!(v.abs() < 1e-12, "{qdd:?}");
        }
    }

    #[test]
    fn mirrored_state_swaps_legs() {
        let mut s = ModelState::standing();
        s.q[3] = 0.1;
        s.q[8] = 0.2;
        let m = s.mirrored();
        assert_eq!(m.q[6], 0.1);
        assert_eq!(m.q[5], 0.2);
    }
}
