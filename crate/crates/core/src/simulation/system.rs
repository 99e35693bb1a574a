//! The closed-loop ODE: rigid-body states, muscle activations and CE lengths.

use crate::dynamics::integrator::OdeSystem;
use crate::dynamics::{ContactForce, Model, ModelState, Side, Support, Terrain, NQ};
use crate::muscle::{Joint, MuscleSet, MUSCLES_PER_LEG, N_MUSCLES};

pub const IA: usize = 2 * NQ;
pub const ILCE: usize = IA + N_MUSCLES;
pub const NY: usize = ILCE + N_MUSCLES;

/// Classical joint angles `[hip, knee, ankle]` of one leg.
pub fn classical_angles(s: &ModelState, side: Side) -> [f64; 3] {
    let a = s.leg_angles(side);
    [Joint::Hip.classical_angle(a[0]), Joint::Knee.classical_angle(a[1]), Joint::Ankle.classical_angle(a[2])]
}

pub fn unpack(y: &[f64], t: f64) -> ModelState {
    let mut s = ModelState { t, q: [0.0; NQ], qd: [0.0; NQ] };
    s.q.copy_from_slice(&y[..NQ]);
    s.qd.copy_from_slice(&y[NQ..2 * NQ]);
    s
}

pub fn pack(s: &ModelState, act: &[f64; N_MUSCLES], lce: &[f64; N_MUSCLES]) -> Vec<f64> {
    let mut y = Vec::with_capacity(NY);
    y.extend_from_slice(&s.q);
    y.extend_from_slice(&s.qd);
    y.extend_from_slice(act);
    y.extend_from_slice(lce);
    y
}

/// Everything derived from one full state vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: ModelState,
    pub contacts: Vec<ContactForce>,
    pub muscle_force: [f64; N_MUSCLES],
    pub ce_velocity: [f64; N_MUSCLES],
    pub joint_torques: [f64; 6],
}

pub struct ClosedLoop<'a> {
    pub model: &'a Model,
    pub muscles: &'a MuscleSet,
    pub terrain: &'a Terrain,
    pub stim: [f64; N_MUSCLES],
}

impl ClosedLoop<'_> {
    pub fn evaluate(&self, t: f64, y: &[f64]) -> Evaluation {
        let state = unpack(y, t);
        let contacts = self.model.ground_contact(&state, self.terrain);
        let mut joint_torques = self.model.limit_torques(&state);
        let mut muscle_force = [0.0; N_MUSCLES];
        let mut ce_velocity = [0.0; N_MUSCLES];
        for side in Side::BOTH {
            let phi = classical_angles(&state, side);
            let o = side.index() * MUSCLES_PER_LEG;
            let tau = &mut joint_torques[3 * side.index()..3 * side.index() + 3];
            for (m, p) in self.muscles.leg.iter().enumerate() {
                let k = o + m;
                let out = p.dynamics(y[IA + k].clamp(0.0, 1.0), y[ILCE + k], p.mtu_length(phi));
                muscle_force[k] = out.force;
                ce_velocity[k] = out.ce_velocity;
                let r = p.moment_arms(phi);
                for j in 0..3 {
                    tau[j] += r[j] * out.force;
                }
            }
        }
        Evaluation { state, contacts, muscle_force, ce_velocity, joint_torques }
    }
}

impl OdeSystem for ClosedLoop<'_> {
    fn dim(&self) -> usize {
        NY
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let ev = self.evaluate(t, y);
        let qdd = match self.model.forward_dynamics(&ev.state, &ev.joint_torques, &ev.contacts, Support::Free) {
            Ok(a) => a,
            Err(_) => [f64::NAN; NQ],
        };
        dy[..NQ].copy_from_slice(&y[NQ..2 * NQ]);
        dy[NQ..2 * NQ].copy_from_slice(&qdd);
        for (k, p) in (0..N_MUSCLES).map(|k| (k, &self.muscles.leg[k % MUSCLES_PER_LEG])) {
            dy[IA + k] = (self.stim[k] - y[IA + k]) / p.tau;
            dy[ILCE + k] = ev.ce_velocity[k];
        }
    }
}

/// Total GRF and center of pressure of one foot from its contact forces.
/// The CoP is `None` while the foot carries no vertical load.
pub fn foot_load(contacts: &[ContactForce], side: Side) -> ([f64; 2], Option<[f64; 2]>) {
    let mut f = [0.0; 2];
    let mut moment = [0.0; 2];
    for c in contacts.iter().filter(|c| c.side == side) {
        f[0] += c.force[0];
        f[1] += c.force[1];
        moment[0] += c.position[0] * c.force[1];
        moment[1] += c.position[1] * c.force[1];
    }
    let cop = if f[1] > 0.0 { Some([moment[0] / f[1], moment[1] / f[1]]) } else { None };
    (f, cop)
}
