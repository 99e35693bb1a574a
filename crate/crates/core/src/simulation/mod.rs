//! Closed-loop rollouts, gait events, stride selection and the step-down
//! robustness protocol.

pub mod events;
pub mod protocol;
pub mod system;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::integrator::{Rosenbrock23, SolverStats, Tolerances};
use crate::dynamics::{hip_index, Body, Model, ModelState, Side, Terrain, IX, IY, ITRUNK, NQ};
use crate::error::Result;
use crate::muscle::{MuscleSet, MUSCLES_PER_LEG, N_MUSCLES};
use crate::reflex::{ControlParams, Controller, MuscleScales, ReflexConstants, Sensors};

pub use events::{detect_events, EventKind, GaitEvent};
pub use protocol::{
    count_strides, search_heights, steady_stride, steady_stride_min, step_down_robustness, step_down_robustness_sequential,
    RobustnessOutcome, StepDownConfig, StepDownTrial, StrideWindow,
};
use system::{foot_load, pack, ClosedLoop, Evaluation, IA, ILCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Fell,
    IntegrationFailure,
}

/// One 1 kHz output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    /// Total GRF per foot (left, right), N.
    pub grf: [[f64; 2]; 2],
    /// Center of pressure per foot; `None` while the foot is unloaded.
    pub cop: [Option<[f64; 2]>; 2],
    pub com: [f64; 2],
    pub com_vel: [f64; 2],
    pub stim: [f64; N_MUSCLES],
    pub act: [f64; N_MUSCLES],
    pub muscle_force: [f64; N_MUSCLES],
    pub ce_length: [f64; N_MUSCLES],
}

impl Sample {
    pub fn state(&self) -> ModelState {
        ModelState { t: self.t, q: self.q, qd: self.qd }
    }

    pub fn total_grf(&self) -> [f64; 2] {
        [self.grf[0][0] + self.grf[1][0], self.grf[0][1] + self.grf[1][1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitTrace {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<GaitEvent>,
    pub termination: Termination,
    /// Time of the fall or failure, if any.
    pub end_time: Option<f64>,
    pub terrain: Terrain,
    pub failure: Option<String>,
    pub solver: SolverStats,
}

impl GaitTrace {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Horizontal CoM distance covered.
    pub fn distance(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.com[0] - a.com[0],
            _ => 0.0,
        }
    }

    pub fn sample_index(&self, t: f64) -> usize {
        let t0 = self.samples.first().map_or(0.0, |s| s.t);
        (((t - t0) / self.dt).round().max(0.0) as usize).min(self.samples.len().saturating_sub(1))
    }
}

/// Posture and speed the rollout starts from: touchdown of the left heel with
/// the right foot still on the ground behind. Segment angles are measured
/// from the vertical, forward positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// Forward hip speed, m/s.
    pub speed: f64,
    /// Vertical hip speed, m/s.
    pub vertical_speed: f64,
    pub trunk_lean: f64,
    pub lead_thigh: f64,
    pub lead_knee: f64,
    /// Toe-up pitch of the leading foot.
    pub lead_foot_pitch: f64,
    pub trail_thigh: f64,
    pub trail_knee: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            speed: 1.3,
            vertical_speed: -0.1,
            trunk_lean: 0.1,
            lead_thigh: 0.35,
            lead_knee: -0.05,
            lead_foot_pitch: 0.15,
            trail_thigh: -0.3,
            trail_knee: -0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_max: f64,
    pub tolerances: Tolerances,
    /// Controller and reporting rate, Hz.
    pub sample_rate: f64,
    pub initial: InitialConditions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { t_max: 20.0, tolerances: Tolerances::default(), sample_rate: 1000.0, initial: InitialConditions::default() }
    }
}

/// The model with its muscles, reflex constants and simulation settings.
#[derive(Debug, Clone)]
pub struct Walker {
    pub model: Model,
    pub muscles: MuscleSet,
    pub reflex: ReflexConstants,
    pub sim: SimConfig,
}

/// True iff the trunk pitches beyond ±60° or the CoM drops below 60 % of its
/// standing height above the local ground.
pub fn fall_check(model: &Model, state: &ModelState, terrain: &Terrain) -> bool {
    let (com, _) = model.com_state(state);
    let height = com[1] - terrain.height(com[0]);
    state.q[ITRUNK].abs() > 60f64.to_radians() || height < 0.6 * model.standing_com_height()
}

impl Walker {
    pub fn new(model: Model, muscles: MuscleSet, reflex: ReflexConstants, sim: SimConfig) -> Result<Self> {
        muscles.validate()?;
        Ok(Self { model, muscles, reflex, sim })
    }

    pub fn default_model() -> Result<Self> {
        Self::new(
            Model::build(Default::default())?,
            MuscleSet::default(),
            ReflexConstants::default(),
            SimConfig::default(),
        )
    }

    pub fn scales(&self) -> MuscleScales {
        MuscleScales {
            f_max: std::array::from_fn(|i| self.muscles.leg[i].f_max),
            l_opt: std::array::from_fn(|i| self.muscles.leg[i].l_opt),
            body_weight: self.model.body_weight(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim.sample_rate
    }

    /// Rigid-body part of the initial condition.
    pub fn initial_state(&self) -> ModelState {
        let ic = &self.sim.initial;
        let model = &self.model;
        let foot = model.anthropometry().foot;
        let (l, r) = (hip_index(Side::Left), hip_index(Side::Right));
        let th = ic.trunk_lean;
        let mut s = ModelState::standing();
        s.q[ITRUNK] = th;
        s.q[l] = -ic.lead_thigh - th;
        s.q[l + 1] = ic.lead_knee;
        s.q[l + 2] = -th - s.q[l] + ic.lead_knee - ic.lead_foot_pitch;
        s.q[r] = -ic.trail_thigh - th;
        s.q[r + 1] = ic.trail_knee;
        // static sinkage with the weight shared by the two contact points
        let sink = model.body_weight() / (2.0 * model.contact.stiffness);
        let [(heel, _), _] = model.foot_points(&s, Side::Left);
        s.q[IY] = -heel[1] - sink;
        // trailing ankle such that the ball touches the ground
        let ankle_y = {
            let [(h, _), _] = model.foot_points(&s, Side::Right);
            let g = model.body_angle(&s, Body::Foot(Side::Right)).0;
            h[1] + foot.heel * g.sin()
        };
        let pitch = ((-sink - ankle_y) / foot.ball).clamp(-1.0, 1.0).asin();
        s.q[r + 2] = -th - s.q[r] + ic.trail_knee - pitch;

        s.qd[IX] = ic.speed;
        s.qd[IY] = ic.vertical_speed;
        let lead = hold_point(model, &s, Side::Left, 0, true);
        let trail = hold_point(model, &s, Side::Right, 1, false);
        s.qd[l..l + 3].copy_from_slice(&lead);
        s.qd[r..r + 3].copy_from_slice(&trail);
        s
    }

    fn sensors(&self, ev: &Evaluation, lce: &[f64]) -> Sensors {
        let mut s = Sensors { muscle_force: ev.muscle_force, ..Default::default() };
        s.ce_length.copy_from_slice(lce);
        for side in Side::BOTH {
            let i = side.index();
            let h = hip_index(side);
            s.knee_angle[i] = ev.state.q[h + 1];
            s.knee_rate[i] = ev.state.qd[h + 1];
            s.leg_load[i] = foot_load(&ev.contacts, side).0[1];
        }
        s.trunk_lean = ev.state.q[ITRUNK];
        s.trunk_rate = ev.state.qd[ITRUNK];
        s
    }

    /// Full initial state vector and a primed controller.
    fn initialize(&self, params: &ControlParams, terrain: &Terrain) -> (Vec<f64>, Controller) {
        let state = self.initial_state();
        let mut act = [self.reflex.prestim; N_MUSCLES];
        let mut lce = [0.0; N_MUSCLES];
        for _ in 0..5 {
            for side in Side::BOTH {
                let phi = system::classical_angles(&state, side);
                for (m, p) in self.muscles.leg.iter().enumerate() {
                    let k = side.index() * MUSCLES_PER_LEG + m;
                    let l_mtu = p.mtu_length(phi);
                    lce[k] = p
                        .equilibrium_ce_length(act[k], l_mtu)
                        .unwrap_or_else(|_| (l_mtu - p.l_slack).max(0.5 * p.l_opt));
                }
            }
            let y = pack(&state, &act, &lce);
            let sys = ClosedLoop { model: &self.model, muscles: &self.muscles, terrain, stim: act };
            let ev = sys.evaluate(0.0, &y);
            let sensors = self.sensors(&ev, &lce);
            let mut probe = Controller::new(*params, self.reflex, self.scales(), self.dt());
            probe.prime(&sensors, 0.0, Side::Left);
            act = probe.step(&sensors, 0.0);
        }
        let y = pack(&state, &act, &lce);
        let sys = ClosedLoop { model: &self.model, muscles: &self.muscles, terrain, stim: act };
        let ev = sys.evaluate(0.0, &y);
        let mut ctl = Controller::new(*params, self.reflex, self.scales(), self.dt());
        ctl.prime(&self.sensors(&ev, &lce), 0.0, Side::Left);
        (y, ctl)
    }

    /// Simulates the closed loop on `terrain` until `t_max`, a fall, or an
    /// integration failure. Failures end up in the trace, never as errors.
    pub fn rollout(&self, params: &ControlParams, terrain: &Terrain, t_max: f64) -> GaitTrace {
        let dt = self.dt();
        let (mut y, mut ctl) = self.initialize(params, terrain);
        let mut sys = ClosedLoop { model: &self.model, muscles: &self.muscles, terrain, stim: [0.0; N_MUSCLES] };
        let mut solver = Rosenbrock23::new(self.sim.tolerances);
        let n_ticks = (t_max / dt).round() as usize;
        let mut samples = Vec::with_capacity(n_ticks + 1);
        let mut termination = Termination::Completed;
        let mut end_time = None;
        let mut failure = None;

        for tick in 0..=n_ticks {
            let t = tick as f64 * dt;
            let ev = sys.evaluate(t, &y);
            let sensors = self.sensors(&ev, &y[ILCE..]);
            let stim = ctl.step(&sensors, t);
            samples.push(self.sample(&ev, &y, stim));

            if !y.iter().all(|v| v.is_finite()) {
                termination = Termination::IntegrationFailure;
                failure = Some("non-finite state".to_string());
                end_time = Some(t);
                break;
            }
            if fall_check(&self.model, &ev.state, terrain) {
                termination = Termination::Fell;
                end_time = Some(t);
                break;
            }
            if tick == n_ticks {
                break;
            }
            sys.stim = stim;
            solver.invalidate_rhs();
            let mut tt = t;
            if let Err(e) = solver.advance(&sys, &mut tt, &mut y, (tick + 1) as f64 * dt) {
                termination = Termination::IntegrationFailure;
                failure = Some(e.to_string());
                end_time = Some(tt);
                break;
            }
        }

        let mut trace = GaitTrace {
            dt,
            samples,
            events: Vec::new(),
            termination,
            end_time,
            terrain: terrain.clone(),
            failure,
            solver: solver.stats(),
        };
        trace.events = detect_events(&trace, self.reflex.stance_threshold, self.reflex.stance_hysteresis);
        trace
    }

    fn sample(&self, ev: &Evaluation, y: &[f64], stim: [f64; N_MUSCLES]) -> Sample {
        let (l, lcop) = foot_load(&ev.contacts, Side::Left);
        let (r, rcop) = foot_load(&ev.contacts, Side::Right);
        let (com, com_vel) = self.model.com_state(&ev.state);
        Sample {
            t: ev.state.t,
            q: ev.state.q,
            qd: ev.state.qd,
            grf: [l, r],
            cop: [lcop, rcop],
            com,
            com_vel,
            stim,
            act: std::array::from_fn(|k| y[IA + k]),
            muscle_force: ev.muscle_force,
            ce_length: std::array::from_fn(|k| y[ILCE + k]),
        }
    }
}

/// Joint rates of one leg that bring its heel (`point = 0`) or ball
/// (`point = 1`) to rest, given the trunk and hip velocities in `s`. With
/// `hip_only` just the horizontal velocity is cancelled, by the hip alone;
/// otherwise the minimum-norm rates of all three joints are used.
fn hold_point(model: &Model, s: &ModelState, side: Side, point: usize, hip_only: bool) -> [f64; 3] {
    let h = hip_index(side);
    let base = model.foot_points(s, side)[point].0;
    let eps = 1e-7;
    let mut jac = [[0.0; NQ]; 2];
    for j in 0..NQ {
        let mut sp = *s;
        sp.q[j] += eps;
        let p = model.foot_points(&sp, side)[point].0;
        jac[0][j] = (p[0] - base[0]) / eps;
        jac[1][j] = (p[1] - base[1]) / eps;
    }
    let free = |row: usize| -(0..NQ).filter(|j| !(h..h + 3).contains(j)).map(|j| jac[row][j] * s.qd[j]).sum::<f64>();
    if hip_only {
        return [free(0) / jac[0][h], 0.0, 0.0];
    }
    let a = DMatrix::from_fn(2, 3, |row, c| jac[row][h + c]);
    let b = DVector::from_fn(2, |row, _| free(row));
    let x = a.svd(true, true).solve(&b, 1e-12).expect("svd solve");
    [x[0], x[1], x[2]]
}
