//! Phase-gated reflex control of the fourteen muscles.
//!
//! Stance legs use positive force feedback in the ankle and knee extensors,
//! length feedback in the tibialis anterior, and a trunk PD balance term
//! distributed to the hip muscles in proportion to leg load. Swing legs are
//! driven by hip-flexor length feedback, hip-extensor force feedback for leg
//! retraction and tibialis length feedback for foot clearance.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::muscle::{MuscleId, MUSCLES_PER_LEG, N_MUSCLES};

pub const N_PARAMS: usize = 12;

/// The twelve optimized reflex parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Soleus positive force feedback gain (per F_max).
    pub sol_force_gain: f64,
    /// Gastrocnemius positive force feedback gain (per F_max).
    pub gas_force_gain: f64,
    /// Vasti positive force feedback gain (per F_max).
    pub vas_force_gain: f64,
    /// Tibialis anterior length feedback gain (per l_opt).
    pub ta_length_gain: f64,
    /// Hip flexor swing length feedback gain (per l_opt).
    pub hfl_length_gain: f64,
    /// Hamstrings swing force feedback gain (per F_max).
    pub ham_swing_gain: f64,
    /// Gluteus swing force feedback gain (per F_max).
    pub glu_swing_gain: f64,
    /// Hip flexor swing gain on trunk lean at take-off (per rad).
    pub hfl_lean_gain: f64,
    /// Trunk reference lean angle (rad, forward positive).
    pub trunk_ref_lean: f64,
    /// Trunk balance proportional gain (per rad).
    pub trunk_kp: f64,
    /// Trunk balance derivative gain (s/rad).
    pub trunk_kd: f64,
    /// Swing-initiation stimulation shift of the trailing leg in double support.
    pub swing_init: f64,
}

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "sol_force_gain",
    "gas_force_gain",
    "vas_force_gain",
    "ta_length_gain",
    "hfl_length_gain",
    "ham_swing_gain",
    "glu_swing_gain",
    "hfl_lean_gain",
    "trunk_ref_lean",
    "trunk_kp",
    "trunk_kd",
    "swing_init",
];

/// The default gait: gains calibrated so that this model walks steadily at
/// about 1.26 m/s with 0.85 m steps. The reference model's original gains are
/// kept as [`ControlParams::published`].
impl Default for ControlParams {
    fn default() -> Self {
        Self {
            sol_force_gain: 1.4662716082557714,
            gas_force_gain: 0.7899918257740647,
            vas_force_gain: 2.136981951547485,
            ta_length_gain: 0.31121591909587504,
            hfl_length_gain: 0.42074808999291413,
            ham_swing_gain: 0.6007758473342093,
            glu_swing_gain: 0.3665355110152014,
            hfl_lean_gain: 2.170708179687094,
            trunk_ref_lean: 0.1784590646344947,
            trunk_kp: 3.778583360509021,
            trunk_kd: 0.3349740250395875,
            swing_init: 0.4908207117695724,
        }
    }
}

impl ControlParams {
    /// Published reflex gains of the reference walking model.
    pub fn published() -> Self {
        Self {
            sol_force_gain: 1.2,
            gas_force_gain: 1.1,
            vas_force_gain: 1.15,
            ta_length_gain: 1.1,
            hfl_length_gain: 0.35,
            ham_swing_gain: 0.65,
            glu_swing_gain: 0.4,
            hfl_lean_gain: 1.15,
            trunk_ref_lean: 0.105,
            trunk_kp: 1.91,
            trunk_kd: 0.2,
            swing_init: 0.25,
        }
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [
            self.sol_force_gain,
            self.gas_force_gain,
            self.vas_force_gain,
            self.ta_length_gain,
            self.hfl_length_gain,
            self.ham_swing_gain,
            self.glu_swing_gain,
            self.hfl_lean_gain,
            self.trunk_ref_lean,
            self.trunk_kp,
            self.trunk_kd,
            self.swing_init,
        ]
    }

    pub fn from_array(v: [f64; N_PARAMS]) -> Self {
        Self {
            sol_force_gain: v[0],
            gas_force_gain: v[1],
            vas_force_gain: v[2],
            ta_length_gain: v[3],
            hfl_length_gain: v[4],
            ham_swing_gain: v[5],
            glu_swing_gain: v[6],
            hfl_lean_gain: v[7],
            trunk_ref_lean: v[8],
            trunk_kp: v[9],
            trunk_kd: v[10],
            swing_init: v[11],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_PARAMS] =
            v.try_into().map_err(|_| Error::WrongCount { expected: N_PARAMS, got: v.len() })?;
        Ok(Self::from_array(arr))
    }
}

/// Per-parameter lower/upper bounds of the search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; N_PARAMS],
    pub upper: [f64; N_PARAMS],
}

impl ParamBounds {
    /// `[0, 2·p]` per coordinate, which puts `p` at the box center.
    pub fn around(p: &ControlParams) -> Self {
        let v = p.to_array();
        Self { lower: [0.0; N_PARAMS], upper: v.map(|x| 2.0 * x) }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..N_PARAMS {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite() && self.lower[i] < self.upper[i]) {
                return Err(Error::Config(format!("bounds of {} are invalid", PARAM_NAMES[i])));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &ControlParams) -> bool {
        p.to_array().iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    /// Affine map into `[0, 1]^12`.
    pub fn encode(&self, p: &ControlParams) -> [f64; N_PARAMS] {
        let v = p.to_array();
        std::array::from_fn(|i| (v[i] - self.lower[i]) / (self.upper[i] - self.lower[i]))
    }

    /// Inverse of [`Self::encode`]. Coordinates outside `[0, 1]` are clamped;
    /// the flag reports whether that happened.
    pub fn decode(&self, x: &[f64; N_PARAMS]) -> (ControlParams, bool) {
        let mut clamped = false;
        let v = std::array::from_fn(|i| {
            let xi = if x[i].is_nan() { 0.5 } else { x[i] };
            let c = xi.clamp(0.0, 1.0);
            clamped |= c != x[i];
            self.lower[i] + c * (self.upper[i] - self.lower[i])
        });
        (ControlParams::from_array(v), clamped)
    }

    pub fn lower_params(&self) -> ControlParams {
        ControlParams::from_array(self.lower)
    }
}

/// Reflex constants that are not optimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflexConstants {
    /// Baseline pre-stimulation of every muscle.
    pub prestim: f64,
    /// Floor of every stimulation; inhibition cannot push a muscle below it.
    pub min_stim: f64,
    /// Baseline of the stance-phase hip muscles.
    pub prestim_hip_stance: f64,
    /// Tibialis length-feedback offset (per l_opt).
    pub ta_length_offset: f64,
    /// Soleus-on-tibialis inhibition gain (per soleus F_max).
    pub sol_ta_gain: f64,
    /// Knee overextension inhibition of the vasti (per rad).
    pub knee_brake_gain: f64,
    /// Knee angle (offset convention) above which the inhibition acts.
    pub knee_brake_angle: f64,
    /// Vasti inhibition by contralateral load in double support (per body weight).
    pub vas_unload_gain: f64,
    pub hfl_length_offset: f64,
    /// Hamstring-on-hip-flexor swing inhibition gain (per l_opt).
    pub ham_hfl_gain: f64,
    pub ham_length_offset: f64,
    /// Transmission delays of hip, knee and ankle pathways, s.
    pub delay_hip: f64,
    pub delay_knee: f64,
    pub delay_ankle: f64,
    /// Vertical leg load marking stance onset, N.
    pub stance_threshold: f64,
    /// Width of the hysteresis band below the threshold, N.
    pub stance_hysteresis: f64,
}

impl Default for ReflexConstants {
    fn default() -> Self {
        Self {
            prestim: 0.01,
            min_stim: 0.01,
            prestim_hip_stance: 0.05,
            ta_length_offset: 0.71,
            sol_ta_gain: 0.3,
            knee_brake_gain: 2.0,
            knee_brake_angle: -10.0_f64.to_radians(),
            vas_unload_gain: 1.2,
            hfl_length_offset: 0.6,
            ham_hfl_gain: 4.0,
            ham_length_offset: 0.85,
            delay_hip: 0.005,
            delay_knee: 0.010,
            delay_ankle: 0.020,
            stance_threshold: 20.0,
            stance_hysteresis: 5.0,
        }
    }
}

impl ReflexConstants {
    /// Same baselines and timing with every feedback gain set to zero.
    pub fn without_feedback(&self) -> Self {
        Self { sol_ta_gain: 0.0, knee_brake_gain: 0.0, vas_unload_gain: 0.0, ham_hfl_gain: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Stance,
    Swing,
}

/// Stance/swing detection on vertical leg load with a hysteresis band:
/// stance starts above `threshold`, ends below `threshold - hysteresis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDetector {
    pub threshold: f64,
    pub hysteresis: f64,
    phase: Phase,
}

impl PhaseDetector {
    pub fn new(threshold: f64, hysteresis: f64) -> Self {
        Self { threshold, hysteresis, phase: Phase::Swing }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Feeds one load sample; returns the new phase if it changed.
    pub fn update(&mut self, vertical_load: f64) -> Option<Phase> {
        let next = match self.phase {
            Phase::Swing if vertical_load > self.threshold => Phase::Stance,
            Phase::Stance if vertical_load < self.threshold - self.hysteresis => Phase::Swing,
            p => p,
        };
        if next != self.phase {
            self.phase = next;
            Some(next)
        } else {
            None
        }
    }
}

/// Phase of both legs; `None` for transition stamps not yet seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegPhases {
    pub phase: [Phase; 2],
    pub last_touchdown: [Option<f64>; 2],
    pub last_takeoff: [Option<f64>; 2],
}

impl LegPhases {
    pub fn is_double_support(&self) -> bool {
        self.phase == [Phase::Stance, Phase::Stance]
    }

    /// In double support, the leg that touched down first is trailing.
    pub fn is_trailing(&self, side: Side) -> bool {
        if !self.is_double_support() {
            return false;
        }
        let me = self.last_touchdown[side.index()];
        let other = self.last_touchdown[side.other().index()];
        match (me, other) {
            (Some(a), Some(b)) => a < b,
            (None, Some(_)) => true,
            _ => false,
        }
    }
}

/// Leg phase classification from the two vertical loads: a leg is in stance
/// iff its load exceeds the threshold, with hysteresis carried in `detectors`.
pub fn detect_phase(detectors: &mut [PhaseDetector; 2], grf_left: f64, grf_right: f64) -> [Phase; 2] {
    detectors[0].update(grf_left);
    detectors[1].update(grf_right);
    [detectors[0].phase(), detectors[1].phase()]
}

/// Proprioceptive and load signals sampled at one controller tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sensors {
    /// Tendon forces, leg-major.
    pub muscle_force: [f64; N_MUSCLES],
    pub ce_length: [f64; N_MUSCLES],
    /// Knee angle and rate per leg (offset convention).
    pub knee_angle: [f64; 2],
    pub knee_rate: [f64; 2],
    pub trunk_lean: f64,
    pub trunk_rate: f64,
    /// Vertical GRF per leg, N.
    pub leg_load: [f64; 2],
}

impl Sensors {
    pub fn mirrored(&self) -> Self {
        let mut m = *self;
        for k in 0..MUSCLES_PER_LEG {
            m.muscle_force.swap(k, k + MUSCLES_PER_LEG);
            m.ce_length.swap(k, k + MUSCLES_PER_LEG);
        }
        m.knee_angle.swap(0, 1);
        m.knee_rate.swap(0, 1);
        m.leg_load.swap(0, 1);
        m
    }
}

/// Delayed views of the sensor history for the three pathway latencies.
#[derive(Debug, Clone, Copy)]
pub struct DelayedSensors<'a> {
    pub hip: &'a Sensors,
    pub knee: &'a Sensors,
    pub ankle: &'a Sensors,
}

/// Static description of the muscle set the controller normalizes against.
#[derive(Debug, Clone, Copy)]
pub struct MuscleScales {
    pub f_max: [f64; MUSCLES_PER_LEG],
    pub l_opt: [f64; MUSCLES_PER_LEG],
    pub body_weight: f64,
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Stimulation of every muscle, leg-major, clamped to `[min_stim, 1]`.
pub fn stimulations(
    d: DelayedSensors<'_>,
    phases: &LegPhases,
    takeoff_lean: [f64; 2],
    p: &ControlParams,
    c: &ReflexConstants,
    scales: &MuscleScales,
) -> [f64; N_MUSCLES] {
    let mut u = [0.0; N_MUSCLES];
    for side in Side::BOTH {
        let leg = side.index();
        let o = leg * MUSCLES_PER_LEG;
        let idx = |m: MuscleId| o + m.index();
        let force = |s: &Sensors, m: MuscleId| s.muscle_force[idx(m)] / scales.f_max[m.index()];
        let length = |s: &Sensors, m: MuscleId| s.ce_length[idx(m)] / scales.l_opt[m.index()];
        let out = &mut u[o..o + MUSCLES_PER_LEG];
        let s0 = c.prestim;

        let ta_stretch = p.ta_length_gain * pos(length(d.ankle, MuscleId::Ta) - c.ta_length_offset);
        match phases.phase[leg] {
            Phase::Stance => {
                let trailing = phases.is_trailing(side);
                let ds = if trailing { 1.0 } else { 0.0 };
                let sol_f = force(d.ankle, MuscleId::Sol);
                out[MuscleId::Sol.index()] = s0 + p.sol_force_gain * sol_f;
                out[MuscleId::Ta.index()] = s0 + ta_stretch - c.sol_ta_gain * sol_f;
                out[MuscleId::Gas.index()] = s0 + p.gas_force_gain * force(d.ankle, MuscleId::Gas);

                let knee_over = d.knee.knee_angle[leg] - c.knee_brake_angle;
                let brake = if knee_over > 0.0 && d.knee.knee_rate[leg] > 0.0 {
                    c.knee_brake_gain * knee_over
                } else {
                    0.0
                };
                let unload = ds * c.vas_unload_gain * d.hip.leg_load[1 - leg].abs() / scales.body_weight;
                out[MuscleId::Vas.index()] =
                    s0 + p.vas_force_gain * force(d.knee, MuscleId::Vas) - brake - unload;

                let lean_err = d.hip.trunk_lean - p.trunk_ref_lean;
                let pd = p.trunk_kp * lean_err + p.trunk_kd * d.hip.trunk_rate;
                let load = d.hip.leg_load[leg].abs() / scales.body_weight;
                let sh = c.prestim_hip_stance;
                out[MuscleId::Ham.index()] = sh + pos(pd) * load;
                out[MuscleId::Glu.index()] = sh + pos(pd) * load - ds * p.swing_init;
                out[MuscleId::Hfl.index()] = sh + pos(-pd) * load + ds * p.swing_init;
            }
            Phase::Swing => {
                out[MuscleId::Sol.index()] = s0;
                out[MuscleId::Ta.index()] = s0 + ta_stretch;
                out[MuscleId::Gas.index()] = s0;
                out[MuscleId::Vas.index()] = s0;
                out[MuscleId::Ham.index()] = s0 + p.ham_swing_gain * force(d.hip, MuscleId::Ham);
                out[MuscleId::Glu.index()] = s0 + p.glu_swing_gain * force(d.hip, MuscleId::Glu);
                out[MuscleId::Hfl.index()] = s0
                    + p.hfl_lean_gain * (takeoff_lean[leg] - p.trunk_ref_lean)
                    + p.hfl_length_gain * pos(length(d.hip, MuscleId::Hfl) - c.hfl_length_offset)
                    - c.ham_hfl_gain * pos(length(d.hip, MuscleId::Ham) - c.ham_length_offset);
            }
        }
    }
    u.map(|x| if x.is_nan() { c.min_stim } else { x.clamp(c.min_stim, 1.0) })
}

/// Stateful controller: sensor delay line, phase detection and take-off lean memory.
#[derive(Debug, Clone)]
pub struct Controller {
    pub params: ControlParams,
    pub constants: ReflexConstants,
    scales: MuscleScales,
    dt: f64,
    history: VecDeque<Sensors>,
    capacity: usize,
    detectors: [PhaseDetector; 2],
    phases: LegPhases,
    takeoff_lean: [f64; 2],
}

impl Controller {
    pub fn new(params: ControlParams, constants: ReflexConstants, scales: MuscleScales, dt: f64) -> Self {
        let longest = constants.delay_hip.max(constants.delay_knee).max(constants.delay_ankle);
        let capacity = (longest / dt).round() as usize + 1;
        let det = PhaseDetector::new(constants.stance_threshold, constants.stance_hysteresis);
        Self {
            params,
            constants,
            scales,
            dt,
            history: VecDeque::with_capacity(capacity),
            capacity,
            detectors: [det, det],
            phases: LegPhases {
                phase: [Phase::Swing; 2],
                last_touchdown: [None; 2],
                last_takeoff: [None; 2],
            },
            takeoff_lean: [params.trunk_ref_lean; 2],
        }
    }

    pub fn phases(&self) -> &LegPhases {
        &self.phases
    }

    /// Seeds the delay line and phase state from a known initial posture. If
    /// both legs start loaded, `leading` is the one that touched down last.
    pub fn prime(&mut self, sensors: &Sensors, t: f64, leading: Side) {
        self.history.clear();
        for _ in 0..self.capacity {
            self.history.push_back(*sensors);
        }
        for leg in 0..2 {
            self.detectors[leg].update(sensors.leg_load[leg]);
            self.phases.phase[leg] = self.detectors[leg].phase();
            if self.phases.phase[leg] == Phase::Stance {
                self.phases.last_touchdown[leg] = Some(t);
            }
        }
        if self.phases.is_double_support() {
            self.phases.last_touchdown[leading.index()] = Some(t);
            self.phases.last_touchdown[leading.other().index()] = Some(t - self.dt);
        }
        self.takeoff_lean = [sensors.trunk_lean; 2];
    }

    fn delayed(&self, delay: f64) -> &Sensors {
        let steps = (delay / self.dt).round() as usize;
        let n = self.history.len();
        &self.history[n - 1 - steps.min(n - 1)]
    }

    /// Records the sensors of tick `t` and returns the stimulations to hold
    /// until the next tick.
    pub fn step(&mut self, sensors: &Sensors, t: f64) -> [f64; N_MUSCLES] {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(*sensors);
        for leg in 0..2 {
            match self.detectors[leg].update(sensors.leg_load[leg]) {
                Some(Phase::Stance) => self.phases.last_touchdown[leg] = Some(t),
                Some(Phase::Swing) => {
                    self.phases.last_takeoff[leg] = Some(t);
                    self.takeoff_lean[leg] = sensors.trunk_lean;
                }
                None => {}
            }
            self.phases.phase[leg] = self.detectors[leg].phase();
        }
        let d = DelayedSensors {
            hip: self.delayed(self.constants.delay_hip),
            knee: self.delayed(self.constants.delay_knee),
            ankle: self.delayed(self.constants.delay_ankle),
        };
        stimulations(d, &self.phases, self.takeoff_lean, &self.params, &self.constants, &self.scales)
    }
}
