//! Three-stage cost: walk without falling, then walk steadily, then shape the
//! GRF intersection point.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, GaitReport};
use crate::simulation::{GaitTrace, Termination, Walker};

/// Added to every stage-1 (fall) cost.
pub const STAGE1_OFFSET: f64 = 1e6;
/// Added to every stage-2 (unsteady) cost.
pub const STAGE2_OFFSET: f64 = 1e3;
/// Target speed of the R²-maximizing objective, m/s.
pub const TARGET_SPEED: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// J = R².
    MinR2,
    /// J = 1 − R² + |v − v_tgt|.
    MaxR2 { target_speed: f64 },
    /// J = R² + w·CF.
    MinR2Cf { cf_weight: f64 },
}

impl Mode {
    pub fn max_r2() -> Self {
        Mode::MaxR2 { target_speed: TARGET_SPEED }
    }

    pub fn min_r2_cf() -> Self {
        Mode::MinR2Cf { cf_weight: 1.0 }
    }
}

/// What a rollout achieved, reduced to the quantities the cost needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    /// Fell or failed before `t_max`.
    Fell { distance: f64, time: f64 },
    /// Walked to `t_max` but is not steady; `spread` is infinite if it could
    /// not be measured.
    Unsteady {
        #[serde(with = "analysis::float_sentinel")]
        spread: f64,
    },
    Steady {
        #[serde(with = "analysis::float_sentinel")]
        r2: f64,
        speed: f64,
        cf: f64,
    },
}

impl Outcome {
    pub fn stage(&self) -> u8 {
        match self {
            Outcome::Fell { .. } => 1,
            Outcome::Unsteady { .. } => 2,
            Outcome::Steady { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagedCost {
    pub stage: u8,
    pub cost: f64,
    pub outcome: Outcome,
}

/// Scalar cost with strict stage dominance: every stage-1 cost exceeds every
/// stage-2 cost, which exceeds every stage-3 cost.
pub fn staged_cost(outcome: Outcome, mode: Mode) -> StagedCost {
    let band = STAGE2_OFFSET - 1.0;
    let cost = match outcome {
        Outcome::Fell { distance, .. } => {
            let d = if distance.is_finite() { distance } else { 0.0 };
            STAGE1_OFFSET - d.min(STAGE1_OFFSET - STAGE2_OFFSET - band - 1.0)
        }
        Outcome::Unsteady { spread } => {
            let s = if spread.is_nan() { f64::INFINITY } else { spread };
            STAGE2_OFFSET + s.clamp(0.0, band)
        }
        Outcome::Steady { r2, speed, cf } => {
            let j = match mode {
                Mode::MinR2 => r2,
                Mode::MaxR2 { target_speed } => 1.0 - r2 + (speed - target_speed).abs(),
                Mode::MinR2Cf { cf_weight } => r2 + cf_weight * cf,
            };
            if j.is_nan() {
                band
            } else {
                j.clamp(-band, band)
            }
        }
    };
    StagedCost { stage: outcome.stage(), cost, outcome }
}

/// Classifies a rollout and, for steady gaits, returns the full analysis.
pub fn assess(walker: &Walker, trace: &GaitTrace, t_max: f64) -> (Outcome, Option<GaitReport>) {
    let end = trace.samples.last().map_or(0.0, |s| s.t);
    if trace.termination != Termination::Completed || end < t_max - 0.5 * trace.dt {
        return (Outcome::Fell { distance: trace.distance(), time: end }, None);
    }
    let spread = match analysis::trace_steadiness(&walker.model, trace) {
        Ok(s) if s.steady => s.spread,
        Ok(s) => return (Outcome::Unsteady { spread: s.spread }, None),
        Err(_) => return (Outcome::Unsteady { spread: f64::INFINITY }, None),
    };
    match analysis::analyze(&walker.model, trace) {
        Ok(report) => {
            let outcome = Outcome::Steady {
                r2: report.ip.r2,
                speed: report.descriptors.speed,
                cf: report.collision_fraction,
            };
            (outcome, Some(report))
        }
        // steady but not analyzable (e.g. no well-formed stride): not stage 3
        Err(_) => (Outcome::Unsteady { spread }, None),
    }
}
