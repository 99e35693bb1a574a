//! Stride selection and the step-down robustness protocol.

use serde::{Deserialize, Serialize};

use super::events::{EventKind, GaitEvent};
use super::{GaitTrace, Termination, Walker};
use crate::dynamics::{Side, Terrain};
use crate::error::{Error, Result};
use crate::par;
use crate::reflex::ControlParams;

/// One stride from a heel strike to the next ipsilateral heel strike
/// (`end` is the index of that second strike). `single_support` is the
/// inclusive sample range between contralateral toe-off and heel strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrideWindow {
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub single_support: (usize, usize),
}

impl StrideWindow {
    pub fn duration(&self, dt: f64) -> f64 {
        (self.end - self.start) as f64 * dt
    }

    pub fn single_support_len(&self) -> usize {
        self.single_support.1 - self.single_support.0 + 1
    }
}

/// Complete ipsilateral heel-strike-to-heel-strike strides available in the
/// event list (the smaller count of the two legs).
pub fn count_strides(events: &[GaitEvent]) -> usize {
    Side::BOTH
        .iter()
        .map(|&s| events.iter().filter(|e| e.side == s && e.kind == EventKind::HeelStrike).count().saturating_sub(1))
        .min()
        .unwrap_or(0)
}

fn stride_between(events: &[GaitEvent], a: &GaitEvent, b: &GaitEvent) -> Option<StrideWindow> {
    let inside: Vec<&GaitEvent> = events.iter().filter(|e| e.index > a.index && e.index < b.index).collect();
    let own_to: Vec<_> = inside.iter().filter(|e| e.side == a.side && e.kind == EventKind::ToeOff).collect();
    let own_hs = inside.iter().filter(|e| e.side == a.side && e.kind == EventKind::HeelStrike).count();
    let other = a.side.other();
    let hs: Vec<_> = inside.iter().filter(|e| e.side == other && e.kind == EventKind::HeelStrike).collect();
    let to: Vec<_> = inside.iter().filter(|e| e.side == other && e.kind == EventKind::ToeOff).collect();
    if own_to.len() != 1 || own_hs != 0 || hs.len() != 1 || to.len() != 1 {
        return None;
    }
    let (ss0, ss1) = (to[0].index, hs[0].index - 1);
    (a.index < ss0 && ss0 <= ss1 && ss1 < b.index && own_to[0].index > hs[0].index).then_some(StrideWindow {
        side: a.side,
        start: a.index,
        end: b.index,
        single_support: (ss0, ss1),
    })
}

/// The last complete, well-formed stride of the trace.
pub fn steady_stride(trace: &GaitTrace) -> Result<StrideWindow> {
    steady_stride_min(trace, 8)
}

pub fn steady_stride_min(trace: &GaitTrace, min_strides: usize) -> Result<StrideWindow> {
    let got = count_strides(&trace.events);
    if got < min_strides {
        return Err(Error::InsufficientStrides { needed: min_strides, got });
    }
    let mut pairs = Vec::new();
    for side in Side::BOTH {
        let hs: Vec<&GaitEvent> =
            trace.events.iter().filter(|e| e.side == side && e.kind == EventKind::HeelStrike).collect();
        pairs.extend(hs.windows(2).map(|w| (w[0], w[1])));
    }
    pairs.sort_by(|x, y| y.1.index.cmp(&x.1.index));
    pairs
        .into_iter()
        .find_map(|(a, b)| stride_between(&trace.events, a, b))
        .ok_or_else(|| Error::Degenerate("no well-formed stride in trace".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDownConfig {
    /// Unperturbed strides before the drop.
    pub settle_strides: usize,
    /// Strides that must follow the perturbed heel strike.
    pub horizon_strides: usize,
    /// Largest drop tried, cm.
    pub max_height_cm: u32,
    /// Length of the unperturbed reference rollout, s.
    pub reference_t_max: f64,
    /// Distance of the drop edge behind the natural landing point, m.
    pub edge_setback: f64,
}

impl Default for StepDownConfig {
    fn default() -> Self {
        Self { settle_strides: 8, horizon_strides: 10, max_height_cm: 15, reference_t_max: 20.0, edge_setback: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDownTrial {
    pub height_cm: u32,
    pub success: bool,
    pub termination: Termination,
    /// Heel strikes after the perturbed landing.
    pub steps_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum RobustnessOutcome {
    /// The unperturbed gait does not walk long enough to be perturbed.
    UnstableOnFlat { termination: Termination, strides: usize },
    Measured { max_height_cm: u32, drop_x: f64, trials: Vec<StepDownTrial> },
}

impl RobustnessOutcome {
    pub fn max_height_cm(&self) -> Option<u32> {
        match self {
            Self::Measured { max_height_cm, .. } => Some(*max_height_cm),
            Self::UnstableOnFlat { .. } => None,
        }
    }
}

/// Where the drop goes and how long a perturbed rollout lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Placement {
    drop_x: f64,
    landing_t: f64,
    t_max: f64,
}

fn placement(reference: &GaitTrace, cfg: &StepDownConfig) -> std::result::Result<Placement, RobustnessOutcome> {
    let unstable = || RobustnessOutcome::UnstableOnFlat {
        termination: reference.termination,
        strides: count_strides(&reference.events),
    };
    if reference.termination != Termination::Completed {
        return Err(unstable());
    }
    let hs: Vec<&GaitEvent> = reference.events.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    let k = 2 * cfg.settle_strides + 1;
    if hs.len() < k + 3 {
        return Err(unstable());
    }
    let target = hs[k];
    if !target.position[0].is_finite() {
        return Err(unstable());
    }
    let period = hs[k].t - hs[k - 2].t;
    Ok(Placement {
        drop_x: target.position[0] - cfg.edge_setback,
        landing_t: target.t,
        t_max: target.t + (cfg.horizon_strides as f64 + 1.5) * period,
    })
}

fn trial(walker: &Walker, params: &ControlParams, p: Placement, cfg: &StepDownConfig, height_cm: u32) -> StepDownTrial {
    let terrain = Terrain::step_down(p.drop_x, height_cm as f64 / 100.0).expect("finite step");
    let trace = walker.rollout(params, &terrain, p.t_max);
    // the perturbed landing is the first heel strike after the edge is crossed,
    // at or after the natural landing time minus a step's slack
    let steps_after = trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::HeelStrike && e.t > p.landing_t - 0.3)
        .count()
        .saturating_sub(1);
    let success = trace.termination == Termination::Completed && steps_after >= 2 * cfg.horizon_strides;
    StepDownTrial { height_cm, success, termination: trace.termination, steps_after }
}

/// Tries heights 1, 2, … cm (at most `max_cm`) in batches of `batch`
/// concurrent trials and stops at the first failure. Returns the largest
/// height below the first failure together with the trials up to and
/// including it; trials above a failure in the same batch are discarded.
pub fn search_heights<F>(max_cm: u32, batch: usize, parallel: bool, trial: F) -> (u32, Vec<StepDownTrial>)
where
    F: Fn(u32) -> StepDownTrial + Sync,
{
    let mut trials = Vec::new();
    let mut next = 1;
    while next <= max_cm {
        let heights: Vec<u32> = (next..=max_cm).take(batch.max(1)).collect();
        next += heights.len() as u32;
        let results = if parallel { par::map(&heights, |&h| trial(h)) } else { par::map_sequential(&heights, |&h| trial(h)) };
        for r in results {
            let ok = r.success;
            trials.push(r);
            if !ok {
                return (trials.len() as u32 - 1, trials);
            }
        }
    }
    (max_cm, trials)
}

/// Increases the drop height in 1 cm steps until the model falls, returning
/// the largest height from which it recovered (0 if 1 cm already fails).
/// Heights are tried in batches of the thread-pool width; the answer matches
/// the sequential protocol.
pub fn step_down_robustness(walker: &Walker, params: &ControlParams, cfg: &StepDownConfig) -> RobustnessOutcome {
    robustness_with(walker, params, cfg, par::width(), true)
}

/// Same protocol, one height at a time.
pub fn step_down_robustness_sequential(
    walker: &Walker,
    params: &ControlParams,
    cfg: &StepDownConfig,
) -> RobustnessOutcome {
    robustness_with(walker, params, cfg, 1, false)
}

fn robustness_with(
    walker: &Walker,
    params: &ControlParams,
    cfg: &StepDownConfig,
    batch: usize,
    parallel: bool,
) -> RobustnessOutcome {
    let reference = walker.rollout(params, &Terrain::flat(), cfg.reference_t_max);
    let p = match placement(&reference, cfg) {
        Ok(p) => p,
        Err(outcome) => return outcome,
    };
    let (max_height_cm, trials) =
        search_heights(cfg.max_height_cm, batch, parallel, |h| trial(walker, params, p, cfg, h));
    RobustnessOutcome::Measured { max_height_cm, drop_x: p.drop_x, trials }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    #[test]
    fn stride_counting() {
        assert_eq!(count_strides(&fixtures::walking(10, 1.3).events), 9);
        assert_eq!(count_strides(&[]), 0);
    }

    #[test]
    fn steady_stride_is_the_last_well_formed_one() {
        let tr = fixtures::walking(12, 1.3);
        let w = steady_stride(&tr).unwrap();
        // last stride: left heel strikes at 11 s and 12 s
        assert_eq!(w.side, Side::Left);
        assert_eq!((w.start, w.end), (11_000, 12_000));
        let find = |side: Side, kind: EventKind| {
            tr.events.iter().find(|e| e.side == side && e.kind == kind && e.index > w.start && e.index < w.end).unwrap().index
        };
        assert_eq!(w.single_support, (find(Side::Right, EventKind::ToeOff), find(Side::Right, EventKind::HeelStrike) - 1));
        assert!((w.duration(tr.dt) - 1.0).abs() < 1e-12);
        for s in &tr.samples[w.single_support.0..=w.single_support.1] {
            assert!(s.cop[0].is_some() && s.cop[1].is_none());
        }
    }

    #[test]
    fn too_few_strides() {
        let tr = fixtures::walking(5, 1.3);
        assert!(matches!(steady_stride(&tr), Err(Error::InsufficientStrides { needed: 8, got: 4 })));
        assert!(steady_stride_min(&tr, 3).is_ok());
    }

    #[test]
    fn malformed_last_stride_is_skipped() {
        let mut tr = fixtures::walking(12, 1.3);
        // dropping the right toe-off near 11.1 s breaks the last left stride
        // and the last right one
        let i = tr
            .events
            .iter()
            .position(|e| e.side == Side::Right && e.kind == EventKind::ToeOff && e.index > 11_000)
            .unwrap();
        tr.events.remove(i);
        let w = steady_stride(&tr).unwrap();
        assert_eq!((w.side, w.start, w.end), (Side::Left, 10_000, 11_000));
    }

    fn fake(h: u32, fail_at: u32) -> StepDownTrial {
        StepDownTrial { height_cm: h, success: h < fail_at, termination: Termination::Completed, steps_after: 0 }
    }

    #[test]
    fn height_search() {
        let (h, trials) = search_heights(15, 1, false, |h| fake(h, 1));
        assert_eq!((h, trials.len()), (0, 1));
        let (h, trials) = search_heights(15, 4, true, |h| fake(h, 4));
        assert_eq!(h, 3);
        assert_eq!(trials.iter().map(|t| t.height_cm).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        let (h, trials) = search_heights(5, 3, true, |h| fake(h, 99));
        assert_eq!((h, trials.len()), (5, 5));
        for batch in 1..7 {
            assert_eq!(search_heights(15, batch, true, |h| fake(h, 9)), search_heights(15, 1, false, |h| fake(h, 9)));
        }
    }
}
