//! Heel-strike and toe-off detection on the vertical GRF.

use serde::{Deserialize, Serialize};

use super::GaitTrace;
use crate::dynamics::Side;
use crate::reflex::{Phase, PhaseDetector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeelStrike,
    ToeOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub side: Side,
    pub kind: EventKind,
    /// Sample index of the first sample in the new phase.
    pub index: usize,
    pub t: f64,
    /// CoP at the loaded sample adjacent to the event.
    pub position: [f64; 2],
}

/// Events from per-foot vertical loads, using the same hysteresis as the
/// controller's phase detection. A foot that is loaded in the first sample
/// does not produce a heel strike there.
pub fn detect_events(trace: &GaitTrace, threshold: f64, hysteresis: f64) -> Vec<GaitEvent> {
    let mut events = Vec::new();
    for side in Side::BOTH {
        let i = side.index();
        let mut det = PhaseDetector::new(threshold, hysteresis);
        for (k, s) in trace.samples.iter().enumerate() {
            let change = det.update(s.grf[i][1]);
            if k == 0 {
                continue;
            }
            let (kind, src) = match change {
                Some(Phase::Stance) => (EventKind::HeelStrike, k),
                Some(Phase::Swing) => (EventKind::ToeOff, k - 1),
                None => continue,
            };
            let position = trace.samples[src].cop[i].unwrap_or([f64::NAN; 2]);
            events.push(GaitEvent { side, kind, index: k, t: s.t, position });
        }
    }
    events.sort_by(|a, b| a.index.cmp(&b.index).then(a.side.index().cmp(&b.side.index())));
    events
}

/// Heel strikes in time order.
pub fn heel_strikes(events: &[GaitEvent]) -> impl Iterator<Item = &GaitEvent> {
    events.iter().filter(|e| e.kind == EventKind::HeelStrike)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    #[test]
    fn alternating_events() {
        let tr = fixtures::walking(5, 1.4);
        let hs: Vec<_> = heel_strikes(&tr.events).collect();
        // left lands at t = 1..5 (loaded from the first sample), right at 0.5..4.5
        assert_eq!(hs.iter().filter(|e| e.side == Side::Left).count(), 5);
        assert_eq!(hs.iter().filter(|e| e.side == Side::Right).count(), 5);
        assert!(hs.windows(2).all(|w| w[0].side != w[1].side));
        let first_right = hs.iter().find(|e| e.side == Side::Right).unwrap();
        assert_eq!(first_right.index, 500);
        assert!((first_right.position[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn toe_off_uses_last_loaded_sample() {
        let tr = fixtures::walking(3, 1.0);
        let to = tr.events.iter().find(|e| e.kind == EventKind::ToeOff && e.side == Side::Left).unwrap();
        assert_eq!(to.index, 600);
        assert!(tr.samples[to.index - 1].cop[0].is_some());
        assert_eq!(to.position, tr.samples[to.index - 1].cop[0].unwrap());
        assert!(tr.samples[to.index].cop[0].is_none());
    }

    #[test]
    fn hysteresis_prevents_chatter() {
        let mut tr = fixtures::walking(1, 1.0);
        for (k, s) in tr.samples.iter_mut().enumerate() {
            s.grf = [[0.0, if k == 0 { 0.0 } else if k % 2 == 0 { 19.0 } else { 21.0 }], [0.0; 2]];
            s.cop = [Some([0.0, 0.0]), None];
        }
        let ev = detect_events(&tr, 20.0, 5.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::HeelStrike);
    }

    #[test]
    fn events_sorted_by_index() {
        let tr = fixtures::walking(6, 1.2);
        assert!(tr.events.windows(2).all(|w| w[0].index <= w[1].index));
    }
}
