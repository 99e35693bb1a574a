//! End-to-end analysis of the default gait.

use std::sync::OnceLock;

use neurowalk::analysis::{self, IpClass};
use neurowalk::dynamics::Terrain;
use neurowalk::reflex::ControlParams;
use neurowalk::simulation::{count_strides, steady_stride, EventKind, GaitTrace, Termination, Walker};

fn walk() -> &'static (Walker, GaitTrace) {
    static CELL: OnceLock<(Walker, GaitTrace)> = OnceLock::new();
    CELL.get_or_init(|| {
        let w = Walker::default_model().unwrap();
        let t = w.rollout(&ControlParams::default(), &Terrain::flat(), 20.0);
        (w, t)
    })
}

#[test]
fn default_gait_walks_twenty_seconds() {
    let (_, trace) = walk();
    assert_eq!(trace.termination, Termination::Completed);
    assert!((trace.duration() - 20.0).abs() < 1e-9);
    assert!(trace.distance() > 15.0);
    assert!(count_strides(&trace.events) >= 12);
}

#[test]
fn heel_strikes_alternate_once_settled() {
    let (_, trace) = walk();
    let hs: Vec<_> = trace.events.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    // the start-up transient may bounce a foot; the settled gait must not
    let settled: Vec<_> = hs.iter().filter(|e| e.t > 5.0).collect();
    assert!(settled.len() > 15);
    for w in settled.windows(2) {
        assert_ne!(w[0].side, w[1].side, "t = {}", w[1].t);
        assert!(w[1].position[0] > w[0].position[0]);
    }
    let repeats = hs.windows(2).filter(|w| w[0].side == w[1].side).count();
    assert!(repeats <= 2, "{repeats} repeated heel strikes");
}

#[test]
fn report_agrees_with_its_parts() {
    let (w, trace) = walk();
    let r = analysis::analyze(&w.model, trace).unwrap();
    let stride = steady_stride(trace).unwrap();
    assert_eq!(r.stride, stride);
    let ip = analysis::ip_from_trace(trace, &stride).unwrap();
    assert_eq!(r.ip, ip);
    assert_eq!(r.ip_class, analysis::classify_ip(ip.r2));
    let cf = analysis::collision_from_trace(trace, &stride).unwrap();
    assert_eq!(r.collision_fraction, cf.cf);
    assert!((0.0..=1.0).contains(&cf.cf));
    assert_eq!(r.stability, analysis::trace_steadiness(&w.model, trace).unwrap());
    assert!(r.stability.steady);
    assert_eq!(r.ip_class, IpClass::Ip);
    // the stride is one left heel strike to the next
    let hs: Vec<_> = trace.events.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    assert!(hs.iter().any(|e| e.index == stride.start));
    assert!(hs.iter().any(|e| e.index == stride.end));
}

#[test]
fn analysis_survives_a_json_round_trip_of_the_trace() {
    let (w, trace) = walk();
    let json = serde_json::to_string(trace).unwrap();
    let back: GaitTrace = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, trace);
    let (a, b) = (analysis::analyze(&w.model, trace).unwrap(), analysis::analyze(&w.model, &back).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn speed_is_step_length_times_cadence() {
    let (_, trace) = walk();
    let d = analysis::gait_descriptors(trace).unwrap();
    let product = d.step_length * d.cadence;
    assert!((product - d.speed).abs() / d.speed < 0.05, "{d:?}");
}
