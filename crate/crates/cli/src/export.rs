//! CSV and JSON export of traces, analyses and archives. Floats are written
//! with 17 significant digits so that every value reads back bit-identically.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use neurowalk::analysis::{self, GaitReport};
use neurowalk::dynamics::integrator::SolverStats;
use neurowalk::dynamics::{Side, Terrain, NQ};
use neurowalk::muscle::{MuscleId, MUSCLES_PER_LEG, N_MUSCLES};
use neurowalk::optimizer::GaitRecord;
use neurowalk::reflex::ControlParams;
use neurowalk::simulation::{detect_events, GaitTrace, Sample, StrideWindow, Termination};

use crate::error::{CliError, CliResult};

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse(field: &str) -> CliResult<f64> {
    field.parse().map_err(|_| CliError::Config(format!("not a number: {field:?}")))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Right => "right",
    }
}

/// Everything about a trace that is not a per-sample column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub dt: f64,
    pub termination: Termination,
    pub end_time: Option<f64>,
    pub terrain: Terrain,
    pub failure: Option<String>,
    pub solver: SolverStats,
    pub params: ControlParams,
    pub stance_threshold: f64,
    pub stance_hysteresis: f64,
    pub config_hash: String,
}

fn trace_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..NQ).map(|i| format!("q{i}")));
    h.extend((0..NQ).map(|i| format!("qd{i}")));
    for s in ["left", "right"] {
        h.extend([format!("grf_{s}_x"), format!("grf_{s}_y")]);
    }
    for s in ["left", "right"] {
        h.extend([format!("cop_{s}_x"), format!("cop_{s}_y")]);
    }
    h.extend(["com_x", "com_y", "com_vx", "com_vy", "ground_y"].map(String::from));
    h
}

/// Kinematics, GRF, CoP and CoM per sample. `ground_y` is the terrain height
/// under the CoM; CoP cells are empty while a foot is unloaded.
pub fn write_trace_csv(path: &Path, trace: &GaitTrace) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header())?;
    for s in &trace.samples {
        let mut row = vec![fmt17(s.t)];
        row.extend(s.q.iter().chain(&s.qd).map(|v| fmt17(*v)));
        row.extend(s.grf.iter().flatten().map(|v| fmt17(*v)));
        for c in s.cop {
            row.push(opt(c.map(|c| c[0])));
            row.push(opt(c.map(|c| c[1])));
        }
        row.extend([s.com[0], s.com[1], s.com_vel[0], s.com_vel[1], trace.terrain.height(s.com[0])].map(fmt17));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn muscle_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for side in ["left", "right"] {
        for m in MuscleId::ALL {
            for q in ["stim", "act", "force", "lce"] {
                h.push(format!("{side}_{}_{q}", m.name().to_lowercase()));
            }
        }
    }
    h
}

/// Stimulation, activation, tendon force and CE length of every muscle.
pub fn write_muscle_csv(path: &Path, trace: &GaitTrace) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(muscle_header())?;
    for s in &trace.samples {
        let mut row = vec![fmt17(s.t)];
        for i in 0..N_MUSCLES {
            row.extend([s.stim[i], s.act[i], s.muscle_force[i], s.ce_length[i]].map(fmt17));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: &Path, trace: &GaitTrace) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["side", "kind", "index", "t", "x", "y"])?;
    for e in &trace.events {
        let kind = match e.kind {
            neurowalk::simulation::EventKind::HeelStrike => "heel_strike",
            neurowalk::simulation::EventKind::ToeOff => "toe_off",
        };
        w.write_record([
            side_name(e.side).to_string(),
            kind.to_string(),
            e.index.to_string(),
            fmt17(e.t),
            fmt17(e.position[0]),
            fmt17(e.position[1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`] (and, if present, the muscle
/// CSV); gait events are recomputed from the GRF columns.
pub fn read_trace(trace_csv: &Path, muscle_csv: Option<&Path>, meta: &TraceMeta) -> CliResult<GaitTrace> {
    let mut samples = Vec::new();
    let mut r = csv::Reader::from_path(trace_csv)?;
    if r.headers()?.iter().collect::<Vec<_>>() != trace_header() {
        return Err(CliError::Config(format!("{}: unexpected trace columns", trace_csv.display())));
    }
    for rec in r.records() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        let num = |i: usize| parse(f[i]);
        let mut s = Sample {
            t: num(0)?,
            q: [0.0; NQ],
            qd: [0.0; NQ],
            grf: [[0.0; 2]; 2],
            cop: [None; 2],
            com: [0.0; 2],
            com_vel: [0.0; 2],
            stim: [0.0; N_MUSCLES],
            act: [0.0; N_MUSCLES],
            muscle_force: [0.0; N_MUSCLES],
            ce_length: [0.0; N_MUSCLES],
        };
        for i in 0..NQ {
            s.q[i] = num(1 + i)?;
            s.qd[i] = num(1 + NQ + i)?;
        }
        let g = 1 + 2 * NQ;
        for leg in 0..2 {
            s.grf[leg] = [num(g + 2 * leg)?, num(g + 2 * leg + 1)?];
            let c = g + 4 + 2 * leg;
            if !f[c].is_empty() {
                s.cop[leg] = Some([num(c)?, num(c + 1)?]);
            }
        }
        let c = g + 8;
        s.com = [num(c)?, num(c + 1)?];
        s.com_vel = [num(c + 2)?, num(c + 3)?];
        samples.push(s);
    }
    if let Some(path) = muscle_csv {
        let mut r = csv::Reader::from_path(path)?;
        for (s, rec) in samples.iter_mut().zip(r.records()) {
            let rec = rec?;
            let f: Vec<&str> = rec.iter().collect();
            for i in 0..N_MUSCLES {
                let b = 1 + 4 * i;
                s.stim[i] = parse(f[b])?;
                s.act[i] = parse(f[b + 1])?;
                s.muscle_force[i] = parse(f[b + 2])?;
                s.ce_length[i] = parse(f[b + 3])?;
            }
        }
    }
    let mut trace = GaitTrace {
        dt: meta.dt,
        samples,
        events: Vec::new(),
        termination: meta.termination,
        end_time: meta.end_time,
        terrain: meta.terrain.clone(),
        failure: meta.failure.clone(),
        solver: meta.solver,
    };
    trace.events = detect_events(&trace, meta.stance_threshold, meta.stance_hysteresis);
    Ok(trace)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// One row per resampled single-support force line; positions relative to
/// the CoM. `h_ip` repeats the fitted IP height.
pub fn write_ip_lines_csv(path: &Path, trace: &GaitTrace, stride: &StrideWindow, h_ip: f64) -> CliResult<()> {
    let (f, p, c) = analysis::ip_window(trace, stride)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "grf_x", "grf_y", "cop_rel_x", "cop_rel_y", "h_ip"])?;
    for i in 0..f.len() {
        w.write_record([
            i.to_string(),
            fmt17(f[i][0]),
            fmt17(f[i][1]),
            fmt17(p[i][0] - c[i][0]),
            fmt17(p[i][1] - c[i][1]),
            fmt17(h_ip),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A stance phase of the stride leg: `(t, cop_x, com_x, grf_x, grf_y)` rows
/// from its heel strike to its toe-off.
pub fn stance_rows(trace: &GaitTrace, stride: &StrideWindow) -> Vec<[f64; 5]> {
    let leg = stride.side.index();
    let end = trace
        .events
        .iter()
        .find(|e| {
            e.side == stride.side && e.kind == neurowalk::simulation::EventKind::ToeOff && e.index > stride.start
        })
        .map_or(stride.end, |e| e.index);
    trace.samples[stride.start..end]
        .iter()
        .filter_map(|s| s.cop[leg].map(|cop| [s.t, cop[0], s.com[0], s.grf[leg][0], s.grf[leg][1]]))
        .collect()
}

pub fn write_stance_csv(path: &Path, rows: &[[f64; 5]]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "cop_x", "com_x", "grf_x", "grf_y"])?;
    for r in rows {
        w.write_record(r.map(fmt17))?;
    }
    w.flush()?;
    Ok(())
}

/// Analysis JSON: the full report, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFile {
    pub params: ControlParams,
    pub termination: Termination,
    pub duration: f64,
    pub distance: f64,
    pub report: Option<GaitReport>,
    pub error: Option<String>,
}

/// Rows behind the robustness scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub gait_id: String,
    pub r2: f64,
    pub max_h_cm: Option<u32>,
    pub cf: f64,
    pub is_default: bool,
    pub note: String,
}

pub fn robustness_rows(records: &[GaitRecord], default: Option<&GaitRecord>) -> Vec<RobustnessRow> {
    let row = |id: String, r: &GaitRecord, is_default: bool| RobustnessRow {
        gait_id: id,
        r2: r.r2.unwrap_or(f64::NAN),
        max_h_cm: r.max_step_down_cm,
        cf: r.cf.unwrap_or(f64::NAN),
        is_default,
        note: r.robustness_note.clone().unwrap_or_default(),
    };
    let mut rows: Vec<RobustnessRow> =
        records.iter().enumerate().map(|(i, r)| row(format!("g{}-{}#{i}", r.generation, r.index), r, false)).collect();
    if let Some(d) = default {
        rows.push(row("default".into(), d, true));
    }
    rows
}

pub fn write_robustness_csv(path: &Path, rows: &[RobustnessRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gait_id", "r2", "max_h_cm", "cf", "is_default", "note"])?;
    for r in rows {
        w.write_record([
            r.gait_id.clone(),
            fmt17(r.r2),
            r.max_h_cm.map(|h| h.to_string()).unwrap_or_default(),
            fmt17(r.cf),
            r.is_default.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Column count of the muscle CSV.
pub fn muscle_columns() -> usize {
    2 * MUSCLES_PER_LEG * 4 + 1
}
