//! Subcommand implementations, independent of argument parsing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neurowalk::analysis;
use neurowalk::dynamics::Terrain;
use neurowalk::optimizer::{self, Checkpoint, GaitRecord, GenerationLog, Mode};
use neurowalk::reflex::ControlParams;
use neurowalk::simulation::{GaitTrace, Termination};

use crate::animate;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::export::{self, AnalysisFile, TraceMeta};
use crate::plot;

pub const TRACE_CSV: &str = "trace.csv";
pub const MUSCLE_CSV: &str = "muscles.csv";
pub const TRACE_META: &str = "trace.json";
pub const ANALYSIS_JSON: &str = "analysis.json";
pub const ARCHIVE: &str = "archive.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const MANIFEST: &str = "manifest.json";

/// Parses `flat` or `step:<dh>@<x>` (a height change `dh` in m, negative
/// for a drop, from `x` onward).
pub fn parse_terrain(spec: &str) -> CliResult<Terrain> {
    if spec == "flat" {
        return Ok(Terrain::flat());
    }
    let bad = || CliError::Usage(format!("terrain must be `flat` or `step:<dh>@<x>`, got {spec:?}"));
    let rest = spec.strip_prefix("step:").ok_or_else(bad)?;
    let (dh, x) = rest.split_once('@').ok_or_else(bad)?;
    let dh: f64 = dh.parse().map_err(|_| bad())?;
    let x: f64 = x.parse().map_err(|_| bad())?;
    if !(dh.is_finite() && x.is_finite()) {
        return Err(bad());
    }
    Ok(Terrain::step_down(x, -dh)?)
}

/// Parses `default`, `published`, or `<archive.jsonl>[:<line>]` (0-based;
/// the best-cost record when the line is omitted).
pub fn parse_params(spec: &str, cfg: &RunConfig) -> CliResult<ControlParams> {
    match spec {
        "default" => return Ok(cfg.controller.defaults),
        "published" => return Ok(ControlParams::published()),
        _ => {}
    }
    let (path, line) = match spec.rsplit_once(':') {
        Some((p, n)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => {
            (p, Some(n.parse::<usize>().map_err(|e| CliError::Usage(e.to_string()))?))
        }
        _ => (spec, None),
    };
    let records = optimizer::read_archive(Path::new(path))?;
    let rec = match line {
        Some(i) => records.get(i),
        None => records.iter().min_by(|a, b| a.cost.total_cmp(&b.cost)),
    };
    rec.map(|r| r.params).ok_or_else(|| CliError::Usage(format!("no gait record selected by {spec:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
}

fn write_manifest(out: &Path, cfg: &RunConfig, command: &str, files: &[PathBuf]) -> CliResult<()> {
    let mut names: Vec<String> = files
        .iter()
        .map(|f| f.strip_prefix(out).unwrap_or(f).to_string_lossy().into_owned())
        .collect();
    names.sort();
    let m = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.optimizer.seed,
        files: names,
    };
    export::write_json(&out.join(MANIFEST), &m)
}

fn write_config_copy(out: &Path, cfg: &RunConfig) -> CliResult<PathBuf> {
    let p = out.join("config.toml");
    std::fs::write(&p, cfg.to_toml())?;
    Ok(p)
}

/// Full report of a trace: analysis JSON, plots and the data behind them.
fn write_analysis(out: &Path, cfg: &RunConfig, trace: &GaitTrace, params: ControlParams) -> CliResult<(AnalysisFile, Vec<PathBuf>)> {
    let walker = cfg.walker()?;
    let mut files = Vec::new();
    let report = analysis::analyze(&walker.model, trace);
    let file = AnalysisFile {
        params,
        termination: trace.termination,
        duration: trace.duration(),
        distance: trace.distance(),
        error: report.as_ref().err().map(|e| e.to_string()),
        report: report.ok(),
    };
    let p = out.join(ANALYSIS_JSON);
    export::write_json(&p, &file)?;
    files.push(p);
    if let Some(r) = &file.report {
        let p = out.join("ip_lines.csv");
        export::write_ip_lines_csv(&p, trace, &r.stride, r.ip.h_ip)?;
        files.push(p);
        let (f, c, m) = analysis::ip_window(trace, &r.stride)?;
        let rows: Vec<[f64; 4]> =
            (0..f.len()).map(|i| [f[i][0], f[i][1], c[i][0] - m[i][0], c[i][1] - m[i][1]]).collect();
        let p = out.join("ip_lines.svg");
        std::fs::write(&p, plot::ip_lines_svg(&rows, r.ip.h_ip))?;
        files.push(p);
        let rows = export::stance_rows(trace, &r.stride);
        let p = out.join("stance.csv");
        export::write_stance_csv(&p, &rows)?;
        files.push(p);
        let p = out.join("stance.svg");
        std::fs::write(&p, plot::stance_svg(&rows))?;
        files.push(p);
    }
    Ok((file, files))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary {
    pub termination: Termination,
    pub analysis: AnalysisFile,
    pub files: Vec<PathBuf>,
}

/// Simulates one gait and writes its bundle. Falls and integration failures
/// still write the bundle and then return a domain error.
pub fn rollout(cfg: &RunConfig, params: ControlParams, terrain: &Terrain, t_max: f64, out: &Path) -> CliResult<RolloutSummary> {
    let walker = cfg.walker()?;
    let trace = walker.rollout(&params, terrain, t_max);
    std::fs::create_dir_all(out)?;
    let mut files = vec![write_config_copy(out, cfg)?];
    let meta = TraceMeta {
        dt: trace.dt,
        termination: trace.termination,
        end_time: trace.end_time,
        terrain: trace.terrain.clone(),
        failure: trace.failure.clone(),
        solver: trace.solver,
        params,
        stance_threshold: walker.reflex.stance_threshold,
        stance_hysteresis: walker.reflex.stance_hysteresis,
        config_hash: cfg.hash(),
    };
    for (name, result) in [
        (TRACE_CSV, export::write_trace_csv(&out.join(TRACE_CSV), &trace)),
        (MUSCLE_CSV, export::write_muscle_csv(&out.join(MUSCLE_CSV), &trace)),
        ("events.csv", export::write_events_csv(&out.join("events.csv"), &trace)),
        (TRACE_META, export::write_json(&out.join(TRACE_META), &meta)),
    ] {
        result?;
        files.push(out.join(name));
    }
    let (analysis, more) = write_analysis(out, cfg, &trace, params)?;
    files.extend(more);
    write_manifest(out, cfg, "rollout", &files)?;
    let summary = RolloutSummary { termination: trace.termination, analysis, files };
    match trace.termination {
        Termination::Completed => Ok(summary),
        Termination::Fell => Err(CliError::Domain(format!(
            "model fell at t = {:.3} s after {:.2} m",
            trace.end_time.unwrap_or(f64::NAN),
            trace.distance()
        ))),
        Termination::IntegrationFailure => Err(CliError::Domain(format!(
            "integration failed: {}",
            trace.failure.as_deref().unwrap_or("unknown")
        ))),
    }
}

/// Reads a rollout bundle back from `run`.
pub fn load_trace(run: &Path) -> CliResult<(TraceMeta, GaitTrace)> {
    let meta: TraceMeta = export::read_json(&run.join(TRACE_META))?;
    let muscles = run.join(MUSCLE_CSV);
    let trace = export::read_trace(&run.join(TRACE_CSV), muscles.exists().then_some(muscles.as_path()), &meta)?;
    Ok((meta, trace))
}

/// Re-analyzes an exported trace.
pub fn analyze(cfg: &RunConfig, run: &Path, out: &Path) -> CliResult<AnalysisFile> {
    let (meta, trace) = load_trace(run)?;
    std::fs::create_dir_all(out)?;
    let (file, files) = write_analysis(out, cfg, &trace, meta.params)?;
    write_manifest(out, cfg, "analyze", &files)?;
    Ok(file)
}

/// Writes the PNG frames of an exported trace plus `frames.csv` listing
/// each frame's time, sample and drawn GRF arrows.
pub fn animate(cfg: &RunConfig, run: &Path, out: &Path) -> CliResult<usize> {
    let (_, trace) = load_trace(run)?;
    let walker = cfg.walker()?;
    let dir = out.join("frames");
    let mut files = animate::write_frames(&walker.model, &trace, &dir)?;
    let list = out.join("frames.csv");
    let mut w = csv::Writer::from_path(&list)?;
    w.write_record(["frame", "t", "sample", "arrow_left", "arrow_right"])?;
    for f in animate::frame_plan(&trace) {
        w.write_record([
            f.frame.to_string(),
            export::fmt17(f.t),
            f.sample.to_string(),
            f.arrows[0].to_string(),
            f.arrows[1].to_string(),
        ])?;
    }
    w.flush()?;
    let n = files.len();
    files.push(list);
    write_manifest(out, cfg, "animate", &files)?;
    Ok(n)
}

/// Runs (or resumes) an optimization, streaming archive lines and
/// per-generation progress.
pub fn optimize(
    cfg: &RunConfig,
    mode: Mode,
    out: &Path,
    resume: bool,
    log: &mut dyn FnMut(&GenerationLog),
) -> CliResult<optimizer::OptimizeResult> {
    let walker = cfg.walker()?;
    std::fs::create_dir_all(out)?;
    let ocfg = optimizer::OptimizeConfig {
        mode,
        archive_path: Some(out.join(ARCHIVE)),
        checkpoint_path: Some(out.join(CHECKPOINT)),
        ..cfg.optimize_config()
    };
    let ckpt = out.join(CHECKPOINT);
    let result = if resume {
        let c = Checkpoint::load(&ckpt)
            .map_err(|e| CliError::Usage(format!("cannot resume from {}: {e}", ckpt.display())))?;
        optimizer::resume(&walker, c, &ocfg, log)?
    } else {
        if ckpt.exists() || out.join(ARCHIVE).exists() {
            return Err(CliError::Usage(format!(
                "{} already holds an optimization; use --resume or another --out",
                out.display()
            )));
        }
        let state = optimizer::initial_state(&cfg.controller.defaults, &cfg.controller.bounds, &ocfg)?;
        optimizer::optimize_logged(&walker, &cfg.controller.bounds, state, &ocfg, log)?
    };
    let files = vec![write_config_copy(out, cfg)?, out.join(ARCHIVE), ckpt];
    write_manifest(out, cfg, "optimize", &files)?;
    Ok(result)
}

/// Step-down robustness of every archived gait (and optionally the default
/// gait), written as `robustness.csv`, `robustness.svg` and an updated
/// archive.
pub fn robustness(cfg: &RunConfig, archive: &Path, with_default: bool, out: &Path) -> CliResult<Vec<export::RobustnessRow>> {
    let walker = cfg.walker()?;
    let mut records = optimizer::read_archive(archive)?;
    let default = if with_default {
        let p = cfg.controller.defaults;
        let (sc, report) = optimizer::evaluate(&walker, &p, cfg.optimizer.mode, cfg.simulation.t_max);
        let mut rec = GaitRecord {
            generation: 0,
            index: 0,
            params: p,
            stage: sc.stage,
            cost: sc.cost,
            outcome: sc.outcome,
            r2: report.as_ref().map(|r| r.ip.r2),
            h_ip: report.as_ref().map(|r| r.ip.h_ip),
            speed: report.as_ref().map(|r| r.descriptors.speed),
            step_length: report.as_ref().map(|r| r.descriptors.step_length),
            cf: report.as_ref().map(|r| r.collision_fraction),
            max_step_down_cm: None,
            robustness_note: None,
        };
        optimizer::robustness_sweep(&walker, std::slice::from_mut(&mut rec), &cfg.robustness, true);
        Some(rec)
    } else {
        None
    };
    optimizer::robustness_sweep(&walker, &mut records, &cfg.robustness, true);
    for r in records.iter_mut().filter(|r| !r.is_steady()) {
        r.robustness_note = Some(format!("not steady (stage {})", r.stage));
    }
    std::fs::create_dir_all(out)?;
    let rows = export::robustness_rows(&records, default.as_ref());
    let csv_path = out.join("robustness.csv");
    export::write_robustness_csv(&csv_path, &rows)?;
    let svg_path = out.join("robustness.svg");
    std::fs::write(&svg_path, plot::robustness_svg(&rows))?;
    let arch = out.join("archive_robustness.jsonl");
    optimizer::write_archive(&arch, &records)?;
    write_manifest(out, cfg, "robustness", &[csv_path, svg_path, arch])?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terrain_specs() {
        assert_eq!(parse_terrain("flat").unwrap(), Terrain::flat());
        let t = parse_terrain("step:-0.03@2.5").unwrap();
        assert_eq!(t.height(2.4), 0.0);
        assert!((t.height(2.6) + 0.03).abs() < 1e-15);
        for bad in ["step", "step:-0.03", "step:x@1", "hill:1@2"] {
            assert!(matches!(parse_terrain(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn params_specs() {
        let cfg = RunConfig::default();
        assert_eq!(parse_params("default", &cfg).unwrap(), cfg.controller.defaults);
        assert_eq!(parse_params("published", &cfg).unwrap(), ControlParams::published());
        assert!(parse_params("/nonexistent/archive.jsonl:3", &cfg).is_err());
    }
}
