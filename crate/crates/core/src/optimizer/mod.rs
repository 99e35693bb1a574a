//! Gait search: CMA-ES over the reflex gains with a staged walking cost, an
//! archive of steady gaits, and robustness sweeps over that archive.

pub mod cmaes;
pub mod cost;

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cmaes::{CmaState, Population};
pub use cost::{assess, staged_cost, Mode, Outcome, StagedCost};

use crate::analysis;
use crate::dynamics::Terrain;
use crate::error::{Error, Result};
use crate::par;
use crate::reflex::{ControlParams, ParamBounds, N_PARAMS};
use crate::simulation::{step_down_robustness, step_down_robustness_sequential, StepDownConfig, Walker};

/// One evaluated candidate. Analysis fields are present only for steady
/// (stage-3) gaits; `max_step_down_cm` only after a robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitRecord {
    pub generation: u64,
    pub index: usize,
    pub params: ControlParams,
    pub stage: u8,
    pub cost: f64,
    pub outcome: Outcome,
    #[serde(default, with = "analysis::opt_float_sentinel")]
    pub r2: Option<f64>,
    #[serde(default, with = "analysis::opt_float_sentinel")]
    pub h_ip: Option<f64>,
    #[serde(default)]
    pub speed: Option<f64>,
    #[serde(default)]
    pub step_length: Option<f64>,
    #[serde(default)]
    pub cf: Option<f64>,
    #[serde(default)]
    pub max_step_down_cm: Option<u32>,
    #[serde(default)]
    pub robustness_note: Option<String>,
}

impl GaitRecord {
    pub fn is_steady(&self) -> bool {
        self.stage == 3
    }
}

/// Rolls out one parameter set on flat ground and scores it.
pub fn evaluate(walker: &Walker, params: &ControlParams, mode: Mode, t_max: f64) -> (StagedCost, Option<analysis::GaitReport>) {
    let trace = walker.rollout(params, &Terrain::flat(), t_max);
    let (outcome, report) = assess(walker, &trace, t_max);
    (staged_cost(outcome, mode), report)
}

fn record(generation: u64, index: usize, params: ControlParams, sc: StagedCost, report: Option<&analysis::GaitReport>) -> GaitRecord {
    GaitRecord {
        generation,
        index,
        params,
        stage: sc.stage,
        cost: sc.cost,
        outcome: sc.outcome,
        r2: report.map(|r| r.ip.r2),
        h_ip: report.map(|r| r.ip.h_ip),
        speed: report.map(|r| r.descriptors.speed),
        step_length: report.map(|r| r.descriptors.step_length),
        cf: report.map(|r| r.collision_fraction),
        max_step_down_cm: None,
        robustness_note: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub mode: Mode,
    /// Total rollouts; at least one full generation is always run.
    pub budget: u64,
    pub seed: u64,
    /// Initial step size in the normalized `[0, 1]^12` box.
    pub sigma0: f64,
    pub t_max: f64,
    /// Population size; `None` uses the CMA-ES default.
    pub lambda: Option<usize>,
    pub parallel: bool,
    /// JSON-lines file receiving every steady gait as it is found.
    pub archive_path: Option<PathBuf>,
    /// Optimizer state written after every generation.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::MinR2,
            budget: 2000,
            seed: 1,
            sigma0: 0.1,
            t_max: 20.0,
            lambda: None,
            parallel: true,
            archive_path: None,
            checkpoint_path: None,
        }
    }
}

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: CmaState,
    pub bounds: ParamBounds,
    pub mode: Mode,
    pub best: Option<GaitRecord>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename keeps the previous checkpoint intact on a crash
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    /// Steady gaits found in this run, by ascending R².
    pub archive: Vec<GaitRecord>,
    /// Lowest-cost candidate of any stage.
    pub best: Option<GaitRecord>,
    pub state: CmaState,
}

impl OptimizeResult {
    /// Lowest-cost steady gait, or [`Error::NoViableGait`].
    pub fn best_steady(&self) -> Result<&GaitRecord> {
        self.best.as_ref().filter(|b| b.is_steady()).ok_or(Error::NoViableGait)
    }
}

/// Per-generation progress report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: u64,
    pub evaluations: u64,
    pub sigma: f64,
    /// Lowest cost of this generation and its stage.
    pub best_cost: f64,
    pub best_stage: u8,
    pub steady: usize,
    /// Lowest cost seen so far.
    pub overall_best: f64,
}

/// Fresh optimizer state centered on `init`.
pub fn initial_state(init: &ControlParams, bounds: &ParamBounds, cfg: &OptimizeConfig) -> Result<CmaState> {
    bounds.validate()?;
    let mean = bounds.encode(init).to_vec();
    let mut st = CmaState::new(mean, cfg.sigma0, cfg.seed)?.with_bounds(vec![0.0; N_PARAMS], vec![1.0; N_PARAMS])?;
    if let Some(l) = cfg.lambda {
        st = st.with_lambda(l);
    }
    Ok(st)
}

/// Runs CMA-ES from `state` until the evaluation budget is spent. Steady gaits
/// are appended to `cfg.archive_path` as they appear.
pub fn optimize(walker: &Walker, bounds: &ParamBounds, state: CmaState, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    optimize_logged(walker, bounds, state, cfg, &mut |_| {})
}

/// [`optimize`] with a callback after every generation.
pub fn optimize_logged(
    walker: &Walker,
    bounds: &ParamBounds,
    mut state: CmaState,
    cfg: &OptimizeConfig,
    log: &mut dyn FnMut(&GenerationLog),
) -> Result<OptimizeResult> {
    optimize_from(walker, bounds, &mut state, None, cfg, log)
        .map(|(archive, best)| OptimizeResult { archive: sorted_by_r2(&archive), best, state })
}

/// Minimizes `R² + w·CF` from `init`; the returned archive can be checked
/// with [`cf_query`] for focused-free, collision-poor gaits.
pub fn cf_constrained_optimize(
    walker: &Walker,
    init: &ControlParams,
    bounds: &ParamBounds,
    cf_weight: f64,
    cfg: &OptimizeConfig,
) -> Result<OptimizeResult> {
    let cfg = OptimizeConfig { mode: Mode::MinR2Cf { cf_weight }, ..cfg.clone() };
    optimize(walker, bounds, initial_state(init, bounds, &cfg)?, &cfg)
}

/// Resumes from a checkpoint written by an earlier [`optimize`] call. Archive
/// lines from generations the checkpoint does not cover (written before an
/// interruption) are dropped first, so the archive matches an uninterrupted
/// run.
pub fn resume(
    walker: &Walker,
    checkpoint: Checkpoint,
    cfg: &OptimizeConfig,
    log: &mut dyn FnMut(&GenerationLog),
) -> Result<OptimizeResult> {
    let Checkpoint { mut state, bounds, best, .. } = checkpoint;
    if let Some(path) = cfg.archive_path.as_deref().filter(|p| p.exists()) {
        let kept: Vec<GaitRecord> =
            read_archive(path)?.into_iter().filter(|r| r.generation < state.generation).collect();
        write_archive(path, &kept)?;
    }
    optimize_from(walker, &bounds, &mut state, best, cfg, log)
        .map(|(archive, best)| OptimizeResult { archive: sorted_by_r2(&archive), best, state })
}

fn optimize_from(
    walker: &Walker,
    bounds: &ParamBounds,
    state: &mut CmaState,
    mut best: Option<GaitRecord>,
    cfg: &OptimizeConfig,
    log: &mut dyn FnMut(&GenerationLog),
) -> Result<(Vec<GaitRecord>, Option<GaitRecord>)> {
    if state.dim() != N_PARAMS {
        return Err(Error::WrongCount { expected: N_PARAMS, got: state.dim() });
    }
    let mut archive = Vec::new();
    let mut sink = match &cfg.archive_path {
        Some(p) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };
    let mut first = true;
    while first || state.evaluations + state.lambda() as u64 <= cfg.budget {
        first = false;
        let pop = state.ask();
        let params: Vec<ControlParams> = pop
            .candidates
            .iter()
            .map(|x| bounds.decode(&std::array::from_fn(|i| x[i])).0)
            .collect();
        let eval = |p: &ControlParams| evaluate(walker, p, cfg.mode, cfg.t_max);
        let results = if cfg.parallel { par::map(&params, eval) } else { par::map_sequential(&params, eval) };
        let costs: Vec<f64> = results.iter().map(|(sc, _)| sc.cost).collect();
        let mut gen_best: Option<&StagedCost> = None;
        for (sc, _) in &results {
            if gen_best.is_none_or(|b| sc.cost < b.cost) {
                gen_best = Some(sc);
            }
        }
        let gen_best = *gen_best.expect("population is not empty");
        let steady_before = archive.len();
        for (i, ((sc, report), p)) in results.iter().zip(&params).enumerate() {
            let rec = record(pop.generation, i, *p, *sc, report.as_ref());
            if best.as_ref().is_none_or(|b| rec.cost < b.cost) {
                best = Some(rec.clone());
            }
            if rec.is_steady() {
                if let Some(w) = sink.as_mut() {
                    serde_json::to_writer(&mut *w, &rec)?;
                    w.write_all(b"\n")?;
                }
                archive.push(rec);
            }
        }
        if let Some(w) = sink.as_mut() {
            w.flush()?;
        }
        state.tell(&pop, &costs)?;
        if let Some(path) = &cfg.checkpoint_path {
            Checkpoint { state: state.clone(), bounds: bounds.clone(), mode: cfg.mode, best: best.clone() }.save(path)?;
        }
        log(&GenerationLog {
            generation: pop.generation,
            evaluations: state.evaluations,
            sigma: state.sigma,
            best_cost: gen_best.cost,
            best_stage: gen_best.stage,
            steady: archive.len() - steady_before,
            overall_best: best.as_ref().map_or(f64::INFINITY, |b| b.cost),
        });
    }
    Ok((archive, best))
}

/// Reads a JSON-lines archive; blank lines are skipped.
pub fn read_archive(path: &Path) -> Result<Vec<GaitRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_archive(path: &Path, records: &[GaitRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Steady gaits ordered by ascending R².
pub fn sorted_by_r2(records: &[GaitRecord]) -> Vec<GaitRecord> {
    let mut v: Vec<GaitRecord> = records.iter().filter(|r| r.r2.is_some()).cloned().collect();
    v.sort_by(|a, b| a.r2.unwrap().total_cmp(&b.r2.unwrap()));
    v
}

/// Measures the step-down robustness of every steady gait in place. Gaits
/// are spread over the thread pool when there are enough of them; otherwise
/// each gait's drop heights are.
pub fn robustness_sweep(walker: &Walker, records: &mut [GaitRecord], cfg: &StepDownConfig, parallel: bool) {
    let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].is_steady()).collect();
    let params: Vec<ControlParams> = idx.iter().map(|&i| records[i].params).collect();
    let outcomes = if parallel && params.len() >= par::width() {
        par::map(&params, |p| step_down_robustness_sequential(walker, p, cfg))
    } else if parallel {
        par::map_sequential(&params, |p| step_down_robustness(walker, p, cfg))
    } else {
        par::map_sequential(&params, |p| step_down_robustness_sequential(walker, p, cfg))
    };
    for (i, o) in idx.into_iter().zip(outcomes) {
        let r = &mut records[i];
        r.max_step_down_cm = o.max_height_cm();
        r.robustness_note = r.max_step_down_cm.is_none().then(|| "unstable on flat ground".to_string());
    }
}

/// Gaits satisfying `R² < r2_max` and `CF < cf_max`.
pub fn cf_query(records: &[GaitRecord], r2_max: f64, cf_max: f64) -> Vec<&GaitRecord> {
    records
        .iter()
        .filter(|r| matches!((r.r2, r.cf), (Some(r2), Some(cf)) if r2 < r2_max && cf < cf_max))
        .collect()
}

/// `(R², max step-down cm, CF)` rows of swept steady gaits, by ascending R².
pub fn robustness_table(records: &[GaitRecord]) -> Vec<(f64, Option<u32>, f64)> {
    sorted_by_r2(records)
        .into_iter()
        .map(|r| (r.r2.unwrap(), r.max_step_down_cm, r.cf.unwrap_or(f64::NAN)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(r2: Option<f64>, cf: Option<f64>) -> GaitRecord {
        GaitRecord {
            generation: 0,
            index: 0,
            params: ControlParams::published(),
            stage: if r2.is_some() { 3 } else { 1 },
            cost: 0.0,
            outcome: Outcome::Fell { distance: 0.0, time: 0.0 },
            r2,
            h_ip: r2.map(|_| f64::NEG_INFINITY),
            speed: None,
            step_length: None,
            cf,
            max_step_down_cm: None,
            robustness_note: None,
        }
    }

    #[test]
    fn query_filters_both_conditions() {
        let rs = vec![rec(Some(-2.0), Some(0.5)), rec(Some(-2.0), Some(0.7)), rec(Some(0.5), Some(0.1)), rec(None, None)];
        assert_eq!(cf_query(&rs, -1.0, 0.6).len(), 1);
    }

    #[test]
    fn sorting_drops_unanalyzed() {
        let rs = vec![rec(Some(0.3), None), rec(None, None), rec(Some(-1.0), None)];
        let s = sorted_by_r2(&rs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].r2, Some(-1.0));
    }

    #[test]
    fn record_json_round_trip() {
        let r = rec(Some(f64::NEG_INFINITY), Some(0.2));
        let s = serde_json::to_string(&r).unwrap();
        let back: GaitRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.r2, Some(f64::NEG_INFINITY));
        assert_eq!(back.h_ip, Some(f64::NEG_INFINITY));
        assert_eq!(back.cf, Some(0.2));
    }
}
