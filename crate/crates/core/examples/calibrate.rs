//! Max-R² search starting from the published gains, one generation at a
//! time with a checkpoint after each; rerunning continues where it stopped.
//!
//! `cargo run --release --example calibrate -- [budget] [checkpoint.json]`

use std::path::PathBuf;

use neurowalk::optimizer::{self, Checkpoint, Mode, OptimizeConfig};
use neurowalk::reflex::{ControlParams, ParamBounds};
use neurowalk::simulation::Walker;

fn main() -> neurowalk::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let budget: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let ckpt = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "calibrate-checkpoint.json".into()));
    let walker = Walker::default_model()?;
    let init = ControlParams::published();
    let bounds = ParamBounds::around(&init);
    let cfg = OptimizeConfig { mode: Mode::max_r2(), sigma0: 0.15, seed: 7, checkpoint_path: Some(ckpt.clone()), ..Default::default() };
    let mut state = match Checkpoint::load(&ckpt) {
        Ok(c) => c.state,
        Err(_) => optimizer::initial_state(&init, &bounds, &cfg)?,
    };
    let mut best: Option<optimizer::GaitRecord> = Checkpoint::load(&ckpt).ok().and_then(|c| c.best);
    while state.evaluations < budget {
        let step = OptimizeConfig { budget: state.evaluations + state.lambda() as u64, ..cfg.clone() };
        let ck = Checkpoint { state: state.clone(), bounds: bounds.clone(), mode: cfg.mode, best: best.clone() };
        let r = optimizer::resume(&walker, ck, &step, &mut |_| {})?;
        state = r.state;
        best = r.best;
        let b = best.as_ref().unwrap();
        println!(
            "gen {:4} evals {:6} sigma {:.4} best cost {:.4} stage {} {:?}",
            state.generation, state.evaluations, state.sigma, b.cost, b.stage, b.outcome
        );
        println!("  params {:?}", b.params.to_array());
    }
    Ok(())
}
