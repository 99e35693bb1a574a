//! Walks the default gait (or twelve gains given on the command line) for
//! 20 s on flat ground and prints the gait analysis.

use neurowalk::analysis;
use neurowalk::dynamics::Terrain;
use neurowalk::reflex::ControlParams;
use neurowalk::simulation::Walker;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let params = if args.is_empty() { ControlParams::default() } else { ControlParams::from_slice(&args)? };
    let walker = Walker::default_model()?;
    let t0 = std::time::Instant::now();
    let trace = walker.rollout(&params, &Terrain::flat(), 20.0);
    println!(
        "{:?} after {:.2} s, {:.2} m ({:.1} s wall)",
        trace.termination,
        trace.duration(),
        trace.distance(),
        t0.elapsed().as_secs_f64()
    );
    let r = analysis::analyze(&walker.model, &trace)?;
    println!(
        "R² {:.4}  h_ip {:.3} m  CF {:.3}  speed {:.3} m/s  step {:.3} m  cadence {:.2} steps/s  MoS spread {:.2} mm  steady {}",
        r.ip.r2,
        r.ip.h_ip,
        r.collision_fraction,
        r.descriptors.speed,
        r.descriptors.step_length,
        r.descriptors.cadence,
        r.stability.spread * 1e3,
        r.stability.steady
    );
    Ok(())
}
