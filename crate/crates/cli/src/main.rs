use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use neurowalk::optimizer::Mode;
use neurowalk_cli::commands;
use neurowalk_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "neurowalk", version, about = "Neuromuscular walking simulation, optimization and gait analysis")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the environment and the config).
    #[arg(long, global = true, env = "NEUROWALK_OUT")]
    out: Option<PathBuf>,
    /// Overrides optimizer.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// J = R²
    MinR2,
    /// J = 1 − R² + |v − v_tgt|
    MaxR2,
    /// J = R² + w·CF
    MinR2Cf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one gait and write trace, analysis and plots.
    Rollout {
        /// `default`, `published`, or `<archive.jsonl>[:<line>]`.
        #[arg(long, default_value = "default")]
        params: String,
        /// `flat` or `step:<dh>@<x>`, e.g. `step:-0.03@4.2`.
        #[arg(long, default_value = "flat")]
        terrain: String,
        /// Simulated duration, s (defaults to simulation.t_max).
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Search reflex gains with CMA-ES, archiving steady gaits.
    Optimize {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Target speed of `max-r2`, m/s.
        #[arg(long, default_value_t = neurowalk::optimizer::cost::TARGET_SPEED)]
        vtgt: f64,
        /// Weight of CF in `min-r2-cf`.
        #[arg(long, default_value_t = 1.0)]
        cf_weight: f64,
        /// Rollout budget (overrides optimizer.budget).
        #[arg(long)]
        budget: Option<u64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Step-down robustness of archived gaits.
    Robustness {
        #[arg(long)]
        archive: PathBuf,
        /// Also measure the default gait (drawn as a black marker).
        #[arg(long)]
        with_default: bool,
    },
    /// Re-analyze the trace of an earlier rollout.
    Analyze {
        /// Directory written by `rollout`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Render stick-figure frames of an earlier rollout at 25 fps.
    Animate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Print the built-in configuration as TOML.
    DefaultConfig,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.optimizer.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    match cli.command {
        Command::DefaultConfig => {
            print!("{}", cfg.to_toml());
        }
        Command::Rollout { params, terrain, t_max } => {
            let p = commands::parse_params(&params, &cfg)?;
            let terrain = commands::parse_terrain(&terrain)?;
            let t_max = t_max.unwrap_or(cfg.simulation.t_max);
            if !(t_max > 0.0 && t_max.is_finite()) {
                return Err(CliError::Usage("--t-max must be positive".into()));
            }
            let s = commands::rollout(&cfg, p, &terrain, t_max, &out)?;
            match &s.analysis.report {
                Some(r) => println!(
                    "walked {:.2} m in {:.2} s: R² = {:.4}, h_ip = {:.4} m, CF = {:.4}, speed = {:.3} m/s, step = {:.3} m, steady = {}",
                    s.analysis.distance,
                    s.analysis.duration,
                    r.ip.r2,
                    r.ip.h_ip,
                    r.collision_fraction,
                    r.descriptors.speed,
                    r.descriptors.step_length,
                    r.stability.steady
                ),
                None => println!(
                    "walked {:.2} m in {:.2} s; not analyzable: {}",
                    s.analysis.distance,
                    s.analysis.duration,
                    s.analysis.error.as_deref().unwrap_or("")
                ),
            }
        }
        Command::Optimize { mode, vtgt, cf_weight, budget, resume } => {
            if let Some(b) = budget {
                cfg.optimizer.budget = b;
            }
            let mode = match mode {
                None => cfg.optimizer.mode,
                Some(ModeArg::MinR2) => Mode::MinR2,
                Some(ModeArg::MaxR2) => Mode::MaxR2 { target_speed: vtgt },
                Some(ModeArg::MinR2Cf) => Mode::MinR2Cf { cf_weight },
            };
            cfg.optimizer.mode = mode;
            cfg.validate()?;
            let result = commands::optimize(&cfg, mode, &out, resume, &mut |g| {
                println!(
                    "generation {:4}  evaluations {:6}  sigma {:.4e}  best J {:.6}  (stage {})  steady {}  overall best J {:.6}",
                    g.generation, g.evaluations, g.sigma, g.best_cost, g.best_stage, g.steady, g.overall_best
                );
            })?;
            let best = result.best_steady()?;
            println!(
                "best steady gait: J = {:.6}, R² = {:.4}, speed = {:.3} m/s; {} steady gaits archived",
                best.cost,
                best.r2.unwrap_or(f64::NAN),
                best.speed.unwrap_or(f64::NAN),
                result.archive.len()
            );
        }
        Command::Robustness { archive, with_default } => {
            let rows = commands::robustness(&cfg, &archive, with_default, &out)?;
            for r in &rows {
                let h = r.max_h_cm.map_or("-".to_string(), |h| format!("{h} cm"));
                println!("{:>16}  R² {:>10.4}  max step-down {:>6}  CF {:.4}  {}", r.gait_id, r.r2, h, r.cf, r.note);
            }
        }
        Command::Analyze { run } => {
            let a = commands::analyze(&cfg, &run, &out)?;
            match (a.report, a.error) {
                (Some(r), _) => println!("R² = {:.6}, h_ip = {:.4} m, CF = {:.4}", r.ip.r2, r.ip.h_ip, r.collision_fraction),
                (None, Some(e)) => return Err(CliError::Domain(format!("trace not analyzable: {e}"))),
                (None, None) => unreachable!("analysis without report carries an error"),
            }
        }
        Command::Animate { run } => {
            let n = commands::animate(&cfg, &run, &out)?;
            println!("wrote {n} frames to {}", out.join("frames").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
