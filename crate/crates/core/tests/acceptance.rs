//! Acceptance checks: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release -p neurowalk --test acceptance`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neurowalk::analysis::{self, STEADY_SPREAD};
use neurowalk::dynamics::integrator::{integrate, OdeSystem, Tolerances};
use neurowalk::dynamics::{Model, ModelState, Support, Terrain, ITRUNK, IX, IY, NQ};
use neurowalk::optimizer::cmaes::minimize;
use neurowalk::optimizer::{self, staged_cost, GaitRecord, Mode, OptimizeConfig, Outcome};
use neurowalk::reflex::{ControlParams, ParamBounds};
use neurowalk::simulation::{search_heights, step_down_robustness, StepDownConfig, StepDownTrial, Termination, Walker};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

// 1. h_ip = 1 ± 1e-3 m, R² ≥ 1 − 1e-9, < 1 s.
fn ip_exactness(r: &mut Report) {
    let ((h, r2), dt) = timed(|| {
        let n = 50;
        let coms: Vec<[f64; 2]> = (0..n).map(|i| [0.02 * i as f64, 1.0]).collect();
        let cops: Vec<[f64; 2]> = coms.iter().enumerate().map(|(i, c)| [c[0] - 0.15 + 0.3 * i as f64 / 49.0, 0.0]).collect();
        // lines through (com_x, com_y + 1.0)
        let forces: Vec<[f64; 2]> = cops
            .iter()
            .zip(&coms)
            .map(|(p, c)| [(c[0] - p[0]) * 600.0, (c[1] + 1.0 - p[1]) * 600.0])
            .collect();
        let res = analysis::ip_regression(&forces, &cops, &coms).unwrap();
        (res.h_ip, res.r2)
    });
    let pass = (h - 1.0).abs() <= 1e-3 && r2 >= 1.0 - 1e-9 && dt < Duration::from_secs(1);
    r.line(1, "IP exactness", pass, format!("h_ip = {h:.6} m, R² = {r2:.12}, {:.1} ms", dt.as_secs_f64() * 1e3));
}

// 2. Parallel forces → −∞; near-parallel family decreasing below −1e3.
fn ip_degenerate(r: &mut Report) {
    let n = 40;
    let coms = vec![[0.0, 1.0]; n];
    let cops: Vec<[f64; 2]> = (0..n).map(|i| [-0.15 + 0.3 * i as f64 / (n - 1) as f64, 0.0]).collect();
    let parallel = analysis::ip_regression(&vec![[80.0, 790.0]; n], &cops, &coms).unwrap();
    let family: Vec<f64> = [1e-4, 1e-5, 1e-6, 1e-7]
        .iter()
        .map(|eps| {
            let forces: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let a = 0.1 + eps * if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + (i % 7) as f64 / 7.0);
                    [a.sin() * 800.0, a.cos() * 800.0]
                })
                .collect();
            analysis::ip_regression(&forces, &cops, &coms).unwrap().r2
        })
        .collect();
    let monotone = family.windows(2).all(|w| w[1] < w[0]);
    let pass = parallel.degenerate && parallel.r2 == f64::NEG_INFINITY && monotone && family[0] < -1e3;
    r.line(2, "IP degenerate limit", pass, format!("parallel R² = {}, family R² = {:?}", parallel.r2, family.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()));
}

// 3. CF = 0 for a rolling wheel, 1 for collinear F‖v, in [0, 1] on 1000 random samples.
fn cf_bounds(r: &mut Report) {
    let v: Vec<[f64; 2]> = (0..50).map(|i| [1.2, -0.3 + 0.6 * i as f64 / 49.0]).collect();
    let wheel: Vec<[f64; 2]> = v.iter().map(|v| [-v[1] * 700.0, v[0] * 700.0]).collect();
    let cf0 = analysis::collision_fraction(&wheel, &v).unwrap().cf;
    let up: Vec<[f64; 2]> = (0..50).map(|i| [1.2, 0.05 + 0.5 * i as f64 / 49.0]).collect();
    let along: Vec<[f64; 2]> = up.iter().map(|v| [v[0] * 700.0, v[1] * 700.0]).collect();
    let cf1 = analysis::collision_fraction(&along, &up).unwrap().cf;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let m = rng.random_range(10..80);
        let f: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(-300.0..300.0), rng.random_range(1.0..1600.0)]).collect();
        let v: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(0.3..2.0), rng.random_range(-0.5..0.5)]).collect();
        let cf = analysis::collision_fraction(&f, &v).unwrap().cf;
        lo = lo.min(cf);
        hi = hi.max(cf);
    }
    let pass = cf0.abs() <= 1e-9 && (cf1 - 1.0).abs() <= 1e-9 && lo >= 0.0 && hi <= 1.0;
    r.line(3, "collision fraction bounds", pass, format!("wheel {cf0:.2e}, collinear {cf1:.12}, random range [{lo:.4}, {hi:.4}]"));
}

// 4. Hof example 0.0542 ± 1e-4; strict steadiness at 0.75 cm.
fn mos(r: &mut Report) {
    let m = analysis::margin_of_stability(0.0, 0.3, 1.0, 0.15, 9.81).unwrap();
    let at = |s: f64| analysis::steadiness(&[0.0, s, 0.0, 0.0, 0.0, 0.0]).unwrap().steady;
    let below = at(STEADY_SPREAD - 1e-12);
    let exact = at(STEADY_SPREAD);
    let pass = (m - 0.0542).abs() <= 1e-4 && below && !exact;
    r.line(4, "margin of stability", pass, format!("MoS = {m:.6} m; steady at 0.75 cm − 1e-12: {below}, at 0.75 cm: {exact}"));
}

// 5. The min-R² cost returns R², the max-R² cost of (0.9, 1.30 m/s) returns 0.15, stage dominance.
fn staged(r: &mut Report) {
    let min_cost = staged_cost(Outcome::Steady { r2: -12.5, speed: 1.3, cf: 0.7 }, Mode::MinR2).cost;
    let max_cost = staged_cost(Outcome::Steady { r2: 0.9, speed: 1.30, cf: 0.7 }, Mode::max_r2()).cost;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut dominance = true;
    for _ in 0..10_000 {
        let fell = Outcome::Fell { distance: rng.random_range(-5.0..1e4), time: rng.random_range(0.0..20.0) };
        let unsteady = Outcome::Unsteady { spread: rng.random_range(0.0..1e4) };
        let steady = Outcome::Steady {
            r2: rng.random_range(-1e4..1.0),
            speed: rng.random_range(0.0..3.0),
            cf: rng.random_range(0.0..1.0),
        };
        for mode in [Mode::MinR2, Mode::max_r2(), Mode::min_r2_cf()] {
            let [a, b, c] = [fell, unsteady, steady].map(|o| staged_cost(o, mode).cost);
            dominance &= a > b && b > c;
        }
    }
    // 0.15 is not representable; allow rounding of the three-term sum
    let pass = min_cost == -12.5 && (max_cost - 0.15).abs() <= 4.0 * f64::EPSILON && dominance;
    r.line(5, "staged cost arithmetic", pass, format!("min-R² cost → {min_cost}, max-R² cost → {max_cost:.17}, dominance over 30000 triples: {dominance}"));
}

// 6. CMA-ES benchmarks.
fn cma(r: &mut Report) {
    let sphere = |x: &[f64]| x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>();
    let rosen = |x: &[f64]| x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum::<f64>();
    let ((_, fs, es), ts) = timed(|| minimize(sphere, vec![0.8; 12], 0.3, 3, 1e-8, 15_000).unwrap());
    let ((_, fr, er), tr) = timed(|| minimize(rosen, vec![0.0; 5], 0.5, 5, 1e-6, 50_000).unwrap());
    let again = minimize(sphere, vec![0.8; 12], 0.3, 3, 1e-8, 15_000).unwrap();
    let det = again.1.to_bits() == fs.to_bits() && again.2 == es;
    let minute = Duration::from_secs(60);
    let pass = fs < 1e-8 && es <= 15_000 && fr < 1e-6 && er <= 50_000 && det && ts < minute && tr < minute;
    r.line(
        6,
        "CMA-ES benchmarks",
        pass,
        format!(
            "sphere-12 {fs:.2e} in {es} evals ({:.2} s), rosenbrock-5 {fr:.2e} in {er} evals ({:.2} s), deterministic: {det}",
            ts.as_secs_f64(),
            tr.as_secs_f64()
        ),
    );
}

struct Passive<'a> {
    model: &'a Model,
    support: Support,
}

impl OdeSystem for Passive<'_> {
    fn dim(&self) -> usize {
        2 * NQ
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let s = ModelState { t, q: y[..NQ].try_into().unwrap(), qd: y[NQ..].try_into().unwrap() };
        let qdd = self.model.forward_dynamics(&s, &[0.0; 6], &[], self.support).unwrap();
        dy[..NQ].copy_from_slice(&s.qd);
        dy[NQ..].copy_from_slice(&qdd);
    }
}

fn com_acceleration(model: &Model, s: &ModelState) -> [f64; 2] {
    let qdd = model.forward_dynamics(s, &[0.0; 6], &[], Support::Free).unwrap();
    let h = 1e-6;
    let shifted = |sign: f64| {
        let mut x = *s;
        for i in 0..NQ {
            x.q[i] += sign * h * s.qd[i];
            x.qd[i] += sign * h * qdd[i];
        }
        model.com_state(&x).1
    };
    let (a, b) = (shifted(1.0), shifted(-1.0));
    [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
}

// 7. Free fall, passive energy drift, contact invariants on a 20 s trace.
fn physics(r: &mut Report, walker: &Walker, trace: &neurowalk::simulation::GaitTrace) {
    let model = &walker.model;
    let mut s = model.standing_state();
    s.q[IY] += 1.0;
    s.q[ITRUNK] = 0.3;
    s.q[3] = -0.4;
    s.q[4] = -0.7;
    s.qd[IX] = 1.1;
    s.qd[ITRUNK] = -0.8;
    s.qd[7] = 2.5;
    let acc = com_acceleration(model, &s);
    let ff = acc[0].abs() < 1e-5 && (acc[1] + model.gravity).abs() < 1e-5;

    let mut p = model.standing_state();
    p.q[ITRUNK] = std::f64::consts::PI - 0.4;
    p.q[3] = 0.5;
    p.q[6] = -0.3;
    p.q[5] = 0.6;
    let mut rest = model.standing_state();
    rest.q[ITRUNK] = std::f64::consts::PI;
    rest.q[5] = std::f64::consts::FRAC_PI_2;
    rest.q[8] = std::f64::consts::FRAC_PI_2;
    let e_rest = model.mechanical_energy(&rest);
    let sys = Passive { model, support: Support::PinnedHip };
    let y0: Vec<f64> = p.q.iter().chain(&p.qd).copied().collect();
    let tol = Tolerances { rel: 1e-9, abs: 1e-10, max_step: 1e-3, min_step: 1e-14 };
    let traj = integrate(&sys, 0.0, &y0, 5.0, tol, 0.01);
    let energy = |y: &[f64]| {
        model.mechanical_energy(&ModelState { t: 0.0, q: y[..NQ].try_into().unwrap(), qd: y[NQ..].try_into().unwrap() })
    };
    let e0 = energy(&y0);
    let drift = traj.states.iter().map(|y| (energy(y) - e0).abs()).fold(0.0, f64::max) / (e0 - e_rest);
    let complete = traj.failure.is_none() && (traj.times.last().unwrap() - 5.0).abs() < 1e-9;

    let mu = model.contact.friction;
    let mut cone = trace.samples.len() > 0;
    let mut normal = true;
    for smp in &trace.samples {
        for f in smp.grf {
            normal &= f[1] >= 0.0;
            cone &= f[0].abs() <= mu * f[1] + 1e-9;
        }
    }
    let long = trace.termination == Termination::Completed && trace.duration() >= 20.0 - 1e-9;
    let pass = ff && drift < 1e-3 && complete && cone && normal && long;
    r.line(
        7,
        "physics suite",
        pass,
        format!(
            "free-fall a = ({:.2e}, {:.6}) m/s², pendulum drift {:.3e} of swing energy over 5 s, \
             friction cone {cone} and F_n ≥ 0 {normal} on {} samples",
            acc[0],
            acc[1],
            drift,
            trace.samples.len()
        ),
    );
}

// 8. Default gait: ≥ 20 s, steady, descriptors in the soft windows.
fn walking(r: &mut Report, walker: &Walker, trace: &neurowalk::simulation::GaitTrace, wall: Duration) -> Option<f64> {
    let report = analysis::analyze(&walker.model, trace);
    let long = trace.termination == Termination::Completed && trace.duration() >= 20.0 - 1e-9;
    match report {
        Ok(rep) => {
            let d = rep.descriptors;
            let ok_v = (d.speed - 1.36).abs() <= 0.15;
            let ok_l = (d.step_length - 0.77).abs() <= 0.10;
            let ok_r = (rep.ip.r2 - 0.83).abs() <= 0.15;
            let pass = long && rep.stability.steady && ok_v && ok_l && ok_r;
            r.line(
                8,
                "default gait walks",
                pass,
                format!(
                    "{:.1} s, steady {} (spread {:.2} mm), speed {:.3} m/s, step {:.3} m, R² {:.3}, h_ip {:.3} m, CF {:.3}, sim {:.1} s wall",
                    trace.duration(),
                    rep.stability.steady,
                    rep.stability.spread * 1e3,
                    d.speed,
                    d.step_length,
                    rep.ip.r2,
                    rep.ip.h_ip,
                    rep.collision_fraction,
                    wall.as_secs_f64()
                ),
            );
            Some(rep.ip.r2)
        }
        Err(e) => {
            r.line(8, "default gait walks", false, format!("{:?} after {:.2} s: {e}", trace.termination, trace.duration()));
            None
        }
    }
}

// 9. Step-down protocol: 1 cm failure → 0, 1 cm increments, default ≈ 3 cm (soft).
fn robustness(r: &mut Report, walker: &Walker, params: &ControlParams) {
    let fake = |fail: u32| {
        move |h: u32| StepDownTrial { height_cm: h, success: h < fail, termination: Termination::Completed, steps_after: 0 }
    };
    let (zero, _) = search_heights(15, 4, true, fake(1));
    let (_, trials) = search_heights(15, 3, true, fake(9));
    let steps: Vec<u32> = trials.iter().map(|t| t.height_cm).collect();
    let increments = steps == (1..=9).collect::<Vec<_>>();
    let (outcome, dt) = timed(|| step_down_robustness(walker, params, &StepDownConfig::default()));
    let measured = outcome.max_height_cm();
    let tried: Vec<u32> = match &outcome {
        neurowalk::simulation::RobustnessOutcome::Measured { trials, .. } => trials.iter().map(|t| t.height_cm).collect(),
        _ => vec![],
    };
    let real_increments = tried.iter().enumerate().all(|(i, h)| *h == i as u32 + 1);
    let soft = match measured {
        Some(h) if (2..=5).contains(&h) => format!("default gait {h} cm (within the 2–5 cm soft window)"),
        Some(h) => format!("default gait {h} cm (outside the 2–5 cm soft window; reported only)"),
        None => "default gait not measurable (unstable on flat ground)".to_string(),
    };
    let pass = zero == 0 && increments && real_increments && measured.is_some();
    r.line(9, "step-down protocol", pass, format!("1 cm failure → {zero} cm, heights tried {tried:?}, {soft}, {:.1} s", dt.as_secs_f64()));
}

// 10. Short min-R² run goes below the default R², max-R² run above it.
fn direction(r: &mut Report, walker: &Walker, params: &ControlParams, default_r2: Option<f64>) {
    let Some(d) = default_r2 else {
        r.line(10, "optimization direction", false, "default gait has no R²".into());
        return;
    };
    let bounds = ParamBounds::around(params);
    let run = |mode: Mode| {
        let cfg = OptimizeConfig { mode, budget: 44, seed: 17, sigma0: 0.05, ..Default::default() };
        let state = optimizer::initial_state(params, &bounds, &cfg).unwrap();
        optimizer::optimize(walker, &bounds, state, &cfg).unwrap()
    };
    let r2s = |a: &[GaitRecord]| a.iter().filter_map(|g| g.r2).collect::<Vec<f64>>();
    let ((lo, hi), dt) = timed(|| {
        let lo = r2s(&run(Mode::MinR2).archive).into_iter().fold(f64::INFINITY, f64::min);
        let hi = r2s(&run(Mode::max_r2()).archive).into_iter().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let pass = lo < d && hi > d;
    r.line(
        10,
        "optimization direction",
        pass,
        format!("default R² {d:.4}; min-R² run best {lo:.4}, max-R² run best {hi:.4} (44 rollouts each, {:.0} s)", dt.as_secs_f64()),
    );
}

// 11. Repeated analysis bit-identical; archive round trip field-identical.
fn determinism(r: &mut Report, walker: &Walker, trace: &neurowalk::simulation::GaitTrace) {
    let a = serde_json::to_string(&analysis::analyze(&walker.model, trace).ok()).unwrap();
    let b = serde_json::to_string(&analysis::analyze(&walker.model, trace).ok()).unwrap();
    let (ra, rb) = (analysis::analyze(&walker.model, trace), analysis::analyze(&walker.model, trace));
    let bits = match (&ra, &rb) {
        (Ok(x), Ok(y)) => x.ip.r2.to_bits() == y.ip.r2.to_bits() && x.collision_fraction.to_bits() == y.collision_fraction.to_bits(),
        _ => false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<GaitRecord> = (0..50)
        .map(|i| {
            let p = ControlParams::from_array(std::array::from_fn(|_| rng.random_range(0.0..3.0)));
            let r2 = [Some(rng.random_range(-900.0..1.0)), Some(f64::NEG_INFINITY), None][i % 3];
            GaitRecord {
                generation: i as u64,
                index: i % 11,
                params: p,
                stage: if r2.is_some() { 3 } else { 2 },
                cost: rng.random::<f64>(),
                outcome: Outcome::Unsteady { spread: rng.random::<f64>() },
                r2,
                h_ip: r2.map(|_| rng.random_range(-1.0..3.0)),
                speed: r2.map(|_| rng.random::<f64>()),
                step_length: r2.map(|_| rng.random::<f64>()),
                cf: r2.map(|_| rng.random::<f64>()),
                max_step_down_cm: (i % 2 == 0).then_some(i as u32 % 7),
                robustness_note: (i % 5 == 0).then(|| "unstable on flat ground".to_string()),
            }
        })
        .collect();
    let path = std::env::temp_dir().join(format!("neurowalk-acceptance-{}.jsonl", std::process::id()));
    optimizer::write_archive(&path, &records).unwrap();
    let back = optimizer::read_archive(&path).unwrap();
    let _ = std::fs::remove_file(&path);
    let round_trip = back.len() == records.len()
        && back.iter().zip(&records).all(|(x, y)| {
            x.params.to_array().map(f64::to_bits) == y.params.to_array().map(f64::to_bits)
                && x.cost.to_bits() == y.cost.to_bits()
                && x.r2.map(f64::to_bits) == y.r2.map(f64::to_bits)
                && x.h_ip.map(f64::to_bits) == y.h_ip.map(f64::to_bits)
                && x.cf.map(f64::to_bits) == y.cf.map(f64::to_bits)
                && format!("{x:?}") == format!("{y:?}")
        });
    let pass = a == b && bits && ra.is_ok() && round_trip;
    r.line(11, "analysis determinism", pass, format!("repeat analysis identical: {}, archive round trip of {} records: {round_trip}", a == b && bits, records.len()));
}

fn main() {
    let mut r = Report { failures: 0 };
    ip_exactness(&mut r);
    ip_degenerate(&mut r);
    cf_bounds(&mut r);
    mos(&mut r);
    staged(&mut r);
    cma(&mut r);

    let walker = Walker::default_model().expect("default model");
    let params = ControlParams::default();
    let (trace, wall) = timed(|| walker.rollout(&params, &Terrain::flat(), 20.0));
    physics(&mut r, &walker, &trace);
    let default_r2 = walking(&mut r, &walker, &trace, wall);
    robustness(&mut r, &walker, &params);
    direction(&mut r, &walker, &params, default_r2);
    determinism(&mut r, &walker, &trace);

    println!("{} of 11 criteria passed", 11 - r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
