//! Gait analysis: GRF intersection point, collision fraction, margin of
//! stability, steadiness and scalar descriptors. All functions are pure.

use serde::{Deserialize, Serialize};

use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::simulation::{count_strides, steady_stride, EventKind, GaitEvent, GaitTrace, StrideWindow};

/// Walking "with IP" requires R² strictly above this.
pub const IP_THRESHOLD: f64 = 0.6;
/// Steady gait: MoS spread over six heel strikes strictly below this, m.
pub const STEADY_SPREAD: f64 = 0.0075;
/// Heel strikes in the steadiness window.
pub const STEADY_COUNT: usize = 6;
/// Samples an IP window is resampled to.
pub const IP_RESAMPLE: usize = 100;
pub const IP_MIN_SAMPLES: usize = 10;
/// Search interval for the IP height relative to the CoM, m.
pub const IP_SEARCH: (f64, f64) = (-2.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpResult {
    /// IP height above the CoM, m. NaN when degenerate.
    #[serde(with = "float_sentinel")]
    pub h_ip: f64,
    /// Coefficient of determination; `-inf` when all forces are parallel.
    #[serde(with = "float_sentinel")]
    pub r2: f64,
    pub samples: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpClass {
    Ip,
    NonIp,
}

pub fn classify_ip(r2: f64) -> IpClass {
    if r2 > IP_THRESHOLD {
        IpClass::Ip
    } else {
        IpClass::NonIp
    }
}

/// Angle of a force from the vertical, positive when it points forward.
fn force_angle(f: [f64; 2]) -> f64 {
    f[0].atan2(f[1])
}

fn r_squared(angles: &[f64], rel_cop: &[[f64; 2]], sst: f64, h: f64) -> f64 {
    let sse: f64 = angles
        .iter()
        .zip(rel_cop)
        .map(|(&a, c)| {
            let pred = (-c[0]).atan2(h - c[1]);
            (a - pred).powi(2)
        })
        .sum();
    1.0 - sse / sst
}

/// Fits the point on the vertical axis through the CoM that the GRF lines
/// best pass through. Inputs are per-sample GRF vectors, CoP positions and CoM
/// positions in world coordinates; R² is computed over force angles.
pub fn ip_regression(forces: &[[f64; 2]], cops: &[[f64; 2]], coms: &[[f64; 2]]) -> Result<IpResult> {
    let n = forces.len();
    if cops.len() != n || coms.len() != n {
        return Err(Error::InvalidArgument("forces, CoPs and CoM positions must have equal length".into()));
    }
    if n < IP_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: IP_MIN_SAMPLES, got: n });
    }
    let angles: Vec<f64> = forces.iter().map(|&f| force_angle(f)).collect();
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::Degenerate("non-finite force".into()));
    }
    let rel: Vec<[f64; 2]> = cops.iter().zip(coms).map(|(p, c)| [p[0] - c[0], p[1] - c[1]]).collect();
    let mean = angles.iter().sum::<f64>() / n as f64;
    let sst: f64 = angles.iter().map(|a| (a - mean).powi(2)).sum();
    if sst <= n as f64 * 1e-24 {
        return Ok(IpResult { h_ip: f64::NAN, r2: f64::NEG_INFINITY, samples: n, degenerate: true });
    }
    let r2 = |h: f64| r_squared(&angles, &rel, sst, h);

    // coarse grid, then golden section around the best grid point
    let (lo, hi) = IP_SEARCH;
    let step = 0.01;
    let cells = ((hi - lo) / step).round() as usize;
    let mut best = (lo, r2(lo));
    for k in 1..=cells {
        let h = lo + k as f64 * step;
        let v = r2(h);
        if v > best.1 {
            best = (h, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (r2(c), r2(d));
    while b - a > 1e-5 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = r2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = r2(d);
        }
    }
    let h = 0.5 * (a + b);
    let fh = r2(h);
    let (h_ip, r2) = if fh >= best.1 { (h, fh) } else { best };
    Ok(IpResult { h_ip, r2, samples: n, degenerate: false })
}

/// Linear resampling of a uniformly sampled series to `m` points spanning the
/// same interval.
pub fn resample(xs: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
    let n = xs.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n == 1 || m == 1 {
        return vec![xs[0]; m];
    }
    (0..m)
        .map(|k| {
            let s = k as f64 * (n - 1) as f64 / (m - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            let w = s - i as f64;
            [xs[i][0] * (1.0 - w) + xs[i + 1][0] * w, xs[i][1] * (1.0 - w) + xs[i + 1][1] * w]
        })
        .collect()
}

/// Force lines of the stance leg over the single-support part of `window`:
/// (GRF, CoP, CoM) per sample, resampled to [`IP_RESAMPLE`] points.
pub fn ip_window(trace: &GaitTrace, window: &StrideWindow) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let leg = window.side.index();
    let (i0, i1) = window.single_support;
    let range = trace.samples.get(i0..=i1).ok_or_else(|| Error::InvalidArgument("window outside trace".into()))?;
    let mut f = Vec::with_capacity(range.len());
    let mut p = Vec::with_capacity(range.len());
    let mut c = Vec::with_capacity(range.len());
    for s in range {
        let cop = s.cop[leg].ok_or_else(|| Error::Degenerate(format!("stance foot unloaded at t = {}", s.t)))?;
        f.push(s.grf[leg]);
        p.push(cop);
        c.push(s.com);
    }
    Ok((resample(&f, IP_RESAMPLE), resample(&p, IP_RESAMPLE), resample(&c, IP_RESAMPLE)))
}

pub fn ip_from_trace(trace: &GaitTrace, window: &StrideWindow) -> Result<IpResult> {
    let (f, p, c) = ip_window(trace, window)?;
    ip_regression(&f, &p, &c)
}

/// Signed angle between the CoM velocity and the perpendicular to the GRF.
pub fn collision_angle(f: [f64; 2], v: [f64; 2]) -> Result<f64> {
    let nf = f[0].hypot(f[1]);
    let nv = v[0].hypot(v[1]);
    if nf == 0.0 || !nf.is_finite() {
        return Err(Error::ZeroMagnitude("force"));
    }
    if nv == 0.0 || !nv.is_finite() {
        return Err(Error::ZeroMagnitude("velocity"));
    }
    let dot = f[0] * v[0] + f[1] * v[1];
    let cross = f[0] * v[1] - f[1] * v[0];
    Ok(dot.atan2(cross.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionResult {
    pub cf: f64,
    /// Collision angle per sample.
    pub phi: Vec<f64>,
    /// GRF angle from the vertical per sample.
    pub theta: Vec<f64>,
    /// Velocity angle from the horizontal per sample.
    pub lambda: Vec<f64>,
    /// Samples where |φ| exceeds |θ| + |λ| beyond rounding.
    pub violations: usize,
}

/// Collision fraction: |F||v|-weighted mean of |φ| over the weighted mean of
/// the potential collision |θ| + |λ|.
pub fn collision_fraction(forces: &[[f64; 2]], velocities: &[[f64; 2]]) -> Result<CollisionResult> {
    let n = forces.len();
    if velocities.len() != n {
        return Err(Error::InvalidArgument("forces and velocities must have equal length".into()));
    }
    if n < IP_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: IP_MIN_SAMPLES, got: n });
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut out = CollisionResult {
        cf: 0.0,
        phi: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        violations: 0,
    };
    for (&f, &v) in forces.iter().zip(velocities) {
        let phi = collision_angle(f, v)?;
        let theta = force_angle(f);
        let lambda = v[1].atan2(v[0]);
        let w = f[0].hypot(f[1]) * v[0].hypot(v[1]);
        num += w * phi.abs();
        den += w * (theta.abs() + lambda.abs());
        if phi.abs() > theta.abs() + lambda.abs() + 1e-9 {
            out.violations += 1;
        }
        out.phi.push(phi);
        out.theta.push(theta);
        out.lambda.push(lambda);
    }
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::Degenerate("zero potential collision".into()));
    }
    out.cf = (num / den).clamp(0.0, 1.0);
    Ok(out)
}

/// Collision fraction over the samples of `window` with ground contact.
pub fn collision_from_trace(trace: &GaitTrace, window: &StrideWindow) -> Result<CollisionResult> {
    let range = trace
        .samples
        .get(window.start..window.end)
        .ok_or_else(|| Error::InvalidArgument("window outside trace".into()))?;
    let (f, v): (Vec<_>, Vec<_>) =
        range.iter().map(|s| (s.total_grf(), s.com_vel)).filter(|(f, _)| f[1] > 0.0).unzip();
    collision_fraction(&f, &v)
}

/// Hof's margin of stability: boundary minus the extrapolated CoM.
pub fn margin_of_stability(com_x: f64, com_vx: f64, com_height: f64, boundary_x: f64, gravity: f64) -> Result<f64> {
    if !(com_height > 0.0) {
        return Err(Error::InvalidArgument(format!("CoM height must be positive, got {com_height}")));
    }
    let omega = (gravity / com_height).sqrt();
    Ok(boundary_x - (com_x + com_vx / omega))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub mos: Vec<f64>,
    pub spread: f64,
    pub steady: bool,
}

/// Spread of exactly six consecutive heel-strike MoS values.
pub fn steadiness(values: &[f64]) -> Result<StabilityResult> {
    if values.len() != STEADY_COUNT {
        return Err(Error::WrongCount { expected: STEADY_COUNT, got: values.len() });
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    Ok(StabilityResult { mos: values.to_vec(), spread, steady: spread < STEADY_SPREAD })
}

/// MoS at a heel strike, with the striking foot's ball as the boundary.
pub fn heel_strike_mos(model: &Model, trace: &GaitTrace, event: &GaitEvent) -> Result<f64> {
    let s = &trace.samples[event.index];
    let [_, (ball, _)] = model.foot_points(&s.state(), event.side);
    let ground = trace.terrain.height(s.com[0]);
    margin_of_stability(s.com[0], s.com_vel[0], s.com[1] - ground, ball[0], model.gravity)
}

/// Steadiness over the last six heel strikes of the trace.
pub fn trace_steadiness(model: &Model, trace: &GaitTrace) -> Result<StabilityResult> {
    let hs: Vec<&GaitEvent> = trace.events.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    if hs.len() < STEADY_COUNT {
        return Err(Error::InsufficientStrides { needed: STEADY_COUNT / 2, got: count_strides(&trace.events) });
    }
    let mos = hs[hs.len() - STEADY_COUNT..]
        .iter()
        .map(|e| heel_strike_mos(model, trace, e))
        .collect::<Result<Vec<_>>>()?;
    steadiness(&mos)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    /// Mean forward CoM speed, m/s.
    pub speed: f64,
    /// Mean distance between consecutive contralateral heel strikes, m.
    pub step_length: f64,
    /// Steps per second.
    pub cadence: f64,
    /// Strides averaged over.
    pub strides: usize,
}

/// Strides the descriptors average over.
pub const DESCRIPTOR_STRIDES: usize = 6;

/// Speed, step length and cadence over the last six strides.
pub fn gait_descriptors(trace: &GaitTrace) -> Result<Descriptors> {
    let got = count_strides(&trace.events);
    if got < DESCRIPTOR_STRIDES {
        return Err(Error::InsufficientStrides { needed: DESCRIPTOR_STRIDES, got });
    }
    let hs: Vec<&GaitEvent> = trace.events.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    let steps = 2 * DESCRIPTOR_STRIDES;
    let win = &hs[hs.len() - steps - 1..];
    let (i0, i1) = (win[0].index, win[steps].index);
    let speed = trace.samples[i0..i1].iter().map(|s| s.com_vel[0]).sum::<f64>() / (i1 - i0) as f64;
    let mut lengths = Vec::with_capacity(steps);
    for w in win.windows(2) {
        if w[0].side != w[1].side {
            lengths.push(w[1].position[0] - w[0].position[0]);
        }
    }
    if lengths.is_empty() {
        return Err(Error::Degenerate("no alternating heel strikes".into()));
    }
    let step_length = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let cadence = steps as f64 / (win[steps].t - win[0].t);
    Ok(Descriptors { speed, step_length, cadence, strides: DESCRIPTOR_STRIDES })
}

/// Everything the toolkit reports about one walking trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub stride: StrideWindow,
    pub ip: IpResult,
    pub ip_class: IpClass,
    pub collision_fraction: f64,
    pub collision_violations: usize,
    pub stability: StabilityResult,
    pub descriptors: Descriptors,
}

/// Full analysis of a walking trace.
pub fn analyze(model: &Model, trace: &GaitTrace) -> Result<GaitReport> {
    let stride = steady_stride(trace)?;
    let ip = ip_from_trace(trace, &stride)?;
    let cf = collision_from_trace(trace, &stride)?;
    let stability = trace_steadiness(model, trace)?;
    let descriptors = gait_descriptors(trace)?;
    Ok(GaitReport {
        stride,
        ip,
        ip_class: classify_ip(ip.r2),
        collision_fraction: cf.cf,
        collision_violations: cf.violations,
        stability,
        descriptors,
    })
}

/// JSON has no infinities: non-finite values are written as strings.
pub mod float_sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text(
                if v.is_nan() {
                    "NaN"
                } else if *v > 0.0 {
                    "inf"
                } else {
                    "-inf"
                }
                .into(),
            )
            .serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid float {other}"))),
            },
        }
    }
}

/// [`float_sentinel`] for optional values; `None` is `null`.
pub mod opt_float_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::float_sentinel")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_some(&Wrap(*x)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}
