//! Hill-type muscle-tendon units.
//!
//! Each unit is a contractile element (CE) with a parallel elastic element
//! (PE) and a buffer element (BE) that resists collapse, in series with an
//! elastic tendon (SE). The CE length is a state variable; its velocity comes
//! from inverting the force-velocity relation given the tendon force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MUSCLES_PER_LEG: usize = 7;
pub const N_MUSCLES: usize = 2 * MUSCLES_PER_LEG;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MuscleId {
    Sol,
    Ta,
    Gas,
    Vas,
    Ham,
    Glu,
    Hfl,
}

impl MuscleId {
    pub const ALL: [MuscleId; MUSCLES_PER_LEG] =
        [MuscleId::Sol, MuscleId::Ta, MuscleId::Gas, MuscleId::Vas, MuscleId::Ham, MuscleId::Glu, MuscleId::Hfl];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MuscleId::Sol => "SOL",
            MuscleId::Ta => "TA",
            MuscleId::Gas => "GAS",
            MuscleId::Vas => "VAS",
            MuscleId::Ham => "HAM",
            MuscleId::Glu => "GLU",
            MuscleId::Hfl => "HFL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joint {
    Hip,
    Knee,
    Ankle,
}

impl Joint {
    pub fn index(self) -> usize {
        match self {
            Joint::Hip => 0,
            Joint::Knee => 1,
            Joint::Ankle => 2,
        }
    }

    /// Classical joint angle (hip/knee 180° straight, ankle 90° neutral)
    /// from the generalized-coordinate offset.
    pub fn classical_angle(self, q: f64) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Joint::Hip | Joint::Knee => PI + q,
            Joint::Ankle => FRAC_PI_2 + q,
        }
    }
}

/// How a muscle wraps one joint. `sign = +1` for muscles that extend the joint
/// (increase its angle), `-1` for flexors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentArm {
    pub joint: Joint,
    pub r0: f64,
    /// Angle of maximal moment arm (rad); `None` for a constant moment arm.
    pub phi_max: Option<f64>,
    /// Angle at which the unit has its reference length `l_opt + l_slack`.
    pub phi_ref: f64,
    /// Share of the path excursion seen by the unit (pennation/fiber compliance).
    pub rho: f64,
    pub sign: f64,
}

impl MomentArm {
    /// Signed moment arm at classical joint angle `phi`.
    pub fn arm(&self, phi: f64) -> f64 {
        match self.phi_max {
            Some(pm) => self.sign * self.r0 * (phi - pm).cos(),
            None => self.sign * self.r0,
        }
    }

    /// Geometric path length change relative to `phi_ref`, with
    /// `arm = -d(path)/d(phi)`.
    pub fn path_excursion(&self, phi: f64) -> f64 {
        match self.phi_max {
            Some(pm) => -self.sign * self.r0 * ((phi - pm).sin() - (self.phi_ref - pm).sin()),
            None => -self.sign * self.r0 * (phi - self.phi_ref),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleParams {
    pub f_max: f64,
    pub l_opt: f64,
    /// Maximum shortening velocity in optimal lengths per second.
    pub v_max: f64,
    pub l_slack: f64,
    /// Activation time constant, s.
    pub tau: f64,
    /// Width of the force-length bell, relative to `l_opt`.
    pub width: f64,
    /// Force-length value at `l_ce = l_opt·(1 ± width)`.
    pub fl_residual: f64,
    /// Eccentric force enhancement (asymptote of the lengthening branch).
    pub ecc_force: f64,
    /// Curvature of the force-velocity relation.
    pub fv_curvature: f64,
    /// Tendon reference strain at which the tendon carries `f_max`.
    pub tendon_strain: f64,
    pub arms: Vec<MomentArm>,
}

/// Result of resolving the unit for one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtuOutput {
    /// Tendon force, N (never negative).
    pub force: f64,
    /// CE lengthening velocity, m/s.
    pub ce_velocity: f64,
}

impl MuscleParams {
    fn with(f_max: f64, v_max: f64, l_opt: f64, l_slack: f64, arms: Vec<MomentArm>) -> Self {
        Self {
            f_max,
            l_opt,
            v_max,
            l_slack,
            tau: 0.01,
            width: 0.56,
            fl_residual: 0.05,
            ecc_force: 1.5,
            fv_curvature: 5.0,
            tendon_strain: 0.04,
            arms,
        }
    }

    /// Published constants of the reflex walking model this crate follows.
    pub fn default_for(id: MuscleId) -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let cosine = |joint, r0, phi_max: f64, phi_ref: f64, rho, sign| MomentArm {
            joint,
            r0,
            phi_max: Some(phi_max * deg),
            phi_ref: phi_ref * deg,
            rho,
            sign,
        };
        let constant = |joint, r0, phi_ref: f64, rho, sign| MomentArm {
            joint,
            r0,
            phi_max: None,
            phi_ref: phi_ref * deg,
            rho,
            sign,
        };
        use Joint::*;
        match id {
            MuscleId::Sol => Self::with(4000.0, 6.0, 0.04, 0.26, vec![cosine(Ankle, 0.05, 110.0, 80.0, 0.5, 1.0)]),
            MuscleId::Ta => Self::with(800.0, 12.0, 0.06, 0.24, vec![cosine(Ankle, 0.04, 80.0, 110.0, 0.7, -1.0)]),
            MuscleId::Gas => Self::with(
                1500.0,
                12.0,
                0.05,
                0.40,
                vec![cosine(Ankle, 0.05, 110.0, 80.0, 0.7, 1.0), cosine(Knee, 0.05, 140.0, 165.0, 0.7, -1.0)],
            ),
            MuscleId::Vas => Self::with(6000.0, 12.0, 0.08, 0.23, vec![cosine(Knee, 0.06, 165.0, 125.0, 0.7, 1.0)]),
            MuscleId::Ham => Self::with(
                3000.0,
                12.0,
                0.10,
                0.31,
                vec![cosine(Knee, 0.05, 180.0, 180.0, 0.7, -1.0), constant(Hip, 0.08, 150.0, 0.7, 1.0)],
            ),
            MuscleId::Glu => Self::with(1500.0, 12.0, 0.11, 0.13, vec![constant(Hip, 0.10, 150.0, 0.5, 1.0)]),
            MuscleId::Hfl => Self::with(2000.0, 12.0, 0.11, 0.10, vec![constant(Hip, 0.10, 180.0, 0.5, -1.0)]),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let pos = [
            ("f_max", self.f_max),
            ("l_opt", self.l_opt),
            ("v_max", self.v_max),
            ("l_slack", self.l_slack),
            ("tau", self.tau),
            ("width", self.width),
            ("fl_residual", self.fl_residual),
            ("fv_curvature", self.fv_curvature),
            ("tendon_strain", self.tendon_strain),
        ];
        for (field, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidMuscle { name: name.into(), reason: format!("{field} must be positive") });
            }
        }
        if !(self.ecc_force > 1.0) {
            return Err(Error::InvalidMuscle { name: name.into(), reason: "ecc_force must exceed 1".into() });
        }
        Ok(())
    }

    fn v_max_abs(&self) -> f64 {
        self.v_max * self.l_opt
    }

    /// Normalized force-length factor, 1 at `l_opt`.
    pub fn fl(&self, l_ce: f64) -> f64 {
        let x = ((l_ce - self.l_opt) / (self.l_opt * self.width)).abs();
        (self.fl_residual.ln() * x * x * x).exp()
    }

    /// Normalized force-velocity factor; `v_ce < 0` is shortening.
    pub fn fv(&self, v_ce: f64) -> f64 {
        let vm = self.v_max_abs();
        let k = self.fv_curvature;
        let n = self.ecc_force;
        if v_ce < 0.0 {
            ((vm + v_ce) / (vm - k * v_ce)).max(0.0)
        } else {
            n + (n - 1.0) * (v_ce - vm) / (7.56 * k * v_ce + vm)
        }
    }

    /// Largest force-velocity factor accepted by [`Self::fv_inverse`]; caps the
    /// lengthening speed at about twice `v_max`.
    fn fv_cap(&self) -> f64 {
        let n = self.ecc_force;
        n + 0.5 * (n - 1.0) / (7.56 * self.fv_curvature)
    }

    /// CE velocity producing force-velocity factor `f` (clamped to the valid range).
    pub fn fv_inverse(&self, f: f64) -> f64 {
        let vm = self.v_max_abs();
        let k = self.fv_curvature;
        let n = self.ecc_force;
        let f = f.clamp(0.0, self.fv_cap());
        if f < 1.0 {
            vm * (f - 1.0) / (1.0 + k * f)
        } else {
            vm * (f - 1.0) / ((n - 1.0) + 7.56 * k * (n - f))
        }
    }

    pub fn ce_force(&self, a: f64, l_ce: f64, v_ce: f64) -> f64 {
        a * self.f_max * self.fl(l_ce) * self.fv(v_ce)
    }

    pub fn se_force(&self, l_se: f64) -> f64 {
        let eps = (l_se - self.l_slack) / self.l_slack;
        if eps > 0.0 {
            let r = eps / self.tendon_strain;
            self.f_max * r * r
        } else {
            0.0
        }
    }

    pub fn pe_force(&self, l_ce: f64) -> f64 {
        if l_ce > self.l_opt {
            let r = (l_ce - self.l_opt) / (self.l_opt * self.width);
            self.f_max * r * r
        } else {
            0.0
        }
    }

    pub fn be_force(&self, l_ce: f64) -> f64 {
        let l_min = self.l_opt * (1.0 - self.width);
        if l_ce < l_min {
            let r = (l_min - l_ce) / (self.l_opt * self.width / 2.0);
            self.f_max * r * r
        } else {
            0.0
        }
    }

    /// Tendon force and CE velocity for activation `a`, CE length `l_ce` and
    /// unit length `l_mtu`.
    pub fn dynamics(&self, a: f64, l_ce: f64, l_mtu: f64) -> MtuOutput {
        let f_se = self.se_force(l_mtu - l_ce);
        let f_ce = f_se - self.pe_force(l_ce) + self.be_force(l_ce);
        let capacity = (a * self.f_max * self.fl(l_ce)).max(1e-9 * self.f_max);
        MtuOutput { force: f_se, ce_velocity: self.fv_inverse(f_ce / capacity) }
    }

    /// Unit length from classical joint angles `[hip, knee, ankle]`.
    pub fn mtu_length(&self, phi: [f64; 3]) -> f64 {
        self.l_opt
            + self.l_slack
            + self.arms.iter().map(|m| m.rho * m.path_excursion(phi[m.joint.index()])).sum::<f64>()
    }

    /// Signed moment arms per joint `[hip, knee, ankle]`.
    pub fn moment_arms(&self, phi: [f64; 3]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for m in &self.arms {
            r[m.joint.index()] += m.arm(phi[m.joint.index()]);
        }
        r
    }

    /// CE length at which the isometric unit is in force equilibrium.
    pub fn equilibrium_ce_length(&self, a: f64, l_mtu: f64) -> Result<f64> {
        // residual is monotone increasing in l_ce: SE slackens while CE+PE stiffen
        let residual = |l_ce: f64| {
            self.ce_force(a, l_ce, 0.0) + self.pe_force(l_ce) - self.be_force(l_ce) - self.se_force(l_mtu - l_ce)
        };
        let mut lo = 1e-3 * self.l_opt;
        let mut hi = (l_mtu - self.l_slack).max(lo * 2.0);
        if residual(lo) > 0.0 || residual(hi) < 0.0 {
            // the tendon is slack everywhere or the CE cannot balance it
            if residual(hi) < 0.0 {
                return Err(Error::CeNotConverged(format!("l_mtu = {l_mtu}")));
            }
            lo = hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let l = 0.5 * (lo + hi);
        if l.is_finite() && l > 0.0 {
            Ok(l)
        } else {
            Err(Error::CeNotConverged(format!("l_mtu = {l_mtu}")))
        }
    }
}

/// Rate of the first-order activation lag.
pub fn activation_rate(u: f64, a: f64, tau: f64) -> f64 {
    (u.clamp(0.0, 1.0) - a) / tau
}

/// Exact activation update over `dt` for a stimulation held at `u`.
pub fn activation_step(u: f64, a: f64, dt: f64, tau: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    (u + (a - u) * (-dt / tau).exp()).clamp(0.0, 1.0)
}

/// All units of the model, leg-major: left SOL..HFL then right SOL..HFL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleSet {
    pub leg: Vec<MuscleParams>,
}

impl Default for MuscleSet {
    fn default() -> Self {
        Self { leg: MuscleId::ALL.iter().map(|&m| MuscleParams::default_for(m)).collect() }
    }
}

impl MuscleSet {
    pub fn validate(&self) -> Result<()> {
        if self.leg.len() != MUSCLES_PER_LEG {
            return Err(Error::WrongCount { expected: MUSCLES_PER_LEG, got: self.leg.len() });
        }
        for (m, p) in MuscleId::ALL.iter().zip(&self.leg) {
            p.validate(m.name())?;
        }
        Ok(())
    }

    pub fn get(&self, id: MuscleId) -> &MuscleParams {
        &self.leg[id.index()]
    }
}

/// Per-joint torques `[hip, knee, ankle]` of one leg from its unit forces.
pub fn muscle_torques(set: &MuscleSet, forces: &[f64], phi: [f64; 3]) -> [f64; 3] {
    let mut tau = [0.0; 3];
    for (p, f) in set.leg.iter().zip(forces) {
        let r = p.moment_arms(phi);
        for j in 0..3 {
            tau[j] += r[j] * f;
        }
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn activation_fixed_point_and_rate() {
        assert_eq!(activation_step(0.4, 0.4, 0.01, 0.01), 0.4);
        assert!((activation_rate(1.0, 0.0, 0.01) - 100.0).abs() < 1e-12);
        let mut a = 0.8;
        for _ in 0..100 {
            let next = activation_step(0.0, a, 0.005, 0.01);
            assert!(next <= a);
            a = next;
        }
        assert!(a < 1e-20);
    }

    #[test]
    fn hill_normalization_and_boundaries() {
        for id in MuscleId::ALL {
            let p = MuscleParams::default_for(id);
            assert!((p.ce_force(1.0, p.l_opt, 0.0) - p.f_max).abs() < 1e-9);
            assert_eq!(p.ce_force(1.0, p.l_opt, -p.v_max * p.l_opt), 0.0);
            // slack tendon carries no force
            let out = p.dynamics(0.0, p.l_opt, p.l_opt + p.l_slack);
            assert!(out.force < 1e-12);
        }
    }

    #[test]
    fn force_length_is_unimodal() {
        let p = MuscleParams::default_for(MuscleId::Vas);
        let xs: Vec<f64> = (0..=400).map(|i| p.l_opt * (0.2 + 1.6 * i as f64 / 400.0)).collect();
        let peak = xs.iter().cloned().fold(0.0, |m, x| if p.fl(x) > p.fl(m) { x } else { m });
        assert!((peak - p.l_opt).abs() <= 1.6 * p.l_opt / 400.0);
        for w in xs.windows(2) {
            if w[1] <= p.l_opt {
                assert!(p.fl(w[1]) >= p.fl(w[0]));
            } else if w[0] >= p.l_opt {
                assert!(p.fl(w[1]) <= p.fl(w[0]));
            }
        }
        assert!((p.fl(p.l_opt) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn force_velocity_inverse_round_trips() {
        let p = MuscleParams::default_for(MuscleId::Sol);
        let vm = p.v_max * p.l_opt;
        for i in 0..=50 {
            let v = -vm + 2.5 * vm * i as f64 / 50.0;
            let f = p.fv(v);
            if f < p.fv_cap() {
                assert!((p.fv_inverse(f) - v).abs() < 1e-9 * vm.max(v.abs()), "v={v}");
            }
        }
        assert_eq!(p.fv(0.0), 1.0);
    }

    #[test]
    fn moment_arm_is_negative_path_derivative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for id in MuscleId::ALL {
            for arm in &MuscleParams::default_for(id).arms {
                for _ in 0..100 {
                    let phi: f64 = rng.random_range(0.5..3.5);
                    let fd = (arm.path_excursion(phi + h) - arm.path_excursion(phi - h)) / (2.0 * h);
                    assert!((arm.arm(phi) + fd).abs() < 1e-6, "{id:?} {phi}");
                }
            }
        }
    }

    #[test]
    fn torque_from_constant_arm_is_exact() {
        let set = MuscleSet::default();
        let mut forces = [0.0; MUSCLES_PER_LEG];
        forces[MuscleId::Glu.index()] = 500.0;
        let tau = muscle_torques(&set, &forces, [3.0, 3.0, 1.5]);
        assert_eq!(tau, [0.10 * 500.0, 0.0, 0.0]);
        assert_eq!(muscle_torques(&set, &[0.0; 7], [3.0, 3.0, 1.5]), [0.0; 3]);
    }

    #[test]
    fn reference_pose_gives_reference_length() {
        let deg = std::f64::consts::PI / 180.0;
        let p = MuscleParams::default_for(MuscleId::Gas);
        let l = p.mtu_length([180.0 * deg, 165.0 * deg, 80.0 * deg]);
        assert!((l - p.l_opt - p.l_slack).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_balances_forces() {
        let p = MuscleParams::default_for(MuscleId::Vas);
        let l_mtu = p.l_opt + p.l_slack + 0.01;
        let l_ce = p.equilibrium_ce_length(0.3, l_mtu).unwrap();
        let out = p.dynamics(0.3, l_ce, l_mtu);
        assert!(out.ce_velocity.abs() < 1e-6, "{out:?}");
    }

    proptest! {
        #[test]
        fn tendon_force_nonnegative(a in 0.0f64..1.0, l_ce in 0.01f64..0.2, l_mtu in 0.1f64..0.6) {
            let p = MuscleParams::default_for(MuscleId::Ham);
            prop_assert!(p.dynamics(a, l_ce, l_mtu).force >= 0.0);
        }

        #[test]
        fn activation_stays_in_unit_interval(us in proptest::collection::vec(-0.5f64..1.5, 1..50), dt in 1e-4f64..0.05) {
            let mut a = 0.0;
            for u in us {
                a = activation_step(u, a, dt, 0.01);
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
