//! Compliant ground contact at the heel and ball of each foot.

use serde::{Deserialize, Serialize};

use super::Side;
use crate::error::{Error, Result};

/// Piecewise-constant ground height. Each breakpoint `(x_start, height)` sets
/// the height from `x_start` until the next breakpoint; left of the first
/// breakpoint the ground is at the first height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TerrainRepr", into = "TerrainRepr")]
pub struct Terrain {
    breakpoints: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct Breakpoint(#[serde(with = "crate::analysis::float_sentinel")] f64, f64);

#[derive(Serialize, Deserialize)]
struct TerrainRepr {
    breakpoints: Vec<Breakpoint>,
}

impl From<Terrain> for TerrainRepr {
    fn from(t: Terrain) -> Self {
        Self { breakpoints: t.breakpoints.into_iter().map(|(x, h)| Breakpoint(x, h)).collect() }
    }
}

impl TryFrom<TerrainRepr> for Terrain {
    type Error = Error;

    fn try_from(r: TerrainRepr) -> Result<Self> {
        Terrain::new(r.breakpoints.into_iter().map(|b| (b.0, b.1)).collect())
    }
}

impl Default for Terrain {
    fn default() -> Self {
        Self::flat()
    }
}

impl Terrain {
    pub fn flat() -> Self {
        Self { breakpoints: vec![(f64::NEG_INFINITY, 0.0)] }
    }

    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidArgument("terrain needs at least one breakpoint".into()));
        }
        if breakpoints.iter().any(|(x, h)| x.is_nan() || !h.is_finite()) {
            return Err(Error::InvalidArgument("terrain breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("terrain breakpoints must be strictly ascending in x".into()));
        }
        Ok(Self { breakpoints })
    }

    /// Flat ground that drops by `drop` (m, positive down) from `x` onward.
    pub fn step_down(x: f64, drop: f64) -> Result<Self> {
        Self::new(vec![(f64::NEG_INFINITY, 0.0), (x, -drop)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn height(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&(xs, _)| xs <= x);
        if idx == 0 {
            self.breakpoints[0].1
        } else {
            self.breakpoints[idx - 1].1
        }
    }
}

/// Nonlinear spring–damper normal force with regularized Coulomb friction.
///
/// Normal: `F_n = k·d·(1 + ḋ/v_n)`, clamped at zero, with penetration depth `d`.
/// Tangential: `F_t = −μ·F_n·tanh(v_t / v_stick)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Vertical ground stiffness, N/m.
    pub stiffness: f64,
    /// Penetration rate at which damping doubles the elastic force, m/s.
    pub damping_speed: f64,
    pub friction: f64,
    /// Sliding speed below which the contact sticks, m/s.
    pub stick_speed: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 81_500.0, damping_speed: 0.03, friction: 0.9, stick_speed: 0.01 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.stiffness, self.damping_speed, self.friction, self.stick_speed]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("contact constants must be positive".into()))
        }
    }

    pub fn normal_force(&self, depth: f64, depth_rate: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        (self.stiffness * depth * (1.0 + depth_rate / self.damping_speed)).max(0.0)
    }

    pub fn friction_force(&self, normal: f64, slip_velocity: f64) -> f64 {
        -self.friction * normal * (slip_velocity / self.stick_speed).tanh()
    }

    /// Force on a point at `pos` moving with `vel`.
    pub fn force(&self, pos: [f64; 2], vel: [f64; 2], terrain: &Terrain) -> [f64; 2] {
        let depth = terrain.height(pos[0]) - pos[1];
        let fn_ = self.normal_force(depth, -vel[1]);
        if fn_ == 0.0 {
            return [0.0, 0.0];
        }
        [self.friction_force(fn_, vel[0]), fn_]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactPoint {
    Heel,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactForce {
    pub side: Side,
    pub point: ContactPoint,
    pub position: [f64; 2],
    pub force: [f64; 2],
}
