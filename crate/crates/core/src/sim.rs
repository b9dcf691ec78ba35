//! World primitives: planar vectors, the step clock, seeded random streams and
//! the kinematic update rules for the target and the UAVs.
//!
//! Time is step-indexed throughout; speeds are in m/step.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Discrete mission clock. Advances by exactly one step per tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimClock {
    step: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.step
    }

    pub fn tick(&mut self) -> u64 {
        self.step += 1;
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Vec2,
    /// m/step
    pub velocity: Vec2,
}

impl TargetState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPose {
    pub id: u32,
    pub position: Vec2,
}

impl UavPose {
    pub fn new(id: u32, position: Vec2) -> Self {
        Self { id, position }
    }
}

/// Admissible displacement per step, `0 < v_min <= v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl MobilityLimits {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        let limits = Self { v_min, v_max };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite()) || self.v_min <= 0.0 {
            return Err(Error::param("v_min", format!("must be positive and finite, got {}", self.v_min)));
        }
        if self.v_min > self.v_max {
            return Err(Error::param(
                "v_min",
                format!("v_min ({}) must not exceed v_max ({})", self.v_min, self.v_max),
            ));
        }
        Ok(())
    }

    pub fn clamp(&self, speed: f64) -> f64 {
        speed.clamp(self.v_min, self.v_max)
    }
}

impl Default for MobilityLimits {
    fn default() -> Self {
        Self { v_min: 8.0, v_max: 10.0 }
    }
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with the same seed and different ids come from disjoint ChaCha
/// streams, so giving every entity its own id keeps draws independent of how
/// many other entities exist.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn index(&mut self, n: usize) -> usize {
        rand::Rng::random_range(&mut self.rng, 0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Constant-velocity step with Gaussian acceleration noise on each axis.
pub fn step_target(state: &TargetState, accel_std: f64, rng: &mut RngStream) -> TargetState {
    debug_assert!(accel_std >= 0.0);
    let position = state.position + state.velocity;
    let velocity = if accel_std > 0.0 {
        state.velocity + Vec2::new(rng.gaussian(), rng.gaussian()) * accel_std
    } else {
        state.velocity
    };
    TargetState { position, velocity }
}

/// Displacement a UAV at `from` takes when commanded toward `waypoint`.
///
/// The length is clamped into `[v_min, v_max]`; a waypoint closer than
/// `v_min` is overshot so the speed interval is never left.
pub fn clamped_displacement(from: Vec2, waypoint: Vec2, limits: &MobilityLimits) -> Option<Vec2> {
    let delta = waypoint - from;
    let dist = delta.norm();
    if dist == 0.0 {
        return None;
    }
    let speed = limits.clamp(dist);
    if speed == dist {
        Some(delta)
    } else {
        Some(delta * (speed / dist))
    }
}

pub fn step_uav(pose: &UavPose, waypoint: Vec2, limits: &MobilityLimits) -> Result<UavPose> {
    if !waypoint.is_finite() {
        return Err(Error::InvalidPosition { x: waypoint.x, y: waypoint.y, reason: "waypoint must be finite" });
    }
    let step = clamped_displacement(pose.position, waypoint, limits).ok_or(Error::DegenerateWaypoint(pose.id))?;
    Ok(UavPose { id: pose.id, position: pose.position + step })
}
