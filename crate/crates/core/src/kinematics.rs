//! Tweezer trajectories built from cubic position segments.
//!
//! A [`Trajectory`] is a time-ordered, contiguous list of cubic segments in the
//! tweezer plane. Each segment is built from the end state of the previous one,
//! so position and velocity are continuous by construction; acceleration may
//! jump (the velocity ramps start with a finite acceleration).
//!
//! Two primitive profiles are provided:
//!
//! * rest-to-rest moves `x(t) = d (3s² − 2s³)`, `s = t/T`, the cubic used for
//!   shuttling between spatial zones (constant jerk magnitude `12|d|/T³`);
//! * velocity ramps with `v(0) = v₀`, `v(T) = v₀ + Δv`, `a(T) = 0` and constant
//!   jerk `j`, which gives `T = sqrt(2|Δv|/j)` and a travelled distance of
//!   `2|Δv|T/3` (from rest).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Tolerance used when checking contiguity of imported trajectories.
pub const CONTINUITY_TOL: f64 = 1e-12;

/// One cubic piece: `x(t) = c0 + c1 τ + c2 τ² + c3 τ³`, `τ = t − t0`, per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrajectorySegment<T> {
    pub t0: T,
    pub duration: T,
    pub coeffs_x: [T; 4],
    pub coeffs_y: [T; 4],
}

fn horner<T: Real>(c: &[T; 4], tau: T) -> T {
    ((c[3] * tau + c[2]) * tau + c[1]) * tau + c[0]
}

impl<T: Real> TrajectorySegment<T> {
    pub fn end_time(&self) -> T {
        self.t0 + self.duration
    }

    pub fn position(&self, tau: T) -> Vec2<T> {
        Vec2::new(horner(&self.coeffs_x, tau), horner(&self.coeffs_y, tau))
    }

    pub fn velocity(&self, tau: T) -> Vec2<T> {
        let d = |c: &[T; 4]| c[1] + (T::lit(2.0) * c[2] + T::lit(3.0) * c[3] * tau) * tau;
        Vec2::new(d(&self.coeffs_x), d(&self.coeffs_y))
    }

    pub fn acceleration(&self, tau: T) -> Vec2<T> {
        let d = |c: &[T; 4]| T::lit(2.0) * c[2] + T::lit(6.0) * c[3] * tau;
        Vec2::new(d(&self.coeffs_x), d(&self.coeffs_y))
    }

    /// Third derivative, constant over the segment.
    pub fn jerk(&self) -> Vec2<T> {
        Vec2::new(T::lit(6.0) * self.coeffs_x[3], T::lit(6.0) * self.coeffs_y[3])
    }

    fn state_at(&self, tau: T) -> MotionState<T> {
        MotionState {
            t: self.t0 + tau,
            x: self.position(tau),
            v: self.velocity(tau),
            a: self.acceleration(tau),
        }
    }
}

/// Kinematic state of one trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MotionState<T> {
    pub t: T,
    pub x: Vec2<T>,
    pub v: Vec2<T>,
    pub a: Vec2<T>,
}

/// Piecewise-cubic path of a single trap or AOD tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub label: String,
    pub segments: Vec<TrajectorySegment<T>>,
}

impl<T: Real> Trajectory<T> {
    /// A trap sitting at `position` from time `t0`, represented by one
    /// zero-duration segment.
    pub fn at_rest(label: impl Into<String>, t0: T, position: Vec2<T>) -> Self {
        Self::starting_at(label, t0, position, Vec2::zero())
    }

    /// A trap at `position` already moving with `velocity` at `t0`.
    pub fn starting_at(label: impl Into<String>, t0: T, position: Vec2<T>, velocity: Vec2<T>) -> Self {
        let z = T::zero();
        Self {
            label: label.into(),
            segments: vec![TrajectorySegment {
                t0,
                duration: z,
                coeffs_x: [position.x, velocity.x, z, z],
                coeffs_y: [position.y, velocity.y, z, z],
            }],
        }
    }

    /// Rebuilds a trajectory from imported segments, checking ordering and
    /// continuity.
    pub fn from_segments(label: impl Into<String>, segments: Vec<TrajectorySegment<T>>) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid("trajectory needs at least one segment"));
        }
        let tol = T::lit(CONTINUITY_TOL);
        for (i, seg) in segments.iter().enumerate() {
            if seg.duration < T::zero() {
                return Err(invalid(format!("segment {i} has negative duration")));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if (a.end_time() - b.t0).abs() > tol {
                return Err(invalid(format!("segments {i} and {} are not contiguous in time", i + 1)));
            }
            let gap_x = (a.position(a.duration) - b.position(T::zero())).norm();
            let gap_v = (a.velocity(a.duration) - b.velocity(T::zero())).norm();
            if gap_x > tol || gap_v > tol {
                return Err(invalid(format!("discontinuity between segments {i} and {}", i + 1)));
            }
        }
        Ok(Self { label: label.into(), segments })
    }

    pub fn start_time(&self) -> T {
        self.segments[0].t0
    }

    pub fn end_time(&self) -> T {
        self.segments.last().map(|s| s.end_time()).unwrap_or_else(T::zero)
    }

    pub fn duration(&self) -> T {
        self.end_time() - self.start_time()
    }

    pub fn initial_state(&self) -> MotionState<T> {
        self.segments[0].state_at(T::zero())
    }

    pub fn final_state(&self) -> MotionState<T> {
        let last = self.segments.last().expect("non-empty trajectory");
        last.state_at(last.duration)
    }

    /// Exact state at time `t`. Before the start the initial state is held;
    /// after the end the trap keeps flying at its final velocity.
    pub fn sample(&self, t: T) -> MotionState<T> {
        if t <= self.start_time() {
            let mut s = self.initial_state();
            s.t = t;
            return s;
        }
        if t >= self.end_time() {
            let end = self.final_state();
            let dt = t - end.t;
            return MotionState { t, x: end.x + end.v * dt, v: end.v, a: Vec2::zero() };
        }
        let idx = self.segments.partition_point(|s| s.end_time() <= t);
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        seg.state_at(t - seg.t0)
    }

    /// Jerk active at time `t` (zero outside the trajectory).
    pub fn jerk_at(&self, t: T) -> Vec2<T> {
        if t < self.start_time() || t >= self.end_time() {
            return Vec2::zero();
        }
        let idx = self.segments.partition_point(|s| s.end_time() <= t);
        self.segments[idx.min(self.segments.len() - 1)].jerk()
    }

    fn push(&mut self, duration: T, cx: [T; 4], cy: [T; 4]) {
        let t0 = self.end_time();
        // Drop a leading zero-length placeholder once real motion is appended.
        if self.segments.len() == 1 && self.segments[0].duration == T::zero() {
            self.segments.clear();
        }
        self.segments.push(TrajectorySegment { t0, duration, coeffs_x: cx, coeffs_y: cy });
    }

    /// Continues at the current velocity for `duration`.
    pub fn append_cruise(&mut self, duration: T) -> Result<&mut Self> {
        if duration < T::zero() {
            return Err(invalid("cruise duration must be non-negative"));
        }
        if duration == T::zero() {
            return Ok(self);
        }
        let s = self.final_state();
        let z = T::zero();
        self.push(duration, [s.x.x, s.v.x, z, z], [s.x.y, s.v.y, z, z]);
        Ok(self)
    }

    /// Changes velocity by `dv` with constant jerk magnitude `jerk`, ending
    /// with zero acceleration.
    pub fn append_velocity_ramp(&mut self, dv: Vec2<T>, jerk: T) -> Result<&mut Self> {
        if !(jerk > T::zero()) {
            return Err(invalid("jerk must be positive"));
        }
        let mag = dv.norm();
        if mag == T::zero() {
            return Ok(self);
        }
        self.append_velocity_ramp_over(dv, (T::lit(2.0) * mag / jerk).sqrt())
    }

    /// Velocity ramp by `dv` with the same profile shape over a fixed
    /// `duration` (jerk magnitude `2|dv|/duration²`).
    pub fn append_velocity_ramp_over(&mut self, dv: Vec2<T>, duration: T) -> Result<&mut Self> {
        if !(duration > T::zero()) {
            return Err(invalid("ramp duration must be positive"));
        }
        if dv.norm() == T::zero() {
            return self.append_cruise(duration);
        }
        let s = self.final_state();
        let c2 = dv * (T::one() / duration);
        let c3 = dv * (-T::one() / (T::lit(3.0) * duration * duration));
        self.push(duration, [s.x.x, s.v.x, c2.x, c3.x], [s.x.y, s.v.y, c2.y, c3.y]);
        Ok(self)
    }

    /// Adds the rest-to-rest cubic `d (3s² − 2s³)` on top of the current
    /// velocity (which is zero for a true rest-to-rest move).
    pub fn append_move(&mut self, displacement: Vec2<T>, duration: T) -> Result<&mut Self> {
        if !(duration > T::zero()) {
            return Err(invalid("move duration must be positive"));
        }
        let s = self.final_state();
        let t2 = duration * duration;
        let c2 = displacement * (T::lit(3.0) / t2);
        let c3 = displacement * (-T::lit(2.0) / (t2 * duration));
        self.push(duration, [s.x.x, s.v.x, c2.x, c3.x], [s.x.y, s.v.y, c2.y, c3.y]);
        Ok(self)
    }

    /// Holds the trap still until absolute time `t` (requires zero velocity
    /// for a true hold; otherwise this is a cruise).
    pub fn extend_to(&mut self, t: T) -> Result<&mut Self> {
        let end = self.end_time();
        if t > end {
            self.append_cruise(t - end)?;
        }
        Ok(self)
    }

    /// Serializes as the plain segment list `[{t0, duration, coeffs_x, coeffs_y}]`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.segments)?)
    }

    pub fn from_json(label: impl Into<String>, json: &str) -> Result<Self> {
        let segs: Vec<TrajectorySegment<T>> = serde_json::from_str(json).map_err(Error::from)?;
        Self::from_segments(label, segs)
    }
}

/// Rest-to-rest move of `d` metres along x in time `duration`, starting at the
/// origin at `t = 0`.
pub fn make_rest_to_rest_move<T: Real>(d: T, duration: T) -> Result<Trajectory<T>> {
    if !(duration > T::zero()) {
        return Err(invalid("move duration must be positive"));
    }
    let mut traj = Trajectory::at_rest("move", T::zero(), Vec2::zero());
    traj.append_move(Vec2::new(d, T::zero()), duration)?;
    Ok(traj)
}

/// Constant jerk magnitude of the rest-to-rest cubic: `12|d|/T³`.
pub fn rest_to_rest_jerk<T: Real>(d: T, duration: T) -> Result<T> {
    if !(duration > T::zero()) {
        return Err(invalid("move duration must be positive"));
    }
    Ok(T::lit(12.0) * d.abs() / (duration * duration * duration))
}

/// Velocity ramp from rest to `dv` along x with jerk magnitude `jerk`.
/// A zero `dv` gives a single zero-duration segment.
pub fn make_velocity_ramp<T: Real>(dv: T, jerk: T) -> Result<Trajectory<T>> {
    if !(jerk > T::zero()) {
        return Err(invalid("jerk must be positive"));
    }
    let mut traj = Trajectory::at_rest("ramp", T::zero(), Vec2::zero());
    traj.append_velocity_ramp(Vec2::new(dv, T::zero()), jerk)?;
    Ok(traj)
}

/// Free-function form of [`Trajectory::sample`].
pub fn sample<T: Real>(traj: &Trajectory<T>, t: T) -> MotionState<T> {
    traj.sample(t)
}

/// Time and distance needed to change velocity by `dv` at constant jerk:
/// `(sqrt(2|dv|/j), 2|dv|T/3)`.
pub fn zone_transfer_cost<T: Real>(dv: T, jerk: T) -> Result<(T, T)> {
    let ramp = make_velocity_ramp(dv, jerk)?;
    let end = ramp.final_state();
    Ok((ramp.duration(), end.x.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_to_rest_baseline_jerk_and_peak_velocity() {
        let traj = make_rest_to_rest_move(100e-6f64, 200e-6).unwrap();
        // 12 d / T^3 = 12e-4 / 8e-12
        assert_relative_eq!(rest_to_rest_jerk(100e-6, 200e-6).unwrap(), 1.5e8, max_relative = 1e-12);
        assert_relative_eq!(traj.jerk_at(50e-6).norm(), 1.5e8, max_relative = 1e-9);
        let mid = traj.sample(100e-6);
        assert_relative_eq!(mid.v.x, 0.75, max_relative = 1e-12);
        assert_relative_eq!(mid.x.x, 50e-6, max_relative = 1e-12);
        let end = traj.sample(200e-6);
        assert_relative_eq!(end.x.x, 100e-6, max_relative = 1e-12);
        assert!(end.v.x.abs() < 1e-12);
    }

    #[test]
    fn zero_move_is_identically_zero() {
        let traj = make_rest_to_rest_move(0.0, 1e-3).unwrap();
        for k in 0..=10 {
            let s = traj.sample(k as f64 * 1e-4);
            assert_eq!(s.x.norm(), 0.0);
            assert_eq!(s.v.norm(), 0.0);
        }
    }

    #[test]
    fn non_positive_duration_rejected() {
        assert!(matches!(make_rest_to_rest_move(1e-6, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_rest_to_rest_move(1e-6, -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_velocity_ramp(0.1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(zone_transfer_cost(0.1, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ramp_reproduces_zone_transfer_figures() {
        let (t, d) = zone_transfer_cost(0.05, 1.5e8).unwrap();
        assert_relative_eq!(t, 25.8e-6, max_relative = 0.01);
        assert_relative_eq!(d, 860e-9, max_relative = 0.01);
        // hand values: T = sqrt(0.2/1.5e8), d = 2 dv T / 3
        let (t, d) = zone_transfer_cost(0.1, 1.5e8).unwrap();
        assert_relative_eq!(t, 3.6515e-5, max_relative = 1e-4);
        assert_relative_eq!(d, 2.4343e-6, max_relative = 1e-4);
        assert_eq!(zone_transfer_cost(0.0, 1.5e8).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn ramp_boundary_conditions() {
        let ramp = make_velocity_ramp(0.05f64, 1.5e8).unwrap();
        let t = ramp.end_time();
        let s = ramp.sample(t);
        assert_relative_eq!(s.v.x, 0.05, max_relative = 1e-12);
        assert!(s.a.x.abs() < 1e-6 * 0.05 / t);
        let s0 = ramp.sample(0.0);
        assert_eq!(s0.v.x, 0.0);
        assert_relative_eq!(s0.a.x, 2.0 * 0.05 / t, max_relative = 1e-12);
    }

    #[test]
    fn empty_ramp_has_zero_duration() {
        let ramp = make_velocity_ramp(0.0, 1.5e8).unwrap();
        assert_eq!(ramp.duration(), 0.0);
        assert_eq!(ramp.segments.len(), 1);
    }

    #[test]
    fn cruise_advances_linearly() {
        let mut traj = Trajectory::starting_at("c", 0.0, Vec2::zero(), Vec2::new(0.1, 0.0));
        traj.append_cruise(20e-6).unwrap();
        assert_relative_eq!(traj.sample(10e-6).x.x, 1e-6, max_relative = 1e-12);
    }

    #[test]
    fn sampling_outside_span() {
        let mut traj = Trajectory::at_rest("t", 1e-6, Vec2::new(2e-6, 0.0));
        traj.append_velocity_ramp(Vec2::new(0.1, 0.0), 1.5e8).unwrap();
        let before = traj.sample(0.0);
        assert_eq!(before.x, Vec2::new(2e-6, 0.0));
        assert_eq!(before.v, Vec2::zero());
        let end = traj.final_state();
        let after = traj.sample(end.t + 5e-6);
        assert_relative_eq!(after.x.x, end.x.x + 0.1 * 5e-6, max_relative = 1e-12);
        assert_eq!(after.a, Vec2::zero());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut traj = Trajectory::at_rest("j", 0.0, Vec2::new(1e-6, 3e-6));
        traj.append_velocity_ramp(Vec2::new(0.03, 0.04), 1.5e8)
            .unwrap()
            .append_cruise(7.3e-6)
            .unwrap()
            .append_velocity_ramp(Vec2::new(-0.03, -0.04), 1.5e8)
            .unwrap();
        let json = traj.to_json().unwrap();
        let back = Trajectory::<f64>::from_json("j", &json).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn discontinuous_import_rejected() {
        let a = TrajectorySegment { t0: 0.0, duration: 1.0, coeffs_x: [0.0, 1.0, 0.0, 0.0], coeffs_y: [0.0; 4] };
        let b = TrajectorySegment { t0: 1.0, duration: 1.0, coeffs_x: [2.0, 1.0, 0.0, 0.0], coeffs_y: [0.0; 4] };
        assert!(Trajectory::from_segments("bad", vec![a, b]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let (t, d) = zone_transfer_cost(0.05f32, 1.5e8f32).unwrap();
        assert!((t - 25.82e-6).abs() / 25.82e-6 < 1e-3);
        assert!((d - 860.7e-9).abs() / 860.7e-9 < 1e-3);
    }
}
