//! Analytic rest-to-rest references and input disturbances.
//!
//! Every coordinate follows a sequence of non-overlapping moves; each move
//! is either a jerk-limited trapezoidal-acceleration stroke (seven cubic
//! segments) or a quintic polynomial. Position, velocity, and acceleration
//! are evaluated in closed form, so the simulator never differentiates the
//! reference numerically. Outside its moves a coordinate is exactly at
//! rest.

use serde::{Deserialize, Serialize};

use crate::{Error, GeneralizedForces, Result, Vector6};

/// Reference state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub pos: Vector6,
    pub vel: Vector6,
    pub acc: Vector6,
}

/// Shape of a single rest-to-rest move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveShape {
    /// Jerk-limited trapezoidal acceleration. The jerk, ramp, and cruise
    /// intervals are fixed fractions T/8, T/8, T/4 of the move duration,
    /// giving peaks v = 8d/(5T), a = 32d/(5T^2), j = 256d/(5T^3).
    #[default]
    #[serde(rename = "trap-acc")]
    TrapAcc,
    /// Minimum-order polynomial with zero boundary velocity and
    /// acceleration: s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5.
    #[serde(rename = "quintic")]
    Quintic,
}

/// One rest-to-rest displacement on a single coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMove {
    pub start: f64,
    pub duration: f64,
    pub delta: f64,
    pub shape: MoveShape,
}

impl AxisMove {
    pub fn new(start: f64, duration: f64, delta: f64, shape: MoveShape) -> Self {
        Self { start, duration, delta, shape }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn peak_velocity(&self) -> f64 {
        let (d, t) = (self.delta.abs(), self.duration);
        match self.shape {
            MoveShape::TrapAcc => 8.0 * d / (5.0 * t),
            MoveShape::Quintic => 1.875 * d / t,
        }
    }

    pub fn peak_acceleration(&self) -> f64 {
        let (d, t) = (self.delta.abs(), self.duration);
        match self.shape {
            MoveShape::TrapAcc => 32.0 * d / (5.0 * t * t),
            MoveShape::Quintic => 10.0 / 3f64.sqrt() * d / (t * t),
        }
    }

    pub fn peak_jerk(&self) -> f64 {
        let (d, t) = (self.delta.abs(), self.duration);
        match self.shape {
            MoveShape::TrapAcc => 256.0 * d / (5.0 * t * t * t),
            MoveShape::Quintic => 60.0 * d / (t * t * t),
        }
    }

    /// (position offset from move start, velocity, acceleration) at local
    /// time `tau` in [0, duration].
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        match self.shape {
            MoveShape::TrapAcc => eval_trap_acc(self.delta, self.duration, tau),
            MoveShape::Quintic => eval_quintic(self.delta, self.duration, tau),
        }
    }

    /// Instants where some time derivative of this move jumps. Integrators
    /// align their steps on these so every step sees a smooth reference.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            MoveShape::TrapAcc => {
                let t = self.duration;
                let spans = [t / 8.0, t / 8.0, t / 8.0, t / 4.0, t / 8.0, t / 8.0, t / 8.0];
                let mut out = vec![self.start];
                let mut acc = 0.0;
                for span in spans {
                    acc += span;
                    out.push(self.start + acc);
                }
                out
            }
            MoveShape::Quintic => vec![self.start, self.end()],
        }
    }
}

/// Seven-segment jerk-limited profile, integrated segment by segment.
fn eval_trap_acc(delta: f64, duration: f64, tau: f64) -> (f64, f64, f64) {
    let t = duration;
    let j = 256.0 * delta / (5.0 * t * t * t);
    let tj = t / 8.0;
    let ta = t / 8.0;
    let tv = t / 4.0;
    let spans = [tj, ta, tj, tv, tj, ta, tj];
    let jerks = [j, 0.0, -j, 0.0, -j, 0.0, j];
    let (mut p, mut v, mut a) = (0.0, 0.0, 0.0);
    let mut t0 = 0.0;
    for (span, jk) in spans.iter().zip(jerks) {
        let local = (tau - t0).min(*span);
        if local > 0.0 {
            p += v * local + 0.5 * a * local * local + jk * local * local * local / 6.0;
            v += a * local + 0.5 * jk * local * local;
            a += jk * local;
        }
        t0 += span;
        if tau <= t0 {
            break;
        }
    }
    (p, v, a)
}

fn eval_quintic(delta: f64, duration: f64, tau: f64) -> (f64, f64, f64) {
    let x = tau / duration;
    let s = ((6.0 * x - 15.0) * x + 10.0) * x * x * x;
    let sv = ((30.0 * x - 60.0) * x + 30.0) * x * x;
    let sa = ((120.0 * x - 180.0) * x + 60.0) * x;
    (delta * s, delta * sv / duration, delta * sa / (duration * duration))
}

/// Move sequence for one coordinate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxisPlan {
    pub start: f64,
    pub moves: Vec<AxisMove>,
}

impl AxisPlan {
    pub fn rest(start: f64) -> Self {
        Self { start, moves: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        let mut prev_end = 0.0;
        for mv in &self.moves {
            if !(mv.duration > 0.0) || !mv.start.is_finite() || !mv.delta.is_finite() {
                return Err(Error::Config("axis move needs finite start/delta and duration > 0".into()));
            }
            if mv.start < prev_end - 1e-12 {
                return Err(Error::Config("axis moves overlap or are out of order".into()));
            }
            prev_end = mv.end();
        }
        Ok(())
    }

    fn sample(&self, t: f64) -> (f64, f64, f64) {
        let mut base = self.start;
        for mv in &self.moves {
            if t < mv.start {
                break;
            }
            if t < mv.end() {
                let (dp, v, a) = mv.eval(t - mv.start);
                return (base + dp, v, a);
            }
            base += mv.delta;
        }
        (base, 0.0, 0.0)
    }

    fn end_time(&self) -> f64 {
        self.moves.last().map_or(0.0, AxisMove::end)
    }
}

/// Full six-coordinate reference profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionProfile {
    pub axes: [AxisPlan; 6],
}

impl MotionProfile {
    pub fn new(axes: [AxisPlan; 6]) -> Result<Self> {
        let profile = Self { axes };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in &self.axes {
            axis.validate()?;
        }
        Ok(())
    }

    /// Instant after which every coordinate is at rest.
    pub fn end_time(&self) -> f64 {
        self.axes.iter().map(AxisPlan::end_time).fold(0.0, f64::max)
    }

    /// Sorted, deduplicated union of every axis move's breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .axes
            .iter()
            .flat_map(|a| a.moves.iter().flat_map(AxisMove::breakpoints))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Largest commanded acceleration magnitude over all moves.
    pub fn peak_acceleration(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.moves.iter().map(AxisMove::peak_acceleration))
            .fold(0.0, f64::max)
    }

    /// Default experiment reference: simultaneous 10 mm strokes in x and y
    /// and 1 mm in z over half a second, while each tilt angle performs a
    /// 1 mrad out-and-back excursion in the same window.
    pub fn default_experiment() -> Self {
        let single = |delta: f64| AxisPlan {
            start: 0.0,
            moves: vec![AxisMove::new(0.0, 0.5, delta, MoveShape::TrapAcc)],
        };
        let out_and_back = |delta: f64| AxisPlan {
            start: 0.0,
            moves: vec![
                AxisMove::new(0.0, 0.25, delta, MoveShape::TrapAcc),
                AxisMove::new(0.25, 0.25, -delta, MoveShape::TrapAcc),
            ],
        };
        Self {
            axes: [
                single(10e-3),
                single(10e-3),
                single(1e-3),
                out_and_back(1e-3),
                out_and_back(1e-3),
                out_and_back(1e-3),
            ],
        }
    }
}

/// Closed-form reference evaluation; never differentiates numerically.
pub fn sample_reference(profile: &MotionProfile, t: f64) -> ReferenceSample {
    let mut pos = Vector6::zeros();
    let mut vel = Vector6::zeros();
    let mut acc = Vector6::zeros();
    for (i, axis) in profile.axes.iter().enumerate() {
        let (p, v, a) = axis.sample(t);
        pos[i] = p;
        vel[i] = v;
        acc[i] = a;
    }
    ReferenceSample { t, pos, vel, acc }
}

/// Shape of the input disturbance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisturbanceShape {
    /// Rectangular pulse of the given duration.
    #[serde(rename = "pulse")]
    Pulse,
    /// Trapezoidal pulse: linear ramps of length `ramp` at both ends,
    /// active on [onset, onset + duration + ramp], integrating to
    /// amplitude x duration.
    #[default]
    #[serde(rename = "ramped-pulse")]
    RampedPulse,
}

/// Additive wrench on a single input channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceProfile {
    /// Input channel index; 4 is the tilt torque about the y axis.
    pub channel: usize,
    pub shape: DisturbanceShape,
    pub amplitude: f64,
    pub onset: f64,
    pub duration: f64,
    pub ramp: f64,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            channel: crate::dynamics::coord::PSI,
            shape: DisturbanceShape::RampedPulse,
            amplitude: 0.05,
            onset: 0.6,
            duration: 0.05,
            ramp: 5e-3,
        }
    }
}

impl DisturbanceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.channel >= 6 {
            return Err(Error::Config(format!("disturbance channel {} out of range", self.channel)));
        }
        if self.duration < 0.0 || self.ramp < 0.0 || self.onset < 0.0 {
            return Err(Error::Config("disturbance times must be non-negative".into()));
        }
        if matches!(self.shape, DisturbanceShape::RampedPulse) && self.ramp > self.duration {
            return Err(Error::Config("disturbance ramp longer than hold".into()));
        }
        Ok(())
    }

    /// Instants where the pulse value or slope jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            DisturbanceShape::Pulse => vec![self.onset, self.onset + self.duration],
            DisturbanceShape::RampedPulse => vec![
                self.onset,
                self.onset + self.ramp,
                self.onset + self.duration,
                self.onset + self.duration + self.ramp,
            ],
        }
    }

    fn scalar(&self, t: f64) -> f64 {
        let tau = t - self.onset;
        match self.shape {
            DisturbanceShape::Pulse => {
                if (0.0..self.duration).contains(&tau) {
                    self.amplitude
                } else {
                    0.0
                }
            }
            DisturbanceShape::RampedPulse => {
                let total = self.duration + self.ramp;
                if tau <= 0.0 || tau >= total || self.ramp == 0.0 && self.duration == 0.0 {
                    0.0
                } else if tau < self.ramp {
                    self.amplitude * tau / self.ramp
                } else if tau <= self.duration {
                    self.amplitude
                } else {
                    self.amplitude * (total - tau) / self.ramp
                }
            }
        }
    }
}

/// Disturbance wrench at time `t`; zero on all channels but the target.
pub fn sample_disturbance(profile: &DisturbanceProfile, t: f64) -> GeneralizedForces {
    let mut w = GeneralizedForces::zeros();
    w[profile.channel] = profile.scalar(t);
    w
}
