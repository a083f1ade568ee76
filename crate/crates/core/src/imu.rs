//! IMU measurement types and the integer-nanosecond time base.

use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed nanoseconds since an arbitrary epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_nanos(ns: i64) -> Self {
        Timestamp(ns)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e9).round() as i64)
    }

    pub fn nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// `self - earlier` in seconds.
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 * 1e-9
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ns: i64) -> Timestamp {
        Timestamp(self.0 + ns)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One gyro + accelerometer reading in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: Timestamp,
    /// rad/s
    pub gyro: Vector3<f64>,
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: Timestamp, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        ImuSample { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.gyro.iter().chain(self.accel.iter()).all(|v| v.is_finite())
    }

    /// Componentwise linear interpolation at `t`.
    pub fn lerp(a: &ImuSample, b: &ImuSample, t: Timestamp) -> ImuSample {
        let span = (b.t - a.t) as f64;
        let s = if span == 0.0 { 0.0 } else { (t - a.t) as f64 / span };
        ImuSample {
            t,
            gyro: a.gyro + (b.gyro - a.gyro) * s,
            accel: a.accel + (b.accel - a.accel) * s,
        }
    }
}

/// Checks that a stream is non-empty, finite and strictly increasing in time.
pub fn validate_stream(samples: &[ImuSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("IMU stream has no samples"));
    }
    for (i, s) in samples.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::MalformedStream(format!("sample {i} is not finite")));
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(Error::MalformedStream(format!(
                "timestamp {} at sample {} does not increase past {}",
                s.t,
                i,
                samples[i - 1].t
            )));
        }
    }
    Ok(())
}

/// Samples covering `[t0, t1]`, with interpolated samples inserted at both
/// ends when the stream does not hit them exactly.
///
/// Returns an error when the stream does not bracket the interval.
pub fn slice_interval(samples: &[ImuSample], t0: Timestamp, t1: Timestamp) -> Result<Vec<ImuSample>> {
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("interval [{t0}, {t1}] is reversed")));
    }
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(Error::EmptyInput("IMU stream has no samples"));
    };
    if first.t > t0 || last.t < t1 {
        return Err(Error::MalformedStream(format!(
            "IMU stream [{}, {}] does not cover [{}, {}]",
            first.t, last.t, t0, t1
        )));
    }
    let lo = samples.partition_point(|s| s.t <= t0);
    let hi = samples.partition_point(|s| s.t < t1);
    let mut out = Vec::with_capacity(hi.saturating_sub(lo) + 2);
    let before = &samples[lo - 1];
    out.push(if before.t == t0 {
        *before
    } else {
        ImuSample::lerp(before, &samples[lo], t0)
    });
    out.extend(samples[lo..hi].iter().filter(|s| s.t > t0));
    let after = &samples[hi];
    if t1 > t0 {
        out.push(if after.t == t1 {
            *after
        } else {
            ImuSample::lerp(&samples[hi - 1], after, t1)
        });
    }
    Ok(out)
}

/// Bias state `S[Ba, Bg]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ImuStatus {
    /// Accelerometer bias, m/s².
    pub ba: Vector3<f64>,
    /// Gyroscope bias, rad/s.
    pub bg: Vector3<f64>,
}

impl ImuStatus {
    pub fn new(ba: Vector3<f64>, bg: Vector3<f64>) -> Self {
        ImuStatus { ba, bg }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Fails if either bias is non-finite or exceeds its bound.
    pub fn validate(&self, max_ba: f64, max_bg: f64) -> Result<()> {
        let ok = |v: &Vector3<f64>, lim: f64| v.iter().all(|x| x.is_finite()) && v.norm() <= lim;
        if !ok(&self.ba, max_ba) || !ok(&self.bg, max_bg) {
            return Err(Error::InvalidArgument(format!(
                "bias out of bounds: |ba| = {} (max {}), |bg| = {} (max {})",
                self.ba.norm(),
                max_ba,
                self.bg.norm(),
                max_bg
            )));
        }
        Ok(())
    }
}

/// Continuous-time noise densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuNoiseModel {
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s²/√Hz
    pub gyro_random_walk: f64,
    /// m/s³/√Hz
    pub accel_random_walk: f64,
}

impl Default for ImuNoiseModel {
    fn default() -> Self {
        ImuNoiseModel {
            gyro_noise_density: 1.7e-4,
            accel_noise_density: 2.0e-3,
            gyro_random_walk: 1.9e-5,
            accel_random_walk: 3.0e-3,
        }
    }
}

impl ImuNoiseModel {
    pub fn noiseless() -> Self {
        ImuNoiseModel {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_random_walk: 0.0,
            accel_random_walk: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gyro_noise_density,
            self.accel_noise_density,
            self.gyro_random_walk,
            self.accel_random_walk,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "noise densities must be finite and non-negative: {all:?}"
            )));
        }
        Ok(())
    }
}
