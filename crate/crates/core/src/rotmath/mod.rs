//! Rotation representations used throughout the model.
//!
//! Non-root joints are parameterised by three unconstrained reals per joint
//! that are squashed into the joint's feasible angle range with a scaled
//! `tanh`, then composed as intrinsic Tait-Bryan rotations in the joint's
//! table order. The root uses the continuous 6D representation (two
//! 3-vectors orthogonalised by Gram-Schmidt).
//!
//! Angles are radians everywhere in code; the limit table asset is authored
//! in degrees and converted when loaded.

mod euler;
mod limits;
mod mat;
mod sixd;

pub use euler::{
    euler_to_matrix, matrix_to_euler, Axis, EulerExtraction, EulerOrder, GIMBAL_TOLERANCE,
};
pub use limits::{audit_gimbal_safety, GimbalAudit, GimbalViolation, JointLimit, JointLimitTable};
pub use mat::{add, cross, dot, norm, scale, sub, Mat3, Vec3};
pub use sixd::{matrix_to_sixd, sixd_to_matrix, sixd_to_matrix_backward, Rotation6D};

use crate::error::{Error, Result};

/// Closed angle interval `[min, max]` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl AxisRange {
    pub const FIXED_ZERO: AxisRange = AxisRange { min: 0.0, max: 0.0 };

    pub fn from_degrees(min: f64, max: f64) -> Self {
        AxisRange {
            min: min.to_radians(),
            max: max.to_radians(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.min == self.max
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.max - self.min)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.max + self.min)
    }

    /// Strictly inside `(min, max)`, or equal to the constant of a fixed axis.
    pub fn contains_open(&self, a: f64) -> bool {
        if self.is_fixed() {
            a == self.min
        } else {
            a > self.min && a < self.max
        }
    }
}

/// `u = ((β − α)/2)·tanh(v) + (α + β)/2`.
///
/// Finite `v` always lands strictly inside `(α, β)`: once `tanh` saturates in
/// floating point the result is pulled one ulp back inside the bound.
#[inline]
pub fn map_to_range(v: f64, range: AxisRange) -> f64 {
    if range.is_fixed() {
        return range.min;
    }
    let u = range.half_width() * v.tanh() + range.midpoint();
    if u >= range.max {
        range.max.next_down()
    } else if u <= range.min {
        range.min.next_up()
    } else {
        u
    }
}

/// `du/dv` of [`map_to_range`].
#[inline]
pub fn map_to_range_derivative(v: f64, range: AxisRange) -> f64 {
    if range.is_fixed() {
        return 0.0;
    }
    let t = v.tanh();
    range.half_width() * (1.0 - t * t)
}

/// Maps a raw per-axis triple `[vx, vy, vz]` into the joint's ranges.
pub fn map_to_range3(v: [f64; 3], ranges: &[AxisRange; 3]) -> Result<[f64; 3]> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("raw Euler vector"));
    }
    Ok([
        map_to_range(v[0], ranges[0]),
        map_to_range(v[1], ranges[1]),
        map_to_range(v[2], ranges[2]),
    ])
}
