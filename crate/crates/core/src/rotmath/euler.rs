use std::fmt;
use std::str::FromStr;

use super::mat::Mat3;
use crate::error::{Error, Result};

/// Tolerance on the second Euler angle's distance from ±90°.
pub const GIMBAL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn rotation(self, angle: f64) -> Mat3 {
        match self {
            Axis::X => Mat3::rot_x(angle),
            Axis::Y => Mat3::rot_y(angle),
            Axis::Z => Mat3::rot_z(angle),
        }
    }

    /// Derivative of [`Axis::rotation`] with respect to the angle.
    pub fn rotation_derivative(self, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        match self {
            Axis::X => Mat3([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]]),
            Axis::Y => Mat3([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]),
            Axis::Z => Mat3([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]),
        }
    }
}

/// Intrinsic Tait-Bryan orders supported by the joint table.
///
/// `Xzy` composes `R = Rx(θx) · Rz(θz) · Ry(θy)`, `Yxz` composes
/// `R = Ry(θy) · Rx(θx) · Rz(θz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EulerOrder {
    Xzy,
    Yxz,
}

impl EulerOrder {
    pub fn axes(self) -> [Axis; 3] {
        match self {
            EulerOrder::Xzy => [Axis::X, Axis::Z, Axis::Y],
            EulerOrder::Yxz => [Axis::Y, Axis::X, Axis::Z],
        }
    }

    pub fn second_axis(self) -> Axis {
        self.axes()[1]
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EulerOrder::Xzy => "xzy",
            EulerOrder::Yxz => "yxz",
        })
    }
}

impl FromStr for EulerOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xzy" => Ok(EulerOrder::Xzy),
            "yxz" => Ok(EulerOrder::Yxz),
            other => Err(Error::Skeleton(format!(
                "unsupported Euler order `{other}`"
            ))),
        }
    }
}

/// Builds the rotation for angles given per axis as `[θx, θy, θz]` (radians).
pub fn euler_to_matrix(angles: [f64; 3], order: EulerOrder) -> Mat3 {
    let [a, b, c] = order.axes();
    a.rotation(angles[a.index()]) * b.rotation(angles[b.index()]) * c.rotation(angles[c.index()])
}

/// Result of decomposing a rotation matrix into a table order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerExtraction {
    /// `[θx, θy, θz]` in radians.
    pub angles: [f64; 3],
    /// Second angle within [`GIMBAL_TOLERANCE`] of ±90°.
    pub gimbal: bool,
    /// At least one angle fell outside the supplied range and was clamped.
    pub clamped: bool,
    /// Total clamp distance in radians (0 when nothing was clamped).
    pub violation: f64,
}

/// Analytic Euler extraction. When `ranges` is given, recovered angles outside
/// `[min, max]` are clamped and flagged.
pub fn matrix_to_euler(
    r: &Mat3,
    order: EulerOrder,
    ranges: Option<&[super::AxisRange; 3]>,
) -> Result<EulerExtraction> {
    if !r.is_finite() {
        return Err(Error::NonFinite("rotation matrix"));
    }
    let m = &r.0;
    // (first, second, third) angles of the order.
    let (first, second_sin, third) = match order {
        EulerOrder::Xzy => {
            let s = -m[0][1];
            (m[2][1].atan2(m[1][1]), s, m[0][2].atan2(m[0][0]))
        }
        EulerOrder::Yxz => {
            let s = -m[1][2];
            (m[0][2].atan2(m[2][2]), s, m[1][0].atan2(m[1][1]))
        }
    };
    let second = second_sin.clamp(-1.0, 1.0).asin();
    let gimbal = std::f64::consts::FRAC_PI_2 - second.abs() <= GIMBAL_TOLERANCE;
    let (first, third) = if gimbal {
        // Only the combination of first and third angle is observable; put it
        // all on the first axis.
        let combined = match order {
            EulerOrder::Xzy => (-m[1][2]).atan2(m[2][2]),
            EulerOrder::Yxz => (-m[2][0]).atan2(m[0][0]),
        };
        (combined, 0.0)
    } else {
        (first, third)
    };

    let axes = order.axes();
    let mut angles = [0.0; 3];
    angles[axes[0].index()] = first;
    angles[axes[1].index()] = second;
    angles[axes[2].index()] = third;

    let mut clamped = false;
    let mut violation = 0.0;
    if let Some(ranges) = ranges {
        for (a, rg) in angles.iter_mut().zip(ranges.iter()) {
            if *a < rg.min || *a > rg.max {
                let c = a.clamp(rg.min, rg.max);
                violation += (*a - c).abs();
                *a = c;
                clamped = true;
            }
        }
    }
    Ok(EulerExtraction {
        angles,
        gimbal,
        clamped,
        violation,
    })
}
