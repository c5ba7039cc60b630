use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Planar pose in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, counter-clockwise from the global x axis.
    pub heading: f64,
}

impl Pose2D {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Unit vector pointing along the heading.
    pub fn forward(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }

    /// Unit vector pointing to the left of the heading.
    pub fn left(&self) -> (f64, f64) {
        (-self.heading.sin(), self.heading.cos())
    }

    /// The point `distance` metres ahead along the heading.
    pub fn ahead(&self, distance: f64) -> (f64, f64) {
        let (fx, fy) = self.forward();
        (self.x + distance * fx, self.y + distance * fy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.1 + 4.0 * PI) - 0.1).abs() < 1e-12);
        assert!((wrap_angle(-0.1 - 2.0 * PI) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn left_is_forward_rotated() {
        let p = Pose2D::new(0.0, 0.0, 0.3);
        let (fx, fy) = p.forward();
        let (lx, ly) = p.left();
        assert!((fx * lx + fy * ly).abs() < 1e-15);
        assert!((fx * ly - fy * lx - 1.0).abs() < 1e-15);
    }
}
