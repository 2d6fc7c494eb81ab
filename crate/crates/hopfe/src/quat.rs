//! Quaternion algebra and the SO(3) rotation map.
//!
//! A unit quaternion `a + bi + cj + dk` rotates a 3-vector `v` via
//! `q v q̄ / |q|^2`; the division makes the map exactly invariant to the
//! quaternion's scale, so relation parameters never need re-projection.

use crate::error::{HopfeError, Result};
use crate::real::Real;

const ZERO_NORM_EPS: f64 = 1e-12;

/// Ordered 4-tuple `(a, b, c, d)` for `a + bi + cj + dk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

pub type Quaternion = Quat<f64>;

/// Point in 3D Euclidean space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

pub type Point3 = Vec3<f64>;

impl<T: Real> Quat<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Quat { a, b, c, d }
    }

    /// Hamilton product (non-commutative).
    pub fn hamilton(self, o: Quat<T>) -> Quat<T> {
        Quat {
            a: self.a * o.a - self.b * o.b - self.c * o.c - self.d * o.d,
            b: self.a * o.b + self.b * o.a + self.c * o.d - self.d * o.c,
            c: self.a * o.c - self.b * o.d + self.c * o.a + self.d * o.b,
            d: self.a * o.d + self.b * o.c - self.c * o.b + self.d * o.a,
        }
    }

    /// Plain sign-flip conjugate `(a, -b, -c, -d)`; no normalization.
    pub fn conjugate(self) -> Quat<T> {
        Quat {
            a: self.a,
            b: -self.b,
            c: -self.c,
            d: -self.d,
        }
    }

    pub fn norm_sq(self) -> T {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scaled(self, s: f64) -> Quat<T> {
        Quat {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    pub fn normalized(self) -> Quat<T> {
        let n = self.norm();
        Quat {
            a: self.a / n,
            b: self.b / n,
            c: self.c / n,
            d: self.d / n,
        }
    }

    /// Imaginary part as a 3-vector.
    pub fn imag(self) -> Vec3<T> {
        Vec3 {
            x: self.b,
            y: self.c,
            z: self.d,
        }
    }

    /// Rotates `v` by `q v q̄ / |q|^2`. Scale of `q` cancels exactly.
    pub fn rotate(self, v: Vec3<T>) -> Result<Vec3<T>> {
        let n2 = self.norm_sq();
        if n2.value() < ZERO_NORM_EPS * ZERO_NORM_EPS {
            return Err(HopfeError::ZeroQuaternion);
        }
        let pure = Quat {
            a: self.a.constant(0.0),
            b: v.x,
            c: v.y,
            d: v.z,
        };
        let rotated = self.hamilton(pure).hamilton(self.conjugate());
        Ok(Vec3 {
            x: rotated.b / n2,
            y: rotated.c / n2,
            z: rotated.d / n2,
        })
    }

    /// `cos(t) + sin(t) i`, the unit complex rotor embedded in H.
    pub fn rotor(t: T) -> Quat<T> {
        Quat {
            a: t.cos(),
            b: t.sin(),
            c: t.constant(0.0),
            d: t.constant(0.0),
        }
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quat {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Rotation angle in [0, 2π] and unit axis. Near-zero imaginary part
    /// falls back to the conventional axis (1, 0, 0).
    pub fn angle_axis(&self) -> Result<(f64, Point3)> {
        let n = self.norm();
        if n < ZERO_NORM_EPS {
            return Err(HopfeError::ZeroQuaternion);
        }
        let angle = 2.0 * (self.a / n).clamp(-1.0, 1.0).acos();
        let im = self.imag();
        let im_norm = im.norm();
        let axis = if im_norm < ZERO_NORM_EPS {
            Vec3 {
                x: 1.0,
                y: 0.0,
                z: 0.0,
            }
        } else {
            im.scaled(1.0 / im_norm)
        };
        Ok((angle, axis))
    }

    /// Signed rotation angle in (-π, π], canonicalized so the first axis
    /// component of magnitude > 1e-9 is positive.
    pub fn signed_angle(&self) -> Result<f64> {
        let (angle, axis) = self.angle_axis()?;
        let mut angle = wrap_angle(angle);
        for comp in [axis.x, axis.y, axis.z] {
            if comp.abs() > 1e-9 {
                if comp < 0.0 {
                    angle = wrap_angle(-angle);
                }
                break;
            }
        }
        Ok(angle)
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3<T>) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scaled(self, s: f64) -> Vec3<T> {
        Vec3 {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }

    pub fn sub(self, o: Vec3<T>) -> Vec3<T> {
        Vec3 {
            x: self.x - o.x,
            y: self.y - o.y,
            z: self.z - o.z,
        }
    }

    /// Unit vector along `self`; exact zeros fall back to (1, 0, 0) so the
    /// fibration input is always well defined.
    pub fn normalized_or_x(self) -> Vec3<T> {
        let n2 = self.norm_sq();
        if n2.value() < ZERO_NORM_EPS * ZERO_NORM_EPS {
            return Vec3 {
                x: n2.constant(1.0),
                y: n2.constant(0.0),
                z: n2.constant(0.0),
            };
        }
        let n = n2.sqrt();
        Vec3 {
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }
}

impl Point3 {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// 4D Euclidean distance between quaternions viewed as points of R^4.
pub fn quat_distance<T: Real>(p: Quat<T>, q: Quat<T>) -> T {
    let da = p.a - q.a;
    let db = p.b - q.b;
    let dc = p.c - q.c;
    let dd = p.d - q.d;
    (da * da + db * db + dc * dc + dd * dd).sqrt()
}
