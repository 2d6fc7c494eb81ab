//! Hopf map, inverse Hopf fibration, fiber parameterization, stereographic
//! projection, and a numeric minimum-distance probe between fibers.
//!
//! The inverse map has a coordinate singularity at p1 = -1 (both chart
//! formulas divide by 1 + p1), so a second chart covers the antipodal cap:
//! rotate the point into the primary chart, lift, and rotate the lift back.
//! Written out, the second chart is
//! `r' = (-p3, p2, 1 - p1, 0) / sqrt(2 (1 - p1))`,
//! which lands exactly on `j` for P = (-1, 0, 0).

use crate::error::{HopfeError, Result};
use crate::quat::{quat_distance, Point3, Quat, Quaternion, Vec3};
use crate::real::Real;

/// Chart switch threshold on 1 + p1.
const CHART_EPS: f64 = 1e-6;

/// Base point of a fiber together with the unit vector it lies over.
#[derive(Clone, Copy, Debug)]
pub struct FiberBase {
    pub r_prime: Quaternion,
    pub source: Point3,
}

/// Hopf map M: S^3 -> S^2. Input is normalized internally;
/// equals rotating (1, 0, 0) by `r`.
pub fn hopf_map<T: Real>(r: Quat<T>) -> Result<Vec3<T>> {
    let n2 = r.norm_sq();
    if n2.value() < 1e-24 {
        return Err(HopfeError::ZeroQuaternion);
    }
    let Quat { a, b, c, d } = r;
    Ok(Vec3 {
        x: (a * a + b * b - c * c - d * d) / n2,
        y: (a * d + b * c) * 2.0 / n2,
        z: (b * d - a * c) * 2.0 / n2,
    })
}

/// Inverse Hopf lift of a unit vector; chart selection is by value, both
/// charts return a unit quaternion on the fiber over `p`.
pub fn inverse_hopf_unit<T: Real>(p: Vec3<T>) -> Quat<T> {
    let one_plus = p.x + 1.0;
    let q = if one_plus.value() <= CHART_EPS {
        // Antipodal chart.
        let scale = ((-p.x + 1.0) * 2.0).sqrt();
        Quat {
            a: -p.z / scale,
            b: p.y / scale,
            c: (-p.x + 1.0) / scale,
            d: p.x.constant(0.0),
        }
    } else {
        let scale = (one_plus * 2.0).sqrt();
        Quat {
            a: p.x.constant(0.0),
            b: one_plus / scale,
            c: p.y / scale,
            d: p.z / scale,
        }
    };
    q.normalized()
}

/// Inverse Hopf map for a caller-normalized point.
pub fn inverse_hopf(p: Point3) -> Result<FiberBase> {
    let norm = p.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(HopfeError::NotOnSphere { norm });
    }
    Ok(FiberBase {
        r_prime: inverse_hopf_unit(p),
        source: p,
    })
}

/// Point on the fiber at angle `t`: `r' ⊗ (cos t + sin t · i)`.
pub fn fiber_point_unit<T: Real>(r_prime: Quat<T>, t: T) -> Quat<T> {
    r_prime.hamilton(Quat::rotor(t))
}

pub fn fiber_point(base: &FiberBase, t: f64) -> Quaternion {
    fiber_point_unit(base.r_prime, t)
}

/// Stereographic projection of a unit quaternion from the pole d = +1:
/// `(a, b, c) / (1 - d)` with the pole clamped.
pub fn stereographic_project(q: Quaternion) -> Result<Point3> {
    let norm = q.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(HopfeError::NotOnSphere { norm });
    }
    let d = q.d.min(1.0 - 1e-9);
    let plane = Vec3::new(q.a, q.b, q.c);
    if plane.norm() < 1e-9 && q.d > 1.0 - 1e-9 {
        // Exact pole: no limit direction survives, emit a conventional one.
        return Ok(Vec3::new(1.0 / (1.0 - d), 0.0, 0.0));
    }
    Ok(plane.scaled(1.0 / (1.0 - d)))
}

/// Minimum 4D Euclidean distance between the fibers over `p1` and `p2`,
/// found by a grid sweep over both fiber angles refined with coordinate
/// descent (50 iterations, step halving on failure).
pub fn min_fiber_distance(p1: Point3, p2: Point3, grid: usize) -> Result<f64> {
    assert!(grid >= 64, "grid must be at least 64");
    let b1 = inverse_hopf(p1)?;
    let b2 = inverse_hopf(p2)?;

    let two_pi = 2.0 * std::f64::consts::PI;
    let step = two_pi / grid as f64;
    let f1: Vec<Quaternion> = (0..grid).map(|i| fiber_point(&b1, i as f64 * step)).collect();
    let f2: Vec<Quaternion> = (0..grid).map(|i| fiber_point(&b2, i as f64 * step)).collect();

    let mut best = f64::INFINITY;
    let (mut t, mut s) = (0.0, 0.0);
    for (i, q1) in f1.iter().enumerate() {
        for (j, q2) in f2.iter().enumerate() {
            let d = quat_distance(*q1, *q2);
            if d < best {
                best = d;
                t = i as f64 * step;
                s = j as f64 * step;
            }
        }
    }

    let eval = |t: f64, s: f64| quat_distance(fiber_point(&b1, t), fiber_point(&b2, s));
    let mut h = step;
    for _ in 0..50 {
        let mut improved = false;
        for (dt, ds) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let d = eval(t + dt, s + ds);
            if d < best {
                best = d;
                t += dt;
                s += ds;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok(best)
}

/// Samples `count` points of the fiber over `p` and projects them to R^3.
pub fn project_fiber(p: Point3, count: usize) -> Result<Vec<(f64, Point3)>> {
    let base = inverse_hopf(p)?;
    let step = 2.0 * std::f64::consts::PI / count as f64;
    (0..count)
        .map(|i| {
            let t = i as f64 * step;
            let projected = stereographic_project(fiber_point(&base, t))?;
            Ok((t, projected))
        })
        .collect()
}
