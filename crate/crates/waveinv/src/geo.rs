//! Small fixed-size vector helpers for 3D points and fields.
//!
//! Everything in the crate stores points and nodal vector values as `[f64; 3]`
//! and goes through these free functions; the hot solver loops stay on flat
//! arrays without any abstraction in the way.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

/// Solve the 3x3 system `m x = r` by Cramer's rule. Returns `None` when the
/// matrix is (numerically) singular. `m` is given as three column vectors.
pub fn solve3(cols: [Vec3; 3], r: Vec3) -> Option<Vec3> {
    let det = dot(cols[0], cross(cols[1], cols[2]));
    if det.abs() < f64::EPSILON {
        return None;
    }
    let x = dot(r, cross(cols[1], cols[2])) / det;
    let y = dot(cols[0], cross(r, cols[2])) / det;
    let z = dot(cols[0], cross(cols[1], r)) / det;
    Some([x, y, z])
}
