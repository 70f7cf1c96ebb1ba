//! Centerline smoothing with local quadratic Bezier windows.
//!
//! Each interior point is replaced by the parameter-1/2 point of the
//! quadratic Bezier whose control points are the midpoints to its
//! neighbors and the point itself, which works out to the weights
//! (1/8, 3/4, 1/8). Endpoints stay fixed, replacements are computed from
//! the input points only, staircase artifacts shrink and the arc length
//! never grows.

use crate::geometry::Point3;

pub fn smooth_centerline(points: &[Point3]) -> Vec<Point3> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(points.len());
    out.push(points[0]);
    for w in points.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        out.push([
            a[0] / 8.0 + 3.0 * b[0] / 4.0 + c[0] / 8.0,
            a[1] / 8.0 + 3.0 * b[1] / 4.0 + c[1] / 8.0,
            a[2] / 8.0 + 3.0 * b[2] / 4.0 + c[2] / 8.0,
        ]);
    }
    out.push(*points.last().unwrap());
    out
}
