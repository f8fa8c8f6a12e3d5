//! 2D convex hull (monotone chain) and point-in-hull queries.

use super::{Scalar, Vec2};

/// Convex hull of a point set, counter-clockwise, starting from the
/// lexicographically smallest point. Collinear boundary points are dropped.
///
/// Degenerate inputs (0, 1, or 2 distinct points) return the distinct points
/// in lexicographic order.
pub fn convex_hull<S: Scalar>(points: &[Vec2<S>]) -> Vec<Vec2<S>> {
    let mut pts: Vec<Vec2<S>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() <= 2 {
        return pts;
    }

    let mut hull: Vec<Vec2<S>> = Vec::with_capacity(pts.len() * 2);
    // lower chain then upper chain
    for &p in pts.iter() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b - a).cross(p - a) <= S::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b - a).cross(p - a) <= S::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// True if `p` lies inside or on the boundary of the hull, with slack `eps`
/// in the signed-distance sense on every edge.
pub fn point_in_hull<S: Scalar>(hull: &[Vec2<S>], p: Vec2<S>, eps: S) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0].distance(p) <= eps,
        2 => {
            // distance to the segment
            let (a, b) = (hull[0], hull[1]);
            let ab = b - a;
            let t = ((p - a).dot(ab) / ab.dot(ab)).max(S::zero()).min(S::one());
            (a + ab * t).distance(p) <= eps
        }
        _ => {
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let edge = b - a;
                let n = edge.norm();
                if n == S::zero() {
                    continue;
                }
                // signed distance of p left of edge a->b (hull is CCW)
                if edge.cross(p - a) / n < -eps {
                    return false;
                }
            }
            true
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn square_hull() {
        let pts = vec![v(0., 0.), v(1., 0.), v(1., 1.), v(0., 1.), v(0.5, 0.5)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(point_in_hull(&h, v(0.5, 0.5), 1e-12));
        assert!(point_in_hull(&h, v(0.0, 0.0), 1e-12));
        assert!(!point_in_hull(&h, v(1.2, 0.5), 1e-12));
    }

    #[test]
    fn collinear_points_collapse_to_segment() {
        let pts = vec![v(0., 0.), v(1., 1.), v(2., 2.), v(3., 3.)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 2);
        assert!(point_in_hull(&h, v(1.5, 1.5), 1e-9));
        assert!(!point_in_hull(&h, v(1.5, 1.6), 1e-9));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(convex_hull::<f64>(&[]).is_empty());
        assert_eq!(convex_hull(&[v(2., 3.)]), vec![v(2., 3.)]);
        assert_eq!(convex_hull(&[v(2., 3.), v(2., 3.)]).len(), 1);
    }

    #[test]
    fn hull_contains_all_inputs() {
        // pseudo-random points, fixed pattern
        let mut pts = Vec::new();
        let mut s = 1u64;
        for _ in 0..200 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = ((s >> 33) % 1000) as f64 / 100.0;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let y = ((s >> 33) % 1000) as f64 / 100.0;
            pts.push(v(x, y));
        }
        let h = convex_hull(&pts);
        for &p in &pts {
            assert!(point_in_hull(&h, p, 1e-9));
        }
    }
}
