//! Principal-axis analysis of 3D point sets via Jacobi eigen-decomposition
//! of the 3x3 covariance matrix.

use super::{Scalar, Vec3};

/// Centroid, dominant principal axis (unit vector), and the extent of the
/// point set along that axis (max minus min projection).
///
/// Empty input returns zeros. The axis sign is fixed so its first nonzero
/// component is positive, keeping results deterministic.
pub fn principal_axis<S: Scalar>(points: &[Vec3<S>]) -> (Vec3<S>, Vec3<S>, S) {
    if points.is_empty() {
        return (Vec3::zero(), Vec3::zero(), S::zero());
    }
    let n = S::from(points.len()).unwrap();
    let mut centroid = Vec3::zero();
    for &p in points {
        centroid += p;
    }
    centroid = centroid / n;

    // covariance (upper triangle)
    let mut c = [[S::zero(); 3]; 3];
    for &p in points {
        let d = p - centroid;
        let d = [d.x, d.y, d.z];
        for i in 0..3 {
            for j in i..3 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            c[i][j] /= n;
            c[j][i] = c[i][j];
        }
    }

    let (vals, vecs) = jacobi_eigen_3x3(c);
    let mut best = 0;
    for i in 1..3 {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let mut axis = Vec3::new(vecs[0][best], vecs[1][best], vecs[2][best]).normalized();
    if axis == Vec3::zero() {
        axis = Vec3::new(S::one(), S::zero(), S::zero());
    }
    // deterministic sign
    let lead = if axis.x != S::zero() {
        axis.x
    } else if axis.y != S::zero() {
        axis.y
    } else {
        axis.z
    };
    if lead < S::zero() {
        axis = -axis;
    }

    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for &p in points {
        let t = (p - centroid).dot(axis);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    (centroid, axis, hi - lo)
}

/// Cyclic Jacobi iteration for a symmetric 3x3 matrix. Returns
/// (eigenvalues, column eigenvectors).
fn jacobi_eigen_3x3<S: Scalar>(mut a: [[S; 3]; 3]) -> ([S; 3], [[S; 3]; 3]) {
    let mut v = [[S::zero(); 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = S::one();
    }
    for _ in 0..50 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off <= S::from(1e-30).unwrap() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == S::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (S::two() * a[p][q]);
            let t = {
                let s = if theta < S::zero() { -S::one() } else { S::one() };
                s / (theta.abs() + (theta * theta + S::one()).sqrt())
            };
            let c = S::one() / (t * t + S::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}
