//! Small dense solvers: 3x3 symmetric eigendecomposition and 6x6 SPD solve.

use crate::geom::Vec3;
use crate::scalar::Real;

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending with matching unit eigenvectors.
pub fn symmetric_eigen3<S: Real>(m: [[S; 3]; 3]) -> ([S; 3], [Vec3<S>; 3]) {
    let mut a = m;
    let mut v = [[S::zero(); 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = S::one();
    }
    for _sweep in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off <= S::epsilon() * scale || off == S::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == S::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (S::lit(2.0) * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
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
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.map(|i| a[i][i]);
    let vecs = order.map(|i| Vec3::new(v[0][i], v[1][i], v[2][i]));
    (vals, vecs)
}

/// Solves `A x = b` for symmetric positive (semi)definite 6x6 `A` via
/// Cholesky. Returns `None` when `A` is numerically singular.
pub fn solve_spd6<S: Real>(a: &[[S; 6]; 6], b: &[S; 6]) -> Option<[S; 6]> {
    let mut l = [[S::zero(); 6]; 6];
    let trace: S = (0..6).map(|i| a[i][i].abs()).sum();
    let floor = trace * S::lit(1e-12);
    for i in 0..6 {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= floor || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [S::zero(); 6];
    for i in 0..6 {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = [S::zero(); 6];
    for i in (0..6).rev() {
        let mut sum = y[i];
        for k in i + 1..6 {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}
