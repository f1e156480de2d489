//! Rigid point-set registration (Kabsch, proper rotations only).

use nalgebra::{Matrix3, Vector3};

use crate::{MatchError, Result};

fn centroid(pts: &[[f64; 3]]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for p in pts {
        c += Vector3::new(p[0], p[1], p[2]);
    }
    c / pts.len() as f64
}

fn is_collinear(pts: &[[f64; 3]], center: &Vector3<f64>) -> bool {
    // Rank of the centered coordinates via the scatter matrix spectrum.
    let mut scatter = Matrix3::zeros();
    for p in pts {
        let d = Vector3::new(p[0], p[1], p[2]) - center;
        scatter += d * d.transpose();
    }
    let eigen = scatter.symmetric_eigen();
    let mut ev: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev[1] <= 1e-12 * ev[0].max(1e-12)
}

/// Optimal proper rigid transform `(R, v)` minimizing the RMSD of
/// `R * q_i + v` against `t_i`, returned together with that RMSD.
///
/// Reflections are never returned: when the best orthogonal transform is
/// improper, the smallest singular direction is flipped, so `det(R) = +1`
/// always holds.
pub fn kabsch_align(
    q_pts: &[[f64; 3]],
    t_pts: &[[f64; 3]],
) -> Result<([[f64; 3]; 3], [f64; 3], f64)> {
    if q_pts.len() != t_pts.len() {
        return Err(MatchError::InvalidInput(format!(
            "point counts differ: {} vs {}",
            q_pts.len(),
            t_pts.len()
        )));
    }
    if q_pts.len() < 3 {
        return Err(MatchError::InvalidInput(format!(
            "need at least 3 point pairs, got {}",
            q_pts.len()
        )));
    }
    let qc = centroid(q_pts);
    let tc = centroid(t_pts);
    if is_collinear(q_pts, &qc) || is_collinear(t_pts, &tc) {
        return Err(MatchError::DegenerateInput("points are collinear".into()));
    }

    // Cross-covariance of centered pairs.
    let mut h = Matrix3::zeros();
    for (qp, tp) in q_pts.iter().zip(t_pts) {
        let q = Vector3::new(qp[0], qp[1], qp[2]) - qc;
        let t = Vector3::new(tp[0], tp[1], tp[2]) - tc;
        h += q * t.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| MatchError::DegenerateInput("SVD failed".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| MatchError::DegenerateInput("SVD failed".into()))?
        .transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = v * correction * u.transpose();
    let shift = tc - rot * qc;

    let mut sq_sum = 0.0;
    for (qp, tp) in q_pts.iter().zip(t_pts) {
        let moved = rot * Vector3::new(qp[0], qp[1], qp[2]) + shift;
        let diff = moved - Vector3::new(tp[0], tp[1], tp[2]);
        sq_sum += diff.norm_squared();
    }
    let rmsd = (sq_sum / q_pts.len() as f64).sqrt();

    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = rot[(i, j)];
        }
    }
    Ok((r, [shift[0], shift[1], shift[2]], rmsd))
}

/// Applies `R * p + v`.
pub fn apply_transform(r: &[[f64; 3]; 3], v: &[f64; 3], p: &[f64; 3]) -> [f64; 3] {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + v[0],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + v[1],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + v[2],
    ]
}

/// Determinant of a 3x3 rotation matrix given as nested arrays.
pub fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}
