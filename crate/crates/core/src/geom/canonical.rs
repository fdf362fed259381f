use super::{cross, dot, sub, Pose, PointCloud, Quat, Vec3};
use crate::Result;

/// Relative eigenvalue gap below which principal axes are treated as
/// repeated.
const EIGEN_GAP_TOL: f64 = 1e-9;

/// Output of [`canonicalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Canonical {
    /// Zero-centred, principal-axis aligned copy of the input.
    pub cloud: PointCloud,
    /// Maps the canonical cloud back onto the input cloud.
    pub pose: Pose,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec3,
    /// Set when the covariance is rank-deficient or has repeated
    /// eigenvalues and a fallback frame was used.
    pub degenerate: bool,
}

/// Centres a cloud and rotates it onto its principal axes.
///
/// Axes are ordered by descending variance. The first two axes are flipped
/// so that the point with the largest absolute projection (lowest index on
/// ties) projects positively; the third is their cross product, keeping the
/// frame right-handed. Repeated eigenvalues fall back to the input axes.
pub fn canonicalize(cloud: &PointCloud) -> Result<Canonical> {
    let c = cloud.centroid();
    let centred: Vec<Vec3> = cloud.points().iter().map(|p| sub(*p, c)).collect();

    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in &centred {
        let v = nalgebra::Vector3::new(p[0], p[1], p[2]);
        cov += v * v.transpose();
    }
    cov /= centred.len() as f64;

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = [
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    ];
    let axis = |k: usize| -> Vec3 {
        let col = eig.eigenvectors.column(order[k]);
        [col[0], col[1], col[2]]
    };

    let scale = vals[0].max(f64::MIN_POSITIVE);
    let repeated = (vals[0] - vals[1]) <= EIGEN_GAP_TOL * scale
        || (vals[1] - vals[2]) <= EIGEN_GAP_TOL * scale && vals[2] > EIGEN_GAP_TOL * scale;
    let rank_deficient = vals[2] <= EIGEN_GAP_TOL * scale;

    let axes: [Vec3; 3] = if repeated || vals[0] == 0.0 {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    } else {
        let e1 = orient(axis(0), &centred);
        let e2 = orient(axis(1), &centred);
        [e1, e2, cross(e1, e2)]
    };

    let points: Vec<Vec3> = centred
        .iter()
        .map(|p| [dot(axes[0], *p), dot(axes[1], *p), dot(axes[2], *p)])
        .collect();
    // Columns of the rotation are the principal axes: x_in = R x_can + c.
    let rot = [
        [axes[0][0], axes[1][0], axes[2][0]],
        [axes[0][1], axes[1][1], axes[2][1]],
        [axes[0][2], axes[1][2], axes[2][2]],
    ];
    let pose = Pose::new(Quat::from_matrix(&rot), c)?;
    Ok(Canonical {
        cloud: PointCloud::new(points)?,
        pose,
        eigenvalues: vals,
        degenerate: repeated || rank_deficient,
    })
}

fn orient(axis: Vec3, centred: &[Vec3]) -> Vec3 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for p in centred {
        let proj = dot(axis, *p);
        if proj.abs() > best {
            best = proj.abs();
            sign = proj.signum();
        }
    }
    [axis[0] * sign, axis[1] * sign, axis[2] * sign]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::dist2;

    #[test]
    fn box_is_already_canonical() {
        let mut pts = vec![];
        for &x in &[-0.3, 0.3] {
            for &y in &[-0.2, 0.2] {
                for &z in &[-0.1, 0.1] {
                    pts.push([x, y, z]);
                }
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let can = canonicalize(&cloud).unwrap();
        let m = can.pose.rotation.to_matrix();
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((v.abs() - expect).abs() < 1e-9);
            }
        }
        assert!(!can.degenerate);
    }

    #[test]
    fn pose_reconstructs_input() {
        let cloud = PointCloud::new(vec![
            [1.0, 2.0, 0.5],
            [2.0, 2.5, 0.0],
            [0.3, 1.0, 1.0],
            [1.7, 0.2, -0.4],
            [0.9, 1.1, 0.3],
        ])
        .unwrap();
        let can = canonicalize(&cloud).unwrap();
        let back = can.pose.apply(&can.cloud).unwrap();
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!(dist2(*a, *b).sqrt() < 1e-9);
        }
    }

    #[test]
    fn collinear_cloud_is_flagged() {
        let cloud = PointCloud::new((0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect()).unwrap();
        let can = canonicalize(&cloud).unwrap();
        assert!(can.degenerate);
        assert!(can.cloud.centroid().iter().all(|c| c.abs() < 1e-12));
    }
}
