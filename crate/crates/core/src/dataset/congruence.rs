use std::collections::BTreeMap;

use crate::geom::{chamfer_distance, PointCloud, Vec3};

/// Chamfer threshold under which two canonical parts are interchangeable.
pub const DEFAULT_CONGRUENCE_EPS: f64 = 1e-3;

/// The four axis flips that are proper rotations. Canonical frames are only
/// defined up to these, so congruence is tested against each.
const PROPER_FLIPS: [Vec3; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Partitions canonicalized parts into congruence classes. Two parts are
/// linked when their Chamfer distance, minimized over axis flips, is below
/// `eps`; classes are the transitive closure of that relation.
pub fn detect_congruent_classes(parts: &[PointCloud], eps: f64) -> Vec<Vec<usize>> {
    let n = parts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) == find(&mut parent, j) {
                continue;
            }
            if congruent(&parts[i], &parts[j], eps) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    classes_from_labels(&labels)
}

/// Groups part ids by class label. Classes come out sorted internally and
/// ordered by smallest member.
pub fn classes_from_labels(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut classes: Vec<Vec<usize>> = groups.into_values().collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

fn congruent(a: &PointCloud, b: &PointCloud, eps: f64) -> bool {
    // Cheap reject: extents must agree up to axis sign, which flips preserve.
    let (ea, eb) = (a.extents(), b.extents());
    if (0..3).any(|k| (ea[k] - eb[k]).abs() > eps.sqrt()) {
        return false;
    }
    PROPER_FLIPS.iter().any(|f| {
        let flipped: Vec<Vec3> = b.points().iter().map(|p| [p[0] * f[0], p[1] * f[1], p[2] * f[2]]).collect();
        chamfer_distance(a.points(), &flipped).is_ok_and(|d| d < eps)
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}
