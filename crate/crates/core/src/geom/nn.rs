//! Exact nearest-neighbour search and Chamfer distance.

use super::{dist2, sub, Vec3};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;
/// Below this many target points a linear scan beats building a tree.
const BRUTE_FORCE_MAX: usize = 32;

/// Nearest point of `target` to `q` by linear scan; ties go to the lowest
/// index. Returns `(index, squared distance)`.
pub fn nearest_brute(target: &[Vec3], q: Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in target.iter().enumerate() {
        let d = dist2(q, *p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree over a point set. Queries return exactly the same
/// `(index, squared distance)` as [`nearest_brute`], including tie-breaking.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NearestIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let mut index = NearestIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let spread = sub(hi, lo);
        let axis = (0..3)
            .max_by(|&a, &b| spread[a].total_cmp(&spread[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        if spread[axis] == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest point to `q`; ties go to the lowest index.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equal plane distance still has to be visited for ties.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Nearest neighbour in `target` of every query point.
pub fn nearest_all(queries: &[Vec3], target: &[Vec3]) -> Vec<(usize, f64)> {
    if target.len() <= BRUTE_FORCE_MAX {
        queries.iter().map(|q| nearest_brute(target, *q)).collect()
    } else {
        let tree = NearestIndex::build(target);
        queries.iter().map(|q| tree.nearest(*q)).collect()
    }
}

/// Chamfer distance together with the nearest-neighbour correspondences
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Chamfer {
    pub value: f64,
    /// For each point of `a`: nearest index in `b` and squared distance.
    pub a_to_b: Vec<(usize, f64)>,
    /// For each point of `b`: nearest index in `a` and squared distance.
    pub b_to_a: Vec<(usize, f64)>,
}

impl Chamfer {
    pub fn compute(a: &[Vec3], b: &[Vec3]) -> Result<Chamfer> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::invalid("chamfer distance of an empty cloud"));
        }
        let a_to_b = nearest_all(a, b);
        let b_to_a = nearest_all(b, a);
        let value = a_to_b.iter().map(|m| m.1).sum::<f64>() + b_to_a.iter().map(|m| m.1).sum::<f64>();
        Ok(Chamfer {
            value,
            a_to_b,
            b_to_a,
        })
    }

    /// Gradients of the value with respect to each point of `a` and `b`,
    /// holding the correspondences fixed.
    pub fn gradients(&self, a: &[Vec3], b: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut ga = vec![[0.0; 3]; a.len()];
        let mut gb = vec![[0.0; 3]; b.len()];
        for (i, &(j, _)) in self.a_to_b.iter().enumerate() {
            let d = sub(a[i], b[j]);
            for k in 0..3 {
                ga[i][k] += 2.0 * d[k];
                gb[j][k] -= 2.0 * d[k];
            }
        }
        for (j, &(i, _)) in self.b_to_a.iter().enumerate() {
            let d = sub(b[j], a[i]);
            for k in 0..3 {
                gb[j][k] += 2.0 * d[k];
                ga[i][k] -= 2.0 * d[k];
            }
        }
        (ga, gb)
    }

    /// The correspondence indices only, used to detect when a perturbation
    /// switches a nearest neighbour.
    pub fn signature(&self) -> Vec<usize> {
        self.a_to_b.iter().chain(&self.b_to_a).map(|m| m.0).collect()
    }
}

/// `Σ_{x∈a} min_{y∈b} ‖x−y‖² + Σ_{y∈b} min_{x∈a} ‖x−y‖²`.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Chamfer::compute(a, b).map(|c| c.value)
}

/// Linear-scan Chamfer distance with the same summation order as
/// [`chamfer_distance`].
pub fn chamfer_distance_brute(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty cloud"));
    }
    let ab: f64 = a.iter().map(|q| nearest_brute(b, *q).1).sum();
    let ba: f64 = b.iter().map(|q| nearest_brute(a, *q).1).sum();
    Ok(ab + ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_points_one_apart() {
        let a = [[0.0, 0.0, 0.0]];
        let b = [[1.0, 0.0, 0.0]];
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn empty_cloud_is_invalid() {
        assert!(chamfer_distance(&[], &[[0.0; 3]]).is_err());
    }

    #[test]
    fn tree_agrees_with_scan_including_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Lattice points produce many exact ties.
        let pts: Vec<Vec3> = (0..300)
            .map(|_| {
                [
                    rng.random_range(0..5) as f64,
                    rng.random_range(0..5) as f64,
                    rng.random_range(0..3) as f64,
                ]
            })
            .collect();
        let tree = NearestIndex::build(&pts);
        for _ in 0..500 {
            let q = [
                rng.random_range(-1..6) as f64 * 0.5,
                rng.random_range(-1..6) as f64 * 0.5,
                rng.random_range(-1..4) as f64 * 0.5,
            ];
            assert_eq!(tree.nearest(q), nearest_brute(&pts, q));
        }
    }
}
