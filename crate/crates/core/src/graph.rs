//! Part graph, bipartite peg/hole joint graph, double-buffered message
//! passing, the peg×hole connectivity matrix and joint-to-part pooling.
//!
//! Update functions are plain closures. The defaults in [`update`] are
//! deterministic geometric functions standing in for learned networks.

use rayon::prelude::*;

use crate::dataset::{Joint, ShapeInstance};
use crate::geom::{dist2, Pose};
use crate::matching::Sign;
use crate::{Error, Result};

/// Default connectivity temperature, in squared shape units.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

/// A directed graph carrying one feature vector per node and per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub feature: Vec<f64>,
}

impl Graph {
    /// Edge ids touching each node, as source or destination, ascending.
    fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            inc[e.src].push(k);
            if e.dst != e.src {
                inc[e.dst].push(k);
            }
        }
        inc
    }
}

/// Complete directed graph over parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGraph {
    /// Node features: posed centroid (3), posed extents (3), point count.
    pub graph: Graph,
    pub poses: Vec<Pose>,
}

/// Builds the part graph for the given poses. Edge features start as the
/// centroid offset from source to destination.
pub fn build_part_graph(shape: &ShapeInstance, poses: &[Pose]) -> Result<PartGraph> {
    if poses.len() != shape.num_parts() {
        return Err(Error::invalid(format!(
            "{} poses for {} parts",
            poses.len(),
            shape.num_parts()
        )));
    }
    let mut nodes = Vec::with_capacity(poses.len());
    for (part, pose) in shape.parts.iter().zip(poses) {
        let posed = pose.apply(part)?;
        let c = posed.centroid();
        let e = posed.extents();
        nodes.push(vec![c[0], c[1], c[2], e[0], e[1], e[2], part.len() as f64]);
    }
    let n = nodes.len();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for src in 0..n {
        for dst in 0..n {
            if src != dst {
                let feature = (0..3).map(|k| nodes[dst][k] - nodes[src][k]).collect();
                edges.push(Edge { src, dst, feature });
            }
        }
    }
    Ok(PartGraph {
        graph: Graph { nodes, edges },
        poses: poses.to_vec(),
    })
}

/// Bipartite graph with pegs as nodes `0..pegs` and holes after them.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGraph {
    pub peg_ids: Vec<usize>,
    pub hole_ids: Vec<usize>,
    /// Node features: canonical joint centroid (3) and mask value.
    pub graph: Graph,
}

impl JointGraph {
    pub fn is_bipartite(&self) -> bool {
        let pegs = self.peg_ids.len();
        self.graph.edges.iter().all(|e| e.src < pegs && e.dst >= pegs)
    }
}

/// Builds the peg×hole graph with an edge from every peg to every hole.
pub fn build_joint_graph(shape: &ShapeInstance) -> Result<JointGraph> {
    let (peg_ids, hole_ids) = split_by_sign(&shape.joints)?;
    let feature = |id: usize| {
        let j = &shape.joints[id];
        let s = j.sign.map_or(0.0, |s| f64::from(s.mask_value()));
        vec![j.centroid[0], j.centroid[1], j.centroid[2], s]
    };
    let nodes: Vec<Vec<f64>> = peg_ids.iter().chain(&hole_ids).map(|&id| feature(id)).collect();
    let pegs = peg_ids.len();
    let mut edges = Vec::with_capacity(pegs * hole_ids.len());
    for p in 0..pegs {
        for h in 0..hole_ids.len() {
            edges.push(Edge {
                src: p,
                dst: pegs + h,
                feature: Vec::new(),
            });
        }
    }
    Ok(JointGraph {
        peg_ids,
        hole_ids,
        graph: Graph { nodes, edges },
    })
}

fn split_by_sign(joints: &[Joint]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut pegs = Vec::new();
    let mut holes = Vec::new();
    for j in joints {
        match j.sign {
            Some(Sign::Peg) => pegs.push(j.id),
            Some(Sign::Hole) => holes.push(j.id),
            None => return Err(Error::InvalidState(format!("joint {} has no sign", j.id))),
        }
    }
    Ok((pegs, holes))
}

/// Runs `rounds` of message passing. Each round first recomputes every edge
/// as `fn_edge(src, dst, edge)` from the previous node features, then every
/// node as `fn_node(node, mean of its new incident edge features)`; a node
/// with no edges receives an empty slice. Both passes write to fresh
/// buffers, so the result does not depend on evaluation order.
pub fn message_pass<FE, FN>(graph: &Graph, fn_edge: FE, fn_node: FN, rounds: usize) -> Result<Graph>
where
    FE: Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Sync,
    FN: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    if rounds == 0 {
        return Err(Error::invalid("message passing needs at least one round"));
    }
    let incidence = graph.incidence();
    let mut current = graph.clone();
    for _ in 0..rounds {
        let edges: Vec<Edge> = current
            .edges
            .par_iter()
            .map(|e| Edge {
                src: e.src,
                dst: e.dst,
                feature: fn_edge(&current.nodes[e.src], &current.nodes[e.dst], &e.feature),
            })
            .collect();
        if let Some((k, e)) = edges.iter().enumerate().find(|(_, e)| !all_finite(&e.feature)) {
            return Err(Error::Numeric(format!(
                "edge {k} ({} -> {}) produced a non-finite feature",
                e.src, e.dst
            )));
        }
        let nodes: Vec<Vec<f64>> = current
            .nodes
            .par_iter()
            .enumerate()
            .map(|(i, node)| {
                let mean = mean_feature(incidence[i].iter().map(|&k| edges[k].feature.as_slice()));
                fn_node(node, &mean)
            })
            .collect();
        if let Some(i) = nodes.iter().position(|n| !all_finite(n)) {
            return Err(Error::Numeric(format!("node {i} produced a non-finite feature")));
        }
        current = Graph { nodes, edges };
    }
    Ok(current)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Element-wise mean, summed in iteration order. Empty input gives an empty
/// vector.
fn mean_feature<'a>(features: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for f in features {
        if acc.len() < f.len() {
            acc.resize(f.len(), 0.0);
        }
        for (a, x) in acc.iter_mut().zip(f) {
            *a += x;
        }
        count += 1;
    }
    if count > 0 {
        for a in &mut acc {
            *a /= count as f64;
        }
    }
    acc
}

/// Default update functions.
pub mod update {
    /// Edge update that keeps the edge feature.
    pub fn keep_edge(_src: &[f64], _dst: &[f64], edge: &[f64]) -> Vec<f64> {
        edge.to_vec()
    }

    /// Node update that keeps the node feature.
    pub fn keep_node(node: &[f64], _incident: &[f64]) -> Vec<f64> {
        node.to_vec()
    }

    /// Edge update: element-wise sum of the endpoint features.
    pub fn endpoint_sum(src: &[f64], dst: &[f64], _edge: &[f64]) -> Vec<f64> {
        src.iter().zip(dst).map(|(a, b)| a + b).collect()
    }

    /// Edge update: destination minus source.
    pub fn endpoint_offset(src: &[f64], dst: &[f64], _edge: &[f64]) -> Vec<f64> {
        src.iter().zip(dst).map(|(a, b)| b - a).collect()
    }

    /// Node update: the incident mean, or the old feature for an isolated
    /// node.
    pub fn incident_mean(node: &[f64], incident: &[f64]) -> Vec<f64> {
        if incident.is_empty() {
            node.to_vec()
        } else {
            incident.to_vec()
        }
    }
}

/// Row-normalized peg×hole affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub peg_ids: Vec<usize>,
    pub hole_ids: Vec<usize>,
    /// `weights[p][h]` in `[0, 1]`.
    pub weights: Vec<Vec<f64>>,
    /// Natural log of `weights`, computed without underflow when the matrix
    /// comes from [`compute_connectivity`].
    pub log_weights: Vec<Vec<f64>>,
}

impl ConnectivityMatrix {
    /// Wraps explicit weights. Entries must be finite and within `[0, 1]`.
    pub fn from_weights(peg_ids: Vec<usize>, hole_ids: Vec<usize>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != peg_ids.len() || weights.iter().any(|r| r.len() != hole_ids.len()) {
            return Err(Error::invalid("connectivity weights do not match the peg and hole counts"));
        }
        if weights.iter().flatten().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("connectivity weights must lie in [0, 1]"));
        }
        let log_weights = weights.iter().map(|r| r.iter().map(|w| w.ln()).collect()).collect();
        Ok(Self {
            peg_ids,
            hole_ids,
            weights,
            log_weights,
        })
    }

    /// Hole column with the largest weight in each peg row, lowest on ties.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.log_weights
            .iter()
            .map(|row| {
                let mut best = 0;
                for (h, &l) in row.iter().enumerate() {
                    if l > row[best] {
                        best = h;
                    }
                }
                best
            })
            .collect()
    }
}

/// Row softmax over holes of `-‖c_peg − c_hole‖² / temperature`, with joint
/// centroids posed by their parent part's pose.
pub fn compute_connectivity(joints: &[Joint], poses: &[Pose], temperature: f64) -> Result<ConnectivityMatrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    let (peg_ids, hole_ids) = split_by_sign(joints)?;
    if hole_ids.is_empty() {
        return Err(Error::invalid("connectivity needs at least one hole"));
    }
    let by_id = |id: usize| -> Result<&Joint> {
        joints
            .iter()
            .find(|j| j.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown joint {id}")))
    };
    let posed = |id: usize| -> Result<[f64; 3]> {
        let j = by_id(id)?;
        let pose = poses
            .get(j.part_id)
            .ok_or_else(|| Error::invalid(format!("no pose for part {} of joint {id}", j.part_id)))?;
        Ok(pose.transform_point(j.centroid))
    };
    let holes: Vec<[f64; 3]> = hole_ids.iter().map(|&h| posed(h)).collect::<Result<_>>()?;
    let mut weights = Vec::with_capacity(peg_ids.len());
    let mut log_weights = Vec::with_capacity(peg_ids.len());
    for &p in &peg_ids {
        let c = posed(p)?;
        let logits: Vec<f64> = holes.iter().map(|h| -dist2(c, *h) / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let logs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        weights.push(logs.iter().map(|l| l.exp()).collect());
        log_weights.push(logs);
    }
    Ok(ConnectivityMatrix {
        peg_ids,
        hole_ids,
        weights,
        log_weights,
    })
}

/// Max-pools per-joint signals into per-part signals. Signals are given as
/// `(joint id, vector)`; a part without signals gets the zero vector.
pub fn aggregate_joint_to_part(signals: &[(usize, Vec<f64>)], shape: &ShapeInstance) -> Result<Vec<Vec<f64>>> {
    let dim = signals.first().map_or(0, |s| s.1.len());
    if let Some((id, _)) = signals.iter().find(|s| s.1.len() != dim) {
        return Err(Error::invalid(format!("signal of joint {id} has a different dimension")));
    }
    let mut pooled: Vec<Option<Vec<f64>>> = vec![None; shape.num_parts()];
    for (id, s) in signals {
        let part = shape.joint(*id)?.part_id;
        match &mut pooled[part] {
            Some(acc) => {
                for (a, x) in acc.iter_mut().zip(s) {
                    *a = a.max(*x);
                }
            }
            slot @ None => *slot = Some(s.clone()),
        }
    }
    Ok(pooled.into_iter().map(|p| p.unwrap_or_else(|| vec![0.0; dim])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_nodes() -> Graph {
        Graph {
            nodes: vec![vec![1.0], vec![3.0]],
            edges: vec![
                Edge {
                    src: 0,
                    dst: 1,
                    feature: vec![0.0],
                },
                Edge {
                    src: 1,
                    dst: 0,
                    feature: vec![0.0],
                },
            ],
        }
    }

    #[test]
    fn identity_updates_are_a_fixed_point() {
        let g = two_nodes();
        let out = message_pass(&g, update::keep_edge, update::keep_node, 3).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn hand_traced_round() {
        let g = Graph {
            nodes: vec![vec![1.0], vec![3.0], vec![10.0]],
            edges: vec![Edge {
                src: 0,
                dst: 1,
                feature: vec![0.0],
            }],
        };
        let out = message_pass(&g, update::endpoint_sum, update::incident_mean, 1).unwrap();
        assert_eq!(out.edges[0].feature, vec![4.0]);
        assert_eq!(out.nodes, vec![vec![4.0], vec![4.0], vec![10.0]]);
    }

    #[test]
    fn non_finite_is_reported_with_id() {
        let g = two_nodes();
        let err = message_pass(&g, |_: &[f64], _: &[f64], _: &[f64]| vec![f64::NAN], update::keep_node, 1).unwrap_err();
        assert!(err.to_string().contains("edge 0"), "{err}");
    }

    fn joint(id: usize, part_id: usize, sign: Sign, c: [f64; 3]) -> Joint {
        Joint {
            id,
            part_id,
            sign: Some(sign),
            point_indices: vec![0],
            centroid: c,
            mate: None,
        }
    }

    #[test]
    fn single_pair_connectivity() {
        let j = vec![joint(0, 0, Sign::Peg, [0.0; 3]), joint(1, 1, Sign::Hole, [1.0, 0.0, 0.0])];
        let r = compute_connectivity(&j, &[Pose::IDENTITY; 2], DEFAULT_TEMPERATURE).unwrap();
        assert_eq!(r.weights, vec![vec![1.0]]);
    }

    #[test]
    fn equidistant_holes_split_evenly() {
        let j = vec![
            joint(0, 0, Sign::Peg, [0.0; 3]),
            joint(1, 1, Sign::Hole, [0.1, 0.0, 0.0]),
            joint(2, 1, Sign::Hole, [-0.1, 0.0, 0.0]),
        ];
        let r = compute_connectivity(&j, &[Pose::IDENTITY; 2], DEFAULT_TEMPERATURE).unwrap();
        assert!((r.weights[0][0] - 0.5).abs() < 1e-12);
        assert!((r.weights[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn far_holes_do_not_underflow_logs() {
        let j = vec![
            joint(0, 0, Sign::Peg, [0.0; 3]),
            joint(1, 1, Sign::Hole, [0.0; 3]),
            joint(2, 1, Sign::Hole, [50.0, 0.0, 0.0]),
        ];
        let r = compute_connectivity(&j, &[Pose::IDENTITY; 2], DEFAULT_TEMPERATURE).unwrap();
        assert!(r.log_weights[0].iter().all(|l| l.is_finite()));
        assert_eq!(r.weights[0][1], 0.0);
    }

    #[test]
    fn no_holes_rejected() {
        let j = vec![joint(0, 0, Sign::Peg, [0.0; 3])];
        assert!(compute_connectivity(&j, &[Pose::IDENTITY], DEFAULT_TEMPERATURE).is_err());
    }
}
