use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{hungarian, Sign};
use crate::dataset::ShapeInstance;
use crate::graph::ConnectivityMatrix;
use crate::{Error, Result};

/// Upper bound on the number of congruent permutations enumerated by
/// [`congruent_permutations`].
const MAX_ENUMERATED_PERMUTATIONS: usize = 1 << 16;

/// Cost cap for `-log r` so that vanishing weights stay finite.
const MAX_PAIR_COST: f64 = 1e6;

/// A one-to-one assignment of peg joints to hole joints, sorted by peg id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointPairing {
    pairs: Vec<(usize, usize)>,
}

impl JointPairing {
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Hole paired with `peg`, if any.
    pub fn hole_of(&self, peg: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == peg).map(|p| p.1)
    }

    /// Checks that ids exist, both sides are one-to-one and every pair joins
    /// a peg to a hole.
    pub fn validate(&self, shape: &ShapeInstance) -> Result<()> {
        let mut used = BTreeSet::new();
        for &(p, h) in &self.pairs {
            let (jp, jh) = (shape.joint(p)?, shape.joint(h)?);
            if !used.insert(p) || !used.insert(h) {
                return Err(Error::invalid(format!("joint used twice in pairing at ({p}, {h})")));
            }
            if jp.sign != Some(Sign::Peg) || jh.sign != Some(Sign::Hole) {
                return Err(Error::invalid(format!("pair ({p}, {h}) is not peg to hole")));
            }
            if jp.part_id == jh.part_id {
                return Err(Error::invalid(format!("pair ({p}, {h}) lies on a single part")));
            }
        }
        Ok(())
    }
}

/// Joint correspondence induced by a part permutation: `out[j]` is the joint
/// on part `perm[part(j)]` with the same rank as `j` among its part's joints,
/// ranking by point indices.
pub fn joint_correspondence(shape: &ShapeInstance, perm: &[usize]) -> Result<Vec<usize>> {
    check_permutation(shape, perm)?;
    let ranked: Vec<Vec<usize>> = (0..shape.num_parts())
        .map(|p| {
            let mut ids: Vec<usize> = shape.joints_of(p).iter().map(|j| j.id).collect();
            ids.sort_by(|&a, &b| {
                shape.joints[a]
                    .point_indices
                    .cmp(&shape.joints[b].point_indices)
                    .then(a.cmp(&b))
            });
            ids
        })
        .collect();
    let mut out = vec![usize::MAX; shape.joints.len()];
    for (part, ids) in ranked.iter().enumerate() {
        let target = &ranked[perm[part]];
        if target.len() != ids.len() {
            return Err(Error::invalid(format!(
                "parts {part} and {} carry different joint counts",
                perm[part]
            )));
        }
        for (rank, &j) in ids.iter().enumerate() {
            out[j] = target[rank];
        }
    }
    Ok(out)
}

/// Relabels `pairing` for a within-class part permutation, where predicted
/// part `i` stands in for ground-truth part `perm[i]`. A pair `(a, b)` becomes
/// `(ψ⁻¹(a), ψ⁻¹(b))` under the induced joint correspondence `ψ`, oriented
/// peg first.
pub fn reassign_pairing(shape: &ShapeInstance, pairing: &JointPairing, perm: &[usize]) -> Result<JointPairing> {
    let psi = joint_correspondence(shape, perm)?;
    let mut inv = vec![usize::MAX; psi.len()];
    for (j, &k) in psi.iter().enumerate() {
        inv[k] = j;
    }
    let pairs = pairing
        .pairs()
        .iter()
        .map(|&(a, b)| {
            let (na, nb) = (inv[a], inv[b]);
            if shape.joints[na].sign == Some(Sign::Hole) && shape.joints[nb].sign == Some(Sign::Peg) {
                (nb, na)
            } else {
                (na, nb)
            }
        })
        .collect();
    Ok(JointPairing::from_pairs(pairs))
}

/// Ground-truth pairing seen through a congruent part permutation.
pub fn reassign_gt_pairing(shape: &ShapeInstance, perm: &[usize]) -> Result<JointPairing> {
    reassign_pairing(shape, &shape.gt_pairing, perm)
}

/// One-to-one peg→hole assignment minimizing `Σ -log r[p][h]`. Excess pegs or
/// holes stay unmatched.
pub fn propose_pairing(r: &ConnectivityMatrix) -> Result<JointPairing> {
    if r.peg_ids.is_empty() || r.hole_ids.is_empty() {
        return Ok(JointPairing::default());
    }
    for (row, w) in r.weights.iter().enumerate() {
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(format!(
                "connectivity row of peg {} is all zero",
                r.peg_ids[row]
            )));
        }
    }
    let cost: Vec<Vec<f64>> = r
        .log_weights
        .iter()
        .map(|row| row.iter().map(|&l| (-l).min(MAX_PAIR_COST)).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    Ok(JointPairing::from_pairs(
        assignment
            .pairs()
            .map(|(p, h)| (r.peg_ids[p], r.hole_ids[h]))
            .collect(),
    ))
}

/// Every part permutation that only permutes within congruence classes, in
/// lexicographic order, starting with the identity.
pub fn congruent_permutations(shape: &ShapeInstance) -> Result<Vec<Vec<usize>>> {
    let mut total = 1usize;
    for c in &shape.congruent_classes {
        total = (1..=c.len()).fold(total, |acc, k| acc.saturating_mul(k));
    }
    if total > MAX_ENUMERATED_PERMUTATIONS {
        return Err(Error::invalid(format!(
            "{total} congruent permutations exceed the enumeration limit"
        )));
    }
    let mut perms = vec![(0..shape.num_parts()).collect::<Vec<_>>()];
    for class in &shape.congruent_classes {
        if class.len() < 2 {
            continue;
        }
        let orders = permutations_of(class);
        perms = perms
            .into_iter()
            .flat_map(|base| {
                orders.iter().map(move |order| {
                    let mut p = base.clone();
                    for (slot, &target) in class.iter().zip(order) {
                        p[*slot] = target;
                    }
                    p
                })
            })
            .collect();
    }
    Ok(perms)
}

/// True when `candidate` equals the ground-truth pairing reassigned through
/// some congruent part permutation.
pub fn pairing_equivalent(shape: &ShapeInstance, candidate: &JointPairing) -> Result<bool> {
    for perm in congruent_permutations(shape)? {
        if reassign_gt_pairing(shape, &perm)? == *candidate {
            return Ok(true);
        }
    }
    Ok(false)
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    let mut current = items.to_vec();
    current.sort_unstable();
    let mut out = vec![current.clone()];
    // Standard next-permutation walk.
    loop {
        let Some(i) = (0..current.len().saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            return out;
        };
        let j = (i + 1..current.len()).rev().find(|&j| current[j] > current[i]).expect("successor exists");
        current.swap(i, j);
        current[i + 1..].reverse();
        out.push(current.clone());
    }
}

fn check_permutation(shape: &ShapeInstance, perm: &[usize]) -> Result<()> {
    let n = shape.num_parts();
    if perm.len() != n {
        return Err(Error::invalid(format!("permutation of length {} for {n} parts", perm.len())));
    }
    let mut seen = vec![false; n];
    for (i, &p) in perm.iter().enumerate() {
        if p >= n || seen[p] {
            return Err(Error::invalid("part permutation is not a bijection"));
        }
        seen[p] = true;
        if shape.class_of(i) != shape.class_of(p) {
            return Err(Error::invalid(format!(
                "permutation maps part {i} outside its congruence class"
            )));
        }
    }
    Ok(())
}
