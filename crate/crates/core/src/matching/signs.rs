//! Part-level peg/hole sign assignment over the joint connectivity graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Peg,
    Hole,
}

impl Sign {
    pub fn opposite(self) -> Sign {
        match self {
            Sign::Peg => Sign::Hole,
            Sign::Hole => Sign::Peg,
        }
    }

    /// Ternary joint-mask value: `-1` for pegs, `+1` for holes.
    pub fn mask_value(self) -> i8 {
        match self {
            Sign::Peg => -1,
            Sign::Hole => 1,
        }
    }
}

/// Undirected graph over parts with one edge per connected part pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PartConnectivityGraph {
    congruent: Vec<bool>,
    edges: BTreeSet<(usize, usize)>,
}

impl PartConnectivityGraph {
    /// `congruent[i]` marks parts whose congruence class has two or more
    /// members.
    pub fn new(congruent: Vec<bool>) -> Self {
        Self {
            congruent,
            edges: BTreeSet::new(),
        }
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let n = self.len();
        if a == b {
            return Err(Error::invalid(format!("self-loop on part {a}")));
        }
        if a >= n || b >= n {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} parts")));
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.congruent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.congruent.is_empty()
    }

    pub fn is_congruent(&self, part: usize) -> bool {
        self.congruent[part]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, part: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == part {
                    Some(b)
                } else if b == part {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, part: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == part || b == part).count()
    }
}

/// A conflicting edge resolved in favour of a congruent endpoint: on this
/// edge the joint of `peg_part` is a peg and the other endpoint's joint is a
/// hole, whatever the part-level signs say.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOverride {
    pub edge: (usize, usize),
    pub peg_part: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignAssignment {
    pub part_signs: Vec<Sign>,
    /// Conflicting edges between two non-congruent parts, dropped from the
    /// supervised pairing.
    pub removed_edges: Vec<(usize, usize)>,
    pub overrides: Vec<EdgeOverride>,
}

impl SignAssignment {
    /// Signs of the two endpoint joints on edge `(a, b)`, or `None` if the
    /// edge was removed.
    pub fn edge_signs(&self, a: usize, b: usize) -> Option<(Sign, Sign)> {
        let key = (a.min(b), a.max(b));
        if self.removed_edges.contains(&key) {
            return None;
        }
        if let Some(o) = self.overrides.iter().find(|o| o.edge == key) {
            let sa = if o.peg_part == a { Sign::Peg } else { Sign::Hole };
            return Some((sa, sa.opposite()));
        }
        Some((self.part_signs[a], self.part_signs[b]))
    }
}

/// Traversal-based sign assignment with conflict resolution.
///
/// Parts are visited in descending degree (ascending id on ties). The first
/// unassigned part becomes a peg and its neighbours become holes; a
/// neighbour that is already a peg records a conflict. Afterwards every
/// same-sign edge is a conflict. A conflict touching a congruent part makes
/// that part's joint the peg on that edge (the lower id when both are
/// congruent); a conflict between non-congruent parts removes the edge.
pub fn assign_joint_signs(graph: &PartConnectivityGraph) -> SignAssignment {
    let n = graph.len();
    let mut order: Vec<usize> = (0..n).collect();
    let degrees: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));

    let mut signs: Vec<Option<Sign>> = vec![None; n];
    let mut cache: Vec<(usize, usize)> = Vec::new();
    let push = |cache: &mut Vec<(usize, usize)>, a: usize, b: usize| {
        let key = (a.min(b), a.max(b));
        if !cache.contains(&key) {
            cache.push(key);
        }
    };

    while let Some(&target) = order.iter().find(|&&p| signs[p].is_none()) {
        signs[target] = Some(Sign::Peg);
        for j in graph.neighbors(target) {
            if signs[j] == Some(Sign::Peg) {
                push(&mut cache, target, j);
            } else {
                signs[j] = Some(Sign::Hole);
            }
        }
    }
    let part_signs: Vec<Sign> = signs.into_iter().map(|s| s.unwrap_or(Sign::Peg)).collect();

    for (a, b) in graph.edges() {
        if part_signs[a] == part_signs[b] {
            push(&mut cache, a, b);
        }
    }

    let mut removed_edges = Vec::new();
    let mut overrides = Vec::new();
    for (a, b) in cache {
        match (graph.is_congruent(a), graph.is_congruent(b)) {
            (true, _) => overrides.push(EdgeOverride {
                edge: (a, b),
                peg_part: a,
            }),
            (false, true) => overrides.push(EdgeOverride {
                edge: (a, b),
                peg_part: b,
            }),
            (false, false) => removed_edges.push((a, b)),
        }
    }
    SignAssignment {
        part_signs,
        removed_edges,
        overrides,
    }
}
