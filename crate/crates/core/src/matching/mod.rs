//! Discrete assignment: peg/hole sign assignment, linear assignment,
//! order-invariant ground-truth reassignment and pairing proposals.

mod hungarian;
mod pairing;
mod signs;

pub use hungarian::{hungarian, Assignment};
pub use pairing::{
    congruent_permutations, joint_correspondence, pairing_equivalent, propose_pairing, reassign_gt_pairing,
    reassign_pairing, JointPairing,
};
pub use signs::{assign_joint_signs, EdgeOverride, PartConnectivityGraph, Sign, SignAssignment};
