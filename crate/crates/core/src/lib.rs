//! Joint-centric multi-part shape assembly.
//!
//! The crate covers the non-learned machinery of assembling a shape from
//! part point clouds whose contact surfaces are annotated as peg and hole
//! joints:
//!
//! - [`geom`]: point clouds, rigid poses, Chamfer distance, furthest point
//!   sampling and PCA canonicalization.
//! - [`dataset`]: joint detection, joint masks, congruent part classes,
//!   synthetic furniture generation and the JSON shape manifest.
//! - [`graph`]: part graph, bipartite peg/hole joint graph, connectivity
//!   matrix and joint-to-part pooling.
//! - [`matching`]: part-level peg/hole sign assignment, Hungarian
//!   assignment, order-invariant reassignment of the ground-truth pairing.
//! - [`losses`]: shape and joint losses with analytic pose gradients.
//! - [`solver`]: the alternating part/joint stage pose solver.
//! - [`eval`]: Part Acc, Shape CD, Joint Acc and Joint CD.
//! - [`cli`]: the `asmforge` command-line tool.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod graph;
pub mod losses;
pub mod matching;
pub mod solver;

pub use error::{Error, Result};
