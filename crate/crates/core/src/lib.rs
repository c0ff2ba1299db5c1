//! Horospheric products of trees.
//!
//! A horospheric product glues two locally finite trees that are pointed at
//! infinity along opposite height gradients: vertices are pairs `(x, x')`
//! whose heights cancel, and a move ascends in one factor exactly when it
//! descends in the other. The homogeneous case `DL(p,q)` is the familiar
//! Diestel-Leader graph; `DL(q,q)` is a Cayley graph of the lamplighter
//! group `Z_q wr Z`.
//!
//! The crate provides
//!
//! * [`tree`]: lazy infinite trees with canonical vertex addresses, heights,
//!   Busemann cocycles, confluences, geodesics, and ends;
//! * [`product`]: the product graph itself with the exact distance formula,
//!   geodesic segments/rays/bilateral geodesics, and a boundary-convergence
//!   detector;
//! * [`walk`]: random-walk kernels, seeded trajectory sampling, and exact
//!   n-step distributions by forward dynamic programming;
//! * [`estimate`]: Monte Carlo and exact estimators for height drift, rate
//!   of escape, asymptotic entropy, regularity, and boundary statistics;
//! * [`eqrel`]: finite measured equivalence relations with leafwise kernels,
//!   where the density, stationarity, cotransition, reversibility, and
//!   conditional-entropy identities are checked as exact linear algebra;
//! * [`oracle`]: BFS ball materialization and brute-force shortest-path
//!   enumeration, kept deliberately independent of the closed-form code
//!   paths so the two can be compared;
//! * [`config`]: serializable experiment descriptors shared with the CLI.
//!
//! Everything is deterministic: environments derive offspring counts from a
//! seed via a splittable PRF, and all sampling runs on seeded ChaCha streams
//! with integer threshold selection.

pub mod config;
pub mod eqrel;
pub mod estimate;
mod mix;
pub mod oracle;
pub mod product;
pub mod tree;
pub mod walk;

pub use product::{BoundaryPoint, BoundarySide, HoroProduct, ProductError, ProductVertex};
pub use tree::{End, PointedTreeEnv, TailRule, TreeVertexAddr};
pub use config::ExperimentConfig;
pub use walk::{Kernel, WalkError, WalkPath};
