//! Discrete factor graphs and classical inference over them.
//!
//! Potentials are stored in log space. The crate provides the tensor
//! primitives message passing is built from, isomorphism witnesses, UAI
//! model I/O, an exact enumeration oracle, synchronous loopy belief
//! propagation, seeded grid generators and local-search MAP baselines.

pub mod bp;
pub mod error;
pub mod exact;
pub mod generators;
pub mod graph;
pub mod search;
pub mod tensor;
pub mod uai;
pub mod witness;

pub use error::{FgError, Result};
pub use graph::{DirectedEdge, Edge, EdgeKind, Factor, FactorGraph, ZeroClamp};
pub use tensor::{reduce_except, tensor_sum, DenseTensor, ReduceMode};
pub use witness::{apply_witness, verify_witness, PermutationWitness, Symmetry};
