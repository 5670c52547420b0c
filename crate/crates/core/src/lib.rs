//! Higher-rank Anderson operators on truncated Bethe lattices and canopy trees.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the laboratory:
//!
//! - [`tree`]: level-order truncations of the rooted Bethe lattice and of the
//!   canopy tree, block tilings by forward (resp. backward) balls of radius `m0`.
//! - [`disorder`]: i.i.d. block couplings drawn from a bounded, compactly
//!   supported density with counter-style seed derivation.
//! - [`hamiltonian`]: the tree adjacency plus block-constant random potential.
//! - [`resolvent`]: Green functions by dense LU (oracle) and by the recursive
//!   block Schur decomposition, plus fractional-moment estimators.
//! - [`spectral`]: inertia counting, eigenvalue checks, Wegner / Minami
//!   statistics and the layer-weighted canopy density of states.
//! - [`process`]: the rescaled eigenvalue point process, its sub-tree
//!   decomposition and compound Poisson fitting.
//!
//! Monte Carlo loops are written against [`runner::TrialRunner`] so a caller
//! with threads can swap the sequential runner for a parallel one without
//! changing any result.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod disorder;
mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod process;
pub mod resolvent;
pub mod runner;
pub mod spectral;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use num_complex::Complex64;
