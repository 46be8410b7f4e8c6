//! Simulation and verification toolkit for multiplicative-subordinator
//! fragmenters, bifurcators, strings of beads and bead-splitting tree
//! growth processes.
//!
//! The crate is organised around a small analytic layer (splitting
//! densities and their Laplace exponents, computed by adaptive
//! quadrature) and a simulation layer (Poisson jump sampling,
//! fragmenter paths, bifurcators, bead trees) whose closed-form moment
//! identities the Monte Carlo suites verify.

pub mod beads;
pub mod bifurcator;
pub mod brownian;
pub mod config;
pub mod density;
pub mod fragmenter;
pub mod pointproc;
pub mod quad;
pub mod report;
pub mod seed;
pub mod stats;
pub mod suites;
pub mod treemetric;

pub use beads::{BeadTree, Composition, StringOfBeads};
pub use bifurcator::BifurcatorPair;
pub use density::{SplittingDensity, SwitchingFunction};
pub use fragmenter::FragmenterPath;
pub use pointproc::{JumpPoint, JumpSampler, TruncationPolicy};
