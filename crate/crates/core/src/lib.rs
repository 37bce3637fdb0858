//! Core library for building and certifying repulsive graphs, evaluating
//! degree-weighted summability functionals, and running finite-volume Gibbs
//! samplers with unbounded real spins.
//!
//! The crate is organized bottom-up:
//!
//! * [`graph`] — adjacency storage, graph metric, weighted degree sums,
//!   sphere/ball enumeration, and simple-path censuses;
//! * [`repulsive`] — hub-separation profiles, certification, synthesis of
//!   graphs that satisfy a prescribed separation rule, and the growth
//!   verifiers built on top of it;
//! * [`quadrature`] — adaptive Gauss–Kronrod integration on the real line
//!   with certified truncation tails, plus reusable panel grids;
//! * [`potentials`] — the interaction catalog (pair + single-site), envelope
//!   and coercivity checks, and the explicit coupling/capacity constants;
//! * [`gibbs`] — spin configurations, local Hamiltonians, single-site
//!   conditional laws, heat-bath sampling, brute-force expectations and
//!   consistency checks on small volumes;
//! * [`report`] — canonical (byte-reproducible) JSON serialization helpers;
//! * [`fixtures`] — small named graphs and deterministic fixture families
//!   shared by the test suites and the command-line examples.

pub mod fixtures;
pub mod gibbs;
pub mod graph;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod repulsive;

pub use graph::Graph;
pub use potentials::ModelParams;
pub use repulsive::RepulsionProfile;
