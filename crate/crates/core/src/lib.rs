//! Benchmarking toolkit for linear differentiable causal discovery under
//! model-assumption violations.
//!
//! The crate is organized around the benchmark pipeline:
//!
//! - [`graph`]: DAG types, random-graph generators, d-separation, total
//!   effects;
//! - [`scm`]: linear and Gaussian-process structural causal models and
//!   deterministic sampling;
//! - [`misspec`]: the eight composable assumption-violation transforms;
//! - [`acyclicity`]: differentiable acyclicity functions and their
//!   gradients;
//! - [`solvers`]: proximal inner solver, augmented Lagrangian loop,
//!   central-path scheme;
//! - [`learners`]: NOTEARS, GOLEM, NoCurl, DAGMA, SortnRegress, and the
//!   random baseline;
//! - [`metrics`]: SHD, SID (with a covariance oracle), sortability, noise
//!   ratio;
//! - [`bench`]: the scenario x graph x learner experiment matrix and report
//!   writers.

pub mod acyclicity;
pub mod bench;
pub mod error;
pub mod graph;
pub mod learners;
pub mod linalg;
pub mod metrics;
pub mod misspec;
pub mod scm;
pub mod seeding;
pub mod solvers;
