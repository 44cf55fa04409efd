//! Budgeted policy summaries under two models of how a person extrapolates
//! from demonstrations.
//!
//! The IRL branch ([`irl`]) selects trajectories whose behavioral
//! equivalence constraints cover the agent's policy and reconstructs the
//! policy with maximum-entropy IRL. The IL branch ([`il`]) picks states by
//! expected error reduction under a Gaussian random field and reconstructs
//! the policy by harmonic label propagation. [`eval`] scores every
//! extractor/reconstructor pairing, and [`exp`] drives sweeps and reports.

pub mod domain;
pub mod envs;
pub mod error;
pub mod eval;
pub mod exec;
pub mod exp;
pub mod il;
pub mod irl;
pub mod model;
pub mod seed;
pub mod solvers;

pub use domain::{DomainKind, DomainSpec, Instance};
pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{
    unseen_states, ActionId, ActionTable, DemonstrationSet, FeatureVector, Policy, StateId,
    Summary, TabularMdp, Trajectory,
};
