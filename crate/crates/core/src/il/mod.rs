//! Imitation-learning model: kernel graphs, harmonic label propagation and
//! active-learning extraction.

pub mod active;
pub mod grf;
pub mod kernel;

pub use active::{al_select, AlTrace, Oracle};
pub use grf::{grf_energy, grf_fit, grf_predict, grf_retrain_incremental, Graph, GrfModel};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
