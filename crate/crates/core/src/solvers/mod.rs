//! Policy solvers and value estimation.

pub mod evaluate;
pub mod extra_trees;
pub mod fqi;
pub mod value_iteration;

pub use evaluate::{hiv_value, rollout_value};
pub use extra_trees::{ExtraTrees, ExtraTreesConfig};
pub use fqi::{fitted_q_iteration, FqiConfig, QEnsemble};
pub use value_iteration::{greedy_policy, q_values, value_iteration, ValueFunction};
