//! Reward-learning model: feature expectations, BEC constraints, SCOT
//! extraction and maximum-entropy reconstruction.

pub mod bec;
pub mod features;
pub mod maxent;
pub mod scot;

pub use bec::{bec_constraints, prune_constraints, BecTable, HalfspaceConstraint};
pub use features::{effective_horizon, feature_expectations, FeatureExpectation};
pub use maxent::{maxent_fit, greedy_reward_policy, MaxEntConfig, MaxEntFit, RewardWeights};
pub use scot::{greedy_cover, rollout_candidates, scot_extract};
