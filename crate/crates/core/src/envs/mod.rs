//! The three experimental domains and their feature maps.

pub mod gridworld;
pub mod hiv;
pub mod kmeans;
pub mod pacman;

pub use gridworld::{build_gridworld, Gridworld, GridworldSpec};
pub use hiv::{hiv_reward, hiv_step, run_episode, FeatureScaler, HivAction, HivEpisode, HivParams, HivState};
pub use kmeans::{kmeans, kmeans_discretize, DiscretizedBatch};
pub use pacman::{build_pacman, Pacman, PacmanSpec};

/// Grid moves shared by gridworld and PAC-MAN, in action-index order.
pub const MOVES: [(i64, i64); 5] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];
pub const ACTION_NAMES: [&str; 5] = ["up", "down", "left", "right", "stay"];
