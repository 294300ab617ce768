//! Simulation-backed situational-graph SLAM testbed.
//!
//! Implements traversability-aware room segmentation (traversable-node
//! clustering with a flush-based room extraction strategy) next to the
//! ESDF-voxel / fixed-timer baseline, joint optimization of a hierarchical
//! pose graph over keyframes, walls, and rooms, and the consistency and
//! efficiency metrics used to compare the two on synthetic indoor worlds.

pub mod freespace;
pub mod geometry;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod posegraph;
pub mod render;
pub mod rooms;
pub mod sensor;
pub mod traversability;
pub mod walls;
pub mod world;

pub use geometry::{Line2, Pose2, Vec2};
