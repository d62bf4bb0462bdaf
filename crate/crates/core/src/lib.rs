//! Deterministic 2D social-navigation laboratory: scenes, ORCA crowds,
//! rule-based and future-aware planners, a small recurrent policy-gradient
//! learner with socially-aware auxiliary heads, and a paired benchmark
//! harness over success/path/time/personal-space metrics.

pub mod bench;
pub mod commands;
pub mod config;
pub mod crowd;
pub mod episode;
pub mod gen;
pub mod geom;
pub mod metrics;
pub mod grid;
pub mod learn;
pub mod math;
pub mod params;
pub mod planners;
pub mod prediction;
pub mod rewards;
pub mod rng;
pub mod scene;
pub mod traceio;
