//! Allocation of perishable surplus supply to demand orders.
//!
//! Offers and orders are matched in four stages: hard feasibility filtering,
//! weighted-sum scoring, an exact MILP solve, and an iterative protocol that
//! re-offers residual supply until nothing more moves.

pub mod datagen;
pub mod engine;
pub mod feasibility;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod model;
pub mod report;
pub mod scoring;
pub mod solver;

pub use datagen::{generate, write_dataset, Dataset, GenConfig};
pub use engine::{run_to_termination, AllocationResult, EngineConfig, EngineError};
pub use feasibility::{build_arcs, ArcSet, FeasibleArc, MatchContext, RejectionRecord};
pub use geo::{GeoPoint, PostcodeIndex};
pub use metrics::{compute_metrics, run_strategy_suite, MetricSuite, Strategy, StrategyRun};
pub use model::{CriterionScores, Flow, Offer, Order, ReasonCode, Weights};
pub use scoring::{score_arcs, ScoredArc};
pub use solver::{solve, PruneMode, SolveReport, SolveStatus, SolverConfig};
