//! Solvers for two-echelon routing with one truck and a fleet of drones.
//!
//! The truck visits a subset of launch nodes; at every visited node its
//! drones fly round trips to customers and the truck waits until they are
//! back. Two drone models are covered: single trip (each drone flies at most
//! once per node) and multi trip (drones fly repeatedly, waits add up per
//! drone). The objective is the time the truck returns to the depot.
//!
//! - [`model`]: instances, time matrices, solutions, feasibility and evaluation.
//! - [`instancegen`]: random instances and the minimum fleet size `u_min`.
//! - [`construct`]: randomized roulette-wheel construction.
//! - [`localsearch`]: neighbourhood operators with cached O(1) deltas.
//! - [`grasp`]: the multi-start construct/improve loop.
//! - [`exact`]: enumeration oracle for small instances and LP model export.
//! - [`baseline`]: truck-only TSP tours and the gap statistic.

pub mod baseline;
pub mod construct;
pub mod exact;
pub mod grasp;
pub mod instancegen;
pub mod localsearch;
pub mod model;

pub use grasp::{run as run_grasp, run_traced, GraspConfig, GraspError, GraspOutcome};
pub use model::{
    check_feasibility, evaluate, Evaluation, Instance, Point, RunReport, Solution, TimeMatrices, Variant,
    Violation,
};
