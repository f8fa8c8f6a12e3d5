//! Core library for decentralized multi-agent exploration of bounded 3D
//! volumes.
//!
//! The crate is organized around a shared voxel world model and a coarse
//! region connectivity graph built on top of it:
//!
//! - [`voxel`]: ground-truth and per-agent occupancy maps, visibility-based
//!   sensing, frontier bookkeeping, map-delta exchange, and grid search.
//! - [`graph`]: coarse grid partition plus the incremental free/unknown
//!   region graph with portal edges.
//! - [`tasks`]: task units derived from unknown regions, their status
//!   machine, and the wire-stable unit records.
//! - [`alloc`]: the contiguity-regularized CVRP over a communication
//!   component and its local-search solver.
//! - [`dispatch`]: host election and the versioned
//!   Proposal/Commit/Finalize/Cancel handshake over a lossy simulated
//!   network.
//! - [`planner`]: per-agent coverage-path planning (global ATSP tour,
//!   frontier clustering, viewpoint selection, fixed-endpoint local tours).
//!
//! The math kernel in [`math`] is generic over the scalar type; the rest of
//! the crate uses the `f64` aliases below.

pub mod agent;
pub mod alloc;
pub mod dispatch;
pub mod graph;
pub mod math;
pub mod planner;
pub mod tasks;
pub mod voxel;

/// Scalar used by the concrete simulation types.
pub type Real = f64;
/// 3D point / vector in meters.
pub type Point3 = math::Vec3<Real>;
/// 2D point / vector in meters (x-y plane).
pub type Point2 = math::Vec2<Real>;
/// Motion limits in concrete scalars.
pub type MotionLimits = math::MotionLimits<Real>;

/// Agent identifier. Host election picks the minimum id of a component.
pub type AgentId = u16;
