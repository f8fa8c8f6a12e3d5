//! Scalar-generic math kernel: vectors, 2D convex hulls, principal-axis
//! analysis, the contiguity penalty kernel, and the velocity-consistency
//! tour-time model.
//!
//! Everything here is generic over [`Scalar`] (`f32` or `f64`); the rest of
//! the crate works through the concrete aliases exported at the crate root.

use num_traits::Float;

pub mod hull;
pub mod pca;
pub mod penalty;
pub mod tour;
pub mod vec;

pub use hull::{convex_hull, point_in_hull};
pub use pca::principal_axis;
pub use penalty::{contiguity_penalty, penalty_kernel};
pub use tour::{path_length, tour_time, MotionLimits};
pub use vec::{Vec2, Vec3};

/// Floating-point scalar the math kernel is generic over.
pub trait Scalar: Float + num_traits::NumAssign + core::fmt::Debug + Default + 'static {
    fn two() -> Self {
        Self::one() + Self::one()
    }
    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
