//! Graph-adjacency contiguity penalty kernel.
//!
//! Task pairs whose traversal distance stays within the connectivity radius
//! `R_c = lambda_c * L_g` carry no extra cost; pairs beyond it are penalized
//! quadratically in their excess, which steers the allocator away from
//! handing spatially disconnected tasks to one agent.

use super::Scalar;

/// Penalty factor for a normalized adjacency ratio `rho = l / R_c`:
/// 1 for `rho <= 1`, `1 + (rho - 1)^2` beyond.
pub fn penalty_kernel<S: Scalar>(rho: S) -> S {
    if rho <= S::one() {
        S::one()
    } else {
        let d = rho - S::one();
        S::one() + d * d
    }
}

/// Penalty factor for a traversal distance `l` given the connectivity radius
/// `r_c`. Always >= 1.
pub fn contiguity_penalty<S: Scalar>(l: S, r_c: S) -> S {
    penalty_kernel(l / r_c)
}
