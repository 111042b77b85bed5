//! The shared log-rate-ratio grid.
//!
//! Every likelihood profile, posterior and bias density in this crate lives
//! on one fixed grid of 1001 equally spaced points over [-4, 4]. A single
//! shared grid makes profile translation (positive-control synthesis) an
//! exact index shift and keeps cross-profile arithmetic lossless.

/// Fixed evaluation grid for beta = log(RR).
pub struct BetaGrid;

impl BetaGrid {
    /// Number of grid points.
    pub const LEN: usize = 1001;
    /// Spacing between adjacent points.
    pub const STEP: f64 = 0.008;
    pub const MIN: f64 = -4.0;
    pub const MAX: f64 = 4.0;
    /// Index of beta = 0 exactly.
    pub const ZERO: usize = 500;

    /// Grid point `i`. Computed in integer space so that `beta(ZERO)` is
    /// exactly 0.0 and the endpoints are exactly +/-4.0.
    #[inline]
    pub fn beta(i: usize) -> f64 {
        debug_assert!(i < Self::LEN);
        (i as i64 * 8 - 4000) as f64 / 1000.0
    }

    /// All grid points in increasing order.
    pub fn betas() -> impl Iterator<Item = f64> {
        (0..Self::LEN).map(Self::beta)
    }

    /// Index of the grid point nearest to `beta`, clamped to the grid.
    pub fn nearest_index(beta: f64) -> usize {
        let raw = ((beta - Self::MIN) / Self::STEP).round();
        raw.clamp(0.0, (Self::LEN - 1) as f64) as usize
    }

    /// Whole number of grid steps nearest to `shift`.
    pub fn snap_steps(shift: f64) -> i64 {
        (shift / Self::STEP).round() as i64
    }

    /// Trapezoid weight of point `i` over the full grid.
    #[inline]
    pub fn weight(i: usize) -> f64 {
        if i == 0 || i == Self::LEN - 1 {
            Self::STEP / 2.0
        } else {
            Self::STEP
        }
    }
}
