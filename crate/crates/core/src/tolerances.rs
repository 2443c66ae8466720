//! Numerical tolerances used across the crate.
//!
//! Every constant is relative to a problem scale (largest singular value,
//! scene diameter, edge-norm product) so scenarios in different units behave
//! identically. The two members of [`Tolerances`] are the ones worth tuning
//! per scenario; the remaining constants are internal conventions.

/// Singular values below `RANK_REL * sigma_max` count as zero when computing
/// ranks and null spaces. The single most safety-critical constant: it decides
/// rigidity and localizability verdicts.
pub const RANK_REL: f64 = 1e-8;

/// Two nodes closer than `COLLOCATION_REL * diameter` are considered
/// collocated. Downstream divisions by inter-node distance need this guard.
pub const COLLOCATION_REL: f64 = 1e-9;

/// A dot product with magnitude below `ANGLE_ZERO_REL * |e_1| * |e_2|` counts
/// as a right angle when selecting angle-constraint coefficients.
pub const ANGLE_ZERO_REL: f64 = 1e-9;

/// A star's null space is ambiguous when the second-smallest singular value
/// of its edge matrix is below `MU_AMBIGUITY_REL` times the largest.
pub const MU_AMBIGUITY_REL: f64 = 1e-8;

/// Coefficients with magnitude at most `MU_SIGN_EPS` are skipped when picking
/// the leading entry that fixes a coefficient vector's sign.
pub const MU_SIGN_EPS: f64 = 1e-12;

/// Relative tolerance for internal consistency of reconstructed stars on
/// noise-free data: Gram-matrix residual eigenvalues, triangle angle sums,
/// and ratio-cycle agreement. Callers rebuilding stars from noisy
/// measurements should pass a tolerance scaled with the noise level instead.
pub const STAR_CONSISTENCY_REL: f64 = 1e-6;

/// A candidate configuration is congruent when the rigidity-matrix residual
/// satisfies `|R p'| <= CONGRUENCE_REL * |R| * |p'|`.
pub const CONGRUENCE_REL: f64 = 1e-8;

/// Threshold on the smallest singular value of the anchor-row block of an
/// orthonormal null-space basis. Below it some null motion leaves every
/// anchor fixed. The basis is orthonormal, so the scale is absolute.
pub const ANCHOR_NULL_ABS: f64 = 1e-6;

/// The scenario-configurable tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// See [`RANK_REL`].
    pub rank_rel: f64,
    /// See [`COLLOCATION_REL`].
    pub collocation_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: RANK_REL,
            collocation_rel: COLLOCATION_REL,
        }
    }
}
