//! Error taxonomy for construction, analysis, and simulation.

use nalgebra::DVector;
use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone)]
pub enum Error {
    /// Two nodes closer than the collocation tolerance.
    Collocation { i: usize, j: usize, distance: f64 },
    /// A star whose geometry cannot support the requested construction,
    /// e.g. a colinear star for angle or bearing data.
    DegenerateNeighborhood { reason: String },
    /// The edge matrix of a star has a null space of dimension above one, so
    /// no single coefficient vector is determined.
    AmbiguousNullSpace {
        second_smallest: f64,
        largest: f64,
    },
    /// Measurements contradict each other beyond tolerance (inconsistent
    /// distances, angle sums, or ratio cycles).
    InconsistentMeasurement { reason: String },
    /// An inter-neighbor observation needed to reconstruct a star is absent.
    IncompleteStar { pair: (usize, usize) },
    /// A node fails the connectivity assumptions of the constraint builder.
    AssumptionViolation { node: usize, detail: String },
    /// A constraint references nodes it must not (angle constraints are
    /// anchor-only: their matrix rows need known positions).
    InvalidConstraint { reason: String },
    /// Two independent criteria that must agree disagreed, which signals a
    /// tolerance pathology rather than a property of the input.
    InternalConsistency { reason: String },
    /// The free-free information block is singular; carries an orthonormal
    /// basis of free-node motions that no constraint observes.
    NotLocalizable { free_motion_basis: Vec<DVector<f64>> },
    /// The perturbation bound only applies below the nonsingularity margin.
    BoundInapplicable { delta_norm: f64, lambda_min: f64 },
    /// The protocol error grew persistently; `suggested_step` restores the
    /// contraction condition.
    Divergence { round: usize, suggested_step: f64 },
    /// An agent stepped without an estimate from a constraint co-member;
    /// indicates a scheduler bug, not bad input.
    StaleMailbox { node: usize, missing: usize },
    /// A vector or matrix had the wrong size for the operation.
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    /// Malformed input to a constructor (bad indices, non-finite values).
    InvalidInput { reason: String },
    /// Context wrapper naming the constraint being built when an error
    /// occurred.
    InConstraint {
        center: usize,
        neighbors: Vec<usize>,
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Collocation { i, j, distance } => write!(
                f,
                "nodes {i} and {j} are collocated (distance {distance:.3e})"
            ),
            Error::DegenerateNeighborhood { reason } => {
                write!(f, "degenerate neighborhood: {reason}")
            }
            Error::AmbiguousNullSpace {
                second_smallest,
                largest,
            } => write!(
                f,
                "star null space is ambiguous (second-smallest singular value \
                 {second_smallest:.3e} vs largest {largest:.3e})"
            ),
            Error::InconsistentMeasurement { reason } => {
                write!(f, "inconsistent measurements: {reason}")
            }
            Error::IncompleteStar { pair } => write!(
                f,
                "star is missing the inter-neighbor observation for pair \
                 ({}, {})",
                pair.0, pair.1
            ),
            Error::AssumptionViolation { node, detail } => {
                write!(f, "node {node} violates a connectivity assumption: {detail}")
            }
            Error::InvalidConstraint { reason } => write!(f, "invalid constraint: {reason}"),
            Error::InternalConsistency { reason } => {
                write!(f, "internal consistency check failed: {reason}")
            }
            Error::NotLocalizable { free_motion_basis } => write!(
                f,
                "network is not localizable: {} unobserved free-node motion(s)",
                free_motion_basis.len()
            ),
            Error::BoundInapplicable {
                delta_norm,
                lambda_min,
            } => write!(
                f,
                "perturbation norm {delta_norm:.6e} is not below the smallest \
                 free-block eigenvalue {lambda_min:.6e}; the error bound does \
                 not apply"
            ),
            Error::Divergence {
                round,
                suggested_step,
            } => write!(
                f,
                "estimates diverged at round {round}; retry with step size at \
                 most {suggested_step:.6e}"
            ),
            Error::StaleMailbox { node, missing } => write!(
                f,
                "node {node} has no estimate from co-member {missing} in its mailbox"
            ),
            Error::DimensionMismatch {
                expected,
                found,
                context,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, found {found}"
            ),
            Error::InvalidInput { reason } => write!(f, "invalid input: {reason}"),
            Error::InConstraint {
                center,
                neighbors,
                source,
            } => write!(
                f,
                "while building the constraint centered at node {center} with \
                 neighbors {neighbors:?}: {source}"
            ),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::InConstraint { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Wraps an error with the constraint it occurred in.
    pub fn in_constraint(self, center: usize, neighbors: &[usize]) -> Self {
        Error::InConstraint {
            center,
            neighbors: neighbors.to_vec(),
            source: Box::new(self),
        }
    }
}
