//! Centralized localization: solving the free-node positions from the
//! information matrix with anchors pinned, and bounding the solution error
//! under perturbations of the matrix blocks.
//!
//! With anchors fixed, the constraints reduce to the linear system
//! D_ff p_f = -D_fa p_a. The free-free block is positive semidefinite; the
//! network is localizable exactly when it is definite, and the smallest
//! eigenvalue is both the solvability margin and the stiffness that a
//! perturbation has to overcome.

use crate::error::{Error, Result};
use crate::geom::{stack_positions, unstack_positions, NetworkGraph, Vec3};
use crate::linalg::{spectral_norm, symmetric_eigen_extremes, symmetric_eigen_sorted};
use crate::measure::{apply_noise, MeasurementSet};
use crate::rigidity::{assemble_rigidity_matrix, InformationMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Solves the free positions exactly. Fails with the unobserved free-node
/// motions when the free-free block is singular at the relative tolerance.
pub fn direct_localize(
    info: &InformationMatrix,
    anchors: &[Vec3],
    rank_rel: f64,
) -> Result<Vec<Vec3>> {
    if anchors.len() != info.n_anchors {
        return Err(Error::DimensionMismatch {
            expected: info.n_anchors,
            found: anchors.len(),
            context: "anchor positions for localization",
        });
    }
    let d_ff = info.d_ff();
    if d_ff.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = symmetric_eigen_sorted(&d_ff);
    let lambda_max = eig[0].0;
    let cutoff = rank_rel * lambda_max.max(0.0);
    let free_motion_basis: Vec<DVector<f64>> = eig
        .iter()
        .rev()
        .take_while(|(l, _)| *l <= cutoff)
        .map(|(_, v)| v.clone())
        .collect();
    if !free_motion_basis.is_empty() {
        return Err(Error::NotLocalizable { free_motion_basis });
    }
    let chol = d_ff.clone().cholesky().ok_or(Error::InternalConsistency {
        reason: "free-free block passed the eigenvalue gate but failed \
                 to factorize"
            .to_string(),
    })?;
    let rhs = -info.d_fa() * stack_positions(anchors);
    let x = chol.solve(&rhs);
    Ok(unstack_positions(&x))
}

/// Additive perturbation of the information blocks, by construction from
/// noisy measurements or by direct injection.
#[derive(Debug, Clone)]
pub enum PerturbationSource {
    MatrixInjection,
    MeasurementNoise { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct NoisePerturbation {
    pub delta_ff: DMatrix<f64>,
    pub delta_fa: DMatrix<f64>,
    pub source: PerturbationSource,
}

/// The perturbed system stays uniquely solvable whenever the free-free
/// perturbation is smaller than the clean block's smallest eigenvalue.
pub fn noise_nonsingularity_check(d_ff: &DMatrix<f64>, delta_ff: &DMatrix<f64>) -> bool {
    let (lambda_min, _) = symmetric_eigen_extremes(d_ff);
    spectral_norm(delta_ff) < lambda_min
}

/// Solves the perturbed system (D_ff + delta_ff) x = -(D_fa + delta_fa) p_a.
/// The perturbed block need not be symmetric.
pub fn solve_perturbed(
    info: &InformationMatrix,
    pert: &NoisePerturbation,
    anchors: &[Vec3],
) -> Result<Vec<Vec3>> {
    let a = info.d_ff() + &pert.delta_ff;
    let rhs = -(info.d_fa() + &pert.delta_fa) * stack_positions(anchors);
    let lu = a.lu();
    match lu.solve(&rhs) {
        Some(x) => Ok(unstack_positions(&x)),
        None => Err(Error::InvalidInput {
            reason: "perturbed free-free block is singular".to_string(),
        }),
    }
}

/// Upper bound on the stacked position error of the perturbed solve:
///
///   e <= |(I + D_ff^-1 delta_ff)^-1| |D_ff^-1| (|delta_fa| |p_a| + |delta_ff| |p_f|)
///
/// in spectral and Euclidean norms, valid whenever the nonsingularity check
/// passes. `free_truth` is the clean solution the error is measured against.
pub fn error_bound(
    info: &InformationMatrix,
    pert: &NoisePerturbation,
    anchors: &[Vec3],
    free_truth: &[Vec3],
) -> Result<f64> {
    let d_ff = info.d_ff();
    let (lambda_min, _) = symmetric_eigen_extremes(&d_ff);
    let delta_norm = spectral_norm(&pert.delta_ff);
    // Negated so a NaN norm lands on the inapplicable side.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(delta_norm < lambda_min) {
        return Err(Error::BoundInapplicable {
            delta_norm,
            lambda_min,
        });
    }
    let chol = d_ff.clone().cholesky().ok_or(Error::InternalConsistency {
        reason: "positive smallest eigenvalue but factorization failed".to_string(),
    })?;
    let m = DMatrix::identity(d_ff.nrows(), d_ff.ncols()) + chol.solve(&pert.delta_ff);
    let m_inv = m.try_inverse().ok_or(Error::InternalConsistency {
        reason: "perturbation below the margin but I + D_ff^-1 delta_ff \
                 is singular"
            .to_string(),
    })?;
    let amplification = spectral_norm(&m_inv) / lambda_min;
    let p_a = stack_positions(anchors).norm();
    let p_f = stack_positions(free_truth).norm();
    Ok(amplification * (spectral_norm(&pert.delta_fa) * p_a + delta_norm * p_f))
}

/// Builds the clean information matrix from a measurement set and the block
/// perturbation produced by corrupting that set with noise of scale `sigma`.
/// `consistency_rel` applies to the noisy rebuild and must be generous
/// enough to absorb the injected inconsistency.
pub fn perturb_from_measurement_noise<R: Rng>(
    graph: &NetworkGraph,
    anchors: &[Vec3],
    ms: &MeasurementSet,
    sigma: f64,
    consistency_rel: f64,
    rng: &mut R,
) -> Result<(InformationMatrix, NoisePerturbation)> {
    let clean_cs = crate::constraints::build_constraint_set(graph, anchors, ms, consistency_rel)?;
    let clean = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&clean_cs)?);
    let noisy_ms = apply_noise(ms, sigma, rng);
    let noisy_cs =
        crate::constraints::build_constraint_set(graph, anchors, &noisy_ms, consistency_rel)?;
    let noisy = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&noisy_cs)?);
    let pert = NoisePerturbation {
        delta_ff: noisy.d_ff() - clean.d_ff(),
        delta_fa: noisy.d_fa() - clean.d_fa(),
        source: PerturbationSource::MeasurementNoise { sigma },
    };
    Ok((clean, pert))
}
