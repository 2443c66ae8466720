//! The constraint gradient matrix and what its spectrum says about a
//! network: which motions the constraints cannot see, whether the only
//! invisible motions are global similarities, and whether pinning the
//! anchors removes them all.
//!
//! Rows are gradients of the constraint values at the measured
//! configuration, angle rows first. Every constraint is exactly invariant
//! under translations and scalings and to first order under rotations, so
//! the similarity generators always lie in the null space; rigidity is the
//! statement that nothing else does, and localizability the weaker statement
//! that nothing else vanishes on the anchors.

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::geom::{stack_positions, Configuration, Dim, Vec3};
use crate::linalg::{right_singular_pairs, spectral_norm, symmetric_eigen_sorted};
use crate::tolerances::{Tolerances, ANCHOR_NULL_ABS, CONGRUENCE_REL};
use nalgebra::{DMatrix, DVector, Matrix3};

/// Provenance of one matrix row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowTag {
    Angle { nodes: (usize, usize, usize) },
    Displacement { center: usize, coord: usize },
}

/// Stacked constraint gradients: one row per angle constraint, three per
/// displacement constraint, over all 3n position coordinates.
#[derive(Debug, Clone)]
pub struct RigidityMatrix {
    pub r: DMatrix<f64>,
    pub tags: Vec<RowTag>,
    pub n: usize,
    pub n_anchors: usize,
    pub dim: Dim,
}

/// Quadratic form D = R'R, with block accessors for the anchor/free
/// partition (anchors occupy the first coordinates).
#[derive(Debug, Clone)]
pub struct InformationMatrix {
    pub d: DMatrix<f64>,
    pub n: usize,
    pub n_anchors: usize,
}

impl InformationMatrix {
    pub fn from_rigidity(rm: &RigidityMatrix) -> Self {
        InformationMatrix {
            d: rm.r.transpose() * &rm.r,
            n: rm.n,
            n_anchors: rm.n_anchors,
        }
    }

    fn split(&self) -> usize {
        3 * self.n_anchors
    }

    pub fn d_aa(&self) -> DMatrix<f64> {
        let s = self.split();
        self.d.view((0, 0), (s, s)).into_owned()
    }

    pub fn d_af(&self) -> DMatrix<f64> {
        let s = self.split();
        self.d.view((0, s), (s, 3 * self.n - s)).into_owned()
    }

    pub fn d_fa(&self) -> DMatrix<f64> {
        let s = self.split();
        self.d.view((s, 0), (3 * self.n - s, s)).into_owned()
    }

    pub fn d_ff(&self) -> DMatrix<f64> {
        let s = self.split();
        let f = 3 * self.n - s;
        self.d.view((s, s), (f, f)).into_owned()
    }
}

/// Builds the gradient matrix from a constraint set. Angle rows use the
/// known anchor positions; a constraint touching a free node has no
/// evaluable gradient and is rejected.
pub fn assemble_rigidity_matrix(cs: &ConstraintSet) -> Result<RigidityMatrix> {
    let cols = 3 * cs.n;
    let rows = cs.m_r() + 3 * cs.m_d();
    let mut r = DMatrix::zeros(rows, cols);
    let mut tags = Vec::with_capacity(rows);
    for (row, c) in cs.angle.iter().enumerate() {
        let (i, j, k) = c.nodes;
        for node in [i, j, k] {
            if node >= cs.n_anchors {
                return Err(Error::InvalidConstraint {
                    reason: format!(
                        "angle constraint {:?} references free node {node}",
                        c.nodes
                    ),
                });
            }
        }
        let (p_i, p_j, p_k) = (
            cs.anchor_positions[i],
            cs.anchor_positions[j],
            cs.anchor_positions[k],
        );
        let grad_i = 2.0 * c.w_ik * p_i + (c.w_ki - c.w_ik) * p_j - (c.w_ik + c.w_ki) * p_k;
        let grad_j = (c.w_ki - c.w_ik) * p_i + (c.w_ik - c.w_ki) * p_k;
        let grad_k = -(c.w_ik + c.w_ki) * p_i + (c.w_ik - c.w_ki) * p_j + 2.0 * c.w_ki * p_k;
        for (node, grad) in [(i, grad_i), (j, grad_j), (k, grad_k)] {
            for coord in 0..3 {
                r[(row, 3 * node + coord)] += grad[coord];
            }
        }
        tags.push(RowTag::Angle { nodes: c.nodes });
    }
    let base = cs.m_r();
    for (ci, c) in cs.displacement.iter().enumerate() {
        let sum: f64 = c.mu.iter().sum();
        for coord in 0..3 {
            let row = base + 3 * ci + coord;
            r[(row, 3 * c.center + coord)] = -sum;
            for (t, &nbr) in c.neighbors.iter().enumerate() {
                r[(row, 3 * nbr + coord)] += c.mu[t];
            }
            tags.push(RowTag::Displacement {
                center: c.center,
                coord,
            });
        }
    }
    Ok(RigidityMatrix {
        r,
        tags,
        n: cs.n,
        n_anchors: cs.n_anchors,
        dim: cs.dim,
    })
}

/// Instantaneous similarity motions of a configuration: three translations,
/// three rotation generators, one scaling. `effective_dim` is the rank of
/// their span, seven for any non-colinear configuration.
#[derive(Debug, Clone)]
pub struct TrivialMotions {
    pub generators: Vec<DVector<f64>>,
    pub effective_dim: usize,
}

pub fn trivial_motion_basis(config: &Configuration) -> TrivialMotions {
    let n = config.n();
    let mut generators = Vec::with_capacity(7);
    for coord in 0..3 {
        let mut g = DVector::zeros(3 * n);
        for i in 0..n {
            g[3 * i + coord] = 1.0;
        }
        generators.push(g);
    }
    let spins = [
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
        Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0),
        Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    ];
    for a in spins {
        let mut g = DVector::zeros(3 * n);
        for i in 0..n {
            let v = a * config.position(i);
            for coord in 0..3 {
                g[3 * i + coord] = v[coord];
            }
        }
        generators.push(g);
    }
    generators.push(config.stacked());
    let mut m = DMatrix::zeros(3 * n, generators.len());
    for (c, g) in generators.iter().enumerate() {
        m.column_mut(c).copy_from(g);
    }
    let effective_dim = crate::linalg::rank(&m, 1e-10);
    TrivialMotions {
        generators,
        effective_dim,
    }
}

/// Spectrum-level summary of one network's constraints.
#[derive(Debug, Clone)]
pub struct RigidityReport {
    /// Singular values of the gradient matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub nullity: usize,
    /// Dimension of the similarity motions at this configuration.
    pub trivial_dim: usize,
    /// Null space is exactly the similarity motions.
    pub is_infinitesimally_rigid: bool,
    /// Pinning the anchors determines every free node.
    pub is_localizable: bool,
    pub lambda_min_ff: f64,
    pub lambda_max_ff: f64,
    /// Orthonormal null directions outside the similarity span.
    pub nontrivial_motion_basis: Vec<DVector<f64>>,
}

/// Orthonormal basis of a span given by arbitrary generators.
fn orthonormal_columns(vectors: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    let mut m = DMatrix::zeros(rows, vectors.len());
    for (c, v) in vectors.iter().enumerate() {
        m.column_mut(c).copy_from(v);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * s_max {
            cols.push(u.column(i).clone_owned());
        }
    }
    let mut q = DMatrix::zeros(rows, cols.len());
    for (c, v) in cols.iter().enumerate() {
        q.column_mut(c).copy_from(v);
    }
    q
}

/// Analyzes the gradient matrix of a configuration: rank and null space,
/// rigidity and localizability verdicts, and the extreme eigenvalues of
/// the free-free block. The localizability verdict is computed two ways,
/// from the free-free spectrum and from the anchor footprint of the full
/// null space, and the two must agree.
pub fn nullity_report(
    rm: &RigidityMatrix,
    config: &Configuration,
    tol: &Tolerances,
) -> Result<RigidityReport> {
    if config.n() != rm.n {
        return Err(Error::DimensionMismatch {
            expected: rm.n,
            found: config.n(),
            context: "configuration size for rigidity report",
        });
    }
    let cols = 3 * rm.n;
    let pairs = right_singular_pairs(&rm.r);
    let singular_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = tol.rank_rel * largest;
    let rank = singular_values.iter().filter(|&&s| s > cutoff).count();
    let nullity = cols - rank;
    let null_vectors: Vec<DVector<f64>> =
        pairs.iter().skip(rank).map(|(_, v)| v.clone()).collect();

    let trivial = trivial_motion_basis(config);
    let is_infinitesimally_rigid = nullity == trivial.effective_dim;

    let info = InformationMatrix::from_rigidity(rm);
    let d_ff = info.d_ff();
    let (lambda_min_ff, lambda_max_ff) = if d_ff.nrows() == 0 {
        (f64::INFINITY, 0.0)
    } else {
        crate::linalg::symmetric_eigen_extremes(&d_ff)
    };
    let is_localizable = if d_ff.nrows() == 0 {
        true
    } else {
        lambda_min_ff > tol.rank_rel * lambda_max_ff.max(0.0) && lambda_min_ff > 0.0
    };

    // independent verdict: a network fails to be localizable exactly when
    // some null motion of the full matrix vanishes on every anchor
    let eig = symmetric_eigen_sorted(&info.d);
    let lam_max = eig.first().map(|p| p.0).unwrap_or(0.0);
    let null_of_d: Vec<&DVector<f64>> = eig
        .iter()
        .filter(|(l, _)| *l <= tol.rank_rel * lam_max)
        .map(|(_, v)| v)
        .collect();
    let anchor_rows = 3 * rm.n_anchors;
    let anchor_verdict = if null_of_d.is_empty() {
        true
    } else if null_of_d.len() > anchor_rows {
        false
    } else {
        let mut n_a = DMatrix::zeros(anchor_rows, null_of_d.len());
        for (c, v) in null_of_d.iter().enumerate() {
            for r in 0..anchor_rows {
                n_a[(r, c)] = v[r];
            }
        }
        let sv = crate::linalg::singular_values(&n_a);
        *sv.last().unwrap() > ANCHOR_NULL_ABS
    };
    if anchor_verdict != is_localizable {
        return Err(Error::InternalConsistency {
            reason: format!(
                "free-free spectrum says localizable = {is_localizable} \
                 (lambda_min = {lambda_min_ff:.3e}) but the anchor footprint \
                 of the null space says {anchor_verdict}"
            ),
        });
    }

    // null directions outside the similarity span
    let q_t = orthonormal_columns(&trivial.generators, cols);
    let mut nontrivial_motion_basis = Vec::new();
    if !null_vectors.is_empty() {
        let mut n_mat = DMatrix::zeros(cols, null_vectors.len());
        for (c, v) in null_vectors.iter().enumerate() {
            n_mat.column_mut(c).copy_from(v);
        }
        let projected = &n_mat - &q_t * (q_t.transpose() * &n_mat);
        let svd = projected.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > 0.5 {
                nontrivial_motion_basis.push(u.column(i).clone_owned());
            }
        }
    }

    Ok(RigidityReport {
        singular_values,
        rank,
        nullity,
        trivial_dim: trivial.effective_dim,
        is_infinitesimally_rigid,
        is_localizable,
        lambda_min_ff,
        lambda_max_ff,
        nontrivial_motion_basis,
    })
}

/// Whether the constraints built at the measured configuration are also
/// satisfied, to first order, by the candidate positions: the matrix acting
/// on the candidate must vanish relative to its scale. Translates, scalings,
/// and planar rotations of the original always pass; reflections and finite
/// spatial rotations generally do not.
pub fn check_congruence(rm: &RigidityMatrix, candidate: &[Vec3]) -> Result<bool> {
    if candidate.len() != rm.n {
        return Err(Error::DimensionMismatch {
            expected: rm.n,
            found: candidate.len(),
            context: "candidate configuration size",
        });
    }
    let p = stack_positions(candidate);
    let residual = (&rm.r * &p).norm();
    Ok(residual <= CONGRUENCE_REL * spectral_norm(&rm.r) * p.norm())
}
