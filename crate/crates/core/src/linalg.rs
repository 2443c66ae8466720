//! Dense linear-algebra helpers: sorted singular value decompositions, null
//! spaces with relative rank tolerances, spectral norms, and the
//! double-centering embedding used to reconstruct stars from distances.
//!
//! Singular values and eigenvalues come back from the factorizations in
//! unspecified order, so every consumer here sorts explicitly.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Right singular pairs of `m`, sorted by descending singular value. The
/// matrix is padded with zero rows up to square when wide so the full right
/// basis is available.
pub fn right_singular_pairs(m: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let (rows, cols) = m.shape();
    let padded;
    let work = if rows < cols {
        padded = {
            let mut p = DMatrix::zeros(cols, cols);
            p.view_mut((0, 0), (rows, cols)).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Singular values of `m` in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m)[0]
}

/// Number of singular values above `rank_rel` times the largest.
pub fn rank(m: &DMatrix<f64>, rank_rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = singular_values(m);
    let cutoff = rank_rel * sv[0];
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Orthonormal basis of the right null space under the relative tolerance.
/// A zero matrix yields the full standard basis.
pub fn null_space(m: &DMatrix<f64>, rank_rel: f64) -> Vec<DVector<f64>> {
    let pairs = right_singular_pairs(m);
    let largest = pairs.first().map(|p| p.0).unwrap_or(0.0);
    let cutoff = rank_rel * largest;
    pairs
        .into_iter()
        .filter(|(s, _)| *s <= cutoff)
        .map(|(_, v)| v)
        .collect()
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, eig.eigenvectors.column(i).clone_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn symmetric_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    (min, max)
}

/// Embeds `k` points in `dim` coordinates from their full distance matrix by
/// double centering: B = -(1/2) C D2 C over squared distances, eigenpairs of
/// B give coordinates. Fails when B has significant spectrum beyond `dim`
/// (negative eigenvalues mean the distances violate a triangle inequality;
/// extra positive ones mean the points need more dimensions).
///
/// Returned coordinates are centered at the origin and unique up to
/// orthogonal maps, which is all a similarity-invariant caller needs.
pub fn distance_embedding(
    dist: &DMatrix<f64>,
    dim: usize,
    consistency_rel: f64,
) -> Result<Vec<DVector<f64>>> {
    let k = dist.nrows();
    if dist.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: dist.ncols(),
            context: "distance matrix must be square",
        });
    }
    for i in 0..k {
        for j in 0..k {
            let d = dist[(i, j)];
            if !d.is_finite() || (i == j && d != 0.0) || (i != j && d <= 0.0) {
                return Err(Error::InvalidInput {
                    reason: format!("distance matrix entry ({i}, {j}) = {d} is invalid"),
                });
            }
            if (dist[(i, j)] - dist[(j, i)]).abs() > consistency_rel * d.abs().max(1.0) {
                return Err(Error::InconsistentMeasurement {
                    reason: format!("distance matrix is not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    let sq = dist.map(|d| d * d);
    let ones = DMatrix::from_element(k, k, 1.0 / k as f64);
    let center = DMatrix::identity(k, k) - ones;
    let b = -0.5 * (&center * sq * &center);
    let pairs = symmetric_eigen_sorted(&b);
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0_f64, f64::max);
    // spectrum beyond the embedding dimension must vanish
    for (l, _) in pairs.iter().skip(dim) {
        if l.abs() > consistency_rel * scale {
            return Err(Error::InconsistentMeasurement {
                reason: format!(
                    "distances need more than {dim} dimensions or violate a \
                     triangle inequality (residual eigenvalue {l:.3e} vs scale {scale:.3e})"
                ),
            });
        }
    }
    for (l, _) in pairs.iter().take(dim) {
        if *l < -consistency_rel * scale {
            return Err(Error::InconsistentMeasurement {
                reason: format!("leading Gram eigenvalue is negative ({l:.3e})"),
            });
        }
    }
    let mut coords = vec![DVector::zeros(dim); k];
    for (axis, (l, v)) in pairs.iter().take(dim).enumerate() {
        let f = l.max(0.0).sqrt();
        for i in 0..k {
            coords[i][axis] = f * v[i];
        }
    }
    Ok(coords)
}
