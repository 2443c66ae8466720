//! Star reconstructions: recovering the coefficient vector of a node's
//! displacement constraint from each measurement modality.
//!
//! A star is a center node plus its constraint neighbors, indexed locally
//! here: 0 is the center, 1..=k the neighbors. The coefficient vector is the
//! unit null vector of the stacked center-to-neighbor edge matrix. That null
//! space is invariant to direct similarities of the star, so any modality
//! that pins the star's shape up to similarity determines the coefficients:
//! distances via the double-centering embedding, angles via triangulation,
//! bearings by reduction to angles, ratios by fixing a gauge distance.

use crate::error::{Error, Result};
use crate::geom::{Dim, NetworkGraph, Vec3};
use crate::linalg::{distance_embedding, right_singular_pairs};
use crate::measure::{MeasurementSet, Modality};
use crate::tolerances::{MU_AMBIGUITY_REL, MU_SIGN_EPS};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Sine threshold below which a triangulation triangle counts as flat.
/// Exactly colinear inputs land near 1e-8 after rounding through the arc
/// cosine; genuinely thin stars sit well above this.
const DEGENERATE_SIN: f64 = 1e-7;

/// Local bearings at every star node: `at[a][b]` is the unit direction from
/// star node `a` to star node `b`, expressed in `a`'s frame.
#[derive(Debug, Clone)]
pub struct StarBearings {
    pub at: Vec<BTreeMap<usize, Vec3>>,
}

/// Angle cosines at every star node: `cos[a][(b, c)]` with `b < c` is the
/// cosine of the angle at `a` between the directions to `b` and `c`.
#[derive(Debug, Clone)]
pub struct StarAngles {
    pub cos: Vec<BTreeMap<(usize, usize), f64>>,
}

/// Distance ratios at every star node: `at[a][(b, c)]` with `b < c` is
/// `d_ab / d_ac`.
#[derive(Debug, Clone)]
pub struct StarRatios {
    pub at: Vec<BTreeMap<(usize, usize), f64>>,
}

/// One star's worth of observations for a single modality.
#[derive(Debug, Clone)]
pub enum StarData {
    /// Center-to-neighbor edge vectors in the center's frame.
    LocalPositions(Vec<Vec3>),
    /// Full symmetric distance matrix over {center} plus neighbors.
    Distances(DMatrix<f64>),
    Bearings(StarBearings),
    Angles(StarAngles),
    Ratios(StarRatios),
}

/// Unit-norm coefficient vector with a canonical sign: the first entry whose
/// magnitude exceeds the sign threshold is positive.
pub fn normalize_mu(mut mu: DVector<f64>) -> DVector<f64> {
    let n = mu.norm();
    if n > 0.0 {
        mu /= n;
    }
    for &c in mu.iter() {
        if c.abs() > MU_SIGN_EPS {
            if c < 0.0 {
                mu = -mu;
            }
            break;
        }
    }
    mu
}

/// Null vector of the matrix whose columns are the star's edge vectors in
/// `dim` coordinates, with the ambiguity check on the second-smallest
/// singular value.
fn mu_from_edge_columns(cols: &[DVector<f64>], dim: usize) -> Result<DVector<f64>> {
    let k = cols.len();
    if k < dim + 1 {
        return Err(Error::InvalidInput {
            reason: format!("a {dim}-dimensional star needs at least {} neighbors, got {k}", dim + 1),
        });
    }
    let mut m = DMatrix::zeros(dim, k);
    for (j, c) in cols.iter().enumerate() {
        if c.norm() == 0.0 {
            return Err(Error::DegenerateNeighborhood {
                reason: format!("edge to neighbor {} has zero length", j + 1),
            });
        }
        m.column_mut(j).copy_from(c);
    }
    let pairs = right_singular_pairs(&m);
    let largest = pairs[0].0;
    if largest == 0.0 {
        return Err(Error::DegenerateNeighborhood {
            reason: "all edge vectors vanish".to_string(),
        });
    }
    let second_smallest = pairs[k - 2].0;
    if second_smallest <= MU_AMBIGUITY_REL * largest {
        return Err(Error::AmbiguousNullSpace {
            second_smallest,
            largest,
        });
    }
    Ok(normalize_mu(pairs[k - 1].1.clone()))
}

/// Coefficients from relative positions observed at the center. Frame
/// rotations drop out because rotating every column leaves the null space
/// unchanged.
pub fn mu_from_local_positions(edges: &[Vec3], dim: Dim) -> Result<DVector<f64>> {
    let d = dim.as_usize();
    let cols: Vec<DVector<f64>> = edges
        .iter()
        .map(|e| {
            if dim == Dim::Two && e.z.abs() > 1e-12 * e.norm().max(1.0) {
                return Err(Error::InvalidInput {
                    reason: "planar star has an edge with a z component".to_string(),
                });
            }
            Ok(DVector::from_iterator(d, e.iter().take(d).copied()))
        })
        .collect::<Result<_>>()?;
    mu_from_edge_columns(&cols, d)
}

/// Coefficients from the star's full distance matrix (row and column 0 are
/// the center). The embedding fixes the star up to a rigid motion, which the
/// null space cannot see.
pub fn mu_from_distances(
    dist: &DMatrix<f64>,
    dim: Dim,
    consistency_rel: f64,
) -> Result<DVector<f64>> {
    let d = dim.as_usize();
    let coords = distance_embedding(dist, d, consistency_rel)?;
    let cols: Vec<DVector<f64>> = coords[1..].iter().map(|c| c - &coords[0]).collect();
    mu_from_edge_columns(&cols, d)
}

/// Coefficients from local bearings at every star node, by reducing each
/// node's bearings to angle cosines (dot products are frame-invariant) and
/// triangulating.
pub fn mu_from_bearings(
    bearings: &StarBearings,
    dim: Dim,
    consistency_rel: f64,
) -> Result<DVector<f64>> {
    let n = bearings.at.len();
    let mut cos = vec![BTreeMap::new(); n];
    for (a, cos_a) in cos.iter_mut().enumerate() {
        for b in 0..n {
            for c in (b + 1)..n {
                if b == a || c == a {
                    continue;
                }
                let gb = bearings.at[a].get(&b).ok_or(Error::IncompleteStar { pair: (a, b) })?;
                let gc = bearings.at[a].get(&c).ok_or(Error::IncompleteStar { pair: (a, c) })?;
                cos_a.insert((b, c), gb.dot(gc));
            }
        }
    }
    mu_from_angles(&StarAngles { cos }, dim, consistency_rel)
}

fn cosine(angles: &StarAngles, a: usize, b: usize, c: usize) -> Result<f64> {
    let key = (b.min(c), b.max(c));
    angles.cos[a]
        .get(&key)
        .copied()
        .ok_or(Error::IncompleteStar { pair: key })
}

/// Coefficients from angle cosines at every star node. Triangulation: gauge
/// the center-to-reference distance to one, solve each triangle
/// {center, reference, other} by the law of sines, fill the remaining
/// distances by the law of cosines at the center, then embed.
pub fn mu_from_angles(
    angles: &StarAngles,
    dim: Dim,
    consistency_rel: f64,
) -> Result<DVector<f64>> {
    let n = angles.cos.len();
    let k = n - 1;
    if k < dim.as_usize() + 1 {
        return Err(Error::InvalidInput {
            reason: format!("star has {k} neighbors, too few for dimension {}", dim.as_usize()),
        });
    }
    // pick the reference neighbor whose worst triangle is least flat
    let mut best: Option<(usize, f64)> = None;
    for r in 1..n {
        let mut worst = f64::INFINITY;
        for b in 1..n {
            if b == r {
                continue;
            }
            let beta = cosine(angles, b, 0, r)?.clamp(-1.0, 1.0).acos();
            worst = worst.min(beta.sin());
        }
        if best.map(|(_, q)| worst > q).unwrap_or(true) {
            best = Some((r, worst));
        }
    }
    let (reference, quality) = best.expect("at least two neighbors");
    if quality <= DEGENERATE_SIN {
        return Err(Error::DegenerateNeighborhood {
            reason: "star nodes are colinear, every triangulation triangle is flat".to_string(),
        });
    }
    let mut center_dist = vec![0.0; n];
    center_dist[reference] = 1.0;
    for (b, dist_b) in center_dist.iter_mut().enumerate().skip(1) {
        if b == reference {
            continue;
        }
        let alpha = cosine(angles, 0, reference, b)?.clamp(-1.0, 1.0).acos();
        let beta = cosine(angles, b, 0, reference)?.clamp(-1.0, 1.0).acos();
        let gamma = cosine(angles, reference, 0, b)?.clamp(-1.0, 1.0).acos();
        let defect = (alpha + beta + gamma - std::f64::consts::PI).abs();
        if defect > consistency_rel * std::f64::consts::PI {
            return Err(Error::InconsistentMeasurement {
                reason: format!(
                    "angles of triangle (center, {reference}, {b}) sum to pi + {defect:.3e}"
                ),
            });
        }
        *dist_b = gamma.sin() / beta.sin();
    }
    let mut dist = DMatrix::zeros(n, n);
    for b in 1..n {
        dist[(0, b)] = center_dist[b];
        dist[(b, 0)] = center_dist[b];
    }
    for a in 1..n {
        for b in (a + 1)..n {
            let c = cosine(angles, 0, a, b)?.clamp(-1.0, 1.0);
            let d2 = center_dist[a] * center_dist[a] + center_dist[b] * center_dist[b]
                - 2.0 * center_dist[a] * center_dist[b] * c;
            let d = d2.max(0.0).sqrt();
            dist[(a, b)] = d;
            dist[(b, a)] = d;
        }
    }
    mu_from_distances(&dist, dim, consistency_rel)
}

fn ratio(ratios: &StarRatios, a: usize, b: usize, c: usize) -> Result<f64> {
    let key = (b.min(c), b.max(c));
    let v = ratios.at[a]
        .get(&key)
        .copied()
        .ok_or(Error::IncompleteStar { pair: key })?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidInput {
            reason: format!("ratio at node {a} for pair {key:?} must be positive, got {v}"),
        });
    }
    Ok(if b < c { v } else { 1.0 / v })
}

/// Coefficients from distance ratios at every star node. The center-to-first
/// -neighbor distance is gauged to one; the coefficients are scale-invariant
/// so the gauge cannot matter. Each inter-neighbor distance is recoverable
/// from both endpoints, and the two values must agree.
pub fn mu_from_ratios(
    ratios: &StarRatios,
    dim: Dim,
    consistency_rel: f64,
) -> Result<DVector<f64>> {
    let n = ratios.at.len();
    let k = n - 1;
    if k < dim.as_usize() + 1 {
        return Err(Error::InvalidInput {
            reason: format!("star has {k} neighbors, too few for dimension {}", dim.as_usize()),
        });
    }
    let mut center_dist = vec![0.0; n];
    center_dist[1] = 1.0;
    // d(0, b) relative to the gauged d(0, 1)
    for (b, dist_b) in center_dist.iter_mut().enumerate().skip(2) {
        *dist_b = ratio(ratios, 0, b, 1)?;
    }
    let mut dist = DMatrix::zeros(n, n);
    for b in 1..n {
        dist[(0, b)] = center_dist[b];
        dist[(b, 0)] = center_dist[b];
    }
    for a in 1..n {
        for b in (a + 1)..n {
            let from_a = ratio(ratios, a, b, 0)? * center_dist[a];
            let from_b = ratio(ratios, b, a, 0)? * center_dist[b];
            let scale = from_a.max(from_b);
            if (from_a - from_b).abs() > consistency_rel * scale {
                return Err(Error::InconsistentMeasurement {
                    reason: format!(
                        "ratio cycle for neighbors {a} and {b} disagrees: \
                         {from_a:.6e} vs {from_b:.6e}"
                    ),
                });
            }
            let d = 0.5 * (from_a + from_b);
            dist[(a, b)] = d;
            dist[(b, a)] = d;
        }
    }
    mu_from_distances(&dist, dim, consistency_rel)
}

/// Dispatches to the modality-specific construction.
pub fn mu_from_star(data: &StarData, dim: Dim, consistency_rel: f64) -> Result<DVector<f64>> {
    match data {
        StarData::LocalPositions(edges) => mu_from_local_positions(edges, dim),
        StarData::Distances(dist) => mu_from_distances(dist, dim, consistency_rel),
        StarData::Bearings(b) => mu_from_bearings(b, dim, consistency_rel),
        StarData::Angles(a) => mu_from_angles(a, dim, consistency_rel),
        StarData::Ratios(r) => mu_from_ratios(r, dim, consistency_rel),
    }
}

/// Gathers one star's observations out of a network-wide measurement set,
/// remapping global node ids to star-local indices. Every modality except
/// local positions needs inter-neighbor observations, so the graph must
/// contain the corresponding edges; the first missing pair is reported.
pub fn extract_star(
    ms: &MeasurementSet,
    graph: &NetworkGraph,
    center: usize,
    neighbors: &[usize],
) -> Result<StarData> {
    let members: Vec<usize> = std::iter::once(center)
        .chain(neighbors.iter().copied())
        .collect();
    let n = members.len();
    let local_vec = |a: usize, b: usize| -> Result<Vec3> {
        ms.local_vectors[members[a]]
            .get(&members[b])
            .copied()
            .ok_or(Error::IncompleteStar {
                pair: (members[a], members[b]),
            })
    };
    let edge_dist = |a: usize, b: usize| -> Result<f64> {
        let (ga, gb) = (members[a], members[b]);
        let key = (ga.min(gb), ga.max(gb));
        ms.edge_scalars
            .get(&key)
            .copied()
            .ok_or(Error::IncompleteStar { pair: key })
    };
    // pair observation at node a about nodes b and c, with the stored key in
    // global order; ratios invert when the order flips, cosines do not
    let pair_at = |a: usize, b: usize, c: usize, invert: bool| -> Result<f64> {
        let (ga, gb, gc) = (members[a], members[b], members[c]);
        let key = (gb.min(gc), gb.max(gc));
        if !graph.has_edge(ga, gb) {
            return Err(Error::IncompleteStar {
                pair: (ga.min(gb), ga.max(gb)),
            });
        }
        if !graph.has_edge(ga, gc) {
            return Err(Error::IncompleteStar {
                pair: (ga.min(gc), ga.max(gc)),
            });
        }
        let v = ms.pair_scalars[ga]
            .get(&key)
            .copied()
            .ok_or(Error::IncompleteStar { pair: key })?;
        Ok(if invert && gb > gc { 1.0 / v } else { v })
    };
    match ms.modality {
        Modality::LocalPosition => {
            let edges: Vec<Vec3> = (1..n).map(|j| local_vec(0, j)).collect::<Result<_>>()?;
            Ok(StarData::LocalPositions(edges))
        }
        Modality::Distance => {
            let mut dist = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in (a + 1)..n {
                    if !graph.has_edge(members[a], members[b]) {
                        return Err(Error::IncompleteStar {
                            pair: (
                                members[a].min(members[b]),
                                members[a].max(members[b]),
                            ),
                        });
                    }
                    let d = edge_dist(a, b)?;
                    dist[(a, b)] = d;
                    dist[(b, a)] = d;
                }
            }
            Ok(StarData::Distances(dist))
        }
        Modality::LocalBearing => {
            let mut at = vec![BTreeMap::new(); n];
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    if !graph.has_edge(members[a], members[b]) {
                        return Err(Error::IncompleteStar {
                            pair: (
                                members[a].min(members[b]),
                                members[a].max(members[b]),
                            ),
                        });
                    }
                    at[a].insert(b, local_vec(a, b)?);
                }
            }
            Ok(StarData::Bearings(StarBearings { at }))
        }
        Modality::Angle => {
            let mut cos = vec![BTreeMap::new(); n];
            for (a, cos_a) in cos.iter_mut().enumerate() {
                for b in 0..n {
                    for c in (b + 1)..n {
                        if b == a || c == a {
                            continue;
                        }
                        cos_a.insert((b, c), pair_at(a, b, c, false)?);
                    }
                }
            }
            Ok(StarData::Angles(StarAngles { cos }))
        }
        Modality::RatioOfDistance => {
            let mut at = vec![BTreeMap::new(); n];
            for (a, at_a) in at.iter_mut().enumerate() {
                for b in 0..n {
                    for c in (b + 1)..n {
                        if b == a || c == a {
                            continue;
                        }
                        at_a.insert((b, c), pair_at(a, b, c, true)?);
                    }
                }
            }
            Ok(StarData::Ratios(StarRatios { at }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Configuration;
    use crate::measure::{synthesize_measurements, LocalFrameAssignment};
    use crate::synthetic;
    use crate::tolerances::STAR_CONSISTENCY_REL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The worked planar star: center (3, 1/2) with neighbors (1,0), (3,0),
    /// (2,1) supports coefficients proportional to (1, -3, -2).
    fn worked_planar_star() -> (Vec3, Vec<Vec3>) {
        (
            Vec3::new(3.0, 0.5, 0.0),
            vec![
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(2.0, 1.0, 0.0),
            ],
        )
    }

    fn expected_worked_mu() -> DVector<f64> {
        normalize_mu(DVector::from_vec(vec![1.0, -3.0, -2.0]))
    }

    fn star_measurements(
        center: Vec3,
        neighbors: &[Vec3],
        dim: Dim,
        modality: Modality,
        seed: u64,
    ) -> StarData {
        let positions: Vec<Vec3> = std::iter::once(center)
            .chain(neighbors.iter().copied())
            .collect();
        let n = positions.len();
        let config = Configuration::new(dim, positions, 1).unwrap();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let graph = NetworkGraph::new(n, 1, &edges).unwrap();
        let frames = if seed == 0 {
            LocalFrameAssignment::identity(n)
        } else {
            synthetic::random_frames(n, dim, &mut ChaCha8Rng::seed_from_u64(seed))
        };
        let ms = synthesize_measurements(&config, &graph, &frames, modality).unwrap();
        extract_star(&ms, &graph, 0, &(1..n).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn worked_star_from_local_positions() {
        let (center, nbrs) = worked_planar_star();
        let edges: Vec<Vec3> = nbrs.iter().map(|p| p - center).collect();
        let mu = mu_from_local_positions(&edges, Dim::Two).unwrap();
        assert!((mu - expected_worked_mu()).norm() < 1e-12);
    }

    #[test]
    fn worked_star_from_every_modality() {
        let (center, nbrs) = worked_planar_star();
        let expected = expected_worked_mu();
        for modality in Modality::ALL {
            let data = star_measurements(center, &nbrs, Dim::Two, modality, 77);
            let mu = mu_from_star(&data, Dim::Two, STAR_CONSISTENCY_REL).unwrap();
            assert!(
                (&mu - &expected).norm() < 1e-10,
                "{} gave {mu:?}",
                modality.name()
            );
        }
    }

    #[test]
    fn cube_star_matches_across_modalities() {
        let center = Vec3::new(-20.0, -20.0, -20.0);
        let nbrs = vec![
            Vec3::new(20.0, -20.0, -20.0),
            Vec3::new(20.0, 20.0, -20.0),
            Vec3::new(-20.0, 20.0, -20.0),
            Vec3::new(-20.0, -20.0, 20.0),
        ];
        let baseline = {
            let edges: Vec<Vec3> = nbrs.iter().map(|p| p - center).collect();
            mu_from_local_positions(&edges, Dim::Three).unwrap()
        };
        let expected = DVector::from_vec(vec![1.0, -1.0, 1.0, 0.0]) / 3.0_f64.sqrt();
        assert!((&baseline - &expected).norm() < 1e-12);
        for modality in Modality::ALL {
            let data = star_measurements(center, &nbrs, Dim::Three, modality, 13);
            let mu = mu_from_star(&data, Dim::Three, STAR_CONSISTENCY_REL).unwrap();
            assert!(
                (&mu - &baseline).norm() < 1e-8,
                "{} disagrees: {mu:?}",
                modality.name()
            );
        }
    }

    #[test]
    fn symmetric_star_is_ambiguous() {
        // neighbors at +x, -x, +y, -y from the center: the edge matrix has a
        // two-dimensional null space
        let edges = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        let err = mu_from_local_positions(&edges, Dim::Three).unwrap_err();
        assert!(matches!(err, Error::AmbiguousNullSpace { .. }));
    }

    #[test]
    fn equilateral_star_gives_equal_coefficients() {
        // center at the centroid of an equilateral triangle
        let sqrt3 = 3.0_f64.sqrt();
        let nbrs = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-0.5, sqrt3 / 2.0, 0.0),
            Vec3::new(-0.5, -sqrt3 / 2.0, 0.0),
        ];
        let mut dist = DMatrix::zeros(4, 4);
        for (i, p) in nbrs.iter().enumerate() {
            dist[(0, i + 1)] = p.norm();
            dist[(i + 1, 0)] = p.norm();
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                let d = (nbrs[a] - nbrs[b]).norm();
                dist[(a + 1, b + 1)] = d;
                dist[(b + 1, a + 1)] = d;
            }
        }
        let mu = mu_from_distances(&dist, Dim::Two, STAR_CONSISTENCY_REL).unwrap();
        let expected = DVector::from_element(3, 1.0 / sqrt3);
        assert!((mu - expected).norm() < 1e-10);
    }

    #[test]
    fn triangle_violation_is_rejected() {
        let mut dist = DMatrix::zeros(4, 4);
        let values = [
            ((0, 1), 1.0),
            ((0, 2), 1.0),
            ((0, 3), 1.0),
            ((1, 2), 10.0),
            ((1, 3), 1.0),
            ((2, 3), 1.0),
        ];
        for ((a, b), v) in values {
            dist[(a, b)] = v;
            dist[(b, a)] = v;
        }
        let err = mu_from_distances(&dist, Dim::Two, STAR_CONSISTENCY_REL).unwrap_err();
        assert!(matches!(err, Error::InconsistentMeasurement { .. }));
    }

    #[test]
    fn colinear_star_rejected_for_angles_and_bearings() {
        let center = Vec3::new(0.0, 0.0, 0.0);
        let nbrs = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-1.5, 0.0, 0.0),
        ];
        for modality in [Modality::Angle, Modality::LocalBearing] {
            let data = star_measurements(center, &nbrs, Dim::Two, modality, 3);
            let err = mu_from_star(&data, Dim::Two, STAR_CONSISTENCY_REL).unwrap_err();
            assert!(
                matches!(err, Error::DegenerateNeighborhood { .. }),
                "{}: {err}",
                modality.name()
            );
        }
    }

    #[test]
    fn inconsistent_ratio_cycle_rejected() {
        let (center, nbrs) = worked_planar_star();
        let data = star_measurements(center, &nbrs, Dim::Two, Modality::RatioOfDistance, 0);
        let StarData::Ratios(mut ratios) = data else {
            panic!("expected ratios");
        };
        // corrupt one neighbor's report of an inter-neighbor distance
        let key = *ratios.at[1].keys().next().unwrap();
        *ratios.at[1].get_mut(&key).unwrap() *= 1.5;
        let err = mu_from_ratios(&ratios, Dim::Two, STAR_CONSISTENCY_REL).unwrap_err();
        assert!(matches!(err, Error::InconsistentMeasurement { .. }));
    }

    #[test]
    fn missing_inter_neighbor_distance_reported() {
        let (center, nbrs) = worked_planar_star();
        let positions: Vec<Vec3> = std::iter::once(center).chain(nbrs).collect();
        let config = Configuration::new(Dim::Two, positions, 1).unwrap();
        // star edges only, no neighbor-to-neighbor edges
        let graph = NetworkGraph::new(4, 1, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let ms = synthesize_measurements(
            &config,
            &graph,
            &LocalFrameAssignment::identity(4),
            Modality::Distance,
        )
        .unwrap();
        let err = extract_star(&ms, &graph, 0, &[1, 2, 3]).unwrap_err();
        assert!(matches!(err, Error::IncompleteStar { .. }));
    }

    #[test]
    fn similarity_invariance_of_all_modalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for trial in 0..5 {
            let (center, nbrs) = synthetic::random_star(Dim::Three, 4, &mut rng);
            let t = synthetic::random_similarity(Dim::Three, &mut rng);
            let center_t = t.apply_point(center);
            let nbrs_t: Vec<Vec3> = nbrs.iter().map(|&p| t.apply_point(p)).collect();
            for modality in Modality::ALL {
                let a = star_measurements(center, &nbrs, Dim::Three, modality, 100 + trial);
                let b = star_measurements(center_t, &nbrs_t, Dim::Three, modality, 200 + trial);
                let mu_a = mu_from_star(&a, Dim::Three, STAR_CONSISTENCY_REL).unwrap();
                let mu_b = mu_from_star(&b, Dim::Three, STAR_CONSISTENCY_REL).unwrap();
                assert!(
                    (&mu_a - &mu_b).norm() < 1e-8,
                    "{} not similarity invariant",
                    modality.name()
                );
            }
        }
    }
}
