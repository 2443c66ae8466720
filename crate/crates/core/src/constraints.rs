//! Network-wide constraint sets: angle constraints among anchors and
//! displacement constraints around each node's neighborhood subsets.
//!
//! An angle constraint over an anchor triangle (i, j, k) is
//! w_ik (p_j - p_i)'(p_k - p_i) + w_ki (p_i - p_k)'(p_j - p_k) = 0 with the
//! weights chosen so the true positions satisfy it exactly. A displacement
//! constraint at center i with neighbor tuple (t_1, ..., t_m) is
//! sum_t mu_t (p_t - p_i) = 0, with mu the star coefficient vector. Both are
//! invariant to direct similarities applied to the whole configuration.

use crate::error::{Error, Result};
use crate::geom::{Dim, NetworkGraph, Vec3};
use crate::measure::MeasurementSet;
use crate::star::{extract_star, mu_from_star};
use crate::tolerances::ANGLE_ZERO_REL;
use nalgebra::DVector;

/// Anchor triangle with designed weights. Nodes are in increasing order and
/// all three must be anchors; the weights attach to the inner products at
/// the first and last vertex.
#[derive(Debug, Clone)]
pub struct AngleConstraint {
    pub nodes: (usize, usize, usize),
    pub w_ik: f64,
    pub w_ki: f64,
}

/// Zero-sum displacement relation around a center node. The coefficient
/// vector has one entry per neighbor and unit norm.
#[derive(Debug, Clone)]
pub struct DisplacementConstraint {
    pub center: usize,
    pub neighbors: Vec<usize>,
    pub mu: DVector<f64>,
}

/// All constraints extracted from one network and measurement set.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub dim: Dim,
    pub n: usize,
    pub n_anchors: usize,
    pub anchor_positions: Vec<Vec3>,
    pub angle: Vec<AngleConstraint>,
    pub displacement: Vec<DisplacementConstraint>,
}

impl ConstraintSet {
    pub fn m_r(&self) -> usize {
        self.angle.len()
    }

    pub fn m_d(&self) -> usize {
        self.displacement.len()
    }

    /// Stacked constraint values at the given positions, angle constraints
    /// first, then three coordinates per displacement constraint. Zero at
    /// any configuration congruent to the measured one.
    pub fn residuals(&self, positions: &[Vec3]) -> DVector<f64> {
        let mut r = DVector::zeros(self.m_r() + 3 * self.m_d());
        for (row, c) in self.angle.iter().enumerate() {
            let (i, j, k) = c.nodes;
            let e_ij = positions[j] - positions[i];
            let e_ik = positions[k] - positions[i];
            let e_kj = positions[j] - positions[k];
            r[row] = c.w_ik * e_ij.dot(&e_ik) + c.w_ki * (-e_ik).dot(&e_kj);
        }
        let base = self.m_r();
        for (ci, c) in self.displacement.iter().enumerate() {
            let mut v = Vec3::zeros();
            for (t, &nbr) in c.neighbors.iter().enumerate() {
                v += c.mu[t] * (positions[nbr] - positions[c.center]);
            }
            for coord in 0..3 {
                r[base + 3 * ci + coord] = v[coord];
            }
        }
        r
    }
}

/// Weights making the two inner products of triangle (i, j, k) cancel at the
/// true positions. When an inner product vanishes (a right angle) its weight
/// carries the whole constraint alone.
pub fn design_angle_params(p_i: Vec3, p_j: Vec3, p_k: Vec3) -> Result<(f64, f64)> {
    let e_ij = p_j - p_i;
    let e_ik = p_k - p_i;
    let e_ki = p_i - p_k;
    let e_kj = p_j - p_k;
    for (e, pair) in [(e_ij, "i, j"), (e_ik, "i, k"), (e_kj, "k, j")] {
        if e.norm() == 0.0 {
            return Err(Error::DegenerateNeighborhood {
                reason: format!("triangle vertices {pair} coincide"),
            });
        }
    }
    let dot_i = e_ij.dot(&e_ik);
    let dot_k = e_ki.dot(&e_kj);
    let zero_i = dot_i.abs() <= ANGLE_ZERO_REL * e_ij.norm() * e_ik.norm();
    let zero_k = dot_k.abs() <= ANGLE_ZERO_REL * e_ki.norm() * e_kj.norm();
    Ok(match (zero_i, zero_k) {
        (false, false) => (1.0 / dot_i, -1.0 / dot_k),
        (true, false) => (1.0, 0.0),
        (false, true) => (0.0, 1.0),
        (true, true) => (1.0, 1.0),
    })
}

/// Anchor triangles in increasing node order: all three nodes are anchors
/// and pairwise adjacent.
pub fn enumerate_angle_triples(graph: &NetworkGraph) -> Vec<(usize, usize, usize)> {
    let na = graph.n_anchors();
    let mut triples = Vec::new();
    for i in 0..na {
        for j in (i + 1)..na {
            if !graph.has_edge(i, j) {
                continue;
            }
            for k in (j + 1)..na {
                if graph.has_edge(i, k) && graph.has_edge(j, k) {
                    triples.push((i, j, k));
                }
            }
        }
    }
    triples
}

fn k_subsets(items: &[usize], k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    let needed = k - current.len();
    for idx in start..=items.len().saturating_sub(needed) {
        current.push(items[idx]);
        k_subsets(items, k, idx + 1, current, out);
        current.pop();
    }
}

/// Every (center, neighbor tuple) pair with exactly dim + 1 neighbors, the
/// smallest tuple that can support a displacement constraint. Centers run
/// over all nodes, anchors included; tuples are in increasing node order.
pub fn enumerate_displacement_tuples(graph: &NetworkGraph, dim: Dim) -> Vec<(usize, Vec<usize>)> {
    let size = dim.as_usize() + 1;
    let mut tuples = Vec::new();
    for center in 0..graph.n() {
        let nbrs: Vec<usize> = graph.neighbors(center).iter().copied().collect();
        if nbrs.len() < size {
            continue;
        }
        let mut subsets = Vec::new();
        k_subsets(&nbrs, size, 0, &mut Vec::new(), &mut subsets);
        for s in subsets {
            tuples.push((center, s));
        }
    }
    tuples
}

/// Builds the full constraint set: angle constraints from the known anchor
/// positions, displacement constraints from per-star measurements. Degree
/// requirements are checked up front so a failure names the offending node
/// rather than surfacing as a missing tuple later.
pub fn build_constraint_set(
    graph: &NetworkGraph,
    anchors: &[Vec3],
    ms: &MeasurementSet,
    consistency_rel: f64,
) -> Result<ConstraintSet> {
    let na = graph.n_anchors();
    if anchors.len() != na {
        return Err(Error::DimensionMismatch {
            expected: na,
            found: anchors.len(),
            context: "anchor positions",
        });
    }
    let dim = ms.dim;
    let min_nbrs = dim.as_usize() + 1;
    for node in 0..graph.n() {
        if graph.is_anchor(node) {
            let anchor_nbrs = graph
                .neighbors(node)
                .iter()
                .filter(|&&t| graph.is_anchor(t))
                .count();
            if anchor_nbrs < 2 {
                return Err(Error::AssumptionViolation {
                    node,
                    detail: format!(
                        "anchor has {anchor_nbrs} anchor neighbors, needs at least 2 \
                         to sit in an anchor triangle"
                    ),
                });
            }
        } else if graph.neighbors(node).len() < min_nbrs {
            return Err(Error::AssumptionViolation {
                node,
                detail: format!(
                    "free node has {} neighbors, needs at least {min_nbrs}",
                    graph.neighbors(node).len()
                ),
            });
        }
    }
    let mut angle = Vec::new();
    for (i, j, k) in enumerate_angle_triples(graph) {
        let (w_ik, w_ki) = design_angle_params(anchors[i], anchors[j], anchors[k])?;
        angle.push(AngleConstraint {
            nodes: (i, j, k),
            w_ik,
            w_ki,
        });
    }
    let mut displacement = Vec::new();
    for (center, neighbors) in enumerate_displacement_tuples(graph, dim) {
        // Reduced modalities reconstruct the star from inter-member
        // observations; a tuple whose members share no edge carries no such
        // data and produces no constraint. A pair that is an edge but lacks
        // its observation is a malformed measurement set and still fails.
        let data = match extract_star(ms, graph, center, &neighbors) {
            Ok(data) => data,
            Err(Error::IncompleteStar { pair }) if !graph.has_edge(pair.0, pair.1) => continue,
            Err(e) => return Err(e.in_constraint(center, &neighbors)),
        };
        let mu = mu_from_star(&data, dim, consistency_rel)
            .map_err(|e| e.in_constraint(center, &neighbors))?;
        displacement.push(DisplacementConstraint {
            center,
            neighbors,
            mu,
        });
    }
    Ok(ConstraintSet {
        dim,
        n: graph.n(),
        n_anchors: na,
        anchor_positions: anchors.to_vec(),
        angle,
        displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{synthesize_measurements, LocalFrameAssignment, Modality};
    use crate::synthetic;
    use crate::tolerances::STAR_CONSISTENCY_REL;

    #[test]
    fn generic_triangle_weights_cancel() {
        let (p_i, p_j, p_k) = (
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(1.0, 3.0, 0.0),
        );
        let (w_ik, w_ki) = design_angle_params(p_i, p_j, p_k).unwrap();
        let dot_i = (p_j - p_i).dot(&(p_k - p_i));
        let dot_k = (p_i - p_k).dot(&(p_j - p_k));
        assert!((w_ik * dot_i + w_ki * dot_k).abs() < 1e-14);
        assert!(w_ik != 0.0 && w_ki != 0.0);
    }

    #[test]
    fn right_angle_cases() {
        // right angle at the last vertex
        let (w_ik, w_ki) = design_angle_params(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(2.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!((w_ik, w_ki), (0.0, 1.0));
        // right angle at the first vertex
        let (w_ik, w_ki) = design_angle_params(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!((w_ik, w_ki), (1.0, 0.0));
    }

    #[test]
    fn coincident_vertices_rejected() {
        let p = Vec3::new(1.0, 2.0, 0.0);
        let err = design_angle_params(p, p, Vec3::new(0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateNeighborhood { .. }));
    }

    #[test]
    fn tuple_and_triple_counts_for_fixtures() {
        let planar = synthetic::planar_six_node_scenario();
        assert_eq!(enumerate_angle_triples(&planar.graph).len(), 1);
        assert_eq!(
            enumerate_displacement_tuples(&planar.graph, Dim::Two).len(),
            30
        );
        let cube = synthetic::cube_scenario();
        assert_eq!(enumerate_angle_triples(&cube.graph).len(), 4);
        assert_eq!(
            enumerate_displacement_tuples(&cube.graph, Dim::Three).len(),
            280
        );
    }

    #[test]
    fn residuals_vanish_at_true_positions() {
        for scenario in [
            synthetic::planar_six_node_scenario(),
            synthetic::cube_scenario(),
        ] {
            let ms = synthesize_measurements(
                &scenario.config,
                &scenario.graph,
                &LocalFrameAssignment::identity(scenario.config.n()),
                Modality::LocalPosition,
            )
            .unwrap();
            let cs = build_constraint_set(
                &scenario.graph,
                scenario.config.anchor_positions(),
                &ms,
                STAR_CONSISTENCY_REL,
            )
            .unwrap();
            let r = cs.residuals(scenario.config.positions());
            assert!(r.norm() < 1e-10, "residual norm {}", r.norm());
        }
    }

    #[test]
    fn underconnected_free_node_named() {
        // free node 3 has two neighbors, below the planar minimum of three
        let graph = NetworkGraph::new(4, 3, &[(0, 1), (0, 2), (1, 2), (0, 3), (1, 3)]).unwrap();
        let scenario = synthetic::planar_six_node_scenario();
        let ms = synthesize_measurements(
            &scenario.config,
            &scenario.graph,
            &LocalFrameAssignment::identity(6),
            Modality::LocalPosition,
        )
        .unwrap();
        let err = build_constraint_set(
            &graph,
            &scenario.config.anchor_positions()[..3],
            &ms,
            STAR_CONSISTENCY_REL,
        )
        .unwrap_err();
        match err {
            Error::AssumptionViolation { node, .. } => assert_eq!(node, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn star_failure_reports_constraint_context() {
        // the (2, 3) edge exists but its distance is withheld, so the first
        // tuple touching the pair fails instead of being skipped
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(2.0, 3.0, 0.0),
            Vec3::new(2.0, -2.0, 0.0),
            Vec3::new(2.0, 1.0, 0.0),
        ];
        let config = crate::geom::Configuration::new(Dim::Two, positions, 4).unwrap();
        let graph = NetworkGraph::new(
            5,
            4,
            &[
                (0, 1),
                (0, 2),
                (0, 3),
                (1, 2),
                (1, 3),
                (1, 4),
                (2, 3),
                (2, 4),
                (3, 4),
            ],
        )
        .unwrap();
        let mut ms = synthesize_measurements(
            &config,
            &graph,
            &LocalFrameAssignment::identity(5),
            Modality::Distance,
        )
        .unwrap();
        ms.edge_scalars.remove(&(2, 3));
        let err = build_constraint_set(
            &graph,
            config.anchor_positions(),
            &ms,
            STAR_CONSISTENCY_REL,
        )
        .unwrap_err();
        match err {
            Error::InConstraint { center, source, .. } => {
                assert_eq!(center, 0);
                assert!(matches!(*source, Error::IncompleteStar { pair: (2, 3) }));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tuples_without_inter_member_edges_are_skipped() {
        // reduced modalities reconstruct each star from inter-member
        // observations, so only tuples whose members are pairwise adjacent
        // survive; the six-node planar network keeps 12 of its 30
        let scenario = synthetic::planar_six_node_scenario();
        let ms = synthesize_measurements(
            &scenario.config,
            &scenario.graph,
            &LocalFrameAssignment::identity(scenario.config.n()),
            Modality::Angle,
        )
        .unwrap();
        let cs = build_constraint_set(
            &scenario.graph,
            scenario.config.anchor_positions(),
            &ms,
            STAR_CONSISTENCY_REL,
        )
        .unwrap();
        assert_eq!(cs.m_d(), 12);
        for c in &cs.displacement {
            for (a, &x) in c.neighbors.iter().enumerate() {
                for &y in &c.neighbors[a + 1..] {
                    assert!(scenario.graph.has_edge(x, y), "pair ({x}, {y}) not an edge");
                }
            }
        }
        // the surviving set contains the worked free-node star with its
        // known coefficients
        let worked = cs
            .displacement
            .iter()
            .find(|c| c.center == 3 && c.neighbors == vec![0, 1, 2])
            .expect("worked star present");
        let mu = &worked.mu;
        let scale = mu[0];
        assert!(scale > 0.0);
        assert!((mu[1] / scale - -3.0).abs() < 1e-9);
        assert!((mu[2] / scale - -2.0).abs() < 1e-9);
    }
}
