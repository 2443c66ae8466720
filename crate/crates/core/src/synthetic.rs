//! Reference networks and random generators for tests, benchmarks, and the
//! command line. The fixed scenarios pin down known spectra; the random
//! generators reject badly conditioned geometry so downstream constructions
//! are exercised away from their failure thresholds.

use crate::constraints::{build_constraint_set, ConstraintSet};
use crate::error::Result;
use crate::geom::{Configuration, Dim, NetworkGraph, SimilarityTransform, Vec3};
use crate::localize::{NoisePerturbation, PerturbationSource};
use crate::measure::{synthesize_measurements, LocalFrameAssignment, MeasurementSet, Modality};
use crate::rigidity::{assemble_rigidity_matrix, InformationMatrix};
use crate::tolerances::{Tolerances, STAR_CONSISTENCY_REL};
use nalgebra::{DMatrix, Matrix3, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;

/// A configuration together with its sensing graph.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Configuration,
    pub graph: NetworkGraph,
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            edges.push((a, b));
        }
    }
    edges
}

/// Eight nodes on a cube of side 40, fully connected, with four
/// non-coplanar anchors. Localizable but not infinitesimally rigid: the
/// constraints admit one motion beyond the similarities, yet every such
/// motion displaces an anchor.
pub fn cube_scenario() -> Scenario {
    let positions = vec![
        Vec3::new(20.0, -20.0, -20.0),
        Vec3::new(20.0, 20.0, -20.0),
        Vec3::new(-20.0, 20.0, -20.0),
        Vec3::new(20.0, 20.0, 20.0),
        Vec3::new(-20.0, -20.0, -20.0),
        Vec3::new(20.0, -20.0, 20.0),
        Vec3::new(-20.0, 20.0, 20.0),
        Vec3::new(-20.0, -20.0, 20.0),
    ];
    let config = Configuration::new(Dim::Three, positions, 4).unwrap();
    let graph = NetworkGraph::new(8, 4, &complete_edges(8)).unwrap();
    Scenario { config, graph }
}

/// Six planar nodes with three anchors forming a right triangle and a
/// sparse sensing graph. The smallest localizable running example.
pub fn planar_six_node_scenario() -> Scenario {
    let positions = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(3.0, 0.0, 0.0),
        Vec3::new(2.0, 1.0, 0.0),
        Vec3::new(3.0, 0.5, 0.0),
        Vec3::new(4.0, 0.1, 0.0),
        Vec3::new(3.8, 0.28, 0.0),
    ];
    let edges = [
        (0, 1),
        (0, 2),
        (1, 2),
        (0, 3),
        (1, 3),
        (2, 3),
        (0, 4),
        (1, 4),
        (3, 4),
        (1, 5),
        (3, 5),
        (4, 5),
    ];
    let config = Configuration::new(Dim::Two, positions, 3).unwrap();
    let graph = NetworkGraph::new(6, 3, &edges).unwrap();
    Scenario { config, graph }
}

/// Four anchors in a common plane with two free nodes off it. Reflecting
/// the free nodes through the anchor plane satisfies every constraint, so
/// the network is not localizable no matter how dense the graph.
pub fn coplanar_anchor_scenario() -> Scenario {
    let positions = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(4.0, 0.0, 0.0),
        Vec3::new(0.0, 4.0, 0.0),
        Vec3::new(4.0, 4.0, 0.0),
        Vec3::new(1.0, 1.0, 2.0),
        Vec3::new(3.0, 2.0, 3.0),
    ];
    let mut edges = complete_edges(4);
    for free in 4..6 {
        for anchor in 0..4 {
            edges.push((anchor, free));
        }
    }
    edges.push((4, 5));
    let config = Configuration::new(Dim::Three, positions, 4).unwrap();
    let graph = NetworkGraph::new(6, 4, &edges).unwrap();
    Scenario { config, graph }
}

/// Three colinear anchors in the plane, the planar analogue of the coplanar
/// failure: the free nodes reflect across the anchor line.
pub fn colinear_anchor_scenario() -> Scenario {
    let positions = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(2.0, 0.0, 0.0),
        Vec3::new(5.0, 0.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(3.0, 2.0, 0.0),
    ];
    let config = Configuration::new(Dim::Two, positions, 3).unwrap();
    let graph = NetworkGraph::new(5, 3, &complete_edges(5)).unwrap();
    Scenario { config, graph }
}

/// Uniform point in the [-10, 10] cube.
pub fn random_point<R: Rng>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    )
}

fn random_point_dim<R: Rng>(dim: Dim, rng: &mut R) -> Vec3 {
    let mut p = random_point(rng);
    if dim == Dim::Two {
        p.z = 0.0;
    }
    p
}

/// Independent rotation per node: Haar-uniform in three dimensions, a
/// uniform in-plane rotation in two.
pub fn random_frames<R: Rng>(n: usize, dim: Dim, rng: &mut R) -> LocalFrameAssignment {
    let mut rotations = Vec::with_capacity(n);
    for _ in 0..n {
        let r = match dim {
            Dim::Three => {
                let q = Quaternion::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
            }
            Dim::Two => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Matrix3::new(
                    a.cos(),
                    -a.sin(),
                    0.0,
                    a.sin(),
                    a.cos(),
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                )
            }
        };
        rotations.push(r);
    }
    LocalFrameAssignment::new(rotations, dim).expect("generated rotations are valid")
}

/// Random direct similarity with scale in [1/2, 2].
pub fn random_similarity<R: Rng>(dim: Dim, rng: &mut R) -> SimilarityTransform {
    let s = rng.random_range(0.5..2.0);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    match dim {
        Dim::Two => SimilarityTransform::planar(
            s,
            angle,
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        )
        .expect("valid planar similarity"),
        Dim::Three => {
            let axis = loop {
                let v = Vec3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                if v.norm() > 1e-3 {
                    break v;
                }
            };
            SimilarityTransform::spatial(s, axis, angle, random_point(rng))
                .expect("valid spatial similarity")
        }
    }
}

/// Smallest-over-largest singular value of the center-to-neighbor edge
/// matrix, the conditioning that every star construction depends on.
fn star_conditioning(center: Vec3, neighbors: &[Vec3], dim: Dim) -> f64 {
    let d = dim.as_usize();
    let mut m = DMatrix::zeros(d, neighbors.len());
    for (j, p) in neighbors.iter().enumerate() {
        let e = p - center;
        for c in 0..d {
            m[(c, j)] = e[c];
        }
    }
    let sv = crate::linalg::singular_values(&m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// Worst-case triangulation quality of a star: the best reference neighbor's
/// smallest sine of the angle subtended at the other neighbors.
fn triangulation_quality(center: Vec3, neighbors: &[Vec3]) -> f64 {
    let mut best = 0.0_f64;
    for (r, &p_r) in neighbors.iter().enumerate() {
        let mut worst = f64::INFINITY;
        for (b, &p_b) in neighbors.iter().enumerate() {
            if b == r {
                continue;
            }
            let u = center - p_b;
            let v = p_r - p_b;
            let denom = u.norm() * v.norm();
            if denom == 0.0 {
                worst = 0.0;
                break;
            }
            worst = worst.min(u.cross(&v).norm() / denom);
        }
        best = best.max(worst);
    }
    best
}

/// Center with `k` neighbors whose geometry is kept well away from every
/// degeneracy: no near-collocations, a well-conditioned edge matrix, and
/// usable triangulation angles.
pub fn random_star<R: Rng>(dim: Dim, k: usize, rng: &mut R) -> (Vec3, Vec<Vec3>) {
    loop {
        let center = random_point_dim(dim, rng);
        let neighbors: Vec<Vec3> = (0..k)
            .map(|_| center + 0.8 * random_point_dim(dim, rng))
            .collect();
        let mut nodes = vec![center];
        nodes.extend(&neighbors);
        let mut separated = true;
        'pairs: for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                if (nodes[a] - nodes[b]).norm() < 0.5 {
                    separated = false;
                    break 'pairs;
                }
            }
        }
        if separated
            && star_conditioning(center, &neighbors, dim) >= 1e-2
            && triangulation_quality(center, &neighbors) >= 1e-2
        {
            return (center, neighbors);
        }
    }
}

/// Builds constraints straight from known positions by synthesizing
/// relative-position measurements in a shared frame.
pub fn constraints_from_positions(
    config: &Configuration,
    graph: &NetworkGraph,
) -> Result<ConstraintSet> {
    let ms = synthesize_measurements(
        config,
        graph,
        &LocalFrameAssignment::identity(config.n()),
        Modality::LocalPosition,
    )?;
    build_constraint_set(graph, config.anchor_positions(), &ms, STAR_CONSISTENCY_REL)
}

/// Synthesizes a measurement set for a scenario under random local frames.
pub fn scenario_measurements<R: Rng>(
    scenario: &Scenario,
    modality: Modality,
    rng: &mut R,
) -> Result<MeasurementSet> {
    let frames = random_frames(scenario.config.n(), scenario.config.dim(), rng);
    synthesize_measurements(&scenario.config, &scenario.graph, &frames, modality)
}

/// Random localizable network: a well-spread anchor clique plus free nodes
/// that each attach to `dim + 1` earlier nodes through a well-conditioned
/// star. Regenerates until the assembled network passes the localizability
/// analysis, so callers can rely on a definite free-free block.
pub fn random_localizable_scenario<R: Rng>(dim: Dim, n: usize, rng: &mut R) -> Scenario {
    let n_anchors = dim.as_usize() + 1;
    assert!(n > n_anchors, "need at least one free node");
    'outer: for _ in 0..60 {
        // anchors: pairwise separated with solid span
        let anchors: Vec<Vec3> = loop {
            let candidate: Vec<Vec3> =
                (0..n_anchors).map(|_| random_point_dim(dim, rng)).collect();
            let mut ok = true;
            for a in 0..n_anchors {
                for b in (a + 1)..n_anchors {
                    if (candidate[a] - candidate[b]).norm() < 1.0 {
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            let spread = match dim {
                Dim::Two => (candidate[1] - candidate[0])
                    .cross(&(candidate[2] - candidate[0]))
                    .norm(),
                Dim::Three => (candidate[1] - candidate[0])
                    .cross(&(candidate[2] - candidate[0]))
                    .dot(&(candidate[3] - candidate[0]))
                    .abs(),
            };
            let floor = match dim {
                Dim::Two => 5.0,
                Dim::Three => 20.0,
            };
            if spread > floor {
                break candidate;
            }
        };
        let mut positions = anchors;
        let mut edges = complete_edges(n_anchors);
        for i in n_anchors..n {
            let picks = rand::seq::index::sample(rng, i, dim.as_usize() + 1).into_vec();
            let targets: Vec<Vec3> = picks.iter().map(|&t| positions[t]).collect();
            let mut placed = false;
            for _ in 0..200 {
                let p = random_point_dim(dim, rng);
                let separated = positions.iter().all(|q| (p - q).norm() >= 0.5);
                if !separated || star_conditioning(p, &targets, dim) < 1e-2 {
                    continue;
                }
                let edge_vectors: Vec<Vec3> = targets.iter().map(|t| t - p).collect();
                match crate::star::mu_from_local_positions(&edge_vectors, dim) {
                    Ok(mu) if mu.iter().sum::<f64>().abs() >= 1e-3 => {}
                    _ => continue,
                }
                positions.push(p);
                for &t in &picks {
                    edges.push((t, i));
                }
                placed = true;
                break;
            }
            if !placed {
                continue 'outer;
            }
        }
        let config = match Configuration::new(dim, positions, n_anchors) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let graph = NetworkGraph::new(n, n_anchors, &edges).expect("edges are in range");
        let Ok(cs) = constraints_from_positions(&config, &graph) else {
            continue;
        };
        let Ok(rm) = assemble_rigidity_matrix(&cs) else {
            continue;
        };
        match crate::rigidity::nullity_report(&rm, &config, &Tolerances::default()) {
            Ok(report) if report.is_localizable => {
                return Scenario { config, graph };
            }
            _ => continue,
        }
    }
    panic!("random scenario generation failed to converge");
}

/// Random block perturbation with prescribed spectral norms; the free-free
/// part stays symmetric like a perturbation assembled from real noise.
pub fn random_perturbation<R: Rng>(
    info: &InformationMatrix,
    ff_norm: f64,
    fa_norm: f64,
    rng: &mut R,
) -> NoisePerturbation {
    let nf = 3 * (info.n - info.n_anchors);
    let na = 3 * info.n_anchors;
    let scaled = |mut m: DMatrix<f64>, target: f64| -> DMatrix<f64> {
        let norm = crate::linalg::spectral_norm(&m);
        if norm > 0.0 && target > 0.0 {
            m *= target / norm;
            m
        } else {
            DMatrix::zeros(m.nrows(), m.ncols())
        }
    };
    let g_ff = DMatrix::from_fn(nf, nf, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sym = 0.5 * (&g_ff + g_ff.transpose());
    let delta_ff = scaled(sym, ff_norm);
    let g_fa = DMatrix::from_fn(nf, na, |_, _| rng.sample::<f64, _>(StandardNormal));
    let delta_fa = scaled(g_fa, fa_norm);
    NoisePerturbation {
        delta_ff,
        delta_fa,
        source: PerturbationSource::MatrixInjection,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixtures_are_well_formed() {
        for s in [
            cube_scenario(),
            planar_six_node_scenario(),
            coplanar_anchor_scenario(),
            colinear_anchor_scenario(),
        ] {
            assert_eq!(s.config.n(), s.graph.n());
            assert_eq!(s.config.n_anchors(), s.graph.n_anchors());
            constraints_from_positions(&s.config, &s.graph).unwrap();
        }
    }

    #[test]
    fn random_scenarios_are_localizable_and_deterministic() {
        for dim in [Dim::Two, Dim::Three] {
            let a = random_localizable_scenario(dim, 8, &mut ChaCha8Rng::seed_from_u64(99));
            let b = random_localizable_scenario(dim, 8, &mut ChaCha8Rng::seed_from_u64(99));
            assert_eq!(a.config.positions(), b.config.positions());
            let cs = constraints_from_positions(&a.config, &a.graph).unwrap();
            let rm = assemble_rigidity_matrix(&cs).unwrap();
            let report =
                crate::rigidity::nullity_report(&rm, &a.config, &Tolerances::default()).unwrap();
            assert!(report.is_localizable);
        }
    }

    #[test]
    fn random_frames_are_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for dim in [Dim::Two, Dim::Three] {
            let frames = random_frames(5, dim, &mut rng);
            for i in 0..5 {
                let r = frames.rotation(i);
                assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
                assert!((r.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perturbation_norms_are_exact() {
        let scenario = cube_scenario();
        let cs = constraints_from_positions(&scenario.config, &scenario.graph).unwrap();
        let info = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&cs).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pert = random_perturbation(&info, 2.0, 0.7, &mut rng);
        assert!((crate::linalg::spectral_norm(&pert.delta_ff) - 2.0).abs() < 1e-10);
        assert!((crate::linalg::spectral_norm(&pert.delta_fa) - 0.7).abs() < 1e-10);
        assert!((&pert.delta_ff - pert.delta_ff.transpose()).norm() < 1e-12);
    }
}
