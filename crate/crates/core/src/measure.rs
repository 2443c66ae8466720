//! Measurement synthesis: what each sensor would observe, expressed in its
//! own local frame so that no global-frame information leaks to free nodes.
//!
//! Distances, angle cosines, and distance ratios are frame-independent
//! scalars. Local relative positions and bearings are 3-vectors rotated into
//! the observer's frame by the transpose of its (unknown to the algorithms,
//! known to the synthesizer) frame rotation.

use crate::error::{Error, Result};
use crate::geom::{relative_quantities, Configuration, Dim, NetworkGraph, Vec3};
use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// The five supported sensing modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// Relative positions of neighbors in the observer's frame.
    LocalPosition,
    /// Inter-node distances, one scalar per edge.
    Distance,
    /// Unit directions to neighbors in the observer's frame.
    LocalBearing,
    /// Cosines of angles subtended at the observer by neighbor pairs.
    Angle,
    /// Ratios of distances to neighbor pairs, measured at the observer.
    RatioOfDistance,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::LocalPosition,
        Modality::Distance,
        Modality::LocalBearing,
        Modality::Angle,
        Modality::RatioOfDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::LocalPosition => "local_position",
            Modality::Distance => "distance",
            Modality::LocalBearing => "local_bearing",
            Modality::Angle => "angle",
            Modality::RatioOfDistance => "ratio_of_distance",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        Modality::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Per-node frame rotations used only by the synthesizer. Constraint
/// builders never see these; the whole point of the constructions is that
/// they work without them.
#[derive(Debug, Clone)]
pub struct LocalFrameAssignment {
    rotations: Vec<Matrix3<f64>>,
}

const FRAME_ORTHO_TOL: f64 = 1e-9;

impl LocalFrameAssignment {
    /// Validates each rotation as special orthogonal; planar scenarios
    /// additionally require plane-preserving rotations.
    pub fn new(rotations: Vec<Matrix3<f64>>, dim: Dim) -> Result<Self> {
        for (i, q) in rotations.iter().enumerate() {
            let defect = (q.transpose() * q - Matrix3::identity()).norm();
            if defect > FRAME_ORTHO_TOL || (q.determinant() - 1.0).abs() > FRAME_ORTHO_TOL {
                return Err(Error::InvalidInput {
                    reason: format!("frame of node {i} is not a proper rotation"),
                });
            }
            if dim == Dim::Two
                && (q.m13.abs() > FRAME_ORTHO_TOL
                    || q.m23.abs() > FRAME_ORTHO_TOL
                    || q.m31.abs() > FRAME_ORTHO_TOL
                    || q.m32.abs() > FRAME_ORTHO_TOL)
            {
                return Err(Error::InvalidInput {
                    reason: format!("frame of node {i} does not preserve the plane"),
                });
            }
        }
        Ok(Self { rotations })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rotations: vec![Matrix3::identity(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotation(&self, i: usize) -> &Matrix3<f64> {
        &self.rotations[i]
    }
}

/// Observations for one modality over a whole network.
///
/// Only the container matching the modality is populated:
/// `local_vectors[i][j]` holds positions or bearings of neighbor `j` seen
/// from `i`; `edge_scalars[(i, j)]` (with `i < j`) holds distances;
/// `pair_scalars[i][(j, k)]` (with `j < k`) holds the angle cosine at `i`
/// between neighbors `j` and `k`, or the distance ratio `d_ij / d_ik`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub modality: Modality,
    pub dim: Dim,
    pub local_vectors: Vec<BTreeMap<usize, Vec3>>,
    pub edge_scalars: BTreeMap<(usize, usize), f64>,
    pub pair_scalars: Vec<BTreeMap<(usize, usize), f64>>,
}

impl MeasurementSet {
    fn empty(modality: Modality, dim: Dim, n: usize) -> Self {
        Self {
            modality,
            dim,
            local_vectors: vec![BTreeMap::new(); n],
            edge_scalars: BTreeMap::new(),
            pair_scalars: vec![BTreeMap::new(); n],
        }
    }
}

/// Synthesizes the observations every sensor would report on the true
/// configuration, through the given local frames.
pub fn synthesize_measurements(
    config: &Configuration,
    graph: &NetworkGraph,
    frames: &LocalFrameAssignment,
    modality: Modality,
) -> Result<MeasurementSet> {
    if graph.n() != config.n() {
        return Err(Error::DimensionMismatch {
            expected: config.n(),
            found: graph.n(),
            context: "graph node count vs configuration",
        });
    }
    if frames.n() != config.n() {
        return Err(Error::DimensionMismatch {
            expected: config.n(),
            found: frames.n(),
            context: "frame count vs configuration",
        });
    }
    let mut ms = MeasurementSet::empty(modality, config.dim(), config.n());
    match modality {
        Modality::LocalPosition | Modality::LocalBearing => {
            for i in 0..config.n() {
                let q_t = frames.rotation(i).transpose();
                for &j in graph.neighbors(i) {
                    let (e, g, _) = relative_quantities(config, i, j)?;
                    let v = if modality == Modality::LocalPosition {
                        q_t * e
                    } else {
                        q_t * g
                    };
                    ms.local_vectors[i].insert(j, v);
                }
            }
        }
        Modality::Distance => {
            for (i, j) in graph.edges() {
                let (_, _, d) = relative_quantities(config, i, j)?;
                ms.edge_scalars.insert((i, j), d);
            }
        }
        Modality::Angle | Modality::RatioOfDistance => {
            for i in 0..config.n() {
                let nbrs: Vec<usize> = graph.neighbors(i).iter().copied().collect();
                for a in 0..nbrs.len() {
                    for b in (a + 1)..nbrs.len() {
                        let (j, k) = (nbrs[a], nbrs[b]);
                        let (_, gj, dj) = relative_quantities(config, i, j)?;
                        let (_, gk, dk) = relative_quantities(config, i, k)?;
                        let value = if modality == Modality::Angle {
                            gj.dot(&gk)
                        } else {
                            dj / dk
                        };
                        ms.pair_scalars[i].insert((j, k), value);
                    }
                }
            }
        }
    }
    Ok(ms)
}

/// Adds seeded sensor noise with per-modality semantics: additive Gaussian
/// on local positions, distances (clamped positive), bearings
/// (re-normalized), and angle cosines (clamped to [-1, 1]); multiplicative
/// log-normal on ratios. Planar scenarios receive in-plane noise only.
pub fn apply_noise<R: Rng>(ms: &MeasurementSet, sigma: f64, rng: &mut R) -> MeasurementSet {
    let mut noisy = ms.clone();
    if sigma == 0.0 {
        return noisy;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and nonnegative");
    let noise_vec = |rng: &mut R| match ms.dim {
        Dim::Two => Vec3::new(normal.sample(rng), normal.sample(rng), 0.0),
        Dim::Three => Vec3::new(
            normal.sample(rng),
            normal.sample(rng),
            normal.sample(rng),
        ),
    };
    match ms.modality {
        Modality::LocalPosition => {
            for per_node in noisy.local_vectors.iter_mut() {
                for v in per_node.values_mut() {
                    *v += noise_vec(rng);
                }
            }
        }
        Modality::LocalBearing => {
            for per_node in noisy.local_vectors.iter_mut() {
                for v in per_node.values_mut() {
                    let perturbed = *v + noise_vec(rng);
                    let n = perturbed.norm();
                    // an exactly reversed bearing has measure zero; keep the
                    // original direction if the perturbation annihilates it
                    *v = if n > 0.0 { perturbed / n } else { *v };
                }
            }
        }
        Modality::Distance => {
            for d in noisy.edge_scalars.values_mut() {
                let floor = 1e-9 * *d;
                *d = (*d + normal.sample(rng)).max(floor);
            }
        }
        Modality::Angle => {
            for per_node in noisy.pair_scalars.iter_mut() {
                for c in per_node.values_mut() {
                    *c = (*c + normal.sample(rng)).clamp(-1.0, 1.0);
                }
            }
        }
        Modality::RatioOfDistance => {
            for per_node in noisy.pair_scalars.iter_mut() {
                for r in per_node.values_mut() {
                    *r *= normal.sample(rng).exp();
                }
            }
        }
    }
    noisy
}
