//! Geometric primitives: configurations, graphs, and similarity transforms.
//!
//! All positions are stored as 3-vectors. Planar scenarios keep z = 0 and
//! record their dimension in [`Dim`], so the same matrix machinery serves
//! both cases (planar null motions out of the plane stay representable).
//! Node ordering is anchors-first throughout: indices `0..n_anchors` are
//! anchors, the rest are free nodes. Every matrix partition in the crate
//! relies on that ordering.

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;
use nalgebra::{DVector, Matrix3, Vector3};
use std::collections::BTreeSet;

pub type Vec3 = Vector3<f64>;

/// Scenario dimension. Planar scenarios are analyzed inside the spatial
/// embedding, but measurements and star reconstructions respect the native
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Minimum neighbor count for a free node's displacement constraint.
    pub fn min_star_neighbors(self) -> usize {
        self.as_usize() + 1
    }
}

/// Node positions in the global frame, anchors first.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: Dim,
    n_anchors: usize,
    positions: Vec<Vec3>,
    diameter: f64,
}

impl Configuration {
    /// Validates finiteness, the planar invariant (z = 0 for [`Dim::Two`]),
    /// anchor count, and pairwise separation above the collocation tolerance.
    pub fn new(dim: Dim, positions: Vec<Vec3>, n_anchors: usize) -> Result<Self> {
        Self::with_tolerances(dim, positions, n_anchors, &Tolerances::default())
    }

    pub fn with_tolerances(
        dim: Dim,
        positions: Vec<Vec3>,
        n_anchors: usize,
        tol: &Tolerances,
    ) -> Result<Self> {
        if n_anchors == 0 || n_anchors > positions.len() {
            return Err(Error::InvalidInput {
                reason: format!(
                    "need 1 <= n_anchors <= n, got n_anchors = {} with n = {}",
                    n_anchors,
                    positions.len()
                ),
            });
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput {
                    reason: format!("position of node {i} has a non-finite coordinate"),
                });
            }
            if dim == Dim::Two && p.z != 0.0 {
                return Err(Error::InvalidInput {
                    reason: format!("planar scenario but node {i} has z = {}", p.z),
                });
            }
        }
        let mut diameter: f64 = 0.0;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                diameter = diameter.max((positions[j] - positions[i]).norm());
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let d = (positions[j] - positions[i]).norm();
                if d <= tol.collocation_rel * diameter {
                    return Err(Error::Collocation { i, j, distance: d });
                }
            }
        }
        Ok(Self {
            dim,
            n_anchors,
            positions,
            diameter,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn n_free(&self) -> usize {
        self.positions.len() - self.n_anchors
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.positions[i]
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn anchor_positions(&self) -> &[Vec3] {
        &self.positions[..self.n_anchors]
    }

    pub fn free_positions(&self) -> &[Vec3] {
        &self.positions[self.n_anchors..]
    }

    /// Largest inter-node distance, the scale for relative tolerances.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// All positions stacked into a single 3n-vector, node-major.
    pub fn stacked(&self) -> DVector<f64> {
        stack_positions(&self.positions)
    }
}

/// Stacks positions node-major into a 3n-vector.
pub fn stack_positions(positions: &[Vec3]) -> DVector<f64> {
    let mut v = DVector::zeros(3 * positions.len());
    for (i, p) in positions.iter().enumerate() {
        v.fixed_rows_mut::<3>(3 * i).copy_from(p);
    }
    v
}

/// Splits a 3n-vector back into per-node positions.
pub fn unstack_positions(v: &DVector<f64>) -> Vec<Vec3> {
    assert_eq!(v.len() % 3, 0, "stacked vector length must be divisible by 3");
    (0..v.len() / 3)
        .map(|i| Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]))
        .collect()
}

/// Relative position, unit bearing, and distance from node `i` to node `j`.
pub fn relative_quantities(config: &Configuration, i: usize, j: usize) -> Result<(Vec3, Vec3, f64)> {
    if i == j {
        return Err(Error::InvalidInput {
            reason: format!("relative quantities need two distinct nodes, got {i} twice"),
        });
    }
    let e = config.position(j) - config.position(i);
    let d = e.norm();
    if d <= Tolerances::default().collocation_rel * config.diameter() {
        return Err(Error::Collocation { i, j, distance: d });
    }
    Ok((e, e / d, d))
}

/// An undirected simple graph over anchors-first node indices.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    n: usize,
    n_anchors: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<BTreeSet<usize>>,
}

impl NetworkGraph {
    /// Edges may arrive in either orientation; duplicates collapse. Self
    /// loops and out-of-range endpoints are rejected.
    pub fn new(n: usize, n_anchors: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if n_anchors == 0 || n_anchors > n {
            return Err(Error::InvalidInput {
                reason: format!("need 1 <= n_anchors <= n, got n_anchors = {n_anchors}, n = {n}"),
            });
        }
        let mut edges = BTreeSet::new();
        let mut neighbors = vec![BTreeSet::new(); n];
        for &(a, b) in edge_list {
            if a == b {
                return Err(Error::InvalidInput {
                    reason: format!("self loop at node {a}"),
                });
            }
            if a >= n || b >= n {
                return Err(Error::InvalidInput {
                    reason: format!("edge ({a}, {b}) references a node outside 0..{n}"),
                });
            }
            edges.insert((a.min(b), a.max(b)));
            neighbors[a].insert(b);
            neighbors[b].insert(a);
        }
        Ok(Self {
            n,
            n_anchors,
            edges,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn is_anchor(&self, i: usize) -> bool {
        i < self.n_anchors
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    /// Normalized (small, large) pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// A direct similarity: scaling by `s`, proper rotation `q`, translation `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    s: f64,
    q: Matrix3<f64>,
    t: Vec3,
}

const ORTHOGONALITY_TOL: f64 = 1e-9;

impl SimilarityTransform {
    /// Validates that `q` is special orthogonal and `s` nonzero.
    pub fn new(s: f64, q: Matrix3<f64>, t: Vec3) -> Result<Self> {
        if s == 0.0 || !s.is_finite() {
            return Err(Error::InvalidInput {
                reason: format!("similarity scale must be finite and nonzero, got {s}"),
            });
        }
        let defect = (q.transpose() * q - Matrix3::identity()).norm();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::InvalidInput {
                reason: format!("rotation is not orthogonal (defect {defect:.3e})"),
            });
        }
        let det = q.determinant();
        if (det - 1.0).abs() > ORTHOGONALITY_TOL {
            return Err(Error::InvalidInput {
                reason: format!("rotation must have determinant +1, got {det}"),
            });
        }
        Ok(Self { s, q, t })
    }

    pub fn identity() -> Self {
        Self {
            s: 1.0,
            q: Matrix3::identity(),
            t: Vec3::zeros(),
        }
    }

    /// A planar similarity: rotation about the z axis, translation in the
    /// plane. Safe on both planar and spatial configurations.
    pub fn planar(s: f64, angle: f64, tx: f64, ty: f64) -> Result<Self> {
        let (sin, cos) = angle.sin_cos();
        let q = Matrix3::new(cos, -sin, 0.0, sin, cos, 0.0, 0.0, 0.0, 1.0);
        Self::new(s, q, Vec3::new(tx, ty, 0.0))
    }

    /// A spatial similarity with rotation about `axis` by `angle`.
    pub fn spatial(s: f64, axis: Vec3, angle: f64, t: Vec3) -> Result<Self> {
        let norm = axis.norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput {
                reason: "rotation axis must be nonzero".to_string(),
            });
        }
        let q = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        );
        Self::new(s, q.into_inner(), t)
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.q
    }

    pub fn translation(&self) -> Vec3 {
        self.t
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.s * self.q * p + self.t
    }

    /// Whether the transform maps the z = 0 plane to itself, which a planar
    /// configuration requires to stay planar.
    pub fn preserves_plane(&self) -> bool {
        self.q.m13.abs() <= ORTHOGONALITY_TOL
            && self.q.m23.abs() <= ORTHOGONALITY_TOL
            && self.q.m31.abs() <= ORTHOGONALITY_TOL
            && self.q.m32.abs() <= ORTHOGONALITY_TOL
            && self.t.z.abs() <= ORTHOGONALITY_TOL
    }
}

/// Maps every position through the similarity. Planar configurations demand
/// a plane-preserving transform so the result stays planar.
pub fn apply_similarity(config: &Configuration, t: &SimilarityTransform) -> Result<Configuration> {
    if config.dim() == Dim::Two && !t.preserves_plane() {
        return Err(Error::InvalidInput {
            reason: "similarity does not preserve the plane of a planar configuration".to_string(),
        });
    }
    let mapped: Vec<Vec3> = config
        .positions()
        .iter()
        .map(|&p| {
            let mut q = t.apply_point(p);
            if config.dim() == Dim::Two {
                // kill rounding residue so the planar invariant holds exactly
                q.z = 0.0;
            }
            q
        })
        .collect();
    Configuration::new(config.dim(), mapped, config.n_anchors())
}
