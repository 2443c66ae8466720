//! Rigidity analysis and distributed localization for sensor networks whose
//! measurements determine shape only up to translation, rotation, and
//! scale.
//!
//! The pipeline: per-node measurements (relative positions, distances,
//! bearings, angles, or distance ratios) are reduced to similarity-invariant
//! linear constraints, the stacked constraint gradients decide whether the
//! anchors pin down every free node, and the free positions then come out
//! of a single linear solve or an equivalent message-passing protocol.

pub mod constraints;
pub mod error;
pub mod geom;
pub mod linalg;
pub mod localize;
pub mod measure;
pub mod protocol;
pub mod rigidity;
pub mod star;
pub mod synthetic;
pub mod tolerances;

pub use constraints::{
    build_constraint_set, design_angle_params, enumerate_angle_triples,
    enumerate_displacement_tuples, AngleConstraint, ConstraintSet, DisplacementConstraint,
};
pub use error::{Error, Result};
pub use geom::{
    apply_similarity, Configuration, Dim, NetworkGraph, SimilarityTransform, Vec3,
};
pub use localize::{
    direct_localize, error_bound, noise_nonsingularity_check, perturb_from_measurement_noise,
    solve_perturbed, NoisePerturbation, PerturbationSource,
};
pub use measure::{
    apply_noise, synthesize_measurements, LocalFrameAssignment, MeasurementSet, Modality,
};
pub use protocol::{
    exponential_rate_estimate, matrix_flow_step, run_protocol, InitStrategy, ProtocolConfig,
    StopReason, Trajectory,
};
pub use rigidity::{
    assemble_rigidity_matrix, check_congruence, nullity_report, trivial_motion_basis,
    InformationMatrix, RigidityMatrix, RigidityReport, RowTag,
};
pub use star::{extract_star, mu_from_star, StarData};
pub use tolerances::Tolerances;
