//! Distributed localization: every free node repeatedly nudges its estimate
//! using only the estimates of nodes it shares a constraint with, and the
//! network as a whole performs explicit Euler on the quadratic constraint
//! energy. Stacked over free nodes, one synchronous round is exactly
//!
//!   x <- x + h (-D_ff x - D_fa p_a)
//!
//! so the iteration contracts at rate close to the smallest eigenvalue of
//! the free-free block when the step stays below 2 over the largest.

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::geom::{stack_positions, Dim, Vec3};
use crate::linalg::symmetric_eigen_extremes;
use crate::rigidity::{assemble_rigidity_matrix, InformationMatrix};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Rounds a divergence must persist before the run is abandoned.
const DIVERGENCE_PATIENCE: usize = 100;
/// Growth factor over the initial metric that counts as diverging.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Draw initial free estimates uniformly from the anchor bounding box
    /// scaled by two about its center.
    Seed(u64),
    /// Start from the given free-node estimates.
    Estimates(Vec<Vec3>),
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    /// Step size; half the inverse of the largest free-free eigenvalue when
    /// absent.
    pub step: Option<f64>,
    pub max_rounds: usize,
    /// Convergence threshold on the worst node error (when truth is known)
    /// or on the worst per-round movement (when it is not).
    pub tol: f64,
    pub init: InitStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    ErrorBelowTol,
    IncrementBelowTol,
    MaxRounds,
}

/// Round-by-round record of one protocol run. Estimates hold the free nodes
/// only, starting with the initial state, one entry per completed round.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub step: f64,
    pub rounds: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub estimates: Vec<Vec<Vec3>>,
    /// Worst single-node distance to truth per recorded state; empty without
    /// truth.
    pub max_errors: Vec<f64>,
    /// Stacked Euclidean distance to truth per recorded state; empty without
    /// truth.
    pub total_errors: Vec<f64>,
    /// Worst single-node movement per round.
    pub max_increments: Vec<f64>,
}

/// One synchronous round in stacked form, for cross-checking the per-node
/// protocol against the matrix iteration it implements.
pub fn matrix_flow_step(
    estimate: &DVector<f64>,
    info: &InformationMatrix,
    anchors: &[Vec3],
    step: f64,
) -> DVector<f64> {
    let p_a = stack_positions(anchors);
    estimate + step * (-info.d_ff() * estimate - info.d_fa() * p_a)
}

/// The update a single node computes from its mailbox: for every constraint
/// it belongs to, the constraint residual weighted by the node's own
/// coefficient (the sum of all coefficients when the node is the center).
/// Reads nothing but the mailbox; a missing co-member estimate is a
/// scheduling fault.
pub fn node_increment(
    cs: &ConstraintSet,
    node: usize,
    mailbox: &BTreeMap<usize, Vec3>,
) -> Result<Vec3> {
    let mut inc = Vec3::zeros();
    for c in &cs.displacement {
        let as_center = c.center == node;
        if !as_center && !c.neighbors.contains(&node) {
            continue;
        }
        let p_c = *mailbox.get(&c.center).ok_or(Error::StaleMailbox {
            node,
            missing: c.center,
        })?;
        let mut residual = Vec3::zeros();
        for (t, &nbr) in c.neighbors.iter().enumerate() {
            let p_t = *mailbox.get(&nbr).ok_or(Error::StaleMailbox {
                node,
                missing: nbr,
            })?;
            residual += c.mu[t] * (p_t - p_c);
        }
        if as_center {
            inc += c.mu.iter().sum::<f64>() * residual;
        } else {
            for (t, &nbr) in c.neighbors.iter().enumerate() {
                if nbr == node {
                    inc -= c.mu[t] * residual;
                }
            }
        }
    }
    Ok(inc)
}

/// Nodes whose estimates `node` is entitled to read: members of any
/// constraint it belongs to.
pub fn co_members(cs: &ConstraintSet, node: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for c in &cs.displacement {
        if c.center == node || c.neighbors.contains(&node) {
            set.insert(c.center);
            set.extend(c.neighbors.iter().copied());
        }
    }
    set.remove(&node);
    set
}

fn initial_estimates(cs: &ConstraintSet, init: &InitStrategy) -> Result<Vec<Vec3>> {
    let n_free = cs.n - cs.n_anchors;
    match init {
        InitStrategy::Estimates(e) => {
            if e.len() != n_free {
                return Err(Error::DimensionMismatch {
                    expected: n_free,
                    found: e.len(),
                    context: "initial estimates",
                });
            }
            Ok(e.clone())
        }
        InitStrategy::Seed(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut lo = Vec3::from_element(f64::INFINITY);
            let mut hi = Vec3::from_element(f64::NEG_INFINITY);
            for p in &cs.anchor_positions {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let center = 0.5 * (lo + hi);
            let half = hi - center;
            let mut estimates = Vec::with_capacity(n_free);
            for _ in 0..n_free {
                let mut p = Vec3::zeros();
                for coord in 0..3 {
                    let e = 2.0 * half[coord];
                    p[coord] = if e > 0.0 {
                        center[coord] + rng.random_range(-e..e)
                    } else {
                        center[coord]
                    };
                }
                if cs.dim == Dim::Two {
                    p.z = 0.0;
                }
                estimates.push(p);
            }
            Ok(estimates)
        }
    }
}

/// Runs the synchronous protocol. Each round delivers every node's current
/// estimate to the mailboxes of its co-members, then every free node applies
/// its increment simultaneously. With `truth` the run stops when the worst
/// node error drops below `tol`; otherwise when the worst movement does.
/// A metric that stays above ten times its initial value for a hundred
/// consecutive rounds aborts the run with a step suggestion that restores
/// contraction.
pub fn run_protocol(
    cs: &ConstraintSet,
    truth: Option<&[Vec3]>,
    cfg: &ProtocolConfig,
) -> Result<Trajectory> {
    let n_free = cs.n - cs.n_anchors;
    if let Some(t) = truth {
        if t.len() != n_free {
            return Err(Error::DimensionMismatch {
                expected: n_free,
                found: t.len(),
                context: "truth positions",
            });
        }
    }
    let info = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(cs)?);
    let d_ff = info.d_ff();
    let (_, lambda_max) = if d_ff.nrows() > 0 {
        symmetric_eigen_extremes(&d_ff)
    } else {
        (0.0, 0.0)
    };
    let contraction_step = if lambda_max > 0.0 {
        1.0 / (2.0 * lambda_max)
    } else {
        1.0
    };
    let step = cfg.step.unwrap_or(contraction_step);
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput {
            reason: format!("step must be positive and finite, got {step}"),
        });
    }

    let membership: Vec<BTreeSet<usize>> = (0..cs.n).map(|i| co_members(cs, i)).collect();
    let mut estimates = initial_estimates(cs, &cfg.init)?;
    let node_estimate = |estimates: &[Vec3], id: usize| -> Vec3 {
        if id < cs.n_anchors {
            cs.anchor_positions[id]
        } else {
            estimates[id - cs.n_anchors]
        }
    };

    let metric = |estimates: &[Vec3], moved: Option<f64>| -> (f64, f64) {
        match truth {
            Some(t) => {
                let max = estimates
                    .iter()
                    .zip(t)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                let total = (stack_positions(estimates) - stack_positions(t)).norm();
                (max, total)
            }
            None => {
                let m = moved.unwrap_or(f64::INFINITY);
                (m, m)
            }
        }
    };

    let mut traj = Trajectory {
        step,
        rounds: 0,
        converged: false,
        stop: StopReason::MaxRounds,
        estimates: vec![estimates.clone()],
        max_errors: Vec::new(),
        total_errors: Vec::new(),
        max_increments: Vec::new(),
    };
    let mut initial_metric = None;
    if truth.is_some() {
        let (max, total) = metric(&estimates, None);
        traj.max_errors.push(max);
        traj.total_errors.push(total);
        initial_metric = Some(max);
        if max < cfg.tol {
            traj.converged = true;
            traj.stop = StopReason::ErrorBelowTol;
            return Ok(traj);
        }
    }
    let mut rounds_above = 0;

    for round in 1..=cfg.max_rounds {
        // delivery barrier: mailboxes are filled from the pre-round state,
        // restricted to what each node is entitled to read
        let mut next = estimates.clone();
        let mut max_move = 0.0_f64;
        for (free, slot) in next.iter_mut().enumerate() {
            let id = cs.n_anchors + free;
            let mut mailbox = BTreeMap::new();
            mailbox.insert(id, node_estimate(&estimates, id));
            for &m in &membership[id] {
                mailbox.insert(m, node_estimate(&estimates, m));
            }
            let inc = node_increment(cs, id, &mailbox)?;
            let delta = step * inc;
            *slot += delta;
            max_move = max_move.max(delta.norm());
        }
        estimates = next;
        traj.rounds = round;
        traj.estimates.push(estimates.clone());
        traj.max_increments.push(max_move);
        let (max_metric, total) = metric(&estimates, Some(max_move));
        if truth.is_some() {
            traj.max_errors.push(max_metric);
            traj.total_errors.push(total);
        }
        if max_metric < cfg.tol {
            traj.converged = true;
            traj.stop = if truth.is_some() {
                StopReason::ErrorBelowTol
            } else {
                StopReason::IncrementBelowTol
            };
            return Ok(traj);
        }
        let baseline = *initial_metric.get_or_insert(max_metric);
        if !max_metric.is_finite() || max_metric > DIVERGENCE_FACTOR * baseline.max(1e-300) {
            rounds_above += 1;
            if rounds_above >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence {
                    round,
                    suggested_step: contraction_step,
                });
            }
        } else {
            rounds_above = 0;
        }
    }
    Ok(traj)
}

/// Least-squares slope of the log total error over the second half of the
/// run, converted to a continuous-time rate. Needs at least ten usable
/// samples above the numerical floor; a converged exponential decay yields
/// a value near the negated smallest free-free eigenvalue.
pub fn exponential_rate_estimate(traj: &Trajectory) -> Option<f64> {
    let e = &traj.total_errors;
    if e.len() < 20 {
        return None;
    }
    let e0 = e[0];
    let floor = 1e-12 * e0.max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = e
        .iter()
        .enumerate()
        .skip(e.len() / 2)
        .filter(|(_, &v)| v.is_finite() && v > floor)
        .map(|(i, &v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 10 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    Some(slope / traj.step)
}
