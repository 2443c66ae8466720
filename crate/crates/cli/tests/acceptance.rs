//! The release gate. Ten numbered criteria, one test each: the two
//! committed reference networks reproduce their known solutions through
//! the binary, and the randomized suites pin the construction's core
//! guarantees (protocol/matrix agreement, similarity invariance, gradient
//! correctness, the perturbation bound, the convergence rate). Criteria
//! with wall-clock budgets assert them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use adloc_cli::scenario::{canonical_toml, parse};
use adloc_core::geom::{
    apply_similarity, stack_positions, Configuration, Dim, NetworkGraph, Vec3,
};
use adloc_core::linalg::{spectral_norm, symmetric_eigen_extremes};
use adloc_core::measure::{synthesize_measurements, Modality};
use adloc_core::protocol::{
    exponential_rate_estimate, matrix_flow_step, run_protocol, InitStrategy, ProtocolConfig,
    StopReason,
};
use adloc_core::rigidity::{
    assemble_rigidity_matrix, check_congruence, nullity_report, trivial_motion_basis,
    InformationMatrix,
};
use adloc_core::star::{extract_star, mu_from_star, normalize_mu};
use adloc_core::synthetic::{
    colinear_anchor_scenario, constraints_from_positions, coplanar_anchor_scenario,
    cube_scenario, random_frames, random_localizable_scenario, random_perturbation,
    random_similarity, random_star,
};
use adloc_core::tolerances::{Tolerances, STAR_CONSISTENCY_REL};
use adloc_core::{error_bound, solve_perturbed, ConstraintSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn adloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adloc"))
        .args(args)
        .env_remove("ADLOC_RANK_TOL")
        .env_remove("ADLOC_COLLOCATION_TOL")
        .output()
        .expect("binary runs")
}

/// Parses a localization table into (id, coordinates) rows.
fn position_rows(csv: &str) -> Vec<(u64, Vec<f64>)> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let mut parts = line.split(',');
            let id: u64 = parts.next().unwrap().parse().unwrap();
            let rest: Vec<f64> = parts.map(|v| v.parse().unwrap()).collect();
            // last column is the block residual
            (id, rest[..rest.len() - 1].to_vec())
        })
        .collect()
}

/// Values of the stacked constraint functions at arbitrary positions: the
/// weighted inner-product form for each anchor triangle, the coefficient
/// combination of edge vectors for each star. The gradient matrix rows are
/// exactly the derivatives of these.
fn constraint_values(cs: &ConstraintSet, p: &[Vec3]) -> DVector<f64> {
    let mut v = DVector::zeros(cs.m_r() + 3 * cs.m_d());
    for (row, c) in cs.angle.iter().enumerate() {
        let (i, j, k) = c.nodes;
        let e_ij = p[j] - p[i];
        let e_ik = p[k] - p[i];
        let e_ki = p[i] - p[k];
        let e_kj = p[j] - p[k];
        v[row] = c.w_ik * e_ik.dot(&e_ij) + c.w_ki * e_ki.dot(&e_kj);
    }
    for (ci, c) in cs.displacement.iter().enumerate() {
        let mut r = Vec3::zeros();
        for (t, &nbr) in c.neighbors.iter().enumerate() {
            r += c.mu[t] * (p[nbr] - p[c.center]);
        }
        for coord in 0..3 {
            v[cs.m_r() + 3 * ci + coord] = r[coord];
        }
    }
    v
}

#[test]
fn criterion_01_planar_fixture_localizes_exactly() {
    let start = Instant::now();
    let out = adloc(&[
        "localize",
        "--scenario",
        fixture("planar-six.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = position_rows(&String::from_utf8(out.stdout).unwrap());
    let expected = [
        (4, [3.0, 0.5]),
        (5, [4.0, 0.1]),
        (6, [3.8, 0.28]),
    ];
    assert_eq!(rows.len(), 3);
    for ((id, coords), (want_id, want)) in rows.iter().zip(expected) {
        assert_eq!(*id, want_id);
        for (c, w) in coords.iter().zip(want) {
            assert!((c - w).abs() <= 1e-9, "node {id}: {c} vs {w}");
        }
    }
    assert!(start.elapsed() < Duration::from_secs(1), "{:?}", start.elapsed());
}

#[test]
fn criterion_02_cube_localizes_under_every_modality_and_frame() {
    let start = Instant::now();
    let text = std::fs::read_to_string(fixture("cube.toml")).unwrap();
    let base = parse(&text).unwrap().doc;
    let truth: [(u64, [f64; 3]); 4] = [
        (5, [-20.0, -20.0, -20.0]),
        (6, [20.0, -20.0, 20.0]),
        (7, [-20.0, 20.0, 20.0]),
        (8, [-20.0, -20.0, 20.0]),
    ];
    let dir = tempfile::tempdir().unwrap();
    for modality in Modality::ALL {
        let mut doc = base.clone();
        doc.modality = modality.name().to_string();
        let path = dir.path().join(format!("cube-{}.toml", modality.name()));
        std::fs::write(&path, canonical_toml(&doc)).unwrap();
        for seed in 0..10u64 {
            let out = adloc(&[
                "localize",
                "--scenario",
                path.to_str().unwrap(),
                "--seed",
                &seed.to_string(),
            ]);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{} seed {seed}: {}",
                modality.name(),
                String::from_utf8_lossy(&out.stderr)
            );
            let rows = position_rows(&String::from_utf8(out.stdout).unwrap());
            assert_eq!(rows.len(), 4);
            for ((id, coords), (want_id, want)) in rows.iter().zip(truth) {
                assert_eq!(*id, want_id);
                for (c, w) in coords.iter().zip(want) {
                    assert!(
                        (c - w).abs() <= 4e-7,
                        "{} seed {seed} node {id}: {c} vs {w}",
                        modality.name()
                    );
                }
            }
        }
    }
    assert!(start.elapsed() < Duration::from_secs(5), "{:?}", start.elapsed());
}

#[test]
fn criterion_03_cube_protocol_converges_from_seeded_start() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("trajectory.csv");
    let out = adloc(&[
        "simulate",
        "--scenario",
        fixture("cube.toml").to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&target).unwrap();
    let mut last_round = 0u64;
    let mut final_errors: Vec<(u64, f64)> = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        let round: u64 = parts[0].parse().unwrap();
        let node: u64 = parts[1].parse().unwrap();
        let error: f64 = parts.last().unwrap().parse().unwrap();
        if round > last_round {
            last_round = round;
            final_errors.clear();
        }
        if round == last_round {
            final_errors.push((node, error));
        }
    }
    assert!(last_round <= 100_000, "converged by round {last_round}");
    assert_eq!(final_errors.len(), 4);
    for (node, error) in final_errors {
        assert!(error < 1e-6, "node {node} finished at error {error}");
    }
    assert!(start.elapsed() < Duration::from_secs(10), "{:?}", start.elapsed());
}

#[test]
fn criterion_04_protocol_increments_match_the_matrix_flow() {
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + trial);
        let dim = if trial % 2 == 0 { Dim::Two } else { Dim::Three };
        let n = rng.random_range(dim.as_usize() + 2..=20);
        let s = random_localizable_scenario(dim, n, &mut rng);
        let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
        let info =
            InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&cs).unwrap());
        let anchors = s.config.anchor_positions();
        let truth = s.config.free_positions();
        let cfg = ProtocolConfig {
            step: None,
            max_rounds: 50,
            tol: 0.0,
            init: InitStrategy::Seed(trial),
        };
        let traj = run_protocol(&cs, Some(truth), &cfg).unwrap();
        assert_eq!(traj.stop, StopReason::MaxRounds);
        assert_eq!(traj.estimates.len(), 51);
        // The two evaluations sum the same products in different orders, so
        // agreement is relative to the product magnitudes, not to the
        // increment itself: the flow cancels to a fraction of its terms and
        // shrinks to the floating-point floor once the run converges.
        let s_ff = spectral_norm(&info.d_ff());
        let s_fa = spectral_norm(&info.d_fa());
        let pa_norm = stack_positions(anchors).norm();
        for r in 0..50 {
            let x = stack_positions(&traj.estimates[r]);
            let next = stack_positions(&traj.estimates[r + 1]);
            let expected = matrix_flow_step(&x, &info, anchors, traj.step);
            let inc = &next - &x;
            let want = &expected - &x;
            let scale = traj.step * (s_ff * x.norm() + s_fa * pa_norm);
            let rel = (&inc - &want).norm() / scale;
            assert!(
                rel <= 1e-12,
                "trial {trial} round {r}: relative deviation {rel:.3e}"
            );
        }
    }
}

#[test]
fn criterion_05_similarity_generators_span_the_null_space_floor() {
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5_000 + trial);
        let dim = if trial % 2 == 0 { Dim::Two } else { Dim::Three };
        let n = rng.random_range(dim.as_usize() + 2..=15);
        let s = random_localizable_scenario(dim, n, &mut rng);
        let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
        let rm = assemble_rigidity_matrix(&cs).unwrap();
        let motions = trivial_motion_basis(&s.config);
        assert_eq!(motions.effective_dim, 7, "trial {trial}");
        let r_norm = spectral_norm(&rm.r);
        for (gi, g) in motions.generators.iter().enumerate() {
            let residual = (&rm.r * g).norm();
            assert!(
                residual <= 1e-8 * r_norm * g.norm(),
                "trial {trial} generator {gi}: residual {residual:.3e}"
            );
        }
    }
}

#[test]
fn criterion_06_degenerate_anchors_admit_a_reflected_solution() {
    let scenarios = [coplanar_anchor_scenario(), colinear_anchor_scenario()];
    let flips: [fn(Vec3) -> Vec3; 2] = [
        |p| Vec3::new(p.x, p.y, -p.z),
        |p| Vec3::new(p.x, -p.y, p.z),
    ];
    for (case, (s, flip)) in scenarios.into_iter().zip(flips).enumerate() {
        let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
        let rm = assemble_rigidity_matrix(&cs).unwrap();
        let report = nullity_report(&rm, &s.config, &Tolerances::default()).unwrap();
        assert!(!report.is_localizable, "case {case}");
        assert!(
            report.lambda_min_ff < Tolerances::default().rank_rel * report.lambda_max_ff,
            "case {case}: lambda_min {:.3e} not under the rank cutoff",
            report.lambda_min_ff
        );
        let reflected: Vec<Vec3> = (0..s.config.n())
            .map(|i| {
                if i < s.config.n_anchors() {
                    s.config.position(i)
                } else {
                    flip(s.config.position(i))
                }
            })
            .collect();
        assert!(
            reflected
                .iter()
                .zip(s.config.positions())
                .any(|(a, b)| (a - b).norm() > 1.0),
            "case {case}: the reflection must move the free nodes"
        );
        let residual = constraint_values(&cs, &reflected).amax();
        assert!(residual <= 1e-9, "case {case}: residual {residual:.3e}");
        assert!(
            check_congruence(&rm, &reflected).unwrap(),
            "case {case}: reflected configuration must pass the congruence test"
        );
    }
}

#[test]
fn criterion_07_star_coefficients_are_similarity_and_modality_invariant() {
    fn star_mu(
        config: &Configuration,
        graph: &NetworkGraph,
        modality: Modality,
        rng: &mut ChaCha8Rng,
    ) -> DVector<f64> {
        let frames = random_frames(config.n(), config.dim(), rng);
        let ms = synthesize_measurements(config, graph, &frames, modality).unwrap();
        let neighbors: Vec<usize> = (1..config.n()).collect();
        let data = extract_star(&ms, graph, 0, &neighbors).unwrap();
        normalize_mu(mu_from_star(&data, config.dim(), STAR_CONSISTENCY_REL).unwrap())
    }

    for (mi, modality) in Modality::ALL.into_iter().enumerate() {
        for trial in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + 100 * mi as u64 + trial);
            let dim = if trial % 2 == 0 { Dim::Two } else { Dim::Three };
            let k = dim.as_usize() + 1;
            let (center, nbrs) = random_star(dim, k, &mut rng);
            let mut positions = vec![center];
            positions.extend(nbrs);
            let n = positions.len();
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    edges.push((a, b));
                }
            }
            let config = Configuration::new(dim, positions, 1).unwrap();
            let graph = NetworkGraph::new(n, 1, &edges).unwrap();

            let mu = star_mu(&config, &graph, modality, &mut rng);
            let t = random_similarity(dim, &mut rng);
            let config_t = apply_similarity(&config, &t).unwrap();
            let mu_t = star_mu(&config_t, &graph, modality, &mut rng);
            assert!(
                (&mu - &mu_t).norm() <= 1e-8,
                "{} trial {trial}: moved by {:.3e} under a similarity",
                modality.name(),
                (&mu - &mu_t).norm()
            );

            let mu_reference = star_mu(&config, &graph, Modality::LocalPosition, &mut rng);
            assert!(
                (&mu - &mu_reference).norm() <= 1e-8,
                "{} trial {trial}: departs from the direct construction by {:.3e}",
                modality.name(),
                (&mu - &mu_reference).norm()
            );
        }
    }
}

#[test]
fn criterion_08_gradient_matrix_matches_finite_differences() {
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8_000 + trial);
        let dim = if trial % 2 == 0 { Dim::Two } else { Dim::Three };
        let n = rng.random_range(dim.as_usize() + 2..=12);
        let s = random_localizable_scenario(dim, n, &mut rng);
        let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
        let rm = assemble_rigidity_matrix(&cs).unwrap();
        let p: Vec<Vec3> = s.config.positions().to_vec();
        let scale = p.iter().map(|q| q.norm()).fold(1.0, f64::max);
        let h = 1e-5 * scale;
        let mut fd = DMatrix::zeros(rm.r.nrows(), rm.r.ncols());
        for node in 0..cs.n {
            for coord in 0..3 {
                let mut plus = p.clone();
                plus[node][coord] += h;
                let mut minus = p.clone();
                minus[node][coord] -= h;
                let col =
                    (constraint_values(&cs, &plus) - constraint_values(&cs, &minus)) / (2.0 * h);
                fd.column_mut(3 * node + coord).copy_from(&col);
            }
        }
        let rel = (&fd - &rm.r).norm() / rm.r.norm();
        assert!(rel <= 1e-6, "trial {trial}: relative deviation {rel:.3e}");
    }
}

#[test]
fn criterion_09_perturbed_solves_stay_within_the_error_bound() {
    let s = cube_scenario();
    let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
    let info = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&cs).unwrap());
    let (lambda_min, _) = symmetric_eigen_extremes(&info.d_ff());
    let anchors = s.config.anchor_positions();
    let truth = s.config.free_positions();
    let truth_stacked = stack_positions(truth);
    for trial in 0..1_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + trial);
        let ff_norm = rng.random_range(0.05..=0.5) * lambda_min;
        let fa_norm = rng.random_range(0.0..=0.5) * lambda_min;
        let pert = random_perturbation(&info, ff_norm, fa_norm, &mut rng);
        assert!(spectral_norm(&pert.delta_ff) <= 0.5 * lambda_min + 1e-9);
        let solved = solve_perturbed(&info, &pert, anchors)
            .unwrap_or_else(|e| panic!("trial {trial}: perturbed solve failed: {e}"));
        let actual = (stack_positions(&solved) - &truth_stacked).norm();
        let bound = error_bound(&info, &pert, anchors, truth).unwrap();
        assert!(
            actual <= bound,
            "trial {trial}: error {actual:.6e} above bound {bound:.6e}"
        );
    }
}

#[test]
fn criterion_10_convergence_rate_tracks_the_smallest_eigenvalue() {
    let s = cube_scenario();
    let cs = constraints_from_positions(&s.config, &s.graph).unwrap();
    let info = InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&cs).unwrap());
    let (lambda_min, _) = symmetric_eigen_extremes(&info.d_ff());
    let cfg = ProtocolConfig {
        step: None,
        max_rounds: 100_000,
        tol: 1e-9,
        init: InitStrategy::Seed(1),
    };
    let traj = run_protocol(&cs, Some(s.config.free_positions()), &cfg).unwrap();
    assert!(traj.converged);
    let rate = exponential_rate_estimate(&traj).expect("decay is exponential");
    let predicted = -lambda_min;
    assert!(
        (rate - predicted).abs() <= 0.2 * lambda_min,
        "measured {rate:.4} vs predicted {predicted:.4}"
    );
}
