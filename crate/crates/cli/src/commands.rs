//! The four subcommands. Each produces one artifact (report or table) that
//! goes to stdout, or to `--out` atomically; progress and summaries go to
//! stderr so the artifact stays machine-readable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adloc_core::constraints::{build_constraint_set, ConstraintSet};
use adloc_core::geom::{stack_positions, Configuration, Dim, Vec3};
use adloc_core::linalg::{spectral_norm, symmetric_eigen_extremes};
use adloc_core::localize::{
    direct_localize, error_bound, solve_perturbed, NoisePerturbation, PerturbationSource,
};
use adloc_core::measure::{apply_noise, MeasurementSet};
use adloc_core::protocol::{
    exponential_rate_estimate, run_protocol, InitStrategy, ProtocolConfig, StopReason, Trajectory,
};
use adloc_core::rigidity::{assemble_rigidity_matrix, nullity_report, InformationMatrix};
use adloc_core::tolerances::{Tolerances, STAR_CONSISTENCY_REL};
use adloc_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::failure::{verdict, CliResult, Failure};
use crate::output::atomic_write;
use crate::scenario::{self, Scenario};

pub const RANK_TOL_VAR: &str = "ADLOC_RANK_TOL";
pub const COLLOCATION_TOL_VAR: &str = "ADLOC_COLLOCATION_TOL";

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOpts {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOpts {
    pub seed: Option<u64>,
    pub sigmas: Vec<f64>,
    pub trials: Option<u32>,
}

struct Prepared {
    scenario: Scenario,
    config: Configuration,
    ms: MeasurementSet,
    frame_seed: Option<u64>,
    tol: Tolerances,
}

fn read_env_f64(name: &str) -> CliResult<Option<f64>> {
    match std::env::var(name) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::Usage(format!("{name}: {e}"))),
        Ok(s) => match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
            _ => Err(Failure::Usage(format!(
                "{name}: expected a positive number, found {s:?}"
            ))),
        },
    }
}

fn tolerances_from_env() -> CliResult<Tolerances> {
    let mut tol = Tolerances::default();
    if let Some(v) = read_env_f64(RANK_TOL_VAR)? {
        tol.rank_rel = v;
    }
    if let Some(v) = read_env_f64(COLLOCATION_TOL_VAR)? {
        tol.collocation_rel = v;
    }
    Ok(tol)
}

fn prepare(path: &Path, frame_seed_override: Option<u64>) -> CliResult<Prepared> {
    let tol = tolerances_from_env()?;
    let scenario = scenario::load(path)?;
    let config = scenario.configuration(&tol)?;
    let (ms, frame_seed) = scenario.synthesize(&config, frame_seed_override)?;
    Ok(Prepared {
        scenario,
        config,
        ms,
        frame_seed,
        tol,
    })
}

fn emit(out: Option<&Path>, artifact: &str) -> CliResult<()> {
    match out {
        Some(p) => {
            atomic_write(p, artifact)?;
            eprintln!("wrote: {}", p.display());
        }
        None => print!("{artifact}"),
    }
    Ok(())
}

fn frames_desc(seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("seeded {s}"),
        None => "identity".into(),
    }
}

/// Degree preconditions for the constraint constructions; violations are
/// reported per node instead of failing mid-build.
fn connectivity_findings(s: &Scenario) -> Vec<String> {
    let need = s.dim.as_usize() + 1;
    let mut findings = Vec::new();
    for i in 0..s.n() {
        let nbrs = s.graph.neighbors(i);
        if s.graph.is_anchor(i) {
            let a = nbrs.iter().filter(|&&j| s.graph.is_anchor(j)).count();
            if a < 2 {
                findings.push(format!(
                    "node {}: anchor sees {a} other anchor(s), needs at least 2",
                    s.ids[i]
                ));
            }
        } else if nbrs.len() < need {
            findings.push(format!(
                "node {}: free node has {} neighbor(s), needs at least {need}",
                s.ids[i],
                nbrs.len()
            ));
        }
    }
    findings
}

fn build_constraints(p: &Prepared, consistency_rel: f64) -> CliResult<ConstraintSet> {
    build_constraint_set(
        &p.scenario.graph,
        p.config.anchor_positions(),
        &p.ms,
        consistency_rel,
    )
    .map_err(verdict)
}

pub fn analyze(path: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<i32> {
    let p = prepare(path, seed)?;
    let s = &p.scenario;
    let findings = connectivity_findings(s);

    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", path.display());
    let _ = writeln!(text, "dimension: {}", s.dim.as_usize());
    let _ = writeln!(text, "modality: {}", s.modality.name());
    let _ = writeln!(text, "local frames: {}", frames_desc(p.frame_seed));
    let _ = writeln!(
        text,
        "nodes: {} ({} anchors, {} free)",
        s.n(),
        s.n_anchors,
        s.n_free()
    );
    let _ = writeln!(text, "edges: {}", s.graph.edge_count());

    let localizable;
    if findings.is_empty() {
        let cs = build_constraints(&p, STAR_CONSISTENCY_REL)?;
        let rm = assemble_rigidity_matrix(&cs).map_err(verdict)?;
        let report = nullity_report(&rm, &p.config, &p.tol).map_err(verdict)?;
        localizable = report.is_localizable;
        let _ = writeln!(text, "connectivity: ok");
        let _ = writeln!(text, "angle constraints: {}", cs.m_r());
        let _ = writeln!(text, "displacement constraints: {}", cs.m_d());
        let _ = writeln!(text, "gradient rows: {}", rm.r.nrows());
        let _ = writeln!(text, "rank: {}", report.rank);
        let _ = writeln!(text, "nullity: {}", report.nullity);
        let _ = writeln!(text, "similarity motions: {}", report.trivial_dim);
        let _ = writeln!(
            text,
            "extra null motions: {}",
            report.nullity - report.trivial_dim
        );
        let _ = writeln!(
            text,
            "infinitesimally rigid: {}",
            if report.is_infinitesimally_rigid { "yes" } else { "no" }
        );
        if s.n_free() > 0 {
            let _ = writeln!(text, "lambda_min(D_ff): {:.6e}", report.lambda_min_ff);
            let _ = writeln!(text, "lambda_max(D_ff): {:.6e}", report.lambda_max_ff);
            if report.lambda_max_ff > 0.0 {
                let _ = writeln!(
                    text,
                    "suggested step: {:.6e}",
                    1.0 / (2.0 * report.lambda_max_ff)
                );
            }
        } else {
            let _ = writeln!(text, "lambda_min(D_ff): n/a (no free nodes)");
        }
        let _ = writeln!(text, "localizable: {}", if localizable { "yes" } else { "no" });
    } else {
        localizable = false;
        let _ = writeln!(text, "connectivity: {} violation(s)", findings.len());
        for f in &findings {
            let _ = writeln!(text, "  {f}");
        }
        let _ = writeln!(text, "localizable: no (connectivity assumptions unmet)");
    }

    let _ = writeln!(text, "node detail:");
    for i in 0..s.n() {
        let nbrs = s.graph.neighbors(i);
        let a = nbrs.iter().filter(|&&j| s.graph.is_anchor(j)).count();
        let _ = writeln!(
            text,
            "  node {}: {}, {} neighbor(s) ({a} anchors)",
            s.ids[i],
            if s.graph.is_anchor(i) { "anchor" } else { "free" },
            nbrs.len()
        );
    }

    emit(out, &text)?;
    Ok(if localizable { 0 } else { 2 })
}

/// Stacked residual norm of the displacement constraints centered at each
/// free node, evaluated on the recovered configuration.
fn block_residuals(cs: &ConstraintSet, positions: &[Vec3]) -> Vec<f64> {
    let r = cs.residuals(positions);
    let mut acc = vec![0.0; cs.n - cs.n_anchors];
    for (ci, c) in cs.displacement.iter().enumerate() {
        if c.center >= cs.n_anchors {
            let base = cs.m_r() + 3 * ci;
            acc[c.center - cs.n_anchors] +=
                r[base] * r[base] + r[base + 1] * r[base + 1] + r[base + 2] * r[base + 2];
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

fn position_row(s: &Scenario, id: u64, pos: &Vec3, tail: f64) -> String {
    match s.dim {
        Dim::Two => format!("{id},{},{},{tail}", pos.x, pos.y),
        Dim::Three => format!("{id},{},{},{},{tail}", pos.x, pos.y, pos.z),
    }
}

pub fn localize(path: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<i32> {
    let p = prepare(path, seed)?;
    let s = &p.scenario;
    let cs = build_constraints(&p, STAR_CONSISTENCY_REL)?;
    let rm = assemble_rigidity_matrix(&cs).map_err(verdict)?;
    let info = InformationMatrix::from_rigidity(&rm);
    let estimates =
        direct_localize(&info, p.config.anchor_positions(), p.tol.rank_rel).map_err(verdict)?;

    let mut full = p.config.anchor_positions().to_vec();
    full.extend_from_slice(&estimates);
    let residuals = block_residuals(&cs, &full);

    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "node,{},block_residual",
        if s.dim == Dim::Two { "x,y" } else { "x,y,z" }
    );
    let mut worst_residual: f64 = 0.0;
    let mut worst_error: f64 = 0.0;
    for (f, pos) in estimates.iter().enumerate() {
        let id = s.ids[s.n_anchors + f];
        let _ = writeln!(csv, "{}", position_row(s, id, pos, residuals[f]));
        worst_residual = worst_residual.max(residuals[f]);
        worst_error = worst_error.max((pos - p.config.free_positions()[f]).norm());
    }

    eprintln!("scenario: {}", path.display());
    eprintln!("modality: {}", s.modality.name());
    eprintln!("local frames: {}", frames_desc(p.frame_seed));
    eprintln!("free nodes solved: {}", estimates.len());
    if !estimates.is_empty() {
        eprintln!("max block residual: {worst_residual:.3e}");
        eprintln!("max deviation from recorded positions: {worst_error:.3e}");
    }
    emit(out, &csv)?;
    Ok(0)
}

fn stop_desc(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::ErrorBelowTol => "error below tolerance",
        StopReason::IncrementBelowTol => "increment below tolerance",
        StopReason::MaxRounds => "round limit",
    }
}

fn trajectory_csv(s: &Scenario, traj: &Trajectory, truth: &[Vec3]) -> String {
    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "round,node,{},error",
        if s.dim == Dim::Two { "x,y" } else { "x,y,z" }
    );
    for (round, state) in traj.estimates.iter().enumerate() {
        for (f, pos) in state.iter().enumerate() {
            let id = s.ids[s.n_anchors + f];
            let err = (pos - truth[f]).norm();
            let _ = write!(csv, "{round},");
            let _ = writeln!(csv, "{}", position_row(s, id, pos, err));
        }
    }
    csv
}

fn trial_path(base: &Path, t: u32) -> PathBuf {
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trajectory");
    let name = match base.extension().and_then(|s| s.to_str()) {
        Some(e) => format!("{stem}-trial{t}.{e}"),
        None => format!("{stem}-trial{t}"),
    };
    base.with_file_name(name)
}

/// Consistency gate for stars rebuilt from noisy data; wide open so that
/// measurement scatter lands in the coefficients, not in a rejection.
fn noisy_consistency(sigma: f64) -> f64 {
    STAR_CONSISTENCY_REL.max(1e3 * sigma)
}

pub fn simulate(path: &Path, out: Option<&Path>, opts: &SimulateOpts) -> CliResult<i32> {
    let p = prepare(path, opts.seed)?;
    let s = &p.scenario;
    let truth = p.config.free_positions().to_vec();
    let cfg = ProtocolConfig {
        step: opts.step.or(s.protocol.step),
        max_rounds: opts.max_iters.unwrap_or(s.protocol.max_rounds),
        tol: opts.tol.unwrap_or(s.protocol.tol),
        init: InitStrategy::Seed(opts.seed.unwrap_or(s.protocol.init_seed)),
    };
    let init_seed = opts.seed.unwrap_or(s.protocol.init_seed);

    eprintln!("scenario: {}", path.display());
    eprintln!("modality: {}", s.modality.name());
    eprintln!("local frames: {}", frames_desc(p.frame_seed));
    eprintln!("init seed: {init_seed}");

    let noise = s.noise.filter(|n| n.sigma > 0.0);
    match noise {
        None => {
            let cs = build_constraints(&p, STAR_CONSISTENCY_REL)?;
            let traj = run_protocol(&cs, Some(&truth), &cfg).map_err(verdict)?;
            eprintln!("step: {:.6e}", traj.step);
            eprintln!("rounds: {}", traj.rounds);
            eprintln!("stop: {}", stop_desc(&traj.stop));
            if let Some(e) = traj.max_errors.last() {
                eprintln!("final max node error: {e:.3e}");
            }
            if let Some(rate) = exponential_rate_estimate(&traj) {
                eprintln!("error decay rate: {rate:.3e} per unit flow time");
            }
            emit(out, &trajectory_csv(s, &traj, &truth))?;
            Ok(0)
        }
        Some(noise) => {
            if noise.trials > 1 && out.is_none() {
                return Err(Failure::Usage(
                    "noise trials write one trajectory file each; pass --out".into(),
                ));
            }
            let clean_cs = build_constraints(&p, STAR_CONSISTENCY_REL)?;
            let clean_info = InformationMatrix::from_rigidity(
                &assemble_rigidity_matrix(&clean_cs).map_err(verdict)?,
            );
            let anchors = p.config.anchor_positions();
            eprintln!(
                "noise: gaussian sigma {}, seed {}, {} trial(s)",
                noise.sigma, noise.seed, noise.trials
            );
            for t in 0..noise.trials {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.seed.wrapping_add(t as u64));
                let noisy = apply_noise(&p.ms, noise.sigma, &mut rng);
                let cs = build_constraint_set(
                    &s.graph,
                    anchors,
                    &noisy,
                    noisy_consistency(noise.sigma),
                )
                .map_err(|e| verdict(format!("noise trial {t}: {e}")))?;
                let info = InformationMatrix::from_rigidity(
                    &assemble_rigidity_matrix(&cs).map_err(verdict)?,
                );
                let pert = NoisePerturbation {
                    delta_ff: info.d_ff() - clean_info.d_ff(),
                    delta_fa: info.d_fa() - clean_info.d_fa(),
                    source: PerturbationSource::MeasurementNoise { sigma: noise.sigma },
                };
                // No truth inside the run: with noisy constraints the
                // protocol settles near the perturbed solution, so it stops
                // on movement, and errors are reported against the record.
                let traj =
                    run_protocol(&cs, None, &cfg).map_err(|e| verdict(format!("noise trial {t}: {e}")))?;
                let final_state = traj.estimates.last().expect("at least the initial state");
                let final_err = (stack_positions(final_state) - stack_positions(&truth)).norm();
                let bound_desc = match error_bound(&clean_info, &pert, anchors, &truth) {
                    Ok(b) => format!("bound {b:.3e}, within bound: {}", final_err <= b),
                    Err(Error::BoundInapplicable {
                        delta_norm,
                        lambda_min,
                    }) => format!(
                        "bound inapplicable (|delta| {delta_norm:.3e} >= lambda_min {lambda_min:.3e})"
                    ),
                    Err(e) => return Err(verdict(format!("noise trial {t}: {e}"))),
                };
                let target = out.map(|o| trial_path(o, t));
                eprintln!(
                    "trial {t}: seed {}, rounds {}, stop {}, final stacked error {final_err:.3e}, {bound_desc}",
                    noise.seed.wrapping_add(t as u64),
                    traj.rounds,
                    stop_desc(&traj.stop),
                );
                emit(target.as_deref(), &trajectory_csv(s, &traj, &truth))?;
            }
            Ok(0)
        }
    }
}

pub fn noise_sweep(path: &Path, out: Option<&Path>, opts: &SweepOpts) -> CliResult<i32> {
    let p = prepare(path, None)?;
    let s = &p.scenario;
    if s.n_free() == 0 {
        return Err(Failure::Usage("scenario has no free nodes to perturb".into()));
    }
    let sigmas = if opts.sigmas.is_empty() {
        match &s.noise {
            Some(n) => vec![n.sigma],
            None => {
                return Err(Failure::Usage(
                    "--sigma required unless the scenario has a [noise] block".into(),
                ))
            }
        }
    } else {
        for v in &opts.sigmas {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Failure::Usage(format!(
                    "--sigma: must be a finite non-negative number, found {v}"
                )));
            }
        }
        opts.sigmas.clone()
    };
    let trials = match opts.trials.or(s.noise.map(|n| n.trials)).unwrap_or(1) {
        0 => return Err(Failure::Usage("--trials: must be at least 1".into())),
        t => t,
    };
    let base_seed = opts.seed.or(s.noise.map(|n| n.seed)).unwrap_or(0);

    let cs = build_constraints(&p, STAR_CONSISTENCY_REL)?;
    let info =
        InformationMatrix::from_rigidity(&assemble_rigidity_matrix(&cs).map_err(verdict)?);
    let d_ff = info.d_ff();
    let (lambda_min, _) = symmetric_eigen_extremes(&d_ff);
    let anchors = p.config.anchor_positions();
    let truth = p.config.free_positions().to_vec();
    let truth_stacked = stack_positions(&truth);

    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "sigma,trial,seed,delta_ff_norm,lambda_min,applicable,actual_error,bound"
    );
    for (si, &sigma) in sigmas.iter().enumerate() {
        for t in 0..trials {
            let trial_seed = base_seed
                .wrapping_add((si as u64) << 32)
                .wrapping_add(t as u64);
            if sigma == 0.0 {
                // An unperturbed system recovers the truth exactly; the row is
                // definitional, not a solver round trip.
                let _ = writeln!(csv, "0,{t},{trial_seed},0,{lambda_min},true,0,0");
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let noisy = apply_noise(&p.ms, sigma, &mut rng);
            let noisy_cs =
                build_constraint_set(&s.graph, anchors, &noisy, noisy_consistency(sigma))
                    .map_err(|e| verdict(format!("sigma {sigma} trial {t}: {e}")))?;
            let noisy_info = InformationMatrix::from_rigidity(
                &assemble_rigidity_matrix(&noisy_cs).map_err(verdict)?,
            );
            let pert = NoisePerturbation {
                delta_ff: noisy_info.d_ff() - &d_ff,
                delta_fa: noisy_info.d_fa() - info.d_fa(),
                source: PerturbationSource::MeasurementNoise { sigma },
            };
            let delta_norm = spectral_norm(&pert.delta_ff);
            let applicable = delta_norm < lambda_min;
            let actual = solve_perturbed(&info, &pert, anchors)
                .ok()
                .map(|x| (stack_positions(&x) - &truth_stacked).norm());
            let bound = match error_bound(&info, &pert, anchors, &truth) {
                Ok(b) => Some(b),
                Err(Error::BoundInapplicable { .. }) => None,
                Err(e) => return Err(verdict(format!("sigma {sigma} trial {t}: {e}"))),
            };
            let _ = writeln!(
                csv,
                "{sigma},{t},{trial_seed},{delta_norm},{lambda_min},{applicable},{},{}",
                actual.map(|v| v.to_string()).unwrap_or_default(),
                bound.map(|v| v.to_string()).unwrap_or_default()
            );
        }
    }

    eprintln!("scenario: {}", path.display());
    eprintln!("modality: {}", s.modality.name());
    eprintln!("local frames: {}", frames_desc(p.frame_seed));
    eprintln!("lambda_min(D_ff): {lambda_min:.6e}");
    eprintln!(
        "sweep: {} sigma value(s) x {trials} trial(s), base seed {base_seed}",
        sigmas.len()
    );
    emit(out, &csv)?;
    Ok(0)
}
