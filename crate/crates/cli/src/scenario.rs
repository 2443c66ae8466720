//! Scenario files: a TOML description of a network, its measurement
//! modality, and optional noise and protocol settings.
//!
//! Node ids are arbitrary unique integers; internally anchors are packed
//! before free nodes, in file order, and `ids` maps internal indices back.
//! Serialization is canonical: fixed key order, edges sorted with the
//! smaller id first, floats always carrying a decimal point. Parsing a
//! canonical file and writing it back reproduces the bytes exactly.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adloc_core::geom::{Configuration, Dim, NetworkGraph, Vec3};
use adloc_core::measure::{
    synthesize_measurements, LocalFrameAssignment, MeasurementSet, Modality,
};
use adloc_core::synthetic::random_frames;
use adloc_core::tolerances::Tolerances;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::failure::{usage, verdict, CliResult, Failure};

pub const DEFAULT_MAX_ROUNDS: usize = 100_000;
pub const DEFAULT_STOP_TOL: f64 = 1e-9;

/// Raw file shape, kept around for canonical re-serialization.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub dim: u32,
    pub modality: String,
    #[serde(default)]
    pub frame_seed: Option<u64>,
    #[serde(default)]
    pub edges: Vec<(u64, u64)>,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub noise: Option<NoiseDoc>,
    #[serde(default)]
    pub protocol: Option<ProtocolDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: u64,
    pub role: String,
    #[serde(default)]
    pub position: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDoc {
    pub model: String,
    pub sigma: f64,
    pub seed: u64,
    pub trials: u32,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDoc {
    pub h: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSettings {
    pub sigma: f64,
    pub seed: u64,
    pub trials: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct ProtocolSettings {
    pub step: Option<f64>,
    pub max_rounds: usize,
    pub tol: f64,
    pub init_seed: u64,
}

/// A validated scenario with the internal anchors-first index assignment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub dim: Dim,
    pub modality: Modality,
    pub frame_seed: Option<u64>,
    /// Internal index to external id, anchors first.
    pub ids: Vec<u64>,
    pub n_anchors: usize,
    /// Aligned with `ids`; `None` for free nodes without a recorded truth.
    pub positions: Vec<Option<Vec3>>,
    pub graph: NetworkGraph,
    pub noise: Option<NoiseSettings>,
    pub protocol: ProtocolSettings,
}

pub fn load(path: &Path) -> CliResult<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> CliResult<Scenario> {
    let doc: ScenarioDoc =
        toml::from_str(text).map_err(|e| Failure::Usage(format!("scenario: {e}")))?;
    validate(doc)
}

fn validate(mut doc: ScenarioDoc) -> CliResult<Scenario> {
    let dim = match doc.dim {
        2 => Dim::Two,
        3 => Dim::Three,
        d => return Err(Failure::Usage(format!("dim: must be 2 or 3, found {d}"))),
    };
    let modality = Modality::parse(&doc.modality).ok_or_else(|| {
        Failure::Usage(format!(
            "modality: unknown value {:?}; expected one of {}",
            doc.modality,
            Modality::ALL.map(|m| m.name()).join(", ")
        ))
    })?;

    if doc.nodes.is_empty() {
        return Err(Failure::Usage("nodes: at least one node required".into()));
    }
    let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, node) in doc.nodes.iter().enumerate() {
        if let Some(prev) = seen.insert(node.id, i) {
            return Err(Failure::Usage(format!(
                "nodes[{i}]: id {} already used by nodes[{prev}]",
                node.id
            )));
        }
        match node.role.as_str() {
            "anchor" | "free" => {}
            other => {
                return Err(Failure::Usage(format!(
                    "nodes[{i}] (id {}): role must be \"anchor\" or \"free\", found {other:?}",
                    node.id
                )))
            }
        }
        match &node.position {
            Some(p) => {
                if p.len() != dim.as_usize() {
                    return Err(Failure::Usage(format!(
                        "nodes[{i}] (id {}): position needs {} coordinates, found {}",
                        node.id,
                        dim.as_usize(),
                        p.len()
                    )));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Failure::Usage(format!(
                        "nodes[{i}] (id {}): position coordinates must be finite",
                        node.id
                    )));
                }
            }
            None => {
                if node.role == "anchor" {
                    return Err(Failure::Usage(format!(
                        "nodes[{i}] (id {}): anchors need a position",
                        node.id
                    )));
                }
            }
        }
    }

    let mut ids = Vec::with_capacity(doc.nodes.len());
    let mut positions = Vec::with_capacity(doc.nodes.len());
    for pass in ["anchor", "free"] {
        for node in doc.nodes.iter().filter(|n| n.role == pass) {
            ids.push(node.id);
            positions.push(node.position.as_ref().map(|p| {
                Vec3::new(p[0], p[1], if dim == Dim::Three { p[2] } else { 0.0 })
            }));
        }
    }
    let n_anchors = doc.nodes.iter().filter(|n| n.role == "anchor").count();
    if n_anchors == 0 {
        return Err(Failure::Usage("nodes: at least one anchor required".into()));
    }
    let index_of: BTreeMap<u64, usize> =
        ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut edges_internal = Vec::with_capacity(doc.edges.len());
    let mut normalized: BTreeSet<(u64, u64)> = BTreeSet::new();
    for (i, &(a, b)) in doc.edges.iter().enumerate() {
        if a == b {
            return Err(Failure::Usage(format!("edges[{i}]: self loop on node {a}")));
        }
        let ia = *index_of
            .get(&a)
            .ok_or_else(|| Failure::Usage(format!("edges[{i}]: unknown node id {a}")))?;
        let ib = *index_of
            .get(&b)
            .ok_or_else(|| Failure::Usage(format!("edges[{i}]: unknown node id {b}")))?;
        normalized.insert((a.min(b), a.max(b)));
        edges_internal.push((ia, ib));
    }
    doc.edges = normalized.into_iter().collect();
    let graph = NetworkGraph::new(ids.len(), n_anchors, &edges_internal).map_err(usage)?;

    let noise = match &doc.noise {
        None => None,
        Some(nd) => {
            if nd.model != "gaussian" {
                return Err(Failure::Usage(format!(
                    "noise.model: only \"gaussian\" is supported, found {:?}",
                    nd.model
                )));
            }
            if !(nd.sigma.is_finite() && nd.sigma >= 0.0) {
                return Err(Failure::Usage(
                    "noise.sigma: must be a finite non-negative number".into(),
                ));
            }
            if nd.trials == 0 {
                return Err(Failure::Usage("noise.trials: must be at least 1".into()));
            }
            Some(NoiseSettings {
                sigma: nd.sigma,
                seed: nd.seed,
                trials: nd.trials,
            })
        }
    };

    let pd = doc.protocol.clone().unwrap_or_default();
    if let Some(h) = pd.h {
        if !(h.is_finite() && h > 0.0) {
            return Err(Failure::Usage("protocol.h: must be a positive number".into()));
        }
    }
    if let Some(t) = pd.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Usage("protocol.tol: must be a positive number".into()));
        }
    }
    if pd.max_iters == Some(0) {
        return Err(Failure::Usage("protocol.max_iters: must be at least 1".into()));
    }
    let protocol = ProtocolSettings {
        step: pd.h,
        max_rounds: pd.max_iters.unwrap_or(DEFAULT_MAX_ROUNDS),
        tol: pd.tol.unwrap_or(DEFAULT_STOP_TOL),
        init_seed: pd.init_seed.unwrap_or(0),
    };

    Ok(Scenario {
        frame_seed: doc.frame_seed,
        doc,
        dim,
        modality,
        ids,
        n_anchors,
        positions,
        graph,
        noise,
        protocol,
    })
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn n_free(&self) -> usize {
        self.ids.len() - self.n_anchors
    }

    pub fn external_id(&self, internal: usize) -> u64 {
        self.ids[internal]
    }

    /// Full true configuration; every command synthesizes measurements from
    /// it, so a free node without a recorded position is an error here.
    pub fn configuration(&self, tol: &Tolerances) -> CliResult<Configuration> {
        let mut full = Vec::with_capacity(self.positions.len());
        for (i, p) in self.positions.iter().enumerate() {
            match p {
                Some(v) => full.push(*v),
                None => {
                    return Err(Failure::Usage(format!(
                        "node {}: a position is required to synthesize measurements",
                        self.ids[i]
                    )))
                }
            }
        }
        Configuration::with_tolerances(self.dim, full, self.n_anchors, tol)
            .map_err(|e| Failure::Usage(format!("scenario: {e}")))
    }

    /// Measurements as the sensors would report them. A seed draws one
    /// random local frame per node; without one the frames are identity.
    pub fn synthesize(
        &self,
        config: &Configuration,
        seed_override: Option<u64>,
    ) -> CliResult<(MeasurementSet, Option<u64>)> {
        let seed = seed_override.or(self.frame_seed);
        let frames = match seed {
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                random_frames(config.n(), self.dim, &mut rng)
            }
            None => LocalFrameAssignment::identity(config.n()),
        };
        let ms = synthesize_measurements(config, &self.graph, &frames, self.modality)
            .map_err(verdict)?;
        Ok((ms, seed))
    }
}

/// Decimal text that `toml` reads back as the same float. Display already
/// round-trips; the suffix keeps whole numbers typed as floats.
pub fn fmt_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn canonical_toml(doc: &ScenarioDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim = {}", doc.dim);
    let _ = writeln!(s, "modality = \"{}\"", doc.modality);
    if let Some(seed) = doc.frame_seed {
        let _ = writeln!(s, "frame_seed = {seed}");
    }
    let edges: Vec<String> = doc
        .edges
        .iter()
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect();
    let _ = writeln!(s, "edges = [{}]", edges.join(", "));
    for node in &doc.nodes {
        let _ = writeln!(s);
        let _ = writeln!(s, "[[nodes]]");
        let _ = writeln!(s, "id = {}", node.id);
        let _ = writeln!(s, "role = \"{}\"", node.role);
        if let Some(p) = &node.position {
            let coords: Vec<String> = p.iter().map(|v| fmt_float(*v)).collect();
            let _ = writeln!(s, "position = [{}]", coords.join(", "));
        }
    }
    if let Some(noise) = &doc.noise {
        let _ = writeln!(s);
        let _ = writeln!(s, "[noise]");
        let _ = writeln!(s, "model = \"{}\"", noise.model);
        let _ = writeln!(s, "sigma = {}", fmt_float(noise.sigma));
        let _ = writeln!(s, "seed = {}", noise.seed);
        let _ = writeln!(s, "trials = {}", noise.trials);
    }
    if let Some(p) = &doc.protocol {
        let _ = writeln!(s);
        let _ = writeln!(s, "[protocol]");
        if let Some(h) = p.h {
            let _ = writeln!(s, "h = {}", fmt_float(h));
        }
        if let Some(m) = p.max_iters {
            let _ = writeln!(s, "max_iters = {m}");
        }
        if let Some(t) = p.tol {
            let _ = writeln!(s, "tol = {}", fmt_float(t));
        }
        if let Some(i) = p.init_seed {
            let _ = writeln!(s, "init_seed = {i}");
        }
    }
    s
}
