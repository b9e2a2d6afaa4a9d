//! Assurance-case assembly: evidence artifact registry, GSN argument
//! patterns, completeness validation, requirements-data traceability, and
//! case export.
//!
//! The argument structure follows the staged assurance methodology for ML
//! components: six argument patterns (scoping, requirements, data, learning,
//! verification, deployment) are instantiated as one union GSN graph whose
//! solution and context nodes bind evidence artifacts from a fixed inventory
//! of 34 ids, `A` through `HH`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The six argument patterns, embedded as data so numbering corrections are
/// applied declaratively (see the `corrections` list in the file).
const PATTERN_DATA: &str = include_str!("../data/gsn_patterns.json");

/// Canonical evidence artifact inventory: id, title, stages the artifact is
/// an input to, and the stage (if any) that produces it.
const ARTIFACT_TABLE: &[(&str, &str, &[u8], Option<u8>)] = &[
    ("A", "System Safety Requirements", &[1, 6], None),
    ("B", "Description of Operating Environment of System", &[1, 6], None),
    ("C", "System Description", &[1, 6], None),
    ("D", "ML Component Description", &[1], None),
    ("E", "Safety Requirements Allocated to ML Component", &[2], Some(1)),
    ("F", "ML Assurance Scoping Argument Pattern", &[1], None),
    ("G", "ML Safety Assurance Scoping Argument", &[], Some(1)),
    ("H", "ML Safety Requirements", &[3, 4, 5], Some(2)),
    ("I", "ML Safety Requirements Argument Pattern", &[2], None),
    ("J", "ML Safety Requirements Validation Results", &[], Some(2)),
    ("K", "ML Safety Requirements Argument", &[], Some(2)),
    ("L", "Data Requirements", &[], Some(3)),
    ("M", "Data Requirements Justification Report", &[], Some(3)),
    ("N", "Development Data", &[], Some(3)),
    ("O", "Internal Test Data", &[], Some(3)),
    ("P", "Verification Data", &[], Some(3)),
    ("Q", "Data Generation Log", &[], Some(3)),
    ("R", "ML Data Argument Pattern", &[3], None),
    ("S", "ML Data Validation Results", &[], Some(3)),
    ("T", "ML Data Argument", &[], Some(3)),
    ("U", "Model Development Log", &[], Some(4)),
    ("V", "ML Model", &[5, 6], Some(4)),
    ("W", "ML Learning Argument Pattern", &[4], None),
    ("X", "Internal Test Results", &[], Some(4)),
    ("Y", "ML Learning Argument", &[], Some(4)),
    ("Z", "ML Verification Results", &[], Some(5)),
    ("AA", "Verification Log", &[], Some(5)),
    ("BB", "ML Verification Argument Pattern", &[5], None),
    ("CC", "ML Verification Argument", &[], Some(5)),
    ("DD", "Erroneous Behaviour Log", &[], Some(6)),
    ("EE", "Operational Scenarios", &[6], None),
    ("FF", "Integration Testing Results", &[], Some(6)),
    ("GG", "ML Deployment Argument Pattern", &[6], None),
    ("HH", "ML Deployment Argument", &[], Some(6)),
];

pub const ARTIFACT_COUNT: usize = 34;

/// One evidence artifact slot in the registry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvidenceArtifact {
    pub id: String,
    pub title: String,
    /// Stages (1-6) this artifact is an input to.
    pub input_stages: Vec<u8>,
    /// Stage (1-6) that produces this artifact, if any.
    pub output_stage: Option<u8>,
    /// Path the artifact was registered from, if registered.
    pub path: Option<String>,
    /// SHA-256 of the registered file contents.
    pub content_hash: Option<String>,
    /// Earlier hashes, oldest first, retained across re-registration.
    pub hash_history: Vec<String>,
    pub present: bool,
}

/// Registry of all 34 artifact slots, keyed by id.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArtifactRegistry {
    pub artifacts: BTreeMap<String, EvidenceArtifact>,
}

impl Default for ArtifactRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ArtifactRegistry {
    /// An empty registry: every slot known, nothing registered.
    pub fn new() -> Self {
        let artifacts = ARTIFACT_TABLE
            .iter()
            .map(|&(id, title, inputs, output)| {
                (
                    id.to_string(),
                    EvidenceArtifact {
                        id: id.to_string(),
                        title: title.to_string(),
                        input_stages: inputs.to_vec(),
                        output_stage: output,
                        path: None,
                        content_hash: None,
                        hash_history: Vec::new(),
                        present: false,
                    },
                )
            })
            .collect();
        ArtifactRegistry { artifacts }
    }

    pub fn get(&self, id: &str) -> Option<&EvidenceArtifact> {
        self.artifacts.get(id)
    }

    pub fn is_present(&self, id: &str) -> bool {
        self.get(id).map(|a| a.present).unwrap_or(false)
    }

    fn slot_mut(&mut self, id: &str) -> Result<&mut EvidenceArtifact> {
        if !self.artifacts.contains_key(id) {
            let valid = ARTIFACT_TABLE
                .iter()
                .map(|&(id, ..)| id)
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::UnknownArtifact {
                id: id.to_string(),
                valid,
            });
        }
        Ok(self.artifacts.get_mut(id).unwrap())
    }

    /// Record presence and content hash of the artifact file at `path`.
    /// Re-registering keeps the previous hash in `hash_history`.
    pub fn register_artifact(&mut self, id: &str, path: &Path) -> Result<()> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.register_bytes(id, &path.display().to_string(), &bytes)
    }

    /// As [`register_artifact`](Self::register_artifact) but hashing content
    /// already in memory.
    pub fn register_bytes(&mut self, id: &str, path: &str, bytes: &[u8]) -> Result<()> {
        let hash = format!("{:x}", Sha256::digest(bytes));
        let slot = self.slot_mut(id)?;
        if let Some(prev) = slot.content_hash.take() {
            if prev != hash {
                slot.hash_history.push(prev);
            }
        }
        slot.path = Some(path.to_string());
        slot.content_hash = Some(hash);
        slot.present = true;
        Ok(())
    }

    /// Mark an artifact absent again (e.g. the file was deleted), keeping
    /// its hash history.
    pub fn unregister(&mut self, id: &str) -> Result<()> {
        let slot = self.slot_mut(id)?;
        if let Some(prev) = slot.content_hash.take() {
            slot.hash_history.push(prev);
        }
        slot.path = None;
        slot.present = false;
        Ok(())
    }

    pub fn present_count(&self) -> usize {
        self.artifacts.values().filter(|a| a.present).count()
    }
}

/// GSN node kinds, determined by the id prefix convention
/// (G=goal, S=strategy, Sn=solution, C=context, J=justification, A=assumption).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GsnKind {
    Goal,
    Strategy,
    Context,
    Justification,
    Assumption,
    Solution,
}

impl GsnKind {
    pub fn from_id(id: &str) -> Result<GsnKind> {
        let kind = if id.starts_with("Sn") {
            GsnKind::Solution
        } else if id.starts_with('G') {
            GsnKind::Goal
        } else if id.starts_with('S') {
            GsnKind::Strategy
        } else if id.starts_with('C') {
            GsnKind::Context
        } else if id.starts_with('J') {
            GsnKind::Justification
        } else if id.starts_with('A') {
            GsnKind::Assumption
        } else {
            return Err(Error::Invariant(format!(
                "node id {id} has no recognized kind prefix"
            )));
        };
        Ok(kind)
    }
}

impl fmt::Display for GsnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GsnKind::Goal => "goal",
            GsnKind::Strategy => "strategy",
            GsnKind::Context => "context",
            GsnKind::Justification => "justification",
            GsnKind::Assumption => "assumption",
            GsnKind::Solution => "solution",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    SupportedBy,
    InContextOf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GsnNode {
    pub id: String,
    pub kind: GsnKind,
    pub statement: String,
    /// Stage (1-6) whose pattern the node belongs to.
    pub stage: u8,
    /// Original id as printed in the source argument, where it differed from
    /// the corrected id.
    pub paper_id: Option<String>,
    /// Bound evidence artifact id, for solutions and artifact contexts.
    pub artifact: Option<String>,
    pub undeveloped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GsnLink {
    pub from: String,
    pub to: String,
    pub kind: LinkKind,
}

/// Per-stage pattern metadata: the pattern artifact the stage instantiates
/// and the assembled argument artifact it produces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StagePattern {
    pub stage: u8,
    pub title: String,
    pub pattern_artifact: String,
    pub argument_artifact: String,
    pub root: String,
}

/// A recorded id correction applied when instantiating the patterns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdCorrection {
    pub stage: u8,
    pub paper_id: String,
    pub corrected_id: String,
    pub note: String,
}

/// Union graph of the six instantiated argument patterns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GsnGraph {
    pub nodes: BTreeMap<String, GsnNode>,
    pub links: Vec<GsnLink>,
    pub stages: Vec<StagePattern>,
    pub corrections: Vec<IdCorrection>,
}

impl GsnGraph {
    pub fn node(&self, id: &str) -> Option<&GsnNode> {
        self.nodes.get(id)
    }

    /// Nodes of one stage in insertion-independent (id-sorted) order.
    pub fn stage_nodes(&self, stage: u8) -> Vec<&GsnNode> {
        self.nodes.values().filter(|n| n.stage == stage).collect()
    }

    pub fn solutions(&self) -> impl Iterator<Item = &GsnNode> {
        self.nodes.values().filter(|n| n.kind == GsnKind::Solution)
    }

    /// True if the supported-by relation contains no cycle.
    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm over supported-by edges only.
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|id| (id.as_str(), 0)).collect();
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for link in &self.links {
            if link.kind == LinkKind::SupportedBy {
                *indegree.get_mut(link.to.as_str()).unwrap() += 1;
                out.entry(link.from.as_str()).or_default().push(&link.to);
            }
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut visited = 0usize;
        while let Some(id) = queue.pop() {
            visited += 1;
            for &next in out.get(id).into_iter().flatten() {
                let d = indegree.get_mut(next).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(next);
                }
            }
        }
        visited == self.nodes.len()
    }
}

// --- Pattern data file schema ------------------------------------------------

#[derive(Deserialize)]
struct PatternFile {
    corrections: Vec<IdCorrection>,
    stages: Vec<PatternStage>,
    cross_links: Vec<PatternLink>,
}

#[derive(Deserialize)]
struct PatternStage {
    stage: u8,
    title: String,
    pattern_artifact: String,
    argument_artifact: String,
    root: String,
    nodes: Vec<PatternNode>,
    links: Vec<PatternLink>,
}

#[derive(Deserialize)]
struct PatternNode {
    id: String,
    statement: String,
    #[serde(default)]
    paper_id: Option<String>,
    #[serde(default)]
    artifact: Option<String>,
    #[serde(default)]
    undeveloped: bool,
}

#[derive(Deserialize)]
struct PatternLink {
    from: String,
    to: String,
    kind: String,
}

fn parse_link_kind(s: &str) -> Result<LinkKind> {
    match s {
        "supported-by" => Ok(LinkKind::SupportedBy),
        "in-context-of" => Ok(LinkKind::InContextOf),
        other => Err(Error::Config(format!("unknown link kind {other:?}"))),
    }
}

/// Instantiate all six argument patterns against the registry.
///
/// Missing artifacts are allowed: solution nodes whose bound artifact is not
/// present are marked undeveloped. The result is checked for the structural
/// invariants (acyclic supported-by, single root per pattern, every link
/// endpoint exists, node kinds consistent with id prefixes).
pub fn instantiate_patterns(registry: &ArtifactRegistry) -> Result<GsnGraph> {
    let file: PatternFile = serde_json::from_str(PATTERN_DATA)?;
    let mut nodes = BTreeMap::new();
    let mut links = Vec::new();
    let mut stages = Vec::new();

    for stage in &file.stages {
        for n in &stage.nodes {
            let kind = GsnKind::from_id(&n.id)?;
            if let Some(ref artifact) = n.artifact {
                if registry.get(artifact).is_none() {
                    return Err(Error::Invariant(format!(
                        "node {} binds unknown artifact {artifact}",
                        n.id
                    )));
                }
            }
            let undeveloped = match kind {
                GsnKind::Solution => match &n.artifact {
                    Some(a) => !registry.is_present(a),
                    None => true,
                },
                _ => n.undeveloped,
            };
            let node = GsnNode {
                id: n.id.clone(),
                kind,
                statement: n.statement.clone(),
                stage: stage.stage,
                paper_id: n.paper_id.clone(),
                artifact: n.artifact.clone(),
                undeveloped,
            };
            if nodes.insert(n.id.clone(), node).is_some() {
                return Err(Error::Invariant(format!("duplicate node id {}", n.id)));
            }
        }
        for l in &stage.links {
            links.push(GsnLink {
                from: l.from.clone(),
                to: l.to.clone(),
                kind: parse_link_kind(&l.kind)?,
            });
        }
        stages.push(StagePattern {
            stage: stage.stage,
            title: stage.title.clone(),
            pattern_artifact: stage.pattern_artifact.clone(),
            argument_artifact: stage.argument_artifact.clone(),
            root: stage.root.clone(),
        });
    }
    for l in &file.cross_links {
        links.push(GsnLink {
            from: l.from.clone(),
            to: l.to.clone(),
            kind: parse_link_kind(&l.kind)?,
        });
    }

    let graph = GsnGraph {
        nodes,
        links,
        stages,
        corrections: file.corrections,
    };
    check_graph_invariants(&graph)?;
    Ok(graph)
}

fn check_graph_invariants(graph: &GsnGraph) -> Result<()> {
    for link in &graph.links {
        for end in [&link.from, &link.to] {
            if !graph.nodes.contains_key(end) {
                return Err(Error::Invariant(format!(
                    "link endpoint {end} does not exist"
                )));
            }
        }
    }
    if !graph.is_acyclic() {
        return Err(Error::Invariant(
            "supported-by relation contains a cycle".into(),
        ));
    }
    // Single root per pattern: exactly one node per stage without an
    // incoming supported-by link from within the same stage.
    for stage in &graph.stages {
        let ids: BTreeSet<&str> = graph
            .nodes
            .values()
            .filter(|n| n.stage == stage.stage && n.kind != GsnKind::Solution)
            .map(|n| n.id.as_str())
            .collect();
        let mut roots: BTreeSet<&str> = graph
            .nodes
            .values()
            .filter(|n| n.stage == stage.stage && n.kind == GsnKind::Goal)
            .map(|n| n.id.as_str())
            .collect();
        for link in &graph.links {
            if ids.contains(link.from.as_str()) || ids.contains(link.to.as_str()) {
                let from_stage = graph.nodes[&link.from].stage;
                let to_stage = graph.nodes[&link.to].stage;
                if from_stage == stage.stage && to_stage == stage.stage {
                    roots.remove(link.to.as_str());
                }
            }
        }
        if roots.len() != 1 || !roots.contains(stage.root.as_str()) {
            return Err(Error::Invariant(format!(
                "stage {} must have the single root {}, found {:?}",
                stage.stage, stage.root, roots
            )));
        }
    }
    Ok(())
}

// --- Validation ----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingSeverity {
    Informational,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Finding {
    pub severity: FindingSeverity,
    pub message: String,
    /// Artifact id the finding concerns, if any.
    pub artifact: Option<String>,
    /// Node ids named by the finding, if any.
    pub nodes: Vec<String>,
}

/// Validate case completeness.
///
/// Findings are produced for undeveloped solutions, absent artifacts that
/// graph nodes or stage patterns reference, present artifacts the case never
/// references (informational), and registry stage annotations that disagree
/// with the canonical inventory. The list is empty exactly when every
/// solution is bound and every bound artifact is present.
pub fn validate_case(graph: &GsnGraph, registry: &ArtifactRegistry) -> Vec<Finding> {
    let mut findings = Vec::new();

    // Stage annotation drift (registries can be loaded from text files).
    for &(id, _, inputs, output) in ARTIFACT_TABLE {
        if let Some(a) = registry.get(id) {
            if a.input_stages != inputs || a.output_stage != output {
                findings.push(Finding {
                    severity: FindingSeverity::Error,
                    message: format!(
                        "artifact [{id}] stage annotations (inputs {:?}, output {:?}) \
                         do not match the canonical inventory (inputs {:?}, output {:?})",
                        a.input_stages, a.output_stage, inputs, output
                    ),
                    artifact: Some(id.to_string()),
                    nodes: vec![],
                });
            }
        } else {
            findings.push(Finding {
                severity: FindingSeverity::Error,
                message: format!("artifact [{id}] is missing from the registry"),
                artifact: Some(id.to_string()),
                nodes: vec![],
            });
        }
    }

    // Undeveloped solutions.
    for node in graph.solutions() {
        if node.artifact.is_none() {
            findings.push(Finding {
                severity: FindingSeverity::Error,
                message: format!("solution {} binds no evidence artifact", node.id),
                artifact: None,
                nodes: vec![node.id.clone()],
            });
        }
    }

    // References per artifact: bound nodes plus per-stage pattern/argument roles.
    let mut node_refs: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in graph.nodes.values() {
        if let Some(ref artifact) = node.artifact {
            node_refs.entry(artifact).or_default().push(&node.id);
        }
    }
    let mut stage_refs: BTreeMap<&str, String> = BTreeMap::new();
    for stage in &graph.stages {
        stage_refs.insert(
            &stage.pattern_artifact,
            format!("stage {} pattern", stage.stage),
        );
        stage_refs.insert(
            &stage.argument_artifact,
            format!("stage {} assembled argument", stage.stage),
        );
    }

    for artifact in registry.artifacts.values() {
        let nodes = node_refs.get(artifact.id.as_str());
        let role = stage_refs.get(artifact.id.as_str());
        match (artifact.present, nodes, role) {
            (false, None, None) => {} // absent and unreferenced: covered by graph scope
            (false, nodes, role) => {
                let mut named: Vec<String> = nodes
                    .into_iter()
                    .flatten()
                    .map(|s| s.to_string())
                    .collect();
                named.sort();
                let mut message = format!(
                    "artifact [{}] ({}) is absent but required",
                    artifact.id, artifact.title
                );
                if !named.is_empty() {
                    message.push_str(&format!(" by nodes {}", named.join(", ")));
                }
                if let Some(role) = role {
                    message.push_str(&format!(" as the {role}"));
                }
                findings.push(Finding {
                    severity: FindingSeverity::Error,
                    message,
                    artifact: Some(artifact.id.clone()),
                    nodes: named,
                });
            }
            (true, None, None) => {
                findings.push(Finding {
                    severity: FindingSeverity::Informational,
                    message: format!(
                        "artifact [{}] ({}) is registered but never referenced by the case",
                        artifact.id, artifact.title
                    ),
                    artifact: Some(artifact.id.clone()),
                    nodes: vec![],
                });
            }
            (true, _, _) => {}
        }
    }

    findings
}

// --- Traceability ---------------------------------------------------------------

pub const ML_REQUIREMENTS: &[&str] = &[
    "SYS-ML-REQ1",
    "SYS-ML-REQ2",
    "SYS-PER-REQ1",
    "SYS-PER-REQ2",
    "SYS-PER-REQ3",
    "SYS-PER-REQ4",
    "SYS-PER-REQ5",
    "SYS-PER-REQ6",
    "SYS-ROB-REQ1",
    "SYS-ROB-REQ2",
    "SYS-ROB-REQ3",
    "SYS-ROB-REQ4",
];

pub const DATA_REQUIREMENTS: &[&str] = &[
    "DAT-REL-REQ1",
    "DAT-REL-REQ2",
    "DAT-REL-REQ3",
    "DAT-REL-REQ4",
    "DAT-REL-REQ5",
    "DAT-REL-REQ6",
    "DAT-REL-REQ7",
    "DAT-COM-REQ1",
    "DAT-COM-REQ2",
    "DAT-COM-REQ3",
    "DAT-COM-REQ4",
    "DAT-COM-REQ5",
    "DAT-COM-REQ6",
    "DAT-COM-REQ7",
    "DAT-BAL-REQ1",
    "DAT-BAL-REQ2",
    "DAT-BAL-REQ3",
    "DAT-ACC-REQ1",
    "DAT-ACC-REQ2",
    "DAT-ACC-REQ3",
];

/// Declared exemptions: ML requirements with no data-requirement relation
/// (rolling-window miss rate and inference speed are properties of the
/// model and platform, not of the data).
pub const TRACEABILITY_EXEMPTIONS: &[&str] = &["SYS-PER-REQ4", "SYS-PER-REQ6"];

/// Mapping configuration: (ML requirement, data requirement) pairs plus the
/// declared exemptions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceabilityConfig {
    pub pairs: Vec<(String, String)>,
    pub exemptions: Vec<String>,
}

/// Default mapping seeded from the data-requirement rationales.
pub fn default_traceability_config() -> TraceabilityConfig {
    let pairs: &[(&str, &str)] = &[
        ("SYS-ML-REQ1", "DAT-REL-REQ1"),
        ("SYS-ML-REQ1", "DAT-REL-REQ4"),
        ("SYS-ML-REQ1", "DAT-REL-REQ5"),
        ("SYS-ML-REQ1", "DAT-COM-REQ6"),
        ("SYS-ML-REQ2", "DAT-REL-REQ7"),
        ("SYS-ML-REQ2", "DAT-COM-REQ7"),
        ("SYS-ML-REQ2", "DAT-BAL-REQ3"),
        ("SYS-PER-REQ1", "DAT-COM-REQ5"),
        ("SYS-PER-REQ1", "DAT-ACC-REQ3"),
        ("SYS-PER-REQ2", "DAT-ACC-REQ3"),
        ("SYS-PER-REQ3", "DAT-BAL-REQ3"),
        ("SYS-PER-REQ5", "DAT-ACC-REQ1"),
        ("SYS-PER-REQ5", "DAT-ACC-REQ2"),
        ("SYS-ROB-REQ1", "DAT-REL-REQ2"),
        ("SYS-ROB-REQ1", "DAT-REL-REQ3"),
        ("SYS-ROB-REQ1", "DAT-REL-REQ4"),
        ("SYS-ROB-REQ1", "DAT-COM-REQ1"),
        ("SYS-ROB-REQ2", "DAT-COM-REQ3"),
        ("SYS-ROB-REQ2", "DAT-COM-REQ4"),
        ("SYS-ROB-REQ3", "DAT-COM-REQ5"),
        ("SYS-ROB-REQ3", "DAT-BAL-REQ2"),
        ("SYS-ROB-REQ4", "DAT-REL-REQ6"),
        ("SYS-ROB-REQ4", "DAT-COM-REQ2"),
        ("SYS-ROB-REQ4", "DAT-BAL-REQ1"),
    ];
    TraceabilityConfig {
        pairs: pairs
            .iter()
            .map(|&(m, d)| (m.to_string(), d.to_string()))
            .collect(),
        exemptions: TRACEABILITY_EXEMPTIONS
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceabilityMatrix {
    pub ml_requirements: Vec<String>,
    pub data_requirements: Vec<String>,
    /// Cells as (ML requirement, data requirement) pairs, deduplicated.
    pub cells: BTreeSet<(String, String)>,
    /// ML requirements without any data requirement, minus the exemptions.
    pub unmapped_ml: Vec<String>,
    /// Data requirements without any ML requirement.
    pub unmapped_data: Vec<String>,
    /// True when the set of unmapped ML requirements equals the declared
    /// exemptions exactly and every data requirement is mapped.
    pub checks_pass: bool,
}

/// Compute the requirements-data traceability matrix and its checks.
pub fn traceability_matrix(config: &TraceabilityConfig) -> Result<TraceabilityMatrix> {
    let ml: BTreeSet<&str> = ML_REQUIREMENTS.iter().copied().collect();
    let dat: BTreeSet<&str> = DATA_REQUIREMENTS.iter().copied().collect();
    for (m, d) in &config.pairs {
        if !ml.contains(m.as_str()) {
            return Err(Error::Config(format!("unknown ML requirement {m}")));
        }
        if !dat.contains(d.as_str()) {
            return Err(Error::Config(format!("unknown data requirement {d}")));
        }
    }
    let cells: BTreeSet<(String, String)> = config.pairs.iter().cloned().collect();
    let mapped_ml: BTreeSet<&str> = cells.iter().map(|(m, _)| m.as_str()).collect();
    let mapped_dat: BTreeSet<&str> = cells.iter().map(|(_, d)| d.as_str()).collect();

    let exemptions: BTreeSet<&str> = config.exemptions.iter().map(|s| s.as_str()).collect();
    let unmapped_ml: Vec<String> = ML_REQUIREMENTS
        .iter()
        .filter(|m| !mapped_ml.contains(*m))
        .map(|s| s.to_string())
        .collect();
    let unmapped_data: Vec<String> = DATA_REQUIREMENTS
        .iter()
        .filter(|d| !mapped_dat.contains(*d))
        .map(|s| s.to_string())
        .collect();
    let unmapped_set: BTreeSet<&str> = unmapped_ml.iter().map(|s| s.as_str()).collect();
    let checks_pass = unmapped_data.is_empty() && unmapped_set == exemptions;

    Ok(TraceabilityMatrix {
        ml_requirements: ML_REQUIREMENTS.iter().map(|s| s.to_string()).collect(),
        data_requirements: DATA_REQUIREMENTS.iter().map(|s| s.to_string()).collect(),
        cells,
        unmapped_ml,
        unmapped_data,
        checks_pass,
    })
}

/// Render the matrix as a plain-text table with `x` marks.
pub fn render_traceability_matrix(matrix: &TraceabilityMatrix) -> String {
    let mut out = String::new();
    let label_width = matrix
        .data_requirements
        .iter()
        .map(|d| d.len())
        .max()
        .unwrap_or(0);
    out.push_str(&format!("{:label_width$} ", ""));
    for (i, _) in matrix.ml_requirements.iter().enumerate() {
        out.push_str(&format!("{:>4}", format!("M{}", i + 1)));
    }
    out.push('\n');
    for d in &matrix.data_requirements {
        out.push_str(&format!("{d:label_width$} "));
        for m in &matrix.ml_requirements {
            let mark = if matrix.cells.contains(&(m.clone(), d.clone())) {
                "x"
            } else {
                "."
            };
            out.push_str(&format!("{mark:>4}"));
        }
        out.push('\n');
    }
    out.push_str("legend: ");
    for (i, m) in matrix.ml_requirements.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("M{}={m}", i + 1));
    }
    out.push('\n');
    out
}

// --- Export ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Graph-description format for rendering (DOT).
    Dot,
    /// Machine-readable JSON (round-trippable).
    Json,
    /// Human-readable report ordered by stage.
    Report,
}

/// Serialized case: graph plus registry, the unit of the machine-readable
/// export.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseDocument {
    pub graph: GsnGraph,
    pub registry: ArtifactRegistry,
}

/// Export the assembled case in the requested format.
pub fn export_case(
    graph: &GsnGraph,
    registry: &ArtifactRegistry,
    format: ExportFormat,
) -> Result<String> {
    match format {
        ExportFormat::Dot => Ok(export_dot(graph)),
        ExportFormat::Json => {
            let doc = CaseDocument {
                graph: graph.clone(),
                registry: registry.clone(),
            };
            Ok(serde_json::to_string_pretty(&doc)?)
        }
        ExportFormat::Report => Ok(export_report(graph, registry)),
    }
}

/// Parse a machine-readable export back into graph and registry.
pub fn import_case(text: &str) -> Result<CaseDocument> {
    Ok(serde_json::from_str(text)?)
}

fn dot_shape(kind: GsnKind) -> &'static str {
    match kind {
        GsnKind::Goal => "box",
        GsnKind::Strategy => "parallelogram",
        GsnKind::Context => "box, style=rounded",
        GsnKind::Justification => "ellipse",
        GsnKind::Assumption => "ellipse, style=dashed",
        GsnKind::Solution => "circle",
    }
}

fn export_dot(graph: &GsnGraph) -> String {
    let mut out = String::from("digraph assurance_case {\n  rankdir=TB;\n");
    for node in graph.nodes.values() {
        let mut label = format!("{}\\n{}", node.id, node.statement.replace('"', "'"));
        if let Some(ref artifact) = node.artifact {
            label.push_str(&format!("\\n[{artifact}]"));
        }
        if node.undeveloped {
            label.push_str("\\n(undeveloped)");
        }
        out.push_str(&format!(
            "  \"{}\" [shape={}, label=\"{}\"];\n",
            node.id,
            dot_shape(node.kind),
            label
        ));
    }
    for link in &graph.links {
        let style = match link.kind {
            LinkKind::SupportedBy => "solid",
            LinkKind::InContextOf => "dashed",
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [style={}];\n",
            link.from, link.to, style
        ));
    }
    out.push_str("}\n");
    out
}

fn export_report(graph: &GsnGraph, registry: &ArtifactRegistry) -> String {
    let mut out = String::new();
    out.push_str("# Assurance Case Report\n\n");
    out.push_str(&format!(
        "Evidence artifacts registered: {}/{}\n\n",
        registry.present_count(),
        ARTIFACT_COUNT
    ));
    if !graph.corrections.is_empty() {
        out.push_str("## Applied id corrections\n\n");
        for c in &graph.corrections {
            out.push_str(&format!(
                "- stage {}: {} -> {} ({})\n",
                c.stage, c.paper_id, c.corrected_id, c.note
            ));
        }
        out.push('\n');
    }
    for stage in &graph.stages {
        let pattern = registry.get(&stage.pattern_artifact);
        let argument = registry.get(&stage.argument_artifact);
        out.push_str(&format!("## Stage {}: {}\n\n", stage.stage, stage.title));
        if let Some(a) = argument {
            out.push_str(&format!(
                "**{} [{}]** instantiates the {} [{}] through the artifacts bound below.\n\n",
                a.title,
                a.id,
                pattern.map(|p| p.title.as_str()).unwrap_or("pattern"),
                stage.pattern_artifact
            ));
        }
        for node in graph.stage_nodes(stage.stage) {
            out.push_str(&format!(
                "- {} ({}): {}",
                node.id, node.kind, node.statement
            ));
            if let Some(ref paper_id) = node.paper_id {
                out.push_str(&format!(" (originally {paper_id})"));
            }
            if let Some(ref artifact) = node.artifact {
                out.push_str(&format!(" [{artifact}]"));
            }
            if node.undeveloped {
                out.push_str(" (undeveloped)");
            }
            out.push('\n');
        }
        out.push_str("\nArtifacts of this stage:\n");
        for artifact in registry.artifacts.values() {
            let involved = artifact.input_stages.contains(&stage.stage)
                || artifact.output_stage == Some(stage.stage);
            if !involved {
                continue;
            }
            let hash = artifact.content_hash.as_deref().unwrap_or("unregistered");
            out.push_str(&format!(
                "- [{}] {}: sha256 {}\n",
                artifact.id, artifact.title, hash
            ));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn full_registry() -> ArtifactRegistry {
        let mut registry = ArtifactRegistry::new();
        for &(id, title, ..) in ARTIFACT_TABLE {
            registry
                .register_bytes(id, &format!("case/{id}.md"), title.as_bytes())
                .unwrap();
        }
        registry
    }

    #[test]
    fn inventory_has_exactly_34_artifacts_with_valid_stages() {
        let registry = ArtifactRegistry::new();
        assert_eq!(registry.artifacts.len(), ARTIFACT_COUNT);
        for artifact in registry.artifacts.values() {
            for &s in &artifact.input_stages {
                assert!((1..=6).contains(&s), "{} input stage {s}", artifact.id);
            }
            if let Some(s) = artifact.output_stage {
                assert!((1..=6).contains(&s), "{} output stage {s}", artifact.id);
            }
            assert!(
                !artifact.input_stages.is_empty() || artifact.output_stage.is_some(),
                "{} belongs to no stage",
                artifact.id
            );
        }
    }

    #[test]
    fn register_from_file_records_presence_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verification_report.md");
        std::fs::write(&path, b"verification results").unwrap();
        let mut registry = ArtifactRegistry::new();
        registry.register_artifact("Z", &path).unwrap();
        let artifact = registry.get("Z").unwrap();
        assert!(artifact.present);
        assert_eq!(
            artifact.content_hash.as_deref().unwrap(),
            format!("{:x}", Sha256::digest(b"verification results"))
        );
    }

    #[test]
    fn unknown_artifact_id_lists_valid_ids() {
        let mut registry = ArtifactRegistry::new();
        let err = registry
            .register_bytes("ZZ", "case/zz.md", b"bogus")
            .unwrap_err();
        match err {
            Error::UnknownArtifact { id, valid } => {
                assert_eq!(id, "ZZ");
                assert!(valid.contains("A,"));
                assert!(valid.contains("HH"));
            }
            other => panic!("expected UnknownArtifact, got {other:?}"),
        }
    }

    #[test]
    fn reregistration_retains_prior_hash_in_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.md");
        let mut file = std::fs::File::create(&path).unwrap();
        file.write_all(b"first run").unwrap();
        drop(file);
        let mut registry = ArtifactRegistry::new();
        registry.register_artifact("X", &path).unwrap();
        let first_hash = registry.get("X").unwrap().content_hash.clone().unwrap();

        std::fs::write(&path, b"second run").unwrap();
        registry.register_artifact("X", &path).unwrap();
        let artifact = registry.get("X").unwrap();
        assert_eq!(artifact.hash_history, vec![first_hash.clone()]);
        assert_ne!(artifact.content_hash.as_deref(), Some(first_hash.as_str()));
    }

    #[test]
    fn patterns_cover_expected_goal_inventory() {
        let graph = instantiate_patterns(&ArtifactRegistry::new()).unwrap();
        let goals: Vec<&str> = graph
            .nodes
            .values()
            .filter(|n| n.kind == GsnKind::Goal)
            .map(|n| n.id.as_str())
            .collect();
        let expected: Vec<String> = std::iter::once("G1.1".to_string())
            .chain((1..=6).map(|i| format!("G2.{i}")))
            .chain((1..=7).map(|i| format!("G3.{i}")))
            .chain((1..=5).map(|i| format!("G4.{i}")))
            .chain((1..=6).map(|i| format!("G5.{i}")))
            .chain((1..=8).map(|i| format!("G6.{i}")))
            .collect();
        let mut sorted_goals: Vec<&str> = goals.clone();
        sorted_goals.sort();
        let mut sorted_expected: Vec<&str> = expected.iter().map(|s| s.as_str()).collect();
        sorted_expected.sort();
        assert_eq!(sorted_goals, sorted_expected);
    }

    #[test]
    fn node_kinds_follow_id_prefix_convention() {
        let graph = instantiate_patterns(&ArtifactRegistry::new()).unwrap();
        for node in graph.nodes.values() {
            assert_eq!(node.kind, GsnKind::from_id(&node.id).unwrap(), "{}", node.id);
        }
        assert_eq!(graph.node("Sn2.2").unwrap().kind, GsnKind::Solution);
        assert_eq!(graph.node("A1.1").unwrap().kind, GsnKind::Assumption);
        assert_eq!(graph.node("J5.1").unwrap().kind, GsnKind::Justification);
    }

    #[test]
    fn id_corrections_are_recorded_with_original_ids() {
        let graph = instantiate_patterns(&ArtifactRegistry::new()).unwrap();
        assert_eq!(graph.corrections.len(), 4);
        for c in &graph.corrections {
            let node = graph.node(&c.corrected_id).unwrap();
            assert_eq!(node.paper_id.as_deref(), Some(c.paper_id.as_str()));
        }
        // The corrected ids resolve the collisions: stage 5's C5.1 and the
        // stage 6 context that originally reused that id both exist.
        assert_eq!(graph.node("C5.1").unwrap().stage, 5);
        assert_eq!(graph.node("C6.2").unwrap().stage, 6);
    }

    #[test]
    fn graph_is_acyclic_with_single_root_per_pattern() {
        let graph = instantiate_patterns(&ArtifactRegistry::new()).unwrap();
        assert!(graph.is_acyclic());
        assert_eq!(graph.stages.len(), 6);
        for link in &graph.links {
            assert!(graph.nodes.contains_key(&link.from));
            assert!(graph.nodes.contains_key(&link.to));
        }
    }

    #[test]
    fn empty_registry_marks_every_solution_undeveloped() {
        let graph = instantiate_patterns(&ArtifactRegistry::new()).unwrap();
        for node in graph.solutions() {
            assert!(node.undeveloped, "{} should be undeveloped", node.id);
        }
    }

    #[test]
    fn full_registry_yields_zero_findings() {
        let registry = full_registry();
        let graph = instantiate_patterns(&registry).unwrap();
        assert_eq!(
            graph.solutions().filter(|n| n.undeveloped).count(),
            0,
            "no solution should be undeveloped with a full registry"
        );
        let findings = validate_case(&graph, &registry);
        assert!(findings.is_empty(), "unexpected findings: {findings:?}");
    }

    #[test]
    fn removing_verification_results_names_g5_4_solution() {
        let mut registry = full_registry();
        registry.unregister("Z").unwrap();
        let graph = instantiate_patterns(&registry).unwrap();
        let findings = validate_case(&graph, &registry);
        assert_eq!(findings.len(), 1);
        let finding = &findings[0];
        assert_eq!(finding.artifact.as_deref(), Some("Z"));
        assert!(finding.nodes.contains(&"Sn5.2".to_string()));
        // Sn5.2 is the evidence for goal G5.4.
        let supports_g5_4 = graph
            .links
            .iter()
            .any(|l| l.from == "G5.4" && l.to == "Sn5.2" && l.kind == LinkKind::SupportedBy);
        assert!(supports_g5_4);
    }

    #[test]
    fn deleting_any_artifact_is_detected() {
        for &(id, ..) in ARTIFACT_TABLE {
            let mut registry = full_registry();
            registry.unregister(id).unwrap();
            let graph = instantiate_patterns(&registry).unwrap();
            let findings = validate_case(&graph, &registry);
            assert!(
                findings
                    .iter()
                    .any(|f| f.artifact.as_deref() == Some(id)
                        && f.severity == FindingSeverity::Error),
                "deleting [{id}] produced no finding"
            );
            // The findings name the solution nodes bound to the artifact.
            let bound_solutions: Vec<&str> = graph
                .solutions()
                .filter(|n| n.artifact.as_deref() == Some(id))
                .map(|n| n.id.as_str())
                .collect();
            for solution in bound_solutions {
                assert!(
                    findings
                        .iter()
                        .any(|f| f.nodes.iter().any(|n| n == solution)),
                    "finding for [{id}] does not name {solution}"
                );
            }
        }
    }

    #[test]
    fn orphaned_artifact_reports_informational_finding() {
        let mut registry = full_registry();
        let graph = instantiate_patterns(&registry).unwrap();
        // Detach [Q] from the case by rebuilding the graph without its
        // context node, leaving the registered artifact orphaned.
        let mut orphan_graph = graph.clone();
        orphan_graph.nodes.remove("C3.5");
        orphan_graph.links.retain(|l| l.to != "C3.5");
        let findings = validate_case(&orphan_graph, &registry);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, FindingSeverity::Informational);
        assert_eq!(findings[0].artifact.as_deref(), Some("Q"));
        // Stage annotation drift is also detected.
        registry.artifacts.get_mut("Q").unwrap().output_stage = Some(4);
        let drift = validate_case(&graph, &registry);
        assert!(drift
            .iter()
            .any(|f| f.artifact.as_deref() == Some("Q")
                && f.message.contains("canonical inventory")));
    }

    #[test]
    fn default_traceability_mapping_passes_checks() {
        let config = default_traceability_config();
        let matrix = traceability_matrix(&config).unwrap();
        assert!(matrix.checks_pass, "unmapped: {:?}", matrix.unmapped_ml);
        assert_eq!(
            matrix.unmapped_ml,
            vec!["SYS-PER-REQ4".to_string(), "SYS-PER-REQ6".to_string()]
        );
        assert!(matrix.unmapped_data.is_empty());
        let rendered = render_traceability_matrix(&matrix);
        assert!(rendered.contains("DAT-REL-REQ5"));
        assert!(rendered.contains("SYS-ML-REQ1"));
    }

    #[test]
    fn empty_traceability_mapping_warns_for_every_requirement() {
        let config = TraceabilityConfig {
            pairs: vec![],
            exemptions: TRACEABILITY_EXEMPTIONS.iter().map(|s| s.to_string()).collect(),
        };
        let matrix = traceability_matrix(&config).unwrap();
        assert!(!matrix.checks_pass);
        assert_eq!(matrix.unmapped_ml.len(), ML_REQUIREMENTS.len());
        assert_eq!(matrix.unmapped_data.len(), DATA_REQUIREMENTS.len());
    }

    #[test]
    fn single_pair_renders_cell_without_warning_for_it() {
        let config = TraceabilityConfig {
            pairs: vec![("SYS-ML-REQ1".to_string(), "DAT-REL-REQ5".to_string())],
            exemptions: vec![],
        };
        let matrix = traceability_matrix(&config).unwrap();
        assert!(matrix
            .cells
            .contains(&("SYS-ML-REQ1".to_string(), "DAT-REL-REQ5".to_string())));
        assert!(!matrix.unmapped_ml.contains(&"SYS-ML-REQ1".to_string()));
        assert!(!matrix.unmapped_data.contains(&"DAT-REL-REQ5".to_string()));
    }

    #[test]
    fn dot_export_declares_every_node_and_edge() {
        let registry = full_registry();
        let graph = instantiate_patterns(&registry).unwrap();
        let dot = export_case(&graph, &registry, ExportFormat::Dot).unwrap();
        for node in graph.nodes.keys() {
            assert!(dot.contains(&format!("\"{node}\" [shape=")), "{node}");
        }
        let edge_count = dot.matches(" -> ").count();
        assert_eq!(edge_count, graph.links.len());
    }

    #[test]
    fn json_export_round_trips_preserving_graph() {
        let registry = full_registry();
        let graph = instantiate_patterns(&registry).unwrap();
        let json = export_case(&graph, &registry, ExportFormat::Json).unwrap();
        let doc = import_case(&json).unwrap();
        assert_eq!(doc.graph, graph);
        assert_eq!(doc.registry, registry);
    }

    #[test]
    fn report_references_all_34_artifact_hashes() {
        let registry = full_registry();
        let graph = instantiate_patterns(&registry).unwrap();
        let report = export_case(&graph, &registry, ExportFormat::Report).unwrap();
        for artifact in registry.artifacts.values() {
            let hash = artifact.content_hash.as_deref().unwrap();
            assert!(
                report.contains(hash),
                "report missing hash of [{}]",
                artifact.id
            );
        }
        // Stage ordering: the six boxed arguments appear in stage order.
        let mut last = 0;
        for stage in 1..=6 {
            let pos = report
                .find(&format!("## Stage {stage}:"))
                .unwrap_or_else(|| panic!("missing stage {stage} section"));
            assert!(pos > last);
            last = pos;
        }
    }
}
