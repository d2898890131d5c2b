//! The neuron graph: roles, neuron models, directed weighted edges and their
//! plasticity configuration, plus the `snn-topology/1` file format.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::SeededRng;

pub const TOPOLOGY_FORMAT: &str = "snn-topology/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Hidden,
    Output,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Rate,
    Lif,
}

/// Rate neuron: `s' = act(u + w_s * s + b)`, output equals state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateParams {
    pub w_s: f64,
    pub b: f64,
    pub activation: Activation,
}

impl Default for RateParams {
    fn default() -> Self {
        Self { w_s: 0.0, b: 0.0, activation: Activation::Tanh }
    }
}

/// Leaky integrate-and-fire neuron with hard reset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub theta: f64,
    pub s_reset: f64,
    pub s_rest: f64,
    pub dt: f64,
    /// Sharpness of the fast-sigmoid surrogate derivative.
    pub beta: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { theta: 1.0, s_reset: 0.0, s_rest: 0.0, dt: 0.5, beta: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NeuronModel {
    Rate(RateParams),
    Lif(LifParams),
}

impl NeuronModel {
    pub fn tag(&self) -> ModelTag {
        match self {
            NeuronModel::Rate(_) => ModelTag::Rate,
            NeuronModel::Lif(_) => ModelTag::Lif,
        }
    }

    /// Membrane or activation value a fresh rollout starts from.
    pub fn resting_state(&self) -> f64 {
        match self {
            NeuronModel::Rate(_) => 0.0,
            NeuronModel::Lif(p) => p.s_rest,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronSpec {
    pub id: usize,
    pub role: Role,
    pub model: NeuronModel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlasticityRule {
    #[default]
    None,
    Hebbian,
    Stdp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub src: usize,
    pub dst: usize,
    pub w0: f64,
    #[serde(default)]
    pub plastic: bool,
    #[serde(default)]
    pub rule: PlasticityRule,
}

impl EdgeSpec {
    pub fn fixed(src: usize, dst: usize, w0: f64) -> Self {
        Self { src, dst, w0, plastic: false, rule: PlasticityRule::None }
    }

    pub fn plastic(src: usize, dst: usize, w0: f64, rule: PlasticityRule) -> Self {
        Self { src, dst, w0, plastic: true, rule }
    }

    /// The rule actually applied during a rollout.
    pub fn effective_rule(&self) -> PlasticityRule {
        if self.plastic {
            self.rule
        } else {
            PlasticityRule::None
        }
    }
}

/// Network-wide plasticity settings: clip bound, initial values of the
/// trainable Hebbian meta-parameters, and fixed STDP constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlasticityConfig {
    pub clip: f64,
    pub eta_init: f64,
    pub lambda_init: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub trace_decay: f64,
    /// Carry plastic weights from one episode into the next.
    pub persist_across_episodes: bool,
}

impl Default for PlasticityConfig {
    fn default() -> Self {
        Self {
            clip: 5.0,
            eta_init: 0.01,
            lambda_init: 0.95,
            a_plus: 0.05,
            a_minus: 0.05,
            trace_decay: 0.8,
            persist_across_episodes: false,
        }
    }
}

/// One validation finding.
#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    NoInputs,
    NoOutputs,
    NonDenseIds { expected: usize, found: usize },
    EdgeOutOfRange { edge: usize },
    EdgeIntoInput { edge: usize },
    DuplicateEdge { edge: usize },
    StdpOnRateNeuron { edge: usize },
    PlasticWithoutRule { edge: usize },
    NonFiniteWeight { edge: usize },
    InvalidLifParams { neuron: usize, reason: &'static str },
    NonFiniteNeuronParam { neuron: usize },
    InvalidPlasticity { reason: &'static str },
    AliasOutOfRange { alias: String },
    UnreachableOutput { neuron: usize },
    IsolatedNeuron { neuron: usize },
    RuleOnStaticEdge { edge: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoInputs => write!(f, "no input neurons"),
            Issue::NoOutputs => write!(f, "no output neurons"),
            Issue::NonDenseIds { expected, found } => {
                write!(f, "neuron ids not dense: expected id {expected}, found {found}")
            }
            Issue::EdgeOutOfRange { edge } => write!(f, "edge {edge}: endpoint out of range"),
            Issue::EdgeIntoInput { edge } => write!(f, "edge {edge}: edge into input"),
            Issue::DuplicateEdge { edge } => write!(f, "edge {edge}: duplicate edge"),
            Issue::StdpOnRateNeuron { edge } => {
                write!(f, "edge {edge}: stdp rule requires lif endpoints")
            }
            Issue::PlasticWithoutRule { edge } => {
                write!(f, "edge {edge}: plastic edge without a rule")
            }
            Issue::NonFiniteWeight { edge } => write!(f, "edge {edge}: non-finite w0"),
            Issue::InvalidLifParams { neuron, reason } => {
                write!(f, "neuron {neuron}: invalid lif params ({reason})")
            }
            Issue::NonFiniteNeuronParam { neuron } => {
                write!(f, "neuron {neuron}: non-finite parameter")
            }
            Issue::InvalidPlasticity { reason } => write!(f, "plasticity: {reason}"),
            Issue::AliasOutOfRange { alias } => write!(f, "alias {alias:?} names no neuron"),
            Issue::UnreachableOutput { neuron } => {
                write!(f, "neuron {neuron}: unreachable output")
            }
            Issue::IsolatedNeuron { neuron } => write!(f, "neuron {neuron}: isolated neuron"),
            Issue::RuleOnStaticEdge { edge } => {
                write!(f, "edge {edge}: rule ignored on non-plastic edge")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("unsupported topology format {found:?} (expected {TOPOLOGY_FORMAT:?})")]
    Format { found: String },
    #[error("invalid topology:\n{0}")]
    Validation(ValidationReport),
    #[error("density {0} outside (0, 1]")]
    Density(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unchecked description of a network, as read from a file or assembled by
/// hand. [`validate`] inspects it; [`TopologyDraft::build`] turns it into a
/// [`NetworkTopology`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TopologyDraft {
    pub neurons: Vec<NeuronSpec>,
    pub edges: Vec<EdgeSpec>,
    pub plasticity: PlasticityConfig,
    pub aliases: BTreeMap<String, usize>,
}

impl TopologyDraft {
    pub fn new(neurons: Vec<NeuronSpec>, edges: Vec<EdgeSpec>) -> Self {
        Self { neurons, edges, ..Default::default() }
    }

    pub fn build(mut self) -> Result<NetworkTopology, TopologyError> {
        let report = validate(&self);
        if !report.is_ok() {
            return Err(TopologyError::Validation(report));
        }
        self.neurons.sort_by_key(|n| n.id);
        Ok(NetworkTopology::index(self, report.warnings))
    }
}

/// Check a draft for fatal errors and non-fatal warnings. Pure.
pub fn validate(draft: &TopologyDraft) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = draft.neurons.len();

    let mut ids: Vec<usize> = draft.neurons.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    if let Some((expected, &found)) = ids.iter().enumerate().find(|(i, &id)| *i != id) {
        report.errors.push(Issue::NonDenseIds { expected, found });
    }
    let dense = report.errors.is_empty();

    if !draft.neurons.iter().any(|s| s.role == Role::Input) {
        report.errors.push(Issue::NoInputs);
    }
    if !draft.neurons.iter().any(|s| s.role == Role::Output) {
        report.errors.push(Issue::NoOutputs);
    }

    for spec in &draft.neurons {
        match &spec.model {
            NeuronModel::Rate(p) => {
                if !p.w_s.is_finite() || !p.b.is_finite() {
                    report.errors.push(Issue::NonFiniteNeuronParam { neuron: spec.id });
                }
            }
            NeuronModel::Lif(p) => {
                let reason = if ![p.theta, p.s_reset, p.s_rest, p.dt, p.beta]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    Some("non-finite value")
                } else if p.theta <= p.s_reset {
                    Some("theta must exceed s_reset")
                } else if !(p.dt > 0.0 && p.dt <= 1.0) {
                    Some("dt must lie in (0, 1]")
                } else if p.beta <= 0.0 {
                    Some("beta must be positive")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    report.errors.push(Issue::InvalidLifParams { neuron: spec.id, reason });
                }
            }
        }
    }

    let pc = &draft.plasticity;
    let plasticity_reason = if !(pc.clip.is_finite() && pc.clip > 0.0) {
        Some("clip must be positive")
    } else if !(pc.trace_decay > 0.0 && pc.trace_decay < 1.0) {
        Some("trace_decay must lie in (0, 1)")
    } else if !(pc.lambda_init > 0.0 && pc.lambda_init < 1.0) {
        Some("lambda_init must lie in (0, 1)")
    } else if ![pc.eta_init, pc.a_plus, pc.a_minus].iter().all(|v| v.is_finite()) {
        Some("non-finite meta-parameter")
    } else {
        None
    };
    if let Some(reason) = plasticity_reason {
        report.errors.push(Issue::InvalidPlasticity { reason });
    }

    for (alias, &id) in &draft.aliases {
        if id >= n {
            report.errors.push(Issue::AliasOutOfRange { alias: alias.clone() });
        }
    }

    // Everything below indexes neurons by id.
    if !dense {
        return report;
    }
    let mut role = vec![Role::Hidden; n];
    let mut is_lif = vec![false; n];
    for s in &draft.neurons {
        role[s.id] = s.role;
        is_lif[s.id] = matches!(s.model, NeuronModel::Lif(_));
    }

    let mut seen = HashSet::new();
    for (k, e) in draft.edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            report.errors.push(Issue::EdgeOutOfRange { edge: k });
            continue;
        }
        if role[e.dst] == Role::Input {
            report.errors.push(Issue::EdgeIntoInput { edge: k });
        }
        if !seen.insert((e.src, e.dst)) {
            report.errors.push(Issue::DuplicateEdge { edge: k });
        }
        if !e.w0.is_finite() {
            report.errors.push(Issue::NonFiniteWeight { edge: k });
        }
        if e.rule == PlasticityRule::Stdp && !(is_lif[e.src] && is_lif[e.dst]) {
            report.errors.push(Issue::StdpOnRateNeuron { edge: k });
        }
        if e.plastic && e.rule == PlasticityRule::None {
            report.errors.push(Issue::PlasticWithoutRule { edge: k });
        }
        if !e.plastic && e.rule != PlasticityRule::None {
            report.warnings.push(Issue::RuleOnStaticEdge { edge: k });
        }
    }

    // Reachability from the input set, breadth first.
    let mut adjacency = vec![Vec::new(); n];
    let mut degree = vec![0usize; n];
    for e in draft.edges.iter().filter(|e| e.src < n && e.dst < n) {
        adjacency[e.src].push(e.dst);
        degree[e.src] += 1;
        degree[e.dst] += 1;
    }
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| role[i] == Role::Input).collect();
    for &i in &queue {
        reached[i] = true;
    }
    while let Some(p) = queue.pop_front() {
        for &q in &adjacency[p] {
            if !reached[q] {
                reached[q] = true;
                queue.push_back(q);
            }
        }
    }
    for i in 0..n {
        if role[i] == Role::Output && !reached[i] {
            report.warnings.push(Issue::UnreachableOutput { neuron: i });
        }
        if degree[i] == 0 {
            report.warnings.push(Issue::IsolatedNeuron { neuron: i });
        }
    }
    report
}

/// A validated, immutable network graph with precomputed indices.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    neurons: Vec<NeuronSpec>,
    edges: Vec<EdgeSpec>,
    plasticity: PlasticityConfig,
    aliases: BTreeMap<String, usize>,
    warnings: Vec<Issue>,
    incoming: Vec<Vec<usize>>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    plastic_edges: Vec<usize>,
    plastic_slot: Vec<Option<usize>>,
}

impl NetworkTopology {
    fn index(draft: TopologyDraft, warnings: Vec<Issue>) -> Self {
        let n = draft.neurons.len();
        let mut incoming = vec![Vec::new(); n];
        for (k, e) in draft.edges.iter().enumerate() {
            incoming[e.dst].push(k);
        }
        let with_role = |r: Role| -> Vec<usize> {
            draft.neurons.iter().filter(|s| s.role == r).map(|s| s.id).collect()
        };
        let inputs = with_role(Role::Input);
        let outputs = with_role(Role::Output);
        let mut plastic_edges = Vec::new();
        let mut plastic_slot = vec![None; draft.edges.len()];
        for (k, e) in draft.edges.iter().enumerate() {
            if e.effective_rule() != PlasticityRule::None {
                plastic_slot[k] = Some(plastic_edges.len());
                plastic_edges.push(k);
            }
        }
        Self {
            neurons: draft.neurons,
            edges: draft.edges,
            plasticity: draft.plasticity,
            aliases: draft.aliases,
            warnings,
            incoming,
            inputs,
            outputs,
            plastic_edges,
            plastic_slot,
        }
    }

    pub fn neurons(&self) -> &[NeuronSpec] {
        &self.neurons
    }

    pub fn neuron(&self, id: usize) -> &NeuronSpec {
        &self.neurons[id]
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.edges
    }

    pub fn plasticity(&self) -> &PlasticityConfig {
        &self.plasticity
    }

    pub fn aliases(&self) -> &BTreeMap<String, usize> {
        &self.aliases
    }

    /// Non-fatal findings from construction.
    pub fn warnings(&self) -> &[Issue] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Incoming edge indices of neuron `q`, in edge-list order.
    pub fn incoming(&self, q: usize) -> &[usize] {
        &self.incoming[q]
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    /// Edge indices whose weight changes during a rollout.
    pub fn plastic_edges(&self) -> &[usize] {
        &self.plastic_edges
    }

    pub fn plastic_slot(&self, edge: usize) -> Option<usize> {
        self.plastic_slot[edge]
    }

    pub fn has_plasticity(&self) -> bool {
        !self.plastic_edges.is_empty()
    }

    pub fn to_draft(&self) -> TopologyDraft {
        TopologyDraft {
            neurons: self.neurons.clone(),
            edges: self.edges.clone(),
            plasticity: self.plasticity.clone(),
            aliases: self.aliases.clone(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.to_draft())
    }

    /// Same graph with every `w0` replaced.
    pub fn with_weights(&self, w0: &[f64]) -> Self {
        assert_eq!(w0.len(), self.edges.len());
        let mut out = self.clone();
        for (e, &w) in out.edges.iter_mut().zip(w0) {
            e.w0 = w;
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = TopologyFile::from(self);
        serde_json::to_string_pretty(&file).expect("topology serializes")
    }

    /// SHA-256 of the canonical serialized document.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        load_topology(&std::fs::read(path)?)
    }
}

/// Parse and validate a topology document.
pub fn load_topology(bytes: &[u8]) -> Result<NetworkTopology, TopologyError> {
    parse_draft(bytes)?.build()
}

/// Parse a topology document without semantic validation.
pub fn parse_draft(bytes: &[u8]) -> Result<TopologyDraft, TopologyError> {
    let file: TopologyFile =
        serde_json::from_slice(bytes).map_err(|e| TopologyError::Parse(e.to_string()))?;
    if file.format != TOPOLOGY_FORMAT {
        return Err(TopologyError::Format { found: file.format });
    }
    let neurons = file
        .neurons
        .into_iter()
        .map(NeuronRecord::into_spec)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TopologyDraft {
        neurons,
        edges: file.edges,
        plasticity: file.plasticity.unwrap_or_default(),
        aliases: file.aliases,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    format: String,
    neurons: Vec<NeuronRecord>,
    edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plasticity: Option<PlasticityConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    aliases: BTreeMap<String, usize>,
}

impl From<&NetworkTopology> for TopologyFile {
    fn from(t: &NetworkTopology) -> Self {
        Self {
            format: TOPOLOGY_FORMAT.to_string(),
            neurons: t.neurons.iter().map(NeuronRecord::from).collect(),
            edges: t.edges.clone(),
            plasticity: Some(t.plasticity.clone()),
            aliases: t.aliases.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronRecord {
    id: usize,
    role: Role,
    model: ModelTag,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

impl NeuronRecord {
    fn into_spec(self) -> Result<NeuronSpec, TopologyError> {
        let params = self.params.unwrap_or_else(|| serde_json::json!({}));
        let bad = |e: serde_json::Error| {
            TopologyError::Parse(format!("neuron {} params: {e}", self.id))
        };
        let model = match self.model {
            ModelTag::Rate => NeuronModel::Rate(serde_json::from_value(params).map_err(bad)?),
            ModelTag::Lif => NeuronModel::Lif(serde_json::from_value(params).map_err(bad)?),
        };
        Ok(NeuronSpec { id: self.id, role: self.role, model })
    }
}

impl From<&NeuronSpec> for NeuronRecord {
    fn from(s: &NeuronSpec) -> Self {
        let params = match &s.model {
            NeuronModel::Rate(p) => serde_json::to_value(p),
            NeuronModel::Lif(p) => serde_json::to_value(p),
        }
        .expect("params serialize");
        Self { id: s.id, role: s.role, model: s.model.tag(), params: Some(params) }
    }
}

/// Parameters for [`build_random`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomTopologySpec {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub n_hidden: usize,
    /// Inclusion probability of each ordered hidden-to-hidden pair.
    pub density: f64,
    pub seed: u64,
    pub model: ModelTag,
    /// Rule placed on hidden-to-hidden edges (`none` keeps them static).
    pub hidden_rule: PlasticityRule,
    /// Initial self-state coefficient of rate neurons.
    pub self_weight: f64,
    pub plasticity: PlasticityConfig,
}

impl Default for RandomTopologySpec {
    fn default() -> Self {
        Self {
            n_inputs: 2,
            n_outputs: 1,
            n_hidden: 16,
            density: 0.4,
            seed: 1,
            model: ModelTag::Rate,
            hidden_rule: PlasticityRule::Hebbian,
            self_weight: 0.0,
            plasticity: PlasticityConfig::default(),
        }
    }
}

/// Random recurrent network: inputs fan out to every hidden neuron, hidden
/// neurons connect pairwise with probability `density`, and every hidden
/// neuron feeds every output (inputs feed outputs directly when there are
/// no hidden neurons). Weights are uniform in `[-a, a]` with
/// `a = 1 / sqrt(max(1, in-degree))` of the destination.
pub fn build_random(spec: &RandomTopologySpec) -> Result<NetworkTopology, TopologyError> {
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(TopologyError::Density(spec.density));
    }
    let mut rng = SeededRng::new(spec.seed);
    let (ni, nh, no) = (spec.n_inputs, spec.n_hidden, spec.n_outputs);
    let hidden = ni..ni + nh;
    let outputs = ni + nh..ni + nh + no;

    let model = |role: Role| match spec.model {
        ModelTag::Rate => NeuronModel::Rate(RateParams {
            w_s: if role == Role::Input { 0.0 } else { spec.self_weight },
            ..RateParams::default()
        }),
        ModelTag::Lif => NeuronModel::Lif(LifParams::default()),
    };
    let mut neurons = Vec::with_capacity(ni + nh + no);
    for id in 0..ni + nh + no {
        let role = if id < ni {
            Role::Input
        } else if id < ni + nh {
            Role::Hidden
        } else {
            Role::Output
        };
        neurons.push(NeuronSpec { id, role, model: model(role) });
    }

    let hidden_rule = match (spec.hidden_rule, spec.model) {
        (PlasticityRule::Stdp, ModelTag::Rate) => PlasticityRule::Hebbian,
        (rule, _) => rule,
    };
    let mut wiring: Vec<(usize, usize, PlasticityRule)> = Vec::new();
    if nh == 0 {
        for p in 0..ni {
            for q in outputs.clone() {
                wiring.push((p, q, PlasticityRule::None));
            }
        }
    } else {
        for p in 0..ni {
            for q in hidden.clone() {
                wiring.push((p, q, PlasticityRule::None));
            }
        }
        for p in hidden.clone() {
            for q in hidden.clone() {
                if p != q && rng.bernoulli(spec.density) {
                    wiring.push((p, q, hidden_rule));
                }
            }
        }
        for p in hidden.clone() {
            for q in outputs.clone() {
                wiring.push((p, q, PlasticityRule::None));
            }
        }
    }

    let mut in_degree = vec![0usize; neurons.len()];
    for &(_, q, _) in &wiring {
        in_degree[q] += 1;
    }
    let edges = wiring
        .into_iter()
        .map(|(p, q, rule)| {
            let a = 1.0 / (in_degree[q].max(1) as f64).sqrt();
            let w0 = rng.uniform(-a, a);
            EdgeSpec { src: p, dst: q, w0, plastic: rule != PlasticityRule::None, rule }
        })
        .collect();

    TopologyDraft {
        neurons,
        edges,
        plasticity: spec.plasticity.clone(),
        aliases: BTreeMap::new(),
    }
    .build()
}
