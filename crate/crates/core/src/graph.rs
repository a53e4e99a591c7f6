//! Probabilistic models as a DAG of random-variable nodes.
//!
//! A model couples prior distributions, arithmetic operators, constants and
//! forward simulators into a single directed acyclic graph. Designated root
//! nodes produce the observed-data layout; every non-root node carrying a
//! distribution is a free parameter of the inference problem. Graphs are
//! immutable after construction and safe to share across worker lanes; all
//! randomness flows through an explicitly passed generator.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node within its graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Structural validation errors raised while building a graph.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph contains a directed cycle")]
    CycleDetected,
    #[error("node {node} references undeclared node {reference}")]
    DanglingReference { node: usize, reference: usize },
    #[error("graph has no free parameters")]
    NoFreeParameters,
    #[error("uniform node {0} requires low <= high")]
    InvalidUniformBounds(usize),
    #[error("integer uniform node {0} requires integral bounds")]
    NonIntegralBounds(usize),
    #[error("root {0} carries a distribution and cannot be a parent of other nodes")]
    RootWithChildren(usize),
    #[error("simulator node {0} must be declared as a root")]
    SimulatorNotRoot(usize),
    #[error("simulator root {0} must use replicates = 1")]
    SimulatorReplicates(usize),
    #[error("simulator node {0} cannot be an input of node {1}")]
    SimulatorAsInput(usize, usize),
    #[error("node {0} is listed as a root more than once")]
    DuplicateRoot(usize),
    #[error("root replicates must be at least 1 (node {0})")]
    ZeroReplicates(usize),
    #[error("parameter vector has {got} entries, graph has {expected} free parameters")]
    LayoutMismatch { expected: usize, got: usize },
}

/// Failures that occur while evaluating a model, not while building it.
///
/// These surface as task-level errors; samplers retry the affected particle
/// with a fresh draw instead of aborting the run.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimulationError {
    #[error("division by zero at node {0}")]
    DivisionByZero(usize),
    #[error("power operator produced a non-real result at node {0}")]
    NonRealPower(usize),
    #[error("standard deviation input of node {0} is not positive")]
    NonPositiveStdDev(usize),
    #[error("non-finite value produced at node {0}")]
    NonFinite(usize),
    #[error("simulator failed: {0}")]
    Simulator(String),
}

/// Binary arithmetic operators available between value-producing nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn apply(self, left: f64, right: f64, node: usize) -> Result<f64, SimulationError> {
        let value = match self {
            BinaryOp::Add => left + right,
            BinaryOp::Sub => left - right,
            BinaryOp::Mul => left * right,
            BinaryOp::Div => {
                if right == 0.0 {
                    return Err(SimulationError::DivisionByZero(node));
                }
                left / right
            }
            BinaryOp::Pow => {
                let v = left.powf(right);
                if v.is_nan() {
                    return Err(SimulationError::NonRealPower(node));
                }
                v
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(SimulationError::NonFinite(node))
        }
    }
}

/// A forward simulator registered in-process and attached to a graph node.
///
/// Simulators consume the scalar values of their input nodes and emit one
/// data array per call. They must be reentrant: the engine calls them
/// concurrently from worker lanes, each with its own generator.
pub trait Simulator: Send + Sync {
    /// Short name used in config echoes and debug output.
    fn name(&self) -> &str;

    /// Length of one simulated array.
    fn output_len(&self) -> usize;

    fn simulate(&self, inputs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimulationError>;
}

/// What a node is: a constant, a prior distribution, an arithmetic
/// combination of two nodes, or a registered simulator.
#[derive(Clone)]
pub enum NodeKind {
    Hyperparameter(f64),
    PriorUniform { low: f64, high: f64, integer: bool },
    PriorNormal { mean: NodeId, sd: NodeId },
    Operator { op: BinaryOp, left: NodeId, right: NodeId },
    Simulator { inputs: Vec<NodeId>, simulator: Arc<dyn Simulator> },
}

impl fmt::Debug for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Hyperparameter(v) => write!(f, "Hyperparameter({v})"),
            NodeKind::PriorUniform { low, high, integer } => {
                write!(f, "PriorUniform({low}, {high}, integer={integer})")
            }
            NodeKind::PriorNormal { mean, sd } => {
                write!(f, "PriorNormal(mean=#{}, sd=#{})", mean.0, sd.0)
            }
            NodeKind::Operator { op, left, right } => {
                write!(f, "Operator({op:?}, #{}, #{})", left.0, right.0)
            }
            NodeKind::Simulator { inputs, simulator } => {
                write!(f, "Simulator({}, inputs={:?})", simulator.name(), inputs)
            }
        }
    }
}

impl NodeKind {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            NodeKind::Hyperparameter(_) | NodeKind::PriorUniform { .. } => Vec::new(),
            NodeKind::PriorNormal { mean, sd } => vec![*mean, *sd],
            NodeKind::Operator { left, right, .. } => vec![*left, *right],
            NodeKind::Simulator { inputs, .. } => inputs.clone(),
        }
    }

    fn is_distribution(&self) -> bool {
        matches!(
            self,
            NodeKind::PriorUniform { .. } | NodeKind::PriorNormal { .. }
        )
    }
}

/// A node plus its optional human-readable name. Names propagate into
/// journal output and kernel target resolution.
#[derive(Debug, Clone)]
pub struct ModelNode {
    pub kind: NodeKind,
    pub name: Option<String>,
}

impl ModelNode {
    pub fn new(kind: NodeKind) -> Self {
        Self { kind, name: None }
    }

    pub fn named(kind: NodeKind, name: impl Into<String>) -> Self {
        Self {
            kind,
            name: Some(name.into()),
        }
    }
}

/// A node designated as an observed-data-producing model.
///
/// Distribution roots are redrawn `replicates` times per dataset;
/// deterministic roots repeat their value; simulator roots emit their own
/// array and must use `replicates = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Root {
    pub node: NodeId,
    pub replicates: usize,
}

impl Root {
    pub fn new(node: NodeId) -> Self {
        Self { node, replicates: 1 }
    }

    pub fn with_replicates(node: NodeId, replicates: usize) -> Self {
        Self { node, replicates }
    }
}

/// Ordered values of the free parameters, laid out to match
/// [`ModelGraph::free_parameters`]. Integer-typed parameters hold integral
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector {
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// One forward simulation of the graph: one array per root, in root order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub arrays: Vec<Vec<f64>>,
}

impl DataSet {
    pub fn new(arrays: Vec<Vec<f64>>) -> Self {
        Self { arrays }
    }

    pub fn from_single(array: Vec<f64>) -> Self {
        Self {
            arrays: vec![array],
        }
    }
}

/// Validated, immutable model graph.
pub struct ModelGraph {
    nodes: Vec<ModelNode>,
    roots: Vec<Root>,
    free_parameters: Vec<NodeId>,
    topo_order: Vec<NodeId>,
    is_root: Vec<bool>,
    param_index: Vec<Option<usize>>,
}

impl fmt::Debug for ModelGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelGraph")
            .field("nodes", &self.nodes.len())
            .field("roots", &self.roots)
            .field("free_parameters", &self.free_parameters)
            .finish()
    }
}

impl ModelGraph {
    /// Validates a raw node list and root designation into a graph.
    ///
    /// Checks reference validity, acyclicity (Kahn's algorithm, caching a
    /// topological order with index-ascending tie-breaking), prior bounds
    /// and root constraints, and identifies the free parameters: every
    /// distribution node not designated as a root, in declaration order.
    pub fn from_nodes(nodes: Vec<ModelNode>, roots: Vec<Root>) -> Result<Self, GraphError> {
        let n = nodes.len();
        for (idx, node) in nodes.iter().enumerate() {
            for parent in node.kind.parents() {
                if parent.0 >= n {
                    return Err(GraphError::DanglingReference {
                        node: idx,
                        reference: parent.0,
                    });
                }
                if matches!(nodes[parent.0].kind, NodeKind::Simulator { .. }) {
                    return Err(GraphError::SimulatorAsInput(parent.0, idx));
                }
            }
            match &node.kind {
                NodeKind::PriorUniform { low, high, integer } => {
                    if !(low <= high) {
                        return Err(GraphError::InvalidUniformBounds(idx));
                    }
                    if *integer && (low.fract() != 0.0 || high.fract() != 0.0) {
                        return Err(GraphError::NonIntegralBounds(idx));
                    }
                }
                NodeKind::Hyperparameter(v) => {
                    if !v.is_finite() {
                        return Err(GraphError::NonIntegralBounds(idx));
                    }
                }
                _ => {}
            }
        }

        let topo_order = topological_order(&nodes)?;

        let mut is_root = vec![false; n];
        for root in &roots {
            if root.node.0 >= n {
                return Err(GraphError::DanglingReference {
                    node: root.node.0,
                    reference: root.node.0,
                });
            }
            if is_root[root.node.0] {
                return Err(GraphError::DuplicateRoot(root.node.0));
            }
            if root.replicates == 0 {
                return Err(GraphError::ZeroReplicates(root.node.0));
            }
            is_root[root.node.0] = true;
            match &nodes[root.node.0].kind {
                NodeKind::Simulator { .. } => {
                    if root.replicates != 1 {
                        return Err(GraphError::SimulatorReplicates(root.node.0));
                    }
                }
                _ => {}
            }
        }
        // A redrawn-per-replicate root has no single value its children
        // could consume.
        for node in &nodes {
            for parent in node.kind.parents() {
                if is_root[parent.0] && nodes[parent.0].kind.is_distribution() {
                    return Err(GraphError::RootWithChildren(parent.0));
                }
            }
        }
        for (idx, node) in nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Simulator { .. }) && !is_root[idx] {
                return Err(GraphError::SimulatorNotRoot(idx));
            }
        }

        let free_parameters: Vec<NodeId> = nodes
            .iter()
            .enumerate()
            .filter(|(idx, node)| node.kind.is_distribution() && !is_root[*idx])
            .map(|(idx, _)| NodeId(idx))
            .collect();
        if free_parameters.is_empty() {
            return Err(GraphError::NoFreeParameters);
        }

        let mut param_index = vec![None; n];
        for (pos, id) in free_parameters.iter().enumerate() {
            param_index[id.0] = Some(pos);
        }

        Ok(Self {
            nodes,
            roots,
            free_parameters,
            topo_order,
            is_root,
            param_index,
        })
    }

    pub fn nodes(&self) -> &[ModelNode] {
        &self.nodes
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    /// Free parameters in declaration order; this order defines the
    /// [`ParameterVector`] layout.
    pub fn free_parameters(&self) -> &[NodeId] {
        &self.free_parameters
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.free_parameters.len()
    }

    /// Name of each free parameter, falling back to `node<i>`.
    pub fn parameter_names(&self) -> Vec<String> {
        self.free_parameters
            .iter()
            .map(|id| {
                self.nodes[id.0]
                    .name
                    .clone()
                    .unwrap_or_else(|| format!("node{}", id.0))
            })
            .collect()
    }

    /// Whether each free parameter is integer-typed.
    pub fn integer_parameters(&self) -> Vec<bool> {
        self.free_parameters
            .iter()
            .map(|id| {
                matches!(
                    self.nodes[id.0].kind,
                    NodeKind::PriorUniform { integer: true, .. }
                )
            })
            .collect()
    }

    /// Free parameters whose uniform prior collapses to a point mass
    /// (`low == high`). Permitted, but worth surfacing to the user.
    pub fn degenerate_priors(&self) -> Vec<NodeId> {
        self.free_parameters
            .iter()
            .copied()
            .filter(|id| {
                matches!(self.nodes[id.0].kind, NodeKind::PriorUniform { low, high, .. } if low == high)
            })
            .collect()
    }

    /// Length of the array each root contributes to a dataset.
    pub fn root_output_lens(&self) -> Vec<usize> {
        self.roots
            .iter()
            .map(|root| match &self.nodes[root.node.0].kind {
                NodeKind::Simulator { simulator, .. } => simulator.output_len(),
                _ => root.replicates,
            })
            .collect()
    }

    /// Resolves a node by its name.
    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|node| node.name.as_deref() == Some(name))
            .map(NodeId)
    }

    fn check_layout(&self, theta: &ParameterVector) -> Result<(), GraphError> {
        if theta.dim() != self.dim() {
            return Err(GraphError::LayoutMismatch {
                expected: self.dim(),
                got: theta.dim(),
            });
        }
        Ok(())
    }

    /// Draws every free parameter from its prior, parents before children.
    pub fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Result<ParameterVector, SimulationError> {
        let mut values = vec![f64::NAN; self.nodes.len()];
        for &id in &self.topo_order {
            let idx = id.0;
            match &self.nodes[idx].kind {
                NodeKind::Hyperparameter(v) => values[idx] = *v,
                NodeKind::PriorUniform { low, high, integer } => {
                    if self.is_root[idx] {
                        continue; // redrawn per replicate during simulation
                    }
                    values[idx] = sample_uniform(*low, *high, *integer, rng);
                }
                NodeKind::PriorNormal { mean, sd } => {
                    if self.is_root[idx] {
                        continue;
                    }
                    values[idx] = sample_normal(values[mean.0], values[sd.0], idx, rng)?;
                }
                NodeKind::Operator { op, left, right } => {
                    // An operator that only feeds a root may fail here
                    // without poisoning the prior draw; the NaN surfaces as
                    // a simulation error if a downstream prior consumes it.
                    values[idx] = op
                        .apply(values[left.0], values[right.0], idx)
                        .unwrap_or(f64::NAN);
                }
                NodeKind::Simulator { .. } => {}
            }
        }
        Ok(ParameterVector::new(
            self.free_parameters.iter().map(|id| values[id.0]).collect(),
        ))
    }

    /// Values of all scalar nodes with the free parameters pinned to `theta`.
    ///
    /// Roots carrying distributions and simulator nodes are left as NaN
    /// placeholders; they never feed other nodes.
    fn eval_deterministic(&self, theta: &ParameterVector) -> Result<Vec<f64>, SimulationError> {
        let mut values = vec![f64::NAN; self.nodes.len()];
        for &id in &self.topo_order {
            let idx = id.0;
            if let Some(pos) = self.param_index[idx] {
                values[idx] = theta.values[pos];
                continue;
            }
            match &self.nodes[idx].kind {
                NodeKind::Hyperparameter(v) => values[idx] = *v,
                NodeKind::Operator { op, left, right } => {
                    values[idx] = op.apply(values[left.0], values[right.0], idx)?;
                }
                // Distribution roots and simulators are materialized in
                // forward_simulate.
                _ => {}
            }
        }
        Ok(values)
    }

    /// Joint prior density of `theta`: the product of each free parameter's
    /// conditional density given its parents. Returns 0 outside the prior
    /// support, and also when `theta` makes the graph unevaluable (a
    /// non-positive standard deviation, division by zero in a parent
    /// expression), so rejection loops stay total.
    pub fn prior_density(&self, theta: &ParameterVector) -> Result<f64, GraphError> {
        self.check_layout(theta)?;
        let values = match self.eval_deterministic(theta) {
            Ok(values) => values,
            Err(_) => return Ok(0.0),
        };
        let mut density = 1.0;
        for (pos, id) in self.free_parameters.iter().enumerate() {
            let value = theta.values[pos];
            let marginal = match &self.nodes[id.0].kind {
                NodeKind::PriorUniform { low, high, integer } => {
                    uniform_density(*low, *high, *integer, value)
                }
                NodeKind::PriorNormal { mean, sd } => {
                    let (mean, sd) = (values[mean.0], values[sd.0]);
                    if !(sd > 0.0) || !mean.is_finite() {
                        return Ok(0.0);
                    }
                    normal_density(mean, sd, value)
                }
                _ => unreachable!("free parameters are distribution nodes"),
            };
            density *= marginal;
            if density == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(density)
    }

    /// Whether `theta` has positive prior density.
    pub fn in_support(&self, theta: &ParameterVector) -> Result<bool, GraphError> {
        Ok(self.prior_density(theta)? > 0.0)
    }

    /// Simulates `n` independent datasets with the free parameters pinned
    /// to `theta`. Deterministic given the generator state.
    pub fn forward_simulate(
        &self,
        theta: &ParameterVector,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<DataSet>, SimulationError> {
        assert_eq!(
            theta.dim(),
            self.dim(),
            "parameter vector layout must match the graph"
        );
        let values = self.eval_deterministic(theta)?;
        let mut datasets = Vec::with_capacity(n);
        for _ in 0..n {
            let mut arrays = Vec::with_capacity(self.roots.len());
            for root in &self.roots {
                let idx = root.node.0;
                let array = match &self.nodes[idx].kind {
                    NodeKind::Simulator { inputs, simulator } => {
                        let input_values: Vec<f64> =
                            inputs.iter().map(|id| values[id.0]).collect();
                        let out = simulator.simulate(&input_values, rng)?;
                        debug_assert_eq!(out.len(), simulator.output_len());
                        out
                    }
                    NodeKind::PriorUniform { low, high, integer } => (0..root.replicates)
                        .map(|_| sample_uniform(*low, *high, *integer, rng))
                        .collect(),
                    NodeKind::PriorNormal { mean, sd } => {
                        let (mean, sd) = (values[mean.0], values[sd.0]);
                        (0..root.replicates)
                            .map(|_| sample_normal(mean, sd, idx, rng))
                            .collect::<Result<Vec<f64>, _>>()?
                    }
                    _ => vec![values[idx]; root.replicates],
                };
                arrays.push(array);
            }
            datasets.push(DataSet::new(arrays));
        }
        Ok(datasets)
    }
}

/// Kahn's algorithm with index-ascending tie-breaking, so the cached order
/// (and hence the prior sampling order) follows node declaration order.
fn topological_order(nodes: &[ModelNode]) -> Result<Vec<NodeId>, GraphError> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = nodes.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_degree = vec![0usize; n];
    for (idx, node) in nodes.iter().enumerate() {
        for parent in node.kind.parents() {
            children[parent.0].push(idx);
            in_degree[idx] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = in_degree
        .iter()
        .enumerate()
        .filter(|(_, deg)| **deg == 0)
        .map(|(idx, _)| Reverse(idx))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(idx)) = ready.pop() {
        order.push(NodeId(idx));
        for &child in &children[idx] {
            in_degree[child] -= 1;
            if in_degree[child] == 0 {
                ready.push(Reverse(child));
            }
        }
    }
    if order.len() != n {
        return Err(GraphError::CycleDetected);
    }
    Ok(order)
}

fn sample_uniform(low: f64, high: f64, integer: bool, rng: &mut ChaCha8Rng) -> f64 {
    if low == high {
        return low;
    }
    if integer {
        rng.random_range(low as i64..=high as i64) as f64
    } else {
        low + rng.random::<f64>() * (high - low)
    }
}

fn sample_normal(
    mean: f64,
    sd: f64,
    node: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SimulationError> {
    if !(sd > 0.0) {
        return Err(SimulationError::NonPositiveStdDev(node));
    }
    if !mean.is_finite() {
        return Err(SimulationError::NonFinite(node));
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + sd * z)
}

fn uniform_density(low: f64, high: f64, integer: bool, value: f64) -> f64 {
    if value < low || value > high {
        return 0.0;
    }
    if low == high {
        // Degenerate point mass: unit mass at the single support point.
        return if value == low { 1.0 } else { 0.0 };
    }
    if integer {
        if value.fract() != 0.0 {
            return 0.0;
        }
        1.0 / (high - low + 1.0)
    } else {
        1.0 / (high - low)
    }
}

fn normal_density(mean: f64, sd: f64, value: f64) -> f64 {
    let z = (value - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Incremental construction of a graph. Node handles returned by the
/// builder can only reference already-declared nodes, which makes cycles
/// impossible on this path; config-driven construction goes through
/// [`ModelGraph::from_nodes`] and relies on its cycle detection.
#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<ModelNode>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, node: ModelNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn hyperparameter(&mut self, value: f64) -> NodeId {
        self.push(ModelNode::new(NodeKind::Hyperparameter(value)))
    }

    pub fn uniform(&mut self, name: impl Into<String>, low: f64, high: f64) -> NodeId {
        self.push(ModelNode::named(
            NodeKind::PriorUniform {
                low,
                high,
                integer: false,
            },
            name,
        ))
    }

    pub fn uniform_integer(&mut self, name: impl Into<String>, low: f64, high: f64) -> NodeId {
        self.push(ModelNode::named(
            NodeKind::PriorUniform {
                low,
                high,
                integer: true,
            },
            name,
        ))
    }

    pub fn normal(&mut self, name: impl Into<String>, mean: NodeId, sd: NodeId) -> NodeId {
        self.push(ModelNode::named(NodeKind::PriorNormal { mean, sd }, name))
    }

    /// Normal node with constant mean and standard deviation; the literals
    /// are wrapped as hyperparameter nodes.
    pub fn normal_const(&mut self, name: impl Into<String>, mean: f64, sd: f64) -> NodeId {
        let mean = self.hyperparameter(mean);
        let sd = self.hyperparameter(sd);
        self.normal(name, mean, sd)
    }

    pub fn operator(&mut self, op: BinaryOp, left: NodeId, right: NodeId) -> NodeId {
        self.push(ModelNode::new(NodeKind::Operator { op, left, right }))
    }

    /// Operator with a literal right operand, wrapped as a hyperparameter.
    pub fn operator_const(&mut self, op: BinaryOp, left: NodeId, right: f64) -> NodeId {
        let right = self.hyperparameter(right);
        self.operator(op, left, right)
    }

    pub fn simulator(
        &mut self,
        name: impl Into<String>,
        inputs: Vec<NodeId>,
        simulator: Arc<dyn Simulator>,
    ) -> NodeId {
        self.push(ModelNode::named(
            NodeKind::Simulator { inputs, simulator },
            name,
        ))
    }

    pub fn name(&mut self, id: NodeId, name: impl Into<String>) {
        self.nodes[id.0].name = Some(name.into());
    }

    pub fn build(self, roots: Vec<Root>) -> Result<ModelGraph, GraphError> {
        ModelGraph::from_nodes(self.nodes, roots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use approx::assert_relative_eq;

    fn single_uniform(low: f64, high: f64) -> ModelGraph {
        let mut b = GraphBuilder::new();
        b.uniform("mu", low, high);
        b.build(vec![]).unwrap()
    }

    #[test]
    fn single_uniform_node_is_a_valid_graph() {
        let g = single_uniform(150.0, 200.0);
        assert_eq!(g.dim(), 1);
        assert_eq!(g.parameter_names(), vec!["mu"]);
    }

    #[test]
    fn school_model_has_five_parameters() {
        let g = crate::models::school(20);
        assert_eq!(g.dim(), 5);
        assert_eq!(
            g.parameter_names(),
            vec![
                "school_budget",
                "class_size",
                "no_teacher",
                "historical_mean_grade",
                "grade_spread"
            ]
        );
    }

    #[test]
    fn two_node_cycle_is_rejected() {
        let nodes = vec![
            ModelNode::new(NodeKind::Operator {
                op: BinaryOp::Add,
                left: NodeId(1),
                right: NodeId(1),
            }),
            ModelNode::new(NodeKind::Operator {
                op: BinaryOp::Add,
                left: NodeId(0),
                right: NodeId(0),
            }),
        ];
        assert!(matches!(
            ModelGraph::from_nodes(nodes, vec![]),
            Err(GraphError::CycleDetected)
        ));
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let nodes = vec![ModelNode::new(NodeKind::Operator {
            op: BinaryOp::Add,
            left: NodeId(7),
            right: NodeId(8),
        })];
        assert!(matches!(
            ModelGraph::from_nodes(nodes, vec![]),
            Err(GraphError::DanglingReference { .. })
        ));
    }

    #[test]
    fn graph_without_free_parameters_is_rejected() {
        let mut b = GraphBuilder::new();
        let two = b.hyperparameter(2.0);
        let three = b.hyperparameter(3.0);
        let sum = b.operator(BinaryOp::Add, two, three);
        assert!(matches!(
            b.build(vec![Root::new(sum)]),
            Err(GraphError::NoFreeParameters)
        ));
    }

    #[test]
    fn prior_sample_stays_in_support() {
        let g = single_uniform(150.0, 200.0);
        let mut rng = task_rng(1, &[]);
        for _ in 0..200 {
            let theta = g.sample_prior(&mut rng).unwrap();
            assert!(theta.values[0] >= 150.0 && theta.values[0] <= 200.0);
            assert!(g.prior_density(&theta).unwrap() > 0.0);
        }
    }

    #[test]
    fn degenerate_uniform_is_a_point_mass() {
        let g = single_uniform(5.0, 5.0);
        let mut rng = task_rng(2, &[]);
        let theta = g.sample_prior(&mut rng).unwrap();
        assert_eq!(theta.values[0], 5.0);
        assert_eq!(g.prior_density(&theta).unwrap(), 1.0);
        assert_eq!(g.degenerate_priors().len(), 1);
    }

    #[test]
    fn uniform_density_values() {
        let g = single_uniform(0.0, 2.0);
        assert_eq!(g.prior_density(&vec![1.0].into()).unwrap(), 0.5);
        assert_eq!(g.prior_density(&vec![3.0].into()).unwrap(), 0.0);
    }

    #[test]
    fn independent_uniform_priors_multiply() {
        let mut b = GraphBuilder::new();
        b.uniform("a", 0.0, 2.0);
        b.uniform("b", 0.0, 2.0);
        let g = b.build(vec![]).unwrap();
        assert_eq!(g.prior_density(&vec![1.0, 1.0].into()).unwrap(), 0.25);

        // Midpoint rule over the support recovers total mass 1.
        let n = 200;
        let step = 2.0 / n as f64;
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let theta = vec![(i as f64 + 0.5) * step, (j as f64 + 0.5) * step];
                mass += g.prior_density(&theta.into()).unwrap() * step * step;
            }
        }
        assert_relative_eq!(mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn school_budget_prior_mean_matches_uniform() {
        let g = crate::models::school(20);
        let mut rng = task_rng(3, &[]);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += g.sample_prior(&mut rng).unwrap().values[0];
        }
        let mean = sum / n as f64;
        // Uniform(1, 10): mean 5.5, sd 9/sqrt(12); three standard errors.
        let se = 9.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 5.5).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn constant_expression_root_simulates_deterministically() {
        let mut b = GraphBuilder::new();
        b.uniform("unused", 0.0, 1.0);
        let two = b.hyperparameter(2.0);
        let three = b.hyperparameter(3.0);
        let sum = b.operator(BinaryOp::Add, two, three);
        let g = b.build(vec![Root::with_replicates(sum, 4)]).unwrap();
        let mut rng = task_rng(4, &[]);
        let theta = g.sample_prior(&mut rng).unwrap();
        let data = g.forward_simulate(&theta, 3, &mut rng).unwrap();
        assert_eq!(data.len(), 3);
        for ds in &data {
            assert_eq!(ds.arrays, vec![vec![5.0; 4]]);
        }
    }

    #[test]
    fn gaussian_grades_simulation_is_finite_and_shaped() {
        let g = crate::models::gaussian_grades(10);
        let theta = ParameterVector::new(vec![175.0, 10.0]);
        let mut rng = task_rng(5, &[]);
        let data = g.forward_simulate(&theta, 3, &mut rng).unwrap();
        assert_eq!(data.len(), 3);
        for ds in &data {
            assert_eq!(ds.arrays.len(), 1);
            assert_eq!(ds.arrays[0].len(), 10);
            assert!(ds.arrays[0].iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn simulation_is_reproducible_for_equal_seeds() {
        let g = crate::models::school(20);
        let mut rng_a = task_rng(6, &[9]);
        let mut rng_b = task_rng(6, &[9]);
        let theta_a = g.sample_prior(&mut rng_a).unwrap();
        let theta_b = g.sample_prior(&mut rng_b).unwrap();
        assert_eq!(theta_a, theta_b);
        let data_a = g.forward_simulate(&theta_a, 2, &mut rng_a).unwrap();
        let data_b = g.forward_simulate(&theta_b, 2, &mut rng_b).unwrap();
        assert_eq!(data_a, data_b);
    }

    #[test]
    fn operator_semantics_match_direct_application() {
        let cases = [
            (BinaryOp::Add, 6.0, 1.5, 7.5),
            (BinaryOp::Sub, 6.0, 1.5, 4.5),
            (BinaryOp::Mul, 6.0, 1.5, 9.0),
            (BinaryOp::Div, 6.0, 1.5, 4.0),
            (BinaryOp::Pow, 6.0, 2.0, 36.0),
        ];
        for (op, left, right, expected) in cases {
            let mut b = GraphBuilder::new();
            b.uniform("unused", 0.0, 1.0);
            let l = b.hyperparameter(left);
            let r = b.hyperparameter(right);
            let node = b.operator(op, l, r);
            let g = b.build(vec![Root::new(node)]).unwrap();
            let mut rng = task_rng(7, &[]);
            let theta = g.sample_prior(&mut rng).unwrap();
            let data = g.forward_simulate(&theta, 1, &mut rng).unwrap();
            assert_eq!(data[0].arrays[0][0], expected, "{op:?}");
        }
    }

    #[test]
    fn division_by_zero_is_a_simulation_error() {
        let mut b = GraphBuilder::new();
        b.uniform("unused", 0.0, 1.0);
        let l = b.hyperparameter(1.0);
        let r = b.hyperparameter(0.0);
        let node = b.operator(BinaryOp::Div, l, r);
        let g = b.build(vec![Root::new(node)]).unwrap();
        let mut rng = task_rng(8, &[]);
        let theta = g.sample_prior(&mut rng).unwrap();
        assert!(matches!(
            g.forward_simulate(&theta, 1, &mut rng),
            Err(SimulationError::DivisionByZero(_))
        ));
    }

    #[test]
    fn non_real_power_is_a_simulation_error() {
        let mut b = GraphBuilder::new();
        b.uniform("unused", 0.0, 1.0);
        let l = b.hyperparameter(-8.0);
        let r = b.hyperparameter(0.5);
        let node = b.operator(BinaryOp::Pow, l, r);
        let g = b.build(vec![Root::new(node)]).unwrap();
        let mut rng = task_rng(9, &[]);
        let theta = g.sample_prior(&mut rng).unwrap();
        assert!(matches!(
            g.forward_simulate(&theta, 1, &mut rng),
            Err(SimulationError::NonRealPower(_))
        ));
    }

    #[test]
    fn integer_uniform_samples_integers() {
        let mut b = GraphBuilder::new();
        b.uniform_integer("k", 2.0, 9.0);
        let g = b.build(vec![]).unwrap();
        let mut rng = task_rng(10, &[]);
        for _ in 0..100 {
            let theta = g.sample_prior(&mut rng).unwrap();
            let v = theta.values[0];
            assert_eq!(v.fract(), 0.0);
            assert!((2.0..=9.0).contains(&v));
        }
        assert_relative_eq!(g.prior_density(&vec![4.0].into()).unwrap(), 1.0 / 8.0);
        assert_eq!(g.prior_density(&vec![4.5].into()).unwrap(), 0.0);
        assert_eq!(g.integer_parameters(), vec![true]);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let g = single_uniform(0.0, 1.0);
        assert!(matches!(
            g.prior_density(&vec![0.5, 0.5].into()),
            Err(GraphError::LayoutMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn distribution_root_with_children_is_rejected() {
        let mut b = GraphBuilder::new();
        let mu = b.uniform("mu", 0.0, 1.0);
        let sd = b.hyperparameter(1.0);
        let obs = b.normal("obs", mu, sd);
        let shifted = b.operator_const(BinaryOp::Add, obs, 1.0);
        let nodes_roots = vec![Root::new(obs), Root::new(shifted)];
        assert!(matches!(
            b.build(nodes_roots),
            Err(GraphError::RootWithChildren(_))
        ));
    }
}
