//! Experiment configuration: the JSON schema the CLI accepts and its
//! translation into engine objects.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use abc_engine::graph::{BinaryOp, DataSet, ModelGraph, ModelNode, NodeId, NodeKind, Root};
use abc_engine::kernels::{JointKernel, KernelComponent, DEFAULT_STUDENT_T_DF};
use abc_engine::lorenz::LorenzSimulator;
use abc_engine::summaries::{
    ApproxLikelihood, DatasetDistance, Distance, Euclidean, HakkarainenLorenz, Identity, LogReg,
    Statistics, SyntheticLikelihood,
};
use abc_engine::{models, ExecutorSpec};

use crate::CliError;

/// A full inference experiment: model, data, discrepancy machinery,
/// sampler and executor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub observed: Vec<ObservedSpec>,
    #[serde(default)]
    pub statistics: StatisticsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_likelihood: Option<ApproxLikelihoodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin(BuiltinModel),
    Graph(GraphSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinModel {
    /// One of `gaussian-grades`, `school`, `lorenz95`.
    pub builtin: String,
    /// Observations per dataset for the scalar-root models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Integration steps for `lorenz95`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_steps: Option<usize>,
    /// Forcing autocorrelation for `lorenz95`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub roots: Vec<RootSpec>,
}

/// Literal values appearing where a node is expected become hyperparameter
/// nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueOrRef {
    Value(f64),
    Ref(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NodeSpec {
    Const {
        id: String,
        value: f64,
    },
    Uniform {
        id: String,
        low: f64,
        high: f64,
        #[serde(default)]
        integer: bool,
    },
    Normal {
        id: String,
        mean: ValueOrRef,
        sd: ValueOrRef,
    },
    Op {
        id: String,
        op: String,
        left: ValueOrRef,
        right: ValueOrRef,
    },
    Simulator {
        id: String,
        /// Registered simulator name; `lorenz95` is built in.
        name: String,
        inputs: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_steps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<f64>,
    },
}

impl NodeSpec {
    fn id(&self) -> &str {
        match self {
            NodeSpec::Const { id, .. }
            | NodeSpec::Uniform { id, .. }
            | NodeSpec::Normal { id, .. }
            | NodeSpec::Op { id, .. }
            | NodeSpec::Simulator { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RootSpec {
    Name(String),
    Detailed {
        node: String,
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
}

fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StatisticsSpec {
    #[default]
    Identity,
    HakkarainenLorenz,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistanceSpec {
    Single(DistanceKindSpec),
    PerRoot {
        per_root: Vec<DistanceKindSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DistanceKindSpec {
    Euclidean,
    Logreg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum ApproxLikelihoodSpec {
    SyntheticLikelihood,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub components: Vec<KernelComponentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelComponentSpec {
    Gaussian {
        targets: Vec<String>,
    },
    StudentT {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        df: Option<f64>,
        targets: Vec<String>,
    },
    DiscreteWalk {
        targets: Vec<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    Rejection {
        n_samples: usize,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_attempts: Option<u64>,
    },
    Pmcabc {
        n_samples: usize,
        epsilon_schedule: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon_percentile: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_attempts: Option<u64>,
    },
    Pmc {
        n_samples: usize,
        generations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_sim_per_theta: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutorMode {
    Sequential,
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorConfig {
    pub mode: ExecutorMode,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            mode: ExecutorMode::Sequential,
            workers: 1,
        }
    }
}

impl ExecutorConfig {
    pub fn to_spec(&self) -> Result<ExecutorSpec, CliError> {
        if self.workers == 0 {
            return Err(CliError::config("executor.workers must be at least 1"));
        }
        Ok(match self.mode {
            ExecutorMode::Sequential => ExecutorSpec::Sequential,
            ExecutorMode::Static => ExecutorSpec::StaticChunked(self.workers),
            ExecutorMode::Dynamic => ExecutorSpec::DynamicGreedy(self.workers),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservedSpec {
    Path { path: PathBuf },
    Inline { values: Vec<f64> },
}

/// Everything an inference run needs, in engine terms.
pub struct Experiment {
    pub graph: ModelGraph,
    pub observed: DataSet,
    pub statistics: Arc<dyn Statistics>,
    pub distance: Option<DatasetDistance>,
    pub approx_likelihood: Option<Arc<dyn ApproxLikelihood>>,
    pub kernel: JointKernel,
    pub sampler: SamplerSpec,
    pub executor: ExecutorSpec,
    pub seed: u64,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{} does not match the schema: {e}", path.display())))
}

/// Parses whitespace- or comma-separated reals, flattening rows in order.
pub fn read_values_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for token in text.split(|c: char| c.is_whitespace() || c == ',') {
        if token.is_empty() {
            continue;
        }
        values.push(token.parse::<f64>().map_err(|_| {
            CliError::config(format!("{}: `{token}` is not a number", path.display()))
        })?);
    }
    Ok(values)
}

fn build_graph(spec: &GraphSpec) -> Result<ModelGraph, CliError> {
    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    for (pos, node) in spec.nodes.iter().enumerate() {
        if ids.insert(node.id(), NodeId(pos)).is_some() {
            return Err(CliError::config(format!("duplicate node id `{}`", node.id())));
        }
    }
    // Literal operands become hyperparameter nodes appended after the
    // declared ones; references may point forward.
    let mut nodes: Vec<Option<ModelNode>> = vec![None; spec.nodes.len()];
    let mut extra: Vec<ModelNode> = Vec::new();
    let total_declared = spec.nodes.len();
    let resolve = |value: &ValueOrRef, extra: &mut Vec<ModelNode>| -> Result<NodeId, CliError> {
        match value {
            ValueOrRef::Ref(name) => ids
                .get(name.as_str())
                .copied()
                .ok_or_else(|| CliError::config(format!("unknown node id `{name}`"))),
            ValueOrRef::Value(v) => {
                extra.push(ModelNode::new(NodeKind::Hyperparameter(*v)));
                Ok(NodeId(total_declared + extra.len() - 1))
            }
        }
    };

    for (pos, node) in spec.nodes.iter().enumerate() {
        let built = match node {
            NodeSpec::Const { id, value } => {
                ModelNode::named(NodeKind::Hyperparameter(*value), id.clone())
            }
            NodeSpec::Uniform {
                id,
                low,
                high,
                integer,
            } => ModelNode::named(
                NodeKind::PriorUniform {
                    low: *low,
                    high: *high,
                    integer: *integer,
                },
                id.clone(),
            ),
            NodeSpec::Normal { id, mean, sd } => {
                let mean = resolve(mean, &mut extra)?;
                let sd = resolve(sd, &mut extra)?;
                ModelNode::named(NodeKind::PriorNormal { mean, sd }, id.clone())
            }
            NodeSpec::Op {
                id,
                op,
                left,
                right,
            } => {
                let op = match op.as_str() {
                    "+" | "add" => BinaryOp::Add,
                    "-" | "sub" => BinaryOp::Sub,
                    "*" | "mul" => BinaryOp::Mul,
                    "/" | "div" => BinaryOp::Div,
                    "**" | "pow" => BinaryOp::Pow,
                    other => {
                        return Err(CliError::config(format!(
                            "unknown operator `{other}` (use +, -, *, /, **)"
                        )))
                    }
                };
                let left = resolve(left, &mut extra)?;
                let right = resolve(right, &mut extra)?;
                ModelNode::named(NodeKind::Operator { op, left, right }, id.clone())
            }
            NodeSpec::Simulator {
                id,
                name,
                inputs,
                t_steps,
                phi,
            } => {
                let inputs = inputs
                    .iter()
                    .map(|name| resolve(&ValueOrRef::Ref(name.clone()), &mut extra))
                    .collect::<Result<Vec<_>, _>>()?;
                let simulator: Arc<dyn abc_engine::Simulator> = match name.as_str() {
                    "lorenz95" => Arc::new(LorenzSimulator::new(
                        t_steps.unwrap_or(1024),
                        phi.unwrap_or(0.4),
                    )),
                    other => {
                        return Err(CliError::config(format!(
                            "unknown simulator `{other}` (registered: lorenz95)"
                        )))
                    }
                };
                ModelNode::named(NodeKind::Simulator { inputs, simulator }, id.clone())
            }
        };
        nodes[pos] = Some(built);
    }

    let mut all_nodes: Vec<ModelNode> = nodes.into_iter().map(|n| n.unwrap()).collect();
    all_nodes.extend(extra);

    let roots = spec
        .roots
        .iter()
        .map(|root| {
            let (name, replicates) = match root {
                RootSpec::Name(name) => (name.as_str(), 1),
                RootSpec::Detailed { node, replicates } => (node.as_str(), *replicates),
            };
            let id = ids
                .get(name)
                .copied()
                .ok_or_else(|| CliError::config(format!("unknown root node `{name}`")))?;
            Ok(Root::with_replicates(id, replicates))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    ModelGraph::from_nodes(all_nodes, roots)
        .map_err(|e| CliError::config(format!("invalid model graph: {e}")))
}

fn build_model(spec: &ModelSpec) -> Result<ModelGraph, CliError> {
    match spec {
        ModelSpec::Builtin(builtin) => match builtin.builtin.as_str() {
            "gaussian-grades" => Ok(models::gaussian_grades(builtin.replicates.unwrap_or(10))),
            "school" => Ok(models::school(builtin.replicates.unwrap_or(20))),
            "lorenz95" => Ok(abc_engine::lorenz::lorenz_graph(
                builtin.t_steps.unwrap_or(1024),
                builtin.phi.unwrap_or(0.4),
            )),
            other => Err(CliError::config(format!(
                "unknown builtin model `{other}` (available: gaussian-grades, school, lorenz95)"
            ))),
        },
        ModelSpec::Graph(graph) => build_graph(graph),
    }
}

fn build_statistics(spec: &StatisticsSpec) -> Arc<dyn Statistics> {
    match spec {
        StatisticsSpec::Identity => Arc::new(Identity),
        StatisticsSpec::HakkarainenLorenz => Arc::new(HakkarainenLorenz),
    }
}

fn build_distance_kind(
    kind: &DistanceKindSpec,
    statistics: &Arc<dyn Statistics>,
) -> Arc<dyn Distance> {
    match kind {
        DistanceKindSpec::Euclidean => Arc::new(Euclidean::new(statistics.clone())),
        DistanceKindSpec::Logreg => Arc::new(LogReg::new(statistics.clone())),
    }
}

fn build_distance(
    spec: &DistanceSpec,
    statistics: &Arc<dyn Statistics>,
    n_roots: usize,
) -> Result<DatasetDistance, CliError> {
    match spec {
        DistanceSpec::Single(kind) => Ok(DatasetDistance::uniform(
            build_distance_kind(kind, statistics),
            n_roots,
        )),
        DistanceSpec::PerRoot { per_root, weights } => {
            if per_root.len() != n_roots {
                return Err(CliError::config(format!(
                    "distance.per_root lists {} entries but the model has {} roots",
                    per_root.len(),
                    n_roots
                )));
            }
            let distances = per_root
                .iter()
                .map(|kind| build_distance_kind(kind, statistics))
                .collect();
            let weights = weights.clone().unwrap_or_else(|| vec![1.0; n_roots]);
            DatasetDistance::new(distances, weights)
                .map_err(|e| CliError::config(format!("invalid distance combination: {e}")))
        }
    }
}

fn build_kernel(spec: Option<&KernelSpec>, graph: &ModelGraph) -> Result<JointKernel, CliError> {
    let Some(spec) = spec else {
        return Ok(JointKernel::default_for(graph));
    };
    let names = graph.parameter_names();
    let resolve_targets = |targets: &[String]| -> Result<Vec<usize>, CliError> {
        targets
            .iter()
            .map(|t| {
                names.iter().position(|n| n == t).ok_or_else(|| {
                    CliError::config(format!(
                        "kernel target `{t}` is not a free parameter (parameters: {})",
                        names.join(", ")
                    ))
                })
            })
            .collect()
    };
    let components = spec
        .components
        .iter()
        .map(|component| {
            Ok(match component {
                KernelComponentSpec::Gaussian { targets } => {
                    KernelComponent::gaussian(resolve_targets(targets)?)
                }
                KernelComponentSpec::StudentT { df, targets } => KernelComponent::student_t(
                    df.unwrap_or(DEFAULT_STUDENT_T_DF),
                    resolve_targets(targets)?,
                ),
                KernelComponentSpec::DiscreteWalk { targets } => {
                    KernelComponent::discrete_walk(resolve_targets(targets)?)
                }
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    JointKernel::new(components, graph.dim())
        .map_err(|e| CliError::config(format!("invalid kernel: {e}")))
}

fn load_observed(
    specs: &[ObservedSpec],
    graph: &ModelGraph,
    base_dir: &Path,
) -> Result<DataSet, CliError> {
    if specs.len() != graph.roots().len() {
        return Err(CliError::config(format!(
            "observed lists {} datasets but the model has {} roots",
            specs.len(),
            graph.roots().len()
        )));
    }
    let arrays = specs
        .iter()
        .map(|spec| match spec {
            ObservedSpec::Inline { values } => Ok(values.clone()),
            ObservedSpec::Path { path } => {
                let resolved = if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path.clone()
                };
                read_values_file(&resolved)
            }
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (i, (array, expected)) in arrays.iter().zip(graph.root_output_lens()).enumerate() {
        if array.len() != expected {
            return Err(CliError::config(format!(
                "observed dataset {i} has {} values but root {i} produces {expected}",
                array.len()
            )));
        }
    }
    Ok(DataSet::new(arrays))
}

/// Validates a parsed config and assembles the runnable experiment.
/// Relative observed-data paths resolve against `base_dir` (the config
/// file's directory).
pub fn build_experiment(
    config: &ExperimentConfig,
    base_dir: &Path,
) -> Result<Experiment, CliError> {
    let graph = build_model(&config.model)?;
    let observed = load_observed(&config.observed, &graph, base_dir)?;
    let statistics = build_statistics(&config.statistics);

    let distance = match &config.sampler {
        SamplerSpec::Rejection { .. } | SamplerSpec::Pmcabc { .. } => {
            let spec = config.distance.as_ref().ok_or_else(|| {
                CliError::config("this sampler requires a `distance` entry")
            })?;
            Some(build_distance(spec, &statistics, graph.roots().len())?)
        }
        SamplerSpec::Pmc { .. } => None,
    };
    let approx_likelihood = match &config.sampler {
        SamplerSpec::Pmc { .. } => {
            let spec = config.approx_likelihood.as_ref().ok_or_else(|| {
                CliError::config("the pmc sampler requires an `approx_likelihood` entry")
            })?;
            Some(match spec {
                ApproxLikelihoodSpec::SyntheticLikelihood => {
                    Arc::new(SyntheticLikelihood) as Arc<dyn ApproxLikelihood>
                }
            })
        }
        _ => None,
    };

    let kernel = build_kernel(config.kernel.as_ref(), &graph)?;
    let executor = config.executor.to_spec()?;

    Ok(Experiment {
        graph,
        observed,
        statistics,
        distance,
        approx_likelihood,
        kernel,
        sampler: config.sampler.clone(),
        executor,
        seed: config.seed,
    })
}
