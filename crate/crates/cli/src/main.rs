//! Batch front end for the selection pipeline.
//!
//! One command produces one artifact. Every artifact embeds the fully
//! resolved configuration and a content hash of each input file, so a
//! result names everything needed to reproduce it; reruns with the
//! same inputs are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use propsel_core::cluster::{cluster_pool, ClusterAssignment, ClusterError, ClusterParams};
use propsel_core::eval::{budget_curve, curve_to_csv, score_selection, EvalError};
use propsel_core::greedy::{
    brute_force, greedy_lazy, greedy_naive, GreedyError, SelectionResult,
};
use propsel_core::hash::content_hash;
use propsel_core::objective::{ObjectiveError, ObjectiveParams};
use propsel_core::pool::{GroundTruth, PoolError, RewardTransform, SegmentPool};
use propsel_core::simgraph::{
    build_graph, cache_key, read_cache, write_cache, GraphError, GraphParams, SimilarityGraph,
};
use propsel_core::synth::{synthesize, SynthConfig, SynthError};

const EXIT_CODE_HELP: &str = "Exit codes:
  0  success
  2  usage error (bad flags or values)
  3  file could not be read or written
  4  invalid data or configuration
  5  exhaustive-search guard tripped";

#[derive(Parser)]
#[command(
    name = "propsel",
    version,
    about = "Segment pool selection pipeline",
    after_help = EXIT_CODE_HELP,
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic segment pool with ground truth
    Synth(SynthArgs),
    /// Group each layer of a pool around exemplar segments
    Cluster(ClusterArgs),
    /// Select proposals by greedy objective maximization
    Select(SelectArgs),
    /// Score a selection against ground truth
    Eval(EvalArgs),
    /// Score a selection across budgets and emit a CSV curve
    Sweep(SweepArgs),
    /// Exhaustively optimal selection on small pools
    Oracle(OracleArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid as WIDTHxHEIGHT
    #[arg(long, default_value = "64x64", value_parser = parse_grid)]
    grid: (u32, u32),
    /// Ground-truth objects to place
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Granularity layers (coarsest first)
    #[arg(long, default_value_t = 3)]
    layers: u32,
    /// Finest-layer slices per object
    #[arg(long, default_value_t = 2)]
    parts: usize,
    /// Finest-layer background chunks
    #[arg(long, default_value_t = 4)]
    tiles: usize,
    /// Gaussian noise added to rewards
    #[arg(long, default_value_t = 0.0)]
    reward_noise: f64,
    /// Gaussian noise added to features
    #[arg(long, default_value_t = 0.0)]
    feature_noise: f64,
    /// Output path for the pool
    #[arg(long)]
    pool_out: PathBuf,
    /// Output path for the ground truth
    #[arg(long)]
    gt_out: PathBuf,
}

#[derive(Args, Serialize)]
struct GraphArgs {
    /// Neighbor rank that sets each segment's similarity scale
    #[arg(long, default_value_t = 7)]
    scale_neighbors: usize,
    /// Same-layer adjacency reach, in dilation steps
    #[arg(long, default_value_t = 1)]
    dilation: u32,
    /// Cache file for the similarity graph, reused when its key matches
    #[arg(long)]
    graph_cache: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ClusterPolicyArgs {
    /// Layers at or below this size keep one cluster per segment
    #[arg(long, default_value_t = 8)]
    coarse_threshold: usize,
    /// Explicit cluster counts, one per layer, comma separated
    #[arg(long, value_delimiter = ',')]
    per_layer: Option<Vec<usize>>,
}

#[derive(Args, Serialize)]
struct ClusterArgs {
    /// Pool file
    #[arg(long)]
    pool: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    policy: ClusterPolicyArgs,
    /// Output path for the cluster assignment
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AlgorithmArg {
    Naive,
    Lazy,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RewardTransformArg {
    None,
    Logistic,
}

impl From<RewardTransformArg> for RewardTransform {
    fn from(arg: RewardTransformArg) -> Self {
        match arg {
            RewardTransformArg::None => RewardTransform::None,
            RewardTransformArg::Logistic => RewardTransform::Logistic,
        }
    }
}

#[derive(Args, Serialize)]
struct ObjectiveArgs {
    /// Proposal budget
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Weight of the cluster diversity term
    #[arg(long, default_value_t = 3.9)]
    alpha: f64,
    /// Weight of the layer reward term
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Transform applied to segment scores at load time
    #[arg(long, value_enum, default_value_t = RewardTransformArg::None)]
    reward_transform: RewardTransformArg,
}

#[derive(Args, Serialize)]
struct SelectArgs {
    /// Pool file
    #[arg(long)]
    pool: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// Greedy variant
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Lazy)]
    algorithm: AlgorithmArg,
    #[command(flatten)]
    graph: GraphArgs,
    /// Precomputed cluster assignment; built on the fly when absent
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[command(flatten)]
    policy: ClusterPolicyArgs,
    /// Output path for the selection
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Pool file
    #[arg(long)]
    pool: PathBuf,
    /// Ground-truth file
    #[arg(long)]
    gt: PathBuf,
    /// Selection file
    #[arg(long)]
    selection: PathBuf,
    /// Budget; the full selection when absent
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Output path for the metrics
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Pool file
    #[arg(long)]
    pool: PathBuf,
    /// Ground-truth file
    #[arg(long)]
    gt: PathBuf,
    /// Selection file
    #[arg(long)]
    selection: PathBuf,
    /// Largest budget; the full selection when absent
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k_max: Option<u64>,
    /// Budget stride
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    step: u64,
    /// Output path for the CSV curve
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    /// Pool file
    #[arg(long)]
    pool: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[command(flatten)]
    graph: GraphArgs,
    /// Precomputed cluster assignment; built on the fly when absent
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[command(flatten)]
    policy: ClusterPolicyArgs,
    /// Output path for the selection
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Guard(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 3,
            CliError::Invalid(_) => 4,
            CliError::Guard(_) => 5,
        }
    }
}

impl From<PoolError> for CliError {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::Read { .. } | PoolError::Write { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Read { .. } | GraphError::Write { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Read { .. } | ClusterError::Write { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<GreedyError> for CliError {
    fn from(e: GreedyError) -> Self {
        match e {
            GreedyError::SearchSpaceTooLarge { .. } => CliError::Guard(e.to_string()),
            GreedyError::Write { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad grid dimension {v:?}"))
    };
    Ok((parse(w)?, parse(h)?))
}

/// Input file read with its content hash, the provenance unit.
struct Input {
    bytes: Vec<u8>,
    hash: String,
}

fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("failed to read {}: {e}", path.display())))?;
    let hash = content_hash(&bytes);
    Ok(Input { bytes, hash })
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("failed to write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Provenance {
    command: &'static str,
    config: serde_json::Value,
    inputs: BTreeMap<&'static str, String>,
}

impl Provenance {
    fn new<C: Serialize>(command: &'static str, config: &C) -> Self {
        Provenance {
            command,
            config: serde_json::to_value(config).expect("flag structs serialize"),
            inputs: BTreeMap::new(),
        }
    }

    fn input(mut self, name: &'static str, input: &Input) -> Self {
        self.inputs.insert(name, input.hash.clone());
        self
    }
}

/// Appends a provenance block to a JSON object and writes it.
fn write_json(path: &Path, body: &str, prov: &Provenance) -> Result<(), CliError> {
    let mut value: serde_json::Value =
        serde_json::from_str(body).expect("library output is valid JSON");
    value
        .as_object_mut()
        .expect("library output is a JSON object")
        .insert(
            "provenance".into(),
            serde_json::to_value(prov).expect("provenance serializes"),
        );
    let mut text = serde_json::to_string_pretty(&value).expect("JSON re-serializes");
    text.push('\n');
    write_output(path, &text)
}

fn load_pool_input(path: &Path, transform: RewardTransform) -> Result<(SegmentPool, Input), CliError> {
    let input = read_input(path)?;
    let pool = SegmentPool::from_json(&input.bytes, transform)?;
    Ok((pool, input))
}

/// Builds the similarity graph, optionally through a cache file keyed
/// by the pool hash and graph parameters.
fn obtain_graph(
    pool: &SegmentPool,
    pool_hash: &str,
    args: &GraphArgs,
) -> Result<SimilarityGraph, CliError> {
    let params = GraphParams {
        scale_neighbors: args.scale_neighbors,
        dilation: args.dilation,
    };
    let key = cache_key(pool_hash, params);
    if let Some(path) = &args.graph_cache {
        if let Some(graph) = read_cache(path, &key)? {
            return Ok(graph);
        }
    }
    let graph = build_graph(pool, params)?;
    if let Some(path) = &args.graph_cache {
        write_cache(path, &key, &graph)?;
    }
    Ok(graph)
}

fn obtain_clusters(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    precomputed: &Option<PathBuf>,
    policy: &ClusterPolicyArgs,
    prov: Provenance,
) -> Result<(ClusterAssignment, Provenance), CliError> {
    match precomputed {
        Some(path) => {
            let input = read_input(path)?;
            let clusters = ClusterAssignment::from_json(&input.bytes, pool)?;
            Ok((clusters, prov.input("clusters", &input)))
        }
        None => {
            let params = ClusterParams {
                coarse_threshold: policy.coarse_threshold,
                per_layer: policy.per_layer.clone(),
            };
            Ok((cluster_pool(pool, graph, &params)?, prov))
        }
    }
}

fn load_selection(path: &Path) -> Result<(SelectionResult, Input), CliError> {
    let input = read_input(path)?;
    let selection = SelectionResult::from_json(&input.bytes)
        .map_err(|e| CliError::Invalid(format!("malformed selection file: {e}")))?;
    Ok((selection, input))
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        seed: args.seed,
        grid: args.grid,
        num_objects: args.objects,
        num_layers: args.layers,
        parts_per_object: args.parts,
        background_tiles: args.tiles,
        reward_noise_std: args.reward_noise,
        feature_noise_std: args.feature_noise,
    };
    let (pool, gt) = synthesize(&config)?;
    let prov = Provenance::new("synth", &args);
    write_json(&args.pool_out, &pool.to_json(), &prov)?;
    write_json(&args.gt_out, &gt.to_json(), &prov)
}

fn run_cluster(args: ClusterArgs) -> Result<(), CliError> {
    let (pool, pool_input) = load_pool_input(&args.pool, RewardTransform::None)?;
    let graph = obtain_graph(&pool, &pool_input.hash, &args.graph)?;
    let params = ClusterParams {
        coarse_threshold: args.policy.coarse_threshold,
        per_layer: args.policy.per_layer.clone(),
    };
    let clusters = cluster_pool(&pool, &graph, &params)?;
    let prov = Provenance::new("cluster", &args).input("pool", &pool_input);
    write_json(&args.out, &clusters.to_json(&pool), &prov)
}

fn selection_params(args: &ObjectiveArgs, pool: &SegmentPool) -> Result<ObjectiveParams, CliError> {
    let params = ObjectiveParams {
        alpha: args.alpha,
        beta: args.beta,
        k: args.k as usize,
    };
    params.validate(pool.len())?;
    Ok(params)
}

fn run_select(args: SelectArgs) -> Result<(), CliError> {
    let (pool, pool_input) =
        load_pool_input(&args.pool, args.objective.reward_transform.into())?;
    let params = selection_params(&args.objective, &pool)?;
    let graph = obtain_graph(&pool, &pool_input.hash, &args.graph)?;
    let prov = Provenance::new("select", &args).input("pool", &pool_input);
    let (clusters, prov) = obtain_clusters(&pool, &graph, &args.clusters, &args.policy, prov)?;
    let result = match args.algorithm {
        AlgorithmArg::Naive => greedy_naive(&pool, &graph, &clusters, &params)?,
        AlgorithmArg::Lazy => greedy_lazy(&pool, &graph, &clusters, &params)?,
    };
    write_json(&args.out, &result.to_json(), &prov)
}

fn run_oracle(args: OracleArgs) -> Result<(), CliError> {
    let (pool, pool_input) =
        load_pool_input(&args.pool, args.objective.reward_transform.into())?;
    let params = selection_params(&args.objective, &pool)?;
    let graph = obtain_graph(&pool, &pool_input.hash, &args.graph)?;
    let prov = Provenance::new("oracle", &args).input("pool", &pool_input);
    let (clusters, prov) = obtain_clusters(&pool, &graph, &args.clusters, &args.policy, prov)?;
    let result = brute_force(&pool, &graph, &clusters, &params)?;
    write_json(&args.out, &result.to_json(), &prov)
}

fn run_eval(mut args: EvalArgs) -> Result<(), CliError> {
    let (pool, pool_input) = load_pool_input(&args.pool, RewardTransform::None)?;
    let gt_input = read_input(&args.gt)?;
    let gt = GroundTruth::from_json(&gt_input.bytes)?;
    let (selection, sel_input) = load_selection(&args.selection)?;
    let k = args.k.map_or(selection.order.len(), |k| k as usize);
    args.k = Some(k as u64);
    let metrics = score_selection(&pool, &gt, &selection.order, k)?;
    let prov = Provenance::new("eval", &args)
        .input("pool", &pool_input)
        .input("gt", &gt_input)
        .input("selection", &sel_input);
    let body = serde_json::to_string(&metrics).expect("metrics serialize");
    write_json(&args.out, &body, &prov)
}

fn run_sweep(mut args: SweepArgs) -> Result<(), CliError> {
    let (pool, pool_input) = load_pool_input(&args.pool, RewardTransform::None)?;
    let gt_input = read_input(&args.gt)?;
    let gt = GroundTruth::from_json(&gt_input.bytes)?;
    let (selection, sel_input) = load_selection(&args.selection)?;
    let k_max = args.k_max.map_or(selection.order.len(), |k| k as usize);
    args.k_max = Some(k_max as u64);
    let curve = budget_curve(&pool, &gt, &selection.order, k_max, args.step as usize)?;
    let prov = Provenance::new("sweep", &args)
        .input("pool", &pool_input)
        .input("gt", &gt_input)
        .input("selection", &sel_input);
    let header = format!(
        "# provenance: {}\n",
        serde_json::to_string(&prov).expect("provenance serializes")
    );
    write_output(&args.out, &format!("{header}{}", curve_to_csv(&curve)))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Cluster(args) => run_cluster(args),
        Command::Select(args) => run_select(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Oracle(args) => run_oracle(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
