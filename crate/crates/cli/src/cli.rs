//! Command-line definitions and subcommand drivers.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nasa_core::cluster::{density_peak_clusters, threshold_baseline};
use nasa_core::config::{PipelineConfig, Preset};
use nasa_core::gcn::{aggregate, build_adjacency, train_gcn, GcnModel};
use nasa_core::graph::{build_knn, KnnGraph, WeightedGraph};
use nasa_core::linker::{adjust_graph, pair_report, train_nasa, NasaModel};
use nasa_core::metrics::{bcubed_f, figure2_sweep, pairwise_f, SweepConfig};
use nasa_core::pipeline::{self, SubgraphSource};
use nasa_core::synth::{synth_generate, ClassSizes, SynthSpec};

use crate::{checkpoint, io, report};

#[derive(Debug, Parser)]
#[command(name = "nasa", version, about = "Embedding clustering with learned subgraph adjustment")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random number consumer.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parameter preset applied before the config file.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
    /// Overrides a single setting, e.g. `--set nasa.t1=0.75`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Ms1m,
    Ijbb,
    Deepfashion,
    Synth,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Ms1m => Preset::Ms1m,
            PresetArg::Ijbb => Preset::Ijbb,
            PresetArg::Deepfashion => Preset::DeepFashion,
            PresetArg::Synth => Preset::Synth,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Gaussian blobs on the unit sphere.
    Synth(SynthArgs),
    /// Build the exact cosine kNN graph.
    Knn(KnnArgs),
    /// Train the linkage predictor.
    TrainNasa(TrainNasaArgs),
    /// Replace kNN similarities with predicted linkage probabilities.
    Adjust(AdjustArgs),
    /// Train the aggregation GCN on an adjusted graph.
    TrainGcn(TrainGcnArgs),
    /// Aggregate features with a trained GCN.
    Aggregate(AggregateArgs),
    /// Cluster features by density-peak linking or a fixed threshold.
    Cluster(ClusterArgs),
    /// Score a cluster file against labels.
    Eval(EvalArgs),
    /// Corrupt label-consistent subgraphs and report clustering quality.
    SweepFig2(SweepArgs),
    /// Fit on a training split and cluster a test split.
    RunAll(RunAllArgs),
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 150)]
    pub classes: usize,
    /// Fixed class size; ignored when --min-size and --max-size are given.
    #[arg(long, default_value_t = 20)]
    pub size: usize,
    #[arg(long, requires = "max_size")]
    pub min_size: Option<usize>,
    #[arg(long, requires = "min_size")]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long)]
    pub out_features: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureInput {
    #[arg(long)]
    pub features: PathBuf,
    /// Use rows as stored instead of L2-normalizing them.
    #[arg(long)]
    pub no_normalize: bool,
}

impl FeatureInput {
    fn load(&self) -> anyhow::Result<nasa_core::graph::EmbeddingSet> {
        Ok(io::load_features(&self.features, !self.no_normalize)?)
    }
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    /// Defaults to nasa.k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainNasaArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long)]
    pub labels: PathBuf,
    /// Precomputed kNN graph; built from the features when absent.
    #[arg(long)]
    pub knn: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub knn: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also print a pair report against these labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
}

#[derive(Debug, Args)]
pub struct TrainGcnArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long)]
    pub labels: PathBuf,
    /// Adjusted graph from `adjust`.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClusterMethod {
    Dpc,
    Threshold,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long, value_enum, default_value_t = ClusterMethod::Dpc)]
    pub method: ClusterMethod,
    /// Edge cutoff for `threshold`; defaults to nasa.t1.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[arg(long)]
    pub labels: PathBuf,
    /// Defaults to nasa.k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.9,0.7,0.5")]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SubgraphArg {
    /// Linkage-adjusted subgraphs.
    Nasa,
    /// Raw cosine subgraphs cut at the best-separating training cutoff.
    Raw,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub test_features: PathBuf,
    /// When given, F-scores are printed and written to the report.
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SubgraphArg::Nasa)]
    pub subgraphs: SubgraphArg,
    #[arg(long)]
    pub no_normalize: bool,
}

/// Runtime failure, mapped to exit code 2.
pub type RunResult = anyhow::Result<()>;

pub fn resolve_config(g: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::preset(g.preset.map_or(Preset::Ms1m, Preset::from));
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let seed = cfg.seed;
        cfg.apply_kv(&text).with_context(|| format!("parsing {}", path.display()))?;
        // a preset named on the command line wins over one in the file
        if let Some(p) = g.preset {
            if cfg.preset != Preset::from(p) {
                let mut base = PipelineConfig::preset(p.into());
                base.set_seed(seed);
                let mut rest =
                    text.lines().filter(|l| !l.trim_start().starts_with("preset")).collect::<Vec<_>>().join("\n");
                rest.push('\n');
                base.apply_kv(&rest)?;
                cfg = base;
            }
        }
    }
    for kv in &g.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn knn_for(input: &nasa_core::graph::EmbeddingSet, path: Option<&Path>, k: usize) -> anyhow::Result<KnnGraph> {
    match path {
        Some(p) => {
            let knn = io::load_knn(p)?;
            if knn.len() != input.len() {
                bail!("{}: graph has {} nodes, features have {}", p.display(), knn.len(), input.len());
            }
            Ok(knn)
        }
        None => Ok(build_knn(input, k.min(input.len()))?),
    }
}

fn load_nasa(path: &Path, cfg: &PipelineConfig) -> anyhow::Result<NasaModel> {
    Ok(NasaModel::from_named_tensors(&checkpoint::load(path)?, &cfg.nasa)?)
}

fn load_gcn(path: &Path) -> anyhow::Result<GcnModel> {
    Ok(GcnModel::from_named_tensors(&checkpoint::load(path)?)?)
}

pub fn execute(cli: &Cli) -> RunResult {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::ShowConfig => print!("{}", cfg.to_kv()),
        Command::Synth(a) => {
            let sizes = match (a.min_size, a.max_size) {
                (Some(min), Some(max)) => ClassSizes::Uniform { min, max },
                _ => ClassSizes::Fixed(a.size),
            };
            let spec = SynthSpec { classes: a.classes, sizes, dim: a.dim, noise: a.noise, seed: cfg.seed };
            let (e, l) = synth_generate(&spec)?;
            io::save_features(&e, &a.out_features)?;
            io::save_labels(&l, &a.out_labels)?;
            println!("count={}\ndim={}\nclasses={}", e.len(), e.dim(), a.classes);
        }
        Command::Knn(a) => {
            let e = a.input.load()?;
            let knn = build_knn(&e, a.k.unwrap_or(cfg.nasa.k).min(e.len()))?;
            io::save_knn(&knn, &a.out)?;
        }
        Command::TrainNasa(a) => {
            let e = a.input.load()?;
            let gt = io::load_labels(&a.labels)?;
            let knn = knn_for(&e, a.knn.as_deref(), cfg.nasa.k)?;
            let (model, log) = train_nasa(&e, &knn, &gt, &cfg.nasa)?;
            checkpoint::save(&model.named_tensors(), &a.out_model)?;
            let text = report::nasa_log(&log);
            match &a.log {
                Some(p) => io::write_text(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Adjust(a) => {
            let e = a.input.load()?;
            let model = load_nasa(&a.model, &cfg)?;
            let knn = knn_for(&e, a.knn.as_deref(), model.config.k)?;
            let g = adjust_graph(&model, &e, &knn)?;
            io::save_weighted(&g, &a.out)?;
            if let Some(lp) = &a.labels {
                let gt = io::load_labels(lp)?;
                print!("{}", report::pairs(&pair_report(&model, &e, &knn, &gt, a.cutoff)?));
            }
        }
        Command::TrainGcn(a) => {
            let e = a.input.load()?;
            let gt = io::load_labels(&a.labels)?;
            let g = io::load_weighted(&a.graph)?.truncated(cfg.k_gcn_train);
            let adj = build_adjacency(&g, cfg.t3_train);
            let (model, log) = train_gcn(&e, &adj, &gt, &cfg.gcn)?;
            checkpoint::save(&model.named_tensors(), &a.out_model)?;
            let text = report::gcn_log(&log);
            match &a.log {
                Some(p) => io::write_text(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Aggregate(a) => {
            let e = a.input.load()?;
            let model = load_gcn(&a.model)?;
            let g = io::load_weighted(&a.graph)?.truncated(cfg.k_gcn_test);
            let adj = build_adjacency(&g, cfg.t3_test);
            io::save_features(&aggregate(&model, &e, &adj)?, &a.out)?;
        }
        Command::Cluster(a) => {
            let e = a.input.load()?;
            let c = match a.method {
                ClusterMethod::Dpc => pipeline::cluster_aggregated(&e, &cfg)?,
                ClusterMethod::Threshold => {
                    let knn = build_knn(&e, cfg.nasa.k.min(e.len()))?;
                    threshold_baseline(&WeightedGraph::from_knn(&knn), a.tau.unwrap_or(cfg.nasa.t1))
                }
            };
            io::save_clusters(&c, &a.out)?;
            println!("clusters={}", c.num_clusters());
        }
        Command::Eval(a) => {
            let pred = io::load_clusters(&a.pred)?;
            let gt = io::load_labels(&a.labels)?;
            let text = report::fscores(&pairwise_f(&pred, &gt)?, &bcubed_f(&pred, &gt)?);
            print!("{text}");
            if let Some(p) = &a.out {
                io::write_text(p, &text)?;
            }
        }
        Command::SweepFig2(a) => {
            let e = a.input.load()?;
            let gt = io::load_labels(&a.labels)?;
            let knn = build_knn(&e, a.k.unwrap_or(cfg.nasa.k).min(e.len()))?;
            let rows =
                figure2_sweep(&knn, &gt, &SweepConfig { levels: a.levels.clone(), cutoff: a.cutoff, seed: cfg.seed })?;
            let csv = report::sweep_csv(&rows);
            io::write_text(&a.out, &csv)?;
            print!("{csv}");
        }
        Command::RunAll(a) => run_all(a, &cfg)?,
    }
    Ok(())
}

fn run_all(a: &RunAllArgs, cfg: &PipelineConfig) -> RunResult {
    let normalize = !a.no_normalize;
    let etr = io::load_features(&a.train_features, normalize)?;
    let ltr = io::load_labels(&a.train_labels)?;
    let ete = io::load_features(&a.test_features, normalize)?;
    let source = match a.subgraphs {
        SubgraphArg::Nasa => SubgraphSource::Linker,
        SubgraphArg::Raw => pipeline::calibrated_raw_source(&etr, &ltr, cfg)?,
    };
    let fitted = pipeline::fit(&etr, &ltr, cfg, source)?;
    let out = &a.out_dir;
    if let Some(m) = &fitted.nasa {
        checkpoint::save(&m.named_tensors(), &out.join("nasa.ckpt"))?;
    }
    checkpoint::save(&fitted.gcn.named_tensors(), &out.join("gcn.ckpt"))?;
    let mut log = report::nasa_log(&fitted.nasa_log);
    log.push_str(&report::gcn_log(&fitted.gcn_log));
    io::write_text(&out.join("train.log"), &log)?;
    io::write_text(&out.join("config.kv"), &cfg.to_kv())?;

    let pred = pipeline::predict(&fitted, &ete, cfg)?;
    io::save_clusters(&pred.clusters, &out.join("clusters.txt"))?;
    let mut text = format!("clusters={}\n", pred.clusters.num_clusters());
    if let Some(lp) = &a.test_labels {
        let gt = io::load_labels(lp)?;
        text.push_str(&report::fscores(&pairwise_f(&pred.clusters, &gt)?, &bcubed_f(&pred.clusters, &gt)?));
    }
    io::write_text(&out.join("report.kv"), &text)?;
    print!("{text}");
    Ok(())
}

/// Density-peak clustering of an already built weighted graph.
pub fn dpc_on_graph(g: &WeightedGraph, cfg: &PipelineConfig) -> anyhow::Result<nasa_core::cluster::ClusterAssignment> {
    Ok(density_peak_clusters(g, &cfg.dpc())?)
}
