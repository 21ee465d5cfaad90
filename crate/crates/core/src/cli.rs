//! Command line front end. Every subcommand writes machine-readable output
//! under `--out` and a short human summary to standard output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::attention::gradcheck::{check_block, BlockCheckConfig};
use crate::attention::BlockKind;
use crate::bench::{bench_block, bench_gather};
use crate::diagnostics::{
    adaptation_report, choice_map, generalization_gap, layer_entropy_profile, random_codebook_config, run_pipeline,
    run_pipeline_with, write_entropy_csv, write_gap_csv, ChoiceAxis,
};
use crate::model::{evaluate, scene_grid, Model, RunConfig, SceneData};
use crate::numerics::checkpoint::Checkpoint;
use crate::patterns::{build_region_codebook, collect_patterns, elbow_select, kmodes, BuildConfig, KModesConfig, RegionSet};
use crate::synth::{generate, make_corpus, Scene};
use crate::voxel::io::{read_scene, write_scene, ScenePoint};
use crate::voxel::{OccupancyMask, SparseVoxelGrid};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "codedvtr", version, about = "Codebook-based geometry-aware attention for sparse voxel grids")]
pub struct Cli {
    /// Seed for every random choice (model init, corpus, sampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic labelled scenes.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Geometric region mining.
    #[command(subcommand)]
    Patterns(PatternsCmd),
    /// Train a model; writes model.ckpt and train_report.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes eval.json.
    Eval(EvalArgs),
    /// Finite-difference check of one block over several seeds.
    Gradcheck(GradcheckArgs),
    /// Diagnostic exports.
    #[command(subcommand)]
    Diagnose(DiagnoseCmd),
    /// Throughput probes.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted overrides such as `train.epochs=5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Ply,
    Csv,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Ply => "ply",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    /// One scene of the configured corpus.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum, default_value = "ply")]
        format: Format,
    },
    /// The whole corpus under train/ and val/, plus corpus.json.
    Corpus {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "ply")]
        format: Format,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MaskSource {
    /// Scene files (.ply or .csv).
    #[arg(long, num_args = 1..)]
    pub scenes: Vec<PathBuf>,
    /// Masks written by `patterns collect`.
    #[arg(long, conflicts_with = "scenes")]
    pub masks: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub voxel_size: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
    #[arg(long, default_value_t = 1)]
    pub dilation: u32,
    /// Keep a seeded subsample of this many masks.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum PatternsCmd {
    /// Occupancy masks of every voxel; writes masks.json.
    Collect(MaskSource),
    /// K-modes on masks; writes cluster.json.
    Cluster {
        #[command(flatten)]
        src: MaskSource,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
    /// Cost curve and saturation point; writes elbow.json.
    Elbow {
        #[command(flatten)]
        src: MaskSource,
        #[arg(long, default_value_t = 12)]
        max_m: usize,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
    /// Full region codebook for all strides and dilations; writes regions.json.
    Build {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scene files; the configured corpus' training scenes when omitted.
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Region codebook to use instead of mining one.
    #[arg(long)]
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled scene files; the configured corpus' validation scenes when omitted.
    #[arg(long, num_args = 1..)]
    pub scenes: Vec<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "coded")]
    pub kind: KindArg,
    /// Number of consecutive seeds, starting at `--seed`.
    #[arg(long, default_value_t = 20)]
    pub count: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 20)]
    pub voxels: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Conv,
    Vanilla,
    Coded,
}

impl From<KindArg> for BlockKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Conv => BlockKind::Conv,
            KindArg::Vanilla => BlockKind::Vanilla,
            KindArg::Coded => BlockKind::Coded,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelScenes {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene files; the configured corpus' validation scenes when omitted.
    #[arg(long, num_args = 1..)]
    pub scenes: Vec<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCmd {
    /// Per-layer choice entropy; writes entropy.csv.
    Entropy(ModelScenes),
    /// Per-voxel shape or dilation choice; writes PLY and CSV per scene and
    /// adaptation.json for labelled scenes.
    Choices {
        #[command(flatten)]
        src: ModelScenes,
        #[arg(long, value_enum, default_value = "shape")]
        axis: AxisArg,
        /// Coded block name such as `enc0.b0`; the first one when omitted.
        #[arg(long)]
        layer: Option<String>,
    },
    /// Train/validation accuracy per epoch for two configurations; writes gap.csv.
    Gap {
        #[arg(long)]
        config_a: Option<PathBuf>,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value = "a")]
        label_a: String,
        #[arg(long, default_value = "b")]
        label_b: String,
        /// Training-scene counts to sweep; the configured count when omitted.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// Train with a frozen random codebook choice; writes rs/model.ckpt and rs_report.json.
    RsBaseline(ConfigArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Shape,
    Dilation,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Neighbor-table construction; writes bench_gather.json.
    Gather {
        #[arg(long, default_value_t = 100_000)]
        voxels: usize,
        #[arg(long, default_value_t = 1)]
        dilation: u32,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// One block forward pass; writes bench_block.json.
    Block {
        #[arg(long, value_enum, default_value = "coded")]
        kind: KindArg,
        #[arg(long, default_value_t = 5000)]
        voxels: usize,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs `cli` inside a pool of `--threads` workers when given.
pub fn execute(cli: &Cli) -> Result<i32> {
    match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} threads: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    Ok(&cli.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

fn load_config(cli: &Cli, args: &ConfigArgs) -> Result<RunConfig> {
    let base = match &args.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&args.overrides)?;
    if let Some(s) = cli.seed {
        cfg.model.seed = s;
        cfg.corpus.seed = s;
    }
    Ok(cfg)
}

fn read_scenes(paths: &[PathBuf]) -> Result<Vec<(String, Vec<ScenePoint>)>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scene").to_string();
            Ok((name, read_scene(p)?))
        })
        .collect()
}

fn grids(scenes: &[(String, Vec<ScenePoint>)], voxel_size: f64, height_scale: f64) -> Result<Vec<SparseVoxelGrid>> {
    scenes.iter().map(|(_, p)| scene_grid(p, voxel_size, height_scale)).collect()
}

fn bitstrings(masks: &[OccupancyMask]) -> Vec<String> {
    masks.iter().map(|m| m.to_bitstring()).collect()
}

#[derive(Serialize, serde::Deserialize)]
struct MaskFile {
    stride: u32,
    dilation: u32,
    masks: Vec<String>,
}

fn masks_from(cli: &Cli, src: &MaskSource) -> Result<Vec<OccupancyMask>> {
    if let Some(p) = &src.masks {
        let file: MaskFile = serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?;
        return file.masks.iter().map(|s| OccupancyMask::from_bitstring(s)).collect();
    }
    if src.scenes.is_empty() {
        return Err(Error::invalid("give --scenes or --masks"));
    }
    let scenes = read_scenes(&src.scenes)?;
    let g = grids(&scenes, src.voxel_size, 1.0)?;
    let c = collect_patterns(&g, src.stride, src.dilation, src.samples, cli.seed.unwrap_or(0))?;
    Ok(c.masks)
}

/// Scenes named on the command line, or the validation split of the
/// configured corpus.
fn scenes_or_val(paths: &[PathBuf], cfg: &RunConfig) -> Result<Vec<(String, Vec<ScenePoint>)>> {
    if !paths.is_empty() {
        return read_scenes(paths);
    }
    let corpus = make_corpus(&cfg.corpus)?;
    if corpus.val.is_empty() {
        return Err(Error::invalid("the configured corpus has no validation scenes; pass --scenes"));
    }
    Ok(corpus.val.into_iter().map(|s| (s.name, s.points)).collect())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_checkpoint(&Checkpoint::load(path)?)
}

fn prepared(model: &Model, scenes: &[(String, Vec<ScenePoint>)]) -> Result<Vec<SceneData>> {
    scenes.iter().map(|(_, p)| model.prepare(p)).collect()
}

fn write_corpus_scene(dir: &Path, s: &Scene, format: Format) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.{}", s.name, format.ext()));
    write_scene(&path, &s.points)?;
    Ok(path)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Synth(cmd) => synth(cli, cmd),
        Command::Patterns(cmd) => patterns(cli, cmd),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Gradcheck(a) => gradcheck(cli, a),
        Command::Diagnose(cmd) => diagnose(cli, cmd),
        Command::Bench(cmd) => bench(cli, cmd),
    }
}

fn synth(cli: &Cli, cmd: &SynthCmd) -> Result<i32> {
    match cmd {
        SynthCmd::Generate { cfg, index, format } => {
            let cfg = load_config(cli, cfg)?;
            let (spec, _) = cfg.corpus.scene_spec(*index)?;
            let points = generate(&spec)?;
            let path = out_dir(cli)?.join(format!("scene_{index:03}.{}", format.ext()));
            write_scene(&path, &points)?;
            println!("wrote {} points to {}", points.len(), path.display());
        }
        SynthCmd::Corpus { cfg, format } => {
            let cfg = load_config(cli, cfg)?;
            let corpus = make_corpus(&cfg.corpus)?;
            let out = out_dir(cli)?;
            let mut summary = Vec::new();
            for (split, scenes) in [("train", &corpus.train), ("val", &corpus.val)] {
                for s in scenes {
                    write_corpus_scene(&out.join(split), s, *format)?;
                    summary.push(serde_json::json!({
                        "split": split,
                        "name": s.name,
                        "points": s.points.len(),
                        "seed": s.spec.seed,
                    }));
                }
            }
            write_json(
                &out.join("corpus.json"),
                &serde_json::json!({ "corpus": cfg.corpus, "scenes": summary, "warnings": corpus.warnings }),
            )?;
            println!("wrote {} training and {} validation scenes", corpus.train.len(), corpus.val.len());
        }
    }
    Ok(0)
}

fn patterns(cli: &Cli, cmd: &PatternsCmd) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    match cmd {
        PatternsCmd::Collect(src) => {
            let masks = masks_from(cli, src)?;
            let file = MaskFile { stride: src.stride, dilation: src.dilation, masks: bitstrings(&masks) };
            write_json(&out_dir(cli)?.join("masks.json"), &file)?;
            println!("collected {} masks", masks.len());
        }
        PatternsCmd::Cluster { src, m, restarts } => {
            let masks = masks_from(cli, src)?;
            let r = kmodes(&masks, &KModesConfig { restarts: *restarts, ..KModesConfig::new(*m, seed) })?;
            let json = serde_json::json!({
                "m": r.m,
                "cost": r.cost,
                "centroids": bitstrings(&r.centroids),
                "cluster_sizes": r.cluster_sizes(),
                "iterations": r.iterations,
                "restart": r.restart,
            });
            write_json(&out_dir(cli)?.join("cluster.json"), &json)?;
            println!("M = {}: cost {}", r.m, r.cost);
        }
        PatternsCmd::Elbow { src, max_m, threshold, restarts } => {
            let masks = masks_from(cli, src)?;
            let base = KModesConfig { restarts: *restarts, ..KModesConfig::new(1, seed) };
            let r = elbow_select(&masks, 1..=*max_m, *threshold, &base)?;
            write_json(&out_dir(cli)?.join("elbow.json"), &r)?;
            println!("M* = {} (saturated: {})", r.m_star, r.saturated);
        }
        PatternsCmd::Build { cfg, scenes } => {
            let cfg = load_config(cli, cfg)?;
            let g = if scenes.is_empty() {
                let corpus = make_corpus(&cfg.corpus)?;
                corpus
                    .train
                    .iter()
                    .map(|s| scene_grid(&s.points, cfg.model.voxel_size, cfg.model.height_scale))
                    .collect::<Result<Vec<_>>>()?
            } else {
                grids(&read_scenes(scenes)?, cfg.model.voxel_size, cfg.model.height_scale)?
            };
            let mut b = BuildConfig::new(cfg.model.m, cfg.model.d, cfg.model.strides(), cfg.model.seed);
            b.sample_count = Some(cfg.pattern_samples);
            b.restarts = cfg.pattern_restarts;
            let regions = build_region_codebook(&g, &b)?;
            let path = out_dir(cli)?.join("regions.json");
            fs::write(&path, regions.to_json()?).map_err(|e| Error::io(&path, e))?;
            println!("wrote {} x {} regions for strides {:?}", regions.m, regions.d, b.strides);
        }
    }
    Ok(0)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<i32> {
    let cfg = load_config(cli, &a.cfg)?;
    let out = out_dir(cli)?;
    let regions = match &a.regions {
        Some(p) => Some(RegionSet::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?),
        None => None,
    };
    let mut report = run_pipeline_with(&cfg, regions, Some(out))?.report;
    // Relative path keeps the report independent of where --out points.
    report.checkpoint = report.checkpoint.map(|p| PathBuf::from(p.file_name().unwrap_or_default()));
    write_json(&out.join("train_report.json"), &report)?;
    if let Some(last) = report.last() {
        println!(
            "{} parameters, {} epochs in {:.2}s: train acc {:.3}, val acc {}",
            report.param_count,
            report.epochs.len(),
            report.wall_clock_s,
            last.train_accuracy,
            last.val_accuracy.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    Ok(0)
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<i32> {
    let model = load_model(&a.checkpoint)?;
    let cfg = load_config(cli, &a.cfg)?;
    let scenes = scenes_or_val(&a.scenes, &cfg)?;
    let data = prepared(&model, &scenes)?;
    let report = evaluate(&model, &data)?;
    write_json(&out_dir(cli)?.join("eval.json"), &report)?;
    println!("accuracy {:.4}, mean IoU {:.4} over {} voxels", report.accuracy, report.mean_iou, report.voxels);
    Ok(0)
}

#[derive(Serialize)]
struct GradcheckSummary {
    kind: BlockKind,
    threshold: f64,
    passed: bool,
    max_rel_error: f64,
    seeds: Vec<(u64, f64)>,
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<i32> {
    if a.count == 0 {
        return Err(Error::invalid("--count must be positive"));
    }
    let start = cli.seed.unwrap_or(0);
    let mut seeds = Vec::new();
    for seed in start..start + a.count {
        let cfg = BlockCheckConfig {
            kind: a.kind.into(),
            voxels: a.voxels,
            channels: a.channels,
            heads: a.heads,
            m: a.m,
            d: a.d,
            seed,
            ..Default::default()
        };
        seeds.push((seed, check_block(&cfg)?.max_rel_error));
    }
    let max = seeds.iter().map(|s| s.1).fold(0.0, f64::max);
    let passed = max < a.threshold;
    let summary = GradcheckSummary { kind: a.kind.into(), threshold: a.threshold, passed, max_rel_error: max, seeds };
    write_json(&out_dir(cli)?.join("gradcheck.json"), &summary)?;
    println!("max relative error {max:.3e} over {} seeds: {}", a.count, if passed { "pass" } else { "FAIL" });
    if passed {
        Ok(0)
    } else {
        Err(Error::Numerical(format!("gradient check failed: {max:.3e} >= {:e}", a.threshold)))
    }
}

fn diagnose(cli: &Cli, cmd: &DiagnoseCmd) -> Result<i32> {
    match cmd {
        DiagnoseCmd::Entropy(src) => {
            let model = load_model(&src.checkpoint)?;
            let cfg = load_config(cli, &src.cfg)?;
            let data = prepared(&model, &scenes_or_val(&src.scenes, &cfg)?)?;
            let profile = layer_entropy_profile(&model, &data)?;
            let path = out_dir(cli)?.join("entropy.csv");
            write_with(&path, |w| write_entropy_csv(w, &profile))?;
            for e in &profile {
                println!("{:<10} w {:.4}  w_f {:.4}", e.layer, e.entropy, e.entropy_fused);
            }
        }
        DiagnoseCmd::Choices { src, axis, layer } => {
            let model = load_model(&src.checkpoint)?;
            let cfg = load_config(cli, &src.cfg)?;
            let scenes = scenes_or_val(&src.scenes, &cfg)?;
            let data = prepared(&model, &scenes)?;
            let axis = match axis {
                AxisArg::Shape => ChoiceAxis::Shape,
                AxisArg::Dilation => ChoiceAxis::Dilation,
            };
            let tag = match axis {
                ChoiceAxis::Shape => "shape",
                ChoiceAxis::Dilation => "dilation",
            };
            let out = out_dir(cli)?;
            for ((name, _), d) in scenes.iter().zip(&data) {
                let map = choice_map(&model, d, layer.as_deref(), axis)?;
                write_with(&out.join(format!("choices_{tag}_{name}.ply")), |w| map.write_ply(w))?;
                write_with(&out.join(format!("choices_{tag}_{name}.csv")), |w| map.write_csv(w))?;
            }
            if data.iter().all(|d| d.labels().is_some()) {
                let r = adaptation_report(&model, &data, None)?;
                write_json(&out.join("adaptation.json"), &r)?;
                println!(
                    "floor-interior modal shape {:?} (plane shapes {:?}); modal dilation low/high density {:?}/{:?}",
                    r.floor_modal_shape, r.plane_shapes, r.low_modal_dilation, r.high_modal_dilation
                );
            }
            println!("wrote {tag} choice maps for {} scenes", scenes.len());
        }
        DiagnoseCmd::Gap { config_a, config_b, label_a, label_b, sizes } => {
            let a = load_config(cli, &ConfigArgs { config: config_a.clone(), overrides: vec![] })?;
            let b = load_config(cli, &ConfigArgs { config: Some(config_b.clone()), overrides: vec![] })?;
            let sizes = if sizes.is_empty() {
                vec![((a.corpus.scenes as f64) * a.corpus.train_ratio).round() as usize]
            } else {
                sizes.clone()
            };
            let rows = generalization_gap((label_a, &a), (label_b, &b), &sizes)?;
            write_with(&out_dir(cli)?.join("gap.csv"), |w| write_gap_csv(w, &rows))?;
            println!("wrote {} gap rows", rows.len());
        }
        DiagnoseCmd::RsBaseline(args) => {
            let cfg = load_config(cli, args)?;
            let rs = random_codebook_config(&cfg, cfg.model.seed)?;
            let dir = out_dir(cli)?.join("rs");
            let mut report = run_pipeline(&rs, Some(&dir))?.report;
            report.checkpoint = Some(PathBuf::from("rs/model.ckpt"));
            write_json(&out_dir(cli)?.join("rs_report.json"), &report)?;
            if let Some(last) = report.last() {
                println!("random codebook: val acc {}", last.val_accuracy.map_or("n/a".into(), |v| format!("{v:.3}")));
            }
        }
    }
    Ok(0)
}

fn bench(cli: &Cli, cmd: &BenchCmd) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    let (name, report) = match cmd {
        BenchCmd::Gather { voxels, dilation, repeats } => ("bench_gather.json", bench_gather(*voxels, *dilation, *repeats, seed)?),
        BenchCmd::Block { kind, voxels, channels, heads, m, d, repeats } => {
            let cfg = BlockCheckConfig {
                kind: (*kind).into(),
                voxels: *voxels,
                channels: *channels,
                heads: *heads,
                m: *m,
                d: *d,
                seed,
                ..Default::default()
            };
            ("bench_block.json", bench_block(&cfg, *repeats)?)
        }
    };
    write_json(&out_dir(cli)?.join(name), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(0)
}
