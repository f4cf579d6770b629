//! Command implementations for the `recfield` binary.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recfield::data::{generate_shapes, read_dataset, write_dataset, Category, DatasetManifest, ShapeRecord};
use recfield::evaluation::{
    evaluate, mean_decomposition, per_label_iou, report_entries, report_text, segment_points, snap_labels, MetricReport,
};
use recfield::extraction::{build_hierarchy, export_hierarchy, mesh_to_obj};
use recfield::fsutil::{write_dir_atomically, write_file_atomically};
use recfield::network::{load_checkpoint, HeadKind, Network};
use recfield::svr::{
    code_iou, dataset_mse, latent_mse, render_views, train_image_encoder, write_images, ImageEncoder, ImageManifest,
    SvrDataset, IMAGE_SIZE,
};
use recfield::training::Trainer;
use recfield::Error;

pub use config::{DataConfig, RunConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// Invalid flags, config files or arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NonFiniteLoss { .. }) => EXIT_DIVERGENCE,
        Some(Error::InvalidInput(_) | Error::LevelOutOfRange { .. } | Error::ModeMismatch { .. }) => EXIT_USAGE,
        Some(e) if e.is_data_error() => EXIT_DATA,
        _ => 1,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "recfield",
    version,
    about = "Recursive implicit fields for hierarchical shape decomposition"
)]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for data generation, initialization, sampling and evaluation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural toy dataset
    GenData(GenDataArgs),
    /// Train a network on a dataset
    Train(TrainArgs),
    /// Score reconstructions and segmentation on a dataset
    Eval(EvalArgs),
    /// Extract per-level meshes and the structure hierarchy of one shape
    Extract(ExtractArgs),
    /// Write per-point leaf labels and label-snapped segmentation scores
    Segment(SegmentArgs),
    /// Train an image encoder against a trained network's codes
    SvrTrain(SvrTrainArgs),
    /// Reconstruct shapes from rendered views
    SvrInfer(SvrInferArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Shape category: table, chair or plane
    #[arg(long)]
    pub category: Option<String>,
    /// Number of shapes
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Gaussian,
    Sphere,
    Point,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Gaussian => HeadKind::Gaussian,
            HeadArg::Sphere => HeadKind::Sphere,
            HeadArg::Point => HeadKind::Point,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Number of hierarchy levels
    #[arg(long)]
    pub levels: Option<usize>,
    /// Part decoder output head
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Replace the hierarchy by one part decoder with this many branches
    #[arg(long, value_name = "K")]
    pub flat_branches: Option<usize>,
    /// Train without the decomposition loss
    #[arg(long)]
    pub no_decomposition_loss: bool,
    /// Train all levels jointly in a single stage
    #[arg(long)]
    pub no_progressive: bool,
    /// Iterations per training stage
    #[arg(long, value_name = "N")]
    pub stage_iters: Option<u64>,
    /// Continue from the checkpoint in the output directory
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many iterations and checkpoint; continue later with --resume
    #[arg(long, value_name = "N")]
    pub max_iters: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint directory; without one the ground truth is scored against itself
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    /// Field level to score (default: deepest)
    #[arg(long)]
    pub level: Option<usize>,
    /// Marching cubes resolution
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Shape id, e.g. table-00003
    #[arg(long)]
    pub shape: String,
    /// Only write the mesh of this level
    #[arg(long)]
    pub level: Option<usize>,
    /// Marching cubes resolution
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SvrTrainArgs {
    /// Trained network checkpoint
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Image encoder iterations
    #[arg(long, value_name = "N")]
    pub iters: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SvrInferArgs {
    /// Trained network checkpoint
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Image encoder directory written by svr-train
    #[arg(long, value_name = "DIR")]
    pub encoder: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Only reconstruct this shape and export its meshes
    #[arg(long)]
    pub shape: Option<String>,
    /// Marching cubes resolution for exported meshes
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    inputs: BTreeMap<&'a str, String>,
    config: &'a RunConfig,
}

fn resolved_config(command: &str, inputs: &[(&'static str, &Path)], cfg: &RunConfig) -> Vec<u8> {
    let r = Resolved {
        command,
        inputs: inputs.iter().map(|(k, p)| (*k, p.display().to_string())).collect(),
        config: cfg,
    };
    toml::to_string(&r).expect("config serializes").into_bytes()
}

fn write_resolved(out: &Path, command: &str, inputs: &[(&'static str, &Path)], cfg: &RunConfig) -> Result<()> {
    let name = format!("resolved_{}.toml", command.replace('-', "_"));
    write_file_atomically(&out.join(name), &resolved_config(command, inputs, cfg))?;
    Ok(())
}

fn write_json_atomically<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file_atomically(path, text.as_bytes())?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Training shapes come first; the last `holdout` shapes are held out.
pub fn split(shapes: &[ShapeRecord], holdout: usize) -> Result<(&[ShapeRecord], &[ShapeRecord])> {
    if holdout == 0 {
        return Ok((shapes, shapes));
    }
    if holdout >= shapes.len() {
        return Err(usage(format!(
            "holdout {holdout} leaves no training shapes out of {}",
            shapes.len()
        )));
    }
    Ok(shapes.split_at(shapes.len() - holdout))
}

fn load_data(dir: &Path) -> Result<Vec<ShapeRecord>> {
    let (shapes, _) = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    Ok(shapes)
}

fn load_network(dir: &Path) -> Result<Network<f32>> {
    Ok(load_checkpoint(dir, None)
        .with_context(|| format!("loading checkpoint {}", dir.display()))?
        .network)
}

fn find_shape<'a>(shapes: &'a [ShapeRecord], id: &str) -> Result<&'a ShapeRecord> {
    shapes
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| usage(format!("shape `{id}` is not in the dataset")))
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I, log: &mut dyn FnMut(&str)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, log) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, log: &mut dyn FnMut(&str)) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.propagate_seed();
    let out = cli.out.clone().ok_or_else(|| usage("--out is required"))?;
    match &cli.command {
        Command::GenData(a) => gen_data(cfg, a, &out, log),
        Command::Train(a) => train(cfg, a, &out, log),
        Command::Eval(a) => eval(cfg, a, &out, log),
        Command::Extract(a) => extract(cfg, a, &out, log),
        Command::Segment(a) => segment(cfg, a, &out, log),
        Command::SvrTrain(a) => svr_train(cfg, a, &out, log),
        Command::SvrInfer(a) => svr_infer(cfg, a, &out, log),
    }
}

fn gen_data(mut cfg: RunConfig, a: &GenDataArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if let Some(c) = &a.category {
        cfg.data.category = c.clone();
    }
    if let Some(n) = a.count {
        cfg.data.count = n;
    }
    let category: Category = cfg.data.category.parse()?;
    if out.exists() && !out.join("manifest.json").exists() && std::fs::read_dir(out)?.next().is_some() {
        return Err(usage(format!(
            "{} exists and is not a dataset; refusing to replace it",
            out.display()
        )));
    }
    let d = &cfg.data;
    let shapes = generate_shapes(category, d.count, cfg.seed, d.voxel_dim, d.sample_resolution)?;
    let manifest = DatasetManifest::describe(&shapes);
    let config = resolved_config("gen-data", &[], &cfg);
    write_dir_atomically(out, |tmp| {
        write_dataset(&shapes, &manifest, tmp)?;
        write_file_atomically(&tmp.join("resolved_gen_data.toml"), &config)
    })?;
    let occupied: f64 = shapes
        .iter()
        .map(|s| s.voxels.occupancy.iter().filter(|&&v| v != 0).count() as f64 / s.voxels.occupancy.len() as f64)
        .sum::<f64>()
        / shapes.len().max(1) as f64;
    log(&format!(
        "wrote {} {} shapes to {} (voxels {}³, {} points each, mean occupancy {:.4})",
        manifest.shape_count,
        category,
        out.display(),
        manifest.voxel_dim,
        manifest.points_per_shape,
        occupied
    ));
    Ok(())
}

fn train(mut cfg: RunConfig, a: &TrainArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if let Some(n) = a.levels {
        cfg.network.levels = n;
    }
    if let Some(h) = a.head {
        cfg.network.head_kind = h.into();
    }
    if let Some(k) = a.flat_branches {
        cfg.network.flat_branches = Some(k);
    }
    if a.no_decomposition_loss {
        cfg.train.loss.decomposition_enabled = false;
    }
    if a.no_progressive {
        cfg.train.progressive = false;
    }
    if let Some(n) = a.stage_iters {
        cfg.train.stage_iterations = n;
    }
    let shapes = load_data(&a.data)?;
    let (train_set, _) = split(&shapes, cfg.data.holdout)?;
    ensure_dir(out)?;
    let ckpt = out.join("checkpoint");
    let log_path = out.join("train_log.csv");
    let (mut trainer, mut lines) = if a.resume && ckpt.exists() {
        let t = Trainer::resume(&ckpt, Some(&cfg.network))?;
        let prev = std::fs::read_to_string(&log_path).unwrap_or_default();
        let kept: Vec<String> = prev
            .lines()
            .enumerate()
            .filter(|(i, l)| {
                *i == 0
                    || l.split(',')
                        .next()
                        .and_then(|n| n.parse::<u64>().ok())
                        .is_some_and(|n| n < t.iteration)
            })
            .map(|(_, l)| l.to_string())
            .collect();
        log(&format!("resuming at iteration {} ({})", t.iteration, t.stage_name()));
        (t, kept)
    } else {
        let net = Network::new(cfg.network.clone())?;
        (
            Trainer::new(net, cfg.train.clone())?.with_checkpoints(&ckpt),
            Vec::new(),
        )
    };
    if lines.is_empty() {
        lines.push(recfield::training::log_header(trainer.network.field_levels()));
    }
    write_resolved(out, "train", &[("data", &a.data)], &cfg)?;
    let total = trainer.plan.total_iterations();
    let result = trainer.run(train_set, a.max_iters, &mut |l| {
        let it = l.split(',').next().and_then(|n| n.parse::<u64>().ok()).unwrap_or(0);
        if it % 500 == 0 || it + 1 == total {
            log(l);
        }
        lines.push(l.to_string());
    });
    let mut text = lines.join("\n");
    text.push('\n');
    write_file_atomically(&log_path, text.as_bytes())?;
    result?;
    if !trainer.is_done() {
        trainer.save(&ckpt)?;
        log(&format!(
            "stopped at iteration {}; checkpoint at {}",
            trainer.iteration,
            ckpt.display()
        ));
        return Ok(());
    }
    log(&format!(
        "finished {} iterations; checkpoint at {}",
        trainer.iteration,
        ckpt.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    entries: BTreeMap<String, f64>,
    mean_decomposition: Option<f64>,
    reports: &'a [MetricReport],
}

fn eval(mut cfg: RunConfig, a: &EvalArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if a.level.is_some() {
        cfg.eval.level = a.level;
    }
    if let Some(r) = a.resolution {
        cfg.eval.mc_resolution = r;
    }
    let shapes = load_data(&a.data)?;
    let (_, test) = split(&shapes, cfg.data.holdout)?;
    let net = a.checkpoint.as_deref().map(load_network).transpose()?;
    let reports = evaluate(net.as_ref(), test, &cfg.eval)?;
    let decomposition = net.as_ref().map(|n| mean_decomposition(n, test)).transpose()?;
    ensure_dir(out)?;
    let mut inputs = vec![("data", a.data.as_path())];
    if let Some(c) = &a.checkpoint {
        inputs.push(("checkpoint", c.as_path()));
    }
    write_resolved(out, "eval", &inputs, &cfg)?;
    write_json_atomically(
        &out.join("metrics.json"),
        &EvalOutput {
            entries: report_entries(&reports),
            mean_decomposition: decomposition,
            reports: &reports,
        },
    )?;
    let text = report_text(&reports);
    write_file_atomically(&out.join("metrics.txt"), text.as_bytes())?;
    log(text.trim_end());
    Ok(())
}

fn extract(mut cfg: RunConfig, a: &ExtractArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if let Some(r) = a.resolution {
        cfg.eval.mc_resolution = r;
    }
    let net = load_network(&a.checkpoint)?;
    let levels = net.field_levels();
    if let Some(l) = a.level {
        if l == 0 || l > levels {
            return Err(Error::LevelOutOfRange { level: l, max: levels }.into());
        }
    }
    let shapes = load_data(&a.data)?;
    let shape = find_shape(&shapes, &a.shape)?;
    let root = net.encode(&shape.voxels)?;
    let dim = cfg.eval.mc_resolution;
    ensure_dir(out)?;
    let target = out.join(&shape.id);
    match a.level {
        None => {
            export_hierarchy(&net, &root, dim, &target)?;
        }
        Some(l) => {
            let ex = build_hierarchy(&net, &root, dim);
            write_dir_atomically(&target, |tmp| {
                let mut json = serde_json::to_string_pretty(&ex.hierarchy).expect("hierarchy serializes");
                json.push('\n');
                write_file_atomically(&tmp.join("hierarchy.json"), json.as_bytes())?;
                let text = mesh_to_obj(&ex.meshes[l - 1], net.config.nodes_at(l), &format!("level {l}"));
                write_file_atomically(&tmp.join(format!("level_{l}.obj")), text.as_bytes())
            })?;
        }
    }
    write_resolved(
        out,
        "extract",
        &[("checkpoint", &a.checkpoint), ("data", &a.data)],
        &cfg,
    )?;
    log(&format!("wrote hierarchy of {} to {}", shape.id, target.display()));
    Ok(())
}

#[derive(Serialize)]
struct SegmentSummary {
    leaves: usize,
    shapes: Vec<String>,
    mapping: BTreeMap<u32, String>,
    per_label_iou: BTreeMap<String, f64>,
    miou: Option<f64>,
}

fn segment(cfg: RunConfig, a: &SegmentArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    let net = load_network(&a.checkpoint)?;
    let shapes = load_data(&a.data)?;
    let (_, test) = split(&shapes, cfg.data.holdout)?;
    let mut per_shape = Vec::with_capacity(test.len());
    let (mut branches, mut gt) = (Vec::new(), Vec::new());
    let mut category = None;
    for s in test {
        let labels = segment_points(&net, &net.encode(&s.voxels)?, &s.samples.points);
        if let Some(g) = &s.samples.labels {
            for (i, &l) in g.iter().enumerate() {
                if l != recfield::data::OUTSIDE_LABEL && s.samples.values[i] == 1 {
                    branches.push(labels[i]);
                    gt.push(l);
                }
            }
        }
        category = category.or(s.category());
        per_shape.push((s.id.clone(), labels));
    }
    let mut summary = SegmentSummary {
        leaves: net.config.nodes_at(net.field_levels()),
        shapes: per_shape.iter().map(|(id, _)| id.clone()).collect(),
        mapping: BTreeMap::new(),
        per_label_iou: BTreeMap::new(),
        miou: None,
    };
    if let (Some(cat), false) = (category, gt.is_empty()) {
        let names = cat.label_names();
        let mapping = snap_labels(&branches, &gt)?;
        let ids: Vec<u8> = (0..names.len() as u8).collect();
        let score = per_label_iou(&branches, &gt, &mapping, &ids);
        summary.mapping = mapping
            .branch_to_label
            .iter()
            .map(|(&b, &l)| (b, names[l as usize].to_string()))
            .collect();
        summary.per_label_iou = score
            .per_label_iou
            .iter()
            .map(|(&l, &v)| (names[l as usize].to_string(), v))
            .collect();
        summary.miou = Some(score.miou);
    }
    ensure_dir(out)?;
    write_dir_atomically(&out.join("segmentation"), |tmp| {
        for (id, labels) in &per_shape {
            let bytes: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
            write_file_atomically(&tmp.join(format!("{id}.u32")), &bytes)?;
        }
        Ok(())
    })?;
    write_json_atomically(&out.join("segmentation.json"), &summary)?;
    write_resolved(
        out,
        "segment",
        &[("checkpoint", &a.checkpoint), ("data", &a.data)],
        &cfg,
    )?;
    match summary.miou {
        Some(m) => log(&format!(
            "segmented {} shapes; mIoU {m:.4} {:?}",
            per_shape.len(),
            summary.per_label_iou
        )),
        None => log(&format!("segmented {} shapes (no labels to score)", per_shape.len())),
    }
    Ok(())
}

#[derive(Serialize)]
struct SvrTrainSummary {
    train_mse: f64,
    heldout_mse: Option<f64>,
}

fn svr_train(mut cfg: RunConfig, a: &SvrTrainArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if let Some(n) = a.iters {
        cfg.svr.iterations = n;
    }
    let net = load_network(&a.checkpoint)?;
    let shapes = load_data(&a.data)?;
    let (train_set, test) = split(&shapes, cfg.data.holdout)?;
    let ds = SvrDataset::build(&net, train_set, &cfg.svr.views, cfg.svr.depth_shading)?;
    let mut enc = ImageEncoder::new(cfg.svr.clone(), net.code_dim())?;
    ensure_dir(out)?;
    write_resolved(
        out,
        "svr-train",
        &[("checkpoint", &a.checkpoint), ("data", &a.data)],
        &cfg,
    )?;
    let report = train_image_encoder(&mut enc, &ds, &mut |l| {
        if l.split(',')
            .next()
            .and_then(|n| n.parse::<u64>().ok())
            .is_some_and(|n| n % 200 == 0)
        {
            log(l);
        }
    })?;
    enc.save(&out.join("image_encoder"), cfg.svr.iterations)?;
    let manifest = ImageManifest {
        size: IMAGE_SIZE,
        views: cfg.svr.views.iter().map(|v| v.to_string()).collect(),
        depth_shading: cfg.svr.depth_shading,
        shape_ids: ds.ids.clone(),
    };
    write_dir_atomically(&out.join("images"), |tmp| write_images(tmp, &manifest, &ds.images))?;
    let mut text = report.log.join("\n");
    text.push('\n');
    write_file_atomically(&out.join("svr_log.csv"), text.as_bytes())?;
    let heldout_mse = if cfg.data.holdout > 0 {
        Some(dataset_mse(
            &enc,
            &SvrDataset::build(&net, test, &cfg.svr.views, cfg.svr.depth_shading)?,
        )?)
    } else {
        None
    };
    write_json_atomically(
        &out.join("svr_train.json"),
        &SvrTrainSummary {
            train_mse: report.final_mse,
            heldout_mse,
        },
    )?;
    log(&format!(
        "latent MSE {:.6} on {} training shapes",
        report.final_mse,
        ds.len()
    ));
    Ok(())
}

#[derive(Serialize)]
struct SvrShape {
    id: String,
    latent_mse: f64,
    svr_iou: f64,
    ae_iou: f64,
}

#[derive(Serialize)]
struct SvrInferSummary {
    mean_latent_mse: f64,
    mean_svr_iou: f64,
    mean_ae_iou: f64,
    shapes: Vec<SvrShape>,
}

fn svr_infer(mut cfg: RunConfig, a: &SvrInferArgs, out: &Path, log: &mut dyn FnMut(&str)) -> Result<()> {
    if let Some(r) = a.resolution {
        cfg.eval.mc_resolution = r;
    }
    let net = load_network(&a.checkpoint)?;
    let enc =
        ImageEncoder::load(&a.encoder).with_context(|| format!("loading image encoder {}", a.encoder.display()))?;
    if enc.code_dim != net.code_dim() {
        return Err(Error::ConfigMismatch(format!(
            "image encoder code_dim {} but network code_dim {}",
            enc.code_dim,
            net.code_dim()
        ))
        .into());
    }
    let shapes = load_data(&a.data)?;
    let targets: Vec<&ShapeRecord> = match &a.shape {
        Some(id) => vec![find_shape(&shapes, id)?],
        None => split(&shapes, cfg.data.holdout)?.1.iter().collect(),
    };
    ensure_dir(out)?;
    let mut rows = Vec::with_capacity(targets.len());
    for s in &targets {
        let images = render_views(&s.voxels, &enc.config.views, enc.config.depth_shading);
        let code = enc.encode(&images)?;
        let ae_code = net.encode(&s.voxels)?;
        if a.shape.is_some() {
            export_hierarchy(&net, &code, cfg.eval.mc_resolution, &out.join(&s.id))?;
        }
        rows.push(SvrShape {
            id: s.id.clone(),
            latent_mse: latent_mse(&code, &ae_code),
            svr_iou: code_iou(&net, &code, &s.voxels)?,
            ae_iou: code_iou(&net, &ae_code, &s.voxels)?,
        });
    }
    let n = rows.len().max(1) as f64;
    let summary = SvrInferSummary {
        mean_latent_mse: rows.iter().map(|r| r.latent_mse).sum::<f64>() / n,
        mean_svr_iou: rows.iter().map(|r| r.svr_iou).sum::<f64>() / n,
        mean_ae_iou: rows.iter().map(|r| r.ae_iou).sum::<f64>() / n,
        shapes: rows,
    };
    write_json_atomically(&out.join("svr_infer.json"), &summary)?;
    write_resolved(
        out,
        "svr-infer",
        &[
            ("checkpoint", &a.checkpoint),
            ("encoder", &a.encoder),
            ("data", &a.data),
        ],
        &cfg,
    )?;
    log(&format!(
        "{} shapes: svr IoU {:.4}, autoencoder IoU {:.4}, latent MSE {:.6}",
        summary.shapes.len(),
        summary.mean_svr_iou,
        summary.mean_ae_iou,
        summary.mean_latent_mse
    ));
    Ok(())
}
