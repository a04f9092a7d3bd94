//! Argument grammar and the subcommand implementations.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use cvvnet_autograd::Tensor;
use cvvnet_core::io::{Dataset, FrameFormat};
use cvvnet_core::manifest::{GridSpec, Manifest};
use cvvnet_core::ViewGroup;
use cvvnet_eval::{cross_view_report, read_embeddings, write_embeddings, GalleryScope, Protocol};
use cvvnet_model::{load_model, Aggregator, CvvNet, Extractor, KvMap};
use cvvnet_train::{embed_sequences, load_selection, EmbeddingKind, Selection, SequenceData, TrainConfig, TrainSet, Trainer};

use crate::ablation::{ablation_table, render_ablation, AblationRow};
use crate::desk::{desk_config, render_manifest, to_records};
use crate::error::{CliError, Result};
use crate::heatmap::{activation_heatmap, capture_layer};
use crate::spectrum::{feature_spectrum, ChannelReduce, MagnitudeScale};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CVVNET_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "cvvnet", version, about = "Cross-vertical-view gait recognition at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key=value configuration file; explicit flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV, default_value = "cvvnet-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset; --config names a manifest, otherwise the
    /// default 16-identity grid is used with --seed as its noise seed.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "png", value_parser = ["png", "pgm"])]
        format: String,
    },
    /// Train from a training configuration (--config) on a dataset root.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Continue from this checkpoint directory instead of starting fresh.
        #[arg(long, value_name = "DIR")]
        resume: Option<PathBuf>,
    },
    /// Export embeddings of every sequence in a dataset.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        /// pre-neck or normalized
        #[arg(long)]
        kind: Option<String>,
    },
    /// Score an embedding table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// dronegait or flat
        #[arg(long)]
        protocol: Option<String>,
        /// all or other
        #[arg(long)]
        gallery_scope: Option<String>,
    },
    /// Train and score every {P3D, HLFE} x {Add, Concat, DGA} combination.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Seeds per configuration, counted up from --seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Dataset root; the default 16-identity grid is rendered without one.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Frequency spectrum of a captured layer.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// mean or max
        #[arg(long)]
        reduce: Option<String>,
        /// log or linear
        #[arg(long)]
        scale: Option<String>,
    },
    /// Activation heatmap of a captured layer over the middle frame.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Embed { .. } => "embed",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Spectrum { .. } => "spectrum",
            Command::Heatmap { .. } => "heatmap",
        }
    }
}

/// Model and input selection shared by the analysis subcommands.
#[derive(Debug, Clone, Args)]
pub struct ModelSource {
    /// Checkpoint directory; without one a freshly initialised toy model is used.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset root; without one the sequence is rendered from the default grid.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sequence: Option<usize>,
    #[arg(long)]
    pub layer: Option<String>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\n{}", subcommand_usage(name));
            }
            e.exit_code()
        }
    }
}

/// The usage line of one subcommand, as clap renders it.
pub fn subcommand_usage(name: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match cmd.find_subcommand_mut(name) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// Runs one subcommand and returns what it prints on success.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Synth { common, format } => synth(&common, &format),
        Command::Train { common, data, resume } => train(&common, &data, resume.as_deref()),
        Command::Embed { common, data, checkpoint, kind } => embed(&common, data, checkpoint, kind),
        Command::Eval { common, embeddings, protocol, gallery_scope } => eval(&common, embeddings, protocol, gallery_scope),
        Command::Ablate { common, seeds, data } => ablate(&common, seeds, data.as_deref()),
        Command::Spectrum { common, source, reduce, scale } => spectrum(&common, source, reduce, scale),
        Command::Heatmap { common, source } => heatmap(&common, source),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_kv(path: Option<&Path>) -> Result<KvMap> {
    match path {
        None => Ok(KvMap::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            KvMap::parse(&text).map_err(|e| usage(format!("--config {}: {e}", p.display())))
        }
    }
}

/// Flag value, else the config value, else the default.
fn option<T: std::str::FromStr>(flag: Option<T>, kv: &KvMap, key: &str, default: Option<T>) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match kv.get(key) {
        Some(s) => s.parse().map_err(|e| usage(format!("--config key {key}={s}: {e}"))),
        None => default.ok_or_else(|| usage(format!("--{} is required (or set {key}= in --config)", key.replace('_', "-")))),
    }
}

fn reject_unknown(kv: &KvMap, allowed: &[&str]) -> Result<()> {
    match kv.keys().find(|k| !allowed.contains(k)) {
        Some(k) => Err(usage(format!("--config has unknown key {k:?}; expected one of {}", allowed.join(", ")))),
        None => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn synth(common: &Common, format: &str) -> Result<String> {
    let manifest = match &common.config {
        Some(p) => Manifest::read(p)?,
        None => {
            let mut grid = GridSpec::desk_default();
            grid.seed = common.seed.unwrap_or(0);
            Manifest::grid(&grid)?
        }
    };
    let format = if format == "pgm" { FrameFormat::Pgm } else { FrameFormat::Png };
    manifest.generate(&common.out, format)?;
    Ok(format!("wrote {} sequences to {}\n", manifest.entries.len(), common.out.display()))
}

fn load_train_config(common: &Common) -> Result<TrainConfig> {
    let mut config = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            TrainConfig::parse(&text).map_err(|e| usage(format!("--config {}: {e}", p.display())))?
        }
        None => desk_config(),
    };
    if let Some(s) = common.seed {
        config.model_seed = s;
        config.data_seed = s;
    }
    Ok(config)
}

fn train(common: &Common, data: &Path, resume: Option<&Path>) -> Result<String> {
    let config = load_train_config(common)?;
    let dataset = Dataset::open(data)?;
    let seqs = load_selection(&dataset, &config.selection)?;
    let set = TrainSet::new(seqs);
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(ckpt, set, &common.out)?,
        None => Trainer::new(config, set, &common.out)?,
    };
    let total = trainer.config.schedule.total_steps;
    let records = trainer.run(total)?;
    let mut s = format!("trained to step {total} in {}\n", common.out.display());
    if let Some(last) = records.last() {
        let _ = writeln!(s, "final loss: triplet {} ce {} total {}", last.triplet, last.ce, last.total);
    }
    Ok(s)
}

fn load_sequences(data: Option<&Path>, seed: u64) -> Result<Vec<SequenceData>> {
    match data {
        Some(root) => Ok(load_selection(&Dataset::open(root)?, &Selection::all())?),
        None => {
            let mut grid = GridSpec::desk_default();
            grid.seed = seed;
            render_manifest(&Manifest::grid(&grid)?)
        }
    }
}

fn load_or_init_model(checkpoint: Option<&Path>, seed: u64) -> Result<CvvNet> {
    match checkpoint {
        Some(dir) => Ok(load_model(dir)?),
        None => Ok(CvvNet::init(desk_config().backbone, seed)?),
    }
}

fn embed(common: &Common, data: Option<PathBuf>, checkpoint: Option<PathBuf>, kind: Option<String>) -> Result<String> {
    let kv = read_kv(common.config.as_deref())?;
    reject_unknown(&kv, &["data", "checkpoint", "kind"])?;
    let data: PathBuf = option(data, &kv, "data", None)?;
    let checkpoint: PathBuf = option(checkpoint, &kv, "checkpoint", None)?;
    let kind: EmbeddingKind = option(kind, &kv, "kind", Some("pre-neck".to_string()))?.parse().map_err(usage)?;
    let model = load_model(&checkpoint)?;
    let seqs = load_sequences(Some(&data), 0)?;
    let embeddings = embed_sequences(&model, &seqs, kind, 8)?;
    create_dir(&common.out)?;
    let path = common.out.join("embeddings.bin");
    let tag = match kind {
        EmbeddingKind::PreNeck => "pre-neck",
        EmbeddingKind::Normalized => "normalized",
    };
    write_embeddings(&path, &to_records(&seqs, &embeddings), tag)?;
    Ok(format!("wrote {} embeddings to {}\n", seqs.len(), path.display()))
}

fn eval(common: &Common, embeddings: Option<PathBuf>, protocol: Option<String>, scope: Option<String>) -> Result<String> {
    let kv = read_kv(common.config.as_deref())?;
    reject_unknown(&kv, &["embeddings", "protocol", "gallery_scope"])?;
    let path: PathBuf = option(embeddings, &kv, "embeddings", None)?;
    let protocol = match option(protocol, &kv, "protocol", Some("dronegait".to_string()))?.as_str() {
        "dronegait" => Protocol::DroneGaitStyle,
        "flat" => Protocol::FlatStyle,
        other => return Err(usage(format!("--protocol {other:?}: expected dronegait or flat"))),
    };
    let scope = match option(scope, &kv, "gallery_scope", Some("all".to_string()))?.as_str() {
        "all" => GalleryScope::AllViews,
        "other" => GalleryScope::OtherViews,
        other => return Err(usage(format!("--gallery-scope {other:?}: expected all or other"))),
    };
    let table = read_embeddings(&path)?;
    let report = cross_view_report(&table.records, protocol, scope)?;
    create_dir(&common.out)?;
    write_file(&common.out.join("report.txt"), &report.to_text())?;
    write_file(&common.out.join("report.kv"), &report.to_kv())?;
    Ok(format!("rank-1 = {:.1}\n{}", report.flat.rank1, report.to_text()))
}

fn ablate(common: &Common, seeds: u64, data: Option<&Path>) -> Result<String> {
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let base = load_train_config(common)?;
    let first = common.seed.unwrap_or(base.model_seed);
    let seqs = load_sequences(data, 0)?;
    create_dir(&common.out)?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for extractor in [Extractor::P3d, Extractor::Hlfe] {
        for aggregator in [Aggregator::Add, Aggregator::Concat, Aggregator::Dga] {
            let seed_list: Vec<u64> = (first..first + seeds).collect();
            rows.push(ablation_table(&base, &seqs, extractor, aggregator, &seed_list, &common.out)?);
        }
    }
    let text = render_ablation(&rows);
    write_file(&common.out.join("ablation.txt"), &text)?;
    Ok(text)
}

/// Averages a `(1, C, T, H, W)` capture over time; `(1, C, H, W)` passes through.
pub fn temporal_mean(t: &Tensor) -> (Vec<f64>, usize, usize, usize) {
    match *t.shape() {
        [1, c, n, h, w] => {
            let plane = h * w;
            let mut out = vec![0.0; c * plane];
            for ci in 0..c {
                for ti in 0..n {
                    let src = &t.data()[(ci * n + ti) * plane..(ci * n + ti + 1) * plane];
                    for (o, v) in out[ci * plane..(ci + 1) * plane].iter_mut().zip(src) {
                        *o += v / n as f64;
                    }
                }
            }
            (out, c, h, w)
        }
        [1, c, h, w] => (t.data().to_vec(), c, h, w),
        ref s => panic!("capture of unexpected shape {s:?}"),
    }
}

struct Analysis {
    model: CvvNet,
    seq: SequenceData,
    layer: String,
    kv: KvMap,
}

fn analysis_inputs(common: &Common, source: ModelSource, extra: &[&str]) -> Result<Analysis> {
    let kv = read_kv(common.config.as_deref())?;
    let mut allowed = vec!["checkpoint", "data", "sequence", "layer"];
    allowed.extend_from_slice(extra);
    reject_unknown(&kv, &allowed)?;
    let seed = common.seed.unwrap_or(0);
    let checkpoint: Option<PathBuf> = source.checkpoint.or_else(|| kv.get("checkpoint").map(PathBuf::from));
    let data: Option<PathBuf> = source.data.or_else(|| kv.get("data").map(PathBuf::from));
    let index: usize = option(source.sequence, &kv, "sequence", Some(0))?;
    let layer: String = option(source.layer, &kv, "layer", Some("msaga.1".to_string()))?;
    let model = load_or_init_model(checkpoint.as_deref(), seed)?;
    let mut seqs = load_sequences(data.as_deref(), seed)?;
    if index >= seqs.len() {
        return Err(usage(format!("--sequence {index} is out of range; the dataset has {} sequences", seqs.len())));
    }
    let seq = seqs.swap_remove(index);
    Ok(Analysis { model, seq, layer, kv })
}

fn spectrum(common: &Common, source: ModelSource, reduce: Option<String>, scale: Option<String>) -> Result<String> {
    let a = analysis_inputs(common, source, &["reduce", "scale"])?;
    let reduce: ChannelReduce = option(reduce, &a.kv, "reduce", Some("mean".to_string()))?.parse().map_err(usage)?;
    let scale: MagnitudeScale = option(scale, &a.kv, "scale", Some("log".to_string()))?.parse().map_err(usage)?;
    let feat = capture_layer(&a.model, &a.seq, &a.layer)?;
    let (data, c, h, w) = temporal_mean(&feat);
    let profile = feature_spectrum(&data, c, h, w, reduce, scale);
    let stem = format!("spectrum_{}", a.layer);
    profile.write(&common.out, &stem)?;
    Ok(format!(
        "spectrum of {} ({c}x{h}x{w}) for {}: {}/{stem}.png, {}/{stem}.csv\n",
        a.layer,
        a.seq.sequence_id,
        common.out.display(),
        common.out.display()
    ))
}

fn heatmap(common: &Common, source: ModelSource) -> Result<String> {
    let a = analysis_inputs(common, source, &[])?;
    let overlay = activation_heatmap(&a.model, &a.seq, &a.layer)?;
    let stem = format!("heatmap_{}", a.layer);
    overlay.write(&common.out, &stem)?;
    let view = match a.seq.view_group {
        ViewGroup::Low => "Low",
        ViewGroup::Mid => "Mid",
        ViewGroup::High => "High",
    };
    Ok(format!("heatmap of {} for {} ({view} view): {}/{stem}.png\n", a.layer, a.seq.sequence_id, common.out.display()))
}
