//! The training loop: sample, forward, joint loss, backward, AdamW update.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cvvnet_autograd::{params, Graph, ParamKind, Tensor};
use cvvnet_core::{clip_indices, sample_clip, SampleMode};
use cvvnet_model::{load_model, save_model, CvvNet, KvMap};

use crate::adamw::{AdamW, AdamWConfig};
use crate::augment::augment_clip;
use crate::config::TrainConfig;
use crate::data::TrainSet;
use crate::error::{Result, TrainError};
use crate::loss::{total_loss, LossReport};
use crate::metrics::{read_metrics, MetricLog, StepRecord, METRICS_HEADER};
use crate::sampler::{Batch, BatchSampler};
use crate::schedule::lr_at_step;
use crate::seed::rng_for;

pub const METRICS_FILE: &str = "metrics.tsv";
pub const CHECKPOINT_ROOT: &str = "checkpoints";
pub const OPTIMIZER_FILE: &str = "optimizer.tensors";
pub const CONFIG_FILE: &str = "train.config";
pub const STATE_FILE: &str = "state";

const SAMPLE_STREAM: u64 = 3;

/// Directory of the checkpoint taken after `step` updates.
pub fn checkpoint_dir(run_dir: &Path, step: usize) -> PathBuf {
    run_dir.join(CHECKPOINT_ROOT).join(format!("step-{step:06}"))
}

/// Checkpoints of a run, sorted by step.
pub fn list_checkpoints(run_dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let root = run_dir.join(CHECKPOINT_ROOT);
    let mut out = Vec::new();
    for entry in fs::read_dir(&root).map_err(|e| TrainError::io(&root, e))? {
        let entry = entry.map_err(|e| TrainError::io(&root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("step-").and_then(|s| s.parse().ok()) {
            out.push((step, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// A model input batch and its class labels.
#[derive(Debug, Clone)]
pub struct BatchInput {
    pub batch: Batch,
    /// `(B, 1, T, H, W)`.
    pub clips: Tensor,
    pub labels: Vec<usize>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: CvvNet,
    pub optimizer: AdamW,
    /// Number of updates applied so far.
    pub step: usize,
    pub run_dir: PathBuf,
    data: TrainSet,
    sampler: BatchSampler,
}

impl Trainer {
    /// A fresh run writing into `run_dir`.
    pub fn new(config: TrainConfig, data: TrainSet, run_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        check_data(&config, &data)?;
        let model = CvvNet::init(config.backbone.clone(), config.model_seed)?;
        let optimizer = AdamW::new(adamw_config(&config), &model.store);
        let sampler = BatchSampler::new(&data.identities(), config.p, config.k, config.data_seed)?;
        let run_dir = run_dir.into();
        fs::create_dir_all(&run_dir).map_err(|e| TrainError::io(&run_dir, e))?;
        Ok(Trainer { config, model, optimizer, step: 0, run_dir, data, sampler })
    }

    /// Restores a run from one of its checkpoints. The metric log is cut
    /// back to the checkpoint's step so that continuing rewrites the tail.
    pub fn resume(checkpoint: &Path, data: TrainSet, run_dir: impl Into<PathBuf>) -> Result<Self> {
        let cfg_path = checkpoint.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| TrainError::io(&cfg_path, e))?;
        let config = TrainConfig::parse(&text)?;
        let state_path = checkpoint.join(STATE_FILE);
        let state = KvMap::parse(&fs::read_to_string(&state_path).map_err(|e| TrainError::io(&state_path, e))?)?;
        let bad = |message: String| TrainError::Checkpoint { path: checkpoint.to_path_buf(), message };
        if state.require("config_hash")? != config.hash() {
            return Err(bad("configuration does not match its recorded hash".into()));
        }
        let step: usize = state.parsed("step")?;
        let mut trainer = Trainer::new(config, data, run_dir)?;
        trainer.model = load_model(checkpoint)?;
        let opt_path = checkpoint.join(OPTIMIZER_FILE);
        let file = File::open(&opt_path).map_err(|e| TrainError::io(&opt_path, e))?;
        let tensors = params::read_archive(&mut BufReader::new(file))?;
        trainer.optimizer.restore(&trainer.model.store, tensors.into_iter().map(|(n, _, t)| (n, t)).collect())?;
        if trainer.optimizer.step != step as u64 {
            return Err(bad(format!("optimizer step {} differs from checkpoint step {step}", trainer.optimizer.step)));
        }
        trainer.step = step;
        let metrics = trainer.run_dir.join(METRICS_FILE);
        if metrics.exists() {
            let kept: Vec<StepRecord> = read_metrics(&metrics)?.into_iter().filter(|r| r.step < step).collect();
            let mut text = format!("{METRICS_HEADER}\n");
            for r in &kept {
                text.push_str(&r.to_line());
                text.push('\n');
            }
            fs::write(&metrics, text).map_err(|e| TrainError::io(&metrics, e))?;
        }
        Ok(trainer)
    }

    pub fn data(&self) -> &TrainSet {
        &self.data
    }

    /// Builds the input batch of training step `step`. Clip windows and
    /// augmentation draw from a stream keyed by `(data_seed, step, slot)`.
    pub fn batch_input(&self, step: usize) -> BatchInput {
        let batch = self.sampler.batch(step);
        let t = self.config.clip_length;
        let (h, w) = self.config.backbone.input_size;
        let mut values = Vec::with_capacity(batch.items.len() * t * h * w);
        let mut labels = Vec::with_capacity(batch.items.len());
        for (slot, &item) in batch.items.iter().enumerate() {
            let seq = &self.data.sequences[item];
            let mut rng = rng_for(&[self.config.data_seed, SAMPLE_STREAM, step as u64, slot as u64]);
            let all: Vec<usize> = (0..seq.n_frames).collect();
            let idx = sample_clip(&all, t, SampleMode::TrainRandom, &mut rng)
                .unwrap_or_else(|_| clip_indices(seq.n_frames.max(1), t, 0));
            let mut clip = seq.gather(&idx);
            if self.config.augment.any() {
                augment_clip(&mut clip, h, w, &self.config.augment, &mut rng);
            }
            values.extend_from_slice(&clip);
            labels.push(self.data.label(seq.identity).expect("sampled identity is in the class table"));
        }
        let clips = Tensor::new(&[batch.items.len(), 1, t, h, w], values);
        BatchInput { batch, clips, labels }
    }

    /// Forward pass and loss without an update (training-mode statistics
    /// are used but running estimates are left untouched).
    pub fn evaluate_loss(&self, input: &BatchInput) -> Result<LossReport> {
        let mut scratch = self.model.store.clone();
        let mut g = Graph::train(&mut scratch);
        let x = g.input(input.clips.clone());
        let out = self.model.net.forward(&mut g, x, None)?;
        let (_, report) = total_loss(&mut g, out.embedding, out.logits, &input.labels, &self.config.loss)?;
        Ok(report)
    }

    /// One update on an explicit batch at learning rate `lr`.
    pub fn step_on(&mut self, input: &BatchInput, lr: f64) -> Result<LossReport> {
        let grads;
        let report;
        {
            let mut g = Graph::train(&mut self.model.store);
            let x = g.input(input.clips.clone());
            let out = self.model.net.forward(&mut g, x, None)?;
            let (loss, r) = total_loss(&mut g, out.embedding, out.logits, &input.labels, &self.config.loss)?;
            report = r;
            if !report.total.is_finite() {
                drop(g);
                let batch_dir = self.persist_batch(input)?;
                return Err(TrainError::NonFiniteLoss { step: self.step, batch_dir });
            }
            grads = g.backward(loss).into_param_grads();
        }
        self.optimizer.update(&mut self.model.store, &grads, lr);
        Ok(report)
    }

    /// Runs the sampled batch of the current step and advances by one.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let lr = lr_at_step(&self.config.schedule, self.step)?;
        let input = self.batch_input(self.step);
        let report = self.step_on(&input, lr)?;
        let record = StepRecord { step: self.step, lr, triplet: report.triplet, ce: report.ce, total: report.total };
        self.step += 1;
        Ok(record)
    }

    /// Trains until `until` updates have been applied (capped at the
    /// schedule length), logging every step and checkpointing at the
    /// configured period and at the end. A fresh run also checkpoints
    /// its initial state.
    pub fn run(&mut self, until: usize) -> Result<Vec<StepRecord>> {
        let until = until.min(self.config.schedule.total_steps);
        let mut log = MetricLog::open(&self.run_dir.join(METRICS_FILE))?;
        if self.step == 0 {
            self.save_checkpoint()?;
        }
        let mut records = Vec::new();
        while self.step < until {
            let r = self.train_step()?;
            log.append(&r)?;
            records.push(r);
            let every = self.config.checkpoint_every;
            if (every > 0 && self.step % every == 0) || self.step == until {
                self.save_checkpoint()?;
            }
        }
        Ok(records)
    }

    pub fn save_checkpoint(&self) -> Result<PathBuf> {
        let dir = checkpoint_dir(&self.run_dir, self.step);
        save_model(&dir, &self.model)?;
        let opt_path = dir.join(OPTIMIZER_FILE);
        let state = self.optimizer.state_tensors(&self.model.store);
        let refs: Vec<(&str, ParamKind, &Tensor)> = state.iter().map(|(n, t)| (n.as_str(), ParamKind::Buffer, t)).collect();
        write_file(&opt_path, |w| Ok(params::write_archive(w, &refs)?))?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, self.config.render()).map_err(|e| TrainError::io(&cfg_path, e))?;
        let mut state = KvMap::new();
        state.set("step", self.step);
        state.set("config_hash", self.config.hash());
        state.set("model_seed", self.config.model_seed);
        state.set("data_seed", self.config.data_seed);
        let state_path = dir.join(STATE_FILE);
        fs::write(&state_path, state.render()).map_err(|e| TrainError::io(&state_path, e))?;
        Ok(dir)
    }

    /// Writes the offending batch next to the run for reproduction.
    fn persist_batch(&self, input: &BatchInput) -> Result<PathBuf> {
        let dir = self.run_dir.join(format!("nonfinite-step-{:06}", self.step));
        fs::create_dir_all(&dir).map_err(|e| TrainError::io(&dir, e))?;
        let labels = Tensor::new(&[input.labels.len()], input.labels.iter().map(|&l| l as f64).collect());
        let tensors = [("clips", ParamKind::Buffer, &input.clips), ("labels", ParamKind::Buffer, &labels)];
        write_file(&dir.join("batch.tensors"), |w| Ok(params::write_archive(w, &tensors)?))?;
        let mut items = String::new();
        for &i in &input.batch.items {
            let s = &self.data.sequences[i];
            items.push_str(&format!("{}\t{}\n", s.sequence_id, s.identity));
        }
        let path = dir.join("items.tsv");
        fs::write(&path, items).map_err(|e| TrainError::io(&path, e))?;
        Ok(dir)
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| TrainError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| TrainError::io(path, e))
}

fn adamw_config(c: &TrainConfig) -> AdamWConfig {
    AdamWConfig { weight_decay: c.schedule.weight_decay, ..AdamWConfig::default() }
}

fn check_data(config: &TrainConfig, data: &TrainSet) -> Result<()> {
    if data.sequences.is_empty() {
        return Err(TrainError::InvalidConfig("training set is empty".into()));
    }
    if data.num_classes() > config.backbone.num_classes {
        return Err(TrainError::InvalidConfig(format!(
            "training set has {} identities but the classifier has {} classes",
            data.num_classes(),
            config.backbone.num_classes
        )));
    }
    let size = config.backbone.input_size;
    if let Some(s) = data.sequences.iter().find(|s| (s.height, s.width) != size || s.n_frames == 0) {
        return Err(TrainError::InvalidConfig(format!(
            "sequence {} has {} frames of {}x{}, expected {}x{}",
            s.sequence_id, s.n_frames, s.height, s.width, size.0, size.1
        )));
    }
    Ok(())
}

/// Runs a full fresh training of `config` on `data` into `run_dir`.
pub fn train(config: TrainConfig, data: TrainSet, run_dir: &Path) -> Result<Trainer> {
    let mut t = Trainer::new(config, data, run_dir)?;
    let total = t.config.schedule.total_steps;
    t.run(total)?;
    Ok(t)
}
