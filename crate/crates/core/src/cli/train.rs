//! The pretraining loop.

use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use super::config::{ObjectiveKind, RunConfig};
use super::schedule::{learning_rate, warmup_epochs};
use crate::encoder::{Encoder, MomentumPair, RoutedForward, Sgd};
use crate::error::{Error, Result};
use crate::evaluation::{
    knn_evaluate, linear_probe, partition_by_counts, FeatureBank, GroupPartition, GroupReport,
    MetricRecord, MetricsLog,
};
use crate::longtail::{stratified_subsample, LabeledDataset, SubsampleSpec};
use crate::objective::{
    contrastive_loss, fuse_rows, fused_partners, mi_lower_bound, mttv_loss_full, unfuse_grad,
    ContrastiveOutput, FusedPairBatch, ViewSlot,
};
use crate::views::{make_view_quadruples, normalized_view, sample_counterparts, Normalizer, ViewMatrices};

/// RNG stream for weight initialization; training draws use stream 1.
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// Train/test splits with their normalized, flattened probe inputs.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub groups: GroupPartition,
    pub normalizer: Normalizer,
    pub train_inputs: Array2<f64>,
    pub test_inputs: Array2<f64>,
}

fn flatten_normalized(data: &LabeledDataset, norm: &Normalizer) -> Result<Array2<f64>> {
    let width = norm.channels() * norm.height * norm.width;
    let mut out = Array2::zeros((data.len(), width));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let v = normalized_view(data.image(i), norm)?;
        row.assign(&ndarray::ArrayView1::from(v.as_slice().expect("standard layout")));
    }
    Ok(out)
}

impl TrainData {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        let source = cfg.data.source.source(cfg.seed)?;
        let mut train = source.train()?;
        if cfg.data.subsample < 1.0 {
            train = stratified_subsample(
                &train,
                SubsampleSpec {
                    s: cfg.data.subsample,
                    seed: cfg.seed,
                },
            )?;
        }
        let test = source.test()?;
        if train.len() < 2 {
            return Err(Error::config("training split is too small"));
        }
        if cfg.evaluation.knn_k > train.len() {
            return Err(Error::config(format!(
                "evaluation.knn_k={} exceeds the {} training samples",
                cfg.evaluation.knn_k,
                train.len()
            )));
        }
        let (_, h, w) = train.image_shape();
        let normalizer = Normalizer::fit(train.images.view(), h, w)?;
        let groups = partition_by_counts(&train.class_counts())?;
        Ok(Self {
            train_inputs: flatten_normalized(&train, &normalizer)?,
            test_inputs: flatten_normalized(&test, &normalizer)?,
            train,
            test,
            groups,
            normalizer,
        })
    }
}

/// Model, optimizer and RNG state of a run in progress.
pub struct Trainer<'d> {
    pub cfg: RunConfig,
    pub data: &'d TrainData,
    pub pair: MomentumPair,
    pub optimizer: Sgd,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub next_step: u64,
}

struct StepLoss {
    output: ContrastiveOutput,
    query_grads: Vec<Array2<f64>>,
}

impl<'d> Trainer<'d> {
    pub fn new(cfg: &RunConfig, data: &'d TrainData) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        init.set_stream(INIT_STREAM);
        let encoder = Encoder::new(&cfg.encoder, &mut init)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAIN_STREAM);
        let o = &cfg.optimizer;
        Ok(Self {
            cfg: cfg.clone(),
            data,
            pair: MomentumPair::new(encoder, cfg.ema_momentum)?,
            optimizer: Sgd::new(o.lr, o.momentum, o.weight_decay),
            rng,
            epoch: 0,
            next_step: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, data: &'d TrainData) -> Result<Self> {
        ckpt.config.validate()?;
        if ckpt.normalizer != data.normalizer {
            return Err(Error::config("checkpoint was trained on different data"));
        }
        Ok(Self {
            cfg: ckpt.config,
            data,
            pair: ckpt.pair,
            optimizer: ckpt.optimizer,
            rng: ckpt.rng,
            epoch: ckpt.epoch,
            next_step: ckpt.next_step,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            config: self.cfg.clone(),
            epoch: self.epoch,
            next_step: self.next_step,
            pair: self.pair.clone(),
            optimizer: self.optimizer.clone(),
            rng: self.rng.clone(),
            normalizer: self.data.normalizer.clone(),
        }
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.cfg.schedule.epochs
    }

    pub fn current_lr(&self) -> f64 {
        let s = &self.cfg.schedule;
        learning_rate(
            self.cfg.optimizer.lr,
            self.epoch,
            s.epochs,
            warmup_epochs(s.epochs, s.warmup_fraction),
        )
    }

    fn slots(&self) -> (Vec<ViewSlot>, Vec<ViewSlot>) {
        let obj = &self.cfg.objective;
        match obj.kind {
            ObjectiveKind::Mttv => {
                let (l, r) = obj.option.operands();
                (l.to_vec(), r.to_vec())
            }
            // both views share one online batch, as in a plain two-view setup
            ObjectiveKind::NtXent => (vec![ViewSlot::AnchorFirst, ViewSlot::AnchorSecond], Vec::new()),
        }
    }

    fn step_loss(&self, routed: &RoutedForward) -> Result<StepLoss> {
        let obj = &self.cfg.objective;
        match obj.kind {
            ObjectiveKind::Mttv => {
                let op = obj.loss.fusion;
                let q = fuse_rows(routed.query[0].view(), routed.query[1].view(), op)?;
                let k = fuse_rows(routed.key[0].view(), routed.key[1].view(), op)?;
                let fused = mttv_loss_full(&FusedPairBatch::new(q, k)?, &obj.loss, true)?;
                let gq = fused.grad_queries.expect("gradient requested");
                let (g0, g1) = unfuse_grad(gq.view(), op, routed.query[0].ncols());
                Ok(StepLoss {
                    output: fused.output,
                    query_grads: vec![g0, g1],
                })
            }
            ObjectiveKind::NtXent => {
                let n = routed.query[0].nrows();
                let items = concatenate(Axis(0), &[routed.query[0].view(), routed.query[1].view()])
                    .map_err(|e| Error::shape(e.to_string()))?;
                let mut output =
                    contrastive_loss(items.view(), &fused_partners(n), obj.loss.temperature, None, true)?;
                let g = output.grad.take().expect("gradient requested");
                Ok(StepLoss {
                    output,
                    query_grads: vec![g.slice(s![..n, ..]).to_owned(), g.slice(s![n.., ..]).to_owned()],
                })
            }
        }
    }

    fn batches(&mut self) -> Vec<Vec<usize>> {
        let n = self.data.train.len();
        let b = self.cfg.batch_size.min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        // drop the ragged tail so every step sees a full batch
        order.chunks_exact(b).map(<[usize]>::to_vec).collect()
    }

    /// One optimization step on the given training indices.
    fn step(&mut self, indices: &[usize], epoch: usize, lr: f64) -> Result<MetricRecord> {
        let batch = self.data.train.images.select(Axis(0), indices);
        let pairing = sample_counterparts(indices.len(), &mut self.rng)?;
        let obj = &self.cfg.objective;
        let quads = make_view_quadruples(
            batch.view(),
            &pairing,
            obj.views,
            &self.cfg.augmentation,
            &self.data.normalizer,
            &mut self.rng,
        )?;
        let views = ViewMatrices::from_quadruples(&quads);
        let (left, right) = self.slots();
        let routed = self.pair.forward_routed(&views, &left, &right)?;
        let StepLoss { output, query_grads } = self.step_loss(&routed)?;
        let step = self.next_step;
        if !output.loss.is_finite() || query_grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            let partners = fused_partners(indices.len());
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step} (epoch {epoch}): loss={}, mean positive similarity={:.6}, \
                 mean negative similarity={:.6}, elimination rate={:.6}",
                output.loss,
                output.mean_positive(&partners),
                output.mean_negative(&partners),
                output.elimination_rate
            )));
        }
        let grads = self.pair.backward(&routed, &query_grads)?;
        self.optimizer.lr = lr;
        self.optimizer.step(self.pair.query.params_mut(), &grads)?;
        self.pair.ema_update();
        self.next_step += 1;
        Ok(MetricRecord {
            step,
            epoch,
            loss: output.loss,
            elimination_rate: output.elimination_rate,
            mi_bound: mi_lower_bound(output.loss, indices.len()),
            knn_acc: None,
            lr,
        })
    }

    fn probe_due(&self, epoch: usize) -> bool {
        let every = self.cfg.evaluation.knn_every;
        epoch + 1 == self.cfg.schedule.epochs || (every > 0 && (epoch + 1).is_multiple_of(every))
    }

    /// Train one epoch. The last record carries the KNN accuracy when a
    /// probe is due.
    pub fn train_epoch(&mut self) -> Result<Vec<MetricRecord>> {
        let epoch = self.epoch;
        let lr = self.current_lr();
        let mut records = Vec::new();
        for indices in self.batches() {
            records.push(self.step(&indices, epoch, lr)?);
        }
        if self.probe_due(epoch) {
            let acc = self.knn_report()?.overall_acc;
            if let Some(last) = records.last_mut() {
                last.knn_acc = Some(acc);
            }
        }
        self.epoch += 1;
        Ok(records)
    }

    pub fn knn_report(&self) -> Result<GroupReport> {
        evaluate_knn(&self.pair.query, &self.cfg, self.data)
    }

    pub fn linear_report(&self) -> Result<GroupReport> {
        evaluate_linear(&self.pair.query, &self.cfg, self.data)
    }
}

pub fn evaluate_knn(encoder: &Encoder, cfg: &RunConfig, data: &TrainData) -> Result<GroupReport> {
    let source = cfg.evaluation.features;
    let bank_features = encoder.probe_features(&data.train_inputs, source)?;
    let bank = FeatureBank::new(bank_features.view(), data.train.labels.clone(), data.train.num_classes)?;
    let test = encoder.probe_features(&data.test_inputs, source)?;
    knn_evaluate(&bank, test.view(), &data.test.labels, cfg.evaluation.knn_k, &data.groups)
}

pub fn evaluate_linear(encoder: &Encoder, cfg: &RunConfig, data: &TrainData) -> Result<GroupReport> {
    let mut probe = cfg.evaluation.linear.clone();
    probe.seed = cfg.seed;
    linear_probe(
        encoder,
        cfg.evaluation.features,
        &data.train_inputs,
        &data.train.labels,
        &data.test_inputs,
        &data.test.labels,
        data.train.num_classes,
        &probe,
        &data.groups,
    )
}

/// Abort when every step of an epoch eliminated every similarity.
pub fn collapse_guard(records: &[MetricRecord]) -> Result<()> {
    if !records.is_empty() && records.iter().all(|r| r.elimination_rate >= 1.0) {
        let r = &records[records.len() - 1];
        return Err(Error::Collapse(format!(
            "every similarity fell outside the threshold interval for all of epoch {} \
             (last loss {}, last step {})",
            r.epoch, r.loss, r.step
        )));
    }
    Ok(())
}

/// Train to completion in memory. Returns the trainer and all records.
pub fn run_in_memory<'d>(cfg: &RunConfig, data: &'d TrainData) -> Result<(Trainer<'d>, Vec<MetricRecord>)> {
    let mut trainer = Trainer::new(cfg, data)?;
    let mut all = Vec::new();
    while !trainer.finished() {
        let records = trainer.train_epoch()?;
        collapse_guard(&records)?;
        all.extend(records);
    }
    Ok((trainer, all))
}

/// File layout of a pretraining output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub config: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path) -> Self {
        Self {
            config: out.join("config.toml"),
            metrics: out.join("metrics.jsonl"),
            checkpoint: out.join("checkpoint.json"),
            report: out.join("report-knn.json"),
        }
    }
}

/// Result of [`pretrain`].
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub paths: RunPaths,
    pub final_report: GroupReport,
    pub epochs: usize,
    pub steps: u64,
}

/// Pretrain into `out`, writing the config, metrics log, checkpoints and the
/// final KNN report. With `resume`, the checkpoint's configuration is used
/// and the metrics log is cut back to the checkpoint's last step.
pub fn pretrain(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<PretrainOutcome> {
    std::fs::create_dir_all(out)?;
    let paths = RunPaths::new(out);
    let (ckpt, cfg) = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            let cfg = ckpt.config.clone();
            (Some(ckpt), cfg)
        }
        None => {
            cfg.validate()?;
            (None, cfg.clone())
        }
    };
    let data = TrainData::prepare(&cfg)?;
    std::fs::write(&paths.config, cfg.to_toml_string()?)?;
    let (mut trainer, mut log) = match ckpt {
        Some(ckpt) => {
            let keep = ckpt.next_step.checked_sub(1);
            let trainer = Trainer::from_checkpoint(ckpt, &data)?;
            let log = if paths.metrics.exists() {
                MetricsLog::resume(&paths.metrics, keep)?
            } else {
                MetricsLog::create(&paths.metrics, &cfg.to_json())?
            };
            (trainer, log)
        }
        None => (Trainer::new(&cfg, &data)?, MetricsLog::create(&paths.metrics, &cfg.to_json())?),
    };
    while !trainer.finished() {
        let records = trainer.train_epoch()?;
        for r in &records {
            log.append(r)?;
        }
        collapse_guard(&records)?;
        let every = cfg.checkpoint_every;
        if trainer.finished() || (every > 0 && trainer.epoch % every == 0) {
            trainer.checkpoint().save(&paths.checkpoint)?;
        }
    }
    let final_report = trainer.knn_report()?;
    super::write_report(&paths.report, "knn", trainer.epoch, &final_report)?;
    Ok(PretrainOutcome {
        paths,
        final_report,
        epochs: trainer.epoch,
        steps: trainer.next_step,
    })
}
