//! The training loop.
//!
//! Each iteration draws its sample and augmentation from a generator seeded
//! by `(seed, iteration)`, so a run resumed from a checkpoint replays the
//! uninterrupted run exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_file_name, Checkpoint, CheckpointHeader};
use super::config::RunConfig;
use super::eval::evaluate_net;
use crate::data::{augment, Dataset, Split};
use crate::error::{Error, Result};
use crate::fusion::major_vote;
use crate::gafl::roughness_heatmap;
use crate::metrics::DiceReport;
use crate::nets::{SegNet, TrainableFunction, WeightNet};
use crate::reweighting::{composite_loss, LossBreakdown, LossInputs, ScheduleState};
use crate::types::{AttentionMap, ExpertSet, ImageTensor};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOG_FILE: &str = "log.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const RECORD_FILE: &str = "record.json";
pub const TEST_REPORT_FILE: &str = "test_report.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// Completed iterations at the checkpoint.
    pub iter: u64,
    pub report: DiceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCheckpoint {
    pub iter: u64,
    pub mean_dice: f64,
    /// Set when checkpoints are written to disk.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub log: Vec<LogRecord>,
    pub validations: Vec<Validation>,
    pub best: BestCheckpoint,
    pub final_test: DiceReport,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RECORD_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Index of the highest validation mean; the earliest wins ties.
pub fn select_best(validations: &[Validation]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in validations.iter().enumerate() {
        if best.is_none_or(|b| v.report.mean > validations[b].report.mean) {
            best = Some(i);
        }
    }
    best
}

/// The image and annotations seen at iteration `iter`, after augmentation.
pub fn iteration_sample(
    cfg: &RunConfig,
    data: &Dataset,
    iter: u64,
) -> Result<(ImageTensor, ExpertSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::mix_seed(cfg.seed, iter));
    let sample = &data.train[rng.random_range(0..data.train.len())];
    if !cfg.augment {
        return Ok((sample.image.clone(), sample.experts.clone()));
    }
    let (image, labels) = augment(&sample.image, sample.experts.labels(), rng.random())?;
    let experts = ExpertSet::new(labels, sample.experts.expert_ids().to_vec())?;
    Ok((image, experts))
}

pub struct Trainer<'a> {
    cfg: RunConfig,
    data: &'a Dataset,
    seg: SegNet,
    weight: WeightNet,
    seg_velocity: Vec<f64>,
    weight_velocity: Vec<f64>,
    iter: u64,
    log: Vec<LogRecord>,
    validations: Vec<Validation>,
    best: Option<BestCheckpoint>,
    best_seg: Vec<f64>,
    best_weight: Vec<f64>,
    out_dir: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    /// Fails before any training if the configuration does not fit the data.
    pub fn new(cfg: RunConfig, data: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        cfg.check_dataset(data)?;
        data.validate()?;
        let seg = SegNet::new(cfg.seg_net.clone())?;
        let weight = WeightNet::new(cfg.weight_net.clone())?;
        Ok(Self {
            seg_velocity: vec![0.0; seg.num_parameters()],
            weight_velocity: vec![0.0; weight.num_parameters()],
            best_seg: seg.parameters().to_vec(),
            best_weight: weight.parameters().to_vec(),
            cfg,
            data,
            seg,
            weight,
            iter: 0,
            log: Vec::new(),
            validations: Vec::new(),
            best: None,
            out_dir: None,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, data: &'a Dataset) -> Result<Self> {
        let mut t = Self::new(ckpt.header.config.clone(), data)?;
        t.seg.set_parameters(&ckpt.seg_params)?;
        t.weight.set_parameters(&ckpt.weight_params)?;
        t.seg_velocity = ckpt.seg_velocity;
        t.weight_velocity = ckpt.weight_velocity;
        t.best_seg = ckpt.best_seg_params;
        t.best_weight = ckpt.best_weight_params;
        t.iter = ckpt.header.iter;
        t.log = ckpt.header.log;
        t.validations = ckpt.header.validations;
        t.best = ckpt.header.best;
        if t.log.len() as u64 != t.iter {
            return Err(Error::Checkpoint {
                path: PathBuf::new(),
                reason: format!("log has {} entries for {} iterations", t.log.len(), t.iter),
            });
        }
        Ok(t)
    }

    /// Write checkpoints, logs and reports under `dir`.
    pub fn with_output(mut self, dir: &Path) -> Self {
        self.out_dir = Some(dir.to_path_buf());
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn validations(&self) -> &[Validation] {
        &self.validations
    }

    pub fn seg_net(&self) -> &SegNet {
        &self.seg
    }

    pub fn weight_net(&self) -> &WeightNet {
        &self.weight
    }

    /// One optimisation step on one sample.
    pub fn step(&mut self) -> Result<&LogRecord> {
        let iter = self.iter;
        let (image, experts) = iteration_sample(&self.cfg, self.data, iter)?;
        let (h, w) = (image.height(), image.width());
        let heat = if self.cfg.ablation.use_gafl {
            roughness_heatmap(&image, &self.cfg.gafl)?
        } else {
            AttentionMap::constant(h, w, 1.0)?
        };
        let vote = major_vote(&experts, self.cfg.tie_rule)?;
        let pred = self.seg.forward(&image)?;
        let (weights, (lambda1, lambda2)) = if self.cfg.ablation.use_reweighting {
            let state = ScheduleState::at_iteration(iter, self.cfg.step_iters);
            (Some(self.weight.forward(&image)?), state.lambdas())
        } else {
            (None, (1.0, 0.0))
        };
        let (loss, grads) = composite_loss(&LossInputs {
            pred: &pred,
            experts: &experts,
            vote: &vote,
            heat: &heat,
            weights: weights.as_ref(),
            lambda1,
            lambda2,
            cfg: &self.cfg.gafl,
        })?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged { iter });
        }
        let g_seg = self.seg.backward(&grads.pred)?;
        let g_weight = grads
            .weights
            .as_ref()
            .map(|g| self.weight.backward(g))
            .transpose()?;

        let (lr, mu) = (
            self.cfg.optimizer.learning_rate,
            self.cfg.optimizer.momentum,
        );
        sgd(
            self.seg.parameters_mut(),
            &mut self.seg_velocity,
            &g_seg,
            lr,
            mu,
        );
        if let Some(g) = g_weight {
            sgd(
                self.weight.parameters_mut(),
                &mut self.weight_velocity,
                &g,
                lr,
                mu,
            );
        }
        self.iter += 1;
        self.log.push(LogRecord { iter, loss });
        Ok(self.log.last().unwrap())
    }

    /// Train until `iter` iterations are complete, validating and
    /// checkpointing on the configured cadence.
    pub fn run_until(&mut self, iter: u64) -> Result<()> {
        let end = iter.min(self.cfg.total_iters);
        while self.iter < end {
            self.step()?;
            if self.iter % self.cfg.checkpoint_every == 0 || self.iter == self.cfg.total_iters {
                self.validate_and_checkpoint()?;
            }
        }
        Ok(())
    }

    /// Train to completion, then score the best checkpoint on the test split.
    pub fn run(&mut self) -> Result<RunRecord> {
        self.run_until(self.cfg.total_iters)?;
        let best = self
            .best
            .clone()
            .ok_or_else(|| Error::Config("no checkpoint was taken".into()))?;
        let mut best_net = SegNet::new(self.cfg.seg_net.clone())?;
        best_net.set_parameters(&self.best_seg)?;
        let final_test = evaluate_net(
            &best_net,
            self.data.split(Split::Test),
            self.data.num_classes,
            self.cfg.dice_aggregation,
        )?;
        let record = RunRecord {
            config: self.cfg.clone(),
            log: self.log.clone(),
            validations: self.validations.clone(),
            best,
            final_test,
        };
        if let Some(dir) = &self.out_dir {
            write_json(&dir.join(TEST_REPORT_FILE), &record.final_test.to_json())?;
            write_json(&dir.join(RECORD_FILE), &serde_json::to_value(&record)?)?;
        }
        Ok(record)
    }

    fn validate_and_checkpoint(&mut self) -> Result<()> {
        let report = evaluate_net(
            &self.seg,
            self.data.split(Split::Val),
            self.data.num_classes,
            self.cfg.dice_aggregation,
        )?;
        log::info!(
            "iter {}: loss {:.5}, val mean dice {:.4}",
            self.iter,
            self.log.last().map_or(f64::NAN, |r| r.loss.total),
            report.mean
        );
        self.validations.push(Validation {
            iter: self.iter,
            report,
        });
        let path = self
            .out_dir
            .as_ref()
            .map(|d| d.join(CHECKPOINT_DIR).join(checkpoint_file_name(self.iter)));
        let idx = select_best(&self.validations).unwrap();
        if idx == self.validations.len() - 1 {
            self.best = Some(BestCheckpoint {
                iter: self.iter,
                mean_dice: self.validations[idx].report.mean,
                path: path.clone(),
            });
            self.best_seg = self.seg.parameters().to_vec();
            self.best_weight = self.weight.parameters().to_vec();
        }
        if let (Some(dir), Some(path)) = (&self.out_dir, &path) {
            self.checkpoint().save(path)?;
            write_jsonl(&dir.join(LOG_FILE), &self.log)?;
            write_jsonl(&dir.join(VALIDATION_FILE), &self.validations)?;
        }
        Ok(())
    }

    /// Snapshot of the complete training state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                iter: self.iter,
                schedule: ScheduleState::at_iteration(self.iter, self.cfg.step_iters),
                fingerprint: self.cfg.fingerprint(),
                config: self.cfg.clone(),
                log: self.log.clone(),
                validations: self.validations.clone(),
                best: self.best.clone(),
            },
            seg_params: self.seg.parameters().to_vec(),
            weight_params: self.weight.parameters().to_vec(),
            seg_velocity: self.seg_velocity.clone(),
            weight_velocity: self.weight_velocity.clone(),
            best_seg_params: self.best_seg.clone(),
            best_weight_params: self.best_weight.clone(),
        }
    }
}

/// `v ← μ·v + g`, `θ ← θ − lr·v`.
fn sgd(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
    for row in rows {
        serde_json::to_writer(&mut f, row)?;
        f.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
    }
    f.into_inner()
        .map_err(|e| Error::io(&tmp, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn prepare_out_dir(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out.join(CHECKPOINT_DIR)).map_err(|e| Error::io(out, e))?;
    cfg.save(&out.join(CONFIG_FILE))
}

/// Load the dataset named by `cfg` and train, writing artifacts to `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.dataset_dir, cfg.tie_rule)?;
    prepare_out_dir(cfg, out)?;
    Trainer::new(cfg.clone(), &data)?.with_output(out).run()
}

/// Continue the run saved in `checkpoint`, writing artifacts to `out`.
/// `dataset_dir` overrides the directory recorded in the checkpoint.
pub fn resume(checkpoint: &Path, out: &Path, dataset_dir: Option<&Path>) -> Result<RunRecord> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dir = dataset_dir
        .unwrap_or(&ckpt.header.config.dataset_dir)
        .to_path_buf();
    let data = Dataset::load(&dir, ckpt.header.config.tie_rule)?;
    prepare_out_dir(&ckpt.header.config, out)?;
    Trainer::from_checkpoint(ckpt, &data)?
        .with_output(out)
        .run()
}
