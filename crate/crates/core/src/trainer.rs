//! The training loop: per-epoch shuffling, batched Adagrad updates, JSON
//! Lines metrics, beam-search validation, and resumable checkpoints.
//!
//! Determinism contract: parameters and optimizer accumulators are rounded
//! through `f32` at every checkpoint boundary and the rounded values are kept
//! in memory, so a run interrupted after epoch k and resumed from
//! `latest.ckpt` follows the same trajectory bit-for-bit as an uninterrupted
//! run.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::LoopConfig;
use crate::corpus::{Document, Vocab};
use crate::error::{CoreError, Result};
use crate::evalkit::evaluate_corpus;
use crate::model::{Dims, Model};
use crate::numkit::AdagradState;
use crate::pipeline::SummaryOptions;
use crate::reconstructor::{training_step, TrainingConfig};

/// One metrics log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    /// Mean per-token reconstruction loss over the epoch's batches, nats.
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_rouge_l: Option<f64>,
}

/// Where the loop writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainPaths {
    pub latest: PathBuf,
    pub best: PathBuf,
    pub metrics: PathBuf,
}

/// Final state of a training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainOutcome {
    /// Total completed epochs, including any from a resumed checkpoint.
    pub epochs_completed: u32,
    pub final_train_loss: f64,
    pub best_val_rouge_l: f64,
    pub stopped_early: bool,
}

/// Visiting order for one epoch: indices shuffled with a stream derived from
/// (seed, epoch) so every epoch has its own reproducible permutation.
pub fn epoch_order(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(epoch) + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn round_state_to_f32(model: &mut Model, state: &mut AdagradState) {
    model.round_to_f32();
    for acc in &mut state.accumulators {
        acc.mapv_inplace(|v| v as f32 as f64);
    }
}

/// Loads `latest` if it exists (checking the vocabulary hash), otherwise
/// initializes a fresh model from `seed`. Returns the model, optimizer state
/// and the number of already-completed epochs.
pub fn init_or_resume(
    dims: Dims,
    vocab: &Vocab,
    cfg: &TrainingConfig,
    latest: &Path,
) -> Result<(Model, AdagradState, CheckpointMeta)> {
    if latest.exists() {
        let (model, state, meta) = checkpoint::load(latest)?;
        if meta.vocab_hash != vocab.hash() {
            return Err(CoreError::VocabMismatch);
        }
        if model.dims != dims {
            return Err(CoreError::BadCheckpoint(format!(
                "checkpoint dims {:?} do not match configured dims {:?}",
                model.dims, dims
            )));
        }
        Ok((model, state, meta))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Model::init(dims, &mut rng)?;
        let mut state =
            AdagradState::new(&model.shapes(), cfg.learning_rate, cfg.initial_accumulator);
        // Start from the same f32-rounded point a save/load round trip would
        // produce, so "fresh" and "resumed at epoch 0" coincide exactly.
        round_state_to_f32(&mut model, &mut state);
        let meta = CheckpointMeta {
            vocab_hash: vocab.hash(),
            epoch: 0,
            best_val_rouge_l: -1.0,
        };
        Ok((model, state, meta))
    }
}

/// Runs training epochs `meta.epoch .. cfg.max_epochs`, checkpointing after
/// every epoch. `valid_docs` may be empty, which disables validation.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut Model,
    state: &mut AdagradState,
    meta: &mut CheckpointMeta,
    cfg: &TrainingConfig,
    loop_cfg: &LoopConfig,
    train_docs: &[Document],
    valid_docs: &[Document],
    vocab: &Vocab,
    summary_opts: &SummaryOptions,
    paths: &TrainPaths,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(CoreError::EmptyDocument);
    }
    let mut metrics_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&paths.metrics)?;

    let mut final_loss = f64::NAN;
    let mut stopped_early = false;
    while meta.epoch < cfg.max_epochs as u32 {
        let epoch = meta.epoch;
        let order = epoch_order(train_docs.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Document> =
                chunk.iter().map(|&i| train_docs[i].clone()).collect();
            loss_sum += training_step(model, state, &batch, cfg.grad_clip_norm)?;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        final_loss = train_loss;
        meta.epoch = epoch + 1;

        let mut val_rouge_l = None;
        if loop_cfg.validate_every > 0
            && !valid_docs.is_empty()
            && meta.epoch.is_multiple_of(loop_cfg.validate_every as u32)
        {
            let report = evaluate_corpus(model, vocab, valid_docs, summary_opts)?;
            val_rouge_l = Some(report.mean.rl_f1);
        }

        round_state_to_f32(model, state);
        // Track best by validation ROUGE-L; until a validation score exists
        // (best still at its -1 sentinel), best simply follows latest.
        let improved = match val_rouge_l {
            Some(rl) => rl > meta.best_val_rouge_l,
            None => meta.best_val_rouge_l < 0.0,
        };
        if let (true, Some(rl)) = (improved, val_rouge_l) {
            meta.best_val_rouge_l = rl;
        }
        checkpoint::save(&paths.latest, model, state, meta)?;
        if improved {
            checkpoint::save(&paths.best, model, state, meta)?;
        }

        let line = EpochMetrics { epoch: meta.epoch, train_loss, val_rouge_l };
        serde_json::to_writer(&mut metrics_file, &line).map_err(CoreError::Json)?;
        writeln!(metrics_file)?;
        metrics_file.flush()?;

        if let Some(threshold) = loop_cfg.early_stop_loss {
            if train_loss < threshold {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        epochs_completed: meta.epoch,
        final_train_loss: final_loss,
        best_val_rouge_l: meta.best_val_rouge_l,
        stopped_early,
    })
}
