//! Parent embeddings from marginals, GRU reconstruction of each sentence,
//! training steps with Adagrad, and beam-search generation.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, BOS, EOS, PAD};
use crate::error::{CoreError, Result};
use crate::model::{gru_cell, Model, ModelVars};
use crate::numkit::{AdagradState, Mat, Tape, Var};
use crate::structattn::{marginals_tape, Marginals};

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub initial_accumulator: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub beam_size: usize,
    pub lambda: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            initial_accumulator: 0.1,
            batch_size: 16,
            grad_clip_norm: 5.0,
            max_epochs: 20,
            seed: 0,
            beam_size: 10,
            lambda: 0.9,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.initial_accumulator > 0.0
            && self.batch_size >= 1
            && self.grad_clip_norm > 0.0
            && self.beam_size >= 1
            && (0.0..1.0).contains(&self.lambda);
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config("invalid training configuration".into()))
        }
    }
}

/// ŝ_i = tanh(W_s Σ_j a_ij s_j^e + b_s) for i = 0..=n. Index 0 is the
/// summary embedding. `root_row` optionally replaces row 0 of A (the
/// DiscourseRank-reweighted attachment scores at generation time).
pub fn parent_embeddings(
    a: &Marginals,
    semantic: &[Mat],
    combiner: &crate::model::CombinerParams,
    root_row: Option<&[f64]>,
) -> Vec<Mat> {
    let n = semantic.len();
    assert_eq!(a.nrows(), n + 1);
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut weighted = Mat::zeros(semantic[0].raw_dim());
        for (j0, s) in semantic.iter().enumerate() {
            let w = match (i, root_row) {
                (0, Some(row)) => row[j0],
                _ => a[[i, j0 + 1]],
            };
            weighted.scaled_add(w, s);
        }
        out.push((combiner.w_s.dot(&weighted) + &combiner.b_s).mapv(f64::tanh));
    }
    out
}

/// Tape-recorded parent embeddings for i = 0..=n.
pub fn parent_embeddings_tape<'t>(
    a: Var<'t>,
    semantic: &[Var<'t>],
    vars: &ModelVars<'t>,
) -> Vec<Var<'t>> {
    let tape = a.tape();
    let n = semantic.len();
    let s_e = tape.concat_cols(semantic); // (d_e, n)
    (0..=n)
        .map(|i| {
            let row = a.slice(i, i + 1, 1, n + 1).t(); // (n, 1)
            vars.w_s.matmul(s_e.matmul(row)).add(vars.b_s).tanh()
        })
        .collect()
}

fn decoder_init(model: &Model, s_hat: &Mat) -> Mat {
    (model.decoder.w_init.dot(s_hat) + &model.decoder.b_init).mapv(f64::tanh)
}

fn decoder_logprobs(model: &Model, h: &Mat) -> Vec<f64> {
    let logits = model.decoder.w_out.dot(h) + &model.decoder.b_out;
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

/// Plain-path negative log likelihood of one sentence given its parent
/// embedding; teacher forcing, EOS included as the final target.
pub fn sentence_nll(model: &Model, s_hat: &Mat, sentence: &[u32]) -> f64 {
    debug_assert_eq!(sentence[0], BOS);
    let mut h = decoder_init(model, s_hat);
    let mut nll = 0.0;
    for t in 1..sentence.len() {
        let x = model.embedding_col(sentence[t - 1]);
        h = gru_cell(&model.decoder.gru, &h, &x);
        nll -= decoder_logprobs(model, &h)[sentence[t] as usize];
    }
    nll
}

/// Per-token reconstruction loss of a document on the plain path; used by
/// tests as the reference for the recorded path.
pub fn reconstruction_loss_plain(model: &Model, doc: &Document) -> Result<f64> {
    let embeddings = crate::encoder::encode_document(doc, model);
    let structure: Vec<Mat> = embeddings.iter().map(|e| e.structure.clone()).collect();
    let semantic: Vec<Mat> = embeddings.iter().map(|e| e.semantic.clone()).collect();
    let f = crate::structattn::score_matrix(&structure, &model.scorer);
    let a = crate::structattn::tree_marginals(&f)?;
    let parents = parent_embeddings(&a, &semantic, &model.combiner, None);
    let mut total = 0.0;
    let mut tokens = 0;
    for i in 0..doc.n() {
        total += sentence_nll(model, &parents[i + 1], &doc.sentences[i]);
        tokens += doc.target_len(i);
    }
    Ok(total / tokens as f64)
}

/// Tape-recorded loss of one document. Returns the unnormalized token NLL
/// sum and the number of predicted tokens. The summary embedding ŝ_0 takes
/// no part in the likelihood.
pub fn document_loss_tape<'t>(doc: &Document, vars: &ModelVars<'t>) -> Result<(Var<'t>, usize)> {
    let tape = vars.embed.tape();
    let d_e = vars.w_s.value().nrows();
    let mut semantic = Vec::with_capacity(doc.n());
    let mut structure = Vec::with_capacity(doc.n());
    for sent in &doc.sentences {
        let (sem, st) = crate::encoder::encode_sentence_tape(sent, vars, d_e);
        semantic.push(sem);
        structure.push(st);
    }
    let a = marginals_tape(vars, &structure)?;
    let parents = parent_embeddings_tape(a, &semantic, vars);

    let mut loss: Option<Var> = None;
    let mut tokens = 0;
    for (i, sent) in doc.sentences.iter().enumerate() {
        let mut h = vars.w_init.matmul(parents[i + 1]).add(vars.b_init).tanh();
        for t in 1..sent.len() {
            let x = vars.embedding_col(sent[t - 1]);
            h = crate::model::gru_cell_tape(&vars.dec, h, x);
            let ls = vars.w_out.matmul(h).add(vars.b_out).log_softmax_col();
            let nll = ls.slice(sent[t] as usize, sent[t] as usize + 1, 0, 1).neg();
            loss = Some(match loss {
                Some(l) => l.add(nll),
                None => nll,
            });
            tokens += 1;
        }
    }
    let _ = tape;
    Ok((loss.expect("documents have at least one sentence"), tokens))
}

/// One training step over a batch: forward, backward, global-norm clip,
/// Adagrad update. Deterministic given identical inputs.
pub fn training_step(
    model: &mut Model,
    state: &mut AdagradState,
    batch: &[Document],
    grad_clip_norm: f64,
) -> Result<f64> {
    assert!(!batch.is_empty());
    let tape = Tape::new();
    let vars = model.vars(&tape);
    let mut total: Option<Var> = None;
    let mut tokens = 0;
    for doc in batch {
        let (doc_loss, doc_tokens) = document_loss_tape(doc, &vars)?;
        if !tape.scalar_value(doc_loss).is_finite() {
            return Err(CoreError::NonFiniteLoss { doc_id: doc.id.clone() });
        }
        total = Some(match total {
            Some(t) => t.add(doc_loss),
            None => doc_loss,
        });
        tokens += doc_tokens;
    }
    let loss = total.unwrap().scale(1.0 / tokens as f64);
    let loss_value = tape.scalar_value(loss);
    if !loss_value.is_finite() {
        return Err(CoreError::NonFiniteLoss { doc_id: batch[0].id.clone() });
    }

    let grads = tape.backward(loss);
    let mut grad_mats: Vec<Mat> = vars.all().iter().map(|(_, v)| grads.wrt(*v)).collect();
    let norm: f64 = grad_mats
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > grad_clip_norm {
        let scale = grad_clip_norm / norm;
        for g in &mut grad_mats {
            g.mapv_inplace(|v| v * scale);
        }
    }
    let mut params = model.visit_mut();
    let mut refs: Vec<&mut Mat> = params.iter_mut().map(|(_, m)| &mut **m).collect();
    state.apply(&mut refs, &grad_mats);
    Ok(loss_value)
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<u32>,
    logp: f64,
    finish_step: usize,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    if a.logp != b.logp {
        return a.logp > b.logp;
    }
    if a.finish_step != b.finish_step {
        return a.finish_step < b.finish_step;
    }
    a.tokens < b.tokens
}

fn greedy_rollout(model: &Model, s_hat0: &Mat, max_len: usize) -> Hypothesis {
    let mut h = decoder_init(model, s_hat0);
    let mut tokens = Vec::new();
    let mut logp = 0.0;
    let mut prev = BOS;
    for step in 0..max_len {
        let x = model.embedding_col(prev);
        h = gru_cell(&model.decoder.gru, &h, &x);
        let lp = decoder_logprobs(model, &h);
        let mut best = EOS;
        for (tok, &p) in lp.iter().enumerate() {
            let tok = tok as u32;
            if tok == PAD || tok == BOS {
                continue;
            }
            if p > lp[best as usize] || (p == lp[best as usize] && tok < best) {
                best = tok;
            }
        }
        logp += lp[best as usize];
        if best == EOS {
            return Hypothesis { tokens, logp, finish_step: step + 1 };
        }
        tokens.push(best);
        prev = best;
    }
    Hypothesis { tokens, logp, finish_step: max_len }
}

/// Beam search from the summary embedding. Returns the completed hypothesis
/// with the highest cumulative log probability (no length normalization);
/// ties break toward earlier completion, then lexicographic token ids. The
/// result is never worse than the greedy rollout.
pub fn beam_search(model: &Model, s_hat0: &Mat, beam: usize, max_len: usize) -> Vec<u32> {
    assert!(beam >= 1 && max_len >= 1);
    if beam == 1 {
        return greedy_rollout(model, s_hat0, max_len).tokens;
    }

    struct Active {
        hyp: Hypothesis,
        state: Mat,
        prev: u32,
    }
    let mut active = vec![Active {
        hyp: Hypothesis { tokens: Vec::new(), logp: 0.0, finish_step: 0 },
        state: decoder_init(model, s_hat0),
        prev: BOS,
    }];
    let mut completed: Vec<Hypothesis> = Vec::new();

    for step in 0..max_len {
        let mut candidates: Vec<Active> = Vec::new();
        for act in &active {
            let x = model.embedding_col(act.prev);
            let h = gru_cell(&model.decoder.gru, &act.state, &x);
            let lp = decoder_logprobs(model, &h);
            for (tok, &p) in lp.iter().enumerate() {
                let tok = tok as u32;
                if tok == PAD || tok == BOS {
                    continue;
                }
                let mut tokens = act.hyp.tokens.clone();
                let logp = act.hyp.logp + p;
                if tok == EOS {
                    completed.push(Hypothesis { tokens, logp, finish_step: step + 1 });
                } else {
                    tokens.push(tok);
                    candidates.push(Active {
                        hyp: Hypothesis { tokens, logp, finish_step: step + 1 },
                        state: h.clone(),
                        prev: tok,
                    });
                }
            }
        }
        candidates.sort_by(|a, b| {
            if better(&a.hyp, &b.hyp) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        candidates.truncate(beam);
        active = candidates;
        if active.is_empty() {
            break;
        }
    }
    completed.extend(active.into_iter().map(|a| Hypothesis {
        finish_step: max_len,
        ..a.hyp
    }));
    completed.push(greedy_rollout(model, s_hat0, max_len));

    let mut best = completed.pop().unwrap();
    for h in completed {
        if better(&h, &best) {
            best = h;
        }
    }
    best.tokens
}
