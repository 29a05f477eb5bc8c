//! Sentence encoding: embeddings + Bi-GRU + max-pooling over time, with the
//! pooled vector split into semantic and structure halves.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::corpus::{Document, Vocab};
use crate::error::{CoreError, Result};
use crate::model::{gru_cell, gru_cell_tape, EncoderParams, Model, ModelVars};
use crate::numkit::{Mat, Var};

pub use crate::model::EncoderParams as Params;

/// Pooled sentence vector split at d_e.
#[derive(Debug, Clone)]
pub struct SentenceEmbedding {
    pub semantic: Mat,
    pub structure: Mat,
}

/// Splits a pooled (d, 1) vector into its semantic prefix and structure
/// suffix. Both parts must be non-empty.
pub fn split_embedding(s: &Mat, d_e: usize) -> Result<(Mat, Mat)> {
    let d = s.nrows();
    if s.ncols() != 1 || d_e == 0 || d_e >= d {
        return Err(CoreError::ShapeMismatch(format!(
            "cannot split ({d} x {}) at d_e = {d_e}",
            s.ncols()
        )));
    }
    Ok((
        s.slice(ndarray::s![..d_e, ..]).to_owned(),
        s.slice(ndarray::s![d_e.., ..]).to_owned(),
    ))
}

fn pooled_states(token_ids: &[u32], params: &EncoderParams) -> Mat {
    assert!(!token_ids.is_empty());
    let hidden = params.fwd.hidden();
    let xs: Vec<Mat> = token_ids
        .iter()
        .map(|&t| {
            params
                .embed
                .slice(ndarray::s![t as usize..t as usize + 1, ..])
                .t()
                .to_owned()
        })
        .collect();
    let mut fwd = Vec::with_capacity(xs.len());
    let mut h = Mat::zeros((hidden, 1));
    for x in &xs {
        h = gru_cell(&params.fwd, &h, x);
        fwd.push(h.clone());
    }
    let mut bwd = vec![Mat::zeros((hidden, 1)); xs.len()];
    let mut h = Mat::zeros((hidden, 1));
    for (t, x) in xs.iter().enumerate().rev() {
        h = gru_cell(&params.bwd, &h, x);
        bwd[t] = h.clone();
    }
    // element-wise max over time, ties to the lowest index
    let mut pooled = ndarray::concatenate(ndarray::Axis(0), &[fwd[0].view(), bwd[0].view()]).unwrap();
    for t in 1..xs.len() {
        let ht = ndarray::concatenate(ndarray::Axis(0), &[fwd[t].view(), bwd[t].view()]).unwrap();
        for (p, v) in pooled.iter_mut().zip(ht.iter()) {
            if *v > *p {
                *p = *v;
            }
        }
    }
    pooled
}

/// Embeds, runs both GRU directions, max-pools and splits one sentence.
pub fn encode_sentence(token_ids: &[u32], model: &Model) -> SentenceEmbedding {
    let pooled = pooled_states(token_ids, &model.encoder);
    let (semantic, structure) = split_embedding(&pooled, model.dims.d_e).expect("dims validated");
    SentenceEmbedding { semantic, structure }
}

/// Encodes every sentence independently, preserving order.
pub fn encode_document(doc: &Document, model: &Model) -> Vec<SentenceEmbedding> {
    doc.sentences.iter().map(|s| encode_sentence(s, model)).collect()
}

/// Tape-recorded encoding of one sentence; returns (semantic, structure).
pub fn encode_sentence_tape<'t>(
    token_ids: &[u32],
    vars: &ModelVars<'t>,
    d_e: usize,
) -> (Var<'t>, Var<'t>) {
    assert!(!token_ids.is_empty());
    let tape = vars.embed.tape();
    let hidden = vars.enc_fwd.bz.value().nrows();
    let xs: Vec<Var> = token_ids.iter().map(|&t| vars.embedding_col(t)).collect();
    let mut fwd = Vec::with_capacity(xs.len());
    let mut h = tape.zeros(hidden, 1);
    for &x in &xs {
        h = gru_cell_tape(&vars.enc_fwd, h, x);
        fwd.push(h);
    }
    let mut bwd = vec![None; xs.len()];
    let mut h = tape.zeros(hidden, 1);
    for (t, &x) in xs.iter().enumerate().rev() {
        h = gru_cell_tape(&vars.enc_bwd, h, x);
        bwd[t] = Some(h);
    }
    let mut pooled = fwd[0].concat_rows(bwd[0].unwrap());
    for t in 1..xs.len() {
        let ht = fwd[t].concat_rows(bwd[t].unwrap());
        pooled = pooled.emax(ht);
    }
    let d = 2 * hidden;
    (pooled.slice(0, d_e, 0, 1), pooled.slice(d_e, d, 0, 1))
}

/// Loads pre-trained vectors in plain text ("token v1 ... vD" per line) into
/// the embedding table. Tokens absent from the file keep their random
/// initialization. Returns the number of rows overwritten.
pub fn load_pretrained<R: Read>(reader: R, vocab: &Vocab, embed: &mut Mat) -> Result<usize> {
    let dim = embed.ncols();
    let mut loaded = 0;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let token = match parts.next() {
            Some(t) => t,
            None => continue,
        };
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| CoreError::MalformedInput {
                    line: lineno + 1,
                    message: format!("bad vector component {p:?}"),
                })
            })
            .collect::<Result<_>>()?;
        // some dumps carry a "count dim" header line; skip anything that
        // does not match the embedding width
        if values.len() != dim {
            continue;
        }
        let id = vocab.id(token);
        if id == crate::corpus::UNK && token != crate::corpus::UNK_TOKEN {
            continue;
        }
        for (c, v) in values.into_iter().enumerate() {
            embed[[id as usize, c]] = v;
        }
        loaded += 1;
    }
    Ok(loaded)
}

pub fn load_pretrained_path(path: &Path, vocab: &Vocab, embed: &mut Mat) -> Result<usize> {
    load_pretrained(std::fs::File::open(path)?, vocab, embed)
}
