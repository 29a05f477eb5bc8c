//! Parameter containers shared by the encoder, edge scorer and decoder, plus
//! the GRU cell used on both the recorded (training) and plain (inference)
//! forward paths.

use ndarray::s;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numkit::{Mat, Tape, Var};

/// Model dimensions. `d_e + d_f` must equal `2 * hidden` (the pooled Bi-GRU
/// state is split into the semantic and structure halves).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub d_e: usize,
    pub d_f: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.d_f == 0 {
            return Err(CoreError::Config("d_e and d_f must both be positive".into()));
        }
        if self.d_e + self.d_f != 2 * self.hidden {
            return Err(CoreError::Config(format!(
                "d_e + d_f = {} must equal 2 * hidden = {}",
                self.d_e + self.d_f,
                2 * self.hidden
            )));
        }
        if self.vocab < crate::corpus::NUM_SPECIALS as usize {
            return Err(CoreError::Config("vocabulary too small".into()));
        }
        Ok(())
    }
}

const INIT_RANGE: f64 = 0.08;

fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
}

/// Update/reset gates with a tanh candidate. Each weight maps the
/// concatenated [input; state] vector.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub wz: Mat,
    pub wr: Mat,
    pub wh: Mat,
    pub bz: Mat,
    pub br: Mat,
    pub bh: Mat,
}

impl GruParams {
    pub fn init<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        GruParams {
            wz: uniform_init(rng, hidden, input + hidden),
            wr: uniform_init(rng, hidden, input + hidden),
            wh: uniform_init(rng, hidden, input + hidden),
            bz: Mat::zeros((hidden, 1)),
            br: Mat::zeros((hidden, 1)),
            bh: Mat::zeros((hidden, 1)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wz.nrows()
    }
}

/// h' = (1-z) h + z tanh(Wh [x; r h] + bh)
pub fn gru_cell(p: &GruParams, h: &Mat, x: &Mat) -> Mat {
    let xh = ndarray::concatenate(ndarray::Axis(0), &[x.view(), h.view()]).unwrap();
    let z = (p.wz.dot(&xh) + &p.bz).mapv(|v| 1.0 / (1.0 + (-v).exp()));
    let r = (p.wr.dot(&xh) + &p.br).mapv(|v| 1.0 / (1.0 + (-v).exp()));
    let xrh = ndarray::concatenate(ndarray::Axis(0), &[x.view(), (&r * h).view()]).unwrap();
    let cand = (p.wh.dot(&xrh) + &p.bh).mapv(f64::tanh);
    (1.0 - &z) * h + &z * &cand
}

/// Tape handles to one GRU's parameters.
#[derive(Copy, Clone)]
pub struct GruVars<'t> {
    pub wz: Var<'t>,
    pub wr: Var<'t>,
    pub wh: Var<'t>,
    pub bz: Var<'t>,
    pub br: Var<'t>,
    pub bh: Var<'t>,
}

pub fn gru_cell_tape<'t>(p: &GruVars<'t>, h: Var<'t>, x: Var<'t>) -> Var<'t> {
    let xh = x.concat_rows(h);
    let z = p.wz.matmul(xh).add(p.bz).sigmoid();
    let r = p.wr.matmul(xh).add(p.br).sigmoid();
    let xrh = x.concat_rows(r.mul(h));
    let cand = p.wh.matmul(xrh).add(p.bh).tanh();
    z.neg().shift(1.0).mul(h).add(z.mul(cand))
}

/// Encoder parameters: embedding table plus the two directional GRUs.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub embed: Mat,
    pub fwd: GruParams,
    pub bwd: GruParams,
}

/// Edge scorer parameters for root and pairwise logits.
#[derive(Debug, Clone)]
pub struct ScoreParams {
    pub w_root: Mat,
    pub w_f: Mat,
    pub w_p: Mat,
    pub b_p: Mat,
    pub w_c: Mat,
    pub b_c: Mat,
}

/// Parent-embedding combiner.
#[derive(Debug, Clone)]
pub struct CombinerParams {
    pub w_s: Mat,
    pub b_s: Mat,
}

/// Decoder GRU with initial-state projection and output projection.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub gru: GruParams,
    pub w_init: Mat,
    pub b_init: Mat,
    pub w_out: Mat,
    pub b_out: Mat,
}

/// The full parameter set.
#[derive(Debug, Clone)]
pub struct Model {
    pub dims: Dims,
    pub encoder: EncoderParams,
    pub scorer: ScoreParams,
    pub combiner: CombinerParams,
    pub decoder: DecoderParams,
}

impl Model {
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        Ok(Model {
            dims,
            encoder: EncoderParams {
                embed: uniform_init(rng, dims.vocab, dims.embed),
                fwd: GruParams::init(rng, dims.embed, dims.hidden),
                bwd: GruParams::init(rng, dims.embed, dims.hidden),
            },
            scorer: ScoreParams {
                w_root: uniform_init(rng, 1, dims.d_f),
                w_f: uniform_init(rng, dims.d_f, dims.d_f),
                w_p: uniform_init(rng, dims.d_f, dims.d_f),
                b_p: Mat::zeros((dims.d_f, 1)),
                w_c: uniform_init(rng, dims.d_f, dims.d_f),
                b_c: Mat::zeros((dims.d_f, 1)),
            },
            combiner: CombinerParams {
                w_s: uniform_init(rng, dims.d_e, dims.d_e),
                b_s: Mat::zeros((dims.d_e, 1)),
            },
            decoder: DecoderParams {
                gru: GruParams::init(rng, dims.embed, dims.hidden),
                w_init: uniform_init(rng, dims.hidden, dims.d_e),
                b_init: Mat::zeros((dims.hidden, 1)),
                w_out: uniform_init(rng, dims.vocab, dims.hidden),
                b_out: Mat::zeros((dims.vocab, 1)),
            },
        })
    }

    /// Canonical parameter ordering shared by the optimizer and checkpoints.
    pub fn visit(&self) -> Vec<(&'static str, &Mat)> {
        let m = self;
        vec![
            ("embed", &m.encoder.embed),
            ("enc_fwd_wz", &m.encoder.fwd.wz),
            ("enc_fwd_wr", &m.encoder.fwd.wr),
            ("enc_fwd_wh", &m.encoder.fwd.wh),
            ("enc_fwd_bz", &m.encoder.fwd.bz),
            ("enc_fwd_br", &m.encoder.fwd.br),
            ("enc_fwd_bh", &m.encoder.fwd.bh),
            ("enc_bwd_wz", &m.encoder.bwd.wz),
            ("enc_bwd_wr", &m.encoder.bwd.wr),
            ("enc_bwd_wh", &m.encoder.bwd.wh),
            ("enc_bwd_bz", &m.encoder.bwd.bz),
            ("enc_bwd_br", &m.encoder.bwd.br),
            ("enc_bwd_bh", &m.encoder.bwd.bh),
            ("w_root", &m.scorer.w_root),
            ("w_f", &m.scorer.w_f),
            ("w_p", &m.scorer.w_p),
            ("b_p", &m.scorer.b_p),
            ("w_c", &m.scorer.w_c),
            ("b_c", &m.scorer.b_c),
            ("w_s", &m.combiner.w_s),
            ("b_s", &m.combiner.b_s),
            ("dec_wz", &m.decoder.gru.wz),
            ("dec_wr", &m.decoder.gru.wr),
            ("dec_wh", &m.decoder.gru.wh),
            ("dec_bz", &m.decoder.gru.bz),
            ("dec_br", &m.decoder.gru.br),
            ("dec_bh", &m.decoder.gru.bh),
            ("w_init", &m.decoder.w_init),
            ("b_init", &m.decoder.b_init),
            ("w_out", &m.decoder.w_out),
            ("b_out", &m.decoder.b_out),
        ]
    }

    pub fn visit_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
        let m = self;
        vec![
            ("embed", &mut m.encoder.embed),
            ("enc_fwd_wz", &mut m.encoder.fwd.wz),
            ("enc_fwd_wr", &mut m.encoder.fwd.wr),
            ("enc_fwd_wh", &mut m.encoder.fwd.wh),
            ("enc_fwd_bz", &mut m.encoder.fwd.bz),
            ("enc_fwd_br", &mut m.encoder.fwd.br),
            ("enc_fwd_bh", &mut m.encoder.fwd.bh),
            ("enc_bwd_wz", &mut m.encoder.bwd.wz),
            ("enc_bwd_wr", &mut m.encoder.bwd.wr),
            ("enc_bwd_wh", &mut m.encoder.bwd.wh),
            ("enc_bwd_bz", &mut m.encoder.bwd.bz),
            ("enc_bwd_br", &mut m.encoder.bwd.br),
            ("enc_bwd_bh", &mut m.encoder.bwd.bh),
            ("w_root", &mut m.scorer.w_root),
            ("w_f", &mut m.scorer.w_f),
            ("w_p", &mut m.scorer.w_p),
            ("b_p", &mut m.scorer.b_p),
            ("w_c", &mut m.scorer.w_c),
            ("b_c", &mut m.scorer.b_c),
            ("w_s", &mut m.combiner.w_s),
            ("b_s", &mut m.combiner.b_s),
            ("dec_wz", &mut m.decoder.gru.wz),
            ("dec_wr", &mut m.decoder.gru.wr),
            ("dec_wh", &mut m.decoder.gru.wh),
            ("dec_bz", &mut m.decoder.gru.bz),
            ("dec_br", &mut m.decoder.gru.br),
            ("dec_bh", &mut m.decoder.gru.bh),
            ("w_init", &mut m.decoder.w_init),
            ("b_init", &mut m.decoder.b_init),
            ("w_out", &mut m.decoder.w_out),
            ("b_out", &mut m.decoder.b_out),
        ]
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.visit().iter().map(|(_, m)| (m.nrows(), m.ncols())).collect()
    }

    /// Narrows every parameter through f32, the checkpoint payload precision.
    /// The training loop applies this at checkpoint boundaries so that a
    /// resumed run reproduces the uninterrupted trajectory bit for bit.
    pub fn round_to_f32(&mut self) {
        for (_, m) in self.visit_mut() {
            m.mapv_inplace(|v| v as f32 as f64);
        }
    }

    pub fn embedding_col(&self, token: u32) -> Mat {
        self.encoder
            .embed
            .slice(s![token as usize..token as usize + 1, ..])
            .t()
            .to_owned()
    }
}

/// Tape handles for the whole model, in `Model::visit` order.
pub struct ModelVars<'t> {
    pub embed: Var<'t>,
    pub enc_fwd: GruVars<'t>,
    pub enc_bwd: GruVars<'t>,
    pub w_root: Var<'t>,
    pub w_f: Var<'t>,
    pub w_p: Var<'t>,
    pub b_p: Var<'t>,
    pub w_c: Var<'t>,
    pub b_c: Var<'t>,
    pub w_s: Var<'t>,
    pub b_s: Var<'t>,
    pub dec: GruVars<'t>,
    pub w_init: Var<'t>,
    pub b_init: Var<'t>,
    pub w_out: Var<'t>,
    pub b_out: Var<'t>,
}

impl Model {
    pub fn vars<'t>(&self, tape: &'t Tape) -> ModelVars<'t> {
        let leaf = |m: &Mat| tape.leaf(m.clone());
        let gru = |g: &GruParams| GruVars {
            wz: leaf(&g.wz),
            wr: leaf(&g.wr),
            wh: leaf(&g.wh),
            bz: leaf(&g.bz),
            br: leaf(&g.br),
            bh: leaf(&g.bh),
        };
        ModelVars {
            embed: leaf(&self.encoder.embed),
            enc_fwd: gru(&self.encoder.fwd),
            enc_bwd: gru(&self.encoder.bwd),
            w_root: leaf(&self.scorer.w_root),
            w_f: leaf(&self.scorer.w_f),
            w_p: leaf(&self.scorer.w_p),
            b_p: leaf(&self.scorer.b_p),
            w_c: leaf(&self.scorer.w_c),
            b_c: leaf(&self.scorer.b_c),
            w_s: leaf(&self.combiner.w_s),
            b_s: leaf(&self.combiner.b_s),
            dec: gru(&self.decoder.gru),
            w_init: leaf(&self.decoder.w_init),
            b_init: leaf(&self.decoder.b_init),
            w_out: leaf(&self.decoder.w_out),
            b_out: leaf(&self.decoder.b_out),
        }
    }
}

impl<'t> ModelVars<'t> {
    /// Same order as `Model::visit`.
    pub fn all(&self) -> Vec<(&'static str, Var<'t>)> {
        let gru = |name: &'static str, g: &GruVars<'t>| {
            let _ = name;
            [g.wz, g.wr, g.wh, g.bz, g.br, g.bh]
        };
        let mut out = vec![("embed", self.embed)];
        let names_fwd = ["enc_fwd_wz", "enc_fwd_wr", "enc_fwd_wh", "enc_fwd_bz", "enc_fwd_br", "enc_fwd_bh"];
        for (n, v) in names_fwd.iter().zip(gru("enc_fwd", &self.enc_fwd)) {
            out.push((n, v));
        }
        let names_bwd = ["enc_bwd_wz", "enc_bwd_wr", "enc_bwd_wh", "enc_bwd_bz", "enc_bwd_br", "enc_bwd_bh"];
        for (n, v) in names_bwd.iter().zip(gru("enc_bwd", &self.enc_bwd)) {
            out.push((n, v));
        }
        out.push(("w_root", self.w_root));
        out.push(("w_f", self.w_f));
        out.push(("w_p", self.w_p));
        out.push(("b_p", self.b_p));
        out.push(("w_c", self.w_c));
        out.push(("b_c", self.b_c));
        out.push(("w_s", self.w_s));
        out.push(("b_s", self.b_s));
        let names_dec = ["dec_wz", "dec_wr", "dec_wh", "dec_bz", "dec_br", "dec_bh"];
        for (n, v) in names_dec.iter().zip(gru("dec", &self.dec)) {
            out.push((n, v));
        }
        out.push(("w_init", self.w_init));
        out.push(("b_init", self.b_init));
        out.push(("w_out", self.w_out));
        out.push(("b_out", self.b_out));
        out
    }

    /// Embedding of one token as a column vector.
    pub fn embedding_col(&self, token: u32) -> Var<'t> {
        let cols = self.embed.value().ncols();
        self.embed
            .slice(token as usize, token as usize + 1, 0, cols)
            .t()
    }
}
