//! Checkpoint persistence: versioned header (dims, vocabulary hash, epoch)
//! followed by a raw 32-bit parameter payload and the Adagrad state.
//! Save/load round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::model::{Dims, Model};
use crate::numkit::{AdagradState, Mat};

const MAGIC: &[u8; 8] = b"STRSUM\x00\x01";
const VERSION: u32 = 1;

/// Metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub vocab_hash: [u8; 32],
    /// Completed training epochs.
    pub epoch: u32,
    /// Best validation ROUGE-L so far; negative when none recorded.
    pub best_val_rouge_l: f64,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_mat_f32<W: Write>(w: &mut W, m: &Mat) -> Result<()> {
    write_u32(w, m.nrows() as u32)?;
    write_u32(w, m.ncols() as u32)?;
    for &v in m.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_mat_f32<R: Read>(r: &mut R) -> Result<Mat> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 4];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    Mat::from_shape_vec((rows, cols), data)
        .map_err(|e| CoreError::BadCheckpoint(format!("bad matrix shape: {e}")))
}

pub fn save(path: &Path, model: &Model, state: &AdagradState, meta: &CheckpointMeta) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let d = model.dims;
    for v in [d.vocab, d.embed, d.hidden, d.d_e, d.d_f] {
        write_u32(&mut w, v as u32)?;
    }
    w.write_all(&meta.vocab_hash)?;
    write_u32(&mut w, meta.epoch)?;
    w.write_all(&meta.best_val_rouge_l.to_le_bytes())?;
    w.write_all(&state.learning_rate.to_le_bytes())?;

    let params = model.visit();
    write_u32(&mut w, params.len() as u32)?;
    for (_, m) in &params {
        write_mat_f32(&mut w, m)?;
    }
    write_u32(&mut w, state.accumulators.len() as u32)?;
    for m in &state.accumulators {
        write_mat_f32(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, AdagradState, CheckpointMeta)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::BadCheckpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let dims = Dims {
        vocab: read_u32(&mut r)? as usize,
        embed: read_u32(&mut r)? as usize,
        hidden: read_u32(&mut r)? as usize,
        d_e: read_u32(&mut r)? as usize,
        d_f: read_u32(&mut r)? as usize,
    };
    dims.validate()?;
    let mut vocab_hash = [0u8; 32];
    r.read_exact(&mut vocab_hash)?;
    let epoch = read_u32(&mut r)?;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf)?;
    let best_val_rouge_l = f64::from_le_bytes(f64buf);
    r.read_exact(&mut f64buf)?;
    let learning_rate = f64::from_le_bytes(f64buf);

    // dummy init then overwrite; dims are validated so init cannot fail
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let mut model = Model::init(dims, &mut rng)?;
    let count = read_u32(&mut r)? as usize;
    let expected = model.visit().len();
    if count != expected {
        return Err(CoreError::BadCheckpoint(format!(
            "expected {expected} parameters, found {count}"
        )));
    }
    for (name, m) in model.visit_mut() {
        let loaded = read_mat_f32(&mut r)?;
        if loaded.raw_dim() != m.raw_dim() {
            return Err(CoreError::BadCheckpoint(format!("shape mismatch for {name}")));
        }
        m.assign(&loaded);
    }
    let acc_count = read_u32(&mut r)? as usize;
    if acc_count != expected {
        return Err(CoreError::BadCheckpoint("accumulator count mismatch".into()));
    }
    let mut accumulators = Vec::with_capacity(acc_count);
    for _ in 0..acc_count {
        accumulators.push(read_mat_f32(&mut r)?);
    }
    let state = AdagradState { learning_rate, accumulators };
    Ok((
        model,
        state,
        CheckpointMeta { vocab_hash, epoch, best_val_rouge_l },
    ))
}
