use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{ParamStore, Tensor};

use super::config::hex;

pub const NVBT_MAGIC: &[u8; 4] = b"NVBT";
pub const NVBT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint tensor {name} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated
        } else {
            CheckpointError::Io(e)
        }
    }
}

/// Serializable position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex(&rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, CheckpointError> {
        let bad = |what: &str| CheckpointError::Malformed(format!("bad rng {what}"));
        if self.seed.len() != 64 {
            return Err(bad("seed"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad("seed"))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word_pos"))?);
        Ok(rng)
    }
}

/// JSON sidecar stored next to the tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: usize,
    pub algo: String,
    /// Named RNG streams at the time of saving.
    pub rngs: Vec<(String, RngState)>,
    /// Algorithm-specific values (counters, optimizer steps, architecture).
    pub extra: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Tensor file layout: magic, u32 version, u32 count, then per tensor a u16 name
/// length, UTF-8 name, u8 rank, u32 dims and little-endian f32 data.
pub fn write_tensors<W: Write>(store: &ParamStore, mut w: W) -> io::Result<()> {
    w.write_all(NVBT_MAGIC)?;
    w.write_all(&NVBT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        let nb = name.as_bytes();
        let name_len = u16::try_from(nb.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "tensor name too long"))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(nb)?;
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "tensor rank too large"))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<ParamStore, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NVBT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != NVBT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let shape: Vec<usize> = (0..rank[0])
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        store
            .insert(name, t)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Malformed("trailing bytes after last tensor".into()));
    }
    Ok(store)
}

pub fn save_checkpoint(
    params: &ParamStore,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut bytes = Vec::new();
    write_tensors(params, &mut bytes)?;
    std::fs::write(path, bytes)?;
    let mut json = serde_json::to_vec_pretty(meta)?;
    json.push(b'\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointMeta), CheckpointError> {
    let bytes = std::fs::read(path)?;
    let store = read_tensors(&bytes[..])?;
    let meta = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    Ok((store, meta))
}

/// Checks that every tensor of `expected` exists in `got` with the same shape.
pub fn check_shapes(expected: &ParamStore, got: &ParamStore) -> Result<(), CheckpointError> {
    for (name, t) in expected.iter() {
        let g = got.get(name).map_err(|_| CheckpointError::ShapeMismatch {
            name: name.to_string(),
            expected: t.shape().to_vec(),
            got: Vec::new(),
        })?;
        if g.shape() != t.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: t.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rng_state_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        rng.set_stream(3);
        for _ in 0..17 {
            rng.random::<u32>();
        }
        let mut back = RngState::capture(&rng).restore().unwrap();
        assert_eq!(back.random::<u64>(), rng.random::<u64>());
    }
}
