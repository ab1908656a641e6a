//! Per-residue embedding providers.
//!
//! Contextual embeddings come either from a precomputed export file
//! (`PEMB1` binary format, typically written from a protein language model
//! such as ESM-2) or from a deterministic fallback embedder used in tests
//! and desk-scale runs. Both sit behind [`EmbeddingProvider`].

use crate::augment::PortableRng;
use crate::error::{Error, Result};
use crate::seqio::PeptideSequence;
use crate::aa_index;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

/// A per-residue embedding: one row per sequence position.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub seq_id: String,
    pub dim: usize,
    rows: Vec<f64>, // len x dim, row-major
}

impl EmbeddingMatrix {
    pub fn new(seq_id: String, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "embedding `{seq_id}`: {} values do not tile dim {dim}",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("embedding `{seq_id}` contains non-finite values")));
        }
        Ok(Self { seq_id, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.rows
    }
}

const MAGIC: &[u8; 5] = b"PEMB1";

/// Write embeddings in the `PEMB1` binary format: magic, record count u32,
/// dim u32, then per record id length / id bytes / sequence length /
/// `seq_len * dim` float32 values, all little-endian.
pub fn write_embeddings<W: Write>(mut w: W, records: &[EmbeddingMatrix]) -> Result<()> {
    let dim = records.first().map(|r| r.dim).unwrap_or(0);
    for r in records {
        if r.dim != dim {
            return Err(Error::Shape(format!(
                "embedding `{}` has dim {}, file dim is {dim}",
                r.seq_id, r.dim
            )));
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for r in records {
        let id = r.seq_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(r.len() as u32).to_le_bytes())?;
        for &v in r.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_embeddings_file(path: &Path, records: &[EmbeddingMatrix]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_embeddings(&mut buf, records)?;
    buf.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format(format!("PEMB1: truncated {what}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Load a `PEMB1` file into an id-keyed map.
pub fn load_embeddings<R: Read>(mut r: R) -> Result<HashMap<String, EmbeddingMatrix>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::Format("PEMB1: truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "PEMB1: bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(&mut r, "record count")? as usize;
    let dim = read_u32(&mut r, "dim")? as usize;
    if count > 0 && dim == 0 {
        return Err(Error::Format("PEMB1: zero dim with nonzero record count".into()));
    }
    let mut map = HashMap::with_capacity(count);
    for _ in 0..count {
        let id_len = read_u32(&mut r, "id length")? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|_| Error::Format("PEMB1: truncated id".into()))?;
        let id = String::from_utf8(id).map_err(|_| Error::Format("PEMB1: id not UTF-8".into()))?;
        let seq_len = read_u32(&mut r, "sequence length")? as usize;
        let mut payload = vec![0u8; seq_len * dim * 4];
        r.read_exact(&mut payload)
            .map_err(|_| Error::Format(format!("PEMB1: truncated payload for `{id}`")))?;
        let mut rows = Vec::with_capacity(seq_len * dim);
        for chunk in payload.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::Format(format!("PEMB1: non-finite value in `{id}`")));
            }
            rows.push(v as f64);
        }
        let record = EmbeddingMatrix::new(id.clone(), dim, rows)?;
        if map.insert(id.clone(), record).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    // Trailing bytes mean the declared count disagrees with the payload.
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("PEMB1: trailing bytes after declared records".into()));
    }
    Ok(map)
}

pub fn load_embeddings_file(path: &Path) -> Result<HashMap<String, EmbeddingMatrix>> {
    let file = std::fs::File::open(path)?;
    load_embeddings(std::io::BufReader::new(file))
}

/// Deterministic stand-in for a language-model embedder: a seeded Gaussian
/// base vector per residue letter plus interleaved sin/cos positional
/// components.
pub fn fallback_embed(seq: &PeptideSequence, dim: usize, seed: u64) -> EmbeddingMatrix {
    assert!(dim >= 1, "embedding dim must be >= 1");
    let mut rng = PortableRng::new(seed);
    let mut base = vec![0.0; 20 * dim];
    for v in base.iter_mut() {
        *v = rng.next_gaussian();
    }
    let len = seq.len();
    let mut rows = Vec::with_capacity(len * dim);
    for (p, b) in seq.residues().bytes().enumerate() {
        let a = aa_index(b).expect("validated residue");
        for k in 0..dim {
            let angle = p as f64 / 10000f64.powf(2.0 * (k / 2) as f64 / dim as f64);
            let pos = if k % 2 == 0 { angle.sin() } else { angle.cos() };
            rows.push(base[a * dim + k] + pos);
        }
    }
    EmbeddingMatrix { seq_id: seq.id().to_string(), dim, rows }
}

/// Uniform source of per-residue embeddings.
///
/// `embed_variant` serves a same-length edit of a known base sequence;
/// file-backed providers reuse the stored matrix for it, which is why
/// test-time augmentation is mutation-only.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    /// True when arbitrary novel sequences can be embedded.
    fn supports_novel(&self) -> bool;
    fn embed(&self, seq: &PeptideSequence) -> Result<EmbeddingMatrix>;
    fn embed_variant(
        &self,
        base: &PeptideSequence,
        variant: &PeptideSequence,
    ) -> Result<EmbeddingMatrix>;
}

/// Provider backed by the deterministic fallback embedder.
pub struct FallbackProvider {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for FallbackProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn supports_novel(&self) -> bool {
        true
    }

    fn embed(&self, seq: &PeptideSequence) -> Result<EmbeddingMatrix> {
        Ok(fallback_embed(seq, self.dim, self.seed))
    }

    fn embed_variant(
        &self,
        _base: &PeptideSequence,
        variant: &PeptideSequence,
    ) -> Result<EmbeddingMatrix> {
        Ok(fallback_embed(variant, self.dim, self.seed))
    }
}

/// Provider backed by a loaded `PEMB1` map; records are looked up by id
/// and must match the sequence length.
pub struct FileProvider {
    map: HashMap<String, EmbeddingMatrix>,
    dim: usize,
}

impl FileProvider {
    pub fn new(map: HashMap<String, EmbeddingMatrix>) -> Result<Self> {
        let dim = map.values().next().map(|m| m.dim).unwrap_or(0);
        Ok(Self { map, dim })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::new(load_embeddings_file(path)?)
    }
}

impl EmbeddingProvider for FileProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn supports_novel(&self) -> bool {
        false
    }

    fn embed(&self, seq: &PeptideSequence) -> Result<EmbeddingMatrix> {
        let m = self
            .map
            .get(seq.id())
            .ok_or_else(|| Error::MissingEmbedding(seq.id().to_string()))?;
        if m.len() != seq.len() {
            return Err(Error::Shape(format!(
                "embedding `{}` has {} rows for a {}-residue sequence",
                seq.id(),
                m.len(),
                seq.len()
            )));
        }
        Ok(m.clone())
    }

    fn embed_variant(
        &self,
        base: &PeptideSequence,
        variant: &PeptideSequence,
    ) -> Result<EmbeddingMatrix> {
        if base.len() != variant.len() {
            return Err(Error::Shape(format!(
                "file-backed embeddings require same-length variants: `{}` is {} vs {}",
                base.id(),
                base.len(),
                variant.len()
            )));
        }
        self.embed(base)
    }
}
